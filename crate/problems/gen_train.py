"""Writes the parameterized training problems into problems/train."""
import os

OUT = os.path.join(os.path.dirname(__file__), "train")


def write(name, vars_, pre, trans, post):
    primed = " ".join(f"(declare-primed-var {v} Int)" for v in vars_)
    params = " ".join(f"({v} Int)" for v in vars_)
    pparams = params + " " + " ".join(f"({v}! Int)" for v in vars_)
    text = f"""(set-logic LIA)
(synth-inv inv-f ({params}))
(define-fun pre-f ({params}) Bool {pre})
(define-fun trans-f ({pparams}) Bool {trans})
(define-fun post-f ({params}) Bool {post})
(inv-constraint inv-f pre-f trans-f post-f)
(check-synth)
"""
    with open(os.path.join(OUT, name + ".sl"), "w") as f:
        f.write(text)


for k in (1, 2, 3):
    for a in (1, 4):
        write(f"lockstep_{k}_{a}", ["x", "y"],
              f"(and (= x {a}) (= y {a}))",
              f"(and (= x! (+ x {k})) (= y! (+ y {k})))",
              "(= x y)")

for c in (2, 3, 4, 6, 7):
    write(f"transfer_{c}", ["x", "y"],
          f"(and (= x 0) (= y {c}))",
          "(and (> y 0) (= x! (+ x 1)) (= y! (- y 1)))",
          f"(= (+ x y) {c})")

for k in (1, 2):
    for b in (1, 3):
        write(f"countdown_{k}_{b}", ["x", "n"],
              f"(and (= x n) (>= n {b}))",
              f"(and (> x {k - 1}) (= x! (- x {k})) (= n! n))",
              f"(>= x 0)")

for s in (1, -1, -2, -3):
    write(f"drain_{s}".replace("-", "m"), ["x", "y", "z"],
          f"(and (= x {s}) (= y z) (>= z 0))",
          "(and (> y 0) (= x! (+ x 1)) (= y! (- y 1)) (= z! z))",
          f"(or (> y 0) (= x (+ z {s})))")

for b in (2, 4, 5):
    write(f"overflow_{b}", ["x"], "(= x 0)", "(= x! (+ x 1))", f"(< x {b})")

for k in (3, 4, 5):
    write(f"ratio_{k}", ["x", "y"],
          "(and (= x 0) (= y 0))",
          f"(and (= x! (+ x {k})) (= y! (+ y 1)))",
          "(>= x y)")

for c in (3, 5):
    write(f"bounded_up_{c}", ["x"], "(= x 0)",
          f"(and (< x {c}) (= x! (+ x 1)))", f"(<= x {c})")

for a, b in ((2, 1), (0, 3), (4, -1)):
    write(f"swap_{a}_{b}".replace("-", "m"), ["x", "y"], f"(and (= x {a}) (= y {b}))",
          "(and (= x! y) (= y! x))", f"(= (+ x y) {a + b})")

for lo, hi in ((0, 6), (-2, 3)):
    write(f"islands_{hi}", ["x"], f"(or (= x {lo}) (= x {hi}))", "(= x! x)",
          f"(or (<= x {lo}) (>= x {hi}))")

for k in (2, 3):
    write(f"decrement_{k}", ["x"], "(>= x 0)", f"(= x! (- x {k}))", "(>= x 0)")

for a, b in ((0, 2), (3, 1)):
    write(f"stuck_{a}_{b}", ["x"], f"(= x {a})", "false", f"(= x {b})")
