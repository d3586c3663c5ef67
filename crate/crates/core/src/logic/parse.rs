//! Problem-file ingestion: the native s-expression format, SyGuS Inv-track
//! files, and `define-fun` witnesses.

use std::collections::HashMap;

use num_bigint::BigInt;
use thiserror::Error;

use super::chc::{primed_name, ChcError, ChcSystem};
use super::formula::{Formula, Term, Var};
use crate::sexp::{self, Pos, Sexp, SexpError, SexpKind};

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("{0}")]
    Sexp(#[from] SexpError),
    #[error("{pos}: {msg}")]
    Syntax { pos: Pos, msg: String },
    #[error("{pos}: unsupported fragment: {msg}")]
    Unsupported { pos: Pos, msg: String },
    #[error("{pos}: undeclared variable `{name}`")]
    Undeclared { pos: Pos, name: String },
    #[error("{0}")]
    Chc(#[from] ChcError),
}

fn syntax<T>(pos: Pos, msg: impl Into<String>) -> Result<T, ParseError> {
    Err(ParseError::Syntax {
        pos,
        msg: msg.into(),
    })
}

fn unsupported<T>(pos: Pos, msg: impl Into<String>) -> Result<T, ParseError> {
    Err(ParseError::Unsupported {
        pos,
        msg: msg.into(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Sort {
    Int,
    Bool,
}

fn parse_sort(s: &Sexp) -> Result<Sort, ParseError> {
    match s.atom() {
        Some("Int") => Ok(Sort::Int),
        Some("Bool") => Ok(Sort::Bool),
        _ => unsupported(s.pos, format!("sort `{}`", s)),
    }
}

#[derive(Clone, Debug)]
enum Val {
    Int(Term),
    Bool(Formula),
}

#[derive(Clone, Debug)]
struct FunDef {
    params: Vec<(String, Sort)>,
    ret: Sort,
    body: Sexp,
}

/// Converts s-expression bodies to formulas, expanding `let`, boolean `ite`
/// and calls to previously defined functions.
#[derive(Default)]
struct Elaborator {
    funs: HashMap<String, FunDef>,
}

type Scope = HashMap<String, Val>;

impl Elaborator {
    fn formula(&self, s: &Sexp, scope: &Scope) -> Result<Formula, ParseError> {
        match self.expr(s, scope)? {
            Val::Bool(f) => Ok(f),
            Val::Int(_) => syntax(s.pos, format!("expected a boolean, found `{}`", s)),
        }
    }

    fn term(&self, s: &Sexp, scope: &Scope) -> Result<Term, ParseError> {
        match self.expr(s, scope)? {
            Val::Int(t) => Ok(t),
            Val::Bool(_) => syntax(s.pos, format!("expected an integer, found `{}`", s)),
        }
    }

    fn expr(&self, s: &Sexp, scope: &Scope) -> Result<Val, ParseError> {
        match &s.kind {
            SexpKind::Str(_) => syntax(s.pos, "unexpected string literal"),
            SexpKind::Atom(a) => self.atom(a, s.pos, scope),
            SexpKind::List(items) => {
                let Some(head) = items.first().and_then(Sexp::atom) else {
                    return syntax(s.pos, "expected an operator application");
                };
                let args = &items[1..];
                self.apply(head, args, s, scope)
            }
        }
    }

    fn atom(&self, a: &str, pos: Pos, scope: &Scope) -> Result<Val, ParseError> {
        if let Some(v) = scope.get(a) {
            return Ok(v.clone());
        }
        match a {
            "true" => return Ok(Val::Bool(Formula::True)),
            "false" => return Ok(Val::Bool(Formula::False)),
            _ => {}
        }
        if let Ok(n) = a.parse::<BigInt>() {
            return Ok(Val::Int(Term::constant(n)));
        }
        if a.contains('.') && a.parse::<f64>().is_ok() {
            return unsupported(pos, format!("real literal `{}`", a));
        }
        if let Some(f) = self.funs.get(a) {
            if f.params.is_empty() {
                return self.call(a, &[], pos, scope);
            }
        }
        Err(ParseError::Undeclared {
            pos,
            name: a.to_string(),
        })
    }

    fn arity(&self, head: &str, args: &[Sexp], s: &Sexp, ok: bool) -> Result<(), ParseError> {
        if ok {
            Ok(())
        } else {
            syntax(s.pos, format!("wrong number of arguments ({}) for `{}`", args.len(), head))
        }
    }

    fn apply(&self, head: &str, args: &[Sexp], s: &Sexp, scope: &Scope) -> Result<Val, ParseError> {
        let formulas = |this: &Self| -> Result<Vec<Formula>, ParseError> {
            args.iter().map(|a| this.formula(a, scope)).collect()
        };
        let terms = |this: &Self| -> Result<Vec<Term>, ParseError> {
            args.iter().map(|a| this.term(a, scope)).collect()
        };
        match head {
            "and" => Ok(Val::Bool(Formula::And(formulas(self)?))),
            "or" => Ok(Val::Bool(Formula::Or(formulas(self)?))),
            "not" => {
                self.arity(head, args, s, args.len() == 1)?;
                Ok(Val::Bool(Formula::not(self.formula(&args[0], scope)?)))
            }
            "=>" => {
                self.arity(head, args, s, args.len() >= 2)?;
                let mut fs = formulas(self)?;
                let mut acc = fs.pop().unwrap();
                while let Some(f) = fs.pop() {
                    acc = Formula::implies(f, acc);
                }
                Ok(Val::Bool(acc))
            }
            "xor" => {
                self.arity(head, args, s, args.len() == 2)?;
                let fs = formulas(self)?;
                Ok(Val::Bool(xor(&fs[0], &fs[1])))
            }
            "=" | "distinct" => {
                self.arity(head, args, s, args.len() >= 2)?;
                let vals: Vec<Val> = args
                    .iter()
                    .map(|a| self.expr(a, scope))
                    .collect::<Result<_, _>>()?;
                let mut eqs = Vec::new();
                let pairs: Vec<(usize, usize)> = if head == "=" {
                    (1..vals.len()).map(|i| (i - 1, i)).collect()
                } else {
                    (0..vals.len())
                        .flat_map(|i| (i + 1..vals.len()).map(move |j| (i, j)))
                        .collect()
                };
                for (i, j) in pairs {
                    let eq = match (&vals[i], &vals[j]) {
                        (Val::Int(a), Val::Int(b)) => Formula::eq(a.clone(), b.clone()),
                        (Val::Bool(a), Val::Bool(b)) => Formula::not(xor(a, b)),
                        _ => return syntax(s.pos, format!("sort mismatch in `{}`", head)),
                    };
                    eqs.push(if head == "=" { eq } else { Formula::not(eq) });
                }
                Ok(Val::Bool(single_and(eqs)))
            }
            "<=" | ">=" | "<" | ">" => {
                self.arity(head, args, s, args.len() >= 2)?;
                let ts = terms(self)?;
                let cmp: fn(Term, Term) -> Formula = match head {
                    "<=" => Formula::le,
                    ">=" => Formula::ge,
                    "<" => Formula::lt,
                    _ => Formula::gt,
                };
                let fs = ts.windows(2).map(|w| cmp(w[0].clone(), w[1].clone())).collect();
                Ok(Val::Bool(single_and(fs)))
            }
            "+" => {
                let ts = terms(self)?;
                Ok(Val::Int(ts.iter().fold(Term::default(), |a, t| a.add(t))))
            }
            "-" => {
                self.arity(head, args, s, !args.is_empty())?;
                let ts = terms(self)?;
                if ts.len() == 1 {
                    return Ok(Val::Int(ts[0].neg()));
                }
                Ok(Val::Int(ts[1..].iter().fold(ts[0].clone(), |a, t| a.sub(t))))
            }
            "*" => {
                self.arity(head, args, s, !args.is_empty())?;
                let ts = terms(self)?;
                let mut scalar = BigInt::from(1);
                let mut linear: Option<Term> = None;
                for t in ts {
                    match t.as_constant() {
                        Some(c) => scalar *= c,
                        None if linear.is_none() => linear = Some(t),
                        None => return unsupported(s.pos, "non-linear multiplication"),
                    }
                }
                let base = linear.unwrap_or_else(|| Term::constant(1));
                Ok(Val::Int(base.scale(&scalar)))
            }
            "ite" => {
                self.arity(head, args, s, args.len() == 3)?;
                let c = self.formula(&args[0], scope)?;
                match (self.expr(&args[1], scope)?, self.expr(&args[2], scope)?) {
                    (Val::Bool(t), Val::Bool(e)) => Ok(Val::Bool(Formula::Or(vec![
                        Formula::And(vec![c.clone(), t]),
                        Formula::And(vec![Formula::not(c), e]),
                    ]))),
                    (Val::Int(_), Val::Int(_)) => unsupported(s.pos, "integer-valued ite"),
                    _ => syntax(s.pos, "sort mismatch in `ite`"),
                }
            }
            "let" => {
                self.arity(head, args, s, args.len() == 2)?;
                let Some(binds) = args[0].list() else {
                    return syntax(args[0].pos, "malformed let bindings");
                };
                let mut inner = scope.clone();
                for b in binds {
                    match b.list() {
                        Some([name, e]) if name.atom().is_some() => {
                            // bindings are parallel: evaluated in the outer scope
                            let v = self.expr(e, scope)?;
                            inner.insert(name.atom().unwrap().to_string(), v);
                        }
                        _ => return syntax(b.pos, "malformed let binding"),
                    }
                }
                self.expr(&args[1], &inner)
            }
            "div" | "mod" | "abs" | "/" | "to_real" | "to_int" | "select" | "store" => {
                unsupported(s.pos, format!("operator `{}`", head))
            }
            _ if self.funs.contains_key(head) => {
                let vals = args
                    .iter()
                    .map(|a| self.expr(a, scope))
                    .collect::<Result<Vec<_>, _>>()?;
                self.call_with(head, vals, s.pos)
            }
            _ => syntax(s.pos, format!("unknown operator `{}`", head)),
        }
    }

    fn call(&self, name: &str, args: &[Sexp], pos: Pos, scope: &Scope) -> Result<Val, ParseError> {
        let vals = args
            .iter()
            .map(|a| self.expr(a, scope))
            .collect::<Result<Vec<_>, _>>()?;
        self.call_with(name, vals, pos)
    }

    fn call_with(&self, name: &str, vals: Vec<Val>, pos: Pos) -> Result<Val, ParseError> {
        let f = &self.funs[name];
        if f.params.len() != vals.len() {
            return syntax(pos, format!("`{}` expects {} arguments", name, f.params.len()));
        }
        let mut scope = Scope::new();
        for ((p, sort), v) in f.params.iter().zip(vals) {
            match (sort, &v) {
                (Sort::Int, Val::Int(_)) | (Sort::Bool, Val::Bool(_)) => {}
                _ => return syntax(pos, format!("sort mismatch for parameter `{}` of `{}`", p, name)),
            }
            scope.insert(p.clone(), v);
        }
        let v = self.expr(&f.body, &scope)?;
        match (f.ret, &v) {
            (Sort::Int, Val::Int(_)) | (Sort::Bool, Val::Bool(_)) => Ok(v),
            _ => syntax(f.body.pos, format!("body of `{}` does not match its sort", name)),
        }
    }
}

fn xor(a: &Formula, b: &Formula) -> Formula {
    Formula::Or(vec![
        Formula::And(vec![a.clone(), Formula::not(b.clone())]),
        Formula::And(vec![Formula::not(a.clone()), b.clone()]),
    ])
}

fn single_and(mut fs: Vec<Formula>) -> Formula {
    if fs.len() == 1 {
        fs.pop().unwrap()
    } else {
        Formula::And(fs)
    }
}

fn int_scope(vars: &[Var]) -> Scope {
    vars.iter()
        .map(|v| (v.name().to_string(), Val::Int(Term::var(v.clone()))))
        .collect()
}

fn symbol_list(s: &Sexp, what: &str) -> Result<Vec<Var>, ParseError> {
    let Some(items) = s.list() else {
        return syntax(s.pos, format!("expected a list of {}", what));
    };
    items
        .iter()
        .map(|it| match it.atom() {
            Some(a) => Ok(Var::new(a)),
            None => syntax(it.pos, format!("expected a {} name", what)),
        })
        .collect()
}

/// Parses the native format:
/// `(vars (x y)) (pre φ) (trans φ) (post φ)` with primed variables written `x!`.
pub fn parse_native(text: &str) -> Result<ChcSystem, ParseError> {
    let items = sexp::parse_all(text)?;
    let mut vars: Option<Vec<Var>> = None;
    let mut primed: Option<Vec<Var>> = None;
    let mut bodies: [Option<&Sexp>; 3] = [None, None, None];
    for it in &items {
        let (head, rest) = match it.list() {
            Some([h, rest @ ..]) if h.atom().is_some() => (h.atom().unwrap(), rest),
            _ => return syntax(it.pos, "expected a `(keyword ...)` section"),
        };
        if rest.len() != 1 {
            return syntax(it.pos, format!("section `{}` takes exactly one argument", head));
        }
        let slot = match head {
            "vars" => {
                vars = Some(symbol_list(&rest[0], "variable")?);
                continue;
            }
            "primed" => {
                primed = Some(symbol_list(&rest[0], "variable")?);
                continue;
            }
            "pre" => 0,
            "trans" => 1,
            "post" => 2,
            _ => return syntax(it.pos, format!("unknown section `{}`", head)),
        };
        if bodies[slot].is_some() {
            return syntax(it.pos, format!("duplicate section `{}`", head));
        }
        bodies[slot] = Some(&rest[0]);
    }
    let Some(vars) = vars else {
        return syntax(Pos::default(), "missing `vars` section");
    };
    let primed = primed.unwrap_or_else(|| vars.iter().map(primed_name).collect());
    let el = Elaborator::default();
    let state_scope = int_scope(&vars);
    let mut trans_scope = state_scope.clone();
    trans_scope.extend(int_scope(&primed));
    let names = ["pre", "trans", "post"];
    let mut fs = Vec::new();
    for (i, b) in bodies.iter().enumerate() {
        let Some(b) = b else {
            return syntax(Pos::default(), format!("missing `{}` section", names[i]));
        };
        let scope = if i == 1 { &trans_scope } else { &state_scope };
        fs.push(el.formula(b, scope)?);
    }
    let post = fs.pop().unwrap();
    let trans = fs.pop().unwrap();
    let pre = fs.pop().unwrap();
    Ok(ChcSystem::with_primed(vars, primed, pre, trans, post)?)
}

fn parse_params(s: &Sexp) -> Result<Vec<(String, Sort)>, ParseError> {
    let Some(items) = s.list() else {
        return syntax(s.pos, "expected a parameter list");
    };
    items
        .iter()
        .map(|p| match p.list() {
            Some([name, sort]) if name.atom().is_some() => {
                Ok((name.atom().unwrap().to_string(), parse_sort(sort)?))
            }
            _ => syntax(p.pos, "malformed parameter"),
        })
        .collect()
}

fn parse_define_fun(args: &[Sexp], pos: Pos) -> Result<(String, FunDef), ParseError> {
    match args {
        [name, params, ret, body] if name.atom().is_some() => Ok((
            name.atom().unwrap().to_string(),
            FunDef {
                params: parse_params(params)?,
                ret: parse_sort(ret)?,
                body: body.clone(),
            },
        )),
        _ => syntax(pos, "malformed define-fun"),
    }
}

/// Parses a SyGuS (v1 or v2) Inv-track problem.
pub fn parse_sygus_inv(text: &str) -> Result<ChcSystem, ParseError> {
    let items = sexp::parse_all(text)?;
    let mut el = Elaborator::default();
    let mut inv: Option<(String, Vec<(String, Sort)>, Pos)> = None;
    let mut constraint: Option<([String; 3], Pos)> = None;
    for it in &items {
        let Some(head) = it.head() else {
            return syntax(it.pos, "expected a command");
        };
        let args = &it.list().unwrap()[1..];
        match head {
            "set-logic" | "set-option" | "set-info" | "check-synth" | "set-feature" => {}
            "declare-var" | "declare-primed-var" => match args {
                [_, sort] => {
                    parse_sort(sort)?;
                }
                _ => return syntax(it.pos, format!("malformed {}", head)),
            },
            "synth-inv" | "synth-fun" => {
                let (name, params) = match args {
                    [name, params, ..] if name.atom().is_some() => (name.atom().unwrap(), params),
                    _ => return syntax(it.pos, format!("malformed {}", head)),
                };
                if head == "synth-fun" && !args.get(2).is_some_and(|s| s.is_atom("Bool")) {
                    return unsupported(it.pos, "synth-fun with a non-Bool result");
                }
                let params = parse_params(params)?;
                if let Some((_, s)) = params.iter().find(|(_, s)| *s != Sort::Int) {
                    return unsupported(it.pos, format!("invariant parameter of sort {:?}", s));
                }
                inv = Some((name.to_string(), params, it.pos));
            }
            "define-fun" => {
                let (name, def) = parse_define_fun(args, it.pos)?;
                el.funs.insert(name, def);
            }
            "inv-constraint" => {
                let names: Vec<String> = args
                    .iter()
                    .map(|a| a.atom().map(str::to_string))
                    .collect::<Option<_>>()
                    .filter(|v: &Vec<String>| v.len() == 4)
                    .ok_or_else(|| ParseError::Syntax {
                        pos: it.pos,
                        msg: "malformed inv-constraint".into(),
                    })?;
                constraint = Some(([names[1].clone(), names[2].clone(), names[3].clone()], it.pos));
            }
            "constraint" | "declare-fun" | "define-sort" | "declare-datatypes" => {
                return unsupported(it.pos, format!("command `{}`", head))
            }
            _ => return syntax(it.pos, format!("unknown command `{}`", head)),
        }
    }
    let Some((inv_name, inv_params, inv_pos)) = inv else {
        return syntax(Pos::default(), "missing synth-inv");
    };
    let Some(([pre, trans, post], cpos)) = constraint else {
        return syntax(Pos::default(), "missing inv-constraint");
    };
    let vars: Vec<Var> = inv_params.iter().map(|(n, _)| Var::new(n)).collect();
    if vars.is_empty() {
        return syntax(inv_pos, "invariant has no parameters");
    }
    let primed: Vec<Var> = vars.iter().map(primed_name).collect();
    let l = vars.len();
    let instantiate = |name: &str, actuals: Vec<Var>| -> Result<Formula, ParseError> {
        let Some(def) = el.funs.get(name) else {
            return syntax(cpos, format!("undefined function `{}`", name));
        };
        if def.params.len() != actuals.len() || def.ret != Sort::Bool {
            return syntax(
                def.body.pos,
                format!("`{}` must be a Bool function of {} integer arguments", name, actuals.len()),
            );
        }
        if def.params.iter().any(|(_, s)| *s != Sort::Int) {
            return unsupported(def.body.pos, format!("non-integer parameter in `{}`", name));
        }
        let vals = actuals.into_iter().map(|v| Val::Int(Term::var(v))).collect();
        match el.call_with(name, vals, def.body.pos)? {
            Val::Bool(f) => Ok(f),
            Val::Int(_) => unreachable!("sort checked above"),
        }
    };
    let pre_f = instantiate(&pre, vars.clone())?;
    let trans_f = instantiate(&trans, vars.iter().chain(&primed).cloned().collect())?;
    let post_f = instantiate(&post, vars.clone())?;
    debug_assert_eq!(primed.len(), l);
    let mut chc = ChcSystem::with_primed(vars, primed, pre_f, trans_f, post_f)?;
    chc.pred_name = inv_name;
    Ok(chc)
}

/// Picks the parser from the file contents: SyGuS files use `synth-inv`/`synth-fun`.
pub fn parse_problem(text: &str) -> Result<ChcSystem, ParseError> {
    let is_sygus = sexp::parse_all(text)?
        .iter()
        .any(|s| matches!(s.head(), Some("synth-inv" | "synth-fun" | "set-logic")));
    if is_sygus {
        parse_sygus_inv(text)
    } else {
        parse_native(text)
    }
}

/// Parses a `(define-fun name ((x Int) ...) Bool body)` witness for `chc`.
/// Parameters are matched to the system's variables by position.
pub fn parse_witness(text: &str, chc: &ChcSystem) -> Result<Formula, ParseError> {
    let items = sexp::parse_all(text)?;
    let def = items
        .iter()
        .find(|s| s.head() == Some("define-fun"))
        .ok_or_else(|| ParseError::Syntax {
            pos: Pos::default(),
            msg: "no define-fun in witness".into(),
        })?;
    let (_, fun) = parse_define_fun(&def.list().unwrap()[1..], def.pos)?;
    if fun.params.len() != chc.arity() {
        return syntax(
            def.pos,
            format!(
                "witness takes {} arguments but the problem has {} variables",
                fun.params.len(),
                chc.arity()
            ),
        );
    }
    if fun.ret != Sort::Bool || fun.params.iter().any(|(_, s)| *s != Sort::Int) {
        return syntax(def.pos, "witness must be a Bool function of Int arguments");
    }
    let scope: Scope = fun
        .params
        .iter()
        .zip(chc.vars())
        .map(|((p, _), v)| (p.clone(), Val::Int(Term::var(v.clone()))))
        .collect();
    Elaborator::default().formula(&fun.body, &scope)
}

/// Parses a standalone formula over the given integer variables.
pub fn parse_formula(text: &str, vars: &[Var]) -> Result<Formula, ParseError> {
    let s = sexp::parse_one(text)?;
    Elaborator::default().formula(&s, &int_scope(vars))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::VarAssignment;

    pub(crate) const C1_NATIVE: &str = "\
; while y > 0 do x := x + 1; y := y - 1 done
(vars (x y z))
(pre (and (= x 0) (= y z) (>= z 0)))
(trans (and (> y 0) (= x! (+ x 1)) (= y! (- y 1)) (= z! z)))
(post (or (> y 0) (= x z)))
";

    const C1_SYGUS: &str = "\
(set-logic LIA)
(synth-inv inv-f ((x Int) (y Int) (z Int)))
(declare-primed-var x Int)
(declare-primed-var y Int)
(declare-primed-var z Int)
(define-fun pre-f ((x Int) (y Int) (z Int)) Bool
  (and (= x 0) (= y z) (>= z 0)))
(define-fun trans-f ((x Int) (y Int) (z Int) (x! Int) (y! Int) (z! Int)) Bool
  (and (> y 0) (= x! (+ x 1)) (= y! (- y 1)) (= z! z)))
(define-fun post-f ((x Int) (y Int) (z Int)) Bool
  (=> (<= y 0) (= x z)))
(inv-constraint inv-f pre-f trans-f post-f)
(check-synth)
";

    fn vars(names: &[&str]) -> Vec<Var> {
        names.iter().map(|n| Var::new(n)).collect()
    }

    #[test]
    fn sygus_c1() {
        let chc = parse_sygus_inv(C1_SYGUS).unwrap();
        assert_eq!(chc.arity(), 3);
        assert_eq!(chc.vars(), &vars(&["x", "y", "z"])[..]);
        let expected = parse_formula("(and (= x 0) (= y z) (>= z 0))", chc.vars()).unwrap();
        assert_eq!(chc.pre, expected);
        assert_eq!(chc.pred_name, "inv-f");
    }

    #[test]
    fn sygus_renames_parameters_positionally() {
        let text = "\
(set-logic LIA)
(synth-inv inv ((x Int)))
(define-fun pre ((a Int)) Bool (= a 0))
(define-fun trans ((a Int) (b Int)) Bool (and (= b (+ a 1)) (< a 10)))
(define-fun post ((a Int)) Bool (<= a 10))
(inv-constraint inv pre trans post)
(check-synth)
";
        let chc = parse_sygus_inv(text).unwrap();
        assert_eq!(chc.arity(), 1);
        let x = Var::new("x");
        assert_eq!(chc.pre, Formula::eq(Term::var(x.clone()), Term::constant(0)));
        assert_eq!(chc.trans.free_vars(), vars(&["x", "x!"]));
    }

    #[test]
    fn sygus_rejects_real() {
        let text = "\
(set-logic LRA)
(synth-inv inv ((x Real)))
(define-fun pre ((x Real)) Bool (= x 0.0))
(define-fun trans ((x Real) (x! Real)) Bool (= x! x))
(define-fun post ((x Real)) Bool true)
(inv-constraint inv pre trans post)
";
        let err = parse_sygus_inv(text).unwrap_err();
        assert!(matches!(err, ParseError::Unsupported { .. }), "{err}");
        assert!(err.to_string().contains("unsupported fragment"));
    }

    #[test]
    fn sygus_helpers_let_and_bool_ite() {
        let text = "\
(set-logic LIA)
(synth-inv inv ((x Int) (y Int)))
(define-fun step ((a Int)) Int (+ a 2))
(define-fun pre ((x Int) (y Int)) Bool (let ((s (+ x y))) (= s 0)))
(define-fun trans ((x Int) (y Int) (x! Int) (y! Int)) Bool
  (ite (> x 0) (= x! (step x)) (= x! x)))
(define-fun post ((x Int) (y Int)) Bool (xor (> x 0) (<= x 0)))
(inv-constraint inv pre trans post)
";
        let chc = parse_sygus_inv(text).unwrap();
        let mut s = VarAssignment::new();
        s.insert(Var::new("x"), 3);
        s.insert(Var::new("y"), 0);
        s.insert(Var::new("x!"), 5);
        s.insert(Var::new("y!"), 0);
        assert!(chc.trans.eval(&s).unwrap());
        s.insert(Var::new("x!"), 3);
        assert!(!chc.trans.eval(&s).unwrap());
        assert!(chc.post.eval(&s).unwrap());
    }

    #[test]
    fn integer_ite_is_rejected() {
        let text = "\
(synth-inv inv ((x Int)))
(define-fun pre ((x Int)) Bool (= x 0))
(define-fun trans ((x Int) (x! Int)) Bool (= x! (ite (> x 0) x 1)))
(define-fun post ((x Int)) Bool true)
(inv-constraint inv pre trans post)
";
        match parse_sygus_inv(text).unwrap_err() {
            ParseError::Unsupported { pos, msg } => {
                assert_eq!(pos.line, 3);
                assert!(msg.contains("ite"));
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn nonlinear_is_unsupported() {
        let err = parse_formula("(>= (* x y) 0)", &vars(&["x", "y"])).unwrap_err();
        assert!(matches!(err, ParseError::Unsupported { .. }));
        let err = parse_formula("(>= (mod x 2) 0)", &vars(&["x"])).unwrap_err();
        assert!(matches!(err, ParseError::Unsupported { .. }));
    }

    #[test]
    fn native_c1_matches_sygus() {
        let a = parse_native(C1_NATIVE).unwrap();
        let b = parse_sygus_inv(C1_SYGUS).unwrap();
        assert_eq!(a.vars(), b.vars());
        assert_eq!(a.pre, b.pre);
        assert_eq!(a.trans, b.trans);
        // post differs syntactically (or vs =>) but agrees semantically
        for y in -2..3 {
            for x in -2..3 {
                let mut s = VarAssignment::new();
                s.insert(Var::new("x"), x);
                s.insert(Var::new("y"), y);
                s.insert(Var::new("z"), 1);
                assert_eq!(a.post.eval(&s).unwrap(), b.post.eval(&s).unwrap());
            }
        }
    }

    #[test]
    fn native_rejects_undeclared() {
        let text = "(vars (x)) (pre (= x 0)) (trans (= x! w)) (post true)";
        match parse_native(text).unwrap_err() {
            ParseError::Undeclared { pos, name } => {
                assert_eq!(name, "w");
                assert_eq!(pos.col, 39);
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn native_round_trip() {
        let a = parse_native(C1_NATIVE).unwrap();
        let b = parse_native(&a.to_native()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn witness_matches_by_position() {
        let chc = parse_native(C1_NATIVE).unwrap();
        let w = parse_witness(
            "(define-fun inv-f ((a Int) (b Int) (c Int)) Bool (and (= (+ a b) c) (>= b 0)))",
            &chc,
        )
        .unwrap();
        assert_eq!(w.free_vars(), vars(&["x", "y", "z"]));
        let err = parse_witness("(define-fun inv-f ((a Int)) Bool true)", &chc).unwrap_err();
        assert!(err.to_string().contains("1 arguments"));
    }
}
