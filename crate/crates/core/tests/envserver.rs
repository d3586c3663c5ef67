//! Drives the environment server with a scripted client.

use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::path::PathBuf;
use std::time::{Duration, Instant};

use invsynth_core::engine::{run_cegis, ConcreteState, EngineConfig, Verdict};
use invsynth_core::envserver::{serve_stream, serve_tcp};
use invsynth_core::policy::{raw_abstract, Action, Inc, Policy, PolicyAction, RandomPolicy, RawBound, RawState};
use invsynth_core::suite::load_problem;
use invsynth_core::template::TemplateShape;
use serde_json::{json, Value};

fn problems() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../problems/mini")
}

struct Client {
    r: BufReader<TcpStream>,
    w: TcpStream,
}

impl Client {
    fn connect() -> Client {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let cfg = EngineConfig::default();
        std::thread::spawn(move || serve_tcp(listener, Some(problems()), cfg));
        let w = TcpStream::connect(addr).unwrap();
        Client {
            r: BufReader::new(w.try_clone().unwrap()),
            w,
        }
    }

    fn send(&mut self, v: Value) -> Value {
        writeln!(self.w, "{}", v).unwrap();
        let mut line = String::new();
        self.r.read_line(&mut line).unwrap();
        serde_json::from_str(&line).unwrap()
    }
}

/// Raw-space stand-in for the expert: alternately add a conjunct to every
/// disjunct and append a disjunct, with the same bound rules.
fn expert_like(s: &RawState, grow_n: bool) -> Action {
    let m = s.n.len().min(4);
    let n: Vec<u8> = if grow_n || m == 4 {
        vec![1; m]
    } else {
        let mut v = vec![0; m];
        v.push(1);
        v
    };
    let p = if s.f1 { Inc::One } else { Inc::Zero };
    let q = match (s.f2, s.q) {
        (false, _) => Inc::Zero,
        (true, RawBound::Finite(v)) if v < 3 => Inc::One,
        (true, _) => Inc::Inf,
    };
    Action::new(&n, p, q).unwrap()
}

#[test]
fn expert_like_episode_on_c1() {
    let mut c = Client::connect();
    let start = Instant::now();
    let mut reply = c.send(json!({"type": "reset", "problem": "c1.sl", "time_limit_s": 60}));
    assert_eq!(reply["type"], "state", "{reply}");
    assert!(reply["reward"].as_f64().unwrap() <= 0.0);
    let mut total = reply["reward"].as_f64().unwrap();
    let mut grow_n = true;
    let mut steps = 0;
    while reply["done"] == false {
        let s = RawState::from_json(&reply["state"]).unwrap();
        let a = expert_like(&s, grow_n);
        grow_n = !grow_n;
        reply = c.send(json!({"type": "step", "action": a.to_json()}));
        assert_eq!(reply["type"], "state", "{reply}");
        total += reply["reward"].as_f64().unwrap();
        steps += 1;
        assert!(steps < 100);
    }
    let wall = start.elapsed().as_secs_f64();
    assert_eq!(reply["outcome"], "sat", "{reply}");
    assert!(reply["witness"].as_str().unwrap().starts_with("(define-fun inv-f ((x Int) (y Int) (z Int)) Bool"));
    assert!((total + wall).abs() <= (0.05 * wall).max(0.05), "rewards {total}, wall {wall}");

    // stepping a finished episode is a protocol error
    let err = c.send(json!({"type": "step", "action": {"n": [1], "p": 0, "q": 0}}));
    assert_eq!(err["type"], "error");
    let closed = c.send(json!({"type": "close"}));
    assert_eq!(closed["type"], "closed");
}

#[test]
fn errors_keep_the_session() {
    let mut c = Client::connect();
    let r = c.send(json!({"type": "reset", "problem": "no_such_problem.sl"}));
    assert_eq!(r["type"], "error");
    assert!(r["message"].as_str().unwrap().contains("no_such_problem.sl"), "{r}");
    let r = c.send(json!({"type": "step", "action": {"n": [1], "p": 0, "q": 0}}));
    assert_eq!(r["type"], "error");

    let r = c.send(json!({"type": "reset", "problem": "c1.sl", "time_limit_s": 30}));
    assert_eq!(r["type"], "state");
    assert_eq!(r["done"], false);
    let r = c.send(json!({"type": "step", "action": {"n": [0, 0, 0, 0], "p": 0, "q": 0}}));
    assert_eq!(r["type"], "error", "{r}");
    let r = c.send(json!({"type": "step", "action": {"n": [2], "p": 0, "q": 0}}));
    assert_eq!(r["type"], "error");
    let r = c.send(json!({"type": "dance"}));
    assert_eq!(r["type"], "error");
    // after the errors the episode continues
    let r = c.send(json!({"type": "step", "action": {"n": [1], "p": 1, "q": 1}}));
    assert_eq!(r["type"], "state", "{r}");
}

#[test]
fn matches_in_process_run() {
    for (problem, seed) in [("lockstep.chc", 3u64), ("double_step.chc", 5), ("overflow_unsat.chc", 2), ("unsat_toy.chc", 1)] {
        let chc = load_problem(&problems().join(problem)).unwrap();
        let cfg = EngineConfig::with_timeout(Duration::from_secs(60));

        let mut recorded: Vec<RawState> = Vec::new();
        struct Rec<'a>(RandomPolicy, &'a mut Vec<RawState>);
        impl Policy for Rec<'_> {
            fn decide(&mut self, s: &ConcreteState) -> Result<PolicyAction, invsynth_core::policy::PolicyError> {
                self.1.push(raw_abstract(s));
                self.0.decide(s)
            }
            fn name(&self) -> String {
                "rec".into()
            }
        }
        let o = run_cegis(&chc, &cfg, &mut Rec(RandomPolicy::new(seed), &mut recorded)).unwrap();

        let mut c = Client::connect();
        let mut policy = RandomPolicy::new(seed);
        let mut reply = c.send(json!({"type": "reset", "problem": problem, "time_limit_s": 60}));
        let mut remote: Vec<RawState> = Vec::new();
        while reply["done"] == false {
            remote.push(RawState::from_json(&reply["state"]).unwrap());
            let dummy = ConcreteState {
                shape: TemplateShape::initial(),
                f1: false,
                f2: false,
                z: 0,
                elapsed: Duration::ZERO,
            };
            let PolicyAction::Raw(a) = policy.decide(&dummy).unwrap() else { unreachable!() };
            reply = c.send(json!({"type": "step", "action": a.to_json()}));
        }
        assert_eq!(reply["outcome"], o.verdict.tag(), "{problem}");
        assert!(!matches!(o.verdict, Verdict::Timeout), "{problem}");
        assert_eq!(remote, recorded, "{problem}");
    }
}

#[test]
fn stream_transport() {
    let input = format!(
        "{}\n\n{}\n{}\n",
        json!({"type": "reset", "problem": "unsat_toy.chc"}),
        json!({"type": "bogus"}),
        json!({"type": "close"})
    );
    let mut out = Vec::new();
    serve_stream(input.as_bytes(), &mut out, Some(problems()), EngineConfig::default()).unwrap();
    let lines: Vec<Value> = String::from_utf8(out)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[0]["type"], "state");
    assert!(RawState::from_json(&lines[0]["state"]).is_some());
    assert_eq!(lines[1]["type"], "error");
    assert_eq!(lines[2]["type"], "closed");
}
