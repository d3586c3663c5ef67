//! Template-based counterexample-guided invariant synthesis for
//! single-predicate linear CHCs, with pluggable template-update policies.

pub mod engine;
pub mod envserver;
pub mod logic;
pub mod mc;
pub mod policy;
pub mod sexp;
pub mod smt;
pub mod suite;
pub mod template;
pub mod validator;
