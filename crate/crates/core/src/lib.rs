//! Under-approximate reachability for recursive programs whose statements are
//! octagonal relations, by enumerating bounded control sets of depth-first,
//! index-bounded derivations.

pub mod automaton;
pub mod bounded;
pub mod control;
pub mod fop;
pub mod grammar;
pub mod lang;
pub mod octagon;
pub mod reach;
pub mod semantics;
