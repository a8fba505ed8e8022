//! Relational semantics of nested words and of depth-first control words.
//!
//! Terminals named `call[t]` and `ret[t]` open and close a call of `t`; every
//! other terminal is an internal statement.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use thiserror::Error;

use crate::grammar::{apply_control_word, Grammar, Nt, ProdId, Sym, Term, Tree, TreeChild};
use crate::octagon::{OctError, OctRelation, VarSet};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SemError {
    #[error("unbalanced call/return at position {0}")]
    Unbalanced(usize),
    #[error("no relation for symbol `{0}`")]
    UnlabeledSymbol(String),
    #[error("no frame condition for `{0}`")]
    MissingFrame(String),
    #[error("not a complete depth-first derivation")]
    NotDepthFirstDerivation,
    #[error(transparent)]
    Oct(#[from] OctError),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SymKind<'a> {
    Internal,
    Call(&'a str),
    Ret(&'a str),
}

pub fn classify(name: &str) -> SymKind<'_> {
    if let Some(t) = name.strip_prefix("call[").and_then(|s| s.strip_suffix(']')) {
        SymKind::Call(t)
    } else if let Some(t) = name.strip_prefix("ret[").and_then(|s| s.strip_suffix(']')) {
        SymKind::Ret(t)
    } else {
        SymKind::Internal
    }
}

/// Relations of the statements, keyed by terminal name, and frame conditions
/// keyed by callee.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProgramLabels {
    pub vars: Arc<VarSet>,
    pub rels: BTreeMap<String, OctRelation>,
    pub frames: BTreeMap<String, OctRelation>,
}

/// Labels attached to the terminal ids of one grammar.
#[derive(Clone, Debug)]
pub struct ResolvedLabels {
    pub vars: Arc<VarSet>,
    kinds: Vec<Resolved>,
    names: Vec<String>,
}

#[derive(Clone, Debug)]
enum Resolved {
    Internal(OctRelation),
    Call(String, OctRelation),
    Ret(String, OctRelation, OctRelation),
    Missing,
}

impl ProgramLabels {
    pub fn new(vars: Arc<VarSet>) -> ProgramLabels {
        ProgramLabels { vars, rels: BTreeMap::new(), frames: BTreeMap::new() }
    }

    /// Attaches labels to the terminals of `g`. Terminals of `g` not in use may
    /// stay unlabeled; using them later is an error.
    pub fn resolve(&self, g: &Grammar) -> Result<ResolvedLabels, SemError> {
        let used = g.terminals_in_use();
        let mut kinds = vec![];
        let mut names = vec![];
        for a in 0..g.t_count() as Term {
            let name = g.t_name(a);
            names.push(name.to_string());
            let r = match self.label(name) {
                Ok(r) => r,
                Err(e) if used.contains(&a) => return Err(e),
                Err(_) => Resolved::Missing,
            };
            kinds.push(r);
        }
        Ok(ResolvedLabels { vars: self.vars.clone(), kinds, names })
    }

    fn label(&self, name: &str) -> Result<Resolved, SemError> {
        let rel = self.rels.get(name).cloned().ok_or_else(|| SemError::UnlabeledSymbol(name.into()))?;
        Ok(match classify(name) {
            SymKind::Internal => Resolved::Internal(rel),
            SymKind::Call(t) => Resolved::Call(t.into(), rel),
            SymKind::Ret(t) => {
                let phi = self.frames.get(t).cloned().ok_or_else(|| SemError::MissingFrame(t.into()))?;
                Resolved::Ret(t.into(), rel, phi)
            }
        })
    }

    /// Semantics of a word given by terminal names.
    pub fn word_semantics<S: AsRef<str>>(&self, w: &[S]) -> Result<OctRelation, SemError> {
        let labels = w.iter().map(|s| self.label(s.as_ref())).collect::<Result<Vec<_>, _>>()?;
        eval(&self.vars, labels.iter().map(Item::Ref))
    }
}

/// Pairs `(i, j)` (1-based) of matching call and return positions.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct NestingRelation {
    pub pairs: BTreeSet<(usize, usize)>,
}

pub fn match_nesting<S: AsRef<str>>(w: &[S]) -> Result<NestingRelation, SemError> {
    let mut stack: Vec<(usize, &str)> = vec![];
    let mut out = NestingRelation::default();
    for (i, s) in w.iter().enumerate() {
        match classify(s.as_ref()) {
            SymKind::Internal => {}
            SymKind::Call(t) => stack.push((i + 1, t)),
            SymKind::Ret(t) => match stack.pop() {
                Some((j, u)) if u == t => {
                    out.pairs.insert((j, i + 1));
                }
                _ => return Err(SemError::Unbalanced(i + 1)),
            },
        }
    }
    match stack.first() {
        Some(&(j, _)) => Err(SemError::Unbalanced(j)),
        None => Ok(out),
    }
}

enum Item<'a> {
    Ref(&'a Resolved),
    Rel(OctRelation),
}

struct Frame<'a> {
    acc: OctRelation,
    callee: &'a str,
    rel: &'a OctRelation,
    pos: usize,
}

fn eval<'a, I: IntoIterator<Item = Item<'a>>>(vars: &Arc<VarSet>, items: I) -> Result<OctRelation, SemError> {
    let mut acc = OctRelation::identity(vars);
    let mut stack: Vec<Frame<'a>> = vec![];
    for (i, it) in items.into_iter().enumerate() {
        match it {
            Item::Rel(r) => acc = acc.compose(&r)?,
            Item::Ref(Resolved::Internal(r)) => acc = acc.compose(r)?,
            Item::Ref(Resolved::Call(t, r)) => {
                let prev = std::mem::replace(&mut acc, OctRelation::identity(vars));
                stack.push(Frame { acc: prev, callee: t, rel: r, pos: i + 1 });
            }
            Item::Ref(Resolved::Ret(t, r, phi)) => {
                let f = stack.pop().ok_or(SemError::Unbalanced(i + 1))?;
                if f.callee != t {
                    return Err(SemError::Unbalanced(i + 1));
                }
                let inner = f.rel.compose(&acc)?.compose(r)?.intersect(phi)?;
                acc = f.acc.compose(&inner)?;
            }
            Item::Ref(Resolved::Missing) => return Err(SemError::UnlabeledSymbol(String::new())),
        }
    }
    match stack.first() {
        Some(f) => Err(SemError::Unbalanced(f.pos)),
        None => Ok(acc),
    }
}

impl ResolvedLabels {
    fn get(&self, a: Term) -> Result<&Resolved, SemError> {
        match self.kinds.get(a as usize) {
            Some(Resolved::Missing) | None => {
                Err(SemError::UnlabeledSymbol(self.names.get(a as usize).cloned().unwrap_or_default()))
            }
            Some(r) => Ok(r),
        }
    }

    /// `⟦w⟧`; the empty word denotes the identity.
    pub fn word_semantics(&self, w: &[Term]) -> Result<OctRelation, SemError> {
        let mut items = Vec::with_capacity(w.len());
        for &a in w {
            items.push(Item::Ref(self.get(a)?));
        }
        eval(&self.vars, items)
    }

    /// Call depth change of a word: `(min prefix depth, final depth)`.
    fn balance(&self, w: &[Term]) -> (i64, i64) {
        let mut d = 0i64;
        let mut lo = 0i64;
        for &a in w {
            match self.kinds.get(a as usize) {
                Some(Resolved::Call(..)) => d += 1,
                Some(Resolved::Ret(..)) => {
                    d -= 1;
                    lo = lo.min(d);
                }
                _ => {}
            }
        }
        (lo, d)
    }

    /// Semantics of a complete derivation tree, evaluated bottom-up: the
    /// subtree of every node whose yield is balanced is summarized first.
    pub fn tree_semantics(&self, t: &Tree, root: usize) -> Result<OctRelation, SemError> {
        let mut memo: BTreeMap<usize, OctRelation> = BTreeMap::new();
        self.node_semantics(t, root, &mut memo)
    }

    fn node_semantics(
        &self,
        t: &Tree,
        n: usize,
        memo: &mut BTreeMap<usize, OctRelation>,
    ) -> Result<OctRelation, SemError> {
        if let Some(r) = memo.get(&n) {
            return Ok(r.clone());
        }
        let mut items: Vec<Item<'_>> = vec![];
        self.flatten(t, n, &mut items, memo)?;
        let r = eval(&self.vars, items)?;
        memo.insert(n, r.clone());
        Ok(r)
    }

    fn flatten<'s>(
        &'s self,
        t: &Tree,
        n: usize,
        items: &mut Vec<Item<'s>>,
        memo: &mut BTreeMap<usize, OctRelation>,
    ) -> Result<(), SemError> {
        for c in &t.nodes[n].children {
            match c {
                TreeChild::Term(a) => items.push(Item::Ref(self.get(*a)?)),
                TreeChild::Open(_) => return Err(SemError::NotDepthFirstDerivation),
                TreeChild::Node(m) => {
                    if self.balance(&t.yield_of(*m)) == (0, 0) {
                        items.push(Item::Rel(self.node_semantics(t, *m, memo)?));
                    } else {
                        self.flatten(t, *m, items, memo)?;
                    }
                }
            }
        }
        Ok(())
    }

    /// `⟦γ⟧` for a complete depth-first derivation from `x`.
    pub fn controlword_semantics(&self, g: &Grammar, x: Nt, gamma: &[ProdId]) -> Result<OctRelation, SemError> {
        let seq = apply_control_word(g, &[Sym::N(x)], gamma, None).map_err(|_| SemError::NotDepthFirstDerivation)?;
        if seq.terminal_result().is_none() {
            return Err(SemError::NotDepthFirstDerivation);
        }
        let tree = seq.tree(g);
        let root = tree.roots[0].ok_or(SemError::NotDepthFirstDerivation)?;
        self.tree_semantics(&tree, root)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn running_labels() -> ProgramLabels {
        let vars = VarSet::new(&["x", "z"]).unwrap();
        let mut l = ProgramLabels::new(vars.clone());
        for (s, r) in [
            ("t1", "x > 0, x' = x"),
            ("call[t2]", "x' = x - 1"),
            ("ret[t2]", "z' = z"),
            ("t3", "x' = x, z' = z + 2"),
            ("t4", "x = 0, z' = 0"),
        ] {
            l.rels.insert(s.into(), OctRelation::parse(r, &vars).unwrap());
        }
        l.frames.insert("t2".into(), OctRelation::parse("x' = x", &vars).unwrap());
        l
    }

    #[test]
    fn nesting() {
        let w = ["t1", "call[t2]", "t4", "ret[t2]", "t3"];
        assert_eq!(match_nesting(&w).unwrap().pairs, BTreeSet::from([(2, 4)]));
        assert!(match_nesting(&["t1", "t3"]).unwrap().pairs.is_empty());
        assert_eq!(match_nesting(&["call[t2]", "t1"]), Err(SemError::Unbalanced(1)));
        assert_eq!(match_nesting(&["ret[t2]"]), Err(SemError::Unbalanced(1)));
    }

    #[test]
    fn running_words() {
        let l = running_labels();
        let w = ["t1", "call[t2]", "t4", "ret[t2]", "t3"];
        let r = l.word_semantics(&w).unwrap();
        assert_eq!(r.pretty(), "x = 1, x' = 1, z' = 2");
        assert_eq!(l.word_semantics(&["t4"]).unwrap().pretty(), "x = 0, z' = 0");
        assert!(l.word_semantics::<&str>(&[]).unwrap().equal(&OctRelation::identity(&l.vars)).unwrap());
        assert_eq!(l.word_semantics(&["t5"]), Err(SemError::UnlabeledSymbol("t5".into())));
    }

    #[test]
    fn control_words_match_yield() {
        let g = Grammar::from_rules(&[
            (1, "X1", &["t1", "X2"]),
            (2, "X2", &["call[t2]", "X1", "ret[t2]", "X3"]),
            (3, "X3", &["t3"]),
            (4, "X1", &["t4"]),
        ])
        .unwrap();
        let l = running_labels().resolve(&g).unwrap();
        let x1 = g.find_nt("X1").unwrap();
        let a = l.controlword_semantics(&g, x1, &[1, 2, 4, 3]).unwrap();
        let b = l.controlword_semantics(&g, x1, &[1, 2, 3, 4]).unwrap();
        assert_eq!(a.pretty(), "x = 1, x' = 1, z' = 2");
        assert!(a.equal(&b).unwrap());
        assert_eq!(l.controlword_semantics(&g, x1, &[4]).unwrap().pretty(), "x = 0, z' = 0");
        assert_eq!(l.controlword_semantics(&g, x1, &[1, 2]), Err(SemError::NotDepthFirstDerivation));
    }
}
