//! The automaton `A^df(k)` recognizing depth-first control words of index at
//! most `k`. A vertex is the nonterminal projection of a ranked sentential
//! form, stably sorted by rank.

use std::collections::{HashMap, VecDeque};
use std::fmt::Write as _;

use thiserror::Error;

use crate::grammar::{Grammar, Nt, ProdId, Production};

pub const DEFAULT_VERTEX_BUDGET: usize = 200_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AutomatonError {
    #[error("automaton exploration exceeded {0} vertices")]
    BudgetExceeded(usize),
}

/// Ranked nonterminals; ranks are contiguous from 0, nondecreasing, and each
/// rank holds at most two entries.
pub type Vertex = Vec<(Nt, u32)>;

/// Successor of `v` under `p`: the maximal-rank occurrence of the head
/// (leftmost among equals) is removed and the body nonterminals are appended
/// with the new rank. `None` if not applicable or longer than `k`.
pub fn successor(v: &Vertex, p: &Production, k: usize) -> Option<Vertex> {
    let &(_, top) = v.last()?;
    let j = v.iter().position(|&(x, r)| r == top && x == p.head)?;
    let mut rest: Vertex = Vec::with_capacity(v.len() + 2);
    rest.extend_from_slice(&v[..j]);
    rest.extend_from_slice(&v[j + 1..]);
    let nts = p.nt_count();
    if rest.len() + nts > k {
        return None;
    }
    let rank = if rest.is_empty() {
        0
    } else if rest.iter().any(|&(_, r)| r == top) {
        top + 1
    } else {
        top
    };
    rest.extend(p.nts().map(|x| (x, rank)));
    Some(rest)
}

pub fn is_canonical(v: &Vertex) -> bool {
    let mut expect = 0u32;
    let mut count = 0;
    for (i, &(_, r)) in v.iter().enumerate() {
        if i == 0 {
            if r != 0 {
                return false;
            }
            count = 1;
            continue;
        }
        if r == expect {
            count += 1;
            if count > 2 {
                return false;
            }
        } else if r == expect + 1 {
            expect = r;
            count = 1;
        } else {
            return false;
        }
    }
    true
}

pub fn vertex_string(g: &Grammar, v: &Vertex) -> String {
    if v.is_empty() {
        return "eps".into();
    }
    let mut s = String::new();
    for &(x, r) in v {
        write!(s, "{}{{{}}}", g.nt_name(x), r).unwrap();
    }
    s
}

/// The reachable part of `A^df(k)` from the given start nonterminals.
#[derive(Clone, Debug)]
pub struct DfAutomaton {
    pub k: usize,
    pub vertices: Vec<Vertex>,
    pub index: HashMap<Vertex, usize>,
    /// Outgoing edges per vertex, sorted by production id.
    pub edges: Vec<Vec<(ProdId, usize)>>,
    pub starts: Vec<usize>,
}

impl DfAutomaton {
    pub fn explore(g: &Grammar, k: usize, starts: &[Nt], budget: usize) -> Result<DfAutomaton, AutomatonError> {
        let mut a = DfAutomaton { k, vertices: vec![], index: HashMap::new(), edges: vec![], starts: vec![] };
        let mut queue = VecDeque::new();
        for &x in starts {
            let v = vec![(x, 0)];
            let id = a.intern(v, &mut queue);
            a.starts.push(id);
        }
        while let Some(i) = queue.pop_front() {
            let v = a.vertices[i].clone();
            let mut out = vec![];
            for p in g.productions() {
                if let Some(w) = successor(&v, p, k) {
                    debug_assert!(is_canonical(&w));
                    let j = a.intern(w, &mut queue);
                    out.push((p.id, j));
                }
            }
            a.edges[i] = out;
            if a.vertices.len() > budget {
                return Err(AutomatonError::BudgetExceeded(budget));
            }
        }
        Ok(a)
    }

    fn intern(&mut self, v: Vertex, queue: &mut VecDeque<usize>) -> usize {
        if let Some(&i) = self.index.get(&v) {
            return i;
        }
        let i = self.vertices.len();
        self.index.insert(v.clone(), i);
        self.vertices.push(v);
        self.edges.push(vec![]);
        queue.push_back(i);
        i
    }

    pub fn vertex(&self, v: &Vertex) -> Option<usize> {
        self.index.get(v).copied()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.iter().map(Vec::len).sum()
    }

    /// One `vertex --pN--> vertex` line per edge.
    pub fn dump(&self, g: &Grammar) -> String {
        let mut s = String::new();
        for (i, es) in self.edges.iter().enumerate() {
            for &(p, j) in es {
                writeln!(
                    s,
                    "{} --p{}--> {}",
                    vertex_string(g, &self.vertices[i]),
                    p,
                    vertex_string(g, &self.vertices[j])
                )
                .unwrap();
            }
        }
        s
    }
}

/// Whether `gamma` labels a path of `A^df(k)` from `x{0}` to `y{0}` (or to
/// the empty vertex when `y` is `None`).
pub fn accepts(g: &Grammar, k: usize, x: Nt, y: Option<Nt>, gamma: &[ProdId]) -> bool {
    let mut v: Vertex = vec![(x, 0)];
    if k == 0 {
        return false;
    }
    for id in gamma {
        let p = match g.production(*id) {
            Some(p) => p,
            None => return false,
        };
        v = match successor(&v, p, k) {
            Some(w) => w,
            None => return false,
        };
    }
    match y {
        None => v.is_empty(),
        Some(y) => v == vec![(y, 0)],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::{apply_control_word, df_control_words, Sym};

    fn running() -> Grammar {
        Grammar::from_rules(&[
            (1, "X1", &["t1", "X2"]),
            (2, "X2", &["call[t2]", "X1", "ret[t2]", "X3"]),
            (3, "X3", &["t3"]),
            (4, "X1", &["t4"]),
        ])
        .unwrap()
    }

    #[test]
    fn running_fragment() {
        let g = running();
        let x1 = g.find_nt("X1").unwrap();
        let a = DfAutomaton::explore(&g, 3, &[x1], DEFAULT_VERTEX_BUDGET).unwrap();
        let names: Vec<String> = a.vertices.iter().map(|v| vertex_string(&g, v)).collect();
        for want in ["X1{0}", "X2{0}", "X1{0}X3{0}", "X3{0}X2{1}", "X3{0}X1{1}X3{1}", "X3{0}X3{1}", "X3{0}", "eps"] {
            assert!(names.contains(&want.to_string()), "missing {want}: {names:?}");
        }
        assert!(a.dump(&g).contains("X2{0} --p2--> X1{0}X3{0}"));
        assert!(a.vertices.len() <= g.size().pow(4));
        assert!(accepts(&g, 3, x1, None, &[1, 2, 1, 2, 4, 3, 3]));
        assert!(!accepts(&g, 2, x1, None, &[1, 2, 1, 2, 4, 3, 3]));
        assert!(accepts(&g, 2, x1, None, &[1, 2, 4, 3]));
        assert!(!accepts(&g, 1, x1, None, &[1, 2, 4, 3]));
        assert!(accepts(&g, 1, x1, None, &[4]));
    }

    #[test]
    fn agrees_with_ranked_derivations() {
        let g = Grammar::from_rules(&[
            (1, "S", &["A", "B"]),
            (2, "A", &["a", "A"]),
            (3, "A", &["b"]),
            (4, "B", &["S", "c"]),
            (5, "B", &["d"]),
        ])
        .unwrap();
        let s = g.find_nt("S").unwrap();
        for k in 1..=3 {
            let words = df_control_words(&g, s, None, k, 9);
            for gamma in words.keys() {
                assert!(accepts(&g, k, s, None, gamma), "{gamma:?}");
                let seq = apply_control_word(&g, &[Sym::N(s)], gamma, None).unwrap();
                assert!(seq.index() <= k);
            }
        }
    }
}
