//! Emptiness and inclusion questions for context-free languages against
//! small deterministic automata.

use std::collections::BTreeSet;

use crate::grammar::{context_grammar, Grammar, Nt, Sym, Term};

/// Complete DFA over the terminal ids `0..alphabet` of some grammar.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dfa {
    pub start: usize,
    pub accept: Vec<bool>,
    pub next: Vec<Vec<usize>>,
}

impl Dfa {
    pub fn states(&self) -> usize {
        self.accept.len()
    }

    pub fn accepts(&self, w: &[Term]) -> bool {
        let mut q = self.start;
        for &a in w {
            q = self.next[q][a as usize];
        }
        self.accept[q]
    }

    pub fn universal(alphabet: usize) -> Dfa {
        Dfa { start: 0, accept: vec![true], next: vec![vec![0; alphabet]] }
    }

    pub fn complement(&self) -> Dfa {
        Dfa { start: self.start, accept: self.accept.iter().map(|b| !b).collect(), next: self.next.clone() }
    }

    /// `letters[0]* letters[1]* ...` for pairwise distinct letters.
    pub fn letter_bounded(alphabet: usize, letters: &[Term]) -> Dfa {
        // state 0 reads nothing yet, state j + 1 last read letters[j]
        let d = letters.len();
        let sink = d + 1;
        let mut next = vec![vec![sink; alphabet]; d + 2];
        for s in 0..=d {
            for (j, &a) in letters.iter().enumerate().skip(s.saturating_sub(1)) {
                next[s][a as usize] = j + 1;
            }
        }
        let mut accept = vec![true; d + 2];
        accept[sink] = false;
        Dfa { start: 0, accept, next }
    }

    pub fn starts_with(alphabet: usize, a: Term) -> Dfa {
        // 0 start, 1 accepted, 2 sink
        let mut next = vec![vec![2; alphabet]; 3];
        next[0][a as usize] = 1;
        next[1] = vec![1; alphabet];
        Dfa { start: 0, accept: vec![false, true, false], next }
    }

    pub fn ends_with(alphabet: usize, a: Term) -> Dfa {
        let mut next = vec![vec![0; alphabet]; 2];
        next[0][a as usize] = 1;
        next[1][a as usize] = 1;
        Dfa { start: 0, accept: vec![false, true], next }
    }

    pub fn contains(alphabet: usize, a: Term) -> Dfa {
        let mut next = vec![vec![0; alphabet]; 2];
        next[0][a as usize] = 1;
        next[1] = vec![1; alphabet];
        Dfa { start: 0, accept: vec![false, true], next }
    }
}

type Rel = Vec<u64>;

fn compose(a: &Rel, b: &Rel) -> Rel {
    a.iter()
        .map(|&row| {
            let mut out = 0u64;
            let mut bits = row;
            while bits != 0 {
                let j = bits.trailing_zeros() as usize;
                out |= b[j];
                bits &= bits - 1;
            }
            out
        })
        .collect()
}

/// For every nonterminal `X`, the pairs `(p, p')` such that some word of
/// `L_X` leads the automaton from `p` to `p'`.
pub fn reach_relations(g: &Grammar, dfa: &Dfa) -> Vec<Rel> {
    let n = dfa.states();
    assert!(n <= 64, "automaton too large");
    let ident: Rel = (0..n).map(|i| 1u64 << i).collect();
    let term: Vec<Rel> = (0..g.t_count()).map(|a| (0..n).map(|i| 1u64 << dfa.next[i][a]).collect()).collect();
    let mut rel: Vec<Rel> = vec![vec![0; n]; g.nt_count()];
    loop {
        let mut changed = false;
        for p in g.productions() {
            let mut acc = ident.clone();
            for s in &p.body {
                acc = match s {
                    Sym::T(a) => compose(&acc, &term[*a as usize]),
                    Sym::N(y) => compose(&acc, &rel[*y as usize]),
                };
            }
            let h = &mut rel[p.head as usize];
            for (r, a) in h.iter_mut().zip(&acc) {
                if *r | a != *r {
                    *r |= a;
                    changed = true;
                }
            }
        }
        if !changed {
            return rel;
        }
    }
}

/// `L_x(g) ∩ L(dfa) ≠ ∅`.
pub fn meets(g: &Grammar, x: Nt, dfa: &Dfa) -> bool {
    let rel = reach_relations(g, dfa);
    let row = rel[x as usize][dfa.start];
    (0..dfa.states()).any(|q| row >> q & 1 == 1 && dfa.accept[q])
}

/// `L_{x,y}(g) ∩ L(dfa) ≠ ∅` where `L_{x,y} = { uv | x =>* u y v }`.
pub fn context_meets(g: &Grammar, x: Nt, y: Nt, dfa: &Dfa) -> bool {
    let (cg, cx) = context_grammar(g, x, y);
    let d = widen(dfa, cg.t_count());
    meets(&cg, cx, &d)
}

fn widen(dfa: &Dfa, alphabet: usize) -> Dfa {
    let mut d = dfa.clone();
    for row in &mut d.next {
        assert!(row.len() <= alphabet);
        let sink = row.first().copied().unwrap_or(0);
        row.resize(alphabet, sink);
    }
    d
}

/// `L_x(g) ⊆ letters[0]* ... letters[d-1]*` (or `L_{x,y}` when `y` is given).
pub fn included_in_letter_bounded(g: &Grammar, x: Nt, y: Option<Nt>, letters: &[Term]) -> bool {
    let bad = Dfa::letter_bounded(g.t_count(), letters).complement();
    match y {
        None => !meets(g, x, &bad),
        Some(y) => !context_meets(g, x, y, &bad),
    }
}

/// Letters of `letters` occurring in some word of `L_x(g)`, in order.
pub fn occurring_letters(g: &Grammar, x: Nt, letters: &[Term]) -> Vec<Term> {
    letters.iter().copied().filter(|&a| meets(g, x, &Dfa::contains(g.t_count(), a))).collect()
}

/// Nonterminals whose language has a word starting with `first` and a word
/// ending with `last`, and the rest.
pub fn partition_nonterminals(g: &Grammar, first: Term, last: Term) -> (BTreeSet<Nt>, BTreeSet<Nt>) {
    let n = g.t_count();
    let rs = reach_relations(g, &Dfa::starts_with(n, first));
    let re = reach_relations(g, &Dfa::ends_with(n, last));
    let hits = |rel: &Rel, acc: &[bool]| (0..acc.len()).any(|q| rel[0] >> q & 1 == 1 && acc[q]);
    let sw = Dfa::starts_with(n, first).accept;
    let ew = Dfa::ends_with(n, last).accept;
    let mut hat = BTreeSet::new();
    let mut check = BTreeSet::new();
    for y in g.nonterminals_in_use() {
        if hits(&rs[y as usize], &sw) && hits(&re[y as usize], &ew) {
            hat.insert(y);
        } else {
            check.insert(y);
        }
    }
    (hat, check)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::{enumerate_words, EnumOptions};

    #[test]
    fn letter_bounded_dfa() {
        let d = Dfa::letter_bounded(3, &[0, 2]);
        assert!(d.accepts(&[0, 0, 2]));
        assert!(d.accepts(&[]));
        assert!(!d.accepts(&[2, 0]));
        assert!(!d.accepts(&[1]));
    }

    #[test]
    fn inclusion_agrees_with_enumeration() {
        let g = Grammar::from_rules(&[
            (1, "X", &["a", "X", "b"]),
            (2, "X", &["c"]),
            (3, "Y", &["b", "Y", "a"]),
            (4, "Y", &[]),
        ])
        .unwrap();
        let (a, b, c) = (g.find_t("a").unwrap(), g.find_t("b").unwrap(), g.find_t("c").unwrap());
        let x = g.find_nt("X").unwrap();
        let y = g.find_nt("Y").unwrap();
        assert!(included_in_letter_bounded(&g, x, None, &[a, c, b]));
        assert!(!included_in_letter_bounded(&g, x, None, &[a, b, c]));
        assert!(included_in_letter_bounded(&g, y, None, &[b, a]));
        assert!(!included_in_letter_bounded(&g, y, None, &[a, b]));
        assert!(included_in_letter_bounded(&g, x, Some(x), &[a, b]));
        assert_eq!(occurring_letters(&g, y, &[a, b, c]), vec![a, b]);
        let words = enumerate_words(&g, x, None, EnumOptions::new(7)).unwrap();
        let dfa = Dfa::letter_bounded(g.t_count(), &[a, c, b]);
        assert!(words.iter().all(|w| dfa.accepts(w)));
        let (hat, check) = partition_nonterminals(&g, a, b);
        assert!(hat.contains(&x));
        assert!(check.contains(&y));
    }
}
