//! Bounded expressions `w1* ... wd*`, their automata, the intersection grammar
//! `G ∩ b` and its letter-bounded image over `a1* ... ad*`.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use thiserror::Error;

use crate::grammar::{reduce, Grammar, Nt, ProdId, Sym, Term};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BoundedError {
    #[error("bounded expression syntax error at column {col}: {msg}")]
    Syntax { col: usize, msg: String },
    #[error("bounded expression must have at least one nonempty word")]
    Empty,
    #[error("expression is not strictly letter-bounded")]
    NotStrict,
    #[error("grammar is not in 2NF")]
    Not2nf,
    #[error("no axiom derives a word of the bounded expression")]
    EmptyIntersection,
}

/// `w1* ... wd*` over terminal names.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BoundedExpr {
    pub words: Vec<Vec<String>>,
}

impl BoundedExpr {
    pub fn new(words: Vec<Vec<String>>) -> Result<BoundedExpr, BoundedError> {
        if words.is_empty() || words.iter().any(|w| w.is_empty()) {
            return Err(BoundedError::Empty);
        }
        Ok(BoundedExpr { words })
    }

    /// Parses `(t1 call[t2])* (t4)* ...`; a bare symbol followed by `*` is a one-letter word.
    pub fn parse(text: &str) -> Result<BoundedExpr, BoundedError> {
        let cs: Vec<char> = text.chars().collect();
        let mut i = 0;
        let mut words = vec![];
        let err = |col: usize, msg: &str| BoundedError::Syntax { col: col + 1, msg: msg.into() };
        let sym_end = |i: usize| {
            let mut j = i;
            let mut depth = 0;
            while j < cs.len() {
                let c = cs[j];
                if c == '[' {
                    depth += 1;
                } else if c == ']' {
                    depth -= 1;
                } else if depth == 0 && (c.is_whitespace() || c == '(' || c == ')' || c == '*') {
                    break;
                }
                j += 1;
            }
            j
        };
        while i < cs.len() {
            if cs[i].is_whitespace() {
                i += 1;
                continue;
            }
            let mut word = vec![];
            if cs[i] == '(' {
                let open = i;
                i += 1;
                loop {
                    while i < cs.len() && cs[i].is_whitespace() {
                        i += 1;
                    }
                    if i >= cs.len() {
                        return Err(err(open, "unclosed `(`"));
                    }
                    if cs[i] == ')' {
                        i += 1;
                        break;
                    }
                    let e = sym_end(i);
                    if e == i {
                        return Err(err(i, "unexpected character"));
                    }
                    word.push(cs[i..e].iter().collect());
                    i = e;
                }
            } else {
                let e = sym_end(i);
                if e == i {
                    return Err(err(i, "expected `(` or a symbol"));
                }
                word.push(cs[i..e].iter().collect());
                i = e;
            }
            if i >= cs.len() || cs[i] != '*' {
                return Err(err(i, "expected `*`"));
            }
            i += 1;
            if word.is_empty() {
                return Err(err(i - 1, "empty word"));
            }
            words.push(word);
        }
        BoundedExpr::new(words)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// |b| = Σ |w_i|
    pub fn size(&self) -> usize {
        self.words.iter().map(Vec::len).sum()
    }

    pub fn is_strict(&self) -> bool {
        let mut seen = BTreeSet::new();
        self.words.iter().all(|w| w.len() == 1 && seen.insert(&w[0]))
    }

    pub fn contains<S: AsRef<str>>(&self, w: &[S]) -> bool {
        let nfa = self.nfa();
        let mut cur: BTreeSet<usize> = nfa.starts.iter().copied().collect();
        for a in w {
            cur = cur.iter().flat_map(|&q| nfa.step(q, a.as_ref())).collect();
            if cur.is_empty() {
                return false;
            }
        }
        cur.iter().any(|q| nfa.accept(*q))
    }

    pub fn nfa(&self) -> BoundedNfa {
        BoundedNfa::new(self)
    }
}

impl fmt::Display for BoundedExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.words.iter().map(|w| format!("({})*", w.join(" "))).collect();
        write!(f, "{}", parts.join(" "))
    }
}

/// The automaton behind `G^b`: state `(s, r)` is block `s`, position `r`
/// (both 1-based), flattened into an index.
#[derive(Clone, Debug)]
pub struct BoundedNfa {
    pub blocks: Vec<Vec<String>>,
    offset: Vec<usize>,
    pub starts: Vec<usize>,
}

impl BoundedNfa {
    fn new(b: &BoundedExpr) -> BoundedNfa {
        let mut offset = vec![];
        let mut n = 0;
        for w in &b.words {
            offset.push(n);
            n += w.len();
        }
        let starts = offset.clone();
        BoundedNfa { blocks: b.words.clone(), offset, starts }
    }

    pub fn states(&self) -> usize {
        self.blocks.iter().map(Vec::len).sum()
    }

    /// `(block, position)`, both 1-based.
    pub fn coords(&self, q: usize) -> (usize, usize) {
        let s = self.offset.partition_point(|&o| o <= q) - 1;
        (s + 1, q - self.offset[s] + 1)
    }

    pub fn state(&self, block: usize, pos: usize) -> usize {
        self.offset[block - 1] + pos - 1
    }

    pub fn name(&self, q: usize) -> String {
        let (s, r) = self.coords(q);
        format!("q{s}.{r}")
    }

    pub fn accept(&self, q: usize) -> bool {
        self.coords(q).1 == 1
    }

    /// Successors of `q` on `a`, ascending.
    pub fn step(&self, q: usize, a: &str) -> Vec<usize> {
        let (s, r) = self.coords(q);
        let w = &self.blocks[s - 1];
        if w[r - 1] != a {
            return vec![];
        }
        if r < w.len() {
            vec![q + 1]
        } else {
            (s..=self.blocks.len()).map(|t| self.state(t, 1)).collect()
        }
    }

    /// States reachable from `q` reading `w`.
    pub fn run<S: AsRef<str>>(&self, q: usize, w: &[S]) -> BTreeSet<usize> {
        let mut cur = BTreeSet::from([q]);
        for a in w {
            cur = cur.iter().flat_map(|&p| self.step(p, a.as_ref())).collect();
        }
        cur
    }

    /// Letter of `a1..ad` emitted by the transition `q --> q'`: the source
    /// block's letter when the target is a first position.
    fn emitted(&self, q: usize, target: usize) -> Option<usize> {
        if self.coords(target).1 == 1 {
            Some(self.coords(q).0)
        } else {
            None
        }
    }
}

/// The regular grammar `G^b` with nonterminals `q{s}.{r}`.
pub fn bounded_grammar(b: &BoundedExpr) -> (Grammar, Vec<Nt>) {
    let nfa = b.nfa();
    let mut g = Grammar::new();
    let nts: Vec<Nt> = (0..nfa.states()).map(|q| g.nt(&nfa.name(q))).collect();
    let mut id = 0;
    for q in 0..nfa.states() {
        let (s, r) = nfa.coords(q);
        let a = nfa.blocks[s - 1][r - 1].clone();
        let t = g.t(&a);
        for q2 in nfa.step(q, &a) {
            g.add_production(id, nts[q], vec![Sym::T(t), Sym::N(nts[q2])]).unwrap();
            id += 1;
        }
        if r == 1 {
            g.add_production(id, nts[q], vec![]).unwrap();
            id += 1;
        }
    }
    let starts = nfa.starts.iter().map(|&q| nts[q]).collect();
    (g, starts)
}

/// Regular grammars for `a1* ... ad*` (start `q1`) and for its complement
/// over `alphabet` (start `q1`, states `q1..qd` plus a sink `qs`).
pub fn letter_grammar_and_complement(
    b: &BoundedExpr,
    alphabet: &[String],
) -> Result<((Grammar, Nt), (Grammar, Nt)), BoundedError> {
    if !b.is_strict() {
        return Err(BoundedError::NotStrict);
    }
    let letters: Vec<&String> = b.words.iter().map(|w| &w[0]).collect();
    let mut sigma: Vec<String> = alphabet.to_vec();
    for a in &letters {
        if !sigma.contains(a) {
            sigma.push((*a).clone());
        }
    }
    let d = letters.len();
    let build = |complement: bool| {
        let mut g = Grammar::new();
        let qs: Vec<Nt> = (1..=d).map(|s| g.nt(&format!("q{s}"))).collect();
        let sink = g.nt("qs");
        let mut id = 0;
        for s in 0..d {
            for a in &sigma {
                let t = g.t(a);
                let to = match letters.iter().position(|l| *l == a) {
                    Some(j) if j >= s => qs[j],
                    _ => sink,
                };
                if complement || to != sink {
                    g.add_production(id, qs[s], vec![Sym::T(t), Sym::N(to)]).unwrap();
                    id += 1;
                }
            }
            if !complement {
                g.add_production(id, qs[s], vec![]).unwrap();
                id += 1;
            }
        }
        if complement {
            for a in &sigma {
                let t = g.t(a);
                g.add_production(id, sink, vec![Sym::T(t), Sym::N(sink)]).unwrap();
                id += 1;
            }
            g.add_production(id, sink, vec![]).unwrap();
        }
        (g, qs[0])
    };
    Ok((build(false), build(true)))
}

// ---------------------------------------------------------------------------
// Intersection grammar

/// `G^∩`: nonterminals are triples `[q X q']`.
#[derive(Clone, Debug)]
pub struct Intersection {
    pub grammar: Grammar,
    /// Axioms `[q1^(s) X q1^(x)]`, `s <= x`, with nonempty language.
    pub axioms: Vec<Nt>,
    /// `ζ`: production of `G^∩` to the production of `G` it copies.
    pub origin: BTreeMap<ProdId, ProdId>,
    /// Triple `(q, X, q')` of each nonterminal.
    pub triples: BTreeMap<Nt, (usize, Nt, usize)>,
    pub nfa: BoundedNfa,
}

impl Intersection {
    pub fn zeta(&self, gamma: &[ProdId]) -> Vec<ProdId> {
        gamma.iter().map(|p| self.origin[p]).collect()
    }
}

/// Builds `G^∩` for a 2NF grammar `g`, axiom `x` and bounded expression `b`,
/// generating triples lazily from the axioms and keeping only useful ones.
pub fn intersect_grammar(g: &Grammar, x: Nt, b: &BoundedExpr) -> Result<Intersection, BoundedError> {
    if !g.is_2nf() {
        return Err(BoundedError::Not2nf);
    }
    let nfa = b.nfa();
    let nq = nfa.states();
    let name = |t: &(usize, Nt, usize)| format!("[{}:{}:{}]", nfa.name(t.0), g.nt_name(t.1), nfa.name(t.2));
    let mut out = Grammar::new();
    for a in g.terminals_in_use() {
        out.t(g.t_name(a));
    }
    let mut ids: BTreeMap<(usize, Nt, usize), Nt> = BTreeMap::new();
    let mut queue: VecDeque<(usize, Nt, usize)> = VecDeque::new();
    type Tr = (usize, Nt, usize);
    let intern = |t: Tr, ids: &mut BTreeMap<Tr, Nt>, out: &mut Grammar, queue: &mut VecDeque<Tr>| -> Nt {
        if let Some(&n) = ids.get(&t) {
            return n;
        }
        let n = out.nt(&name(&t));
        ids.insert(t, n);
        queue.push_back(t);
        n
    };
    let mut axioms = vec![];
    for (i, &s) in nfa.starts.iter().enumerate() {
        for &e in &nfa.starts[i..] {
            axioms.push(intern((s, x, e), &mut ids, &mut out, &mut queue));
        }
    }
    let mut origin = BTreeMap::new();
    let mut pid: ProdId = 0;
    let tn = |a: Term| g.t_name(a).to_string();
    while let Some(t @ (q, xx, q2)) = queue.pop_front() {
        let head = ids[&t];
        for p in g.productions_of(xx) {
            let mut bodies: Vec<Vec<TSym>> = vec![];
            match p.body.as_slice() {
                [] => {
                    if q == q2 {
                        bodies.push(vec![]);
                    }
                }
                body if body.iter().all(|s| !s.is_nt()) => {
                    let w: Vec<String> = body.iter().map(|s| tn(s.term().unwrap())).collect();
                    if nfa.run(q, &w).contains(&q2) {
                        bodies.push(body.iter().map(|s| TSym::T(s.term().unwrap())).collect());
                    }
                }
                [Sym::N(y)] => bodies.push(vec![TSym::N((q, *y, q2))]),
                [Sym::T(a), Sym::N(y)] => {
                    for m in nfa.step(q, &tn(*a)) {
                        bodies.push(vec![TSym::T(*a), TSym::N((m, *y, q2))]);
                    }
                }
                [Sym::N(y), Sym::T(a)] => {
                    for m in 0..nq {
                        if nfa.step(m, &tn(*a)).contains(&q2) {
                            bodies.push(vec![TSym::N((q, *y, m)), TSym::T(*a)]);
                        }
                    }
                }
                [Sym::N(y), Sym::N(z)] => {
                    for m in 0..nq {
                        bodies.push(vec![TSym::N((q, *y, m)), TSym::N((m, *z, q2))]);
                    }
                }
                _ => unreachable!("2NF body"),
            }
            for body in bodies {
                let body: Vec<Sym> = body
                    .into_iter()
                    .map(|s| match s {
                        TSym::T(a) => Sym::T(out.t(g.t_name(a))),
                        TSym::N(tr) => Sym::N(intern(tr, &mut ids, &mut out, &mut queue)),
                    })
                    .collect();
                out.add_production(pid, head, body).unwrap();
                origin.insert(pid, p.id);
                pid += 1;
            }
        }
    }
    // keep what is productive and reachable from a productive axiom
    let productive = out.productive();
    let live: Vec<Nt> = axioms.iter().copied().filter(|a| productive.contains(a)).collect();
    if live.is_empty() {
        return Err(BoundedError::EmptyIntersection);
    }
    let mut keep_heads = BTreeSet::new();
    for &a in &live {
        let r = reduce(&out, a).expect("productive axiom");
        keep_heads.extend(r.nonterminals_in_use());
    }
    let grammar = out.restrict(|p| keep_heads.contains(&p.head) && p.nts().all(|y| productive.contains(&y)));
    origin.retain(|id, _| grammar.production(*id).is_some());
    let triples = ids.iter().map(|(t, n)| (*n, *t)).filter(|(n, _)| keep_heads.contains(n)).collect();
    Ok(Intersection { grammar, axioms: live, origin, triples, nfa })
}

enum TSym {
    T(Term),
    N((usize, Nt, usize)),
}

// ---------------------------------------------------------------------------
// Letter-bounded image

/// `G^⋈` over letters `a1..ad`. Productions keep the ids of their `G^∩`
/// preimage, so `ι⁻¹` is the identity on ids.
#[derive(Clone, Debug)]
pub struct Bowtie {
    pub grammar: Grammar,
    /// Terminal id of `a_i` (index `i - 1`).
    pub letters: Vec<Term>,
    /// `h(a_i) = w_i`.
    pub h: Vec<Vec<String>>,
}

impl Bowtie {
    pub fn letter_name(i: usize) -> String {
        format!("a{}", i + 1)
    }

    pub fn h_word(&self, w: &[Term]) -> Vec<String> {
        w.iter()
            .flat_map(|a| {
                let i = self.letters.iter().position(|l| l == a).unwrap();
                self.h[i].clone()
            })
            .collect()
    }
}

pub fn bowtie_grammar(inter: &Intersection, b: &BoundedExpr) -> Bowtie {
    let gi = &inter.grammar;
    let nfa = &inter.nfa;
    let mut out = Grammar::new();
    for n in 0..gi.nt_count() {
        out.nt(gi.nt_name(n as Nt));
    }
    let letters: Vec<Term> = (0..b.len()).map(|i| out.t(&Bowtie::letter_name(i))).collect();
    let letter = |block: usize| Sym::T(letters[block - 1]);
    let tname = |a: Term| gi.t_name(a).to_string();
    for p in gi.productions() {
        let (q, _, q2) = inter.triples[&p.head];
        let body: Vec<Sym> = match p.body.as_slice() {
            body if body.iter().all(|s| !s.is_nt()) => {
                let mut z = vec![];
                match body {
                    [] => {}
                    [_] => {
                        if let Some(r) = nfa.emitted(q, q2) {
                            z.push(letter(r));
                        }
                    }
                    [Sym::T(a1), Sym::T(a2)] => {
                        let mid = nfa
                            .step(q, &tname(*a1))
                            .into_iter()
                            .find(|&m| nfa.step(m, &tname(*a2)).contains(&q2))
                            .expect("intermediate state");
                        if let Some(r) = nfa.emitted(q, mid) {
                            z.push(letter(r));
                        }
                        if let Some(r) = nfa.emitted(mid, q2) {
                            z.push(letter(r));
                        }
                    }
                    _ => unreachable!(),
                }
                z
            }
            [Sym::T(_), Sym::N(y)] => {
                let (m, _, _) = inter.triples[y];
                let mut z = vec![];
                if let Some(r) = nfa.emitted(q, m) {
                    z.push(letter(r));
                }
                z.push(Sym::N(*y));
                z
            }
            [Sym::N(y), Sym::T(_)] => {
                let (_, _, m) = inter.triples[y];
                let mut z = vec![Sym::N(*y)];
                if let Some(r) = nfa.emitted(m, q2) {
                    z.push(letter(r));
                }
                z
            }
            other => other.to_vec(),
        };
        out.add_production(p.id, p.head, body).unwrap();
    }
    Bowtie { grammar: out, letters, h: b.words.clone() }
}
