//! Bounded control sets for letter-bounded grammars.
//!
//! A [`ControlExpr`] is a bounded expression `γ1* ... γn*` over production ids.
//! Blocks repeated `N` times are stored once as [`Item::Repeat`] and printed
//! as `[ ... ]^N`, so expressions with many factors stay small.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::hash::Hash;
use std::rc::Rc;

use thiserror::Error;

use crate::automaton::{successor, AutomatonError, DfAutomaton, Vertex};
use crate::grammar::{
    apply_control_word, reduce, ControlWord, Grammar, GrammarError, Nt, ProdId, Sym, Term, Tree, TreeChild,
};
use crate::lang::{included_in_letter_bounded, occurring_letters, partition_nonterminals};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ControlError {
    #[error("language is not included in the letter-bounded expression")]
    NotLetterBounded,
    #[error("bounded expression is not minimal for the language")]
    NotMinimal,
    #[error("guide is invalid at step {0}")]
    InvalidGuide(usize),
    #[error(transparent)]
    Automaton(#[from] AutomatonError),
    #[error(transparent)]
    Grammar(#[from] GrammarError),
    #[error("walk exceeded {0} states")]
    BudgetExceeded(usize),
    #[error("control expression syntax error at column {col}: {msg}")]
    Syntax { col: usize, msg: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Item {
    Star(ControlWord),
    Repeat(Vec<Item>, u64),
}

/// `γ1* ... γn*` with repeated blocks kept folded.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct ControlExpr {
    pub items: Vec<Item>,
}

fn items_count(items: &[Item]) -> u128 {
    items
        .iter()
        .map(|i| match i {
            Item::Star(_) => 1,
            Item::Repeat(inner, n) => *n as u128 * items_count(inner),
        })
        .sum()
}

fn items_len(items: &[Item]) -> u128 {
    items
        .iter()
        .map(|i| match i {
            Item::Star(w) => w.len() as u128,
            Item::Repeat(inner, n) => *n as u128 * items_len(inner),
        })
        .sum()
}

impl ControlExpr {
    pub fn epsilon() -> ControlExpr {
        ControlExpr::default()
    }

    pub fn star(w: ControlWord) -> ControlExpr {
        ControlExpr { items: vec![Item::Star(w)] }
    }

    /// `Concat` of a list of words: `w1* w2* ...`.
    pub fn concat_words<I: IntoIterator<Item = ControlWord>>(ws: I) -> ControlExpr {
        ControlExpr { items: ws.into_iter().map(Item::Star).collect() }
    }

    pub fn then(mut self, o: &ControlExpr) -> ControlExpr {
        self.items.extend(o.items.iter().cloned());
        self
    }

    pub fn repeat(&self, n: u64) -> ControlExpr {
        match n {
            0 => ControlExpr::epsilon(),
            1 => self.clone(),
            _ => ControlExpr { items: vec![Item::Repeat(self.items.clone(), n)] },
        }
    }

    /// Number of starred factors once unfolded.
    pub fn factor_count(&self) -> u128 {
        items_count(&self.items)
    }

    /// `|Γ| = Σ |γ_i|` once unfolded.
    pub fn length(&self) -> u128 {
        items_len(&self.items)
    }

    /// Unfolded factors, or `None` if there are more than `limit`.
    pub fn factors(&self, limit: usize) -> Option<Vec<ControlWord>> {
        if self.factor_count() > limit as u128 {
            return None;
        }
        let mut out = vec![];
        fn go(items: &[Item], out: &mut Vec<ControlWord>) {
            for i in items {
                match i {
                    Item::Star(w) => out.push(w.clone()),
                    Item::Repeat(inner, n) => {
                        for _ in 0..*n {
                            go(inner, out);
                        }
                    }
                }
            }
        }
        go(&self.items, &mut out);
        Some(out)
    }

    /// Productions occurring in the expression.
    pub fn alphabet(&self) -> BTreeSet<ProdId> {
        let mut s = BTreeSet::new();
        fn go(items: &[Item], s: &mut BTreeSet<ProdId>) {
            for i in items {
                match i {
                    Item::Star(w) => s.extend(w.iter().copied()),
                    Item::Repeat(inner, _) => go(inner, s),
                }
            }
        }
        go(&self.items, &mut s);
        s
    }

    /// Membership of a control word.
    pub fn contains(&self, gamma: &[ProdId]) -> bool {
        struct Pos<'a>(&'a [ProdId]);
        impl Walker for Pos<'_> {
            type State = usize;
            fn step(&self, s: &usize, p: ProdId) -> Option<usize> {
                (self.0.get(*s) == Some(&p)).then_some(s + 1)
            }
        }
        let w = Pos(gamma);
        match walk(self, &w, vec![0], WalkLimits::unbounded()) {
            Ok(m) => m.contains_key(&gamma.len()),
            Err(_) => false,
        }
    }

    pub fn parse(text: &str) -> Result<ControlExpr, ControlError> {
        let cs: Vec<char> = text.chars().collect();
        let mut pos = 0;
        let items = parse_items(&cs, &mut pos, false)?;
        Ok(ControlExpr { items })
    }
}

fn parse_items(cs: &[char], pos: &mut usize, nested: bool) -> Result<Vec<Item>, ControlError> {
    let err = |p: usize, m: &str| ControlError::Syntax { col: p + 1, msg: m.into() };
    let mut items = vec![];
    let skip = |pos: &mut usize| {
        while *pos < cs.len() && cs[*pos].is_whitespace() {
            *pos += 1;
        }
    };
    loop {
        skip(pos);
        if *pos >= cs.len() {
            if nested {
                return Err(err(*pos, "unclosed `[`"));
            }
            return Ok(items);
        }
        match cs[*pos] {
            ']' if nested => {
                *pos += 1;
                return Ok(items);
            }
            '[' => {
                *pos += 1;
                let inner = parse_items(cs, pos, true)?;
                if cs.get(*pos) != Some(&'^') {
                    return Err(err(*pos, "expected `^` after `]`"));
                }
                *pos += 1;
                let start = *pos;
                while *pos < cs.len() && cs[*pos].is_ascii_digit() {
                    *pos += 1;
                }
                let n: u64 =
                    cs[start..*pos].iter().collect::<String>().parse().map_err(|_| err(start, "expected a count"))?;
                items.push(Item::Repeat(inner, n));
            }
            '(' => {
                *pos += 1;
                let mut w = vec![];
                loop {
                    skip(pos);
                    match cs.get(*pos) {
                        Some(')') => {
                            *pos += 1;
                            break;
                        }
                        Some(c) if *c == 'p' || c.is_ascii_digit() => {
                            if *c == 'p' {
                                *pos += 1;
                            }
                            let start = *pos;
                            while *pos < cs.len() && cs[*pos].is_ascii_digit() {
                                *pos += 1;
                            }
                            let id: ProdId = cs[start..*pos]
                                .iter()
                                .collect::<String>()
                                .parse()
                                .map_err(|_| err(start, "expected a production id"))?;
                            w.push(id);
                        }
                        _ => return Err(err(*pos, "expected a production id or `)`")),
                    }
                }
                if cs.get(*pos) != Some(&'*') {
                    return Err(err(*pos, "expected `*`"));
                }
                *pos += 1;
                items.push(Item::Star(w));
            }
            'e' if cs[*pos..].starts_with(&['e', 'p', 's']) && items.is_empty() => {
                *pos += 3;
            }
            _ => return Err(err(*pos, "unexpected character")),
        }
    }
}

fn fmt_items(items: &[Item], f: &mut fmt::Formatter<'_>) -> fmt::Result {
    for (i, it) in items.iter().enumerate() {
        if i > 0 {
            write!(f, " ")?;
        }
        match it {
            Item::Star(w) => {
                let s: Vec<String> = w.iter().map(|p| format!("p{p}")).collect();
                write!(f, "({})*", s.join(" "))?;
            }
            Item::Repeat(inner, n) => {
                write!(f, "[")?;
                fmt_items(inner, f)?;
                write!(f, "]^{n}")?;
            }
        }
    }
    Ok(())
}

impl fmt::Display for ControlExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.items.is_empty() {
            return write!(f, "eps");
        }
        fmt_items(&self.items, f)
    }
}

/// A finite set of control expressions.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ControlSetFamily {
    pub members: Vec<ControlExpr>,
}

impl ControlSetFamily {
    fn push(&mut self, e: ControlExpr) {
        if !self.members.contains(&e) {
            self.members.push(e);
        }
    }
}

// ---------------------------------------------------------------------------
// Walking an expression with a set of states

/// A deterministic transition function driven by productions.
pub trait Walker {
    type State: Clone + Ord + Hash;
    fn step(&self, s: &Self::State, p: ProdId) -> Option<Self::State>;

    fn step_word(&self, s: &Self::State, w: &[ProdId]) -> Option<Self::State> {
        let mut cur = s.clone();
        for &p in w {
            cur = self.step(&cur, p)?;
        }
        Some(cur)
    }

    /// Groups states so that `blocked` can reject a word for a whole group.
    fn class(&self, _s: &Self::State) -> u32 {
        0
    }

    /// True only if `step_word` fails on every state of the class.
    fn blocked(&self, _class: u32, _w: &[ProdId]) -> bool {
        false
    }
}

/// How a state was reached: the control word and, per unfolded factor index,
/// the number of iterations taken.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trace {
    pub cost: u64,
    pub gamma: ControlWord,
    pub iterations: Vec<(u64, u64)>,
}

#[derive(Clone, Copy, Debug)]
pub struct WalkLimits {
    /// Bound on the total number of iterations.
    pub max_cost: Option<u64>,
    pub budget: usize,
}

impl WalkLimits {
    pub fn unbounded() -> WalkLimits {
        WalkLimits { max_cost: None, budget: 1_000_000 }
    }
}

struct Node<'a> {
    parent: Option<usize>,
    factor: u64,
    j: u64,
    word: &'a [ProdId],
}

/// Interned states, their current cheapest cost, and cached iteration chains
/// per (word, state).
struct Engine<'a, 'w, W: Walker> {
    w: &'w W,
    limits: WalkLimits,
    states: Vec<W::State>,
    index: HashMap<W::State, u32>,
    cost: Vec<u64>,
    node: Vec<Option<usize>>,
    order: Vec<u32>,
    active: Vec<u32>,
    classes: BTreeMap<u32, Vec<u32>>,
    words: BTreeMap<&'a [ProdId], usize>,
    word_list: Vec<&'a [ProdId]>,
    chains: Vec<Vec<Option<Rc<[u32]>>>>,
    nodes: Vec<Node<'a>>,
}

impl<'a, 'w, W: Walker> Engine<'a, 'w, W> {
    fn intern(&mut self, s: W::State) -> Result<u32, ControlError> {
        if let Some(&i) = self.index.get(&s) {
            return Ok(i);
        }
        if self.states.len() >= self.limits.budget {
            return Err(ControlError::BudgetExceeded(self.limits.budget));
        }
        let i = self.states.len() as u32;
        self.index.insert(s.clone(), i);
        self.states.push(s);
        self.cost.push(u64::MAX);
        self.node.push(None);
        self.order.push(u32::MAX);
        Ok(i)
    }

    fn activate(&mut self, sid: u32) {
        self.order[sid as usize] = self.active.len() as u32;
        self.active.push(sid);
        let c = self.w.class(&self.states[sid as usize]);
        self.classes.entry(c).or_default().push(sid);
    }

    /// States after 1, 2, ... iterations of `word` from `sid`, stopping when
    /// the word is not applicable, a state repeats, or the cost cap is hit.
    fn chain(&mut self, wid: usize, sid: u32) -> Result<Rc<[u32]>, ControlError> {
        if let Some(Some(c)) = self.chains[wid].get(sid as usize) {
            return Ok(c.clone());
        }
        let word = self.word_list[wid];
        let cap = self.limits.max_cost.unwrap_or(u64::MAX);
        let mut out: Vec<u32> = vec![];
        let mut seen = BTreeSet::new();
        let mut cur = sid;
        while (out.len() as u64) < cap && !word.is_empty() {
            let next = match self.w.step_word(&self.states[cur as usize], word) {
                Some(n) => n,
                None => break,
            };
            cur = self.intern(next)?;
            // without a cost cap, a repeated state ends the chain
            if self.limits.max_cost.is_none() && (cur == sid || !seen.insert(cur)) {
                break;
            }
            out.push(cur);
        }
        let c: Rc<[u32]> = out.into();
        let row = &mut self.chains[wid];
        if row.len() <= sid as usize {
            row.resize(sid as usize + 1, None);
        }
        row[sid as usize] = Some(c.clone());
        Ok(c)
    }

    fn items(&mut self, items: &'a [Item], base: u64) -> Result<bool, ControlError> {
        let mut any = false;
        let mut offset = base;
        for it in items {
            match it {
                Item::Star(word) => {
                    any |= self.star(word, offset)?;
                    offset += 1;
                }
                Item::Repeat(inner, n) => {
                    let c = items_count(inner) as u64;
                    for r in 0..*n {
                        let changed = self.items(inner, offset + r * c)?;
                        any |= changed;
                        if !changed {
                            break;
                        }
                    }
                    offset += c * n;
                }
            }
        }
        Ok(any)
    }

    fn star(&mut self, word: &'a [ProdId], factor: u64) -> Result<bool, ControlError> {
        let n = self.words.len();
        let wid = *self.words.entry(word).or_insert(n);
        if wid == self.chains.len() {
            self.chains.push(vec![]);
            self.word_list.push(word);
        }
        let mut updates: Vec<(u32, u32, u64, Option<usize>, u64)> = vec![];
        let open: Vec<(u32, usize)> =
            self.classes.iter().filter(|(&c, _)| !self.w.blocked(c, word)).map(|(&c, v)| (c, v.len())).collect();
        for (class, len) in open {
            for i in 0..len {
                let sid = self.classes[&class][i];
                let (c, node) = (self.cost[sid as usize], self.node[sid as usize]);
                let chain = self.chain(wid, sid)?;
                for (j, &nid) in chain.iter().enumerate() {
                    let nc = c + j as u64 + 1;
                    if self.limits.max_cost.is_some_and(|m| nc > m) {
                        break;
                    }
                    if self.cost[nid as usize] > nc {
                        updates.push((self.order[sid as usize], nid, nc, node, j as u64 + 1));
                    }
                }
            }
        }
        // apply in activation order so ties resolve as in a plain scan
        updates.sort_by_key(|u| u.0);
        let mut changed = false;
        for (_, nid, nc, parent, j) in updates {
            if self.cost[nid as usize] > nc {
                if self.cost[nid as usize] == u64::MAX {
                    self.activate(nid);
                }
                self.nodes.push(Node { parent, factor, j, word });
                self.cost[nid as usize] = nc;
                self.node[nid as usize] = Some(self.nodes.len() - 1);
                changed = true;
            }
        }
        Ok(changed)
    }
}

/// All states reachable from `init` by a control word of `expr`, each with
/// a cheapest trace. Repeated blocks are iterated until nothing changes.
pub fn walk<W: Walker>(
    expr: &ControlExpr,
    w: &W,
    init: Vec<W::State>,
    limits: WalkLimits,
) -> Result<BTreeMap<W::State, Trace>, ControlError> {
    let mut e = Engine {
        w,
        limits,
        states: vec![],
        index: HashMap::new(),
        cost: vec![],
        node: vec![],
        order: vec![],
        active: vec![],
        classes: BTreeMap::new(),
        words: BTreeMap::new(),
        word_list: vec![],
        chains: vec![],
        nodes: vec![],
    };
    for s in init {
        let i = e.intern(s)?;
        if e.cost[i as usize] == u64::MAX {
            e.cost[i as usize] = 0;
            e.activate(i);
        }
    }
    e.items(&expr.items, 0)?;
    let mut out = BTreeMap::new();
    for &sid in &e.active {
        let mut chain = vec![];
        let mut cur = e.node[sid as usize];
        while let Some(i) = cur {
            chain.push(i);
            cur = e.nodes[i].parent;
        }
        chain.reverse();
        let mut t = Trace { cost: e.cost[sid as usize], gamma: vec![], iterations: vec![] };
        for i in chain {
            let n = &e.nodes[i];
            for _ in 0..n.j {
                t.gamma.extend_from_slice(n.word);
            }
            t.iterations.push((n.factor, n.j));
        }
        out.insert(e.states[sid as usize].clone(), t);
    }
    Ok(out)
}

/// Walks `A^df(k)` vertices together with letter counts bounded by `max_len`.
/// Vertices are interned; the effect of a word on a vertex is cached.
pub struct CoverageWalker<'a> {
    g: &'a Grammar,
    k: usize,
    letters: &'a [Term],
    max_len: usize,
    vertices: RefCell<(Vec<Vertex>, HashMap<Vertex, u32>)>,
    words: RefCell<HashMap<Box<[ProdId]>, HashMap<u32, Option<(u32, Box<[u32]>)>>>>,
}

impl<'a> CoverageWalker<'a> {
    pub fn new(g: &'a Grammar, k: usize, letters: &'a [Term], max_len: usize) -> Self {
        CoverageWalker {
            g,
            k,
            letters,
            max_len,
            vertices: RefCell::new((vec![], HashMap::new())),
            words: RefCell::new(HashMap::new()),
        }
    }

    fn vertex_id(&self, v: Vertex) -> u32 {
        let mut t = self.vertices.borrow_mut();
        if let Some(&i) = t.1.get(&v) {
            return i;
        }
        let i = t.0.len() as u32;
        t.0.push(v.clone());
        t.1.insert(v, i);
        i
    }

    pub fn start(&self, x: Nt) -> (u32, Vec<u32>) {
        (self.vertex_id(vec![(x, 0)]), vec![0; self.letters.len()])
    }

    /// Whether the state has no pending nonterminals.
    pub fn finished(&self, s: &(u32, Vec<u32>)) -> bool {
        self.vertices.borrow().0[s.0 as usize].is_empty()
    }

    /// Target vertex and letter counts of `w` from vertex `v`.
    fn effect(&self, v: u32, w: &[ProdId]) -> Option<(u32, Box<[u32]>)> {
        if let Some(r) = self.words.borrow().get(w).and_then(|m| m.get(&v)) {
            return r.clone();
        }
        let mut cur = self.vertices.borrow().0[v as usize].clone();
        let mut delta = vec![0u32; self.letters.len()];
        let mut ok = true;
        'word: for &p in w {
            let Some(prod) = self.g.production(p) else {
                ok = false;
                break;
            };
            let Some(n) = successor(&cur, prod, self.k) else {
                ok = false;
                break;
            };
            for a in prod.terms() {
                match self.letters.iter().position(|&l| l == a) {
                    Some(i) => delta[i] += 1,
                    None => {
                        ok = false;
                        break 'word;
                    }
                }
            }
            cur = n;
        }
        let r = ok.then(|| (self.vertex_id(cur), delta.into_boxed_slice()));
        self.words.borrow_mut().entry(w.into()).or_default().insert(v, r.clone());
        r
    }
}

impl Walker for CoverageWalker<'_> {
    type State = (u32, Vec<u32>);
    fn step(&self, s: &Self::State, p: ProdId) -> Option<Self::State> {
        self.step_word(s, &[p])
    }

    fn step_word(&self, s: &Self::State, w: &[ProdId]) -> Option<Self::State> {
        let (v, delta) = self.effect(s.0, w)?;
        let c: Vec<u32> = s.1.iter().zip(delta.iter()).map(|(a, b)| a + b).collect();
        if c.iter().map(|&x| x as usize).sum::<usize>() > self.max_len {
            return None;
        }
        Some((v, c))
    }

    fn class(&self, s: &Self::State) -> u32 {
        s.0
    }

    fn blocked(&self, class: u32, w: &[ProdId]) -> bool {
        self.effect(class, w).is_none()
    }
}

/// Words of `L̂_x(Γ ∩ Γ^df(k))` with at most `max_len` letters, for a grammar
/// over the strict letter-bounded `letters`, with a witness control word each.
pub fn covered_words(
    g: &Grammar,
    x: Nt,
    expr: &ControlExpr,
    k: usize,
    letters: &[Term],
    max_len: usize,
    budget: usize,
) -> Result<BTreeMap<Vec<Term>, ControlWord>, ControlError> {
    let w = CoverageWalker::new(g, k, letters, max_len);
    let states = walk(expr, &w, vec![w.start(x)], WalkLimits { max_cost: None, budget })?;
    let mut out = BTreeMap::new();
    for (s, tr) in states {
        if w.finished(&s) {
            let c = s.1;
            let word: Vec<Term> =
                c.iter().enumerate().flat_map(|(i, &n)| std::iter::repeat_n(letters[i], n as usize)).collect();
            out.entry(word).or_insert(tr.gamma);
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Constant-size letter-bounded expressions

/// Control expression covering `L^(k)_{x,y}` for every start `x` and every
/// `y`, when these languages are included in `a*` or `a* b*`.
pub fn constant_bounded_control_set(
    g: &Grammar,
    starts: &[Nt],
    letters: &[Term],
    k: usize,
    vertex_budget: usize,
) -> Result<ControlExpr, ControlError> {
    if letters.len() > 2 {
        return Err(ControlError::Invalid("at most two letters".into()));
    }
    for &x in starts {
        if !included_in_letter_bounded(g, x, None, letters) {
            return Err(ControlError::NotLetterBounded);
        }
    }
    let a = DfAutomaton::explore(g, k, starts, vertex_budget)?;
    let n = a.vertices.len();
    let cap = 2 * n;
    let counts: BTreeMap<ProdId, Option<[u16; 2]>> = g
        .productions()
        .iter()
        .map(|p| {
            let mut c = [0u16; 2];
            for t in p.terms() {
                match letters.iter().position(|&l| l == t) {
                    Some(i) => c[i] += 1,
                    None => return (p.id, None),
                }
            }
            (p.id, Some(c))
        })
        .collect();
    let mut b0 = ControlExpr::epsilon();
    for q in 0..n {
        let mut cycles: BTreeSet<ControlWord> = BTreeSet::new();
        // BFS over (vertex, counts) from the successors of (q, 0)
        let mut parent: BTreeMap<(usize, [u16; 2]), Option<((usize, [u16; 2]), ProdId)>> = BTreeMap::new();
        let mut first: BTreeMap<(usize, [u16; 2]), ProdId> = BTreeMap::new();
        let mut queue = VecDeque::new();
        let expand = |node: (usize, [u16; 2])| -> Vec<((usize, [u16; 2]), ProdId)> {
            let mut out = vec![];
            for &(p, j) in &a.edges[node.0] {
                if let Some(c) = counts[&p] {
                    let nc = [node.1[0] + c[0], node.1[1] + c[1]];
                    if (nc[0] + nc[1]) as usize <= cap {
                        out.push(((j, nc), p));
                    }
                }
            }
            out
        };
        for (m, p) in expand((q, [0, 0])) {
            if !first.contains_key(&m) && !parent.contains_key(&m) {
                first.insert(m, p);
                parent.insert(m, None);
                queue.push_back(m);
            }
        }
        let path = |m: (usize, [u16; 2]),
                    parent: &BTreeMap<_, Option<((usize, [u16; 2]), ProdId)>>,
                    first: &BTreeMap<_, ProdId>| {
            let mut w = vec![];
            let mut cur = m;
            loop {
                match parent[&cur] {
                    Some((prev, p)) => {
                        w.push(p);
                        cur = prev;
                    }
                    None => {
                        w.push(first[&cur]);
                        break;
                    }
                }
            }
            w.reverse();
            w
        };
        while let Some(m) = queue.pop_front() {
            if m.0 == q {
                cycles.insert(path(m, &parent, &first));
            }
            for (nm, p) in expand(m) {
                if !parent.contains_key(&nm) {
                    parent.insert(nm, Some((m, p)));
                    queue.push_back(nm);
                }
            }
        }
        b0 = b0.then(&ControlExpr::concat_words(cycles));
    }
    let c = ControlExpr::concat_words(g.productions().iter().map(|p| vec![p.id])).repeat(n as u64 - 1);
    let block = c.clone().then(&b0);
    Ok(block.repeat(n as u64).then(&c).then(&b0).then(&c))
}

// ---------------------------------------------------------------------------
// Letter-bounded control sets

#[derive(Clone, Copy, Debug)]
pub struct ControlOptions {
    pub vertex_budget: usize,
    /// Also emit members with the second subderivation first.
    pub both_orders: bool,
}

impl Default for ControlOptions {
    fn default() -> Self {
        ControlOptions { vertex_budget: crate::automaton::DEFAULT_VERTEX_BUDGET, both_orders: true }
    }
}

/// Subsequence of `letters` occurring in `L_x(g)`; fails if `L_x(g)` is not
/// included in the expression.
pub fn minimize_expression(g: &Grammar, x: Nt, letters: &[Term]) -> Result<Vec<Term>, ControlError> {
    if !included_in_letter_bounded(g, x, None, letters) {
        return Err(ControlError::NotLetterBounded);
    }
    Ok(occurring_letters(g, x, letters))
}

struct Split {
    g: Grammar,
    letters: Vec<Term>,
    hat: BTreeSet<Nt>,
    check: BTreeSet<Nt>,
}

impl Split {
    fn sharp(&self) -> Grammar {
        self.g.restrict(|p| {
            self.check.contains(&p.head) || (self.hat.contains(&p.head) && p.nts().any(|y| self.hat.contains(&y)))
        })
    }

    fn is_pivot(&self, p: &crate::grammar::Production) -> bool {
        self.hat.contains(&p.head) && p.nts().all(|y| self.check.contains(&y))
    }

    fn sub_grammar(&self, pivot: ProdId) -> Grammar {
        self.g.restrict(|p| self.check.contains(&p.head) || p.id == pivot)
    }
}

enum Level {
    Base(Grammar, Vec<Term>),
    Split(Split),
}

fn level(g: &Grammar, x: Nt, letters: &[Term]) -> Result<Level, ControlError> {
    let g = reduce(g, x)?;
    let letters = minimize_expression(&g, x, letters)?;
    if letters.len() <= 2 {
        return Ok(Level::Base(g, letters));
    }
    let (hat, check) = partition_nonterminals(&g, letters[0], *letters.last().unwrap());
    Ok(Level::Split(Split { g, letters, hat, check }))
}

/// The pivots of a split level admissible for start `x`.
fn pivots(sp: &Split, x: Nt) -> Vec<ProdId> {
    let sharp = sp.sharp();
    let outer = [sp.letters[0], *sp.letters.last().unwrap()];
    sp.g.productions()
        .iter()
        .filter(|p| sp.is_pivot(p))
        .filter(|p| {
            crate::lang::context_meets(&sharp, x, p.head, &crate::lang::Dfa::universal(sharp.t_count()))
                && included_in_letter_bounded(&sharp, x, Some(p.head), &outer)
        })
        .map(|p| p.id)
        .collect()
}

/// Family of control expressions covering `L^(k)_x(g)` through depth-first
/// derivations of index `k + 1`, for `L_x(g)` included in `letters[0]* ...`.
pub fn letter_bounded_control_set(
    g: &Grammar,
    x: Nt,
    letters: &[Term],
    k: usize,
    opts: ControlOptions,
) -> Result<ControlSetFamily, ControlError> {
    let mut fam = ControlSetFamily::default();
    match level(g, x, letters)? {
        Level::Base(g, l) => fam.push(constant_bounded_control_set(&g, &[x], &l, k, opts.vertex_budget)?),
        Level::Split(sp) => {
            let sharp = sp.sharp();
            let outer = [sp.letters[0], *sp.letters.last().unwrap()];
            let gs = constant_bounded_control_set(&sharp, &[x], &outer, k + 1, opts.vertex_budget)?;
            for pid in pivots(&sp, x) {
                let p = sp.g.production(pid).unwrap().clone();
                let sub = sp.sub_grammar(pid);
                let nts: Vec<Nt> = p.nts().collect();
                let mut parts: Vec<Vec<ControlExpr>> = vec![];
                for &y in &nts {
                    match letter_bounded_control_set(&sub, y, &sp.letters, k, opts) {
                        Ok(f) => parts.push(f.members),
                        Err(ControlError::Grammar(GrammarError::EmptyLanguage(_))) => parts.push(vec![]),
                        Err(e) => return Err(e),
                    }
                }
                let head = gs.clone().then(&ControlExpr::star(vec![pid]));
                match parts.len() {
                    0 => fam.push(head),
                    1 => {
                        for a in &parts[0] {
                            fam.push(head.clone().then(a));
                        }
                    }
                    _ => {
                        for a in &parts[0] {
                            for b in &parts[1] {
                                fam.push(head.clone().then(a).then(b));
                                if opts.both_orders {
                                    fam.push(head.clone().then(b).then(a));
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(fam)
}

/// One pivot choice: the production, and whether its second nonterminal's
/// subderivation comes first.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GuideStep {
    pub prod: ProdId,
    pub second_first: bool,
}

/// Single member of the family selected by a guide: at every split level the
/// next guide step names the pivot. The guide is consumed left to right,
/// first subderivation before the second.
pub fn guided_control_set(
    g: &Grammar,
    x: Nt,
    letters: &[Term],
    k: usize,
    guide: &[GuideStep],
    opts: ControlOptions,
) -> Result<ControlExpr, ControlError> {
    let mut pos = 0;
    let e = guided(g, x, letters, k, guide, &mut pos, opts)?;
    if pos != guide.len() {
        return Err(ControlError::InvalidGuide(pos + 1));
    }
    Ok(e)
}

fn guided(
    g: &Grammar,
    x: Nt,
    letters: &[Term],
    k: usize,
    guide: &[GuideStep],
    pos: &mut usize,
    opts: ControlOptions,
) -> Result<ControlExpr, ControlError> {
    match level(g, x, letters)? {
        Level::Base(g, l) => constant_bounded_control_set(&g, &[x], &l, k, opts.vertex_budget),
        Level::Split(sp) => {
            let step = *guide.get(*pos).ok_or(ControlError::InvalidGuide(*pos + 1))?;
            if !pivots(&sp, x).contains(&step.prod) {
                return Err(ControlError::InvalidGuide(*pos + 1));
            }
            let p = sp.g.production(step.prod).unwrap().clone();
            let nts: Vec<Nt> = p.nts().collect();
            if step.second_first && nts.len() < 2 {
                return Err(ControlError::InvalidGuide(*pos + 1));
            }
            *pos += 1;
            let sharp = sp.sharp();
            let outer = [sp.letters[0], *sp.letters.last().unwrap()];
            let mut e = constant_bounded_control_set(&sharp, &[x], &outer, k + 1, opts.vertex_budget)?
                .then(&ControlExpr::star(vec![step.prod]));
            let sub = sp.sub_grammar(step.prod);
            let mut parts = vec![];
            for &y in &nts {
                parts.push(guided(&sub, y, &sp.letters, k, guide, pos, opts)?);
            }
            if step.second_first {
                parts.swap(0, 1);
            }
            for part in &parts {
                e = e.then(part);
            }
            Ok(e)
        }
    }
}

/// All guides whose guided expression exists, in the order the family lists them.
pub fn all_guides(
    g: &Grammar,
    x: Nt,
    letters: &[Term],
    opts: ControlOptions,
) -> Result<Vec<Vec<GuideStep>>, ControlError> {
    match level(g, x, letters)? {
        Level::Base(..) => Ok(vec![vec![]]),
        Level::Split(sp) => {
            let mut out = vec![];
            for pid in pivots(&sp, x) {
                let p = sp.g.production(pid).unwrap().clone();
                let sub = sp.sub_grammar(pid);
                let mut per: Vec<Vec<Vec<GuideStep>>> = vec![];
                let mut empty = false;
                for y in p.nts() {
                    match all_guides(&sub, y, &sp.letters, opts) {
                        Ok(v) => per.push(v),
                        Err(ControlError::Grammar(GrammarError::EmptyLanguage(_))) => empty = true,
                        Err(e) => return Err(e),
                    }
                }
                if empty {
                    continue;
                }
                let orders: &[bool] = if per.len() == 2 && opts.both_orders { &[false, true] } else { &[false] };
                let mut combos: Vec<Vec<GuideStep>> = vec![vec![]];
                for v in &per {
                    combos =
                        combos.iter().flat_map(|c| v.iter().map(move |s| [c.clone(), s.clone()].concat())).collect();
                }
                for c in combos {
                    for &o in orders {
                        let mut gd = vec![GuideStep { prod: pid, second_first: o }];
                        gd.extend(c.iter().copied());
                        out.push(gd);
                    }
                }
            }
            Ok(out)
        }
    }
}

// ---------------------------------------------------------------------------
// Decomposition of a derivation

/// A depth-first derivation rearranged as prefix, pivot and two subderivations.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Decomposition {
    pub pivot: ProdId,
    /// Productions outside the pivot subtree, side subtrees before the chain.
    pub prefix: ControlWord,
    pub first_part: ControlWord,
    pub second_part: ControlWord,
    /// The part of the pivot's left nonterminal is applied first.
    pub left_first: bool,
    pub index_left: usize,
    pub index_right: usize,
    /// Minimal letter-bounded expressions for the left and right subderivations.
    pub left_letters: Vec<Term>,
    pub right_letters: Vec<Term>,
    pub hat: BTreeSet<Nt>,
}

impl Decomposition {
    pub fn reassembled(&self) -> ControlWord {
        let mut w = self.prefix.clone();
        w.push(self.pivot);
        w.extend_from_slice(&self.first_part);
        w.extend_from_slice(&self.second_part);
        w
    }
}

pub fn decompose_derivation(
    g: &Grammar,
    x: Nt,
    letters: &[Term],
    gamma: &[ProdId],
) -> Result<Decomposition, ControlError> {
    let seq = apply_control_word(g, &[Sym::N(x)], gamma, None)?;
    if seq.terminal_result().is_none() {
        return Err(ControlError::Invalid("derivation does not end in a terminal word".into()));
    }
    let min = minimize_expression(g, x, letters)?;
    if min != letters {
        return Err(ControlError::NotMinimal);
    }
    if letters.len() < 3 {
        return Err(ControlError::Invalid("needs at least three letters".into()));
    }
    let (hat, check) = partition_nonterminals(g, letters[0], *letters.last().unwrap());
    let tree = seq.tree(g);
    let root = tree.roots[0].unwrap();
    let hat_child = |n: usize| -> Option<usize> {
        tree.nodes[n].children.iter().find_map(|c| match c {
            TreeChild::Node(m) if hat.contains(&g.production(tree.nodes[*m].prod).unwrap().head) => Some(*m),
            _ => None,
        })
    };
    let mut chain = vec![root];
    while let Some(m) = hat_child(*chain.last().unwrap()) {
        chain.push(m);
    }
    let pivot = *chain.last().unwrap();
    let by_step = |n: usize, t: &Tree| -> ControlWord { t.subtree(n).iter().map(|&m| t.nodes[m].prod).collect() };
    let mut prefix = vec![];
    for &a in &chain[..chain.len() - 1] {
        prefix.push(tree.nodes[a].prod);
        for c in &tree.nodes[a].children {
            if let TreeChild::Node(m) = c {
                if !chain.contains(m) {
                    prefix.extend(by_step(*m, &tree));
                }
            }
        }
    }
    let kids: Vec<Option<usize>> = tree.nodes[pivot]
        .children
        .iter()
        .filter_map(|c| match c {
            TreeChild::Node(m) => Some(Some(*m)),
            TreeChild::Open(_) => Some(None),
            TreeChild::Term(_) => None,
        })
        .collect();
    let part = |i: usize| kids.get(i).copied().flatten().map(|m| by_step(m, &tree)).unwrap_or_default();
    let (left, right) = (part(0), part(1));
    let pivot_prod = g.production(tree.nodes[pivot].prod).unwrap().clone();
    let nts: Vec<Nt> = pivot_prod.nts().collect();
    let sub = g.restrict(|p| check.contains(&p.head) || p.id == pivot_prod.id);
    let idx = |i: usize, w: &ControlWord| {
        nts.get(i)
            .map_or(0, |&y| apply_control_word(&sub, &[Sym::N(y)], w, None).map(|s| s.index()).unwrap_or(usize::MAX))
    };
    let (il, ir) = (idx(0, &left), idx(1, &right));
    let lets = |i: usize| -> Result<Vec<Term>, ControlError> {
        match nts.get(i) {
            Some(&y) => minimize_expression(&sub, y, letters),
            None => Ok(vec![]),
        }
    };
    let left_first = il <= ir;
    let (first_part, second_part) = if left_first { (left, right) } else { (right, left) };
    Ok(Decomposition {
        pivot: pivot_prod.id,
        prefix,
        first_part,
        second_part,
        left_first,
        index_left: il,
        index_right: ir,
        left_letters: lets(0)?,
        right_letters: lets(1)?,
        hat,
    })
}
