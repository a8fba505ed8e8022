//! Context-free grammars, control words, step sequences and derivation trees.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};
use std::fmt;

use thiserror::Error;

pub type ProdId = u32;
pub type Nt = u32;
pub type Term = u32;
pub type ControlWord = Vec<ProdId>;
pub type Word = Vec<Term>;

/// Default node budget for word enumeration.
pub const DEFAULT_NODE_BUDGET: usize = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Sym {
    T(Term),
    N(Nt),
}

impl Sym {
    pub fn nt(self) -> Option<Nt> {
        match self {
            Sym::N(x) => Some(x),
            Sym::T(_) => None,
        }
    }
    pub fn term(self) -> Option<Term> {
        match self {
            Sym::T(a) => Some(a),
            Sym::N(_) => None,
        }
    }
    pub fn is_nt(self) -> bool {
        matches!(self, Sym::N(_))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Production {
    pub id: ProdId,
    pub head: Nt,
    pub body: Vec<Sym>,
}

impl Production {
    pub fn nts(&self) -> impl Iterator<Item = Nt> + '_ {
        self.body.iter().filter_map(|s| s.nt())
    }
    pub fn terms(&self) -> impl Iterator<Item = Term> + '_ {
        self.body.iter().filter_map(|s| s.term())
    }
    pub fn nt_count(&self) -> usize {
        self.nts().count()
    }
    /// |(X, w)| = |w| + 1
    pub fn size(&self) -> usize {
        self.body.len() + 1
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GrammarError {
    #[error("production {0} violates the body shape (at most two terminals and two nonterminals)")]
    Shape(ProdId),
    #[error("duplicate production id {0}")]
    DuplicateId(ProdId),
    #[error("unknown production id {0}")]
    UnknownProduction(ProdId),
    #[error("unknown symbol `{0}`")]
    UnknownSymbol(String),
    #[error("the language of `{0}` is empty")]
    EmptyLanguage(String),
    #[error("control word not applicable at step {0}")]
    NonApplicable(usize),
    #[error("enumeration budget of {0} nodes exceeded")]
    BudgetExceeded(usize),
    #[error("step sequence is not depth-first")]
    NotDepthFirst,
    #[error("{0}")]
    Invalid(String),
}

/// A grammar over interned nonterminal and terminal names.
///
/// Productions carry stable integer ids and are kept sorted by id.
/// Symbol tables may contain names not used by any production; use
/// [`Grammar::nonterminals_in_use`] for the effective set.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Grammar {
    nt_names: Vec<String>,
    t_names: Vec<String>,
    nt_index: HashMap<String, Nt>,
    t_index: HashMap<String, Term>,
    prods: Vec<Production>,
    pos: HashMap<ProdId, usize>,
}

impl Grammar {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a grammar from `(id, head, body)` triples given by name.
    /// Every head is a nonterminal; body names that are never heads are terminals.
    pub fn from_rules(rules: &[(ProdId, &str, &[&str])]) -> Result<Self, GrammarError> {
        let mut g = Grammar::new();
        for (_, h, _) in rules {
            g.nt(h);
        }
        for (id, h, body) in rules {
            let head = g.nt(h);
            let body = body
                .iter()
                .map(|s| match g.find_nt(s) {
                    Some(x) => Sym::N(x),
                    None => Sym::T(g.t(s)),
                })
                .collect();
            g.add_production(*id, head, body)?;
        }
        Ok(g)
    }

    /// Interns a nonterminal name.
    pub fn nt(&mut self, name: &str) -> Nt {
        if let Some(&x) = self.nt_index.get(name) {
            return x;
        }
        let x = self.nt_names.len() as Nt;
        self.nt_names.push(name.to_string());
        self.nt_index.insert(name.to_string(), x);
        x
    }

    /// Interns a terminal name.
    pub fn t(&mut self, name: &str) -> Term {
        if let Some(&a) = self.t_index.get(name) {
            return a;
        }
        let a = self.t_names.len() as Term;
        self.t_names.push(name.to_string());
        self.t_index.insert(name.to_string(), a);
        a
    }

    pub fn find_nt(&self, name: &str) -> Option<Nt> {
        self.nt_index.get(name).copied()
    }
    pub fn find_t(&self, name: &str) -> Option<Term> {
        self.t_index.get(name).copied()
    }
    pub fn nt_name(&self, x: Nt) -> &str {
        &self.nt_names[x as usize]
    }
    pub fn t_name(&self, a: Term) -> &str {
        &self.t_names[a as usize]
    }
    pub fn nt_count(&self) -> usize {
        self.nt_names.len()
    }
    pub fn t_count(&self) -> usize {
        self.t_names.len()
    }
    pub fn sym_name(&self, s: Sym) -> &str {
        match s {
            Sym::N(x) => self.nt_name(x),
            Sym::T(a) => self.t_name(a),
        }
    }

    pub fn add_production(&mut self, id: ProdId, head: Nt, body: Vec<Sym>) -> Result<ProdId, GrammarError> {
        let nts = body.iter().filter(|s| s.is_nt()).count();
        if nts > 2 || body.len() - nts > 2 {
            return Err(GrammarError::Shape(id));
        }
        if self.pos.contains_key(&id) {
            return Err(GrammarError::DuplicateId(id));
        }
        assert!((head as usize) < self.nt_names.len(), "head not interned");
        let p = Production { id, head, body };
        if self.prods.last().map_or(true, |q| q.id < id) {
            self.pos.insert(id, self.prods.len());
            self.prods.push(p);
        } else {
            let at = self.prods.partition_point(|q| q.id < id);
            self.prods.insert(at, p);
            self.reindex();
        }
        Ok(id)
    }

    fn reindex(&mut self) {
        self.pos = self.prods.iter().enumerate().map(|(i, p)| (p.id, i)).collect();
    }

    /// Next unused production id.
    pub fn fresh_id(&self) -> ProdId {
        self.prods.last().map_or(0, |p| p.id + 1)
    }

    pub fn productions(&self) -> &[Production] {
        &self.prods
    }
    pub fn production(&self, id: ProdId) -> Option<&Production> {
        self.pos.get(&id).map(|&i| &self.prods[i])
    }
    pub fn productions_of(&self, x: Nt) -> impl Iterator<Item = &Production> {
        self.prods.iter().filter(move |p| p.head == x)
    }
    pub fn size(&self) -> usize {
        self.prods.iter().map(Production::size).sum()
    }
    pub fn is_2nf(&self) -> bool {
        self.prods.iter().all(|p| p.body.len() <= 2)
    }

    /// Nonterminals occurring in some production.
    pub fn nonterminals_in_use(&self) -> BTreeSet<Nt> {
        let mut s = BTreeSet::new();
        for p in &self.prods {
            s.insert(p.head);
            s.extend(p.nts());
        }
        s
    }

    pub fn terminals_in_use(&self) -> BTreeSet<Term> {
        self.prods.iter().flat_map(|p| p.terms().collect::<Vec<_>>()).collect()
    }

    /// Same symbol tables, only the productions satisfying `keep`.
    pub fn restrict(&self, keep: impl Fn(&Production) -> bool) -> Grammar {
        let mut g = Grammar {
            nt_names: self.nt_names.clone(),
            t_names: self.t_names.clone(),
            nt_index: self.nt_index.clone(),
            t_index: self.t_index.clone(),
            prods: self.prods.iter().filter(|p| keep(p)).cloned().collect(),
            pos: HashMap::new(),
        };
        g.reindex();
        g
    }

    /// Nonterminals deriving at least one terminal word.
    pub fn productive(&self) -> BTreeSet<Nt> {
        let mut prod = BTreeSet::new();
        loop {
            let mut changed = false;
            for p in &self.prods {
                if !prod.contains(&p.head) && p.nts().all(|y| prod.contains(&y)) {
                    prod.insert(p.head);
                    changed = true;
                }
            }
            if !changed {
                return prod;
            }
        }
    }

    /// Minimal terminal length derivable from each nonterminal (`None` if unproductive).
    pub fn min_lengths(&self) -> Vec<Option<usize>> {
        let mut m: Vec<Option<usize>> = vec![None; self.nt_count()];
        loop {
            let mut changed = false;
            for p in &self.prods {
                let mut total = 0usize;
                let mut ok = true;
                for s in &p.body {
                    match s {
                        Sym::T(_) => total += 1,
                        Sym::N(y) => match m[*y as usize] {
                            Some(l) => total += l,
                            None => {
                                ok = false;
                                break;
                            }
                        },
                    }
                }
                if ok && m[p.head as usize].map_or(true, |l| total < l) {
                    m[p.head as usize] = Some(total);
                    changed = true;
                }
            }
            if !changed {
                return m;
            }
        }
    }

    pub fn word_string(&self, w: &[Term]) -> String {
        w.iter().map(|&a| self.t_name(a)).collect::<Vec<_>>().join(" ")
    }

    pub fn form_string(&self, w: &[Sym]) -> String {
        if w.is_empty() {
            return "eps".into();
        }
        w.iter().map(|&s| self.sym_name(s)).collect::<Vec<_>>().join(" ")
    }

    pub fn control_string(&self, gamma: &[ProdId]) -> String {
        gamma.iter().map(|p| format!("p{p}")).collect::<Vec<_>>().join(" ")
    }
}

impl fmt::Display for Grammar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in &self.prods {
            write!(f, "prod {}: {} ->", p.id, self.nt_name(p.head))?;
            if p.body.is_empty() {
                write!(f, " eps")?;
            }
            for s in &p.body {
                write!(f, " {}", self.sym_name(*s))?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// Parses the grammar text format: `prod <id>: <NT> -> <sym> ...` lines and an
/// optional `axiom: <NT>` line. Returns the grammar and the axiom if present.
pub fn parse_grammar(text: &str) -> Result<(Grammar, Option<Nt>), GrammarError> {
    let mut rules: Vec<(ProdId, String, Vec<String>)> = Vec::new();
    let mut axiom = None;
    for (ln, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("axiom:") {
            axiom = Some(rest.trim().to_string());
            continue;
        }
        let bad = || GrammarError::Invalid(format!("line {}: cannot parse `{}`", ln + 1, raw));
        let rest = line.strip_prefix("prod").ok_or_else(bad)?;
        let (id, rule) = rest.split_once(':').ok_or_else(bad)?;
        let id: ProdId = id.trim().trim_start_matches('p').parse().map_err(|_| bad())?;
        let (head, body) = rule.split_once("->").ok_or_else(bad)?;
        let head = head.trim();
        if head.is_empty() || head.contains(char::is_whitespace) {
            return Err(bad());
        }
        let body: Vec<String> =
            body.split_whitespace().filter(|s| *s != "eps" && *s != "ε").map(String::from).collect();
        rules.push((id, head.to_string(), body));
    }
    let mut g = Grammar::new();
    for (_, h, _) in &rules {
        g.nt(h);
    }
    if let Some(a) = &axiom {
        g.nt(a);
    }
    for (id, h, body) in &rules {
        let head = g.nt(h);
        let body = body
            .iter()
            .map(|s| match g.find_nt(s) {
                Some(x) => Sym::N(x),
                None => Sym::T(g.t(s)),
            })
            .collect();
        g.add_production(*id, head, body)?;
    }
    let ax = axiom.map(|a| g.find_nt(&a).unwrap());
    Ok((g, ax))
}

// ---------------------------------------------------------------------------
// Normal form and reduction

/// Result of [`normalize_2nf`].
#[derive(Clone, Debug)]
pub struct Normalized {
    pub grammar: Grammar,
    /// Original production id to the chain of new ids replacing it.
    pub forward: BTreeMap<ProdId, Vec<ProdId>>,
    /// New production id to the original one.
    pub origin: BTreeMap<ProdId, ProdId>,
    /// Auxiliary nonterminals introduced by the transformation.
    pub fresh: BTreeSet<Nt>,
}

impl Normalized {
    /// Whether `id` is the first production of its chain (its head is an original nonterminal).
    pub fn is_chain_head(&self, id: ProdId) -> bool {
        self.forward[&self.origin[&id]][0] == id
    }

    /// Maps a control word of the normalized grammar back to the original one.
    pub fn lift_control_word(&self, gamma: &[ProdId]) -> ControlWord {
        gamma.iter().filter(|p| self.is_chain_head(**p)).map(|p| self.origin[p]).collect()
    }

    /// Rewrites a derivation tree of the normalized grammar into one of the original grammar.
    pub fn lift_tree(&self, t: &Tree) -> Tree {
        let mut out = Tree::default();
        let roots = t.roots.iter().map(|r| r.map(|n| self.lift_node(t, n, &mut out))).collect();
        out.roots = roots;
        out
    }

    fn lift_node(&self, t: &Tree, n: usize, out: &mut Tree) -> usize {
        let node = &t.nodes[n];
        let mut children = Vec::new();
        self.flatten_children(t, n, out, &mut children);
        out.nodes.push(TreeNode { prod: self.origin[&node.prod], step: node.step, children });
        out.nodes.len() - 1
    }

    fn flatten_children(&self, t: &Tree, n: usize, out: &mut Tree, acc: &mut Vec<TreeChild>) {
        for c in &t.nodes[n].children {
            match c {
                TreeChild::Node(m) if !self.is_chain_head(t.nodes[*m].prod) => self.flatten_children(t, *m, out, acc),
                TreeChild::Node(m) => {
                    let id = self.lift_node(t, *m, out);
                    acc.push(TreeChild::Node(id));
                }
                other => acc.push(other.clone()),
            }
        }
    }
}

/// Transforms `g` into 2NF: every body has length at most two.
///
/// A body `s1 s2 ... sn` with `n > 2` becomes `X -> s1 N1`, `N1 -> s2 N2`, ...,
/// `N(n-2) -> s(n-1) sn`. The first production of each chain keeps the original
/// id; later ones get fresh ids above the original maximum. Grammars already in
/// 2NF are returned unchanged.
pub fn normalize_2nf(g: &Grammar) -> Normalized {
    let mut out = g.restrict(|p| p.body.len() <= 2);
    let mut forward = BTreeMap::new();
    let mut origin = BTreeMap::new();
    let mut fresh = BTreeSet::new();
    for p in g.productions() {
        if p.body.len() <= 2 {
            forward.insert(p.id, vec![p.id]);
            origin.insert(p.id, p.id);
        }
    }
    let mut next_id = g.fresh_id();
    let mut counter = 0usize;
    for p in g.productions() {
        if p.body.len() <= 2 {
            continue;
        }
        let n = p.body.len();
        let mut chain = Vec::new();
        let mut head = p.head;
        for i in 0..n - 1 {
            let id = if i == 0 { p.id } else { next_id };
            if i > 0 {
                next_id += 1;
            }
            let body = if i == n - 2 {
                vec![p.body[i], p.body[i + 1]]
            } else {
                let name = loop {
                    counter += 1;
                    let cand = format!("{}~{}", g.nt_name(p.head), counter);
                    if out.find_nt(&cand).is_none() {
                        break cand;
                    }
                };
                let aux = out.nt(&name);
                fresh.insert(aux);
                let b = vec![p.body[i], Sym::N(aux)];
                out.add_production(id, head, b).expect("chain production");
                chain.push(id);
                origin.insert(id, p.id);
                head = aux;
                continue;
            };
            out.add_production(id, head, body).expect("chain production");
            chain.push(id);
            origin.insert(id, p.id);
        }
        forward.insert(p.id, chain);
    }
    Normalized { grammar: out, forward, origin, fresh }
}

/// Removes nonterminals that are unproductive or unreachable from `x`.
pub fn reduce(g: &Grammar, x: Nt) -> Result<Grammar, GrammarError> {
    let productive = g.productive();
    if !productive.contains(&x) {
        return Err(GrammarError::EmptyLanguage(g.nt_name(x).to_string()));
    }
    let usable: Vec<&Production> =
        g.productions().iter().filter(|p| p.nts().all(|y| productive.contains(&y))).collect();
    let mut reach = BTreeSet::from([x]);
    let mut queue = VecDeque::from([x]);
    while let Some(y) = queue.pop_front() {
        for p in usable.iter().filter(|p| p.head == y) {
            for z in p.nts() {
                if reach.insert(z) {
                    queue.push_back(z);
                }
            }
        }
    }
    Ok(g.restrict(|p| reach.contains(&p.head) && p.nts().all(|y| productive.contains(&y))))
}

// ---------------------------------------------------------------------------
// Ranked sentential forms

/// A sentential form whose symbols carry ranks. Terminal ranks are irrelevant.
pub type RankedForm = Vec<(Sym, u32)>;

pub fn ranked(w: &[Sym]) -> RankedForm {
    w.iter().map(|&s| (s, 0)).collect()
}

/// Maximal rank among the nonterminals of `w`.
pub fn max_rank(w: &RankedForm) -> Option<u32> {
    w.iter().filter(|(s, _)| s.is_nt()).map(|(_, r)| *r).max()
}

/// Position rewritten by the depth-first policy for production `p`: the leftmost
/// occurrence of its head among the nonterminals of maximal rank.
pub fn df_position(w: &RankedForm, p: &Production) -> Option<usize> {
    let m = max_rank(w)?;
    w.iter().position(|&(s, r)| s == Sym::N(p.head) && r == m)
}

/// Ranked step at position `j`: the body symbols get rank one above the maximal
/// rank of the remaining nonterminals (rank 0 if none remain).
pub fn ranked_step(w: &RankedForm, j: usize, p: &Production) -> RankedForm {
    let m = w.iter().enumerate().filter(|(i, (s, _))| *i != j && s.is_nt()).map(|(_, (_, r))| *r).max();
    let r = m.map_or(0, |m| m + 1);
    let mut out = Vec::with_capacity(w.len() + p.body.len());
    out.extend_from_slice(&w[..j]);
    out.extend(p.body.iter().map(|&s| (s, r)));
    out.extend_from_slice(&w[j + 1..]);
    out
}

pub fn nt_len(w: &[Sym]) -> usize {
    w.iter().filter(|s| s.is_nt()).count()
}

// ---------------------------------------------------------------------------
// Step sequences

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Step {
    pub prod: ProdId,
    pub pos: usize,
}

/// A step sequence `w0 =(p1,j1)=> w1 ... => wn`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StepSequence {
    pub words: Vec<Vec<Sym>>,
    pub steps: Vec<Step>,
}

impl StepSequence {
    pub fn origin(&self) -> &[Sym] {
        &self.words[0]
    }
    pub fn result(&self) -> &[Sym] {
        self.words.last().unwrap()
    }
    pub fn control_word(&self) -> ControlWord {
        self.steps.iter().map(|s| s.prod).collect()
    }
    /// Maximal number of nonterminals along the sequence.
    pub fn index(&self) -> usize {
        self.words.iter().map(|w| nt_len(w)).max().unwrap_or(0)
    }
    pub fn terminal_result(&self) -> Option<Word> {
        self.result().iter().map(|s| s.term()).collect()
    }

    /// Depth-first check through birth indices: each step rewrites a
    /// nonterminal occurrence created no earlier than any other pending one.
    pub fn is_depth_first(&self, g: &Grammar) -> bool {
        let mut birth: Vec<usize> = vec![0; self.words[0].len()];
        for (i, st) in self.steps.iter().enumerate() {
            let w = &self.words[i];
            let best = w.iter().zip(&birth).filter(|(s, _)| s.is_nt()).map(|(_, b)| *b).max();
            if Some(birth[st.pos]) != best {
                return false;
            }
            let blen = g.production(st.prod).map_or(0, |p| p.body.len());
            birth.splice(st.pos..st.pos + 1, std::iter::repeat_n(i + 1, blen));
        }
        true
    }

    /// Depth-first check through ranks.
    pub fn is_depth_first_ranked(&self, g: &Grammar) -> bool {
        let mut w = ranked(&self.words[0]);
        for st in &self.steps {
            let p = match g.production(st.prod) {
                Some(p) => p,
                None => return false,
            };
            if Some(w[st.pos].1) != max_rank(&w) {
                return false;
            }
            w = ranked_step(&w, st.pos, p);
        }
        true
    }

    /// Derivation tree; one root slot per start symbol (None for terminals).
    pub fn tree(&self, g: &Grammar) -> Tree {
        #[derive(Clone, Copy)]
        enum Slot {
            Root(usize),
            Child(usize, usize),
            Term,
        }
        let start = &self.words[0];
        let mut tree = Tree { nodes: Vec::new(), roots: vec![None; start.len()] };
        let mut slots: Vec<Slot> =
            start.iter().enumerate().map(|(i, s)| if s.is_nt() { Slot::Root(i) } else { Slot::Term }).collect();
        for (i, st) in self.steps.iter().enumerate() {
            let p = g.production(st.prod).expect("production");
            let n = tree.nodes.len();
            let children = p
                .body
                .iter()
                .map(|s| match s {
                    Sym::T(a) => TreeChild::Term(*a),
                    Sym::N(y) => TreeChild::Open(*y),
                })
                .collect();
            tree.nodes.push(TreeNode { prod: p.id, step: i, children });
            match slots[st.pos] {
                Slot::Root(r) => tree.roots[r] = Some(n),
                Slot::Child(m, c) => tree.nodes[m].children[c] = TreeChild::Node(n),
                Slot::Term => unreachable!("rewriting a terminal"),
            }
            let new: Vec<Slot> = p
                .body
                .iter()
                .enumerate()
                .map(|(c, s)| if s.is_nt() { Slot::Child(n, c) } else { Slot::Term })
                .collect();
            slots.splice(st.pos..st.pos + 1, new);
        }
        tree
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TreeChild {
    Term(Term),
    Node(usize),
    Open(Nt),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TreeNode {
    pub prod: ProdId,
    pub step: usize,
    pub children: Vec<TreeChild>,
}

/// A derivation forest; `roots[i]` is the node expanding start position `i`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
    pub roots: Vec<Option<usize>>,
}

impl Tree {
    /// Node ids of the subtree at `n`, in step order.
    pub fn subtree(&self, n: usize) -> Vec<usize> {
        let mut out = vec![];
        let mut stack = vec![n];
        while let Some(m) = stack.pop() {
            out.push(m);
            for c in &self.nodes[m].children {
                if let TreeChild::Node(k) = c {
                    stack.push(*k);
                }
            }
        }
        out.sort_by_key(|&m| self.nodes[m].step);
        out
    }

    /// Productions of the subtree at `n` in pre-order (left child first).
    pub fn preorder(&self, n: usize) -> ControlWord {
        let mut out = vec![];
        self.preorder_into(n, &mut out);
        out
    }

    fn preorder_into(&self, n: usize, out: &mut ControlWord) {
        out.push(self.nodes[n].prod);
        for c in &self.nodes[n].children {
            if let TreeChild::Node(k) = c {
                self.preorder_into(*k, out);
            }
        }
    }

    /// Terminal yield of the subtree at `n`; open leaves are skipped.
    pub fn yield_of(&self, n: usize) -> Word {
        let mut out = vec![];
        self.yield_into(n, &mut out);
        out
    }

    fn yield_into(&self, n: usize, out: &mut Word) {
        for c in &self.nodes[n].children {
            match c {
                TreeChild::Term(a) => out.push(*a),
                TreeChild::Node(k) => self.yield_into(*k, out),
                TreeChild::Open(_) => {}
            }
        }
    }

    /// Parent of every node.
    pub fn parents(&self) -> Vec<Option<usize>> {
        let mut par = vec![None; self.nodes.len()];
        for (i, n) in self.nodes.iter().enumerate() {
            for c in &n.children {
                if let TreeChild::Node(k) = c {
                    par[*k] = Some(i);
                }
            }
        }
        par
    }
}

/// Applies a control word to `start`. With `positions` the given positions are
/// used; otherwise the depth-first policy picks the leftmost occurrence of the
/// head among nonterminals of maximal rank.
pub fn apply_control_word(
    g: &Grammar,
    start: &[Sym],
    gamma: &[ProdId],
    positions: Option<&[usize]>,
) -> Result<StepSequence, GrammarError> {
    let mut w = ranked(start);
    let mut words = vec![start.to_vec()];
    let mut steps = Vec::with_capacity(gamma.len());
    for (i, &id) in gamma.iter().enumerate() {
        let p = g.production(id).ok_or(GrammarError::NonApplicable(i + 1))?;
        let j = match positions {
            Some(ps) => {
                let j = *ps.get(i).ok_or(GrammarError::NonApplicable(i + 1))?;
                if w.get(j).map(|e| e.0) != Some(Sym::N(p.head)) {
                    return Err(GrammarError::NonApplicable(i + 1));
                }
                j
            }
            None => df_position(&w, p).ok_or(GrammarError::NonApplicable(i + 1))?,
        };
        w = ranked_step(&w, j, p);
        words.push(w.iter().map(|e| e.0).collect());
        steps.push(Step { prod: id, pos: j });
    }
    Ok(StepSequence { words, steps })
}

/// Splits a depth-first step sequence starting from a form with two nonterminals
/// into the control words of the two subderivations.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DfSplit {
    pub first: ControlWord,
    pub second: ControlWord,
    /// `true` when the subderivation of the left nonterminal is done first.
    pub left_first: bool,
    pub index_first: usize,
    pub index_second: usize,
}

pub fn split_df_sequence(g: &Grammar, seq: &StepSequence) -> Result<DfSplit, GrammarError> {
    if !seq.is_depth_first(g) {
        return Err(GrammarError::NotDepthFirst);
    }
    let start = seq.origin();
    let nts: Vec<usize> = (0..start.len()).filter(|&i| start[i].is_nt()).collect();
    if nts.len() != 2 {
        return Err(GrammarError::Invalid("origin must hold exactly two nonterminals".into()));
    }
    let tree = seq.tree(g);
    let part = |r: Option<usize>| -> ControlWord {
        r.map(|n| tree.subtree(n).iter().map(|&m| tree.nodes[m].prod).collect()).unwrap_or_default()
    };
    let (l, r) = (tree.roots[nts[0]], tree.roots[nts[1]]);
    let left = part(l);
    let right = part(r);
    let step = |n: Option<usize>| n.map(|n| tree.nodes[n].step);
    let left_first = match (step(l), step(r)) {
        (Some(a), Some(b)) => a < b,
        (Some(_), None) => true,
        _ => false,
    };
    let idx = |root: usize, gamma: &ControlWord| -> usize {
        apply_control_word(g, &[start[root]], gamma, None).map(|s| s.index()).unwrap_or(0)
    };
    let (first, second, fi, si) = if left_first {
        (left.clone(), right.clone(), nts[0], nts[1])
    } else {
        (right.clone(), left.clone(), nts[1], nts[0])
    };
    Ok(DfSplit { index_first: idx(fi, &first), index_second: idx(si, &second), first, second, left_first })
}

// ---------------------------------------------------------------------------
// Enumeration

#[derive(Clone, Copy, Debug)]
pub struct EnumOptions {
    pub max_len: usize,
    /// Index bound; `None` for unrestricted derivations.
    pub k: Option<usize>,
    /// Search over depth-first derivations instead of the index-level fixpoint.
    pub df: bool,
    pub budget: usize,
}

impl EnumOptions {
    pub fn new(max_len: usize) -> Self {
        EnumOptions { max_len, k: None, df: false, budget: DEFAULT_NODE_BUDGET }
    }
    pub fn index(mut self, k: usize) -> Self {
        self.k = Some(k);
        self
    }
    pub fn depth_first(mut self) -> Self {
        self.df = true;
        self
    }
}

/// Words `u v` with `x =>* u y v` (or terminal words when `y` is `None`),
/// up to `max_len` terminals, optionally through `k`-index derivations.
pub fn enumerate_words(g: &Grammar, x: Nt, y: Option<Nt>, opts: EnumOptions) -> Result<BTreeSet<Word>, GrammarError> {
    match y {
        None if opts.df => enumerate_df(g, x, None, opts),
        None => enumerate_fixpoint(g, x, opts),
        Some(_) if opts.df => enumerate_df(g, x, y, opts),
        Some(y) => {
            let (cg, cx) = context_grammar(g, x, y);
            enumerate_fixpoint(&cg, cx, opts)
        }
    }
}

/// Grammar with marked copies of every nonterminal such that
/// `L(marked x) = { u v | x =>* u y v }`; the marked `y` derives the empty word.
pub fn context_grammar(g: &Grammar, x: Nt, y: Nt) -> (Grammar, Nt) {
    let mut cg = g.clone();
    let n = g.nt_count();
    let mut mark = Vec::with_capacity(n);
    for i in 0..n {
        let mut name = format!("{}^", g.nt_name(i as Nt));
        while cg.find_nt(&name).is_some() {
            name.push('^');
        }
        mark.push(cg.nt(&name));
    }
    let mut id = g.fresh_id();
    for p in g.productions() {
        let nts: Vec<usize> = (0..p.body.len()).filter(|&i| p.body[i].is_nt()).collect();
        for &i in &nts {
            let mut body = p.body.clone();
            body[i] = Sym::N(mark[p.body[i].nt().unwrap() as usize]);
            cg.add_production(id, mark[p.head as usize], body).unwrap();
            id += 1;
        }
    }
    cg.add_production(id, mark[y as usize], vec![]).unwrap();
    (cg, mark[x as usize])
}

fn concat_bounded(
    a: &HashSet<Word>,
    b: &HashSet<Word>,
    pre: &[Term],
    mid: &[Term],
    post: &[Term],
    max_len: usize,
    out: &mut Vec<Word>,
) {
    let fixed = pre.len() + mid.len() + post.len();
    if fixed > max_len {
        return;
    }
    for u in a {
        if u.len() + fixed > max_len {
            continue;
        }
        for v in b {
            if u.len() + v.len() + fixed > max_len {
                continue;
            }
            let mut w = Vec::with_capacity(u.len() + v.len() + fixed);
            w.extend_from_slice(pre);
            w.extend_from_slice(u);
            w.extend_from_slice(mid);
            w.extend_from_slice(v);
            w.extend_from_slice(post);
            out.push(w);
        }
    }
}

fn split_body(body: &[Sym]) -> (Vec<Vec<Term>>, Vec<Nt>) {
    let mut segs = vec![vec![]];
    let mut nts = vec![];
    for s in body {
        match s {
            Sym::T(a) => segs.last_mut().unwrap().push(*a),
            Sym::N(y) => {
                nts.push(*y);
                segs.push(vec![]);
            }
        }
    }
    (segs, nts)
}

fn enumerate_fixpoint(g: &Grammar, x: Nt, opts: EnumOptions) -> Result<BTreeSet<Word>, GrammarError> {
    let n = g.nt_count();
    let levels = opts.k.unwrap_or(1);
    let indexed = opts.k.is_some();
    let mut total = 0usize;
    let mut sets: Vec<Vec<HashSet<Word>>> = vec![vec![HashSet::new(); n]; levels + 1];
    let shapes: Vec<(Nt, Vec<Vec<Term>>, Vec<Nt>)> = g
        .productions()
        .iter()
        .map(|p| {
            let (s, y) = split_body(&p.body);
            (p.head, s, y)
        })
        .collect();
    for j in 1..=levels {
        loop {
            let mut fresh: Vec<(Nt, Word)> = Vec::new();
            for (head, segs, ys) in &shapes {
                let mut out = Vec::new();
                match ys.len() {
                    0 => {
                        if segs[0].len() <= opts.max_len {
                            out.push(segs[0].clone());
                        }
                    }
                    1 => {
                        let only: HashSet<Word> = HashSet::from([vec![]]);
                        concat_bounded(
                            &sets[j][ys[0] as usize],
                            &only,
                            &segs[0],
                            &segs[1],
                            &[],
                            opts.max_len,
                            &mut out,
                        );
                    }
                    _ => {
                        let (a, b) = (ys[0] as usize, ys[1] as usize);
                        if indexed {
                            let lower = &sets[j - 1];
                            concat_bounded(
                                &lower[a],
                                &sets[j][b],
                                &segs[0],
                                &segs[1],
                                &segs[2],
                                opts.max_len,
                                &mut out,
                            );
                            concat_bounded(
                                &sets[j][a],
                                &lower[b],
                                &segs[0],
                                &segs[1],
                                &segs[2],
                                opts.max_len,
                                &mut out,
                            );
                        } else {
                            concat_bounded(
                                &sets[j][a],
                                &sets[j][b],
                                &segs[0],
                                &segs[1],
                                &segs[2],
                                opts.max_len,
                                &mut out,
                            );
                        }
                    }
                }
                for w in out {
                    if !sets[j][*head as usize].contains(&w) {
                        fresh.push((*head, w));
                    }
                }
            }
            let mut changed = false;
            for (h, w) in fresh {
                if sets[j][h as usize].insert(w) {
                    changed = true;
                    total += 1;
                    if total > opts.budget {
                        return Err(GrammarError::BudgetExceeded(opts.budget));
                    }
                }
            }
            if !changed {
                break;
            }
        }
        if j < levels {
            // level j+1 includes level j
            let lower = sets[j].clone();
            sets[j + 1] = lower;
        }
    }
    Ok(sets[levels][x as usize].iter().cloned().collect())
}

fn enumerate_df(g: &Grammar, x: Nt, y: Option<Nt>, opts: EnumOptions) -> Result<BTreeSet<Word>, GrammarError> {
    let minlen = g.min_lengths();
    // with a target y, the pending y itself contributes nothing
    let need = |w: &RankedForm| -> Option<usize> {
        let mut t = 0usize;
        let mut ys = 0;
        for (s, _) in w {
            match s {
                Sym::T(_) => t += 1,
                Sym::N(z) => {
                    if Some(*z) == y && ys == 0 {
                        ys += 1;
                        continue;
                    }
                    t += minlen[*z as usize]?;
                }
            }
        }
        Some(t)
    };
    let start: RankedForm = vec![(Sym::N(x), 0)];
    let mut seen: HashSet<RankedForm> = HashSet::from([start.clone()]);
    let mut queue = VecDeque::from([start]);
    let mut out = BTreeSet::new();
    while let Some(w) = queue.pop_front() {
        let nts: Vec<Nt> = w.iter().filter_map(|(s, _)| s.nt()).collect();
        match y {
            None if nts.is_empty() => {
                out.insert(w.iter().filter_map(|(s, _)| s.term()).collect());
                continue;
            }
            Some(yy) if nts.len() == 1 && nts[0] == yy => {
                out.insert(w.iter().filter_map(|(s, _)| s.term()).collect());
            }
            _ => {}
        }
        let m = match max_rank(&w) {
            Some(m) => m,
            None => continue,
        };
        let mut heads_done = BTreeSet::new();
        for (j, (s, r)) in w.iter().enumerate() {
            let z = match (s, *r == m) {
                (Sym::N(z), true) => *z,
                _ => continue,
            };
            if !heads_done.insert(z) {
                continue;
            }
            for p in g.productions_of(z) {
                let nw = ranked_step(&w, j, p);
                if let Some(k) = opts.k {
                    if nw.iter().filter(|e| e.0.is_nt()).count() > k {
                        continue;
                    }
                }
                match need(&nw) {
                    Some(l) if l <= opts.max_len => {}
                    _ => continue,
                }
                if seen.insert(nw.clone()) {
                    if seen.len() > opts.budget {
                        return Err(GrammarError::BudgetExceeded(opts.budget));
                    }
                    queue.push_back(nw);
                }
            }
        }
    }
    Ok(out)
}

/// All depth-first control words of at most `max_steps` productions deriving a
/// terminal word from `x` (or `u y v` when `y` is given) with index at most `k`.
pub fn df_control_words(g: &Grammar, x: Nt, y: Option<Nt>, k: usize, max_steps: usize) -> BTreeMap<ControlWord, Word> {
    let mut out = BTreeMap::new();
    let mut stack: Vec<(RankedForm, ControlWord)> = vec![(vec![(Sym::N(x), 0)], vec![])];
    while let Some((w, gamma)) = stack.pop() {
        let nts: Vec<Nt> = w.iter().filter_map(|(s, _)| s.nt()).collect();
        let done = match y {
            None => nts.is_empty(),
            Some(yy) => nts.len() == 1 && nts[0] == yy,
        };
        if done {
            out.insert(gamma.clone(), w.iter().filter_map(|(s, _)| s.term()).collect());
        }
        if gamma.len() == max_steps || nts.is_empty() {
            continue;
        }
        for p in g.productions() {
            if let Some(j) = df_position(&w, p) {
                let nw = ranked_step(&w, j, p);
                if nt_len(&nw.iter().map(|e| e.0).collect::<Vec<_>>()) <= k {
                    let mut ng = gamma.clone();
                    ng.push(p.id);
                    stack.push((nw, ng));
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn running() -> Grammar {
        Grammar::from_rules(&[
            (1, "X1", &["t1", "X2"]),
            (2, "X2", &["call[t2]", "X1", "ret[t2]", "X3"]),
            (3, "X3", &["t3"]),
            (4, "X1", &["t4"]),
        ])
        .unwrap()
    }

    #[test]
    fn sizes_and_shape() {
        let g = running();
        assert_eq!(g.size(), 3 + 5 + 2 + 2);
        assert!(!g.is_2nf());
        let mut h = Grammar::new();
        let x = h.nt("X");
        let a = h.t("a");
        assert_eq!(h.add_production(0, x, vec![Sym::T(a); 3]), Err(GrammarError::Shape(0)));
    }

    #[test]
    fn normalize_splits_long_body() {
        let g = Grammar::from_rules(&[(1, "X", &["a", "Y", "b", "Z"]), (2, "Y", &["c"]), (3, "Z", &["d"])]).unwrap();
        let n = normalize_2nf(&g);
        assert!(n.grammar.is_2nf());
        assert_eq!(n.forward[&1].len(), 3);
        assert_eq!(n.fresh.len(), 2);
        let text = n.grammar.to_string();
        assert!(text.contains("prod 1: X -> a X~1"), "{text}");
        assert!(text.contains("X~1 -> Y X~2"), "{text}");
        assert!(text.contains("X~2 -> b Z"), "{text}");
        let x = g.find_nt("X").unwrap();
        let o = enumerate_words(&g, x, None, EnumOptions::new(8)).unwrap();
        let m = enumerate_words(&n.grammar, x, None, EnumOptions::new(8)).unwrap();
        assert_eq!(o, m);
        let again = normalize_2nf(&n.grammar);
        assert_eq!(again.grammar, n.grammar);
    }

    #[test]
    fn reduce_drops_useless() {
        let g = Grammar::from_rules(&[
            (1, "X", &["a", "Y"]),
            (2, "X", &["Z"]),
            (3, "Y", &["b"]),
            (4, "Z", &["Z", "a"]),
            (5, "W", &["b"]),
        ])
        .unwrap();
        let x = g.find_nt("X").unwrap();
        let r = reduce(&g, x).unwrap();
        let used: Vec<&str> = r.nonterminals_in_use().iter().map(|&n| r.nt_name(n)).collect();
        assert_eq!(used, vec!["X", "Y"]);
        let z = g.find_nt("Z").unwrap();
        assert!(matches!(reduce(&g, z), Err(GrammarError::EmptyLanguage(_))));
    }

    fn rf(g: &Grammar, s: &str) -> Vec<Sym> {
        s.split_whitespace().map(|n| g.find_nt(n).map(Sym::N).unwrap_or_else(|| Sym::T(g.find_t(n).unwrap()))).collect()
    }

    #[test]
    fn ranked_examples() {
        let g = Grammar::from_rules(&[(1, "X", &["Y", "Y"]), (2, "Y", &["Z"]), (3, "Z", &["a"])]).unwrap();
        let x = rf(&g, "X");
        let good = apply_control_word(&g, &x, &[1, 2, 3], Some(&[0, 1, 1])).unwrap();
        assert!(good.is_depth_first(&g));
        assert!(good.is_depth_first_ranked(&g));
        assert_eq!(good.result(), rf(&g, "Y a").as_slice());
        let bad = apply_control_word(&g, &x, &[1, 2, 2], Some(&[0, 1, 0])).unwrap();
        assert_eq!(bad.result(), rf(&g, "Z Z").as_slice());
        assert!(!bad.is_depth_first(&g));
        assert!(!bad.is_depth_first_ranked(&g));
    }

    #[test]
    fn running_example_derivation() {
        let g = running();
        let x1 = rf(&g, "X1");
        let seq = apply_control_word(&g, &x1, &[1, 2, 4, 3], None).unwrap();
        assert_eq!(g.form_string(seq.result()), "t1 call[t2] t4 ret[t2] t3");
        assert_eq!(seq.index(), 2);
        assert!(seq.is_depth_first(&g));
        assert_eq!(apply_control_word(&g, &x1, &[1, 3], None).unwrap_err(), GrammarError::NonApplicable(2));
        let words = enumerate_words(&g, g.find_nt("X1").unwrap(), None, EnumOptions::new(12).index(1)).unwrap();
        assert_eq!(words.len(), 1);
    }

    #[test]
    fn split_two_subderivations() {
        let g = Grammar::from_rules(&[(1, "Y", &["a", "Y"]), (2, "Y", &["b"]), (3, "Z", &["c"])]).unwrap();
        let start = rf(&g, "Y Z");
        let seq = apply_control_word(&g, &start, &[3, 1, 2], None).unwrap();
        let s = split_df_sequence(&g, &seq).unwrap();
        assert_eq!(s.first, vec![3]);
        assert_eq!(s.second, vec![1, 2]);
        assert!(!s.left_first);
        let mixed = apply_control_word(&g, &start, &[1, 3, 2], Some(&[0, 2, 1])).unwrap();
        assert_eq!(split_df_sequence(&g, &mixed), Err(GrammarError::NotDepthFirst));
    }

    #[test]
    fn parse_round_trip() {
        let g = running();
        let (h, ax) = parse_grammar(&format!("{g}axiom: X1\n")).unwrap();
        assert_eq!(h.to_string(), g.to_string());
        assert_eq!(ax, h.find_nt("X1"));
    }
}
