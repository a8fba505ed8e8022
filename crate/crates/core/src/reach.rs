//! Bounded reachability for octagonal programs: the pipeline through the
//! intersection and letter-bounded grammars and their control sets, a flat
//! checker over the resulting bounded control expressions, and a brute-force
//! oracle over words.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use crate::automaton::DfAutomaton;
use crate::bounded::{bowtie_grammar, intersect_grammar, BoundedError, BoundedExpr, Bowtie};
use crate::control::{
    letter_bounded_control_set, ControlError, ControlExpr, ControlOptions, CoverageWalker, WalkLimits,
};
use crate::grammar::{
    apply_control_word, enumerate_words, normalize_2nf, reduce, ControlWord, EnumOptions, Grammar, GrammarError, Nt,
    ProdId, Sym, Term, Tree,
};
use crate::octagon::{OctError, OctRelation, VarSet};
use crate::semantics::{ProgramLabels, ResolvedLabels, SemError};

#[derive(Debug, Error)]
pub enum ReachError {
    #[error(transparent)]
    Grammar(#[from] GrammarError),
    #[error(transparent)]
    Bounded(#[from] BoundedError),
    #[error(transparent)]
    Semantics(#[from] SemError),
    #[error(transparent)]
    Octagon(#[from] OctError),
    #[error("{0}")]
    Invalid(String),
}

/// An octagonal program: grammar, axiom and statement relations.
#[derive(Clone, Debug)]
pub struct Program {
    pub grammar: Grammar,
    pub axiom: Nt,
    pub labels: ProgramLabels,
}

impl Program {
    /// `|P| = |G| + Σ |ρ|`, counting one per relation atom.
    pub fn size(&self) -> usize {
        self.grammar.size()
            + self.labels.rels.values().map(OctRelation::size).sum::<usize>()
            + self.labels.frames.values().map(OctRelation::size).sum::<usize>()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct AnalysisConfig {
    /// Index used for the control sets; default derived from the grammar.
    #[serde(rename = "K")]
    pub k_override: Option<usize>,
    /// Upper limit for the default index.
    pub k_cap: usize,
    /// Bound on the sum of iteration counts in flat checking.
    pub iteration_bound: u64,
    /// Maximal word length for the oracle.
    pub word_bound: usize,
    pub node_budget: usize,
    pub vertex_budget: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            k_override: None,
            k_cap: 3,
            iteration_bound: 12,
            word_bound: 30,
            node_budget: crate::grammar::DEFAULT_NODE_BUDGET,
            vertex_budget: crate::automaton::DEFAULT_VERTEX_BUDGET,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Status {
    Reachable,
    UnreachableUpToBound,
    Unknown,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Reachable => "REACHABLE",
            Status::UnreachableUpToBound => "UNREACHABLE_UP_TO_BOUND",
            Status::Unknown => "UNKNOWN",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Witness {
    /// Control word over the program grammar (empty for oracle witnesses).
    pub control_word: Vec<ProdId>,
    /// `(factor, iterations)` pairs of the selected iteration vector.
    pub iterations: Vec<(u64, u64)>,
    pub word: Vec<String>,
    /// `⟦w⟧` restricted by the query.
    pub relation: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Sizes {
    pub program: usize,
    pub intersection: usize,
    pub intersection_nonterminals: usize,
    pub bowtie: usize,
    pub letters: usize,
    pub automaton_vertices: Option<usize>,
    pub family: usize,
    pub family_factors: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Bounds {
    #[serde(rename = "K")]
    pub big_k: Option<usize>,
    pub k: Option<usize>,
    pub iter: u64,
    pub word: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Verdict {
    pub verdict: Status,
    pub witness: Option<Witness>,
    pub bounds: Bounds,
    pub sizes: Sizes,
    pub diagnostics: Vec<String>,
    pub timings_ms: BTreeMap<String, u64>,
}

impl Verdict {
    fn new(cfg: &AnalysisConfig) -> Verdict {
        Verdict {
            verdict: Status::UnreachableUpToBound,
            witness: None,
            bounds: Bounds { big_k: None, k: None, iter: cfg.iteration_bound, word: cfg.word_bound },
            sizes: Sizes::default(),
            diagnostics: vec![],
            timings_ms: BTreeMap::new(),
        }
    }
}

struct Timer(Instant);

impl Timer {
    fn start() -> Timer {
        Timer(Instant::now())
    }

    fn stop(&mut self, v: &mut Verdict, stage: &str) {
        v.timings_ms.insert(stage.into(), self.0.elapsed().as_millis() as u64);
        self.0 = Instant::now();
    }
}

fn restricted(r: OctRelation, query: Option<&OctRelation>) -> Result<OctRelation, ReachError> {
    Ok(match query {
        Some(q) => r.intersect(q)?,
        None => r,
    })
}

/// Default index: `2 + |Ξ^∩|` capped.
pub fn default_index(inter_nonterminals: usize, cap: usize) -> usize {
    (2 + inter_nonterminals).min(cap).max(1)
}

/// Decides `⟦P⟧_b ∩ query ≠ ∅` up to the configured bounds.
pub fn reach_fo(
    p: &Program,
    b: &BoundedExpr,
    query: Option<&OctRelation>,
    cfg: &AnalysisConfig,
) -> Result<Verdict, ReachError> {
    pipeline(p, p, b, query, cfg, None, &|t| t)
}

/// As [`reach_fo`] over `k`-index derivations only, through the
/// index-bounding grammar.
pub fn reach_fo_k(
    p: &Program,
    b: &BoundedExpr,
    k: usize,
    query: Option<&OctRelation>,
    cfg: &AnalysisConfig,
) -> Result<Verdict, ReachError> {
    if k == 0 {
        return Err(ReachError::Invalid("index must be at least 1".into()));
    }
    let ib = index_bounding_grammar(&p.grammar, k);
    let axiom = ib.level(p.axiom, k).ok_or_else(|| ReachError::Invalid("axiom has no productions".into()))?;
    let pk = Program { grammar: ib.grammar.clone(), axiom, labels: p.labels.clone() };
    let mut c = *cfg;
    c.k_override = Some(k);
    let mut v = pipeline(&pk, p, b, query, &c, Some(k), &|t| map_tree(&t, |id| ib.origin[&id]))?;
    v.sizes.program = p.size();
    v.diagnostics.push(format!("index-bounding grammar size {}", ib.grammar.size()));
    Ok(v)
}

fn map_tree(t: &Tree, f: impl Fn(ProdId) -> ProdId) -> Tree {
    let mut out = t.clone();
    for n in &mut out.nodes {
        n.prod = f(n.prod);
    }
    out
}

/// Runs the analysis on `p`; witness trees are lifted by `lift` to `target`
/// and verified there.
fn pipeline(
    p: &Program,
    target: &Program,
    b: &BoundedExpr,
    query: Option<&OctRelation>,
    cfg: &AnalysisConfig,
    fixed_k: Option<usize>,
    lift: &dyn Fn(Tree) -> Tree,
) -> Result<Verdict, ReachError> {
    let mut v = Verdict::new(cfg);
    v.bounds.k = fixed_k;
    v.sizes.program = p.size();
    let mut timer = Timer::start();
    let labels = target.labels.resolve(&target.grammar)?;
    let norm = normalize_2nf(&p.grammar);
    let inter = match intersect_grammar(&norm.grammar, p.axiom, b) {
        Ok(i) => i,
        Err(BoundedError::EmptyIntersection) => {
            v.diagnostics.push("L(G) ∩ b is empty".into());
            return Ok(v);
        }
        Err(e) => return Err(e.into()),
    };
    timer.stop(&mut v, "intersect");
    v.sizes.intersection = inter.grammar.size();
    v.sizes.intersection_nonterminals = inter.grammar.nonterminals_in_use().len();
    if inter.axioms.is_empty() {
        v.diagnostics.push("L(G) ∩ b is empty".into());
        return Ok(v);
    }
    let bt = bowtie_grammar(&inter, b);
    timer.stop(&mut v, "bowtie");
    v.sizes.bowtie = bt.grammar.size();
    v.sizes.letters = bt.letters.len();
    let k = cfg.k_override.unwrap_or_else(|| default_index(v.sizes.intersection_nonterminals, cfg.k_cap));
    v.bounds.big_k = Some(k);
    v.sizes.automaton_vertices =
        DfAutomaton::explore(&inter.grammar, k + 1, &inter.axioms, cfg.vertex_budget).ok().map(|a| a.vertices.len());
    timer.stop(&mut v, "automaton");
    let mut members: Vec<(Nt, ControlExpr)> = vec![];
    let opts = ControlOptions { vertex_budget: cfg.vertex_budget, both_orders: true };
    for &ax in &inter.axioms {
        match letter_bounded_control_set(&bt.grammar, ax, &bt.letters, k, opts) {
            Ok(f) => members.extend(f.members.into_iter().map(|e| (ax, e))),
            Err(ControlError::Grammar(GrammarError::EmptyLanguage(_))) => {}
            Err(ControlError::Automaton(e)) => {
                v.verdict = Status::Unknown;
                v.diagnostics.push(format!("controlset: {e}"));
                return Ok(v);
            }
            Err(e) => return Err(ReachError::Invalid(format!("controlset: {e}"))),
        }
    }
    timer.stop(&mut v, "controlset");
    v.sizes.family = members.len();
    v.sizes.family_factors = Some(members.iter().map(|(_, e)| e.factor_count()).max().unwrap_or(0).to_string());
    let mut budget_hit = vec![false; members.len()];
    let mut checked = vec![BTreeSet::new(); members.len()];
    // every member is tried at a bound before the bound is doubled
    let mut bound = cfg.iteration_bound.min(1);
    loop {
        for (i, (ax, e)) in members.iter().enumerate() {
            if budget_hit[i] {
                continue;
            }
            match flat_check(&bt, *ax, e, k + 1, &p.labels, query, bound, cfg.node_budget, &mut checked[i])? {
                FlatResult::Found(hit) => {
                    let seq = apply_control_word(&inter.grammar, &[Sym::N(*ax)], &hit.gamma, None)?;
                    let tree = map_tree(&seq.tree(&inter.grammar), |id| inter.origin[&id]);
                    let tree = lift(norm.lift_tree(&tree));
                    let root = tree.roots[0].ok_or_else(|| ReachError::Invalid("empty witness".into()))?;
                    let gamma = tree.preorder(root);
                    let w = verify_witness(target, &labels, &gamma, query)?;
                    let rel = restricted(labels.word_semantics(&w)?, query)?;
                    v.verdict = Status::Reachable;
                    v.witness = Some(Witness {
                        control_word: gamma,
                        iterations: hit.iterations,
                        word: w.iter().map(|&a| target.grammar.t_name(a).to_string()).collect(),
                        relation: rel.pretty(),
                    });
                    v.diagnostics.push(format!("witness from family member {}", i + 1));
                    timer.stop(&mut v, "flat_check");
                    return Ok(v);
                }
                FlatResult::Exhausted => {}
                FlatResult::Budget => budget_hit[i] = true,
            }
        }
        if bound >= cfg.iteration_bound {
            break;
        }
        bound = (bound * 2).min(cfg.iteration_bound);
    }
    timer.stop(&mut v, "flat_check");
    if budget_hit.iter().any(|&b| b) {
        v.verdict = Status::Unknown;
        v.diagnostics.push(format!("flat_check: node budget {} exceeded", cfg.node_budget));
    } else {
        v.diagnostics.push(format!(
            "no witness with K = {k}, iteration bound {} over {} family members",
            cfg.iteration_bound,
            members.len()
        ));
    }
    Ok(v)
}

/// Replays `gamma` on the program grammar and checks that its word has a
/// nonempty relation.
pub fn verify_witness(
    p: &Program,
    labels: &ResolvedLabels,
    gamma: &[ProdId],
    query: Option<&OctRelation>,
) -> Result<Vec<Term>, ReachError> {
    let seq = apply_control_word(&p.grammar, &[Sym::N(p.axiom)], gamma, None)?;
    let w = seq.terminal_result().ok_or_else(|| ReachError::Invalid("witness derivation is incomplete".into()))?;
    let r = restricted(labels.controlword_semantics(&p.grammar, p.axiom, gamma)?, query)?;
    let rw = restricted(labels.word_semantics(&w)?, query)?;
    if r.is_empty() || rw.is_empty() {
        return Err(ReachError::Invalid("witness relation is empty".into()));
    }
    Ok(w)
}

pub struct FlatHit {
    /// Control word over the bowtie grammar, which shares production ids
    /// with the intersection grammar.
    pub gamma: ControlWord,
    pub iterations: Vec<(u64, u64)>,
    pub word: Vec<String>,
    pub relation: OctRelation,
}

pub enum FlatResult {
    Found(FlatHit),
    Exhausted,
    Budget,
}

/// Searches iteration vectors of `expr` with sum at most `bound` for a
/// depth-first, `k`-index derivation from `x` in the bowtie grammar whose word
/// has a nonempty relation. Partial derivations are identified by their
/// `A^df(k)` vertex and letter counts, which determine the final word. Letter
/// counts in `checked` are skipped and failed ones are added to it. The
/// cheapest vector wins, then the smallest control word.
#[allow(clippy::too_many_arguments)]
pub fn flat_check(
    bt: &Bowtie,
    x: Nt,
    expr: &ControlExpr,
    k: usize,
    labels: &ProgramLabels,
    query: Option<&OctRelation>,
    bound: u64,
    budget: usize,
    checked: &mut BTreeSet<Vec<u32>>,
) -> Result<FlatResult, ReachError> {
    let w = CoverageWalker::new(&bt.grammar, k, &bt.letters, usize::MAX);
    let limits = WalkLimits { max_cost: Some(bound), budget };
    let states = match crate::control::walk(expr, &w, vec![w.start(x)], limits) {
        Ok(s) => s,
        Err(ControlError::BudgetExceeded(_)) => return Ok(FlatResult::Budget),
        Err(e) => return Err(ReachError::Invalid(e.to_string())),
    };
    let mut done: Vec<(u64, ControlWord, Vec<(u64, u64)>, Vec<u32>)> = states
        .into_iter()
        .filter(|(s, _)| w.finished(s) && !checked.contains(&s.1))
        .map(|((_, c), t)| (t.cost, t.gamma, t.iterations, c))
        .collect();
    done.sort();
    for (_, gamma, iterations, counts) in done {
        let letters: Vec<Term> =
            counts.iter().enumerate().flat_map(|(i, &n)| std::iter::repeat_n(bt.letters[i], n as usize)).collect();
        let word = bt.h_word(&letters);
        let r = restricted(labels.word_semantics(&word)?, query)?;
        if !r.is_empty() {
            return Ok(FlatResult::Found(FlatHit { gamma, iterations, word, relation: r }));
        }
        checked.insert(counts);
    }
    Ok(FlatResult::Exhausted)
}

/// Ground truth by enumeration: words of `L_I(G) ∩ b` up to the word bound,
/// shortest and then lexicographically first.
pub fn brute_oracle(
    p: &Program,
    b: &BoundedExpr,
    query: Option<&OctRelation>,
    cfg: &AnalysisConfig,
) -> Result<Verdict, ReachError> {
    let mut v = Verdict::new(cfg);
    let mut timer = Timer::start();
    let labels = p.labels.resolve(&p.grammar)?;
    let words = match oracle_words(p, b, cfg) {
        Ok(w) => w,
        Err(GrammarError::BudgetExceeded(n)) => {
            v.verdict = Status::Unknown;
            v.diagnostics.push(format!("oracle: budget {n} exceeded"));
            return Ok(v);
        }
        Err(e) => return Err(e.into()),
    };
    for w in &words {
        let r = restricted(labels.word_semantics(w)?, query)?;
        if !r.is_empty() {
            v.verdict = Status::Reachable;
            v.witness = Some(Witness {
                control_word: vec![],
                iterations: vec![],
                word: w.iter().map(|&a| p.grammar.t_name(a).to_string()).collect(),
                relation: r.pretty(),
            });
            break;
        }
    }
    if v.witness.is_none() {
        v.diagnostics.push(format!("{} words up to length {} checked", words.len(), cfg.word_bound));
    }
    timer.stop(&mut v, "oracle");
    Ok(v)
}

/// Words of `L_I(G) ∩ b` up to the word bound, by length then lexicographically
/// on symbol names.
pub fn oracle_words(p: &Program, b: &BoundedExpr, cfg: &AnalysisConfig) -> Result<Vec<Vec<Term>>, GrammarError> {
    let g = match reduce(&p.grammar, p.axiom) {
        Ok(g) => g,
        Err(GrammarError::EmptyLanguage(_)) => return Ok(vec![]),
        Err(e) => return Err(e),
    };
    let mut opts = EnumOptions::new(cfg.word_bound);
    opts.budget = cfg.node_budget;
    let words = enumerate_words(&g, p.axiom, None, opts)?;
    let mut out: Vec<(usize, Vec<&str>, Vec<Term>)> = words
        .into_iter()
        .map(|w| {
            let names: Vec<&str> = w.iter().map(|&a| p.grammar.t_name(a)).collect();
            (w.len(), names, w.clone())
        })
        .filter(|(_, names, _)| b.contains(names))
        .collect();
    out.sort();
    Ok(out.into_iter().map(|(_, _, w)| w).collect())
}

// ---------------------------------------------------------------------------
// Index-bounding grammar

/// `G_k` with nonterminals `X@j` (`1 <= j <= k`) such that `L_{X@k}` is the
/// set of words with a derivation of index at most `k` from `X`.
#[derive(Clone, Debug)]
pub struct IndexBounding {
    pub grammar: Grammar,
    /// Production of `G_k` to the production of `G` it copies.
    pub origin: BTreeMap<ProdId, ProdId>,
    names: Vec<String>,
}

impl IndexBounding {
    pub fn level(&self, x: Nt, j: usize) -> Option<Nt> {
        self.grammar.find_nt(&format!("{}@{}", self.names[x as usize], j))
    }
}

pub fn index_bounding_grammar(g: &Grammar, k: usize) -> IndexBounding {
    let mut out = Grammar::new();
    let mut origin = BTreeMap::new();
    let names: Vec<String> = (0..g.nt_count()).map(|x| g.nt_name(x as Nt).to_string()).collect();
    for j in 1..=k {
        for n in &names {
            out.nt(&format!("{n}@{j}"));
        }
    }
    for a in 0..g.t_count() {
        out.t(g.t_name(a as Term));
    }
    let at = |x: Nt, j: usize| -> Nt { ((j - 1) * names.len()) as Nt + x };
    let mut id: ProdId = 1;
    for j in 1..=k {
        for p in g.productions() {
            let nts: Vec<Nt> = p.nts().collect();
            let levels: Vec<Vec<usize>> = match nts.len() {
                0 | 1 => vec![vec![j; nts.len()]],
                _ if j >= 2 => vec![vec![j - 1, j], vec![j, j - 1]],
                _ => vec![],
            };
            for lv in levels {
                let mut i = 0;
                let body: Vec<Sym> = p
                    .body
                    .iter()
                    .map(|s| match s {
                        Sym::T(a) => Sym::T(*a),
                        Sym::N(y) => {
                            i += 1;
                            Sym::N(at(*y, lv[i - 1]))
                        }
                    })
                    .collect();
                out.add_production(id, at(p.head, j), body).expect("fresh id");
                origin.insert(id, p.id);
                id += 1;
            }
        }
    }
    IndexBounding { grammar: out, origin, names }
}

// ---------------------------------------------------------------------------
// PILP encoding

/// `m` unknowns, `n` constraints `Σ_i a[j][i] k_i + c[j] <= 0`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Pilp {
    pub m: usize,
    /// `rows[j] = (a_1j, ..., a_mj, c_j)`.
    pub rows: Vec<Vec<i64>>,
}

impl Pilp {
    pub fn n(&self) -> usize {
        self.rows.len()
    }

    /// `pilp m n` followed by `n` rows of `m + 1` integers.
    pub fn parse(text: &str) -> Result<Pilp, ReachError> {
        let mut lines = text.lines().map(|l| l.split('#').next().unwrap().trim()).filter(|l| !l.is_empty());
        let head: Vec<&str> = lines.next().unwrap_or("").split_whitespace().collect();
        let bad = |m: &str| ReachError::Invalid(format!("pilp: {m}"));
        if head.len() != 3 || head[0] != "pilp" {
            return Err(bad("expected header `pilp m n`"));
        }
        let m: usize = head[1].parse().map_err(|_| bad("bad m"))?;
        let n: usize = head[2].parse().map_err(|_| bad("bad n"))?;
        let mut rows = vec![];
        for l in lines {
            let row = l
                .split_whitespace()
                .map(str::parse)
                .collect::<Result<Vec<i64>, _>>()
                .map_err(|_| bad("bad integer"))?;
            if row.len() != m + 1 {
                return Err(bad(&format!("row {} has {} entries, expected {}", rows.len() + 1, row.len(), m + 1)));
            }
            rows.push(row);
        }
        if rows.len() != n {
            return Err(bad(&format!("expected {n} rows, found {}", rows.len())));
        }
        Ok(Pilp { m, rows })
    }

    pub fn render(&self) -> String {
        let mut s = format!("pilp {} {}\n", self.m, self.n());
        for r in &self.rows {
            s += &r.iter().map(i64::to_string).collect::<Vec<_>>().join(" ");
            s.push('\n');
        }
        s
    }

    /// Brute force over `0 <= k_i <= max`.
    pub fn feasible(&self, max: i64) -> Option<Vec<i64>> {
        let mut k = vec![0i64; self.m];
        loop {
            let ok =
                self.rows.iter().all(|r| r[..self.m].iter().zip(&k).map(|(a, x)| a * x).sum::<i64>() + r[self.m] <= 0);
            if ok {
                return Some(k);
            }
            let mut i = 0;
            loop {
                if i == self.m {
                    return None;
                }
                if k[i] < max {
                    k[i] += 1;
                    break;
                }
                k[i] = 0;
                i += 1;
            }
        }
    }
}

fn pilp_vars(n: usize) -> Vec<String> {
    if n == 0 {
        vec!["x".into()]
    } else {
        (1..=n).map(|j| format!("x{j}")).collect()
    }
}

/// Program and bounded expression reaching a nonempty relation iff the
/// system has a solution with `k_i >= 0`.
pub fn pilp_encode(inst: &Pilp) -> Result<(Program, BoundedExpr), ReachError> {
    let m = inst.m;
    let n = inst.n();
    let names = pilp_vars(n);
    let vars = VarSet::new(&names)?;
    let mut g = Grammar::new();
    let xs: Vec<Nt> = (0..=m + 1).map(|i| g.nt(&format!("X{i}"))).collect();
    let tau: Vec<Term> = (0..=m + 1).map(|i| g.t(&format!("tau{i}"))).collect();
    let lam: Vec<Term> = (0..=m).map(|i| g.t(&format!("lambda{i}"))).collect();
    let mut id = 1;
    for i in 0..=m {
        g.add_production(id, xs[i], vec![Sym::T(tau[i]), Sym::N(xs[i + 1])])?;
        id += 1;
        if i >= 1 {
            g.add_production(id, xs[i], vec![Sym::T(lam[i]), Sym::N(xs[i])])?;
            id += 1;
        }
    }
    g.add_production(id, xs[m + 1], vec![Sym::T(tau[m + 1])])?;
    let mut labels = ProgramLabels::new(vars.clone());
    let shift = |d: &dyn Fn(usize) -> i64| -> String {
        names
            .iter()
            .enumerate()
            .map(|(j, v)| {
                let c = if n == 0 { 0 } else { d(j) };
                match c.cmp(&0) {
                    std::cmp::Ordering::Equal => format!("{v}' = {v}"),
                    std::cmp::Ordering::Greater => format!("{v}' = {v} + {c}"),
                    std::cmp::Ordering::Less => format!("{v}' = {v} - {}", -c),
                }
            })
            .collect::<Vec<_>>()
            .join(", ")
    };
    let mut put = |name: String, text: String| -> Result<(), ReachError> {
        labels.rels.insert(name, OctRelation::parse(&text, &vars)?);
        Ok(())
    };
    put("tau0".into(), names.iter().map(|v| format!("{v}' = 0")).collect::<Vec<_>>().join(", "))?;
    for i in 1..=m {
        let text = if i == m { shift(&|j| inst.rows[j][m]) } else { shift(&|_| 0) };
        put(format!("tau{i}"), text)?;
        put(format!("lambda{i}"), shift(&|j| inst.rows[j][i - 1]))?;
    }
    if m == 0 {
        // no unknowns: the constant shift happens right after the reset
        put(
            "tau0".into(),
            names
                .iter()
                .enumerate()
                .map(|(j, v)| format!("{v}' = {}", if n == 0 { 0 } else { inst.rows[j][0] }))
                .collect::<Vec<_>>()
                .join(", "),
        )?;
    }
    put(format!("tau{}", m + 1), names.iter().map(|v| format!("{v} <= 0")).collect::<Vec<_>>().join(", "))?;
    let mut words = vec![vec!["tau0".to_string()]];
    for i in 1..=m {
        words.push(vec![format!("lambda{i}")]);
        words.push(vec![format!("tau{i}")]);
    }
    words.push(vec![format!("tau{}", m + 1)]);
    let b = BoundedExpr::new(words)?;
    Ok((Program { grammar: g, axiom: xs[0], labels }, b))
}

// ---------------------------------------------------------------------------
// Optimality family

/// `X_i -> X_{i-1} X_{i-1}` for `1 <= i <= k` and `X_0 -> a`; production `i`
/// rewrites `X_i`.
pub fn optimality_family(k: usize) -> Grammar {
    let mut g = Grammar::new();
    let xs: Vec<Nt> = (0..=k).map(|i| g.nt(&format!("X{i}"))).collect();
    let a = g.t("a");
    g.add_production(0, xs[0], vec![Sym::T(a)]).unwrap();
    for i in 1..=k {
        g.add_production(i as ProdId, xs[i], vec![Sym::N(xs[i - 1]), Sym::N(xs[i - 1])]).unwrap();
    }
    g
}
