//! One PASS/FAIL line per acceptance criterion, with its tolerance and time
//! limit. Values are checked against enumeration and brute-force oracles.

mod common;

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use num_bigint::BigInt;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use flatoct::automaton::{accepts, DfAutomaton};
use flatoct::bounded::{bowtie_grammar, intersect_grammar, BoundedExpr, Bowtie};
use flatoct::control::{
    constant_bounded_control_set, covered_words, letter_bounded_control_set, ControlError, ControlOptions,
};
use flatoct::fop;
use flatoct::grammar::{
    apply_control_word, df_control_words, enumerate_words, ControlWord, EnumOptions, Grammar, GrammarError, Nt, Sym,
    Term,
};
use flatoct::octagon::{Atom, OctRelation, VarSet};
use flatoct::reach::{
    brute_oracle, optimality_family, pilp_encode, reach_fo, verify_witness, AnalysisConfig, Pilp, Status,
};

const RUNNING: &str = include_str!("../../../programs/running.fop");
const RUNNING_REACH: &str = include_str!("../../../programs/running_reach.fop");
const BUDGET: usize = 5_000_000;

fn strings(g: &Grammar, ws: impl IntoIterator<Item = Vec<Term>>) -> BTreeSet<String> {
    ws.into_iter().map(|w| g.word_string(&w)).collect()
}

fn nested() -> (Grammar, Nt, BoundedExpr) {
    let g = Grammar::from_rules(&[
        (1, "X", &["a", "Y"]),
        (2, "Y", &["Z", "b"]),
        (3, "Z", &["c", "T"]),
        (4, "Z", &[]),
        (5, "T", &["X", "d"]),
    ])
    .unwrap();
    let x = g.find_nt("X").unwrap();
    (g, x, BoundedExpr::parse("(a c)* (a b)* (d b)*").unwrap())
}

fn nested_bowtie() -> (Bowtie, Vec<Nt>) {
    let (g, x, b) = nested();
    let inter = intersect_grammar(&g, x, &b).unwrap();
    (bowtie_grammar(&inter, &b), inter.axioms)
}

fn running_word(n: usize) -> Vec<&'static str> {
    let mut w = vec![];
    for _ in 0..n {
        w.extend(["t1", "call[t2]"]);
    }
    w.push("t4");
    for _ in 0..n {
        w.extend(["ret[t2]", "t3"]);
    }
    w
}

fn c1() -> Result<String, String> {
    let f = fop::parse(RUNNING).unwrap();
    let labels = &f.program.labels;
    let vs = labels.vars.clone();
    let hidden = [vs.column("z").unwrap(), vs.column("x'").unwrap()];
    for n in 0..=4i64 {
        let r = labels.word_semantics(&running_word(n as usize)).map_err(|e| e.to_string())?;
        let stated = OctRelation::parse(&format!("x = {n}, z' = {}", 2 * n), &vs).unwrap();
        if !r.forget(&hidden).equal(&stated).unwrap() {
            return Err(format!("n = {n}: got {}", r.pretty()));
        }
        let full = if n == 0 {
            stated.clone()
        } else {
            OctRelation::parse(&format!("x = {n}, x' = {n}, z' = {}", 2 * n), &vs).unwrap()
        };
        if !r.equal(&full).unwrap() {
            return Err(format!("n = {n}: full relation {}", r.pretty()));
        }
    }
    let one = labels.word_semantics(&running_word(1)).unwrap().pretty();
    Ok(format!("exact on x, z' for n = 0..4; full relation of n = 1 is `{one}`"))
}

fn c2() -> Result<String, String> {
    let cfg = AnalysisConfig { iteration_bound: 10, word_bound: 30, ..Default::default() };
    let f = fop::parse(RUNNING).unwrap();
    let v = reach_fo(&f.program, &f.bound, f.query.as_ref(), &cfg).map_err(|e| e.to_string())?;
    if v.verdict == Status::Reachable {
        return Err(format!("P(n) < n reported reachable: {:?}", v.witness));
    }
    let o = brute_oracle(&f.program, &f.bound, f.query.as_ref(), &cfg).map_err(|e| e.to_string())?;
    if o.verdict == Status::Reachable {
        return Err("oracle found P(n) < n".into());
    }
    let f = fop::parse(RUNNING_REACH).unwrap();
    let v = reach_fo(&f.program, &f.bound, f.query.as_ref(), &cfg).map_err(|e| e.to_string())?;
    let w = v.witness.ok_or("z' = 2x, x = 2 not reachable")?;
    let labels = f.program.labels.resolve(&f.program.grammar).unwrap();
    verify_witness(&f.program, &labels, &w.control_word, f.query.as_ref()).map_err(|e| e.to_string())?;
    let r = f.program.labels.word_semantics(&w.word).unwrap().intersect(f.query.as_ref().unwrap()).unwrap();
    if r.is_empty() {
        return Err("witness word has an empty relation".into());
    }
    Ok(format!("{} then REACHABLE via `{}`", v_name(Status::UnreachableUpToBound), w.word.join(" ")))
}

fn v_name(s: Status) -> String {
    s.to_string()
}

fn c3() -> Result<String, String> {
    let (g, x, b) = nested();
    let inter = intersect_grammar(&g, x, &b).map_err(|e| e.to_string())?;
    let mut got = BTreeSet::new();
    for &ax in &inter.axioms {
        got.extend(strings(&inter.grammar, enumerate_words(&inter.grammar, ax, None, EnumOptions::new(14)).unwrap()));
    }
    let want: BTreeSet<String> = (0..=3)
        .map(|n| {
            let mut s = vec!["a c"; n];
            s.push("a b");
            s.extend(vec!["d b"; n]);
            s.join(" ")
        })
        .collect();
    if got != want {
        return Err(format!("got {got:?}"));
    }
    Ok(format!("{} words", got.len()))
}

fn c4() -> Result<String, String> {
    let (bt, axioms) = nested_bowtie();
    let mut got = BTreeSet::new();
    for &ax in &axioms {
        got.extend(strings(&bt.grammar, enumerate_words(&bt.grammar, ax, None, EnumOptions::new(11)).unwrap()));
    }
    let want: BTreeSet<String> = (0..=5)
        .map(|n| {
            let mut s = vec!["a1"; n];
            s.push("a2");
            s.extend(vec!["a3"; n]);
            s.join(" ")
        })
        .collect();
    if got != want {
        return Err(format!("got {got:?}"));
    }
    Ok(format!("{} words over {} axioms", got.len(), axioms.len()))
}

fn c5() -> Result<String, String> {
    let f = fop::parse(RUNNING).unwrap();
    let g = &f.program.grammar;
    let x = f.program.axiom;
    let max = 12;
    let a = DfAutomaton::explore(g, 2, &[x], BUDGET).map_err(|e| e.to_string())?;
    let mut accepted: BTreeSet<ControlWord> = BTreeSet::new();
    let mut stack = vec![(a.starts[0], vec![])];
    while let Some((v, w)) = stack.pop() {
        if a.vertices[v].is_empty() {
            accepted.insert(w.clone());
        }
        if w.len() < max {
            for &(p, u) in &a.edges[v] {
                let mut nw = w.clone();
                nw.push(p);
                stack.push((u, nw));
            }
        }
    }
    let oracle: BTreeSet<ControlWord> = df_control_words(g, x, None, 2, max).into_keys().collect();
    let mut closed = BTreeSet::new();
    for n in 0..=max / 3 {
        let mut w: ControlWord = [1, 2, 3].repeat(n);
        let mut v = w.clone();
        w.push(4);
        v.extend([1, 2, 4, 3]);
        closed.extend([w, v].into_iter().filter(|w| w.len() <= max));
    }
    for gamma in &accepted {
        if !accepts(g, 2, x, None, gamma) {
            return Err(format!("path {gamma:?} rejected by accepts"));
        }
    }
    if accepted != oracle || accepted != closed {
        return Err(format!("automaton {accepted:?}\noracle {oracle:?}\nclosed form {closed:?}"));
    }
    Ok(format!("{} control words", accepted.len()))
}

/// Words of index at most `k` missed by the family at index `k + 1`; every
/// covering control word is replayed and checked.
fn coverage_misses(g: &Grammar, x: Nt, letters: &[Term], k: usize, max_len: usize) -> Result<(usize, usize), String> {
    let want: BTreeSet<Vec<Term>> = enumerate_words(g, x, None, EnumOptions::new(max_len).index(k))
        .map_err(|e| e.to_string())?
        .into_iter()
        .collect();
    let opts = ControlOptions { vertex_budget: BUDGET, both_orders: true };
    let fam = match letter_bounded_control_set(g, x, letters, k, opts) {
        Ok(f) => f,
        Err(ControlError::Grammar(GrammarError::EmptyLanguage(_))) if want.is_empty() => return Ok((0, 0)),
        Err(e) => return Err(e.to_string()),
    };
    let mut got = BTreeSet::new();
    for e in &fam.members {
        for (w, gamma) in covered_words(g, x, e, k + 1, letters, max_len, BUDGET).map_err(|e| e.to_string())? {
            let seq = apply_control_word(g, &[Sym::N(x)], &gamma, None).map_err(|e| e.to_string())?;
            if seq.terminal_result().as_ref() != Some(&w) || !accepts(g, k + 1, x, None, &gamma) || !e.contains(&gamma)
            {
                return Err(format!("control word {gamma:?} does not replay"));
            }
            got.insert(w);
        }
    }
    Ok((want.difference(&got).count(), want.len()))
}

fn c6() -> Result<String, String> {
    let (bt, axioms) = nested_bowtie();
    let mut misses = 0;
    let mut words = 0;
    let mut checked = 0;
    for k in 1..=2 {
        for &ax in &axioms {
            let (m, w) = coverage_misses(&bt.grammar, ax, &bt.letters, k, 10)?;
            misses += m;
            words += w;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut grammars = 0;
    while grammars < 50 {
        let (g, x, letters) = common::letter_bounded_grammar(&mut rng, 4);
        if enumerate_words(&g, x, None, EnumOptions::new(10)).map(|w| w.is_empty()).unwrap_or(true) {
            continue;
        }
        grammars += 1;
        for k in 1..=2 {
            let (m, w) = coverage_misses(&g, x, &letters, k, 10).map_err(|e| format!("{e}\n{g}"))?;
            words += w;
            if m > 0 {
                return Err(format!("{m} misses at k = {k} on\n{g}"));
            }
            checked += 1;
        }
    }
    if misses > 0 {
        return Err(format!("{misses} misses on the letter-bounded example"));
    }
    Ok(format!("0 misses over {words} words, {grammars} random grammars, {checked} (grammar, k) pairs"))
}

fn c7() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut grammars = 0;
    while grammars < 30 {
        let (g, x, letters) = common::letter_bounded_grammar(&mut rng, 2);
        let all = enumerate_words(&g, x, None, EnumOptions::new(10)).map_err(|e| e.to_string())?;
        if all.is_empty() {
            continue;
        }
        if !all.iter().all(|w| common::in_letter_order(w, &letters)) {
            return Err(format!("generator produced a word outside the bound\n{g}"));
        }
        grammars += 1;
        for k in 1..=2 {
            let want: BTreeSet<Vec<Term>> =
                enumerate_words(&g, x, None, EnumOptions::new(10).index(k)).unwrap().into_iter().collect();
            let gamma = constant_bounded_control_set(&g, &[x], &letters, k, BUDGET).map_err(|e| format!("{e}\n{g}"))?;
            let got: BTreeSet<Vec<Term>> =
                covered_words(&g, x, &gamma, k, &letters, 10, BUDGET).map_err(|e| e.to_string())?.into_keys().collect();
            if got != want {
                return Err(format!(
                    "k = {k}: missing {:?}, extra {:?}\n{g}",
                    want.difference(&got).collect::<Vec<_>>(),
                    got.difference(&want).collect::<Vec<_>>()
                ));
            }
        }
    }
    Ok(format!("{grammars} grammars, k = 1, 2, set equality"))
}

fn c8() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut feasible = 0;
    for _ in 0..20 {
        let m = rng.gen_range(1..=3);
        let n = rng.gen_range(1..=3);
        let rows = (0..n).map(|_| (0..=m).map(|_| rng.gen_range(-3..=3)).collect()).collect();
        let inst = Pilp { m, rows };
        // every vector with entries up to 10, plus one step per separator
        let cfg = AnalysisConfig { iteration_bound: 11 * m as u64 + 2, ..Default::default() };
        let expect = inst.feasible(10).is_some();
        let (p, b) = pilp_encode(&inst).map_err(|e| e.to_string())?;
        let v = reach_fo(&p, &b, None, &cfg).map_err(|e| e.to_string())?;
        if (v.verdict == Status::Reachable) != expect || v.verdict == Status::Unknown {
            return Err(format!("{} gave {}", inst.render().replace('\n', "; "), v.verdict));
        }
        feasible += expect as usize;
    }
    Ok(format!("20/20 agree ({feasible} feasible)"))
}

fn c9() -> Result<String, String> {
    let mut lens = vec![];
    for k in 1..=4usize {
        let g = optimality_family(k);
        let x = g.find_nt(&format!("X{k}")).unwrap();
        let a = g.find_t("a").unwrap();
        let ws = enumerate_words(&g, x, None, EnumOptions::new((1 << k) + 2)).unwrap();
        if ws.len() != 1 || ws.iter().next().unwrap() != &vec![a; 1 << k] {
            return Err(format!("k = {k}: words {ws:?}"));
        }
        let cws = df_control_words(&g, x, None, k + 2, 1 << (k + 2));
        if cws.len() != 1 {
            return Err(format!("k = {k}: {} depth-first control words", cws.len()));
        }
        let gamma = cws.keys().next().unwrap();
        if gamma.len() != (1 << (k + 1)) - 1 {
            return Err(format!("k = {k}: control word length {}", gamma.len()));
        }
        let index = apply_control_word(&g, &[Sym::N(x)], gamma, None).unwrap().index();
        if index != k + 1 || !df_control_words(&g, x, None, k, 1 << (k + 2)).is_empty() {
            return Err(format!("k = {k}: index {index}"));
        }
        let opts = ControlOptions { vertex_budget: BUDGET, both_orders: true };
        let fam = letter_bounded_control_set(&g, x, &[a], k + 1, opts).map_err(|e| e.to_string())?;
        let mut covered = false;
        for e in &fam.members {
            if e.length() < 1 << (k - 1) {
                return Err(format!("k = {k}: expression of length {}", e.length()));
            }
            covered |= e.contains(gamma);
        }
        if !covered {
            return Err(format!("k = {k}: control word not covered"));
        }
        lens.push(fam.members.iter().map(|e| e.length()).min().unwrap_or(0));
    }
    Ok(format!("covering lengths {lens:?}"))
}

fn brute(atoms: &[Atom], p: &[i64]) -> bool {
    atoms.iter().all(|a| {
        let s: i64 = a.terms.iter().map(|&(c, sg)| sg as i64 * p[c]).sum();
        BigInt::from(s) <= a.bound
    })
}

fn random_atoms(rng: &mut ChaCha8Rng) -> Vec<Atom> {
    let mut atoms = vec![];
    for c in 0..4 {
        for s in [1i8, -1] {
            atoms.push(Atom { terms: vec![(c, s)], bound: BigInt::from(4) });
        }
    }
    for _ in 0..rng.gen_range(1..=4) {
        let sign = |r: &mut ChaCha8Rng| if r.gen_bool(0.5) { 1i8 } else { -1 };
        let u = rng.gen_range(0..4);
        let mut terms = vec![(u, sign(rng))];
        if rng.gen_bool(0.7) {
            let v = (u + rng.gen_range(1..4)) % 4;
            terms.push((v, sign(rng)));
            terms.sort();
        }
        atoms.push(Atom { terms, bound: BigInt::from(rng.gen_range(-3..=5)) });
    }
    atoms
}

type Mat = Vec<Vec<bool>>;

fn product(a: &Mat, b: &Mat) -> Mat {
    let n = a.len();
    (0..n).map(|i| (0..n).map(|j| (0..n).any(|m| a[i][m] && b[m][j])).collect()).collect()
}

fn c10() -> Result<String, String> {
    let vs = VarSet::new(&["x", "y"]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let pts: Vec<[i64; 2]> = (-4..=4).flat_map(|a| (-4..=4).map(move |b| [a, b])).collect();
    let np = pts.len();
    let pt = |i: usize, j: usize| [pts[i][0], pts[i][1], pts[j][0], pts[j][1]];
    let mut checks = 0u64;
    for round in 0..300 {
        let sets: Vec<Vec<Atom>> = (0..3).map(|_| random_atoms(&mut rng)).collect();
        let rels: Vec<OctRelation> = sets.iter().map(|a| OctRelation::from_atoms(&vs, a)).collect();
        let sat: Vec<Mat> =
            sets.iter().map(|a| (0..np).map(|i| (0..np).map(|j| brute(a, &pt(i, j))).collect()).collect()).collect();
        let c01 = product(&sat[0], &sat[1]);
        let c012 = product(&c01, &sat[2]);
        let r01 = rels[0].compose(&rels[1]).unwrap();
        let r012 = r01.compose(&rels[2]).unwrap();
        let i01 = rels[0].intersect(&rels[1]).unwrap();
        for i in 0..np {
            for j in 0..np {
                let p = pt(i, j);
                for r in 0..3 {
                    if rels[r].contains(&p) != sat[r][i][j] {
                        return Err(format!("round {round}: membership of {p:?} in {}", rels[r].pretty()));
                    }
                }
                if i01.contains(&p) != (sat[0][i][j] && sat[1][i][j]) {
                    return Err(format!("round {round}: intersection at {p:?}"));
                }
                if r01.contains(&p) != c01[i][j] {
                    return Err(format!("round {round}: composition at {p:?}"));
                }
                if r012.contains(&p) != c012[i][j] {
                    return Err(format!("round {round}: triple composition at {p:?}"));
                }
                checks += 1;
            }
        }
        for r in 0..3 {
            if rels[r].is_empty() == sat[r].iter().flatten().any(|&b| b) {
                return Err(format!("round {round}: emptiness of {}", rels[r].pretty()));
            }
            let again = OctRelation::from_atoms(&vs, &rels[r].atoms());
            if !rels[r].is_empty() && (again != rels[r] || !again.equal(&rels[r]).unwrap()) {
                return Err(format!(
                    "round {round}: closure not idempotent: `{}` vs `{}`",
                    rels[r].pretty(),
                    again.pretty()
                ));
            }
            let reparsed = OctRelation::parse(&rels[r].pretty(), &vs).unwrap();
            if reparsed != rels[r] {
                return Err(format!("round {round}: `{}` reparses differently", rels[r].pretty()));
            }
        }
        let assoc = rels[0].compose(&rels[1].compose(&rels[2]).unwrap()).unwrap();
        if !assoc.equal(&r012).unwrap() {
            return Err(format!("round {round}: composition not associative"));
        }
    }
    Ok(format!("300 triples, {checks} point pairs, 0 discrepancies"))
}

fn main() {
    type Check = fn() -> Result<String, String>;
    let criteria: [(u32, &str, Check, u64); 10] = [
        (1, "running-example word semantics (exact)", c1, 1),
        (2, "query falsification and reachable query (iter >= 10, word >= 30)", c2, 10),
        (3, "intersection language up to length 14 (exact)", c3, 5),
        (4, "letter-bounded language, n <= 5 (exact)", c4, 5),
        (5, "depth-first index-2 control words up to length 12 (exact)", c5, 5),
        (6, "family coverage, length <= 10, k = 1, 2 (zero misses)", c6, 120),
        (7, "two-letter control set exactness, length <= 10 (exact)", c7, 60),
        (8, "PILP agreement, 20 instances, k_i <= 10 (20/20)", c8, 60),
        (9, "exponential family, k = 1..4 (exact)", c9, 30),
        (10, "octagon operations vs brute force on [-4,4] (zero discrepancies)", c10, 60),
    ];
    let mut failed = vec![];
    for (n, name, f, limit) in criteria {
        let t = Instant::now();
        let r = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            Err(e
                .downcast_ref::<String>()
                .cloned()
                .or(e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default())
        });
        let el = t.elapsed();
        let r = match r {
            Ok(d) if el > Duration::from_secs(limit) => Err(format!("{d}; took {el:.2?}, limit {limit} s")),
            r => r,
        };
        match r {
            Ok(d) => println!("criterion {n:>2} PASS {name}: {d} [{el:.2?} < {limit} s]"),
            Err(e) => {
                println!("criterion {n:>2} FAIL {name}: {e} [{el:.2?}]");
                failed.push(n);
            }
        }
    }
    if !failed.is_empty() {
        println!("failed criteria {failed:?}");
        std::process::exit(1);
    }
}
