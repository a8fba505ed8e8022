use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use flatoct::automaton::DfAutomaton;
use flatoct::bounded::{bowtie_grammar, intersect_grammar, BoundedError};
use flatoct::control::{letter_bounded_control_set, ControlError, ControlOptions};
use flatoct::fop::{self, ProgramFile};
use flatoct::grammar::{normalize_2nf, GrammarError};
use flatoct::reach::{
    brute_oracle, default_index, oracle_words, pilp_encode, reach_fo, reach_fo_k, AnalysisConfig, Pilp, Status, Verdict,
};

#[derive(Parser)]
#[command(name = "flatoct", version, about = "Bounded reachability for recursive octagonal programs")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Decide reachability of the query under the bound.
    Check {
        file: PathBuf,
        /// Restrict to derivations of index at most k.
        #[arg(long)]
        k: Option<usize>,
        /// Index used for control-set synthesis.
        #[arg(long = "K")]
        big_k: Option<usize>,
        #[arg(long)]
        iter_bound: Option<u64>,
        #[arg(long)]
        word_bound: Option<usize>,
        /// Enumerate words instead of running the pipeline.
        #[arg(long)]
        oracle: bool,
        #[arg(long)]
        json: bool,
    },
    /// Dump one intermediate artifact.
    Stage {
        file: PathBuf,
        #[arg(long, value_enum)]
        stage: StageKind,
        #[arg(long)]
        k: Option<usize>,
        /// Space separated terminals, for the semantics stage.
        #[arg(long)]
        word: Option<String>,
        #[arg(long)]
        word_bound: Option<usize>,
    },
    /// Encode an integer linear system as a program file.
    Pilp {
        matrix: Option<PathBuf>,
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Generate a random system (m, n <= 3, |coefficients| <= 3).
        #[arg(long)]
        random: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum StageKind {
    Intersect,
    Bowtie,
    Automaton,
    Controlset,
    Oracle,
    Semantics,
}

enum Failure {
    Input(String),
    Analysis(String),
}

fn input(e: impl ToString) -> Failure {
    Failure::Input(e.to_string())
}

fn analysis(e: impl ToString) -> Failure {
    Failure::Analysis(e.to_string())
}

fn config() -> AnalysisConfig {
    let mut cfg = AnalysisConfig::default();
    if let Some(b) = std::env::var("FLATOCT_BUDGET").ok().and_then(|s| s.trim().parse().ok()) {
        cfg.node_budget = b;
        cfg.vertex_budget = b;
    }
    cfg
}

fn load(path: &Path) -> Result<ProgramFile, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| input(format!("{}: {e}", path.display())))?;
    fop::parse(&text).map_err(|e| input(format!("{}:{e}", path.display())))
}

fn report(v: &Verdict) -> String {
    let mut s = format!("{}\n", v.verdict);
    if let Some(w) = &v.witness {
        writeln!(s, "word: {}", w.word.join(" ")).unwrap();
        if !w.control_word.is_empty() {
            let cw: Vec<String> = w.control_word.iter().map(|p| format!("p{p}")).collect();
            writeln!(s, "control word: {}", cw.join(" ")).unwrap();
        }
        writeln!(s, "relation: {}", w.relation).unwrap();
    }
    let b = &v.bounds;
    let opt = |x: Option<usize>| x.map_or("-".to_string(), |x| x.to_string());
    writeln!(s, "bounds: K={} k={} iter={} word={}", opt(b.big_k), opt(b.k), b.iter, b.word).unwrap();
    let z = &v.sizes;
    writeln!(
        s,
        "sizes: program={} intersection={} bowtie={} letters={} vertices={} family={}",
        z.program,
        z.intersection,
        z.bowtie,
        z.letters,
        opt(z.automaton_vertices),
        z.family
    )
    .unwrap();
    for d in &v.diagnostics {
        writeln!(s, "note: {d}").unwrap();
    }
    s
}

fn check(
    file: &Path,
    k: Option<usize>,
    big_k: Option<usize>,
    iter_bound: Option<u64>,
    word_bound: Option<usize>,
    oracle: bool,
    json: bool,
) -> Result<Status, Failure> {
    let f = load(file)?;
    let mut cfg = config();
    cfg.k_override = big_k;
    if let Some(i) = iter_bound {
        cfg.iteration_bound = i;
    }
    if let Some(w) = word_bound {
        cfg.word_bound = w;
    }
    let q = f.query.as_ref();
    let v = if oracle {
        brute_oracle(&f.program, &f.bound, q, &cfg)
    } else if let Some(k) = k {
        reach_fo_k(&f.program, &f.bound, k, q, &cfg)
    } else {
        reach_fo(&f.program, &f.bound, q, &cfg)
    }
    .map_err(analysis)?;
    if json {
        println!("{}", serde_json::to_string_pretty(&v).map_err(analysis)?);
    } else {
        print!("{}", report(&v));
    }
    Ok(v.verdict)
}

fn stage(
    file: &Path,
    kind: StageKind,
    k: Option<usize>,
    word: Option<&str>,
    word_bound: Option<usize>,
) -> Result<String, Failure> {
    let f = load(file)?;
    let p = &f.program;
    let mut cfg = config();
    if let Some(w) = word_bound {
        cfg.word_bound = w;
    }
    let mut out = String::new();
    let norm = normalize_2nf(&p.grammar);
    let inter = || match intersect_grammar(&norm.grammar, p.axiom, &f.bound) {
        Err(BoundedError::EmptyIntersection) => Ok(None),
        r => r.map(Some).map_err(analysis),
    };
    match kind {
        StageKind::Intersect => match inter()? {
            None => out.push_str("empty\n"),
            Some(i) => {
                let names: Vec<&str> = i.axioms.iter().map(|&a| i.grammar.nt_name(a)).collect();
                writeln!(out, "axioms: {}", names.join(", ")).unwrap();
                write!(out, "{}", i.grammar).unwrap();
            }
        },
        StageKind::Bowtie => match inter()? {
            None => out.push_str("empty\n"),
            Some(i) => {
                let bt = bowtie_grammar(&i, &f.bound);
                let names: Vec<&str> = i.axioms.iter().map(|&a| i.grammar.nt_name(a)).collect();
                writeln!(out, "axioms: {}", names.join(", ")).unwrap();
                for (j, w) in bt.h.iter().enumerate() {
                    writeln!(out, "h {} = {}", bt.grammar.t_name(bt.letters[j]), w.join(" ")).unwrap();
                }
                write!(out, "{}", bt.grammar).unwrap();
            }
        },
        StageKind::Automaton => {
            let k = k.unwrap_or(2);
            let g = if p.grammar.productions().iter().all(|q| q.nt_count() <= 2) { &p.grammar } else { &norm.grammar };
            let a = DfAutomaton::explore(g, k, &[p.axiom], cfg.vertex_budget).map_err(analysis)?;
            writeln!(out, "# k = {k}, {} vertices, {} edges", a.vertices.len(), a.edge_count()).unwrap();
            out.push_str(&a.dump(g));
        }
        StageKind::Controlset => match inter()? {
            None => out.push_str("empty\n"),
            Some(i) => {
                let bt = bowtie_grammar(&i, &f.bound);
                let k = k.unwrap_or_else(|| default_index(i.grammar.nonterminals_in_use().len(), cfg.k_cap));
                writeln!(out, "# K = {k}").unwrap();
                let opts = ControlOptions { vertex_budget: cfg.vertex_budget, both_orders: true };
                for &ax in &i.axioms {
                    let fam = match letter_bounded_control_set(&bt.grammar, ax, &bt.letters, k, opts) {
                        Err(ControlError::Grammar(GrammarError::EmptyLanguage(_))) => continue,
                        r => r.map_err(analysis)?,
                    };
                    for e in &fam.members {
                        writeln!(out, "{}: [{} factors] {}", bt.grammar.nt_name(ax), e.factor_count(), e).unwrap();
                    }
                }
            }
        },
        StageKind::Oracle => {
            for w in oracle_words(p, &f.bound, &cfg).map_err(analysis)? {
                let names: Vec<&str> = w.iter().map(|&a| p.grammar.t_name(a)).collect();
                writeln!(out, "{}", if names.is_empty() { "eps".into() } else { names.join(" ") }).unwrap();
            }
        }
        StageKind::Semantics => {
            let w = word.ok_or_else(|| input("--stage semantics needs --word"))?;
            let names: Vec<&str> = w.split_whitespace().filter(|s| *s != "eps").collect();
            let r = p.labels.word_semantics(&names).map_err(input)?;
            writeln!(out, "{}", r.pretty()).unwrap();
        }
    }
    Ok(out)
}

fn random_pilp(seed: u64) -> Pilp {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = rng.gen_range(1..=3);
    let n = rng.gen_range(1..=3);
    let rows = (0..n).map(|_| (0..=m).map(|_| rng.gen_range(-3..=3)).collect()).collect();
    Pilp { m, rows }
}

fn pilp(matrix: Option<&Path>, output: Option<&Path>, random: bool, seed: u64) -> Result<(), Failure> {
    let inst = match (matrix, random) {
        (_, true) => random_pilp(seed),
        (Some(path), false) => {
            let text = std::fs::read_to_string(path).map_err(|e| input(format!("{}: {e}", path.display())))?;
            Pilp::parse(&text).map_err(|e| input(format!("{}: {e}", path.display())))?
        }
        (None, false) => return Err(input("give a matrix file or --random")),
    };
    let (p, b) = pilp_encode(&inst).map_err(input)?;
    let mut text = String::new();
    for l in inst.render().lines() {
        writeln!(text, "# {l}").unwrap();
    }
    text.push_str(&fop::pilp_file(&p, &b));
    match output {
        Some(o) => std::fs::write(o, text).map_err(|e| input(format!("{}: {e}", o.display())))?,
        None => print!("{text}"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let r = match &cli.cmd {
        Cmd::Check { file, k, big_k, iter_bound, word_bound, oracle, json } => {
            check(file, *k, *big_k, *iter_bound, *word_bound, *oracle, *json).map(|s| match s {
                Status::Reachable => 0,
                Status::UnreachableUpToBound => 1,
                Status::Unknown => 2,
            })
        }
        Cmd::Stage { file, stage: kind, k, word, word_bound } => stage(file, *kind, *k, word.as_deref(), *word_bound)
            .map(|s| {
                print!("{s}");
                0
            }),
        Cmd::Pilp { matrix, output, random, seed } => {
            pilp(matrix.as_deref(), output.as_deref(), *random, *seed).map(|_| 0)
        }
    };
    match r {
        Ok(c) => ExitCode::from(c),
        Err(Failure::Input(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(3)
        }
        Err(Failure::Analysis(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
