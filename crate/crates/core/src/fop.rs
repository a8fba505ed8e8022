//! The `.fop` program file format.
//!
//! ```text
//! vars: x, z
//! axiom: X1
//! prod 1: X1 -> t1 X2
//! prod 2: X2 -> call[t2] X1 ret[t2] X3
//! rel t1: x > 0, x' = x
//! frame t2: x' = x
//! bound: (t1 call[t2])* (t4)* (ret[t2] t3)*
//! query: x > 0, z' < x
//! ```

use std::fmt::Write as _;

use thiserror::Error;

use crate::bounded::BoundedExpr;
use crate::grammar::{Grammar, ProdId, Sym};
use crate::octagon::{OctError, OctRelation, VarSet};
use crate::reach::Program;
use crate::semantics::ProgramLabels;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("{line}:{col}: {msg}")]
pub struct FopError {
    pub line: usize,
    pub col: usize,
    pub msg: String,
}

#[derive(Clone, Debug)]
pub struct ProgramFile {
    pub program: Program,
    pub bound: BoundedExpr,
    pub query: Option<OctRelation>,
}

fn err(line: usize, col: usize, msg: impl Into<String>) -> FopError {
    FopError { line, col, msg: msg.into() }
}

/// Column (1-based) of `part` inside `raw`, assuming `part` is a subslice.
fn col_of(raw: &str, part: &str) -> usize {
    (part.as_ptr() as usize).saturating_sub(raw.as_ptr() as usize) + 1
}

pub fn parse(text: &str) -> Result<ProgramFile, FopError> {
    let mut vars: Option<(usize, Vec<String>)> = None;
    let mut axiom: Option<(usize, usize, String)> = None;
    let mut prods: Vec<(usize, usize, ProdId, String, Vec<String>)> = vec![];
    let mut rels: Vec<(usize, usize, String, String, bool)> = vec![];
    let mut bound: Option<(usize, usize, String)> = None;
    let mut query: Option<(usize, usize, String)> = None;
    for (i, raw) in text.lines().enumerate() {
        let ln = i + 1;
        let line = raw.split('#').next().unwrap();
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let (key, rest) = t.split_once(':').ok_or_else(|| err(ln, col_of(raw, t), "expected `key: value`"))?;
        let rest_col = col_of(raw, rest) + rest.len() - rest.trim_start().len();
        let key = key.trim();
        let value = rest.trim();
        let mut words = key.split_whitespace();
        match (words.next(), words.next(), words.next()) {
            (Some("vars"), None, _) => {
                let names: Vec<String> =
                    value.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
                vars = Some((ln, names));
            }
            (Some("axiom"), None, _) => axiom = Some((ln, rest_col, value.to_string())),
            (Some("bound"), None, _) => bound = Some((ln, rest_col, value.to_string())),
            (Some("query"), None, _) => query = Some((ln, rest_col, value.to_string())),
            (Some("prod"), Some(id), None) => {
                let id: ProdId = id
                    .trim_start_matches('p')
                    .parse()
                    .map_err(|_| err(ln, col_of(raw, id), format!("bad production id `{id}`")))?;
                let (h, b) = value.split_once("->").ok_or_else(|| err(ln, rest_col, "expected `NT -> body`"))?;
                let h = h.trim();
                if h.is_empty() || h.contains(char::is_whitespace) {
                    return Err(err(ln, rest_col, "bad production head"));
                }
                let body = b.split_whitespace().filter(|s| *s != "eps").map(String::from).collect();
                prods.push((ln, rest_col, id, h.to_string(), body));
            }
            (Some(k @ ("rel" | "frame")), Some(sym), None) => {
                rels.push((ln, rest_col, sym.to_string(), value.to_string(), k == "frame"))
            }
            _ => return Err(err(ln, col_of(raw, t), format!("unknown section `{key}`"))),
        }
    }
    let (vln, names) = vars.ok_or_else(|| err(1, 1, "missing `vars:`"))?;
    let vs = VarSet::new(&names).map_err(|e| err(vln, 1, e.to_string()))?;
    let mut g = Grammar::new();
    for (_, _, _, h, _) in &prods {
        g.nt(h);
    }
    let (aln, acol, aname) = axiom.ok_or_else(|| err(1, 1, "missing `axiom:`"))?;
    let ax = g.find_nt(&aname).ok_or_else(|| err(aln, acol, format!("axiom `{aname}` has no productions")))?;
    for (ln, col, id, h, body) in &prods {
        let head = g.nt(h);
        let body = body
            .iter()
            .map(|s| match g.find_nt(s) {
                Some(x) => Sym::N(x),
                None => Sym::T(g.t(s)),
            })
            .collect();
        g.add_production(*id, head, body).map_err(|e| err(*ln, *col, e.to_string()))?;
    }
    let rel_err = |ln: usize, col: usize, e: OctError| match e {
        OctError::Syntax { col: c, msg } => err(ln, col + c - 1, msg),
        e => err(ln, col, e.to_string()),
    };
    let parse_rel = |ln: usize, col: usize, text: &str| -> Result<OctRelation, FopError> {
        OctRelation::parse(text, &vs).map_err(|e| rel_err(ln, col, e))
    };
    let mut labels = ProgramLabels::new(vs.clone());
    for (ln, col, sym, text, frame) in &rels {
        let r = parse_rel(*ln, *col, text)?;
        let map = if *frame { &mut labels.frames } else { &mut labels.rels };
        if map.insert(sym.clone(), r).is_some() {
            return Err(err(*ln, 1, format!("duplicate relation for `{sym}`")));
        }
    }
    let b = match bound {
        Some((ln, col, text)) => BoundedExpr::parse(&text).map_err(|e| err(ln, col, e.to_string()))?,
        None => return Err(err(1, 1, "missing `bound:`")),
    };
    let q = match query {
        Some((ln, col, text)) => Some(parse_rel(ln, col, &text)?),
        None => None,
    };
    let program = Program { grammar: g, axiom: ax, labels };
    program.labels.resolve(&program.grammar).map_err(|e| err(1, 1, e.to_string()))?;
    Ok(ProgramFile { program, bound: b, query: q })
}

pub fn render(f: &ProgramFile) -> String {
    let p = &f.program;
    let mut s = String::new();
    writeln!(s, "vars: {}", p.labels.vars.names().join(", ")).unwrap();
    writeln!(s, "axiom: {}", p.grammar.nt_name(p.axiom)).unwrap();
    write!(s, "{}", p.grammar).unwrap();
    for (sym, r) in &p.labels.rels {
        writeln!(s, "rel {sym}: {}", r.pretty()).unwrap();
    }
    for (t, r) in &p.labels.frames {
        writeln!(s, "frame {t}: {}", r.pretty()).unwrap();
    }
    writeln!(s, "bound: {}", f.bound).unwrap();
    if let Some(q) = &f.query {
        writeln!(s, "query: {}", q.pretty()).unwrap();
    }
    s
}

pub fn pilp_file(p: &Program, b: &BoundedExpr) -> String {
    render(&ProgramFile { program: p.clone(), bound: b.clone(), query: None })
}

#[cfg(test)]
mod tests {
    use super::*;

    const RUNNING: &str = "vars: x, z
axiom: X1
prod 1: X1 -> t1 X2
prod 2: X2 -> call[t2] X1 ret[t2] X3
prod 3: X3 -> t3
prod 4: X1 -> t4
rel t1: x > 0, x' = x   # guard
rel call[t2]: x' = x - 1
rel ret[t2]: z' = z
rel t3: x' = x, z' = z + 2
rel t4: x = 0, z' = 0
frame t2: x' = x
bound: (t1 call[t2])* (t4)* (ret[t2] t3)*
query: x > 0, z' < x
";

    #[test]
    fn round_trip() {
        let f = parse(RUNNING).unwrap();
        assert_eq!(f.program.grammar.productions().len(), 4);
        let text = render(&f);
        let g = parse(&text).unwrap();
        assert_eq!(render(&g), text);
        assert_eq!(g.program.grammar, f.program.grammar);
        assert_eq!(g.program.labels, f.program.labels);
        assert_eq!(g.query, f.query);
    }

    #[test]
    fn located_errors() {
        let bad = RUNNING.replace("rel t3: x' = x, z' = z + 2", "rel t3: x' = x, z' = z + + 2");
        let e = parse(&bad).unwrap_err();
        assert_eq!(e.line, 10);
        assert!(e.col > 8, "{e}");
        let e = parse(&RUNNING.replace("prod 3:", "prud 3:")).unwrap_err();
        assert_eq!((e.line, e.col), (5, 1));
        let e = parse(&RUNNING.replace("rel t4: x = 0, z' = 0\n", "")).unwrap_err();
        assert!(e.msg.contains("t4"));
    }
}
