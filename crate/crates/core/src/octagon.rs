//! Integer octagonal relations over `x ∪ x'` as difference-bound matrices
//! with tight closure.
//!
//! Literals: variable column `c` gives literals `2c` (`+v`) and `2c+1` (`-v`).
//! Entry `m[i][j]` bounds `L_j - L_i`. Unprimed variables occupy columns
//! `0..n`, primed ones `n..2n`.

use std::cmp::Ordering;
use std::fmt;
use std::sync::Arc;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{ToPrimitive, Zero};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OctError {
    #[error("syntax error at column {col}: {msg}")]
    Syntax { col: usize, msg: String },
    #[error("non-octagonal constraint `{0}`")]
    NonOctagonal(String),
    #[error("relations over different variable sets")]
    VarMismatch,
    #[error("invalid variable set: {0}")]
    BadVars(String),
}

/// Upper bound: an arbitrary-precision integer or +∞.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Bound {
    Small(i64),
    Big(BigInt),
    Inf,
}

impl Bound {
    pub fn from_big(b: BigInt) -> Bound {
        match b.to_i64() {
            Some(v) => Bound::Small(v),
            None => Bound::Big(b),
        }
    }

    pub fn to_big(&self) -> Option<BigInt> {
        match self {
            Bound::Small(v) => Some(BigInt::from(*v)),
            Bound::Big(b) => Some(b.clone()),
            Bound::Inf => None,
        }
    }

    pub fn is_inf(&self) -> bool {
        matches!(self, Bound::Inf)
    }

    pub fn is_negative(&self) -> bool {
        match self {
            Bound::Small(v) => *v < 0,
            Bound::Big(b) => b < &BigInt::zero(),
            Bound::Inf => false,
        }
    }

    #[inline]
    pub fn add(&self, o: &Bound) -> Bound {
        match (self, o) {
            (Bound::Inf, _) | (_, Bound::Inf) => Bound::Inf,
            (Bound::Small(a), Bound::Small(b)) => match a.checked_add(*b) {
                Some(v) => Bound::Small(v),
                None => Bound::Big(BigInt::from(*a) + BigInt::from(*b)),
            },
            _ => Bound::from_big(self.to_big().unwrap() + o.to_big().unwrap()),
        }
    }

    pub fn floor_half(&self) -> Bound {
        match self {
            Bound::Small(v) => Bound::Small(v.div_euclid(2)),
            Bound::Big(b) => Bound::from_big(b.div_floor(&BigInt::from(2))),
            Bound::Inf => Bound::Inf,
        }
    }

    pub fn twice(&self) -> Bound {
        self.add(self)
    }

    pub fn neg(&self) -> Bound {
        match self {
            Bound::Small(v) => match v.checked_neg() {
                Some(n) => Bound::Small(n),
                None => Bound::Big(-BigInt::from(*v)),
            },
            Bound::Big(b) => Bound::from_big(-b),
            Bound::Inf => panic!("negating +inf"),
        }
    }

    fn fits(&self, v: &BigInt) -> bool {
        match self {
            Bound::Inf => true,
            _ => v <= &self.to_big().unwrap(),
        }
    }
}

impl From<i64> for Bound {
    fn from(v: i64) -> Bound {
        Bound::Small(v)
    }
}

impl Ord for Bound {
    fn cmp(&self, o: &Bound) -> Ordering {
        match (self, o) {
            (Bound::Inf, Bound::Inf) => Ordering::Equal,
            (Bound::Inf, _) => Ordering::Greater,
            (_, Bound::Inf) => Ordering::Less,
            (Bound::Small(a), Bound::Small(b)) => a.cmp(b),
            _ => self.to_big().unwrap().cmp(&o.to_big().unwrap()),
        }
    }
}

impl PartialOrd for Bound {
    fn partial_cmp(&self, o: &Bound) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

impl fmt::Display for Bound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Bound::Small(v) => write!(f, "{v}"),
            Bound::Big(b) => write!(f, "{b}"),
            Bound::Inf => write!(f, "inf"),
        }
    }
}

#[inline]
fn bar(i: usize) -> usize {
    i ^ 1
}

/// Square matrix over `2 * nv` literals.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
struct Dbm {
    nv: usize,
    m: Vec<Bound>,
}

impl Dbm {
    fn top(nv: usize) -> Dbm {
        let d = 2 * nv;
        let mut m = vec![Bound::Inf; d * d];
        for i in 0..d {
            m[i * d + i] = Bound::Small(0);
        }
        Dbm { nv, m }
    }

    #[inline]
    fn dim(&self) -> usize {
        2 * self.nv
    }

    #[inline]
    fn get(&self, i: usize, j: usize) -> &Bound {
        &self.m[i * self.dim() + j]
    }

    /// Adds `L_j - L_i <= c` together with its coherent twin.
    fn add(&mut self, i: usize, j: usize, c: Bound) {
        let d = self.dim();
        for (a, b) in [(i, j), (bar(j), bar(i))] {
            if c < self.m[a * d + b] {
                self.m[a * d + b] = c.clone();
            }
        }
    }

    /// Tight closure. Returns `false` when the integer solution set is empty.
    fn close(&mut self) -> bool {
        let d = self.dim();
        loop {
            for k in 0..d {
                for i in 0..d {
                    let mik = self.m[i * d + k].clone();
                    if mik.is_inf() {
                        continue;
                    }
                    for j in 0..d {
                        let mkj = &self.m[k * d + j];
                        if mkj.is_inf() {
                            continue;
                        }
                        let v = mik.add(mkj);
                        if v < self.m[i * d + j] {
                            self.m[i * d + j] = v;
                        }
                    }
                }
            }
            for i in 0..d {
                if self.m[i * d + i].is_negative() {
                    return false;
                }
            }
            let mut changed = false;
            for i in 0..d {
                let e = &self.m[i * d + bar(i)];
                if e.is_inf() {
                    continue;
                }
                let t = e.floor_half().twice();
                if &t < e {
                    self.m[i * d + bar(i)] = t;
                    changed = true;
                }
            }
            for i in 0..d {
                let a = self.m[i * d + bar(i)].clone();
                if a.is_inf() {
                    continue;
                }
                for j in 0..d {
                    let b = &self.m[bar(j) * d + j];
                    if b.is_inf() {
                        continue;
                    }
                    let v = a.floor_half().add(&b.floor_half());
                    if v < self.m[i * d + j] {
                        self.m[i * d + j] = v;
                        changed = true;
                    }
                }
            }
            if !changed {
                for i in 0..d {
                    if self.m[i * d + bar(i)].add(&self.m[bar(i) * d + i]).is_negative() {
                        return false;
                    }
                }
                return true;
            }
        }
    }
}

/// Names of the unprimed variables `x`; relations range over `x ∪ x'`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct VarSet {
    names: Vec<String>,
}

impl VarSet {
    pub fn new<S: AsRef<str>>(names: &[S]) -> Result<Arc<VarSet>, OctError> {
        let names: Vec<String> = names.iter().map(|s| s.as_ref().to_string()).collect();
        if names.is_empty() {
            return Err(OctError::BadVars("empty variable set".into()));
        }
        for (i, n) in names.iter().enumerate() {
            let ok = n.chars().next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
                && n.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
            if !ok {
                return Err(OctError::BadVars(format!("bad name `{n}`")));
            }
            if names[..i].contains(n) {
                return Err(OctError::BadVars(format!("duplicate `{n}`")));
            }
        }
        Ok(Arc::new(VarSet { names }))
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Column of `name` (unprimed) or `name'` (primed).
    pub fn column(&self, name: &str) -> Option<usize> {
        let (base, primed) = match name.strip_suffix('\'') {
            Some(b) => (b, true),
            None => (name, false),
        };
        let i = self.names.iter().position(|n| n == base)?;
        Some(if primed { i + self.len() } else { i })
    }

    pub fn column_name(&self, c: usize) -> String {
        let n = self.len();
        if c < n {
            self.names[c].clone()
        } else {
            format!("{}'", self.names[c - n])
        }
    }
}

/// An atom `s1*u + s2*w <= c` (or `s*u <= c`) with `s ∈ {+1,-1}` over columns.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Atom {
    pub terms: Vec<(usize, i8)>,
    pub bound: BigInt,
}

/// A relation over `x ∪ x'`, kept tightly closed.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct OctRelation {
    vars: Arc<VarSet>,
    dbm: Option<Dbm>,
}

impl OctRelation {
    pub fn top(vars: &Arc<VarSet>) -> OctRelation {
        OctRelation { vars: vars.clone(), dbm: Some(Dbm::top(2 * vars.len())) }
    }

    pub fn empty(vars: &Arc<VarSet>) -> OctRelation {
        OctRelation { vars: vars.clone(), dbm: None }
    }

    /// `x' = x` for every variable.
    pub fn identity(vars: &Arc<VarSet>) -> OctRelation {
        let n = vars.len();
        let mut d = Dbm::top(2 * n);
        for v in 0..n {
            d.add(2 * v, 2 * (v + n), Bound::Small(0));
            d.add(2 * (v + n), 2 * v, Bound::Small(0));
        }
        let mut r = OctRelation { vars: vars.clone(), dbm: Some(d) };
        r.normalize();
        r
    }

    pub fn vars(&self) -> &Arc<VarSet> {
        &self.vars
    }

    pub fn is_empty(&self) -> bool {
        self.dbm.is_none()
    }

    fn normalize(&mut self) {
        if let Some(d) = &mut self.dbm {
            if !d.close() {
                self.dbm = None;
            }
        }
    }

    fn check(&self, o: &OctRelation) -> Result<(), OctError> {
        if self.vars == o.vars {
            Ok(())
        } else {
            Err(OctError::VarMismatch)
        }
    }

    /// Builds a relation from atoms (unclosed input is fine).
    pub fn from_atoms(vars: &Arc<VarSet>, atoms: &[Atom]) -> OctRelation {
        let mut r = OctRelation::top(vars);
        let d = r.dbm.as_mut().unwrap();
        for a in atoms {
            add_atom(d, a);
        }
        r.normalize();
        r
    }

    pub fn parse(text: &str, vars: &Arc<VarSet>) -> Result<OctRelation, OctError> {
        let atoms = parse_atoms(text, vars)?;
        match atoms {
            None => Ok(OctRelation::empty(vars)),
            Some(a) => Ok(OctRelation::from_atoms(vars, &a)),
        }
    }

    pub fn intersect(&self, o: &OctRelation) -> Result<OctRelation, OctError> {
        self.check(o)?;
        let (a, b) = match (&self.dbm, &o.dbm) {
            (Some(a), Some(b)) => (a, b),
            _ => return Ok(OctRelation::empty(&self.vars)),
        };
        let m = a.m.iter().zip(&b.m).map(|(x, y)| if x <= y { x.clone() } else { y.clone() }).collect();
        let mut r = OctRelation { vars: self.vars.clone(), dbm: Some(Dbm { nv: a.nv, m }) };
        r.normalize();
        Ok(r)
    }

    /// Relational composition: first `self`, then `o`.
    pub fn compose(&self, o: &OctRelation) -> Result<OctRelation, OctError> {
        self.check(o)?;
        let (a, b) = match (&self.dbm, &o.dbm) {
            (Some(a), Some(b)) => (a, b),
            _ => return Ok(OctRelation::empty(&self.vars)),
        };
        let n = self.vars.len();
        let d2 = 4 * n;
        let mut big = Dbm::top(3 * n);
        let d3 = big.dim();
        for i in 0..d2 {
            for j in 0..d2 {
                let x = &a.m[i * d2 + j];
                if !x.is_inf() && x < &big.m[i * d3 + j] {
                    big.m[i * d3 + j] = x.clone();
                }
                let (bi, bj) = (i + 2 * n, j + 2 * n);
                let y = &b.m[i * d2 + j];
                if !y.is_inf() && y < &big.m[bi * d3 + bj] {
                    big.m[bi * d3 + bj] = y.clone();
                }
            }
        }
        if !big.close() {
            return Ok(OctRelation::empty(&self.vars));
        }
        let lit = |l: usize| if l < 2 * n { l } else { l + 2 * n };
        let mut m = Vec::with_capacity(d2 * d2);
        for i in 0..d2 {
            for j in 0..d2 {
                m.push(big.m[lit(i) * d3 + lit(j)].clone());
            }
        }
        let mut r = OctRelation { vars: self.vars.clone(), dbm: Some(Dbm { nv: 2 * n, m }) };
        r.normalize();
        Ok(r)
    }

    pub fn power(&self, k: u64) -> OctRelation {
        let mut acc = OctRelation::identity(&self.vars);
        let mut base = self.clone();
        let mut k = k;
        while k > 0 {
            if k & 1 == 1 {
                acc = acc.compose(&base).unwrap();
            }
            k >>= 1;
            if k > 0 {
                base = base.compose(&base).unwrap();
            }
        }
        acc
    }

    /// Existentially quantifies the given columns (they become unconstrained).
    pub fn forget(&self, cols: &[usize]) -> OctRelation {
        let mut r = self.clone();
        if let Some(d) = &mut r.dbm {
            let dim = d.dim();
            for &c in cols {
                for l in [2 * c, 2 * c + 1] {
                    for o in 0..dim {
                        if o != l {
                            d.m[l * dim + o] = Bound::Inf;
                            d.m[o * dim + l] = Bound::Inf;
                        }
                    }
                }
            }
        }
        r
    }

    /// Canonical equality of solution sets.
    pub fn equal(&self, o: &OctRelation) -> Result<bool, OctError> {
        self.check(o)?;
        Ok(self.dbm == o.dbm)
    }

    /// Whether `vals` (one value per column, unprimed then primed) is a solution.
    pub fn contains(&self, vals: &[i64]) -> bool {
        let d = match &self.dbm {
            Some(d) => d,
            None => return false,
        };
        let n2 = d.nv;
        assert_eq!(vals.len(), n2);
        let lit = |l: usize| -> i128 {
            let v = vals[l / 2] as i128;
            if l % 2 == 0 {
                v
            } else {
                -v
            }
        };
        for i in 0..2 * n2 {
            for j in 0..2 * n2 {
                let diff = BigInt::from(lit(j) - lit(i));
                if !d.get(i, j).fits(&diff) {
                    return false;
                }
            }
        }
        true
    }

    /// Finite atoms of the closed matrix, one per coherent pair, sorted.
    pub fn atoms(&self) -> Vec<Atom> {
        let d = match &self.dbm {
            Some(d) => d,
            None => return vec![],
        };
        let dim = d.dim();
        let mut out = Vec::new();
        for i in 0..dim {
            for j in 0..dim {
                if i == j || (bar(j), bar(i)) < (i, j) {
                    continue;
                }
                let c = d.get(i, j);
                if c.is_inf() {
                    continue;
                }
                out.push(entry_atom(i, j, c));
            }
        }
        out.sort();
        out
    }

    /// Sorted canonical dump, one `±u ±w <= c` atom per line.
    pub fn canonical(&self) -> String {
        if self.is_empty() {
            return "false".into();
        }
        let lines: Vec<String> = self.atoms().iter().map(|a| self.atom_canonical(a)).collect();
        if lines.is_empty() {
            "true".into()
        } else {
            lines.join("\n")
        }
    }

    fn atom_canonical(&self, a: &Atom) -> String {
        let mut s = String::new();
        for (k, (c, sg)) in a.terms.iter().enumerate() {
            if k > 0 {
                s.push(' ');
            }
            s.push(if *sg > 0 { '+' } else { '-' });
            s.push_str(&self.vars.column_name(*c));
        }
        format!("{s} <= {}", a.bound)
    }

    /// Non-redundant constraints, equalities merged, human-readable.
    pub fn pretty(&self) -> String {
        if self.is_empty() {
            return "false".into();
        }
        let units = self.minimal_units();
        if units.is_empty() {
            return "true".into();
        }
        units.iter().map(|u| self.render_unit(u)).collect::<Vec<_>>().join(", ")
    }

    /// Size of the encoding: one unit per finite entry plus the bit length of its bound.
    pub fn size(&self) -> usize {
        self.atoms().iter().map(|a| 1 + a.bound.bits() as usize).sum()
    }

    fn minimal_units(&self) -> Vec<Unit> {
        let atoms = self.atoms();
        let mut units: Vec<Unit> = Vec::new();
        let mut used = vec![false; atoms.len()];
        for i in 0..atoms.len() {
            if used[i] {
                continue;
            }
            used[i] = true;
            let neg = negate_terms(&atoms[i].terms);
            let twin =
                (0..atoms.len()).find(|&j| !used[j] && atoms[j].terms == neg && atoms[j].bound == -&atoms[i].bound);
            match twin {
                Some(j) => {
                    used[j] = true;
                    units.push(Unit { atoms: vec![atoms[i].clone(), atoms[j].clone()] });
                }
                None => units.push(Unit { atoms: vec![atoms[i].clone()] }),
            }
        }
        // try to drop binary units first, then unary ones
        let mut order: Vec<usize> = (0..units.len()).collect();
        order.sort_by_key(|&u| (std::cmp::Reverse(units[u].atoms[0].terms.len()), std::cmp::Reverse(u)));
        let mut keep = vec![true; units.len()];
        for &u in &order {
            keep[u] = false;
            let rest: Vec<Atom> = (0..units.len()).filter(|&v| keep[v]).flat_map(|v| units[v].atoms.clone()).collect();
            if OctRelation::from_atoms(&self.vars, &rest) != *self {
                keep[u] = true;
            }
        }
        let mut out: Vec<Unit> = (0..units.len()).filter(|&u| keep[u]).map(|u| units[u].clone()).collect();
        out.sort_by_key(|u| {
            let t = &u.atoms[0].terms;
            (t.iter().map(|e| e.0).max(), t.clone())
        });
        out
    }

    fn render_unit(&self, u: &Unit) -> String {
        let a = &u.atoms[0];
        let eq = u.atoms.len() == 2;
        let name = |c: usize| self.vars.column_name(c);
        let n = self.vars.len();
        match a.terms.as_slice() {
            [(c, s)] => {
                let b = if *s > 0 { a.bound.clone() } else { -&a.bound };
                if eq {
                    format!("{} = {}", name(*c), b)
                } else if *s > 0 {
                    format!("{} <= {}", name(*c), b)
                } else {
                    format!("{} >= {}", name(*c), b)
                }
            }
            [(c1, s1), (c2, s2)] => {
                if s1 == s2 {
                    let b = if *s1 > 0 { a.bound.clone() } else { -&a.bound };
                    let op = if eq {
                        "="
                    } else if *s1 > 0 {
                        "<="
                    } else {
                        ">="
                    };
                    format!("{} + {} {op} {}", name(*c1), name(*c2), b)
                } else {
                    // orient as `u - w`, preferring a primed `u`
                    let (pos, negc) = if *s1 > 0 { (*c1, *c2) } else { (*c2, *c1) };
                    let (u, w, b, flip) = if pos < n && negc >= n {
                        (negc, pos, -&a.bound, true)
                    } else {
                        (pos, negc, a.bound.clone(), false)
                    };
                    if eq {
                        let sign = if b < BigInt::zero() {
                            format!(" - {}", -&b)
                        } else if b.is_zero() {
                            String::new()
                        } else {
                            format!(" + {b}")
                        };
                        format!("{} = {}{}", name(u), name(w), sign)
                    } else {
                        let op = if flip { ">=" } else { "<=" };
                        format!("{} - {} {op} {}", name(u), name(w), b)
                    }
                }
            }
            _ => unreachable!(),
        }
    }
}

impl fmt::Display for OctRelation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.pretty())
    }
}

#[derive(Clone, Debug)]
struct Unit {
    atoms: Vec<Atom>,
}

fn negate_terms(t: &[(usize, i8)]) -> Vec<(usize, i8)> {
    t.iter().map(|(c, s)| (*c, -s)).collect()
}

fn lit_of(c: usize, s: i8) -> usize {
    if s > 0 {
        2 * c
    } else {
        2 * c + 1
    }
}

fn entry_atom(i: usize, j: usize, c: &Bound) -> Atom {
    let b = c.to_big().unwrap();
    let sj: i8 = if j % 2 == 0 { 1 } else { -1 };
    if i == bar(j) {
        // 2 * L_j <= c
        return Atom { terms: vec![(j / 2, sj)], bound: b.div_floor(&BigInt::from(2)) };
    }
    let si: i8 = if i % 2 == 0 { -1 } else { 1 };
    let mut terms = vec![(j / 2, sj), (i / 2, si)];
    terms.sort();
    Atom { terms, bound: b }
}

fn add_atom(d: &mut Dbm, a: &Atom) {
    let c = Bound::from_big(a.bound.clone());
    match a.terms.as_slice() {
        [(u, s)] => {
            let j = lit_of(*u, *s);
            d.add(bar(j), j, c.twice());
        }
        [(u, su), (w, sw)] if u == w => {
            if su == sw {
                let j = lit_of(*u, *su);
                d.add(bar(j), j, c);
            } else if a.bound < BigInt::zero() {
                d.add(0, 0, Bound::Small(-1));
            }
        }
        [(u, su), (w, sw)] => {
            let j = lit_of(*u, *su);
            let i = bar(lit_of(*w, *sw));
            d.add(i, j, c);
        }
        _ => unreachable!("atom arity"),
    }
}

// ---------------------------------------------------------------------------
// Constraint parser

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(BigInt),
    Ident(String),
    Plus,
    Minus,
    Star,
    Sep,
    Rel(Rel),
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Rel {
    Le,
    Lt,
    Ge,
    Gt,
    Eq,
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>, OctError> {
    let cs: Vec<char> = text.chars().collect();
    let mut out = vec![];
    let mut i = 0;
    let err = |col: usize, msg: &str| OctError::Syntax { col: col + 1, msg: msg.into() };
    while i < cs.len() {
        let c = cs[i];
        let start = i;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c.is_ascii_digit() {
            while i < cs.len() && cs[i].is_ascii_digit() {
                i += 1;
            }
            let s: String = cs[start..i].iter().collect();
            out.push((Tok::Num(s.parse().unwrap()), start));
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            while i < cs.len() && (cs[i].is_ascii_alphanumeric() || cs[i] == '_') {
                i += 1;
            }
            if i < cs.len() && cs[i] == '\'' {
                i += 1;
            }
            let s: String = cs[start..i].iter().collect();
            if s == "and" {
                out.push((Tok::Sep, start));
            } else {
                out.push((Tok::Ident(s), start));
            }
            continue;
        }
        let two: String = cs[i..(i + 2).min(cs.len())].iter().collect();
        let (tok, len) = match (c, two.as_str()) {
            (_, "<=") => (Tok::Rel(Rel::Le), 2),
            (_, ">=") => (Tok::Rel(Rel::Ge), 2),
            (_, "==") => (Tok::Rel(Rel::Eq), 2),
            (_, "&&") => (Tok::Sep, 2),
            ('≤', _) => (Tok::Rel(Rel::Le), 1),
            ('≥', _) => (Tok::Rel(Rel::Ge), 1),
            ('<', _) => (Tok::Rel(Rel::Lt), 1),
            ('>', _) => (Tok::Rel(Rel::Gt), 1),
            ('=', _) => (Tok::Rel(Rel::Eq), 1),
            ('+', _) => (Tok::Plus, 1),
            ('-', _) => (Tok::Minus, 1),
            ('*', _) => (Tok::Star, 1),
            (',', _) | (';', _) | ('∧', _) => (Tok::Sep, 1),
            _ => return Err(err(i, &format!("unexpected character `{c}`"))),
        };
        out.push((tok, start));
        i += len;
    }
    Ok(out)
}

/// Linear form `Σ coef·col + k`.
#[derive(Clone, Debug, Default)]
struct Lin {
    coefs: Vec<(usize, BigInt)>,
    k: BigInt,
}

impl Lin {
    fn add_term(&mut self, c: usize, v: BigInt) {
        match self.coefs.iter_mut().find(|(x, _)| *x == c) {
            Some(e) => e.1 += v,
            None => self.coefs.push((c, v)),
        }
        self.coefs.retain(|(_, v)| !v.is_zero());
    }
    fn sub(mut self, o: &Lin) -> Lin {
        for (c, v) in &o.coefs {
            self.add_term(*c, -v);
        }
        self.k -= &o.k;
        self
    }
    fn neg(&self) -> Lin {
        Lin::default().sub(self)
    }
}

struct Parser<'a> {
    toks: &'a [(Tok, usize)],
    pos: usize,
    vars: &'a VarSet,
    end: usize,
}

impl<'a> Parser<'a> {
    fn col(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end, |t| t.1) + 1
    }
    fn err(&self, msg: &str) -> OctError {
        OctError::Syntax { col: self.col(), msg: msg.into() }
    }
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.0)
    }

    fn expr(&mut self) -> Result<Lin, OctError> {
        let mut lin = Lin::default();
        let mut first = true;
        loop {
            let mut sign = BigInt::from(1);
            match self.peek() {
                Some(Tok::Plus) => self.pos += 1,
                Some(Tok::Minus) => {
                    sign = BigInt::from(-1);
                    self.pos += 1
                }
                _ if first => {}
                _ => return Ok(lin),
            }
            first = false;
            match self.peek().cloned() {
                Some(Tok::Num(n)) => {
                    self.pos += 1;
                    if self.peek() == Some(&Tok::Star) {
                        self.pos += 1;
                    }
                    match self.peek().cloned() {
                        Some(Tok::Ident(v)) => {
                            let c = self.var(&v)?;
                            self.pos += 1;
                            lin.add_term(c, sign * n);
                        }
                        _ => lin.k += sign * n,
                    }
                }
                Some(Tok::Ident(v)) => {
                    let c = self.var(&v)?;
                    self.pos += 1;
                    lin.add_term(c, sign);
                }
                _ => return Err(self.err("expected a number or a variable")),
            }
        }
    }

    fn var(&self, v: &str) -> Result<usize, OctError> {
        self.vars.column(v).ok_or_else(|| self.err(&format!("unknown variable `{v}`")))
    }
}

/// `lhs op rhs` normalized to `Σ coef·col <= k` (or `= k`), with source text.
#[derive(Clone, Debug)]
struct LinAtom {
    lin: Lin,
    eq: bool,
    text: String,
}

/// Parses a conjunction. `Ok(None)` means the constraint set is unsatisfiable
/// on its face (`false` or a violated constant atom).
fn parse_atoms(text: &str, vars: &Arc<VarSet>) -> Result<Option<Vec<Atom>>, OctError> {
    let t = text.trim();
    if t.is_empty() || t == "true" {
        return Ok(Some(vec![]));
    }
    if t == "false" {
        return Ok(None);
    }
    let toks = lex(text)?;
    let mut p = Parser { toks: &toks, pos: 0, vars, end: text.chars().count() };
    let mut lin_atoms = Vec::new();
    loop {
        let start = p.toks.get(p.pos).map_or(p.end, |t| t.1);
        let mut lhs = p.expr()?;
        let mut saw = false;
        while let Some(Tok::Rel(r)) = p.peek().cloned() {
            saw = true;
            p.pos += 1;
            let rhs = p.expr()?;
            let stop = p.toks.get(p.pos).map_or(p.end, |t| t.1);
            let src: String = text.chars().skip(start).take(stop - start).collect();
            let src = src.trim().to_string();
            // lhs - rhs (op) 0  ==>  Σ <= k form
            let diff = lhs.clone().sub(&rhs);
            let one = BigInt::from(1);
            let mk = |lin: Lin, strict: bool| {
                let k = -&lin.k - if strict { one.clone() } else { BigInt::zero() };
                LinAtom { lin: Lin { coefs: lin.coefs, k }, eq: false, text: src.clone() }
            };
            match r {
                Rel::Le => lin_atoms.push(mk(diff, false)),
                Rel::Lt => lin_atoms.push(mk(diff, true)),
                Rel::Ge => lin_atoms.push(mk(diff.neg(), false)),
                Rel::Gt => lin_atoms.push(mk(diff.neg(), true)),
                Rel::Eq => {
                    let mut a = mk(diff, false);
                    a.eq = true;
                    lin_atoms.push(a);
                }
            }
            lhs = rhs;
        }
        if !saw {
            return Err(p.err("expected a relational operator"));
        }
        match p.peek() {
            None => break,
            Some(Tok::Sep) => p.pos += 1,
            Some(_) => return Err(p.err("expected `,`")),
        }
    }
    substitute_units(&mut lin_atoms);
    let mut atoms = Vec::new();
    for la in &lin_atoms {
        let mut forms = vec![la.lin.clone()];
        if la.eq {
            forms.push(Lin { coefs: la.lin.neg().coefs, k: -&la.lin.k });
        }
        for f in forms {
            match octagonal(&f) {
                Oct::Atom(a) => atoms.push(a),
                Oct::True => {}
                Oct::False => return Ok(None),
                Oct::Not => return Err(OctError::NonOctagonal(la.text.clone())),
            }
        }
    }
    Ok(Some(atoms))
}

/// Substitutes variables fixed by unit equalities into atoms that are not octagonal.
fn substitute_units(atoms: &mut [LinAtom]) {
    loop {
        let mut fixed: Vec<(usize, BigInt)> = vec![];
        for a in atoms.iter() {
            if a.eq && a.lin.coefs.len() == 1 {
                let (c, v) = &a.lin.coefs[0];
                if v == &BigInt::from(1) {
                    fixed.push((*c, a.lin.k.clone()));
                } else if v == &BigInt::from(-1) {
                    fixed.push((*c, -&a.lin.k));
                }
            }
        }
        let mut changed = false;
        for a in atoms.iter_mut() {
            if !matches!(octagonal(&a.lin), Oct::Not) {
                continue;
            }
            for (c, val) in &fixed {
                if let Some(i) = a.lin.coefs.iter().position(|(x, _)| x == c) {
                    let (_, coef) = a.lin.coefs.remove(i);
                    a.lin.k -= coef * val;
                    changed = true;
                }
            }
        }
        if !changed {
            return;
        }
    }
}

enum Oct {
    Atom(Atom),
    True,
    False,
    Not,
}

fn octagonal(l: &Lin) -> Oct {
    let unit = |v: &BigInt| -> Option<i8> {
        if v == &BigInt::from(1) {
            Some(1)
        } else if v == &BigInt::from(-1) {
            Some(-1)
        } else {
            None
        }
    };
    match l.coefs.as_slice() {
        [] => {
            if l.k >= BigInt::zero() {
                Oct::True
            } else {
                Oct::False
            }
        }
        [(c, v)] => match unit(v) {
            Some(s) => Oct::Atom(Atom { terms: vec![(*c, s)], bound: l.k.clone() }),
            None if v == &BigInt::from(2) || v == &BigInt::from(-2) => {
                let s = if v > &BigInt::zero() { 1 } else { -1 };
                Oct::Atom(Atom { terms: vec![(*c, s), (*c, s)], bound: l.k.clone() })
            }
            None => Oct::Not,
        },
        [(c1, v1), (c2, v2)] => match (unit(v1), unit(v2)) {
            (Some(s1), Some(s2)) => {
                let mut terms = vec![(*c1, s1), (*c2, s2)];
                terms.sort();
                Oct::Atom(Atom { terms, bound: l.k.clone() })
            }
            _ => Oct::Not,
        },
        _ => Oct::Not,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vs() -> Arc<VarSet> {
        VarSet::new(&["x", "z"]).unwrap()
    }

    #[test]
    fn parse_and_close() {
        let v = vs();
        let r = OctRelation::parse("x > 0, x' = x", &v).unwrap();
        assert!(r.canonical().contains("-x <= -1"), "{}", r.canonical());
        assert!(r.canonical().contains("-x' <= -1"), "{}", r.canonical());
        assert_eq!(r.pretty(), "x >= 1, x' = x");
        let e = OctRelation::parse("x <= 0, x >= 1", &v).unwrap();
        assert!(e.is_empty());
    }

    #[test]
    fn integer_tightening() {
        let v = vs();
        // x + z = 1 and x - z = 0 has no integer solution
        let r = OctRelation::parse("x + z = 1, x - z = 0", &v).unwrap();
        assert!(r.is_empty());
        let r = OctRelation::parse("2x <= 3", &v).unwrap();
        assert_eq!(r.canonical(), "+x <= 1");
    }

    #[test]
    fn errors() {
        let v = vs();
        assert!(matches!(OctRelation::parse("x + y <= 1", &v), Err(OctError::Syntax { .. })));
        assert!(matches!(OctRelation::parse("x + z + z' <= 1", &v), Err(OctError::NonOctagonal(_))));
        assert!(matches!(OctRelation::parse("x <=", &v), Err(OctError::Syntax { .. })));
        let w = VarSet::new(&["x"]).unwrap();
        let a = OctRelation::top(&v);
        let b = OctRelation::top(&w);
        assert_eq!(a.compose(&b), Err(OctError::VarMismatch));
    }

    #[test]
    fn unit_substitution() {
        let v = vs();
        let a = OctRelation::parse("x = 2, z' = 2x", &v).unwrap();
        let b = OctRelation::parse("x = 2, z' = 4", &v).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn compose_and_power() {
        let v = vs();
        let inc = OctRelation::parse("x' = x + 1, z' = z", &v).unwrap();
        let three = inc.power(3);
        assert_eq!(three, OctRelation::parse("x' = x + 3, z' = z", &v).unwrap());
        assert_eq!(inc.power(0), OctRelation::identity(&v));
        let guard = OctRelation::parse("x = 0, x' = x, z' = z", &v).unwrap();
        let r = guard.compose(&inc).unwrap();
        assert_eq!(r.pretty(), "x = 0, x' = 1, z' = z");
    }

    #[test]
    fn big_bounds() {
        let v = VarSet::new(&["x"]).unwrap();
        let r = OctRelation::parse("x' = x + 4611686018427387904", &v).unwrap();
        let s = r.power(8);
        assert_eq!(s, OctRelation::parse("x' = x + 36893488147419103232", &v).unwrap());
    }

    #[test]
    fn pretty_round_trip() {
        let v = vs();
        for t in ["x = 1, z' = 2", "x' - x <= 3, z >= -2", "x + z' = 4", "x' = x - 1", "true"] {
            let r = OctRelation::parse(t, &v).unwrap();
            let again = OctRelation::parse(&r.pretty(), &v).unwrap();
            assert_eq!(r, again, "{t} -> {}", r.pretty());
        }
    }
}
