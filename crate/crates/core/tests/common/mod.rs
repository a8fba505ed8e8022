#![allow(dead_code)]

use rand::Rng;

use flatoct::grammar::{Grammar, Nt, Sym, Term};

/// A random grammar whose language is contained in `a1* ... ad*`: every
/// nonterminal gets a letter interval and productions respect the nesting of
/// intervals. Returns the grammar, its start `X0` and the letters in order.
pub fn letter_bounded_grammar(rng: &mut impl Rng, max_letters: usize) -> (Grammar, Nt, Vec<Term>) {
    let d = rng.gen_range(1..=max_letters);
    let n = rng.gen_range(1..=4usize);
    let mut g = Grammar::new();
    let nts: Vec<Nt> = (0..n).map(|i| g.nt(&format!("X{i}"))).collect();
    let letters: Vec<Term> = (1..=d).map(|i| g.t(&format!("a{i}"))).collect();
    let iv: Vec<(usize, usize)> = (0..n)
        .map(|i| {
            if i == 0 {
                (0, d - 1)
            } else {
                let a = rng.gen_range(0..d);
                let b = rng.gen_range(0..d);
                (a.min(b), a.max(b))
            }
        })
        .collect();
    let inside = |q: usize, lo: usize, hi: usize| iv[q].0 >= lo && iv[q].1 <= hi;
    let count = rng.gen_range(n..=8);
    let mut id = 1;
    for c in 0..count {
        let p = if c < n { c } else { rng.gen_range(0..n) };
        let (lo, hi) = iv[p];
        let a = |i: usize| Sym::T(letters[i]);
        let body: Vec<Sym> = match rng.gen_range(0..11) {
            0 => vec![],
            1 | 2 => {
                let i = rng.gen_range(lo..=hi);
                let j = rng.gen_range(i..=hi);
                if i == j {
                    vec![a(i)]
                } else {
                    vec![a(i), a(j)]
                }
            }
            3 | 4 => match rng.gen_range(0..3) {
                0 => vec![a(lo), Sym::N(nts[p]), a(hi)],
                1 => vec![a(lo), Sym::N(nts[p])],
                _ => vec![Sym::N(nts[p]), a(hi)],
            },
            5..=7 => {
                let cands: Vec<usize> = (0..n).filter(|&q| inside(q, lo, hi)).collect();
                let q = cands[rng.gen_range(0..cands.len())];
                let mut b = vec![];
                if rng.gen_bool(0.6) {
                    b.push(a(rng.gen_range(lo..=iv[q].0)));
                }
                b.push(Sym::N(nts[q]));
                if rng.gen_bool(0.6) {
                    b.push(a(rng.gen_range(iv[q].1..=hi)));
                }
                b
            }
            _ => {
                let cands: Vec<(usize, usize)> = (0..n)
                    .flat_map(|q| (0..n).map(move |r| (q, r)))
                    .filter(|&(q, r)| inside(q, lo, hi) && inside(r, lo, hi) && iv[q].1 <= iv[r].0)
                    .collect();
                if cands.is_empty() {
                    vec![a(lo)]
                } else {
                    let (q, r) = cands[rng.gen_range(0..cands.len())];
                    vec![Sym::N(nts[q]), Sym::N(nts[r])]
                }
            }
        };
        if g.add_production(id, nts[p], body).is_ok() {
            id += 1;
        }
    }
    (g, nts[0], letters)
}

/// Whether `w` is in `a1* ... ad*` for the given letter order.
pub fn in_letter_order(w: &[Term], letters: &[Term]) -> bool {
    let pos: Vec<usize> = w.iter().map(|a| letters.iter().position(|l| l == a).unwrap()).collect();
    pos.windows(2).all(|p| p[0] <= p[1])
}
