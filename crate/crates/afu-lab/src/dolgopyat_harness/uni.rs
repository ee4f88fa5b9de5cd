use crate::interval_map::{InverseBranch, MapSpec, Query, Roof};
use crate::{Error, Result};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Best UNI pair on one atom p.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct UniAtom {
    pub lo: f64,
    pub hi: f64,
    /// max over pairs of inf_p |ψ′|
    pub d_best: f64,
    /// sup_p |ψ′| for the chosen pair
    pub c0: f64,
    pub h1: InverseBranch,
    pub h2: InverseBranch,
    /// min over the pair of inf_p |h′|
    pub p_min: f64,
    pub candidates: usize,
    pub exhaustive: bool,
}

fn inset_grid(lo: f64, hi: f64, m: usize) -> Vec<f64> {
    let inset = (hi - lo) * 1e-9;
    (0..m).map(|t| lo + inset + (hi - lo - 2.0 * inset) * t as f64 / (m - 1).max(1) as f64).collect()
}

/// Inverse branches of F^n whose domain contains p: all of them when there are
/// at most `cap`, otherwise `cap` random backward words.
pub fn branches_over(map: &MapSpec, n: usize, p: (f64, f64), cap: usize, seed: u64) -> (Vec<InverseBranch>, bool) {
    let tol = 1e-12 * map.len();
    if let Ok(hs) = map.inverse_branches(n, Query::Interval(p.0, p.1), 4 * cap) {
        let full: Vec<InverseBranch> =
            hs.into_iter().filter(|h| h.domain.0 <= p.0 + tol && h.domain.1 >= p.1 - tol).collect();
        if full.len() <= cap {
            return (full, true);
        }
    }
    (random_words(map, n, p, cap, seed), false)
}

/// Random backward words of length n·power whose composed inverse is defined on all of p.
pub fn random_words(map: &MapSpec, n: usize, p: (f64, f64), count: usize, seed: u64) -> Vec<InverseBranch> {
    let steps = n * map.power;
    let tol = 1e-12 * map.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<InverseBranch> = Vec::new();
    for _ in 0..count * 16 {
        if out.len() >= count {
            break;
        }
        let mut j = p;
        let mut rev = Vec::with_capacity(steps);
        for _ in 0..steps {
            let cands: Vec<usize> = (0..map.branches.len())
                .filter(|&c| map.branches[c].image.0 <= j.0 + tol && map.branches[c].image.1 >= j.1 - tol)
                .collect();
            if cands.is_empty() {
                break;
            }
            let c = cands[rng.gen_range(0..cands.len())];
            let b = &map.branches[c];
            let (a0, a1) = (b.inverse(j.0.max(b.image.0)), b.inverse(j.1.min(b.image.1)));
            j = (a0.min(a1), a0.max(a1));
            rev.push(c);
        }
        if rev.len() < steps {
            continue;
        }
        let word: Vec<usize> = rev.into_iter().rev().collect();
        if out.iter().any(|h| h.word == word) {
            continue;
        }
        out.push(InverseBranch { word, domain: p, range: j });
    }
    out
}

/// UNI on the atom p at n₀ steps of F: maximizes inf_p |ψ′| over pairs of
/// candidate branches, ψ′ from the chain rule along the inverse orbits.
pub fn check_uni(map: &MapSpec, roof: &Roof, n0: usize, p: (f64, f64), words: usize, grid: usize, seed: u64) -> Result<UniAtom> {
    if !(p.1 > p.0) {
        return Err(Error::InvalidParams(format!("empty atom [{}, {}]", p.0, p.1)));
    }
    let (hs, exhaustive) = branches_over(map, n0, p, words, seed);
    if hs.is_empty() {
        return Err(Error::InvalidParams(format!("no inverse branch of F^{n0} is defined on [{}, {}]", p.0, p.1)));
    }
    let xs = inset_grid(p.0, p.1, grid.max(2));
    let evals: Vec<Vec<(f64, f64)>> = hs
        .iter()
        .map(|h| {
            xs.iter()
                .map(|&x| {
                    let e = map.eval_inverse(h, x, Some(roof));
                    (e.dphi, e.deriv)
                })
                .collect()
        })
        .collect();
    let (mut bi, mut bj, mut best) = (0usize, 0usize, -1.0f64);
    for i in 0..hs.len() {
        for j in (i + 1)..hs.len() {
            let inf = evals[i].iter().zip(&evals[j]).map(|(a, b)| (a.0 - b.0).abs()).fold(f64::INFINITY, f64::min);
            if inf > best {
                best = inf;
                bi = i;
                bj = j;
            }
        }
    }
    if hs.len() < 2 {
        best = 0.0;
        bj = 0;
    }
    let c0 = evals[bi].iter().zip(&evals[bj]).map(|(a, b)| (a.0 - b.0).abs()).fold(0.0, f64::max);
    let p_min = evals[bi].iter().chain(&evals[bj]).map(|e| e.1).fold(f64::INFINITY, f64::min);
    Ok(UniAtom {
        lo: p.0,
        hi: p.1,
        d_best: best.max(0.0),
        c0,
        h1: hs[bi].clone(),
        h2: hs[bj].clone(),
        p_min,
        candidates: hs.len(),
        exhaustive,
    })
}

/// ψ(y) = φ_{n₀}(h₁ y) − φ_{n₀}(h₂ y).
pub fn psi(map: &MapSpec, roof: &Roof, atom: &UniAtom, y: f64) -> f64 {
    map.eval_inverse(&atom.h1, y, Some(roof)).phi - map.eval_inverse(&atom.h2, y, Some(roof)).phi
}
