//! Index-set combinatorics for the jump-count lattice.
//!
//! A rare event that needs `l_i` big jumps in coordinate `i` carries the
//! large-deviations cost `I(l) = sum_i (beta_i - 1) l_i`. This module solves
//! the discrete problems built on that rate: the feasible minimizer `l*`, the
//! minimal boundary set `J` of lattice points just outside the sub-cost
//! region, the reduced set used when parts of `J` are provably irrelevant,
//! and the two-sided (down/up jump) variant for random walks.

use crate::error::{Error, Result};

/// Lattice point (l_1, ..., l_d) of jump counts.
pub type IndexVector = Vec<u32>;

/// Per-coordinate tail weights w_i = beta_i - 1 (> 0).
#[derive(Debug, Clone)]
pub struct RateWeights(Vec<f64>);

impl RateWeights {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.is_empty() || w.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "rate weights must be strictly positive, got {w:?}"
            )));
        }
        Ok(Self(w))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Rate function I(l) = sum_i w_i l_i.
pub fn rate(l: &[u32], w: &RateWeights) -> Result<f64> {
    if l.len() != w.dim() {
        return Err(Error::DimensionMismatch { expected: w.dim(), got: l.len() });
    }
    Ok(l.iter().zip(w.as_slice()).map(|(&li, &wi)| li as f64 * wi).sum())
}

/// Minimize the rate over a monotone feasible set.
///
/// `feasible` must be monotone: `l <= m` componentwise and `feasible(l)`
/// implies `feasible(m)`. The search first walks the diagonal to find an
/// upper bound on the optimal rate, then enumerates the sub-level box.
/// A tied minimum is an error: the downstream theory requires a unique
/// minimizer, and callers must perturb weights or split the event instead.
pub fn solve_l_star<F>(feasible: F, w: &RateWeights) -> Result<(IndexVector, f64)>
where
    F: Fn(&[u32]) -> bool,
{
    const DIAG_BOUND: u32 = 10_000;
    let d = w.dim();

    // Find any feasible point along the diagonal. Monotonicity guarantees
    // the diagonal at level max_i(m_i) is feasible whenever m is.
    let mut k = 0u32;
    loop {
        let probe = vec![k; d];
        if feasible(&probe) {
            break;
        }
        k += 1;
        if k > DIAG_BOUND {
            return Err(Error::Infeasible { bound: DIAG_BOUND });
        }
    }
    let mut best_rate = rate(&vec![k; d], w)?;
    let mut best: Option<IndexVector> = Some(vec![k; d]);
    let mut tied: Option<IndexVector> = None;

    // Enumerate every l with rate(l) <= best_rate, tightening as we go.
    let mut stack: Vec<IndexVector> = vec![Vec::with_capacity(d)];
    while let Some(prefix) = stack.pop() {
        if prefix.len() == d {
            if prefix == *best.as_ref().unwrap() {
                continue;
            }
            let r = rate(&prefix, w)?;
            if feasible(&prefix) {
                if r < best_rate - 1e-12 {
                    best_rate = r;
                    best = Some(prefix);
                    tied = None;
                } else if (r - best_rate).abs() <= 1e-12 {
                    tied = Some(prefix);
                }
            }
            continue;
        }
        let i = prefix.len();
        let used: f64 =
            prefix.iter().zip(w.as_slice()).map(|(&li, &wi)| li as f64 * wi).sum();
        let remaining = best_rate - used + 1e-12;
        let max_li = (remaining / w.as_slice()[i]).floor().max(0.0) as u32;
        for li in 0..=max_li {
            let mut next = prefix.clone();
            next.push(li);
            stack.push(next);
        }
    }

    let best = best.unwrap();
    if let Some(t) = tied {
        // A tie at the optimum violates the uniqueness assumption.
        if t != best {
            return Err(Error::NonUniqueMinimizer(best, t));
        }
    }
    Ok((best, best_rate))
}

/// The minimal boundary set `J`.
///
/// `I_<` is the set of lattice points other than `l*` with rate at most
/// `rate(l*)`; `J` collects the points outside `I_<` all of whose strict
/// componentwise predecessors lie in `I_<`. The partial order is
/// componentwise `<=` with inequality somewhere, which is exactly strict
/// inclusion of the corresponding jump-count cylinders.
pub fn enumerate_j(l_star: &[u32], w: &RateWeights) -> Result<Vec<IndexVector>> {
    let d = w.dim();
    if l_star.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: l_star.len() });
    }
    let r_star = rate(l_star, w)?;
    let max_w = w.as_slice().iter().cloned().fold(f64::MIN, f64::max);

    // Enumeration bound per coordinate; large enough for J and for the
    // rate-doubling test used by the reduced set.
    let bounds: Vec<u32> = w
        .as_slice()
        .iter()
        .map(|&wi| ((2.0 * r_star + max_w) / wi).ceil() as u32 + 1)
        .collect();

    let mut result = Vec::new();
    let mut cursor = vec![0u32; d];
    'outer: loop {
        if in_j(&cursor, l_star, r_star, w)? {
            result.push(cursor.clone());
        }
        // Odometer increment over the bounded box.
        for i in 0..d {
            if cursor[i] < bounds[i] {
                cursor[i] += 1;
                continue 'outer;
            }
            cursor[i] = 0;
        }
        break;
    }
    result.sort();
    Ok(result)
}

fn in_j(l: &[u32], l_star: &[u32], r_star: f64, w: &RateWeights) -> Result<bool> {
    let is_l_star = l == l_star;
    // Outside I_<: either l = l* or rate(l) > rate(l*).
    if !is_l_star && rate(l, w)? <= r_star + 1e-12 {
        return Ok(false);
    }
    // Every strict predecessor must lie in I_<. Because the rate is monotone
    // it suffices to check the maximal predecessors l - e_i, plus the
    // exclusion of l* itself from I_<.
    if !is_l_star {
        // l* ≺ l would place a non-I_< point strictly below l.
        let dominates = l_star.iter().zip(l).all(|(&a, &b)| a <= b);
        if dominates {
            return Ok(false);
        }
    }
    for i in 0..l.len() {
        if l[i] == 0 {
            continue;
        }
        let mut m = l.to_vec();
        m[i] -= 1;
        if rate(&m, w)? > r_star + 1e-12 {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Reduced index set of the corollary: from a caller-supplied `I ⊆ J` (the
/// entries the target set is provably bounded away from), drop every entry
/// whose rate exceeds twice the optimal rate and is unique within `I`.
pub fn reduce_j(i_set: &[IndexVector], l_star: &[u32], w: &RateWeights) -> Result<Vec<IndexVector>> {
    let r_star = rate(l_star, w)?;
    let rates: Vec<f64> = i_set.iter().map(|l| rate(l, w)).collect::<Result<_>>()?;
    let mut kept = Vec::new();
    for (k, l) in i_set.iter().enumerate() {
        let above_double = rates[k] > 2.0 * r_star + 1e-12;
        let unique_rate =
            rates.iter().enumerate().all(|(j, &r)| j == k || (r - rates[k]).abs() > 1e-12);
        if !(above_double && unique_rate) {
            kept.push(l.clone());
        }
    }
    Ok(kept)
}

/// Two-sided variant for random walks: minimize
/// `(alpha - 1) l_- + (beta - 1) l_+` over a monotone feasible set on
/// (down-count, up-count) pairs, and return the minimizer with its boundary
/// set.
pub fn solve_two_sided<F>(
    feasible: F,
    alpha: f64,
    beta: f64,
) -> Result<((u32, u32), Vec<IndexVector>)>
where
    F: Fn(u32, u32) -> bool,
{
    let w = RateWeights::new(vec![alpha - 1.0, beta - 1.0])?;
    let (l, _) = solve_l_star(|v| feasible(v[0], v[1]), &w)?;
    let j = enumerate_j(&l, &w)?;
    Ok(((l[0], l[1]), j))
}
