//! Finite-horizon ruin of a reinsured risk process.
//!
//! The walk `S_k` has centered Pareto increments; ruin means the reserve
//! deficit `S_k - c k` reaches `n a` within `n` steps while every individual
//! claim stays below the reinsurance cap `n b`. Crossing the level under the
//! cap takes at least `l* = ceil(a/b)` large claims.
//!
//! The conditional sampler plants `l*` claims truncated to `(gamma n, b n]`
//! among the `n` increments and accepts against the count of claims landing
//! in that band, so the auxiliary set it targets exactly is "at least `l*`
//! claims in `(gamma n, b n]`"; the estimator weight uses that same set,
//! keeping the mixture exactly unbiased. On the ruin event itself every
//! claim is capped by `n b`, so membership agrees with plain
//! threshold-exceedance counting there.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::counts::binomial_upper_tail;
use crate::error::{Error, Result};
use crate::estimator::{binomial_f64, Replication, RareEventModel};
use crate::heavy_tails::TailDistribution;

/// Parameters of the ruin problem.
#[derive(Debug, Clone)]
pub struct RuinSpec {
    /// Ruin level (scaled).
    pub a: f64,
    /// Reinsurance cap per claim (scaled).
    pub b: f64,
    /// Premium drift per step (unscaled per-step rate).
    pub c: f64,
    /// Centered claim-size law.
    pub dist: TailDistribution,
    /// Minimal number of capped claims needed to reach the level.
    pub l_star: u64,
}

impl RuinSpec {
    pub fn new(a: f64, b: f64, c: f64, dist: TailDistribution) -> Result<Self> {
        if !(a > 0.0 && b > 0.0 && c >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "need a > 0, b > 0, c >= 0; got a={a}, b={b}, c={c}"
            )));
        }
        let ratio = a / b;
        if (ratio - ratio.round()).abs() < 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "a must not be a multiple of b (a/b = {ratio})"
            )));
        }
        Ok(Self { a, b, c, dist, l_star: ratio.ceil() as u64 })
    }
}

/// Ruin event: every increment capped by `n b` and the drift-adjusted walk
/// reaches `n a`.
pub fn ruin_event(increments: &[f64], spec: &RuinSpec) -> bool {
    let n = increments.len() as f64;
    let cap = n * spec.b;
    let level = n * spec.a;
    let mut s = 0.0;
    let mut best = f64::NEG_INFINITY;
    for (k, &y) in increments.iter().enumerate() {
        if y > cap {
            return false;
        }
        s += y;
        best = best.max(s - spec.c * (k + 1) as f64);
    }
    best >= level
}

/// Threshold admissibility: enough capped jumps above `gamma` must be needed
/// to finish the climb after `l* - 1` maximal ones, and the critical ratio
/// must not be an integer.
pub fn ruin_gamma_admissible(spec: &RuinSpec, gamma: f64) -> bool {
    if !(gamma > 0.0) || gamma >= spec.b {
        return false;
    }
    let residual = spec.a - (spec.l_star - 1) as f64 * spec.b;
    let ratio = residual / gamma;
    if (ratio - ratio.round()).abs() < 1e-9 {
        return false;
    }
    ratio.ceil() > (spec.l_star + 1) as f64
}

/// Per-increment probability of landing in the planting band
/// `(gamma n, b n]`.
pub fn ruin_band_prob(n: u64, spec: &RuinSpec, gamma: f64) -> f64 {
    let nf = n as f64;
    (spec.dist.tail_right(gamma * nf) - spec.dist.tail_right(spec.b * nf)).max(0.0)
}

/// P(at least l* of the n increments land in the band), the auxiliary-set
/// probability used in the likelihood ratio.
pub fn ruin_prob_b(n: u64, spec: &RuinSpec, gamma: f64) -> f64 {
    binomial_upper_tail(n, ruin_band_prob(n, spec, gamma), spec.l_star)
}

/// Number of increments in the band.
pub fn ruin_band_count(increments: &[f64], spec: &RuinSpec, gamma: f64) -> u64 {
    let n = increments.len() as f64;
    let (lo, hi) = (gamma * n, spec.b * n);
    increments.iter().filter(|&&y| y > lo && y <= hi).count() as u64
}

/// Exact draw of the increment vector conditioned on at least `l*` band
/// claims: plant `l*` truncated claims at uniform positions, fill nominally,
/// accept with probability `1 / C(band count, l*)`.
pub fn ruin_sample_conditional(
    n: u64,
    spec: &RuinSpec,
    gamma: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<f64>, u64)> {
    let nf = n as f64;
    let (lo, hi) = (gamma * nf, spec.b * nf);
    let n = n as usize;
    let l_star = spec.l_star as usize;
    let mut increments = vec![0.0f64; n];
    let mut planted = vec![false; n];
    let mut iterations = 0u64;
    loop {
        iterations += 1;
        planted.iter_mut().for_each(|p| *p = false);
        for _ in 0..l_star {
            loop {
                let idx = ((rng.random::<f64>() * n as f64) as usize).min(n - 1);
                if !planted[idx] {
                    planted[idx] = true;
                    break;
                }
            }
        }
        let mut band = 0u64;
        for i in 0..n {
            increments[i] = if planted[i] {
                spec.dist.sample_truncated_right(lo, hi, rng)?
            } else {
                spec.dist.sample_nominal(rng)
            };
            if increments[i] > lo && increments[i] <= hi {
                band += 1;
            }
        }
        if rng.random::<f64>() * binomial_f64(band, spec.l_star) < 1.0 {
            return Ok((increments, iterations));
        }
    }
}

/// Ready-to-run estimator model at a fixed scale `n`.
pub struct RuinModel {
    pub spec: RuinSpec,
    pub n: u64,
    pub gamma: f64,
    p_aux: f64,
}

impl RuinModel {
    pub fn new(spec: RuinSpec, n: u64, gamma: f64) -> Result<Self> {
        if !ruin_gamma_admissible(&spec, gamma) {
            return Err(Error::InadmissibleGamma);
        }
        let p_aux = ruin_prob_b(n, &spec, gamma);
        if !(p_aux > 0.0) {
            return Err(Error::ZeroAuxiliaryProbability);
        }
        Ok(Self { spec, n, gamma, p_aux })
    }
}

impl RareEventModel for RuinModel {
    fn p_aux(&self) -> f64 {
        self.p_aux
    }

    fn replicate_nominal(&self, rng: &mut ChaCha8Rng) -> Result<Replication> {
        let increments: Vec<f64> =
            (0..self.n).map(|_| self.spec.dist.sample_nominal(rng)).collect();
        Ok(Replication {
            in_event: ruin_event(&increments, &self.spec),
            in_aux: ruin_band_count(&increments, &self.spec, self.gamma) >= self.spec.l_star,
            rejection_iters: 0,
        })
    }

    fn replicate_conditional(&self, rng: &mut ChaCha8Rng) -> Result<Replication> {
        let (increments, iterations) =
            ruin_sample_conditional(self.n, &self.spec, self.gamma, rng)?;
        Ok(Replication {
            in_event: ruin_event(&increments, &self.spec),
            in_aux: ruin_band_count(&increments, &self.spec, self.gamma) >= self.spec.l_star,
            rejection_iters: iterations,
        })
    }
}
