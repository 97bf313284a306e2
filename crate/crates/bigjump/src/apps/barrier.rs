//! Exercise probability of a down-in barrier option.
//!
//! The walk has two-sided regularly varying increments. Exercise requires
//! the drift-adjusted running minimum to knock the barrier `-n a` in and the
//! terminal value to finish above `n b`, which takes one big downward jump
//! followed by one big upward jump. The auxiliary set keeps that order:
//!
//! ```text
//! B = { exists i < j : Y_i < -gamma_- n, Y_j > gamma_+ n }.
//! ```

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::estimator::{Replication, RareEventModel};
use crate::heavy_tails::TailDistribution;

/// Parameters of the barrier problem.
#[derive(Debug, Clone)]
pub struct BarrierSpec {
    /// Barrier level (scaled, knocked at `-n a`).
    pub a: f64,
    /// Terminal level (scaled, exercise needs `S_n >= n b`).
    pub b: f64,
    /// Drift adjustment added to the running minimum.
    pub c: f64,
    /// Two-sided increment law.
    pub dist: TailDistribution,
    /// Downward jump threshold multiplier.
    pub gamma_minus: f64,
    /// Upward jump threshold multiplier.
    pub gamma_plus: f64,
}

impl BarrierSpec {
    pub fn new(
        a: f64,
        b: f64,
        c: f64,
        dist: TailDistribution,
        gamma_minus: f64,
        gamma_plus: f64,
    ) -> Result<Self> {
        if !(a > 0.0 && b > 0.0 && c >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "need a > 0, b > 0, c >= 0; got a={a}, b={b}, c={c}"
            )));
        }
        let spec = Self { a, b, c, dist, gamma_minus, gamma_plus };
        if !barrier_gamma_admissible(&spec) {
            return Err(Error::InadmissibleGamma);
        }
        Ok(spec)
    }
}

/// Exercise event: terminal value above `n b` and the drift-adjusted minimum
/// at or below `-n a`.
pub fn barrier_event(increments: &[f64], spec: &BarrierSpec) -> bool {
    let n = increments.len() as f64;
    let mut s = 0.0;
    let mut min_adj = f64::INFINITY;
    for (k, &y) in increments.iter().enumerate() {
        s += y;
        min_adj = min_adj.min(s + spec.c * (k + 1) as f64);
    }
    s >= spec.b * n && min_adj <= -spec.a * n
}

/// Threshold admissibility: both detour patterns that avoid the auxiliary
/// set must cost more than twice the optimal rate, and the critical ratios
/// must not be integers.
pub fn barrier_gamma_admissible(spec: &BarrierSpec) -> bool {
    let (alpha, beta) = (spec.dist.alpha, spec.dist.beta);
    if !(spec.gamma_minus > 0.0 && spec.gamma_plus > 0.0) {
        return false;
    }
    let up_ratio = (spec.a + spec.b) / spec.gamma_plus;
    let down_ratio = spec.a / spec.gamma_minus;
    if (up_ratio - up_ratio.round()).abs() < 1e-9
        || (down_ratio - down_ratio.round()).abs() < 1e-9
    {
        return false;
    }
    let via_up = (alpha - 1.0) + up_ratio.ceil() * (beta - 1.0);
    let via_down = down_ratio.ceil() * (alpha - 1.0) + (beta - 1.0);
    via_up.min(via_down) > 2.0 * (alpha + beta - 2.0)
}

/// P(some down-exceedance strictly precedes some up-exceedance) given the
/// per-step exceedance probabilities `p1` (up) and `p2` (down).
///
/// The closed form has a removable singularity at `p1 = p2`; near it the
/// divided difference of `(1-p)^n` is replaced by its derivative.
pub fn barrier_prob_b_from_p(n: u64, p1: f64, p2: f64) -> f64 {
    if p1 <= 0.0 || p2 <= 0.0 {
        return 0.0;
    }
    let nf = n as f64;
    let g1 = nf * (-p1).ln_1p(); // ln (1-p1)^n
    let g2 = nf * (-p2).ln_1p();
    if (p1 - p2).abs() > 1e-9 * p1.max(p2) {
        (1.0 - (p2 * g1.exp() - p1 * g2.exp()) / (p2 - p1)).clamp(0.0, 1.0)
    } else {
        // limit: 1 - (1-p)^n - n p (1-p)^(n-1)
        let p = 0.5 * (p1 + p2);
        let gnm1 = (nf - 1.0) * (-p).ln_1p();
        (1.0 - (nf * (-p).ln_1p()).exp() - nf * p * gnm1.exp()).clamp(0.0, 1.0)
    }
}

/// Auxiliary-set probability at scale `n`.
pub fn barrier_prob_b(n: u64, spec: &BarrierSpec) -> f64 {
    let nf = n as f64;
    let p1 = spec.dist.tail_right(spec.gamma_plus * nf);
    let p2 = spec.dist.cdf(-spec.gamma_minus * nf);
    barrier_prob_b_from_p(n, p1, p2)
}

/// Membership: a down-exceedance strictly before an up-exceedance.
pub fn barrier_in_aux(increments: &[f64], spec: &BarrierSpec) -> bool {
    let nf = increments.len() as f64;
    let down = -spec.gamma_minus * nf;
    let up = spec.gamma_plus * nf;
    let mut seen_down = false;
    for &y in increments {
        if seen_down && y > up {
            return true;
        }
        if y < down {
            seen_down = true;
        }
    }
    false
}

/// Exact draw of the increments conditioned on the ordered pair event:
/// plant a down-conditioned and an up-conditioned draw at a uniform ordered
/// pair of positions, re-check membership, and accept against the number of
/// (down, up) exceedance pairs.
pub fn barrier_sample_conditional(
    n: u64,
    spec: &BarrierSpec,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<f64>, u64)> {
    let nf = n as f64;
    let down = -spec.gamma_minus * nf;
    let up = spec.gamma_plus * nf;
    let n = n as usize;
    let mut increments = vec![0.0f64; n];
    let mut iterations = 0u64;
    loop {
        iterations += 1;
        let i1 = ((rng.random::<f64>() * n as f64) as usize).min(n - 1);
        let i2 = loop {
            let j = ((rng.random::<f64>() * n as f64) as usize).min(n - 1);
            if j != i1 {
                break j;
            }
        };
        for (j, slot) in increments.iter_mut().enumerate() {
            *slot = if j == i1 {
                spec.dist.sample_conditional_left(down, rng)?
            } else if j == i2 {
                spec.dist.sample_conditional_right(up, rng)?
            } else {
                spec.dist.sample_nominal(rng)
            };
        }
        if !barrier_in_aux(&increments, spec) {
            continue;
        }
        let downs = increments.iter().filter(|&&y| y < down).count() as f64;
        let ups = increments.iter().filter(|&&y| y > up).count() as f64;
        if rng.random::<f64>() * downs * ups < 1.0 {
            return Ok((increments, iterations));
        }
    }
}

/// Ready-to-run estimator model at a fixed scale `n`.
pub struct BarrierModel {
    pub spec: BarrierSpec,
    pub n: u64,
    p_aux: f64,
}

impl BarrierModel {
    pub fn new(spec: BarrierSpec, n: u64) -> Result<Self> {
        let p_aux = barrier_prob_b(n, &spec);
        if !(p_aux > 0.0) {
            return Err(Error::ZeroAuxiliaryProbability);
        }
        Ok(Self { spec, n, p_aux })
    }
}

impl RareEventModel for BarrierModel {
    fn p_aux(&self) -> f64 {
        self.p_aux
    }

    fn replicate_nominal(&self, rng: &mut ChaCha8Rng) -> Result<Replication> {
        let increments: Vec<f64> =
            (0..self.n).map(|_| self.spec.dist.sample_nominal(rng)).collect();
        Ok(Replication {
            in_event: barrier_event(&increments, &self.spec),
            in_aux: barrier_in_aux(&increments, &self.spec),
            rejection_iters: 0,
        })
    }

    fn replicate_conditional(&self, rng: &mut ChaCha8Rng) -> Result<Replication> {
        let (increments, iterations) = barrier_sample_conditional(self.n, &self.spec, rng)?;
        Ok(Replication {
            in_event: barrier_event(&increments, &self.spec),
            in_aux: true,
            rejection_iters: iterations,
        })
    }
}
