//! Regularly varying jump and increment laws with exact tail evaluation and
//! exact inverse-CDF sampling.
//!
//! Three families are supported:
//!
//! - `Pareto`: positive jump sizes, `P(X > x) = (t_r / x)^beta` for `x >= t_r`.
//! - `CenteredPareto`: the same law shifted to mean zero, used as a walk
//!   increment.
//! - `TwoSidedParetoUniform`: mean-zero law with Pareto tails on both sides
//!   and a uniform bridge, defined at tail level:
//!   `P(X' > y) = p1 (t_r / y)^beta` for `y >= t_r`,
//!   `P(X' <= y) = p2 (t_l / y)^alpha` for `y <= t_l`,
//!   and mass `1 - p1 - p2` spread uniformly on `[t_l, t_r]`.
//!
//! All conditional and truncated samplers go through the inverse CDF, so
//! every draw is exact and consumes exactly one uniform. That keeps
//! replication-stream accounting deterministic under parallel execution.

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::open01;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Kind {
    Pareto,
    CenteredPareto,
    TwoSided,
}

/// A heavy-tailed law with exact tail functions and samplers.
#[derive(Debug, Clone)]
pub struct TailDistribution {
    kind: Kind,
    /// Right tail index (> 1).
    pub beta: f64,
    /// Left tail index (> 1, two-sided only).
    pub alpha: f64,
    /// Right scale (> 0).
    pub t_r: f64,
    /// Left scale (< 0, two-sided only).
    pub t_l: f64,
    /// Right / left tail masses (1 and 0 for the one-sided kinds).
    pub p1: f64,
    pub p2: f64,
    /// Mean of the uncentered law.
    pub mean_shift: f64,
    /// Shift actually subtracted from draws (0 for the raw Pareto kind).
    shift: f64,
}

impl TailDistribution {
    /// Raw positive Pareto jump law.
    pub fn pareto(t_r: f64, beta: f64) -> Result<Self> {
        Self::check_index(beta, "beta")?;
        if t_r <= 0.0 {
            return Err(Error::InvalidParameter(format!("t_r must be > 0, got {t_r}")));
        }
        let mean = t_r * beta / (beta - 1.0);
        Ok(Self {
            kind: Kind::Pareto,
            beta,
            alpha: f64::NAN,
            t_r,
            t_l: f64::NAN,
            p1: 1.0,
            p2: 0.0,
            mean_shift: mean,
            shift: 0.0,
        })
    }

    /// Pareto shifted to mean zero.
    pub fn centered_pareto(t_r: f64, beta: f64) -> Result<Self> {
        let mut d = Self::pareto(t_r, beta)?;
        d.kind = Kind::CenteredPareto;
        d.shift = d.mean_shift;
        Ok(d)
    }

    /// Mean-zero two-sided law: Pareto tails of index `-beta` (right) and
    /// `-alpha` (left) with masses `p1`, `p2`, uniform in between.
    pub fn two_sided_pareto_uniform(
        t_r: f64,
        t_l: f64,
        p1: f64,
        p2: f64,
        alpha: f64,
        beta: f64,
    ) -> Result<Self> {
        Self::check_index(beta, "beta")?;
        Self::check_index(alpha, "alpha")?;
        if t_r <= 0.0 || t_l >= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "need t_r > 0 > t_l, got t_r={t_r}, t_l={t_l}"
            )));
        }
        if !(p1 > 0.0 && p2 > 0.0 && p1 + p2 <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "tail masses must satisfy p1, p2 > 0, p1 + p2 <= 1; got p1={p1}, p2={p2}"
            )));
        }
        let mean = p1 * t_r * beta / (beta - 1.0)
            + p2 * t_l * alpha / (alpha - 1.0)
            + (1.0 - p1 - p2) * 0.5 * (t_l + t_r);
        Ok(Self {
            kind: Kind::TwoSided,
            beta,
            alpha,
            t_r,
            t_l,
            p1,
            p2,
            mean_shift: mean,
            shift: mean,
        })
    }

    fn check_index(idx: f64, name: &str) -> Result<()> {
        if idx > 1.0 && idx.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("{name} must be > 1, got {idx}")))
        }
    }

    /// Mean of the law as sampled (0 for the centered kinds).
    pub fn mean(&self) -> f64 {
        self.mean_shift - self.shift
    }

    // --- tail functions (arguments and results in sampled coordinates) ---

    /// Exact `P(X > x)`.
    pub fn tail_right(&self, x: f64) -> f64 {
        let y = x + self.shift;
        match self.kind {
            Kind::Pareto | Kind::CenteredPareto => {
                if y <= self.t_r {
                    1.0
                } else {
                    (self.t_r / y).powf(self.beta)
                }
            }
            Kind::TwoSided => {
                if y >= self.t_r {
                    self.p1 * (self.t_r / y).powf(self.beta)
                } else if y <= self.t_l {
                    1.0 - self.p2 * (self.t_l / y).powf(self.alpha)
                } else {
                    1.0 - self.p2 - (1.0 - self.p1 - self.p2) * (y - self.t_l) / (self.t_r - self.t_l)
                }
            }
        }
    }

    /// Exact `P(X <= x)`.
    pub fn cdf(&self, x: f64) -> f64 {
        1.0 - self.tail_right(x)
    }

    /// Value `x` with `P(X > x) = s`, for `s` in (0, 1]; `s = 0` maps to
    /// positive infinity.
    pub fn inverse_survival(&self, s: f64) -> f64 {
        assert!((0.0..=1.0).contains(&s));
        if s == 0.0 {
            return f64::INFINITY;
        }
        let y = match self.kind {
            Kind::Pareto | Kind::CenteredPareto => self.t_r * s.powf(-1.0 / self.beta),
            Kind::TwoSided => {
                if s <= self.p1 {
                    self.t_r * (s / self.p1).powf(-1.0 / self.beta)
                } else if s >= 1.0 - self.p2 {
                    // left tail: P(X <= y) = 1 - s = p2 (t_l/y)^alpha
                    self.t_l * ((1.0 - s) / self.p2).powf(-1.0 / self.alpha)
                } else {
                    // uniform bridge
                    self.t_r - (s - self.p1) / (1.0 - self.p1 - self.p2) * (self.t_r - self.t_l)
                }
            }
        };
        y - self.shift
    }

    /// Value `x` with `P(X <= x) = u`. `u = 0` maps to the left end of the
    /// support (the scale point for Pareto kinds, negative infinity for the
    /// two-sided kind).
    pub fn inverse_cdf(&self, u: f64) -> f64 {
        assert!((0.0..=1.0).contains(&u));
        if u == 0.0 {
            return match self.kind {
                Kind::Pareto | Kind::CenteredPareto => self.t_r - self.shift,
                Kind::TwoSided => f64::NEG_INFINITY,
            };
        }
        self.inverse_survival(1.0 - u)
    }

    // --- samplers ---

    /// Draw from the law itself.
    pub fn sample_nominal<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        // u in (0, 1]: survival-side inversion keeps the right tail exact and
        // never produces -inf on the two-sided kind.
        let u = 1.0 - rng.random::<f64>();
        self.inverse_survival(u)
    }

    /// Exact draw from `X | X > threshold`.
    pub fn sample_conditional_right<R: Rng + ?Sized>(
        &self,
        threshold: f64,
        rng: &mut R,
    ) -> Result<f64> {
        let q = self.tail_right(threshold);
        if q <= 0.0 {
            return Err(Error::EmptyConditioningEvent);
        }
        let v = open01(rng);
        Ok(self.inverse_survival(q * v))
    }

    /// Exact draw from `X | lo < X <= hi`.
    pub fn sample_truncated_right<R: Rng + ?Sized>(
        &self,
        lo: f64,
        hi: f64,
        rng: &mut R,
    ) -> Result<f64> {
        let s_lo = self.tail_right(lo);
        let s_hi = self.tail_right(hi);
        if !(s_lo > s_hi) {
            return Err(Error::EmptyInterval { lo, hi });
        }
        // u = 0 lands exactly on hi, u -> 1 approaches lo from above: the
        // draw lies in (lo, hi].
        let u: f64 = rng.random();
        Ok(self.inverse_survival(s_hi + (s_lo - s_hi) * u))
    }

    /// Exact draw from `X | X <= threshold` (left-tail mirror of
    /// `sample_conditional_right`).
    pub fn sample_conditional_left<R: Rng + ?Sized>(
        &self,
        threshold: f64,
        rng: &mut R,
    ) -> Result<f64> {
        let q = self.cdf(threshold);
        if q <= 0.0 {
            return Err(Error::EmptyConditioningEvent);
        }
        let v = open01(rng);
        Ok(self.inverse_cdf(q * v))
    }
}
