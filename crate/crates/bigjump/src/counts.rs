//! Numerically stable tail probabilities for jump counts, and exact samplers
//! for conditioned counts.
//!
//! The auxiliary sets used by the estimators are all of the form "at least
//! (or between) so many jumps above a threshold". Their probabilities reduce
//! to Poisson and binomial tails whose natural parameter `n * p` is often far
//! below one, so every series here is summed from the first contributing term
//! upward with log-space initialisation instead of computing `1 - cdf`.

use rand::Rng;

use crate::error::{Error, Result};

/// Cumulative mass at which conditional count tables stop extending.
pub const COUNT_TABLE_COVERAGE: f64 = 1.0 - 1e-12;

/// ln(k!) by direct accumulation. Exact to double precision for the count
/// ranges used here (k up to a few times lambda * n).
fn ln_factorial(k: u64) -> f64 {
    (2..=k).map(|i| (i as f64).ln()).sum()
}

/// P(Poisson(mu) >= k).
pub fn poisson_upper_tail(mu: f64, k: u64) -> f64 {
    assert!(mu >= 0.0 && mu.is_finite(), "poisson mean must be finite and >= 0");
    if k == 0 {
        return 1.0;
    }
    if mu == 0.0 {
        return 0.0;
    }
    // Sum e^-mu mu^j / j! from j = k upward. All terms positive: no
    // cancellation even when the result is ~1.
    let ln_t0 = -mu + k as f64 * mu.ln() - ln_factorial(k);
    let mut term = ln_t0.exp();
    let mut sum = term;
    let mut j = k;
    loop {
        j += 1;
        term *= mu / j as f64;
        sum += term;
        if term < sum * 1e-18 && j as f64 > mu {
            break;
        }
    }
    sum.min(1.0)
}

/// P(Binomial(n, p) >= k).
pub fn binomial_upper_tail(n: u64, p: f64, k: u64) -> f64 {
    assert!((0.0..=1.0).contains(&p), "p must lie in [0, 1]");
    if k == 0 {
        return 1.0;
    }
    if k > n || p == 0.0 {
        return 0.0;
    }
    if p == 1.0 {
        return 1.0;
    }
    // First term C(n,k) p^k (1-p)^(n-k) in log space, then the ratio
    // recurrence t_{i+1} = t_i (n-i)/(i+1) p/(1-p).
    let ln_choose: f64 = (1..=k).map(|j| (((n - k + j) as f64) / j as f64).ln()).sum();
    let mut term = (ln_choose + k as f64 * p.ln() + (n - k) as f64 * (-p).ln_1p()).exp();
    let mut sum = term;
    let odds = p / (1.0 - p);
    for i in k..n {
        term *= (n - i) as f64 / (i + 1) as f64 * odds;
        sum += term;
        if term < sum * 1e-18 && i as f64 > n as f64 * p {
            break;
        }
    }
    sum.min(1.0)
}

/// P(lo <= Binomial(n, p) <= hi); `hi = None` means unbounded above.
pub fn binomial_range(n: u64, p: f64, lo: u64, hi: Option<u64>) -> f64 {
    let upper = binomial_upper_tail(n, p, lo);
    match hi {
        None => upper,
        Some(h) if h >= n => upper,
        Some(h) => (upper - binomial_upper_tail(n, p, h + 1)).max(0.0),
    }
}

/// P(Binomial(n, p) = k), log-space.
pub fn binomial_pmf(n: u64, p: f64, k: u64) -> f64 {
    if k > n {
        return 0.0;
    }
    if p == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    if p == 1.0 {
        return if k == n { 1.0 } else { 0.0 };
    }
    let ln_choose: f64 = (1..=k).map(|j| (((n - k + j) as f64) / j as f64).ln()).sum();
    (ln_choose + k as f64 * p.ln() + (n - k) as f64 * (-p).ln_1p()).exp()
}

/// Exact sampler for a jump count `q` conditioned on the number of
/// threshold exceedances among the `q` jumps falling in `[lo, hi]`.
///
/// The unnormalised mass of `q` is
///
/// ```text
/// P(N = q) * P(lo <= Bin(q, p) <= min(hi, q))
/// ```
///
/// with `N ~ Poisson(mean_count)` and `p` the per-jump exceedance
/// probability. Masses are tabulated once up to cumulative coverage
/// `COUNT_TABLE_COVERAGE` of the total and then drawn by inversion, so a
/// draw costs one uniform and a binary search.
#[derive(Debug, Clone)]
pub struct CountSampler {
    first: u64,
    /// Cumulative unnormalised masses, starting at count `first`.
    cumulative: Vec<f64>,
    /// Total conditional mass, equal to P(count event) for the coordinate.
    total: f64,
}

impl CountSampler {
    pub fn poisson_conditioned(mean_count: f64, p: f64, lo: u64, hi: Option<u64>) -> Result<Self> {
        assert!(mean_count > 0.0 && mean_count.is_finite());
        assert!((0.0..=1.0).contains(&p));
        if let Some(h) = hi {
            assert!(h >= lo, "empty count interval");
        }
        // Event probability, used for the coverage stopping rule.
        let event_prob = poisson_event_prob(mean_count, p, lo, hi);
        if !(event_prob > 0.0) || event_prob < 1e-300 {
            return Err(Error::DegenerateAuxiliarySet);
        }

        // The Poisson pmf underflows far below its mean, so the table starts
        // where mass is representable; the skipped left tail is below e^-300
        // and invisible next to the coverage target.
        let far_left = (mean_count - 25.0 * mean_count.sqrt()).floor().max(0.0) as u64;
        let mut q = lo.max(far_left);
        // Poisson pmf at the start, log-space.
        let mut pois = (-mean_count + q as f64 * mean_count.ln() - ln_factorial(q)).exp();
        // Binomial range mass R(q) and the boundary pmfs used by its
        // recurrence in q: f_lo1(q) = P(Bin(q,p) = lo-1), f_hi(q) = P(Bin(q,p) = hi).
        let mut range = binomial_range(q, p, lo, hi);
        let mut f_lo1 = if lo >= 1 { binomial_pmf(q, p, lo - 1) } else { 0.0 };
        let mut f_hi: f64 = match hi {
            Some(h) if h <= q => binomial_pmf(q, p, h),
            _ => 0.0, // becomes nonzero once q reaches hi
        };

        let cap = (mean_count + 20.0 * mean_count.sqrt() + 200.0).ceil() as u64;
        let mut cumulative = Vec::new();
        let mut cum = 0.0;
        loop {
            cum += pois * range;
            cumulative.push(cum);
            if cum >= COUNT_TABLE_COVERAGE * event_prob {
                break;
            }
            if q >= lo + cap {
                if cum < 1e-300 {
                    return Err(Error::DegenerateAuxiliarySet);
                }
                break;
            }
            // Advance q -> q + 1.
            let q1 = q + 1;
            pois *= mean_count / q1 as f64;
            // R(q+1) = R(q) + p (f_lo1(q) - f_hi(q)).
            range += p * (f_lo1 - f_hi);
            range = range.clamp(0.0, 1.0);
            // pmf recurrences at fixed k: f_k(q+1) = f_k(q) (1-p) (q+1)/(q+1-k).
            if lo >= 1 {
                f_lo1 *= (1.0 - p) * q1 as f64 / (q1 - (lo - 1)) as f64;
            }
            if let Some(h) = hi {
                if q1 == h {
                    f_hi = binomial_pmf(h, p, h); // first q where the pmf exists
                } else if q1 > h {
                    f_hi *= (1.0 - p) * q1 as f64 / (q1 - h) as f64;
                }
            }
            q = q1;
        }
        Ok(Self { first: lo, cumulative, total: cum })
    }

    /// Total unnormalised mass; equals the count-event probability up to the
    /// table truncation.
    pub fn total_mass(&self) -> f64 {
        self.total
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let u: f64 = rng.random::<f64>() * self.total;
        let idx = self.cumulative.partition_point(|&c| c < u);
        self.first + idx.min(self.cumulative.len() - 1) as u64
    }
}

/// P(Poisson-many jumps have between `lo` and `hi` exceedances), where the
/// exceedance count of a Poisson(mean) number of jumps with per-jump
/// probability p is itself Poisson(mean * p).
fn poisson_event_prob(mean_count: f64, p: f64, lo: u64, hi: Option<u64>) -> f64 {
    let mu = mean_count * p;
    let upper = poisson_upper_tail(mu, lo);
    match hi {
        None => upper,
        Some(h) => (upper - poisson_upper_tail(mu, h + 1)).max(0.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::replication_rng;

    fn factorial(k: u64) -> f64 {
        (1..=k).map(|i| i as f64).product()
    }

    #[test]
    fn poisson_tail_identities() {
        assert_eq!(poisson_upper_tail(3.0, 0), 1.0);
        assert_eq!(poisson_upper_tail(0.0, 2), 0.0);
        // l* = 1: P(N >= 1) = 1 - e^-mu.
        let mu = 1.0;
        assert!((poisson_upper_tail(mu, 1) - (1.0 - (-mu).exp())).abs() < 1e-15);
        // Brute-force cross-check at moderate mu.
        let mu: f64 = 2.7;
        for k in 1..8 {
            let brute: f64 =
                (k..60).map(|j| (-mu as f64).exp() * mu.powi(j as i32) / factorial(j)).sum();
            let got = poisson_upper_tail(mu, k);
            assert!((got - brute).abs() < 1e-13, "k={k}: {got} vs {brute}");
        }
    }

    #[test]
    fn poisson_tail_small_mu_no_cancellation() {
        // mu = 1e-8, k = 2: exact value ~ mu^2/2; the 1-cdf route would lose
        // every significant digit.
        let mu = 1e-8;
        let got = poisson_upper_tail(mu, 2);
        let expect = mu * mu / 2.0 * (1.0 - mu / 3.0 * 1.5); // next-order correction negligible
        assert!((got / expect - 1.0).abs() < 1e-6, "{got} vs {expect}");
    }

    #[test]
    fn binomial_tail_identities() {
        assert_eq!(binomial_upper_tail(10, 0.3, 0), 1.0);
        assert_eq!(binomial_upper_tail(10, 0.0, 1), 0.0);
        assert_eq!(binomial_upper_tail(10, 1.0, 10), 1.0);
        assert_eq!(binomial_upper_tail(10, 0.5, 11), 0.0);
        // n=10, p=0.3, k=2: 1 - 0.7^10 - 10*0.3*0.7^9.
        let expect = 1.0 - 0.7f64.powi(10) - 10.0 * 0.3 * 0.7f64.powi(9);
        assert!((binomial_upper_tail(10, 0.3, 2) - expect).abs() < 1e-14);
    }

    #[test]
    fn binomial_range_matches_difference() {
        let n = 40;
        let p: f64 = 0.11;
        for lo in 0..5u64 {
            for hi in lo..8 {
                let direct: f64 = (lo..=hi.min(n))
                    .map(|k| {
                        let ln_c: f64 =
                            (1..=k).map(|j| (((n - k + j) as f64) / j as f64).ln()).sum();
                        (ln_c + k as f64 * p.ln() + (n - k) as f64 * (1.0 - p).ln()).exp()
                    })
                    .sum();
                let got = binomial_range(n, p, lo, Some(hi));
                assert!((got - direct).abs() < 1e-13, "lo={lo} hi={hi}");
            }
        }
    }

    #[test]
    fn count_sampler_matches_conditional_law() {
        // Small instance where the conditional law is enumerable exactly.
        let mean = 3.0;
        let p = 0.35;
        let (lo, hi) = (1u64, Some(2u64));
        let sampler = CountSampler::poisson_conditioned(mean, p, lo, hi).unwrap();

        // Exact conditional pmf over q.
        let mut exact = Vec::new();
        let mut norm = 0.0;
        for q in lo..60 {
            let pois = (-mean + q as f64 * mean.ln() - ln_factorial(q)).exp();
            let mass = pois * binomial_range(q, p, lo, hi);
            exact.push(mass);
            norm += mass;
        }
        // total_mass should agree with the analytic event probability.
        assert!((sampler.total_mass() / norm - 1.0).abs() < 1e-9);

        let mut rng = replication_rng(11, 0);
        let n_draws = 200_000;
        let mut freq = vec![0u64; 30];
        for _ in 0..n_draws {
            let q = sampler.sample(&mut rng) - lo;
            if (q as usize) < freq.len() {
                freq[q as usize] += 1;
            }
        }
        for (i, &mass) in exact.iter().take(12).enumerate() {
            let expect = mass / norm;
            let got = freq[i] as f64 / n_draws as f64;
            let se = (expect * (1.0 - expect) / n_draws as f64).sqrt();
            assert!(
                (got - expect).abs() < 5.0 * se + 1e-9,
                "q={} got {got} expect {expect}",
                i as u64 + lo
            );
        }
    }

    #[test]
    fn count_sampler_rejects_zero_mass() {
        assert!(matches!(
            CountSampler::poisson_conditioned(2.0, 0.0, 1, None),
            Err(Error::DegenerateAuxiliarySet)
        ));
    }
}
