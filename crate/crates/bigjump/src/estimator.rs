//! The mixture importance-sampling estimator and the one-dimensional
//! conditional path sampler.
//!
//! A replication draws a path from the nominal measure with probability `w`,
//! otherwise from the nominal measure conditioned on the auxiliary set `B`,
//! and scores
//!
//! ```text
//! Z = 1_A * L,   L = [ w + (1 - w) 1_B / P(B) ]^(-1)
//! ```
//!
//! `E_Q[Z] = P(A)` identically: the weighting is exactly unbiased, not just
//! asymptotically. Replications run on counter-based streams and are reduced
//! chunk-by-chunk in index order, so the result is bit-identical for a fixed
//! seed no matter how many workers participate.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::counts::{poisson_upper_tail, CountSampler};
use crate::error::{Error, Result};
use crate::heavy_tails::TailDistribution;
use crate::paths::{coordinate_from_raw_jumps, sample_epochs, JumpSkeleton};
use crate::rng::replication_rng;

/// Fixed reduction granularity; chunk boundaries do not depend on the worker
/// count, which keeps the reduction order deterministic.
const CHUNK: u64 = 4096;

// ---------------------------------------------------------------------------
// Closed-form auxiliary probability and conditional count law (1-d)
// ---------------------------------------------------------------------------

/// P(B) for the one-dimensional auxiliary set: at least `l_star` of the
/// Poisson(lambda * n) jumps exceed the threshold, each independently with
/// probability `p`. The exceedance count is Poisson(lambda * n * p).
pub fn prob_b_1d(n: u64, lambda: f64, l_star: u64, p: f64) -> f64 {
    poisson_upper_tail(lambda * n as f64 * p, l_star)
}

/// Exact sampler for the total jump count `m` given the auxiliary event,
/// i.e. the law `h_m ∝ P(N = m) P(Bin(m, p) >= l_star)`.
pub fn count_sampler_given_b(n: u64, lambda: f64, l_star: u64, p: f64) -> Result<CountSampler> {
    CountSampler::poisson_conditioned(lambda * n as f64, p, l_star, None)
}

/// Draw one total jump count from `h_m`.
pub fn sample_count_given_b(
    n: u64,
    lambda: f64,
    l_star: u64,
    p: f64,
    rng: &mut ChaCha8Rng,
) -> Result<u64> {
    Ok(count_sampler_given_b(n, lambda, l_star, p)?.sample(rng))
}

/// Rejection step shared by every conditional jump-size sampler: plant
/// `plant` draws conditioned above the threshold among `m` total, fill the
/// rest nominally, and accept with probability `1 / C(c, plant)` provided
/// the exceedance count `c` does not exceed `hi`.
///
/// Accepted vectors are exact draws from the law of `m` i.i.d. jumps
/// conditioned on the exceedance count lying in `[plant, hi]`.
pub fn sample_sizes_conditional<R: rand::Rng + ?Sized>(
    dist: &TailDistribution,
    m: u64,
    threshold: f64,
    plant: u64,
    hi: Option<u64>,
    rng: &mut R,
) -> Result<(Vec<f64>, u64)> {
    debug_assert!(hi.map_or(true, |h| h >= plant));
    let m = m as usize;
    let mut sizes = vec![0.0f64; m];
    let mut planted = vec![false; m];
    let mut iterations = 0u64;
    loop {
        iterations += 1;
        planted.iter_mut().for_each(|b| *b = false);
        for _ in 0..plant {
            // Uniform index among the not-yet-planted positions.
            loop {
                let idx = (rng.random::<f64>() * m as f64) as usize;
                let idx = idx.min(m - 1);
                if !planted[idx] {
                    planted[idx] = true;
                    break;
                }
            }
        }
        let mut c = 0u64;
        for i in 0..m {
            sizes[i] = if planted[i] {
                dist.sample_conditional_right(threshold, rng)?
            } else {
                dist.sample_nominal(rng)
            };
            if sizes[i] > threshold {
                c += 1;
            }
        }
        if hi.map_or(true, |h| c <= h) {
            let accept = 1.0 / binomial_f64(c, plant);
            if rng.random::<f64>() < accept {
                return Ok((sizes, iterations));
            }
        }
    }
}

/// C(c, k) as a float; exact for the small k used in acceptance ratios.
pub fn binomial_f64(c: u64, k: u64) -> f64 {
    if k > c {
        return 0.0;
    }
    let mut v = 1.0;
    for j in 0..k {
        v *= (c - j) as f64 / (k - j) as f64;
    }
    v
}

/// Exact draw of a scaled compound Poisson path conditioned on the
/// one-dimensional auxiliary set (at least `l_star` jumps above `n * gamma`).
///
/// Returns the path and the number of rejection iterations; the expected
/// iteration count stays bounded in `n`.
pub fn sample_path_conditional_1d(
    n: u64,
    lambda: f64,
    dist: &TailDistribution,
    l_star: u64,
    gamma: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(JumpSkeleton, u64)> {
    let threshold = gamma * n as f64;
    let p = dist.tail_right(threshold);
    let sampler = count_sampler_given_b(n, lambda, l_star, p)?;
    sample_path_conditional_1d_with(n, lambda, dist, l_star, gamma, &sampler, rng)
}

/// Same as [`sample_path_conditional_1d`] with a precomputed count table.
pub fn sample_path_conditional_1d_with(
    n: u64,
    lambda: f64,
    dist: &TailDistribution,
    l_star: u64,
    gamma: f64,
    count_sampler: &CountSampler,
    rng: &mut ChaCha8Rng,
) -> Result<(JumpSkeleton, u64)> {
    let threshold = gamma * n as f64;
    let m = count_sampler.sample(rng);
    let (sizes, iterations) =
        sample_sizes_conditional(dist, m, threshold, l_star, None, rng)?;
    let epochs = sample_epochs(m as usize, rng);
    let coord = coordinate_from_raw_jumps(-lambda * dist.mean(), &sizes, epochs, n as f64);
    Ok((JumpSkeleton { coords: vec![coord] }, iterations))
}

// ---------------------------------------------------------------------------
// Generic mixture estimator
// ---------------------------------------------------------------------------

/// Estimator configuration.
#[derive(Debug, Clone, Copy)]
pub struct MixtureConfig {
    /// Nominal-measure mixture weight, strictly inside (0, 1).
    pub w: f64,
    /// Scale parameter of the experiment (recorded in reports).
    pub n: u64,
    /// Number of replications.
    pub replications: u64,
    /// Master seed for the replication streams.
    pub seed: u64,
}

impl MixtureConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.w > 0.0 && self.w < 1.0) {
            return Err(Error::InvalidParameter(format!("w must be in (0,1), got {}", self.w)));
        }
        if self.replications == 0 {
            return Err(Error::InvalidParameter("replications must be >= 1".into()));
        }
        Ok(())
    }
}

/// Outcome of one replication.
#[derive(Debug, Clone, Copy)]
pub struct Replication {
    /// Path lies in the target event A.
    pub in_event: bool,
    /// Path lies in the auxiliary set B.
    pub in_aux: bool,
    /// Rejection-sampler iterations spent on this replication.
    pub rejection_iters: u64,
}

/// A rare-event model the mixture estimator can drive.
///
/// Implementations must evaluate membership exactly: `replicate_nominal`
/// reports whether the nominally drawn path fell into A and into B, and
/// `replicate_conditional` draws from the conditional law (its output is in
/// B by construction, which the estimator asserts).
pub trait RareEventModel: Sync {
    /// Exact P(B) used in the likelihood ratio.
    fn p_aux(&self) -> f64;
    fn replicate_nominal(&self, rng: &mut ChaCha8Rng) -> Result<Replication>;
    fn replicate_conditional(&self, rng: &mut ChaCha8Rng) -> Result<Replication>;
}

/// Estimation result with the accuracy figures reported by the experiment
/// harness.
#[derive(Debug, Clone)]
pub struct EstimationReport {
    pub estimate: f64,
    pub variance: f64,
    pub std_err: f64,
    pub ci_radius_95: f64,
    /// ci_radius_95 / estimate.
    pub precision_ratio: f64,
    pub p_aux: f64,
    pub mean_rejection_iters: f64,
    pub hits_in_aux: u64,
    pub hits_out_aux: u64,
    pub replications: u64,
    pub wall_time_s: f64,
}

#[derive(Clone, Copy, Default)]
struct Kahan {
    sum: f64,
    c: f64,
}

impl Kahan {
    fn add(&mut self, x: f64) {
        let y = x - self.c;
        let t = self.sum + y;
        self.c = (t - self.sum) - y;
        self.sum = t;
    }
}

#[derive(Clone, Copy, Default)]
struct ChunkSums {
    z: Kahan,
    z2: Kahan,
    iters: u64,
    hits_in_aux: u64,
    hits_out_aux: u64,
}

/// Run the mixture estimator.
///
/// Replications fan out across the current rayon pool; the reduction merges
/// fixed-size chunks in index order, so the report is bitwise identical for
/// a fixed `(seed, replications)` regardless of the worker count.
pub fn estimate<M: RareEventModel>(model: &M, cfg: &MixtureConfig) -> Result<EstimationReport> {
    cfg.validate()?;
    let p_aux = model.p_aux();
    if !(p_aux > 0.0) {
        return Err(Error::ZeroAuxiliaryProbability);
    }
    let started = std::time::Instant::now();

    let w = cfg.w;
    let weight_in_aux = 1.0 / (w + (1.0 - w) / p_aux);
    let weight_off_aux = 1.0 / w;
    let n_chunks = cfg.replications.div_ceil(CHUNK);

    let chunks: Vec<Result<ChunkSums>> = (0..n_chunks)
        .into_par_iter()
        .map(|chunk| {
            let lo = chunk * CHUNK;
            let hi = ((chunk + 1) * CHUNK).min(cfg.replications);
            let mut sums = ChunkSums::default();
            for index in lo..hi {
                let mut rng = replication_rng(cfg.seed, index);
                let nominal = rng.random::<f64>() < w;
                let rep = if nominal {
                    model.replicate_nominal(&mut rng)?
                } else {
                    let rep = model.replicate_conditional(&mut rng)?;
                    assert!(rep.in_aux, "conditional sampler left the auxiliary set");
                    rep
                };
                let weight = if rep.in_aux { weight_in_aux } else { weight_off_aux };
                let z = if rep.in_event { weight } else { 0.0 };
                // Replication-level weight identities.
                assert!(z <= weight_off_aux * (1.0 + 1e-12));
                if rep.in_aux {
                    assert!(z <= p_aux / (1.0 - w) * (1.0 + 1e-12));
                }
                if rep.in_event {
                    if rep.in_aux {
                        sums.hits_in_aux += 1;
                    } else {
                        sums.hits_out_aux += 1;
                    }
                }
                sums.z.add(z);
                sums.z2.add(z * z);
                sums.iters += rep.rejection_iters;
            }
            Ok(sums)
        })
        .collect();

    let mut z = Kahan::default();
    let mut z2 = Kahan::default();
    let mut iters = 0u64;
    let mut hits_in_aux = 0u64;
    let mut hits_out_aux = 0u64;
    for c in chunks {
        let c = c?;
        z.add(c.z.sum);
        z2.add(c.z2.sum);
        iters += c.iters;
        hits_in_aux += c.hits_in_aux;
        hits_out_aux += c.hits_out_aux;
    }

    let n = cfg.replications as f64;
    let estimate = z.sum / n;
    let variance = if cfg.replications > 1 {
        ((z2.sum - z.sum * z.sum / n) / (n - 1.0)).max(0.0)
    } else {
        0.0
    };
    let std_err = (variance / n).sqrt();
    let ci_radius_95 = 1.96 * std_err;
    Ok(EstimationReport {
        estimate,
        variance,
        std_err,
        ci_radius_95,
        precision_ratio: if estimate > 0.0 { ci_radius_95 / estimate } else { f64::INFINITY },
        p_aux,
        mean_rejection_iters: iters as f64 / n,
        hits_in_aux,
        hits_out_aux,
        replications: cfg.replications,
        wall_time_s: started.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::counts::binomial_range;
    use crate::rng::replication_rng;
    use proptest::prelude::*;

    // ----- closed-form P(B) -----

    #[test]
    fn prob_b_identities() {
        assert_eq!(prob_b_1d(100, 1.0, 2, 0.0), 0.0);
        // l* = 1, lambda n p = 1: 1 - e^-1.
        let got = prob_b_1d(100, 1.0, 1, 0.01);
        assert!((got - (1.0 - (-1.0f64).exp())).abs() < 1e-14);
    }

    #[test]
    fn prob_b_matches_monte_carlo() {
        // lambda = 1, n = 1000, p = 1e-4, l* = 2, vs a 10^7-draw count-level
        // simulation (Poisson count, then binomial thinning).
        use rand_distr::{Binomial, Distribution, Poisson};
        let (n, lambda, p, l_star) = (1000u64, 1.0, 1e-4, 2u64);
        let exact = prob_b_1d(n, lambda, l_star, p);
        let mut rng = replication_rng(41, 0);
        let pois = Poisson::new(lambda * n as f64).unwrap();
        let reps = 10_000_000u64;
        let mut hits = 0u64;
        for _ in 0..reps {
            let m = pois.sample(&mut rng) as u64;
            let c = if m > 0 { Binomial::new(m, p).unwrap().sample(&mut rng) } else { 0 };
            if c >= l_star {
                hits += 1;
            }
        }
        let emp = hits as f64 / reps as f64;
        let se = (exact * (1.0 - exact) / reps as f64).sqrt();
        assert!((emp - exact).abs() < 4.0 * se, "emp {emp} exact {exact} se {se}");
    }

    // ----- h_m -----

    #[test]
    fn count_given_b_with_p_one_is_truncated_poisson() {
        // p = 1: every jump exceeds, so h_m is Poisson(lambda n) conditioned
        // on m >= l*.
        let (n, lambda, l_star) = (5u64, 0.6, 2u64);
        let sampler = count_sampler_given_b(n, lambda, l_star, 1.0).unwrap();
        let mut rng = replication_rng(42, 0);
        let reps = 200_000;
        let mut freq = std::collections::HashMap::new();
        for _ in 0..reps {
            *freq.entry(sampler.sample(&mut rng)).or_insert(0u64) += 1;
        }
        let mu = lambda * n as f64;
        let tail = poisson_upper_tail(mu, l_star);
        for m in l_star..l_star + 8 {
            let pois =
                (-mu + m as f64 * mu.ln() - (2..=m).map(|i| (i as f64).ln()).sum::<f64>()).exp();
            let expect = pois / tail;
            let got = *freq.get(&m).unwrap_or(&0) as f64 / reps as f64;
            let se = (expect * (1.0 - expect) / reps as f64).sqrt();
            assert!((got - expect).abs() < 5.0 * se + 1e-9, "m={m}");
        }
    }

    #[test]
    fn count_given_b_mean_matches_series() {
        let (n, lambda, l_star, p) = (50u64, 0.9, 2u64, 0.08);
        let sampler = count_sampler_given_b(n, lambda, l_star, p).unwrap();
        // Series mean.
        let mu = lambda * n as f64;
        let mut norm = 0.0;
        let mut mean = 0.0;
        let mut pois = (-mu).exp();
        for m in 0..400u64 {
            if m > 0 {
                pois *= mu / m as f64;
            }
            let mass = pois * binomial_range(m, p, l_star, None);
            norm += mass;
            mean += m as f64 * mass;
        }
        mean /= norm;
        let mut rng = replication_rng(43, 0);
        let reps = 1_000_000u64;
        let mut sum = 0.0;
        let mut sum2 = 0.0;
        for _ in 0..reps {
            let m = sampler.sample(&mut rng) as f64;
            sum += m;
            sum2 += m * m;
        }
        let emp = sum / reps as f64;
        let var = sum2 / reps as f64 - emp * emp;
        let se = (var / reps as f64).sqrt();
        assert!((emp - mean).abs() < 4.0 * se, "emp {emp} series {mean}");
    }

    #[test]
    fn count_given_b_concentrates_at_lambda_n_when_p_large() {
        let (n, lambda, l_star, p) = (200u64, 1.0, 1u64, 0.9);
        let sampler = count_sampler_given_b(n, lambda, l_star, p).unwrap();
        let mut rng = replication_rng(44, 0);
        let mut sum = 0.0;
        let reps = 100_000;
        for _ in 0..reps {
            sum += sampler.sample(&mut rng) as f64;
        }
        let emp = sum / reps as f64;
        // Conditioning on >= 1 exceedance barely moves Poisson(200).
        assert!((emp - 200.0).abs() < 0.5, "mean {emp}");
    }

    // ----- conditional path sampler -----

    #[test]
    fn conditional_path_always_in_b() {
        let dist = TailDistribution::pareto(1.0, 1.6).unwrap();
        let (n, lambda, l_star, gamma) = (40u64, 0.1, 2u64, 0.5);
        let mut rng = replication_rng(45, 0);
        for _ in 0..2000 {
            let (path, _) =
                sample_path_conditional_1d(n, lambda, &dist, l_star, gamma, &mut rng).unwrap();
            assert!(path.count_exceedances(0, gamma) >= l_star);
        }
    }

    #[test]
    fn conditional_exceedance_count_law_is_exact() {
        // Joint law of (m, c) must equal Poisson x conditional binomial given
        // c >= l*; chi-square over the exceedance count marginal.
        let dist = TailDistribution::pareto(1.0, 1.8).unwrap();
        let (n, lambda, l_star, gamma) = (10u64, 0.35, 1u64, 0.9);
        let threshold = gamma * n as f64;
        let p = dist.tail_right(threshold);
        let mut rng = replication_rng(46, 0);
        let reps = 100_000usize;
        let mut freq = std::collections::HashMap::new();
        let sampler = count_sampler_given_b(n, lambda, l_star, p).unwrap();
        for _ in 0..reps {
            let (path, _) = sample_path_conditional_1d_with(
                n, lambda, &dist, l_star, gamma, &sampler, &mut rng,
            )
            .unwrap();
            let c = path.count_exceedances(0, gamma);
            *freq.entry(c).or_insert(0u64) += 1;
        }
        // Exact law of c given B: Poisson(lambda n p) conditioned on >= l*.
        let mu = lambda * n as f64 * p;
        let norm = poisson_upper_tail(mu, l_star);
        let mut chi2 = 0.0;
        let mut dof = 0i64;
        let mut tail_expect = reps as f64;
        let mut tail_got = reps as f64;
        for c in l_star..l_star + 6 {
            let pois = (-mu + c as f64 * mu.ln()
                - (2..=c).map(|i| (i as f64).ln()).sum::<f64>())
            .exp();
            let expect = reps as f64 * pois / norm;
            if expect < 5.0 {
                break;
            }
            let got = *freq.get(&c).unwrap_or(&0) as f64;
            chi2 += (got - expect).powi(2) / expect;
            dof += 1;
            tail_expect -= expect;
            tail_got -= got;
        }
        if tail_expect > 5.0 {
            chi2 += (tail_got - tail_expect).powi(2) / tail_expect;
            dof += 1;
        }
        dof -= 1;
        let p_value = chi2_sf(chi2, dof.max(1) as f64);
        assert!(p_value > 0.01, "chi2 {chi2} dof {dof} p {p_value}");
    }

    #[test]
    fn rejection_iterations_stay_bounded() {
        // The expected iteration count is uniformly bounded in n; at small n
        // the pre-asymptotic extra exceedances push it up, so the bound is 5
        // there and 3 once lambda n p has dropped below one.
        let dist = TailDistribution::pareto(1.0, 1.45).unwrap();
        let (lambda, l_star, gamma) = (1.0, 2u64, 0.13);
        for &(n, bound) in &[(100u64, 5.0), (1000, 3.0), (10_000, 3.0)] {
            let mut rng = replication_rng(47, n);
            let mut total = 0u64;
            let reps = 300;
            let p = dist.tail_right(gamma * n as f64);
            let sampler = count_sampler_given_b(n, lambda, l_star, p).unwrap();
            for _ in 0..reps {
                let (_, iters) = sample_path_conditional_1d_with(
                    n, lambda, &dist, l_star, gamma, &sampler, &mut rng,
                )
                .unwrap();
                total += iters;
            }
            let mean = total as f64 / reps as f64;
            assert!(mean <= bound, "n={n}: mean iterations {mean}");
        }
    }

    // ----- mixture estimator -----

    /// Toy model: one uniform X in (0,1); A = {X < a}, B = {X < b}, a <= b.
    struct ToyModel {
        a: f64,
        b: f64,
    }

    impl RareEventModel for ToyModel {
        fn p_aux(&self) -> f64 {
            self.b
        }
        fn replicate_nominal(&self, rng: &mut ChaCha8Rng) -> Result<Replication> {
            let x: f64 = rng.random();
            Ok(Replication { in_event: x < self.a, in_aux: x < self.b, rejection_iters: 0 })
        }
        fn replicate_conditional(&self, rng: &mut ChaCha8Rng) -> Result<Replication> {
            let x: f64 = rng.random::<f64>() * self.b;
            Ok(Replication { in_event: x < self.a, in_aux: true, rejection_iters: 1 })
        }
    }

    #[test]
    fn estimator_whole_space_is_exactly_one() {
        // A = whole space: weights average to 1 exactly in expectation; with
        // A = B = everything the estimate is identically 1.
        let model = ToyModel { a: 1.0, b: 1.0 };
        let cfg = MixtureConfig { w: 0.3, n: 1, replications: 10_000, seed: 5 };
        let rep = estimate(&model, &cfg).unwrap();
        assert!((rep.estimate - 1.0).abs() < 1e-12);
        assert_eq!(rep.hits_out_aux, 0);
    }

    #[test]
    fn estimator_empty_event_is_zero() {
        let model = ToyModel { a: 0.0, b: 0.5 };
        let cfg = MixtureConfig { w: 0.3, n: 1, replications: 10_000, seed: 6 };
        let rep = estimate(&model, &cfg).unwrap();
        assert_eq!(rep.estimate, 0.0);
    }

    #[test]
    fn estimator_is_unbiased_on_toy_model() {
        let model = ToyModel { a: 1e-3, b: 1e-2 };
        let cfg = MixtureConfig { w: 0.05, n: 1, replications: 2_000_000, seed: 7 };
        let rep = estimate(&model, &cfg).unwrap();
        assert!(
            (rep.estimate - 1e-3).abs() < 4.0 * rep.std_err,
            "est {} +- {}",
            rep.estimate,
            rep.std_err
        );
        // Strong variance reduction vs crude MC on this toy.
        assert!(rep.precision_ratio < 0.05);
    }

    #[test]
    fn estimator_is_deterministic() {
        let model = ToyModel { a: 1e-2, b: 1e-1 };
        let cfg = MixtureConfig { w: 0.1, n: 1, replications: 50_000, seed: 8 };
        let a = estimate(&model, &cfg).unwrap();
        let b = estimate(&model, &cfg).unwrap();
        assert_eq!(a.estimate.to_bits(), b.estimate.to_bits());
        assert_eq!(a.variance.to_bits(), b.variance.to_bits());
    }

    #[test]
    fn estimator_determinism_across_worker_counts() {
        let model = ToyModel { a: 1e-2, b: 1e-1 };
        let cfg = MixtureConfig { w: 0.1, n: 1, replications: 30_000, seed: 9 };
        let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let quad = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = single.install(|| estimate(&model, &cfg)).unwrap();
        let b = quad.install(|| estimate(&model, &cfg)).unwrap();
        assert_eq!(a.estimate.to_bits(), b.estimate.to_bits());
        assert_eq!(a.hits_in_aux, b.hits_in_aux);
    }

    #[test]
    fn mean_weight_is_one() {
        // E_Q[L] = 1: check the ignoring-1_A mean of L over many replications.
        let model = ToyModel { a: 2e-2, b: 2e-2 }; // A = B so 1_A*L tracks L on A
        let cfg = MixtureConfig { w: 0.25, n: 1, replications: 1_000_000, seed: 10 };
        // Direct simulation of L alone.
        let p_aux = model.p_aux();
        let w = cfg.w;
        let l_in = 1.0 / (w + (1.0 - w) / p_aux);
        let mut sum = 0.0;
        for i in 0..cfg.replications {
            let mut rng = replication_rng(cfg.seed, i);
            let nominal = rng.random::<f64>() < w;
            let in_aux = if nominal { rng.random::<f64>() < p_aux } else { true };
            sum += if in_aux { l_in } else { 1.0 / w };
        }
        let mean = sum / cfg.replications as f64;
        // Var(L) <= (1/w)^2; 4 sigma band.
        let se = (1.0 / w) / (cfg.replications as f64).sqrt();
        assert!((mean - 1.0).abs() < 4.0 * se, "mean weight {mean}");
    }

    proptest! {
        /// The two-point weight identity behind exact unbiasedness:
        /// w P(B^c) (1/w) + [w p + (1-w)] (w + (1-w)/p)^(-1) = 1 - P(B) + p = 1
        /// ... algebraically, for every (w, p) in (0,1)^2 with P(B) = p.
        #[test]
        fn weight_identity_holds(w in 1e-6..0.999999f64, p in 1e-9..1.0f64) {
            let l_in = 1.0 / (w + (1.0 - w) / p);
            let mass_in_b = w * p + (1.0 - w);   // P_Q(B)
            let mass_off_b = w * (1.0 - p);      // P_Q(B^c)
            let total = mass_off_b * (1.0 / w) + mass_in_b * l_in;
            prop_assert!((total - 1.0).abs() < 1e-12);
        }
    }

    // Chi-square survival function via the regularized incomplete gamma.
    fn chi2_sf(x: f64, k: f64) -> f64 {
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        1.0 - ChiSquared::new(k).unwrap().cdf(x)
    }
}
