//! Level crossing of a targeted workload combination in a reflected fluid
//! network.
//!
//! Jobs arrive at unit rate per station with Pareto sizes; the scaled netput
//! skeleton carries drift `-(R r)_i` plus the raw scaled jumps, and the
//! event is `c^T Z(1) >= a` for the reflected workload `Z`. The knapsack
//! solver picks the cheapest overload pattern `l*`; the auxiliary set joins
//! the pattern's orthant with one direct big job at a target station
//! whenever that single jump is not provably negligible.

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::estimator::{Replication, RareEventModel};
use crate::heavy_tails::TailDistribution;
use crate::lattice::{rate, IndexVector, RateWeights};
use crate::multi::{prob_b_multi, MultiConditionalSampler};
use crate::paths::{coordinate_from_raw_jumps, sample_epochs, sample_poisson_count, JumpSkeleton};
use crate::skorokhod::{dz, reflect_terminal, solve_fluid_knapsack, FluidNetwork};

/// Parameters of the fluid level-crossing problem.
#[derive(Debug, Clone)]
pub struct FluidSpec {
    pub network: FluidNetwork,
    /// Target stations (support of the binary combination vector c).
    pub targets: Vec<usize>,
    /// Crossing level for the targeted workload sum.
    pub a: f64,
    /// Right tail indices per station.
    pub beta: Vec<f64>,
    /// Exceedance threshold multipliers per station.
    pub gamma: Vec<f64>,
    /// Arrival rates (unit by default).
    pub rates: Vec<f64>,
    /// Job-size laws per station.
    pub dists: Vec<TailDistribution>,
    /// Cheapest overload pattern and its rate.
    pub l_star: IndexVector,
    pub rate_star: f64,
    /// Auxiliary index set: the overload pattern plus any kept single-jump
    /// entries.
    pub entries: Vec<IndexVector>,
}

impl FluidSpec {
    /// Build and validate a spec. Job sizes are Pareto with scale chosen so
    /// the mean inflow matches the network's `rho` at unit arrival rates.
    pub fn new(
        network: FluidNetwork,
        targets: Vec<usize>,
        a: f64,
        beta: Vec<f64>,
        gamma: Vec<f64>,
    ) -> Result<Self> {
        let d = network.dim();
        if targets.is_empty() || targets.iter().any(|&t| t >= d) {
            return Err(Error::InvalidParameter("invalid target set".into()));
        }
        if beta.len() != d || gamma.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: beta.len().min(gamma.len()) });
        }
        let rates = vec![1.0; d];
        let dists: Vec<TailDistribution> = (0..d)
            .map(|i| {
                let t_r = network.input_rates()[i] * (beta[i] - 1.0) / beta[i];
                TailDistribution::pareto(t_r, beta[i])
            })
            .collect::<Result<_>>()?;

        // Cheapest jump pattern; the estimator needs the multi-jump branch
        // to win (otherwise the event is a single-big-jump problem and the
        // knapsack machinery is moot).
        let (l_star, rate_star) = solve_fluid_knapsack(&network, &targets, a, &beta)?;
        if targets.iter().any(|&t| l_star[t] != 0) {
            return Err(Error::InvalidParameter(format!(
                "level a = {a} is reachable only by a direct jump at a target \
                 station; the overload pattern is degenerate"
            )));
        }

        // Auxiliary entries: the pattern's orthant plus one direct jump per
        // target, dropped when its rate exceeds twice the optimum.
        let weights = RateWeights::new(beta.iter().map(|&b| b - 1.0).collect())?;
        let mut certified: Vec<IndexVector> = vec![l_star.clone()];
        for &t in &targets {
            let mut e_t = vec![0u32; d];
            e_t[t] = 1;
            certified.push(e_t);
        }
        let entries = crate::lattice::reduce_j(&certified, &l_star, &weights)?;

        let spec =
            Self { network, targets, a, beta, gamma, rates, dists, l_star, rate_star, entries };
        if !fluid_gamma_admissible(&spec)? {
            return Err(Error::InadmissibleGamma);
        }
        Ok(spec)
    }

    fn thresholds(&self, n: u64) -> Vec<f64> {
        self.gamma.iter().map(|&g| g * n as f64).collect()
    }

    /// Mean exceedance counts per coordinate at scale n.
    fn exceed_means(&self, n: u64) -> Vec<f64> {
        let th = self.thresholds(n);
        (0..self.network.dim())
            .map(|i| self.rates[i] * n as f64 * self.dists[i].tail_right(th[i]))
            .collect()
    }
}

/// Threshold admissibility. Two kinds of detours around the auxiliary set
/// must be more than twice as costly as the optimum:
///
/// - many sub-threshold jumps at a kept target station climbing the level
///   `a` directly: `ceil(a / gamma_t) (beta_t - 1) > 2 I(l*)`;
/// - replacing station i of the overload pattern by sub-threshold jumps that
///   keep it loaded for the minimal overload duration `t'`, where `t'`
///   solves `dz(J*) t' + dz(J* \ i)(1 - t') = a` and the station drains at
///   rate `-mu_i`: `ceil(t' |mu_i| / gamma_i)(beta_i - 1) + sum of the other
///   pattern weights > 2 I(l*)`.
///
/// All critical ratios must be non-integral.
pub fn fluid_gamma_admissible(spec: &FluidSpec) -> Result<bool> {
    let two_rate = 2.0 * spec.rate_star;
    if spec.gamma.iter().any(|&g| !(g > 0.0)) {
        return Ok(false);
    }
    // Kept single-jump entries.
    for entry in &spec.entries {
        if entry == &spec.l_star {
            continue;
        }
        let t = entry.iter().position(|&x| x == 1).unwrap();
        let ratio = spec.a / spec.gamma[t];
        if (ratio - ratio.round()).abs() < 1e-9 {
            return Ok(false);
        }
        if ratio.ceil() * (spec.beta[t] - 1.0) <= two_rate {
            return Ok(false);
        }
    }
    // Pattern stations.
    let support: Vec<usize> =
        (0..spec.l_star.len()).filter(|&i| spec.l_star[i] > 0).collect();
    let g_full = dz(&spec.network, &spec.targets, &support)?;
    for &i in &support {
        let others: Vec<usize> = support.iter().cloned().filter(|&j| j != i).collect();
        let g_rest = dz(&spec.network, &spec.targets, &others)?;
        // Minimal fraction of the horizon station i must stay overloaded.
        let t_min = (spec.a - g_rest) / (g_full - g_rest);
        let mu_i = spec.network.netput_drift()[i];
        if !(mu_i < 0.0) {
            return Err(Error::InvalidParameter(format!(
                "pattern station {i} does not drain (mu = {mu_i})"
            )));
        }
        let budget = t_min * (-mu_i);
        let ratio = budget / spec.gamma[i];
        if (ratio - ratio.round()).abs() < 1e-9 {
            return Ok(false);
        }
        let others_cost: f64 = others.iter().map(|&j| spec.beta[j] - 1.0).sum();
        if ratio.ceil() * (spec.beta[i] - 1.0) + others_cost <= two_rate {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Closed-form auxiliary-set probability: with `S` the pattern support and
/// `T` the kept single-jump targets,
///
/// ```text
/// P(B) = 1 - [1 - prod_{i in S} (1 - e^-mu_i)] prod_{t in T} e^-mu_t
/// ```
///
/// where `mu_i` is the mean exceedance count of station `i`.
pub fn fluid_prob_b(n: u64, spec: &FluidSpec) -> f64 {
    let means = spec.exceed_means(n);
    let support_term: f64 = spec
        .l_star
        .iter()
        .enumerate()
        .filter(|(_, &l)| l > 0)
        .map(|(i, _)| 1.0 - (-means[i]).exp())
        .product();
    let target_term: f64 = spec
        .entries
        .iter()
        .filter(|e| *e != &spec.l_star)
        .map(|e| {
            let t = e.iter().position(|&x| x == 1).unwrap();
            (-means[t]).exp()
        })
        .product();
    1.0 - (1.0 - support_term) * target_term
}

/// Inclusion–exclusion value of the same probability, kept as an
/// independent route for cross-checking.
pub fn fluid_prob_b_via_orthants(n: u64, spec: &FluidSpec) -> Result<f64> {
    prob_b_multi(&spec.exceed_means(n), &spec.entries)
}

/// Nominal netput skeleton: drift `-(R r)_i`, raw Poisson jumps scaled by n.
pub fn fluid_simulate_nominal(
    spec: &FluidSpec,
    n: u64,
    rng: &mut ChaCha8Rng,
) -> JumpSkeleton {
    let nf = n as f64;
    let drifts = fluid_drifts(spec);
    let coords = (0..spec.network.dim())
        .map(|i| {
            let m = sample_poisson_count(spec.rates[i] * nf, rng) as usize;
            let epochs = sample_epochs(m, rng);
            let raw: Vec<f64> = (0..m).map(|_| spec.dists[i].sample_nominal(rng)).collect();
            coordinate_from_raw_jumps(drifts[i], &raw, epochs, nf)
        })
        .collect();
    JumpSkeleton { coords }
}

/// Skeleton drift per coordinate: the input process is the raw workload
/// inflow minus the full-service outflow `R r`.
fn fluid_drifts(spec: &FluidSpec) -> Vec<f64> {
    let d = spec.network.dim();
    let q = spec.network.routing();
    let r = spec.network.service_rates();
    (0..d)
        .map(|i| -(r[i] - (0..d).map(|j| q[j][i] * r[j]).sum::<f64>()))
        .collect()
}

/// Event: targeted workload sum at the horizon reaches the level.
pub fn fluid_event(spec: &FluidSpec, input: &JumpSkeleton) -> Result<bool> {
    let z0 = vec![0.0; spec.network.dim()];
    let z1 = reflect_terminal(&spec.network, input, &z0)?;
    Ok(spec.targets.iter().map(|&t| z1[t]).sum::<f64>() >= spec.a)
}

/// Membership of a path in the auxiliary set.
pub fn fluid_in_aux(spec: &FluidSpec, input: &JumpSkeleton) -> bool {
    let counts: Vec<u32> = (0..input.dim())
        .map(|i| input.count_exceedances(i, spec.gamma[i]) as u32)
        .collect();
    spec.entries.iter().any(|l| l.iter().zip(&counts).all(|(&li, &c)| c >= li))
}

/// Ready-to-run estimator model at a fixed scale `n`.
pub struct FluidModel {
    pub spec: FluidSpec,
    pub n: u64,
    sampler: MultiConditionalSampler,
    p_aux: f64,
}

impl FluidModel {
    pub fn new(spec: FluidSpec, n: u64) -> Result<Self> {
        let p_aux = fluid_prob_b(n, &spec);
        if !(p_aux > 0.0) {
            return Err(Error::ZeroAuxiliaryProbability);
        }
        // The closed form and the inclusion-exclusion route must agree.
        let via_orthants = fluid_prob_b_via_orthants(n, &spec)?;
        if (p_aux - via_orthants).abs() > 1e-12 * p_aux.max(1e-300) {
            return Err(Error::InvalidParameter(format!(
                "auxiliary probability routes disagree: {p_aux} vs {via_orthants}"
            )));
        }
        let drifts = fluid_drifts(&spec);
        let sampler = MultiConditionalSampler::with_drifts(
            n,
            &spec.rates,
            &spec.dists,
            &drifts,
            &spec.gamma,
            &spec.entries,
        )?;
        Ok(Self { spec, n, sampler, p_aux })
    }
}

impl RareEventModel for FluidModel {
    fn p_aux(&self) -> f64 {
        self.p_aux
    }

    fn replicate_nominal(&self, rng: &mut ChaCha8Rng) -> Result<Replication> {
        let path = fluid_simulate_nominal(&self.spec, self.n, rng);
        Ok(Replication {
            in_event: fluid_event(&self.spec, &path)?,
            in_aux: fluid_in_aux(&self.spec, &path),
            rejection_iters: 0,
        })
    }

    fn replicate_conditional(&self, rng: &mut ChaCha8Rng) -> Result<Replication> {
        let (path, iterations) = self.sampler.sample(rng)?;
        Ok(Replication {
            in_event: fluid_event(&self.spec, &path)?,
            in_aux: fluid_in_aux(&self.spec, &path),
            rejection_iters: iterations,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::{estimate, MixtureConfig};
    use crate::paths::{Coordinate, Jump};
    use crate::rng::replication_rng;

    fn example_network() -> FluidNetwork {
        FluidNetwork::new(
            vec![
                vec![0.0, 0.1, 0.8],
                vec![0.1, 0.0, 0.8],
                vec![0.0, 0.0, 0.0],
            ],
            vec![1.0, 1.0, 2.5],
            vec![0.8, 0.8, 1.0],
        )
        .unwrap()
    }

    fn table_spec() -> FluidSpec {
        FluidSpec::new(
            example_network(),
            vec![2],
            0.05,
            vec![1.5, 1.5, 2.2],
            vec![0.012, 0.012, 0.046],
        )
        .unwrap()
    }

    #[test]
    fn spec_derivations() {
        let spec = table_spec();
        assert_eq!(spec.l_star, vec![1, 1, 0]);
        assert!((spec.rate_star - 1.0).abs() < 1e-12);
        // Both entries kept: beta_3 - 1 = 1.2 <= 2 I(l*) = 2.
        assert_eq!(spec.entries.len(), 2);
        // Job-size scales reproduce the mean inflows.
        for i in 0..3 {
            assert!((spec.dists[i].mean() - spec.network.input_rates()[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn gamma_rules() {
        // The published-style choice is admissible.
        assert!(fluid_gamma_admissible(&table_spec()).unwrap());
        // A huge target threshold fails its ceiling inequality.
        let res = FluidSpec::new(
            example_network(),
            vec![2],
            0.05,
            vec![1.5, 1.5, 2.2],
            vec![0.012, 0.012, 0.20],
        );
        assert!(matches!(res, Err(Error::InadmissibleGamma)));
        // Exact integer ratio on the target rule: a / gamma_3 = 2.
        let res = FluidSpec::new(
            example_network(),
            vec![2],
            0.05,
            vec![1.5, 1.5, 2.2],
            vec![0.012, 0.012, 0.025],
        );
        assert!(matches!(res, Err(Error::InadmissibleGamma)));
        // Pattern-station threshold too large: budget is 3/80 = 0.0375, so
        // gamma_1 must stay below 0.0375 / 3 for the ceiling to beat 2 I(l*).
        let res = FluidSpec::new(
            example_network(),
            vec![2],
            0.05,
            vec![1.5, 1.5, 2.2],
            vec![0.018, 0.012, 0.046],
        );
        assert!(matches!(res, Err(Error::InadmissibleGamma)));
    }

    #[test]
    fn prob_b_routes_agree_and_match_monte_carlo() {
        let spec = table_spec();
        for &n in &[50u64, 400, 1200] {
            let closed = fluid_prob_b(n, &spec);
            let orthants = fluid_prob_b_via_orthants(n, &spec).unwrap();
            assert!(
                (closed - orthants).abs() <= 1e-12 * closed.max(1e-300),
                "n={n}: {closed} vs {orthants}"
            );
        }
        // Count-level Monte Carlo at a scale where P(B) is comfortably
        // inside (0, 1).
        use rand_distr::{Binomial, Distribution, Poisson};
        let n = 120u64;
        let exact = fluid_prob_b(n, &spec);
        let th = spec.thresholds(n);
        let ps: Vec<f64> = (0..3).map(|i| spec.dists[i].tail_right(th[i])).collect();
        let mut rng = replication_rng(91, 0);
        let pois = Poisson::new(n as f64).unwrap();
        let reps = 10_000_000u64;
        let mut hits = 0u64;
        for _ in 0..reps {
            let mut counts = [0u32; 3];
            for i in 0..3 {
                let m = pois.sample(&mut rng) as u64;
                counts[i] = if m > 0 {
                    Binomial::new(m, ps[i]).unwrap().sample(&mut rng) as u32
                } else {
                    0
                };
            }
            let in_b = (counts[0] >= 1 && counts[1] >= 1) || counts[2] >= 1;
            if in_b {
                hits += 1;
            }
        }
        let emp = hits as f64 / reps as f64;
        let se = (exact * (1.0 - exact) / reps as f64).sqrt();
        assert!((emp - exact).abs() < 4.0 * se, "emp {emp} exact {exact}");
    }

    #[test]
    fn event_trivial_and_planted_paths() {
        let spec = table_spec();
        // No jumps: the stable drift keeps every station empty. Deterministic
        // stand-ins for stochastic paths carry the fluid-limit drift mu.
        let mu = spec.network.netput_drift().to_vec();
        let empty = JumpSkeleton {
            coords: mu.iter().map(|&dr| Coordinate::new(dr, vec![])).collect(),
        };
        assert!(!fluid_event(&spec, &empty).unwrap());

        // Big jumps at stations 1 and 2 early enough: the target grows at
        // rate dz({1,2}) = 0.1, so delta < 1 - a/0.1 = 0.5 triggers it.
        let delta = 0.3;
        let planted = JumpSkeleton {
            coords: vec![
                Coordinate::new(mu[0], vec![Jump { epoch: delta, size: 0.5 }]),
                Coordinate::new(mu[1], vec![Jump { epoch: delta, size: 0.5 }]),
                Coordinate::new(mu[2], vec![]),
            ],
        };
        assert!(fluid_event(&spec, &planted).unwrap());
        // Too late: not enough time to accumulate the level.
        let late = JumpSkeleton {
            coords: vec![
                Coordinate::new(mu[0], vec![Jump { epoch: 0.8, size: 0.5 }]),
                Coordinate::new(mu[1], vec![Jump { epoch: 0.8, size: 0.5 }]),
                Coordinate::new(mu[2], vec![]),
            ],
        };
        assert!(!fluid_event(&spec, &late).unwrap());
    }

    #[test]
    fn conditional_sampler_membership_and_blocks() {
        let spec = table_spec();
        let n = 60u64;
        let model = FluidModel::new(spec.clone(), n).unwrap();
        let mut rng = replication_rng(92, 0);
        let reps = 20_000;
        let mut block_hits = [0u64; 2];
        for _ in 0..reps {
            let (path, _) = model.sampler.sample(&mut rng).unwrap();
            assert!(fluid_in_aux(&spec, &path));
            let c3 = path.count_exceedances(2, spec.gamma[2]);
            if c3 >= 1 {
                block_hits[0] += 1;
            } else {
                block_hits[1] += 1;
            }
        }
        // Block frequencies match the exact block weights.
        let means = spec.exceed_means(n);
        let p_b1 = 1.0 - (-means[2]).exp();
        let p_b2 =
            (1.0 - (-means[0]).exp()) * (1.0 - (-means[1]).exp()) * (-means[2]).exp();
        let total = p_b1 + p_b2;
        let expect = p_b1 / total;
        let got = block_hits[0] as f64 / reps as f64;
        let se = (expect * (1.0 - expect) / reps as f64).sqrt();
        assert!((got - expect).abs() < 5.0 * se, "block freq {got} vs {expect}");
    }

    #[test]
    fn estimator_agrees_with_crude_monte_carlo_at_small_scale() {
        let spec = table_spec();
        let n = 40u64;
        let model = FluidModel::new(spec.clone(), n).unwrap();
        let cfg = MixtureConfig { w: 0.05, n, replications: 100_000, seed: 93 };
        let is = estimate(&model, &cfg).unwrap();

        let mut rng = replication_rng(94, 0);
        let crude_n = 300_000u64;
        let mut hits = 0u64;
        for _ in 0..crude_n {
            let path = fluid_simulate_nominal(&spec, n, &mut rng);
            if fluid_event(&spec, &path).unwrap() {
                hits += 1;
            }
        }
        let crude = hits as f64 / crude_n as f64;
        let crude_se = (crude * (1.0 - crude) / crude_n as f64).sqrt();
        let combined = (is.std_err.powi(2) + crude_se.powi(2)).sqrt();
        assert!(
            (is.estimate - crude).abs() < 3.0 * combined,
            "IS {} vs crude {crude} (combined se {combined})",
            is.estimate
        );
    }
}
