//! Event-driven representation of scaled sample paths.
//!
//! A scaled compound Poisson path on the unit horizon is stored exactly as a
//! per-coordinate linear drift plus a finite sorted list of (epoch, size)
//! jumps; no time grid is ever involved, so event predicates such as
//! "`k` jumps above `gamma`" are evaluated without discretization error.
//! Jumps are stored in scaled units (raw size divided by `n`), matching the
//! scaling of the sets the predicates describe.

use rand::Rng;
use rand_distr::{Distribution, Poisson};

use crate::heavy_tails::TailDistribution;

/// One jump of a scaled path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jump {
    /// Epoch in (0, 1].
    pub epoch: f64,
    /// Scaled jump size (signed for walk-style coordinates).
    pub size: f64,
}

/// One coordinate of a scaled path: drift plus sorted jumps.
#[derive(Debug, Clone, Default)]
pub struct Coordinate {
    /// Drift per unit scaled time.
    pub drift: f64,
    /// Jumps sorted by epoch ascending.
    pub jumps: Vec<Jump>,
}

impl Coordinate {
    pub fn new(drift: f64, mut jumps: Vec<Jump>) -> Self {
        jumps.sort_by(|a, b| a.epoch.partial_cmp(&b.epoch).unwrap());
        Self { drift, jumps }
    }

    /// Right-continuous value at time `t`.
    pub fn value(&self, t: f64) -> f64 {
        let jump_part: f64 =
            self.jumps.iter().take_while(|j| j.epoch <= t).map(|j| j.size).sum();
        self.drift * t + jump_part
    }

    /// Number of jumps with size strictly above `gamma`.
    pub fn count_exceedances(&self, gamma: f64) -> u64 {
        self.jumps.iter().filter(|j| j.size > gamma).count() as u64
    }
}

/// Scaled multi-coordinate path X̄(t) = X(nt)/n on t in [0, 1].
#[derive(Debug, Clone, Default)]
pub struct JumpSkeleton {
    pub coords: Vec<Coordinate>,
}

impl JumpSkeleton {
    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn value(&self, i: usize, t: f64) -> f64 {
        self.coords[i].value(t)
    }

    pub fn count_exceedances(&self, i: usize, gamma: f64) -> u64 {
        self.coords[i].count_exceedances(gamma)
    }

    /// Debug dump as CSV rows `coordinate,epoch,size`.
    pub fn dump_csv(&self) -> String {
        let mut out = String::from("coordinate,epoch,size\n");
        for (i, c) in self.coords.iter().enumerate() {
            for j in &c.jumps {
                out.push_str(&format!("{},{:.17e},{:.17e}\n", i, j.epoch, j.size));
            }
        }
        out
    }
}

/// Sorted uniform epochs in (0, 1] for `m` jumps.
pub fn sample_epochs<R: Rng + ?Sized>(m: usize, rng: &mut R) -> Vec<f64> {
    let mut epochs: Vec<f64> = (0..m).map(|_| 1.0 - rng.random::<f64>()).collect();
    epochs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    epochs
}

/// Poisson(lambda * n) jump count for one coordinate.
pub fn sample_poisson_count<R: Rng + ?Sized>(lambda_n: f64, rng: &mut R) -> u64 {
    Poisson::new(lambda_n).expect("lambda * n must be positive").sample(rng) as u64
}

/// Build one coordinate of a scaled path from raw jump sizes.
///
/// Raw sizes are divided by `n`; the drift is per unit scaled time.
pub fn coordinate_from_raw_jumps(
    drift: f64,
    raw_sizes: &[f64],
    epochs: Vec<f64>,
    n: f64,
) -> Coordinate {
    debug_assert_eq!(raw_sizes.len(), epochs.len());
    let jumps = epochs
        .into_iter()
        .zip(raw_sizes)
        .map(|(epoch, &w)| Jump { epoch, size: w / n })
        .collect();
    Coordinate::new(drift, jumps)
}

/// Nominal compensated compound Poisson path: coordinate `i` has
/// Poisson(lambda_i * n) jumps at uniform epochs with sizes drawn from
/// `dists[i]` (scaled by 1/n) and drift `-lambda_i * E W_i`.
pub fn simulate_cpp_nominal<R: Rng + ?Sized>(
    rates: &[f64],
    dists: &[TailDistribution],
    n: u64,
    rng: &mut R,
) -> JumpSkeleton {
    assert_eq!(rates.len(), dists.len());
    let nf = n as f64;
    let coords = rates
        .iter()
        .zip(dists)
        .map(|(&lambda, dist)| {
            let m = sample_poisson_count(lambda * nf, rng) as usize;
            let epochs = sample_epochs(m, rng);
            let raw: Vec<f64> = (0..m).map(|_| dist.sample_nominal(rng)).collect();
            coordinate_from_raw_jumps(-lambda * dist.mean(), &raw, epochs, nf)
        })
        .collect();
    JumpSkeleton { coords }
}

/// A scaled random-walk path S̄(t) = S_{floor(nt)}/n.
#[derive(Debug, Clone)]
pub struct WalkPath {
    pub increments: Vec<f64>,
}

impl WalkPath {
    pub fn new(increments: Vec<f64>) -> Self {
        Self { increments }
    }

    pub fn n(&self) -> usize {
        self.increments.len()
    }

    /// Piecewise-constant value at scaled time `t` in [0, 1].
    pub fn value(&self, t: f64) -> f64 {
        let k = ((self.n() as f64 * t).floor() as usize).min(self.n());
        self.increments[..k].iter().sum::<f64>() / self.n() as f64
    }
}
