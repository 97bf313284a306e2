//! Reflected stochastic fluid networks: exact event-driven Skorokhod
//! reflection, overload growth rates, and the knapsack solver for the
//! cheapest jump pattern that pushes a workload combination over a level.
//!
//! The network routes fluid between `d` stations: station `i` serves at rate
//! `r_i` and a fraction `Q_ij` of its output feeds station `j`. With
//! `R = (I - Q)^T`, the workload `Z` and the idleness regulator `Y` solve
//!
//! ```text
//! dZ = dX + R dY,   Z >= 0,   Y(0) = 0 nondecreasing, minimal.
//! ```
//!
//! For piecewise-linear inputs with positive jumps the reflected path is
//! itself piecewise linear, so the solver below advances event by event: on
//! each segment the regulator rates solve a small max-form fixed point over
//! the stations currently at the boundary, and the segment ends at the next
//! input jump or the next zero crossing. A discretized Picard iteration of
//! the reflection map is kept purely as a cross-validation oracle.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::lattice::IndexVector;
use crate::paths::JumpSkeleton;

const FIXED_POINT_TOL: f64 = 1e-14;
const FIXED_POINT_CAP: usize = 200_000;

// ---------------------------------------------------------------------------
// Network
// ---------------------------------------------------------------------------

/// A stable d-station fluid network.
#[derive(Debug, Clone)]
pub struct FluidNetwork {
    d: usize,
    /// Routing matrix; `q[i][j]` is the fraction of station i's output sent
    /// to station j.
    q: Vec<Vec<f64>>,
    /// Service rates.
    r: Vec<f64>,
    /// Mean external input rates.
    rho: Vec<f64>,
    /// r' = r - R^{-1} rho (componentwise positive by stability).
    r_prime: Vec<f64>,
    /// mu = rho - R r, the drift of the netput process.
    mu: Vec<f64>,
}

impl FluidNetwork {
    pub fn new(q: Vec<Vec<f64>>, r: Vec<f64>, rho: Vec<f64>) -> Result<Self> {
        let d = r.len();
        if q.len() != d || q.iter().any(|row| row.len() != d) || rho.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: q.len() });
        }
        for (i, row) in q.iter().enumerate() {
            if row[i] != 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "routing matrix must have zero diagonal, got Q[{i}][{i}] = {}",
                    row[i]
                )));
            }
            if row.iter().any(|&x| x < 0.0) {
                return Err(Error::InvalidParameter("routing fractions must be >= 0".into()));
            }
            let s: f64 = row.iter().sum();
            if s > 1.0 + 1e-12 {
                return Err(Error::InvalidParameter(format!(
                    "row {i} of the routing matrix sums to {s} > 1"
                )));
            }
        }
        if r.iter().any(|&x| !(x > 0.0)) {
            return Err(Error::InvalidParameter("service rates must be > 0".into()));
        }
        if rho.iter().any(|&x| !(x >= 0.0)) {
            return Err(Error::InvalidParameter("input rates must be >= 0".into()));
        }

        // Q^n -> 0: repeated squaring of the nonnegative matrix.
        let mut m = DMatrix::from_fn(d, d, |i, j| q[i][j]);
        for _ in 0..40 {
            m = &m * &m;
            let max = m.iter().cloned().fold(0.0f64, f64::max);
            if max < 1e-100 {
                break;
            }
            if max > 1e100 {
                return Err(Error::InvalidParameter(
                    "routing matrix spectral radius >= 1".into(),
                ));
            }
        }
        if m.iter().cloned().fold(0.0f64, f64::max) >= 1e-100 {
            return Err(Error::InvalidParameter("routing matrix powers do not vanish".into()));
        }

        // R = (I - Q)^T; stability requires R^{-1} rho < r.
        let r_mat = DMatrix::from_fn(d, d, |i, j| {
            let id = if i == j { 1.0 } else { 0.0 };
            id - q[j][i]
        });
        let rho_v = DVector::from_column_slice(&rho);
        let solved = r_mat
            .clone()
            .lu()
            .solve(&rho_v)
            .ok_or_else(|| Error::InvalidParameter("I - Q is singular".into()))?;
        let r_prime: Vec<f64> = (0..d).map(|i| r[i] - solved[i]).collect();
        if r_prime.iter().any(|&x| !(x > 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "network is not stable: r - R^-1 rho = {r_prime:?} must be positive"
            )));
        }
        let r_v = DVector::from_column_slice(&r);
        let rr = &r_mat * &r_v;
        let mu: Vec<f64> = (0..d).map(|i| rho[i] - rr[i]).collect();
        Ok(Self { d, q, r, rho, r_prime, mu })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn routing(&self) -> &[Vec<f64>] {
        &self.q
    }

    pub fn service_rates(&self) -> &[f64] {
        &self.r
    }

    pub fn input_rates(&self) -> &[f64] {
        &self.rho
    }

    /// Residual service rates r' = r - R^{-1} rho.
    pub fn residual_rates(&self) -> &[f64] {
        &self.r_prime
    }

    /// Netput drift mu = rho - R r; this is the drift the scaled input
    /// skeleton carries in the fluid applications.
    pub fn netput_drift(&self) -> &[f64] {
        &self.mu
    }

    /// (R v)_i = v_i - sum_j Q_ji v_j.
    fn apply_r(&self, v: &[f64]) -> Vec<f64> {
        (0..self.d)
            .map(|i| v[i] - (0..self.d).map(|j| self.q[j][i] * v[j]).sum::<f64>())
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Event-driven reflection
// ---------------------------------------------------------------------------

/// One recorded state of a reflected path. Jumps produce two records at the
/// same epoch (before and after), giving an RCLL description.
#[derive(Debug, Clone)]
pub struct PathPoint {
    pub t: f64,
    pub z: Vec<f64>,
    pub y: Vec<f64>,
}

/// A reflected path: piecewise-linear `Z` and regulator `Y` recorded at every
/// event epoch.
#[derive(Debug, Clone)]
pub struct ReflectedPath {
    pub points: Vec<PathPoint>,
}

impl ReflectedPath {
    pub fn terminal_z(&self) -> &[f64] {
        &self.points.last().unwrap().z
    }

    pub fn terminal_y(&self) -> &[f64] {
        &self.points.last().unwrap().y
    }
}

struct SegmentRates {
    y_rate: Vec<f64>,
    z_rate: Vec<f64>,
}

/// Minimal nonnegative regulator rates for boundary set `sigma` against
/// input slope `v`: for i in sigma, y_i = max(0, (Q^T y)_i - v_i), else 0.
/// The iteration from zero increases monotonically and contracts because
/// the routing matrix powers vanish.
fn segment_rates(net: &FluidNetwork, v: &[f64], sigma: u32) -> Result<SegmentRates> {
    let d = net.d;
    let mut y = vec![0.0f64; d];
    let scale = 1.0 + v.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    for _ in 0..FIXED_POINT_CAP {
        let mut change = 0.0f64;
        for i in 0..d {
            if sigma >> i & 1 == 0 {
                continue;
            }
            let inflow: f64 = (0..d).map(|j| net.q[j][i] * y[j]).sum();
            let next = (inflow - v[i]).max(0.0);
            change = change.max((next - y[i]).abs());
            y[i] = next;
        }
        if change <= FIXED_POINT_TOL * scale {
            let z_rate: Vec<f64> =
                net.apply_r(&y).iter().zip(v).map(|(ry, &vi)| vi + ry).collect();
            return Ok(SegmentRates { y_rate: y, z_rate });
        }
    }
    Err(Error::NonConvergent(FIXED_POINT_CAP))
}

/// Exact event-driven solution of the Skorokhod problem for a piecewise
/// linear input with positive jumps, started from `z0 >= 0`.
pub fn reflect(net: &FluidNetwork, input: &JumpSkeleton, z0: &[f64]) -> Result<ReflectedPath> {
    let mut points = Vec::new();
    reflect_inner(net, input, z0, Some(&mut points))?;
    Ok(ReflectedPath { points })
}

/// Workload at the terminal time only; skips the event log, which keeps the
/// estimator hot path free of per-event allocation.
pub fn reflect_terminal(net: &FluidNetwork, input: &JumpSkeleton, z0: &[f64]) -> Result<Vec<f64>> {
    reflect_inner(net, input, z0, None)
}

fn reflect_inner(
    net: &FluidNetwork,
    input: &JumpSkeleton,
    z0: &[f64],
    mut record: Option<&mut Vec<PathPoint>>,
) -> Result<Vec<f64>> {
    let d = net.d;
    if input.dim() != d || z0.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: input.dim() });
    }
    if z0.iter().any(|&x| x < 0.0) {
        return Err(Error::InvalidParameter("initial workload must be >= 0".into()));
    }
    let eps = 1e-12 * z0.iter().fold(1.0f64, |a, &b| a.max(b.abs()));

    // Merge jumps across coordinates, sorted by epoch.
    let mut jumps: Vec<(f64, usize, f64)> = Vec::new();
    for (i, coord) in input.coords.iter().enumerate() {
        for j in &coord.jumps {
            if j.size < 0.0 {
                return Err(Error::InvalidParameter(
                    "reflection requires nonnegative jumps".into(),
                ));
            }
            jumps.push((j.epoch, i, j.size));
        }
    }
    jumps.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

    let v: Vec<f64> = input.coords.iter().map(|c| c.drift).collect();
    let mut rate_cache: std::collections::HashMap<u32, SegmentRates> =
        std::collections::HashMap::new();

    let mut t = 0.0f64;
    let mut z = z0.to_vec();
    let mut y = vec![0.0f64; d];
    let mut jump_idx = 0usize;
    if let Some(rec) = record.as_deref_mut() {
        rec.push(PathPoint { t, z: z.clone(), y: y.clone() });
    }

    while t < 1.0 {
        let sigma: u32 = (0..d).filter(|&i| z[i] <= eps).fold(0u32, |acc, i| acc | 1 << i);
        if !rate_cache.contains_key(&sigma) {
            rate_cache.insert(sigma, segment_rates(net, &v, sigma)?);
        }
        let rates = &rate_cache[&sigma];

        // Next event: end of horizon, input jump, or a zero crossing.
        let mut t_next = 1.0f64;
        let mut crossing: Option<usize> = None;
        if jump_idx < jumps.len() && jumps[jump_idx].0 < t_next {
            t_next = jumps[jump_idx].0;
        }
        for i in 0..d {
            if z[i] > eps && rates.z_rate[i] < -1e-14 {
                let t_c = t + z[i] / (-rates.z_rate[i]);
                if t_c < t_next {
                    t_next = t_c;
                    crossing = Some(i);
                }
            }
        }

        let dt = t_next - t;
        for i in 0..d {
            z[i] += rates.z_rate[i] * dt;
            y[i] += rates.y_rate[i] * dt;
            if z[i] < 0.0 {
                debug_assert!(z[i] > -1e-9, "workload undershoot {}", z[i]);
                z[i] = 0.0;
            }
        }
        if let Some(i) = crossing {
            z[i] = 0.0;
        }
        t = t_next;
        if let Some(rec) = record.as_deref_mut() {
            rec.push(PathPoint { t, z: z.clone(), y: y.clone() });
        }

        // Apply all input jumps at this epoch; positive jumps transfer to Z
        // unchanged.
        if crossing.is_none() && t < 1.0 {
            let mut jumped = false;
            while jump_idx < jumps.len() && jumps[jump_idx].0 == t {
                let (_, coord, size) = jumps[jump_idx];
                z[coord] += size;
                jump_idx += 1;
                jumped = true;
            }
            if jumped {
                if let Some(rec) = record.as_deref_mut() {
                    rec.push(PathPoint { t, z: z.clone(), y: y.clone() });
                }
            }
        }
    }
    Ok(z)
}

// ---------------------------------------------------------------------------
// Discretized oracle
// ---------------------------------------------------------------------------

/// Picard iteration of the reflection map on a uniform grid; used only as a
/// test oracle for [`reflect`].
///
/// `x` holds absolute grid values of the input (initial workload included):
/// `x[k][i]` is coordinate `i` at time `k * h`. Returns the grid regulator.
pub fn reflect_discrete_oracle(
    net: &FluidNetwork,
    x: &[Vec<f64>],
    tol: f64,
) -> Result<Vec<Vec<f64>>> {
    let d = net.d;
    let m = x.len();
    let mut w = vec![vec![0.0f64; d]; m];
    let cap = 100_000;
    for _ in 0..cap {
        let mut change = 0.0f64;
        // pi(w)(t) = max{0, sup_{s<=t} Q^T w(s) - x(s)} componentwise.
        let mut running = vec![f64::NEG_INFINITY; d];
        for k in 0..m {
            for i in 0..d {
                let qtw: f64 = (0..d).map(|j| net.q[j][i] * w[k][j]).sum();
                running[i] = running[i].max(qtw - x[k][i]);
            }
            for i in 0..d {
                let next = running[i].max(0.0);
                change = change.max((next - w[k][i]).abs());
                w[k][i] = next;
            }
        }
        if change <= tol {
            return Ok(w);
        }
    }
    Err(Error::NonConvergent(cap))
}

/// Sample `z0 + input` on a uniform grid with `m + 1` points (step `1/m`).
pub fn sample_on_grid(input: &JumpSkeleton, z0: &[f64], m: usize) -> Vec<Vec<f64>> {
    let d = input.dim();
    let h = 1.0 / m as f64;
    let mut out = Vec::with_capacity(m + 1);
    let mut jump_cursor = vec![0usize; d];
    let mut jump_acc = vec![0.0f64; d];
    for k in 0..=m {
        let t = k as f64 * h;
        let mut row = Vec::with_capacity(d);
        for i in 0..d {
            let jumps = &input.coords[i].jumps;
            while jump_cursor[i] < jumps.len() && jumps[jump_cursor[i]].epoch <= t {
                jump_acc[i] += jumps[jump_cursor[i]].size;
                jump_cursor[i] += 1;
            }
            row.push(z0[i] + input.coords[i].drift * t + jump_acc[i]);
        }
        out.push(row);
    }
    out
}

// ---------------------------------------------------------------------------
// Overload analysis
// ---------------------------------------------------------------------------

/// The stationary boundary rates when the stations in `overloaded` are held
/// strictly positive: entries for `i` outside `overloaded` solve
///
/// ```text
/// r*_i = max{ r'_i - sum_{j != i} Q_ji r'_j + sum_{j != i, j free} Q_ji r*_j , 0 }
/// ```
///
/// by Banach iteration from zero. Entries for overloaded stations are not
/// defined by the fixed point and are returned as zero; the growth-rate
/// formula never reads them.
pub fn r_star(net: &FluidNetwork, overloaded: &[usize]) -> Vec<f64> {
    let d = net.dim();
    let in_overload: Vec<bool> = (0..d).map(|i| overloaded.contains(&i)).collect();
    // b_i = (R r - rho)_i = -mu_i.
    let b: Vec<f64> = net.netput_drift().iter().map(|&m| -m).collect();
    let mut x = vec![0.0f64; d];
    for _ in 0..FIXED_POINT_CAP {
        let mut change = 0.0f64;
        for i in 0..d {
            if in_overload[i] {
                continue;
            }
            let feed: f64 = (0..d)
                .filter(|&j| !in_overload[j] && j != i)
                .map(|j| net.q[j][i] * x[j])
                .sum();
            let next = (b[i] + feed).max(0.0);
            change = change.max((next - x[i]).abs());
            x[i] = next;
        }
        if change <= FIXED_POINT_TOL {
            return x;
        }
    }
    unreachable!("r* iteration is a contraction for validated networks");
}

/// Growth rate of the targeted workload combination while the stations in
/// `overloaded` are kept overloaded:
///
/// ```text
/// dz(J) = sum_{i in targets} ( r*_i - r'_i + sum_{j != i} Q_ji r'_j
///                              - sum_{j != i, j not in J} Q_ji r*_j )
/// ```
pub fn dz(net: &FluidNetwork, targets: &[usize], overloaded: &[usize]) -> Result<f64> {
    if targets.iter().any(|t| overloaded.contains(t)) {
        return Err(Error::InvalidParameter(
            "overloaded set must avoid the target stations".into(),
        ));
    }
    let rs = r_star(net, overloaded);
    let rp = net.residual_rates();
    let d = net.dim();
    let mut total = 0.0;
    for &i in targets {
        let inflow_rp: f64 = (0..d).filter(|&j| j != i).map(|j| net.q[j][i] * rp[j]).sum();
        let inflow_rs: f64 = (0..d)
            .filter(|&j| j != i && !overloaded.contains(&j))
            .map(|j| net.q[j][i] * rs[j])
            .sum();
        total += rs[i] - rp[i] + inflow_rp - inflow_rs;
    }
    Ok(total)
}

/// Solve the knapsack problem for the cheapest overload pattern.
///
/// Minimizes the rate `I(l) = sum_i (beta_i - 1) l_i` over patterns
/// `l in {0,1}^d` supported off the target set whose overloaded stations
/// drain into the targets fast enough: `dz(support(l)) > a`. The returned
/// pattern is compared against the single-jump alternative (one oversized
/// job straight at a target station, costing `min_t beta_t - 1`), and the
/// cheaper branch wins.
///
/// Errors: `dz(J) = a` for some subset (degenerate level), tied minima.
pub fn solve_fluid_knapsack(
    net: &FluidNetwork,
    targets: &[usize],
    a: f64,
    beta: &[f64],
) -> Result<(IndexVector, f64)> {
    let d = net.dim();
    if beta.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: beta.len() });
    }
    if !(a > 0.0) {
        return Err(Error::InvalidParameter("level a must be > 0".into()));
    }
    let free: Vec<usize> = (0..d).filter(|i| !targets.contains(i)).collect();
    let k = free.len();

    // Every subset must sit away from the level.
    let mut glist = vec![0.0f64; 1 << k];
    for mask in 0u32..(1 << k) {
        let overloaded: Vec<usize> =
            (0..k).filter(|&j| mask >> j & 1 == 1).map(|j| free[j]).collect();
        let g = dz(net, targets, &overloaded)?;
        if (g - a).abs() <= 1e-12 {
            return Err(Error::BoundaryDegenerateLevel(a));
        }
        glist[mask as usize] = g;
    }

    // Enumerate subsets in increasing rate order; monotonicity of dz means
    // the first feasible subset is a minimal feasible one, and anything
    // strictly costlier can be pruned once a minimum is found.
    let mut subsets: Vec<(f64, u32)> = (0u32..(1 << k))
        .map(|mask| {
            let rate: f64 = (0..k)
                .filter(|&j| mask >> j & 1 == 1)
                .map(|j| beta[free[j]] - 1.0)
                .sum();
            (rate, mask)
        })
        .collect();
    subsets.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

    let mut best: Option<(f64, u32)> = None;
    for &(rate, mask) in &subsets {
        match best {
            Some((br, bm)) => {
                if rate > br + 1e-12 {
                    break;
                }
                if glist[mask as usize] > a {
                    return Err(Error::NonUniqueMinimizer(
                        mask_to_vec(bm, &free, d),
                        mask_to_vec(mask, &free, d),
                    ));
                }
            }
            None => {
                if glist[mask as usize] > a {
                    best = Some((rate, mask));
                }
            }
        }
    }

    // Single-jump branch: one oversized job straight at a target station.
    let single: Option<(f64, usize)> = targets
        .iter()
        .map(|&t| (beta[t] - 1.0, t))
        .min_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

    let unit = |t: usize| {
        let mut e_t = vec![0u32; d];
        e_t[t] = 1;
        e_t
    };
    match (best, single) {
        (Some((rate, mask)), Some((srate, t))) => {
            if (rate - srate).abs() <= 1e-12 {
                return Err(Error::NonUniqueMinimizer(mask_to_vec(mask, &free, d), unit(t)));
            }
            if rate < srate {
                Ok((mask_to_vec(mask, &free, d), rate))
            } else {
                Ok((unit(t), srate))
            }
        }
        (None, Some((srate, t))) => Ok((unit(t), srate)),
        (Some((rate, mask)), None) => Ok((mask_to_vec(mask, &free, d), rate)),
        (None, None) => Err(Error::Infeasible { bound: 1 }),
    }
}

fn mask_to_vec(mask: u32, free: &[usize], d: usize) -> IndexVector {
    let mut l = vec![0u32; d];
    for (j, &station) in free.iter().enumerate() {
        if mask >> j & 1 == 1 {
            l[station] = 1;
        }
    }
    l
}
