//! Multidimensional auxiliary sets: inclusion–exclusion probabilities,
//! disjoint block decomposition, and the per-coordinate conditional path
//! sampler.
//!
//! The auxiliary set is a union of count orthants: a path belongs to it when
//! for some index vector `l` in the set, coordinate `i` carries at least
//! `l_i` jumps above its threshold for every `i`. Sampling conditioned on a
//! union needs a disjoint decomposition; the decomposition used here splits
//! the union into blocks whose per-coordinate exceedance counts are
//! constrained to intervals, which makes coordinates conditionally
//! independent and reduces each to the one-dimensional scheme.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::counts::{poisson_upper_tail, CountSampler};
use crate::error::{Error, Result};
use crate::estimator::sample_sizes_conditional;
use crate::heavy_tails::TailDistribution;
use crate::lattice::IndexVector;
use crate::paths::{coordinate_from_raw_jumps, sample_epochs, JumpSkeleton};

// ---------------------------------------------------------------------------
// Inclusion–exclusion probability
// ---------------------------------------------------------------------------

/// P(B) for `B = union of count orthants`, by inclusion–exclusion: an
/// intersection of orthants is the orthant of the componentwise maxima, and
/// its probability factors over coordinates into Poisson upper tails.
///
/// `exceed_means[i]` is the mean exceedance count of coordinate `i`
/// (`lambda_i * n * p_i`).
pub fn prob_b_multi(exceed_means: &[f64], entries: &[IndexVector]) -> Result<f64> {
    let d = exceed_means.len();
    if entries.is_empty() {
        return Err(Error::InvalidParameter("auxiliary set needs at least one entry".into()));
    }
    for l in entries {
        if l.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: l.len() });
        }
    }
    let k = entries.len();
    assert!(k <= 20, "inclusion-exclusion over 2^{k} subsets is not sensible");
    let mut total = 0.0;
    for mask in 1u32..(1 << k) {
        let mut l_max = vec![0u32; d];
        for (j, l) in entries.iter().enumerate() {
            if mask >> j & 1 == 1 {
                for i in 0..d {
                    l_max[i] = l_max[i].max(l[i]);
                }
            }
        }
        let prod: f64 =
            (0..d).map(|i| poisson_upper_tail(exceed_means[i], l_max[i] as u64)).product();
        let sign = if mask.count_ones() % 2 == 1 { 1.0 } else { -1.0 };
        total += sign * prod;
    }
    Ok(total.clamp(0.0, 1.0))
}

// ---------------------------------------------------------------------------
// Disjoint decomposition
// ---------------------------------------------------------------------------

/// One disjoint block: per-coordinate exceedance counts confined to
/// `[lower_i, upper_i]`, with `None` standing for an unbounded coordinate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DisjointBlock {
    pub lower: Vec<u32>,
    pub upper: Vec<Option<u32>>,
}

impl DisjointBlock {
    fn is_empty(&self) -> bool {
        self.lower.iter().zip(&self.upper).any(|(&lo, up)| up.map_or(false, |hi| hi < lo))
    }

    pub fn contains(&self, counts: &[u32]) -> bool {
        counts.iter().zip(&self.lower).zip(&self.upper).all(|((&c, &lo), up)| {
            c >= lo && up.map_or(true, |hi| c <= hi)
        })
    }

    /// P(counts in block) for independent Poisson exceedance counts.
    pub fn prob(&self, exceed_means: &[f64]) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .zip(exceed_means)
            .map(|((&lo, up), &mu)| {
                let upper_tail = poisson_upper_tail(mu, lo as u64);
                match up {
                    None => upper_tail,
                    Some(hi) => (upper_tail - poisson_upper_tail(mu, *hi as u64 + 1)).max(0.0),
                }
            })
            .product()
    }
}

/// Decompose the orthant union into disjoint interval blocks.
///
/// Entries are processed in descending order of their final coordinate
/// (ties broken lexicographically); each entry's orthant is added minus what
/// previous entries already cover, and the subtraction is expanded into
/// disjoint boxes by the first-violated-coordinate rule. For the fluid
/// application this reproduces exactly the two blocks "target station has an
/// exceedance" and "both feeder stations exceed, the target has none".
pub fn decompose_blocks(entries: &[IndexVector]) -> Result<Vec<DisjointBlock>> {
    if entries.is_empty() {
        return Err(Error::InvalidParameter("auxiliary set needs at least one entry".into()));
    }
    let d = entries[0].len();
    let mut order: Vec<IndexVector> = entries.to_vec();
    order.sort_by(|a, b| b[d - 1].cmp(&a[d - 1]).then_with(|| b.cmp(a)));

    let mut blocks: Vec<DisjointBlock> = Vec::new();
    let mut processed: Vec<IndexVector> = Vec::new();
    for entry in order {
        // Start from the entry's orthant...
        let mut pieces = vec![DisjointBlock {
            lower: entry.clone(),
            upper: vec![None; d],
        }];
        // ...and subtract each previously processed orthant, splitting by
        // the first coordinate that falls below the subtracted bound.
        for prev in &processed {
            let mut next = Vec::new();
            for piece in pieces {
                next.extend(subtract_orthant(&piece, prev));
            }
            pieces = next;
        }
        blocks.extend(pieces.into_iter().filter(|b| !b.is_empty()));
        processed.push(entry);
    }
    Ok(blocks)
}

/// `piece \ orthant(bound)` as disjoint interval blocks: the complement of
/// the orthant is partitioned by the first coordinate sitting below its
/// bound, all earlier coordinates sitting at or above theirs.
fn subtract_orthant(piece: &DisjointBlock, bound: &[u32]) -> Vec<DisjointBlock> {
    let d = bound.len();
    let mut out = Vec::new();
    for i in 0..d {
        if bound[i] == 0 {
            continue; // coordinate never below bound 0
        }
        let mut b = piece.clone();
        // coordinates before i: at or above the subtracted bound
        let mut feasible = true;
        for (j, &bj) in bound.iter().enumerate().take(i) {
            b.lower[j] = b.lower[j].max(bj);
            if b.upper[j].map_or(false, |hi| hi < b.lower[j]) {
                feasible = false;
                break;
            }
        }
        if !feasible {
            continue;
        }
        // coordinate i: strictly below the bound
        let hi = bound[i] - 1;
        b.upper[i] = Some(b.upper[i].map_or(hi, |h| h.min(hi)));
        if !b.is_empty() {
            out.push(b);
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Conditional path sampler
// ---------------------------------------------------------------------------

/// Precomputed tables for sampling scaled paths conditioned on a
/// multidimensional auxiliary set. Built once per `(n, gamma, entries)` and
/// shared read-only across replication workers.
#[derive(Debug)]
pub struct MultiConditionalSampler {
    n: u64,
    rates: Vec<f64>,
    dists: Vec<TailDistribution>,
    /// Per-coordinate skeleton drift (per unit scaled time).
    drifts: Vec<f64>,
    thresholds: Vec<f64>,
    blocks: Vec<DisjointBlock>,
    /// Cumulative block probabilities (unnormalised).
    block_cdf: Vec<f64>,
    /// Per block, per coordinate: a count sampler, or None when the
    /// coordinate is unconstrained (nominal).
    count_tables: Vec<Vec<Option<CountSampler>>>,
    total_prob: f64,
}

impl MultiConditionalSampler {
    /// `gamma` holds scaled thresholds; jumps above `gamma_i * n` count as
    /// exceedances in coordinate `i`. The compensated drift is used for each
    /// coordinate; [`Self::with_drifts`] overrides it.
    pub fn new(
        n: u64,
        rates: &[f64],
        dists: &[TailDistribution],
        gamma: &[f64],
        entries: &[IndexVector],
    ) -> Result<Self> {
        let drifts: Vec<f64> =
            rates.iter().zip(dists).map(|(&l, d)| -l * d.mean()).collect();
        Self::with_drifts(n, rates, dists, &drifts, gamma, entries)
    }

    /// Same tables with explicit skeleton drifts (the fluid application
    /// carries the netput drift instead of the compensated one).
    pub fn with_drifts(
        n: u64,
        rates: &[f64],
        dists: &[TailDistribution],
        drifts: &[f64],
        gamma: &[f64],
        entries: &[IndexVector],
    ) -> Result<Self> {
        let d = rates.len();
        if dists.len() != d || gamma.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: dists.len().min(gamma.len()) });
        }
        let thresholds: Vec<f64> = gamma.iter().map(|&g| g * n as f64).collect();
        let exceed_means: Vec<f64> = (0..d)
            .map(|i| rates[i] * n as f64 * dists[i].tail_right(thresholds[i]))
            .collect();
        let blocks_all = decompose_blocks(entries)?;
        let mut blocks = Vec::new();
        let mut block_cdf = Vec::new();
        let mut cum = 0.0;
        for b in blocks_all {
            let p = b.prob(&exceed_means);
            if p < 1e-300 {
                // Numerically unreachable blocks cannot be sampled and
                // contribute nothing at double precision.
                log::warn!("dropping zero-probability block {b:?}");
                continue;
            }
            cum += p;
            blocks.push(b);
            block_cdf.push(cum);
        }
        if blocks.is_empty() || !(cum > 0.0) {
            return Err(Error::DegenerateAuxiliarySet);
        }

        let mut count_tables = Vec::with_capacity(blocks.len());
        for b in &blocks {
            let mut per_coord = Vec::with_capacity(d);
            for i in 0..d {
                let unconstrained = b.lower[i] == 0 && b.upper[i].is_none();
                if unconstrained {
                    per_coord.push(None);
                } else {
                    let p = dists[i].tail_right(thresholds[i]);
                    let table = CountSampler::poisson_conditioned(
                        rates[i] * n as f64,
                        p,
                        b.lower[i] as u64,
                        b.upper[i].map(|h| h as u64),
                    )?;
                    per_coord.push(Some(table));
                }
            }
            count_tables.push(per_coord);
        }

        Ok(Self {
            n,
            rates: rates.to_vec(),
            dists: dists.to_vec(),
            drifts: drifts.to_vec(),
            thresholds,
            blocks,
            block_cdf,
            count_tables,
            total_prob: cum,
        })
    }

    /// Total probability of the auxiliary set as the sum of block
    /// probabilities (equal to the inclusion–exclusion value up to rounding).
    pub fn total_prob(&self) -> f64 {
        self.total_prob
    }

    pub fn blocks(&self) -> &[DisjointBlock] {
        &self.blocks
    }

    /// Index of the block drawn by the cumulative weights h_1.
    fn sample_block<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random::<f64>() * self.total_prob;
        self.block_cdf.partition_point(|&c| c < u).min(self.blocks.len() - 1)
    }

    /// Exact draw of the d-coordinate scaled path conditioned on the
    /// auxiliary set. Returns the path and the total rejection iterations.
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> Result<(JumpSkeleton, u64)> {
        let block_idx = self.sample_block(rng);
        let block = &self.blocks[block_idx];
        let tables = &self.count_tables[block_idx];
        let nf = self.n as f64;
        let mut coords = Vec::with_capacity(self.rates.len());
        let mut iterations = 0u64;
        for i in 0..self.rates.len() {
            let drift = self.drifts[i];
            let coord = match &tables[i] {
                None => {
                    // Unconstrained coordinate: nominal law.
                    let m = crate::paths::sample_poisson_count(self.rates[i] * nf, rng) as usize;
                    let epochs = sample_epochs(m, rng);
                    let raw: Vec<f64> =
                        (0..m).map(|_| self.dists[i].sample_nominal(rng)).collect();
                    coordinate_from_raw_jumps(drift, &raw, epochs, nf)
                }
                Some(table) => {
                    let q = table.sample(rng);
                    let (raw, iters) = sample_sizes_conditional(
                        &self.dists[i],
                        q,
                        self.thresholds[i],
                        block.lower[i] as u64,
                        block.upper[i].map(|h| h as u64),
                        rng,
                    )?;
                    iterations += iters;
                    let epochs = sample_epochs(q as usize, rng);
                    coordinate_from_raw_jumps(drift, &raw, epochs, nf)
                }
            };
            coords.push(coord);
        }
        let path = JumpSkeleton { coords };
        debug_assert!(block.contains(&self.exceedance_counts(&path)));
        Ok((path, iterations))
    }

    fn exceedance_counts(&self, path: &JumpSkeleton) -> Vec<u32> {
        (0..path.dim())
            .map(|i| path.count_exceedances(i, self.thresholds[i] / self.n as f64) as u32)
            .collect()
    }

    /// Membership of a path in the auxiliary set.
    pub fn in_aux(&self, path: &JumpSkeleton, entries: &[IndexVector]) -> bool {
        let counts = self.exceedance_counts(path);
        entries.iter().any(|l| l.iter().zip(&counts).all(|(&li, &c)| c >= li))
    }
}
