//! Clan statistics of membrane snapshots.

use std::collections::{BTreeMap, HashMap};

use rand::seq::index::sample;
use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::engine::{ClanId, MembraneState};
use crate::scalar::Real;
use crate::sphere::{chord_sq, max_hemisphere, HemisphereMode, Point, EXACT_HEMISPHERE_LIMIT};
use crate::stats::{slope, wilson, Interval, Z95};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GenealogyError {
    #[error("need at least two snapshots, got {0}")]
    InsufficientData(usize),
    #[error("cannot sample molecules from an empty membrane")]
    EmptyMembrane,
}

/// Clan counts sorted by decreasing size, ties broken by increasing clan id.
pub fn clan_counts<F: Real>(state: &MembraneState<F>) -> Vec<(ClanId, u64)> {
    let mut counts: HashMap<ClanId, u64> = HashMap::new();
    for m in &state.molecules {
        *counts.entry(m.clan).or_insert(0) += 1;
    }
    let mut v: Vec<_> = counts.into_iter().collect();
    v.sort_unstable_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    v
}

/// Normalized clan sizes in descending order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClanSpectrum<F> {
    pub sizes: Vec<F>,
}

impl<F: Real> ClanSpectrum<F> {
    /// Size of the largest clan, `V_1`; zero for an empty membrane.
    pub fn largest(&self) -> F {
        self.sizes.first().copied().unwrap_or(F::zero())
    }

    pub fn second(&self) -> F {
        self.sizes.get(1).copied().unwrap_or(F::zero())
    }

    pub fn num_clans(&self) -> usize {
        self.sizes.len()
    }
}

pub fn clan_spectrum<F: Real>(state: &MembraneState<F>) -> ClanSpectrum<F> {
    let n = F::from_count(state.n());
    ClanSpectrum {
        sizes: clan_counts(state).into_iter().map(|(_, c)| F::from_count(c) / n).collect(),
    }
}

/// Running sums for the ratio-of-expectations spread estimator.
///
/// `num` sums squared chord distances over same-clan unordered pairs and `den`
/// counts those pairs; `num / den` estimates the spread.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpreadAccumulator<F> {
    pub num: F,
    pub den: F,
}

impl<F: Real> Default for SpreadAccumulator<F> {
    fn default() -> Self {
        Self { num: F::zero(), den: F::zero() }
    }
}

impl<F: Real> SpreadAccumulator<F> {
    pub fn add(&mut self, other: &Self) {
        self.num = self.num + other.num;
        self.den = self.den + other.den;
    }

    pub fn ratio(&self) -> Option<F> {
        (self.den > F::zero()).then(|| self.num / self.den)
    }
}

/// Adds one snapshot's same-clan pairs to `acc` and returns the snapshot's own
/// contribution.
///
/// When there are more than `max_pairs` same-clan pairs, `max_pairs` of them are
/// drawn uniformly (with replacement) and their sum is scaled by
/// `pairs / max_pairs`, so `den` still gets the full pair count.
pub fn accumulate_spread<F: Real, R: Rng + ?Sized>(
    state: &MembraneState<F>,
    acc: &mut SpreadAccumulator<F>,
    max_pairs: u64,
    rng: &mut R,
) -> SpreadAccumulator<F> {
    let mut by_clan: BTreeMap<ClanId, Vec<&Point<F>>> = BTreeMap::new();
    for m in &state.molecules {
        by_clan.entry(m.clan).or_default().push(&m.position);
    }
    let groups: Vec<Vec<&Point<F>>> = by_clan.into_values().filter(|g| g.len() >= 2).collect();
    let pair_count = |g: &Vec<&Point<F>>| (g.len() as u64) * (g.len() as u64 - 1) / 2;
    let total: u64 = groups.iter().map(pair_count).sum();

    let mut part = SpreadAccumulator::default();
    if total == 0 || max_pairs == 0 {
        return part;
    }
    if total <= max_pairs {
        for g in &groups {
            for (i, p) in g.iter().enumerate() {
                for q in &g[i + 1..] {
                    part.num = part.num + chord_sq(p, q);
                }
            }
        }
    } else {
        let mut cumulative = Vec::with_capacity(groups.len());
        let mut running = 0u64;
        for g in &groups {
            running += pair_count(g);
            cumulative.push(running);
        }
        let mut sum = F::zero();
        for _ in 0..max_pairs {
            let r = rng.random_range(0..total);
            let k = cumulative.partition_point(|&c| c <= r);
            let g = &groups[k];
            let i = rng.random_range(0..g.len());
            let mut j = rng.random_range(0..g.len() - 1);
            if j >= i {
                j += 1;
            }
            sum = sum + chord_sq(g[i], g[j]);
        }
        part.num = sum * F::from_count(total) / F::from_count(max_pairs);
    }
    part.den = F::from_count(total);
    acc.add(&part);
    part
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PolarityResult<F> {
    pub is_polarized: bool,
    pub clan: Option<ClanId>,
    pub pole: Option<[F; 3]>,
    /// Largest clan's share of the membrane population.
    pub clan_fraction: F,
    /// Share of the whole membrane population that is in the largest clan and
    /// inside the best hemisphere; zero when the geometry was not evaluated.
    pub hemisphere_fraction: F,
    /// Whether the clan was subsampled down to the exact-search limit.
    pub subsampled: bool,
    pub mode_used: Option<HemisphereMode>,
}

impl<F: Real> PolarityResult<F> {
    pub fn unpolarized(clan: Option<ClanId>, clan_fraction: F) -> Self {
        Self {
            is_polarized: false,
            clan,
            pole: None,
            clan_fraction,
            hemisphere_fraction: F::zero(),
            subsampled: false,
            mode_used: None,
        }
    }
}

/// ε-polarity: at least `1 - eps` of the membrane population belongs to one
/// clan *and* lies in one closed hemisphere.
///
/// Only the largest clan can qualify. Its points are subsampled uniformly
/// to at most [`EXACT_HEMISPHERE_LIMIT`] before the hemisphere search.
pub fn polarity_check<F: Real, R: Rng + ?Sized>(
    state: &MembraneState<F>,
    eps: F,
    mode: HemisphereMode,
    rng: &mut R,
) -> PolarityResult<F> {
    let counts = clan_counts(state);
    let Some(&(clan, count)) = counts.first() else {
        return PolarityResult::unpolarized(None, F::zero());
    };
    let n = F::from_count(state.n());
    let clan_fraction = F::from_count(count) / n;
    let target = F::one() - eps;
    if clan_fraction < target {
        return PolarityResult::unpolarized(Some(clan), clan_fraction);
    }
    let mut points: Vec<Point<F>> =
        state.molecules.iter().filter(|m| m.clan == clan).map(|m| m.position).collect();
    let subsampled = points.len() > EXACT_HEMISPHERE_LIMIT;
    if subsampled {
        points = sample(rng, points.len(), EXACT_HEMISPHERE_LIMIT)
            .into_iter()
            .map(|i| points[i])
            .collect();
    }
    let hemi = max_hemisphere(&points, mode).expect("largest clan is nonempty");
    let hemisphere_fraction = clan_fraction * hemi.covered_fraction;
    PolarityResult {
        is_polarized: hemisphere_fraction >= target,
        clan: Some(clan),
        pole: Some(hemi.pole),
        clan_fraction,
        hemisphere_fraction,
        subsampled,
        mode_used: Some(hemi.mode_used),
    }
}

/// Number of distinct clans among `sample_size` molecules drawn with replacement.
pub fn distinct_clans<F: Real, R: Rng + ?Sized>(
    state: &MembraneState<F>,
    sample_size: usize,
    rng: &mut R,
) -> Result<usize, GenealogyError> {
    let n = state.molecules.len();
    if n == 0 {
        return Err(GenealogyError::EmptyMembrane);
    }
    let mut ids: Vec<ClanId> =
        (0..sample_size).map(|_| state.molecules[rng.random_range(0..n)].clan).collect();
    ids.sort_unstable();
    ids.dedup();
    Ok(ids.len())
}

/// Per-snapshot summary consumed by [`occupancy`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SnapshotRecord<F> {
    pub time: F,
    /// Largest clan size `V_1`.
    pub largest: F,
    pub polarized: bool,
    /// `(sample size, distinct clans)` draws taken at this snapshot.
    pub distinct: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OccupancyStats<F> {
    pub eps: F,
    pub snapshots: u64,
    /// Snapshots counted as independent for the intervals.
    pub effective: F,
    pub polarized: u64,
    pub largest_above: u64,
    /// Fraction of snapshots that are ε-polarized.
    pub p_hat: F,
    /// Fraction of snapshots with `V_1 > sqrt(1 - eps)`.
    pub q_hat: F,
    pub p_ci: Interval<F>,
    pub q_ci: Interval<F>,
    pub largest_clan_series: Vec<(F, F)>,
    /// `(sample size, mean distinct clans)`.
    pub distinct_counts: Vec<(usize, F)>,
    #[serde(skip)]
    distinct_tally: BTreeMap<usize, (u64, u64)>,
}

impl<F: Real> OccupancyStats<F> {
    /// Pools another replica's statistics. Associative and commutative up to
    /// the order of `largest_clan_series`.
    pub fn merge(&mut self, other: &Self) {
        self.snapshots += other.snapshots;
        self.effective = self.effective + other.effective;
        self.polarized += other.polarized;
        self.largest_above += other.largest_above;
        self.largest_clan_series.extend_from_slice(&other.largest_clan_series);
        for (&k, &(sum, cnt)) in &other.distinct_tally {
            let e = self.distinct_tally.entry(k).or_insert((0, 0));
            e.0 += sum;
            e.1 += cnt;
        }
        self.refresh();
    }

    fn refresh(&mut self) {
        let total = F::from_count(self.snapshots);
        self.p_hat = F::from_count(self.polarized) / total;
        self.q_hat = F::from_count(self.largest_above) / total;
        let z = F::lit(Z95);
        self.p_ci = wilson(self.p_hat, self.effective, z);
        self.q_ci = wilson(self.q_hat, self.effective, z);
        self.distinct_counts = self
            .distinct_tally
            .iter()
            .map(|(&k, &(sum, cnt))| (k, F::from_count(sum) / F::from_count(cnt)))
            .collect();
    }

    /// Slope of mean distinct clans against `ln(sample size)`.
    pub fn distinct_slope(&self) -> Option<F> {
        let pts: Vec<(F, F)> = self
            .distinct_counts
            .iter()
            .map(|&(k, m)| (F::from_count(k as u64).ln(), m))
            .collect();
        slope(&pts)
    }
}

/// Occupancy estimates over one trajectory's snapshots.
///
/// Snapshots closer than `decorrelation_gap` are not counted as independent:
/// the effective count is `min(count, 1 + floor(span / gap))`.
pub fn occupancy<F: Real>(
    records: &[SnapshotRecord<F>],
    eps: F,
    decorrelation_gap: F,
) -> Result<OccupancyStats<F>, GenealogyError> {
    if records.len() < 2 {
        return Err(GenealogyError::InsufficientData(records.len()));
    }
    let threshold = (F::one() - eps).sqrt();
    let count = records.len() as u64;
    let span = records[records.len() - 1].time - records[0].time;
    let effective = if decorrelation_gap > F::zero() {
        let blocks = (span / decorrelation_gap).floor() + F::one();
        blocks.min(F::from_count(count))
    } else {
        F::from_count(count)
    };
    let mut distinct_tally: BTreeMap<usize, (u64, u64)> = BTreeMap::new();
    for r in records {
        for &(k, d) in &r.distinct {
            let e = distinct_tally.entry(k).or_insert((0, 0));
            e.0 += d as u64;
            e.1 += 1;
        }
    }
    let unit = Interval { low: F::zero(), high: F::one() };
    let mut stats = OccupancyStats {
        eps,
        snapshots: count,
        effective,
        polarized: records.iter().filter(|r| r.polarized).count() as u64,
        largest_above: records.iter().filter(|r| r.largest > threshold).count() as u64,
        p_hat: F::zero(),
        q_hat: F::zero(),
        p_ci: unit,
        q_ci: unit,
        largest_clan_series: records.iter().map(|r| (r.time, r.largest)).collect(),
        distinct_counts: Vec::new(),
        distinct_tally,
    };
    stats.refresh();
    Ok(stats)
}
