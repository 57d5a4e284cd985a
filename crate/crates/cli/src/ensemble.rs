//! Replica orchestration. Replicas run concurrently on the rayon pool; every
//! reduction happens afterwards in replica-index order, so results do not
//! depend on the thread count.

use polarity_core::engine::{EngineError, EventCounters};
use polarity_core::genealogy::{
    accumulate_spread, clan_spectrum, distinct_clans, polarity_check, PolarityResult, SnapshotRecord,
    SpreadAccumulator,
};
use polarity_core::rng::{replica_seed, replica_stream, Stream};
use polarity_core::sphere::max_hemisphere;
use polarity_core::{ClanId, HemisphereMode, MembraneState64, Params64, Simulator64};
use rayon::prelude::*;

use crate::config::RunConfig;

/// Sample sizes for the distinct-clan regression.
pub const DISTINCT_SIZES: [usize; 3] = [10, 100, 1000];
/// Distinct-clan draws per sample size and snapshot.
pub const DISTINCT_DRAWS: usize = 4;

/// Analysis randomness (pair subsampling, hemisphere subsampling, distinct
/// clans) comes from a second family of streams, so the dynamics do not depend
/// on which statistics are collected.
const ANALYSIS_SALT: u64 = 0xA5A5_5A5A_0F0F_F0F0;
/// Oracle samplers use stream indices counted down from here.
const ORACLE_BASE: u64 = u64::MAX;

pub fn dynamics_stream(master: u64, replica: u64) -> Stream {
    replica_stream(master, replica)
}

pub fn analysis_stream(master: u64, replica: u64) -> Stream {
    replica_stream(master ^ ANALYSIS_SALT, replica)
}

pub fn oracle_stream(master: u64, k: u64) -> Stream {
    replica_stream(master, ORACLE_BASE - k)
}

/// Runs `f` for every replica index and returns the results in index order.
pub fn map_replicas<T, E, F>(replicas: u64, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(u64) -> Result<T, E> + Sync + Send,
{
    (0..replicas).into_par_iter().map(f).collect::<Vec<_>>().into_iter().collect()
}

/// What to record at each snapshot.
#[derive(Debug, Clone)]
pub struct Observation {
    pub params: Params64,
    pub dt_max: f64,
    pub snapshot_times: Vec<f64>,
    pub end_time: f64,
    pub epsilon: f64,
    pub max_pairs: u64,
    pub hemisphere_mode: HemisphereMode,
    pub keep_positions: bool,
    pub distinct: bool,
    /// Skip the hemisphere search entirely.
    pub polarity: bool,
    /// Also run the heuristic search on the whole largest clan, without subsampling.
    pub full_heuristic: bool,
}

impl Observation {
    pub fn from_config(c: &RunConfig) -> Self {
        Self {
            params: c.params.clone(),
            dt_max: c.dt_max,
            snapshot_times: c.snapshot_times(),
            end_time: c.end_time(),
            epsilon: c.epsilon,
            max_pairs: c.max_pairs,
            hemisphere_mode: c.hemisphere_mode,
            keep_positions: false,
            distinct: true,
            polarity: true,
            full_heuristic: false,
        }
    }
}

/// One trajectory CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotRow {
    pub time: f64,
    pub n: u64,
    pub h: f64,
    pub num_clans: usize,
    pub largest: f64,
    pub second: f64,
    pub spread: SpreadAccumulator<f64>,
    pub polarity: PolarityResult<f64>,
    /// Whole-membrane covered fraction from the heuristic on the full largest
    /// clan; present whenever the hemisphere search ran.
    pub full_heuristic_fraction: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ReplicaRun {
    pub index: u64,
    pub seed: u64,
    pub rows: Vec<SnapshotRow>,
    pub records: Vec<SnapshotRecord<f64>>,
    pub spread: SpreadAccumulator<f64>,
    /// `(time, clan, position)` for every molecule at every snapshot.
    pub positions: Vec<(f64, ClanId, [f64; 3])>,
    /// The materialized state at the last snapshot.
    pub last_state: Option<MembraneState64>,
    pub counters: EventCounters,
}

fn observe_one(
    obs: &Observation,
    state: &MembraneState64,
    rng: &mut Stream,
    run: &mut ReplicaRun,
) {
    let spectrum = clan_spectrum(state);
    let part = accumulate_spread(state, &mut run.spread, obs.max_pairs, rng);
    let polarity = if obs.polarity {
        polarity_check(state, obs.epsilon, obs.hemisphere_mode, rng)
    } else {
        PolarityResult::unpolarized(None, spectrum.largest())
    };
    let full_heuristic_fraction = (obs.full_heuristic && polarity.mode_used.is_some()).then(|| {
        let clan = polarity.clan.expect("checked clan");
        let points: Vec<_> = state.molecules.iter().filter(|m| m.clan == clan).map(|m| m.position).collect();
        let hemi = max_hemisphere(&points, HemisphereMode::Heuristic).expect("nonempty clan");
        polarity.clan_fraction * hemi.covered_fraction
    });
    let mut distinct = Vec::new();
    if obs.distinct && state.n() > 0 {
        for &k in &DISTINCT_SIZES {
            for _ in 0..DISTINCT_DRAWS {
                distinct.push((k, distinct_clans(state, k, rng).expect("nonempty membrane")));
            }
        }
    }
    run.records.push(SnapshotRecord {
        time: state.now,
        largest: spectrum.largest(),
        polarized: polarity.is_polarized,
        distinct,
    });
    if obs.keep_positions {
        run.positions
            .extend(state.molecules.iter().map(|m| (state.now, m.clan, m.position.coords)));
    }
    run.rows.push(SnapshotRow {
        time: state.now,
        n: state.n(),
        h: state.fraction(),
        num_clans: spectrum.num_clans(),
        largest: spectrum.largest(),
        second: spectrum.second(),
        spread: part,
        polarity,
        full_heuristic_fraction,
    });
}

/// Simulates replica `index` from an empty membrane and observes every snapshot.
pub fn run_replica(obs: &Observation, master: u64, index: u64) -> Result<ReplicaRun, EngineError> {
    let mut dynamics = dynamics_stream(master, index);
    let mut analysis = analysis_stream(master, index);
    let mut sim = Simulator64::new(obs.params.clone(), obs.dt_max);
    let mut run = ReplicaRun {
        index,
        seed: replica_seed(master, index),
        rows: Vec::with_capacity(obs.snapshot_times.len()),
        records: Vec::with_capacity(obs.snapshot_times.len()),
        spread: SpreadAccumulator::default(),
        positions: Vec::new(),
        last_state: None,
        counters: EventCounters::default(),
    };
    let mut last = None;
    sim.run_observed(obs.end_time, &obs.snapshot_times, &mut dynamics, |state, _| {
        observe_one(obs, state, &mut analysis, &mut run);
        last = Some(state.clone());
    })?;
    run.last_state = last;
    run.counters = sim.counters();
    Ok(run)
}

pub fn run_ensemble(obs: &Observation, master: u64, replicas: u64) -> Result<Vec<ReplicaRun>, EngineError> {
    map_replicas(replicas, |i| run_replica(obs, master, i))
}
