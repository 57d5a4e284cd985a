//! Exact continuous-time simulation of the N-molecule membrane.
//!
//! Waiting times only depend on the membrane count `n`, so the jump chain is
//! sampled exactly:
//!
//! | event        | rate                 | effect                                   |
//! |--------------|----------------------|------------------------------------------|
//! | association  | `k_on (N - n)`       | new molecule, uniform position, new clan |
//! | dissociation | `k_off N n`          | uniformly chosen molecule leaves         |
//! | recruitment  | `k_fb n (N - n)`     | copy of a uniformly chosen molecule      |
//!
//! Diffusion is materialized lazily: a molecule's position is only advanced
//! when it is read (as a recruitment parent, or at a snapshot). Brownian
//! increments over disjoint intervals are independent, so this has the same
//! law as advancing everything at every event.

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::model::{ParamError, Params};
use crate::scalar::Real;
use crate::sphere::{advance, sample_uniform, Point};

/// Clan identifier, drawn from a per-run counter and never reused.
pub type ClanId = u64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("total event rate is zero: no event can fire")]
    Stuck,
    #[error("molecule index {index} out of range for a membrane of {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("snapshot times must be ascending and lie in [now, t_end]")]
    BadSnapshotTimes,
    #[error(transparent)]
    Params(#[from] ParamError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Molecule<F> {
    pub position: Point<F>,
    pub clan: ClanId,
    /// Time up to which `position` has been materialized.
    pub last_update: F,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MembraneState<F> {
    pub now: F,
    pub n_total: u64,
    pub molecules: Vec<Molecule<F>>,
    pub next_clan_id: ClanId,
}

impl<F: Real> MembraneState<F> {
    pub fn empty(n_total: u64) -> Self {
        Self { now: F::zero(), n_total, molecules: Vec::new(), next_clan_id: 0 }
    }

    /// Membrane count `n`.
    pub fn n(&self) -> u64 {
        self.molecules.len() as u64
    }

    pub fn cytosol(&self) -> u64 {
        self.n_total - self.n()
    }

    /// Membrane fraction `h = n / N`.
    pub fn fraction(&self) -> F {
        F::from_count(self.n()) / F::from_count(self.n_total)
    }

    /// Whether every position has been advanced to `now`.
    pub fn is_materialized(&self) -> bool {
        self.molecules.iter().all(|m| m.last_update == self.now)
    }

    /// Advances every molecule to `now`.
    pub fn materialize<R: Rng + ?Sized>(&mut self, params: &Params<F>, dt_max: F, rng: &mut R) {
        let now = self.now;
        for m in &mut self.molecules {
            materialize_one(m, now, params, dt_max, rng);
        }
    }
}

#[inline]
fn materialize_one<F: Real, R: Rng + ?Sized>(
    m: &mut Molecule<F>,
    now: F,
    params: &Params<F>,
    dt_max: F,
    rng: &mut R,
) {
    if m.last_update < now {
        m.position = advance(&m.position, now - m.last_update, dt_max, params.diffusion, params.radius, rng);
        m.last_update = now;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum EventKind {
    Association,
    Dissociation { victim: usize },
    Recruitment { parent: usize },
}

/// The three addends of the total event rate at a given membrane count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rates<F> {
    pub association: F,
    pub dissociation: F,
    pub recruitment: F,
}

impl<F: Real> Rates<F> {
    pub fn total(&self) -> F {
        self.association + self.dissociation + self.recruitment
    }
}

/// `a(n) = k_on (N - n) + k_off N n + k_fb n (N - n)`, split by event kind.
pub fn total_rate<F: Real>(n: u64, params: &Params<F>) -> Rates<F> {
    debug_assert!(n <= params.n_total);
    let big_n = F::from_count(params.n_total);
    let n_f = F::from_count(n);
    let free = F::from_count(params.n_total - n);
    Rates {
        association: params.k_on * free,
        dissociation: params.k_off * big_n * n_f,
        recruitment: params.k_fb * n_f * free,
    }
}

/// Draws the exponential waiting time and the kind of the next event.
pub fn draw_event<F: Real, R: Rng + ?Sized>(
    state: &MembraneState<F>,
    params: &Params<F>,
    rng: &mut R,
) -> Result<(F, EventKind), EngineError> {
    let rates = total_rate(state.n(), params);
    let total = rates.total();
    if !(total > F::zero()) {
        return Err(EngineError::Stuck);
    }
    let wait = F::exp1(rng) / total;
    let u = F::uniform(rng) * total;
    let n = state.molecules.len();
    let kind = if u < rates.association || n == 0 {
        EventKind::Association
    } else if u < rates.association + rates.dissociation || state.cytosol() == 0 {
        EventKind::Dissociation { victim: rng.random_range(0..n) }
    } else {
        EventKind::Recruitment { parent: rng.random_range(0..n) }
    };
    Ok((wait, kind))
}

/// Applies `kind` at time `state.now`.
pub fn apply_event<F: Real, R: Rng + ?Sized>(
    state: &mut MembraneState<F>,
    kind: EventKind,
    params: &Params<F>,
    dt_max: F,
    rng: &mut R,
) -> Result<(), EngineError> {
    let len = state.molecules.len();
    match kind {
        EventKind::Association => {
            let clan = state.next_clan_id;
            state.next_clan_id += 1;
            state.molecules.push(Molecule {
                position: sample_uniform(params.radius, rng),
                clan,
                last_update: state.now,
            });
        }
        EventKind::Dissociation { victim } => {
            if victim >= len {
                return Err(EngineError::IndexOutOfRange { index: victim, len });
            }
            state.molecules.swap_remove(victim);
        }
        EventKind::Recruitment { parent } => {
            if parent >= len {
                return Err(EngineError::IndexOutOfRange { index: parent, len });
            }
            let now = state.now;
            let p = &mut state.molecules[parent];
            materialize_one(p, now, params, dt_max, rng);
            let child = *p;
            state.molecules.push(child);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct EventCounters {
    pub association: u64,
    pub dissociation: u64,
    pub recruitment: u64,
}

impl EventCounters {
    pub fn total(&self) -> u64 {
        self.association + self.dissociation + self.recruitment
    }

    fn record(&mut self, kind: EventKind) {
        match kind {
            EventKind::Association => self.association += 1,
            EventKind::Dissociation { .. } => self.dissociation += 1,
            EventKind::Recruitment { .. } => self.recruitment += 1,
        }
    }
}

/// When positions are advanced between events.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Materialization {
    /// Only when read.
    #[default]
    Lazy,
    /// Every molecule at every event; reference implementation for tests.
    Eager,
}

/// Single-replica simulator owning its membrane state.
#[derive(Debug, Clone)]
pub struct Simulator<F> {
    params: Params<F>,
    dt_max: F,
    mode: Materialization,
    state: MembraneState<F>,
    counters: EventCounters,
}

impl<F: Real> Simulator<F> {
    /// Starts from an empty membrane at time zero.
    pub fn new(params: Params<F>, dt_max: F) -> Self {
        let state = MembraneState::empty(params.n_total);
        Self::from_state(params, dt_max, state)
    }

    /// Restarts from a previously captured state, e.g. a stationary snapshot.
    pub fn from_state(params: Params<F>, dt_max: F, state: MembraneState<F>) -> Self {
        assert_eq!(state.n_total, params.n_total, "snapshot taken with a different N");
        Self { params, dt_max, mode: Materialization::Lazy, state, counters: EventCounters::default() }
    }

    pub fn with_materialization(mut self, mode: Materialization) -> Self {
        self.mode = mode;
        self
    }

    pub fn params(&self) -> &Params<F> {
        &self.params
    }

    pub fn dt_max(&self) -> F {
        self.dt_max
    }

    pub fn state(&self) -> &MembraneState<F> {
        &self.state
    }

    pub fn counters(&self) -> EventCounters {
        self.counters
    }

    pub fn into_state(self) -> MembraneState<F> {
        self.state
    }

    /// Fires exactly one event.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<EventKind, EngineError> {
        let (wait, kind) = draw_event(&self.state, &self.params, rng)?;
        self.fire(wait, kind, rng)?;
        Ok(kind)
    }

    fn fire<R: Rng + ?Sized>(&mut self, wait: F, kind: EventKind, rng: &mut R) -> Result<(), EngineError> {
        self.state.now = self.state.now + wait;
        if self.mode == Materialization::Eager {
            self.state.materialize(&self.params, self.dt_max, rng);
        }
        apply_event(&mut self.state, kind, &self.params, self.dt_max, rng)?;
        self.counters.record(kind);
        Ok(())
    }

    /// Runs until the next event would fire after `t`, then sets the clock to `t`.
    ///
    /// The overshooting draw is discarded, which is exact because waiting
    /// times are memoryless.
    pub fn run_until<R: Rng + ?Sized>(&mut self, t: F, rng: &mut R) -> Result<(), EngineError> {
        if t < self.state.now {
            return Err(EngineError::BadSnapshotTimes);
        }
        loop {
            let (wait, kind) = match draw_event(&self.state, &self.params, rng) {
                Ok(ev) => ev,
                // Absorbed (k_on = 0 on an empty membrane): nothing ever fires.
                Err(EngineError::Stuck) => break,
                Err(e) => return Err(e),
            };
            if self.state.now + wait > t {
                break;
            }
            self.fire(wait, kind, rng)?;
        }
        self.state.now = t;
        Ok(())
    }

    /// Advances every position to the current time.
    pub fn materialize<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        self.state.materialize(&self.params, self.dt_max, rng);
    }

    /// Materialized deep copy of the current state.
    pub fn snapshot<R: Rng + ?Sized>(&mut self, rng: &mut R) -> MembraneState<F> {
        self.materialize(rng);
        self.state.clone()
    }

    /// Runs to each snapshot time in turn, materializes and hands the state to
    /// `observe`, then runs to `t_end`.
    pub fn run_observed<R, O>(
        &mut self,
        t_end: F,
        snapshot_times: &[F],
        rng: &mut R,
        mut observe: O,
    ) -> Result<(), EngineError>
    where
        R: Rng + ?Sized,
        O: FnMut(&MembraneState<F>, &mut R),
    {
        let ascending = snapshot_times.windows(2).all(|w| w[0] <= w[1]);
        let in_range = snapshot_times
            .iter()
            .all(|&t| t >= self.state.now && t <= t_end);
        if !ascending || !in_range || t_end < self.state.now {
            return Err(EngineError::BadSnapshotTimes);
        }
        for &t in snapshot_times {
            self.run_until(t, rng)?;
            self.materialize(rng);
            observe(&self.state, rng);
        }
        self.run_until(t_end, rng)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory<F> {
    pub snapshots: Vec<MembraneState<F>>,
    pub counters: EventCounters,
}

/// Simulates from an empty membrane and returns deep-copied snapshots.
pub fn simulate<F: Real, R: Rng + ?Sized>(
    params: &Params<F>,
    t_end: F,
    snapshot_times: &[F],
    dt_max: F,
    rng: &mut R,
) -> Result<Trajectory<F>, EngineError> {
    let mut sim = Simulator::new(params.clone(), dt_max);
    let mut snapshots = Vec::with_capacity(snapshot_times.len());
    sim.run_observed(t_end, snapshot_times, rng, |s, _| snapshots.push(s.clone()))?;
    Ok(Trajectory { snapshots, counters: sim.counters() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HittingResult<F> {
    /// First time the membrane count reaches `ceil(eps N)`.
    pub rho: F,
    pub events: u64,
}

/// Counts-only jump chain from an empty membrane, stopped at the first
/// `n >= ceil(eps N)`.
pub fn simulate_counts<F: Real, R: Rng + ?Sized>(
    params: &Params<F>,
    eps: F,
    rng: &mut R,
) -> Result<HittingResult<F>, EngineError> {
    params.supercritical_rate(eps)?;
    let threshold = (eps * F::from_count(params.n_total)).ceil().to_u64().unwrap_or(u64::MAX).max(1);
    let mut n = 0u64;
    let mut t = F::zero();
    let mut events = 0u64;
    while n < threshold {
        let rates = total_rate(n, params);
        let total = rates.total();
        if !(total > F::zero()) {
            return Err(EngineError::Stuck);
        }
        t = t + F::exp1(rng) / total;
        let u = F::uniform(rng) * total;
        if u < rates.association + rates.recruitment {
            n += 1;
        } else {
            n -= 1;
        }
        events += 1;
    }
    Ok(HittingResult { rho: t, events })
}
