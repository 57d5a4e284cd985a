//! Subcommands. Each returns a JSON summary and an optional verdict; the
//! report builders are public so other harnesses can reuse them.

use std::path::Path;
use std::time::Instant;

use polarity_core::alleles::{
    ks_critical_value, ks_statistic, lookdown_estimate, pd_largest, pd_largest_sampled, truncation_for, gem_sample, LookdownEstimate,
    LookdownVariant,
};
use polarity_core::engine::{simulate_counts, EngineError};
use polarity_core::genealogy::{occupancy, GenealogyError, OccupancyStats};
use polarity_core::rng::replica_seed;
use polarity_core::stats::{autocorrelation, ratio_of_sums, Interval, Z95};
use polarity_core::{ParamError, Params64};
use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::config::{BurnIn, ConfigError, RunConfig};
use crate::ensemble::{map_replicas, oracle_stream, run_ensemble, Observation, ReplicaRun};
use crate::output::{row, OutputDir, OutputError, SUMMARY};

pub const SPREAD_TOLERANCE: f64 = 0.10;
pub const ORACLE_DRAWS: u64 = 1_000_000;
pub const ORACLE_ANALYTIC_TOLERANCE: f64 = 0.01;
pub const ORACLE_MC_TOLERANCE: f64 = 0.03;
pub const SAME_CLAN_TOLERANCE: f64 = 0.005;
pub const PD_SAMPLES: usize = 10_000;
pub const KS_ALPHA: f64 = 0.01;
/// Extra KS allowance for finite-N bias of the clan-size law.
pub const KS_FINITE_N_ALLOWANCE: f64 = 0.05;
pub const SLOPE_TOLERANCE: f64 = 0.5;
pub const HITTING_TARGET: f64 = 0.9;
/// Decorrelation gap in relaxation times.
pub const GAP_RELAXATIONS: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Predict,
    Simulate,
    VerifySpread,
    VerifyClans,
    HittingScan,
    PolarityScan,
    Lookdown,
    GemSample,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Predict => "predict",
            Command::Simulate => "simulate",
            Command::VerifySpread => "verify-spread",
            Command::VerifyClans => "verify-clans",
            Command::HittingScan => "hitting-scan",
            Command::PolarityScan => "polarity-scan",
            Command::Lookdown => "lookdown",
            Command::GemSample => "gem-sample",
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Output(#[from] OutputError),
    #[error("simulation failed: {0}")]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error(transparent)]
    Genealogy(#[from] GenealogyError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Usage(_) | CliError::Output(OutputError::HashMismatch { .. }) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    /// `None` for commands without a verdict.
    pub pass: Option<bool>,
    pub summary: Value,
    /// Human-readable lines: prediction, estimate, interval, verdict.
    pub report: Vec<String>,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.pass == Some(false) {
            1
        } else {
            0
        }
    }
}

/// Gap beyond which snapshots of one replica count as independent: five relaxation times.
pub fn default_decorrelation_gap(params: &Params64) -> f64 {
    let rate = params.derive().relax_rate;
    if rate > 0.0 {
        GAP_RELAXATIONS / rate
    } else {
        f64::INFINITY
    }
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

fn config_json(c: &RunConfig) -> Value {
    let p = &c.params;
    json!({
        "N": p.n_total,
        "D": p.diffusion,
        "R": p.radius,
        "k_on": p.k_on,
        "k_off": p.k_off,
        "k_fb": p.k_fb,
        "t_end": c.t_end,
        "burn_in": c.burn_in,
        "burn_in_auto": c.burn_in_spec == BurnIn::Auto,
        "snapshot_interval": c.snapshot_interval,
        "dt_max": c.dt_max,
        "epsilon": c.epsilon,
        "replicas": c.replicas,
        "seed": c.master_seed,
        "max_pairs": c.max_pairs,
        "hemisphere_mode": c.hemisphere_mode.to_string(),
    })
}

fn seeds(c: &RunConfig) -> Vec<u64> {
    (0..c.replicas).map(|i| replica_seed(c.master_seed, i)).collect()
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report serializes")
}

// ---------------------------------------------------------------- spread

#[derive(Debug, Clone, Serialize)]
pub struct SpreadReport {
    pub predicted: f64,
    pub estimate: f64,
    pub se: f64,
    pub ci: Interval<f64>,
    pub rel_error: f64,
    pub snapshots: usize,
    pub batches: usize,
    pub pairs: f64,
    pub pass: bool,
}

/// Ratio-of-sums spread estimate over all snapshots; the standard error uses
/// replicas as independent batches (single snapshots when there is one replica).
pub fn spread_report(runs: &[ReplicaRun], params: &Params64, tolerance: f64) -> Option<SpreadReport> {
    let batches: Vec<(f64, f64)> = if runs.len() >= 2 {
        runs.iter().map(|r| (r.spread.num, r.spread.den)).collect()
    } else {
        runs.iter().flat_map(|r| r.rows.iter().map(|row| (row.spread.num, row.spread.den))).collect()
    };
    let (estimate, se) = ratio_of_sums(&batches)?;
    let predicted = params.derive().spread;
    let rel_error = (estimate - predicted) / predicted;
    Some(SpreadReport {
        predicted,
        estimate,
        se,
        ci: Interval { low: estimate - Z95 * se, high: estimate + Z95 * se },
        rel_error,
        snapshots: runs.iter().map(|r| r.rows.len()).sum(),
        batches: batches.len(),
        pairs: batches.iter().map(|b| b.1).sum(),
        pass: rel_error.abs() <= tolerance,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleReport {
    pub variant: &'static str,
    pub estimate: LookdownEstimate<f64>,
    pub predicted_spread: f64,
    pub spread_rel_error: f64,
    pub predicted_same_clan: f64,
    pub same_clan_rel_error: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Two-level lookdown oracle, split into `chunks` independent streams.
pub fn oracle_report(
    params: &Params64,
    variant: LookdownVariant<f64>,
    draws: u64,
    chunks: u64,
    master: u64,
) -> OracleReport {
    let chunks = chunks.clamp(1, draws.max(1));
    let (stream_offset, name, tolerance) = match variant {
        LookdownVariant::Analytic => (0, "analytic", ORACLE_ANALYTIC_TOLERANCE),
        LookdownVariant::MonteCarlo { .. } => (1 << 32, "monte_carlo", ORACLE_MC_TOLERANCE),
    };
    let parts: Vec<LookdownEstimate<f64>> = map_replicas::<_, (), _>(chunks, |i| {
        let n = draws / chunks + u64::from(i < draws % chunks);
        Ok(lookdown_estimate(params, variant, n, &mut oracle_stream(master, stream_offset + i)))
    })
    .expect("oracle draws cannot fail");
    // Pool the per-chunk moments.
    let draws_total: u64 = parts.iter().map(|p| p.draws).sum();
    let same: u64 = parts.iter().map(|p| p.same_clan).sum();
    let m = same.max(1) as f64;
    let sum: f64 = parts.iter().map(|p| p.spread * p.same_clan as f64).sum();
    let sum_sq: f64 = parts
        .iter()
        .map(|p| (p.spread_se.powi(2) * p.same_clan as f64 + p.spread.powi(2)) * p.same_clan as f64)
        .sum();
    let spread = sum / m;
    let var = (sum_sq / m - spread * spread).max(0.0);
    let estimate = LookdownEstimate {
        draws: draws_total,
        same_clan: same,
        same_clan_fraction: same as f64 / draws_total.max(1) as f64,
        spread,
        spread_se: (var / m).sqrt(),
    };
    let d = params.derive();
    let predicted_same_clan = params.k_fb / (params.k_on + params.k_fb);
    let spread_rel_error = (estimate.spread - d.spread) / d.spread;
    let same_clan_rel_error = (estimate.same_clan_fraction - predicted_same_clan) / predicted_same_clan;
    OracleReport {
        variant: name,
        estimate,
        predicted_spread: d.spread,
        spread_rel_error,
        predicted_same_clan,
        same_clan_rel_error,
        tolerance,
        pass: spread_rel_error.abs() <= tolerance && same_clan_rel_error.abs() <= SAME_CLAN_TOLERANCE,
    }
}

// ---------------------------------------------------------------- clans

#[derive(Debug, Clone, Serialize)]
pub struct ClanReport {
    pub theta: f64,
    pub samples: usize,
    /// Sample count used in the KS critical value.
    pub effective: f64,
    pub pd_samples: usize,
    pub mean_largest: f64,
    pub pd_mean_largest: f64,
    /// Against PD(theta) painted onto each snapshot's molecule count, so both
    /// samples live on the same `j / n` lattice.
    pub ks_statistic: f64,
    /// Against the continuous PD(theta) law; dominated by the atom at 1 when
    /// theta is small, since a single clan holds a fraction of exactly 1.
    pub ks_continuous: f64,
    pub critical_value: f64,
    pub allowance: f64,
    pub ks_pass: bool,
    /// Lag-1 autocorrelation of the largest-clan series, pooled over replicas.
    pub largest_lag1_autocorrelation: Option<f64>,
    pub distinct_counts: Vec<(usize, f64)>,
    pub distinct_slope: Option<f64>,
    pub slope_range: (f64, f64),
    pub slope_pass: bool,
    pub pass: bool,
}

/// Pooled occupancy statistics; each replica's snapshots are thinned to
/// `gap` for the effective sample count.
pub fn pooled_occupancy(runs: &[ReplicaRun], eps: f64, gap: f64) -> Result<OccupancyStats<f64>, GenealogyError> {
    let mut pooled: Option<OccupancyStats<f64>> = None;
    for r in runs {
        let o = occupancy(&r.records, eps, gap)?;
        match &mut pooled {
            None => pooled = Some(o),
            Some(p) => p.merge(&o),
        }
    }
    pooled.ok_or(GenealogyError::InsufficientData(0))
}

/// Mean lag-1 autocorrelation of a per-replica series.
pub fn pooled_lag1(series: &[Vec<f64>]) -> Option<f64> {
    let acs: Vec<f64> = series.iter().filter_map(|s| autocorrelation(s, 1)).collect();
    (!acs.is_empty()).then(|| acs.iter().sum::<f64>() / acs.len() as f64)
}

pub fn clan_report(
    runs: &[ReplicaRun],
    params: &Params64,
    eps: f64,
    gap: f64,
    pd_samples: usize,
    master: u64,
) -> Result<ClanReport, GenealogyError> {
    let occ = pooled_occupancy(runs, eps, gap)?;
    let theta = params.derive().theta;
    let largest: Vec<f64> = runs.iter().flat_map(|r| r.records.iter().map(|s| s.largest)).collect();
    let sizes: Vec<u64> = runs.iter().flat_map(|r| r.rows.iter().map(|row| row.n)).collect();
    let pd = pd_largest_sampled(theta, &sizes, pd_samples, &mut oracle_stream(master, 1 << 40));
    let continuous = pd_largest(theta, pd_samples, &mut oracle_stream(master, (1 << 40) + 1));
    let mut sorted = largest.clone();
    sorted.sort_by(f64::total_cmp);
    let ks = ks_statistic(&sorted, &pd.sorted).expect("both samples nonempty");
    let ks_continuous = ks_statistic(&sorted, &continuous.sorted).expect("both samples nonempty");
    let effective = occ.effective.round().max(1.0);
    let critical = ks_critical_value(effective as usize, pd_samples, KS_ALPHA);
    let ks_pass = ks < critical + KS_FINITE_N_ALLOWANCE;
    let series: Vec<Vec<f64>> = runs.iter().map(|r| r.records.iter().map(|s| s.largest).collect()).collect();
    let slope = occ.distinct_slope();
    let slope_range = (theta * (1.0 - SLOPE_TOLERANCE), theta * (1.0 + SLOPE_TOLERANCE));
    let slope_pass = slope.is_some_and(|s| s >= slope_range.0 && s <= slope_range.1);
    Ok(ClanReport {
        theta,
        samples: largest.len(),
        effective,
        pd_samples,
        mean_largest: polarity_core::stats::mean(&largest),
        pd_mean_largest: continuous.mean(),
        ks_statistic: ks,
        ks_continuous,
        critical_value: critical,
        allowance: KS_FINITE_N_ALLOWANCE,
        ks_pass,
        largest_lag1_autocorrelation: pooled_lag1(&series),
        distinct_counts: occ.distinct_counts.clone(),
        distinct_slope: slope,
        slope_range,
        slope_pass,
        pass: ks_pass && slope_pass,
    })
}

// ---------------------------------------------------------------- polarity

#[derive(Debug, Clone, Serialize)]
pub struct PolarityReport {
    pub eps: f64,
    pub snapshots: u64,
    pub effective: f64,
    pub p_hat: f64,
    pub p_ci: Interval<f64>,
    pub q_hat: f64,
    pub q_ci: Interval<f64>,
    pub subsampled_snapshots: usize,
    pub pass: bool,
}

pub fn polarity_report(runs: &[ReplicaRun], eps: f64, gap: f64) -> Result<PolarityReport, GenealogyError> {
    let occ = pooled_occupancy(runs, eps, gap)?;
    Ok(PolarityReport {
        eps,
        snapshots: occ.snapshots,
        effective: occ.effective,
        p_hat: occ.p_hat,
        p_ci: occ.p_ci,
        q_hat: occ.q_hat,
        q_ci: occ.q_ci,
        subsampled_snapshots: runs.iter().flat_map(|r| &r.rows).filter(|row| row.polarity.subsampled).count(),
        pass: occ.p_ci.low > 0.0 && occ.q_hat >= occ.p_hat,
    })
}

// ---------------------------------------------------------------- hitting

#[derive(Debug, Clone, Serialize)]
pub struct HittingRow {
    #[serde(rename = "N")]
    pub n_total: u64,
    pub bound: f64,
    pub replicas: u64,
    pub hits: u64,
    pub p_hat: f64,
    pub se: f64,
    pub mean_rho: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct HittingReport {
    pub eps: f64,
    pub lambda: f64,
    pub rows: Vec<HittingRow>,
    pub target: f64,
    pub monotone: bool,
    pub reaches_target: bool,
    pub pass: bool,
}

/// Empirical `P(rho <= 2 ln N / (lambda N))` for each `N` in `grid`, from
/// counts-only runs. Pass: the last probability reaches the target and the
/// sequence never drops by more than three joint binomial standard errors.
pub fn hitting_scan(
    base: &Params64,
    grid: &[u64],
    eps: f64,
    replicas: u64,
    master: u64,
) -> Result<HittingReport, CliError> {
    let lambda = base.supercritical_rate(eps)?;
    let mut rows = Vec::with_capacity(grid.len());
    for (g, &n_total) in grid.iter().enumerate() {
        let p = Params64::new(n_total, base.diffusion, base.radius, base.k_on, base.k_off, base.k_fb)?;
        let bound = p.hitting_time_bound(eps)?;
        let rhos = map_replicas(replicas, |i| {
            let mut rng = polarity_core::rng::replica_stream(master, ((g as u64) << 40) | i);
            simulate_counts(&p, eps, &mut rng).map(|h| h.rho)
        })?;
        let hits = rhos.iter().filter(|&&r| r <= bound).count() as u64;
        let p_hat = hits as f64 / replicas as f64;
        rows.push(HittingRow {
            n_total,
            bound,
            replicas,
            hits,
            p_hat,
            se: (p_hat * (1.0 - p_hat) / replicas as f64).sqrt(),
            mean_rho: rhos.iter().sum::<f64>() / replicas as f64,
        });
    }
    let monotone = rows.windows(2).all(|w| w[1].p_hat >= w[0].p_hat - 3.0 * (w[0].se.powi(2) + w[1].se.powi(2)).sqrt());
    let reaches_target = rows.last().is_some_and(|r| r.p_hat >= HITTING_TARGET);
    Ok(HittingReport { eps, lambda, rows, target: HITTING_TARGET, monotone, reaches_target, pass: monotone && reaches_target })
}

// ---------------------------------------------------------------- driver

fn fmt_ci(ci: &Interval<f64>) -> String {
    format!("[{:.6}, {:.6}]", ci.low, ci.high)
}

fn trajectory_rows(run: &ReplicaRun) -> Vec<String> {
    run.rows
        .iter()
        .map(|r| {
            let pole = r.polarity.pole.map_or_else(|| vec![String::new(); 3], |p| p.iter().map(f64::to_string).collect());
            let mut fields = vec![
                r.time.to_string(),
                r.n.to_string(),
                r.h.to_string(),
                r.num_clans.to_string(),
                r.largest.to_string(),
                r.second.to_string(),
                r.spread.num.to_string(),
                r.spread.den.to_string(),
                u8::from(r.polarity.is_polarized).to_string(),
            ];
            fields.extend(pole);
            row(&fields)
        })
        .collect()
}

pub const TRAJECTORY_HEADER: [&str; 12] = [
    "time",
    "n",
    "h",
    "num_clans",
    "largest_clan_frac",
    "second_clan_frac",
    "spread_num",
    "spread_den",
    "polarized",
    "pole_x",
    "pole_y",
    "pole_z",
];
pub const SNAPSHOT_HEADER: [&str; 5] = ["time", "clan", "x", "y", "z"];

fn ensemble_summary(runs: &[ReplicaRun], c: &RunConfig, gap: f64) -> (Value, Vec<String>) {
    let spread = spread_report(runs, &c.params, SPREAD_TOLERANCE);
    let occ = pooled_occupancy(runs, c.epsilon, gap).ok();
    let mut lines = Vec::new();
    if let Some(s) = &spread {
        lines.push(format!(
            "S_p: predicted {:.6}, estimate {:.6}, 95% CI {}",
            s.predicted,
            s.estimate,
            fmt_ci(&s.ci)
        ));
    }
    if let Some(o) = &occ {
        lines.push(format!("p_eps: estimate {:.4}, 95% CI {}", o.p_hat, fmt_ci(&o.p_ci)));
        lines.push(format!("q_eps: estimate {:.4}, 95% CI {}", o.q_hat, fmt_ci(&o.q_ci)));
    }
    let value = json!({
        "S_p_hat": spread.as_ref().map(|s| s.estimate),
        "S_p_ci_low": spread.as_ref().map(|s| s.ci.low),
        "S_p_ci_high": spread.as_ref().map(|s| s.ci.high),
        "p_eps_hat": occ.as_ref().map(|o| o.p_hat),
        "q_eps_hat": occ.as_ref().map(|o| o.q_hat),
        "distinct_slope": occ.as_ref().and_then(|o| o.distinct_slope()),
        "decorrelation_gap": if gap.is_finite() { json!(gap) } else { Value::Null },
        "events": runs.iter().map(|r| r.counters.total()).sum::<u64>(),
    });
    (value, lines)
}

/// Runs `cmd`. Files go to `out` when given (required for `simulate` and `gem-sample`).
pub fn execute(cmd: Command, c: &RunConfig, out: Option<&Path>) -> Result<Outcome, CliError> {
    let started = Instant::now();
    let hash = c.hash();
    let derived = c.params.derive();
    if cmd == Command::Predict {
        return Ok(Outcome { pass: None, summary: to_value(&derived), report: Vec::new() });
    }
    let mut dir = match out {
        Some(p) => Some(OutputDir::open(p, &hash)?),
        None if matches!(cmd, Command::Simulate | Command::GemSample) => {
            return Err(CliError::Usage(format!("{} needs --out <dir>", cmd.name())))
        }
        None => None,
    };
    let gap = default_decorrelation_gap(&c.params);
    let mut report = Vec::new();
    let mut extra = json!({});
    let pass: Option<bool>;

    match cmd {
        Command::Predict => unreachable!(),
        Command::Simulate => {
            let mut obs = Observation::from_config(c);
            obs.keep_positions = true;
            let runs = run_ensemble(&obs, c.master_seed, c.replicas)?;
            let d = dir.as_mut().expect("checked above");
            for r in &runs {
                d.write_csv(&format!("trajectory_{:03}.csv", r.index), &TRAJECTORY_HEADER, trajectory_rows(r))?;
                let rows = r.positions.iter().map(|(t, clan, x)| {
                    row(&[t.to_string(), clan.to_string(), x[0].to_string(), x[1].to_string(), x[2].to_string()])
                });
                d.write_csv(&format!("snapshots_{:03}.csv", r.index), &SNAPSHOT_HEADER, rows)?;
            }
            let (v, lines) = ensemble_summary(&runs, c, gap);
            extra = v;
            report = lines;
            pass = None;
        }
        Command::VerifySpread => {
            let runs = run_ensemble(&Observation { polarity: false, distinct: false, ..Observation::from_config(c) }, c.master_seed, c.replicas)?;
            let s = spread_report(&runs, &c.params, SPREAD_TOLERANCE)
                .ok_or_else(|| CliError::Usage("no same-clan pairs observed; lengthen the run".into()))?;
            let o = oracle_report(&c.params, LookdownVariant::Analytic, ORACLE_DRAWS, c.replicas, c.master_seed);
            report.push(format!(
                "S_p ensemble: predicted {:.6}, estimate {:.6}, 95% CI {}, rel. error {:+.2}% (tol {:.0}%) {}",
                s.predicted, s.estimate, fmt_ci(&s.ci), 100.0 * s.rel_error, 100.0 * SPREAD_TOLERANCE, verdict(s.pass)
            ));
            report.push(format!(
                "S_p lookdown oracle: predicted {:.6}, estimate {:.6} +- {:.6}, rel. error {:+.3}% {}",
                o.predicted_spread, o.estimate.spread, Z95 * o.estimate.spread_se, 100.0 * o.spread_rel_error, verdict(o.pass)
            ));
            let ensemble_vs_oracle = (s.estimate - o.estimate.spread) / o.estimate.spread;
            pass = Some(s.pass && o.pass);
            let (v, _) = ensemble_summary(&runs, c, gap);
            extra = v;
            extra["spread"] = to_value(&s);
            extra["oracle"] = to_value(&o);
            extra["ensemble_vs_oracle_rel_error"] = json!(ensemble_vs_oracle);
        }
        Command::VerifyClans => {
            let runs = run_ensemble(&Observation { polarity: false, ..Observation::from_config(c) }, c.master_seed, c.replicas)?;
            let r = clan_report(&runs, &c.params, c.epsilon, gap, PD_SAMPLES, c.master_seed)?;
            report.push(format!(
                "largest clan KS: statistic {:.4}, critical {:.4} + allowance {:.2} (n_eff {}, m {}) {}",
                r.ks_statistic, r.critical_value, r.allowance, r.effective, r.pd_samples, verdict(r.ks_pass)
            ));
            report.push(format!("largest clan KS against the continuous PD law: {:.4}", r.ks_continuous));
            report.push(format!(
                "largest clan mean: simulated {:.4}, Poisson-Dirichlet {:.4}",
                r.mean_largest, r.pd_mean_largest
            ));
            report.push(format!(
                "distinct clans slope vs ln n: predicted {:.4}, estimate {}, accepted [{:.4}, {:.4}] {}",
                r.theta,
                r.distinct_slope.map_or("n/a".into(), |s| format!("{s:.4}")),
                r.slope_range.0,
                r.slope_range.1,
                verdict(r.slope_pass)
            ));
            pass = Some(r.pass);
            let (v, _) = ensemble_summary(&runs, c, gap);
            extra = v;
            extra["clans"] = to_value(&r);
        }
        Command::HittingScan => {
            let n = c.params.n_total;
            let grid = [n, n.saturating_mul(10), n.saturating_mul(100)];
            let h = hitting_scan(&c.params, &grid, c.epsilon, c.replicas, c.master_seed)?;
            for r in &h.rows {
                report.push(format!(
                    "N = {:>9}: bound {:.4e}, P(rho <= bound) = {:.4} +- {:.4} ({} of {})",
                    r.n_total, r.bound, r.p_hat, r.se, r.hits, r.replicas
                ));
            }
            report.push(format!(
                "target P >= {} at largest N: {}; nondecreasing within 3 sigma: {}",
                h.target,
                verdict(h.reaches_target),
                verdict(h.monotone)
            ));
            if let Some(d) = dir.as_mut() {
                let rows = h.rows.iter().map(|r| {
                    row(&[
                        r.n_total.to_string(),
                        r.bound.to_string(),
                        r.replicas.to_string(),
                        r.hits.to_string(),
                        r.p_hat.to_string(),
                        r.se.to_string(),
                        r.mean_rho.to_string(),
                    ])
                });
                d.write_csv("hitting.csv", &["N", "bound", "replicas", "hits", "p_hat", "se", "mean_rho"], rows)?;
            }
            pass = Some(h.pass);
            extra = json!({ "hitting": to_value(&h) });
        }
        Command::PolarityScan => {
            let runs = run_ensemble(&Observation { distinct: false, ..Observation::from_config(c) }, c.master_seed, c.replicas)?;
            let r = polarity_report(&runs, c.epsilon, gap)?;
            report.push(format!("p_eps: estimate {:.4}, 95% CI {} (CI must exclude 0)", r.p_hat, fmt_ci(&r.p_ci)));
            report.push(format!("q_eps: estimate {:.4}, 95% CI {} (must be >= p_eps)", r.q_hat, fmt_ci(&r.q_ci)));
            report.push(format!("{} snapshots, {} effective: {}", r.snapshots, r.effective, verdict(r.pass)));
            pass = Some(r.pass);
            let (v, _) = ensemble_summary(&runs, c, gap);
            extra = v;
            extra["polarity"] = to_value(&r);
        }
        Command::Lookdown => {
            let a = oracle_report(&c.params, LookdownVariant::Analytic, ORACLE_DRAWS, c.replicas, c.master_seed);
            let m = oracle_report(
                &c.params,
                LookdownVariant::MonteCarlo { dt_max: c.dt_max },
                ORACLE_DRAWS,
                c.replicas,
                c.master_seed,
            );
            for o in [&a, &m] {
                report.push(format!(
                    "{}: S_p predicted {:.6}, estimate {:.6} ({:+.3}%, tol {:.0}%); same clan predicted {:.5}, estimate {:.5} ({:+.3}%) {}",
                    o.variant,
                    o.predicted_spread,
                    o.estimate.spread,
                    100.0 * o.spread_rel_error,
                    100.0 * o.tolerance,
                    o.predicted_same_clan,
                    o.estimate.same_clan_fraction,
                    100.0 * o.same_clan_rel_error,
                    verdict(o.pass)
                ));
            }
            pass = Some(a.pass && m.pass);
            extra = json!({ "analytic": to_value(&a), "monte_carlo": to_value(&m) });
        }
        Command::GemSample => {
            let theta = derived.theta;
            let k = truncation_for(theta, 1e-12);
            let samples: Vec<_> = map_replicas::<_, (), _>(c.replicas, |i| {
                Ok(gem_sample(theta, k, &mut polarity_core::rng::replica_stream(c.master_seed, i)))
            })
            .expect("sampling cannot fail");
            let mut rows = Vec::new();
            for (i, g) in samples.iter().enumerate() {
                for (j, (w, p)) in g.weights.iter().zip(&g.sticks).enumerate() {
                    rows.push(row(&[i.to_string(), j.to_string(), w.to_string(), p.to_string()]));
                }
            }
            dir.as_mut()
                .expect("checked above")
                .write_csv("gem_sticks.csv", &["sample", "index", "weight", "stick"], rows)?;
            let mean_residual = samples.iter().map(|g| g.residual).sum::<f64>() / samples.len() as f64;
            report.push(format!("{} GEM({theta}) samples, {k} sticks each, mean residual {mean_residual:.3e}", c.replicas));
            pass = None;
            extra = json!({ "theta": theta, "truncation": k, "mean_residual": mean_residual });
        }
    }

    let mut summary = json!({
        "command": cmd.name(),
        "config": config_json(c),
        "derived": to_value(&derived),
        "seeds": seeds(c),
        "pass": pass,
        "wall_time_s": started.elapsed().as_secs_f64(),
    });
    if let (Value::Object(s), Value::Object(e)) = (&mut summary, extra) {
        s.extend(e);
    }
    if let Some(mut d) = dir.take() {
        // The summary's config_hash is inserted by the writer.
        d.write_json(SUMMARY, summary.clone())?;
        d.commit();
    }
    summary["config_hash"] = Value::String(hash);
    Ok(Outcome { pass, summary, report })
}
