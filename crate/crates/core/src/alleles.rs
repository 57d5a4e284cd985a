//! Reference samplers that do not touch the particle simulator: GEM
//! stick-breaking, Poisson-Dirichlet largest atoms, the two-level lookdown
//! genealogy behind the spread formula, and the two-sample KS statistic.

use std::borrow::Cow;

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::Serialize;
use thiserror::Error;

use crate::model::Params;
use crate::scalar::Real;
use crate::sphere::{advance, chord_sq, sample_uniform};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AllelesError {
    #[error("KS statistic needs two nonempty samples")]
    EmptySample,
}

/// Stick-breaking draw truncated after `sticks.len()` sticks.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GemSample<F> {
    /// `P_n = (1 - W_1) ... (1 - W_{n-1}) W_n`.
    pub sticks: Vec<F>,
    /// The Beta(1, theta) draws `W_n`.
    pub weights: Vec<F>,
    /// Unbroken mass `(1 - W_1) ... (1 - W_k)`.
    pub residual: F,
}

/// GEM(theta) stick-breaking with `k` sticks. `theta = 0` puts all mass on the first stick.
///
/// `W ~ Beta(1, theta)` is drawn by inversion as `1 - V^(1/theta)` with `V`
/// uniform, and the factor `1 - W = V^(1/theta)` is kept directly so the
/// residual does not suffer cancellation.
pub fn gem_sample<F: Real, R: Rng + ?Sized>(theta: F, k: usize, rng: &mut R) -> GemSample<F> {
    let mut sticks = Vec::with_capacity(k);
    let mut weights = Vec::with_capacity(k);
    let mut residual = F::one();
    for _ in 0..k {
        let keep = if theta > F::zero() {
            (F::one() - F::uniform(rng)).powf(F::one() / theta)
        } else {
            F::zero()
        };
        let w = F::one() - keep;
        sticks.push(residual * w);
        weights.push(w);
        residual = residual * keep;
    }
    GemSample { sticks, weights, residual }
}

/// Smallest `k` with `(theta / (1 + theta))^k < tol`, the expected residual after `k` sticks.
pub fn truncation_for<F: Real>(theta: F, tol: F) -> usize {
    if !(theta > F::zero()) {
        return 1;
    }
    let ratio = theta / (F::one() + theta);
    let k = (tol.ln() / ratio.ln()).floor() + F::one();
    k.to_usize().unwrap_or(usize::MAX).max(1)
}

/// Sorted sample of Poisson-Dirichlet(theta) largest atoms.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PdLargest<F> {
    pub sorted: Vec<F>,
    pub truncation: usize,
}

impl<F: Real> PdLargest<F> {
    /// Empirical `P(V_1 <= x)`.
    pub fn cdf(&self, x: F) -> F {
        let k = self.sorted.partition_point(|&v| v <= x);
        F::from_count(k as u64) / F::from_count(self.sorted.len() as u64)
    }

    /// Empirical `P(V_1 > x)`.
    pub fn tail(&self, x: F) -> F {
        F::one() - self.cdf(x)
    }

    pub fn mean(&self) -> F {
        crate::stats::mean(&self.sorted)
    }
}

/// Largest atom of `samples` GEM draws, truncated where the expected residual drops below `1e-12`.
pub fn pd_largest<F: Real, R: Rng + ?Sized>(theta: F, samples: usize, rng: &mut R) -> PdLargest<F> {
    pd_largest_truncated(theta, samples, truncation_for(theta, F::lit(1e-12)), rng)
}

pub fn pd_largest_truncated<F: Real, R: Rng + ?Sized>(
    theta: F,
    samples: usize,
    k: usize,
    rng: &mut R,
) -> PdLargest<F> {
    let mut sorted: Vec<F> = (0..samples)
        .map(|_| gem_sample(theta, k, rng).sticks.into_iter().fold(F::zero(), F::max))
        .collect();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite sticks"));
    PdLargest { sorted, truncation: k }
}

/// Largest clan fraction among `n` molecules drawn from the paintbox `sticks`.
/// Mass left over after the sticks paints singletons.
pub fn paintbox_largest<F: Real, R: Rng + ?Sized>(sticks: &[F], n: u64, rng: &mut R) -> F {
    if n == 0 {
        return F::zero();
    }
    let (mut left, mut mass, mut best) = (n, 1.0f64, 0u64);
    for s in sticks {
        if left == 0 || mass <= 0.0 {
            break;
        }
        let w = s.to_f64().expect("finite stick");
        let p = (w / mass).clamp(0.0, 1.0);
        let c = Binomial::new(left, p).expect("probability in [0, 1]").sample(rng);
        best = best.max(c);
        left -= c;
        mass -= w;
    }
    if left > 0 {
        best = best.max(1);
    }
    F::from_count(best) / F::from_count(n)
}

/// Largest clan fraction of PD(theta) observed through finite samples: draw
/// `i` paints `sizes[i % sizes.len()]` molecules. On the lattice `j / n` this
/// is the law a finite membrane can show; it tends to the PD law as `n` grows.
pub fn pd_largest_sampled<F: Real, R: Rng + ?Sized>(
    theta: F,
    sizes: &[u64],
    samples: usize,
    rng: &mut R,
) -> PdLargest<F> {
    assert!(!sizes.is_empty(), "need at least one sample size");
    let k = truncation_for(theta, F::lit(1e-12));
    let mut sorted: Vec<F> = (0..samples)
        .map(|i| {
            let g = gem_sample(theta, k, rng);
            paintbox_largest(&g.sticks, sizes[i % sizes.len()], rng)
        })
        .collect();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite fractions"));
    PdLargest { sorted, truncation: k }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum LookdownVariant<F> {
    /// Closed-form conditional mean `2 R^2 (1 - exp(-2 D tau / R^2))` given `tau`.
    Analytic,
    /// Two coincident points advanced independently for `tau` with the integrator.
    MonteCarlo { dt_max: F },
}

/// One draw of the two lowest lookdown levels at stationarity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LookdownSample<F> {
    pub same_clan: bool,
    /// Time back to the most recent lookdown or immigration touching the two levels.
    pub tau: F,
    /// Present iff `same_clan`.
    pub dist_sq: Option<F>,
}

/// Traces levels 1 and 2 back in time: a lookdown between them at rate
/// `2 k_fb alpha`, an immigration at each level at rate `k_on alpha`. They share
/// a clan iff the lookdown comes first.
pub fn lookdown_pair<F: Real, R: Rng + ?Sized>(
    params: &Params<F>,
    variant: LookdownVariant<F>,
    rng: &mut R,
) -> LookdownSample<F> {
    let d = params.derive();
    let lookdown_rate = F::lit(2.0) * params.k_fb * d.alpha;
    let immigration_rate = params.k_on * d.alpha;
    let exp = |rate: F, rng: &mut R| {
        if rate > F::zero() {
            F::exp1(rng) / rate
        } else {
            F::infinity()
        }
    };
    let tau12 = exp(lookdown_rate, rng);
    let tau1 = exp(immigration_rate, rng);
    let tau2 = exp(immigration_rate, rng);
    let tau = tau12.min(tau1).min(tau2);
    let same_clan = tau12 <= tau1 && tau12 <= tau2;
    let dist_sq = same_clan.then(|| {
        let (r, diff) = (params.radius, params.diffusion);
        match variant {
            LookdownVariant::Analytic => {
                let r2 = r * r;
                F::lit(2.0) * r2 * (F::one() - (-F::lit(2.0) * diff * tau / r2).exp())
            }
            LookdownVariant::MonteCarlo { dt_max } => {
                let start = sample_uniform(r, rng);
                let a = advance(&start, tau, dt_max, diff, r, rng);
                let b = advance(&start, tau, dt_max, diff, r, rng);
                chord_sq(&a, &b)
            }
        }
    });
    LookdownSample { same_clan, tau, dist_sq }
}

/// Oracle ensemble summary: same-clan frequency and the conditional mean of `dist_sq`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LookdownEstimate<F> {
    pub draws: u64,
    pub same_clan: u64,
    pub same_clan_fraction: F,
    pub spread: F,
    /// Standard error of `spread`.
    pub spread_se: F,
}

pub fn lookdown_estimate<F: Real, R: Rng + ?Sized>(
    params: &Params<F>,
    variant: LookdownVariant<F>,
    draws: u64,
    rng: &mut R,
) -> LookdownEstimate<F> {
    let (mut same, mut sum, mut sum_sq) = (0u64, F::zero(), F::zero());
    for _ in 0..draws {
        let s = lookdown_pair(params, variant, rng);
        if let Some(d) = s.dist_sq {
            same += 1;
            sum = sum + d;
            sum_sq = sum_sq + d * d;
        }
    }
    let m = F::from_count(same.max(1));
    let spread = sum / m;
    let var = (sum_sq / m - spread * spread).max(F::zero());
    LookdownEstimate {
        draws,
        same_clan: same,
        same_clan_fraction: F::from_count(same) / F::from_count(draws.max(1)),
        spread,
        spread_se: (var / m).sqrt(),
    }
}

fn sorted_view<F: Real>(xs: &[F]) -> Cow<'_, [F]> {
    if xs.windows(2).all(|w| w[0] <= w[1]) {
        Cow::Borrowed(xs)
    } else {
        let mut v = xs.to_vec();
        v.sort_by(|a, b| a.partial_cmp(b).expect("NaN in KS sample"));
        Cow::Owned(v)
    }
}

/// Two-sample Kolmogorov-Smirnov distance `sup |F_a - F_b|`. Inputs that are
/// not already ascending are sorted first.
pub fn ks_statistic<F: Real>(sample_a: &[F], sample_b: &[F]) -> Result<F, AllelesError> {
    if sample_a.is_empty() || sample_b.is_empty() {
        return Err(AllelesError::EmptySample);
    }
    let (a, b) = (sorted_view(sample_a), sorted_view(sample_b));
    let (na, nb) = (F::from_count(a.len() as u64), F::from_count(b.len() as u64));
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = F::zero();
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        let gap = (F::from_count(i as u64) / na - F::from_count(j as u64) / nb).abs();
        d = d.max(gap);
    }
    Ok(d)
}

/// Asymptotic two-sample critical value `c(alpha) sqrt((n + m) / (n m))`,
/// `c(alpha) = sqrt(-ln(alpha / 2) / 2)`.
pub fn ks_critical_value<F: Real>(n: usize, m: usize, alpha: F) -> F {
    let c = (-(alpha / F::lit(2.0)).ln() / F::lit(2.0)).sqrt();
    let (n, m) = (F::from_count(n as u64), F::from_count(m as u64));
    c * ((n + m) / (n * m)).sqrt()
}
