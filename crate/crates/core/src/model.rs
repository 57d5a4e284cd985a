//! Model parameters and the closed-form predictions of the large-population limit.

use serde::Serialize;
use thiserror::Error;

use crate::scalar::{Real, Scalar};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParamError {
    #[error("assumption k_fb > k_off > 0 violated (k_fb = {k_fb}, k_off = {k_off})")]
    AssumptionViolated { k_fb: String, k_off: String },
    #[error("radius R must be positive (got {0})")]
    InvalidGeometry(String),
    #[error("{name} must be positive (got {value})")]
    NonPositive { name: &'static str, value: String },
    #[error("{name} must be non-negative (got {value})")]
    Negative { name: &'static str, value: String },
    #[error("molecule count N must be at least 1")]
    EmptyPopulation,
    #[error("{name} is not a finite number")]
    NonFinite { name: &'static str },
    #[error("subcritical regime: k_fb(1 - eps) - k_off = {lambda} must be positive")]
    Subcritical { lambda: String },
    #[error("eps must lie in (0, 1) (got {0})")]
    InvalidFraction(String),
}

/// The six biological parameters.
///
/// `k_off` and `k_fb` are the per-capita rates *before* the population
/// scaling: the simulated dissociation and recruitment rates are
/// `N k_off` and `N k_fb`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Params<T> {
    #[serde(rename = "N")]
    pub n_total: u64,
    #[serde(rename = "D")]
    pub diffusion: T,
    #[serde(rename = "R")]
    pub radius: T,
    pub k_on: T,
    pub k_off: T,
    pub k_fb: T,
}

impl<T: Scalar> Params<T> {
    /// Validates raw parameter values.
    pub fn new(
        n_total: u64,
        diffusion: T,
        radius: T,
        k_on: T,
        k_off: T,
        k_fb: T,
    ) -> Result<Self, ParamError> {
        for (name, v) in [
            ("D", &diffusion),
            ("R", &radius),
            ("k_on", &k_on),
            ("k_off", &k_off),
            ("k_fb", &k_fb),
        ] {
            if !v.is_finite_scalar() {
                return Err(ParamError::NonFinite { name });
            }
        }
        if n_total < 1 {
            return Err(ParamError::EmptyPopulation);
        }
        let zero = T::zero();
        if radius <= zero {
            return Err(ParamError::InvalidGeometry(radius.to_string()));
        }
        if diffusion < zero {
            return Err(ParamError::Negative { name: "D", value: diffusion.to_string() });
        }
        if k_on < zero {
            return Err(ParamError::Negative { name: "k_on", value: k_on.to_string() });
        }
        if k_off <= zero {
            return Err(ParamError::NonPositive { name: "k_off", value: k_off.to_string() });
        }
        if k_fb <= zero {
            return Err(ParamError::NonPositive { name: "k_fb", value: k_fb.to_string() });
        }
        if k_fb <= k_off {
            return Err(ParamError::AssumptionViolated {
                k_fb: k_fb.to_string(),
                k_off: k_off.to_string(),
            });
        }
        Ok(Self { n_total, diffusion, radius, k_on, k_off, k_fb })
    }

    pub fn n_total_scalar(&self) -> T {
        T::from_u64(self.n_total).expect("N representable in the scalar type")
    }

    /// Evaluates every closed-form prediction.
    pub fn derive(&self) -> Derived<T> {
        let one = T::one();
        let two = one.clone() + one.clone();
        let (k_on, k_off, k_fb) = (self.k_on.clone(), self.k_off.clone(), self.k_fb.clone());
        let r2 = self.radius.clone() * self.radius.clone();

        let h_eq = one.clone() - k_off.clone() / k_fb.clone();
        let theta = k_on.clone() / k_fb.clone();
        let alpha = k_off.clone() / (k_fb.clone() - k_off.clone());
        let gamma = k_fb.clone() * k_off.clone() / (k_fb.clone() - k_off.clone());
        let chi = self.diffusion.clone() / r2.clone();
        let spread = two.clone() * self.diffusion.clone()
            / ((k_on.clone() + k_fb.clone()) * alpha.clone() + chi.clone());
        let spread_rel = spread.clone() / r2;
        let relax_rate = k_on * (one.clone() - h_eq.clone()) / (two * h_eq.clone());
        let flow_residual =
            k_fb * h_eq.clone() * (one - h_eq.clone()) - k_off * h_eq.clone();

        Derived { h_eq, theta, alpha, gamma, chi, spread, spread_rel, relax_rate, flow_residual }
    }
}

impl<F: Real> Params<F> {
    /// Time `2 ln N / (lambda N)` within which the membrane count first reaches
    /// `eps N` with probability tending to one, `lambda = k_fb (1 - eps) - k_off`.
    pub fn hitting_time_bound(&self, eps: F) -> Result<F, ParamError> {
        let lambda = self.supercritical_rate(eps)?;
        let n = F::from_count(self.n_total);
        Ok(F::lit(2.0) * n.ln() / (lambda * n))
    }

    /// Growth rate `k_fb (1 - eps) - k_off` of the dominating branching process.
    pub fn supercritical_rate(&self, eps: F) -> Result<F, ParamError> {
        if !(eps > F::zero() && eps < F::one()) {
            return Err(ParamError::InvalidFraction(eps.to_string()));
        }
        let lambda = self.k_fb * (F::one() - eps) - self.k_off;
        if lambda <= F::zero() {
            return Err(ParamError::Subcritical { lambda: lambda.to_string() });
        }
        Ok(lambda)
    }

    /// Substep length used when none is configured: `1e-3 R^2 / D`, or `1e-3` when `D = 0`.
    pub fn default_dt_max(&self) -> F {
        if self.diffusion > F::zero() {
            F::lit(1e-3) * self.radius * self.radius / self.diffusion
        } else {
            F::lit(1e-3)
        }
    }
}

/// Closed-form predictions for one parameter set.
///
/// Serializes to exactly the keys `h_eq, theta, alpha, gamma, chi, S_p,
/// S_p_rel, relax_rate`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Derived<T> {
    /// Equilibrium membrane fraction `1 - k_off / k_fb`.
    pub h_eq: T,
    /// Immigration-to-feedback ratio `k_on / k_fb`.
    pub theta: T,
    /// Cytosolic mass per membrane molecule, `(1 - h_eq) / h_eq`.
    pub alpha: T,
    /// Effective feedback strength `k_fb alpha`.
    pub gamma: T,
    /// Relative diffusion speed `D / R^2`.
    pub chi: T,
    /// Stationary expected squared chord distance between two same-clan molecules.
    #[serde(rename = "S_p")]
    pub spread: T,
    /// `S_p / R^2`.
    #[serde(rename = "S_p_rel")]
    pub spread_rel: T,
    /// Exponential convergence rate `k_on (1 - h_eq) / (2 h_eq)`; zero when `k_on = 0`.
    pub relax_rate: T,
    /// `k_fb h_eq (1 - h_eq) - k_off h_eq`, zero at the equilibrium fraction.
    #[serde(skip)]
    pub flow_residual: T,
}

impl<T: Scalar> Derived<T> {
    /// `S_p / R^2` in its dimensionless form `2 chi / ((1 + theta) gamma + chi)`.
    pub fn spread_rel_dimensionless(&self) -> T {
        let one = T::one();
        let two = one.clone() + one.clone();
        two * self.chi.clone()
            / ((one + self.theta.clone()) * self.gamma.clone() + self.chi.clone())
    }

    /// Rate `2 (k_fb + k_on) alpha` at which the two lowest lookdown levels are
    /// refreshed by a lookdown or an immigration. Statistics that only depend on
    /// clan partitions and relative positions decorrelate on this time scale.
    pub fn pair_refresh_rate(&self) -> T {
        let one = T::one();
        let two = one.clone() + one.clone();
        two * (self.gamma.clone() + self.theta.clone() * self.gamma.clone())
    }
}
