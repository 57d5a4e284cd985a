//! Geometry of the membrane sphere of radius `R` centred at the origin.
//!
//! Distances are Euclidean chords, not geodesics. Diffusion between events is
//! integrated with Euler-Maruyama on the Stroock representation
//! `dB = sqrt(D) (I - B B^T / R^2) dW - (D / R^2) B dt`, followed by a radial
//! projection back onto the sphere.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::scalar::Real;

/// Point counts up to which `Auto` runs the exact hemisphere search.
pub const EXACT_HEMISPHERE_LIMIT: usize = 200;

/// Slack on `<p, pole> >= 0` for unit vectors, absorbing rounding of
/// boundary candidates built from cross products.
const BOUNDARY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SphereError {
    #[error("hemisphere search needs at least one point")]
    EmptyPointSet,
}

/// A point in R^3, on the sphere whenever produced by this module.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Point<F> {
    pub coords: [F; 3],
}

impl<F: Real> Point<F> {
    pub fn new(x: F, y: F, z: F) -> Self {
        Self { coords: [x, y, z] }
    }

    pub fn dot(&self, other: &Self) -> F {
        dot(&self.coords, &other.coords)
    }

    pub fn norm(&self) -> F {
        self.dot(self).sqrt()
    }

    /// Radial projection onto the sphere of the given radius.
    pub fn projected(&self, radius: F) -> Self {
        let s = radius / self.norm();
        Self { coords: self.coords.map(|c| c * s) }
    }

    pub fn unit(&self) -> [F; 3] {
        let n = self.norm();
        self.coords.map(|c| c / n)
    }

    pub fn x(&self) -> F {
        self.coords[0]
    }

    pub fn y(&self) -> F {
        self.coords[1]
    }

    pub fn z(&self) -> F {
        self.coords[2]
    }
}

#[inline]
fn dot<F: Real>(a: &[F; 3], b: &[F; 3]) -> F {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
fn cross<F: Real>(a: &[F; 3], b: &[F; 3]) -> [F; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
fn scaled<F: Real>(a: &[F; 3], s: F) -> [F; 3] {
    [a[0] * s, a[1] * s, a[2] * s]
}

/// Uniform point by surface area, from a normalized standard Gaussian triple.
pub fn sample_uniform<F: Real, R: Rng + ?Sized>(radius: F, rng: &mut R) -> Point<F> {
    loop {
        let g = Point::new(F::standard_normal(rng), F::standard_normal(rng), F::standard_normal(rng));
        let n = g.norm();
        if n > F::zero() {
            return Point { coords: g.coords.map(|c| c * radius / n) };
        }
    }
}

/// Squared chord distance, in `[0, 4 R^2]` for points on the sphere.
pub fn chord_sq<F: Real>(p: &Point<F>, q: &Point<F>) -> F {
    let d = [p.coords[0] - q.coords[0], p.coords[1] - q.coords[1], p.coords[2] - q.coords[2]];
    dot(&d, &d)
}

/// One Euler-Maruyama step of speed-`diffusion` Brownian motion, then projection.
///
/// `dt = 0` or `diffusion = 0` return `p` unchanged without touching the stream.
pub fn brownian_step<F: Real, R: Rng + ?Sized>(
    p: &Point<F>,
    dt: F,
    diffusion: F,
    radius: F,
    rng: &mut R,
) -> Point<F> {
    if !(dt > F::zero()) || !(diffusion > F::zero()) {
        return *p;
    }
    let scale = (diffusion * dt).sqrt();
    let w = [
        F::standard_normal(rng) * scale,
        F::standard_normal(rng) * scale,
        F::standard_normal(rng) * scale,
    ];
    let b = &p.coords;
    let inv_r2 = F::one() / (radius * radius);
    let radial = dot(b, &w) * inv_r2;
    let shrink = diffusion * dt * inv_r2;
    let next = Point::new(
        b[0] + w[0] - b[0] * radial - b[0] * shrink,
        b[1] + w[1] - b[1] * radial - b[1] * shrink,
        b[2] + w[2] - b[2] * radial - b[2] * shrink,
    );
    next.projected(radius)
}

/// Number of equal substeps used to cover `elapsed` with steps no longer than `dt_max`.
pub fn substep_count<F: Real>(elapsed: F, dt_max: F) -> u64 {
    if !(elapsed > F::zero()) {
        return 0;
    }
    let ratio = elapsed / dt_max;
    // elapsed = k * dt_max must give k steps, not k + 1 from rounding.
    let k = (ratio - ratio * F::lit(1e-12)).ceil();
    k.to_u64().unwrap_or(u64::MAX).max(1)
}

/// Advances `p` by `elapsed` using `ceil(elapsed / dt_max)` equal substeps.
pub fn advance<F: Real, R: Rng + ?Sized>(
    p: &Point<F>,
    elapsed: F,
    dt_max: F,
    diffusion: F,
    radius: F,
    rng: &mut R,
) -> Point<F> {
    if !(diffusion > F::zero()) {
        return *p;
    }
    let steps = substep_count(elapsed, dt_max);
    if steps == 0 {
        return *p;
    }
    let dt = elapsed / F::from_count(steps);
    let mut q = *p;
    for _ in 0..steps {
        q = brownian_step(&q, dt, diffusion, radius, rng);
    }
    q
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum HemisphereMode {
    Exact,
    Heuristic,
    /// Exact up to [`EXACT_HEMISPHERE_LIMIT`] points, heuristic above.
    Auto,
}

impl HemisphereMode {
    pub fn resolve(self, count: usize) -> Self {
        match self {
            HemisphereMode::Auto if count <= EXACT_HEMISPHERE_LIMIT => HemisphereMode::Exact,
            HemisphereMode::Auto => HemisphereMode::Heuristic,
            m => m,
        }
    }
}

impl fmt::Display for HemisphereMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HemisphereMode::Exact => "exact",
            HemisphereMode::Heuristic => "heuristic",
            HemisphereMode::Auto => "auto",
        })
    }
}

impl FromStr for HemisphereMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exact" => Ok(HemisphereMode::Exact),
            "heuristic" => Ok(HemisphereMode::Heuristic),
            "auto" => Ok(HemisphereMode::Auto),
            other => Err(format!("unknown hemisphere mode `{other}` (expected exact, heuristic or auto)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HemisphereResult<F> {
    /// Unit vector; the hemisphere is `{p : <p, pole> >= 0}`.
    pub pole: [F; 3],
    pub covered_fraction: F,
    /// `Exact` or `Heuristic`, never `Auto`.
    pub mode_used: HemisphereMode,
}

/// Closed hemisphere covering the largest fraction of `points`.
///
/// Exact mode enumerates candidate poles: the heuristic pole, every point and
/// its antipode, and `+-` the normalized cross product of every pair (an
/// arbitrary orthogonal direction for parallel pairs). An optimal hemisphere
/// can always be rotated until its boundary passes through two points or it
/// is centred on one, so the candidate set contains a maximizer.
pub fn max_hemisphere<F: Real>(
    points: &[Point<F>],
    mode: HemisphereMode,
) -> Result<HemisphereResult<F>, SphereError> {
    if points.is_empty() {
        return Err(SphereError::EmptyPointSet);
    }
    let units: Vec<[F; 3]> = points.iter().map(Point::unit).collect();
    let heuristic = resultant_pole(&units);
    let mode_used = mode.resolve(points.len());
    let total = F::from_count(units.len() as u64);

    let mut best = (covered(&units, &heuristic), heuristic);
    if mode_used == HemisphereMode::Exact && best.0 < units.len() {
        let mut consider = |pole: [F; 3]| {
            let c = covered(&units, &pole);
            if c > best.0 {
                best = (c, pole);
            }
            c == units.len()
        };
        'search: {
            for u in &units {
                if consider(*u) || consider(scaled(u, -F::one())) {
                    break 'search;
                }
            }
            for (i, a) in units.iter().enumerate() {
                for b in &units[i + 1..] {
                    let c = cross(a, b);
                    let n = dot(&c, &c).sqrt();
                    let pole = if n > F::lit(1e-9) { scaled(&c, F::one() / n) } else { orthogonal(a) };
                    if consider(pole) || consider(scaled(&pole, -F::one())) {
                        break 'search;
                    }
                }
            }
        }
    }

    Ok(HemisphereResult {
        pole: best.1,
        covered_fraction: F::from_count(best.0 as u64) / total,
        mode_used,
    })
}

fn covered<F: Real>(units: &[[F; 3]], pole: &[F; 3]) -> usize {
    let tol = -F::lit(BOUNDARY_TOL);
    units.iter().filter(|u| dot(u, pole) >= tol).count()
}

/// Normalized resultant of unit vectors, or the first direction when the
/// resultant is shorter than `1e-12` per point.
fn resultant_pole<F: Real>(units: &[[F; 3]]) -> [F; 3] {
    let mut s = [F::zero(); 3];
    for u in units {
        s = [s[0] + u[0], s[1] + u[1], s[2] + u[2]];
    }
    let n = dot(&s, &s).sqrt();
    if n > F::lit(1e-12) * F::from_count(units.len() as u64) {
        scaled(&s, F::one() / n)
    } else {
        units[0]
    }
}

/// A unit vector orthogonal to the unit vector `u`.
fn orthogonal<F: Real>(u: &[F; 3]) -> [F; 3] {
    let axis = if u[0].abs() <= u[1].abs() && u[0].abs() <= u[2].abs() {
        [F::one(), F::zero(), F::zero()]
    } else if u[1].abs() <= u[2].abs() {
        [F::zero(), F::one(), F::zero()]
    } else {
        [F::zero(), F::zero(), F::one()]
    };
    let c = cross(u, &axis);
    let n = dot(&c, &c).sqrt();
    scaled(&c, F::one() / n)
}
