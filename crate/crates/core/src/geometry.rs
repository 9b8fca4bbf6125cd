//! Hyperball geometry and the three overlap-rate heuristics.
//!
//! Partitions are modelled as closed balls. Two balls at center distance
//! `d` are classified by the cascade
//!
//! ```text
//! d >= r1 + r2        Disjoint        rate 0
//! d <= |r1 - r2|      Containment     rate 1
//! otherwise           PartialOverlap  method-specific rate
//! ```
//!
//! In the partial case the separating hyperplane cuts a cap off each ball.
//! Cap `i` has polar angle `theta_i = acos((r_i^2 + d^2 - r_j^2) / (2 r_i d))`
//! and height `h_i = r_i (1 - cos theta_i)`; the lens is the union of the two
//! caps. The three heuristics are
//!
//! * volume based: `(V_cap1 + V_cap2) / (V_ball1 + V_ball2)`
//! * distance based: `(h1 + h2) / d`
//! * object based: `|A| / (|P1| + |P2|)`, `A` the members inside both balls.
//!
//! Raw rates can exceed 1 for the distance heuristic; the reported `rate`
//! is clamped, `raw_rate` is not.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::{CostCounters, Dataset, DistanceFn, ObjectId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Ball {
    pub fn new(center: Vec<f64>, radius: f64) -> Result<Self> {
        if center.is_empty() {
            return Err(Error::param("center", "must have at least one coordinate"));
        }
        if radius < 0.0 || !radius.is_finite() {
            return Err(Error::param(
                "radius",
                format!("{radius} is not a finite non-negative real"),
            ));
        }
        Ok(Self { center, radius })
    }

    pub fn dimension(&self) -> usize {
        self.center.len()
    }

    pub fn volume(&self) -> f64 {
        ball_volume(self.dimension(), self.radius)
    }
}

/// A ball that also knows which objects it holds.
pub trait Region {
    fn center(&self) -> &[f64];
    fn radius(&self) -> f64;
    fn members(&self) -> &[ObjectId];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OverlapRegime {
    Disjoint,
    PartialOverlap,
    Containment,
}

impl OverlapRegime {
    /// Classifies two balls by center distance and radii.
    ///
    /// Disjoint is tested before Containment, so tangent zero-radius balls
    /// fall into Disjoint. Two coincident points are the one exception and
    /// count as Containment.
    pub fn of(dist: f64, r1: f64, r2: f64) -> Self {
        if r1 == 0.0 && r2 == 0.0 && dist == 0.0 {
            OverlapRegime::Containment
        } else if dist >= r1 + r2 {
            OverlapRegime::Disjoint
        } else if dist <= (r1 - r2).abs() {
            OverlapRegime::Containment
        } else {
            OverlapRegime::PartialOverlap
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OverlapMethod {
    Vbm,
    Dbm,
    Obm,
}

impl fmt::Display for OverlapMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OverlapMethod::Vbm => "vbm",
            OverlapMethod::Dbm => "dbm",
            OverlapMethod::Obm => "obm",
        })
    }
}

impl FromStr for OverlapMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "vbm" => Ok(OverlapMethod::Vbm),
            "dbm" => Ok(OverlapMethod::Dbm),
            "obm" => Ok(OverlapMethod::Obm),
            other => Err(Error::param("method", format!("unknown overlap method `{other}`"))),
        }
    }
}

/// Method-specific quantities behind a rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OverlapDetail {
    Volume {
        cap1: f64,
        cap2: f64,
        /// Absolute intersection volume.
        lens: f64,
        volume1: f64,
        volume2: f64,
    },
    Distance {
        h1: f64,
        h2: f64,
    },
    Objects {
        shared: usize,
        size1: usize,
        size2: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapReport {
    pub method: OverlapMethod,
    pub regime: OverlapRegime,
    /// `min(raw_rate, 1)`.
    pub rate: f64,
    pub raw_rate: f64,
    pub detail: OverlapDetail,
}

impl OverlapReport {
    fn new(method: OverlapMethod, regime: OverlapRegime, raw_rate: f64, detail: OverlapDetail) -> Self {
        Self {
            method,
            regime,
            rate: raw_rate.min(1.0),
            raw_rate,
            detail,
        }
    }
}

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEFFS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// The gamma function for positive arguments.
///
/// Integers and half-integers up to 171 are evaluated exactly by the
/// recurrence `Γ(x+1) = xΓ(x)` from `Γ(1) = 1` or `Γ(1/2) = √π`; other
/// arguments use a Lanczos approximation.
pub fn gamma(x: f64) -> Result<f64> {
    if x <= 0.0 || !x.is_finite() {
        return Err(Error::Domain { op: "gamma", value: x });
    }
    let twice = 2.0 * x;
    if twice.fract() == 0.0 && x <= 171.0 {
        let (mut acc, mut t) = if twice as u64 % 2 == 0 {
            (1.0, 1.0)
        } else {
            (PI.sqrt(), 0.5)
        };
        while t < x {
            acc *= t;
            t += 1.0;
        }
        return Ok(acc);
    }
    Ok(lanczos_gamma(x))
}

fn lanczos_gamma(x: f64) -> f64 {
    if x < 0.5 {
        return PI / ((PI * x).sin() * lanczos_gamma(1.0 - x));
    }
    let x = x - 1.0;
    let mut a = LANCZOS_COEFFS[0];
    let t = x + LANCZOS_G + 0.5;
    for (i, c) in LANCZOS_COEFFS.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    (2.0 * PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * a
}

fn gamma_half_dim(n: usize, offset: f64) -> f64 {
    // n/2 + offset is a positive half-integer, always in gamma's domain.
    gamma(n as f64 / 2.0 + offset).expect("positive argument")
}

/// Volume of an `n`-ball of radius `r`: `π^(n/2) / Γ(n/2 + 1) · r^n`.
pub fn ball_volume(n: usize, r: f64) -> f64 {
    if r == 0.0 {
        return 0.0;
    }
    PI.powf(n as f64 / 2.0) / gamma_half_dim(n, 1.0) * r.powi(n as i32)
}

/// `∫₀^φ sinⁿθ dθ` by the reduction formula
/// `Iₙ = ((n−1)/n)·Iₙ₋₂ − cos φ · sinⁿ⁻¹ φ / n` from `I₀ = φ`, `I₁ = 1 − cos φ`.
///
/// Below one radian the recurrence cancels badly, so the integral is
/// summed as `Σₖ (1/2)ₖ/k! · sin^(n+2k+1)φ / (n+2k+1)` instead.
pub fn sin_power_integral(n: usize, phi: f64) -> Result<f64> {
    if !(0.0..=PI).contains(&phi) {
        return Err(Error::Domain {
            op: "sin_power_integral",
            value: phi,
        });
    }
    if phi < SMALL_ANGLE {
        return Ok(sin_power_series(n, phi));
    }
    let (s, c) = phi.sin_cos();
    let (mut acc, start) = if n % 2 == 0 { (phi, 2) } else { (1.0 - c, 3) };
    let mut k = start;
    while k <= n {
        let kf = k as f64;
        acc = (kf - 1.0) / kf * acc - c * s.powi(k as i32 - 1) / kf;
        k += 2;
    }
    Ok(acc.max(0.0))
}

const SMALL_ANGLE: f64 = 1.0;

fn sin_power_series(n: usize, phi: f64) -> f64 {
    let s = phi.sin();
    let s2 = s * s;
    let mut coeff = 1.0;
    let mut power = s.powi(n as i32 + 1);
    let mut sum = 0.0;
    for k in 0..200 {
        let term = coeff * power / (n + 2 * k + 1) as f64;
        sum += term;
        if term <= sum * 1e-17 {
            break;
        }
        coeff *= (k as f64 + 0.5) / (k as f64 + 1.0);
        power *= s2;
    }
    sum
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CapGeometry {
    /// Polar angle from the ball center between the cap apex and its rim.
    pub theta: f64,
    pub height: f64,
}

/// Cap cut from `bi` by the radical hyperplane shared with `bj`.
pub fn cap_geometry(bi: &Ball, bj: &Ball, dist: f64) -> Result<CapGeometry> {
    if OverlapRegime::of(dist, bi.radius, bj.radius) != OverlapRegime::PartialOverlap {
        return Err(Error::NotPartialOverlap {
            dist,
            r1: bi.radius,
            r2: bj.radius,
        });
    }
    Ok(cap_geometry_unchecked(bi.radius, bj.radius, dist))
}

// cos θ = (ri² + d² − rj²) / (2 ri d). Evaluated through the factored
// 1 − cos θ = (rj − ri + d)(rj + ri − d) / (2 ri d) so that shallow caps keep
// their relative precision; θ = 2 asin(√((1 − cos θ)/2)) is the same angle.
fn cap_geometry_unchecked(ri: f64, rj: f64, dist: f64) -> CapGeometry {
    let one_minus_cos = ((rj - ri + dist) * (rj + ri - dist) / (2.0 * ri * dist)).clamp(0.0, 2.0);
    CapGeometry {
        theta: 2.0 * (one_minus_cos / 2.0).sqrt().asin(),
        height: ri * one_minus_cos,
    }
}

/// Volume of the cap of `b` with polar angle `theta`:
/// `π^((n−1)/2) rⁿ / Γ((n+1)/2) · ∫₀^θ sinⁿ`.
pub fn cap_volume(b: &Ball, theta: f64) -> Result<f64> {
    let n = b.dimension();
    let integral = sin_power_integral(n, theta)?;
    if b.radius == 0.0 {
        return Ok(0.0);
    }
    Ok(PI.powf((n as f64 - 1.0) / 2.0) * b.radius.powi(n as i32) / gamma_half_dim(n, 0.5) * integral)
}

fn check_same_dimension(b1: &Ball, b2: &Ball) -> Result<()> {
    if b1.dimension() != b2.dimension() {
        return Err(Error::DimensionMismatch {
            expected: b1.dimension(),
            actual: b2.dimension(),
        });
    }
    Ok(())
}

/// Volume-based overlap rate.
pub fn vbm_rate(b1: &Ball, b2: &Ball, dist: f64) -> Result<OverlapReport> {
    check_same_dimension(b1, b2)?;
    let (v1, v2) = (b1.volume(), b2.volume());
    let regime = OverlapRegime::of(dist, b1.radius, b2.radius);
    let (raw, cap1, cap2, lens) = match regime {
        OverlapRegime::Disjoint => (0.0, 0.0, 0.0, 0.0),
        OverlapRegime::Containment => (1.0, 0.0, 0.0, v1.min(v2)),
        OverlapRegime::PartialOverlap => {
            let g1 = cap_geometry_unchecked(b1.radius, b2.radius, dist);
            let g2 = cap_geometry_unchecked(b2.radius, b1.radius, dist);
            let cap1 = cap_volume(b1, g1.theta)?;
            let cap2 = cap_volume(b2, g2.theta)?;
            let lens = cap1 + cap2;
            (lens / (v1 + v2), cap1, cap2, lens)
        }
    };
    Ok(OverlapReport::new(
        OverlapMethod::Vbm,
        regime,
        raw,
        OverlapDetail::Volume {
            cap1,
            cap2,
            lens,
            volume1: v1,
            volume2: v2,
        },
    ))
}

/// Distance-based overlap rate.
pub fn dbm_rate(b1: &Ball, b2: &Ball, dist: f64) -> Result<OverlapReport> {
    check_same_dimension(b1, b2)?;
    let regime = OverlapRegime::of(dist, b1.radius, b2.radius);
    let (raw, h1, h2) = match regime {
        OverlapRegime::Disjoint => (0.0, 0.0, 0.0),
        OverlapRegime::Containment => (1.0, 0.0, 0.0),
        OverlapRegime::PartialOverlap => {
            let h1 = cap_geometry_unchecked(b1.radius, b2.radius, dist).height;
            let h2 = cap_geometry_unchecked(b2.radius, b1.radius, dist).height;
            ((h1 + h2) / dist, h1, h2)
        }
    };
    Ok(OverlapReport::new(
        OverlapMethod::Dbm,
        regime,
        raw,
        OverlapDetail::Distance { h1, h2 },
    ))
}

/// Members of either region lying inside both balls.
///
/// Regions are assumed member-disjoint, so the union is a concatenation.
pub fn shared_objects<A: Region + ?Sized, B: Region + ?Sized>(
    a: &A,
    b: &B,
    ds: &Dataset,
    metric: &dyn DistanceFn,
    counters: &mut CostCounters,
) -> Vec<ObjectId> {
    a.members()
        .iter()
        .chain(b.members())
        .copied()
        .filter(|&id| {
            let o = ds.coords(id);
            let d1 = counters.measure(metric, o, a.center());
            let d2 = counters.measure(metric, o, b.center());
            counters.le(d1, a.radius()) && counters.le(d2, b.radius())
        })
        .collect()
}

/// Object-based overlap rate. Shared members are only counted in the
/// partial regime; the other regimes are decided by geometry alone.
pub fn obm_rate<A: Region + ?Sized, B: Region + ?Sized>(
    a: &A,
    b: &B,
    ds: &Dataset,
    dist: f64,
    metric: &dyn DistanceFn,
    counters: &mut CostCounters,
) -> Result<OverlapReport> {
    let (size1, size2) = (a.members().len(), b.members().len());
    if size1 + size2 == 0 {
        return Err(Error::Empty("object-based rate of two empty partitions"));
    }
    if a.center().len() != b.center().len() {
        return Err(Error::DimensionMismatch {
            expected: a.center().len(),
            actual: b.center().len(),
        });
    }
    let regime = OverlapRegime::of(dist, a.radius(), b.radius());
    let (raw, shared) = match regime {
        OverlapRegime::Disjoint => (0.0, 0),
        OverlapRegime::Containment => (1.0, 0),
        OverlapRegime::PartialOverlap => {
            let shared = shared_objects(a, b, ds, metric, counters).len();
            (shared as f64 / (size1 + size2) as f64, shared)
        }
    };
    Ok(OverlapReport::new(
        OverlapMethod::Obm,
        regime,
        raw,
        OverlapDetail::Objects { shared, size1, size2 },
    ))
}
