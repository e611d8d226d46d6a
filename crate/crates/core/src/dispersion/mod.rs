//! Plane-wave dispersion analysis and mixing-weight optimization.
//!
//! A discrete plane wave `exp(i k·x)` inserted into the 27-point stencil
//! propagates with a numerical phase velocity that differs from the physical
//! one. The mismatch depends only on the grid-sampling ratio `G = λ/h`
//! (points per wavelength) and the propagation angles, and on the stencil's
//! mixing weights. This module evaluates that normalized phase velocity,
//! fits weights that pin it to 1 over an angle fan (per G, jointly over
//! several G, or as a Tikhonov-smoothed table over a 1/G grid), and serves
//! table lookups keyed by the local sampling ratio.

mod solve;
mod table;

pub use solve::{default_lambda, solve_weights_adaptive, solve_weights_joint, solve_weights_single, InvGGrid};
pub use table::{TableIoError, WeightTable};

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

/// Errors from dispersion evaluation and weight fitting.
#[derive(Debug, Error)]
pub enum DispersionError {
    #[error("grid sampling ratio must exceed 2 points per wavelength, got G = {0}")]
    CoarseSampling(f64),
    #[error("angle {0} is not finite or lies outside [0, pi/2]")]
    InvalidAngle(f64),
    #[error("angle grid lists must be non-empty, finite, and strictly increasing")]
    DegenerateAngleGrid,
    #[error("weight sums violated: stiffness sum = {stiffness_sum}, mass sum = {mass_sum}")]
    WeightSumViolation { stiffness_sum: f64, mass_sum: f64 },
    #[error("mass symbol J = {j} is not positive at (G = {g}, theta = {theta}, phi = {phi})")]
    NonPositiveMass { j: f64, g: f64, theta: f64, phi: f64 },
    #[error("negative stiffness radicand {radicand} at (G = {g}, theta = {theta}, phi = {phi})")]
    NegativeRadicand { radicand: f64, g: f64, theta: f64, phi: f64 },
    #[error("no sampling ratios supplied")]
    EmptyGList,
    #[error("regularization weight must be finite and nonnegative, got {0}")]
    InvalidLambda(f64),
    #[error("1/G grid must be uniform with 0 < min <= max < 0.5 and positive step")]
    InvalidInvGGrid,
    #[error("regularized normal equations are singular; increase lambda or enrich the angle grid")]
    SingularNormalEquations,
}

/// Rectangular fan of propagation angles used to fit and evaluate weights.
///
/// `theta` is the in-plane (azimuth-like) angle and `phi` the out-of-plane
/// (dip-like) angle, both in radians. By the axis symmetries of the stencil
/// the fan `[0, π/4] x [0, π/4]` already covers all distinct directions,
/// but any angles in `[0, π/2]` are accepted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AngleGrid {
    thetas: Vec<f64>,
    phis: Vec<f64>,
}

impl AngleGrid {
    /// Builds a grid from radian angle lists.
    ///
    /// Both lists must be non-empty, finite, strictly increasing, and lie
    /// in `[0, π/2]`.
    pub fn new(thetas: Vec<f64>, phis: Vec<f64>) -> Result<Self, DispersionError> {
        for list in [&thetas, &phis] {
            if list.is_empty() {
                return Err(DispersionError::DegenerateAngleGrid);
            }
            for &v in list {
                if !v.is_finite() || !(0.0..=PI / 2.0 + 1e-12).contains(&v) {
                    return Err(DispersionError::InvalidAngle(v));
                }
            }
            if list.windows(2).any(|w| w[1] <= w[0]) {
                return Err(DispersionError::DegenerateAngleGrid);
            }
        }
        Ok(Self { thetas, phis })
    }

    /// Builds a grid from degree angle lists.
    pub fn from_degrees(thetas_deg: &[f64], phis_deg: &[f64]) -> Result<Self, DispersionError> {
        Self::new(
            thetas_deg.iter().map(|d| d.to_radians()).collect(),
            phis_deg.iter().map(|d| d.to_radians()).collect(),
        )
    }

    /// Default fitting fan: θ and φ from 0° to 45° in 10° steps.
    pub fn default_fit() -> Self {
        let deg = [0.0, 10.0, 20.0, 30.0, 40.0];
        Self::from_degrees(&deg, &deg).expect("static grid is valid")
    }

    pub fn thetas(&self) -> &[f64] {
        &self.thetas
    }

    pub fn phis(&self) -> &[f64] {
        &self.phis
    }

    /// All (θ, φ) pairs, θ-major.
    pub fn pairs(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.thetas
            .iter()
            .flat_map(move |&t| self.phis.iter().map(move |&p| (t, p)))
    }

    /// Number of (θ, φ) pairs.
    pub fn len(&self) -> usize {
        self.thetas.len() * self.phis.len()
    }

    pub fn is_empty(&self) -> bool {
        false // construction guarantees non-empty lists
    }
}

/// Mixing weights of the 27-point stencil.
///
/// `ws1..ws3` blend the three stiffness classes (Cartesian 7-point, the
/// three 45°-rotated systems, the four body-diagonal systems); `wm0..wm3`
/// distribute the mass term over the center node and its face, edge, and
/// corner neighbor shells. Each group sums to 1 so that any blend remains
/// a consistent second-order discretization.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    pub ws1: f64,
    pub ws2: f64,
    pub ws3: f64,
    pub wm0: f64,
    pub wm1: f64,
    pub wm2: f64,
    pub wm3: f64,
}

/// Sum-constraint slack accepted by [`WeightVector::validate`].
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

impl WeightVector {
    /// The classical 7-point stencil with a lumped mass term.
    pub const CLASSICAL_7PT: WeightVector = WeightVector {
        ws1: 1.0,
        ws2: 0.0,
        ws3: 0.0,
        wm0: 1.0,
        wm1: 0.0,
        wm2: 0.0,
        wm3: 0.0,
    };

    /// Builds a weight vector from the five independent weights,
    /// back-substituting the dependent ones so the sum constraints hold
    /// by construction.
    pub fn from_independent(ws1: f64, ws2: f64, wm0: f64, wm1: f64, wm2: f64) -> Self {
        WeightVector {
            ws1,
            ws2,
            ws3: 1.0 - (ws1 + ws2),
            wm0,
            wm1,
            wm2,
            wm3: 1.0 - ((wm0 + wm1) + wm2),
        }
    }

    /// Checks the two sum constraints to within [`WEIGHT_SUM_TOL`].
    pub fn validate(&self) -> Result<(), DispersionError> {
        let stiffness_sum = (self.ws1 + self.ws2) + self.ws3;
        let mass_sum = ((self.wm0 + self.wm1) + self.wm2) + self.wm3;
        let finite = [self.ws1, self.ws2, self.ws3, self.wm0, self.wm1, self.wm2, self.wm3]
            .iter()
            .all(|v| v.is_finite());
        if !finite
            || (stiffness_sum - 1.0).abs() > WEIGHT_SUM_TOL
            || (mass_sum - 1.0).abs() > WEIGHT_SUM_TOL
        {
            return Err(DispersionError::WeightSumViolation { stiffness_sum, mass_sum });
        }
        Ok(())
    }
}

fn check_angles(theta: f64, phi: f64) -> Result<(), DispersionError> {
    if !theta.is_finite() {
        return Err(DispersionError::InvalidAngle(theta));
    }
    if !phi.is_finite() {
        return Err(DispersionError::InvalidAngle(phi));
    }
    Ok(())
}

/// The three cosine aggregates of a discrete plane wave.
///
/// For the wavevector direction `(θ, φ)` sampled at `G` points per
/// wavelength the per-axis phases are `a = (2π/G)·cosφ·cosθ`,
/// `b = (2π/G)·cosφ·sinθ`, `c = (2π/G)·sinφ`, and this returns
///
/// - `A = cos a · cos b · cos c`
/// - `B = cos a·cos b + cos a·cos c + cos b·cos c`
/// - `C = cos a + cos b + cos c`
///
/// which are the only combinations the stencil symbol depends on.
/// `G = ∞` (the continuum) is accepted and yields `(1, 3, 3)`.
pub fn abc(g: f64, theta: f64, phi: f64) -> Result<(f64, f64, f64), DispersionError> {
    if !(g > 2.0) {
        return Err(DispersionError::CoarseSampling(g));
    }
    check_angles(theta, phi)?;
    let kh = 2.0 * PI / g;
    let (ca, cb, cc) = (
        (kh * phi.cos() * theta.cos()).cos(),
        (kh * phi.cos() * theta.sin()).cos(),
        (kh * phi.sin()).cos(),
    );
    Ok((ca * cb * cc, ca * cb + ca * cc + cb * cc, ca + cb + cc))
}

/// Normalized numerical phase velocity `ṽ` of the weighted stencil.
///
/// `ṽ = 1` means dispersion-free propagation at this sampling ratio and
/// direction. Using the aggregates from [`abc`] and the mass symbol
/// `J = wm0 + wm1·C/3 + wm2·B/3 + wm3·A`,
///
/// `ṽ = (G/π) · sqrt( [ws1(3−C) + (ws2/3)(6−C−B) + (ws3/2)(3−3A+B−C)] / (2J) )`.
///
/// Fails when the mass symbol is nonpositive or the stiffness radicand is
/// negative (weights without a stable plane-wave response there).
pub fn normalized_phase_velocity(
    w: &WeightVector,
    g: f64,
    theta: f64,
    phi: f64,
) -> Result<f64, DispersionError> {
    let (am, bm, cm) = abc(g, theta, phi)?;
    let j = w.wm0 + w.wm1 * cm / 3.0 + w.wm2 * bm / 3.0 + w.wm3 * am;
    if !(j > 0.0) {
        return Err(DispersionError::NonPositiveMass { j, g, theta, phi });
    }
    let radicand = w.ws1 * (3.0 - cm)
        + w.ws2 / 3.0 * (6.0 - cm - bm)
        + 0.5 * w.ws3 * (3.0 - 3.0 * am + bm - cm);
    if radicand < 0.0 {
        return Err(DispersionError::NegativeRadicand { radicand, g, theta, phi });
    }
    Ok(g / PI * (radicand / (2.0 * j)).sqrt())
}

/// Largest `|ṽ − 1|` over an angle grid at a fixed sampling ratio.
pub fn max_dispersion_error(
    w: &WeightVector,
    g: f64,
    angles: &AngleGrid,
) -> Result<f64, DispersionError> {
    let mut worst = 0.0f64;
    for (theta, phi) in angles.pairs() {
        let v = normalized_phase_velocity(w, g, theta, phi)?;
        worst = worst.max((v - 1.0).abs());
    }
    Ok(worst)
}

/// Coefficient row of the linearized unit-velocity condition.
///
/// Enforcing `ṽ = 1` at one `(G, θ, φ)` and eliminating the dependent
/// weights `ws3` and `wm3` leaves one linear equation
/// `H · [ws1, ws2, wm0, m1, m2] = g` in the five independent weights,
/// where `m1 = wm1/6` and `m2 = wm2/12` are the per-node mass weights of
/// the face and edge shells. This returns `(H1..H5, g)` in the
/// conventional tabulated form:
///
/// - `H1 = ½(3 + 3A − B − C)`
/// - `H2 = ½(3A − (5/3)B + (1/3)C)`
/// - `H3 = (2π²/G²)(A − 1)`
/// - `H4 = (2π²/G²)(6A − 2C)`
/// - `H5 = (2π²/G²)(12A − 4B)`
/// - `g  = ½((4π²/G² + 3)A − B + C − 3)`
///
/// The least-squares solves use the exact linearization, which differs
/// from this form by a constant in the second column; see
/// [`solve_weights_single`].
pub fn h_row(g: f64, theta: f64, phi: f64) -> Result<([f64; 5], f64), DispersionError> {
    let (am, bm, cm) = abc(g, theta, phi)?;
    let k2 = 2.0 * PI * PI / (g * g);
    let h = [
        0.5 * (3.0 + 3.0 * am - bm - cm),
        0.5 * (3.0 * am - 5.0 / 3.0 * bm + cm / 3.0),
        k2 * (am - 1.0),
        k2 * (6.0 * am - 2.0 * cm),
        k2 * (12.0 * am - 4.0 * bm),
    ];
    let rhs = 0.5 * ((2.0 * k2 + 3.0) * am - bm + cm - 3.0);
    Ok((h, rhs))
}

/// One record of a sampled dispersion curve.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct DispersionPoint {
    pub inv_g: f64,
    pub theta_deg: f64,
    pub phi_deg: f64,
    pub v_norm: f64,
}

/// Samples `ṽ` over a 1/G range and an angle grid for a fixed weight set.
///
/// Points where the weights have no stable plane-wave response are
/// reported as errors by value so callers can decide whether to skip.
pub fn dispersion_curve(
    w: &WeightVector,
    inv_gs: &[f64],
    angles: &AngleGrid,
) -> Result<Vec<DispersionPoint>, DispersionError> {
    let mut out = Vec::with_capacity(inv_gs.len() * angles.len());
    for &inv_g in inv_gs {
        for (theta, phi) in angles.pairs() {
            let v = normalized_phase_velocity(w, 1.0 / inv_g, theta, phi)?;
            out.push(DispersionPoint {
                inv_g,
                theta_deg: theta.to_degrees(),
                phi_deg: phi.to_degrees(),
                v_norm: v,
            });
        }
    }
    Ok(out)
}
