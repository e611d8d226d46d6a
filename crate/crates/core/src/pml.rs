//! Perfectly matched layers via complex coordinate stretching.
//!
//! Each axis is stretched by ξ = 1 + iγ/ω with a quadratic damping ramp
//! γ(d) = (3·c_face/(2L))·ln(1/r)·(d/L)², where d is the depth into the
//! layer, L = npml·h the layer thickness, and c_face the wavespeed at the
//! nearest interior node. γ is identically zero in the interior, so the
//! stretch factor is exactly 1 there and assemblies are bit-identical to
//! the unstretched operator away from the layers.

use crate::model::VelocityModel;
use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PmlError {
    #[error("reflection coefficient must lie in (0, 1], got {0}")]
    BadReflection(f64),
}

/// Absorbing-layer geometry and strength.
///
/// `npml` cells are added on every face of the interior grid. `r_coeff`
/// is the target theoretical reflection coefficient of the quadratic
/// profile; `r_coeff = 1` gives γ ≡ 0 (a transparent layer, useful for
/// testing).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PmlProfile {
    npml: usize,
    r_coeff: f64,
}

impl PmlProfile {
    pub const DEFAULT_R_COEFF: f64 = 1e-3;

    pub fn new(npml: usize, r_coeff: f64) -> Result<Self, PmlError> {
        if !(r_coeff > 0.0 && r_coeff <= 1.0) {
            return Err(PmlError::BadReflection(r_coeff));
        }
        Ok(PmlProfile { npml, r_coeff })
    }

    /// Layer with the default reflection coefficient.
    pub fn standard(npml: usize) -> Self {
        PmlProfile { npml, r_coeff: Self::DEFAULT_R_COEFF }
    }

    /// No padding at all (pure Dirichlet box).
    pub fn none() -> Self {
        PmlProfile { npml: 0, r_coeff: Self::DEFAULT_R_COEFF }
    }

    pub fn npml(&self) -> usize {
        self.npml
    }

    pub fn r_coeff(&self) -> f64 {
        self.r_coeff
    }
}

/// Evaluates damping and directional stretch factors on the padded grid.
///
/// Positions are fractional padded-grid indices (units of h); the
/// interior occupies `[npml, npml + n - 1]` along each axis.
pub(crate) struct Stretch<'m> {
    model: &'m VelocityModel,
    pad: usize,
    omega: f64,
    ln_inv_r: f64,
    width_m: f64,
}

impl<'m> Stretch<'m> {
    pub(crate) fn new(model: &'m VelocityModel, pml: &PmlProfile, omega: f64) -> Self {
        Stretch {
            model,
            pad: pml.npml,
            omega,
            ln_inv_r: (1.0 / pml.r_coeff).ln(),
            width_m: pml.npml as f64 * model.h(),
        }
    }

    /// γ along `axis` at a fractional padded position. Exactly 0.0 for
    /// positions inside the interior slab of that axis.
    pub(crate) fn gamma(&self, axis: usize, pos: [f64; 3]) -> f64 {
        if self.width_m == 0.0 || self.ln_inv_r == 0.0 {
            return 0.0;
        }
        let n = [self.model.nx(), self.model.ny(), self.model.nz()][axis];
        let lo = self.pad as f64;
        let hi = lo + (n - 1) as f64;
        let q = pos[axis];
        let depth_cells = (lo - q).max(q - hi).max(0.0);
        if depth_cells == 0.0 {
            return 0.0;
        }
        let c_face = self.model.c_clamped(
            pos[0].round() as i64 - self.pad as i64,
            pos[1].round() as i64 - self.pad as i64,
            pos[2].round() as i64 - self.pad as i64,
        );
        let d = depth_cells * self.model.h();
        let ratio = d / self.width_m;
        (3.0 * c_face / (2.0 * self.width_m)) * self.ln_inv_r * ratio * ratio
    }

    /// Directional reciprocal stretch Σ_c û_c²/ξ_c for a unit direction û
    /// at a fractional padded position. Returns exactly 1 + 0i when every
    /// involved axis is undamped there, so interior arithmetic is
    /// untouched by the layer.
    pub(crate) fn inv_xi_dir(&self, u: [f64; 3], pos: [f64; 3]) -> Complex64 {
        let mut gammas = [0.0; 3];
        let mut damped = false;
        for c in 0..3 {
            if u[c] != 0.0 {
                gammas[c] = self.gamma(c, pos);
                damped |= gammas[c] != 0.0;
            }
        }
        if !damped {
            return Complex64::new(1.0, 0.0);
        }
        let mut s = Complex64::new(0.0, 0.0);
        for c in 0..3 {
            if u[c] != 0.0 {
                let xi = Complex64::new(1.0, gammas[c] / self.omega);
                s += u[c] * u[c] * xi.inv();
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn grid() -> VelocityModel {
        VelocityModel::homogeneous(5, 5, 5, 50.0, 1500.0).unwrap()
    }

    #[test]
    fn gamma_is_exactly_zero_in_interior() {
        let m = grid();
        let s = Stretch::new(&m, &PmlProfile::standard(3), 2.0 * std::f64::consts::PI * 7.5);
        for axis in 0..3 {
            for q in [3.0, 4.5, 7.0] {
                let mut pos = [5.0, 5.0, 5.0];
                pos[axis] = q;
                assert_eq!(s.gamma(axis, pos), 0.0);
            }
            let mut pos = [5.0, 5.0, 5.0];
            pos[axis] = 2.5; // half a cell into the layer
            assert!(s.gamma(axis, pos) > 0.0);
        }
    }

    #[test]
    fn gamma_quadratic_profile_and_face_value() {
        let m = grid();
        let pml = PmlProfile::standard(4);
        let s = Stretch::new(&m, &pml, 1.0);
        let l = 4.0 * 50.0;
        let expect_edge = 3.0 * 1500.0 / (2.0 * l) * (1.0 / 1e-3_f64).ln();
        // outermost node sits a full layer depth from the interior face
        let got_edge = s.gamma(0, [0.0, 6.0, 6.0]);
        assert_abs_diff_eq!(got_edge, expect_edge, epsilon = 1e-12 * expect_edge);
        // half depth gives a quarter of the edge value
        let got_half = s.gamma(0, [2.0, 6.0, 6.0]);
        assert_abs_diff_eq!(got_half, expect_edge / 4.0, epsilon = 1e-12 * expect_edge);
        // monotone in depth
        let mut prev = 0.0;
        for step in 0..=8 {
            let q = 4.0 - 0.5 * step as f64;
            let g = s.gamma(0, [q, 6.0, 6.0]);
            assert!(g >= prev);
            prev = g;
        }
    }

    #[test]
    fn unit_reflection_coefficient_disables_damping() {
        let m = grid();
        let s = Stretch::new(&m, &PmlProfile::new(4, 1.0).unwrap(), 1.0);
        assert_eq!(s.gamma(0, [0.0, 6.0, 6.0]), 0.0);
        assert_eq!(
            s.inv_xi_dir([1.0, 0.0, 0.0], [0.0, 6.0, 6.0]),
            Complex64::new(1.0, 0.0)
        );
    }

    #[test]
    fn directional_stretch_mixes_axes() {
        let m = grid();
        let omega = 2.0 * std::f64::consts::PI * 7.5;
        let s = Stretch::new(&m, &PmlProfile::standard(3), omega);
        // corner position damped on x and y, not z
        let pos = [1.0, 1.0, 5.0];
        let gx = s.gamma(0, pos);
        let gy = s.gamma(1, pos);
        assert!(gx > 0.0 && gy > 0.0);
        let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
        let got = s.inv_xi_dir([0.0, inv_sqrt2, inv_sqrt2], pos);
        let expect = 0.5 * Complex64::new(1.0, gy / omega).inv() + 0.5 * Complex64::new(1.0, 0.0);
        assert_abs_diff_eq!(got.re, expect.re, epsilon = 1e-15);
        assert_abs_diff_eq!(got.im, expect.im, epsilon = 1e-15);
        // pure interior direction evaluation stays exactly one
        assert_eq!(
            s.inv_xi_dir([0.0, 0.0, 1.0], [5.0, 5.0, 5.0]),
            Complex64::new(1.0, 0.0)
        );
    }

    #[test]
    fn rejects_bad_reflection_coefficient() {
        assert!(PmlProfile::new(3, 0.0).is_err());
        assert!(PmlProfile::new(3, 1.5).is_err());
        assert!(PmlProfile::new(3, f64::NAN).is_err());
        assert!(PmlProfile::new(3, 1.0).is_ok());
    }
}
