//! Reference solutions: the analytic free-space point-source field for
//! homogeneous media, and a spectrally preconditioned scattering-series
//! oracle (convergent Born iteration) for heterogeneous media.
//!
//! Both emit fields in the same container as the finite-difference
//! solver, so outputs are directly interchangeable once the solver's
//! absorbing padding is cropped away.

use crate::model::{ComplexField, ModelError, SourceSpec, VelocityModel};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::f64::consts::PI;
use std::sync::Arc;
use std::time::{Duration, Instant};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReferenceError {
    #[error("invalid reference config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(
        "scattering iteration did not reach backward error {tol:.3e} within \
         {iterations} iterations (achieved {achieved:.3e})"
    )]
    NonConvergence { iterations: usize, achieved: f64, tol: f64 },
    #[error("degenerate system: {0}")]
    DegenerateSystem(String),
}

/// Parameters for the scattering-series oracle. `tol` is the
/// backward-error stopping threshold ‖(∇²+k²)u − s‖₂/‖s‖₂ with the
/// spectral Laplacian; `pad` is the absorbing-edge thickness in cells.
#[derive(Clone, Copy, Debug)]
pub struct CbsConfig {
    pub tol: f64,
    pub max_iters: usize,
    pub pad: usize,
    /// Peak imaginary fraction of k² at the outer edge of the absorber.
    pub absorber_strength: f64,
    /// ε = epsilon_factor · max|k² − k₀²|; must be at least 1 for the
    /// iteration to contract.
    pub epsilon_factor: f64,
}

impl Default for CbsConfig {
    fn default() -> Self {
        CbsConfig {
            tol: 1e-12,
            max_iters: 4000,
            pad: 12,
            absorber_strength: 1.0,
            epsilon_factor: 1.05,
        }
    }
}

impl CbsConfig {
    /// Default padding rule: a quarter of the largest wavelength per
    /// side, with a floor that keeps the absorber meaningful on coarse
    /// grids. Oracle-grade comparisons should use thicker pads.
    pub fn defaults_for(model: &VelocityModel, freq: f64) -> Result<Self, ReferenceError> {
        if !(freq > 0.0) || !freq.is_finite() {
            return Err(ReferenceError::Model(ModelError::BadFrequency(freq)));
        }
        let lambda_max = model.c_max() as f64 / freq;
        let pad = ((0.25 * lambda_max / model.h()).ceil() as usize).max(8);
        Ok(CbsConfig { pad, ..CbsConfig::default() })
    }

    pub fn validate(&self) -> Result<(), ReferenceError> {
        if !(self.tol > 0.0) || !self.tol.is_finite() {
            return Err(ReferenceError::BadConfig(format!(
                "tol must be positive, got {}",
                self.tol
            )));
        }
        if self.max_iters == 0 {
            return Err(ReferenceError::BadConfig("max_iters must be at least 1".into()));
        }
        if !(self.epsilon_factor >= 1.0) {
            return Err(ReferenceError::BadConfig(format!(
                "epsilon_factor must be >= 1, got {}",
                self.epsilon_factor
            )));
        }
        if !(self.absorber_strength >= 0.0) || !self.absorber_strength.is_finite() {
            return Err(ReferenceError::BadConfig(format!(
                "absorber_strength must be non-negative, got {}",
                self.absorber_strength
            )));
        }
        Ok(())
    }
}

/// Convergence report for the scattering-series oracle. The history
/// holds the backward error at every checkpoint, in order.
#[derive(Clone, Debug)]
pub struct CbsStats {
    pub iterations: usize,
    pub backward_error: f64,
    pub backward_history: Vec<f64>,
    pub wall_time: Duration,
}

/// Free-space point-source field on a uniform grid: the outgoing
/// spherical wave −amplitude·e^{iωr/c₀}/(4πr) sampled at the nodes. The
/// source node itself carries the limiting value at a quarter-cell
/// radius, the documented regularization of the 1/r singularity.
pub fn analytic_homogeneous(
    nx: usize,
    ny: usize,
    nz: usize,
    h: f64,
    c0: f64,
    freq: f64,
    source: &SourceSpec,
) -> Result<ComplexField, ReferenceError> {
    if !(c0 > 0.0) || !c0.is_finite() {
        return Err(ReferenceError::BadConfig(format!(
            "background wavespeed must be positive, got {c0}"
        )));
    }
    // snap against a throwaway uniform model with matching extent
    let model = VelocityModel::homogeneous(nx, ny, nz, h, c0)?;
    let (si, sj, sk) = source.snap(&model)?;
    if !(freq > 0.0) || !freq.is_finite() {
        return Err(ReferenceError::Model(ModelError::BadFrequency(freq)));
    }
    let k = 2.0 * PI * freq / c0;
    let amp = source.amplitude();
    let mut values = Vec::with_capacity(nx * ny * nz);
    for i in 0..nx {
        for j in 0..ny {
            for kk in 0..nz {
                let dx = i as f64 - si as f64;
                let dy = j as f64 - sj as f64;
                let dz = kk as f64 - sk as f64;
                let mut r = h * (dx * dx + dy * dy + dz * dz).sqrt();
                if r == 0.0 {
                    r = h / 4.0;
                }
                let phase = Complex64::new(0.0, k * r).exp();
                values.push(-amp * phase / (4.0 * PI * r));
            }
        }
    }
    Ok(ComplexField::new(nx, ny, nz, 0, h, freq, values)?)
}

/// In-place 3D FFT over a z-fastest volume, built from per-axis 1D
/// plans. The inverse is unnormalized per axis; `inverse()` applies the
/// overall 1/N scaling itself.
struct Fft3 {
    dims: [usize; 3],
    fwd: [Arc<dyn Fft<f64>>; 3],
    inv: [Arc<dyn Fft<f64>>; 3],
    scratch: Vec<Complex64>,
    gather: Vec<Complex64>,
}

impl Fft3 {
    fn new(dims: [usize; 3]) -> Self {
        let mut planner = FftPlanner::new();
        let fwd = [
            planner.plan_fft_forward(dims[0]),
            planner.plan_fft_forward(dims[1]),
            planner.plan_fft_forward(dims[2]),
        ];
        let inv = [
            planner.plan_fft_inverse(dims[0]),
            planner.plan_fft_inverse(dims[1]),
            planner.plan_fft_inverse(dims[2]),
        ];
        let scratch_len = fwd
            .iter()
            .chain(inv.iter())
            .map(|f| f.get_inplace_scratch_len())
            .max()
            .unwrap_or(0);
        let n = dims[0] * dims[1] * dims[2];
        Fft3 {
            dims,
            fwd,
            inv,
            scratch: vec![Complex64::new(0.0, 0.0); scratch_len],
            gather: vec![Complex64::new(0.0, 0.0); n],
        }
    }

    fn apply_axis(&mut self, data: &mut [Complex64], axis: usize, forward: bool) {
        let [nx, ny, nz] = self.dims;
        let plan = if forward { &self.fwd[axis] } else { &self.inv[axis] };
        match axis {
            2 => {
                // contiguous rows of length nz
                plan.process_with_scratch(data, &mut self.scratch);
            }
            1 => {
                // stride nz, runs of ny; gather rows, transform, scatter
                let mut at = 0;
                for i in 0..nx {
                    for k in 0..nz {
                        let base = i * ny * nz + k;
                        for j in 0..ny {
                            self.gather[at + j] = data[base + j * nz];
                        }
                        at += ny;
                    }
                }
                plan.process_with_scratch(&mut self.gather, &mut self.scratch);
                let mut at = 0;
                for i in 0..nx {
                    for k in 0..nz {
                        let base = i * ny * nz + k;
                        for j in 0..ny {
                            data[base + j * nz] = self.gather[at + j];
                        }
                        at += ny;
                    }
                }
            }
            0 => {
                let mut at = 0;
                for j in 0..ny {
                    for k in 0..nz {
                        let base = j * nz + k;
                        for i in 0..nx {
                            self.gather[at + i] = data[base + i * ny * nz];
                        }
                        at += nx;
                    }
                }
                plan.process_with_scratch(&mut self.gather, &mut self.scratch);
                let mut at = 0;
                for j in 0..ny {
                    for k in 0..nz {
                        let base = j * nz + k;
                        for i in 0..nx {
                            data[base + i * ny * nz] = self.gather[at + i];
                        }
                        at += nx;
                    }
                }
            }
            _ => unreachable!(),
        }
    }

    fn forward(&mut self, data: &mut [Complex64]) {
        self.apply_axis(data, 2, true);
        self.apply_axis(data, 1, true);
        self.apply_axis(data, 0, true);
    }

    fn inverse(&mut self, data: &mut [Complex64]) {
        self.apply_axis(data, 2, false);
        self.apply_axis(data, 1, false);
        self.apply_axis(data, 0, false);
        let scale = 1.0 / (self.dims[0] * self.dims[1] * self.dims[2]) as f64;
        for z in data.iter_mut() {
            *z *= scale;
        }
    }
}

/// Squared spectral wavenumbers along one axis in FFT order.
fn axis_ksq(n: usize, h: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    for j in 0..n {
        let f = if j <= n / 2 { j as f64 } else { j as f64 - n as f64 };
        let k = 2.0 * PI * f / (n as f64 * h);
        out.push(k * k);
    }
    out
}

/// Heterogeneous-medium oracle: solves (∇² + k²(x))·u = s with a
/// preconditioned scattering-series iteration, the Laplacian applied
/// spectrally. The model is embedded in `cfg.pad` cells of
/// edge-replicated medium carrying a cubic imaginary ramp on k² that
/// absorbs outgoing energy and suppresses wraparound. Returns the field
/// cropped back to the model extent.
///
/// Constant-density physics only: models with a buoyancy grid are
/// rejected rather than silently mis-solved.
pub fn cbs_solve(
    model: &VelocityModel,
    freq: f64,
    source: &SourceSpec,
    cfg: &CbsConfig,
) -> Result<(ComplexField, CbsStats), ReferenceError> {
    cfg.validate()?;
    if model.has_buoyancy() {
        return Err(ReferenceError::DegenerateSystem(
            "variable-buoyancy media are not supported by the spectral oracle".into(),
        ));
    }
    if !(freq > 0.0) || !freq.is_finite() {
        return Err(ReferenceError::Model(ModelError::BadFrequency(freq)));
    }
    let (si, sj, sk) = source.snap(model)?;
    let start = Instant::now();

    let pad = cfg.pad;
    let nx = model.nx() + 2 * pad;
    let ny = model.ny() + 2 * pad;
    let nz = model.nz() + 2 * pad;
    let n = nx * ny * nz;
    let h = model.h();
    let omega = 2.0 * PI * freq;

    // complex squared wavenumber on the padded grid: edge-replicated
    // medium times (1 + i·a·t³) with t the normalized absorber depth
    let mut k2 = vec![Complex64::new(0.0, 0.0); n];
    let mut k2_re_min = f64::INFINITY;
    let mut k2_re_max = f64::NEG_INFINITY;
    let depth = |q: usize, lo: usize, hi: usize| -> f64 {
        if pad == 0 {
            return 0.0;
        }
        let d = if q < lo { lo - q } else if q > hi { q - hi } else { 0 };
        d.min(pad) as f64 / pad as f64
    };
    let mut at = 0;
    for i in 0..nx {
        for j in 0..ny {
            for k in 0..nz {
                let c = model.c_clamped(
                    i as i64 - pad as i64,
                    j as i64 - pad as i64,
                    k as i64 - pad as i64,
                ) as f64;
                let kk = omega / c;
                let re = kk * kk;
                k2_re_min = k2_re_min.min(re);
                k2_re_max = k2_re_max.max(re);
                let t = depth(i, pad, nx - 1 - pad)
                    .max(depth(j, pad, ny - 1 - pad))
                    .max(depth(k, pad, nz - 1 - pad));
                let ramp = cfg.absorber_strength * t * t * t;
                k2[at] = Complex64::new(re, re * ramp);
                at += 1;
            }
        }
    }
    let k0sq = 0.5 * (k2_re_min + k2_re_max);
    let max_dev = k2.iter().map(|z| (z - k0sq).norm()).fold(0.0, f64::max);
    let eps = cfg.epsilon_factor * max_dev;
    if eps == 0.0 {
        return Err(ReferenceError::DegenerateSystem(
            "uniform medium with no absorbing layer leaves the iteration stationary; \
             set pad > 0 with a positive absorber_strength"
                .into(),
        ));
    }

    // scattering potential and its preconditioner
    let mut v = Vec::with_capacity(n);
    let mut gamma = Vec::with_capacity(n);
    let shift = Complex64::new(k0sq, eps);
    for z in &k2 {
        let vi = z - shift;
        v.push(vi);
        gamma.push(Complex64::new(0.0, 1.0 / eps) * vi);
    }

    // spectral multipliers
    let kx2 = axis_ksq(nx, h);
    let ky2 = axis_ksq(ny, h);
    let kz2 = axis_ksq(nz, h);
    let ksq_at = |i: usize, j: usize, k: usize| kx2[i] + ky2[j] + kz2[k];

    // discrete delta density at the padded source node
    let mut s = vec![Complex64::new(0.0, 0.0); n];
    let src_idx = ((si + pad) * ny + (sj + pad)) * nz + (sk + pad);
    s[src_idx] = source.amplitude() / (h * h * h);
    let snorm = s[src_idx].norm();

    let mut fft = Fft3::new([nx, ny, nz]);
    let mut u = vec![Complex64::new(0.0, 0.0); n];
    let mut work = vec![Complex64::new(0.0, 0.0); n];

    // backward error with the spectral Laplacian, recomputed from the
    // current iterate rather than from the recurrence
    let backward_error = |u: &[Complex64],
                          work: &mut Vec<Complex64>,
                          fft: &mut Fft3|
     -> f64 {
        work.copy_from_slice(u);
        fft.forward(work);
        let mut at = 0;
        for i in 0..nx {
            for j in 0..ny {
                for k in 0..nz {
                    work[at] *= -ksq_at(i, j, k);
                    at += 1;
                }
            }
        }
        fft.inverse(work);
        let mut acc = 0.0;
        for (idx, w) in work.iter().enumerate() {
            let mut res = w + k2[idx] * u[idx];
            if idx == src_idx {
                res -= s[src_idx];
            }
            acc += res.norm_sqr();
        }
        acc.sqrt() / snorm
    };

    let mut stats = CbsStats {
        iterations: 0,
        backward_error: f64::INFINITY,
        backward_history: Vec::new(),
        wall_time: Duration::ZERO,
    };
    let check_stride = 10;
    let mut converged = false;
    while stats.iterations < cfg.max_iters {
        stats.iterations += 1;
        // u ← u + γ·(G₀(s − V·u) − u)
        for idx in 0..n {
            work[idx] = -v[idx] * u[idx];
        }
        work[src_idx] += s[src_idx];
        fft.forward(&mut work);
        let mut at = 0;
        for i in 0..nx {
            for j in 0..ny {
                for k in 0..nz {
                    work[at] /= shift - ksq_at(i, j, k);
                    at += 1;
                }
            }
        }
        fft.inverse(&mut work);
        for idx in 0..n {
            let du = gamma[idx] * (work[idx] - u[idx]);
            u[idx] += du;
        }

        if stats.iterations % check_stride == 0 || stats.iterations <= 3 {
            let be = backward_error(&u, &mut work, &mut fft);
            stats.backward_history.push(be);
            stats.backward_error = be;
            if !be.is_finite() {
                return Err(ReferenceError::DegenerateSystem(format!(
                    "non-finite backward error at iteration {}",
                    stats.iterations
                )));
            }
            if be <= cfg.tol {
                converged = true;
                break;
            }
        }
    }
    if !converged {
        let be = backward_error(&u, &mut work, &mut fft);
        stats.backward_history.push(be);
        stats.backward_error = be;
        if be > cfg.tol {
            return Err(ReferenceError::NonConvergence {
                iterations: stats.iterations,
                achieved: be,
                tol: cfg.tol,
            });
        }
    }
    stats.wall_time = start.elapsed();

    // crop the absorber away; the result spans exactly the model extent
    let (mx, my, mz) = (model.nx(), model.ny(), model.nz());
    let mut values = Vec::with_capacity(mx * my * mz);
    for i in 0..mx {
        for j in 0..my {
            for k in 0..mz {
                values.push(u[((i + pad) * ny + (j + pad)) * nz + (k + pad)]);
            }
        }
    }
    let field = ComplexField::new(mx, my, mz, 0, h, freq, values)?;
    Ok((field, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn delta_source(x: f64, y: f64, z: f64) -> SourceSpec {
        SourceSpec::new([x, y, z], Complex64::new(1.0, 0.0))
    }

    #[test]
    fn analytic_magnitude_at_one_wavelength() {
        let h = 50.0;
        let c0 = 1500.0;
        let freq = 7.5; // wavelength 200 m = 4 cells
        let src = delta_source(10.0 * h, 10.0 * h, 10.0 * h);
        let f = analytic_homogeneous(21, 21, 21, h, c0, freq, &src).unwrap();
        let lambda = c0 / freq;
        let idx = (14 * 21 + 10) * 21 + 10; // 4 cells along x = one wavelength
        let got = f.values()[idx].norm();
        assert_relative_eq!(got, 1.0 / (4.0 * PI * lambda), max_relative = 1e-12);
    }

    #[test]
    fn analytic_phase_advances_two_pi_per_wavelength() {
        let h = 50.0;
        let c0 = 1500.0;
        let freq = 7.5;
        let src = delta_source(0.0, 0.0, 0.0);
        let f = analytic_homogeneous(17, 3, 3, h, c0, freq, &src).unwrap();
        let at = |i: usize| f.values()[(i * 3) * 3];
        // nodes 4 and 8 cells out lie one wavelength apart on the x axis
        let p1 = at(4);
        let p2 = at(8);
        let dphase = (p2 / p1).arg();
        assert!(dphase.abs() < 1e-12, "phase defect {dphase}");
        // and the magnitude halves
        assert_relative_eq!(p2.norm() * 2.0, p1.norm(), max_relative = 1e-12);
    }

    #[test]
    fn analytic_source_node_uses_quarter_cell_radius() {
        let h = 40.0;
        let src = delta_source(2.0 * h, 2.0 * h, 2.0 * h);
        let f = analytic_homogeneous(5, 5, 5, h, 1500.0, 7.5, &src).unwrap();
        let center = f.values()[(2 * 5 + 2) * 5 + 2];
        let r = h / 4.0;
        let k = 2.0 * PI * 7.5 / 1500.0;
        let want = -Complex64::new(0.0, k * r).exp() / (4.0 * PI * r);
        assert!((center - want).norm() < 1e-14);
    }

    #[test]
    fn fft3_round_trips_and_matches_plane_wave_eigenvector() {
        let dims = [6usize, 5, 4];
        let n = dims[0] * dims[1] * dims[2];
        let mut fft = Fft3::new(dims);
        // random-ish deterministic data
        let orig: Vec<Complex64> = (0..n)
            .map(|i| {
                Complex64::new(((i * 37 + 11) % 17) as f64 - 8.0, ((i * 53 + 3) % 13) as f64 - 6.0)
            })
            .collect();
        let mut data = orig.clone();
        fft.forward(&mut data);
        fft.inverse(&mut data);
        for (a, b) in data.iter().zip(&orig) {
            assert!((a - b).norm() < 1e-12);
        }
        // a single Fourier mode transforms to a single spike
        let (mi, mj, mk) = (2usize, 1usize, 3usize);
        let mut mode = Vec::with_capacity(n);
        for i in 0..dims[0] {
            for j in 0..dims[1] {
                for k in 0..dims[2] {
                    let ph = 2.0 * PI
                        * (mi * i) as f64 / dims[0] as f64
                        + 2.0 * PI * (mj * j) as f64 / dims[1] as f64
                        + 2.0 * PI * (mk * k) as f64 / dims[2] as f64;
                    mode.push(Complex64::new(0.0, ph).exp());
                }
            }
        }
        fft.forward(&mut mode);
        for i in 0..dims[0] {
            for j in 0..dims[1] {
                for k in 0..dims[2] {
                    let v = mode[(i * dims[1] + j) * dims[2] + k];
                    let want = if (i, j, k) == (mi, mj, mk) { n as f64 } else { 0.0 };
                    assert!(
                        (v - want).norm() < 1e-9,
                        "bin ({i},{j},{k}) = {v}, want {want}"
                    );
                }
            }
        }
    }

    #[test]
    fn config_validation_rejects_bad_fields() {
        let mut cfg = CbsConfig::default();
        cfg.tol = 0.0;
        assert!(cfg.validate().is_err());
        cfg = CbsConfig::default();
        cfg.max_iters = 0;
        assert!(cfg.validate().is_err());
        cfg = CbsConfig::default();
        cfg.epsilon_factor = 0.9;
        assert!(cfg.validate().is_err());
        cfg = CbsConfig::default();
        cfg.absorber_strength = -1.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn uniform_medium_without_absorber_is_degenerate() {
        let model = VelocityModel::homogeneous(8, 8, 8, 50.0, 1500.0).unwrap();
        let src = delta_source(150.0, 150.0, 150.0);
        let cfg = CbsConfig { pad: 0, ..CbsConfig::default() };
        match cbs_solve(&model, 7.5, &src, &cfg) {
            Err(ReferenceError::DegenerateSystem(_)) => {}
            other => panic!("expected degenerate-system error, got {other:?}"),
        }
    }

    #[test]
    fn buoyancy_models_are_rejected() {
        let n = 4usize;
        let c = vec![1500.0f32; n * n * n];
        let b = vec![2.0f32; n * n * n];
        let model = VelocityModel::with_buoyancy(n, n, n, 50.0, c, b).unwrap();
        let src = delta_source(100.0, 100.0, 100.0);
        match cbs_solve(&model, 7.5, &src, &CbsConfig::default()) {
            Err(ReferenceError::DegenerateSystem(_)) => {}
            other => panic!("expected rejection, got {other:?}"),
        }
    }

    #[test]
    fn quarter_wavelength_padding_rule() {
        let model = VelocityModel::homogeneous(16, 16, 16, 50.0, 1500.0).unwrap();
        // wavelength 400 m = 8 cells; a quarter is 2, floored to 8
        let cfg = CbsConfig::defaults_for(&model, 3.75).unwrap();
        assert_eq!(cfg.pad, 8);
        // slower medium, lower frequency: 3000/1.5 = 2000 m = 40 cells
        let slow = VelocityModel::homogeneous(16, 16, 16, 50.0, 3000.0).unwrap();
        let cfg = CbsConfig::defaults_for(&slow, 1.5).unwrap();
        assert_eq!(cfg.pad, 10);
    }
}
