//! Impedance-matrix assembly: A = M + S on the 27-point blended stencil.
//!
//! The stiffness S is a weighted sum of second-order parsimonious
//! staggered-grid discretizations of ∇·(b∇) built on eight coordinate
//! systems spanning the 3×3×3 neighborhood: the Cartesian axes, three
//! 45°-rotated systems (one per rotation axis), and four systems of
//! body diagonals. The mass M distributes ω²/κ over the four node
//! classes of the neighborhood. Absorbing layers enter as reciprocal
//! coordinate-stretch factors on every directional derivative.
//!
//! Weights come from a fixed vector applied everywhere or from a
//! wavelength-adaptive table consulted per collocation node.

use crate::dispersion::{DispersionError, WeightTable, WeightVector};
use crate::model::{ModelError, SourceSpec, VelocityModel};
use crate::pml::{PmlError, PmlProfile, Stretch};
use num_complex::Complex64;
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AssemblyError {
    #[error("frequency must be positive and finite, got {0}")]
    BadFrequency(f64),
    #[error("invalid stencil weights: {0}")]
    InvalidWeights(#[from] DispersionError),
    #[error(transparent)]
    Pml(#[from] PmlError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("node ({0}, {1}, {2}) lies outside the padded grid")]
    NodeOutsideGrid(i64, i64, i64),
    #[error("malformed compressed-row structure: {0}")]
    InvalidCsr(String),
    #[error("non-finite matrix coefficient at padded node ({i}, {j}, {k})")]
    NonFiniteCoefficient { i: usize, j: usize, k: usize },
}

/// How the ω²/κ mass term samples the bulk modulus.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum MassMode {
    /// κ evaluated at each contributing node (bilinearity-preserving).
    #[default]
    HeterogeneousKappa,
    /// κ evaluated at the collocation node for all 27 contributions.
    CollocationKappa,
}

/// Which weights drive each row of the assembled operator.
#[derive(Clone, Copy, Debug)]
pub enum StencilVariant<'t> {
    /// Fixed weights tuned for the coarsest intended sampling (G = 4).
    G4(&'t WeightVector),
    /// Fixed compromise weights tuned jointly across a sampling band.
    Gm(&'t WeightVector),
    /// Per-row table lookup at the collocation node's local sampling.
    Ga(&'t WeightTable),
    /// Per-row table lookup averaged over the row's 27 stencil nodes,
    /// renormalized to restore the unit sum constraints.
    Gam(&'t WeightTable),
}

impl StencilVariant<'_> {
    pub fn tag(&self) -> &'static str {
        match self {
            StencilVariant::G4(_) => "g4",
            StencilVariant::Gm(_) => "gm",
            StencilVariant::Ga(_) => "ga",
            StencilVariant::Gam(_) => "gam",
        }
    }
}

/// One of the eight elementary coordinate systems of the blend.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CoordinateSystem {
    Cartesian,
    Rotated45X,
    Rotated45Y,
    Rotated45Z,
    Diagonal1,
    Diagonal2,
    Diagonal3,
    Diagonal4,
}

impl CoordinateSystem {
    pub const ALL: [CoordinateSystem; 8] = [
        CoordinateSystem::Cartesian,
        CoordinateSystem::Rotated45X,
        CoordinateSystem::Rotated45Y,
        CoordinateSystem::Rotated45Z,
        CoordinateSystem::Diagonal1,
        CoordinateSystem::Diagonal2,
        CoordinateSystem::Diagonal3,
        CoordinateSystem::Diagonal4,
    ];
}

/// The four body diagonals; diagonal system k uses the three others.
const DIAGONALS: [[i64; 3]; 4] = [[1, 1, 1], [1, 1, -1], [1, -1, 1], [1, -1, -1]];

/// Axis sets of the orthogonal systems (cartesian and 45°-rotated).
fn orthogonal_dirs(system: CoordinateSystem) -> Option<[[i64; 3]; 3]> {
    match system {
        CoordinateSystem::Cartesian => Some([[1, 0, 0], [0, 1, 0], [0, 0, 1]]),
        CoordinateSystem::Rotated45X => Some([[1, 0, 0], [0, 1, 1], [0, -1, 1]]),
        CoordinateSystem::Rotated45Y => Some([[0, 1, 0], [1, 0, 1], [1, 0, -1]]),
        CoordinateSystem::Rotated45Z => Some([[0, 0, 1], [1, 1, 0], [-1, 1, 0]]),
        _ => None,
    }
}

fn diagonal_dirs(system: CoordinateSystem) -> Option<[[i64; 3]; 3]> {
    let omit = match system {
        CoordinateSystem::Diagonal1 => 0,
        CoordinateSystem::Diagonal2 => 1,
        CoordinateSystem::Diagonal3 => 2,
        CoordinateSystem::Diagonal4 => 3,
        _ => return None,
    };
    let mut dirs = [[0i64; 3]; 3];
    let mut w = 0;
    for (k, d) in DIAGONALS.iter().enumerate() {
        if k != omit {
            dirs[w] = *d;
            w += 1;
        }
    }
    Some(dirs)
}

/// Directional-derivative combination matrix expressing the Laplacian in
/// a non-orthogonal body-diagonal frame: Δ = Σ m_ij ∂_ui ∂_uj with unit
/// directions u_i. Diagonal entries 3/2; off-diagonal −(3/4)·sign(d_i·d_j).
fn diagonal_mix(dirs: &[[i64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut m = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            if i == j {
                m[i][j] = 1.5;
            } else {
                let dot: i64 = (0..3).map(|c| dirs[i][c] * dirs[j][c]).sum();
                m[i][j] = -0.75 * if dot > 0 { 1.0 } else { -1.0 };
            }
        }
    }
    m
}

/// Linear slot of a neighborhood offset, lexicographic in (dx, dy, dz).
#[inline]
fn slot(off: [i64; 3]) -> usize {
    (((off[0] + 1) * 3 + (off[1] + 1)) * 3 + (off[2] + 1)) as usize
}

/// Offset of a linear slot; slot 13 is the center.
#[inline]
pub fn stencil_offset(s: usize) -> [i64; 3] {
    [(s / 9) as i64 - 1, ((s / 3) % 3) as i64 - 1, (s % 3) as i64 - 1]
}

const CENTER: usize = 13;

/// Multiplies by a stretch factor, skipping the arithmetic entirely when
/// the factor is the exact unit so undamped regions keep bit-identical
/// coefficients with or without an absorbing layer.
#[inline]
fn stretch_scale(v: Complex64, f: Complex64) -> Complex64 {
    if f.re == 1.0 && f.im == 0.0 {
        v
    } else {
        v * f
    }
}

struct RowCtx<'a> {
    model: &'a VelocityModel,
    stretch: Stretch<'a>,
    pad: i64,
    h: f64,
}

impl RowCtx<'_> {
    #[inline]
    fn b_node(&self, p: [i64; 3]) -> f64 {
        self.model.b_clamped(p[0] - self.pad, p[1] - self.pad, p[2] - self.pad)
    }

    #[inline]
    fn kappa_node(&self, p: [i64; 3]) -> f64 {
        self.model.kappa_clamped(p[0] - self.pad, p[1] - self.pad, p[2] - self.pad)
    }

    #[inline]
    fn c_node(&self, p: [i64; 3]) -> f64 {
        self.model.c_clamped(p[0] - self.pad, p[1] - self.pad, p[2] - self.pad)
    }
}

fn unit(o: [i64; 3]) -> [f64; 3] {
    let n = (((o[0] * o[0] + o[1] * o[1] + o[2] * o[2]) as f64).sqrt()).recip();
    [o[0] as f64 * n, o[1] as f64 * n, o[2] as f64 * n]
}

/// Composite staggered ∂_u (b/ξ ∂_u) along one direction: second-order
/// centered first differences at half offsets, buoyancy averaged over the
/// two nodes each difference connects, a reciprocal stretch per
/// derivative at its own evaluation point. Every contribution adds ±the
/// same coefficient to a neighbor and the center, so row sums vanish in
/// exact arithmetic.
fn accumulate_direction(
    acc: &mut [Complex64; 27],
    ctx: &RowCtx,
    node: [i64; 3],
    o: [i64; 3],
    weight: f64,
) {
    let len2 = (o[0] * o[0] + o[1] * o[1] + o[2] * o[2]) as f64 * ctx.h * ctx.h;
    let u = unit(o);
    let posf = [node[0] as f64, node[1] as f64, node[2] as f64];
    let f_out = ctx.stretch.inv_xi_dir(u, posf);
    for sgn in [1i64, -1] {
        let nb = [node[0] + sgn * o[0], node[1] + sgn * o[1], node[2] + sgn * o[2]];
        let mid = [
            posf[0] + 0.5 * (sgn * o[0]) as f64,
            posf[1] + 0.5 * (sgn * o[1]) as f64,
            posf[2] + 0.5 * (sgn * o[2]) as f64,
        ];
        let b_mid = 0.5 * (ctx.b_node(node) + ctx.b_node(nb));
        let f_in = ctx.stretch.inv_xi_dir(u, mid);
        let c = stretch_scale(
            stretch_scale(Complex64::new(weight * b_mid / len2, 0.0), f_in),
            f_out,
        );
        acc[slot([sgn * o[0], sgn * o[1], sgn * o[2]])] += c;
        acc[CENTER] -= c;
    }
}

/// Composite staggered cross derivative ∂_ui (b/ξ ∂_uj) for a
/// body-diagonal pair: the outer difference at half offsets of o_i, the
/// inner at half offsets of o_j, landing on integer neighborhood nodes.
/// Contributions come in ± pairs, so row sums vanish exactly.
fn accumulate_cross(
    acc: &mut [Complex64; 27],
    ctx: &RowCtx,
    node: [i64; 3],
    oi: [i64; 3],
    oj: [i64; 3],
    weight: f64,
) {
    let li2 = (oi[0] * oi[0] + oi[1] * oi[1] + oi[2] * oi[2]) as f64;
    let lj2 = (oj[0] * oj[0] + oj[1] * oj[1] + oj[2] * oj[2]) as f64;
    let inv_ll = ((li2 * lj2).sqrt() * ctx.h * ctx.h).recip();
    let ui = unit(oi);
    let uj = unit(oj);
    let posf = [node[0] as f64, node[1] as f64, node[2] as f64];
    let f_out = ctx.stretch.inv_xi_dir(ui, posf);
    for sgn in [1i64, -1] {
        // offsets (sgn·o_i ± o_j)/2 are integer grid vectors
        let p_plus = [
            (sgn * oi[0] + oj[0]) / 2,
            (sgn * oi[1] + oj[1]) / 2,
            (sgn * oi[2] + oj[2]) / 2,
        ];
        let p_minus = [
            (sgn * oi[0] - oj[0]) / 2,
            (sgn * oi[1] - oj[1]) / 2,
            (sgn * oi[2] - oj[2]) / 2,
        ];
        let mid = [
            posf[0] + 0.5 * (sgn * oi[0]) as f64,
            posf[1] + 0.5 * (sgn * oi[1]) as f64,
            posf[2] + 0.5 * (sgn * oi[2]) as f64,
        ];
        let b_mid = 0.5
            * (ctx.b_node([node[0] + p_plus[0], node[1] + p_plus[1], node[2] + p_plus[2]])
                + ctx.b_node([node[0] + p_minus[0], node[1] + p_minus[1], node[2] + p_minus[2]]));
        let f_in = ctx.stretch.inv_xi_dir(uj, mid);
        let c = stretch_scale(
            stretch_scale(Complex64::new(sgn as f64 * weight * b_mid * inv_ll, 0.0), f_in),
            f_out,
        );
        acc[slot(p_plus)] += c;
        acc[slot(p_minus)] -= c;
    }
}

/// Accumulates one elementary system's ∇·(b∇) discretization scaled by
/// `weight` into the 27-slot neighborhood accumulator.
fn accumulate_system(
    acc: &mut [Complex64; 27],
    ctx: &RowCtx,
    node: [i64; 3],
    system: CoordinateSystem,
    weight: f64,
) {
    if let Some(dirs) = orthogonal_dirs(system) {
        for o in dirs {
            accumulate_direction(acc, ctx, node, o, weight);
        }
    } else if let Some(dirs) = diagonal_dirs(system) {
        let m = diagonal_mix(&dirs);
        for i in 0..3 {
            accumulate_direction(acc, ctx, node, dirs[i], weight * m[i][i]);
            for j in 0..3 {
                if i != j {
                    accumulate_cross(acc, ctx, node, dirs[i], dirs[j], weight * m[i][j]);
                }
            }
        }
    }
}

/// One system's stiffness row at a node, as 27 neighborhood coefficients
/// in lexicographic offset order. Entries whose neighbor falls outside
/// the padded grid are zeroed (homogeneous Dirichlet ghost closure).
#[derive(Clone, Debug)]
pub struct StencilRow {
    vals: [Complex64; 27],
}

impl StencilRow {
    pub fn values(&self) -> &[Complex64; 27] {
        &self.vals
    }

    pub fn value_at(&self, off: [i64; 3]) -> Complex64 {
        self.vals[slot(off)]
    }
}

/// Builds one elementary system's stiffness row fragment at a padded-grid
/// node. Boundary rows keep their center contributions and drop couplings
/// to ghost nodes (Dirichlet closure); the medium is edge-replicated into
/// the pad.
pub fn elementary_stiffness(
    system: CoordinateSystem,
    node: [usize; 3],
    model: &VelocityModel,
    pml: &PmlProfile,
    freq: f64,
) -> Result<StencilRow, AssemblyError> {
    if !(freq > 0.0) || !freq.is_finite() {
        return Err(AssemblyError::BadFrequency(freq));
    }
    let pad = pml.npml();
    let dims = [model.nx() + 2 * pad, model.ny() + 2 * pad, model.nz() + 2 * pad];
    if node[0] >= dims[0] || node[1] >= dims[1] || node[2] >= dims[2] {
        return Err(AssemblyError::NodeOutsideGrid(node[0] as i64, node[1] as i64, node[2] as i64));
    }
    let omega = 2.0 * std::f64::consts::PI * freq;
    let ctx = RowCtx {
        model,
        stretch: Stretch::new(model, pml, omega),
        pad: pad as i64,
        h: model.h(),
    };
    let mut acc = [Complex64::new(0.0, 0.0); 27];
    let nodei = [node[0] as i64, node[1] as i64, node[2] as i64];
    accumulate_system(&mut acc, &ctx, nodei, system, 1.0);
    for s in 0..27 {
        let off = stencil_offset(s);
        let p = [nodei[0] + off[0], nodei[1] + off[1], nodei[2] + off[2]];
        let inside = (0..3).all(|a| p[a] >= 0 && p[a] < dims[a] as i64);
        if !inside {
            acc[s] = Complex64::new(0.0, 0.0);
        }
    }
    Ok(StencilRow { vals: acc })
}

/// Complex sparse impedance matrix in compressed-row form, with the grid
/// geometry it was assembled on.
#[derive(Clone, Debug)]
pub struct SparseOperator {
    n: usize,
    dims: [usize; 3],
    pad: usize,
    h: f64,
    freq: f64,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<Complex64>,
    diag: Vec<Complex64>,
    table_clamp_count: usize,
}

impl SparseOperator {
    /// Builds an operator from raw compressed-row parts. Columns must be
    /// strictly increasing within each row; `dims` must multiply to the
    /// row count. Intended for ingesting externally produced systems and
    /// for solver tests; [`assemble`] is the normal constructor.
    #[allow(clippy::too_many_arguments)]
    pub fn from_csr(
        dims: [usize; 3],
        pad: usize,
        h: f64,
        freq: f64,
        row_ptr: Vec<usize>,
        cols: Vec<u32>,
        vals: Vec<Complex64>,
    ) -> Result<Self, AssemblyError> {
        let n = dims[0] * dims[1] * dims[2];
        if row_ptr.len() != n + 1
            || row_ptr[0] != 0
            || *row_ptr.last().unwrap() != cols.len()
            || cols.len() != vals.len()
        {
            return Err(AssemblyError::InvalidCsr("pointer/length mismatch".into()));
        }
        let mut diag = vec![Complex64::new(0.0, 0.0); n];
        for r in 0..n {
            let span = row_ptr[r]..row_ptr[r + 1];
            let mut prev: Option<u32> = None;
            for idx in span {
                let c = cols[idx];
                if c as usize >= n || prev.is_some_and(|p| p >= c) {
                    return Err(AssemblyError::InvalidCsr(format!(
                        "row {r}: column {c} out of range or out of order"
                    )));
                }
                prev = Some(c);
                if c as usize == r {
                    diag[r] = vals[idx];
                }
            }
        }
        Ok(SparseOperator {
            n,
            dims,
            pad,
            h,
            freq,
            row_ptr,
            cols,
            vals,
            diag,
            table_clamp_count: 0,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Padded grid dims (nx, ny, nz).
    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn pad(&self) -> usize {
        self.pad
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn freq(&self) -> f64 {
        self.freq
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    /// Number of rows whose table lookup clamped to the table edge.
    pub fn table_clamp_count(&self) -> usize {
        self.table_clamp_count
    }

    pub fn row(&self, r: usize) -> (&[u32], &[Complex64]) {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        (&self.cols[span.clone()], &self.vals[span])
    }

    pub fn diag(&self) -> &[Complex64] {
        &self.diag
    }

    /// y = A·x (serial, deterministic).
    pub fn matvec(&self, x: &[Complex64], y: &mut [Complex64]) {
        assert_eq!(x.len(), self.n, "matvec input length");
        assert_eq!(y.len(), self.n, "matvec output length");
        for r in 0..self.n {
            let mut s = Complex64::new(0.0, 0.0);
            for idx in self.row_ptr[r]..self.row_ptr[r + 1] {
                s += self.vals[idx] * x[self.cols[idx] as usize];
            }
            y[r] = s;
        }
    }

    /// True when every structural entry (r, c) has a partner (c, r).
    pub fn pattern_is_symmetric(&self) -> bool {
        for r in 0..self.n {
            let (cols, _) = self.row(r);
            for &c in cols {
                let (pc, _) = self.row(c as usize);
                if pc.binary_search(&(r as u32)).is_err() {
                    return false;
                }
            }
        }
        true
    }

    /// Writes the matrix in Matrix Market coordinate complex general
    /// format (1-based indices).
    pub fn write_matrix_market<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "%%MatrixMarket matrix coordinate complex general")?;
        writeln!(out, "% helmholtz impedance matrix, {} x {} x {} padded grid",
            self.dims[0], self.dims[1], self.dims[2])?;
        writeln!(out, "{} {} {}", self.n, self.n, self.nnz())?;
        for r in 0..self.n {
            for idx in self.row_ptr[r]..self.row_ptr[r + 1] {
                writeln!(
                    out,
                    "{} {} {:.16e} {:.16e}",
                    r + 1,
                    self.cols[idx] + 1,
                    self.vals[idx].re,
                    self.vals[idx].im
                )?;
            }
        }
        Ok(())
    }
}

fn lookup_counted(table: &WeightTable, g: f64, clamps: &mut usize) -> WeightVector {
    let inv_g = 1.0 / g;
    let half = 0.5 * table.inv_g_step();
    if inv_g < table.inv_g_min() - half || inv_g > table.inv_g_max() + half {
        *clamps += 1;
    }
    *table.lookup(g)
}

/// Row weights for the averaged-adaptive variant: the mean over the 27
/// neighborhood nodes, taken as deviations from the center lookup so a
/// uniform neighborhood reproduces the center row bit-exactly, then
/// renormalized through the dependent-weight back-substitution.
fn averaged_weights(
    table: &WeightTable,
    ctx: &RowCtx,
    node: [i64; 3],
    inv_fh: f64,
    clamps: &mut usize,
) -> WeightVector {
    let g_center = ctx.c_node(node) * inv_fh;
    let w_ref = lookup_counted(table, g_center, clamps);
    let mut dev = [0.0f64; 5];
    for s in 0..27 {
        let off = stencil_offset(s);
        let p = [node[0] + off[0], node[1] + off[1], node[2] + off[2]];
        let w = lookup_counted(table, ctx.c_node(p) * inv_fh, clamps);
        dev[0] += w.ws1 - w_ref.ws1;
        dev[1] += w.ws2 - w_ref.ws2;
        dev[2] += w.wm0 - w_ref.wm0;
        dev[3] += w.wm1 - w_ref.wm1;
        dev[4] += w.wm2 - w_ref.wm2;
    }
    WeightVector::from_independent(
        w_ref.ws1 + dev[0] / 27.0,
        w_ref.ws2 + dev[1] / 27.0,
        w_ref.wm0 + dev[2] / 27.0,
        w_ref.wm1 + dev[3] / 27.0,
        w_ref.wm2 + dev[4] / 27.0,
    )
}

/// Assembles the impedance matrix A = M + S on the PML-padded grid.
///
/// The stiffness blend is `ws1·S₁ + (ws2/3)·ΣS₂ + (ws3/4)·ΣS₃` over the
/// eight elementary systems; the mass distributes ω²/κ with shares
/// (wm0, wm1/6, wm2/12, wm3/8) over the center, face, edge, and corner
/// node classes. Ghost couplings outside the padded grid are dropped
/// (homogeneous Dirichlet behind the layer).
pub fn assemble(
    model: &VelocityModel,
    freq: f64,
    pml: &PmlProfile,
    variant: StencilVariant,
    mass_mode: MassMode,
) -> Result<SparseOperator, AssemblyError> {
    if !(freq > 0.0) || !freq.is_finite() {
        return Err(AssemblyError::BadFrequency(freq));
    }
    match variant {
        StencilVariant::G4(w) | StencilVariant::Gm(w) => w.validate()?,
        StencilVariant::Ga(_) | StencilVariant::Gam(_) => {}
    }
    let pad = pml.npml();
    let dims = [model.nx() + 2 * pad, model.ny() + 2 * pad, model.nz() + 2 * pad];
    let n = dims[0] * dims[1] * dims[2];
    let omega = 2.0 * std::f64::consts::PI * freq;
    let omega2 = omega * omega;
    let inv_fh = 1.0 / (freq * model.h());
    let ctx = RowCtx {
        model,
        stretch: Stretch::new(model, pml, omega),
        pad: pad as i64,
        h: model.h(),
    };

    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut cols: Vec<u32> = Vec::with_capacity(n * 27);
    let mut vals: Vec<Complex64> = Vec::with_capacity(n * 27);
    let mut diag = vec![Complex64::new(0.0, 0.0); n];
    let mut clamps = 0usize;
    row_ptr.push(0);

    for ix in 0..dims[0] {
        for iy in 0..dims[1] {
            for iz in 0..dims[2] {
                let node = [ix as i64, iy as i64, iz as i64];
                let w = match variant {
                    StencilVariant::G4(w) | StencilVariant::Gm(w) => *w,
                    StencilVariant::Ga(t) => {
                        lookup_counted(t, ctx.c_node(node) * inv_fh, &mut clamps)
                    }
                    StencilVariant::Gam(t) => {
                        averaged_weights(t, &ctx, node, inv_fh, &mut clamps)
                    }
                };

                let mut acc = [Complex64::new(0.0, 0.0); 27];
                accumulate_system(&mut acc, &ctx, node, CoordinateSystem::Cartesian, w.ws1);
                let s2 = w.ws2 / 3.0;
                accumulate_system(&mut acc, &ctx, node, CoordinateSystem::Rotated45X, s2);
                accumulate_system(&mut acc, &ctx, node, CoordinateSystem::Rotated45Y, s2);
                accumulate_system(&mut acc, &ctx, node, CoordinateSystem::Rotated45Z, s2);
                let s3 = w.ws3 / 4.0;
                accumulate_system(&mut acc, &ctx, node, CoordinateSystem::Diagonal1, s3);
                accumulate_system(&mut acc, &ctx, node, CoordinateSystem::Diagonal2, s3);
                accumulate_system(&mut acc, &ctx, node, CoordinateSystem::Diagonal3, s3);
                accumulate_system(&mut acc, &ctx, node, CoordinateSystem::Diagonal4, s3);

                let kappa_center = ctx.kappa_node(node);
                for s in 0..27 {
                    let off = stencil_offset(s);
                    let class = off[0].abs() + off[1].abs() + off[2].abs();
                    let share = match class {
                        0 => w.wm0,
                        1 => w.wm1 / 6.0,
                        2 => w.wm2 / 12.0,
                        _ => w.wm3 / 8.0,
                    };
                    let kappa = match mass_mode {
                        MassMode::HeterogeneousKappa => {
                            let p = [node[0] + off[0], node[1] + off[1], node[2] + off[2]];
                            ctx.kappa_node(p)
                        }
                        MassMode::CollocationKappa => kappa_center,
                    };
                    acc[s] += Complex64::new(share * omega2 / kappa, 0.0);
                }

                let row = (ix * dims[1] + iy) * dims[2] + iz;
                for s in 0..27 {
                    let off = stencil_offset(s);
                    let p = [node[0] + off[0], node[1] + off[1], node[2] + off[2]];
                    let inside = (0..3).all(|a| p[a] >= 0 && p[a] < dims[a] as i64);
                    if !inside {
                        continue;
                    }
                    let v = acc[s];
                    if !v.re.is_finite() || !v.im.is_finite() {
                        return Err(AssemblyError::NonFiniteCoefficient { i: ix, j: iy, k: iz });
                    }
                    let col = ((p[0] as usize * dims[1]) + p[1] as usize) * dims[2] + p[2] as usize;
                    cols.push(col as u32);
                    vals.push(v);
                    if col == row {
                        diag[row] = v;
                    }
                }
                row_ptr.push(cols.len());
            }
        }
    }

    Ok(SparseOperator {
        n,
        dims,
        pad,
        h: model.h(),
        freq,
        row_ptr,
        cols,
        vals,
        diag,
        table_clamp_count: clamps,
    })
}

/// Point-source right-hand side on the padded grid: a single entry
/// amplitude/h³ at the snapped source node. Sources must snap inside the
/// interior region; positions reaching into the absorbing pad are
/// rejected.
pub fn build_rhs(
    model: &VelocityModel,
    pml: &PmlProfile,
    source: &SourceSpec,
) -> Result<Vec<Complex64>, AssemblyError> {
    let (i, j, k) = source.snap(model)?;
    let pad = pml.npml();
    let dims = [model.nx() + 2 * pad, model.ny() + 2 * pad, model.nz() + 2 * pad];
    let mut rhs = vec![Complex64::new(0.0, 0.0); dims[0] * dims[1] * dims[2]];
    let idx = (((i + pad) * dims[1]) + (j + pad)) * dims[2] + (k + pad);
    let h3 = model.h() * model.h() * model.h();
    rhs[idx] = source.amplitude() / h3;
    Ok(rhs)
}

/// Padded linear index of a source's snapped node, for masking and
/// reporting.
pub fn source_index(
    model: &VelocityModel,
    pml: &PmlProfile,
    source: &SourceSpec,
) -> Result<usize, AssemblyError> {
    let (i, j, k) = source.snap(model)?;
    let pad = pml.npml();
    let dims = [model.nx() + 2 * pad, model.ny() + 2 * pad, model.nz() + 2 * pad];
    Ok((((i + pad) * dims[1]) + (j + pad)) * dims[2] + (k + pad))
}
