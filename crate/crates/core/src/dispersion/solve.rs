//! Least-squares weight fitting: per-G, joint, and Tikhonov-smoothed tables.

use super::table::WeightTable;
use super::{h_row, AngleGrid, DispersionError, WeightVector};
use crate::linalg;
use rayon::prelude::*;

/// Relative eigenvalue cutoff below which normal-equation directions are
/// treated as rank deficiency (minimum-norm solution on the rest).
const RANK_TOL: f64 = 1e-12;

/// Exact linearization row of the unit-velocity condition.
///
/// Identical to [`h_row`] except for a constant `+1/2` in the second
/// column. Expanding `ws1(3−C) + (ws2/3)(6−C−B) + (ws3/2)(3−3A+B−C)
/// = (2π²/G²)·J` with `ws3` and `wm3` eliminated, the ws2 coefficient
/// works out to `½(1 + 3A − (5/3)B + (1/3)C)`. The constant matters: at
/// `1/G → 0` we have `A = 1, B = C = 3` and every column and the right-hand
/// side of the system must vanish, because any valid weight vector is
/// consistent in the continuum. The tabulated form misses that by `−1/2`
/// in the ws2 column, and fitting against it would spuriously drive ws2 to
/// zero as the grid refines.
pub(crate) fn design_row(g: f64, theta: f64, phi: f64) -> Result<([f64; 5], f64), DispersionError> {
    let (mut h, rhs) = h_row(g, theta, phi)?;
    h[1] += 0.5;
    Ok((h, rhs))
}

fn weights_from_solution(x: &[f64]) -> WeightVector {
    // Unknown ordering: [ws1, ws2, wm0, m1, m2] with per-node mass weights
    // m1 = wm1/6, m2 = wm2/12.
    WeightVector::from_independent(x[0], x[1], x[2], 6.0 * x[3], 12.0 * x[4])
}

/// Stacks design rows for every (G, θ, φ) combination, G-major.
fn stack_rows(gs: &[f64], angles: &AngleGrid) -> Result<(Vec<f64>, Vec<f64>), DispersionError> {
    let mut a = Vec::with_capacity(gs.len() * angles.len() * 5);
    let mut b = Vec::with_capacity(gs.len() * angles.len());
    for &g in gs {
        for (theta, phi) in angles.pairs() {
            let (h, rhs) = design_row(g, theta, phi)?;
            a.extend_from_slice(&h);
            b.push(rhs);
        }
    }
    Ok((a, b))
}

/// Fits the five independent weights so that `ṽ ≈ 1` over the angle grid
/// at a single sampling ratio `G`.
///
/// Solves the stacked linearized conditions in the least-squares sense;
/// rank-deficient systems (degenerate angle grids, including a single
/// angle pair) yield the minimum-norm solution, which fits the available
/// rows exactly when they are consistent. The dependent weights are
/// recovered by back-substitution, so the sum constraints hold by
/// construction.
pub fn solve_weights_single(g: f64, angles: &AngleGrid) -> Result<WeightVector, DispersionError> {
    solve_weights_joint(&[g], angles)
}

/// Fits one weight vector against several sampling ratios at once.
///
/// The result minimizes the stacked residual over all `(G, θ, φ)`
/// combinations; with `gs = {4, 6, 8, 10}` this is the fixed compromise
/// weight set for coarse-to-medium sampling.
pub fn solve_weights_joint(gs: &[f64], angles: &AngleGrid) -> Result<WeightVector, DispersionError> {
    if gs.is_empty() {
        return Err(DispersionError::EmptyGList);
    }
    let (a, b) = stack_rows(gs, angles)?;
    let x = linalg::min_norm_lstsq(b.len(), 5, &a, &b, RANK_TOL);
    let w = weights_from_solution(&x);
    w.validate()?;
    Ok(w)
}

/// Uniform grid of inverse sampling ratios `1/G` for table construction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InvGGrid {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl InvGGrid {
    /// The default table range: `1/G` from 0.001 to 0.4 in steps of 0.001
    /// (400 rows). The lower bound stays off zero to avoid the degenerate
    /// continuum row; the upper bound keeps `G = 2.5` above the Nyquist
    /// limit.
    pub fn default_table() -> Self {
        InvGGrid { min: 0.001, max: 0.4, step: 0.001 }
    }

    /// Number of grid nodes.
    pub fn len(&self) -> Result<usize, DispersionError> {
        if !(self.step > 0.0) || !(self.min > 0.0) || !(self.max < 0.5) || self.max < self.min {
            return Err(DispersionError::InvalidInvGGrid);
        }
        Ok(((self.max - self.min) / self.step).round() as usize + 1)
    }

    /// The tabulated `1/G` values, `min + i·step`.
    pub fn values(&self) -> Result<Vec<f64>, DispersionError> {
        let n = self.len()?;
        Ok((0..n).map(|i| self.min + i as f64 * self.step).collect())
    }
}

/// Default Tikhonov weight for [`solve_weights_adaptive`].
///
/// Chosen so that `λ‖L‖²` is about 1% of the mean diagonal of the
/// block-diagonal normal matrix `HᵀH`; the first-difference smoother
/// satisfies `‖L‖² ≤ 4`. This couples neighboring rows just enough to
/// remove jitter without biasing each row away from its own minimizer.
pub fn default_lambda(grid: &InvGGrid, angles: &AngleGrid) -> Result<f64, DispersionError> {
    let invgs = grid.values()?;
    let mut diag_sum = 0.0;
    let mut count = 0usize;
    for &inv_g in &invgs {
        for (theta, phi) in angles.pairs() {
            let (h, _) = design_row(1.0 / inv_g, theta, phi)?;
            diag_sum += h.iter().map(|v| v * v).sum::<f64>();
            count += 5;
        }
    }
    Ok(0.01 * (diag_sum / count as f64) / 4.0)
}

/// Fits a full weight table over a uniform `1/G` grid with Tikhonov
/// smoothing across neighboring rows.
///
/// Minimizes `‖Hw − g‖² + λ‖Lw‖²` where `H` is block-diagonal over the
/// `1/G` nodes and `L = DP` applies first differences along the table to
/// each independent weight separately (`P` groups each weight's values
/// across the grid, `D` differences adjacent nodes; the boundary rows are
/// the same one-sided differences, so the null space of `L` is exactly
/// the per-weight constants). With `λ = 0` the rows decouple into per-G
/// solves; as `λ → ∞` all rows converge to the joint minimizer.
pub fn solve_weights_adaptive(
    grid: &InvGGrid,
    angles: &AngleGrid,
    lambda: f64,
) -> Result<WeightTable, DispersionError> {
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(DispersionError::InvalidLambda(lambda));
    }
    let invgs = grid.values()?;
    let n_g = invgs.len();

    let rows: Vec<WeightVector> = if lambda == 0.0 {
        invgs
            .par_iter()
            .map(|&inv_g| solve_weights_single(1.0 / inv_g, angles))
            .collect::<Result<_, _>>()?
    } else {
        // Normal equations (HᵀH + λ·DᵀD ⊗ I₅) w = Hᵀg are block
        // tridiagonal with 5x5 blocks in G-major ordering: DᵀD has
        // diagonal 1, 2, …, 2, 1 and off-diagonal −1 per weight.
        let mut diag = Vec::with_capacity(n_g);
        let mut rhs = vec![0.0; 5 * n_g];
        for (i, &inv_g) in invgs.iter().enumerate() {
            let mut ata = vec![0.0; 25];
            for (theta, phi) in angles.pairs() {
                let (h, g_rhs) = design_row(1.0 / inv_g, theta, phi)?;
                for r in 0..5 {
                    rhs[i * 5 + r] += h[r] * g_rhs;
                    for c in 0..5 {
                        ata[r * 5 + c] += h[r] * h[c];
                    }
                }
            }
            let d = if i == 0 || i + 1 == n_g { 1.0 } else { 2.0 };
            for k in 0..5 {
                ata[k * 5 + k] += lambda * d;
            }
            diag.push(ata);
        }
        let sub = vec![
            {
                let mut b = vec![0.0; 25];
                for k in 0..5 {
                    b[k * 5 + k] = -lambda;
                }
                b
            };
            n_g - 1
        ];
        let x = linalg::block_tridiag_spd_solve(5, &diag, &sub, &rhs)
            .ok_or(DispersionError::SingularNormalEquations)?;
        (0..n_g).map(|i| weights_from_solution(&x[i * 5..(i + 1) * 5])).collect()
    };

    for w in &rows {
        w.validate()?;
    }
    WeightTable::from_parts(grid, lambda, angles, rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn design_row_vanishes_in_continuum() {
        let (h, rhs) = design_row(1e9, 0.3, 0.2).unwrap();
        for v in h {
            assert_abs_diff_eq!(v, 0.0, epsilon = 1e-15);
        }
        assert_abs_diff_eq!(rhs, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn single_angle_row_is_fit_exactly() {
        let angles = AngleGrid::new(vec![0.2], vec![0.1]).unwrap();
        let w = solve_weights_single(5.0, &angles).unwrap();
        let v = super::super::normalized_phase_velocity(&w, 5.0, 0.2, 0.1).unwrap();
        // The linearization is exact for the row, so the residual of the
        // linear equation is 0; v itself sits within linearization error.
        let (h, rhs) = design_row(5.0, 0.2, 0.1).unwrap();
        let x = [w.ws1, w.ws2, w.wm0, w.wm1 / 6.0, w.wm2 / 12.0];
        let resid: f64 = (0..5).map(|i| h[i] * x[i]).sum::<f64>() - rhs;
        assert_abs_diff_eq!(resid, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(v, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn g4_solve_beats_one_permille_on_fit_grid() {
        let angles = AngleGrid::default_fit();
        let w = solve_weights_single(4.0, &angles).unwrap();
        let err = super::super::max_dispersion_error(&w, 4.0, &angles).unwrap();
        assert!(err < 1e-3, "max |v-1| = {err}");
    }

    #[test]
    fn residual_improves_on_classical_at_g10() {
        let angles = AngleGrid::default_fit();
        let (a, b) = stack_rows(&[10.0], &angles).unwrap();
        let fitted = solve_weights_joint(&[10.0], &angles).unwrap();
        let res = |w: &WeightVector| -> f64 {
            let x = [w.ws1, w.ws2, w.wm0, w.wm1 / 6.0, w.wm2 / 12.0];
            (0..b.len())
                .map(|r| {
                    let p: f64 = (0..5).map(|c| a[r * 5 + c] * x[c]).sum();
                    (p - b[r]).powi(2)
                })
                .sum()
        };
        assert!(res(&fitted) < res(&WeightVector::CLASSICAL_7PT));
    }

    #[test]
    fn joint_of_one_g_reduces_to_single() {
        let angles = AngleGrid::default_fit();
        let a = solve_weights_single(4.0, &angles).unwrap();
        let b = solve_weights_joint(&[4.0], &angles).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn joint_residual_dominates_separable_sum() {
        let angles = AngleGrid::default_fit();
        let gs = [4.0, 6.0, 8.0, 10.0];
        let joint = solve_weights_joint(&gs, &angles).unwrap();
        let resid = |w: &WeightVector, g: f64| -> f64 {
            let x = [w.ws1, w.ws2, w.wm0, w.wm1 / 6.0, w.wm2 / 12.0];
            angles
                .pairs()
                .map(|(t, p)| {
                    let (h, rhs) = design_row(g, t, p).unwrap();
                    ((0..5).map(|c| h[c] * x[c]).sum::<f64>() - rhs).powi(2)
                })
                .sum()
        };
        let joint_total: f64 = gs.iter().map(|&g| resid(&joint, g)).sum();
        let separable_total: f64 = gs
            .iter()
            .map(|&g| {
                let w = solve_weights_single(g, &angles).unwrap();
                resid(&w, g)
            })
            .sum();
        assert!(joint_total >= separable_total - 1e-12);
    }

    #[test]
    fn adaptive_lambda_zero_matches_single_solves() {
        let angles = AngleGrid::default_fit();
        let grid = InvGGrid { min: 0.05, max: 0.25, step: 0.05 };
        let table = solve_weights_adaptive(&grid, &angles, 0.0).unwrap();
        for (i, &inv_g) in grid.values().unwrap().iter().enumerate() {
            let single = solve_weights_single(1.0 / inv_g, &angles).unwrap();
            let row = table.rows()[i];
            for (a, b) in [
                (row.ws1, single.ws1),
                (row.ws2, single.ws2),
                (row.ws3, single.ws3),
                (row.wm0, single.wm0),
                (row.wm1, single.wm1),
                (row.wm2, single.wm2),
                (row.wm3, single.wm3),
            ] {
                assert_abs_diff_eq!(a, b, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn adaptive_large_lambda_flattens_to_joint() {
        let angles = AngleGrid::default_fit();
        let grid = InvGGrid { min: 0.1, max: 0.25, step: 0.05 };
        let table = solve_weights_adaptive(&grid, &angles, 1e8).unwrap();
        let gs: Vec<f64> = grid.values().unwrap().iter().map(|x| 1.0 / x).collect();
        let joint = solve_weights_joint(&gs, &angles).unwrap();
        let first = table.rows()[0];
        for row in table.rows() {
            // The smoother dominates: rows collapse onto one common vector.
            assert_abs_diff_eq!(row.ws1, first.ws1, epsilon = 1e-7);
            assert_abs_diff_eq!(row.ws2, first.ws2, epsilon = 1e-7);
            assert_abs_diff_eq!(row.wm0, first.wm0, epsilon = 1e-7);
            assert_abs_diff_eq!(row.wm1, first.wm1, epsilon = 1e-7);
            assert_abs_diff_eq!(row.wm2, first.wm2, epsilon = 1e-7);
            // That common vector is the flat (joint) minimizer up to the
            // round-off the huge penalty injects into the Schur complements.
            assert_abs_diff_eq!(row.ws1, joint.ws1, epsilon = 1e-3);
            assert_abs_diff_eq!(row.ws2, joint.ws2, epsilon = 1e-3);
            assert_abs_diff_eq!(row.wm0, joint.wm0, epsilon = 1e-3);
            assert_abs_diff_eq!(row.wm1, joint.wm1, epsilon = 1e-3);
            assert_abs_diff_eq!(row.wm2, joint.wm2, epsilon = 1e-3);
        }
    }

    #[test]
    fn adaptive_matches_dense_bruteforce_on_toy() {
        // 2 sampling ratios x (3x3)-angle grid, dense normal equations.
        // Coarse ratios and spread angles keep the stacked rows well
        // conditioned; angle fans on a single phi line are numerically
        // rank deficient.
        let angles = AngleGrid::new(vec![0.15, 0.55, 0.95], vec![0.1, 0.4, 0.7]).unwrap();
        let grid = InvGGrid { min: 0.3, max: 0.4, step: 0.1 };
        let lambda = 0.37;
        let table = solve_weights_adaptive(&grid, &angles, lambda).unwrap();

        // Dense assembly of (HᵀH + λ LᵀL) x = Hᵀg over 10 unknowns.
        let invgs = grid.values().unwrap();
        let n = 10;
        let mut a = vec![0.0; n * n];
        let mut rhs = vec![0.0; n];
        for (blk, &inv_g) in invgs.iter().enumerate() {
            for (t, p) in angles.pairs() {
                let (h, g_rhs) = design_row(1.0 / inv_g, t, p).unwrap();
                for r in 0..5 {
                    rhs[blk * 5 + r] += h[r] * g_rhs;
                    for c in 0..5 {
                        a[(blk * 5 + r) * n + (blk * 5 + c)] += h[r] * h[c];
                    }
                }
            }
        }
        // L = DP: one first-difference row per weight (2 nodes -> 1 row).
        for w in 0..5 {
            let (i, j) = (w, 5 + w);
            a[i * n + i] += lambda;
            a[j * n + j] += lambda;
            a[i * n + j] -= lambda;
            a[j * n + i] -= lambda;
        }
        let l = crate::linalg::cholesky(n, &a).unwrap();
        let x = crate::linalg::cholesky_solve(n, &l, &rhs);
        for (blk, row) in table.rows().iter().enumerate() {
            let got = [row.ws1, row.ws2, row.wm0, row.wm1 / 6.0, row.wm2 / 12.0];
            for c in 0..5 {
                assert_abs_diff_eq!(got[c], x[blk * 5 + c], epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn adaptive_rejects_bad_lambda() {
        let angles = AngleGrid::default_fit();
        let grid = InvGGrid::default_table();
        assert!(matches!(
            solve_weights_adaptive(&grid, &angles, -1.0),
            Err(DispersionError::InvalidLambda(_))
        ));
    }
}
