//! Small dense linear-algebra kernels used by the weight solves.
//!
//! Everything here operates on row-major `&[f64]` slices with explicit
//! dimensions. Problem sizes are tiny (5-column design matrices, 5x5
//! blocks), so simple cubic algorithms with good numerical behavior are
//! the right tool: cyclic Jacobi for symmetric eigendecomposition and
//! unpivoted Cholesky for SPD solves.

/// Eigendecomposition of a symmetric `n x n` matrix by cyclic Jacobi.
///
/// Returns `(eigenvalues, eigenvectors)` with eigenvectors stored
/// column-major: column `j` (entries `vecs[i * n + j]`) pairs with
/// `vals[j]`. Eigenvalues are not sorted.
pub fn sym_eigen(n: usize, a: &[f64]) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(a.len(), n * n);
    let mut a = a.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    // Cyclic sweeps; quadratic convergence makes 50 a generous cap.
    for _ in 0..50 {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[p * n + q] * a[p * n + q];
            }
        }
        if off <= f64::EPSILON * f64::EPSILON {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                // Skip rotations that no longer change the matrix.
                if apq.abs() <= f64::EPSILON * 0.5 * (app.abs() + aqq.abs()) {
                    a[p * n + q] = 0.0;
                    a[q * n + p] = 0.0;
                    continue;
                }
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let vals = (0..n).map(|i| a[i * n + i]).collect();
    (vals, v)
}

/// Minimum-norm least-squares solution of `a x = b` for an `m x n`
/// row-major matrix, via the normal equations and a truncated symmetric
/// eigendecomposition.
///
/// Eigenvalues of `aᵀa` below `rel_tol * max_eigenvalue` are treated as
/// rank deficiency and their directions dropped, which yields the
/// minimum-norm solution on the remaining range. The squared conditioning
/// of the normal equations is acceptable here because the design matrices
/// are tiny and well scaled.
pub fn min_norm_lstsq(m: usize, n: usize, a: &[f64], b: &[f64], rel_tol: f64) -> Vec<f64> {
    assert_eq!(a.len(), m * n);
    assert_eq!(b.len(), m);
    let mut ata = vec![0.0; n * n];
    let mut atb = vec![0.0; n];
    for r in 0..m {
        let row = &a[r * n..(r + 1) * n];
        for i in 0..n {
            atb[i] += row[i] * b[r];
            for j in i..n {
                ata[i * n + j] += row[i] * row[j];
            }
        }
    }
    for i in 0..n {
        for j in 0..i {
            ata[i * n + j] = ata[j * n + i];
        }
    }
    let (vals, vecs) = sym_eigen(n, &ata);
    let vmax = vals.iter().cloned().fold(0.0, f64::max);
    let cut = vmax * rel_tol;
    let mut x = vec![0.0; n];
    for j in 0..n {
        if vals[j] <= cut {
            continue;
        }
        let mut proj = 0.0;
        for i in 0..n {
            proj += vecs[i * n + j] * atb[i];
        }
        let scale = proj / vals[j];
        for i in 0..n {
            x[i] += scale * vecs[i * n + j];
        }
    }
    x
}

/// Unpivoted Cholesky factorization of an SPD `n x n` matrix.
///
/// Returns the lower factor `L` (row-major) with `a = L Lᵀ`, or `None`
/// if a pivot is nonpositive or not finite.
pub fn cholesky(n: usize, a: &[f64]) -> Option<Vec<f64>> {
    assert_eq!(a.len(), n * n);
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i * n + j];
            for k in 0..j {
                sum -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !(sum > 0.0) || !sum.is_finite() {
                    return None;
                }
                l[i * n + i] = sum.sqrt();
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }
    Some(l)
}

/// Solves `L Lᵀ x = b` given the lower Cholesky factor.
pub fn cholesky_solve(n: usize, l: &[f64], b: &[f64]) -> Vec<f64> {
    let mut x = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            x[i] = x[i] - l[i * n + k] * x[k];
        }
        x[i] /= l[i * n + i];
    }
    for i in (0..n).rev() {
        for k in (i + 1)..n {
            x[i] = x[i] - l[k * n + i] * x[k];
        }
        x[i] /= l[i * n + i];
    }
    x
}

/// Solves a symmetric positive-definite block-tridiagonal system by block
/// Thomas elimination with Cholesky pivots.
///
/// `diag` holds the `nblk` diagonal blocks (each `nb x nb`, row-major) and
/// `sub[i]` couples block `i + 1` to block `i`; the superdiagonal blocks
/// are the transposes of `sub`. Returns `None` when a Schur complement
/// fails to be positive definite.
pub fn block_tridiag_spd_solve(
    nb: usize,
    diag: &[Vec<f64>],
    sub: &[Vec<f64>],
    rhs: &[f64],
) -> Option<Vec<f64>> {
    let nblk = diag.len();
    assert_eq!(sub.len(), nblk.saturating_sub(1));
    assert_eq!(rhs.len(), nblk * nb);

    // Forward pass: S_i = D_i - B_i S_{i-1}^{-1} B_iᵀ, carrying
    // X_i = S_i^{-1} B_{i+1}ᵀ for the back-substitution.
    let mut xs: Vec<Vec<f64>> = Vec::with_capacity(nblk.saturating_sub(1));
    let mut zs: Vec<Vec<f64>> = Vec::with_capacity(nblk);
    let mut s = diag[0].clone();
    for i in 0..nblk {
        if i > 0 {
            let b = &sub[i - 1];
            let x = &xs[i - 1];
            // S_i = D_i - B_i X_{i-1}  (X_{i-1} = S_{i-1}^{-1} B_iᵀ)
            let mut si = diag[i].clone();
            for r in 0..nb {
                for c in 0..nb {
                    let mut acc = 0.0;
                    for k in 0..nb {
                        acc += b[r * nb + k] * x[k * nb + c];
                    }
                    si[r * nb + c] -= acc;
                }
            }
            s = si;
        }
        let l = cholesky(nb, &s)?;
        // z_i = S_i^{-1} (rhs_i - B_i z_{i-1})
        let mut bi = rhs[i * nb..(i + 1) * nb].to_vec();
        if i > 0 {
            let b = &sub[i - 1];
            let zprev = &zs[i - 1];
            for r in 0..nb {
                for k in 0..nb {
                    bi[r] -= b[r * nb + k] * zprev[k];
                }
            }
        }
        zs.push(cholesky_solve(nb, &l, &bi));
        if i + 1 < nblk {
            // X_i = S_i^{-1} B_{i+1}ᵀ, one column at a time.
            let bnext = &sub[i];
            let mut x = vec![0.0; nb * nb];
            for c in 0..nb {
                let col: Vec<f64> = (0..nb).map(|r| bnext[c * nb + r]).collect();
                let sol = cholesky_solve(nb, &l, &col);
                for r in 0..nb {
                    x[r * nb + c] = sol[r];
                }
            }
            xs.push(x);
        }
    }

    // Back substitution: x_i = z_i - X_i x_{i+1}.
    let mut out = vec![0.0; nblk * nb];
    out[(nblk - 1) * nb..].copy_from_slice(&zs[nblk - 1]);
    for i in (0..nblk.saturating_sub(1)).rev() {
        let x = &xs[i];
        let mut xi = zs[i].clone();
        for r in 0..nb {
            for k in 0..nb {
                xi[r] -= x[r * nb + k] * out[(i + 1) * nb + k];
            }
        }
        out[i * nb..(i + 1) * nb].copy_from_slice(&xi);
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn random_spd(rng: &mut StdRng, n: usize) -> Vec<f64> {
        let m: Vec<f64> = (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let mut acc = 0.0;
                for k in 0..n {
                    acc += m[k * n + i] * m[k * n + j];
                }
                a[i * n + j] = acc;
            }
            a[i * n + i] += 0.5;
        }
        a
    }

    #[test]
    fn jacobi_reconstructs_matrix() {
        let mut rng = StdRng::seed_from_u64(7);
        for n in [2usize, 5, 9] {
            let a = random_spd(&mut rng, n);
            let (vals, vecs) = sym_eigen(n, &a);
            for i in 0..n {
                for j in 0..n {
                    let mut acc = 0.0;
                    for k in 0..n {
                        acc += vecs[i * n + k] * vals[k] * vecs[j * n + k];
                    }
                    assert!((acc - a[i * n + j]).abs() < 1e-10, "n={n} ({i},{j})");
                }
            }
        }
    }

    #[test]
    fn cholesky_solve_matches_direct_residual() {
        let mut rng = StdRng::seed_from_u64(11);
        for n in [3usize, 5, 12] {
            let a = random_spd(&mut rng, n);
            let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let l = cholesky(n, &a).expect("SPD");
            let x = cholesky_solve(n, &l, &b);
            for i in 0..n {
                let mut r = b[i];
                for j in 0..n {
                    r -= a[i * n + j] * x[j];
                }
                assert!(r.abs() < 1e-9);
            }
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = vec![1.0, 2.0, 2.0, 1.0]; // eigenvalues 3, -1
        assert!(cholesky(2, &a).is_none());
    }

    #[test]
    fn min_norm_matches_exact_on_full_rank() {
        let mut rng = StdRng::seed_from_u64(3);
        let (m, n) = (12usize, 5usize);
        let a: Vec<f64> = (0..m * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let xtrue: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..m)
            .map(|r| (0..n).map(|c| a[r * n + c] * xtrue[c]).sum())
            .collect();
        let x = min_norm_lstsq(m, n, &a, &b, 1e-13);
        for i in 0..n {
            assert!((x[i] - xtrue[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn min_norm_single_row_is_scaled_row() {
        // One equation: minimum-norm solution lies along the row itself.
        let a = vec![1.0, 2.0, 0.0, -1.0, 3.0];
        let b = vec![4.5];
        let x = min_norm_lstsq(1, 5, &a, &b, 1e-13);
        let norm2: f64 = a.iter().map(|v| v * v).sum();
        for i in 0..5 {
            assert!((x[i] - a[i] * b[0] / norm2).abs() < 1e-12);
        }
    }

    #[test]
    fn block_tridiag_matches_dense() {
        let mut rng = StdRng::seed_from_u64(19);
        let (nb, nblk) = (3usize, 6usize);
        let n = nb * nblk;
        // Build an SPD block-tridiagonal matrix: diagonally dominant blocks.
        let mut dense = vec![0.0; n * n];
        let mut diag = Vec::new();
        let mut sub = Vec::new();
        for i in 0..nblk {
            let mut d = random_spd(&mut rng, nb);
            for k in 0..nb {
                d[k * nb + k] += 6.0;
            }
            for r in 0..nb {
                for c in 0..nb {
                    dense[(i * nb + r) * n + (i * nb + c)] = d[r * nb + c];
                }
            }
            diag.push(d);
            if i + 1 < nblk {
                let b: Vec<f64> = (0..nb * nb).map(|_| rng.gen_range(-1.0..1.0)).collect();
                for r in 0..nb {
                    for c in 0..nb {
                        dense[((i + 1) * nb + r) * n + (i * nb + c)] = b[r * nb + c];
                        dense[(i * nb + c) * n + ((i + 1) * nb + r)] = b[r * nb + c];
                    }
                }
                sub.push(b);
            }
        }
        let rhs: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x = block_tridiag_spd_solve(nb, &diag, &sub, &rhs).expect("SPD");
        let l = cholesky(n, &dense).expect("SPD");
        let xd = cholesky_solve(n, &l, &rhs);
        for i in 0..n {
            assert!((x[i] - xd[i]).abs() < 1e-9, "i={i}: {} vs {}", x[i], xd[i]);
        }
    }
}
