//! Integration tests for weight fitting quality across sampling ratios.

use helm27::dispersion::*;

fn dense_eval_grid() -> AngleGrid {
    let deg: Vec<f64> = (0..=9).map(|i| 5.0 * i as f64).collect();
    AngleGrid::from_degrees(&deg, &deg).unwrap()
}

#[test]
fn g4_weights_sharp_at_g4_degrade_past_it() {
    let fit = AngleGrid::default_fit();
    let dense = dense_eval_grid();
    let w4 = solve_weights_single(4.0, &fit).unwrap();

    let at_g4 = max_dispersion_error(&w4, 4.0, &dense).unwrap();
    assert!(at_g4 < 5e-3, "G=4 dispersion error {at_g4:.3e} too large");

    // Tuned for one ratio only, the weights lose accuracy quickly away
    // from it.
    let mut worst = 0.0f64;
    for i in 0..=20 {
        let g = 5.0 + 0.05 * i as f64;
        worst = worst.max(max_dispersion_error(&w4, g, &dense).unwrap());
    }
    assert!(worst > 1e-2, "expected >1% dispersion somewhere in [5,6], got {worst:.3e}");
}

#[test]
fn adaptive_table_stays_within_two_permille() {
    let fit = AngleGrid::default_fit();
    let dense = dense_eval_grid();
    let grid = InvGGrid::default_table();
    let lambda = default_lambda(&grid, &fit).unwrap();
    let table = solve_weights_adaptive(&grid, &fit, lambda).unwrap();
    let mut worst = 0.0f64;
    for i in 0..=320 {
        let g = 4.0 + 0.05 * i as f64;
        worst = worst.max(max_dispersion_error(table.lookup(g), g, &dense).unwrap());
    }
    assert!(worst < 2e-3, "adaptive dispersion error {worst:.3e} over G in [4,20]");
}

#[test]
fn adaptive_rows_never_lose_to_joint_compromise() {
    let fit = AngleGrid::default_fit();
    let grid = InvGGrid::default_table();
    let lambda = default_lambda(&grid, &fit).unwrap();
    let table = solve_weights_adaptive(&grid, &fit, lambda).unwrap();
    let gm = solve_weights_joint(&[4.0, 6.0, 8.0, 10.0], &fit).unwrap();
    for g in 4..=20 {
        let g = g as f64;
        let adaptive = max_dispersion_error(table.lookup(g), g, &fit).unwrap();
        let joint = max_dispersion_error(&gm, g, &fit).unwrap();
        assert!(
            adaptive <= joint + 1e-12,
            "at G={g}: adaptive {adaptive:.3e} worse than joint {joint:.3e}"
        );
    }
}

#[test]
fn default_table_has_no_jitter() {
    let fit = AngleGrid::default_fit();
    let grid = InvGGrid::default_table();
    let lambda = default_lambda(&grid, &fit).unwrap();
    let table = solve_weights_adaptive(&grid, &fit, lambda).unwrap();
    assert_eq!(table.rows().len(), 400);

    // Smoothness: the largest adjacent-row step must stay within 10x the
    // median adjacent step, pooled over all seven weights. A per-weight
    // median would be degenerate: weights with flat mid-table curves have
    // vanishing own-medians while their (real, smooth) curvature near the
    // coarse end is unchanged by any smoothing strength.
    let mut diffs = Vec::new();
    for wi in 0..7 {
        let vals: Vec<f64> = table
            .rows()
            .iter()
            .map(|r| [r.ws1, r.ws2, r.ws3, r.wm0, r.wm1, r.wm2, r.wm3][wi])
            .collect();
        diffs.extend(vals.windows(2).map(|w| (w[1] - w[0]).abs()));
    }
    diffs.sort_by(f64::total_cmp);
    let max = *diffs.last().unwrap();
    let median = diffs[diffs.len() / 2];
    assert!(max < 10.0 * median, "max step {max:.3e} vs median {median:.3e}");
}

#[test]
fn continuum_limit_for_fitted_rows() {
    let fit = AngleGrid::default_fit();
    let grid = InvGGrid::default_table();
    let table = solve_weights_adaptive(&grid, &fit, default_lambda(&grid, &fit).unwrap()).unwrap();
    // Spot-check a few fitted rows: dispersion vanishes as G grows.
    for &row in [0usize, 100, 399].iter() {
        let w = table.rows()[row];
        let err = max_dispersion_error(&w, 1e4, &fit).unwrap();
        assert!(err < 1e-6, "row {row}: |v-1| = {err:.3e} at G=1e4");
    }
}
