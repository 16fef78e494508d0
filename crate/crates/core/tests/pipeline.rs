//! 1D indicator run through time-graph extraction, Φ = g⁻¹(u) and the tail
//! fit, checked against the travelling-wave constants of the cubic.

use std::sync::OnceLock;

use frontlab::blowdown::{phi_from_u, tail_linearity, DEFAULT_CLAMP};
use frontlab::levelset::{extract_graph_time, monotonicity_ratio, LevelGraph};
use frontlab::nonlinearity::Nonlinearity;
use frontlab::numerics::fit_line;
use frontlab::rd_solver::{
    init_indicator, simulate, Boundary, Grid, SimConfig, SnapshotSeries, Workers,
};
use frontlab::wave1d::compute_profile;

const KS: f64 = 0.353_553_390_593_273_7;

fn series() -> &'static SnapshotSeries {
    static S: OnceLock<SnapshotSeries> = OnceLock::new();
    S.get_or_init(|| {
        let grid = Grid::line(-30.0, 60.0, 0.2, Boundary::Neumann).unwrap();
        let dt = 0.4 * 0.04;
        simulate(&SimConfig {
            spec: Nonlinearity::bistable_cubic(0.25).unwrap(),
            initial: init_indicator(&grid, 3.0, 0.05).unwrap(),
            t_final: 140.0,
            dt,
            record_every: 25,
            workers: Workers::Global,
        })
        .unwrap()
    })
}

fn graph() -> &'static LevelGraph {
    static G: OnceLock<LevelGraph> = OnceLock::new();
    G.get_or_init(|| extract_graph_time(series(), 0.5).unwrap())
}

#[test]
fn time_graph_slope_is_inverse_speed() {
    let g = graph();
    let (xs, hs): (Vec<f64>, Vec<f64>) = (0..g.len())
        .filter(|&k| g.valid[k])
        .map(|k| (g.base_point(k)[0], g.heights[k]))
        .filter(|(x, _)| (20.0..=45.0).contains(x))
        .unzip();
    let fit = fit_line(&xs, &hs).unwrap();
    assert!((fit.slope * KS - 1.0).abs() < 0.02, "slope {}", fit.slope);
    assert!(fit.r2 > 0.9999);
}

#[test]
fn left_and_right_fronts_are_symmetric() {
    let g = graph();
    for x in [10.0, 20.0] {
        let r = g.height_at(&[x]).unwrap();
        let l = g.height_at(&[-x]).unwrap();
        // The walls sit at different distances, so only nearly equal.
        assert!((r - l).abs() < 1e-3, "{r} vs {l}");
    }
}

#[test]
fn phi_has_unit_slope_across_the_front() {
    let profile = compute_profile(&Nonlinearity::bistable_cubic(0.25).unwrap()).unwrap();
    let last = series().snapshots.iter().find(|f| f.time >= 100.0).unwrap();
    let phi = phi_from_u(last, &profile, DEFAULT_CLAMP).unwrap();
    let dx = last.grid.dx();
    let mut checked = 0;
    for i in 1..last.grid.len() - 1 {
        let x = last.grid.coord(0, i);
        let (a, b) = (phi.values[i - 1], phi.values[i + 1]);
        if x > 20.0 && x < 50.0 && a.is_finite() && b.is_finite() && a.abs() < 10.0 {
            let slope = (b - a) / (2.0 * dx);
            assert!((slope + 1.0).abs() < 0.02, "slope {slope} at x={x}");
            checked += 1;
        }
    }
    assert!(checked > 50);
}

#[test]
fn tail_decays_at_product_of_speed_and_rate() {
    // A snapshot whose tail is crossed later in the run.
    let mid = series().snapshots.iter().find(|f| f.time >= 100.0).unwrap();
    let fit = tail_linearity(mid, graph(), 1e-8, 1e-3).unwrap();
    // u ≈ e^{β₋Φ} ahead of the front and Φ ≈ κ*(t − h).
    let expected = KS / 2f64.sqrt();
    assert!(
        (fit.slope - expected).abs() / expected < 0.03,
        "slope {}",
        fit.slope
    );
    assert!(fit.r2 > 0.999);
}

#[test]
fn developed_front_is_monotone_in_time() {
    let s = series();
    let r = monotonicity_ratio(s, s.len() - 2).unwrap();
    assert!(r.qualifying_nodes > 0);
    assert!(r.min_ratio > 0.0);
}
