//! The forward Hopf-Lax value solves `Φ_t + β₊|∇Φ|² = κ* + β₊` where it is
//! smooth, checked by centered differences on a V-shaped front.

use frontlab::hamilton_jacobi::{hopf_lax_forward, BoundaryGraph, HJParams};

const KS: f64 = 0.353_553_390_593_273_7;
const BP: f64 = std::f64::consts::FRAC_1_SQRT_2;

fn params() -> HJParams {
    HJParams::new(KS, BP, BP, KS).unwrap()
}

fn v_front(half_angle: f64) -> BoundaryGraph {
    let (s, c) = half_angle.sin_cos();
    BoundaryGraph::support_set(vec![vec![s / KS, c / KS], vec![-s / KS, c / KS]]).unwrap()
}

fn phi(b: &BoundaryGraph, x: &[f64], t: f64) -> f64 {
    hopf_lax_forward(x, t, b, &params()).unwrap().value
}

fn residual(b: &BoundaryGraph, x: [f64; 2], t: f64, h: f64) -> f64 {
    let dt = (phi(b, &x, t + h) - phi(b, &x, t - h)) / (2.0 * h);
    let dx = (phi(b, &[x[0] + h, x[1]], t) - phi(b, &[x[0] - h, x[1]], t)) / (2.0 * h);
    let dy = (phi(b, &[x[0], x[1] + h], t) - phi(b, &[x[0], x[1] - h], t)) / (2.0 * h);
    dt + BP * (dx * dx + dy * dy) - (KS + BP)
}

#[test]
fn equation_holds_away_from_the_kink() {
    let b = v_front(0.6);
    for x in [[3.0, -2.0], [-4.0, 0.5], [2.5, -6.0], [-1.5, -3.0]] {
        let r = residual(&b, x, 4.0, 1e-4);
        assert!(r.abs() < 1e-5, "residual {r} at {x:?}");
    }
}

#[test]
fn gradient_has_unit_speed_far_from_kink() {
    // Far from the kink the solution is planar: |∇Φ| = κ*|ξ| = 1.
    let b = v_front(0.6);
    let (x, t, h) = ([6.0, -1.0], 3.0, 1e-4);
    let gx = (phi(&b, &[x[0] + h, x[1]], t) - phi(&b, &[x[0] - h, x[1]], t)) / (2.0 * h);
    let gy = (phi(&b, &[x[0], x[1] + h], t) - phi(&b, &[x[0], x[1] - h], t)) / (2.0 * h);
    assert!(((gx * gx + gy * gy).sqrt() - 1.0).abs() < 1e-6);
}

#[test]
fn value_is_continuous_across_the_kink() {
    let b = v_front(0.6);
    let t = 4.0;
    let left = phi(&b, &[-1e-6, -1.0], t);
    let right = phi(&b, &[1e-6, -1.0], t);
    assert!((left - right).abs() < 1e-5);
}
