//! Dormand-Prince 5(4) embedded Runge-Kutta pair with step-size control.

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

#[derive(Debug, Clone, Copy)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
    pub h_init: f64,
    pub h_max: f64,
    pub h_min: f64,
}

/// What the step observer wants the integrator to do next.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Outcome<const N: usize> {
    /// Reached the end of the interval.
    Finished { x: f64, y: [f64; N] },
    /// The observer asked to stop after an accepted step.
    Stopped { x: f64, y: [f64; N] },
    /// Step size underflow.
    Failed { x: f64, y: [f64; N] },
}

fn axpy<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    let mut out = *y;
    for i in 0..N {
        let mut acc = 0.0;
        for (c, k) in terms {
            acc += c * k[i];
        }
        out[i] += h * acc;
    }
    out
}

/// Integrates `y' = rhs(x, y)` from `x0` to `x_end` (either direction).
/// After each accepted step `observe(x_prev, y_prev, x, y)` is called.
pub fn integrate<const N: usize, F, O>(
    mut rhs: F,
    x0: f64,
    y0: [f64; N],
    x_end: f64,
    tol: Tolerances,
    mut observe: O,
) -> Outcome<N>
where
    F: FnMut(f64, &[f64; N]) -> [f64; N],
    O: FnMut(f64, &[f64; N], f64, &[f64; N]) -> Control,
{
    let dir = if x_end >= x0 { 1.0 } else { -1.0 };
    let mut x = x0;
    let mut y = y0;
    let mut h = tol.h_init.min(tol.h_max).min((x_end - x0).abs());
    let mut k1 = rhs(x, &y);
    let mut err_prev: f64 = 1e-4;
    loop {
        let remaining = (x_end - x) * dir;
        if remaining <= 0.0 {
            return Outcome::Finished { x, y };
        }
        let mut last = false;
        if h >= remaining {
            h = remaining;
            last = true;
        }
        let hs = h * dir;
        let k2 = rhs(x + C2 * hs, &axpy(&y, hs, &[(A21, &k1)]));
        let k3 = rhs(x + C3 * hs, &axpy(&y, hs, &[(A31, &k1), (A32, &k2)]));
        let k4 = rhs(
            x + C4 * hs,
            &axpy(&y, hs, &[(A41, &k1), (A42, &k2), (A43, &k3)]),
        );
        let k5 = rhs(
            x + C5 * hs,
            &axpy(&y, hs, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
        );
        let k6 = rhs(
            x + hs,
            &axpy(
                &y,
                hs,
                &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
            ),
        );
        let y_new = axpy(
            &y,
            hs,
            &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)],
        );
        let k7 = rhs(x + hs, &y_new);

        let mut err: f64 = 0.0;
        for i in 0..N {
            let e =
                hs * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let scale = tol.atol + tol.rtol * y[i].abs().max(y_new[i].abs());
            err = err.max((e / scale).abs());
        }
        if !err.is_finite() {
            err = 1e10;
        }

        if err <= 1.0 {
            let x_new = if last { x_end } else { x + hs };
            let control = observe(x, &y, x_new, &y_new);
            x = x_new;
            y = y_new;
            k1 = k7;
            if control == Control::Stop {
                return Outcome::Stopped { x, y };
            }
            // PI controller.
            let factor = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.7 / 5.0) * err_prev.powf(0.4 / 5.0)).clamp(0.2, 5.0)
            };
            err_prev = err.max(1e-4);
            h = (h * factor).min(tol.h_max);
        } else {
            h *= (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
        }
        if h < tol.h_min {
            return Outcome::Failed { x, y };
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay_is_accurate() {
        let tol = Tolerances {
            rtol: 1e-11,
            atol: 1e-14,
            h_init: 1e-3,
            h_max: 1.0,
            h_min: 1e-14,
        };
        let out = integrate(
            |_, y: &[f64; 1]| [-y[0]],
            0.0,
            [1.0],
            5.0,
            tol,
            |_, _, _, _| Control::Continue,
        );
        match out {
            Outcome::Finished { x, y } => {
                assert_eq!(x, 5.0);
                assert!((y[0] - (-5.0f64).exp()).abs() < 1e-12);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn harmonic_oscillator_backward() {
        let tol = Tolerances {
            rtol: 1e-11,
            atol: 1e-13,
            h_init: 1e-3,
            h_max: 0.1,
            h_min: 1e-14,
        };
        let out = integrate(
            |_, y: &[f64; 2]| [y[1], -y[0]],
            0.0,
            [0.0, 1.0],
            -1.0,
            tol,
            |_, _, _, _| Control::Continue,
        );
        let Outcome::Finished { y, .. } = out else {
            panic!()
        };
        assert!((y[0] - (-1.0f64).sin()).abs() < 1e-10);
        assert!((y[1] - (-1.0f64).cos()).abs() < 1e-10);
    }
}
