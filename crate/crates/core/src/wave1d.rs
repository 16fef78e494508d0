//! One-dimensional travelling waves `−g'' + κ g' = f(g)`, `g(−∞) = 0`,
//! `g(+∞) = 1`.
//!
//! The speed is found by shooting in the phase plane: with `q = g'` viewed
//! as a function of `u = g`, the profile equation becomes
//! `q dq/du = κ q − f(u)`. We integrate `w = q²/2`, for which
//! `dw/du = κ √(2w) − f(u)` stays regular where `q` reaches zero, so an
//! undershoot shows up as a clean sign change of `w`.

use serde::Serialize;

use crate::error::{domain, Error, Result};
use crate::nonlinearity::Nonlinearity;
use crate::numerics::{bracket, fit_line, hermite};
use crate::ode::{self, Control, Outcome, Tolerances};

/// Launch offset from the unstable equilibrium `u = 0`.
pub const LAUNCH_OFFSET: f64 = 1e-8;
/// `q(1)` at or below this counts as a connection.
pub const CONNECTED_TOL: f64 = 1e-9;
/// Relative tolerance of the phase-plane integration.
pub const SHOOT_RTOL: f64 = 1e-10;
/// Fraction of each tail used to fit the amplitudes `α±`.
pub const TAIL_FIT_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ShootOutcome {
    Overshoot,
    Undershoot,
    Connected,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShootResult {
    pub outcome: ShootOutcome,
    /// `q` at `u = 1`; `None` for undershoots.
    pub q_at_1: Option<f64>,
    /// Where `q` vanished; `Some` only for undershoots.
    pub first_zero_u: Option<f64>,
    /// Accepted `(u, q)` samples.
    pub trajectory: Vec<(f64, f64)>,
}

impl ShootResult {
    /// Monotone surrogate of the shooting map: `q(1)` when defined,
    /// `u₀ − 1` (negative) for an undershoot vanishing at `u₀`.
    pub fn signed_miss(&self) -> f64 {
        match (self.q_at_1, self.first_zero_u) {
            (Some(q), _) => q,
            (None, Some(u)) => u - 1.0,
            (None, None) => 0.0,
        }
    }
}

/// Tail decay rates of the profile at `κ`: `g ~ α₋ e^{β₋ t}` as `t → −∞`,
/// `1 − g ~ α₊ e^{−β₊ t}` as `t → +∞`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailRates {
    pub beta_minus: f64,
    pub beta_plus: f64,
}

pub fn tail_rates(spec: &Nonlinearity, kappa: f64) -> TailRates {
    let fp0 = spec.derivative_at_zero();
    let fp1 = spec.derivative_at_one();
    TailRates {
        beta_minus: 0.5 * (kappa + (kappa * kappa - 4.0 * fp0).sqrt()),
        beta_plus: 0.5 * (-kappa + (kappa * kappa - 4.0 * fp1).sqrt()),
    }
}

fn shoot_tolerances() -> Tolerances {
    Tolerances {
        rtol: SHOOT_RTOL,
        atol: 1e-30,
        h_init: 1e-10,
        h_max: 1e-2,
        h_min: 1e-18,
    }
}

/// Integrates the phase-plane orbit leaving `u = 0` at speed `kappa` and
/// classifies where it ends.
pub fn shoot(spec: &Nonlinearity, kappa: f64) -> Result<ShootResult> {
    if !(kappa > 0.0) || !kappa.is_finite() {
        return Err(domain(kappa, "kappa > 0"));
    }
    let (u_start, q_start) = if spec.vanishes_below_theta() {
        // q = κu solves the reduced equation exactly where f ≡ 0.
        (spec.theta(), kappa * spec.theta())
    } else {
        let beta = tail_rates(spec, kappa).beta_minus;
        (LAUNCH_OFFSET, beta * LAUNCH_OFFSET)
    };
    let rhs = |u: f64, w: &[f64; 1]| [kappa * (2.0 * w[0].max(0.0)).sqrt() - spec.value(u)];

    let mut trajectory = vec![(u_start, q_start)];
    let mut zero_at = None;
    let outcome = ode::integrate(
        rhs,
        u_start,
        [0.5 * q_start * q_start],
        1.0,
        shoot_tolerances(),
        |u0, w0, u1, w1| {
            if w1[0] < 0.0 {
                zero_at = Some(locate_zero(&rhs, u0, w0[0], u1, w1[0]));
                return Control::Stop;
            }
            trajectory.push((u1, (2.0 * w1[0]).sqrt()));
            Control::Continue
        },
    );

    match outcome {
        Outcome::Stopped { .. } => {
            let u0 = zero_at.unwrap();
            trajectory.push((u0, 0.0));
            Ok(ShootResult {
                outcome: ShootOutcome::Undershoot,
                q_at_1: None,
                first_zero_u: Some(u0),
                trajectory,
            })
        }
        Outcome::Finished { y, .. } => {
            let q1 = (2.0 * y[0].max(0.0)).sqrt();
            let outcome = if q1 <= CONNECTED_TOL {
                ShootOutcome::Connected
            } else {
                ShootOutcome::Overshoot
            };
            Ok(ShootResult {
                outcome,
                q_at_1: Some(q1),
                first_zero_u: None,
                trajectory,
            })
        }
        Outcome::Failed { x, y } => Err(Error::Integration {
            u: x,
            q: (2.0 * y[0].max(0.0)).sqrt(),
            reason: "step size underflow".into(),
        }),
    }
}

/// Zero of `w` inside an accepted step, from the cubic Hermite interpolant.
fn locate_zero<F: Fn(f64, &[f64; 1]) -> [f64; 1]>(
    rhs: &F,
    u0: f64,
    w0: f64,
    u1: f64,
    w1: f64,
) -> f64 {
    let d0 = rhs(u0, &[w0])[0];
    let d1 = rhs(u1, &[w1])[0];
    let (mut a, mut b) = (u0, u1);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if hermite(u0, u1, w0, w1, d0, d1, m).0 > 0.0 {
            a = m;
        } else {
            b = m;
        }
        if b - a < 1e-15 {
            break;
        }
    }
    0.5 * (a + b)
}

/// Bisection for the unique connecting speed. Returns the midpoint of the
/// final bracket, whose width is below `tol`.
pub fn minimal_speed(spec: &Nonlinearity, tol: f64) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(domain(tol, "tol > 0"));
    }
    const LO_LIMIT: f64 = 1e-6;
    const HI_LIMIT: f64 = 1e3;
    let classify = |kappa: f64| -> Result<ShootOutcome> { Ok(shoot(spec, kappa)?.outcome) };

    let mut lo;
    let mut hi;
    let start = 1.0;
    match classify(start)? {
        ShootOutcome::Connected => return Ok(start),
        ShootOutcome::Overshoot => {
            hi = start;
            lo = start / 2.0;
            loop {
                match classify(lo)? {
                    ShootOutcome::Connected => return Ok(lo),
                    ShootOutcome::Undershoot => break,
                    ShootOutcome::Overshoot => {
                        hi = lo;
                        lo /= 2.0;
                        if lo < LO_LIMIT {
                            return Err(Error::NoBracket {
                                lo: LO_LIMIT,
                                hi: HI_LIMIT,
                            });
                        }
                    }
                }
            }
        }
        ShootOutcome::Undershoot => {
            lo = start;
            hi = start * 2.0;
            loop {
                match classify(hi)? {
                    ShootOutcome::Connected => return Ok(hi),
                    ShootOutcome::Overshoot => break,
                    ShootOutcome::Undershoot => {
                        lo = hi;
                        hi *= 2.0;
                        if hi > HI_LIMIT {
                            return Err(Error::NoBracket {
                                lo: LO_LIMIT,
                                hi: HI_LIMIT,
                            });
                        }
                    }
                }
            }
        }
    }

    while hi - lo >= tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        match classify(mid)? {
            ShootOutcome::Connected => return Ok(mid),
            ShootOutcome::Undershoot => lo = mid,
            ShootOutcome::Overshoot => hi = mid,
        }
    }
    Ok(0.5 * (lo + hi))
}

/// A sampled travelling-wave profile normalized by `g(0) = 1/2`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WaveProfile {
    pub kappa_star: f64,
    pub t_grid: Vec<f64>,
    pub g_values: Vec<f64>,
    pub g_prime: Vec<f64>,
    pub beta_minus: f64,
    pub beta_plus: f64,
    pub alpha_minus: f64,
    pub alpha_plus: f64,
    /// Free least-squares slopes of `ln g` and `−ln(1 − g)` on the fit
    /// windows; compare with `beta_minus`, `beta_plus`.
    pub fitted_beta_minus: f64,
    pub fitted_beta_plus: f64,
    pub fit_window_fraction: f64,
    /// `max |−g'' + κ g' − f(g)|` over interior grid nodes, by centered
    /// differences.
    pub residual: f64,
}

/// One half of the connecting orbit: nodes `(t, u, q)` with increasing `t`.
struct Branch {
    t: Vec<f64>,
    u: Vec<f64>,
    q: Vec<f64>,
}

impl Branch {
    fn eval(&self, spec: &Nonlinearity, kappa: f64, t: f64) -> (f64, f64) {
        let i = bracket(&self.t, t);
        let (t0, t1) = (self.t[i], self.t[i + 1]);
        let (u0, u1) = (self.u[i], self.u[i + 1]);
        let (q0, q1) = (self.q[i], self.q[i + 1]);
        let u = hermite(t0, t1, u0, u1, q0, q1, t).0;
        let dq0 = kappa * q0 - spec.value(u0);
        let dq1 = kappa * q1 - spec.value(u1);
        let q = hermite(t0, t1, q0, q1, dq0, dq1, t).0;
        (u, q)
    }

    /// Time at which `u` crosses `level` between nodes `i` and `i + 1`.
    fn crossing(&self, i: usize, level: f64) -> f64 {
        let (t0, t1) = (self.t[i], self.t[i + 1]);
        let (mut a, mut b) = (t0, t1);
        let increasing = self.u[i + 1] > self.u[i];
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            let v = hermite(
                t0,
                t1,
                self.u[i],
                self.u[i + 1],
                self.q[i],
                self.q[i + 1],
                m,
            )
            .0;
            if (v < level) == increasing {
                a = m;
            } else {
                b = m;
            }
            if (b - a).abs() < 1e-15 {
                break;
            }
        }
        0.5 * (a + b)
    }
}

/// Maximal time step between stored nodes of the reconstructed orbit.
const PROFILE_MAX_DT: f64 = 0.02;

fn integrate_branch(
    spec: &Nonlinearity,
    kappa: f64,
    start: [f64; 2],
    forward: bool,
) -> Result<Branch> {
    let tol = Tolerances {
        rtol: 1e-12,
        atol: 1e-24,
        h_init: 1e-4,
        h_max: PROFILE_MAX_DT,
        h_min: 1e-14,
    };
    let mut t = vec![0.0];
    let mut u = vec![start[0]];
    let mut q = vec![start[1]];
    let end = if forward { 1e4 } else { -1e4 };
    let outcome = ode::integrate(
        |_, y: &[f64; 2]| [y[1], kappa * y[1] - spec.value(y[0])],
        0.0,
        start,
        end,
        tol,
        |_, _, x1, y1| {
            t.push(x1);
            u.push(y1[0]);
            q.push(y1[1]);
            let past_half = if forward { y1[0] >= 0.5 } else { y1[0] <= 0.5 };
            if past_half || !(y1[1] > 0.0) {
                Control::Stop
            } else {
                Control::Continue
            }
        },
    );
    if let Outcome::Failed { x, y } = outcome {
        return Err(Error::Integration {
            u: y[0],
            q: y[1],
            reason: format!("profile integration stalled at t = {x}"),
        });
    }
    if let Some(&qe) = q.last() {
        if !(qe > 0.0) {
            return Err(Error::NotConnected {
                mismatch: f64::INFINITY,
            });
        }
    }
    if !forward {
        t.reverse();
        u.reverse();
        q.reverse();
    }
    let mut branch = Branch { t, u, q };
    let n = branch.t.len();
    let i = if forward { n - 2 } else { 0 };
    let shift = branch.crossing(i, 0.5);
    for ti in &mut branch.t {
        *ti -= shift;
    }
    Ok(branch)
}

/// Reconstructs `g` on `t_grid` from the connecting orbit at `kappa_star`.
///
/// Each half of the orbit is integrated in time from its equilibrium (along
/// the unstable manifold of 0, and backward along the stable manifold of 1)
/// up to `u = 1/2`; the two halves must agree there. Outside the integrated
/// range the linearized tails are used.
pub fn reconstruct_profile(
    spec: &Nonlinearity,
    kappa_star: f64,
    t_grid: &[f64],
) -> Result<WaveProfile> {
    if !(kappa_star > 0.0) {
        return Err(domain(kappa_star, "kappa_star > 0"));
    }
    if t_grid.len() < 11 || t_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Invalid(
            "t_grid must be increasing with at least 11 nodes".into(),
        ));
    }
    let rates = tail_rates(spec, kappa_star);
    let flat = spec.vanishes_below_theta();
    let lower_start = if flat {
        [spec.theta(), kappa_star * spec.theta()]
    } else {
        [LAUNCH_OFFSET, rates.beta_minus * LAUNCH_OFFSET]
    };
    let upper_start = [1.0 - LAUNCH_OFFSET, rates.beta_plus * LAUNCH_OFFSET];
    let lower = integrate_branch(spec, kappa_star, lower_start, true)?;
    let upper = integrate_branch(spec, kappa_star, upper_start, false)?;

    let (_, q_lo) = lower.eval(spec, kappa_star, 0.0);
    let (_, q_hi) = upper.eval(spec, kappa_star, 0.0);
    let mismatch = (q_lo - q_hi).abs();
    if mismatch > 1e-4 * q_lo.abs().max(1e-3) {
        return Err(Error::NotConnected { mismatch });
    }

    // Linearized tails beyond the integrated range.
    let lower_rate = if flat { kappa_star } else { rates.beta_minus };
    let (t_lo, u_lo) = (lower.t[0], lower.u[0]);
    let (t_hi, v_hi) = (*upper.t.last().unwrap(), 1.0 - *upper.u.last().unwrap());

    let sample = |t: f64| -> (f64, f64) {
        if t <= 0.0 {
            if t < t_lo {
                let u = u_lo * (lower_rate * (t - t_lo)).exp();
                (u, lower_rate * u)
            } else {
                lower.eval(spec, kappa_star, t)
            }
        } else if t > t_hi {
            let v = v_hi * (-rates.beta_plus * (t - t_hi)).exp();
            (1.0 - v, rates.beta_plus * v)
        } else {
            upper.eval(spec, kappa_star, t)
        }
    };

    let mut g_values = Vec::with_capacity(t_grid.len());
    let mut g_prime = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let (g, gp) = sample(t);
        g_values.push(g);
        g_prime.push(gp);
    }
    if g_values.windows(2).any(|w| !(w[1] > w[0]))
        || g_values.iter().any(|g| !(*g > 0.0 && *g < 1.0))
    {
        return Err(Error::Invalid(
            "t_grid extends beyond double-precision resolution of the profile".into(),
        ));
    }

    let residual = ode_residual(spec, kappa_star, t_grid, &g_values);

    let t_min = t_grid[0];
    let t_max = *t_grid.last().unwrap();
    let (mut xm, mut ym, mut xp, mut yp) = (vec![], vec![], vec![], vec![]);
    for (&t, &g) in t_grid.iter().zip(&g_values) {
        if t_min < 0.0 && t <= (1.0 - TAIL_FIT_FRACTION) * t_min {
            xm.push(t);
            ym.push(g.ln());
        }
        if t_max > 0.0 && t >= (1.0 - TAIL_FIT_FRACTION) * t_max {
            xp.push(t);
            yp.push((1.0 - g).ln());
        }
    }
    let fit_minus = fit_line(&xm, &ym)
        .ok_or_else(|| Error::Invalid("too few samples in the negative tail window".into()))?;
    let fit_plus = fit_line(&xp, &yp)
        .ok_or_else(|| Error::Invalid("too few samples in the positive tail window".into()))?;
    let beta_minus = rates.beta_minus;
    let beta_plus = rates.beta_plus;
    let log_alpha_minus = xm
        .iter()
        .zip(&ym)
        .map(|(t, y)| y - lower_rate * t)
        .sum::<f64>()
        / xm.len() as f64;
    let log_alpha_plus = xp
        .iter()
        .zip(&yp)
        .map(|(t, y)| y + beta_plus * t)
        .sum::<f64>()
        / xp.len() as f64;

    Ok(WaveProfile {
        kappa_star,
        t_grid: t_grid.to_vec(),
        g_values,
        g_prime,
        beta_minus,
        beta_plus,
        alpha_minus: log_alpha_minus.exp(),
        alpha_plus: log_alpha_plus.exp(),
        fitted_beta_minus: fit_minus.slope,
        fitted_beta_plus: -fit_plus.slope,
        fit_window_fraction: TAIL_FIT_FRACTION,
        residual,
    })
}

fn ode_residual(spec: &Nonlinearity, kappa: f64, t: &[f64], g: &[f64]) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 1..t.len() - 1 {
        let h0 = t[i] - t[i - 1];
        let h1 = t[i + 1] - t[i];
        let d2 = 2.0 * (h0 * g[i + 1] - (h0 + h1) * g[i] + h1 * g[i - 1]) / (h0 * h1 * (h0 + h1));
        let d1 = (g[i + 1] - g[i - 1]) / (h0 + h1);
        worst = worst.max((-d2 + kappa * d1 - spec.value(g[i])).abs());
    }
    worst
}

/// Symmetric grid `[-half_width, half_width]` with spacing `step`.
pub fn symmetric_grid(half_width: f64, step: f64) -> Vec<f64> {
    let n = (half_width / step).round() as i64;
    (-n..=n).map(|i| i as f64 * step).collect()
}

/// Speed and profile on the default grid `[-24, 24]`, spacing 0.01.
pub fn compute_profile(spec: &Nonlinearity) -> Result<WaveProfile> {
    spec.require_admissible()?;
    let kappa = minimal_speed(spec, 1e-11)?;
    reconstruct_profile(spec, kappa, &symmetric_grid(24.0, 0.01))
}

impl WaveProfile {
    /// `g(t)` with tail extrapolation outside the sampled range.
    pub fn value(&self, t: f64) -> f64 {
        let n = self.t_grid.len();
        if t < self.t_grid[0] {
            self.alpha_minus * (self.lower_rate() * t).exp()
        } else if t > self.t_grid[n - 1] {
            1.0 - self.alpha_plus * (-self.beta_plus * t).exp()
        } else {
            let i = bracket(&self.t_grid, t);
            hermite(
                self.t_grid[i],
                self.t_grid[i + 1],
                self.g_values[i],
                self.g_values[i + 1],
                self.g_prime[i],
                self.g_prime[i + 1],
                t,
            )
            .0
        }
    }

    /// Decay rate of the negative tail actually used for extrapolation.
    fn lower_rate(&self) -> f64 {
        // For ignition-type reactions the profile is exactly α e^{κ t}
        // below θ, which coincides with β₋ = κ since f'(0) = 0.
        self.beta_minus
    }

    /// The `t` with `g(t) = u`.
    pub fn inverse(&self, u: f64) -> Result<f64> {
        if !(u > 0.0 && u < 1.0) {
            return Err(domain(u, "(0, 1)"));
        }
        let n = self.t_grid.len();
        if u < self.g_values[0] {
            return Ok((u / self.alpha_minus).ln() / self.lower_rate());
        }
        if u > self.g_values[n - 1] {
            return Ok(-((1.0 - u) / self.alpha_plus).ln() / self.beta_plus);
        }
        let i = bracket(&self.g_values, u);
        let (t0, t1) = (self.t_grid[i], self.t_grid[i + 1]);
        let (g0, g1) = (self.g_values[i], self.g_values[i + 1]);
        let (d0, d1) = (self.g_prime[i], self.g_prime[i + 1]);
        // Safeguarded Newton on the Hermite piece.
        let mut a = t0;
        let mut b = t1;
        let mut t = t0 + (t1 - t0) * (u - g0) / (g1 - g0);
        for _ in 0..60 {
            let (v, dv) = hermite(t0, t1, g0, g1, d0, d1, t);
            let r = v - u;
            if r > 0.0 {
                b = t;
            } else {
                a = t;
            }
            let mut next = if dv > 0.0 { t - r / dv } else { 0.5 * (a + b) };
            if !(next > a && next < b) {
                next = 0.5 * (a + b);
            }
            if (next - t).abs() < 1e-15 * (1.0 + t.abs()) {
                t = next;
                break;
            }
            t = next;
        }
        Ok(t)
    }
}

pub fn profile_inverse(profile: &WaveProfile, u: f64) -> Result<f64> {
    profile.inverse(u)
}
