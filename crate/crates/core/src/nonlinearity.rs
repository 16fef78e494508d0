//! Reaction terms `f(u)` on `[0, 1]` and checks of the structural
//! hypotheses the front-propagation results rely on:
//!
//! * (F1) `f(0) = f(1) = 0`, Lipschitz on `[0, 1]`;
//! * (F2) `f'(1) < 0`;
//! * (F3) `∫₀¹ f > 0`;
//! * (F4) `f > 0` on `(θ, 1)` and either `f < 0` on `(0, θ)` with
//!   `f'(0) < 0` (bistable) or `f ≡ 0` on `(0, θ)` (combustion).

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{domain, Error, Result};
use crate::numerics::{bracket, hermite, integrate, pchip_slopes};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NonlinearityKind {
    BistableCubic,
    Combustion,
    Tabulated,
}

/// Sampled `(u, f(u))` pairs with a monotone-cubic interpolant.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    u: Vec<f64>,
    f: Vec<f64>,
    slopes: Vec<f64>,
    source: Option<PathBuf>,
}

impl Table {
    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn f(&self) -> &[f64] {
        &self.f
    }

    pub fn source(&self) -> Option<&Path> {
        self.source.as_deref()
    }

    fn eval(&self, u: f64) -> f64 {
        let i = bracket(&self.u, u);
        hermite(
            self.u[i],
            self.u[i + 1],
            self.f[i],
            self.f[i + 1],
            self.slopes[i],
            self.slopes[i + 1],
            u,
        )
        .0
    }
}

/// An admissible reaction term. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Nonlinearity {
    kind: NonlinearityKind,
    theta: f64,
    table: Option<Table>,
    lipschitz: f64,
}

const FD_STEP: f64 = 1e-6;

impl Nonlinearity {
    /// `f(u) = u (u - θ)(1 - u)` with `θ ∈ (0, 1/2)`.
    pub fn bistable_cubic(theta: f64) -> Result<Self> {
        if !(theta > 0.0 && theta < 0.5) {
            return Err(Error::InvalidSpec(format!(
                "bistable cubic needs theta in (0, 0.5), got {theta}"
            )));
        }
        Ok(Self::finish(NonlinearityKind::BistableCubic, theta, None))
    }

    /// `f ≡ 0` on `[0, θ]`, `f(u) = (u - θ)(1 - u)` on `(θ, 1]`.
    pub fn combustion(theta: f64) -> Result<Self> {
        if !(theta > 0.0 && theta < 1.0) {
            return Err(Error::InvalidSpec(format!(
                "combustion needs theta in (0, 1), got {theta}"
            )));
        }
        Ok(Self::finish(NonlinearityKind::Combustion, theta, None))
    }

    /// Tabulated nonlinearity. The `u` grid must be strictly increasing and
    /// span exactly `[0, 1]`. Endpoint values are checked by
    /// [`check_hypotheses`](Self::check_hypotheses), not here.
    pub fn tabulated(u: Vec<f64>, f: Vec<f64>) -> Result<Self> {
        if u.len() < 3 || u.len() != f.len() {
            return Err(Error::InvalidSpec(
                "table needs at least 3 (u, f) pairs".into(),
            ));
        }
        if u.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidSpec("table u grid is not increasing".into()));
        }
        if u[0] != 0.0 || *u.last().unwrap() != 1.0 {
            return Err(Error::InvalidSpec("table u grid must span [0, 1]".into()));
        }
        if f.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSpec("table has non-finite values".into()));
        }
        let slopes = pchip_slopes(&u, &f);
        let theta = infer_theta(&u, &f);
        let table = Table {
            u,
            f,
            slopes,
            source: None,
        };
        Ok(Self::finish(
            NonlinearityKind::Tabulated,
            theta,
            Some(table),
        ))
    }

    /// Reads a two-column CSV of `u, f(u)` rows (`#` comments and a
    /// non-numeric header line are skipped).
    pub fn from_table_file(path: &Path) -> Result<Self> {
        let text = crate::io::read_text(path)?;
        let mut u = Vec::new();
        let mut f = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut cols = line
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|s| !s.is_empty());
            let (a, b) = match (cols.next(), cols.next()) {
                (Some(a), Some(b)) => (a, b),
                _ => {
                    return Err(Error::Parse {
                        line: lineno + 1,
                        message: "expected two columns".into(),
                    })
                }
            };
            match (a.parse::<f64>(), b.parse::<f64>()) {
                (Ok(a), Ok(b)) => {
                    u.push(a);
                    f.push(b);
                }
                _ if u.is_empty() => continue,
                _ => {
                    return Err(Error::Parse {
                        line: lineno + 1,
                        message: format!("cannot parse '{line}'"),
                    })
                }
            }
        }
        let mut spec = Self::tabulated(u, f)?;
        if let Some(t) = spec.table.as_mut() {
            t.source = Some(path.to_path_buf());
        }
        Ok(spec)
    }

    fn finish(kind: NonlinearityKind, theta: f64, table: Option<Table>) -> Self {
        let mut spec = Self {
            kind,
            theta,
            table,
            lipschitz: 0.0,
        };
        // Secant slopes on a fine grid bound the Lipschitz constant from
        // below; the small factor covers the sub-grid remainder.
        let n = 20_000;
        let mut lip: f64 = 0.0;
        let mut prev = spec.value(0.0);
        for i in 1..=n {
            let u = i as f64 / n as f64;
            let v = spec.value(u);
            lip = lip.max((v - prev).abs() * n as f64);
            prev = v;
        }
        spec.lipschitz = lip * 1.001;
        spec
    }

    pub fn kind(&self) -> NonlinearityKind {
        self.kind
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn table(&self) -> Option<&Table> {
        self.table.as_ref()
    }

    /// Lipschitz constant of `f` on `[0, 1]`.
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    /// True when `f ≡ 0` on `[0, θ]` (ignition-type reaction).
    pub fn vanishes_below_theta(&self) -> bool {
        match self.kind {
            NonlinearityKind::BistableCubic => false,
            NonlinearityKind::Combustion => true,
            NonlinearityKind::Tabulated => {
                let t = self.table.as_ref().unwrap();
                t.u.iter()
                    .zip(&t.f)
                    .filter(|(u, _)| **u <= self.theta)
                    .all(|(_, f)| *f == 0.0)
            }
        }
    }

    /// `f(u)` without the domain check. Used by the solver's inner loop,
    /// which keeps `u ∈ [0, 1]` by construction.
    #[inline]
    pub fn value(&self, u: f64) -> f64 {
        match self.kind {
            NonlinearityKind::BistableCubic => u * (u - self.theta) * (1.0 - u),
            NonlinearityKind::Combustion => {
                if u <= self.theta {
                    0.0
                } else {
                    (u - self.theta) * (1.0 - u)
                }
            }
            NonlinearityKind::Tabulated => self.table.as_ref().unwrap().eval(u),
        }
    }

    /// `f(u)` for `u ∈ [0, 1]`.
    pub fn eval(&self, u: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&u) {
            return Err(domain(u, "[0, 1]"));
        }
        Ok(self.value(u))
    }

    /// `f'(u)`. Exact for the built-in kinds; centered differences of the
    /// interpolant for tables. Combustion at `u = θ` reports both one-sided
    /// derivatives as an error.
    pub fn eval_derivative(&self, u: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&u) {
            return Err(domain(u, "[0, 1]"));
        }
        let theta = self.theta;
        match self.kind {
            NonlinearityKind::BistableCubic => Ok(-3.0 * u * u + 2.0 * (1.0 + theta) * u - theta),
            NonlinearityKind::Combustion => {
                if u < theta {
                    Ok(0.0)
                } else if u > theta {
                    Ok(1.0 + theta - 2.0 * u)
                } else {
                    Err(Error::OneSidedDerivative {
                        at: theta,
                        left: 0.0,
                        right: 1.0 - theta,
                    })
                }
            }
            NonlinearityKind::Tabulated => {
                let lo = (u - FD_STEP).max(0.0);
                let hi = (u + FD_STEP).min(1.0);
                Ok((self.value(hi) - self.value(lo)) / (hi - lo))
            }
        }
    }

    /// `f'(0)`, taken from the right.
    pub fn derivative_at_zero(&self) -> f64 {
        match self.eval_derivative(0.0) {
            Ok(v) => v,
            Err(Error::OneSidedDerivative { right, .. }) => right,
            Err(_) => unreachable!(),
        }
    }

    /// `f'(1)`, taken from the left.
    pub fn derivative_at_one(&self) -> f64 {
        match self.eval_derivative(1.0) {
            Ok(v) => v,
            Err(Error::OneSidedDerivative { left, .. }) => left,
            Err(_) => unreachable!(),
        }
    }

    /// `∫₀¹ f(u) du`.
    pub fn integral(&self) -> f64 {
        const TOL: f64 = 1e-13;
        match self.kind {
            NonlinearityKind::BistableCubic => integrate(|u| self.value(u), 0.0, 1.0, TOL),
            NonlinearityKind::Combustion => integrate(|u| self.value(u), self.theta, 1.0, TOL),
            NonlinearityKind::Tabulated => {
                let t = self.table.as_ref().unwrap();
                let tol = TOL / t.u.len() as f64;
                t.u.windows(2)
                    .map(|w| integrate(|u| self.value(u), w[0], w[1], tol))
                    .sum()
            }
        }
    }

    pub fn check_hypotheses(&self) -> Result<HypothesisReport> {
        let f0 = self.value(0.0);
        let f1 = self.value(1.0);
        if self.kind == NonlinearityKind::Tabulated && (f0 != 0.0 || f1 != 0.0) {
            return Err(Error::InvalidSpec(format!(
                "table must vanish at both ends, got f(0) = {f0}, f(1) = {f1}"
            )));
        }
        let integral = self.integral();
        let fp0 = self.derivative_at_zero();
        let fp1 = self.derivative_at_one();
        let mut notes = Vec::new();

        let f1_pass = f0 == 0.0 && f1 == 0.0 && self.lipschitz.is_finite();

        let f2_pass = fp1 < 0.0;
        if !f2_pass {
            notes.push(format!("f'(1) = {fp1} is not negative"));
        }

        let f3_pass = integral > 0.0;
        if !f3_pass {
            notes.push(format!("integral of f is {integral}, not positive"));
        }

        let f4_pass = self.sign_pattern_holds(10_000, fp0, &mut notes);

        Ok(HypothesisReport {
            f3_integral: integral,
            f_prime_0: fp0,
            f_prime_1: fp1,
            passes: HypothesisPasses {
                f1: f1_pass,
                f2: f2_pass,
                f3: f3_pass,
                f4: f4_pass,
            },
            notes: notes.join("; "),
        })
    }

    fn sign_pattern_holds(&self, samples: usize, fp0: f64, notes: &mut Vec<String>) -> bool {
        let theta = self.theta;
        let flat = self.vanishes_below_theta();
        if !flat && fp0 >= 0.0 {
            notes.push(format!("f'(0) = {fp0} is not negative"));
            return false;
        }
        for i in 0..samples {
            let u = (i as f64 + 0.5) / samples as f64;
            if u == theta {
                continue;
            }
            let v = self.value(u);
            let ok = if u > theta {
                v > 0.0
            } else if flat {
                v == 0.0
            } else {
                v < 0.0
            };
            if !ok {
                notes.push(format!("sign pattern broken at u = {u} (f = {v})"));
                return false;
            }
        }
        true
    }

    /// Fails with `InvalidSpec` unless (F1)-(F4) all hold.
    pub fn require_admissible(&self) -> Result<HypothesisReport> {
        let report = self.check_hypotheses()?;
        if report.all_pass() {
            Ok(report)
        } else {
            Err(Error::InvalidSpec(report.notes.clone()))
        }
    }
}

fn infer_theta(u: &[f64], f: &[f64]) -> f64 {
    // Last grid node in (0, 1) where f <= 0; refine by linear root.
    let n = u.len();
    let mut k = 0;
    for (i, &fi) in f.iter().enumerate().take(n - 1).skip(1) {
        if fi <= 0.0 {
            k = i;
        }
    }
    if f[k] < 0.0 && f[k + 1] > 0.0 {
        u[k] + (u[k + 1] - u[k]) * (-f[k]) / (f[k + 1] - f[k])
    } else {
        u[k]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HypothesisPasses {
    pub f1: bool,
    pub f2: bool,
    pub f3: bool,
    pub f4: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HypothesisReport {
    pub f3_integral: f64,
    pub f_prime_0: f64,
    pub f_prime_1: f64,
    pub passes: HypothesisPasses,
    pub notes: String,
}

impl HypothesisReport {
    pub fn all_pass(&self) -> bool {
        let p = self.passes;
        p.f1 && p.f2 && p.f3 && p.f4
    }
}
