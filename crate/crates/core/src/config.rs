//! Run configuration in a `[section]` / `key = value` text format.
//!
//! ```text
//! [nonlinearity]
//! kind = bistable_cubic
//! theta = 0.25
//!
//! [grid]
//! extents = -50,150
//! dx = 0.1
//!
//! [initial]
//! kind = indicator
//! radius = 2
//! b = 0.05
//!
//! [time]
//! t_final = 250
//! ```
//!
//! Floats are written in shortest round-trip form, so
//! `parse(serialize(c)) == c` holds exactly.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::hamilton_jacobi::HJParams;
use crate::nonlinearity::{Nonlinearity, NonlinearityKind};
use crate::rd_solver::{init_indicator, Boundary, Field, Grid};
use crate::wave1d::{compute_profile, WaveProfile};

#[derive(Debug, Clone, PartialEq)]
pub struct NonlinearitySection {
    pub kind: NonlinearityKind,
    pub theta: Option<f64>,
    pub table: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSection {
    pub extents: Vec<(f64, f64)>,
    pub dx: f64,
    pub boundary: Boundary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialKind {
    /// `(1 − b)` on the ball of radius `radius`.
    Indicator,
    Constant,
    /// `g(ν·x − offset)` with `ν = (cos angle, sin angle)`.
    Planar,
    /// `max` of two planar profiles with normals at `±half_angle` from the
    /// last axis.
    VFront,
}

impl InitialKind {
    fn name(self) -> &'static str {
        match self {
            InitialKind::Indicator => "indicator",
            InitialKind::Constant => "constant",
            InitialKind::Planar => "planar",
            InitialKind::VFront => "v_front",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "indicator" => InitialKind::Indicator,
            "constant" => InitialKind::Constant,
            "planar" => InitialKind::Planar,
            "v_front" => InitialKind::VFront,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitialSection {
    pub kind: InitialKind,
    pub radius: Option<f64>,
    pub b: Option<f64>,
    pub value: Option<f64>,
    pub angle: Option<f64>,
    pub offset: Option<f64>,
    pub half_angle: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeSection {
    pub t_final: f64,
    /// Defaults to 90% of the stability bound.
    pub dt: Option<f64>,
    pub record_every: Option<usize>,
    /// Snapshots before this time are not recorded.
    pub record_start: Option<f64>,
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AnalysisSection {
    pub lambda: Option<Vec<f64>>,
    pub speed_window: Option<(f64, f64)>,
    pub cone_b: Option<f64>,
    pub cone_delta: Option<f64>,
    pub d_grace: Option<f64>,
    pub eps_ladder: Option<Vec<f64>>,
    pub window_half_width: Option<f64>,
    pub window_samples: Option<usize>,
    /// Physical time of the snapshot compared with the Hopf-Lax limit.
    pub compare_time: Option<f64>,
    pub kappa_star: Option<f64>,
    pub beta_plus: Option<f64>,
    pub beta_minus: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub nonlinearity: NonlinearitySection,
    pub grid: GridSection,
    pub initial: InitialSection,
    pub time: TimeSection,
    pub analysis: AnalysisSection,
}

/// One `key = value` entry with its line number.
#[derive(Debug, Clone)]
struct Entry {
    key: String,
    value: String,
    line: usize,
}

#[derive(Debug, Default)]
struct Section {
    name: String,
    line: usize,
    entries: Vec<Entry>,
    used: Vec<bool>,
}

impl Section {
    fn take(&mut self, key: &str) -> Option<Entry> {
        let i = self.entries.iter().position(|e| e.key == key)?;
        self.used[i] = true;
        Some(self.entries[i].clone())
    }

    fn finish(&self) -> Result<()> {
        if let Some(i) = self.used.iter().position(|u| !u) {
            let e = &self.entries[i];
            return Err(Error::Parse {
                line: e.line,
                message: format!("unknown key '{}' in [{}]", e.key, self.name),
            });
        }
        Ok(())
    }

    fn f64(&mut self, key: &str) -> Result<Option<f64>> {
        self.take(key)
            .map(|e| {
                e.value.parse::<f64>().map_err(|_| Error::Parse {
                    line: e.line,
                    message: format!("'{key}' is not a number: '{}'", e.value),
                })
            })
            .transpose()
    }

    fn usize(&mut self, key: &str) -> Result<Option<usize>> {
        self.take(key)
            .map(|e| {
                e.value.parse::<usize>().map_err(|_| Error::Parse {
                    line: e.line,
                    message: format!("'{key}' is not a non-negative integer: '{}'", e.value),
                })
            })
            .transpose()
    }

    fn list(&mut self, key: &str) -> Result<Option<Vec<f64>>> {
        self.take(key)
            .map(|e| {
                e.value
                    .split(',')
                    .map(|s| {
                        s.trim().parse::<f64>().map_err(|_| Error::Parse {
                            line: e.line,
                            message: format!("'{key}' has a non-numeric entry '{}'", s.trim()),
                        })
                    })
                    .collect()
            })
            .transpose()
    }

    fn pair(&mut self, key: &str) -> Result<Option<(f64, f64)>> {
        let line = self
            .entries
            .iter()
            .find(|e| e.key == key)
            .map_or(self.line, |e| e.line);
        match self.list(key)? {
            None => Ok(None),
            Some(v) if v.len() == 2 => Ok(Some((v[0], v[1]))),
            Some(_) => Err(Error::Parse {
                line,
                message: format!("'{key}' needs exactly two numbers"),
            }),
        }
    }

    fn required<T>(&self, key: &str, v: Option<T>) -> Result<T> {
        v.ok_or_else(|| Error::Parse {
            line: self.line,
            message: format!("[{}] is missing '{key}'", self.name),
        })
    }
}

fn split_sections(text: &str) -> Result<Vec<Section>> {
    let mut sections: Vec<Section> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(name) = content.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            let name = name.trim().to_string();
            if sections.iter().any(|s| s.name == name) {
                return Err(Error::Parse {
                    line,
                    message: format!("section [{name}] repeated"),
                });
            }
            sections.push(Section {
                name,
                line,
                ..Default::default()
            });
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| Error::Parse {
            line,
            message: format!("expected 'key = value', found '{content}'"),
        })?;
        let section = sections.last_mut().ok_or_else(|| Error::Parse {
            line,
            message: "entry before any [section]".into(),
        })?;
        let key = key.trim().to_string();
        if section.entries.iter().any(|e| e.key == key) {
            return Err(Error::Parse {
                line,
                message: format!("key '{key}' repeated"),
            });
        }
        section.entries.push(Entry {
            key,
            value: value.trim().to_string(),
            line,
        });
        section.used.push(false);
    }
    Ok(sections)
}

fn take_section(sections: &mut Vec<Section>, name: &str) -> Option<Section> {
    let i = sections.iter().position(|s| s.name == name)?;
    Some(sections.remove(i))
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut sections = split_sections(text)?;
        let missing = |name: &str| Error::Parse {
            line: 0,
            message: format!("missing section [{name}]"),
        };

        let mut s =
            take_section(&mut sections, "nonlinearity").ok_or_else(|| missing("nonlinearity"))?;
        let kind_entry = s.take("kind");
        let kind_entry = s.required("kind", kind_entry)?;
        let kind = match kind_entry.value.as_str() {
            "bistable_cubic" => NonlinearityKind::BistableCubic,
            "combustion" => NonlinearityKind::Combustion,
            "tabulated" => NonlinearityKind::Tabulated,
            other => {
                return Err(Error::Parse {
                    line: kind_entry.line,
                    message: format!("unknown nonlinearity kind '{other}'"),
                })
            }
        };
        let nonlinearity = NonlinearitySection {
            kind,
            theta: s.f64("theta")?,
            table: s.take("table").map(|e| PathBuf::from(e.value)),
        };
        s.finish()?;

        let mut s = take_section(&mut sections, "grid").ok_or_else(|| missing("grid"))?;
        let extents_entry = s.take("extents");
        let extents_entry = s.required("extents", extents_entry)?;
        let mut extents = Vec::new();
        for part in extents_entry.value.split(';') {
            let nums: Vec<&str> = part.split(',').collect();
            let parsed: std::result::Result<Vec<f64>, _> =
                nums.iter().map(|v| v.trim().parse::<f64>()).collect();
            match parsed {
                Ok(v) if v.len() == 2 => extents.push((v[0], v[1])),
                _ => {
                    return Err(Error::Parse {
                        line: extents_entry.line,
                        message: format!("bad extent '{part}'; expected 'min,max'"),
                    })
                }
            }
        }
        let dx = s.f64("dx")?;
        let dx = s.required("dx", dx)?;
        let boundary = match s.take("boundary") {
            None => Boundary::Neumann,
            Some(e) => e.value.parse().map_err(|_| Error::Parse {
                line: e.line,
                message: format!("unknown boundary '{}'", e.value),
            })?,
        };
        let grid = GridSection {
            extents,
            dx,
            boundary,
        };
        s.finish()?;

        let mut s = take_section(&mut sections, "initial").ok_or_else(|| missing("initial"))?;
        let kind_entry = s.take("kind");
        let kind_entry = s.required("kind", kind_entry)?;
        let kind = InitialKind::parse(&kind_entry.value).ok_or_else(|| Error::Parse {
            line: kind_entry.line,
            message: format!("unknown initial kind '{}'", kind_entry.value),
        })?;
        let initial = InitialSection {
            kind,
            radius: s.f64("radius")?,
            b: s.f64("b")?,
            value: s.f64("value")?,
            angle: s.f64("angle")?,
            offset: s.f64("offset")?,
            half_angle: s.f64("half_angle")?,
        };
        s.finish()?;

        let mut s = take_section(&mut sections, "time").ok_or_else(|| missing("time"))?;
        let t_final = s.f64("t_final")?;
        let time = TimeSection {
            t_final: s.required("t_final", t_final)?,
            dt: s.f64("dt")?,
            record_every: s.usize("record_every")?,
            record_start: s.f64("record_start")?,
            workers: s.usize("workers")?,
        };
        s.finish()?;

        let analysis = match take_section(&mut sections, "analysis") {
            None => AnalysisSection::default(),
            Some(mut s) => {
                let a = AnalysisSection {
                    lambda: s.list("lambda")?,
                    speed_window: s.pair("speed_window")?,
                    cone_b: s.f64("cone_b")?,
                    cone_delta: s.f64("cone_delta")?,
                    d_grace: s.f64("d_grace")?,
                    eps_ladder: s.list("eps_ladder")?,
                    window_half_width: s.f64("window_half_width")?,
                    window_samples: s.usize("window_samples")?,
                    compare_time: s.f64("compare_time")?,
                    kappa_star: s.f64("kappa_star")?,
                    beta_plus: s.f64("beta_plus")?,
                    beta_minus: s.f64("beta_minus")?,
                };
                s.finish()?;
                a
            }
        };
        if let Some(extra) = sections.first() {
            return Err(Error::Parse {
                line: extra.line,
                message: format!("unknown section [{}]", extra.name),
            });
        }
        Ok(Self {
            nonlinearity,
            grid,
            initial,
            time,
            analysis,
        })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let mut cfg = Self::parse(&crate::io::read_text(path)?)?;
        // Table paths are relative to the config file.
        if let (Some(table), Some(dir)) = (&cfg.nonlinearity.table, path.parent()) {
            if table.is_relative() {
                cfg.nonlinearity.table = Some(dir.join(table));
            }
        }
        Ok(cfg)
    }

    pub fn serialize(&self) -> String {
        fn list(v: &[f64]) -> String {
            v.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(",")
        }
        fn opt<T: std::fmt::Display>(out: &mut String, key: &str, v: &Option<T>) {
            if let Some(v) = v {
                let _ = writeln!(out, "{key} = {v}");
            }
        }
        let mut out = String::new();
        let n = &self.nonlinearity;
        let kind = match n.kind {
            NonlinearityKind::BistableCubic => "bistable_cubic",
            NonlinearityKind::Combustion => "combustion",
            NonlinearityKind::Tabulated => "tabulated",
        };
        let _ = writeln!(out, "[nonlinearity]\nkind = {kind}");
        opt(&mut out, "theta", &n.theta);
        opt(
            &mut out,
            "table",
            &n.table.as_ref().map(|p| p.display().to_string()),
        );

        let g = &self.grid;
        let extents: Vec<String> = g.extents.iter().map(|(a, b)| format!("{a},{b}")).collect();
        let _ = writeln!(
            out,
            "\n[grid]\nextents = {}\ndx = {}\nboundary = {}",
            extents.join(";"),
            g.dx,
            g.boundary
        );

        let i = &self.initial;
        let _ = writeln!(out, "\n[initial]\nkind = {}", i.kind.name());
        opt(&mut out, "radius", &i.radius);
        opt(&mut out, "b", &i.b);
        opt(&mut out, "value", &i.value);
        opt(&mut out, "angle", &i.angle);
        opt(&mut out, "offset", &i.offset);
        opt(&mut out, "half_angle", &i.half_angle);

        let t = &self.time;
        let _ = writeln!(out, "\n[time]\nt_final = {}", t.t_final);
        opt(&mut out, "dt", &t.dt);
        opt(&mut out, "record_every", &t.record_every);
        opt(&mut out, "record_start", &t.record_start);
        opt(&mut out, "workers", &t.workers);

        let a = &self.analysis;
        if *a != AnalysisSection::default() {
            out.push_str("\n[analysis]\n");
            opt(&mut out, "lambda", &a.lambda.as_deref().map(list));
            opt(
                &mut out,
                "speed_window",
                &a.speed_window.map(|(x, y)| format!("{x},{y}")),
            );
            opt(&mut out, "cone_b", &a.cone_b);
            opt(&mut out, "cone_delta", &a.cone_delta);
            opt(&mut out, "d_grace", &a.d_grace);
            opt(&mut out, "eps_ladder", &a.eps_ladder.as_deref().map(list));
            opt(&mut out, "window_half_width", &a.window_half_width);
            opt(&mut out, "window_samples", &a.window_samples);
            opt(&mut out, "compare_time", &a.compare_time);
            opt(&mut out, "kappa_star", &a.kappa_star);
            opt(&mut out, "beta_plus", &a.beta_plus);
            opt(&mut out, "beta_minus", &a.beta_minus);
        }
        out
    }

    pub fn build_spec(&self) -> Result<Nonlinearity> {
        let n = &self.nonlinearity;
        let theta = || {
            n.theta
                .ok_or_else(|| Error::InvalidSpec("this nonlinearity needs 'theta'".into()))
        };
        match n.kind {
            NonlinearityKind::BistableCubic => Nonlinearity::bistable_cubic(theta()?),
            NonlinearityKind::Combustion => Nonlinearity::combustion(theta()?),
            NonlinearityKind::Tabulated => {
                let path = n.table.as_ref().ok_or_else(|| {
                    Error::InvalidSpec("tabulated nonlinearity needs 'table'".into())
                })?;
                Nonlinearity::from_table_file(path)
            }
        }
    }

    pub fn build_grid(&self) -> Result<Grid> {
        Grid::new(self.grid.extents.clone(), self.grid.dx, self.grid.boundary)
    }

    /// Initial field; `profile` is computed on demand for planar data.
    pub fn build_initial(&self, grid: &Grid, spec: &Nonlinearity) -> Result<Field> {
        let i = &self.initial;
        let need = |name: &str, v: Option<f64>| {
            v.ok_or_else(|| {
                Error::Invalid(format!("initial data '{}' needs '{name}'", i.kind.name()))
            })
        };
        match i.kind {
            InitialKind::Indicator => {
                init_indicator(grid, need("radius", i.radius)?, need("b", i.b)?)
            }
            InitialKind::Constant => {
                let v = need("value", i.value)?;
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::Invalid(format!("constant value {v} outside [0, 1]")));
                }
                Ok(Field::constant(grid, v))
            }
            InitialKind::Planar => {
                let profile = compute_profile(spec)?;
                let angle = i.angle.unwrap_or(0.0);
                let offset = i.offset.unwrap_or(0.0);
                let nu = [angle.cos(), angle.sin()];
                Ok(Field::from_fn(grid, 0.0, |x| {
                    let z: f64 = x.iter().zip(nu).map(|(a, b)| a * b).sum();
                    profile.value(z - offset)
                }))
            }
            InitialKind::VFront => {
                if grid.dim() != 2 {
                    return Err(Error::Invalid(
                        "v_front initial data needs a 2D grid".into(),
                    ));
                }
                let profile = compute_profile(spec)?;
                let half = need("half_angle", i.half_angle)?;
                let offset = i.offset.unwrap_or(0.0);
                let (s, c) = half.sin_cos();
                Ok(Field::from_fn(grid, 0.0, |x| {
                    let a = profile.value(s * x[0] + c * x[1] - offset);
                    let b = profile.value(-s * x[0] + c * x[1] - offset);
                    a.max(b)
                }))
            }
        }
    }

    /// Hopf-Lax constants, with any overrides from `[analysis]`.
    pub fn hj_params(
        &self,
        spec: &Nonlinearity,
        kappa_star: f64,
        profile: Option<&WaveProfile>,
    ) -> Result<HJParams> {
        let base = match profile {
            Some(p) => HJParams::new(p.kappa_star, p.beta_plus, p.beta_minus, p.kappa_star)?,
            None => HJParams::from_spec(spec, kappa_star)?,
        };
        let a = &self.analysis;
        let ks = a.kappa_star.unwrap_or(base.kappa_star);
        HJParams::new(
            ks,
            a.beta_plus.unwrap_or(base.beta_plus),
            a.beta_minus.unwrap_or(base.beta_minus),
            ks,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const SAMPLE: &str = "\
# indicator run
[nonlinearity]
kind = bistable_cubic
theta = 0.25

[grid]
extents = -50,150
dx = 0.1

[initial]
kind = indicator
radius = 2
b = 0.05

[time]
t_final = 250
record_every = 250

[analysis]
lambda = 0.25,0.5
speed_window = 100,250
";

    #[test]
    fn parses_sample() {
        let c = RunConfig::parse(SAMPLE).unwrap();
        assert_eq!(c.nonlinearity.theta, Some(0.25));
        assert_eq!(c.grid.extents, vec![(-50.0, 150.0)]);
        assert_eq!(c.grid.boundary, Boundary::Neumann);
        assert_eq!(c.time.record_every, Some(250));
        assert_eq!(c.analysis.lambda, Some(vec![0.25, 0.5]));
        assert_eq!(c.analysis.speed_window, Some((100.0, 250.0)));
        assert_eq!(RunConfig::parse(&c.serialize()).unwrap(), c);
    }

    #[test]
    fn unknown_key_names_line() {
        let text = SAMPLE.replace("dx = 0.1", "dx = 0.1\nspacing = 3");
        match RunConfig::parse(&text) {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 9);
                assert!(message.contains("spacing"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_section_is_reported() {
        let text = SAMPLE.replace("[time]\nt_final = 250\nrecord_every = 250\n", "");
        assert!(matches!(RunConfig::parse(&text), Err(Error::Parse { .. })));
    }

    #[test]
    fn builds_indicator_initial_data() {
        let c = RunConfig::parse(SAMPLE).unwrap();
        let spec = c.build_spec().unwrap();
        let grid = c.build_grid().unwrap();
        let f = c.build_initial(&grid, &spec).unwrap();
        assert_eq!(f.values[500], 0.95);
        assert_eq!(f.values[600], 0.0);
    }

    fn arb_config() -> impl Strategy<Value = RunConfig> {
        (
            prop::option::of(0.01f64..0.49),
            -100.0f64..0.0,
            1e-3f64..1.0,
            prop::bool::ANY,
            prop::option::of(1e-3f64..100.0),
            1e-3f64..1e4,
            prop::option::of(1usize..10_000),
            prop::option::of(prop::collection::vec(0.01f64..0.99, 1..4)),
            prop::option::of((0.0f64..10.0, 10.0f64..100.0)),
            prop::option::of(1e-3f64..1.0),
        )
            .prop_map(
                |(theta, lo, dx, periodic, radius, t_final, every, lambda, window, ks)| RunConfig {
                    nonlinearity: NonlinearitySection {
                        kind: NonlinearityKind::BistableCubic,
                        theta,
                        table: None,
                    },
                    grid: GridSection {
                        extents: vec![(lo, -lo + 1.0), (lo * 0.5, 3.0)],
                        dx,
                        boundary: if periodic {
                            Boundary::Periodic
                        } else {
                            Boundary::Neumann
                        },
                    },
                    initial: InitialSection {
                        kind: InitialKind::Indicator,
                        radius,
                        b: Some(0.05),
                        value: None,
                        angle: None,
                        offset: None,
                        half_angle: None,
                    },
                    time: TimeSection {
                        t_final,
                        dt: None,
                        record_every: every,
                        record_start: None,
                        workers: None,
                    },
                    analysis: AnalysisSection {
                        lambda,
                        speed_window: window,
                        kappa_star: ks,
                        ..Default::default()
                    },
                },
            )
    }

    proptest! {
        #[test]
        fn config_round_trip(c in arb_config()) {
            let text = c.serialize();
            let back = RunConfig::parse(&text).unwrap();
            prop_assert_eq!(&back, &c);
            prop_assert_eq!(back.serialize(), text);
        }
    }
}
