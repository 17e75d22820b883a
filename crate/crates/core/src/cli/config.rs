//! INI run configuration.
//!
//! ```text
//! [model]    b, r, mu
//! [a] [d1] [d2]
//!            kind = constant | cosine | tabulated
//!            value | base, amplitude, modes | values, file
//! [grid]     dim, extents, counts
//! [init]     kind = midpoint | constant | cosine | tabulated | random
//!            u, v | u_base, u_amplitude, v_base, v_amplitude, modes
//!            | u_file, v_file | low, high, seed
//! [stepper]  dt = auto | <number>, t_end, record_every, scheme, snapshots
//! [solver]   tol, max_iter, method, t_max, bounds_tol, monotone_max_iter
//! [lyapunov] eta = auto | <number>, reference = steady | final
//! [check]    m
//! [output]   directory, prefix
//! ```
//!
//! Relative file paths resolve against the directory of the config file.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use ini::{Ini, Properties};

use crate::error::{Error, Result};
use crate::io::read_field;
use crate::model::{build_coefficient, CoefficientSpec, Grid, KineticParams, ModelSpec, State};
use crate::pde::{InitialCondition, Scheme, StepperConfig, DEFAULT_SEED};

#[derive(Debug, Clone, PartialEq)]
pub enum CoefficientSource {
    Spec(CoefficientSpec),
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitSource {
    /// Constant state at the midpoint of the bound quadruple.
    Midpoint,
    Condition(InitialCondition),
    Files { u: PathBuf, v: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DtChoice {
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepperSettings {
    pub dt: DtChoice,
    pub t_end: f64,
    pub record_every: usize,
    pub scheme: Scheme,
    pub snapshots: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SteadyChoice {
    Auto,
    Newton,
    Relaxation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverSettings {
    pub tol: f64,
    pub max_iter: usize,
    pub method: SteadyChoice,
    pub t_max: f64,
    pub bounds_tol: f64,
    pub monotone_max_iter: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReferenceChoice {
    Steady,
    Final,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovSettings {
    pub eta: Option<f64>,
    pub reference: ReferenceChoice,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub params: KineticParams,
    pub grid: Grid,
    pub a: CoefficientSource,
    pub d1: CoefficientSource,
    pub d2: CoefficientSource,
    pub init: InitSource,
    pub stepper: StepperSettings,
    pub solver: SolverSettings,
    pub lyapunov: LyapunovSettings,
    pub check_m: Option<f64>,
    pub directory: Option<PathBuf>,
    pub prefix: String,
}

const KNOWN: &[(&str, &[&str])] = &[
    ("model", &["b", "r", "mu"]),
    ("a", &["kind", "value", "base", "amplitude", "modes", "values", "file"]),
    ("d1", &["kind", "value", "base", "amplitude", "modes", "values", "file"]),
    ("d2", &["kind", "value", "base", "amplitude", "modes", "values", "file"]),
    ("grid", &["dim", "extents", "counts"]),
    (
        "init",
        &[
            "kind", "u", "v", "u_base", "u_amplitude", "v_base", "v_amplitude", "modes", "u_file", "v_file", "low",
            "high", "seed",
        ],
    ),
    ("stepper", &["dt", "t_end", "record_every", "scheme", "snapshots"]),
    ("solver", &["tol", "max_iter", "method", "t_max", "bounds_tol", "monotone_max_iter"]),
    ("lyapunov", &["eta", "reference"]),
    ("check", &["m"]),
    ("output", &["directory", "prefix"]),
];

struct Section<'a> {
    name: &'static str,
    props: Option<&'a Properties>,
}

impl<'a> Section<'a> {
    fn raw(&self, key: &str) -> Option<&'a str> {
        self.props.and_then(|p| p.get(key)).map(str::trim)
    }

    fn err(&self, key: &str, msg: impl std::fmt::Display) -> Error {
        Error::Config(format!("[{}] {key}: {msg}", self.name))
    }

    fn f64_opt(&self, key: &str) -> Result<Option<f64>> {
        self.raw(key)
            .map(|s| s.parse::<f64>().map_err(|_| self.err(key, format!("not a number: {s:?}"))))
            .transpose()
    }

    fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        Ok(self.f64_opt(key)?.unwrap_or(default))
    }

    fn f64_req(&self, key: &str) -> Result<f64> {
        self.f64_opt(key)?.ok_or_else(|| self.err(key, "missing"))
    }

    fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        match self.raw(key) {
            None => Ok(default),
            Some(s) => parse_count(s).ok_or_else(|| self.err(key, format!("not a count: {s:?}"))),
        }
    }

    fn list<T>(&self, key: &str, parse: impl Fn(&str) -> Option<T>) -> Result<Option<Vec<T>>> {
        let Some(s) = self.raw(key) else { return Ok(None) };
        s.split(',')
            .map(|item| parse(item.trim()).ok_or_else(|| self.err(key, format!("bad list item {:?}", item.trim()))))
            .collect::<Result<Vec<T>>>()
            .map(Some)
    }

    fn str_or(&self, key: &str, default: &'a str) -> &'a str {
        self.raw(key).unwrap_or(default)
    }

    fn path(&self, key: &str, base: &Path) -> Option<PathBuf> {
        self.raw(key).map(|p| base.join(p))
    }
}

/// Integer count, also accepting integral decimals such as `1e8`.
fn parse_count(s: &str) -> Option<usize> {
    if let Ok(n) = s.parse::<usize>() {
        return Some(n);
    }
    let x: f64 = s.parse().ok()?;
    (x >= 0.0 && x.fract() == 0.0 && x <= usize::MAX as f64).then_some(x as usize)
}

fn parse_bool(s: &str) -> Option<bool> {
    match s.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Some(true),
        "false" | "no" | "0" | "off" => Some(false),
        _ => None,
    }
}

fn coefficient(sec: &Section, base: &Path, default: f64) -> Result<CoefficientSource> {
    if sec.props.is_none() {
        return Ok(CoefficientSource::Spec(CoefficientSpec::Constant(default)));
    }
    let spec = match sec.str_or("kind", "constant") {
        "constant" => CoefficientSpec::Constant(sec.f64_req("value")?),
        "cosine" => CoefficientSpec::Cosine {
            base: sec.f64_req("base")?,
            amplitude: sec.f64_req("amplitude")?,
            modes: sec
                .list("modes", |s| s.parse::<u32>().ok())?
                .ok_or_else(|| sec.err("modes", "missing"))?,
        },
        "tabulated" => {
            if let Some(path) = sec.path("file", base) {
                return Ok(CoefficientSource::File(path));
            }
            CoefficientSpec::Tabulated(
                sec.list("values", |s| s.parse::<f64>().ok())?
                    .ok_or_else(|| sec.err("values", "missing (or give file)"))?,
            )
        }
        other => return Err(sec.err("kind", format!("unknown kind {other:?}"))),
    };
    Ok(CoefficientSource::Spec(spec))
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let ini = Ini::load_from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        for (name, props) in ini.iter() {
            let Some(name) = name else {
                if props.iter().next().is_some() {
                    return Err(Error::Config("keys outside any section".into()));
                }
                continue;
            };
            let Some((_, keys)) = KNOWN.iter().find(|(s, _)| *s == name) else {
                return Err(Error::Config(format!("unknown section [{name}]")));
            };
            let allowed: BTreeSet<&str> = keys.iter().copied().collect();
            for (key, _) in props.iter() {
                if !allowed.contains(key) {
                    return Err(Error::Config(format!("[{name}] unknown key {key:?}")));
                }
            }
        }
        let sec = |name: &'static str| Section {
            name,
            props: ini.section(Some(name)),
        };
        let model = sec("model");
        let params = KineticParams::new(model.f64_req("b")?, model.f64_or("r", 0.0)?, model.f64_or("mu", 1.0)?)?;

        let g = sec("grid");
        let extents = g.list("extents", |s| s.parse::<f64>().ok())?.unwrap_or_else(|| vec![1.0]);
        let counts = g.list("counts", parse_count)?.unwrap_or_else(|| vec![101]);
        let dim = g.usize_or("dim", extents.len())?;
        if extents.len() != dim || counts.len() != dim {
            return Err(Error::Config(format!(
                "[grid] dim = {dim} but {} extents and {} counts",
                extents.len(),
                counts.len()
            )));
        }
        let grid = Grid::new(&extents, &counts)?;

        let init = {
            let s = sec("init");
            match s.str_or("kind", "midpoint") {
                "midpoint" => InitSource::Midpoint,
                "constant" => InitSource::Condition(InitialCondition::Constant {
                    u: s.f64_req("u")?,
                    v: s.f64_req("v")?,
                }),
                "cosine" => InitSource::Condition(InitialCondition::Cosine {
                    u_base: s.f64_req("u_base")?,
                    u_amplitude: s.f64_or("u_amplitude", 0.0)?,
                    v_base: s.f64_req("v_base")?,
                    v_amplitude: s.f64_or("v_amplitude", 0.0)?,
                    modes: s
                        .list("modes", |x| x.parse::<u32>().ok())?
                        .unwrap_or_else(|| vec![1; dim]),
                }),
                "tabulated" => InitSource::Files {
                    u: s.path("u_file", base).ok_or_else(|| s.err("u_file", "missing"))?,
                    v: s.path("v_file", base).ok_or_else(|| s.err("v_file", "missing"))?,
                },
                "random" => InitSource::Condition(InitialCondition::Random {
                    low: s.f64_or("low", 0.1)?,
                    high: s.f64_or("high", 2.0)?,
                    seed: match s.raw("seed") {
                        None => DEFAULT_SEED,
                        Some(x) => x.parse().map_err(|_| s.err("seed", format!("not an integer: {x:?}")))?,
                    },
                }),
                other => return Err(s.err("kind", format!("unknown kind {other:?}"))),
            }
        };

        let st = sec("stepper");
        let dt = match st.str_or("dt", "auto") {
            "auto" => DtChoice::Auto,
            x => DtChoice::Fixed(x.parse().map_err(|_| st.err("dt", format!("not a number: {x:?}")))?),
        };
        let scheme = match st.str_or("scheme", "rk4") {
            "rk4" => Scheme::Rk4,
            "euler" => Scheme::Euler,
            other => return Err(st.err("scheme", format!("unknown scheme {other:?}"))),
        };
        let stepper = StepperSettings {
            dt,
            t_end: st.f64_or("t_end", 100.0)?,
            record_every: st.usize_or("record_every", 100)?,
            scheme,
            snapshots: match st.raw("snapshots") {
                None => false,
                Some(x) => parse_bool(x).ok_or_else(|| st.err("snapshots", format!("not a boolean: {x:?}")))?,
            },
        };
        if !(stepper.t_end > 0.0) || stepper.record_every == 0 {
            return Err(Error::Config("[stepper] t_end and record_every must be positive".into()));
        }

        let so = sec("solver");
        let solver = SolverSettings {
            tol: so.f64_or("tol", 1e-10)?,
            max_iter: so.usize_or("max_iter", 50)?,
            method: match so.str_or("method", "auto") {
                "auto" => SteadyChoice::Auto,
                "newton" => SteadyChoice::Newton,
                "relaxation" => SteadyChoice::Relaxation,
                other => return Err(so.err("method", format!("unknown method {other:?}"))),
            },
            t_max: so.f64_or("t_max", 1e4)?,
            bounds_tol: so.f64_or("bounds_tol", 1e-10)?,
            monotone_max_iter: so.usize_or("monotone_max_iter", 100_000_000)?,
        };
        if !(solver.tol > 0.0 && solver.bounds_tol > 0.0 && solver.t_max > 0.0) {
            return Err(Error::Config("[solver] tolerances and t_max must be positive".into()));
        }

        let ly = sec("lyapunov");
        let lyapunov = LyapunovSettings {
            eta: match ly.str_or("eta", "auto") {
                "auto" => None,
                x => Some(x.parse().map_err(|_| ly.err("eta", format!("not a number: {x:?}")))?),
            },
            reference: match ly.str_or("reference", "steady") {
                "steady" => ReferenceChoice::Steady,
                "final" => ReferenceChoice::Final,
                other => return Err(ly.err("reference", format!("unknown reference {other:?}"))),
            },
        };

        let out = sec("output");
        Ok(RunConfig {
            params,
            grid,
            a: coefficient(&sec("a"), base, 1.0)?,
            d1: coefficient(&sec("d1"), base, 1.0)?,
            d2: coefficient(&sec("d2"), base, 1.0)?,
            init,
            stepper,
            solver,
            lyapunov,
            check_m: sec("check").f64_opt("m")?,
            directory: out.raw("directory").map(|d| base.join(d)),
            prefix: out.str_or("prefix", "run").to_string(),
        })
    }

    fn build(&self, source: &CoefficientSource) -> Result<crate::model::ScalarField> {
        match source {
            CoefficientSource::Spec(spec) => build_coefficient(spec, &self.grid),
            CoefficientSource::File(path) => {
                let field = read_field(path, &self.grid)?;
                build_coefficient(&CoefficientSpec::Tabulated(field.into_values()), &self.grid)
            }
        }
    }

    pub fn model(&self) -> Result<ModelSpec> {
        ModelSpec::new(self.params, self.build(&self.a)?, self.build(&self.d1)?, self.build(&self.d2)?)
    }

    /// Initial state; `midpoint` needs the quadruple midpoint values.
    pub fn initial_state(&self, midpoint: Option<(f64, f64)>) -> Result<State> {
        match &self.init {
            InitSource::Midpoint => {
                let (u, v) = midpoint.ok_or_else(|| {
                    Error::Config("[init] kind = midpoint needs the bound quadruple, which does not exist here".into())
                })?;
                State::constant(self.grid, u, v)
            }
            InitSource::Condition(ic) => ic.build(&self.grid),
            InitSource::Files { u, v } => State::new(read_field(u, &self.grid)?, read_field(v, &self.grid)?, 0.0),
        }
    }

    pub fn stepper_config(&self, model: &ModelSpec, keep_states: bool) -> Result<StepperConfig> {
        let mut cfg = StepperConfig::auto(model, self.stepper.t_end, self.stepper.record_every);
        cfg.scheme = self.stepper.scheme;
        cfg.keep_states = keep_states;
        if let DtChoice::Fixed(dt) = self.stepper.dt {
            cfg.dt = dt;
        }
        cfg.validate(model)?;
        Ok(cfg)
    }

    pub fn output_dir(&self, flag: Option<&Path>) -> PathBuf {
        flag.map(Path::to_path_buf)
            .or_else(|| self.directory.clone())
            .unwrap_or_else(|| PathBuf::from("."))
    }
}
