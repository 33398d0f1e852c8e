//! Line-oriented `key = value` scenario files.
//!
//! Blank lines and lines starting with `#` are ignored. Every key may appear
//! at most once.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::diagnostics::ConstraintMode;
use crate::operators::BcForm;
use crate::timestepper::{
    DomainSpec, InitSpec, Restart, RunParams, ScenarioConfig, DEFAULT_BLOWUP_FACTOR,
};

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Line { line: usize, msg: String },
    #[error("{0}")]
    Invalid(String),
    #[error("cannot read {path}: {msg}")]
    Io { path: String, msg: String },
}

const KEYS: &[&str] = &[
    "domain.a",
    "domain.b",
    "domain.c",
    "domain.beta",
    "basis.degree",
    "bc.form",
    "physics.nu_inverse",
    "physics.eps_p",
    "physics.advection",
    "init.type",
    "init.amplitude",
    "init.omega",
    "init.path",
    "init.eps_p",
    "time.dt",
    "time.t_end",
    "time.record_every",
    "time.blowup_factor",
    "restart.time",
    "restart.omega",
    "constraint.mode",
    "output.path",
];

struct Entries {
    values: HashMap<&'static str, (usize, String)>,
}

impl Entries {
    fn raw(&self, key: &str) -> Option<&(usize, String)> {
        self.values.get(key)
    }

    fn has(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        match self.raw(key) {
            None => Ok(None),
            Some((line, v)) => v.parse::<T>().map(Some).map_err(|e| ConfigError::Line {
                line: *line,
                msg: format!("{key}: cannot parse '{v}': {e}"),
            }),
        }
    }

    fn require<T: std::str::FromStr>(&self, key: &str) -> Result<T, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        self.parse(key)?
            .ok_or_else(|| ConfigError::Invalid(format!("missing required key {key}")))
    }

    fn line_error(&self, key: &str, msg: String) -> ConfigError {
        match self.raw(key) {
            Some((line, _)) => ConfigError::Line { line: *line, msg },
            None => ConfigError::Invalid(msg),
        }
    }
}

fn tokenize(text: &str) -> Result<Entries, ConfigError> {
    let mut values = HashMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let s = raw.trim();
        if s.is_empty() || s.starts_with('#') {
            continue;
        }
        let (k, v) = s.split_once('=').ok_or_else(|| ConfigError::Line {
            line,
            msg: format!("expected 'key = value', got '{s}'"),
        })?;
        let (k, v) = (k.trim(), v.trim());
        let key = KEYS
            .iter()
            .find(|known| **known == k)
            .ok_or_else(|| ConfigError::Line {
                line,
                msg: format!("unknown key '{k}'"),
            })?;
        if v.is_empty() {
            return Err(ConfigError::Line {
                line,
                msg: format!("{k}: empty value"),
            });
        }
        if values.insert(*key, (line, v.to_string())).is_some() {
            return Err(ConfigError::Line {
                line,
                msg: format!("duplicate key '{k}'"),
            });
        }
    }
    Ok(Entries { values })
}

/// Parses a scenario; relative `init.path` and `output.path` resolve
/// against `base` when given.
pub fn parse_config(text: &str, base: Option<&Path>) -> Result<ScenarioConfig, ConfigError> {
    let e = tokenize(text)?;
    let resolve = |p: String| -> PathBuf {
        let p = PathBuf::from(p);
        match base {
            Some(b) if p.is_relative() => b.join(p),
            _ => p,
        }
    };

    let has_axes = ["domain.a", "domain.b", "domain.c"]
        .iter()
        .any(|k| e.has(k));
    let domain = match (has_axes, e.has("domain.beta")) {
        (true, true) => {
            return Err(e.line_error(
                "domain.beta",
                "domain.beta and explicit axes are mutually exclusive".into(),
            ))
        }
        (false, false) => {
            return Err(ConfigError::Invalid(
                "missing domain: give domain.beta or domain.a/b/c".into(),
            ))
        }
        (false, true) => DomainSpec::Beta(e.require("domain.beta")?),
        (true, false) => DomainSpec::Axes([
            e.require("domain.a")?,
            e.require("domain.b")?,
            e.require("domain.c")?,
        ]),
    };

    let degree: usize = e.require("basis.degree")?;
    if degree == 0 {
        return Err(e.line_error("basis.degree", "basis.degree must be at least 1".into()));
    }

    let bc = match e.raw("bc.form") {
        None => BcForm::StressFree,
        Some((line, v)) => BcForm::from_name(v).ok_or_else(|| ConfigError::Line {
            line: *line,
            msg: format!("unknown bc.form '{v}'"),
        })?,
    };

    let nu_inverse: f64 = e.parse("physics.nu_inverse")?.unwrap_or(1.0);
    if !(nu_inverse > 0.0) || !nu_inverse.is_finite() {
        return Err(e.line_error(
            "physics.nu_inverse",
            "physics.nu_inverse must be positive".into(),
        ));
    }
    let eps_p: f64 = e.parse("physics.eps_p")?.unwrap_or(0.0);
    let advection: bool = e.parse("physics.advection")?.unwrap_or(true);

    let amplitude: Option<f64> = e.parse("init.amplitude")?;
    let omega: Option<f64> = e.parse("init.omega")?;
    let init = match e.raw("init.type").map(|(l, v)| (*l, v.as_str())) {
        None | Some((_, "solid_rotation")) => InitSpec::SolidRotation {
            amplitude: amplitude.unwrap_or(0.1),
        },
        Some((_, "poincare")) => InitSpec::Poincare,
        Some((_, "poincare_plus_rotation")) => InitSpec::PoincarePlusRotation {
            omega: omega.ok_or_else(|| {
                ConfigError::Invalid("init.type poincare_plus_rotation needs init.omega".into())
            })?,
        },
        Some((_, "eigenmode")) => InitSpec::Eigenmode {
            amplitude: amplitude.unwrap_or(0.1),
        },
        Some((_, "coefficients")) => {
            InitSpec::Coefficients(resolve(e.require::<String>("init.path").map_err(|_| {
                ConfigError::Invalid("init.type coefficients needs init.path".into())
            })?))
        }
        Some((line, other)) => {
            return Err(ConfigError::Line {
                line,
                msg: format!("unknown init.type '{other}'"),
            })
        }
    };

    let dt: f64 = e.parse("time.dt")?.unwrap_or(0.01);
    let t_end: f64 = e.parse("time.t_end")?.unwrap_or(1.0);
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(e.line_error("time.dt", "time.dt must be positive".into()));
    }
    if !(t_end > 0.0) || !t_end.is_finite() {
        return Err(e.line_error("time.t_end", "time.t_end must be positive".into()));
    }
    let record_every: usize = e.parse("time.record_every")?.unwrap_or(1);
    if record_every == 0 {
        return Err(e.line_error(
            "time.record_every",
            "time.record_every must be at least 1".into(),
        ));
    }
    let blowup_factor: f64 = e
        .parse("time.blowup_factor")?
        .unwrap_or(DEFAULT_BLOWUP_FACTOR);
    if !(blowup_factor > 1.0) {
        return Err(e.line_error(
            "time.blowup_factor",
            "time.blowup_factor must exceed 1".into(),
        ));
    }

    let restart = match (
        e.parse::<f64>("restart.time")?,
        e.parse::<f64>("restart.omega")?,
    ) {
        (None, None) => None,
        (Some(time), Some(omega)) => {
            if !(0.0..=t_end).contains(&time) {
                return Err(e.line_error(
                    "restart.time",
                    format!("restart.time {time} outside [0, {t_end}]"),
                ));
            }
            Some(Restart { time, omega })
        }
        _ => {
            return Err(ConfigError::Invalid(
                "restart.time and restart.omega go together".into(),
            ))
        }
    };

    let constraint = match e.raw("constraint.mode") {
        None => None,
        Some((_, v)) if v == "none" => None,
        Some((line, v)) => Some(
            ConstraintMode::from_name(v).ok_or_else(|| ConfigError::Line {
                line: *line,
                msg: format!("unknown constraint.mode '{v}'"),
            })?,
        ),
    };

    let output = e.raw("output.path").map(|(_, v)| resolve(v.clone()));

    Ok(ScenarioConfig {
        domain,
        degree,
        bc,
        nu_inverse,
        eps_p,
        init,
        init_eps_p: e.parse("init.eps_p")?,
        run: RunParams {
            dt,
            t_end,
            record_every,
            restart,
            constraint,
            advection,
            blowup_factor,
        },
        output,
    })
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
        path: path.display().to_string(),
        msg: e.to_string(),
    })?;
    parse_config(&text, None)
}
