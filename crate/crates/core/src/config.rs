//! `key = value` run configuration with `#` comments.
//!
//! Values are applied in order: defaults, then the file, then command-line
//! overrides. Every key is range-checked as it is applied so that errors can
//! point at the offending line.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use crate::trainer::TrainConfig;

/// Where a setting came from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Origin {
    Line(usize),
    Flag,
    Combined,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::Line(n) => write!(f, "line {n}"),
            Origin::Flag => f.write_str("command line"),
            Origin::Combined => f.write_str("configuration"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{origin}: unknown key `{key}`")]
    UnknownKey { origin: Origin, key: String },
    #[error("{origin}: `{key}` expects {expected}, got `{value}`")]
    TypeError { origin: Origin, key: String, expected: &'static str, value: String },
    #[error("{origin}: `{key}` {msg}")]
    RangeError { origin: Origin, key: String, msg: String },
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

/// Every recognized key, in manifest order.
pub const KEYS: &[&str] = &[
    "steps",
    "batch",
    "n_probes",
    "gamma",
    "lr",
    "beta",
    "sigma_min",
    "seed",
    "variant",
    "advantage",
    "optimizer",
    "checkpoint_every",
    "d_feat",
    "d_rep",
    "d_attn",
    "d_loc",
    "px",
    "ulen_max",
    "workspace_half",
    "x_init_min",
    "x_init_max",
    "y_init_min",
    "y_init_max",
    "z_init_min",
    "z_init_max",
    "rx_max",
    "ry_max",
    "rz_max",
    "test_rz_min",
    "test_rz_max",
    "test_x_min",
    "test_x_max",
];

fn parse<T: std::str::FromStr>(
    origin: &Origin,
    key: &str,
    value: &str,
    expected: &'static str,
) -> Result<T, ConfigError> {
    value.parse::<T>().map_err(|_| ConfigError::TypeError {
        origin: origin.clone(),
        key: key.to_string(),
        expected,
        value: value.to_string(),
    })
}

fn check(origin: &Origin, key: &str, ok: bool, msg: &str) -> Result<(), ConfigError> {
    if ok {
        Ok(())
    } else {
        Err(ConfigError::RangeError { origin: origin.clone(), key: key.to_string(), msg: msg.to_string() })
    }
}

/// Sets one key on `cfg`, checking its type and range.
pub fn apply(cfg: &mut TrainConfig, key: &str, value: &str, origin: Origin) -> Result<(), ConfigError> {
    let o = &origin;
    let int = |v: &str| parse::<u64>(o, key, v, "a non-negative integer");
    let size = |v: &str| parse::<usize>(o, key, v, "a non-negative integer");
    let real = |v: &str| -> Result<f64, ConfigError> {
        let x = parse::<f64>(o, key, v, "a number")?;
        check(o, key, x.is_finite(), "must be finite")?;
        Ok(x)
    };
    let s = &mut cfg.sim;
    match key {
        "steps" => cfg.steps = int(value)?,
        "batch" => {
            cfg.batch = size(value)?;
            check(o, key, cfg.batch >= 1, "must be at least 1")?;
        }
        "n_probes" => {
            cfg.n_probes = size(value)?;
            check(o, key, (1..=crate::trainer::N_MAX).contains(&cfg.n_probes), "must lie in [1, 10]")?;
        }
        "gamma" => {
            cfg.gamma = real(value)?;
            check(o, key, (0.0..1.0).contains(&cfg.gamma), "must lie in [0, 1)")?;
        }
        "lr" => {
            cfg.lr = real(value)?;
            check(o, key, cfg.lr > 0.0, "must be positive")?;
        }
        "beta" => {
            cfg.beta = real(value)?;
            check(o, key, cfg.beta >= 0.0, "must be non-negative")?;
        }
        "sigma_min" => {
            cfg.sigma_min = real(value)?;
            check(o, key, cfg.sigma_min > 0.0 && cfg.sigma_min < 1.0, "must lie in (0, 1)")?;
        }
        "seed" => cfg.seed = int(value)?,
        "variant" => cfg.variant = parse(o, key, value, "fc or nclass")?,
        "advantage" => cfg.advantage = parse(o, key, value, "reward or return")?,
        "optimizer" => cfg.optimizer = parse(o, key, value, "adam or sgd")?,
        "checkpoint_every" => {
            cfg.checkpoint_every = int(value)?;
            check(o, key, cfg.checkpoint_every >= 1, "must be at least 1")?;
        }
        "d_feat" | "d_rep" | "d_attn" | "d_loc" => {
            let d = size(value)?;
            check(o, key, d >= 1, "must be at least 1")?;
            match key {
                "d_feat" => cfg.d_feat = d,
                "d_rep" => cfg.d_rep = d,
                "d_attn" => cfg.d_attn = d,
                _ => cfg.d_loc = d,
            }
        }
        "px" => s.px = real(value)?,
        "ulen_max" => {
            s.ulen_max = real(value)?;
            check(o, key, s.ulen_max > 0.0, "must be positive")?;
        }
        "workspace_half" => {
            s.workspace_half = real(value)?;
            check(o, key, s.workspace_half > 0.0, "must be positive")?;
        }
        "x_init_min" => s.x_init.0 = real(value)?,
        "x_init_max" => s.x_init.1 = real(value)?,
        "y_init_min" => s.y_init.0 = real(value)?,
        "y_init_max" => s.y_init.1 = real(value)?,
        "z_init_min" => s.z_init.0 = real(value)?,
        "z_init_max" => {
            s.z_init.1 = real(value)?;
            check(o, key, s.z_init.1 < 0.0, "must be below the surface (< 0)")?;
        }
        "rx_max" | "ry_max" | "rz_max" => {
            let r = real(value)?;
            check(o, key, (0.0..=180.0).contains(&r), "must lie in [0, 180]")?;
            match key {
                "rx_max" => s.rx_max = r,
                "ry_max" => s.ry_max = r,
                _ => s.rz_max = r,
            }
        }
        "test_rz_min" => s.test_rz.0 = real(value)?,
        "test_rz_max" => s.test_rz.1 = real(value)?,
        "test_x_min" => s.test_x.0 = real(value)?,
        "test_x_max" => s.test_x.1 = real(value)?,
        _ => return Err(ConfigError::UnknownKey { origin, key: key.to_string() }),
    }
    Ok(())
}

/// Checks relations between keys once everything has been applied.
pub fn validate(cfg: &TrainConfig) -> Result<(), ConfigError> {
    let o = &Origin::Combined;
    let s = &cfg.sim;
    for (key, (lo, hi)) in [
        ("x_init", s.x_init),
        ("y_init", s.y_init),
        ("z_init", s.z_init),
        ("test_rz", s.test_rz),
        ("test_x", s.test_x),
    ] {
        check(o, key, lo <= hi, &format!("range [{lo}, {hi}] is empty"))?;
    }
    cfg.validate()
        .map_err(|e| ConfigError::RangeError { origin: Origin::Combined, key: "config".into(), msg: e.to_string() })
}

/// Applies the lines of `text` on top of `cfg`.
pub fn apply_text(cfg: &mut TrainConfig, text: &str) -> Result<(), ConfigError> {
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() || value.is_empty() {
            return Err(ConfigError::Syntax { line: i + 1 });
        }
        apply(cfg, key, value, Origin::Line(i + 1))?;
    }
    Ok(())
}

/// Defaults, then the optional file, then `overrides` (key, value) pairs.
pub fn parse_config(file: Option<&Path>, overrides: &[(&str, String)]) -> Result<TrainConfig, ConfigError> {
    let mut cfg = TrainConfig::default();
    if let Some(path) = file {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        apply_text(&mut cfg, &text)?;
    }
    for (key, value) in overrides {
        apply(&mut cfg, key, value, Origin::Flag)?;
    }
    validate(&cfg)?;
    Ok(cfg)
}

/// The value of `key` in `cfg`, formatted so that [`apply`] reads it back exactly.
pub fn value_of(cfg: &TrainConfig, key: &str) -> Option<String> {
    let s = &cfg.sim;
    Some(match key {
        "steps" => cfg.steps.to_string(),
        "batch" => cfg.batch.to_string(),
        "n_probes" => cfg.n_probes.to_string(),
        "gamma" => cfg.gamma.to_string(),
        "lr" => cfg.lr.to_string(),
        "beta" => cfg.beta.to_string(),
        "sigma_min" => cfg.sigma_min.to_string(),
        "seed" => cfg.seed.to_string(),
        "variant" => cfg.variant.name().to_string(),
        "advantage" => cfg.advantage.name().to_string(),
        "optimizer" => cfg.optimizer.name().to_string(),
        "checkpoint_every" => cfg.checkpoint_every.to_string(),
        "d_feat" => cfg.d_feat.to_string(),
        "d_rep" => cfg.d_rep.to_string(),
        "d_attn" => cfg.d_attn.to_string(),
        "d_loc" => cfg.d_loc.to_string(),
        "px" => s.px.to_string(),
        "ulen_max" => s.ulen_max.to_string(),
        "workspace_half" => s.workspace_half.to_string(),
        "x_init_min" => s.x_init.0.to_string(),
        "x_init_max" => s.x_init.1.to_string(),
        "y_init_min" => s.y_init.0.to_string(),
        "y_init_max" => s.y_init.1.to_string(),
        "z_init_min" => s.z_init.0.to_string(),
        "z_init_max" => s.z_init.1.to_string(),
        "rx_max" => s.rx_max.to_string(),
        "ry_max" => s.ry_max.to_string(),
        "rz_max" => s.rz_max.to_string(),
        "test_rz_min" => s.test_rz.0.to_string(),
        "test_rz_max" => s.test_rz.1.to_string(),
        "test_x_min" => s.test_x.0.to_string(),
        "test_x_max" => s.test_x.1.to_string(),
        _ => return None,
    })
}

/// Every key of `cfg` as a loadable config file, preceded by `#` comment lines.
pub fn to_manifest(cfg: &TrainConfig, comments: &[String]) -> String {
    let mut out = String::new();
    for c in comments {
        out.push_str("# ");
        out.push_str(c);
        out.push('\n');
    }
    for key in KEYS {
        let v = value_of(cfg, key).expect("listed key");
        out.push_str(&format!("{key} = {v}\n"));
    }
    out
}
