//! Line-oriented `[section]` / `key = value` configuration with defaults and
//! source locations.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::CliError;

/// (section, key, default). Order here is the order of the manifest.
pub const SCHEMA: &[(&str, &str, &str)] = &[
    ("nonlinearity", "kind", "pure_log"),
    ("nonlinearity", "sigma", "2"),
    ("nonlinearity", "mu", "1"),
    ("nonlinearity", "p", "4"),
    ("nonlinearity", "q", "1.5"),
    ("nonlinearity", "truncation", "auto"),
    ("grid", "dim", "1"),
    ("grid", "extent", "12"),
    ("grid", "spacing", "0.05"),
    ("potential", "kind", "neg_quadratic"),
    ("potential", "peak", "2"),
    ("potential", "floor", "1"),
    ("potential", "value", "1"),
    ("potential", "base", "1"),
    ("potential", "amplitude", "1"),
    ("potential", "width", "1"),
    ("potential", "radii", ""),
    ("potential", "values", ""),
    ("potential", "m0", "2"),
    ("potential", "omega_radius", "1"),
    ("potential", "o_radius", "0.3"),
    ("potential", "delta0", "0.5"),
    ("penalization", "eps", "0.2"),
    ("penalization", "l_sep", "auto"),
    ("penalization", "r0", "auto"),
    ("penalization", "rho1", "auto"),
    ("penalization", "psi_fraction", "0.3"),
    ("penalization", "strict", "false"),
    ("run", "alpha", "1"),
    ("run", "alphas", "0.25, 0.5, 1, 2, 4, 8"),
    ("run", "tol", "1e-8"),
    ("run", "max_iter", "10000"),
    ("run", "metric", "preconditioned"),
    ("run", "init_width", "1.5"),
    ("run", "warm_start", "false"),
    ("run", "centers", "-0.5; 0.5"),
    ("run", "weights", "uniform"),
    ("run", "multipeak_tol", "1e-6"),
    ("run", "multipeak_max_iter", "20000"),
    ("run", "upsilon_every", "10"),
    ("run", "saddle", "true"),
    ("run", "max_shift_cells", "0.5"),
    ("run", "relax", "0.1"),
    ("run", "decay_window", "2, 5"),
    ("run", "xis", "5, 6, 7, 8, 9"),
    ("run", "directions", "20"),
    ("run", "sequences", "1000"),
    ("run", "verify_eps", "0.2"),
    ("output", "dir", "out"),
    ("output", "snapshots", "true"),
];

pub const DEFAULT_CONFIG: &str = include_str!("../config/default.conf");

#[derive(Debug, Clone, PartialEq)]
pub enum Origin {
    Default,
    Line(usize),
    Override(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub value: String,
    pub origin: Origin,
}

/// Parsed configuration: every schema key resolved to a value and where it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub source: String,
    entries: BTreeMap<(String, String), Entry>,
}

fn known(section: &str, key: &str) -> bool {
    SCHEMA.iter().any(|(s, k, _)| *s == section && *k == key)
}

impl RunConfig {
    /// Parse `text` (named `source` in diagnostics) on top of the schema defaults.
    pub fn parse(text: &str, source: &str) -> Result<Self, CliError> {
        let mut entries: BTreeMap<(String, String), Entry> = SCHEMA
            .iter()
            .map(|(s, k, d)| {
                (
                    (s.to_string(), k.to_string()),
                    Entry {
                        value: d.to_string(),
                        origin: Origin::Default,
                    },
                )
            })
            .collect();
        let mut section: Option<String> = None;
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let at = |key: &str, msg: String| CliError::Config {
                location: format!("{source}:{line_no}"),
                key: key.to_string(),
                message: msg,
            };
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| at(line, "unterminated section header".into()))?
                    .trim();
                if !SCHEMA.iter().any(|(s, _, _)| *s == name) {
                    return Err(at(&format!("[{name}]"), "unknown section".into()));
                }
                section = Some(name.to_string());
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| at(line, "expected `key = value`".into()))?;
            let key = key.trim();
            let sec = section
                .as_deref()
                .ok_or_else(|| at(key, "key outside of any [section]".into()))?;
            let full = format!("{sec}.{key}");
            if !known(sec, key) {
                return Err(at(&full, "unknown key".into()));
            }
            entries.insert(
                (sec.to_string(), key.to_string()),
                Entry {
                    value: value.trim().to_string(),
                    origin: Origin::Line(line_no),
                },
            );
        }
        Ok(Self {
            source: source.to_string(),
            entries,
        })
    }

    /// Apply a `section.key=value` override.
    pub fn apply_override(&mut self, spec: &str) -> Result<(), CliError> {
        let err = |key: &str, msg: &str| CliError::Config {
            location: "--set".into(),
            key: key.to_string(),
            message: msg.to_string(),
        };
        let (path, value) = spec
            .split_once('=')
            .ok_or_else(|| err(spec, "expected section.key=value"))?;
        let (sec, key) = path
            .trim()
            .split_once('.')
            .ok_or_else(|| err(path, "expected section.key"))?;
        if !known(sec, key) {
            return Err(err(path.trim(), "unknown key"));
        }
        self.entries.insert(
            (sec.to_string(), key.to_string()),
            Entry {
                value: value.trim().to_string(),
                origin: Origin::Override(spec.to_string()),
            },
        );
        Ok(())
    }

    pub fn raw(&self, section: &str, key: &str) -> &str {
        &self.entry(section, key).value
    }

    fn entry(&self, section: &str, key: &str) -> &Entry {
        self.entries
            .get(&(section.to_string(), key.to_string()))
            .unwrap_or_else(|| panic!("{section}.{key} is not in the schema"))
    }

    pub fn location(&self, section: &str, key: &str) -> String {
        match &self.entry(section, key).origin {
            Origin::Default => "(default)".into(),
            Origin::Line(n) => format!("{}:{n}", self.source),
            Origin::Override(s) => format!("--set {s}"),
        }
    }

    /// A config error pointing at `section.key`.
    pub fn error(&self, section: &str, key: &str, message: impl Into<String>) -> CliError {
        CliError::Config {
            location: self.location(section, key),
            key: format!("{section}.{key}"),
            message: message.into(),
        }
    }

    pub fn get<T: FromStr>(&self, section: &str, key: &str) -> Result<T, CliError> {
        let raw = self.raw(section, key);
        raw.parse::<T>().map_err(|_| {
            self.error(
                section,
                key,
                format!("cannot parse '{raw}' as {}", std::any::type_name::<T>()),
            )
        })
    }

    pub fn positive(&self, section: &str, key: &str) -> Result<f64, CliError> {
        let v: f64 = self.get(section, key)?;
        if !(v > 0.0 && v.is_finite()) {
            return Err(self.error(section, key, format!("must be positive, got {v}")));
        }
        Ok(v)
    }

    pub fn flag(&self, section: &str, key: &str) -> Result<bool, CliError> {
        match self.raw(section, key) {
            "true" | "yes" | "1" => Ok(true),
            "false" | "no" | "0" => Ok(false),
            other => Err(self.error(section, key, format!("expected true or false, got '{other}'"))),
        }
    }

    /// `None` for `auto`.
    pub fn auto_f64(&self, section: &str, key: &str) -> Result<Option<f64>, CliError> {
        if self.raw(section, key) == "auto" {
            return Ok(None);
        }
        self.positive(section, key).map(Some)
    }

    pub fn list(&self, section: &str, key: &str) -> Result<Vec<f64>, CliError> {
        let raw = self.raw(section, key);
        if raw.is_empty() {
            return Ok(Vec::new());
        }
        raw.split(',')
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|_| self.error(section, key, format!("cannot parse '{}' as a number", t.trim())))
            })
            .collect()
    }

    /// Points separated by `;`, coordinates by whitespace.
    pub fn points(&self, section: &str, key: &str, dim: usize) -> Result<Vec<[f64; 2]>, CliError> {
        let raw = self.raw(section, key);
        let mut out = Vec::new();
        for part in raw.split(';') {
            let coords: Vec<f64> = part
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|_| self.error(section, key, format!("cannot parse point '{}'", part.trim())))?;
            if coords.len() != dim {
                return Err(self.error(
                    section,
                    key,
                    format!("point '{}' needs {dim} coordinate(s)", part.trim()),
                ));
            }
            let mut p = [0.0; 2];
            p[..dim].copy_from_slice(&coords);
            out.push(p);
        }
        Ok(out)
    }

    /// The fully resolved configuration in the input format.
    pub fn manifest(&self) -> String {
        let mut s = String::new();
        let mut current = "";
        for (sec, key, _) in SCHEMA {
            if *sec != current {
                if !current.is_empty() {
                    s.push('\n');
                }
                let _ = writeln!(s, "[{sec}]");
                current = sec;
            }
            let e = self.entry(sec, key);
            let _ = writeln!(s, "{key} = {}", e.value);
        }
        s
    }
}
