//! Flat `key = value` experiment configs.
//!
//! ```text
//! # blow-up of a hat
//! m = 1
//! p = 1.5
//! t_end = 10
//! n = 100
//! initial = hat
//! snapshot_times = 0, 0.5, 1
//! ```
//!
//! Blank lines and `#` comments are ignored, lists are comma-separated and
//! unknown or repeated keys are rejected.

use std::collections::HashMap;
use std::path::PathBuf;

use thiserror::Error;

use crate::analysis::theta;
use crate::driver::{derive_q, MonitorPolicy, SchemeParams};
use crate::error::SchemeError;
use crate::mesh::{MovingGrid, NodalField};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Syntax { line: usize, text: String },

    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },

    #[error("line {line}: key `{key}` given twice")]
    Duplicate { line: usize, key: String },

    #[error("line {line}: invalid value for `{key}`: {reason}")]
    InvalidValue { line: usize, key: String, reason: String },

    #[error("missing required key `{0}`")]
    Missing(&'static str),

    #[error("p = {p} is outside the admissible range (1, m + 1) = (1, {upper})")]
    Regime { p: f64, upper: f64 },

    #[error("{0}")]
    Invalid(String),
}

const KEYS: &[&str] = &[
    "m",
    "p",
    "t_end",
    "s0",
    "n",
    "initial",
    "initial_peak",
    "initial_table",
    "blowup_threshold",
    "cfl_safety",
    "existence_safety",
    "dt_max",
    "dt_floor",
    "output_dir",
    "snapshot_times",
    "snapshot_every",
    "strict",
    "certify",
];

#[derive(Debug, Clone, PartialEq)]
pub enum InitialData {
    /// `peak (1 - |x| / s0)`.
    Hat { peak: f64 },
    /// `peak (1 - x^2 / s0^2)`.
    Cap { peak: f64 },
    /// Piecewise-linear through `(x, u)` pairs, zero outside their range.
    Table(Vec<(f64, f64)>),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SnapshotSchedule {
    pub times: Vec<f64>,
    pub every: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub m: f64,
    pub p: f64,
    pub q: f64,
    pub s0: f64,
    pub n: usize,
    pub initial: InitialData,
    pub t_end: f64,
    pub blowup_threshold: Option<f64>,
    pub cfl_safety: Option<f64>,
    pub existence_safety: Option<f64>,
    pub dt_max: Option<f64>,
    pub dt_floor: Option<f64>,
    pub output_dir: Option<PathBuf>,
    pub snapshots: SnapshotSchedule,
    /// Abort on the first monitor violation instead of recording it.
    pub strict: bool,
    /// Search for a blow-up certificate and report `T*` in the summary.
    pub certify: bool,
}

struct Entry {
    line: usize,
    value: String,
}

struct Document(HashMap<String, Entry>);

impl Document {
    fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut map = HashMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(ConfigError::Syntax { line, text: content.to_string() });
            };
            let key = key.trim();
            if key.is_empty() {
                return Err(ConfigError::Syntax { line, text: content.to_string() });
            }
            if !KEYS.contains(&key) {
                return Err(ConfigError::UnknownKey { line, key: key.to_string() });
            }
            if map.contains_key(key) {
                return Err(ConfigError::Duplicate { line, key: key.to_string() });
            }
            map.insert(key.to_string(), Entry { line, value: value.trim().to_string() });
        }
        Ok(Self(map))
    }

    fn invalid(&self, key: &str, reason: impl Into<String>) -> ConfigError {
        ConfigError::InvalidValue {
            line: self.0.get(key).map_or(0, |e| e.line),
            key: key.to_string(),
            reason: reason.into(),
        }
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(|e| e.value.as_str())
    }

    fn number(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        self.raw(key)
            .map(|v| {
                v.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| self.invalid(key, format!("`{v}` is not a finite number")))
            })
            .transpose()
    }

    fn positive(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        match self.number(key)? {
            Some(x) if x <= 0.0 => Err(self.invalid(key, "must be positive")),
            other => Ok(other),
        }
    }

    fn required(&self, key: &'static str) -> Result<f64, ConfigError> {
        self.number(key)?.ok_or(ConfigError::Missing(key))
    }

    fn count(&self, key: &str) -> Result<Option<usize>, ConfigError> {
        self.raw(key)
            .map(|v| {
                v.parse::<usize>()
                    .ok()
                    .filter(|&k| k >= 1)
                    .ok_or_else(|| self.invalid(key, format!("`{v}` is not a positive integer")))
            })
            .transpose()
    }

    fn flag(&self, key: &str) -> Result<bool, ConfigError> {
        match self.raw(key) {
            None | Some("false") => Ok(false),
            Some("true") => Ok(true),
            Some(v) => Err(self.invalid(key, format!("expected true or false, got `{v}`"))),
        }
    }

    fn list(&self, key: &str) -> Result<Vec<f64>, ConfigError> {
        let Some(v) = self.raw(key) else {
            return Ok(Vec::new());
        };
        v.split(',')
            .map(|s| s.trim())
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| self.invalid(key, format!("`{s}` is not a finite number")))
            })
            .collect()
    }

    fn table(&self, key: &str) -> Result<Vec<(f64, f64)>, ConfigError> {
        let Some(v) = self.raw(key) else {
            return Err(ConfigError::Missing("initial_table"));
        };
        let mut rows = Vec::new();
        for pair in v.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let nums: Vec<f64> = pair
                .split_whitespace()
                .map(|s| s.parse::<f64>().ok().filter(|x| x.is_finite()))
                .collect::<Option<_>>()
                .ok_or_else(|| self.invalid(key, format!("`{pair}` is not an `x u` pair")))?;
            let [x, u] = nums[..] else {
                return Err(self.invalid(key, format!("`{pair}` is not an `x u` pair")));
            };
            if u < 0.0 {
                return Err(self.invalid(key, format!("negative value {u} at x = {x}")));
            }
            rows.push((x, u));
        }
        if rows.len() < 2 {
            return Err(self.invalid(key, "needs at least two pairs"));
        }
        if rows.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(self.invalid(key, "x values must be strictly increasing"));
        }
        Ok(rows)
    }
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let doc = Document::parse(text)?;
    let m = doc.required("m")?;
    let p = doc.required("p")?;
    let t_end = doc.required("t_end")?;
    if !(m > 0.0) {
        return Err(doc.invalid("m", "must be positive"));
    }
    let q = match derive_q(m, p) {
        Ok(q) => q,
        Err(SchemeError::Regime { p, upper }) => return Err(ConfigError::Regime { p, upper }),
        Err(e) => return Err(ConfigError::Invalid(e.to_string())),
    };
    if !(t_end > 0.0) {
        return Err(doc.invalid("t_end", "must be positive"));
    }

    let s0 = doc.positive("s0")?.unwrap_or(1.0);
    let n = doc.count("n")?.unwrap_or(100);
    let peak = doc.number("initial_peak")?.unwrap_or(1.0);
    if peak < 0.0 {
        return Err(doc.invalid("initial_peak", "must be nonnegative"));
    }
    let initial = match doc.raw("initial").unwrap_or("hat") {
        "hat" => InitialData::Hat { peak },
        "cap" => InitialData::Cap { peak },
        "table" => InitialData::Table(doc.table("initial_table")?),
        other => {
            return Err(doc.invalid("initial", format!("expected hat, cap or table, got `{other}`")))
        }
    };
    if doc.raw("initial_table").is_some() && !matches!(initial, InitialData::Table(_)) {
        return Err(doc.invalid("initial_table", "only allowed with `initial = table`"));
    }

    let times = doc.list("snapshot_times")?;
    if let Some(t) = times.iter().find(|&&t| !(0.0..=t_end).contains(&t)) {
        return Err(doc.invalid("snapshot_times", format!("{t} is outside [0, {t_end}]")));
    }

    let config = ExperimentConfig {
        m,
        p,
        q,
        s0,
        n,
        initial,
        t_end,
        blowup_threshold: doc.positive("blowup_threshold")?,
        cfl_safety: doc.number("cfl_safety")?,
        existence_safety: doc.number("existence_safety")?,
        dt_max: doc.positive("dt_max")?,
        dt_floor: doc.positive("dt_floor")?,
        output_dir: doc.raw("output_dir").map(PathBuf::from),
        snapshots: SnapshotSchedule { times, every: doc.count("snapshot_every")? },
        strict: doc.flag("strict")?,
        certify: doc.flag("certify")?,
    };
    config.scheme_params().map_err(|e| ConfigError::Invalid(e.to_string()))?;
    Ok(config)
}

impl ExperimentConfig {
    pub fn grid(&self) -> Result<MovingGrid, SchemeError> {
        MovingGrid::uniform(self.s0, self.n)
    }

    pub fn initial_field(&self) -> Result<NodalField, SchemeError> {
        let grid = self.grid()?;
        let s0 = self.s0;
        match &self.initial {
            InitialData::Hat { peak } => NodalField::from_fn(grid, |x| peak * (1.0 - x.abs() / s0)),
            InitialData::Cap { peak } => NodalField::from_fn(grid, |x| peak * theta(x, s0)),
            InitialData::Table(rows) => NodalField::from_fn(grid, |x| table_value(rows, x)),
        }
    }

    pub fn scheme_params(&self) -> Result<SchemeParams, SchemeError> {
        let mut params = SchemeParams::new(self.m, self.p, self.t_end)?;
        if let Some(v) = self.cfl_safety {
            params.cfl_safety = v;
        }
        if let Some(v) = self.existence_safety {
            params.existence_safety = v;
        }
        if let Some(v) = self.dt_max {
            params.dt_max = v;
        }
        params.blowup_threshold = self.blowup_threshold;
        params.dt_floor = self.dt_floor;
        params.monitor = if self.strict { MonitorPolicy::Abort } else { MonitorPolicy::Warn };
        params.validate()?;
        Ok(params)
    }
}

fn table_value(rows: &[(f64, f64)], x: f64) -> f64 {
    let first = rows[0].0;
    let last = rows[rows.len() - 1].0;
    if x < first || x > last {
        return 0.0;
    }
    let j = rows.partition_point(|r| r.0 <= x).clamp(1, rows.len() - 1);
    let ((x0, u0), (x1, u1)) = (rows[j - 1], rows[j]);
    u0 + (u1 - u0) * (x - x0) / (x1 - x0)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "m = 1\np = 1.5\nt_end = 10\ninitial = hat\n";

    #[test]
    fn minimal_config_echoes_q() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.q, 0.5);
        assert_eq!(c.n, 100);
        assert_eq!(c.s0, 1.0);
        assert_eq!(c.initial, InitialData::Hat { peak: 1.0 });
        assert!(!c.strict);
    }

    #[test]
    fn regime_violation_is_distinct() {
        let err = parse_config("m = 1\np = 2.0\nt_end = 1\n").unwrap_err();
        assert_eq!(err, ConfigError::Regime { p: 2.0, upper: 2.0 });
    }

    #[test]
    fn missing_key_is_named() {
        let err = parse_config("p = 1.5\nt_end = 1\n").unwrap_err();
        assert_eq!(err, ConfigError::Missing("m"));
        assert!(err.to_string().contains("`m`"));
    }

    #[test]
    fn errors_carry_line_numbers() {
        let err = parse_config("m = 1\n# note\np = 1.5\nt_end = 1\nmesh = 3\n").unwrap_err();
        assert_eq!(err, ConfigError::UnknownKey { line: 5, key: "mesh".into() });
        let err = parse_config("m = 1\np = 1.5\nt_end = 1\nn = -4\n").unwrap_err();
        assert!(matches!(err, ConfigError::InvalidValue { line: 4, .. }), "{err:?}");
        let err = parse_config("m = 1\np = 1.5\nm = 2\nt_end = 1\n").unwrap_err();
        assert_eq!(err, ConfigError::Duplicate { line: 3, key: "m".into() });
        let err = parse_config("m = 1\njunk\n").unwrap_err();
        assert_eq!(err, ConfigError::Syntax { line: 2, text: "junk".into() });
    }

    #[test]
    fn snapshot_times_within_horizon() {
        let c = parse_config(&format!("{MINIMAL}snapshot_times = 0, 2.5, 10\nsnapshot_every = 5\n")).unwrap();
        assert_eq!(c.snapshots.times, vec![0.0, 2.5, 10.0]);
        assert_eq!(c.snapshots.every, Some(5));
        assert!(parse_config(&format!("{MINIMAL}snapshot_times = 11\n")).is_err());
    }

    #[test]
    fn initial_families() {
        let cap = parse_config(&format!("{}initial_peak = 2\ns0 = 2\nn = 4\n", MINIMAL.replace("hat", "cap"))).unwrap();
        let f = cap.initial_field().unwrap();
        assert_eq!(f.eval(1.0), 2.0 * 0.75);

        let table = "m = 1\np = 1.5\nt_end = 1\nn = 4\ninitial = table\ninitial_table = -0.5 0, 0 1, 0.5 0\n";
        let c = parse_config(table).unwrap();
        let f = c.initial_field().unwrap();
        assert_eq!(f.values(), &[0.0, 0.0, 0.5, 1.0, 0.5, 0.0, 0.0]);
        assert!(parse_config(&table.replace("0 1,", "0 -1,")).is_err());
        assert!(parse_config(&table.replace("= table", "= hat")).is_err());
    }

    #[test]
    fn strict_and_safeties_reach_params() {
        let c = parse_config(&format!("{MINIMAL}strict = true\ncfl_safety = 0.5\n")).unwrap();
        let p = c.scheme_params().unwrap();
        assert_eq!(p.monitor, MonitorPolicy::Abort);
        assert_eq!(p.cfl_safety, 0.5);
        assert!(parse_config(&format!("{MINIMAL}existence_safety = 1.5\n")).is_err());
    }
}
