//! Experiment configuration in TOML.
//!
//! ```toml
//! [lattice]
//! spatial_dim = 1          # required, 1..=3
//! max_level = 6            # required
//!
//! [model]
//! alpha = 1.1              # required, >= 0
//! dissipation = true
//! convention = "conservative"   # or "weighted"
//! coupling_scale = 1.0
//!
//! [span]
//! t_start = 0.0
//! t_end = 0.5              # required, >= t_start
//! dt_init = 1e-4
//! dt_min = 1e-12
//! dt_max = 0.1
//! safety = 0.9
//! rtol = 1e-9
//! atol = 1e-13
//!
//! [initial]
//! kind = "smooth-random"   # or "single-cube"
//! amplitude = 1.0
//! smoothness = 1.0         # u_Q(0) = A 2^{-s j} xi_Q
//! seed = 42                # required, u64
//! cube_level = 0           # single-cube only
//! cube_coords = [0]        # single-cube only, length d
//!
//! [analysis]
//! badness_constant = 1.0
//! critical_constant = 1.0
//! normalization = "balanced"    # or "literal"
//! fit_min = 1
//! fit_max = 6              # defaults to max_level
//! sobolev_beta = 1.0
//!
//! [output]
//! directory = "run-output"
//! snapshot_interval = 0.005     # defaults to (t_end - t_start) / 100
//! blowup_ceiling = 1e8
//!
//! [run]
//! workers = 0              # 0: rayon default
//! ```

use std::path::PathBuf;

use thiserror::Error;
use toml::{Table, Value};

use crate::dynamics::{Convention, ModelParams};
use crate::integrator::{IntegrationSpan, Recording};
use crate::lattice::{CubeId, LatticeConfig, LatticeError};
use crate::regularity::{BadnessNormalization, RegularityParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("config is not valid TOML: {0}")]
    Syntax(String),
    #[error("missing required key `{0}`")]
    Missing(String),
    #[error("unknown key `{0}`")]
    Unknown(String),
    #[error("key `{key}` has the wrong type: expected {expected}")]
    Type { key: String, expected: &'static str },
    #[error("key `{key}` out of range: {reason}")]
    OutOfRange { key: String, reason: String },
    #[error("constraint violated: {0}")]
    Constraint(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialKind {
    SingleCube,
    SmoothRandom,
}

impl InitialKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            InitialKind::SingleCube => "single-cube",
            InitialKind::SmoothRandom => "smooth-random",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitialCondition {
    pub kind: InitialKind,
    pub amplitude: f64,
    pub smoothness: f64,
    pub seed: u64,
    pub cube: CubeId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisConfig {
    pub badness_constant: f64,
    pub critical_constant: f64,
    pub normalization: BadnessNormalization,
    pub fit_min: u32,
    pub fit_max: u32,
    pub sobolev_beta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub directory: PathBuf,
    pub snapshot_interval: f64,
    pub blowup_ceiling: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub lattice: LatticeConfig,
    pub model: ModelParams,
    pub span: IntegrationSpan,
    pub initial: InitialCondition,
    pub analysis: AnalysisConfig,
    pub output: OutputConfig,
    /// Rayon worker threads; 0 uses the global default.
    pub workers: usize,
}

const SCHEMA: &[(&str, &[&str])] = &[
    ("lattice", &["spatial_dim", "max_level"]),
    (
        "model",
        &["alpha", "dissipation", "convention", "coupling_scale"],
    ),
    (
        "span",
        &[
            "t_start", "t_end", "dt_init", "dt_min", "dt_max", "safety", "rtol", "atol",
        ],
    ),
    (
        "initial",
        &[
            "kind",
            "amplitude",
            "smoothness",
            "seed",
            "cube_level",
            "cube_coords",
        ],
    ),
    (
        "analysis",
        &[
            "badness_constant",
            "critical_constant",
            "normalization",
            "fit_min",
            "fit_max",
            "sobolev_beta",
        ],
    ),
    (
        "output",
        &["directory", "snapshot_interval", "blowup_ceiling"],
    ),
    ("run", &["workers"]),
];

/// Typed access to one `[section]` with dotted key paths in every error.
struct Section<'a> {
    name: &'static str,
    table: Option<&'a Table>,
}

impl<'a> Section<'a> {
    fn path(&self, key: &str) -> String {
        format!("{}.{}", self.name, key)
    }

    fn raw(&self, key: &str) -> Option<&'a Value> {
        self.table.and_then(|t| t.get(key))
    }

    fn required<T>(
        &self,
        key: &str,
        get: impl Fn(&Self, &str) -> Result<Option<T>, ConfigError>,
    ) -> Result<T, ConfigError> {
        get(self, key)?.ok_or_else(|| ConfigError::Missing(self.path(key)))
    }

    fn float(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        match self.raw(key) {
            None => Ok(None),
            Some(Value::Float(f)) => Ok(Some(*f)),
            Some(Value::Integer(i)) => Ok(Some(*i as f64)),
            Some(_) => Err(ConfigError::Type {
                key: self.path(key),
                expected: "number",
            }),
        }
    }

    fn integer(&self, key: &str) -> Result<Option<i64>, ConfigError> {
        match self.raw(key) {
            None => Ok(None),
            Some(Value::Integer(i)) => Ok(Some(*i)),
            Some(_) => Err(ConfigError::Type {
                key: self.path(key),
                expected: "integer",
            }),
        }
    }

    fn unsigned(&self, key: &str) -> Result<Option<u64>, ConfigError> {
        match self.raw(key) {
            None => Ok(None),
            Some(Value::Integer(i)) if *i >= 0 => Ok(Some(*i as u64)),
            Some(Value::Integer(_)) => Err(self.range(key, "must be non-negative")),
            // seeds above i64::MAX are written as strings
            Some(Value::String(s)) => s
                .parse::<u64>()
                .map(Some)
                .map_err(|_| self.range(key, "not an unsigned 64-bit integer")),
            Some(_) => Err(ConfigError::Type {
                key: self.path(key),
                expected: "unsigned integer",
            }),
        }
    }

    fn boolean(&self, key: &str) -> Result<Option<bool>, ConfigError> {
        match self.raw(key) {
            None => Ok(None),
            Some(Value::Boolean(b)) => Ok(Some(*b)),
            Some(_) => Err(ConfigError::Type {
                key: self.path(key),
                expected: "boolean",
            }),
        }
    }

    fn string(&self, key: &str) -> Result<Option<&'a str>, ConfigError> {
        match self.raw(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.as_str())),
            Some(_) => Err(ConfigError::Type {
                key: self.path(key),
                expected: "string",
            }),
        }
    }

    fn range(&self, key: &str, reason: impl Into<String>) -> ConfigError {
        ConfigError::OutOfRange {
            key: self.path(key),
            reason: reason.into(),
        }
    }

    fn positive(&self, key: &str, default: f64) -> Result<f64, ConfigError> {
        let v = self.float(key)?.unwrap_or(default);
        if !(v > 0.0 && v.is_finite()) {
            return Err(self.range(key, format!("must be finite and > 0, got {v}")));
        }
        Ok(v)
    }
}

fn check_keys(root: &Table) -> Result<(), ConfigError> {
    for (section, value) in root {
        let Some((_, keys)) = SCHEMA.iter().find(|(s, _)| s == section) else {
            return Err(ConfigError::Unknown(section.clone()));
        };
        let Value::Table(t) = value else {
            return Err(ConfigError::Type {
                key: section.clone(),
                expected: "table",
            });
        };
        for key in t.keys() {
            if !keys.contains(&key.as_str()) {
                return Err(ConfigError::Unknown(format!("{section}.{key}")));
            }
        }
    }
    Ok(())
}

fn section<'a>(root: &'a Table, name: &'static str) -> Section<'a> {
    Section {
        name,
        table: root.get(name).and_then(Value::as_table),
    }
}

/// Parse and validate, filling documented defaults.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let root: Table = text
        .parse()
        .map_err(|e: toml::de::Error| ConfigError::Syntax(e.message().to_string()))?;
    check_keys(&root)?;

    let lat = section(&root, "lattice");
    let d = lat.required("spatial_dim", Section::integer)?;
    if !(1..=3).contains(&d) {
        return Err(lat.range("spatial_dim", format!("must be 1, 2 or 3, got {d}")));
    }
    let j = lat.required("max_level", Section::integer)?;
    if j < 0 {
        return Err(lat.range("max_level", "must be >= 0"));
    }
    let lattice = LatticeConfig::new(d as usize, j as u32).map_err(|e| match e {
        LatticeError::TooDeep(_) => lat.range("max_level", e.to_string()),
        other => ConfigError::Constraint(other.to_string()),
    })?;

    let m = section(&root, "model");
    let alpha = m.required("alpha", Section::float)?;
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(m.range("alpha", format!("must be finite and >= 0, got {alpha}")));
    }
    let convention = match m.string("convention")? {
        None => Convention::Conservative,
        Some(s) => Convention::parse(s)
            .ok_or_else(|| m.range("convention", format!("unknown convention `{s}`")))?,
    };
    let model = ModelParams {
        alpha,
        dissipation_enabled: m.boolean("dissipation")?.unwrap_or(true),
        convention,
        coupling_scale: m.positive("coupling_scale", 1.0)?,
    };

    let s = section(&root, "span");
    let defaults = IntegrationSpan::default();
    let t_start = s.float("t_start")?.unwrap_or(0.0);
    let t_end = s.required("t_end", Section::float)?;
    if !t_start.is_finite() {
        return Err(s.range("t_start", "must be finite"));
    }
    if !(t_end.is_finite() && t_end >= t_start) {
        return Err(s.range(
            "t_end",
            format!("must be finite and >= t_start ({t_start}), got {t_end}"),
        ));
    }
    let span = IntegrationSpan {
        t_start,
        t_end,
        dt_init: s.positive("dt_init", defaults.dt_init)?,
        dt_min: s.positive("dt_min", defaults.dt_min)?,
        dt_max: s.positive("dt_max", defaults.dt_max)?,
        safety: s.positive("safety", defaults.safety)?,
        rtol: s.positive("rtol", defaults.rtol)?,
        atol: s.positive("atol", defaults.atol)?,
    };
    if span.dt_min > span.dt_max {
        return Err(ConfigError::Constraint(format!(
            "span.dt_min ({}) > span.dt_max ({})",
            span.dt_min, span.dt_max
        )));
    }
    if !(span.dt_min <= span.dt_init && span.dt_init <= span.dt_max) {
        return Err(ConfigError::Constraint(format!(
            "span.dt_init ({}) must lie in [span.dt_min, span.dt_max] = [{}, {}]",
            span.dt_init, span.dt_min, span.dt_max
        )));
    }
    if span.safety > 1.0 {
        return Err(s.range("safety", "must be <= 1"));
    }

    let i = section(&root, "initial");
    let kind = match i.string("kind")? {
        None | Some("smooth-random") => InitialKind::SmoothRandom,
        Some("single-cube") => InitialKind::SingleCube,
        Some(other) => return Err(i.range("kind", format!("unknown kind `{other}`"))),
    };
    let amplitude = i.float("amplitude")?.unwrap_or(1.0);
    if !amplitude.is_finite() {
        return Err(i.range("amplitude", "must be finite"));
    }
    let smoothness = i.float("smoothness")?.unwrap_or(1.0);
    if !(smoothness >= 0.0 && smoothness.is_finite()) {
        return Err(i.range("smoothness", "must be finite and >= 0"));
    }
    let seed = i.required("seed", Section::unsigned)?;
    let cube_level = i.integer("cube_level")?.unwrap_or(0);
    let coords: Vec<u32> = match i.raw("cube_coords") {
        None => vec![0; lattice.spatial_dim()],
        Some(Value::Array(a)) => a
            .iter()
            .map(|v| match v {
                Value::Integer(x) if *x >= 0 && *x <= u32::MAX as i64 => Ok(*x as u32),
                _ => Err(i.range("cube_coords", "entries must be non-negative integers")),
            })
            .collect::<Result<_, _>>()?,
        Some(_) => {
            return Err(ConfigError::Type {
                key: i.path("cube_coords"),
                expected: "array of integers",
            })
        }
    };
    if coords.len() != lattice.spatial_dim() {
        return Err(i.range(
            "cube_coords",
            format!(
                "needs {} entries, got {}",
                lattice.spatial_dim(),
                coords.len()
            ),
        ));
    }
    if cube_level < 0 || cube_level > lattice.max_level() as i64 {
        return Err(i.range(
            "cube_level",
            format!("must be in 0..={}", lattice.max_level()),
        ));
    }
    let cube = CubeId::new(cube_level as u32, &coords);
    if !lattice.contains(&cube) {
        return Err(i.range("cube_coords", format!("cube {cube} is outside the lattice")));
    }
    let initial = InitialCondition {
        kind,
        amplitude,
        smoothness,
        seed,
        cube,
    };

    let a = section(&root, "analysis");
    let normalization = match a.string("normalization")? {
        None => BadnessNormalization::Balanced,
        Some(s) => BadnessNormalization::parse(s)
            .ok_or_else(|| a.range("normalization", format!("unknown normalization `{s}`")))?,
    };
    let fit_min = a
        .integer("fit_min")?
        .unwrap_or(1.min(lattice.max_level() as i64));
    let fit_max = a.integer("fit_max")?.unwrap_or(lattice.max_level() as i64);
    if fit_min < 0 || fit_min > lattice.max_level() as i64 {
        return Err(a.range("fit_min", format!("must be in 0..={}", lattice.max_level())));
    }
    if fit_max < fit_min || fit_max > lattice.max_level() as i64 {
        return Err(a.range(
            "fit_max",
            format!("must be in {fit_min}..={}", lattice.max_level()),
        ));
    }
    let sobolev_beta = a.float("sobolev_beta")?.unwrap_or(1.0);
    if !sobolev_beta.is_finite() {
        return Err(a.range("sobolev_beta", "must be finite"));
    }
    let analysis = AnalysisConfig {
        badness_constant: a.positive("badness_constant", 1.0)?,
        critical_constant: a.positive("critical_constant", 1.0)?,
        normalization,
        fit_min: fit_min as u32,
        fit_max: fit_max as u32,
        sobolev_beta,
    };

    let o = section(&root, "output");
    let default_interval = if t_end > t_start {
        (t_end - t_start) / 100.0
    } else {
        1.0
    };
    let output = OutputConfig {
        directory: PathBuf::from(o.string("directory")?.unwrap_or("run-output")),
        snapshot_interval: o.positive("snapshot_interval", default_interval)?,
        blowup_ceiling: o.positive("blowup_ceiling", 1e8)?,
    };

    let r = section(&root, "run");
    let workers = r.integer("workers")?.unwrap_or(0);
    if !(0..=1024).contains(&workers) {
        return Err(r.range("workers", "must be in 0..=1024"));
    }

    Ok(ExperimentConfig {
        lattice,
        model,
        span,
        initial,
        analysis,
        output,
        workers: workers as usize,
    })
}

impl ExperimentConfig {
    /// Normalised TOML with every key spelled out.
    pub fn to_toml(&self) -> String {
        let d = self.lattice.spatial_dim();
        let coords: Vec<String> = self.initial.cube.coords[..d]
            .iter()
            .map(u32::to_string)
            .collect();
        let seed = if self.initial.seed <= i64::MAX as u64 {
            self.initial.seed.to_string()
        } else {
            format!("\"{}\"", self.initial.seed)
        };
        let mut s = String::new();
        s += &format!(
            "[lattice]\nspatial_dim = {}\nmax_level = {}\n\n",
            d,
            self.lattice.max_level()
        );
        s += &format!(
            "[model]\nalpha = {}\ndissipation = {}\nconvention = \"{}\"\ncoupling_scale = {}\n\n",
            float(self.model.alpha),
            self.model.dissipation_enabled,
            self.model.convention.as_str(),
            float(self.model.coupling_scale)
        );
        let sp = &self.span;
        s += &format!(
            "[span]\nt_start = {}\nt_end = {}\ndt_init = {}\ndt_min = {}\ndt_max = {}\nsafety = {}\nrtol = {}\natol = {}\n\n",
            float(sp.t_start),
            float(sp.t_end),
            float(sp.dt_init),
            float(sp.dt_min),
            float(sp.dt_max),
            float(sp.safety),
            float(sp.rtol),
            float(sp.atol)
        );
        let ic = &self.initial;
        s += &format!(
            "[initial]\nkind = \"{}\"\namplitude = {}\nsmoothness = {}\nseed = {}\ncube_level = {}\ncube_coords = [{}]\n\n",
            ic.kind.as_str(),
            float(ic.amplitude),
            float(ic.smoothness),
            seed,
            ic.cube.level,
            coords.join(", ")
        );
        let an = &self.analysis;
        s += &format!(
            "[analysis]\nbadness_constant = {}\ncritical_constant = {}\nnormalization = \"{}\"\nfit_min = {}\nfit_max = {}\nsobolev_beta = {}\n\n",
            float(an.badness_constant),
            float(an.critical_constant),
            an.normalization.as_str(),
            an.fit_min,
            an.fit_max,
            float(an.sobolev_beta)
        );
        let out = &self.output;
        s += &format!(
            "[output]\ndirectory = {}\nsnapshot_interval = {}\nblowup_ceiling = {}\n\n",
            toml::Value::String(out.directory.to_string_lossy().into_owned()),
            float(out.snapshot_interval),
            float(out.blowup_ceiling)
        );
        s += &format!("[run]\nworkers = {}\n", self.workers);
        s
    }

    pub fn regularity_params(&self) -> RegularityParams {
        RegularityParams {
            alpha: self.model.alpha,
            badness_constant: self.analysis.badness_constant,
            critical_constant: self.analysis.critical_constant,
            normalization: self.analysis.normalization,
        }
    }

    pub fn recording(&self) -> Recording {
        Recording {
            snapshot_interval: Some(self.output.snapshot_interval),
            blowup_ceiling: self.output.blowup_ceiling,
            sobolev_beta: self.analysis.sobolev_beta,
        }
    }
}

/// TOML float literal that round-trips exactly.
fn float(x: f64) -> String {
    let s = format!("{x:?}");
    if s.contains('.') || s.contains('e') || s.contains("inf") || s.contains("NaN") {
        s
    } else {
        format!("{s}.0")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[lattice]
spatial_dim = 1
max_level = 3
[model]
alpha = 1.1
[span]
t_end = 0.1
[initial]
seed = 42
"#;

    #[test]
    fn minimal_config_defaults() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.lattice, LatticeConfig::new(1, 3).unwrap());
        assert_eq!(c.model.alpha, 1.1);
        assert!(c.model.dissipation_enabled);
        assert_eq!(c.model.convention, Convention::Conservative);
        assert_eq!(c.model.coupling_scale, 1.0);
        assert_eq!(
            c.span,
            IntegrationSpan {
                t_end: 0.1,
                ..IntegrationSpan::default()
            }
        );
        assert_eq!(c.initial.kind, InitialKind::SmoothRandom);
        assert_eq!(c.initial.seed, 42);
        assert_eq!(c.initial.cube, CubeId::ROOT);
        assert_eq!((c.analysis.fit_min, c.analysis.fit_max), (1, 3));
        assert_eq!(c.analysis.normalization, BadnessNormalization::Balanced);
        assert!((c.output.snapshot_interval - 0.001).abs() < 1e-15);
        assert_eq!(c.output.blowup_ceiling, 1e8);
        assert_eq!(c.workers, 0);
    }

    #[test]
    fn negative_alpha_names_key() {
        let text = MINIMAL.replace("alpha = 1.1", "alpha = -1");
        let err = parse_config(&text).unwrap_err();
        assert!(matches!(&err, ConfigError::OutOfRange { key, .. } if key == "model.alpha"));
        assert!(err.to_string().contains("model.alpha"));
    }

    #[test]
    fn dt_min_above_dt_max() {
        let text = MINIMAL.replace("t_end = 0.1", "t_end = 0.1\ndt_min = 0.5\ndt_max = 0.2");
        assert!(matches!(
            parse_config(&text),
            Err(ConfigError::Constraint(_))
        ));
    }

    #[test]
    fn missing_and_unknown_keys() {
        let text = MINIMAL.replace("seed = 42", "");
        assert_eq!(
            parse_config(&text),
            Err(ConfigError::Missing("initial.seed".into()))
        );
        let text = MINIMAL.replace("seed = 42", "seed = 42\ncolour = 3");
        assert_eq!(
            parse_config(&text),
            Err(ConfigError::Unknown("initial.colour".into()))
        );
        let text = format!("{MINIMAL}\n[extra]\nx = 1\n");
        assert_eq!(
            parse_config(&text),
            Err(ConfigError::Unknown("extra".into()))
        );
    }

    #[test]
    fn type_errors() {
        let text = MINIMAL.replace("max_level = 3", "max_level = \"three\"");
        assert!(
            matches!(parse_config(&text), Err(ConfigError::Type { key, .. }) if key == "lattice.max_level")
        );
        assert!(matches!(
            parse_config("not toml ["),
            Err(ConfigError::Syntax(_))
        ));
    }

    #[test]
    fn single_cube_validation() {
        let text = MINIMAL.replace(
            "seed = 42",
            "seed = 42\nkind = \"single-cube\"\ncube_level = 2\ncube_coords = [3]",
        );
        let c = parse_config(&text).unwrap();
        assert_eq!(c.initial.cube, CubeId::new(2, &[3]));
        let text = MINIMAL.replace("seed = 42", "seed = 42\ncube_level = 2\ncube_coords = [4]");
        assert!(parse_config(&text).is_err());
        let text = MINIMAL.replace("seed = 42", "seed = 42\ncube_coords = [0, 0]");
        assert!(parse_config(&text).is_err());
    }

    #[test]
    fn large_seed_as_string() {
        let text = MINIMAL.replace("seed = 42", "seed = \"18446744073709551615\"");
        let c = parse_config(&text).unwrap();
        assert_eq!(c.initial.seed, u64::MAX);
        let again = parse_config(&c.to_toml()).unwrap();
        assert_eq!(again.initial.seed, u64::MAX);
    }

    #[test]
    fn normalisation_is_idempotent() {
        let first = parse_config(MINIMAL).unwrap().to_toml();
        let second = parse_config(&first).unwrap().to_toml();
        assert_eq!(first, second);
        assert_eq!(
            parse_config(&first).unwrap(),
            parse_config(MINIMAL).unwrap()
        );
    }
}
