//! Experiment configuration: a TOML file deserialized into
//! [`ExperimentConfig`] and cross-validated before anything runs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use polytension::grid::{DerivativeScheme, GridSpec};
use polytension::manifold::{ChartTarget, GenericMetric, PolynomialTerm, DEFAULT_GENERIC_STEP};
use polytension::tension::catalog::MapSpec;
use polytension::tension::EnergyRequest;
use polytension::verify::cutoff::CutoffFamily;
use polytension::verify::pohozaev::PohozaevMode;
use polytension::verify::variation::{EnergyKind, Steps};
use polytension::{Grid, Target};
use serde::{Deserialize, Serialize};

/// A configuration problem, located by the dotted path of the offending key.
#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(String),
    #[error("{field}: {reason}")]
    Invalid { field: String, reason: String },
}

fn invalid(field: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.into(),
        reason: reason.into(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Report,
    Verify,
    Pohozaev,
    Convergence,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: Task,
    /// Base seed of every randomized field (variation directions and metric
    /// perturbations). `--seed` overrides it.
    #[serde(default)]
    pub seed: u64,
    pub target: TargetConfig,
    pub grid: GridConfig,
    pub map: MapSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<ReportParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verify: Option<VerifyParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pohozaev: Option<PohozaevParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub convergence: Option<ConvergenceParams>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub outputs: Outputs,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetConfig {
    Euclidean {
        dim: usize,
    },
    Sphere {
        #[serde(default = "two")]
        dim: usize,
        #[serde(default = "unit")]
        radius: f64,
    },
    Hyperbolic {
        #[serde(default = "two")]
        dim: usize,
        #[serde(default = "unit")]
        radius: f64,
    },
    /// A chart metric evaluated numerically, with finite-difference step `step`.
    Generic {
        metric: GenericConfig,
        #[serde(default = "generic_step")]
        step: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum GenericConfig {
    Sphere { radius: f64 },
    Hyperbolic { radius: f64 },
    Torus { major: f64, minor: f64 },
    /// `h = I + Σ terms`.
    Polynomial { dim: usize, terms: Vec<PolynomialTermConfig> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolynomialTermConfig {
    pub entry: [usize; 2],
    pub coeff: f64,
    pub powers: Vec<u32>,
}

fn two() -> usize {
    2
}

fn unit() -> f64 {
    1.0
}

fn generic_step() -> f64 {
    DEFAULT_GENERIC_STEP
}

impl TargetConfig {
    pub fn build(&self) -> polytension::Result<Target> {
        match self {
            TargetConfig::Euclidean { dim } => ChartTarget::euclidean(*dim),
            TargetConfig::Sphere { dim, radius } => ChartTarget::sphere(*dim, *radius),
            TargetConfig::Hyperbolic { dim, radius } => ChartTarget::hyperbolic(*dim, *radius),
            TargetConfig::Generic { metric, step } => {
                let (dim, metric) = match metric {
                    GenericConfig::Sphere { radius } => (2, GenericMetric::sphere(*radius, *step)),
                    GenericConfig::Hyperbolic { radius } => (2, GenericMetric::hyperbolic(*radius, *step)),
                    GenericConfig::Torus { major, minor } => (2, GenericMetric::torus(*major, *minor, *step)),
                    GenericConfig::Polynomial { dim, terms } => {
                        let terms = terms
                            .iter()
                            .map(|t| PolynomialTerm {
                                entry: (t.entry[0], t.entry[1]),
                                coeff: t.coeff,
                                powers: t.powers.clone(),
                            })
                            .collect();
                        (*dim, GenericMetric::polynomial(*dim, terms, *step)?)
                    }
                };
                ChartTarget::generic(dim, metric)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeName {
    Periodic,
    CompactSupport,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeName {
    Spectral,
    FiniteDifference,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub m: usize,
    /// One length per axis, or a single length for all of them.
    pub lengths: Vec<f64>,
    /// One resolution per axis, or a single resolution for all of them.
    pub resolutions: Vec<usize>,
    pub mode: ModeName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub support_radius: Option<f64>,
    /// Defaults to spectral on periodic grids and finite differences otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scheme: Option<SchemeName>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fd_order: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spectral_band: Option<f64>,
}

fn per_axis<V: Copy>(field: &str, values: &[V], m: usize) -> Result<Vec<V>, ConfigError> {
    match values.len() {
        1 => Ok(vec![values[0]; m]),
        n if n == m => Ok(values.to_vec()),
        n => Err(invalid(field, format!("expected 1 or {m} entries, got {n}"))),
    }
}

impl GridConfig {
    pub fn scheme(&self) -> DerivativeScheme {
        let fd = DerivativeScheme::FiniteDifference {
            order: self.fd_order.unwrap_or(6),
        };
        match (self.scheme, self.mode) {
            (Some(SchemeName::Spectral), _) => DerivativeScheme::Spectral,
            (Some(SchemeName::FiniteDifference), _) => fd,
            (None, ModeName::Periodic) => DerivativeScheme::Spectral,
            (None, ModeName::CompactSupport) => fd,
        }
    }

    /// Spec with every axis at `resolution` (used by refinement studies).
    pub fn spec_at(&self, resolution: Option<usize>) -> Result<GridSpec<f64>, ConfigError> {
        let lengths = per_axis("grid.lengths", &self.lengths, self.m)?;
        let resolutions = match resolution {
            Some(n) => vec![n; self.m],
            None => per_axis("grid.resolutions", &self.resolutions, self.m)?,
        };
        let spec = match self.mode {
            ModeName::Periodic => GridSpec::periodic(lengths, resolutions),
            ModeName::CompactSupport => {
                let r = self
                    .support_radius
                    .ok_or_else(|| invalid("grid.support_radius", "required for compact_support grids"))?;
                GridSpec::compact_support(lengths, resolutions, r)
            }
        };
        let spec = spec.with_scheme(self.scheme());
        Ok(match self.spectral_band {
            Some(b) => spec.with_spectral_band(b),
            None => spec,
        })
    }

    pub fn build_at(&self, resolution: Option<usize>) -> Result<Grid, ConfigError> {
        self.spec_at(resolution)?
            .build()
            .map_err(|e| invalid("grid", e.to_string()))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportParams {
    #[serde(default)]
    pub energies: EnergyRequest,
    /// Expected values by report key (`E`, `E4`, `E4_hat`, ...), compared
    /// with `tolerances.energy`.
    #[serde(default)]
    pub expected: BTreeMap<String, f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CheckName {
    #[serde(rename = "conservation_S4")]
    ConservationS4,
    #[serde(rename = "conservation_S4ES")]
    ConservationS4ES,
    /// Trace identities of `Ŝ₄`.
    #[serde(rename = "trace")]
    Trace,
    /// Curvature form of `Ŝ₄` against the omega form.
    #[serde(rename = "hat_forms")]
    HatForms,
    #[serde(rename = "map_variation")]
    MapVariation,
    #[serde(rename = "metric_variation")]
    MetricVariation,
    #[serde(rename = "tension_metric_variation")]
    TensionMetricVariation,
}

impl CheckName {
    pub fn name(self) -> &'static str {
        match self {
            CheckName::ConservationS4 => "conservation_S4",
            CheckName::ConservationS4ES => "conservation_S4ES",
            CheckName::Trace => "trace",
            CheckName::HatForms => "hat_forms",
            CheckName::MapVariation => "map_variation",
            CheckName::MetricVariation => "metric_variation",
            CheckName::TensionMetricVariation => "tension_metric_variation",
        }
    }

    fn needs_periodic(self) -> bool {
        !matches!(self, CheckName::MapVariation)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyParams {
    pub checks: Vec<CheckName>,
    /// Energies for `map_variation`.
    #[serde(default = "default_map_energies")]
    pub map_energies: Vec<EnergyKind>,
    /// Energies for `metric_variation`.
    #[serde(default = "default_metric_energies")]
    pub metric_energies: Vec<EnergyKind>,
    /// Random directions per variation check.
    #[serde(default = "default_samples")]
    pub samples: u64,
    /// Peak size of the random directions.
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
    /// Largest Fourier mode of the random directions; defaults to `N/8`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_mode: Option<usize>,
    #[serde(default)]
    pub steps: Steps,
}

fn default_map_energies() -> Vec<EnergyKind> {
    vec![EnergyKind::E4, EnergyKind::E4ES]
}

fn default_metric_energies() -> Vec<EnergyKind> {
    vec![EnergyKind::E4Hat]
}

fn default_samples() -> u64 {
    3
}

fn default_amplitude() -> f64 {
    0.1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PohozaevParams {
    /// Cutoff radii `R`; each needs `2R` plus the stencil margin inside the box.
    pub radii: Vec<f64>,
    #[serde(default = "default_modes")]
    pub modes: Vec<PohozaevMode>,
    #[serde(default = "default_family")]
    pub family: CutoffFamily,
}

fn default_modes() -> Vec<PohozaevMode> {
    vec![PohozaevMode::Fourth]
}

fn default_family() -> CutoffFamily {
    CutoffFamily::Mollified
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Quantity {
    #[serde(rename = "conservation_S4")]
    ConservationS4,
    #[serde(rename = "conservation_S4ES")]
    ConservationS4ES,
    Pohozaev {
        radius: f64,
        #[serde(default = "fourth")]
        mode: PohozaevMode,
        #[serde(default = "default_family")]
        family: CutoffFamily,
    },
}

fn fourth() -> PohozaevMode {
    PohozaevMode::Fourth
}

impl Quantity {
    pub fn name(&self) -> String {
        match self {
            Quantity::ConservationS4 => "conservation_S4".into(),
            Quantity::ConservationS4ES => "conservation_S4ES".into(),
            Quantity::Pohozaev { mode, .. } => format!("pohozaev_{}", serde_name(mode)),
        }
    }
}

/// The serde string of a unit enum variant.
pub fn serde_name<S: Serialize>(v: &S) -> String {
    match serde_json::to_value(v) {
        Ok(serde_json::Value::String(s)) => s,
        other => format!("{other:?}"),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceParams {
    /// Points per axis at each level, strictly increasing.
    pub levels: Vec<usize>,
    pub quantity: Quantity,
    /// Minimum fitted order; defaults to the scheme order minus one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_order: Option<f64>,
}

/// Pass thresholds. Relative unless stated otherwise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub conservation_s4: f64,
    pub conservation_s4es: f64,
    pub trace: f64,
    pub hat_forms: f64,
    pub variation: f64,
    /// Relative to the expected value, or absolute when that value is 0.
    pub energy: f64,
    pub pohozaev: f64,
    /// Residuals at or below this are roundoff and excluded from order fits.
    pub saturation_floor: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            conservation_s4: 1e-8,
            conservation_s4es: 1e-7,
            trace: 1e-9,
            hat_forms: 1e-9,
            variation: 1e-6,
            energy: 1e-10,
            pohozaev: 1e-4,
            saturation_floor: 1e-12,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Outputs {
    /// Output directory; `--out` overrides it.
    pub dir: PathBuf,
    /// Write `tables/*.csv` next to the report.
    pub tables: bool,
    /// Write the map and its tension fields; `--dump-fields` forces it on.
    pub dump_fields: bool,
}

impl Default for Outputs {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            tables: true,
            dump_fields: false,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let config: Self = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    /// Cross-field rules that serde alone cannot express.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let g = &self.grid;
        if g.m == 0 {
            return Err(invalid("grid.m", "must be positive"));
        }
        per_axis("grid.lengths", &g.lengths, g.m)?;
        per_axis("grid.resolutions", &g.resolutions, g.m)?;
        let periodic = g.mode == ModeName::Periodic;
        if g.scheme() == DerivativeScheme::Spectral && !periodic {
            return Err(invalid("grid.scheme", "spectral differentiation needs a periodic grid"));
        }
        if periodic && g.support_radius.is_some() {
            return Err(invalid("grid.support_radius", "only meaningful on compact_support grids"));
        }
        if g.scheme() == DerivativeScheme::Spectral && g.fd_order.is_some() {
            return Err(invalid("grid.fd_order", "set, but the scheme is spectral"));
        }
        if let Some(order) = g.fd_order {
            if ![2, 4, 6, 8].contains(&order) {
                return Err(invalid("grid.fd_order", format!("must be 2, 4, 6 or 8, got {order}")));
            }
        }
        let section = |present: bool, name: &str| {
            if present {
                Ok(())
            } else {
                Err(invalid(name, format!("required by task = \"{}\"", serde_name(&self.task))))
            }
        };
        match self.task {
            Task::Report => {}
            Task::Verify => {
                section(self.verify.is_some(), "verify")?;
                let v = self.verify.as_ref().expect("checked above");
                if v.checks.is_empty() {
                    return Err(invalid("verify.checks", "at least one check is required"));
                }
                if let Some(c) = v.checks.iter().find(|c| c.needs_periodic()) {
                    if !periodic {
                        return Err(invalid(
                            "verify.checks",
                            format!("{} needs a periodic grid", c.name()),
                        ));
                    }
                }
                if v.samples == 0 {
                    return Err(invalid("verify.samples", "must be positive"));
                }
                for (i, k) in v.metric_energies.iter().enumerate() {
                    if !matches!(k, EnergyKind::E4 | EnergyKind::E4Hat | EnergyKind::E4ES) {
                        return Err(invalid(
                            &format!("verify.metric_energies[{i}]"),
                            format!("no stress tensor for {k}"),
                        ));
                    }
                }
            }
            Task::Pohozaev => {
                section(self.pohozaev.is_some(), "pohozaev")?;
                if periodic {
                    return Err(invalid("grid.mode", "the pohozaev task needs a compact_support grid"));
                }
                let p = self.pohozaev.as_ref().expect("checked above");
                if p.radii.is_empty() || p.radii.iter().any(|r| !(*r > 0.0)) {
                    return Err(invalid("pohozaev.radii", "needs at least one positive radius"));
                }
            }
            Task::Convergence => section(self.convergence.is_some(), "convergence")?,
        }
        if let Some(c) = &self.convergence {
            self.validate_convergence(c)?;
        }
        Ok(())
    }

    fn validate_convergence(&self, c: &ConvergenceParams) -> Result<(), ConfigError> {
        if c.levels.len() < 3 {
            return Err(invalid(
                "convergence.levels",
                format!("a convergence study needs at least 3 levels, got {}", c.levels.len()),
            ));
        }
        if c.levels.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("convergence.levels", "levels must increase strictly"));
        }
        let periodic = self.grid.mode == ModeName::Periodic;
        match c.quantity {
            Quantity::Pohozaev { .. } if periodic => Err(invalid(
                "convergence.quantity",
                "pohozaev needs a compact_support grid",
            )),
            Quantity::ConservationS4 | Quantity::ConservationS4ES if !periodic => Err(invalid(
                "convergence.quantity",
                "conservation laws are checked on periodic grids",
            )),
            _ => Ok(()),
        }
    }

    /// Canonical JSON of the configuration; its hash identifies the run.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("configs serialize")
    }
}
