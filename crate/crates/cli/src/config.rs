//! Run configuration: a single JSON document validated up front, with every
//! numeric knob defaulted and surfaced back to the user in the output
//! metadata.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("config parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    GapMap,
    MetricMap,
    RicciMap,
    ChristoffelMap,
    GeodesicCauchy,
    GeodesicDirichlet,
    DpFind,
    DpZoom,
    CircleLength,
    HbCompare,
    FockHist,
    ApproxError,
}

impl Command {
    pub fn as_kebab(&self) -> &'static str {
        match self {
            Command::GapMap => "gap-map",
            Command::MetricMap => "metric-map",
            Command::RicciMap => "ricci-map",
            Command::ChristoffelMap => "christoffel-map",
            Command::GeodesicCauchy => "geodesic-cauchy",
            Command::GeodesicDirichlet => "geodesic-dirichlet",
            Command::DpFind => "dp-find",
            Command::DpZoom => "dp-zoom",
            Command::CircleLength => "circle-length",
            Command::HbCompare => "hb-compare",
            Command::FockHist => "fock-hist",
            Command::ApproxError => "approx-error",
        }
    }

    pub fn all() -> &'static [&'static str] {
        &[
            "gap-map",
            "metric-map",
            "ricci-map",
            "christoffel-map",
            "geodesic-cauchy",
            "geodesic-dirichlet",
            "dp-find",
            "dp-zoom",
            "circle-length",
            "hb-compare",
            "fock-hist",
            "approx-error",
        ]
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    /// The f=1 boson model with N bosons over (κ, χ).
    Lmg {
        #[serde(rename = "N")]
        n: u32,
    },
    /// Two-level Bloch-sphere family over (θ, φ) at a fixed radius.
    TwoLevel {
        #[serde(default = "default_radius")]
        radius: f64,
    },
}

fn default_radius() -> f64 {
    1.0
}

impl ModelConfig {
    pub fn describe(&self) -> String {
        match self {
            ModelConfig::Lmg { n } => format!("lmg N={n}"),
            ModelConfig::TwoLevel { radius } => format!("two_level radius={radius}"),
        }
    }
}

/// One grid axis: [min, max, steps].
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct AxisSpec(pub f64, pub f64, pub usize);

impl AxisSpec {
    pub fn validate(&self, name: &str) -> Result<(), ConfigError> {
        if !(self.0.is_finite() && self.1.is_finite()) {
            return Err(invalid(format!("grid.{name}: non-finite bounds")));
        }
        if self.2 < 1 {
            return Err(invalid(format!("grid.{name}: steps must be >= 1, got {}", self.2)));
        }
        if self.0 > self.1 {
            return Err(invalid(format!("grid.{name}: min {} > max {}", self.0, self.1)));
        }
        Ok(())
    }

    pub fn points(&self) -> Vec<f64> {
        let AxisSpec(lo, hi, steps) = *self;
        if steps == 1 {
            return vec![lo];
        }
        (0..steps).map(|i| lo + (hi - lo) * i as f64 / (steps - 1) as f64).collect()
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub kappa: AxisSpec,
    pub chi: AxisSpec,
}

impl GridConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.kappa.validate("kappa")?;
        self.chi.validate("chi")
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NumericsConfig {
    #[serde(default = "d_fd_step")]
    pub fd_step: f64,
    #[serde(default = "d_overlap_step")]
    pub overlap_step: f64,
    #[serde(default = "d_det_threshold")]
    pub det_threshold: f64,
    #[serde(default = "d_ode_tol")]
    pub ode_abs_tol: f64,
    #[serde(default = "d_ode_tol")]
    pub ode_rel_tol: f64,
    #[serde(default = "d_capture_radius")]
    pub capture_radius: f64,
    #[serde(default = "d_trust_radius")]
    pub trust_radius: f64,
}

fn d_fd_step() -> f64 {
    1e-4
}
fn d_overlap_step() -> f64 {
    1e-5
}
fn d_det_threshold() -> f64 {
    1e-10
}
fn d_ode_tol() -> f64 {
    1e-9
}
fn d_capture_radius() -> f64 {
    1e-3
}
fn d_trust_radius() -> f64 {
    0.3
}

impl Default for NumericsConfig {
    fn default() -> Self {
        Self {
            fd_step: d_fd_step(),
            overlap_step: d_overlap_step(),
            det_threshold: d_det_threshold(),
            ode_abs_tol: d_ode_tol(),
            ode_rel_tol: d_ode_tol(),
            capture_radius: d_capture_radius(),
            trust_radius: d_trust_radius(),
        }
    }
}

impl NumericsConfig {
    fn validate(&self) -> Result<(), ConfigError> {
        for (name, v) in [
            ("fd_step", self.fd_step),
            ("overlap_step", self.overlap_step),
            ("det_threshold", self.det_threshold),
            ("ode_abs_tol", self.ode_abs_tol),
            ("ode_rel_tol", self.ode_rel_tol),
            ("capture_radius", self.capture_radius),
            ("trust_radius", self.trust_radius),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(format!("numerics.{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub path: String,
    pub format: OutputFormat,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub kappa: (f64, f64),
    pub chi: (f64, f64),
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StartConfig {
    pub kappa: f64,
    pub chi: f64,
    pub dkappa: f64,
    pub dchi: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeodesicConfig {
    pub starts: Vec<StartConfig>,
    #[serde(default = "d_tau_max")]
    pub tau_max: f64,
    pub domain: Option<DomainConfig>,
    /// Capture at the model's refined diabolic points.
    #[serde(default)]
    pub capture_at_dps: bool,
}

fn d_tau_max() -> f64 {
    10.0
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DirichletConfig {
    pub from: (f64, f64),
    pub to: (f64, f64),
    #[serde(default = "d_tau_max")]
    pub tau_max: f64,
    pub domain: Option<DomainConfig>,
    #[serde(default = "d_scan_angles")]
    pub scan_angles: usize,
    pub angle_range: Option<(f64, f64)>,
    #[serde(default = "d_miss_tol")]
    pub miss_tol: f64,
}

fn d_scan_angles() -> usize {
    720
}
fn d_miss_tol() -> f64 {
    1e-6
}

/// Selects one refined diabolic point of the LMG model.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DpSelect {
    pub l: u32,
    #[serde(default = "d_branch")]
    pub branch: String,
}

fn d_branch() -> String {
    "+".into()
}

impl DpSelect {
    pub fn branch_sign(&self) -> Result<f64, ConfigError> {
        match self.branch.as_str() {
            "+" => Ok(1.0),
            "-" => Ok(-1.0),
            other => Err(invalid(format!("dp.branch must be '+' or '-', got '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DpZoomConfig {
    #[serde(flatten)]
    pub dp: DpSelect,
    pub r: AxisSpec,
    #[serde(default = "d_theta_steps")]
    pub theta_steps: usize,
    #[serde(default = "d_shift")]
    pub shift: f64,
}

fn d_theta_steps() -> usize {
    90
}
fn d_shift() -> f64 {
    0.5
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircleConfig {
    #[serde(flatten)]
    pub dp: DpSelect,
    pub radii: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApproxErrorConfig {
    #[serde(flatten)]
    pub dp: DpSelect,
    pub theta: f64,
    pub radii: Vec<f64>,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointConfig {
    pub kappa: f64,
    pub chi: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub command: Command,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridConfig>,
    #[serde(default)]
    pub numerics: NumericsConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geodesic: Option<GeodesicConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dirichlet: Option<DirichletConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dp_zoom: Option<DpZoomConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub circle: Option<CircleConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub approx_error: Option<ApproxErrorConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point: Option<PointConfig>,
    pub output: OutputConfig,
    /// Execution detail only: never serialized into artifact metadata, so
    /// outputs stay bitwise-identical across worker counts.
    #[serde(default = "d_workers", skip_serializing)]
    pub workers: usize,
}

fn d_workers() -> usize {
    1
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal(command: &str, extra: &str) -> String {
        format!(
            r#"{{"model":{{"type":"lmg","N":5}},"command":"{command}",{extra}
                "output":{{"path":"out.csv","format":"csv"}}}}"#
        )
    }

    #[test]
    fn defaults_are_applied() {
        let cfg: RunConfig = serde_json::from_str(&minimal(
            "gap-map",
            r#""grid":{"kappa":[0.0,1.0,2],"chi":[0.0,1.0,2]},"#,
        ))
        .unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.numerics.fd_step, 1e-4);
        assert_eq!(cfg.numerics.det_threshold, 1e-10);
        assert_eq!(cfg.workers, 1);
    }

    #[test]
    fn grid_points_cover_endpoints() {
        let axis = AxisSpec(-1.0, 1.0, 5);
        let pts = axis.points();
        assert_eq!(pts.len(), 5);
        assert_eq!(pts[0], -1.0);
        assert_eq!(pts[4], 1.0);
        assert_eq!(AxisSpec(0.3, 0.9, 1).points(), vec![0.3]);
    }

    #[test]
    fn rejects_bad_ranges_and_missing_sections() {
        let cfg: RunConfig = serde_json::from_str(&minimal(
            "gap-map",
            r#""grid":{"kappa":[1.0,0.0,2],"chi":[0.0,1.0,2]},"#,
        ))
        .unwrap();
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("grid.kappa"), "{err}");

        let cfg: RunConfig = serde_json::from_str(&minimal("ricci-map", "")).unwrap();
        assert!(cfg.validate().unwrap_err().to_string().contains("grid"));

        let cfg: RunConfig = serde_json::from_str(&minimal("geodesic-cauchy", "")).unwrap();
        assert!(cfg.validate().unwrap_err().to_string().contains("geodesic"));
    }

    #[test]
    fn rejects_nonpositive_numeric_knobs() {
        let cfg: RunConfig = serde_json::from_str(&minimal(
            "gap-map",
            r#""grid":{"kappa":[0.0,1.0,2],"chi":[0.0,1.0,2]},
               "numerics":{"fd_step":-1.0},"#,
        ))
        .unwrap();
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("fd_step"), "{err}");
    }

    #[test]
    fn lmg_only_commands_reject_two_level_model() {
        let text = r#"{"model":{"type":"two_level"},"command":"dp-find",
                       "output":{"path":"out.csv","format":"csv"}}"#;
        let cfg: RunConfig = serde_json::from_str(text).unwrap();
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("lmg"), "{err}");
    }

    #[test]
    fn workers_do_not_serialize_into_metadata() {
        let cfg: RunConfig = serde_json::from_str(&minimal(
            "gap-map",
            r#""grid":{"kappa":[0.0,1.0,2],"chi":[0.0,1.0,2]},"workers":7,"#,
        ))
        .unwrap();
        assert_eq!(cfg.workers, 7);
        let round = serde_json::to_string(&cfg).unwrap();
        assert!(!round.contains("workers"), "{round}");
    }
}

impl RunConfig {
    pub fn load(path: &str) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.into(), source })?;
        let config: RunConfig = serde_json::from_str(&text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if let ModelConfig::Lmg { n } = self.model {
            if n == 0 {
                return Err(invalid("model.N must be at least 1"));
            }
        }
        self.numerics.validate()?;
        if self.workers == 0 {
            return Err(invalid("workers must be at least 1"));
        }
        let needs_grid = matches!(
            self.command,
            Command::GapMap
                | Command::MetricMap
                | Command::RicciMap
                | Command::ChristoffelMap
                | Command::HbCompare
        );
        if needs_grid {
            let grid = self
                .grid
                .as_ref()
                .ok_or_else(|| invalid(format!("{} requires a grid section", self.command.as_kebab())))?;
            grid.validate()?;
        }
        let lmg_only = matches!(
            self.command,
            Command::DpFind
                | Command::DpZoom
                | Command::CircleLength
                | Command::HbCompare
                | Command::FockHist
                | Command::ApproxError
        );
        if lmg_only && !matches!(self.model, ModelConfig::Lmg { .. }) {
            return Err(invalid(format!(
                "{} is defined for the lmg model only",
                self.command.as_kebab()
            )));
        }
        match self.command {
            Command::GeodesicCauchy => {
                let g = self
                    .geodesic
                    .as_ref()
                    .ok_or_else(|| invalid("geodesic-cauchy requires a geodesic section"))?;
                if g.starts.is_empty() {
                    return Err(invalid("geodesic.starts must not be empty"));
                }
                if !(g.tau_max.is_finite() && g.tau_max > 0.0) {
                    return Err(invalid("geodesic.tau_max must be positive"));
                }
                for (i, s) in g.starts.iter().enumerate() {
                    if s.dkappa == 0.0 && s.dchi == 0.0 {
                        return Err(invalid(format!("geodesic.starts[{i}]: zero direction")));
                    }
                }
            }
            Command::GeodesicDirichlet => {
                let d = self
                    .dirichlet
                    .as_ref()
                    .ok_or_else(|| invalid("geodesic-dirichlet requires a dirichlet section"))?;
                if d.scan_angles < 2 {
                    return Err(invalid("dirichlet.scan_angles must be at least 2"));
                }
            }
            Command::DpZoom => {
                let z = self
                    .dp_zoom
                    .as_ref()
                    .ok_or_else(|| invalid("dp-zoom requires a dp_zoom section"))?;
                z.dp.branch_sign()?;
                z.r.validate("r")?;
                if z.theta_steps < 1 {
                    return Err(invalid("dp_zoom.theta_steps must be at least 1"));
                }
                if !(z.shift.is_finite() && z.shift >= 0.0) {
                    return Err(invalid("dp_zoom.shift must be non-negative"));
                }
            }
            Command::CircleLength => {
                let c = self
                    .circle
                    .as_ref()
                    .ok_or_else(|| invalid("circle-length requires a circle section"))?;
                c.dp.branch_sign()?;
                if c.radii.is_empty() || c.radii.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
                    return Err(invalid("circle.radii must be positive"));
                }
            }
            Command::ApproxError => {
                let a = self
                    .approx_error
                    .as_ref()
                    .ok_or_else(|| invalid("approx-error requires an approx_error section"))?;
                a.dp.branch_sign()?;
                if a.radii.is_empty() || a.radii.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
                    return Err(invalid("approx_error.radii must be positive"));
                }
            }
            Command::FockHist => {
                if self.point.is_none() {
                    return Err(invalid("fock-hist requires a point section"));
                }
            }
            _ => {}
        }
        Ok(())
    }
}
