//! Experiment configuration documents.
//!
//! A config is TOML with `version = 1` and the blocks `model`, `schedule`,
//! `oracle`, `run`, `channel`, `curve` and `scale`; every block but `model`
//! is optional. Unknown keys are rejected with their full key path.

use std::fs;
use std::path::{Path, PathBuf};

use entsamp_core::mixture::{self, MixtureModel};
use entsamp_core::Perturbation;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub model: ModelSpec,
    #[serde(default)]
    pub schedule: ScheduleSpec,
    #[serde(default)]
    pub oracle: OracleSpec,
    #[serde(default)]
    pub run: RunSpec,
    #[serde(default)]
    pub channel: ChannelSpec,
    #[serde(default)]
    pub curve: CurveSpec,
    #[serde(default)]
    pub scale: ScaleSpec,
}

/// A model: `dim`, `eps` and either explicit `centers`/`weights` or exactly
/// one generator block. Inside an experiment config, `file` may point at a
/// standalone model document instead.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub centers: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub two_point: Option<TwoPointSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_product: Option<TokenProductSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geometric_weights: Option<GeometricSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwoPointSpec {
    pub separation: f64,
    #[serde(default = "half")]
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub points_per_axis: usize,
    pub spacing: f64,
    #[serde(default = "one")]
    pub axes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TokenProductSpec {
    pub n_tokens: usize,
    pub alphabet: usize,
    pub embedding_scale: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_probs: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometricSpec {
    pub ratio: f64,
    pub count: usize,
    #[serde(default = "one_f")]
    pub spacing: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    Hybrid,
    Uniform,
    Geometric,
    UniformEta,
}

impl ScheduleKind {
    pub fn name(self) -> &'static str {
        match self {
            ScheduleKind::Hybrid => "hybrid",
            ScheduleKind::Uniform => "uniform",
            ScheduleKind::Geometric => "geometric",
            ScheduleKind::UniformEta => "uniform_eta",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSpec {
    #[serde(default = "default_kind")]
    pub kind: ScheduleKind,
    #[serde(rename = "K", default = "default_steps")]
    pub steps: usize,
    #[serde(rename = "T", default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
}

impl Default for ScheduleSpec {
    fn default() -> Self {
        ScheduleSpec {
            kind: default_kind(),
            steps: default_steps(),
            horizon: default_horizon(),
            delta: default_delta(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PerturbationSpec {
    None,
    ConstantBias { bias: Vec<f64> },
    GaussianField { amplitude: f64, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Evaluation {
    LeftEndpoint,
    FutureState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSpec {
    #[serde(default = "no_perturbation")]
    pub perturbation: PerturbationSpec,
    #[serde(default = "left_endpoint")]
    pub evaluation: Evaluation,
}

impl Default for OracleSpec {
    fn default() -> Self {
        OracleSpec {
            perturbation: no_perturbation(),
            evaluation: left_endpoint(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    #[serde(default = "default_paths")]
    pub n_paths: usize,
    #[serde(default)]
    pub seed: u64,
    /// Output directory; each subcommand writes `<name>.csv` there.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outputs: Option<PathBuf>,
    #[serde(default)]
    pub trajectory: bool,
}

impl Default for RunSpec {
    fn default() -> Self {
        RunSpec {
            n_paths: default_paths(),
            seed: 0,
            outputs: None,
            trajectory: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Auto,
    Quadrature,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSpec {
    #[serde(default = "default_backend")]
    pub backend: BackendKind,
    #[serde(default = "default_draws")]
    pub draws: usize,
    #[serde(default = "default_cells")]
    pub cells_per_decade: usize,
    #[serde(default = "default_quad")]
    pub quad_points: usize,
}

impl Default for ChannelSpec {
    fn default() -> Self {
        ChannelSpec {
            backend: default_backend(),
            draws: default_draws(),
            cells_per_decade: default_cells(),
            quad_points: default_quad(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveSpec {
    #[serde(default = "default_eta_min")]
    pub eta_min: f64,
    #[serde(default = "default_eta_max")]
    pub eta_max: f64,
    #[serde(default = "default_points")]
    pub points: usize,
}

impl Default for CurveSpec {
    fn default() -> Self {
        CurveSpec {
            eta_min: default_eta_min(),
            eta_max: default_eta_max(),
            points: default_points(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScaleSpec {
    #[serde(rename = "K", default = "default_scale_steps")]
    pub steps: Vec<usize>,
    #[serde(rename = "d", default = "default_scale_dims")]
    pub dims: Vec<usize>,
}

impl Default for ScaleSpec {
    fn default() -> Self {
        ScaleSpec {
            steps: default_scale_steps(),
            dims: default_scale_dims(),
        }
    }
}

fn half() -> f64 {
    0.5
}
fn one() -> usize {
    1
}
fn one_f() -> f64 {
    1.0
}
fn default_kind() -> ScheduleKind {
    ScheduleKind::Hybrid
}
fn default_steps() -> usize {
    64
}
fn default_horizon() -> f64 {
    100.0
}
fn default_delta() -> f64 {
    0.01
}
fn no_perturbation() -> PerturbationSpec {
    PerturbationSpec::None
}
fn left_endpoint() -> Evaluation {
    Evaluation::LeftEndpoint
}
fn default_paths() -> usize {
    10_000
}
fn default_backend() -> BackendKind {
    BackendKind::Auto
}
fn default_draws() -> usize {
    entsamp_core::channel::DEFAULT_DRAWS
}
fn default_cells() -> usize {
    8
}
fn default_quad() -> usize {
    entsamp_core::analysis::DEFAULT_QUAD_POINTS
}
fn default_eta_min() -> f64 {
    1e-3
}
fn default_eta_max() -> f64 {
    1e3
}
fn default_points() -> usize {
    50
}
fn default_scale_steps() -> Vec<usize> {
    vec![32, 64, 128, 256]
}
fn default_scale_dims() -> Vec<usize> {
    vec![1, 16, 256]
}

/// Deserializes TOML, reporting the key path of the first offending entry.
pub fn parse_toml<T: serde::de::DeserializeOwned>(text: &str, origin: &Path) -> Result<T, CliError> {
    let de = toml::Deserializer::new(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        CliError::Config(format!(
            "{}: at `{}`: {}",
            origin.display(),
            path,
            inner.message().trim()
        ))
    })
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))
}

impl ExperimentConfig {
    /// Loads and validates a config file; a `model.file` reference is read
    /// relative to the config's directory and inlined.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let mut cfg: ExperimentConfig = parse_toml(&read(path)?, path)?;
        if let Some(file) = cfg.model.file.take() {
            let base = path.parent().unwrap_or(Path::new("."));
            let file = base.join(file);
            let inline = &cfg.model;
            if *inline != ModelSpec::default() {
                return Err(CliError::Config(format!(
                    "{}: at `model`: `file` cannot be combined with inline model keys",
                    path.display()
                )));
            }
            cfg.model = ModelSpec::load(&file)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// A config wrapping `model` with every other block at its default.
    pub fn with_model(model: ModelSpec) -> Self {
        ExperimentConfig {
            version: CONFIG_VERSION,
            model,
            schedule: ScheduleSpec::default(),
            oracle: OracleSpec::default(),
            run: RunSpec::default(),
            channel: ChannelSpec::default(),
            curve: CurveSpec::default(),
            scale: ScaleSpec::default(),
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.version != CONFIG_VERSION {
            return Err(CliError::Config(format!(
                "at `version`: unsupported config version {} (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        let model = self.model.build()?;
        self.perturbation(&model)?;
        let s = &self.schedule;
        if !(s.horizon > s.delta && s.delta > 0.0 && s.horizon.is_finite()) {
            return Err(CliError::Config(format!(
                "at `schedule`: need 0 < delta < T, got delta = {}, T = {}",
                s.delta, s.horizon
            )));
        }
        if s.steps == 0 {
            return Err(CliError::Config("at `schedule.K`: need K >= 1".into()));
        }
        if self.run.n_paths == 0 {
            return Err(CliError::Config("at `run.n_paths`: need at least one path".into()));
        }
        if self.channel.draws < 2 || self.channel.cells_per_decade == 0 || self.channel.quad_points == 0 {
            return Err(CliError::Config(
                "at `channel`: draws >= 2, cells_per_decade >= 1 and quad_points >= 1 are required"
                    .into(),
            ));
        }
        let c = &self.curve;
        if !(c.eta_min > 0.0 && c.eta_max > c.eta_min && c.eta_max.is_finite() && c.points >= 2) {
            return Err(CliError::Config(
                "at `curve`: need 0 < eta_min < eta_max and points >= 2".into(),
            ));
        }
        if self.scale.steps.is_empty() || self.scale.dims.is_empty() {
            return Err(CliError::Config("at `scale`: K and d must be non-empty".into()));
        }
        Ok(())
    }

    /// Scale-study dimensions must embed the model.
    pub fn validate_scale(&self, model: &MixtureModel) -> Result<(), CliError> {
        match self.scale.dims.iter().find(|&&d| d < model.dim()) {
            Some(d) => Err(CliError::Config(format!(
                "at `scale.d`: d = {d} is below the model dimension {}",
                model.dim()
            ))),
            None => Ok(()),
        }
    }

    pub fn perturbation(&self, model: &MixtureModel) -> Result<Perturbation, CliError> {
        if self.oracle.evaluation == Evaluation::FutureState {
            return Err(CliError::Config(
                "at `oracle.evaluation`: the bias must be evaluated at the left endpoint of each step; \
                 `future_state` is not measurable there"
                    .into(),
            ));
        }
        let p = match &self.oracle.perturbation {
            PerturbationSpec::None => Perturbation::None,
            PerturbationSpec::ConstantBias { bias } => Perturbation::ConstantBias(bias.clone()),
            PerturbationSpec::GaussianField { amplitude, seed } => Perturbation::GaussianField {
                amplitude: *amplitude,
                seed: *seed,
            },
        };
        entsamp_core::ScoreOracle::perturbed(model, p.clone())
            .map_err(|e| CliError::Config(format!("at `oracle.perturbation`: {e}")))?;
        Ok(p)
    }

    /// SHA-256 of the canonical TOML form.
    pub fn sha256(&self) -> String {
        let text = toml::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

impl ModelSpec {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let spec: ModelSpec = parse_toml(&read(path)?, path)?;
        if spec.file.is_some() {
            return Err(CliError::Config(format!(
                "{}: at `file`: a model document cannot reference another file",
                path.display()
            )));
        }
        spec.build()?;
        Ok(spec)
    }

    /// Explicit form of `model`, which reloads to an identical model.
    pub fn explicit(model: &MixtureModel) -> Self {
        ModelSpec {
            dim: Some(model.dim()),
            eps: Some(model.eps()),
            centers: Some(model.centers().map(|c| c.to_vec()).collect()),
            weights: Some(model.weights().to_vec()),
            ..ModelSpec::default()
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("model serializes")
    }

    pub fn build(&self) -> Result<MixtureModel, CliError> {
        let err = |key: &str, msg: String| CliError::Config(format!("at `model{key}`: {msg}"));
        if self.file.is_some() {
            return Err(err(".file", "unresolved model file reference".into()));
        }
        let dim = self.dim.ok_or_else(|| err("", "missing key `dim`".into()))?;
        let eps = self.eps.unwrap_or(0.0);
        let explicit = self.centers.is_some() || self.weights.is_some();
        let generators = [
            self.two_point.is_some(),
            self.grid.is_some(),
            self.token_product.is_some(),
            self.geometric_weights.is_some(),
        ]
        .iter()
        .filter(|&&b| b)
        .count();
        if generators + usize::from(explicit) != 1 {
            return Err(err(
                "",
                "give either `centers` and `weights` or exactly one generator block".into(),
            ));
        }
        let core = |key: &str, e: entsamp_core::Error| err(key, e.to_string());
        if explicit {
            let centers = self
                .centers
                .as_ref()
                .ok_or_else(|| err("", "missing key `centers`".into()))?;
            let weights = self
                .weights
                .clone()
                .ok_or_else(|| err("", "missing key `weights`".into()))?;
            if let Some(i) = centers.iter().position(|c| c.len() != dim) {
                return Err(err(
                    &format!(".centers[{i}]"),
                    format!("expected {dim} coordinates, got {}", centers[i].len()),
                ));
            }
            return MixtureModel::from_rows(centers, weights, eps).map_err(|e| core("", e));
        }
        if let Some(tp) = &self.two_point {
            return mixture::two_point(dim, eps, tp.separation, tp.p).map_err(|e| core(".two_point", e));
        }
        if let Some(g) = &self.grid {
            return mixture::grid(dim, eps, g.points_per_axis, g.spacing, g.axes)
                .map_err(|e| core(".grid", e));
        }
        if let Some(t) = &self.token_product {
            return mixture::token_product(
                dim,
                eps,
                t.n_tokens,
                t.alphabet,
                t.embedding_scale,
                t.token_probs.as_deref(),
            )
            .map_err(|e| core(".token_product", e));
        }
        let g = self.geometric_weights.as_ref().expect("one generator present");
        mixture::geometric_weights(dim, eps, g.ratio, g.count, g.spacing)
            .map(|(m, _)| m)
            .map_err(|e| core(".geometric_weights", e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ExperimentConfig, CliError> {
        let cfg: ExperimentConfig = parse_toml(text, Path::new("test.toml"))?;
        cfg.validate()?;
        Ok(cfg)
    }

    #[test]
    fn minimal_config_takes_defaults() {
        let cfg = parse("version = 1\n[model]\ndim = 1\ntwo_point = { separation = 2.0 }\n").unwrap();
        assert_eq!(cfg.schedule.steps, 64);
        assert_eq!(cfg.model.build().unwrap().components(), 2);
    }

    #[test]
    fn unknown_key_reports_its_path() {
        let err = parse("version = 1\n[model]\ndim = 1\ntwo_point = { separaton = 2.0 }\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("model.two_point"), "{msg}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn future_state_evaluation_is_rejected() {
        let err = parse(
            "version = 1\n[model]\ndim = 1\ntwo_point = { separation = 2.0 }\n\
             [oracle]\nevaluation = \"future_state\"\n",
        )
        .unwrap_err();
        assert!(err.to_string().contains("oracle.evaluation"));
    }

    #[test]
    fn wrong_version_is_rejected() {
        assert!(parse("version = 2\n[model]\ndim = 1\ntwo_point = { separation = 2.0 }\n").is_err());
    }

    #[test]
    fn explicit_model_round_trips_bit_exactly() {
        let m = mixture::token_product(3, 0.1, 2, 3, 0.7, Some(&[0.2, 0.3, 0.5])).unwrap();
        let text = ModelSpec::explicit(&m).to_toml();
        let back: ModelSpec = parse_toml(&text, Path::new("m.toml")).unwrap();
        let m2 = back.build().unwrap();
        assert_eq!(m, m2);
        assert_eq!(m.summary(), m2.summary());
    }

    #[test]
    fn both_forms_are_rejected() {
        let err = parse(
            "version = 1\n[model]\ndim = 1\ncenters = [[1.0]]\nweights = [1.0]\n\
             two_point = { separation = 2.0 }\n",
        )
        .unwrap_err();
        assert!(err.to_string().contains("exactly one generator"));
    }
}
