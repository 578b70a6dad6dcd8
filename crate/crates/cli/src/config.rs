//! Run configuration files.
//!
//! A configuration names either a built-in benchmark or a set of external
//! models, the assembly strategy, optional cost biasing, and every sampler
//! setting. Files ending in `.json` are read as JSON; anything else as TOML.

use std::path::{Path, PathBuf};
use std::time::Duration;

use lfmc_core::{
    Benchmark, CostModel, EnsembleSpec, FitOptions, JointDistribution, KernelFamily, Marginal, ModelHandle, RunConfig,
    Strategy,
};
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::external::{ExternalModel, ExternalModelSpec};

/// Sampler settings sit at the top level next to the model description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    /// Built-in analytical problem; excludes `models`.
    pub benchmark: Option<Benchmark>,
    /// External subprocess models; excludes `benchmark`.
    pub models: Option<ExternalModels>,
    /// Input distribution. Benchmarks default to independent standard
    /// normals; external models require it.
    pub inputs: Option<InputsConfig>,
    pub strategy: Strategy,
    /// Cost-biasing exponent applied to the normalized model costs.
    pub beta: Option<f64>,
    /// Biasing factors used as given, one per low-fidelity model.
    pub gamma_override: Option<Vec<f64>>,
    pub gp: GpConfig,
    #[serde(flatten)]
    pub run: RunConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            benchmark: None,
            models: None,
            inputs: None,
            strategy: Strategy::Lfds,
            beta: None,
            gamma_override: None,
            gp: GpConfig::default(),
            run: RunConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalModels {
    pub hf: ExternalModelSpec,
    pub lf: Vec<ExternalModelSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputsConfig {
    pub marginals: Vec<Marginal>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correlation: Option<Vec<Vec<f64>>>,
}

/// Gaussian-process settings for the correction models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GpConfig {
    pub kernel: KernelFamily,
    pub n_starts: usize,
    pub retrain_starts: usize,
    pub refit_growth: f64,
    pub max_evaluations: usize,
}

impl Default for GpConfig {
    fn default() -> Self {
        let f = FitOptions::default();
        Self {
            kernel: f.family,
            n_starts: f.n_starts,
            retrain_starts: f.retrain_starts,
            refit_growth: f.refit_growth,
            max_evaluations: f.max_evaluations,
        }
    }
}

impl GpConfig {
    pub fn fit_options(&self) -> FitOptions {
        FitOptions {
            family: self.kernel,
            n_starts: self.n_starts,
            retrain_starts: self.retrain_starts,
            refit_growth: self.refit_growth,
            max_evaluations: self.max_evaluations,
            ..FitOptions::default()
        }
    }
}

/// Everything needed to start a run.
pub struct Problem {
    pub spec: EnsembleSpec,
    pub inputs: JointDistribution,
    pub run: RunConfig,
}

impl Problem {
    pub fn hf_name(&self) -> &str {
        &self.spec.hf.name
    }

    pub fn lf_names(&self) -> Vec<String> {
        self.spec.lfs.iter().map(|h| h.name.clone()).collect()
    }
}

fn invalid(field: &str, message: impl Into<String>) -> CliError {
    CliError::Validation {
        field: field.into(),
        message: message.into(),
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let parsed = if is_json(path) {
            Self::from_json_str(&text)
        } else {
            Self::from_toml_str(&text)
        };
        parsed.map_err(|e| match e {
            CliError::Parse { message, .. } => CliError::Parse {
                path: Some(path.to_path_buf()),
                message,
            },
            other => other,
        })
    }

    pub fn from_toml_str(text: &str) -> Result<Self, CliError> {
        let parse = |message: String| CliError::Parse { path: None, message };
        let table: toml::Table = toml::from_str(text).map_err(|e| parse(e.to_string()))?;
        check_keys(table.keys().map(String::as_str))?;
        check_benchmark(table.get("benchmark").and_then(toml::Value::as_str))?;
        table.try_into().map_err(|e: toml::de::Error| parse(e.to_string()))
    }

    pub fn from_json_str(text: &str) -> Result<Self, CliError> {
        let parse = |message: String| CliError::Parse { path: None, message };
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| parse(e.to_string()))?;
        match &value {
            serde_json::Value::Object(map) => {
                check_keys(map.keys().map(String::as_str))?;
                check_benchmark(map.get("benchmark").and_then(serde_json::Value::as_str))?;
            }
            _ => return Err(parse("configuration must be an object".into())),
        }
        serde_json::from_value(value).map_err(|e| parse(e.to_string()))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("configuration serializes to TOML")
    }

    /// JSON cannot represent infinite values; use TOML for an infinite
    /// `u_threshold`.
    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("configuration serializes to JSON")
    }

    pub fn n_lf_models(&self) -> usize {
        match (&self.benchmark, &self.models) {
            (Some(b), _) => b.n_lf_models(),
            (None, Some(m)) => m.lf.len(),
            (None, None) => 0,
        }
    }

    pub fn input_distribution(&self) -> Result<JointDistribution, CliError> {
        match (&self.inputs, &self.benchmark) {
            (Some(i), _) => JointDistribution::new(i.marginals.clone(), i.correlation.clone())
                .map_err(|e| invalid("inputs", e.to_string())),
            (None, Some(b)) => Ok(JointDistribution::standard_normal(b.dimension())),
            (None, None) => Err(invalid("inputs", "external models need an input distribution")),
        }
    }

    /// Check every field without starting any model.
    pub fn validate(&self) -> Result<(), CliError> {
        match (&self.benchmark, &self.models) {
            (Some(_), Some(_)) => return Err(invalid("models", "give either `benchmark` or `models`, not both")),
            (None, None) => return Err(invalid("benchmark", "give a benchmark name or external `models`")),
            _ => {}
        }
        let inputs = self.input_distribution()?;
        let dim = inputs.dim();
        if let Some(b) = self.benchmark {
            if dim != b.dimension() {
                return Err(invalid(
                    "inputs",
                    format!("{b} takes {} inputs, got {dim}", b.dimension()),
                ));
            }
        }
        if let Some(m) = &self.models {
            if m.lf.is_empty() {
                return Err(invalid("models.lf", "at least one low-fidelity model is required"));
            }
            m.hf.validate(dim).map_err(|e| invalid("models.hf", e))?;
            for (i, lf) in m.lf.iter().enumerate() {
                lf.validate(dim).map_err(|e| invalid(&format!("models.lf[{i}]"), e))?;
            }
        }
        self.cost_model()?;
        if self.gp.n_starts == 0 || self.gp.retrain_starts == 0 {
            return Err(invalid("gp", "n_starts and retrain_starts must be positive"));
        }
        if !(self.gp.refit_growth.is_finite() && self.gp.refit_growth >= 0.0) {
            return Err(invalid("gp.refit_growth", "must be finite and non-negative"));
        }
        if self.gp.max_evaluations == 0 {
            return Err(invalid("gp.max_evaluations", "must be positive"));
        }
        self.run.validate(dim).map_err(|e| {
            let message = e.to_string();
            let field = config_field(&message);
            invalid(field, message)
        })
    }

    pub fn cost_model(&self) -> Result<CostModel, CliError> {
        let n = self.n_lf_models();
        let taus: Vec<f64> = match &self.models {
            Some(m) => m.lf.iter().map(|s| s.tau).collect(),
            None => vec![1.0; n],
        };
        let beta = self.beta.unwrap_or(0.0);
        if !(beta.is_finite() && beta >= 0.0) {
            return Err(invalid("beta", format!("must be finite and non-negative, got {beta}")));
        }
        let cost = CostModel::new(&taus, beta).map_err(|e| invalid("models.lf.tau", e.to_string()))?;
        match &self.gamma_override {
            None => Ok(cost),
            Some(g) => cost
                .with_gamma_override(g.clone())
                .map_err(|e| invalid("gamma_override", e.to_string())),
        }
    }

    /// Validate and assemble the models. External models are started here.
    pub fn build(&self) -> Result<Problem, CliError> {
        self.validate()?;
        let inputs = self.input_distribution()?;
        let cost = self.cost_model()?;
        let fit = self.gp.fit_options();
        let spec = match (&self.benchmark, &self.models) {
            (Some(b), _) => EnsembleSpec {
                cost,
                ..b.ensemble_spec(self.strategy, fit)
            },
            (None, Some(m)) => {
                let dim = inputs.dim();
                let hf = external_handle(0, "hf", &m.hf, dim)?;
                let lfs = m
                    .lf
                    .iter()
                    .enumerate()
                    .map(|(i, s)| external_handle(i + 1, &format!("lf{}", i + 1), s, dim))
                    .collect::<Result<Vec<_>, _>>()?;
                EnsembleSpec {
                    input_dim: dim,
                    hf,
                    lfs,
                    cost,
                    strategy: self.strategy,
                    fit,
                }
            }
            (None, None) => unreachable!("validated"),
        };
        Ok(Problem {
            spec,
            inputs,
            run: self.run.clone(),
        })
    }
}

fn external_handle(id: usize, default_name: &str, spec: &ExternalModelSpec, dim: usize) -> Result<ModelHandle, CliError> {
    let name = spec.name.clone().unwrap_or_else(|| default_name.to_string());
    let model = ExternalModel::spawn(&name, spec, Duration::from_secs_f64(spec.timeout))?;
    let projection = spec.input_indices.clone().unwrap_or_else(|| (0..dim).collect());
    Ok(ModelHandle::new(id, name, std::sync::Arc::new(model), projection).with_tau(spec.tau))
}

/// Reject top-level keys that are neither configuration sections nor
/// sampler settings.
fn check_keys<'a>(keys: impl Iterator<Item = &'a str>) -> Result<(), CliError> {
    const SECTIONS: [&str; 7] = ["benchmark", "models", "inputs", "strategy", "beta", "gamma_override", "gp"];
    let run_fields = match serde_json::to_value(RunConfig::default()) {
        Ok(serde_json::Value::Object(map)) => map,
        _ => unreachable!("run configuration serializes to an object"),
    };
    for key in keys {
        if !SECTIONS.contains(&key) && !run_fields.contains_key(key) {
            return Err(CliError::Parse {
                path: None,
                message: format!("unknown configuration key `{key}`"),
            });
        }
    }
    Ok(())
}

fn check_benchmark(name: Option<&str>) -> Result<(), CliError> {
    match name {
        Some(n) => n.parse::<Benchmark>().map(|_| ()).map_err(|e| invalid("benchmark", e)),
        None => Ok(()),
    }
}

fn is_json(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

/// Best-effort field name for a sampler validation message.
fn config_field(message: &str) -> &'static str {
    const FIELDS: [&str; 10] = [
        "n_init",
        "n_pts",
        "n_chains",
        "pi_target",
        "u_threshold",
        "failure_threshold",
        "max_subsets",
        "proposal_scale",
        "warmup",
        "reoptimize_stride",
    ];
    FIELDS
        .into_iter()
        .filter_map(|f| message.find(f).map(|pos| (pos, f)))
        .min()
        .map_or("run", |(_, f)| f)
}

/// Default output directory for a run id.
pub fn default_output_dir(run_id: &str) -> PathBuf {
    PathBuf::from("lfmc-output").join(run_id)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
benchmark = "four_branch"
strategy = "LFDS"
n_pts = 20000
n_chains = 100
seed = 1
"#;

    #[test]
    fn minimal_config_fills_defaults() {
        let c = Config::from_toml_str(MINIMAL).unwrap();
        c.validate().unwrap();
        assert_eq!(c.benchmark, Some(Benchmark::FourBranch));
        assert_eq!(c.strategy, Strategy::Lfds);
        assert_eq!(c.run.n_pts, 20_000);
        assert_eq!(c.run.n_chains(), 100);
        assert_eq!(c.run.pi_target, 0.1);
        assert_eq!(c.run.u_threshold, 2.0);
        assert_eq!(c.run.n_init, 20);
        assert_eq!(c.n_lf_models(), 4);
        let p = c.build().unwrap();
        assert_eq!(p.spec.lfs.len(), 4);
    }

    #[test]
    fn benchmark_and_models_are_exclusive() {
        let text = format!(
            "{MINIMAL}\n[models.hf]\ncommand = [\"true\"]\n[[models.lf]]\ncommand = [\"true\"]\n"
        );
        let c = Config::from_toml_str(&text).unwrap();
        match c.validate() {
            Err(CliError::Validation { field, .. }) => assert_eq!(field, "models"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn gamma_override_is_forwarded() {
        let c = Config::from_toml_str(
            "benchmark = \"rastrigin_type2\"\ngamma_override = [1, 30]\nn_pts = 1000\nn_chains = 100\n",
        )
        .unwrap();
        let cost = c.cost_model().unwrap();
        assert_eq!(cost.gamma(), vec![1.0, 30.0]);
        assert_eq!(c.build().unwrap().spec.cost.gamma(), vec![1.0, 30.0]);
    }

    #[test]
    fn validation_errors_name_the_field() {
        let cases = [
            ("benchmark = \"rosenbrock\"", Some("benchmark")),
            ("benchmark = \"four_branch\"\nn_pts = 1000\nn_chains = 300", Some("n_chains")),
            ("benchmark = \"four_branch\"\nbeta = -1.0", Some("beta")),
            ("benchmark = \"four_branch\"\ngamma_override = [1.0]", Some("gamma_override")),
            ("benchmark = \"four_branch\"\nunknown_key = 3", None),
        ];
        for (text, field) in cases {
            let result = Config::from_toml_str(text).and_then(|c| c.validate());
            match (result, field) {
                (Err(CliError::Validation { field: f, .. }), Some(expected)) => assert_eq!(f, expected, "{text}"),
                (Err(CliError::Parse { .. }), None) => {}
                (other, _) => panic!("{text}: {other:?}"),
            }
        }
    }

    #[test]
    fn toml_and_json_round_trip() {
        let mut c = Config::from_toml_str(MINIMAL).unwrap();
        c.beta = Some(1.5);
        c.run.proposal_scale = vec![0.8, 1.2];
        c.run.failure_threshold = -0.25;
        c.gp.kernel = KernelFamily::Matern52;
        assert_eq!(Config::from_toml_str(&c.to_toml_string()).unwrap(), c);
        assert_eq!(Config::from_json_str(&c.to_json_string()).unwrap(), c);
        c.run.u_threshold = f64::INFINITY;
        assert_eq!(Config::from_toml_str(&c.to_toml_string()).unwrap(), c);
    }

    #[test]
    fn external_models_need_inputs() {
        let c = Config::from_toml_str("[models.hf]\ncommand = [\"true\"]\n[[models.lf]]\ncommand = [\"true\"]\n").unwrap();
        match c.validate() {
            Err(CliError::Validation { field, .. }) => assert_eq!(field, "inputs"),
            other => panic!("{other:?}"),
        }
    }
}
