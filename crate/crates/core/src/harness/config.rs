use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::envsim::{EnvironmentSpec, Family, ScheduleKind};
use crate::error::{Error, Result};
use crate::evaluation::{default_family, default_schedule, EvalOptions, Setting};
use crate::methods::{PluginManifest, Registry};
use crate::taxonomy::{MethodDescriptor, Trunk};

pub const DEFAULT_NUM_TASKS: usize = 5;
pub const DEFAULT_STEPS_SL: usize = 200;
pub const DEFAULT_STEPS_RL: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodConfig {
    pub name: String,
    #[serde(default)]
    pub hyperparameters: BTreeMap<String, serde_json::Value>,
}

/// A fully explicit experiment: every default is filled in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub setting: String,
    pub environment: EnvironmentSpec,
    pub method: MethodConfig,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    pub evaluation: EvalOptions,
    /// Plugin manifests to register before resolving the method.
    pub plugins: Vec<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEnvironment {
    family: Option<Family>,
    num_tasks: Option<usize>,
    steps_per_phase: Option<usize>,
    schedule: Option<ScheduleKind>,
    disjoint_actions: Option<bool>,
    max_episode_len: Option<usize>,
    classes_per_task: Option<usize>,
    input_dim: Option<usize>,
    noise_std: Option<f64>,
    dataset_path: Option<PathBuf>,
    layout_dir: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RawMethod {
    Name(String),
    Full(MethodConfig),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    setting: String,
    method: RawMethod,
    /// Shorthand for `environment.family`.
    family: Option<Family>,
    #[serde(default)]
    environment: RawEnvironment,
    seeds: Option<Vec<u64>>,
    output_dir: Option<PathBuf>,
    #[serde(default)]
    evaluation: EvalOptions,
    #[serde(default)]
    plugins: Vec<PathBuf>,
}

fn json_error(e: serde_json::Error) -> Error {
    let msg = e.to_string();
    let field = msg
        .split('`')
        .nth(1)
        .map(str::to_string)
        .unwrap_or_else(|| "config".to_string());
    if msg.starts_with("unknown field") || msg.starts_with("missing field") || msg.starts_with("unknown variant") {
        Error::malformed(field, msg)
    } else {
        Error::malformed("config", msg)
    }
}

/// Parses and validates a config, filling every default explicitly.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let raw: RawConfig = serde_json::from_str(text).map_err(json_error)?;
    let method = match raw.method {
        RawMethod::Name(name) => MethodConfig {
            name,
            hyperparameters: BTreeMap::new(),
        },
        RawMethod::Full(m) => m,
    };
    let mut registry = Registry::new();
    register_plugins(&mut registry, &raw.plugins)?;
    let node = registry.catalog().get(&raw.setting)?.clone();
    if node.is_abstract() {
        return Err(Error::AbstractSetting(node.name));
    }
    let a = node.assumptions;
    registry.method(&method.name)?;

    let e = raw.environment;
    let family = match (raw.family, e.family) {
        (Some(x), Some(y)) if x != y => {
            return Err(Error::malformed("family", "conflicts with environment.family"));
        }
        (x, y) => x.or(y).unwrap_or_else(|| default_family(a.branch)),
    };
    let traditional = a == Trunk::Traditional.assumptions(a.branch);
    let num_tasks = e.num_tasks.unwrap_or(if traditional { 1 } else { DEFAULT_NUM_TASKS });
    let steps = e.steps_per_phase.unwrap_or(match family.branch() {
        crate::taxonomy::Branch::Active => DEFAULT_STEPS_RL,
        _ => DEFAULT_STEPS_SL,
    });
    let schedule = e.schedule.unwrap_or_else(|| default_schedule(&a, num_tasks));
    let mut env = EnvironmentSpec::new(family, schedule, num_tasks, steps);
    env.disjoint_actions = e.disjoint_actions.unwrap_or(env.disjoint_actions);
    env.max_episode_len = e.max_episode_len.unwrap_or(env.max_episode_len);
    env.classes_per_task = e.classes_per_task.unwrap_or(env.classes_per_task);
    env.input_dim = e.input_dim.unwrap_or(env.input_dim);
    env.noise_std = e.noise_std.unwrap_or(env.noise_std);
    env.dataset_path = e.dataset_path;
    env.layout_dir = e.layout_dir;

    let cfg = ExperimentConfig {
        setting: raw.setting,
        environment: env,
        method,
        seeds: raw.seeds.unwrap_or_else(|| vec![0]),
        output_dir: raw.output_dir.unwrap_or_else(|| PathBuf::from("out")),
        evaluation: raw.evaluation,
        plugins: raw.plugins,
    };
    let descriptor = cfg.validate_with(&registry)?;
    Ok(ExperimentConfig {
        method: MethodConfig {
            name: descriptor.name,
            hyperparameters: descriptor.hyperparameters,
        },
        ..cfg
    })
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::malformed("config", format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text)
}

pub fn register_plugins(registry: &mut Registry, manifests: &[PathBuf]) -> Result<()> {
    for path in manifests {
        registry.register_plugin(PluginManifest::load(path)?)?;
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Registry with this config's plugins registered.
    pub fn registry(&self) -> Result<Registry> {
        let mut r = Registry::new();
        register_plugins(&mut r, &self.plugins)?;
        Ok(r)
    }

    pub fn setting(&self, registry: &Registry) -> Result<Setting> {
        Setting::new(registry.catalog(), &self.setting, self.environment.clone())
    }

    pub fn descriptor(&self, registry: &Registry) -> Result<MethodDescriptor> {
        let branch = registry.catalog().get(&self.setting)?.assumptions.branch;
        registry.descriptor(&self.method.name, &self.method.hyperparameters, branch)
    }

    /// Checks every invariant and returns the resolved method descriptor.
    pub fn validate_with(&self, registry: &Registry) -> Result<MethodDescriptor> {
        let setting = self.setting(registry)?;
        let descriptor = self.descriptor(registry)?;
        registry.catalog().check_applicable(&descriptor, &setting.node.name)?;
        if self.seeds.is_empty() {
            return Err(Error::malformed("seeds", "at least one seed is required"));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::malformed("seeds", "seeds must be distinct"));
        }
        let ev = &self.evaluation;
        if ev.test_samples_per_task == 0 || ev.test_episodes_per_task == 0 || ev.chance_episodes == 0 {
            return Err(Error::malformed("evaluation", "test budgets must be > 0"));
        }
        Ok(descriptor)
    }

    pub fn validate(&self) -> Result<MethodDescriptor> {
        self.validate_with(&self.registry()?)
    }
}
