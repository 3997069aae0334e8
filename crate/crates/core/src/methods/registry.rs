use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::plugin::PluginMethod;
use super::{BaseMethod, Hyperparameters, Method, RandomMethod, SettingDescription};
use crate::error::{Error, Result};
use crate::taxonomy::{Branch, Catalog, MethodDescriptor, SettingNode, Trunk};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BuiltinMethod {
    /// Plain fine-tuning; the root of the lattice is its target.
    BaseMethod,
    /// Fine-tuning plus elastic weight consolidation at task switches.
    Ewc,
    /// Fine-tuning plus reservoir experience replay.
    Replay,
    /// Uniform random policy without learning.
    Random,
}

impl BuiltinMethod {
    pub const ALL: [BuiltinMethod; 4] = [
        BuiltinMethod::BaseMethod,
        BuiltinMethod::Ewc,
        BuiltinMethod::Replay,
        BuiltinMethod::Random,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BuiltinMethod::BaseMethod => "base_method",
            BuiltinMethod::Ewc => "ewc",
            BuiltinMethod::Replay => "replay",
            BuiltinMethod::Random => "random",
        }
    }

    pub fn target(self) -> Trunk {
        match self {
            BuiltinMethod::Ewc => Trunk::Incremental,
            _ => Trunk::ContinuousTaskAgnostic,
        }
    }
}

/// Declares an external method reachable through the stream protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PluginManifest {
    pub name: String,
    /// Name of the target setting in the catalog (abstract or concrete).
    pub target: String,
    /// Program and arguments.
    pub command: Vec<String>,
    #[serde(default)]
    pub hyperparameters: BTreeMap<String, serde_json::Value>,
}

impl PluginManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::malformed(path.display().to_string(), e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MethodKind {
    Builtin(BuiltinMethod),
    Plugin(PluginManifest),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodEntry {
    pub name: String,
    pub target: String,
    pub kind: MethodKind,
}

/// Settings and methods known to a run.
#[derive(Debug, Clone)]
pub struct Registry {
    catalog: Catalog,
    methods: Vec<MethodEntry>,
}

impl Default for Registry {
    fn default() -> Self {
        Self::new()
    }
}

impl Registry {
    /// Canonical catalog and the built-in methods.
    pub fn new() -> Self {
        let methods = BuiltinMethod::ALL
            .iter()
            .map(|&b| MethodEntry {
                name: b.name().to_string(),
                target: b.target().name().to_string(),
                kind: MethodKind::Builtin(b),
            })
            .collect();
        Registry {
            catalog: Catalog::canonical(),
            methods,
        }
    }

    pub fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    pub fn methods(&self) -> &[MethodEntry] {
        &self.methods
    }

    pub fn method(&self, name: &str) -> Result<&MethodEntry> {
        self.methods
            .iter()
            .find(|m| m.name == name)
            .ok_or_else(|| Error::UnknownMethod(name.to_string()))
    }

    pub fn register_plugin(&mut self, manifest: PluginManifest) -> Result<()> {
        if manifest.name.is_empty() {
            return Err(Error::malformed("name", "plugin name is empty"));
        }
        if manifest.command.is_empty() {
            return Err(Error::malformed("command", "plugin command is empty"));
        }
        self.catalog.get(&manifest.target)?;
        if self.methods.iter().any(|m| m.name == manifest.name) {
            return Err(Error::DuplicateMethod(manifest.name));
        }
        self.methods.push(MethodEntry {
            name: manifest.name.clone(),
            target: manifest.target.clone(),
            kind: MethodKind::Plugin(manifest),
        });
        Ok(())
    }

    /// Descriptor for `name` with the user's hyperparameters. Built-ins get
    /// every default filled in for `branch`; plugin hyperparameters are the
    /// manifest's, overlaid with the user's.
    pub fn descriptor(
        &self,
        name: &str,
        overrides: &BTreeMap<String, serde_json::Value>,
        branch: Branch,
    ) -> Result<MethodDescriptor> {
        let entry = self.method(name)?;
        let target = self.catalog.get(&entry.target)?.assumptions;
        let hyperparameters = match &entry.kind {
            MethodKind::Builtin(BuiltinMethod::Random) => {
                if let Some(k) = overrides.keys().next() {
                    return Err(Error::malformed(format!("hyperparameters.{k}"), "random takes no hyperparameters"));
                }
                BTreeMap::new()
            }
            MethodKind::Builtin(_) => Hyperparameters::resolve(name, branch, overrides)?.to_map(),
            MethodKind::Plugin(m) => {
                let mut hp = m.hyperparameters.clone();
                hp.extend(overrides.clone());
                hp
            }
        };
        Ok(MethodDescriptor {
            name: name.to_string(),
            target,
            hyperparameters,
        })
    }

    /// Concrete settings the named method applies to.
    pub fn applicable_settings(&self, name: &str) -> Result<Vec<&SettingNode>> {
        let entry = self.method(name)?;
        let target = self.catalog.get(&entry.target)?.assumptions;
        Ok(self.catalog.applicable_settings(&target))
    }

    /// Instantiates a method for a setting after checking applicability.
    pub fn configure(
        &self,
        descriptor: &MethodDescriptor,
        setting: &SettingDescription,
        seed: u64,
    ) -> Result<Box<dyn Method>> {
        self.catalog.check_applicable(descriptor, &setting.name)?;
        let entry = self.method(&descriptor.name)?;
        Ok(match &entry.kind {
            MethodKind::Builtin(BuiltinMethod::Random) => Box::new(RandomMethod::new(descriptor.clone(), seed)),
            MethodKind::Builtin(_) => Box::new(BaseMethod::new(descriptor.clone(), setting, seed)?),
            MethodKind::Plugin(m) => Box::new(PluginMethod::spawn(m, descriptor.clone(), setting, seed)?),
        })
    }
}
