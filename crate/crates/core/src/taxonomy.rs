//! Settings as assumption vectors and the partial order between them.
//!
//! A setting is a point in a product of small chains, one per assumption
//! axis. A setting `b` is a descendant of `a` when `b` makes at least every
//! assumption `a` makes, i.e. `a <= b` on every axis. Methods declare a target
//! vector and are applicable to every concrete descendant of it.
//!
//! Parent links are never written by hand: [`hasse_edges`] derives the
//! covering relation from [`axis_leq`], so extra nodes handed to
//! [`Catalog::from_nodes`] are placed automatically.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextContinuity {
    Continuous,
    Discrete,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundarySignal {
    Hidden,
    Signaled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextObservability {
    Hidden,
    Observed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stationarity {
    NonStationary,
    Stationary,
}

/// Combined supervised/reinforcement assumption.
///
/// `Passive` means the action does not influence the next observation and the
/// full label is revealed; `Active` means action-dependent dynamics with a
/// scalar reward only. The two are incomparable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Unspecified,
    Passive,
    Active,
}

impl Branch {
    fn leq(self, other: Branch) -> bool {
        self == other || self == Branch::Unspecified
    }

    pub fn suffix(self) -> Option<&'static str> {
        match self {
            Branch::Unspecified => None,
            Branch::Passive => Some("sl"),
            Branch::Active => Some("rl"),
        }
    }
}

/// One assumption axis, used to name where an order check fails.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    ContextContinuity,
    BoundarySignal,
    ContextObserved,
    Stationarity,
    Branch,
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::ContextContinuity => "context_continuity",
            Axis::BoundarySignal => "boundary_signal",
            Axis::ContextObserved => "context_observed",
            Axis::Stationarity => "stationarity",
            Axis::Branch => "branch",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AssumptionVector {
    pub context_continuity: ContextContinuity,
    pub boundary_signal: BoundarySignal,
    pub context_observed: ContextObservability,
    pub stationarity: Stationarity,
    pub branch: Branch,
}

impl AssumptionVector {
    pub fn is_abstract(&self) -> bool {
        self.branch == Branch::Unspecified
    }

    pub fn with_branch(mut self, branch: Branch) -> Self {
        self.branch = branch;
        self
    }

    /// Checks the cross-axis constraints: a stationary context has discrete
    /// tasks and trivially known boundaries.
    pub fn validate(&self) -> Result<()> {
        if self.stationarity == Stationarity::Stationary {
            if self.context_continuity != ContextContinuity::Discrete {
                return Err(Error::Config(
                    "stationary settings require a discrete context".into(),
                ));
            }
            if self.boundary_signal != BoundarySignal::Signaled {
                return Err(Error::Config(
                    "stationary settings require signaled boundaries".into(),
                ));
            }
        }
        Ok(())
    }

    /// Axes on which `self` is not below `other`.
    pub fn failing_axes(&self, other: &AssumptionVector) -> Vec<Axis> {
        let mut axes = Vec::new();
        if self.context_continuity > other.context_continuity {
            axes.push(Axis::ContextContinuity);
        }
        if self.boundary_signal > other.boundary_signal {
            axes.push(Axis::BoundarySignal);
        }
        if self.context_observed > other.context_observed {
            axes.push(Axis::ContextObserved);
        }
        if self.stationarity > other.stationarity {
            axes.push(Axis::Stationarity);
        }
        if !self.branch.leq(other.branch) {
            axes.push(Axis::Branch);
        }
        axes
    }
}

/// `true` iff `b` is at least as informative as `a` on every axis.
pub fn axis_leq(a: &AssumptionVector, b: &AssumptionVector) -> bool {
    a.context_continuity <= b.context_continuity
        && a.boundary_signal <= b.boundary_signal
        && a.context_observed <= b.context_observed
        && a.stationarity <= b.stationarity
        && a.branch.leq(b.branch)
}

/// The six trunk settings of the continual-learning hierarchy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trunk {
    ContinuousTaskAgnostic,
    DiscreteTaskAgnostic,
    Incremental,
    TaskIncremental,
    MultiTask,
    Traditional,
}

impl Trunk {
    pub const ALL: [Trunk; 6] = [
        Trunk::ContinuousTaskAgnostic,
        Trunk::DiscreteTaskAgnostic,
        Trunk::Incremental,
        Trunk::TaskIncremental,
        Trunk::MultiTask,
        Trunk::Traditional,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Trunk::ContinuousTaskAgnostic => "continuous_task_agnostic",
            Trunk::DiscreteTaskAgnostic => "discrete_task_agnostic",
            Trunk::Incremental => "incremental",
            Trunk::TaskIncremental => "task_incremental",
            Trunk::MultiTask => "multi_task",
            Trunk::Traditional => "traditional",
        }
    }

    pub fn assumptions(self, branch: Branch) -> AssumptionVector {
        use BoundarySignal as B;
        use ContextContinuity as C;
        use ContextObservability as O;
        use Stationarity as S;
        let (context_continuity, boundary_signal, context_observed, stationarity) = match self {
            Trunk::ContinuousTaskAgnostic => (C::Continuous, B::Hidden, O::Hidden, S::NonStationary),
            Trunk::DiscreteTaskAgnostic => (C::Discrete, B::Hidden, O::Hidden, S::NonStationary),
            Trunk::Incremental => (C::Discrete, B::Signaled, O::Hidden, S::NonStationary),
            Trunk::TaskIncremental => (C::Discrete, B::Signaled, O::Observed, S::NonStationary),
            Trunk::MultiTask => (C::Discrete, B::Signaled, O::Observed, S::Stationary),
            Trunk::Traditional => (C::Discrete, B::Signaled, O::Hidden, S::Stationary),
        };
        AssumptionVector {
            context_continuity,
            boundary_signal,
            context_observed,
            stationarity,
            branch,
        }
    }

    pub fn setting_name(self, branch: Branch) -> String {
        match branch.suffix() {
            Some(suffix) => format!("{}_{}", self.name(), suffix),
            None => self.name().to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettingNode {
    pub name: String,
    pub assumptions: AssumptionVector,
    pub parents: Vec<String>,
}

impl SettingNode {
    pub fn is_abstract(&self) -> bool {
        self.assumptions.is_abstract()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodDescriptor {
    pub name: String,
    pub target: AssumptionVector,
    #[serde(default)]
    pub hyperparameters: BTreeMap<String, serde_json::Value>,
}

/// 6 abstract trunk nodes followed by the 12 concrete (trunk x branch) nodes.
pub fn canonical_catalog() -> Vec<SettingNode> {
    let mut nodes = Vec::with_capacity(18);
    for branch in [Branch::Unspecified, Branch::Passive, Branch::Active] {
        for trunk in Trunk::ALL {
            nodes.push(SettingNode {
                name: trunk.setting_name(branch),
                assumptions: trunk.assumptions(branch),
                parents: Vec::new(),
            });
        }
    }
    assign_parents(&mut nodes);
    nodes
}

fn assign_parents(nodes: &mut [SettingNode]) {
    let edges = hasse_edges(nodes);
    for node in nodes.iter_mut() {
        node.parents = edges
            .iter()
            .filter(|(_, child)| *child == node.name)
            .map(|(parent, _)| parent.clone())
            .collect();
    }
}

/// Covering relation of the order restricted to `nodes`, as (parent, child).
pub fn hasse_edges(nodes: &[SettingNode]) -> Vec<(String, String)> {
    let lt = |a: &SettingNode, b: &SettingNode| {
        a.assumptions != b.assumptions && axis_leq(&a.assumptions, &b.assumptions)
    };
    let mut edges = Vec::new();
    for parent in nodes {
        for child in nodes {
            if !lt(parent, child) {
                continue;
            }
            let covered = nodes.iter().any(|mid| lt(parent, mid) && lt(mid, child));
            if !covered {
                edges.push((parent.name.clone(), child.name.clone()));
            }
        }
    }
    edges
}

/// Whether `method` may run on the concrete setting `setting`.
pub fn is_applicable(method: &MethodDescriptor, setting: &AssumptionVector) -> Result<bool> {
    if setting.is_abstract() {
        return Err(Error::AbstractSetting(format!("{setting:?}")));
    }
    Ok(axis_leq(&method.target, setting))
}

/// A validated set of setting nodes with derived parent links.
#[derive(Debug, Clone)]
pub struct Catalog {
    nodes: Vec<SettingNode>,
}

impl Default for Catalog {
    fn default() -> Self {
        Catalog {
            nodes: canonical_catalog(),
        }
    }
}

impl Catalog {
    pub fn canonical() -> Self {
        Self::default()
    }

    /// Builds a catalog from arbitrary nodes; parent links are recomputed.
    pub fn from_nodes(mut nodes: Vec<SettingNode>) -> Result<Self> {
        for (i, node) in nodes.iter().enumerate() {
            node.assumptions.validate()?;
            if nodes[..i].iter().any(|n| n.name == node.name) {
                return Err(Error::Config(format!("duplicate setting name `{}`", node.name)));
            }
            if nodes[..i].iter().any(|n| n.assumptions == node.assumptions) {
                return Err(Error::Config(format!(
                    "setting `{}` duplicates the assumptions of another node",
                    node.name
                )));
            }
        }
        assign_parents(&mut nodes);
        Ok(Catalog { nodes })
    }

    pub fn nodes(&self) -> &[SettingNode] {
        &self.nodes
    }

    pub fn concrete(&self) -> impl Iterator<Item = &SettingNode> {
        self.nodes.iter().filter(|n| !n.is_abstract())
    }

    pub fn get(&self, name: &str) -> Result<&SettingNode> {
        self.nodes
            .iter()
            .find(|n| n.name == name)
            .ok_or_else(|| Error::UnknownSetting(name.to_string()))
    }

    pub fn by_assumptions(&self, v: &AssumptionVector) -> Option<&SettingNode> {
        self.nodes.iter().find(|n| n.assumptions == *v)
    }

    pub fn edges(&self) -> Vec<(String, String)> {
        hasse_edges(&self.nodes)
    }

    /// Concrete settings reachable below `target` (inclusive).
    pub fn applicable_settings(&self, target: &AssumptionVector) -> Vec<&SettingNode> {
        self.concrete()
            .filter(|n| axis_leq(target, &n.assumptions))
            .collect()
    }

    /// Checks a method against a named setting, naming the failing axes.
    pub fn check_applicable(&self, method: &MethodDescriptor, setting: &str) -> Result<&SettingNode> {
        let node = self.get(setting)?;
        if node.is_abstract() {
            return Err(Error::AbstractSetting(node.name.clone()));
        }
        if is_applicable(method, &node.assumptions)? {
            return Ok(node);
        }
        let target = self
            .by_assumptions(&method.target)
            .map(|n| n.name.clone())
            .unwrap_or_else(|| format!("{:?}", method.target));
        Err(Error::Inapplicable {
            method: method.name.clone(),
            target,
            setting: node.name.clone(),
            axes: method.target.failing_axes(&node.assumptions),
        })
    }

    pub fn to_json(&self) -> serde_json::Value {
        let nodes: Vec<_> = self
            .nodes
            .iter()
            .map(|n| {
                serde_json::json!({
                    "name": n.name,
                    "abstract": n.is_abstract(),
                    "assumptions": n.assumptions,
                    "parents": n.parents,
                })
            })
            .collect();
        let edges: Vec<_> = self
            .edges()
            .into_iter()
            .map(|(p, c)| serde_json::json!({ "parent": p, "child": c }))
            .collect();
        serde_json::json!({ "nodes": nodes, "edges": edges })
    }

    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph lattice {\n  rankdir=TB;\n");
        for n in &self.nodes {
            let shape = if n.is_abstract() { "ellipse" } else { "box" };
            out.push_str(&format!("  \"{}\" [shape={}];\n", n.name, shape));
        }
        for (p, c) in self.edges() {
            out.push_str(&format!("  \"{p}\" -> \"{c}\";\n"));
        }
        out.push_str("}\n");
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(trunk: Trunk, branch: Branch) -> AssumptionVector {
        trunk.assumptions(branch)
    }

    fn descriptor(target: AssumptionVector) -> MethodDescriptor {
        MethodDescriptor {
            name: "m".into(),
            target,
            hyperparameters: BTreeMap::new(),
        }
    }

    #[test]
    fn order_examples() {
        let root = v(Trunk::ContinuousTaskAgnostic, Branch::Unspecified);
        assert!(axis_leq(&root, &root));
        assert!(axis_leq(
            &v(Trunk::Incremental, Branch::Unspecified),
            &v(Trunk::TaskIncremental, Branch::Passive)
        ));
        assert!(!axis_leq(
            &v(Trunk::TaskIncremental, Branch::Passive),
            &v(Trunk::Traditional, Branch::Passive)
        ));
    }

    #[test]
    fn applicability_examples() {
        let m = descriptor(v(Trunk::Incremental, Branch::Unspecified));
        assert!(is_applicable(&m, &v(Trunk::TaskIncremental, Branch::Passive)).unwrap());
        let m = descriptor(v(Trunk::Incremental, Branch::Passive));
        assert!(!is_applicable(&m, &v(Trunk::Incremental, Branch::Active)).unwrap());
        let m = descriptor(v(Trunk::DiscreteTaskAgnostic, Branch::Unspecified));
        assert!(!is_applicable(&m, &v(Trunk::ContinuousTaskAgnostic, Branch::Passive)).unwrap());
    }

    #[test]
    fn abstract_setting_is_rejected() {
        let m = descriptor(v(Trunk::Incremental, Branch::Unspecified));
        let err = is_applicable(&m, &v(Trunk::Incremental, Branch::Unspecified)).unwrap_err();
        assert!(matches!(err, Error::AbstractSetting(_)));
    }

    #[test]
    fn catalog_shape() {
        let cat = Catalog::canonical();
        assert_eq!(cat.nodes().len(), 18);
        assert_eq!(cat.concrete().count(), 12);
        let root = cat.get("continuous_task_agnostic").unwrap();
        assert!(root.parents.is_empty());
        let mut parents = cat.get("discrete_task_agnostic_rl").unwrap().parents.clone();
        parents.sort();
        assert_eq!(parents, ["continuous_task_agnostic_rl", "discrete_task_agnostic"]);
        let mut mt = cat.get("multi_task").unwrap().parents.clone();
        mt.sort();
        assert_eq!(mt, ["task_incremental", "traditional"]);
    }

    #[test]
    fn transitive_edges_are_absent() {
        let edges = Catalog::canonical().edges();
        let has = |p: &str, c: &str| edges.iter().any(|(a, b)| a == p && b == c);
        assert!(has("incremental", "traditional"));
        assert!(!has("continuous_task_agnostic", "incremental"));
    }

    #[test]
    fn failing_axes_are_named() {
        let cat = Catalog::canonical();
        let m = descriptor(v(Trunk::Incremental, Branch::Unspecified));
        let err = cat.check_applicable(&m, "continuous_task_agnostic_sl").unwrap_err();
        match err {
            Error::Inapplicable { axes, target, .. } => {
                assert!(axes.contains(&Axis::BoundarySignal));
                assert_eq!(target, "incremental");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn stationary_vectors_must_be_discrete_and_signaled() {
        let mut bad = v(Trunk::Traditional, Branch::Passive);
        bad.boundary_signal = BoundarySignal::Hidden;
        assert!(bad.validate().is_err());
        let mut bad = v(Trunk::Traditional, Branch::Passive);
        bad.context_continuity = ContextContinuity::Continuous;
        assert!(bad.validate().is_err());
        for n in canonical_catalog() {
            n.assumptions.validate().unwrap();
        }
    }

    #[test]
    fn extra_nodes_slot_in() {
        // A hypothetical "boundary-signaled continuous" setting sits between
        // the root and incremental without any hand-written links.
        let mut nodes = canonical_catalog();
        let mut extra = v(Trunk::ContinuousTaskAgnostic, Branch::Unspecified);
        extra.boundary_signal = BoundarySignal::Signaled;
        nodes.push(SettingNode {
            name: "continuous_signaled".into(),
            assumptions: extra,
            parents: vec![],
        });
        let cat = Catalog::from_nodes(nodes).unwrap();
        let mut p = cat.get("incremental").unwrap().parents.clone();
        p.sort();
        assert_eq!(p, ["continuous_signaled", "discrete_task_agnostic"]);
    }

    #[test]
    fn dot_and_json_exports() {
        let cat = Catalog::canonical();
        let json = cat.to_json();
        assert_eq!(json["nodes"].as_array().unwrap().len(), 18);
        assert_eq!(json["edges"].as_array().unwrap().len(), cat.edges().len());
        assert!(cat.to_dot().contains("\"incremental\" -> \"traditional\""));
    }
}
