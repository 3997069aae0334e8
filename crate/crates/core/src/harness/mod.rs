//! Configuration, orchestration, persistence and reports.

mod config;
mod report;
mod run;

use std::fmt;

use serde::Serialize;

use crate::envsim::Family;
use crate::methods::{MethodKind, Registry};
use crate::taxonomy::AssumptionVector;

pub use config::{
    load_config, parse_config, register_plugins, ExperimentConfig, MethodConfig, DEFAULT_NUM_TASKS,
    DEFAULT_STEPS_RL, DEFAULT_STEPS_SL,
};
pub use report::{mean_matrix, read_csv, report, ComparisonRow, ReportBundle, ReportOptions};
pub use run::{
    aggregate, run, run_id, seed_override, write_atomic, Aggregate, RunOutcome, RunRecord, SeedEntry, SeedStatus,
    RECORD_FILE, SEED_OVERRIDE_VAR,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntityKind {
    Settings,
    Methods,
    Envs,
}

impl std::str::FromStr for EntityKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "settings" => Ok(EntityKind::Settings),
            "methods" => Ok(EntityKind::Methods),
            "envs" => Ok(EntityKind::Envs),
            other => Err(crate::Error::malformed("kind", format!("`{other}` is not settings|methods|envs"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl fmt::Display for Table {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut widths: Vec<usize> = self.headers.iter().map(String::len).collect();
        for row in &self.rows {
            for (w, c) in widths.iter_mut().zip(row) {
                *w = (*w).max(c.len());
            }
        }
        let line = |cells: &[String]| {
            cells
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c:<w$}"))
                .collect::<Vec<_>>()
                .join("  ")
                .trim_end()
                .to_string()
        };
        writeln!(f, "{}", line(&self.headers))?;
        for row in &self.rows {
            writeln!(f, "{}", line(row))?;
        }
        Ok(())
    }
}

fn assumptions_cell(a: &AssumptionVector) -> String {
    format!(
        "{:?}/{:?}/{:?}/{:?}/{:?}",
        a.context_continuity, a.boundary_signal, a.context_observed, a.stationarity, a.branch
    )
    .to_lowercase()
}

/// Tabulates the concrete settings, the registered methods or the
/// environment families.
pub fn list_entities(kind: EntityKind, registry: &Registry) -> Table {
    let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
    match kind {
        EntityKind::Settings => Table {
            headers: s(&["setting", "assumptions", "parents"]),
            rows: registry
                .catalog()
                .concrete()
                .map(|n| vec![n.name.clone(), assumptions_cell(&n.assumptions), n.parents.join(",")])
                .collect(),
        },
        EntityKind::Methods => Table {
            headers: s(&["method", "kind", "target", "applicable", "settings"]),
            rows: registry
                .methods()
                .iter()
                .map(|m| {
                    let settings: Vec<String> = registry
                        .applicable_settings(&m.name)
                        .map(|v| v.into_iter().map(|n| n.name.clone()).collect())
                        .unwrap_or_default();
                    let kind = match m.kind {
                        MethodKind::Builtin(_) => "builtin",
                        MethodKind::Plugin(_) => "plugin",
                    };
                    vec![
                        m.name.clone(),
                        kind.to_string(),
                        m.target.clone(),
                        settings.len().to_string(),
                        settings.join(","),
                    ]
                })
                .collect(),
        },
        EntityKind::Envs => Table {
            headers: s(&["family", "branch", "continuous_drift"]),
            rows: Family::ALL
                .iter()
                .map(|f| {
                    vec![
                        f.name().to_string(),
                        format!("{:?}", f.branch()).to_lowercase(),
                        f.supports_drift().to_string(),
                    ]
                })
                .collect(),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn listing_counts() {
        let r = Registry::new();
        assert_eq!(list_entities(EntityKind::Settings, &r).rows.len(), 12);
        let methods = list_entities(EntityKind::Methods, &r);
        let base = methods.rows.iter().find(|row| row[0] == "base_method").unwrap();
        assert_eq!(base[3], "12");
        let envs = list_entities(EntityKind::Envs, &r);
        assert_eq!(envs.rows.len(), 4);
    }
}
