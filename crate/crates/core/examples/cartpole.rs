//! Tabular Q-learning on a single cart-pole task.

use std::collections::BTreeMap;

use lattice_cl::envsim::{EnvironmentSpec, Family, ScheduleKind};
use lattice_cl::evaluation::{apply, EvalOptions, Setting};
use lattice_cl::methods::Registry;
use serde_json::json;

fn main() -> lattice_cl::Result<()> {
    let reg = Registry::new();
    let env = EnvironmentSpec::new(Family::CartPoleVariant, ScheduleKind::SingleTask, 1, 50_000);
    let setting = Setting::new(reg.catalog(), "traditional_rl", env)?;
    let hp = BTreeMap::from([("lr".to_string(), json!(0.7)), ("gamma".to_string(), json!(0.99))]);
    let d = reg.descriptor("base_method", &hp, setting.assumptions().branch)?;
    for seed in 0..3 {
        let r = apply(&setting, &reg, &d, seed, &EvalOptions::default())?;
        println!("seed {seed}: mean episode length {:.1} (random policy {:.1})", r.matrix.get(0, 0), r.chance[0]);
    }
    Ok(())
}
