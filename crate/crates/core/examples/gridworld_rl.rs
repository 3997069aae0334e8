//! Q-learning across three gridworld layouts, with and without replay.

use std::collections::BTreeMap;

use lattice_cl::envsim::{EnvironmentSpec, Family, ScheduleKind};
use lattice_cl::evaluation::{apply, EvalOptions, Setting};
use lattice_cl::methods::Registry;

fn main() -> lattice_cl::Result<()> {
    let reg = Registry::new();
    let env = EnvironmentSpec::new(Family::MultiLayoutGridworld, ScheduleKind::IncrementalSequence, 3, 20_000);
    let setting = Setting::new(reg.catalog(), "incremental_rl", env)?;
    for method in ["base_method", "replay"] {
        let d = reg.descriptor(method, &BTreeMap::new(), setting.assumptions().branch)?;
        let r = apply(&setting, &reg, &d, 0, &EvalOptions::default())?;
        println!("{method}: mean test return per layout after each phase\n{}", r.matrix.pretty());
        println!("chance {:?}\n", r.chance.iter().map(|c| format!("{c:.2}")).collect::<Vec<_>>());
    }
    Ok(())
}
