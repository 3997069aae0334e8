//! Split synthetic classification: fine-tuning forgets, EWC and replay hold
//! on. Prints each method's transfer matrix and scalars.

use std::collections::BTreeMap;

use lattice_cl::envsim::{EnvironmentSpec, Family, ScheduleKind};
use lattice_cl::evaluation::{apply, EvalOptions, Setting};
use lattice_cl::methods::Registry;
use serde_json::json;

fn main() -> lattice_cl::Result<()> {
    let reg = Registry::new();
    let mut env = EnvironmentSpec::new(Family::SyntheticGaussianSl, ScheduleKind::IncrementalSequence, 5, 200);
    env.disjoint_actions = true;
    let setting = Setting::new(reg.catalog(), "incremental_sl", env)?;
    for (method, hp) in [
        ("base_method", BTreeMap::new()),
        ("ewc", BTreeMap::from([("ewc_lambda".to_string(), json!(100.0))])),
        ("replay", BTreeMap::from([("replay_capacity".to_string(), json!(500))])),
    ] {
        let d = reg.descriptor(method, &hp, setting.assumptions().branch)?;
        let r = apply(&setting, &reg, &d, 0, &EvalOptions::default())?;
        println!("{method}\n{}", r.matrix.pretty());
        println!(
            "final {:.3}  BWT {:+.3}  FWT {:+.3}  online {:.3}\n",
            r.scalars.final_performance,
            r.scalars.backward_transfer.unwrap_or(f64::NAN),
            r.scalars.forward_transfer.unwrap_or(f64::NAN),
            r.scalars.online_performance
        );
    }
    Ok(())
}
