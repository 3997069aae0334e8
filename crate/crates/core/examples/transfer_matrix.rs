//! Builds transfer matrices by hand and from a random-policy run, and
//! computes the summary metrics.

use std::collections::BTreeMap;

use lattice_cl::envsim::{EnvironmentSpec, Family, ScheduleKind};
use lattice_cl::evaluation::{
    apply, backward_transfer, final_performance, forward_transfer, EvalOptions, MetricKind, Setting, TransferMatrix,
};
use lattice_cl::methods::Registry;

fn main() -> lattice_cl::Result<()> {
    let r = TransferMatrix::new(
        MetricKind::Accuracy,
        vec![vec![0.95, 0.40, 0.30], vec![0.70, 0.93, 0.35], vec![0.55, 0.80, 0.96]],
    )?;
    println!("{}", r.pretty());
    println!("final {:.4}", final_performance(&r));
    println!("BWT   {:+.4}", backward_transfer(&r).unwrap());
    println!("FWT   {:+.4}", forward_transfer(&r, &[1.0 / 3.0; 3]).unwrap());
    print!("\n{}", r.to_csv()?);

    let reg = Registry::new();
    let env = EnvironmentSpec::new(Family::SyntheticGaussianSl, ScheduleKind::IncrementalSequence, 4, 200);
    let setting = Setting::new(reg.catalog(), "incremental_sl", env)?;
    let d = reg.descriptor("random", &BTreeMap::new(), setting.assumptions().branch)?;
    let res = apply(&setting, &reg, &d, 0, &EvalOptions::default())?;
    println!("\nrandom classifier, chance {:.3}:\n{}", res.chance[0], res.matrix.pretty());
    Ok(())
}
