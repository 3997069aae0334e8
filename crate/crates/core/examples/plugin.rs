//! An out-of-process method. The example re-launches itself with `serve` to
//! act as the plugin, registers it through a manifest, and runs it.

use std::collections::BTreeMap;
use std::io::{stdin, stdout};

use lattice_cl::envsim::{EnvironmentSpec, Family, ScheduleKind};
use lattice_cl::evaluation::{apply, EvalOptions, Setting};
use lattice_cl::methods::{plugin, BaseMethod, PluginManifest, Registry};

fn main() -> lattice_cl::Result<()> {
    if std::env::args().nth(1).as_deref() == Some("serve") {
        return plugin::serve(stdin().lock(), stdout().lock(), |mut d, setting, seed| {
            d.name = "base_method".into();
            Ok(Box::new(BaseMethod::new(d, setting, seed)?))
        });
    }
    let exe = std::env::current_exe()?;
    let manifest = PluginManifest {
        name: "external_ft".into(),
        target: "continuous_task_agnostic".into(),
        command: vec![exe.to_string_lossy().into_owned(), "serve".into()],
        hyperparameters: BTreeMap::new(),
    };
    let mut reg = Registry::new();
    reg.register_plugin(manifest)?;
    let env = EnvironmentSpec::new(Family::SyntheticGaussianSl, ScheduleKind::IncrementalSequence, 3, 200);
    let setting = Setting::new(reg.catalog(), "task_incremental_sl", env)?;
    for method in ["external_ft", "base_method"] {
        let d = reg.descriptor(method, &BTreeMap::new(), setting.assumptions().branch)?;
        let r = apply(&setting, &reg, &d, 0, &EvalOptions::default())?;
        println!("{method}\n{}", r.matrix.pretty());
    }
    Ok(())
}
