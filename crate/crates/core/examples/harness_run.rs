//! Runs two methods over three seeds through the harness and writes a
//! comparison report.

use lattice_cl::harness::{parse_config, read_csv, report, run, ReportOptions, RunRecord};
use serde_json::json;

fn main() -> lattice_cl::Result<()> {
    let out = std::env::temp_dir().join("lattice-cl-harness-example");
    let mut dirs = Vec::new();
    for method in ["base_method", "ewc"] {
        let cfg = json!({
            "setting": "incremental_sl",
            "method": {"name": method},
            "seeds": [0, 1, 2],
            "environment": {"num_tasks": 3, "steps_per_phase": 200, "disjoint_actions": true},
            "output_dir": out,
        });
        let cfg = parse_config(&cfg.to_string())?;
        let outcome = run(&cfg, 3)?;
        let final_perf = RunRecord::load(&outcome.run_dir)?.aggregates["final_performance"];
        println!(
            "{method}: {} -> final {:.3} +- {:.3}",
            outcome.run_dir.display(),
            final_perf.mean,
            final_perf.std
        );
        dirs.push(outcome.run_dir);
    }
    let opts = ReportOptions {
        out_dir: out.join("report"),
        ..Default::default()
    };
    let bundle = report(&dirs, &opts)?;
    println!("\n{}", std::fs::read_to_string(&bundle.comparison)?);
    println!("{} plot rows in {}", read_csv(&bundle.plot_data)?.len(), bundle.plot_data.display());
    Ok(())
}
