use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::Duration;

use lattice_cl::evaluation::{mean_std, Results};
use lattice_cl::harness::{
    list_entities, parse_config, read_csv, report, run, write_atomic, EntityKind, ReportOptions, RunRecord,
};
use lattice_cl::methods::{PluginManifest, Registry};
use serde_json::json;

const CL: &str = env!("CARGO_BIN_EXE_cl");

fn write_config(dir: &Path, name: &str, value: serde_json::Value) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, value.to_string()).unwrap();
    p
}

fn small_sl(out: &Path, method: &str, seeds: &[u64]) -> serde_json::Value {
    json!({
        "setting": "incremental_sl", "method": method, "seeds": seeds, "output_dir": out,
        "environment": {"num_tasks": 3, "steps_per_phase": 100, "disjoint_actions": true},
        "evaluation": {"test_samples_per_task": 200}
    })
}

#[test]
fn three_seeds_give_three_results_and_a_record() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = parse_config(&small_sl(tmp.path(), "ewc", &[0, 1, 2]).to_string()).unwrap();
    let outcome = run(&cfg, 2).unwrap();
    assert_eq!(outcome.seed_files.len(), 3);
    assert!(!outcome.failed);
    let record = RunRecord::load(&outcome.run_dir).unwrap();
    record.verify(&outcome.run_dir).unwrap();
    let results = record.load_results(&outcome.run_dir).unwrap();
    let finals: Vec<f64> = results.iter().map(|r| r.scalars.final_performance).collect();
    let agg = record.aggregates["final_performance"];
    assert!((agg.mean - finals.iter().sum::<f64>() / 3.0).abs() < 1e-12);
    assert!((agg.std - mean_std(&finals).1).abs() < 1e-12);
    assert_eq!(record.config, cfg);
    for r in &results {
        assert_eq!(r.config, serde_json::to_value(&cfg).unwrap());
    }
    let names: Vec<String> = std::fs::read_dir(&outcome.run_dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    assert_eq!(names.len(), 4, "{names:?}");
}

#[test]
fn reruns_are_identical_apart_from_timing() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = parse_config(&small_sl(tmp.path(), "replay", &[5, 6]).to_string()).unwrap();
    let read = |p: &Path| -> Results { serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap() };
    let first: Vec<Results> = run(&cfg, 2).unwrap().seed_files.iter().map(|p| read(p)).collect();
    let second: Vec<Results> = run(&cfg, 1).unwrap().seed_files.iter().map(|p| read(p)).collect();
    for (mut a, mut b) in first.into_iter().zip(second) {
        a.wall_time_seconds = 0.0;
        b.wall_time_seconds = 0.0;
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }
}

#[test]
fn concurrent_atomic_writes_never_interleave() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("record.json");
    let payloads: Vec<String> = (0..8).map(|i| format!("{{\"writer\":{i},\"pad\":\"{}\"}}", "x".repeat(200_000))).collect();
    std::thread::scope(|s| {
        for p in &payloads {
            let path = &path;
            s.spawn(move || {
                for _ in 0..5 {
                    write_atomic(path, p.as_bytes()).unwrap();
                }
            });
        }
    });
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(payloads.contains(&text));
    assert_eq!(std::fs::read_dir(tmp.path()).unwrap().count(), 1);
}

#[test]
fn interrupted_runs_leave_only_complete_or_temporary_files() {
    let tmp = tempfile::tempdir().unwrap();
    for (i, delay) in [30u64, 120, 400, 900].into_iter().enumerate() {
        let out = tmp.path().join(format!("out{i}"));
        let mut cfg = small_sl(&out, "replay", &[0, 1, 2, 3, 4, 5, 6, 7]);
        cfg["environment"]["steps_per_phase"] = json!(400);
        let path = write_config(tmp.path(), &format!("c{i}.json"), cfg);
        let mut child = Command::new(CL)
            .args(["run", "--jobs", "4", "--config"])
            .arg(&path)
            .stdout(Stdio::null())
            .stderr(Stdio::null())
            .spawn()
            .unwrap();
        std::thread::sleep(Duration::from_millis(delay));
        let _ = child.kill();
        let _ = child.wait();
        let Ok(runs) = std::fs::read_dir(&out) else { continue };
        for run in runs {
            for f in std::fs::read_dir(run.unwrap().path()).unwrap() {
                let p = f.unwrap().path();
                let name = p.file_name().unwrap().to_string_lossy().into_owned();
                if name.starts_with(".tmp-") {
                    continue;
                }
                let text = std::fs::read_to_string(&p).unwrap();
                serde_json::from_str::<serde_json::Value>(&text).unwrap_or_else(|e| panic!("{name} is partial: {e}"));
            }
        }
    }
}

#[test]
fn reports_compare_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let base = run(&parse_config(&small_sl(tmp.path(), "base_method", &[0, 1]).to_string()).unwrap(), 2).unwrap();
    let ewc = run(&parse_config(&small_sl(tmp.path(), "ewc", &[0, 1]).to_string()).unwrap(), 2).unwrap();

    let single = ReportOptions {
        out_dir: tmp.path().join("single"),
        ..Default::default()
    };
    let bundle = report(std::slice::from_ref(&base.run_dir), &single).unwrap();
    assert_eq!(read_csv(&bundle.comparison).unwrap().len(), 1);

    let opts = ReportOptions {
        out_dir: tmp.path().join("report"),
        min_runtime: Some(0.0),
        max_runtime: Some(1000.0),
        ..Default::default()
    };
    let bundle = report(&[base.run_dir.clone(), ewc.run_dir.clone()], &opts).unwrap();
    assert_eq!(bundle.transfer_matrices.len(), 2);
    let reference = bundle.rows.iter().find(|r| r.method == "base_method").unwrap();
    assert_eq!(reference.normalized_runtime, Some(1.0));
    let record = RunRecord::load(&ewc.run_dir).unwrap();
    let row = bundle.rows.iter().find(|r| r.method == "ewc").unwrap();
    assert!((row.final_mean - record.aggregates["final_performance"].mean).abs() < 1e-12);
    assert!(row.runtime_score.is_some_and(|s| (0.0..=1.0).contains(&s)));
    assert_eq!(read_csv(&bundle.plot_data).unwrap().len(), 2);
    let matrix = std::fs::read_to_string(&bundle.transfer_matrices[0]).unwrap();
    assert!(matrix.starts_with("row,0,1,2"));

    let rl = json!({"setting": "incremental_rl", "method": "base_method", "family": "multi_layout_gridworld",
                    "environment": {"num_tasks": 2, "steps_per_phase": 500}, "output_dir": tmp.path()});
    let rl = run(&parse_config(&rl.to_string()).unwrap(), 1).unwrap();
    assert!(report(&[base.run_dir, rl.run_dir], &opts).is_err());
}

fn manifest(dir: &Path, name: &str, target: &str, command: &[&str]) -> PathBuf {
    write_config(dir, &format!("{name}.json"), json!({"name": name, "target": target, "command": command}))
}

#[test]
fn plugin_registration() {
    let tmp = tempfile::tempdir().unwrap();
    let mut reg = Registry::new();
    let p = manifest(tmp.path(), "inc_plugin", "incremental_sl", &[CL, "plugin-serve"]);
    reg.register_plugin(PluginManifest::load(&p).unwrap()).unwrap();
    let mut settings: Vec<String> = reg.applicable_settings("inc_plugin").unwrap().iter().map(|n| n.name.clone()).collect();
    settings.sort();
    assert_eq!(settings, ["incremental_sl", "multi_task_sl", "task_incremental_sl", "traditional_sl"]);
    let table = list_entities(EntityKind::Methods, &reg);
    assert!(table.rows.iter().any(|r| r[0] == "inc_plugin" && r[1] == "plugin" && r[3] == "4"));

    let dup = reg.register_plugin(PluginManifest::load(&p).unwrap()).unwrap_err();
    assert_eq!(dup.config_code(), Some("E_DUPLICATE_METHOD"));
    let builtin_clash = manifest(tmp.path(), "ewc", "incremental_sl", &[CL]);
    assert!(reg.register_plugin(PluginManifest::load(&builtin_clash).unwrap()).is_err());
    let unknown = manifest(tmp.path(), "lost", "no_such_setting", &[CL]);
    assert_eq!(
        reg.register_plugin(PluginManifest::load(&unknown).unwrap()).unwrap_err().config_code(),
        Some("E_UNKNOWN_SETTING")
    );
}

#[test]
fn plugins_run_through_the_harness() {
    let tmp = tempfile::tempdir().unwrap();
    let p = manifest(tmp.path(), "served", "continuous_task_agnostic", &[CL, "plugin-serve", "--method", "base_method"]);
    let mut plugin_cfg = small_sl(tmp.path(), "served", &[0]);
    plugin_cfg["plugins"] = json!([p]);
    let plugin = run(&parse_config(&plugin_cfg.to_string()).unwrap(), 1).unwrap();
    let builtin = run(&parse_config(&small_sl(tmp.path(), "base_method", &[0]).to_string()).unwrap(), 1).unwrap();
    let load = |o: &lattice_cl::harness::RunOutcome| {
        let rec = RunRecord::load(&o.run_dir).unwrap();
        rec.load_results(&o.run_dir).unwrap().remove(0)
    };
    assert_eq!(load(&plugin).matrix, load(&builtin).matrix);
}

fn cl(args: &[&str], envs: &[(&str, &str)]) -> std::process::Output {
    let mut c = Command::new(CL);
    c.args(args);
    for (k, v) in envs {
        c.env(k, v);
    }
    c.output().unwrap()
}

#[test]
fn cli_listing_and_lattice() {
    let out = cl(&["list", "settings"], &[]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let reg = Registry::new();
    let listed: Vec<&str> = text.lines().skip(1).map(|l| l.split_whitespace().next().unwrap()).collect();
    let concrete: Vec<&str> = reg.catalog().concrete().map(|n| n.name.as_str()).collect();
    assert_eq!(listed, concrete);

    let methods = String::from_utf8(cl(&["list", "methods"], &[]).stdout).unwrap();
    let base = methods.lines().find(|l| l.starts_with("base_method")).unwrap();
    assert_eq!(base.split_whitespace().nth(3), Some("12"));
    let envs = String::from_utf8(cl(&["list", "envs"], &[]).stdout).unwrap();
    assert_eq!(envs.lines().count(), 5);

    let dot = String::from_utf8(cl(&["lattice", "--format", "dot"], &[]).stdout).unwrap();
    assert!(dot.starts_with("digraph"));
    let json: serde_json::Value = serde_json::from_slice(&cl(&["lattice", "--format", "json"], &[]).stdout).unwrap();
    assert!(json.to_string().contains("task_incremental_rl"));
}

#[test]
fn cli_exit_codes_and_seed_override() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = write_config(tmp.path(), "bad.json", json!({"setting": "continuous_task_agnostic_sl", "method": "ewc"}));
    let out = cl(&["run", "--config", bad.to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error[E_INAPPLICABLE]"));

    let broken = manifest(tmp.path(), "broken", "continuous_task_agnostic", &["false"]);
    let mut cfg = small_sl(&tmp.path().join("broken_out"), "broken", &[0]);
    cfg["plugins"] = json!([broken]);
    let path = write_config(tmp.path(), "broken_cfg.json", cfg);
    assert_eq!(cl(&["run", "--config", path.to_str().unwrap()], &[]).status.code(), Some(3));

    let out_dir = tmp.path().join("override");
    let path = write_config(tmp.path(), "ok.json", small_sl(&out_dir, "base_method", &[0]));
    let out = cl(&["run", "--config", path.to_str().unwrap()], &[("CL_SEED_OVERRIDE", "3,4")]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run_dir = std::fs::read_dir(&out_dir).unwrap().next().unwrap().unwrap().path();
    let record = RunRecord::load(&run_dir).unwrap();
    assert_eq!(record.config.seeds, vec![3, 4]);

    let report_dir = tmp.path().join("report");
    let out = cl(
        &["report", run_dir.to_str().unwrap(), "--out", report_dir.to_str().unwrap(), "--reference", "base_method"],
        &[],
    );
    assert!(out.status.success());
    assert!(report_dir.join("comparison.csv").exists());
}

#[test]
fn config_defaults_are_echoed() {
    let cfg = parse_config(r#"{"setting":"traditional_rl","method":"base_method"}"#).unwrap();
    let echoed: BTreeMap<String, serde_json::Value> = cfg.method.hyperparameters.clone();
    for key in ["lr", "gamma", "epsilon_start", "epsilon_end", "replay_capacity", "ewc_lambda"] {
        assert!(echoed.contains_key(key), "{key}");
    }
    assert_eq!(cfg.environment.num_tasks, 1);
    assert_eq!(cfg.environment.steps_per_phase, 10_000);
    assert_eq!(parse_config(&cfg.to_json()).unwrap(), cfg);
}
