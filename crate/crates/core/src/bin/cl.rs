use std::io::{self, BufReader};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use lattice_cl::harness::{self, EntityKind, ReportOptions};
use lattice_cl::methods::{plugin, BaseMethod, Method, Registry};
use lattice_cl::Result;

#[derive(Parser)]
#[command(name = "cl", version, about = "Run continual-learning experiments over the settings lattice")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Settings,
    Methods,
    Envs,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Dot,
}

#[derive(Subcommand)]
enum Command {
    /// List settings, methods or environment families.
    List {
        kind: Kind,
        /// Plugin manifest to register first.
        #[arg(long = "plugin")]
        plugins: Vec<PathBuf>,
    },
    /// Run every seed of an experiment config.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Output directory (overrides the config).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Plugin manifest to register in addition to the config's.
        #[arg(long = "plugin")]
        plugins: Vec<PathBuf>,
    },
    /// Summarize finished runs as CSV files.
    Report {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
        #[arg(long, default_value = "base_method")]
        reference: String,
        #[arg(long, default_value = "report")]
        out: PathBuf,
        #[arg(long)]
        min_runtime: Option<f64>,
        #[arg(long)]
        max_runtime: Option<f64>,
    },
    /// Print the settings lattice.
    Lattice {
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
    },
    /// Serve a built-in method over the plugin protocol on stdin/stdout.
    #[command(hide = true)]
    PluginServe {
        #[arg(long, default_value = "base_method")]
        method: String,
    },
}

fn execute(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::List { kind, plugins } => {
            let mut registry = Registry::new();
            harness::register_plugins(&mut registry, &plugins)?;
            let kind = match kind {
                Kind::Settings => EntityKind::Settings,
                Kind::Methods => EntityKind::Methods,
                Kind::Envs => EntityKind::Envs,
            };
            print!("{}", harness::list_entities(kind, &registry));
            Ok(true)
        }
        Command::Run {
            config,
            jobs,
            out,
            plugins,
        } => {
            let mut cfg = harness::load_config(&config)?;
            if let Some(seeds) = harness::seed_override()? {
                cfg.seeds = seeds;
            }
            if let Some(out) = out {
                cfg.output_dir = out;
            }
            cfg.plugins.extend(plugins);
            cfg.validate()?;
            let outcome = harness::run(&cfg, jobs)?;
            for f in &outcome.seed_files {
                println!("{}", f.display());
            }
            println!("{}", outcome.record.display());
            if outcome.failed {
                let record = harness::RunRecord::load(&outcome.run_dir)?;
                for s in record.seeds.iter().filter(|s| s.error.is_some()) {
                    eprintln!("seed {} failed: {}", s.seed, s.error.as_deref().unwrap_or_default());
                }
            }
            Ok(!outcome.failed)
        }
        Command::Report {
            dirs,
            reference,
            out,
            min_runtime,
            max_runtime,
        } => {
            let opts = ReportOptions {
                out_dir: out,
                reference,
                reference_runtime: None,
                min_runtime,
                max_runtime,
            };
            let bundle = harness::report(&dirs, &opts)?;
            for p in bundle.transfer_matrices.iter().chain([&bundle.comparison, &bundle.plot_data]) {
                println!("{}", p.display());
            }
            Ok(true)
        }
        Command::Lattice { format } => {
            let catalog = Registry::new().catalog().clone();
            match format {
                Format::Json => println!("{}", serde_json::to_string_pretty(&catalog.to_json())?),
                Format::Dot => print!("{}", catalog.to_dot()),
            }
            Ok(true)
        }
        Command::PluginServe { method } => {
            let stdin = BufReader::new(io::stdin().lock());
            plugin::serve(stdin, io::stdout().lock(), |mut descriptor, setting, seed| {
                descriptor.name = method;
                Ok(Box::new(BaseMethod::new(descriptor, setting, seed)?) as Box<dyn Method>)
            })?;
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(3),
        Err(e) => {
            match e.config_code() {
                Some(code) => eprintln!("error[{code}]: {e}"),
                None => eprintln!("error: {e}"),
            }
            ExitCode::from(if e.is_config() { 2 } else { 3 })
        }
    }
}

