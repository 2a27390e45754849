use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use flotation::experiments::manifest::{execute, Manifest};
use flotation::experiments::study::Cell;
use flotation::experiments::{replay, sweep, PolicyKind, ScenarioConfig, Study};

#[derive(Parser)]
#[command(name = "flotation", version, about = "Flotation cell control experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single scenario.
    Run(Overrides),
    /// Run one of: model-accuracy, feedstock-variance, measurements, action-grid.
    Sweep {
        study: String,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Re-run a manifest and check every output is reproduced.
    Replay {
        manifest: PathBuf,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Overrides {
    /// TOML scenario file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Comma-separated subset of pid,mpc,pomcp.
    #[arg(long, value_delimiter = ',')]
    policies: Option<Vec<PolicyKind>>,
}

impl Overrides {
    fn scenario(&self) -> flotation::Result<ScenarioConfig> {
        let mut cfg = match &self.config {
            Some(path) => ScenarioConfig::from_toml(&std::fs::read_to_string(path)?)?,
            None => ScenarioConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.base_seed = seed;
        }
        if let Some(n) = self.replicates {
            cfg.replicates = n;
        }
        if let Some(p) = &self.policies {
            cfg.policies = p.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn report(manifest: &Manifest, out_dir: &std::path::Path) -> bool {
    for f in &manifest.files {
        println!("wrote {}", out_dir.join(&f.path).display());
    }
    for fail in &manifest.failures {
        eprintln!("replicate failed (seed {}): {}", fail.seed, fail.message);
    }
    manifest.ok()
}

fn run(cli: Cli) -> flotation::Result<bool> {
    match cli.command {
        Command::Run(o) => {
            let cfg = o.scenario()?;
            let cell = Cell { name: cfg.name.clone(), labels: vec![], config: cfg };
            let manifest = execute("run", vec![], vec![cell], &o.out_dir)?;
            Ok(report(&manifest, &o.out_dir))
        }
        Command::Sweep { study, overrides } => {
            let study: Study = study.parse()?;
            let manifest = sweep(study, &overrides.scenario()?, &overrides.out_dir)?;
            Ok(report(&manifest, &overrides.out_dir))
        }
        Command::Replay { manifest, out_dir } => {
            let out_dir = out_dir.unwrap_or_else(|| manifest.parent().unwrap_or(".".as_ref()).join("replay"));
            let r = replay(&manifest, &out_dir)?;
            for path in &r.mismatched {
                eprintln!("mismatch: {path}");
            }
            println!("{} of {} files reproduced in {}", r.matched.len(), r.matched.len() + r.mismatched.len(), out_dir.display());
            Ok(report(&r.replayed, &out_dir) && r.ok())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
