use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cellfree::expcli::{
    run_experiment, run_validation, validation_grid, write_outputs, ExperimentConfig, SweepConfig, ValidationCase,
};
use cellfree::{Error, Result};

/// Cell-free massive MIMO experiments.
#[derive(Parser)]
#[command(name = "cellfree", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Override the base seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the number of network realizations.
    #[arg(long, global = true)]
    realizations: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment described by a TOML config.
    Run { config: PathBuf },
    /// Compare closed-form SINRs against the Monte Carlo oracle.
    Validate {
        /// Draws per instance.
        #[arg(long, default_value_t = 1_000_000)]
        samples: usize,
        /// Only the smallest and largest grid points.
        #[arg(long)]
        quick: bool,
    },
    /// Run every combination listed in the config's `[sweep]` table.
    Sweep { config: PathBuf },
}

impl Common {
    fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(s) = self.seed {
            cfg.experiment.base_seed = s;
        }
        if let Some(n) = self.realizations {
            cfg.experiment.n_realizations = n;
        }
    }
}

fn run_one(cfg: &ExperimentConfig, out_dir: &Path) -> Result<cellfree::expcli::RunSummary> {
    let run = run_experiment(cfg)?;
    let dir = write_outputs(&run, out_dir)?;
    print!("{}", run.summary);
    println!("wrote {}", dir.display());
    Ok(run.summary)
}

fn sweep(path: &Path, common: &Common) -> Result<()> {
    let sweep = SweepConfig::load(path)?;
    let (configs, skipped) = sweep.expand();
    for (tag, why) in &skipped {
        println!("skipping {tag}: {why}");
    }
    std::fs::create_dir_all(&common.out_dir).map_err(|source| Error::Io { path: common.out_dir.clone(), source })?;
    let table = common.out_dir.join("sweep_summary.csv");
    let wrap = |source| Error::Csv { path: table.clone(), source };
    let mut w = csv::Writer::from_path(&table).map_err(wrap)?;
    w.write_record(["tag", "median", "outage_95", "ee_median", "failed", "flagged"]).map_err(wrap)?;
    for mut cfg in configs {
        common.apply(&mut cfg);
        let s = run_one(&cfg, &common.out_dir)?;
        let f = |v: Option<f64>| v.map_or_else(String::new, |x| format!("{x:e}"));
        w.write_record([s.tag.clone(), f(s.median), f(s.outage_95), f(s.ee_median), s.n_failed.to_string(), s.flagged.to_string()])
            .map_err(wrap)?;
    }
    w.flush().map_err(|source| Error::Io { path: table.clone(), source })?;
    println!("wrote {}", table.display());
    Ok(())
}

fn validate(samples: usize, quick: bool, common: &Common) -> Result<bool> {
    let cases: Vec<ValidationCase> = if quick {
        let g = validation_grid();
        vec![g[0], g[g.len() - 1]]
    } else {
        validation_grid()
    };
    let report = run_validation(&cases, samples, common.seed.unwrap_or(1))?;
    print!("{report}");
    let failed = report.lines.iter().filter(|l| !l.pass).count();
    println!("{} checks, {} failed", report.lines.len(), failed);
    Ok(failed == 0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.common.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot set thread count: {e}");
            return ExitCode::FAILURE;
        }
    }
    let result = match &cli.command {
        Command::Run { config } => ExperimentConfig::load(config).and_then(|mut cfg| {
            cli.common.apply(&mut cfg);
            run_one(&cfg, &cli.common.out_dir).map(|s| !s.flagged)
        }),
        Command::Sweep { config } => sweep(config, &cli.common).map(|_| true),
        Command::Validate { samples, quick } => validate(*samples, *quick, &cli.common),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
