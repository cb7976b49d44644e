use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use atlasmass::error::{Error, Result};
use atlasmass::phantom::PhantomSpec;
use atlasmass::pipeline::{self, ModelBundle, RunConfig};

#[derive(Parser)]
#[command(name = "atlasmass", version, about = "Region mass estimation from CT volumes")]
struct Cli {
    /// Maximum number of worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic cohort with atlases, subjects and hidden truth.
    Phantom {
        #[arg(long, default_value_t = 40)]
        subjects: usize,
        #[arg(long, default_value_t = 3)]
        atlases: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Use 4 mm voxels instead of 2 mm.
        #[arg(long)]
        small: bool,
    },
    /// Segment, extract features, select models and write the report.
    Fit {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the master seed of the configuration.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Predict weights for new volumes with a fitted model bundle.
    Predict {
        #[arg(long)]
        model: PathBuf,
        /// Output CSV (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
        volumes: Vec<PathBuf>,
    },
    /// Score predictions against truth and compare prediction sets.
    Evaluate {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// Further prediction sets compared to the first by Wilcoxon tests.
        #[arg(long)]
        compare: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::Io {
            path: parent.to_path_buf(),
            source: e,
        })?;
    }
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Phantom {
            subjects,
            atlases,
            seed,
            out,
            small,
        } => {
            let spec = if small { PhantomSpec::small() } else { PhantomSpec::default() };
            pipeline::write_phantom_cohort(subjects, atlases, seed, &spec, &out)?;
            println!("wrote {subjects} subjects and {atlases} atlases to {}", out.display());
        }
        Command::Fit { config, out, seed } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let dir = pipeline::output_dir(&cfg, out.as_deref());
            let result = pipeline::fit_pipeline(&cfg)?;
            pipeline::write_fit_outputs(&result, &cfg, &dir)?;
            print!("{}", pipeline::results_text(&result.cells, cfg.atlases.len(), &cfg.kinds));
        }
        Command::Predict { model, out, volumes } => {
            let bundle = ModelBundle::load(&model)?;
            let preds = pipeline::predict_volumes(&bundle, &volumes)?;
            let csv = pipeline::predictions_csv(&preds);
            match out {
                Some(p) => write(&p, &csv)?,
                None => print!("{csv}"),
            }
        }
        Command::Evaluate {
            predictions,
            truth,
            compare,
            out,
        } => {
            let paired = pipeline::pair(&predictions, &truth)?;
            let m = pipeline::metrics(&paired)?;
            println!("n={} r2={:.4} rmse_g={:.4} mean_target_g={:.4}", m.n, m.r2, m.rmse_g, m.mean_target_g);
            let mut rows = Vec::new();
            for other in &compare {
                let b = pipeline::pair(other, &truth)?;
                let outcome = pipeline::compare(&paired, &b)?;
                println!(
                    "vs {}: W={} n={} p={:.6}",
                    other.display(),
                    outcome.w_statistic,
                    outcome.n_effective,
                    outcome.p_two_sided
                );
                rows.push(pipeline::Comparison {
                    pipeline_a: pipeline::volume_id(&predictions),
                    pipeline_b: pipeline::volume_id(other),
                    outcome,
                });
            }
            if let Some(dir) = out {
                write(&dir.join("metrics.json"), &(serde_json::to_string_pretty(&m)? + "\n"))?;
                write(&dir.join("residuals.csv"), &pipeline::residuals_csv(&paired))?;
                if !rows.is_empty() {
                    write(&dir.join("comparisons.csv"), &pipeline::comparisons_csv(&rows))?;
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs.unwrap_or(0))
        .build()
    {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start thread pool: {e}");
            return ExitCode::from(2);
        }
    };
    match pool.install(|| run(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
