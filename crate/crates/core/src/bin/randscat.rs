use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::{error, warn};
use serde_json::json;

use randscat::domain::volume::write_volume;
use randscat::domain::MediumScene;
use randscat::forward::{FarFieldDataset, ForwardModel, IncidentConfig};
use randscat::greens::WaveNumber;
use randscat::noise::draw_noise;
use randscat::pipeline::{
    emit_report, plan_measurements, recover_dataset, run_pipeline, synthesize_plan, Diagnostics, ExperimentConfig, ExperimentMode,
    MeasurementPlan, DATASET_FILE, DIAGNOSTICS_FILE, PLAN_FILE, REPORT_DIR,
};
use randscat::{Error, Result};

#[derive(Parser)]
#[command(name = "randscat", version, about = "Random Schrödinger scattering experiments")]
struct Cli {
    /// Output directory; overrides the config's `output_dir`.
    #[arg(long, global = true, env = "RANDSCAT_OUT_DIR")]
    out_dir: Option<PathBuf>,
    /// Worker threads for the forward solver.
    #[arg(long, global = true, env = "RANDSCAT_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the measurement request file for a config.
    PlanMeasurements {
        #[arg(long)]
        config: PathBuf,
    },
    /// Solve for the scattered near field and write it as two volumes.
    SimulateForward {
        /// Scene manifest.
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        k: f64,
        /// Incident direction, e.g. `--d 1,0,0`; omitted for passive.
        #[arg(long, value_delimiter = ',', num_args = 3)]
        d: Option<Vec<f64>>,
        /// Noise seed; omitted for a noise-free solve.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Synthesize far fields for a plan (default: the output directory's plan).
    SynthesizeFarfield {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        plan: Option<PathBuf>,
    },
    /// Recover σ² from a passive dataset.
    RecoverVariance(RecoverArgs),
    /// Recover V from an active single-realization dataset.
    RecoverPotential(RecoverArgs),
    /// Recover E f from an active ensemble dataset.
    RecoverSource(RecoverArgs),
    /// Compare direct and reciprocal far fields end to end.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Write CSV tables from a diagnostics file.
    Report {
        #[arg(long)]
        diagnostics: Option<PathBuf>,
    },
    /// Run every stage, resuming completed ones.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(clap::Args)]
struct RecoverArgs {
    #[arg(long)]
    config: PathBuf,
    /// Dataset file (default: the output directory's dataset).
    #[arg(long)]
    dataset: Option<PathBuf>,
}

struct Loaded {
    config: ExperimentConfig,
    base: PathBuf,
    out: PathBuf,
}

fn base_of(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn load(path: &Path, out_dir: &Option<PathBuf>) -> Result<Loaded> {
    let config = ExperimentConfig::load(path)?;
    let base = base_of(path);
    let out = match (out_dir, &config.output_dir) {
        (Some(o), _) => o.clone(),
        (None, Some(o)) if o.is_absolute() => o.clone(),
        (None, Some(o)) => base.join(o),
        (None, None) => PathBuf::from("randscat-out"),
    };
    fs::create_dir_all(&out).map_err(|e| Error::Io { path: out.clone(), source: e })?;
    Ok(Loaded { config, base, out })
}

fn expect_mode(config: &ExperimentConfig, mode: ExperimentMode) -> Result<()> {
    if config.mode == mode {
        Ok(())
    } else {
        Err(Error::Config(format!("config mode is {:?}, this command needs {:?}", config.mode, mode)))
    }
}

/// Exit status 2 when recovery diagnostics raised flags.
fn flagged(flags: &[String]) -> u8 {
    for f in flags {
        warn!("flag: {f}");
    }
    if flags.is_empty() {
        0
    } else {
        2
    }
}

fn recover(args: &RecoverArgs, out_dir: &Option<PathBuf>, mode: ExperimentMode) -> Result<u8> {
    let l = load(&args.config, out_dir)?;
    expect_mode(&l.config, mode)?;
    let scene = l.config.validate_with(&l.base)?;
    let path = args.dataset.clone().unwrap_or_else(|| l.out.join(DATASET_FILE));
    let data = FarFieldDataset::read(&path)?;
    let (diag, files) = recover_dataset(&l.config, &scene, &data, &l.out)?;
    for f in files {
        println!("{}", l.out.join(f).display());
    }
    Ok(flagged(&diag.flags))
}

fn execute(cli: Cli) -> Result<u8> {
    let out_dir = cli.out_dir;
    match cli.command {
        Command::PlanMeasurements { config } => {
            let l = load(&config, &out_dir)?;
            let path = l.out.join(PLAN_FILE);
            plan_measurements(&l.config)?.write(&path)?;
            println!("{}", path.display());
            Ok(0)
        }
        Command::SimulateForward { scene, k, d, seed } => {
            let scene = MediumScene::load(&scene)?;
            let inc = match d {
                Some(d) => IncidentConfig::active([d[0], d[1], d[2]])?,
                None => IncidentConfig::passive(),
            };
            let noise = seed.map(|s| draw_noise(scene.grid(), s));
            let model = ForwardModel::new(scene, Default::default())?;
            let solve = model.at(WaveNumber::new(k)?)?.solve_mild(&inc, noise.as_ref())?;
            let out = out_dir.unwrap_or_else(|| PathBuf::from("randscat-out"));
            fs::create_dir_all(&out).map_err(|e| Error::Io { path: out.clone(), source: e })?;
            write_volume(&out.join("u_sc.re.f64"), &solve.u_sc.real_parts())?;
            write_volume(&out.join("u_sc.im.f64"), &solve.u_sc.imag_parts())?;
            let summary = json!({
                "k": k,
                "series_terms": solve.series_terms,
                "residual": solve.residual,
                "contraction": solve.contraction.norm_estimate,
                "converged": solve.contraction.converged,
                "resolution_ok": solve.resolution_ok,
            });
            println!("{}", serde_json::to_string_pretty(&summary)?);
            Ok(0)
        }
        Command::SynthesizeFarfield { config, plan } => {
            let l = load(&config, &out_dir)?;
            let scene = l.config.validate_with(&l.base)?;
            let plan = MeasurementPlan::read(&plan.unwrap_or_else(|| l.out.join(PLAN_FILE)))?;
            let path = l.out.join(DATASET_FILE);
            synthesize_plan(&l.config, &scene, &plan)?.write(&path)?;
            println!("{}", path.display());
            Ok(0)
        }
        Command::RecoverVariance(a) => recover(&a, &out_dir, ExperimentMode::Variance),
        Command::RecoverPotential(a) => recover(&a, &out_dir, ExperimentMode::Potential),
        Command::RecoverSource(a) => recover(&a, &out_dir, ExperimentMode::Source),
        Command::Validate { config } => {
            let l = load(&config, &out_dir)?;
            expect_mode(&l.config, ExperimentMode::Validate)?;
            let manifest = run_pipeline(&l.config, &l.base, &l.out)?;
            Ok(flagged(&manifest.flags))
        }
        Command::Report { diagnostics } => {
            let out = out_dir.unwrap_or_else(|| PathBuf::from("randscat-out"));
            let diag = Diagnostics::read(&diagnostics.unwrap_or_else(|| out.join(DIAGNOSTICS_FILE)))?;
            let dir = out.join(REPORT_DIR);
            fs::create_dir_all(&dir).map_err(|e| Error::Io { path: dir.clone(), source: e })?;
            for p in emit_report(&diag, &dir)? {
                println!("{}", p.display());
            }
            Ok(0)
        }
        Command::Run { config } => {
            let l = load(&config, &out_dir)?;
            let manifest = run_pipeline(&l.config, &l.base, &l.out)?;
            println!("{}", l.out.display());
            Ok(flagged(&manifest.flags))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            error!("thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    match execute(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            error!("{e}");
            ExitCode::from(1)
        }
    }
}
