//! Command-line entry point: dataset generation, the two trainers, the
//! benchmark matrix, and report rendering.

mod config;

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use config::RunConfig;
use graspkit::bench::{
    run_matrix, standard_combinations, summarize, write_records, write_timings, BenchModels,
    BenchShape, Combination, ExperimentConfig, Scenario,
};
use graspkit::geometry::LossWeights;
use graspkit::grasp_eval::GripperSpec;
use graspkit::nn::{
    load_hypernet, load_mlp, save_hypernet, save_mlp, OptimizerKind, TrainConfig,
};
use graspkit::propose::{train_proposal, GraspLibrary, ProposalModel};
use graspkit::recon::{train_recon, ReconModel};
use graspkit::synth::{
    box_family_specs, load_dataset, make_dataset, save_dataset, shoe_family_specs, Dataset,
    DatasetConfig, ShapeSpec, ViewRing, ViewpointPolicy,
};

#[derive(Parser)]
#[command(name = "graspkit", version, about = "Grasp planning pipeline and benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic labeled dataset plus its grasp library.
    GenData(GenDataArgs),
    /// Train the shape reconstructor on a dataset's train split.
    TrainRecon(TrainArgs),
    /// Train the grasp proposal regressor on a dataset's train split.
    TrainProposal(TrainArgs),
    /// Run the proposal/refinement benchmark matrix.
    Eval(EvalArgs),
    /// Re-render the summary tables from a results file.
    Report(ReportArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// TOML run configuration; flags override its values.
    #[arg(long, env = "GRASPKIT_CONFIG")]
    config: Option<PathBuf>,
    /// Master seed override.
    #[arg(long, env = "GRASPKIT_SEED")]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, env = "GRASPKIT_OUT")]
    out: PathBuf,
}

#[derive(Args)]
struct GenDataArgs {
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Dataset directory written by gen-data.
    #[arg(long)]
    data: PathBuf,
    /// Continue training from an existing checkpoint.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Epoch count override.
    #[arg(long)]
    epochs: Option<usize>,
    /// Learning-rate override.
    #[arg(long)]
    learning_rate: Option<f64>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Dataset directory written by gen-data.
    #[arg(long)]
    data: PathBuf,
    /// Proposal checkpoint (needed by learned rows).
    #[arg(long)]
    proposal_ckpt: Option<PathBuf>,
    /// Reconstruction checkpoint (needed by recon rows).
    #[arg(long)]
    recon_ckpt: Option<PathBuf>,
    /// Grasp library directory; defaults to `<data>/library`.
    #[arg(long)]
    library: Option<PathBuf>,
    /// Scenario override: visible-grasp, hidden-grasp, or sim-boxes.
    #[arg(long)]
    scenario: Option<String>,
    /// Comma-separated `proposal+refinement` rows.
    #[arg(long)]
    combinations: Option<String>,
    /// Trials per (shape, viewpoint, combination) cell.
    #[arg(long)]
    trials: Option<usize>,
    /// Trial-level parallelism (results are identical for any value).
    #[arg(long, env = "GRASPKIT_JOBS")]
    jobs: Option<usize>,
}

#[derive(Args)]
struct ReportArgs {
    /// Results file written by eval.
    #[arg(long)]
    results: PathBuf,
    /// Optional directory for the regenerated summary files.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::GenData(args) => cmd_gen_data(args),
        Command::TrainRecon(args) => cmd_train(args, TrainKind::Recon),
        Command::TrainProposal(args) => cmd_train(args, TrainKind::Proposal),
        Command::Eval(args) => cmd_eval(args),
        Command::Report(args) => cmd_report(args),
    };
    if let Err(e) = outcome {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn resolve(common: &CommonArgs) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(common.config.as_deref())?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_manifest(out: &Path, subcommand: &str, cfg: &RunConfig, extra: &[(&str, String)]) -> Result<()> {
    std::fs::create_dir_all(out)?;
    let mut text = format!("subcommand = \"{subcommand}\"\n");
    for (k, v) in extra {
        text.push_str(&format!("{k} = \"{v}\"\n"));
    }
    text.push('\n');
    text.push_str(&cfg.to_toml());
    std::fs::write(out.join("manifest.toml"), text)?;
    Ok(())
}

fn dataset_specs(cfg: &RunConfig) -> (Vec<ShapeSpec>, Vec<String>) {
    let total = cfg.dataset.train_shapes + cfg.dataset.test_shapes;
    let specs = match cfg.dataset.family.as_str() {
        "shoes" => shoe_family_specs(total, cfg.seed),
        "boxes" => box_family_specs(total, cfg.seed),
        _ => {
            let half = total / 2;
            let mut s = shoe_family_specs(half, cfg.seed);
            s.extend(box_family_specs(total - half, cfg.seed));
            s
        }
    };
    // The last `test_shapes` ids form the held-out split.
    let test_ids = specs
        .iter()
        .skip(cfg.dataset.train_shapes)
        .map(|s| s.id.clone())
        .collect();
    (specs, test_ids)
}

fn cmd_gen_data(args: GenDataArgs) -> Result<()> {
    let cfg = resolve(&args.common)?;
    let out = &args.common.out;
    std::fs::create_dir_all(out)
        .with_context(|| format!("creating output directory {}", out.display()))?;

    let (specs, test_ids) = dataset_specs(&cfg);
    let policy = ViewpointPolicy {
        rings: vec![
            ViewRing::Elevated {
                elevation: cfg.dataset.elevation_deg.to_radians(),
                range: cfg.dataset.range,
                azimuths: cfg.dataset.views_elevated,
            },
            ViewRing::SideOn {
                height: cfg.dataset.side_height,
                range: cfg.dataset.range,
                azimuths: cfg.dataset.views_side,
            },
        ],
    };
    let mut ds_cfg = DatasetConfig::new(policy, cfg.seed);
    ds_cfg.gt_cloud_points = cfg.dataset.gt_cloud_points;
    ds_cfg.depth_noise_std = cfg.dataset.depth_noise_std;

    let dataset = make_dataset(&specs, &test_ids, &ds_cfg)?;
    save_dataset(out, &dataset)?;

    let library = GraspLibrary::build(&specs, &GripperSpec::default(), ds_cfg.gt_cloud_points, cfg.seed)?;
    library.save(&out.join("library"))?;

    write_manifest(out, "gen-data", &cfg, &[("out", out.display().to_string())])?;
    println!(
        "dataset: {} examples over {} shapes ({} train / {} test), library: {} entries",
        dataset.examples.len(),
        dataset.shapes.len(),
        dataset.shapes.iter().filter(|s| s.train).count(),
        dataset.shapes.iter().filter(|s| !s.train).count(),
        library.len(),
    );
    Ok(())
}

enum TrainKind {
    Recon,
    Proposal,
}

fn train_config(cfg: &RunConfig, args: &TrainArgs) -> Result<TrainConfig> {
    let mut tc = TrainConfig::new(
        args.learning_rate.unwrap_or(cfg.train.learning_rate),
        cfg.train.batch_size,
        args.epochs.unwrap_or(cfg.train.epochs),
        cfg.seed,
    )?;
    tc.loss_weights = LossWeights::new(cfg.train.lambda_t, cfg.train.lambda_r)?;
    tc.domain_samples = cfg.train.domain_samples;
    tc.optimizer = match cfg.train.optimizer.as_str() {
        "sgd" => OptimizerKind::Sgd {
            momentum: cfg.train.momentum,
        },
        _ => OptimizerKind::default(),
    };
    Ok(tc)
}

fn load_train_split(path: &Path) -> Result<Dataset> {
    let dataset = load_dataset(path).with_context(|| format!("loading dataset {}", path.display()))?;
    if dataset.train_examples().is_empty() {
        bail!("dataset {} has no train examples", path.display());
    }
    Ok(dataset)
}

fn write_loss_curve(path: &Path, curve: &[f64]) -> Result<()> {
    let mut text = String::from("epoch,loss\n");
    for (i, l) in curve.iter().enumerate() {
        text.push_str(&format!("{i},{l}\n"));
    }
    std::fs::write(path, text)?;
    Ok(())
}

fn cmd_train(args: TrainArgs, kind: TrainKind) -> Result<()> {
    let cfg = resolve(&args.common)?;
    let out = &args.common.out;
    std::fs::create_dir_all(out)?;
    let dataset = load_train_split(&args.data)?;
    let train_split = dataset.train_examples();
    let tc = train_config(&cfg, &args)?;

    match kind {
        TrainKind::Recon => {
            let model = match &args.resume {
                Some(ckpt) => ReconModel::new(load_hypernet(ckpt)?, cfg.train.inference_samples)?,
                None => ReconModel::init(
                    &cfg.train.hyper_hidden,
                    &cfg.train.template_hidden,
                    cfg.train.inference_samples,
                    cfg.seed,
                )?,
            };
            let (trained, curve) = train_recon(&model, &train_split, &tc)?;
            save_hypernet(&out.join("recon.ckpt"), trained.hypernet())?;
            write_loss_curve(&out.join("recon_loss.csv"), &curve)?;
            write_manifest(out, "train-recon", &cfg, &[("data", args.data.display().to_string())])?;
            println!(
                "trained reconstruction on {} examples for {} epochs; final loss {:.6}",
                train_split.len(),
                curve.len(),
                curve.last().copied().unwrap_or(f64::NAN)
            );
        }
        TrainKind::Proposal => {
            let model = match &args.resume {
                Some(ckpt) => ProposalModel::new(load_mlp(ckpt)?)?,
                None => ProposalModel::init(&cfg.train.proposal_hidden, cfg.seed)?,
            };
            let (trained, curve) = train_proposal(&model, &train_split, &tc)?;
            save_mlp(&out.join("proposal.ckpt"), trained.net())?;
            write_loss_curve(&out.join("proposal_loss.csv"), &curve)?;
            write_manifest(out, "train-proposal", &cfg, &[("data", args.data.display().to_string())])?;
            println!(
                "trained proposal on {} examples for {} epochs; final loss {:.6}",
                train_split.len(),
                curve.len(),
                curve.last().copied().unwrap_or(f64::NAN)
            );
        }
    }
    Ok(())
}

fn pick_bench_shapes(dataset: &Dataset, requested: usize) -> Vec<BenchShape> {
    let to_bench = |s: &graspkit::synth::DatasetShape| BenchShape {
        spec: s.spec.clone(),
        train: s.train,
    };
    if requested == 0 || requested >= dataset.shapes.len() {
        return dataset.shapes.iter().map(to_bench).collect();
    }
    // Mirror the hardware protocol: mostly train shapes plus at least one
    // held-out shape.
    let n_test = (requested / 4).max(1);
    let n_train = requested - n_test;
    let mut picked: Vec<BenchShape> = dataset
        .shapes
        .iter()
        .filter(|s| s.train)
        .take(n_train)
        .map(to_bench)
        .collect();
    picked.extend(dataset.shapes.iter().filter(|s| !s.train).take(n_test).map(to_bench));
    picked
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let mut cfg = resolve(&args.common)?;
    if let Some(s) = &args.scenario {
        cfg.eval.scenario = s.clone();
    }
    if let Some(c) = &args.combinations {
        cfg.eval.combinations = c.split(',').map(|s| s.trim().to_string()).collect();
    }
    if let Some(t) = args.trials {
        cfg.eval.trials_per_cell = t;
    }
    if let Some(j) = args.jobs {
        cfg.eval.jobs = j;
    }
    let out = &args.common.out;
    std::fs::create_dir_all(out)?;

    let dataset = load_dataset(&args.data)
        .with_context(|| format!("loading dataset {}", args.data.display()))?;
    let scenario: Scenario = cfg.eval.scenario.parse()?;
    let combinations: Vec<Combination> = if cfg.eval.combinations.is_empty() {
        standard_combinations()
    } else {
        cfg.eval
            .combinations
            .iter()
            .map(|s| s.parse())
            .collect::<graspkit::Result<_>>()?
    };

    let proposal_model = match &args.proposal_ckpt {
        Some(p) => Some(ProposalModel::new(load_mlp(p)?)?),
        None => None,
    };
    let recon_model = match &args.recon_ckpt {
        Some(p) => Some(ReconModel::new(load_hypernet(p)?, cfg.train.inference_samples)?),
        None => None,
    };
    let needs_library = combinations.iter().any(Combination::needs_library);
    let library = if needs_library {
        let dir = args.library.clone().unwrap_or_else(|| args.data.join("library"));
        Some(GraspLibrary::load(&dir).with_context(|| format!("loading library {}", dir.display()))?)
    } else {
        None
    };

    let experiment = ExperimentConfig {
        scenario,
        shapes: pick_bench_shapes(&dataset, cfg.eval.bench_shapes),
        combinations,
        trials_per_cell: cfg.eval.trials_per_cell,
        seed: cfg.seed,
        jobs: cfg.eval.jobs,
    };
    let started = std::time::Instant::now();
    let records = run_matrix(
        &experiment,
        BenchModels {
            proposal: proposal_model.as_ref(),
            recon: recon_model.as_ref(),
        },
        library.as_ref(),
    )?;
    let elapsed = started.elapsed().as_secs_f64();

    write_records(&out.join("results.csv"), &records)?;
    write_timings(&out.join("timings.csv"), &records)?;
    let report = summarize(&records)?;
    std::fs::write(out.join("summary.txt"), report.render_text())?;
    std::fs::write(out.join("summary.csv"), report.to_csv())?;
    write_manifest(
        out,
        "eval",
        &cfg,
        &[
            ("data", args.data.display().to_string()),
            ("proposal_ckpt", args.proposal_ckpt.map(|p| p.display().to_string()).unwrap_or_default()),
            ("recon_ckpt", args.recon_ckpt.map(|p| p.display().to_string()).unwrap_or_default()),
        ],
    )?;
    println!("{}", report.render_text());
    println!("{} trials in {elapsed:.1} s", records.len());
    Ok(())
}

fn cmd_report(args: ReportArgs) -> Result<()> {
    let records = graspkit::bench::read_records(&args.results)?;
    let report = summarize(&records)?;
    if let Some(out) = &args.out {
        std::fs::create_dir_all(out)?;
        std::fs::write(out.join("summary.txt"), report.render_text())?;
        std::fs::write(out.join("summary.csv"), report.to_csv())?;
    }
    println!("{}", report.render_text());
    Ok(())
}
