//! `terra-risk`: dataset synthesis, GP training, risk-aware planning, and
//! evaluation from the command line.
//!
//! Exit codes: 0 success, 2 configuration/parameter error, 3 data/i-o error,
//! 4 numerical failure. `TERRA_RISK_THREADS` caps worker parallelism.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use terra_risk::executor::{
    alpha_sweep, evaluate_suite, execute_path, write_results_csv, write_summary_json, EvalRow,
    MetricsSummary,
};
use terra_risk::experiment::{build_likelihoods, train_models, ExperimentConfig};
use terra_risk::gp::{load_model, model_file_name, save_model, GPModel};
use terra_risk::planner::{astar, build_cost_map, EdgePredictionTable, PathRecord, PlanOutcome};
use terra_risk::terrain::{
    load_dataset_index, make_dataset, save_dataset, DatasetKind, ProblemInstance, Split,
};
use terra_risk::{classifier, Error};

#[derive(Parser)]
#[command(
    name = "terra-risk",
    about = "Immobilization-risk-aware rover path planning toolkit",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Experiment configuration file (TOML). Defaults are desk-scale.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Override the configured root seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig, Error> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_file(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        Ok(cfg)
    }
}

fn parse_kinds(arg: &Option<String>, cfg: &ExperimentConfig) -> Result<Vec<DatasetKind>, Error> {
    match arg {
        None => Ok(cfg.dataset.kinds.clone()),
        Some(s) if s == "all" => Ok(vec![DatasetKind::Std, DatasetKind::Es, DatasetKind::Aa]),
        Some(s) => s.split(',').map(DatasetKind::parse).collect(),
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate dataset instances onto disk.
    GenDataset {
        #[command(flatten)]
        config: ConfigArgs,
        /// Dataset kind: std, es, aa, a comma list, or "all".
        #[arg(long)]
        kind: Option<String>,
        /// Split to generate (train, valid, test).
        #[arg(long)]
        split: Option<String>,
        /// Total instances for the split (must divide evenly by the group
        /// count). Defaults to groups x instances_per_group.
        #[arg(long)]
        instances: Option<usize>,
        /// Output root directory.
        #[arg(long)]
        out: PathBuf,
        /// Overwrite an existing non-empty output directory.
        #[arg(long)]
        force: bool,
    },
    /// Fit one GP slip model per terrain class of each dataset kind.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        /// Dataset root (as written by gen-dataset). The dataset must exist;
        /// its stored seed is used unless --seed overrides it.
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        kind: Option<String>,
        /// Model output root directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Plan paths for every instance and method; write path records.
    Plan {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        dataset: PathBuf,
        /// Model root (from train). Trains in memory when omitted.
        #[arg(long)]
        models: Option<PathBuf>,
        #[arg(long)]
        kind: Option<String>,
        /// Comma-separated method labels (e.g. "sgp+ev,mgp+cvar").
        #[arg(long)]
        methods: Option<String>,
        /// CVaR/VaR level override.
        #[arg(long)]
        alpha: Option<f64>,
        /// Heuristic: "zero" or "euclid_over_umax".
        #[arg(long)]
        heuristic: Option<String>,
        /// Directory of external likelihood rasters (<id>.f32), overriding
        /// the synthetic classifier.
        #[arg(long)]
        likelihoods: Option<PathBuf>,
        /// Also export per-method cost.f32 rasters.
        #[arg(long)]
        dump_costs: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Execute previously planned paths against the ground truth.
    Execute {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        dataset: PathBuf,
        /// Path records root (from plan).
        #[arg(long)]
        paths: PathBuf,
        #[arg(long)]
        kind: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Full evaluation: plan and execute every instance x method.
    Evaluate {
        #[command(flatten)]
        config: ConfigArgs,
        /// Dataset root; generated in memory when omitted.
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Model root; trained in memory when omitted.
        #[arg(long)]
        models: Option<PathBuf>,
        #[arg(long)]
        kind: Option<String>,
        #[arg(long)]
        methods: Option<String>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        heuristic: Option<String>,
        #[arg(long)]
        likelihoods: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// MGP+CVaR across an alpha grid (safety/efficiency trade-off).
    SweepAlpha {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        models: Option<PathBuf>,
        /// Kind to sweep (default: aa).
        #[arg(long)]
        kind: Option<String>,
        /// Comma-separated alpha grid, e.g. "0,0.6,0.9,0.99".
        #[arg(long)]
        alphas: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("TERRA_RISK_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
        }
    }
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Param(_) | Error::Config(_) => 2,
        Error::Graph(_) | Error::Data(_) | Error::Io(_) | Error::Json(_) => 3,
        Error::Fit { .. } => 4,
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::GenDataset { config, kind, split, instances, out, force } => {
            cmd_gen_dataset(config, kind, split, instances, out, force)
        }
        Command::Train { config, dataset, kind, out } => cmd_train(config, dataset, kind, out),
        Command::Plan {
            config,
            dataset,
            models,
            kind,
            methods,
            alpha,
            heuristic,
            likelihoods,
            dump_costs,
            out,
        } => cmd_plan(
            config, dataset, models, kind, methods, alpha, heuristic, likelihoods, dump_costs, out,
        ),
        Command::Execute { config, dataset, paths, kind, out } => {
            cmd_execute(config, dataset, paths, kind, out)
        }
        Command::Evaluate {
            config,
            dataset,
            models,
            kind,
            methods,
            alpha,
            heuristic,
            likelihoods,
            out,
        } => cmd_evaluate(config, dataset, models, kind, methods, alpha, heuristic, likelihoods, out),
        Command::SweepAlpha { config, dataset, models, kind, alphas, out } => {
            cmd_sweep_alpha(config, dataset, models, kind, alphas, out)
        }
    }
}

// ── shared helpers ───────────────────────────────────────────────────────────

fn apply_overrides(
    cfg: &mut ExperimentConfig,
    methods: &Option<String>,
    alpha: Option<f64>,
    heuristic: &Option<String>,
) -> Result<(), Error> {
    if let Some(m) = methods {
        if m.trim().is_empty() {
            return Err(Error::config("method list is empty"));
        }
        cfg.evaluation.methods = m.split(',').map(|s| s.trim().to_string()).collect();
    }
    if let Some(a) = alpha {
        cfg.risk.alpha = a;
    }
    if let Some(h) = heuristic {
        cfg.planner.heuristic = match h.as_str() {
            "zero" => terra_risk::planner::HeuristicMode::Zero,
            "euclid_over_umax" => terra_risk::planner::HeuristicMode::EuclidOverUmax,
            other => return Err(Error::config(format!("unknown heuristic '{other}'"))),
        };
    }
    cfg.validate()
}

fn load_disk_instances(
    dataset_root: &Path,
    kind: DatasetKind,
    split: Split,
) -> Result<Vec<ProblemInstance>, Error> {
    let kind_dir = dataset_root.join(kind.name());
    let index = load_dataset_index(&kind_dir)?;
    index.load_split(&kind_dir, split)
}

fn instances_for(
    cfg: &ExperimentConfig,
    dataset_root: &Option<PathBuf>,
    kind: DatasetKind,
) -> Result<Vec<ProblemInstance>, Error> {
    match dataset_root {
        Some(root) => load_disk_instances(root, kind, cfg.dataset.split),
        None => make_dataset(
            kind,
            cfg.dataset.split,
            cfg.seed,
            cfg.dataset.instances_per_group,
            &cfg.dataset.params(),
        ),
    }
}

fn models_for(
    cfg: &ExperimentConfig,
    models_root: &Option<PathBuf>,
    kind: DatasetKind,
) -> Result<Vec<GPModel>, Error> {
    match models_root {
        Some(root) => {
            let dir = root.join(kind.name());
            let n = terra_risk::terrain::num_classes(kind);
            (0..n as u16).map(|c| load_model(&dir.join(model_file_name(c)))).collect()
        }
        None => train_models(kind, cfg.seed, &cfg.gp),
    }
}

fn likelihoods_for(
    cfg: &ExperimentConfig,
    external: &Option<PathBuf>,
    instances: &[ProblemInstance],
) -> Result<Vec<classifier::LikelihoodMap>, Error> {
    match external {
        Some(dir) => instances
            .iter()
            .map(|inst| {
                classifier::load_likelihoods(
                    &dir.join(format!("{}.f32", inst.id)),
                    inst.heightmap.width(),
                    inst.heightmap.height(),
                    inst.num_classes(),
                )
            })
            .collect(),
        None => build_likelihoods(instances, &cfg.classifier, cfg.seed),
    }
}

fn write_report(
    out_dir: &Path,
    rows: &[EvalRow],
    summaries: &[MetricsSummary],
) -> Result<(), Error> {
    std::fs::create_dir_all(out_dir)?;
    write_results_csv(&out_dir.join("results.csv"), rows)?;
    write_summary_json(&out_dir.join("summary.json"), summaries)?;
    Ok(())
}

// ── subcommands ──────────────────────────────────────────────────────────────

fn cmd_gen_dataset(
    config: ConfigArgs,
    kind: Option<String>,
    split: Option<String>,
    instances: Option<usize>,
    out: PathBuf,
    force: bool,
) -> Result<(), Error> {
    let mut cfg = config.load()?;
    if let Some(s) = &split {
        cfg.dataset.split = Split::parse(s)?;
    }
    let kinds = parse_kinds(&kind, &cfg)?;
    let per_group = match instances {
        Some(total) => {
            if total == 0 || total % cfg.dataset.groups != 0 {
                return Err(Error::param(format!(
                    "--instances {total} must be a positive multiple of {} groups",
                    cfg.dataset.groups
                )));
            }
            total / cfg.dataset.groups
        }
        None => cfg.dataset.instances_per_group,
    };

    for kind in kinds {
        let kind_dir = out.join(kind.name());
        if kind_dir.exists()
            && std::fs::read_dir(&kind_dir)?.next().is_some()
            && !force
        {
            return Err(Error::param(format!(
                "output directory {} is not empty (use --force to overwrite)",
                kind_dir.display()
            )));
        }
        let split = cfg.dataset.split;
        let instances = make_dataset(kind, split, cfg.seed, per_group, &cfg.dataset.params())?;
        save_dataset(&kind_dir, kind, cfg.seed, &[(split, &instances)])?;
        println!(
            "gen-dataset: {} {} -> {} instances at {}",
            kind.name(),
            split.name(),
            instances.len(),
            kind_dir.display()
        );
    }
    Ok(())
}

fn cmd_train(
    config: ConfigArgs,
    dataset: PathBuf,
    kind: Option<String>,
    out: PathBuf,
) -> Result<(), Error> {
    let cfg = config.load()?;
    let kinds = parse_kinds(&kind, &cfg)?;
    for kind in kinds {
        // The dataset must exist; its recorded seed anchors training unless
        // explicitly overridden.
        let index = load_dataset_index(&dataset.join(kind.name()))?;
        let seed = config.seed.unwrap_or(index.seed);
        let models = train_models(kind, seed, &cfg.gp)?;
        let dir = out.join(kind.name());
        std::fs::create_dir_all(&dir)?;
        for model in &models {
            save_model(&dir.join(model_file_name(model.class_id())), model)?;
        }
        println!("train: {} -> {} model files at {}", kind.name(), models.len(), dir.display());
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_plan(
    config: ConfigArgs,
    dataset: PathBuf,
    models_root: Option<PathBuf>,
    kind: Option<String>,
    methods: Option<String>,
    alpha: Option<f64>,
    heuristic: Option<String>,
    likelihoods: Option<PathBuf>,
    dump_costs: bool,
    out: PathBuf,
) -> Result<(), Error> {
    let mut cfg = config.load()?;
    apply_overrides(&mut cfg, &methods, alpha, &heuristic)?;
    let kinds = parse_kinds(&kind, &cfg)?;
    let suite = cfg.suite_config();

    for kind in kinds {
        let instances = load_disk_instances(&dataset, kind, cfg.dataset.split)?;
        let models = models_for(&cfg, &models_root, kind)?;
        let maps = likelihoods_for(&cfg, &likelihoods, &instances)?;
        let methods = cfg.methods()?;

        let kind_out = out.join(kind.name());
        std::fs::create_dir_all(&kind_out)?;
        let mut planned = 0usize;
        for (inst, lik) in instances.iter().zip(&maps) {
            let table = EdgePredictionTable::build(&inst.heightmap, &models);
            let one_hot = lik.one_hot_argmax();
            for method in &methods {
                let view = match method.model {
                    terra_risk::executor::ModelKind::Sgp => &one_hot,
                    terra_risk::executor::ModelKind::Mgp => lik,
                };
                let cost_map = build_cost_map(
                    &inst.heightmap,
                    &table,
                    view,
                    &suite.risk,
                    method.metric,
                    suite.u_ref,
                )?;
                let method_dir = kind_out.join(method.label().replace('+', "_"));
                std::fs::create_dir_all(&method_dir)?;
                if dump_costs {
                    cost_map.save(&method_dir.join(format!("{}_cost.f32", inst.id)))?;
                }
                let outcome =
                    astar(&inst.heightmap, &cost_map, suite.start, suite.goal, suite.heuristic)?;
                let record = match outcome {
                    PlanOutcome::Path(ref path) => {
                        planned += 1;
                        Some(PathRecord::new(&inst.id, &method.label(), path, &cost_map))
                    }
                    PlanOutcome::NoSolution => None,
                };
                let file = method_dir.join(format!("{}.json", inst.id));
                std::fs::write(&file, serde_json::to_vec_pretty(&record)?)?;
            }
        }
        println!("plan: {} -> {planned} paths under {}", kind.name(), kind_out.display());
    }
    Ok(())
}

fn cmd_execute(
    config: ConfigArgs,
    dataset: PathBuf,
    paths: PathBuf,
    kind: Option<String>,
    out: PathBuf,
) -> Result<(), Error> {
    let cfg = config.load()?;
    let kinds = parse_kinds(&kind, &cfg)?;
    let suite = cfg.suite_config();

    for kind in kinds {
        let instances = load_disk_instances(&dataset, kind, cfg.dataset.split)?;
        let kind_paths = paths.join(kind.name());
        let mut method_dirs: Vec<PathBuf> = std::fs::read_dir(&kind_paths)?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.is_dir())
            .collect();
        method_dirs.sort();
        if method_dirs.is_empty() {
            return Err(Error::data(format!("no planned methods under {}", kind_paths.display())));
        }

        let mut rows = Vec::new();
        let mut summaries = Vec::new();
        for dir in &method_dirs {
            let label = dir
                .file_name()
                .and_then(|n| n.to_str())
                .unwrap_or_default()
                .replace('_', "+");
            let mut method_rows = Vec::new();
            for inst in &instances {
                let file = dir.join(format!("{}.json", inst.id));
                let text = std::fs::read_to_string(&file).map_err(|e| {
                    Error::data(format!("{}: {e} (plan missing?)", file.display()))
                })?;
                let record: Option<PathRecord> = serde_json::from_str(&text)?;
                let row = match record {
                    None => EvalRow {
                        instance: inst.id.clone(),
                        method: label.clone(),
                        alpha: suite.risk.alpha,
                        solved: false,
                        success: false,
                        planned_cost_s: None,
                        total_time_s: None,
                        max_slip_pct: None,
                    },
                    Some(rec) => {
                        let path = terra_risk::planner::Path {
                            vertices: rec
                                .vertices
                                .iter()
                                .map(|&(x, y)| terra_risk::grid::Cell::new(x, y))
                                .collect(),
                            total_cost: rec.total_cost,
                        };
                        let exec = execute_path(inst, &path, suite.u_ref)?;
                        EvalRow {
                            instance: inst.id.clone(),
                            method: label.clone(),
                            alpha: suite.risk.alpha,
                            solved: true,
                            success: exec.success,
                            planned_cost_s: Some(rec.total_cost),
                            total_time_s: exec.success.then_some(exec.total_time),
                            max_slip_pct: Some(exec.max_slip_pct),
                        }
                    }
                };
                method_rows.push(row);
            }
            summaries.push(terra_risk::executor::summarize(
                kind.name(),
                &label,
                suite.risk.alpha,
                &method_rows,
            ));
            rows.extend(method_rows);
        }
        write_report(&out.join(kind.name()), &rows, &summaries)?;
        println!("execute: {} -> {}", kind.name(), out.join(kind.name()).display());
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_evaluate(
    config: ConfigArgs,
    dataset: Option<PathBuf>,
    models_root: Option<PathBuf>,
    kind: Option<String>,
    methods: Option<String>,
    alpha: Option<f64>,
    heuristic: Option<String>,
    likelihoods: Option<PathBuf>,
    out: PathBuf,
) -> Result<(), Error> {
    let mut cfg = config.load()?;
    apply_overrides(&mut cfg, &methods, alpha, &heuristic)?;
    let kinds = parse_kinds(&kind, &cfg)?;
    let suite = cfg.suite_config();

    let mut all_summaries = Vec::new();
    for kind in kinds {
        let instances = instances_for(&cfg, &dataset, kind)?;
        let models = models_for(&cfg, &models_root, kind)?;
        let maps = likelihoods_for(&cfg, &likelihoods, &instances)?;
        let report = evaluate_suite(
            kind.name(),
            &instances,
            &maps,
            &models,
            &cfg.methods()?,
            &suite,
        )?;
        write_report(&out.join(kind.name()), &report.rows, &report.summaries)?;
        for s in &report.summaries {
            println!(
                "{:>4} {:>9}  solved {:5.1}%  success {:5.1}%",
                s.dataset, s.method, s.solved_rate_pct, s.success_rate_pct
            );
        }
        all_summaries.extend(report.summaries);
    }
    std::fs::create_dir_all(&out)?;
    write_summary_json(&out.join("summary.json"), &all_summaries)?;
    Ok(())
}

fn cmd_sweep_alpha(
    config: ConfigArgs,
    dataset: Option<PathBuf>,
    models_root: Option<PathBuf>,
    kind: Option<String>,
    alphas: Option<String>,
    out: PathBuf,
) -> Result<(), Error> {
    let mut cfg = config.load()?;
    if let Some(list) = &alphas {
        cfg.evaluation.alphas = list
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::config(format!("bad alpha '{s}': {e}")))
            })
            .collect::<Result<_, _>>()?;
    }
    cfg.validate()?;
    let kind = match &kind {
        Some(k) => DatasetKind::parse(k)?,
        None => DatasetKind::Aa,
    };
    let suite = cfg.suite_config();

    let instances = instances_for(&cfg, &dataset, kind)?;
    let models = models_for(&cfg, &models_root, kind)?;
    let maps = likelihoods_for(&cfg, &None, &instances)?;
    let reports = alpha_sweep(
        kind.name(),
        &instances,
        &maps,
        &models,
        &cfg.evaluation.alphas,
        &suite,
    )?;

    let mut summaries = Vec::new();
    for report in &reports {
        let alpha = report.summaries[0].alpha;
        write_report(
            &out.join(kind.name()).join(format!("alpha_{alpha}")),
            &report.rows,
            &report.summaries,
        )?;
        let s = &report.summaries[0];
        println!(
            "alpha {:4}: solved {:5.1}%  success {:5.1}%",
            alpha, s.solved_rate_pct, s.success_rate_pct
        );
        summaries.extend(report.summaries.clone());
    }
    std::fs::create_dir_all(out.join(kind.name()))?;
    write_summary_json(&out.join(kind.name()).join("sweep_summary.json"), &summaries)?;
    Ok(())
}
