use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use acrg_core::autodiff::checkpoint::{load_params, save_params};
use acrg_core::autodiff::gradcheck::GradCheckConfig;
use acrg_core::autodiff::{ParamSet, Tensor};
use acrg_core::checks::gradient_suite;
use acrg_core::eval::{format_table, step_records, EvalReport, Metrics};
use acrg_core::policy::AgentModel;
use acrg_core::repr::Variant;
use acrg_core::run::{evaluate, pretrain, train, Checkpoint, ExperimentConfig, PolicyKind, Suite, TrainOptions};
use acrg_core::sim::{Episode, RoomLayout, TrajectoryLog};
use acrg_core::training::generate_expert_dataset;
use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "acrg", about = "Relation-graph object navigation on a gridworld")]
struct Cli {
    /// Experiment config (TOML). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the experiment seed (and the evaluation seed for `eval`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct SuiteArgs {
    /// Suite directory written by `gen-layouts`; generated from the config when omitted.
    #[arg(long)]
    layouts: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate the train / test / validation layouts.
    GenLayouts {
        #[arg(long)]
        out: PathBuf,
    },
    /// Write expert (observation, action) pairs for the training layouts.
    ExpertData {
        #[command(flatten)]
        suite: SuiteArgs,
        /// JSON-lines file of samples.
        #[arg(long)]
        out: PathBuf,
    },
    /// Imitation pretraining only.
    Pretrain {
        #[command(flatten)]
        suite: SuiteArgs,
        #[arg(long)]
        variant: Option<VariantArg>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pretraining plus actor-critic training, then evaluation on the test split.
    Train {
        #[command(flatten)]
        suite: SuiteArgs,
        #[arg(long)]
        variant: Option<VariantArg>,
        /// Training episode budget.
        #[arg(long)]
        episodes: Option<u64>,
        /// Workers take turns in one thread; results are bit-reproducible.
        #[arg(long)]
        sync: bool,
        /// Resume from this checkpoint.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a policy and write the report, table and step log.
    Eval {
        #[command(flatten)]
        suite: SuiteArgs,
        #[arg(long, value_enum, default_value = "trained")]
        policy: PolicyArg,
        /// `checkpoint.json` or `params.txt`; required for the trained policy.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        variant: Option<VariantArg>,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train and evaluate every representation variant.
    Ablate {
        #[command(flatten)]
        suite: SuiteArgs,
        /// Training episode budget per run.
        #[arg(long)]
        episodes: Option<u64>,
        /// Number of seeds per variant, starting at the config seed.
        #[arg(long, default_value_t = 3)]
        seeds: u64,
        #[arg(long)]
        sync: bool,
        /// Restrict to these variants.
        #[arg(long, value_delimiter = ',')]
        variant: Vec<VariantArg>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Finite-difference check of every operation and the composed model.
    Gradcheck,
    /// Dump the adjacency and attention maps for one state.
    Inspect {
        #[command(flatten)]
        suite: SuiteArgs,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        variant: Option<VariantArg>,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
        /// Index into the split.
        #[arg(long, default_value_t = 0)]
        layout: usize,
        /// Target category; the layout's first target when omitted.
        #[arg(long)]
        target: Option<usize>,
        /// Seed of the start state.
        #[arg(long, default_value_t = 0)]
        state_seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Trained,
    Random,
    Expert,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Test,
    Val,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Acrg,
    Ohrg,
    Atdrg,
    Multidepth,
    Vertical,
}

impl VariantArg {
    fn variant(self) -> Variant {
        match self {
            VariantArg::Acrg => Variant::Acrg,
            VariantArg::Ohrg => Variant::Ohrg,
            VariantArg::Atdrg => Variant::Atdrg,
            VariantArg::Multidepth => Variant::Multidepth,
            VariantArg::Vertical => Variant::Vertical,
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn apply_variant(cfg: ExperimentConfig, v: Option<VariantArg>) -> ExperimentConfig {
    match v {
        Some(v) => cfg.with_variant(v.variant()),
        None => cfg,
    }
}

fn load_suite(args: &SuiteArgs, cfg: &ExperimentConfig) -> Result<Suite> {
    let suite = match &args.layouts {
        Some(dir) => Suite::load(dir).with_context(|| format!("loading layouts from {}", dir.display()))?,
        None => Suite::generate(cfg)?,
    };
    suite.check_disjoint()?;
    Ok(suite)
}

fn split(suite: &Suite, s: SplitArg) -> &[RoomLayout] {
    match s {
        SplitArg::Train => &suite.train,
        SplitArg::Test => &suite.test,
        SplitArg::Val => &suite.val,
    }
}

/// Reads either a training checkpoint or a plain parameter file.
fn load_trained(path: &Path) -> Result<ParamSet> {
    if path.extension().is_some_and(|e| e == "json") {
        Ok(Checkpoint::load(path)?.params()?)
    } else {
        Ok(load_params(path)?)
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Writes `report.json`, `table.txt` and `trajectories.jsonl` into `dir`.
fn write_report(dir: &Path, report: &EvalReport, layouts: &[RoomLayout], cfg: &ExperimentConfig) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_json(&dir.join("report.json"), report)?;
    fs::write(dir.join("table.txt"), report.table())?;
    let path = dir.join("trajectories.jsonl");
    if path.exists() {
        fs::remove_file(&path)?;
    }
    let mut log = TrajectoryLog::open(&path)?;
    for r in step_records(layouts, &cfg.sim, &report.traces)? {
        log.append(&r)?;
    }
    log.flush()?;
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    let cfg = load_config(&cli)?;
    match cli.cmd {
        Cmd::GenLayouts { out } => {
            cfg.validate()?;
            let suite = Suite::generate(&cfg)?;
            suite.check_disjoint()?;
            suite.save(&out)?;
            println!(
                "wrote {} train, {} test and {} val layouts to {}",
                suite.train.len(),
                suite.test.len(),
                suite.val.len(),
                out.display()
            );
        }
        Cmd::ExpertData { suite, out } => {
            cfg.validate()?;
            let suite = load_suite(&suite, &cfg)?;
            let samples = generate_expert_dataset(&suite.train, &cfg.sim, cfg.imitation.episodes_per_layout, cfg.seed);
            let mut f = std::io::BufWriter::new(fs::File::create(&out).with_context(|| out.display().to_string())?);
            for s in &samples {
                let line = serde_json::json!({
                    "layout_id": s.layout_id,
                    "target": s.target,
                    "pose": s.pose,
                    "action": s.action,
                });
                writeln!(f, "{line}")?;
            }
            f.flush()?;
            println!("wrote {} expert samples to {}", samples.len(), out.display());
        }
        Cmd::Pretrain { suite, variant, out } => {
            let cfg = apply_variant(cfg, variant);
            cfg.validate()?;
            ensure!(cfg.imitation.enabled, "imitation pretraining is disabled in the config");
            let suite = load_suite(&suite, &cfg)?;
            let (model, mut params) = AgentModel::init(&cfg.repr, &cfg.policy, cfg.seed);
            let records = pretrain(&cfg, &suite, &model, &mut params)?;
            fs::create_dir_all(&out)?;
            save_params(&params, &out.join("params.txt"))?;
            write_json(&out.join("pretrain.json"), &records)?;
            if let Some(r) = records.last() {
                println!("{}", serde_json::to_string(r)?);
            }
        }
        Cmd::Train { suite, variant, episodes, sync, checkpoint, out } => {
            let mut cfg = apply_variant(cfg, variant);
            if let Some(n) = episodes {
                cfg.a3c.episodes = n;
            }
            cfg.a3c.sync |= sync;
            cfg.validate()?;
            let suite = load_suite(&suite, &cfg)?;
            let resume = checkpoint.map(|p| Checkpoint::load(&p)).transpose()?;
            fs::create_dir_all(&out)?;
            fs::write(out.join("config.toml"), cfg.to_toml())?;
            let opts = TrainOptions { out_dir: Some(out.clone()), resume, max_rounds: None };
            let outcome = train(&cfg, &suite, &opts)?;
            let report = evaluate(&cfg, &suite.test, PolicyKind::Trained, Some((&outcome.model, &outcome.params)))?;
            write_report(&out.join("eval"), &report, &suite.test, &cfg)?;
            print!("{}", report.table());
        }
        Cmd::Eval { suite, policy, checkpoint, variant, episodes, split: which, out } => {
            let mut cfg = apply_variant(cfg, variant);
            if let Some(seed) = cli.seed {
                cfg.eval.seed = seed;
            }
            if let Some(n) = episodes {
                cfg.eval.episodes = n;
            }
            cfg.validate()?;
            let suite = load_suite(&suite, &cfg)?;
            let layouts = split(&suite, which);
            let report = match policy {
                PolicyArg::Trained => {
                    let Some(path) = checkpoint else { bail!("--policy trained needs --checkpoint") };
                    let params = load_trained(&path)?;
                    let model = AgentModel::bind(&cfg.repr, &cfg.policy, &params)
                        .context("checkpoint does not match the configured model")?;
                    evaluate(&cfg, layouts, PolicyKind::Trained, Some((&model, &params)))?
                }
                PolicyArg::Random => evaluate(&cfg, layouts, PolicyKind::Random, None)?,
                PolicyArg::Expert => evaluate(&cfg, layouts, PolicyKind::Expert, None)?,
            };
            if let Some(dir) = &out {
                write_report(dir, &report, layouts, &cfg)?;
            }
            if report.l5.is_none() {
                log::warn!("no episode has an optimal length of at least 5");
            }
            if report.excluded_unreachable > 0 {
                log::warn!("{} episodes excluded: target unreachable from the start", report.excluded_unreachable);
            }
            print!("{}", report.table());
        }
        Cmd::Ablate { suite, episodes, seeds, sync, variant, out } => {
            ensure!(seeds > 0, "--seeds must be positive");
            let variants: Vec<Variant> =
                if variant.is_empty() { Variant::ALL.to_vec() } else { variant.iter().map(|v| v.variant()).collect() };
            let mut rows = Vec::new();
            let mut detail = Vec::new();
            for v in variants {
                let mut per_seed = Vec::new();
                for s in 0..seeds {
                    let mut c = cfg.with_variant(v);
                    c.seed = cfg.seed + s;
                    if let Some(n) = episodes {
                        c.a3c.episodes = n;
                    }
                    c.a3c.sync |= sync;
                    c.validate()?;
                    let suite = load_suite(&suite, &c)?;
                    let dir = out.join(v.name()).join(format!("seed{}", c.seed));
                    let opts = TrainOptions { out_dir: Some(dir.clone()), resume: None, max_rounds: None };
                    let outcome = train(&c, &suite, &opts)?;
                    let report =
                        evaluate(&c, &suite.test, PolicyKind::Trained, Some((&outcome.model, &outcome.params)))?;
                    write_report(&dir.join("eval"), &report, &suite.test, &c)?;
                    log::info!(
                        "{} seed {}: success {:.3} spl {:.3}",
                        v.name(),
                        c.seed,
                        report.all.success,
                        report.all.spl
                    );
                    detail.push(serde_json::json!({
                        "variant": v.name(), "seed": c.seed, "all": report.all, "l5": report.l5,
                    }));
                    per_seed.push(report);
                }
                rows.push((
                    v.name().to_string(),
                    mean(per_seed.iter().map(|r| Some(r.all))),
                    mean(per_seed.iter().map(|r| r.l5)),
                ));
            }
            let rows: Vec<(String, Metrics, Option<Metrics>)> =
                rows.into_iter().map(|(n, a, l)| (n, a.expect("at least one seed"), l)).collect();
            let table = format_table(&rows);
            fs::create_dir_all(&out)?;
            fs::write(out.join("ablation.txt"), &table)?;
            write_json(&out.join("ablation.json"), &detail)?;
            print!("{table}");
        }
        Cmd::Gradcheck => {
            let gc = GradCheckConfig {
                seed: cli.seed.unwrap_or(GradCheckConfig::default().seed),
                ..GradCheckConfig::default()
            };
            let checks = gradient_suite(&gc)?;
            let mut failed = 0;
            for c in &checks {
                let coords: usize = c.report.blocks.iter().map(|b| b.checked).sum();
                let status = if c.passed() { "ok" } else { "FAIL" };
                println!(
                    "{status:<4} {:<32} max rel err {:.2e} over {coords} coordinates",
                    c.name,
                    c.report.max_rel_err()
                );
                for b in c.report.failures() {
                    println!("     block {} checked {} max rel err {:.2e}", b.name, b.checked, b.max_rel_err);
                }
                failed += usize::from(!c.passed());
            }
            println!(
                "{} of {} checks passed (eps {:e}, tol {:e})",
                checks.len() - failed,
                checks.len(),
                gc.eps,
                gc.tol
            );
            if failed > 0 {
                return Ok(ExitCode::FAILURE);
            }
        }
        Cmd::Inspect { suite, checkpoint, variant, split: which, layout, target, state_seed, out } => {
            let cfg = apply_variant(cfg, variant);
            cfg.validate()?;
            let suite = load_suite(&suite, &cfg)?;
            let layouts = split(&suite, which);
            let Some(layout) = layouts.get(layout) else {
                bail!("layout index {layout} out of range ({})", layouts.len())
            };
            let target = target.unwrap_or(layout.targets()[0]);
            let (model, params) = match checkpoint {
                Some(path) => {
                    let params = load_trained(&path)?;
                    (AgentModel::bind(&cfg.repr, &cfg.policy, &params)?, params)
                }
                None => AgentModel::init(&cfg.repr, &cfg.policy, cfg.seed),
            };
            let (ep, obs) = Episode::reset(layout, &cfg.sim, target, state_seed)?;
            let dump = model.repr.dump(&params, &obs, target)?;
            let maps: Vec<(&str, &Tensor)> = [
                ("a_h", dump.a_h.as_ref()),
                ("a_d", dump.a_d.as_ref()),
                ("a_hat", Some(&dump.a_hat)),
                ("attention", Some(&dump.attention)),
                ("state", Some(&dump.state)),
            ]
            .into_iter()
            .filter_map(|(n, t)| t.map(|t| (n, t)))
            .collect();
            match out {
                Some(path) => {
                    let mut value = serde_json::json!({ "layout_id": layout.id, "target": target, "pose": ep.pose() });
                    for (name, t) in &maps {
                        value[*name] = serde_json::json!(rows(t));
                    }
                    write_json(&path, &value)?;
                }
                None => {
                    let mut text = format!("layout {} target {target} pose {:?}\n", layout.id, ep.pose());
                    for (name, t) in &maps {
                        text += &format!("{name} ({}x{})\n", t.rows(), t.cols());
                        for row in rows(t) {
                            let cells: Vec<String> = row.iter().map(|v| format!("{v:7.3}")).collect();
                            text += &cells.join(" ");
                            text.push('\n');
                        }
                    }
                    // a closed pipe is not an error worth reporting
                    let _ = std::io::stdout().write_all(text.as_bytes());
                }
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn rows(t: &Tensor) -> Vec<Vec<f64>> {
    t.data().chunks(t.cols().max(1)).map(<[f64]>::to_vec).collect()
}

/// Per-field mean over seeds; `None` if any seed lacks the subset.
fn mean(items: impl Iterator<Item = Option<Metrics>>) -> Option<Metrics> {
    let items: Option<Vec<Metrics>> = items.collect();
    let items = items?;
    if items.is_empty() {
        return None;
    }
    let n = items.len() as f64;
    Some(Metrics {
        episodes: items.iter().map(|m| m.episodes).sum(),
        success: items.iter().map(|m| m.success).sum::<f64>() / n,
        spl: items.iter().map(|m| m.spl).sum::<f64>() / n,
    })
}
