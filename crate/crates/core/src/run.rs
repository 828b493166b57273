//! Experiment configuration, layout suites, and the two-stage training driver
//! with round-based checkpoints and a line-delimited report.

use std::collections::VecDeque;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autodiff::checkpoint::{params_from_str, params_to_string};
use crate::autodiff::{AdamConfig, AdamState, ParamSet};
use crate::eval::{run_episodes, EvalReport, ExpertNavigator, Metrics, Navigator, RandomNavigator, TrainedNavigator};
use crate::policy::{AgentModel, PolicyConfig, SelectMode};
use crate::repr::{ReprConfig, Variant};
use crate::sim::{generate_suite, GeneratorConfig, RoomLayout, SimConfig};
use crate::training::{
    generate_expert_dataset, pretrain_imitation, A3cConfig, ImitationConfig, SegmentLoss, SharedParamStore, TrainError,
    Worker,
};

pub const CONFIG_VERSION: u32 = 1;
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SuiteConfig {
    pub train_layouts: usize,
    pub test_layouts: usize,
    pub val_layouts: usize,
    pub train_seed: u64,
    pub test_seed: u64,
    pub val_seed: u64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig { train_layouts: 10, test_layouts: 5, val_layouts: 3, train_seed: 11, test_seed: 12, val_seed: 13 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub episodes: usize,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { episodes: 250, seed: 99 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Episodes per training round; workers meet and a checkpoint is written at every round end.
    pub checkpoint_every: u64,
    /// Greedy episodes on the validation layouts at every round end.
    pub validation_episodes: usize,
    /// Window of the success moving average.
    pub success_window: usize,
    /// Episodes between A3C report records.
    pub log_every: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig { checkpoint_every: 2_000, validation_episodes: 60, success_window: 500, log_every: 100 }
    }
}

/// Everything one experiment depends on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub version: u32,
    pub seed: u64,
    pub sim: SimConfig,
    pub generator: GeneratorConfig,
    pub suite: SuiteConfig,
    pub repr: ReprConfig,
    pub policy: PolicyConfig,
    pub imitation: ImitationConfig,
    pub a3c: A3cConfig,
    pub eval: EvalConfig,
    pub run: RunConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            version: CONFIG_VERSION,
            seed: 1,
            sim: SimConfig::default(),
            generator: GeneratorConfig::default(),
            suite: SuiteConfig::default(),
            repr: ReprConfig::default(),
            policy: PolicyConfig::default(),
            imitation: ImitationConfig::default(),
            a3c: A3cConfig::default(),
            eval: EvalConfig::default(),
            run: RunConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, TrainError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| TrainError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, TrainError> {
        let text = fs::read_to_string(path).map_err(|e| TrainError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Rejects inconsistent settings before any work starts.
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::Config(m));
        if self.version != CONFIG_VERSION {
            return bad(format!("config version {} (expected {CONFIG_VERSION})", self.version));
        }
        self.sim.validate().map_err(TrainError::Config)?;
        self.generator.validate().map_err(TrainError::Config)?;
        self.repr.validate().map_err(TrainError::Config)?;
        self.imitation.validate().map_err(TrainError::Config)?;
        self.a3c.validate().map_err(TrainError::Config)?;
        if self.repr.categories != self.generator.categories {
            return bad(format!(
                "repr.categories {} differs from generator.categories {}",
                self.repr.categories, self.generator.categories
            ));
        }
        if self.repr.ego_k != self.sim.ego_k {
            return bad(format!("repr.ego_k {} differs from sim.ego_k {}", self.repr.ego_k, self.sim.ego_k));
        }
        if self.suite.train_layouts == 0 || self.suite.test_layouts == 0 {
            return bad("the suite needs training and test layouts".into());
        }
        let seeds = [self.suite.train_seed, self.suite.test_seed, self.suite.val_seed];
        if seeds[0] == seeds[1] || (self.suite.val_layouts > 0 && (seeds[2] == seeds[0] || seeds[2] == seeds[1])) {
            return bad("train, test and validation suites need distinct seeds".into());
        }
        if self.run.checkpoint_every == 0 || self.run.success_window == 0 || self.run.log_every == 0 {
            return bad("run.checkpoint_every, run.success_window and run.log_every must be positive".into());
        }
        if self.eval.episodes == 0 {
            return bad("eval.episodes must be positive".into());
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex(&Sha256::digest(json))
    }

    /// A copy with the representation switched to `variant`.
    pub fn with_variant(&self, variant: Variant) -> Self {
        let mut cfg = self.clone();
        variant.apply(&mut cfg.repr);
        cfg
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> TrainError {
    TrainError::Io(format!("{}: {e}", path.display()))
}

/// Training, held-out test and validation layouts.
#[derive(Clone, Debug, PartialEq)]
pub struct Suite {
    pub train: Vec<RoomLayout>,
    pub test: Vec<RoomLayout>,
    pub val: Vec<RoomLayout>,
}

const SPLITS: [&str; 3] = ["train", "test", "val"];

impl Suite {
    pub fn generate(cfg: &ExperimentConfig) -> Result<Suite, TrainError> {
        let s = &cfg.suite;
        let suite = Suite {
            train: generate_suite(&cfg.generator, &cfg.sim, s.train_layouts, 0, s.train_seed),
            test: generate_suite(&cfg.generator, &cfg.sim, s.test_layouts, 10_000, s.test_seed),
            val: generate_suite(&cfg.generator, &cfg.sim, s.val_layouts, 20_000, s.val_seed),
        };
        suite.check_disjoint()?;
        Ok(suite)
    }

    /// Layout ids and rooms must not repeat across splits.
    pub fn check_disjoint(&self) -> Result<(), TrainError> {
        let splits = [&self.train, &self.test, &self.val];
        for (i, a) in splits.iter().enumerate() {
            for (j, b) in splits.iter().enumerate().skip(i + 1) {
                for x in a.iter() {
                    if let Some(y) = b.iter().find(|y| y.id == x.id || y.same_room(x)) {
                        return Err(TrainError::Config(format!(
                            "{} layout {} overlaps {} layout {}",
                            SPLITS[i], x.id, SPLITS[j], y.id
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    fn split(&self, i: usize) -> &[RoomLayout] {
        [&self.train, &self.test, &self.val][i]
    }

    /// Writes `dir/{train,test,val}/layout_<id>.txt`.
    pub fn save(&self, dir: &Path) -> Result<(), TrainError> {
        for (i, name) in SPLITS.iter().enumerate() {
            let sub = dir.join(name);
            fs::create_dir_all(&sub).map_err(|e| io_err(&sub, e))?;
            for l in self.split(i) {
                l.save(&sub.join(format!("layout_{:05}.txt", l.id)))?;
            }
        }
        Ok(())
    }

    /// Reads a directory written by [`Suite::save`]; a missing `val` split is empty.
    pub fn load(dir: &Path) -> Result<Suite, TrainError> {
        let mut splits: Vec<Vec<RoomLayout>> = Vec::new();
        for name in SPLITS {
            let sub = dir.join(name);
            let mut layouts = Vec::new();
            if sub.is_dir() {
                let mut paths: Vec<PathBuf> = fs::read_dir(&sub)
                    .map_err(|e| io_err(&sub, e))?
                    .filter_map(|e| e.ok().map(|e| e.path()))
                    .filter(|p| p.extension().is_some_and(|x| x == "txt"))
                    .collect();
                paths.sort();
                for p in paths {
                    layouts.push(RoomLayout::load(&p)?);
                }
            } else if name != "val" {
                return Err(io_err(&sub, "missing layout directory"));
            }
            splits.push(layouts);
        }
        let val = splits.pop().unwrap_or_default();
        let test = splits.pop().unwrap_or_default();
        let train = splits.pop().unwrap_or_default();
        let suite = Suite { train, test, val };
        if suite.train.is_empty() || suite.test.is_empty() {
            return Err(io_err(dir, "training and test splits must be non-empty"));
        }
        suite.check_disjoint()?;
        Ok(suite)
    }
}

/// One line of the training report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Record {
    Start {
        fingerprint: String,
        pretraining: bool,
        resumed_round: Option<u64>,
    },
    ImitationEpoch {
        epoch: usize,
        loss: f64,
    },
    Imitation {
        initial_loss: f64,
        final_loss: f64,
        train_accuracy: f64,
        holdout_accuracy: Option<f64>,
        train_samples: usize,
        holdout_samples: usize,
    },
    A3c {
        episode: u64,
        updates: u64,
        success_ma: f64,
        policy_loss: f64,
        value_loss: f64,
        entropy: f64,
        total_loss: f64,
        dropped_segments: u64,
    },
    Validation {
        episode: u64,
        round: u64,
        success: f64,
        spl: f64,
    },
    Summary {
        pretraining_disabled: bool,
        episodes: u64,
        updates: u64,
        validation_success: Option<f64>,
    },
}

/// Parameters, optimizer state and counters at a round boundary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub fingerprint: String,
    /// Completed A3C rounds.
    pub round: u64,
    pub episodes: u64,
    pub updates: u64,
    pub dropped_segments: u64,
    pub recent_success: Vec<bool>,
    pub pretrained: bool,
    pub params: String,
    pub adam: AdamState,
}

impl Checkpoint {
    pub fn params(&self) -> Result<ParamSet, TrainError> {
        Ok(params_from_str(&self.params)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), TrainError> {
        let text = serde_json::to_string(self).map_err(|e| io_err(path, e))?;
        // write-then-rename so a crash never leaves a torn checkpoint
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, text).map_err(|e| io_err(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| io_err(path, e))
    }

    pub fn load(path: &Path) -> Result<Checkpoint, TrainError> {
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        let ck: Checkpoint = serde_json::from_str(&text).map_err(|e| io_err(path, e))?;
        if ck.version != CHECKPOINT_VERSION {
            return Err(io_err(path, format!("checkpoint version {} unsupported", ck.version)));
        }
        Ok(ck)
    }
}

/// Where and how far to train.
#[derive(Clone, Debug, Default)]
pub struct TrainOptions {
    /// Receives `report.jsonl`, `checkpoint.json` and `params.txt`.
    pub out_dir: Option<PathBuf>,
    pub resume: Option<Checkpoint>,
    /// Stop after this many rounds in total (for tests and staged runs).
    pub max_rounds: Option<u64>,
}

pub struct TrainOutcome {
    pub model: AgentModel,
    pub params: ParamSet,
    pub checkpoint: Checkpoint,
    pub records: Vec<Record>,
    /// Every committed segment's loss in commit order.
    pub segment_losses: Vec<SegmentLoss>,
}

/// Mixes the run seed, round and worker id into one worker seed.
pub fn worker_seed(seed: u64, round: u64, worker: usize) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(round.to_le_bytes());
    h.update((worker as u64).to_le_bytes());
    u64::from_le_bytes(h.finalize()[..8].try_into().expect("8 bytes"))
}

struct Progress {
    recent: VecDeque<bool>,
    window: usize,
    log_every: u64,
    next_log: u64,
    acc: SegmentLoss,
    acc_segments: usize,
    dropped: u64,
    records: Vec<Record>,
    losses: Vec<SegmentLoss>,
}

impl Progress {
    fn success_ma(&self) -> f64 {
        if self.recent.is_empty() {
            0.0
        } else {
            self.recent.iter().filter(|&&s| s).count() as f64 / self.recent.len() as f64
        }
    }

    fn segment(&mut self, loss: SegmentLoss) {
        self.losses.push(loss);
        self.acc.policy += loss.policy;
        self.acc.value += loss.value;
        self.acc.entropy += loss.entropy / loss.steps.max(1) as f64;
        self.acc.total += loss.total;
        self.acc_segments += 1;
    }

    fn episode(&mut self, success: bool, episode: u64, updates: u64) {
        self.recent.push_back(success);
        while self.recent.len() > self.window {
            self.recent.pop_front();
        }
        if episode >= self.next_log {
            self.next_log = (episode / self.log_every + 1) * self.log_every;
            let n = self.acc_segments.max(1) as f64;
            self.records.push(Record::A3c {
                episode,
                updates,
                success_ma: self.success_ma(),
                policy_loss: self.acc.policy / n,
                value_loss: self.acc.value / n,
                entropy: self.acc.entropy / n,
                total_loss: self.acc.total / n,
                dropped_segments: self.dropped,
            });
            self.acc = SegmentLoss::default();
            self.acc_segments = 0;
        }
    }
}

/// Consecutive dropped segments tolerated before a worker gives up.
const MAX_CONSECUTIVE_DROPS: usize = 50;

struct RoundCtx<'a> {
    model: &'a AgentModel,
    store: &'a SharedParamStore,
    progress: &'a Mutex<Progress>,
    round_end: u64,
}

/// Runs segments until one is committed, dropping non-finite ones.
fn commit_one(ctx: &RoundCtx<'_>, worker: &mut Worker<'_>) -> Result<(), TrainError> {
    let mut drops = 0;
    loop {
        let snapshot = ctx.store.snapshot();
        let seg = match worker.run_segment(ctx.model, &snapshot) {
            Ok(seg) => seg,
            Err(TrainError::Diverged(msg)) => {
                drop_segment(ctx, worker, &mut drops, &msg)?;
                continue;
            }
            Err(e) => return Err(e),
        };
        drop(snapshot);
        let updates = match ctx.store.commit(worker.id, &seg.grads) {
            Ok(u) => u,
            Err(TrainError::Autodiff(e)) => {
                drop_segment(ctx, worker, &mut drops, &e.to_string())?;
                continue;
            }
            Err(e) => return Err(e),
        };
        let mut progress = ctx.progress.lock().unwrap_or_else(|e| e.into_inner());
        progress.segment(seg.loss);
        for trace in &seg.finished {
            let episode = ctx.store.add_episodes(1);
            progress.episode(trace.success, episode, updates);
        }
        return Ok(());
    }
}

fn drop_segment(ctx: &RoundCtx<'_>, worker: &mut Worker<'_>, drops: &mut usize, msg: &str) -> Result<(), TrainError> {
    log::warn!("worker {} dropped a segment: {msg}", worker.id);
    worker.abandon_episode();
    ctx.progress.lock().unwrap_or_else(|e| e.into_inner()).dropped += 1;
    *drops += 1;
    if *drops >= MAX_CONSECUTIVE_DROPS {
        return Err(TrainError::Diverged(format!("worker {}: {drops} consecutive non-finite segments", worker.id)));
    }
    Ok(())
}

/// Greedy Success and SPL on `layouts`.
pub fn validate_policy(
    model: &AgentModel,
    params: &ParamSet,
    layouts: &[RoomLayout],
    sim: &SimConfig,
    episodes: usize,
    seed: u64,
) -> Result<Metrics, TrainError> {
    let mut nav = TrainedNavigator::new(model, params, SelectMode::Greedy);
    let run = run_episodes(&mut nav, layouts, sim, episodes, seed).map_err(|e| TrainError::Config(e.to_string()))?;
    Metrics::of(&run.traces).map_err(|e| TrainError::Config(e.to_string()))
}

struct ReportWriter {
    file: Option<fs::File>,
    path: PathBuf,
}

impl ReportWriter {
    fn write(&mut self, records: &[Record]) -> Result<(), TrainError> {
        if let Some(f) = &mut self.file {
            for r in records {
                let line = serde_json::to_string(r).map_err(|e| io_err(&self.path, e))?;
                writeln!(f, "{line}").map_err(|e| io_err(&self.path, e))?;
            }
            f.flush().map_err(|e| io_err(&self.path, e))?;
        }
        Ok(())
    }
}

/// Imitation pretraining (unless disabled or resuming) followed by A3C in
/// rounds of `run.checkpoint_every` episodes.
pub fn train(cfg: &ExperimentConfig, suite: &Suite, opts: &TrainOptions) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    suite.check_disjoint()?;
    if suite.train.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let fingerprint = cfg.fingerprint();
    if let Some(ck) = &opts.resume {
        if ck.fingerprint != fingerprint {
            return Err(TrainError::Config("checkpoint was written under a different config".into()));
        }
    }
    let mut writer = ReportWriter { file: None, path: PathBuf::new() };
    if let Some(dir) = &opts.out_dir {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        let path = dir.join("report.jsonl");
        let file = fs::OpenOptions::new()
            .create(true)
            .append(opts.resume.is_some())
            .write(true)
            .truncate(opts.resume.is_none())
            .open(&path)
            .map_err(|e| io_err(&path, e))?;
        writer = ReportWriter { file: Some(file), path };
    }
    let mut records = Vec::new();
    let (model, init_params) = AgentModel::init(&cfg.repr, &cfg.policy, cfg.seed);
    let adam_cfg = AdamConfig::with_lr(cfg.a3c.lr);

    let (store, mut round, pretrained, dropped, recent) = match &opts.resume {
        Some(ck) => {
            let params = ck.params()?;
            let model_check = AgentModel::bind(&cfg.repr, &cfg.policy, &params)?;
            drop(model_check);
            let store = SharedParamStore::with_state(params, ck.adam.clone(), ck.updates, ck.episodes);
            records.push(Record::Start {
                fingerprint: fingerprint.clone(),
                pretraining: ck.pretrained,
                resumed_round: Some(ck.round),
            });
            (store, ck.round, ck.pretrained, ck.dropped_segments, ck.recent_success.iter().copied().collect())
        }
        None => {
            let mut params = init_params;
            let enabled = cfg.imitation.enabled;
            records.push(Record::Start { fingerprint: fingerprint.clone(), pretraining: enabled, resumed_round: None });
            if enabled {
                records.extend(pretrain(cfg, suite, &model, &mut params)?);
            }
            (SharedParamStore::new(params, adam_cfg), 0, enabled, 0, VecDeque::new())
        }
    };
    writer.write(&records)?;
    let mut flushed = records.len();

    let progress = Mutex::new(Progress {
        recent,
        window: cfg.run.success_window,
        log_every: cfg.run.log_every,
        next_log: (store.episodes() / cfg.run.log_every + 1) * cfg.run.log_every,
        acc: SegmentLoss::default(),
        acc_segments: 0,
        dropped,
        records: Vec::new(),
        losses: Vec::new(),
    });
    let mut last_validation = None;
    let mut checkpoint = None;
    while store.episodes() < cfg.a3c.episodes && opts.max_rounds.is_none_or(|m| round < m) {
        let round_end = ((round + 1) * cfg.run.checkpoint_every).min(cfg.a3c.episodes);
        let ctx = RoundCtx { model: &model, store: &store, progress: &progress, round_end };
        let mut workers: Vec<Worker> = (0..cfg.a3c.workers)
            .map(|id| {
                Worker::new(id, &suite.train, &cfg.sim, &cfg.a3c, model.hidden(), worker_seed(cfg.seed, round, id))
            })
            .collect();
        if cfg.a3c.sync {
            run_round_sync(&ctx, &mut workers)?;
        } else {
            run_round_async(&ctx, &mut workers)?;
        }
        round += 1;
        let snapshot = store.snapshot();
        let mut new_records = std::mem::take(&mut progress.lock().unwrap_or_else(|e| e.into_inner()).records);
        if !suite.val.is_empty() && cfg.run.validation_episodes > 0 {
            let m = validate_policy(
                &model,
                &snapshot,
                &suite.val,
                &cfg.sim,
                cfg.run.validation_episodes,
                cfg.seed ^ round,
            )?;
            new_records.push(Record::Validation { episode: store.episodes(), round, success: m.success, spl: m.spl });
            last_validation = Some(m.success);
        }
        let (params, adam) = store.state();
        let p = progress.lock().unwrap_or_else(|e| e.into_inner());
        let ck = Checkpoint {
            version: CHECKPOINT_VERSION,
            fingerprint: fingerprint.clone(),
            round,
            episodes: store.episodes(),
            updates: store.updates(),
            dropped_segments: p.dropped,
            recent_success: p.recent.iter().copied().collect(),
            pretrained,
            params: params_to_string(&params)?,
            adam,
        };
        drop(p);
        if let Some(dir) = &opts.out_dir {
            ck.save(&dir.join("checkpoint.json"))?;
        }
        log::info!("round {round}: {} episodes, {} updates", ck.episodes, ck.updates);
        checkpoint = Some(ck);
        writer.write(&new_records)?;
        records.extend(new_records);
        flushed = records.len();
    }
    let progress = progress.into_inner().unwrap_or_else(|e| e.into_inner());
    let summary = Record::Summary {
        pretraining_disabled: !pretrained,
        episodes: store.episodes(),
        updates: store.updates(),
        validation_success: last_validation,
    };
    records.push(summary);
    writer.write(&records[flushed..])?;
    let checkpoint = match checkpoint {
        Some(ck) => ck,
        None => {
            let (params, adam) = store.state();
            Checkpoint {
                version: CHECKPOINT_VERSION,
                fingerprint,
                round,
                episodes: store.episodes(),
                updates: store.updates(),
                dropped_segments: progress.dropped,
                recent_success: progress.recent.iter().copied().collect(),
                pretrained,
                params: params_to_string(&params)?,
                adam,
            }
        }
    };
    let params = store.into_params();
    if let Some(dir) = &opts.out_dir {
        let path = dir.join("params.txt");
        fs::write(&path, params_to_string(&params)?).map_err(|e| io_err(&path, e))?;
    }
    Ok(TrainOutcome { model, params, checkpoint, records, segment_losses: progress.losses })
}

/// Workers take turns, one segment each, in a fixed order.
fn run_round_sync(ctx: &RoundCtx<'_>, workers: &mut [Worker<'_>]) -> Result<(), TrainError> {
    while ctx.store.episodes() < ctx.round_end {
        for w in workers.iter_mut() {
            if ctx.store.episodes() >= ctx.round_end {
                break;
            }
            commit_one(ctx, w)?;
        }
    }
    Ok(())
}

/// Each worker runs on its own thread against the shared store.
fn run_round_async(ctx: &RoundCtx<'_>, workers: &mut [Worker<'_>]) -> Result<(), TrainError> {
    std::thread::scope(|s| {
        let handles: Vec<_> = workers
            .iter_mut()
            .map(|w| {
                s.spawn(move || {
                    while ctx.store.episodes() < ctx.round_end {
                        commit_one(ctx, w)?;
                    }
                    Ok(())
                })
            })
            .collect();
        let mut result = Ok(());
        for h in handles {
            let r = h.join().unwrap_or_else(|_| Err(TrainError::Diverged("worker thread panicked".into())));
            if result.is_ok() {
                result = r;
            }
        }
        result
    })
}

/// Imitation pretraining on expert samples from the training layouts.
pub fn pretrain(
    cfg: &ExperimentConfig,
    suite: &Suite,
    model: &AgentModel,
    params: &mut ParamSet,
) -> Result<Vec<Record>, TrainError> {
    let samples = generate_expert_dataset(&suite.train, &cfg.sim, cfg.imitation.episodes_per_layout, cfg.seed);
    let mut records = Vec::new();
    let report = pretrain_imitation(model, params, &samples, &cfg.imitation, cfg.seed, |epoch, loss| {
        log::info!("imitation epoch {epoch}: loss {loss:.4}");
        records.push(Record::ImitationEpoch { epoch, loss });
    })?;
    records.push(Record::Imitation {
        initial_loss: report.initial_loss,
        final_loss: report.epoch_losses.last().copied().unwrap_or(report.initial_loss),
        train_accuracy: report.train_accuracy,
        holdout_accuracy: report.holdout_accuracy,
        train_samples: report.train_samples,
        holdout_samples: report.holdout_samples,
    });
    Ok(records)
}

/// Which agent an evaluation drives.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PolicyKind {
    Trained,
    Random,
    Expert,
}

impl PolicyKind {
    pub fn parse(s: &str) -> Option<PolicyKind> {
        match s {
            "trained" => Some(PolicyKind::Trained),
            "random" => Some(PolicyKind::Random),
            "expert" => Some(PolicyKind::Expert),
            _ => None,
        }
    }
}

/// Evaluates on `layouts` with `cfg.eval` settings. `trained` must be set for [`PolicyKind::Trained`].
pub fn evaluate(
    cfg: &ExperimentConfig,
    layouts: &[RoomLayout],
    policy: PolicyKind,
    trained: Option<(&AgentModel, &ParamSet)>,
) -> Result<EvalReport, TrainError> {
    let to_err = |e: crate::eval::EvalError| TrainError::Config(e.to_string());
    let mut random = RandomNavigator::new();
    let mut expert = ExpertNavigator::new();
    let mut learned;
    let nav: &mut dyn Navigator = match policy {
        PolicyKind::Random => &mut random,
        PolicyKind::Expert => &mut expert,
        PolicyKind::Trained => {
            let (model, params) =
                trained.ok_or_else(|| TrainError::Config("the trained policy needs parameters".into()))?;
            learned = TrainedNavigator::new(model, params, SelectMode::Greedy);
            &mut learned
        }
    };
    let name = nav.name().to_string();
    let run = run_episodes(nav, layouts, &cfg.sim, cfg.eval.episodes, cfg.eval.seed).map_err(to_err)?;
    EvalReport::new(&name, cfg.eval.seed, cfg.fingerprint(), run).map_err(to_err)
}
