//! Training protocols: corruption-pretrain sweeps, init-std sweeps and the
//! random-label point. Each sweep point is trained, its snapshot selected,
//! normalized, evaluated and cached on disk.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use normgen_core::analysis::{evaluate, output_histogram, OutputStats};
use normgen_core::data::{corrupt_labels, randomize_all_labels, subset, Dataset, Standardizer};
use normgen_core::nn::{build_architecture, init_gaussian, train_epoch, Network, OptimizerState, SgdConfig};
use normgen_core::normalize::{absorb_batchnorm, normalize_layerwise, NormKind};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{self, CheckpointMeta, NormalizationInfo, Seeds};
use crate::config::{DatasetKind, DatasetSpec, ExperimentConfig, ProtocolKind};
use crate::error::{io_err, LabError, Result};
use crate::io::{load_cifar_binary, load_idx, mnist_paths, sha256_hex, CifarVariant};

/// Per-epoch training-set measurements, taken in eval mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    /// 1-based epoch after which the snapshot was taken.
    pub epoch: usize,
    pub train_loss: f64,
    pub train_error: f64,
    /// Mean minibatch loss during the epoch (train mode).
    pub batch_loss: f64,
    pub seconds: f64,
}

/// Index of the snapshot whose training loss is closest to `reference`;
/// ties go to the earliest epoch.
pub fn select_snapshot(snapshots: &[Snapshot], reference: f64) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, s) in snapshots.iter().enumerate() {
        let d = (s.train_loss - reference).abs();
        if !d.is_finite() {
            continue;
        }
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((i, d));
        }
    }
    best.map(|(i, _)| i).ok_or_else(|| LabError::Invalid("no finite snapshot to select from".into()))
}

/// How the reported snapshot of a run is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Selection {
    /// Training loss closest to the reference.
    ClosestTo(f64),
    /// Earliest epoch with zero training error; falls back to `ClosestTo`.
    FirstZeroError(f64),
}

pub struct TrainOutcome {
    /// Weights at the selected snapshot.
    pub network: Network<f32>,
    pub snapshots: Vec<Snapshot>,
    pub selected: usize,
    pub stopped_early: bool,
}

/// Trains for up to `epochs`, keeping the weights of the selected snapshot
/// in memory. With `stop_early` a `ClosestTo` run ends at the first epoch
/// whose training loss is below the reference with zero training error;
/// under a decreasing loss later epochs only move further away.
pub fn train_and_select(
    mut net: Network<f32>,
    train: &Dataset,
    state: &mut OptimizerState<f32>,
    epochs: usize,
    selection: Selection,
    stop_early: bool,
    tag: &str,
) -> Result<TrainOutcome> {
    let reference = match selection {
        Selection::ClosestTo(r) | Selection::FirstZeroError(r) => r,
    };
    let mut snapshots = Vec::with_capacity(epochs);
    let mut best: Option<(usize, f64, Network<f32>)> = None;
    let mut zero_error: Option<(usize, Network<f32>)> = None;
    let mut stopped_early = false;
    for _ in 0..epochs {
        let t = Instant::now();
        let summary = train_epoch(&mut net, train, state)?;
        let eval = evaluate(&net, train)?;
        let snap = Snapshot {
            epoch: summary.epoch,
            train_loss: eval.loss,
            train_error: eval.error,
            batch_loss: summary.mean_batch_loss,
            seconds: t.elapsed().as_secs_f64(),
        };
        info!("{tag} epoch {} train loss {:.5} error {:.4}", snap.epoch, snap.train_loss, snap.train_error);
        let i = snapshots.len();
        snapshots.push(snap);
        let d = (snap.train_loss - reference).abs();
        if best.as_ref().is_none_or(|(_, bd, _)| d < *bd) {
            best = Some((i, d, net.clone()));
        }
        if matches!(selection, Selection::FirstZeroError(_)) && snap.train_error == 0.0 {
            zero_error = Some((i, net.clone()));
            stopped_early = snapshots.len() < epochs;
            break;
        }
        if stop_early
            && matches!(selection, Selection::ClosestTo(_))
            && snap.train_loss < reference
            && snap.train_error == 0.0
        {
            stopped_early = snapshots.len() < epochs;
            break;
        }
    }
    let (selected, network) = match (zero_error, best) {
        (Some((i, n)), _) => (i, n),
        (None, Some((i, _, n))) => (i, n),
        (None, None) => return Err(LabError::Invalid("no epochs were run".into())),
    };
    Ok(TrainOutcome { network, snapshots, selected, stopped_early })
}

/// Standardized train and test sets for an experiment.
pub struct PreparedData {
    pub train: Dataset,
    pub test: Dataset,
    pub standardizer: Standardizer,
    /// Digest of the raw source files.
    pub source_digest: String,
}

fn cifar_files(spec: &DatasetSpec) -> (Vec<PathBuf>, Vec<PathBuf>, CifarVariant) {
    let d = &spec.dir;
    match spec.kind {
        DatasetKind::Cifar100 => (vec![d.join("train.bin")], vec![d.join("test.bin")], CifarVariant::Cifar100),
        _ => (
            (1..=5).map(|i| d.join(format!("data_batch_{i}.bin"))).collect(),
            vec![d.join("test_batch.bin")],
            CifarVariant::Cifar10,
        ),
    }
}

/// Raw train and test sets in `[0, 1]`.
pub fn load_raw(spec: &DatasetSpec) -> Result<(Dataset, Dataset)> {
    match spec.kind {
        DatasetKind::Mnist => {
            let [(tri, trl), (tei, tel)] = mnist_paths(&spec.dir);
            Ok((load_idx(&tri, &trl, 10)?, load_idx(&tei, &tel, 10)?))
        }
        DatasetKind::Cifar10 | DatasetKind::Cifar100 => {
            let (train, test, variant) = cifar_files(spec);
            Ok((load_cifar_binary(&train, variant)?, load_cifar_binary(&test, variant)?))
        }
    }
}

/// Loads, subsets and standardizes; statistics come from the training subset.
pub fn prepare_data(spec: &DatasetSpec) -> Result<PreparedData> {
    let (mut train, mut test) = load_raw(spec)?;
    let source_digest = train.provenance().source_digest.clone();
    if let Some(n) = spec.subset_size {
        train = subset(&train, n, spec.subset_seed)?;
    }
    if let Some(n) = spec.test_subset_size {
        test = subset(&test, n, spec.subset_seed.wrapping_add(1))?;
    }
    let standardizer = Standardizer::fit(&train);
    Ok(PreparedData { train: standardizer.apply(&train)?, test: standardizer.apply(&test)?, standardizer, source_digest })
}

/// One point of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SweepPoint {
    Corruption { fraction: f64 },
    InitStd { std: f64 },
    RandomLabels { std: f64 },
}

impl SweepPoint {
    pub fn sweep_kind(&self) -> &'static str {
        match self {
            SweepPoint::Corruption { .. } => ProtocolKind::PretrainSweep.sweep_kind(),
            SweepPoint::InitStd { .. } => ProtocolKind::InitStdSweep.sweep_kind(),
            SweepPoint::RandomLabels { .. } => ProtocolKind::RandomLabels.sweep_kind(),
        }
    }

    pub fn value(&self) -> f64 {
        match *self {
            SweepPoint::Corruption { fraction } => fraction,
            SweepPoint::InitStd { std } | SweepPoint::RandomLabels { std } => std,
        }
    }

    /// Directory name for this point's artifacts.
    pub fn slug(&self) -> String {
        format!("{}_{}", self.sweep_kind(), self.value())
    }
}

/// The points an experiment runs, in table order.
pub fn sweep_points(cfg: &ExperimentConfig) -> Vec<SweepPoint> {
    let mut pts: Vec<SweepPoint> = match cfg.protocol {
        ProtocolKind::PretrainSweep => cfg.sweep_values.iter().map(|&f| SweepPoint::Corruption { fraction: f }).collect(),
        ProtocolKind::InitStdSweep => cfg.sweep_values.iter().map(|&s| SweepPoint::InitStd { std: s }).collect(),
        ProtocolKind::RandomLabels => Vec::new(),
    };
    if cfg.random_label_point || cfg.protocol == ProtocolKind::RandomLabels {
        pts.push(SweepPoint::RandomLabels { std: cfg.init_std });
    }
    pts
}

/// Seeds derived from the master seed; fixed across sweep points.
pub fn derive_seeds(master: u64, point: &SweepPoint) -> Seeds {
    Seeds {
        init: master,
        data_order: master.wrapping_add(1),
        corruption: matches!(point, SweepPoint::Corruption { .. }).then(|| master.wrapping_add(2)),
        random_labels: matches!(point, SweepPoint::RandomLabels { .. }).then(|| master.wrapping_add(3)),
    }
}

/// Everything measured for one sweep point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub point: SweepPoint,
    pub arch: String,
    pub seeds: Seeds,
    pub init_std: f64,
    pub optimizer: SgdConfig,
    pub pretrain_epochs: usize,
    pub epochs_trained: usize,
    pub selected_epoch: usize,
    pub stopped_early: bool,
    /// Selected training loss lies within the configured band of the reference.
    pub within_band: bool,
    pub train_loss: f64,
    pub train_error: f64,
    pub test_loss: f64,
    pub test_error: f64,
    pub norm_kind: NormKind,
    pub rho: Vec<f64>,
    pub product_norm: f64,
    pub norm_train_loss: f64,
    pub norm_train_error: f64,
    pub norm_test_loss: f64,
    pub norm_test_error: f64,
    /// Winning-class outputs on the test set, before and after normalization.
    pub raw_outputs: OutputStats,
    pub norm_outputs: OutputStats,
    pub train_dataset: String,
    pub test_dataset: String,
    /// Paths relative to the run directory.
    pub checkpoint: String,
    pub checkpoint_digest: String,
    pub normalized_checkpoint: String,
    pub normalized_digest: String,
    pub snapshots: Vec<Snapshot>,
    pub seconds: f64,
    /// Digest of every input that determines this record; used for resuming.
    pub cache_key: String,
}

impl RunRecord {
    pub fn selected(&self) -> &Snapshot {
        &self.snapshots[self.selected_epoch - 1]
    }
}

#[derive(Serialize)]
struct CacheKeyInput<'a> {
    point: &'a SweepPoint,
    arch: &'a str,
    dataset: &'a DatasetSpec,
    source_digest: &'a str,
    seed: u64,
    init_std: f64,
    optimizer: &'a SgdConfig,
    pretrain_epochs: usize,
    train_epochs: usize,
    random_label_epochs: usize,
    reference_loss: f64,
    stop_below_reference: bool,
    norm: &'a str,
    histogram_bins: usize,
}

fn cache_key(cfg: &ExperimentConfig, point: &SweepPoint, source_digest: &str) -> String {
    let mut dataset = cfg.dataset.clone();
    dataset.dir = PathBuf::new();
    let input = CacheKeyInput {
        point,
        arch: cfg.architecture.name(),
        dataset: &dataset,
        source_digest,
        seed: cfg.seed,
        init_std: cfg.init_std,
        optimizer: &cfg.optimizer,
        pretrain_epochs: if matches!(point, SweepPoint::Corruption { .. }) { cfg.pretrain_epochs } else { 0 },
        train_epochs: cfg.train_epochs,
        random_label_epochs: cfg.random_label_epochs,
        reference_loss: cfg.reference_loss,
        stop_below_reference: cfg.stop_below_reference,
        norm: &cfg.norm,
        histogram_bins: cfg.histogram_bins,
    };
    sha256_hex(&serde_json::to_vec(&input).expect("serializable"))
}

pub const RECORD_FILE: &str = "record.json";

fn cached_record(dir: &Path, key: &str) -> Option<RunRecord> {
    let text = fs::read_to_string(dir.join(RECORD_FILE)).ok()?;
    let rec: RunRecord = serde_json::from_str(&text).ok()?;
    (rec.cache_key == key).then_some(rec)
}

fn initial_network(cfg: &ExperimentConfig, std: f64, seed: u64) -> Result<Network<f32>> {
    let mut net = build_architecture::<f32>(cfg.architecture, cfg.class_count())?;
    init_gaussian(&mut net, std, seed)?;
    Ok(net)
}

/// Corrupted-label pretraining, then training on clean labels with a fresh
/// optimizer from the pretrained weights.
pub fn run_pretrain_protocol(cfg: &ExperimentConfig, data: &PreparedData, fraction: f64) -> Result<TrainOutcome> {
    let point = SweepPoint::Corruption { fraction };
    let seeds = derive_seeds(cfg.seed, &point);
    let mut net = initial_network(cfg, cfg.init_std, seeds.init)?;
    let (corrupted, _) = corrupt_labels(&data.train, fraction, seeds.corruption.unwrap_or(0))?;
    let mut pre = OptimizerState::new(cfg.optimizer, seeds.data_order)?;
    for _ in 0..cfg.pretrain_epochs {
        let s = train_epoch(&mut net, &corrupted, &mut pre)?;
        info!("{} pretrain epoch {} batch loss {:.5}", point.slug(), s.epoch, s.mean_batch_loss);
    }
    let mut state = OptimizerState::new(cfg.optimizer, seeds.data_order)?;
    train_and_select(
        net,
        &data.train,
        &mut state,
        cfg.train_epochs,
        Selection::ClosestTo(cfg.reference_loss),
        cfg.stop_below_reference,
        &point.slug(),
    )
}

/// Training from a Gaussian init with the given std.
pub fn run_init_std_protocol(cfg: &ExperimentConfig, data: &PreparedData, std: f64) -> Result<TrainOutcome> {
    let point = SweepPoint::InitStd { std };
    let seeds = derive_seeds(cfg.seed, &point);
    let net = initial_network(cfg, std, seeds.init)?;
    let mut state = OptimizerState::new(cfg.optimizer, seeds.data_order)?;
    train_and_select(
        net,
        &data.train,
        &mut state,
        cfg.train_epochs,
        Selection::ClosestTo(cfg.reference_loss),
        cfg.stop_below_reference,
        &point.slug(),
    )
}

/// Training set with every label redrawn uniformly; the returned dataset is
/// also the one the training loss is measured on.
pub fn random_label_train_set(cfg: &ExperimentConfig, data: &PreparedData) -> Result<Dataset> {
    let seeds = derive_seeds(cfg.seed, &SweepPoint::RandomLabels { std: cfg.init_std });
    Ok(randomize_all_labels(&data.train, seeds.random_labels.unwrap_or(0))?)
}

/// Trains on random labels until zero training error (or the epoch budget).
pub fn run_random_label_point(cfg: &ExperimentConfig, data: &PreparedData, std: f64) -> Result<TrainOutcome> {
    let point = SweepPoint::RandomLabels { std };
    let seeds = derive_seeds(cfg.seed, &point);
    let train = random_label_train_set(cfg, data)?;
    let net = initial_network(cfg, std, seeds.init)?;
    let mut state = OptimizerState::new(cfg.optimizer, seeds.data_order)?;
    train_and_select(
        net,
        &train,
        &mut state,
        cfg.random_label_epochs,
        Selection::FirstZeroError(cfg.reference_loss),
        cfg.stop_below_reference,
        &point.slug(),
    )
}

/// Evaluates a trained point before and after normalization and saves both
/// checkpoints under `dir`.
fn finish_point(
    cfg: &ExperimentConfig,
    data: &PreparedData,
    point: SweepPoint,
    outcome: TrainOutcome,
    dir: &Path,
    run_dir: &Path,
    started: Instant,
) -> Result<RunRecord> {
    let seeds = derive_seeds(cfg.seed, &point);
    let norm_kind = cfg.norm_kind()?;
    let train_set = match point {
        SweepPoint::RandomLabels { .. } => random_label_train_set(cfg, data)?,
        _ => data.train.clone(),
    };
    let selected = outcome.snapshots[outcome.selected];
    let test = evaluate(&outcome.network, &data.test)?;
    let within_band = selected.train_loss <= cfg.reference_loss * cfg.reference_band
        && selected.train_loss >= cfg.reference_loss / cfg.reference_band;
    if !within_band && !matches!(point, SweepPoint::RandomLabels { .. }) {
        warn!(
            "{}: no snapshot within {}x of the reference loss {} (selected {:.5})",
            point.slug(),
            cfg.reference_band,
            cfg.reference_loss,
            selected.train_loss
        );
    }

    let wide = outcome.network.cast::<f64>();
    let absorbed = if wide.has_batchnorm() { absorb_batchnorm(&wide)? } else { wide };
    let normalized = normalize_layerwise(&absorbed, norm_kind)?;
    let norm_net = normalized.network.cast::<f32>();
    let norm_train = evaluate(&norm_net, &train_set)?;
    let norm_test = evaluate(&norm_net, &data.test)?;
    let raw_outputs = output_histogram(&outcome.network, &data.test, cfg.histogram_bins)?;
    let norm_outputs = output_histogram(&norm_net, &data.test, cfg.histogram_bins)?;

    let raw_path = dir.join("selected.ngc");
    let meta = CheckpointMeta {
        seeds,
        epoch: selected.epoch,
        train_loss: Some(selected.train_loss),
        test_loss: Some(test.loss),
        normalized: None,
    };
    let checkpoint_digest = checkpoint::save(&outcome.network, &meta, &raw_path)?;
    let norm_path = dir.join("normalized.ngc");
    let norm_meta = CheckpointMeta {
        train_loss: Some(norm_train.loss),
        test_loss: Some(norm_test.loss),
        normalized: Some(NormalizationInfo {
            kind: norm_kind,
            rho: normalized.rho.clone(),
            product_norm: normalized.product_norm,
            source_digest: Some(checkpoint_digest.clone()),
        }),
        ..meta.clone()
    };
    let normalized_digest = checkpoint::save(&normalized.network, &norm_meta, &norm_path)?;
    let rel = |p: &Path| p.strip_prefix(run_dir).unwrap_or(p).to_string_lossy().into_owned();

    Ok(RunRecord {
        point,
        arch: cfg.architecture.name().into(),
        seeds,
        init_std: match point {
            SweepPoint::Corruption { .. } => cfg.init_std,
            SweepPoint::InitStd { std } | SweepPoint::RandomLabels { std } => std,
        },
        optimizer: cfg.optimizer,
        pretrain_epochs: if matches!(point, SweepPoint::Corruption { .. }) { cfg.pretrain_epochs } else { 0 },
        epochs_trained: outcome.snapshots.len(),
        selected_epoch: selected.epoch,
        stopped_early: outcome.stopped_early,
        within_band,
        train_loss: selected.train_loss,
        train_error: selected.train_error,
        test_loss: test.loss,
        test_error: test.error,
        norm_kind,
        rho: normalized.rho,
        product_norm: normalized.product_norm,
        norm_train_loss: norm_train.loss,
        norm_train_error: norm_train.error,
        norm_test_loss: norm_test.loss,
        norm_test_error: norm_test.error,
        raw_outputs,
        norm_outputs,
        train_dataset: train_set.id(),
        test_dataset: data.test.id(),
        checkpoint: rel(&raw_path),
        checkpoint_digest,
        normalized_checkpoint: rel(&norm_path),
        normalized_digest,
        snapshots: outcome.snapshots,
        seconds: started.elapsed().as_secs_f64(),
        cache_key: String::new(),
    })
}

/// Runs (or, with `resume`, reloads) one sweep point.
pub fn run_point(cfg: &ExperimentConfig, data: &PreparedData, point: SweepPoint, resume: bool) -> Result<RunRecord> {
    let run_dir = &cfg.output_dir;
    let dir = run_dir.join("points").join(point.slug());
    let key = cache_key(cfg, &point, &data.source_digest);
    if resume {
        if let Some(rec) = cached_record(&dir, &key) {
            info!("{}: reusing cached result", point.slug());
            return Ok(rec);
        }
    }
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let started = Instant::now();
    let outcome = match point {
        SweepPoint::Corruption { fraction } => run_pretrain_protocol(cfg, data, fraction),
        SweepPoint::InitStd { std } => run_init_std_protocol(cfg, data, std),
        SweepPoint::RandomLabels { std } => run_random_label_point(cfg, data, std),
    }
    .map_err(|e| LabError::Invalid(format!("{}: {e}", point.slug())))?;
    let mut rec = finish_point(cfg, data, point, outcome, &dir, run_dir, started)?;
    rec.cache_key = key;
    let path = dir.join(RECORD_FILE);
    fs::write(&path, serde_json::to_vec_pretty(&rec)?).map_err(io_err(&path))?;
    info!(
        "{}: train {:.5} test {:.5} | normalized train {:.6} test {:.6} | product norm {:.4e}",
        point.slug(),
        rec.train_loss,
        rec.test_loss,
        rec.norm_train_loss,
        rec.norm_test_loss,
        rec.product_norm
    );
    Ok(rec)
}

/// Runs every point of the experiment on a pool of `workers` threads.
/// Records come back in sweep order regardless of completion order.
pub fn run_sweep(cfg: &ExperimentConfig, data: &PreparedData, resume: bool) -> Result<Vec<RunRecord>> {
    let points = sweep_points(cfg);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| LabError::Invalid(format!("thread pool: {e}")))?;
    pool.install(|| points.par_iter().map(|&p| run_point(cfg, data, p, resume)).collect())
}
