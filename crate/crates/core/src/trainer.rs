//! Staged domain-incremental training and the pooled vanilla baseline.
//!
//! One stage per sensitive-attribute domain, in `stage_order`:
//!
//! 1. From the second stage on, the student is copied into a frozen teacher.
//!    The buffer is frozen when the last stage begins.
//! 2. From the second stage on, each minibatch of the stage's domain is joined
//!    with an equally sized memory batch. Contrastive, parity and distillation terms see the unmixed
//!    union; cross entropy sees the mixup batch (or the union when mixup is off).
//! 3. At the end of every epoch: distillation fine-tuning on buffer batches
//!    (teacher stages only), then reservoir updates with the samples that
//!    appeared for the first time this epoch (non-final stages only).

use std::collections::{BTreeMap, HashSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::augment::{mix, MixupConfig};
use crate::autodiff::{Graph, Tensor};
use crate::data::{batches, features_tensor, Dataset, Domain, Sample};
use crate::error::{Error, Result};
use crate::losses::{self, LossBreakdown, LossTerms, LossWeights};
use crate::metrics::{group_accuracy, PredictionDump};
use crate::model::{Network, NetworkConfig};
use crate::replay::ReplayBuffer;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Domain (sensitive attribute value) trained in each stage.
    pub stage_order: Vec<u8>,
    pub epochs_per_stage: usize,
    pub batch_size: usize,
    /// Memory samples joined to each minibatch; `None` matches `batch_size`.
    pub memory_batch_size: Option<usize>,
    pub learning_rate: f64,
    pub momentum: f64,
    pub finetune_learning_rate: f64,
    pub finetune_batches: usize,
    pub weights: LossWeights,
    pub mixup: MixupConfig,
    pub use_supcon: bool,
    pub buffer_capacity: usize,
    pub hidden_dims: Vec<usize>,
    pub projector_dim: usize,
    /// Epochs for the pooled baseline; `None` uses `epochs_per_stage` × stages.
    pub vanilla_epochs: Option<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            stage_order: vec![1, 0],
            epochs_per_stage: 10,
            batch_size: 32,
            memory_batch_size: None,
            learning_rate: 0.01,
            momentum: 0.9,
            finetune_learning_rate: 0.001,
            finetune_batches: 5,
            weights: LossWeights::default(),
            mixup: MixupConfig::default(),
            use_supcon: true,
            buffer_capacity: 300,
            hidden_dims: vec![32],
            projector_dim: 32,
            vanilla_epochs: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::InvalidConfig(m));
        if self.epochs_per_stage == 0 || self.batch_size == 0 {
            return fail("epochs_per_stage and batch_size must be >= 1".into());
        }
        if !(self.learning_rate > 0.0) || !(self.finetune_learning_rate > 0.0) {
            return fail("learning rates must be positive".into());
        }
        if self.finetune_learning_rate >= self.learning_rate {
            return fail(format!(
                "finetune_learning_rate {} must be smaller than learning_rate {}",
                self.finetune_learning_rate, self.learning_rate
            ));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return fail(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            ));
        }
        let mut seen = HashSet::new();
        if self.stage_order.is_empty() || !self.stage_order.iter().all(|d| seen.insert(*d)) {
            return fail(format!(
                "stage_order must list distinct domains: {:?}",
                self.stage_order
            ));
        }
        self.weights.validate()?;
        self.mixup.validate()
    }

    pub fn network_config(&self, dataset: &Dataset) -> NetworkConfig {
        NetworkConfig {
            input_dim: dataset.feature_dim(),
            hidden_dims: self.hidden_dims.clone(),
            num_classes: dataset.num_classes(),
            projector_dim: self.projector_dim,
            seed: self.seed,
        }
    }

    fn memory_batch(&self) -> usize {
        self.memory_batch_size.unwrap_or(self.batch_size)
    }
}

/// `p ← p − lr · g`.
pub fn optimizer_step(params: &mut [&mut Tensor], grads: &[Tensor], lr: f64) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::InvalidInput(format!(
            "{} parameters but {} gradients",
            params.len(),
            grads.len()
        )));
    }
    for (p, g) in params.iter_mut().zip(grads) {
        if p.shape() != g.shape() {
            return Err(Error::ShapeMismatch {
                op: "optimizer_step",
                lhs: p.shape().to_vec(),
                rhs: g.shape().to_vec(),
            });
        }
        p.data_mut()
            .iter_mut()
            .zip(g.data())
            .for_each(|(p, g)| *p -= lr * g);
    }
    Ok(())
}

/// SGD with heavy-ball momentum: `v ← μv + g`, `p ← p − lr·v`.
#[derive(Debug, Clone)]
pub struct Sgd {
    pub lr: f64,
    pub momentum: f64,
    velocity: Vec<Tensor>,
}

impl Sgd {
    pub fn new(lr: f64, momentum: f64) -> Self {
        Self {
            lr,
            momentum,
            velocity: Vec::new(),
        }
    }

    pub fn step(&mut self, mut params: Vec<&mut Tensor>, grads: &[Tensor]) -> Result<()> {
        if self.momentum == 0.0 {
            return optimizer_step(&mut params, grads, self.lr);
        }
        if self.velocity.is_empty() {
            self.velocity = grads.iter().map(|g| Tensor::zeros(g.shape())).collect();
        }
        for (v, g) in self.velocity.iter_mut().zip(grads) {
            v.data_mut()
                .iter_mut()
                .zip(g.data())
                .for_each(|(v, g)| *v = self.momentum * *v + g);
        }
        optimizer_step(&mut params, &self.velocity, self.lr)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub breakdown: LossBreakdown,
    pub spd_degenerate: bool,
}

/// Builds the objective for one minibatch, without updating anything.
/// Returns the graph, the root, the student's parameter handles and the breakdown.
fn build_objective(
    student: &Network,
    teacher: Option<&Network>,
    current: &[Sample],
    memory: &[Sample],
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(
    Graph,
    crate::autodiff::Var,
    Vec<crate::autodiff::Var>,
    StepOutcome,
)> {
    let union: Vec<&Sample> = current.iter().chain(memory).collect();
    let features = features_tensor(union.iter().copied())?;
    let labels: Vec<usize> = union.iter().map(|s| s.label).collect();
    let attrs: Vec<u8> = union.iter().map(|s| s.attr).collect();
    let w = &config.weights;

    let teacher_q = match teacher {
        Some(t) if w.alpha > 0.0 => Some(t.predict_proba(&features)?),
        _ => None,
    };

    let mut g = Graph::new();
    let bound = student.bind(&mut g, true);
    let x = g.constant(features);
    let out = bound.forward(&mut g, x)?;
    if !g.value(out.probs).is_finite() {
        return Err(non_finite_outputs(&g, out.logits));
    }

    let sup = if config.use_supcon && union.len() >= 2 {
        Some(losses::supcon(&mut g, out.embeddings, &labels, w.tau)?)
    } else {
        None
    };
    let mut spd_degenerate = false;
    let spd = if w.beta > 0.0 {
        let s = losses::spd_loss(&mut g, out.probs, &attrs)?;
        spd_degenerate = s.degenerate;
        Some(s.loss)
    } else {
        None
    };
    let dis = match &teacher_q {
        Some(tq) => Some(losses::distill(&mut g, tq, out.probs, w.temperature)?),
        None => None,
    };
    let ce = if config.mixup.enabled {
        let mixed = mix(current, memory, student.num_classes(), &config.mixup, rng)?;
        let xm = g.constant(mixed.features);
        let (logits, qm) = bound.classify(&mut g, xm)?;
        if !g.value(qm).is_finite() {
            return Err(non_finite_outputs(&g, logits));
        }
        losses::cross_entropy(&mut g, &mixed.soft_labels, qm)?
    } else {
        let target = losses::one_hot(&labels, student.num_classes())?;
        losses::cross_entropy(&mut g, &target, out.probs)?
    };

    let (total, breakdown) = losses::combine(&mut g, LossTerms { ce, sup, dis, spd }, w)?;
    Ok((
        g,
        total,
        bound.vars(),
        StepOutcome {
            breakdown,
            spd_degenerate,
        },
    ))
}

fn non_finite_outputs(g: &Graph, logits: crate::autodiff::Var) -> Error {
    let bad = g
        .value(logits)
        .data()
        .iter()
        .filter(|v| !v.is_finite())
        .count();
    Error::NonFiniteLoss {
        stage: 0,
        epoch: 0,
        step: 0,
        dump: format!(
            "network outputs not finite ({bad} non-finite logits); ce/sup/dis/spd not computed"
        ),
    }
}

/// Loss of one minibatch under `config`, with no parameter update.
pub fn evaluate_objective(
    student: &Network,
    teacher: Option<&Network>,
    current: &[Sample],
    memory: &[Sample],
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<StepOutcome> {
    build_objective(student, teacher, current, memory, config, rng).map(|(.., o)| o)
}

/// One SGD step on the combined objective of `current ∪ memory`.
pub fn train_step(
    student: &mut Network,
    teacher: Option<&Network>,
    current: &[Sample],
    memory: &[Sample],
    config: &TrainConfig,
    opt: &mut Sgd,
    rng: &mut ChaCha8Rng,
) -> Result<StepOutcome> {
    let (g, total, vars, outcome) =
        build_objective(student, teacher, current, memory, config, rng)?;
    if !outcome.breakdown.is_finite() {
        return Err(Error::NonFiniteLoss {
            stage: 0,
            epoch: 0,
            step: 0,
            dump: format!("{:?}", outcome.breakdown),
        });
    }
    let grads = g.backward(total)?;
    let grads: Vec<Tensor> = vars.iter().map(|&v| grads.wrt(&g, v)).collect();
    opt.step(student.params_mut(), &grads)?;
    Ok(outcome)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinetuneReport {
    pub steps: usize,
    pub mean_loss: f64,
}

/// Minimizes the distillation loss on buffer minibatches at the fine-tuning rate.
pub fn distill_finetune(
    student: &mut Network,
    teacher: &Network,
    buffer: &ReplayBuffer,
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<FinetuneReport> {
    if buffer.is_empty() {
        log::warn!("distillation fine-tuning skipped: replay buffer is empty");
        return Ok(FinetuneReport {
            steps: 0,
            mean_loss: 0.0,
        });
    }
    let mut opt = Sgd::new(config.finetune_learning_rate, config.momentum);
    let mut total = 0.0;
    for _ in 0..config.finetune_batches {
        let batch = buffer.sample_batch(config.batch_size, rng);
        let x = features_tensor(&batch)?;
        let tq = teacher.predict_proba(&x)?;
        let mut g = Graph::new();
        let bound = student.bind(&mut g, true);
        let xv = g.constant(x);
        let (logits, q) = bound.classify(&mut g, xv)?;
        if !g.value(q).is_finite() {
            return Err(non_finite_outputs(&g, logits));
        }
        let loss = losses::distill(&mut g, &tq, q, config.weights.temperature)?;
        let value = g.value(loss).item();
        if !value.is_finite() {
            return Err(Error::NonFiniteLoss {
                stage: 0,
                epoch: 0,
                step: 0,
                dump: format!("distillation fine-tuning loss {value}"),
            });
        }
        total += value;
        let grads = g.backward(loss)?;
        let grads: Vec<Tensor> = bound.vars().iter().map(|&v| grads.wrt(&g, v)).collect();
        opt.step(student.params_mut(), &grads)?;
    }
    Ok(FinetuneReport {
        steps: config.finetune_batches,
        mean_loss: if config.finetune_batches == 0 {
            0.0
        } else {
            total / config.finetune_batches as f64
        },
    })
}

/// One line of the per-epoch training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub stage: usize,
    pub epoch: usize,
    pub ce: f64,
    pub sup: f64,
    pub dis: f64,
    pub spd: f64,
    pub total: f64,
    /// Test accuracy per domain seen so far, keyed by attribute value.
    pub domain_accuracy: BTreeMap<String, f64>,
    pub degenerate_spd_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: usize,
    pub domain: u8,
    pub epochs: Vec<EpochLog>,
    pub domain_accuracy: BTreeMap<String, f64>,
    pub teacher_checksum_start: Option<String>,
    pub teacher_checksum_end: Option<String>,
    pub buffer_checksum_start: String,
    pub buffer_checksum_end: String,
    pub buffer_len: usize,
    pub buffer_frozen: bool,
    pub finetune: Vec<FinetuneReport>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub network: Network,
    pub stages: Vec<StageReport>,
    pub buffer: ReplayBuffer,
}

impl TrainOutcome {
    pub fn epoch_logs(&self) -> impl Iterator<Item = &EpochLog> {
        self.stages.iter().flat_map(|s| s.epochs.iter())
    }
}

fn domain_accuracy(net: &Network, domains: &[&Domain]) -> Result<BTreeMap<String, f64>> {
    let mut out = BTreeMap::new();
    for d in domains {
        let dump = PredictionDump::from_network(net, &d.test)?;
        out.insert(
            d.attr.to_string(),
            group_accuracy(&dump, d.attr).unwrap_or(0.0),
        );
    }
    Ok(out)
}

fn mean_breakdown(steps: &[StepOutcome]) -> LossBreakdown {
    let mut acc = LossBreakdown::default();
    for s in steps {
        acc.accumulate(&s.breakdown);
    }
    acc.scaled(1.0 / steps.len().max(1) as f64)
}

fn with_position(err: Error, stage: usize, epoch: usize, step: usize) -> Error {
    match err {
        Error::NonFiniteLoss { dump, .. } => {
            log::error!("non-finite loss at stage {stage} epoch {epoch} step {step}: {dump}");
            Error::NonFiniteLoss {
                stage,
                epoch,
                step,
                dump,
            }
        }
        other => other,
    }
}

/// Runs the full staged protocol. Stages are numbered from 1 in reports.
pub fn run_incremental(config: &TrainConfig, dataset: &Dataset) -> Result<TrainOutcome> {
    config.validate()?;
    let domains = dataset.partition_by_attribute();
    if domains.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "domain-incremental training needs at least 2 domains, found {}",
            domains.len()
        )));
    }
    let mut ordered: Vec<&Domain> = Vec::new();
    for attr in &config.stage_order {
        let d = domains.iter().find(|d| d.attr == *attr).ok_or_else(|| {
            Error::InvalidConfig(format!("stage_order names unknown domain {attr}"))
        })?;
        ordered.push(d);
    }
    if ordered.len() != domains.len() {
        return Err(Error::InvalidConfig(format!(
            "stage_order {:?} must cover all {} domains",
            config.stage_order,
            domains.len()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut student = Network::new(config.network_config(dataset))?;
    let mut buffer = ReplayBuffer::new(config.buffer_capacity);
    let mut offered: HashSet<u64> = HashSet::new();
    let mut reports = Vec::new();
    let last = ordered.len() - 1;

    for (k, domain) in ordered.iter().enumerate() {
        let stage = k + 1;
        let teacher = if k > 0 { Some(student.clone()) } else { None };
        if k == last {
            buffer.freeze();
        }
        let teacher_checksum_start = teacher.as_ref().map(Network::checksum);
        let buffer_checksum_start = buffer.checksum();
        let mut opt = Sgd::new(config.learning_rate, config.momentum);
        let mut epochs = Vec::new();
        let mut finetune = Vec::new();

        for epoch in 1..=config.epochs_per_stage {
            let mut steps = Vec::new();
            let mut seen = Vec::new();
            for (i, batch) in batches(&domain.train, config.batch_size, &mut rng)
                .into_iter()
                .enumerate()
            {
                let memory = if k > 0 {
                    buffer.sample_batch(config.memory_batch(), &mut rng)
                } else {
                    Vec::new()
                };
                let outcome = train_step(
                    &mut student,
                    teacher.as_ref(),
                    &batch,
                    &memory,
                    config,
                    &mut opt,
                    &mut rng,
                )
                .map_err(|e| with_position(e, stage, epoch, i))?;
                if outcome.spd_degenerate {
                    log::debug!("stage {stage} epoch {epoch} step {i}: single-group batch, parity term is 0");
                }
                steps.push(outcome);
                seen.extend(batch);
            }

            if let Some(t) = &teacher {
                let report = distill_finetune(&mut student, t, &buffer, config, &mut rng)
                    .map_err(|e| with_position(e, stage, epoch, steps.len()))?;
                finetune.push(report);
            }
            if !buffer.is_frozen() {
                for s in seen {
                    if offered.insert(s.id) {
                        buffer.offer(s, &mut rng)?;
                    }
                }
            }

            let mean = mean_breakdown(&steps);
            let log_line = EpochLog {
                stage,
                epoch,
                ce: mean.ce,
                sup: mean.sup,
                dis: mean.dis,
                spd: mean.spd,
                total: mean.total,
                domain_accuracy: domain_accuracy(&student, &ordered[..=k])?,
                degenerate_spd_steps: steps.iter().filter(|s| s.spd_degenerate).count(),
            };
            log::info!(
                "stage {stage} epoch {epoch}: total {:.4} (ce {:.4} sup {:.4} dis {:.4} spd {:.4})",
                log_line.total,
                log_line.ce,
                log_line.sup,
                log_line.dis,
                log_line.spd
            );
            epochs.push(log_line);
        }

        reports.push(StageReport {
            stage,
            domain: domain.attr,
            domain_accuracy: domain_accuracy(&student, &ordered[..=k])?,
            epochs,
            teacher_checksum_end: teacher.as_ref().map(Network::checksum),
            teacher_checksum_start,
            buffer_checksum_start,
            buffer_checksum_end: buffer.checksum(),
            buffer_len: buffer.len(),
            buffer_frozen: buffer.is_frozen(),
            finetune,
        });
    }

    Ok(TrainOutcome {
        network: student,
        stages: reports,
        buffer,
    })
}

/// Joint cross-entropy training on all domains pooled.
pub fn run_vanilla(config: &TrainConfig, dataset: &Dataset) -> Result<TrainOutcome> {
    config.validate()?;
    let domains = dataset.partition_by_attribute();
    if domains.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "training needs at least 2 domains, found {}",
            domains.len()
        )));
    }
    let plain = TrainConfig {
        weights: LossWeights {
            alpha: 0.0,
            beta: 0.0,
            ..config.weights
        },
        mixup: MixupConfig {
            enabled: false,
            ..config.mixup
        },
        use_supcon: false,
        ..config.clone()
    };
    let epochs = config
        .vanilla_epochs
        .unwrap_or(config.epochs_per_stage * domains.len());
    let pooled = dataset.train();
    let all: Vec<&Domain> = domains.iter().collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut net = Network::new(config.network_config(dataset))?;
    let mut opt = Sgd::new(config.learning_rate, config.momentum);
    let buffer = ReplayBuffer::new(0);
    let mut logs = Vec::new();
    for epoch in 1..=epochs {
        let mut steps = Vec::new();
        for (i, batch) in batches(&pooled, config.batch_size, &mut rng)
            .into_iter()
            .enumerate()
        {
            let outcome = train_step(&mut net, None, &batch, &[], &plain, &mut opt, &mut rng)
                .map_err(|e| with_position(e, 1, epoch, i))?;
            steps.push(outcome);
        }
        let mean = mean_breakdown(&steps);
        logs.push(EpochLog {
            stage: 1,
            epoch,
            ce: mean.ce,
            sup: mean.sup,
            dis: mean.dis,
            spd: mean.spd,
            total: mean.total,
            domain_accuracy: domain_accuracy(&net, &all)?,
            degenerate_spd_steps: 0,
        });
    }
    let report = StageReport {
        stage: 1,
        domain: u8::MAX,
        domain_accuracy: domain_accuracy(&net, &all)?,
        epochs: logs,
        teacher_checksum_start: None,
        teacher_checksum_end: None,
        buffer_checksum_start: buffer.checksum(),
        buffer_checksum_end: buffer.checksum(),
        buffer_len: 0,
        buffer_frozen: false,
        finetune: Vec::new(),
    };
    Ok(TrainOutcome {
        network: net,
        stages: vec![report],
        buffer,
    })
}
