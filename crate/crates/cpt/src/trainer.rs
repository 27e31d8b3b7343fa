//! The run engine: drives one model through a task timeline under a schedule.
//!
//! `run_experiment` owns the whole deterministic pipeline — data synthesis,
//! per-task training with the configured continual baseline, branch-style
//! annealing for the infinite schedule, probing after every task, checkpoint
//! capture at the timeline's markers. Everything downstream (CSV files,
//! reports) is a pure serialization of its output, so two runs with the same
//! config and seed are bitwise identical.

use rand::seq::SliceRandom;
use rand::{Rng, RngCore};
use rand_chacha::ChaCha8Rng;

use crate::checkpoint::{CheckpointKind, CheckpointRecord};
use crate::config::{Baseline, ExperimentConfig};
use crate::error::{CptError, Result};
use crate::metrics::{ResultMatrix, Unit};
use crate::model::{
    lwf_distill, mae_grad, mas_importance, mas_penalty, mas_penalty_grad_into, MaskPattern,
    ModelDims, ModelState,
};
use crate::optim::OptimizerState;
use crate::probe::linear_probe;
use crate::replay::{
    annealing_mix, buffer_capacity, compose_batch, BatchComposition, BufferEntry, ReplayBuffer,
    TaskPool,
};
use crate::rng::{derive_rng, RngState};
use crate::schedule::{ScheduleKind, ScheduleSpec};
use crate::synthetic::{Labeled, Pool, SyntheticTask};
use crate::timeline::{compose_timeline, Segment, Timeline};

/// One optimizer step as logged to the loss curve.
#[derive(Debug, Clone, PartialEq)]
pub struct LossRow {
    pub global_step: u64,
    pub task_id: u64,
    /// Full optimized objective: reconstruction plus any penalty terms.
    pub loss: f64,
    pub lr: f64,
    /// Current-task samples in the step's batch.
    pub n_current: usize,
    /// Samples drawn from other tasks (buffer or annealing mix).
    pub n_replay: usize,
}

/// Mutable training position: parameters, optimizer moments, sampling rng.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub model: ModelState,
    pub opt: OptimizerState,
    pub rng: ChaCha8Rng,
}

impl TrainState {
    fn record(
        &self,
        kind: CheckpointKind,
        task_id: u64,
        global_step: u64,
        local_step: u64,
        lr: f64,
    ) -> CheckpointRecord {
        CheckpointRecord {
            global_step,
            kind,
            task_id,
            local_step,
            lr,
            params: self.model.params.clone(),
            opt_m: self.opt.m.clone(),
            opt_v: self.opt.v.clone(),
            opt_t: self.opt.t,
            rng: RngState::capture(&self.rng),
        }
    }
}

/// One task's sample pools.
#[derive(Debug, Clone)]
pub struct TaskData {
    /// Unlabeled training inputs.
    pub train_x: Vec<Vec<f64>>,
    pub probe_train: Vec<Labeled>,
    pub probe_eval: Vec<Labeled>,
}

/// Frozen references the continual baselines carry across task boundaries.
#[derive(Debug, Clone, Default)]
pub struct Anchors {
    /// Parameter anchor and importance weights from the previous task.
    pub mas: Option<(Vec<f64>, Vec<f64>)>,
    /// Previous task's model, the distillation teacher.
    pub lwf: Option<ModelState>,
}

/// Everything a run produces, ready for serialization.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub kind: ScheduleKind,
    pub seed: u64,
    pub timeline: Timeline,
    pub matrix: ResultMatrix,
    pub losses: Vec<LossRow>,
    /// (directory name, record) pairs in capture order.
    pub checkpoints: Vec<(String, CheckpointRecord)>,
    pub buffer_manifest: String,
}

/// Draw every task's pools up front from the run seed.
pub fn synthesize_tasks(cfg: &ExperimentConfig, seed: u64) -> Result<Vec<TaskData>> {
    (0..cfg.task_count)
        .map(|t| {
            let task = SyntheticTask::new(cfg.mixture_spec(seed), t)?;
            Ok(TaskData {
                train_x: task
                    .sample_pool(Pool::Train, cfg.train_samples)
                    .into_iter()
                    .map(|s| s.x)
                    .collect(),
                probe_train: task.sample_pool(Pool::ProbeTrain, cfg.probe_train_samples),
                probe_eval: task.sample_pool(Pool::ProbeEval, cfg.probe_eval_samples),
            })
        })
        .collect()
}

struct StepOutcome {
    loss: f64,
    n_current: usize,
}

/// One optimizer update on a composed batch, penalties included. Non-finite
/// loss or gradients abort before any mutation.
#[allow(clippy::too_many_arguments)]
fn grad_step(
    cfg: &ExperimentConfig,
    model: &mut ModelState,
    opt: &mut OptimizerState,
    rng: &mut ChaCha8Rng,
    batch: &[(Vec<f64>, u64)],
    current_task: u64,
    anchors: &Anchors,
    lr: f64,
    global_step: u64,
) -> Result<StepOutcome> {
    let dims = model.dims;
    let scale = 1.0 / batch.len() as f64;
    let mut grad = vec![0.0; dims.n_params()];
    let mut loss = 0.0;
    for (x, _) in batch {
        let mask = MaskPattern::sample(dims.patches, cfg.mask_ratio, rng)?;
        let (l, g) = mae_grad(model, x, &mask)?;
        loss += l * scale;
        for (acc, gi) in grad.iter_mut().zip(&g) {
            *acc += gi * scale;
        }
    }
    if let Some((anchor, omega)) = &anchors.mas {
        loss += mas_penalty(&model.params, anchor, omega, cfg.mas_lambda)?;
        mas_penalty_grad_into(&model.params, anchor, omega, cfg.mas_lambda, &mut grad)?;
    }
    if let Some(prev) = &anchors.lwf {
        // Distill only on current-task inputs; replayed samples already carry
        // their own reconstruction signal.
        let current: Vec<Vec<f64>> = batch
            .iter()
            .filter(|(_, t)| *t == current_task)
            .map(|(x, _)| x.clone())
            .collect();
        let (l, g) = lwf_distill(model, prev, &current, cfg.lwf_alpha)?;
        loss += l;
        for (acc, gi) in grad.iter_mut().zip(&g) {
            *acc += gi;
        }
    }
    if !loss.is_finite() {
        return Err(CptError::Divergence { global_step });
    }
    opt.step(&mut model.params, &grad, lr, global_step)?;
    let n_current = batch.iter().filter(|(_, t)| *t == current_task).count();
    Ok(StepOutcome { loss, n_current })
}

/// Compose one training batch under the active policy.
fn draw_batch(
    cfg: &ExperimentConfig,
    data: &[TaskData],
    t: u64,
    replay_ratio: f64,
    merged: Option<&ReplayBuffer<Vec<f64>>>,
    equal_mix: bool,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<(Vec<f64>, u64)>> {
    if equal_mix {
        let pools: Vec<TaskPool<'_, Vec<f64>>> = (0..=t)
            .map(|j| TaskPool {
                task_id: j,
                samples: &data[j as usize].train_x,
            })
            .collect();
        return annealing_mix(&pools, cfg.batch_size, rng);
    }
    if replay_ratio > 0.0 {
        if let Some(buf) = merged {
            let comp = BatchComposition::new(cfg.batch_size, 1.0 - replay_ratio)?;
            return compose_batch(&data[t as usize].train_x, t, buf, &comp, rng);
        }
    }
    let pool = &data[t as usize].train_x;
    let mut batch = Vec::with_capacity(cfg.batch_size);
    for _ in 0..cfg.batch_size {
        let idx = rng.random_range(0..pool.len() as u64) as usize;
        batch.push((pool[idx].clone(), t));
    }
    Ok(batch)
}

/// Anneal a branch copy of `state` over the segment's annealing tail, leaving
/// the continuation state untouched — the borrow is immutable and the branch
/// derives its own rng stream, so two forks from one state are identical.
#[allow(clippy::too_many_arguments)]
pub fn fork_annealing(
    cfg: &ExperimentConfig,
    seg: &Segment,
    state: &TrainState,
    data: &[TaskData],
    merged: Option<&ReplayBuffer<Vec<f64>>>,
    anchors: &Anchors,
    replay_ratio: f64,
    equal_mix: bool,
    losses: &mut Vec<LossRow>,
    seed: u64,
) -> Result<(TrainState, CheckpointRecord)> {
    let t = seg.task_id;
    let n = seg.n_steps();
    let boundary = seg.anneal_start_local();
    let mut branch = TrainState {
        model: state.model.clone(),
        opt: state.opt.clone(),
        rng: derive_rng(seed, "anneal", &[t]),
    };
    for local in boundary + 1..=n {
        let batch = draw_batch(
            cfg,
            data,
            t,
            replay_ratio,
            merged,
            equal_mix,
            &mut branch.rng,
        )?;
        let lr = seg.lr_tape[(local - 1) as usize];
        let g = seg.start_global + local;
        let out = grad_step(
            cfg,
            &mut branch.model,
            &mut branch.opt,
            &mut branch.rng,
            &batch,
            t,
            anchors,
            lr,
            g,
        )?;
        losses.push(LossRow {
            global_step: g,
            task_id: t,
            loss: out.loss,
            lr,
            n_current: out.n_current,
            n_replay: batch.len() - out.n_current,
        });
    }
    let rec = branch.record(
        CheckpointKind::Annealed,
        t,
        seg.start_global + n,
        n,
        seg.spec.lr_at(n)?,
    );
    Ok((branch, rec))
}

/// Train one segment; returns the model used for this task's probe row.
#[allow(clippy::too_many_arguments)]
fn train_segment(
    cfg: &ExperimentConfig,
    seg: &Segment,
    replay_ratio: f64,
    equal_mix: bool,
    fork: bool,
    data: &[TaskData],
    merged: Option<&ReplayBuffer<Vec<f64>>>,
    anchors: &Anchors,
    state: &mut TrainState,
    losses: &mut Vec<LossRow>,
    checkpoints: &mut Vec<(String, CheckpointRecord)>,
    seed: u64,
) -> Result<ModelState> {
    let t = seg.task_id;
    let n = seg.n_steps();
    let infinite = seg.spec.kind == ScheduleKind::InfiniteCosine;
    let boundary = if infinite { seg.anneal_start_local() } else { n };

    for local in 1..=boundary {
        let batch = draw_batch(cfg, data, t, replay_ratio, merged, false, &mut state.rng)?;
        let lr = seg.lr_tape[(local - 1) as usize];
        let g = seg.start_global + local;
        let out = grad_step(
            cfg,
            &mut state.model,
            &mut state.opt,
            &mut state.rng,
            &batch,
            t,
            anchors,
            lr,
            g,
        )?;
        losses.push(LossRow {
            global_step: g,
            task_id: t,
            loss: out.loss,
            lr,
            n_current: out.n_current,
            n_replay: batch.len() - out.n_current,
        });
    }

    if !infinite {
        let rec = state.record(
            CheckpointKind::Snapshot,
            t,
            seg.start_global + n,
            n,
            seg.spec.lr_at(n)?,
        );
        checkpoints.push((format!("task{t}_snapshot"), rec));
        return Ok(state.model.clone());
    }

    let pre = state.record(
        CheckpointKind::PreAnnealed,
        t,
        seg.start_global + boundary,
        boundary,
        seg.spec.lr_at(boundary)?,
    );
    checkpoints.push((format!("task{t}_pre_annealed"), pre));

    if fork {
        let (branch, rec) = fork_annealing(
            cfg,
            seg,
            state,
            data,
            merged,
            anchors,
            replay_ratio,
            equal_mix,
            losses,
            seed,
        )?;
        checkpoints.push((format!("task{t}_annealed"), rec));
        Ok(branch.model)
    } else {
        // Inline ablation: anneal on the main trajectory, so the next task
        // continues from the annealed parameters instead of the plateau.
        for local in boundary + 1..=n {
            let batch = draw_batch(
                cfg,
                data,
                t,
                replay_ratio,
                merged,
                equal_mix,
                &mut state.rng,
            )?;
            let lr = seg.lr_tape[(local - 1) as usize];
            let g = seg.start_global + local;
            let out = grad_step(
                cfg,
                &mut state.model,
                &mut state.opt,
                &mut state.rng,
                &batch,
                t,
                anchors,
                lr,
                g,
            )?;
            losses.push(LossRow {
                global_step: g,
                task_id: t,
                loss: out.loss,
                lr,
                n_current: out.n_current,
                n_replay: batch.len() - out.n_current,
            });
        }
        let rec = state.record(
            CheckpointKind::Annealed,
            t,
            seg.start_global + n,
            n,
            seg.spec.lr_at(n)?,
        );
        checkpoints.push((format!("task{t}_annealed"), rec));
        Ok(state.model.clone())
    }
}

/// Balanced-buffer retraining: absorb the task's stream into a stratified
/// buffer, reset to the seed's fresh init, and train on the buffer alone
/// under a short cosine cycle.
#[allow(clippy::too_many_arguments)]
fn run_gdumb_task(
    cfg: &ExperimentConfig,
    dims: ModelDims,
    seg: &Segment,
    data: &[TaskData],
    buf: &mut ReplayBuffer<Vec<f64>>,
    losses: &mut Vec<LossRow>,
    checkpoints: &mut Vec<(String, CheckpointRecord)>,
    seed: u64,
) -> Result<ModelState> {
    let t = seg.task_id;
    let mut srng = derive_rng(seed, "gdumb-buffer", &[t]);
    for (i, x) in data[t as usize].train_x.iter().enumerate() {
        buf.update_stratified(x.clone(), t, i as u64, &mut srng);
    }

    let mut fresh = TrainState {
        model: ModelState::init(dims, seed),
        opt: OptimizerState::new(dims.n_params(), cfg.weight_decay),
        rng: derive_rng(seed, "gdumb-train", &[t]),
    };
    let reset = fresh.record(CheckpointKind::Snapshot, t, seg.start_global, 0, 0.0);
    checkpoints.push((format!("task{t}_reset"), reset));

    let batches_per_epoch = buf.len().div_ceil(cfg.batch_size);
    let n_cycle = (cfg.gdumb_epochs * batches_per_epoch) as u64;
    let cycle = ScheduleSpec::repeated_cosine(
        cfg.eta_max,
        cfg.eta_min,
        (cfg.warmup_frac * n_cycle as f64).floor() as u64,
        n_cycle,
    )?;
    let mut local: u64 = 0;
    for _epoch in 0..cfg.gdumb_epochs {
        let mut order: Vec<usize> = (0..buf.len()).collect();
        order.shuffle(&mut fresh.rng);
        for chunk in order.chunks(cfg.batch_size) {
            local += 1;
            let lr = cycle.lr_at(local)?;
            let batch: Vec<(Vec<f64>, u64)> = chunk
                .iter()
                .map(|&i| {
                    let e = &buf.entries()[i];
                    (e.payload.clone(), e.task_id)
                })
                .collect();
            let g = seg.start_global + local;
            let out = grad_step(
                cfg,
                &mut fresh.model,
                &mut fresh.opt,
                &mut fresh.rng,
                &batch,
                t,
                &Anchors::default(),
                lr,
                g,
            )?;
            losses.push(LossRow {
                global_step: g,
                task_id: t,
                loss: out.loss,
                lr,
                n_current: out.n_current,
                n_replay: batch.len() - out.n_current,
            });
        }
    }
    let rec = fresh.record(
        CheckpointKind::Snapshot,
        t,
        seg.start_global + local,
        local,
        cycle.lr_at(local.min(cycle.n_total))?,
    );
    checkpoints.push((format!("task{t}_snapshot"), rec));
    Ok(fresh.model)
}

/// Union of the per-task reservoirs for drawing; None before the first task
/// finishes.
fn merged_buffer(bufs: &[ReplayBuffer<Vec<f64>>]) -> Result<Option<ReplayBuffer<Vec<f64>>>> {
    let entries: Vec<BufferEntry<Vec<f64>>> = bufs
        .iter()
        .flat_map(|b| b.entries().iter().cloned())
        .collect();
    if entries.is_empty() {
        return Ok(None);
    }
    Ok(Some(ReplayBuffer::from_entries(entries)?))
}

/// Run one full experiment: train through every task, probe after each, and
/// capture the timeline's checkpoints. `kind` overrides the config's
/// schedule family so one config can drive a comparison.
pub fn run_experiment(
    base: &ExperimentConfig,
    kind: ScheduleKind,
    seed: u64,
) -> Result<RunOutput> {
    let mut cfg = base.clone();
    cfg.kind = kind;
    cfg.validate()?;
    let spec = cfg.schedule_spec(None)?;
    let plans = cfg.task_plans();
    let timeline = compose_timeline(&plans, &spec)?;
    let dims = cfg.dims()?;
    let data = synthesize_tasks(&cfg, seed)?;
    let tcount = cfg.task_count as usize;

    let mut state = TrainState {
        model: ModelState::init(dims, seed),
        opt: OptimizerState::new(dims.n_params(), cfg.weight_decay),
        rng: derive_rng(seed, "train", &[]),
    };
    let mut anchors = Anchors::default();
    let mut task_buffers: Vec<ReplayBuffer<Vec<f64>>> = Vec::new();
    let mut gdumb_buf = if cfg.baseline == Baseline::Gdumb {
        let total = cfg.train_samples as u64 * cfg.task_count;
        Some(ReplayBuffer::new(buffer_capacity(total, cfg.buffer_fraction)?)?)
    } else {
        None
    };

    let mut matrix = ResultMatrix::new(tcount, Unit::Percent);
    let pcfg = cfg.probe_config(seed);
    let mut b = vec![0.0; tcount];
    let mut brng = derive_rng(seed, "probe-baseline", &[]);
    for _ in 0..cfg.baseline_seeds {
        let random_encoder = ModelState::init(dims, brng.next_u64());
        for (j, task) in data.iter().enumerate() {
            b[j] += 100.0
                * linear_probe(
                    &random_encoder,
                    &task.probe_train,
                    &task.probe_eval,
                    cfg.clusters,
                    &pcfg,
                )?
                / cfg.baseline_seeds as f64;
        }
    }
    matrix.set_baselines(b)?;

    let mut losses = Vec::new();
    let mut checkpoints = Vec::new();

    for seg in &timeline.segments {
        let t = seg.task_id;
        state.opt.reset();
        let plan = &plans[t as usize];

        let row_model = if let Some(buf) = gdumb_buf.as_mut() {
            run_gdumb_task(
                &cfg,
                dims,
                seg,
                &data,
                buf,
                &mut losses,
                &mut checkpoints,
                seed,
            )?
        } else {
            let merged = merged_buffer(&task_buffers)?;
            train_segment(
                &cfg,
                seg,
                plan.replay_ratio,
                plan.anneal_equal_mix,
                plan.anneal_fork,
                &data,
                merged.as_ref(),
                &anchors,
                &mut state,
                &mut losses,
                &mut checkpoints,
                seed,
            )?
        };

        for (j, task) in data.iter().enumerate() {
            if j as u64 <= t || cfg.eval_unseen {
                let acc = linear_probe(
                    &row_model,
                    &task.probe_train,
                    &task.probe_eval,
                    cfg.clusters,
                    &pcfg,
                )?;
                matrix.set(t as usize, j, 100.0 * acc);
            }
        }

        // Cross-boundary references come from the continuation state, i.e.
        // the parameters the next task will actually start from.
        if (t as usize) + 1 < tcount {
            match cfg.baseline {
                Baseline::Er => {
                    let cap = buffer_capacity(cfg.train_samples as u64, cfg.buffer_fraction)?;
                    let mut buf = ReplayBuffer::new(cap)?;
                    let mut rng = derive_rng(seed, "buffer", &[t]);
                    for (i, x) in data[t as usize].train_x.iter().enumerate() {
                        buf.update_uniform(x.clone(), t, i as u64, &mut rng);
                    }
                    task_buffers.push(buf);
                }
                Baseline::Mas => {
                    let mut rng = derive_rng(seed, "mas", &[t]);
                    let pool = &data[t as usize].train_x;
                    let take = cfg.mas_sample.min(pool.len());
                    let picked = rand::seq::index::sample(&mut rng, pool.len(), take);
                    let sample: Vec<Vec<f64>> = picked.iter().map(|i| pool[i].clone()).collect();
                    let omega = mas_importance(&state.model, &sample)?;
                    anchors.mas = Some((state.model.params.clone(), omega));
                }
                Baseline::Lwf => {
                    anchors.lwf = Some(state.model.clone());
                }
                Baseline::FtSeq | Baseline::Gdumb => {}
            }
        }
    }

    let buffer_manifest = if let Some(buf) = &gdumb_buf {
        buf.manifest()
    } else if let Some(merged) = merged_buffer(&task_buffers)? {
        merged.manifest()
    } else {
        "capacity=0 entries=0\n".to_string()
    };

    Ok(RunOutput {
        kind,
        seed,
        timeline,
        matrix,
        losses,
        checkpoints,
        buffer_manifest,
    })
}
