//! Experiment configuration: a flat sectioned key = value file.
//!
//! Every field has a default, so a config file only states what it changes.
//! Validation is pure (no filesystem access) and reports the offending field.

use std::fmt;

use crate::error::{CptError, Result};
use crate::metrics::BwtConvention;
use crate::model::ModelDims;
use crate::probe::ProbeConfig;
use crate::schedule::{AnnealConvention, ScheduleKind, ScheduleSpec};
use crate::synthetic::MixtureSpec;
use crate::timeline::TaskPlan;

/// Training regime for the run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Baseline {
    /// Plain sequential fine-tuning.
    FtSeq,
    /// Experience replay from a reservoir buffer.
    Er,
    /// Importance-weighted parameter drift penalty.
    Mas,
    /// Feature distillation toward the previous task's encoder.
    Lwf,
    /// From-scratch retraining on a balanced buffer each task.
    Gdumb,
}

impl fmt::Display for Baseline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Baseline::FtSeq => "ft-seq",
            Baseline::Er => "er",
            Baseline::Mas => "mas",
            Baseline::Lwf => "lwf",
            Baseline::Gdumb => "gdumb",
        };
        f.write_str(s)
    }
}

impl Baseline {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "ft-seq" | "ft_seq" => Ok(Baseline::FtSeq),
            "er" => Ok(Baseline::Er),
            "mas" => Ok(Baseline::Mas),
            "lwf" => Ok(Baseline::Lwf),
            "gdumb" => Ok(Baseline::Gdumb),
            other => Err(CptError::config(
                "train.baseline",
                format!("unknown baseline `{other}`"),
            )),
        }
    }
}

/// Full experiment description; see the field groups for the file sections.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    // [schedule]
    pub kind: ScheduleKind,
    pub eta_max: f64,
    pub eta_min: f64,
    pub eta_const: f64,
    pub steps_per_task: u64,
    pub warmup_frac: f64,
    pub cooldown_frac: f64,
    pub constant_frac: f64,
    pub anneal_convention: AnnealConvention,
    // [tasks]
    pub task_count: u64,
    pub shift_angle: f64,
    pub anneal_fork: bool,
    pub anneal_equal_mix: bool,
    // [data]
    pub dim: usize,
    pub patches: usize,
    pub clusters: usize,
    pub noise: f64,
    pub train_samples: usize,
    pub probe_train_samples: usize,
    pub probe_eval_samples: usize,
    // [model]
    pub hidden: usize,
    pub latent: usize,
    pub mask_ratio: f64,
    // [train]
    pub baseline: Baseline,
    pub batch_size: usize,
    pub replay_fraction: f64,
    pub buffer_fraction: f64,
    pub weight_decay: f64,
    pub mas_lambda: f64,
    pub mas_sample: usize,
    pub lwf_alpha: f64,
    pub gdumb_epochs: usize,
    // [probe]
    pub probe_epochs: usize,
    pub probe_lr: f64,
    pub probe_batch_size: usize,
    pub baseline_seeds: u64,
    // [run]
    pub seeds: Vec<u64>,
    pub out: String,
    pub eval_unseen: bool,
    pub bwt_convention: BwtConvention,
    // [compare]
    pub compare_schedules: Vec<ScheduleKind>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            kind: ScheduleKind::InfiniteCosine,
            eta_max: 2e-2,
            eta_min: 2e-4,
            eta_const: 2e-3,
            steps_per_task: 1200,
            warmup_frac: 0.01,
            cooldown_frac: 0.3,
            constant_frac: 0.55,
            anneal_convention: AnnealConvention::Normalized,
            task_count: 3,
            shift_angle: 1.3,
            anneal_fork: true,
            anneal_equal_mix: false,
            dim: 16,
            patches: 4,
            clusters: 8,
            noise: 1.0,
            train_samples: 2048,
            probe_train_samples: 512,
            probe_eval_samples: 512,
            hidden: 32,
            latent: 4,
            mask_ratio: 0.75,
            baseline: Baseline::Er,
            batch_size: 32,
            replay_fraction: 0.5,
            buffer_fraction: 0.05,
            weight_decay: 0.1,
            mas_lambda: 0.75,
            mas_sample: 1024,
            lwf_alpha: 0.75,
            gdumb_epochs: 3,
            probe_epochs: 30,
            probe_lr: 0.05,
            probe_batch_size: 64,
            baseline_seeds: 3,
            seeds: vec![1, 2, 3],
            out: "runs/exp".into(),
            eval_unseen: true,
            bwt_convention: BwtConvention::PaperLiteral,
            compare_schedules: vec![
                ScheduleKind::RepeatedCosineWarmup,
                ScheduleKind::InfiniteCosine,
            ],
        }
    }
}

fn num<T: std::str::FromStr>(field: &str, v: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    v.parse()
        .map_err(|e| CptError::config(field, format!("`{v}`: {e}")))
}

fn boolean(field: &str, v: &str) -> Result<bool> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(CptError::config(field, format!("`{other}` is not true/false"))),
    }
}

impl ExperimentConfig {
    /// Parse a sectioned key = value file; `#` and `;` start comments.
    pub fn parse(text: &str) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::default();
        let mut section = String::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name.strip_suffix(']').ok_or_else(|| {
                    CptError::config(format!("line {}", idx + 1), "unterminated section header")
                })?;
                section = name.trim().to_string();
                if !matches!(
                    section.as_str(),
                    "schedule" | "tasks" | "data" | "model" | "train" | "probe" | "run"
                        | "compare"
                ) {
                    return Err(CptError::config(
                        format!("[{section}]"),
                        "unknown section",
                    ));
                }
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                CptError::config(format!("line {}", idx + 1), "expected key = value")
            })?;
            cfg.set(&section, k.trim(), v.trim())?;
        }
        Ok(cfg)
    }

    fn set(&mut self, section: &str, key: &str, v: &str) -> Result<()> {
        let field = format!("{section}.{key}");
        let f = field.as_str();
        match (section, key) {
            ("schedule", "kind") => self.kind = ScheduleKind::parse(v)?,
            ("schedule", "eta_max") => self.eta_max = num(f, v)?,
            ("schedule", "eta_min") => self.eta_min = num(f, v)?,
            ("schedule", "eta_const") => self.eta_const = num(f, v)?,
            ("schedule", "steps_per_task") => self.steps_per_task = num(f, v)?,
            ("schedule", "warmup_frac") => self.warmup_frac = num(f, v)?,
            ("schedule", "cooldown_frac") => self.cooldown_frac = num(f, v)?,
            ("schedule", "constant_frac") => self.constant_frac = num(f, v)?,
            ("schedule", "anneal_convention") => {
                self.anneal_convention = AnnealConvention::parse(v)?;
            }
            ("tasks", "count") => self.task_count = num(f, v)?,
            ("tasks", "shift_angle") => self.shift_angle = num(f, v)?,
            ("tasks", "anneal_fork") => self.anneal_fork = boolean(f, v)?,
            ("tasks", "anneal_equal_mix") => self.anneal_equal_mix = boolean(f, v)?,
            ("data", "dim") => self.dim = num(f, v)?,
            ("data", "patches") => self.patches = num(f, v)?,
            ("data", "clusters") => self.clusters = num(f, v)?,
            ("data", "noise") => self.noise = num(f, v)?,
            ("data", "train_samples") => self.train_samples = num(f, v)?,
            ("data", "probe_train_samples") => self.probe_train_samples = num(f, v)?,
            ("data", "probe_eval_samples") => self.probe_eval_samples = num(f, v)?,
            ("model", "hidden") => self.hidden = num(f, v)?,
            ("model", "latent") => self.latent = num(f, v)?,
            ("model", "mask_ratio") => self.mask_ratio = num(f, v)?,
            ("train", "baseline") => self.baseline = Baseline::parse(v)?,
            ("train", "batch_size") => self.batch_size = num(f, v)?,
            ("train", "replay_fraction") => self.replay_fraction = num(f, v)?,
            ("train", "buffer_fraction") => self.buffer_fraction = num(f, v)?,
            ("train", "weight_decay") => self.weight_decay = num(f, v)?,
            ("train", "mas_lambda") => self.mas_lambda = num(f, v)?,
            ("train", "mas_sample") => self.mas_sample = num(f, v)?,
            ("train", "lwf_alpha") => self.lwf_alpha = num(f, v)?,
            ("train", "gdumb_epochs") => self.gdumb_epochs = num(f, v)?,
            ("probe", "epochs") => self.probe_epochs = num(f, v)?,
            ("probe", "lr") => self.probe_lr = num(f, v)?,
            ("probe", "batch_size") => self.probe_batch_size = num(f, v)?,
            ("probe", "baseline_seeds") => self.baseline_seeds = num(f, v)?,
            ("run", "seeds") => {
                self.seeds = v
                    .split(',')
                    .map(|s| num("run.seeds", s.trim()))
                    .collect::<Result<_>>()?;
            }
            ("run", "out") => self.out = v.to_string(),
            ("run", "eval_unseen") => self.eval_unseen = boolean(f, v)?,
            ("run", "bwt_convention") => self.bwt_convention = BwtConvention::parse(v)?,
            ("compare", "schedules") => {
                self.compare_schedules = v
                    .split(',')
                    .map(ScheduleKind::parse)
                    .collect::<Result<_>>()?;
            }
            _ => {
                return Err(CptError::config(field, "unknown key"));
            }
        }
        Ok(())
    }

    /// Canonical file form; `parse(to_text(c)) == c`.
    pub fn to_text(&self) -> String {
        let seeds = self
            .seeds
            .iter()
            .map(|s| s.to_string())
            .collect::<Vec<_>>()
            .join(",");
        let schedules = self
            .compare_schedules
            .iter()
            .map(|s| s.to_string())
            .collect::<Vec<_>>()
            .join(",");
        format!(
            "[schedule]\nkind = {}\neta_max = {}\neta_min = {}\neta_const = {}\n\
             steps_per_task = {}\nwarmup_frac = {}\ncooldown_frac = {}\nconstant_frac = {}\n\
             anneal_convention = {}\n\n\
             [tasks]\ncount = {}\nshift_angle = {}\nanneal_fork = {}\nanneal_equal_mix = {}\n\n\
             [data]\ndim = {}\npatches = {}\nclusters = {}\nnoise = {}\ntrain_samples = {}\n\
             probe_train_samples = {}\nprobe_eval_samples = {}\n\n\
             [model]\nhidden = {}\nlatent = {}\nmask_ratio = {}\n\n\
             [train]\nbaseline = {}\nbatch_size = {}\nreplay_fraction = {}\nbuffer_fraction = {}\n\
             weight_decay = {}\nmas_lambda = {}\nmas_sample = {}\nlwf_alpha = {}\ngdumb_epochs = {}\n\n\
             [probe]\nepochs = {}\nlr = {}\nbatch_size = {}\nbaseline_seeds = {}\n\n\
             [run]\nseeds = {}\nout = {}\neval_unseen = {}\nbwt_convention = {}\n\n\
             [compare]\nschedules = {}\n",
            self.kind,
            self.eta_max,
            self.eta_min,
            self.eta_const,
            self.steps_per_task,
            self.warmup_frac,
            self.cooldown_frac,
            self.constant_frac,
            self.anneal_convention,
            self.task_count,
            self.shift_angle,
            self.anneal_fork,
            self.anneal_equal_mix,
            self.dim,
            self.patches,
            self.clusters,
            self.noise,
            self.train_samples,
            self.probe_train_samples,
            self.probe_eval_samples,
            self.hidden,
            self.latent,
            self.mask_ratio,
            self.baseline,
            self.batch_size,
            self.replay_fraction,
            self.buffer_fraction,
            self.weight_decay,
            self.mas_lambda,
            self.mas_sample,
            self.lwf_alpha,
            self.gdumb_epochs,
            self.probe_epochs,
            self.probe_lr,
            self.probe_batch_size,
            self.baseline_seeds,
            seeds,
            self.out,
            self.eval_unseen,
            self.bwt_convention,
            schedules,
        )
    }

    /// The schedule spec for `kind` (defaults to the configured kind).
    pub fn schedule_spec(&self, kind: Option<ScheduleKind>) -> Result<ScheduleSpec> {
        match kind.unwrap_or(self.kind) {
            ScheduleKind::InfiniteCosine => ScheduleSpec::infinite_from_fractions(
                self.eta_max,
                self.eta_min,
                self.eta_const,
                self.steps_per_task,
                self.warmup_frac,
                self.cooldown_frac,
                self.constant_frac,
                self.anneal_convention,
            ),
            ScheduleKind::RepeatedCosineWarmup => ScheduleSpec::repeated_cosine(
                self.eta_max,
                self.eta_min,
                (self.warmup_frac * self.steps_per_task as f64).floor() as u64,
                self.steps_per_task,
            ),
            ScheduleKind::Constant => ScheduleSpec::constant(self.eta_const, self.steps_per_task),
        }
    }

    /// Task plans for the configured count/flags, replay active only under ER.
    pub fn task_plans(&self) -> Vec<TaskPlan> {
        let mut plans = TaskPlan::sequence(self.task_count, self.steps_per_task);
        for p in plans.iter_mut() {
            if self.baseline == Baseline::Er && p.task_id > 0 {
                p.replay_ratio = self.replay_fraction;
            }
            p.anneal_fork = self.anneal_fork;
            p.anneal_equal_mix = self.anneal_equal_mix;
        }
        plans
    }

    pub fn dims(&self) -> Result<ModelDims> {
        ModelDims::new(self.dim, self.patches, self.hidden, self.latent)
    }

    /// The data generator for one run seed.
    pub fn mixture_spec(&self, seed: u64) -> MixtureSpec {
        MixtureSpec {
            dim: self.dim,
            clusters: self.clusters,
            noise: self.noise,
            shift_angle: self.shift_angle,
            seed,
        }
    }

    pub fn probe_config(&self, seed: u64) -> ProbeConfig {
        ProbeConfig {
            epochs: self.probe_epochs,
            lr: self.probe_lr,
            batch_size: self.probe_batch_size,
            seed,
        }
    }

    /// Check every cross-field constraint; pure function of the value.
    pub fn validate(&self) -> Result<()> {
        self.schedule_spec(None)
            .map_err(|e| CptError::config("schedule", e.to_string()))?;
        if self.kind == ScheduleKind::InfiniteCosine {
            let spec = self.schedule_spec(None)?;
            if self.steps_per_task <= spec.t_anneal {
                return Err(CptError::config(
                    "schedule.steps_per_task",
                    "continuation tasks need more steps than the annealing tail",
                ));
            }
        }
        if self.task_count == 0 {
            return Err(CptError::config("tasks.count", "need at least one task"));
        }
        if self.baseline == Baseline::Gdumb && self.kind == ScheduleKind::InfiniteCosine {
            return Err(CptError::config(
                "train.baseline",
                "gdumb retrains from scratch each task and has no continuation to fork; \
                 pair it with the repeated_cosine schedule",
            ));
        }
        self.dims()
            .map_err(|e| CptError::config("model", e.to_string()))?;
        self.mixture_spec(0)
            .validate()
            .map_err(|e| CptError::config("data", e.to_string()))?;
        let d = self.dims()?;
        let masked = (self.mask_ratio * d.patches as f64).floor() as usize;
        if masked == 0 || masked >= d.patches {
            return Err(CptError::config(
                "model.mask_ratio",
                format!(
                    "ratio {} over {} patches leaves no masked or no visible patch",
                    self.mask_ratio, d.patches
                ),
            ));
        }
        if self.batch_size == 0 {
            return Err(CptError::config("train.batch_size", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.replay_fraction) {
            return Err(CptError::config("train.replay_fraction", "outside [0, 1]"));
        }
        if !(self.buffer_fraction > 0.0 && self.buffer_fraction <= 1.0) {
            return Err(CptError::config("train.buffer_fraction", "outside (0, 1]"));
        }
        if self.weight_decay < 0.0 || self.mas_lambda < 0.0 || self.lwf_alpha < 0.0 {
            return Err(CptError::config(
                "train",
                "weight_decay, mas_lambda, lwf_alpha must be non-negative",
            ));
        }
        if self.mas_sample == 0 {
            return Err(CptError::config("train.mas_sample", "must be positive"));
        }
        if self.gdumb_epochs == 0 {
            return Err(CptError::config("train.gdumb_epochs", "must be positive"));
        }
        if self.train_samples == 0
            || self.probe_train_samples == 0
            || self.probe_eval_samples == 0
        {
            return Err(CptError::config("data", "sample pool sizes must be positive"));
        }
        self.probe_config(0)
            .validate()
            .map_err(|e| CptError::config("probe", e.to_string()))?;
        if self.baseline_seeds == 0 {
            return Err(CptError::config("probe.baseline_seeds", "must be positive"));
        }
        if self.seeds.is_empty() {
            return Err(CptError::config("run.seeds", "need at least one seed"));
        }
        if self.out.is_empty() {
            return Err(CptError::config("run.out", "output directory is empty"));
        }
        Ok(())
    }
}
