//! Composition of per-task schedules into one multi-task training timeline.
//!
//! Under the infinite schedule, task 0 runs the full four-phase curve and
//! every later task resumes from the constant plateau: (n_steps - t_a) steps
//! at eta_const followed by t_a annealing steps, with no rewarming. Under the
//! repeated-cosine baseline every task runs its own warmup-then-cosine cycle.
//! Tapes hold the lr used by each optimizer step: entry k of a segment is the
//! schedule evaluated at segment-local step k+1.

use crate::checkpoint::CheckpointKind;
use crate::error::{CptError, Result};
use crate::schedule::{Phase, ScheduleKind, ScheduleSpec};

/// Role of a task within the timeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskRole {
    Initial,
    Continuation,
}

/// One task's slot in the timeline plus its data-policy knobs.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskPlan {
    pub task_id: u64,
    pub n_steps: u64,
    pub role: TaskRole,
    /// Fraction of each batch drawn from the replay buffer.
    pub replay_ratio: f64,
    /// Fork an annealed branch at the task's annealing boundary.
    pub anneal_fork: bool,
    /// Use the equal-proportion mix over all tasks during annealing.
    pub anneal_equal_mix: bool,
    /// Continuation annealing duration, if different from the spec's t_a.
    pub t_anneal_override: Option<u64>,
}

impl TaskPlan {
    pub fn new(task_id: u64, n_steps: u64, role: TaskRole) -> TaskPlan {
        TaskPlan {
            task_id,
            n_steps,
            role,
            replay_ratio: 0.0,
            anneal_fork: false,
            anneal_equal_mix: false,
            t_anneal_override: None,
        }
    }

    /// Standard plan list: task 0 Initial, the rest Continuations, all with
    /// the same step budget.
    pub fn sequence(count: u64, n_steps: u64) -> Vec<TaskPlan> {
        (0..count)
            .map(|id| {
                let role = if id == 0 {
                    TaskRole::Initial
                } else {
                    TaskRole::Continuation
                };
                TaskPlan::new(id, n_steps, role)
            })
            .collect()
    }
}

/// One task's stretch of the timeline with its evaluated tapes.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub task_id: u64,
    /// Global steps completed before this segment starts.
    pub start_global: u64,
    /// The schedule this segment is evaluated under (segment-local steps).
    pub spec: ScheduleSpec,
    /// lr_tape[k] = lr used by local step k+1.
    pub lr_tape: Vec<f64>,
    pub phase_tape: Vec<Phase>,
}

impl Segment {
    pub fn n_steps(&self) -> u64 {
        self.lr_tape.len() as u64
    }

    /// Local step (1-based) at which annealing starts, i.e. the constant
    /// segment length; equals n_steps when the segment never anneals.
    pub fn anneal_start_local(&self) -> u64 {
        self.phase_tape
            .iter()
            .position(|p| *p == Phase::Annealing)
            .map(|i| i as u64)
            .unwrap_or(self.n_steps())
    }
}

/// Checkpoint position the trainer must honor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Marker {
    pub global_step: u64,
    pub kind: CheckpointKind,
    pub task_id: u64,
}

/// Ordered segments plus checkpoint markers covering the whole run.
#[derive(Debug, Clone, PartialEq)]
pub struct Timeline {
    pub segments: Vec<Segment>,
    pub markers: Vec<Marker>,
}

impl Timeline {
    pub fn total_steps(&self) -> u64 {
        self.segments.iter().map(Segment::n_steps).sum()
    }
}

/// Schedule for a continuation task: constant at eta_const, then t_a
/// annealing steps. Built as a degenerate infinite spec (no warmup, no
/// cooldown) so tapes stay bitwise consistent with the schedule evaluator.
fn continuation_spec(spec: &ScheduleSpec, n_steps: u64, t_anneal: u64) -> ScheduleSpec {
    ScheduleSpec {
        kind: ScheduleKind::InfiniteCosine,
        eta_max: spec.eta_max,
        eta_min: spec.eta_min,
        eta_const: spec.eta_const,
        n_warmup: 0,
        n_cooldown_end: 0,
        n_decay_start: n_steps - t_anneal,
        t_anneal,
        n_total: n_steps,
        anneal_convention: spec.anneal_convention,
    }
}

fn evaluate_segment(task_id: u64, start_global: u64, spec: ScheduleSpec) -> Result<Segment> {
    let n = spec.n_total;
    let mut lr_tape = Vec::with_capacity(n as usize);
    let mut phase_tape = Vec::with_capacity(n as usize);
    for local in 1..=n {
        lr_tape.push(spec.lr_at(local)?);
        phase_tape.push(spec.phase_at(local)?);
    }
    Ok(Segment {
        task_id,
        start_global,
        spec,
        lr_tape,
        phase_tape,
    })
}

/// Compose the full timeline for `tasks` under `spec`.
pub fn compose_timeline(tasks: &[TaskPlan], spec: &ScheduleSpec) -> Result<Timeline> {
    if tasks.is_empty() {
        return Err(CptError::InvalidPlan("timeline needs at least one task".into()));
    }
    spec.validate()?;
    for (i, t) in tasks.iter().enumerate() {
        if t.task_id != i as u64 {
            return Err(CptError::InvalidPlan(format!(
                "task ids must be consecutive from 0; slot {i} holds task {}",
                t.task_id
            )));
        }
        if t.n_steps == 0 {
            return Err(CptError::InvalidPlan(format!("task {i} has no steps")));
        }
        if !(0.0..=1.0).contains(&t.replay_ratio) {
            return Err(CptError::InvalidPlan(format!(
                "task {i} replay ratio {} outside [0, 1]",
                t.replay_ratio
            )));
        }
    }

    let mut segments = Vec::with_capacity(tasks.len());
    let mut markers = Vec::new();
    let mut global = 0u64;
    match spec.kind {
        ScheduleKind::Constant => {
            return Err(CptError::InvalidPlan(
                "timelines are defined for the infinite and repeated-cosine schedules only".into(),
            ));
        }
        ScheduleKind::InfiniteCosine => {
            for t in tasks {
                let initial = t.task_id == 0;
                if initial != (t.role == TaskRole::Initial) {
                    return Err(CptError::InvalidPlan(format!(
                        "task {} must have role {} under the infinite schedule",
                        t.task_id,
                        if initial { "initial" } else { "continuation" }
                    )));
                }
                let seg = if initial {
                    if t.n_steps != spec.n_total {
                        return Err(CptError::InvalidPlan(format!(
                            "task 0 runs the full schedule: n_steps {} must equal the budget {}",
                            t.n_steps, spec.n_total
                        )));
                    }
                    evaluate_segment(t.task_id, global, spec.clone())?
                } else {
                    let t_anneal = t.t_anneal_override.unwrap_or(spec.t_anneal);
                    if t.n_steps <= t_anneal {
                        return Err(CptError::InvalidPlan(format!(
                            "continuation task {} has {} steps, needs more than t_a = {}",
                            t.task_id, t.n_steps, t_anneal
                        )));
                    }
                    evaluate_segment(
                        t.task_id,
                        global,
                        continuation_spec(spec, t.n_steps, t_anneal),
                    )?
                };
                let anneal_at = global + seg.spec.n_decay_start;
                markers.push(Marker {
                    global_step: anneal_at,
                    kind: CheckpointKind::PreAnnealed,
                    task_id: t.task_id,
                });
                global += t.n_steps;
                markers.push(Marker {
                    global_step: global,
                    kind: CheckpointKind::Annealed,
                    task_id: t.task_id,
                });
                segments.push(seg);
            }
        }
        ScheduleKind::RepeatedCosineWarmup => {
            for t in tasks {
                // Warmup scales with the task budget (percent-of-task rule).
                let scaled_warmup = spec.n_warmup * t.n_steps / spec.n_total;
                let task_spec = ScheduleSpec::repeated_cosine(
                    spec.eta_max,
                    spec.eta_min,
                    scaled_warmup,
                    t.n_steps,
                )?;
                segments.push(evaluate_segment(t.task_id, global, task_spec)?);
                global += t.n_steps;
                markers.push(Marker {
                    global_step: global,
                    kind: CheckpointKind::Snapshot,
                    task_id: t.task_id,
                });
            }
        }
    }
    Ok(Timeline { segments, markers })
}
