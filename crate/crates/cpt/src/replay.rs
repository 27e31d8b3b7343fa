//! Replay-buffer storage and batch-composition policies.
//!
//! The buffer is a bounded reservoir over a sample stream with per-task
//! provenance. Composition policies are exact in count — only sample
//! identities are random — including the equal-proportion annealing mix.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{CptError, Result};

pub type TaskId = u64;

/// Buffer capacity for one task's dataset: `floor(fraction * dataset_size)`,
/// clamped to at least one slot.
pub fn buffer_capacity(dataset_size: u64, fraction: f64) -> Result<usize> {
    if dataset_size == 0 {
        return Err(CptError::Policy("dataset_size must be positive".into()));
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(CptError::Policy(format!(
            "buffer fraction {fraction} outside (0, 1]"
        )));
    }
    Ok(((fraction * dataset_size as f64).floor() as usize).max(1))
}

/// One stored sample with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct BufferEntry<S> {
    pub payload: S,
    pub task_id: TaskId,
    /// Position of the sample in its task's stream, for audit manifests.
    pub sample_index: u64,
}

/// Bounded sample store with uniform-reservoir and stratified update rules.
#[derive(Debug, Clone)]
pub struct ReplayBuffer<S> {
    capacity: usize,
    entries: Vec<BufferEntry<S>>,
    seen_total: u64,
    seen_per_task: BTreeMap<TaskId, u64>,
}

impl<S: Clone> ReplayBuffer<S> {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(CptError::Policy("buffer capacity must be positive".into()));
        }
        Ok(ReplayBuffer {
            capacity,
            entries: Vec::with_capacity(capacity),
            seen_total: 0,
            seen_per_task: BTreeMap::new(),
        })
    }

    /// Assemble a draw-only view over existing entries, e.g. the union of
    /// several per-task buffers; capacity equals the entry count.
    pub fn from_entries(entries: Vec<BufferEntry<S>>) -> Result<Self> {
        if entries.is_empty() {
            return Err(CptError::Policy("merged buffer has no entries".into()));
        }
        let mut seen_per_task = BTreeMap::new();
        for e in &entries {
            *seen_per_task.entry(e.task_id).or_insert(0) += 1;
        }
        Ok(ReplayBuffer {
            capacity: entries.len(),
            seen_total: entries.len() as u64,
            entries,
            seen_per_task,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn seen_total(&self) -> u64 {
        self.seen_total
    }

    pub fn entries(&self) -> &[BufferEntry<S>] {
        &self.entries
    }

    /// Stored entries per source task.
    pub fn task_counts(&self) -> BTreeMap<TaskId, usize> {
        let mut counts = BTreeMap::new();
        for e in &self.entries {
            *counts.entry(e.task_id).or_insert(0) += 1;
        }
        counts
    }

    /// Reservoir update: the first B stream items fill the buffer; afterwards
    /// item k replaces a uniformly chosen slot with probability B/k, so every
    /// stream item is retained with probability exactly B/k.
    pub fn update_uniform(
        &mut self,
        payload: S,
        task_id: TaskId,
        sample_index: u64,
        rng: &mut ChaCha8Rng,
    ) {
        self.seen_total += 1;
        *self.seen_per_task.entry(task_id).or_insert(0) += 1;
        let entry = BufferEntry {
            payload,
            task_id,
            sample_index,
        };
        if self.entries.len() < self.capacity {
            self.entries.push(entry);
            return;
        }
        let j = rng.random_range(0..self.seen_total);
        if (j as usize) < self.capacity {
            self.entries[j as usize] = entry;
        }
    }

    /// Stratified update: keeps per-task counts equal up to the capacity
    /// remainder (lower task ids absorb the extra slots) and stays uniform
    /// within each task via a per-task reservoir.
    pub fn update_stratified(
        &mut self,
        payload: S,
        task_id: TaskId,
        sample_index: u64,
        rng: &mut ChaCha8Rng,
    ) {
        self.seen_total += 1;
        let seen_t = self.seen_per_task.entry(task_id).or_insert(0);
        *seen_t += 1;
        let seen_t = *seen_t;
        let quota = self.quota(task_id);
        let count_t = self
            .entries
            .iter()
            .filter(|e| e.task_id == task_id)
            .count() as u64;
        let entry = BufferEntry {
            payload,
            task_id,
            sample_index,
        };
        if self.entries.len() < self.capacity {
            self.entries.push(entry);
            return;
        }
        if count_t < quota {
            // Full but under-represented: evict from the most over-quota task.
            if let Some(victim) = self.eviction_victim(rng) {
                self.entries[victim] = entry;
            }
            return;
        }
        // At quota: per-task reservoir over this task's stream.
        let j = rng.random_range(0..seen_t);
        if j < quota {
            let slots: Vec<usize> = self
                .entries
                .iter()
                .enumerate()
                .filter(|(_, e)| e.task_id == task_id)
                .map(|(i, _)| i)
                .collect();
            self.entries[slots[j as usize]] = entry;
        }
    }

    /// Balanced share for `task_id` among all tasks seen so far: B/k, with
    /// the remainder spread over the lowest task ids.
    fn quota(&self, task_id: TaskId) -> u64 {
        let k = self.seen_per_task.len() as u64;
        let base = self.capacity as u64 / k;
        let remainder = self.capacity as u64 % k;
        let rank = self
            .seen_per_task
            .keys()
            .position(|t| *t == task_id)
            .unwrap_or(0) as u64;
        base + u64::from(rank < remainder)
    }

    /// Uniformly chosen entry of the task furthest above its quota.
    fn eviction_victim(&self, rng: &mut ChaCha8Rng) -> Option<usize> {
        let counts = self.task_counts();
        let over = counts
            .iter()
            .map(|(t, c)| (*t, *c as i64 - self.quota(*t) as i64))
            .max_by_key(|(t, excess)| (*excess, std::cmp::Reverse(*t)))?;
        let slots: Vec<usize> = self
            .entries
            .iter()
            .enumerate()
            .filter(|(_, e)| e.task_id == over.0)
            .map(|(i, _)| i)
            .collect();
        if slots.is_empty() {
            return None;
        }
        Some(slots[rng.random_range(0..slots.len() as u64) as usize])
    }

    /// Audit manifest: one `task_id,sample_index` line per entry.
    pub fn manifest(&self) -> String {
        let mut out = format!("capacity={} entries={}\n", self.capacity, self.entries.len());
        for e in &self.entries {
            out.push_str(&format!("{},{}\n", e.task_id, e.sample_index));
        }
        out
    }
}

/// Parse a buffer manifest back into (task_id, sample_index) pairs.
pub fn parse_manifest(text: &str) -> Result<Vec<(TaskId, u64)>> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| CptError::Parse("empty manifest".into()))?;
    if !header.starts_with("capacity=") {
        return Err(CptError::Parse(format!("bad manifest header: {header}")));
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let (t, i) = l
                .split_once(',')
                .ok_or_else(|| CptError::Parse(format!("bad manifest line: {l}")))?;
            Ok((
                t.trim()
                    .parse()
                    .map_err(|e| CptError::Parse(format!("bad task id `{t}`: {e}")))?,
                i.trim()
                    .parse()
                    .map_err(|e| CptError::Parse(format!("bad sample index `{i}`: {e}")))?,
            ))
        })
        .collect()
}

/// How to split one batch between the current task and the buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchComposition {
    pub batch_size: usize,
    /// Share of the batch drawn from the current task (rounded half up).
    pub fraction_current: f64,
    /// Optional explicit buffer split; fractions must sum to 1 together with
    /// `fraction_current`. Counts use floor, remainder goes to the current task.
    pub per_task_fractions: Option<Vec<(TaskId, f64)>>,
}

impl BatchComposition {
    pub fn new(batch_size: usize, fraction_current: f64) -> Result<Self> {
        if batch_size == 0 {
            return Err(CptError::Policy("batch_size must be positive".into()));
        }
        if !(0.0..=1.0).contains(&fraction_current) {
            return Err(CptError::Policy(format!(
                "fraction_current {fraction_current} outside [0, 1]"
            )));
        }
        Ok(BatchComposition {
            batch_size,
            fraction_current,
            per_task_fractions: None,
        })
    }

    pub fn with_per_task(mut self, fractions: Vec<(TaskId, f64)>) -> Result<Self> {
        let total: f64 = self.fraction_current + fractions.iter().map(|(_, f)| f).sum::<f64>();
        if (total - 1.0).abs() > 1e-9 {
            return Err(CptError::Policy(format!(
                "per-task fractions and fraction_current sum to {total}, expected 1"
            )));
        }
        self.per_task_fractions = Some(fractions);
        Ok(self)
    }

    /// Current-task sample count: `round(fraction_current * batch_size)`,
    /// rounding half up.
    pub fn current_count(&self) -> usize {
        (self.fraction_current * self.batch_size as f64 + 0.5).floor() as usize
    }
}

/// Draw one batch: `current_count()` samples uniformly from the current pool
/// and the remainder uniformly from the buffer (per-task when an explicit
/// split is given), then shuffle the order.
pub fn compose_batch<S: Clone>(
    current_pool: &[S],
    current_task: TaskId,
    buf: &ReplayBuffer<S>,
    comp: &BatchComposition,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<(S, TaskId)>> {
    let n_current = comp.current_count();
    let n_buffer = comp.batch_size - n_current.min(comp.batch_size);
    if n_current > 0 && current_pool.is_empty() {
        return Err(CptError::Policy("current-task pool is empty".into()));
    }
    if n_buffer > 0 && buf.is_empty() {
        return Err(CptError::Policy(format!(
            "replay fraction {} requested but the buffer is empty",
            1.0 - comp.fraction_current
        )));
    }
    let mut batch = Vec::with_capacity(comp.batch_size);
    for _ in 0..n_current {
        let idx = rng.random_range(0..current_pool.len() as u64) as usize;
        batch.push((current_pool[idx].clone(), current_task));
    }
    match &comp.per_task_fractions {
        None => {
            for _ in 0..n_buffer {
                let idx = rng.random_range(0..buf.len() as u64) as usize;
                let e = &buf.entries()[idx];
                batch.push((e.payload.clone(), e.task_id));
            }
        }
        Some(fractions) => {
            let mut drawn = 0usize;
            for (task, f) in fractions {
                let count = (f * comp.batch_size as f64).floor() as usize;
                let slots: Vec<usize> = buf
                    .entries()
                    .iter()
                    .enumerate()
                    .filter(|(_, e)| e.task_id == *task)
                    .map(|(i, _)| i)
                    .collect();
                if slots.is_empty() && count > 0 {
                    return Err(CptError::Policy(format!(
                        "no buffer entries for task {task}"
                    )));
                }
                for _ in 0..count {
                    let idx = slots[rng.random_range(0..slots.len() as u64) as usize];
                    let e = &buf.entries()[idx];
                    batch.push((e.payload.clone(), e.task_id));
                }
                drawn += count;
            }
            // Rounding remainder tops up from the current task.
            for _ in drawn..n_buffer {
                let idx = rng.random_range(0..current_pool.len() as u64) as usize;
                batch.push((current_pool[idx].clone(), current_task));
            }
        }
    }
    batch.shuffle(rng);
    Ok(batch)
}

/// One task's drawable pool for the annealing mix; the last pool passed to
/// `annealing_mix` is the current task.
#[derive(Debug, Clone, Copy)]
pub struct TaskPool<'a, S> {
    pub task_id: TaskId,
    pub samples: &'a [S],
}

/// Equal-proportion batch over all tasks so far: `floor(batch_size / k)` per
/// task, remainder assigned to the current (last) task.
pub fn annealing_mix<S: Clone>(
    pools: &[TaskPool<'_, S>],
    batch_size: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<(S, TaskId)>> {
    if pools.is_empty() {
        return Err(CptError::Policy("annealing mix needs at least one task".into()));
    }
    if batch_size == 0 {
        return Err(CptError::Policy("batch_size must be positive".into()));
    }
    for p in pools {
        if p.samples.is_empty() {
            return Err(CptError::Policy(format!(
                "no pool available for task {}",
                p.task_id
            )));
        }
    }
    let k = pools.len();
    let base = batch_size / k;
    let remainder = batch_size - base * k;
    let mut batch = Vec::with_capacity(batch_size);
    for (rank, pool) in pools.iter().enumerate() {
        let count = base + if rank == k - 1 { remainder } else { 0 };
        for _ in 0..count {
            let idx = rng.random_range(0..pool.samples.len() as u64) as usize;
            batch.push((pool.samples[idx].clone(), pool.task_id));
        }
    }
    batch.shuffle(rng);
    Ok(batch)
}
