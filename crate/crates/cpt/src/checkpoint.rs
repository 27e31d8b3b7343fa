//! Checkpoint records and their on-disk encoding.
//!
//! A checkpoint is a directory holding `params.bin` and `optimizer.bin`
//! (little-endian f64 vectors with a u64 length prefix) plus `metadata.txt`
//! (key = value lines: step/kind/task, schedule position, RNG state as hex).

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{CptError, Result};
use crate::rng::RngState;

/// Why a checkpoint exists: the two schedule-boundary kinds plus plain
/// periodic snapshots with no policy semantics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckpointKind {
    /// End of the constant phase, before annealing: resumable at eta_const.
    PreAnnealed,
    /// After annealing completes: the deployable model at eta_min.
    Annealed,
    /// Any other saved position (task ends of the cosine baseline, periodic saves).
    Snapshot,
}

impl fmt::Display for CheckpointKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            CheckpointKind::PreAnnealed => "pre_annealed",
            CheckpointKind::Annealed => "annealed",
            CheckpointKind::Snapshot => "snapshot",
        };
        f.write_str(s)
    }
}

impl FromStr for CheckpointKind {
    type Err = CptError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "pre_annealed" => Ok(CheckpointKind::PreAnnealed),
            "annealed" => Ok(CheckpointKind::Annealed),
            "snapshot" => Ok(CheckpointKind::Snapshot),
            other => Err(CptError::Parse(format!("unknown checkpoint kind `{other}`"))),
        }
    }
}

/// Full training position: parameters, optimizer moments, generator state.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointRecord {
    pub global_step: u64,
    pub kind: CheckpointKind,
    pub task_id: u64,
    /// Steps completed inside the task when the checkpoint was taken.
    pub local_step: u64,
    /// Learning rate of the last completed step.
    pub lr: f64,
    pub params: Vec<f64>,
    pub opt_m: Vec<f64>,
    pub opt_v: Vec<f64>,
    pub opt_t: u64,
    pub rng: RngState,
}

/// Write a length-prefixed little-endian f64 vector.
pub fn write_f64_file(path: &Path, values: &[f64]) -> Result<()> {
    let mut bytes = Vec::with_capacity(8 + values.len() * 8);
    bytes.extend_from_slice(&(values.len() as u64).to_le_bytes());
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes)?;
    Ok(())
}

/// Read a vector written by `write_f64_file`, validating the length prefix.
pub fn read_f64_file(path: &Path) -> Result<Vec<f64>> {
    let bytes = fs::read(path)?;
    if bytes.len() < 8 {
        return Err(CptError::Parse(format!(
            "{}: too short for a length prefix",
            path.display()
        )));
    }
    let count = u64::from_le_bytes(bytes[..8].try_into().expect("8 bytes")) as usize;
    if bytes.len() != 8 + count * 8 {
        return Err(CptError::Parse(format!(
            "{}: length prefix {count} does not match {} payload bytes",
            path.display(),
            bytes.len() - 8
        )));
    }
    Ok(bytes[8..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect())
}

impl CheckpointRecord {
    /// Persist into `dir` (created if missing) as params/optimizer/metadata.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        write_f64_file(&dir.join("params.bin"), &self.params)?;
        let mut opt = Vec::with_capacity(self.opt_m.len() * 2);
        opt.extend_from_slice(&self.opt_m);
        opt.extend_from_slice(&self.opt_v);
        write_f64_file(&dir.join("optimizer.bin"), &opt)?;
        let meta = format!(
            "global_step = {}\nkind = {}\ntask_id = {}\nlocal_step = {}\nlr = {}\nopt_t = {}\nrng = {}\n",
            self.global_step,
            self.kind,
            self.task_id,
            self.local_step,
            self.lr,
            self.opt_t,
            self.rng.to_hex(),
        );
        fs::write(dir.join("metadata.txt"), meta)?;
        Ok(())
    }

    /// Load a checkpoint saved by `save`.
    pub fn load(dir: &Path) -> Result<CheckpointRecord> {
        let params = read_f64_file(&dir.join("params.bin"))?;
        let opt = read_f64_file(&dir.join("optimizer.bin"))?;
        if opt.len() % 2 != 0 {
            return Err(CptError::Parse(format!(
                "{}: optimizer file holds {} values, expected an even count",
                dir.display(),
                opt.len()
            )));
        }
        let (m, v) = opt.split_at(opt.len() / 2);
        let meta = fs::read_to_string(dir.join("metadata.txt"))?;
        let field = |key: &str| -> Result<String> {
            meta.lines()
                .find_map(|l| {
                    let (k, v) = l.split_once('=')?;
                    (k.trim() == key).then(|| v.trim().to_string())
                })
                .ok_or_else(|| CptError::Parse(format!("metadata missing `{key}`")))
        };
        let parse_u64 = |key: &str| -> Result<u64> {
            field(key)?
                .parse()
                .map_err(|e| CptError::Parse(format!("metadata `{key}`: {e}")))
        };
        let lr: f64 = field("lr")?
            .parse()
            .map_err(|e| CptError::Parse(format!("metadata `lr`: {e}")))?;
        Ok(CheckpointRecord {
            global_step: parse_u64("global_step")?,
            kind: field("kind")?.parse()?,
            task_id: parse_u64("task_id")?,
            local_step: parse_u64("local_step")?,
            lr,
            params,
            opt_m: m.to_vec(),
            opt_v: v.to_vec(),
            opt_t: parse_u64("opt_t")?,
            rng: RngState::from_hex(&field("rng")?)?,
        })
    }
}
