//! Synthetic non-IID task stream: Gaussian mixtures under a per-task rotation.
//!
//! Every task draws from the same k-cluster mixture, but task t's samples are
//! mixed through A_t = R^t (A_0 = I), where R rotates by a configurable angle
//! in several random planes. Samples within a task are IID; consecutive tasks
//! shift by exactly one application of R, so the angle controls how non-IID
//! the stream is.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{CptError, Result};
use crate::rng::derive_rng;

/// Labeled sample: input vector plus its source cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct Labeled {
    pub x: Vec<f64>,
    pub label: usize,
}

/// Generator parameters shared by every task in one experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixtureSpec {
    pub dim: usize,
    pub clusters: usize,
    /// Within-cluster noise scale sigma.
    pub noise: f64,
    /// Rotation angle (radians) applied between consecutive tasks.
    pub shift_angle: f64,
    pub seed: u64,
}

impl MixtureSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dim < 2 {
            return Err(CptError::InvalidInput("mixture dim must be >= 2".into()));
        }
        if self.clusters < 2 {
            return Err(CptError::InvalidInput(
                "mixture needs at least 2 clusters".into(),
            ));
        }
        if !(self.noise > 0.0 && self.noise.is_finite()) {
            return Err(CptError::InvalidInput(format!(
                "noise {} must be positive",
                self.noise
            )));
        }
        if !self.shift_angle.is_finite() {
            return Err(CptError::InvalidInput("shift angle must be finite".into()));
        }
        Ok(())
    }
}

/// Sample pools a task exposes; each is an independent RNG stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pool {
    Train,
    ProbeTrain,
    ProbeEval,
}

impl Pool {
    fn stream_id(self) -> u64 {
        match self {
            Pool::Train => 0,
            Pool::ProbeTrain => 1,
            Pool::ProbeEval => 2,
        }
    }
}

/// One task: frozen mixing matrix A_t over the shared cluster means.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTask {
    pub task_id: u64,
    spec: MixtureSpec,
    /// Cluster means, one row of length dim per cluster.
    means: Vec<Vec<f64>>,
    /// Row-major dim x dim mixing matrix A_t.
    mixing: Vec<f64>,
}

fn matmul(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i * n + k];
            if aik == 0.0 {
                continue;
            }
            for j in 0..n {
                out[i * n + j] += aik * b[k * n + j];
            }
        }
    }
    out
}

/// Random orthogonal matrix: Gram-Schmidt over a standard normal draw.
fn random_orthogonal(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let dist = Normal::new(0.0, 1.0).expect("unit sigma");
    loop {
        let raw: Vec<f64> = (0..n * n).map(|_| dist.sample(rng)).collect();
        let mut q: Vec<Vec<f64>> = Vec::with_capacity(n);
        let mut degenerate = false;
        for r in 0..n {
            let mut v: Vec<f64> = raw[r * n..(r + 1) * n].to_vec();
            for prev in &q {
                let dot: f64 = v.iter().zip(prev).map(|(a, b)| a * b).sum();
                for (vi, pi) in v.iter_mut().zip(prev) {
                    *vi -= dot * pi;
                }
            }
            let norm: f64 = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            if norm < 1e-8 {
                degenerate = true;
                break;
            }
            v.iter_mut().for_each(|a| *a /= norm);
            q.push(v);
        }
        if !degenerate {
            return q.into_iter().flatten().collect();
        }
    }
}

/// Rotation by `angle` in the planes (0,1), (2,3), ... conjugated by a random
/// orthogonal basis: R = Q G Q^T, so the rotation planes are generic.
fn shift_rotation(n: usize, angle: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut g = vec![0.0; n * n];
    for i in 0..n {
        g[i * n + i] = 1.0;
    }
    let (c, s) = (angle.cos(), angle.sin());
    let mut i = 0;
    while i + 1 < n {
        g[i * n + i] = c;
        g[i * n + i + 1] = -s;
        g[(i + 1) * n + i] = s;
        g[(i + 1) * n + i + 1] = c;
        i += 2;
    }
    let q = random_orthogonal(n, rng);
    let mut qt = vec![0.0; n * n];
    for r in 0..n {
        for col in 0..n {
            qt[col * n + r] = q[r * n + col];
        }
    }
    matmul(&matmul(&q, &g, n), &qt, n)
}

impl SyntheticTask {
    /// Build task `task_id`: shared means from the spec seed, mixing matrix
    /// A_t = R^t.
    pub fn new(spec: MixtureSpec, task_id: u64) -> Result<SyntheticTask> {
        spec.validate()?;
        let n = spec.dim;
        let mean_dist = Normal::new(0.0, 1.0).expect("unit sigma");
        let mut mean_rng = derive_rng(spec.seed, "mixture-means", &[]);
        let means: Vec<Vec<f64>> = (0..spec.clusters)
            .map(|_| (0..n).map(|_| 2.0 * mean_dist.sample(&mut mean_rng)).collect())
            .collect();
        let mut identity = vec![0.0; n * n];
        for i in 0..n {
            identity[i * n + i] = 1.0;
        }
        let mut mixing = identity;
        if task_id > 0 && spec.shift_angle != 0.0 {
            let mut rot_rng = derive_rng(spec.seed, "mixture-rotation", &[]);
            let r = shift_rotation(n, spec.shift_angle, &mut rot_rng);
            for _ in 0..task_id {
                mixing = matmul(&r, &mixing, n);
            }
        }
        Ok(SyntheticTask {
            task_id,
            spec,
            means,
            mixing,
        })
    }

    pub fn dim(&self) -> usize {
        self.spec.dim
    }

    pub fn clusters(&self) -> usize {
        self.spec.clusters
    }

    /// Row-major mixing matrix A_t (exposed for tests).
    pub fn mixing(&self) -> &[f64] {
        &self.mixing
    }

    /// Draw `n` labeled samples from the given pool's dedicated stream:
    /// x = A_t (mu_c + sigma * eps), label = c.
    pub fn sample_pool(&self, pool: Pool, n: usize) -> Vec<Labeled> {
        let mut rng = derive_rng(
            self.spec.seed,
            "task-pool",
            &[self.task_id, pool.stream_id()],
        );
        let dist = Normal::new(0.0, 1.0).expect("unit sigma");
        let d = self.spec.dim;
        (0..n)
            .map(|_| {
                let c = rng.random_range(0..self.spec.clusters as u64) as usize;
                let raw: Vec<f64> = self.means[c]
                    .iter()
                    .map(|m| m + self.spec.noise * dist.sample(&mut rng))
                    .collect();
                let x: Vec<f64> = self
                    .mixing
                    .chunks_exact(d)
                    .map(|row| row.iter().zip(&raw).map(|(a, b)| a * b).sum())
                    .collect();
                Labeled { x, label: c }
            })
            .collect()
    }
}
