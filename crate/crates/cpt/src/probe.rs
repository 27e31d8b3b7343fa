//! Linear probing: a softmax classifier trained on frozen encoder features.

use rand::seq::SliceRandom;

use crate::error::{CptError, Result};
use crate::model::{features, ModelState};
use crate::optim::OptimizerState;
use crate::rng::derive_rng;
use crate::synthetic::Labeled;

/// Probe training knobs; the learning rate is fixed (no schedule).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(CptError::InvalidInput(
                "probe epochs and batch_size must be positive".into(),
            ));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(CptError::InvalidInput(format!(
                "probe lr {} must be positive",
                self.lr
            )));
        }
        Ok(())
    }
}

fn check_labels(data: &[(Vec<f64>, usize)], classes: usize, what: &str) -> Result<()> {
    if data.is_empty() {
        return Err(CptError::InvalidInput(format!("{what} set is empty")));
    }
    if let Some((_, bad)) = data.iter().find(|(_, y)| *y >= classes) {
        return Err(CptError::InvalidInput(format!(
            "{what} label {bad} out of range for {classes} classes"
        )));
    }
    Ok(())
}

fn logits(params: &[f64], classes: usize, f: &[f64], out: &mut [f64]) {
    let fdim = f.len();
    for c in 0..classes {
        let row = &params[c * fdim..(c + 1) * fdim];
        out[c] = row.iter().zip(f).map(|(w, x)| w * x).sum::<f64>() + params[classes * fdim + c];
    }
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in xs.iter().enumerate() {
        if *x > xs[best] {
            best = i;
        }
    }
    best
}

/// Train a softmax classifier with cross-entropy on fixed feature vectors and
/// return held-out accuracy in [0, 1].
pub fn train_linear_classifier(
    train: &[(Vec<f64>, usize)],
    eval: &[(Vec<f64>, usize)],
    classes: usize,
    cfg: &ProbeConfig,
) -> Result<f64> {
    cfg.validate()?;
    if classes < 2 {
        return Err(CptError::InvalidInput("probe needs at least 2 classes".into()));
    }
    check_labels(train, classes, "probe train")?;
    check_labels(eval, classes, "probe eval")?;
    let first = train[0].1;
    if train.iter().all(|(_, y)| *y == first) {
        return Err(CptError::InvalidInput(
            "probe train set contains a single class".into(),
        ));
    }
    let fdim = train[0].0.len();
    if train.iter().chain(eval).any(|(f, _)| f.len() != fdim) {
        return Err(CptError::InvalidInput(
            "probe feature dimensions are inconsistent".into(),
        ));
    }

    // W[classes x fdim] then b[classes], zero-initialized.
    let mut params = vec![0.0; classes * fdim + classes];
    let mut opt = OptimizerState::new(params.len(), 0.0);
    let mut probs = vec![0.0; classes];
    let mut step = 0u64;
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        let mut rng = derive_rng(cfg.seed, "probe-epoch", &[epoch as u64]);
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let mut grads = vec![0.0; params.len()];
            for &idx in chunk {
                let (f, y) = &train[idx];
                logits(&params, classes, f, &mut probs);
                let max = probs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut z = 0.0;
                for p in probs.iter_mut() {
                    *p = (*p - max).exp();
                    z += *p;
                }
                for (c, p) in probs.iter().enumerate() {
                    let d = (p / z - f64::from(u8::from(c == *y))) / chunk.len() as f64;
                    for (g, xf) in grads[c * fdim..(c + 1) * fdim].iter_mut().zip(f) {
                        *g += d * xf;
                    }
                    grads[classes * fdim + c] += d;
                }
            }
            opt.step(&mut params, &grads, cfg.lr, step)?;
            step += 1;
        }
    }

    let mut correct = 0usize;
    for (f, y) in eval {
        logits(&params, classes, f, &mut probs);
        if argmax(&probs) == *y {
            correct += 1;
        }
    }
    Ok(correct as f64 / eval.len() as f64)
}

/// Probe a frozen encoder: extract features for both splits, train the linear
/// head, return held-out accuracy. The model is never mutated.
pub fn linear_probe(
    model: &ModelState,
    train: &[Labeled],
    eval: &[Labeled],
    classes: usize,
    cfg: &ProbeConfig,
) -> Result<f64> {
    let featurize = |data: &[Labeled]| -> Result<Vec<(Vec<f64>, usize)>> {
        data.iter()
            .map(|s| Ok((features(model, &s.x)?, s.label)))
            .collect()
    };
    train_linear_classifier(&featurize(train)?, &featurize(eval)?, classes, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelDims;
    use crate::rng::derive_rng;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    fn cfg() -> ProbeConfig {
        ProbeConfig {
            epochs: 30,
            lr: 0.05,
            batch_size: 32,
            seed: 5,
        }
    }

    fn gaussian_features(
        n: usize,
        center: &[f64],
        sigma: f64,
        label: usize,
        seed: u64,
    ) -> Vec<(Vec<f64>, usize)> {
        let mut rng = derive_rng(seed, "probe-test", &[]);
        let dist = Normal::new(0.0, sigma).unwrap();
        (0..n)
            .map(|_| {
                let f: Vec<f64> = center.iter().map(|c| c + dist.sample(&mut rng)).collect();
                (f, label)
            })
            .collect()
    }

    #[test]
    fn separable_features_reach_near_perfect_accuracy() {
        let mut train = gaussian_features(100, &[-2.0, 0.5], 0.2, 0, 1);
        train.extend(gaussian_features(100, &[2.0, -0.5], 0.2, 1, 2));
        let mut eval = gaussian_features(100, &[-2.0, 0.5], 0.2, 0, 3);
        eval.extend(gaussian_features(100, &[2.0, -0.5], 0.2, 1, 4));
        let acc = train_linear_classifier(&train, &eval, 2, &cfg()).unwrap();
        assert!(acc >= 0.99, "separable data scored {acc}");
    }

    #[test]
    fn random_labels_score_at_chance() {
        let mut rng = derive_rng(9, "chance", &[]);
        let dist = Normal::new(0.0, 1.0).unwrap();
        let mut draw = |n: usize| -> Vec<(Vec<f64>, usize)> {
            (0..n)
                .map(|_| {
                    let f: Vec<f64> = (0..4).map(|_| dist.sample(&mut rng)).collect();
                    (f, rng.random_range(0..2u64) as usize)
                })
                .collect()
        };
        let train = draw(600);
        let eval = draw(600);
        let acc = train_linear_classifier(&train, &eval, 2, &cfg()).unwrap();
        assert!(
            (acc - 0.5).abs() <= 0.05,
            "random labels scored {acc}, expected chance level"
        );
    }

    #[test]
    fn degenerate_probe_inputs_are_rejected() {
        let one_class = gaussian_features(50, &[0.0, 0.0], 0.1, 0, 7);
        let eval = gaussian_features(10, &[0.0, 0.0], 0.1, 0, 8);
        assert!(train_linear_classifier(&one_class, &eval, 2, &cfg()).is_err());
        let mut mixed = gaussian_features(50, &[0.0, 0.0], 0.1, 0, 7);
        mixed.extend(gaussian_features(50, &[1.0, 1.0], 0.1, 3, 7));
        assert!(
            train_linear_classifier(&mixed, &eval, 2, &cfg()).is_err(),
            "label 3 out of range for 2 classes"
        );
        assert!(train_linear_classifier(&[], &eval, 2, &cfg()).is_err());
        let ok = {
            let mut t = gaussian_features(50, &[-1.0, 0.0], 0.1, 0, 7);
            t.extend(gaussian_features(50, &[1.0, 0.0], 0.1, 1, 7));
            t
        };
        assert!(train_linear_classifier(&ok, &[], 2, &cfg()).is_err(), "empty eval");
    }

    #[test]
    fn probing_never_touches_the_encoder() {
        let dims = ModelDims::new(8, 4, 6, 3).unwrap();
        let model = ModelState::init(dims, 11);
        let before = model.params.clone();
        let mut rng = derive_rng(12, "probe-frozen", &[]);
        let dist = Normal::new(0.0, 1.0).unwrap();
        let mut draw = |label: usize, n: usize| -> Vec<Labeled> {
            (0..n)
                .map(|_| Labeled {
                    x: (0..8).map(|_| dist.sample(&mut rng) + label as f64).collect(),
                    label,
                })
                .collect()
        };
        let mut train = draw(0, 60);
        train.extend(draw(1, 60));
        let mut eval = draw(0, 20);
        eval.extend(draw(1, 20));
        let acc = linear_probe(&model, &train, &eval, 2, &cfg()).unwrap();
        assert!((0.0..=1.0).contains(&acc));
        let same = model
            .params
            .iter()
            .zip(&before)
            .all(|(a, b)| a.to_bits() == b.to_bits());
        assert!(same, "encoder parameters changed during probing");
    }

    #[test]
    fn probe_accuracy_is_deterministic_in_the_seed() {
        let mut train = gaussian_features(80, &[-1.0, 0.0], 0.5, 0, 21);
        train.extend(gaussian_features(80, &[1.0, 0.0], 0.5, 1, 22));
        let mut eval = gaussian_features(40, &[-1.0, 0.0], 0.5, 0, 23);
        eval.extend(gaussian_features(40, &[1.0, 0.0], 0.5, 1, 24));
        let a = train_linear_classifier(&train, &eval, 2, &cfg()).unwrap();
        let b = train_linear_classifier(&train, &eval, 2, &cfg()).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }
}
