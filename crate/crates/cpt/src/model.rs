//! Masked-reconstruction model with analytic gradients.
//!
//! A sample x in R^d is split into p patches of dimension q = d/p. Each patch
//! goes through a one-hidden-layer encoder (tanh) to a latent vector; visible
//! latents are mean-pooled, combined with a learned mask token, and a linear
//! decoder reconstructs one shared patch estimate. The loss is the squared
//! error on masked patches, averaged over masked entries. Everything lives in
//! one flat parameter vector so the optimizer and checkpoints stay trivial.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{CptError, Result};
use crate::rng::derive_rng;

/// Shape of the model: sample dim, patch count, hidden and latent widths.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    pub dim: usize,
    pub patches: usize,
    pub hidden: usize,
    pub latent: usize,
}

impl ModelDims {
    pub fn new(dim: usize, patches: usize, hidden: usize, latent: usize) -> Result<Self> {
        if dim == 0 || patches == 0 || hidden == 0 || latent == 0 {
            return Err(CptError::InvalidInput("model dims must be positive".into()));
        }
        if patches < 2 {
            return Err(CptError::InvalidInput(
                "need at least 2 patches (one visible, one masked)".into(),
            ));
        }
        if !dim.is_multiple_of(patches) {
            return Err(CptError::InvalidInput(format!(
                "dim {dim} not divisible by patches {patches}"
            )));
        }
        Ok(ModelDims {
            dim,
            patches,
            hidden,
            latent,
        })
    }

    /// Per-patch dimension q = d/p.
    pub fn patch_dim(&self) -> usize {
        self.dim / self.patches
    }

    // Flat layout: W1[h*q] b1[h] W2[l*h] b2[l] mask[l] Wd[q*l] bd[q].
    fn off_w1(&self) -> usize {
        0
    }
    fn off_b1(&self) -> usize {
        self.hidden * self.patch_dim()
    }
    fn off_w2(&self) -> usize {
        self.off_b1() + self.hidden
    }
    fn off_b2(&self) -> usize {
        self.off_w2() + self.latent * self.hidden
    }
    fn off_mask(&self) -> usize {
        self.off_b2() + self.latent
    }
    fn off_wd(&self) -> usize {
        self.off_mask() + self.latent
    }
    fn off_bd(&self) -> usize {
        self.off_wd() + self.patch_dim() * self.latent
    }

    pub fn n_params(&self) -> usize {
        self.off_bd() + self.patch_dim()
    }

    /// Encoder = W1, b1, W2, b2 (the leading blocks of the flat vector).
    pub fn n_encoder_params(&self) -> usize {
        self.off_mask()
    }
}

/// Flat parameter vector plus its shape.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub dims: ModelDims,
    pub params: Vec<f64>,
}

impl ModelState {
    /// Deterministic init: weights N(0, 1/sqrt(fan_in)), biases zero, mask
    /// token N(0, 0.1). Same seed, same parameters, bit for bit.
    pub fn init(dims: ModelDims, seed: u64) -> ModelState {
        let mut rng = derive_rng(seed, "model-init", &[]);
        let q = dims.patch_dim();
        let mut params = vec![0.0; dims.n_params()];
        let mut fill = |lo: usize, n: usize, sigma: f64, rng: &mut rand_chacha::ChaCha8Rng| {
            let dist = Normal::new(0.0, sigma).expect("sigma is finite");
            for slot in params[lo..lo + n].iter_mut() {
                *slot = dist.sample(rng);
            }
        };
        fill(dims.off_w1(), dims.hidden * q, 1.0 / (q as f64).sqrt(), &mut rng);
        fill(
            dims.off_w2(),
            dims.latent * dims.hidden,
            1.0 / (dims.hidden as f64).sqrt(),
            &mut rng,
        );
        fill(dims.off_mask(), dims.latent, 0.1, &mut rng);
        fill(
            dims.off_wd(),
            q * dims.latent,
            1.0 / (dims.latent as f64).sqrt(),
            &mut rng,
        );
        ModelState { dims, params }
    }

    pub fn zeros(dims: ModelDims) -> ModelState {
        ModelState {
            dims,
            params: vec![0.0; dims.n_params()],
        }
    }

    pub fn encoder_params(&self) -> &[f64] {
        &self.params[..self.dims.n_encoder_params()]
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }
}

/// Which patches are hidden from the encoder.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskPattern {
    masked: Vec<bool>,
}

impl MaskPattern {
    /// Mask exactly floor(ratio * p) patches, chosen uniformly without
    /// replacement; at least one patch must stay on each side.
    pub fn sample(patches: usize, ratio: f64, rng: &mut rand_chacha::ChaCha8Rng) -> Result<Self> {
        if !(0.0..=1.0).contains(&ratio) {
            return Err(CptError::InvalidInput(format!(
                "mask ratio {ratio} outside [0, 1]"
            )));
        }
        let n_masked = (ratio * patches as f64).floor() as usize;
        if n_masked == 0 || n_masked >= patches {
            return Err(CptError::InvalidInput(format!(
                "mask ratio {ratio} on {patches} patches leaves no masked or no visible patch"
            )));
        }
        // Partial Fisher-Yates: the first n_masked slots become the mask set.
        let mut idx: Vec<usize> = (0..patches).collect();
        for i in 0..n_masked {
            let j = i + rng.random_range(0..(patches - i) as u64) as usize;
            idx.swap(i, j);
        }
        let mut masked = vec![false; patches];
        for &i in &idx[..n_masked] {
            masked[i] = true;
        }
        Ok(MaskPattern { masked })
    }

    /// Explicit mask set, mainly for tests.
    pub fn from_masked_indices(patches: usize, indices: &[usize]) -> Result<Self> {
        let mut masked = vec![false; patches];
        for &i in indices {
            if i >= patches {
                return Err(CptError::InvalidInput(format!(
                    "masked index {i} out of range for {patches} patches"
                )));
            }
            masked[i] = true;
        }
        let n = masked.iter().filter(|m| **m).count();
        if n == 0 || n >= patches {
            return Err(CptError::InvalidInput(
                "mask must leave at least one masked and one visible patch".into(),
            ));
        }
        Ok(MaskPattern { masked })
    }

    pub fn len(&self) -> usize {
        self.masked.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masked.is_empty()
    }

    pub fn is_masked(&self, patch: usize) -> bool {
        self.masked[patch]
    }

    pub fn n_masked(&self) -> usize {
        self.masked.iter().filter(|m| **m).count()
    }
}

fn matvec(mat: &[f64], rows: usize, cols: usize, x: &[f64], out: &mut [f64]) {
    for r in 0..rows {
        let row = &mat[r * cols..(r + 1) * cols];
        out[r] = row.iter().zip(x).map(|(w, xi)| w * xi).sum();
    }
}

fn matvec_t(mat: &[f64], rows: usize, cols: usize, y: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|o| *o = 0.0);
    for r in 0..rows {
        let row = &mat[r * cols..(r + 1) * cols];
        for c in 0..cols {
            out[c] += row[c] * y[r];
        }
    }
}

fn outer_acc(grad: &mut [f64], y: &[f64], x: &[f64]) {
    for (r, yr) in y.iter().enumerate() {
        let row = &mut grad[r * x.len()..(r + 1) * x.len()];
        for (slot, xc) in row.iter_mut().zip(x) {
            *slot += yr * xc;
        }
    }
}

/// Per-patch encoder activations for one sample.
struct Encoded {
    /// tanh hidden units, one row per patch.
    u: Vec<f64>,
    /// latent outputs, one row per patch.
    z: Vec<f64>,
}

fn encode(model: &ModelState, x: &[f64]) -> Encoded {
    let d = &model.dims;
    let (p, q, h, l) = (d.patches, d.patch_dim(), d.hidden, d.latent);
    let w1 = &model.params[d.off_w1()..d.off_b1()];
    let b1 = &model.params[d.off_b1()..d.off_w2()];
    let w2 = &model.params[d.off_w2()..d.off_b2()];
    let b2 = &model.params[d.off_b2()..d.off_mask()];
    let mut u = vec![0.0; p * h];
    let mut z = vec![0.0; p * l];
    for i in 0..p {
        let xi = &x[i * q..(i + 1) * q];
        let ui = &mut u[i * h..(i + 1) * h];
        matvec(w1, h, q, xi, ui);
        for (slot, b) in ui.iter_mut().zip(b1) {
            *slot = (*slot + b).tanh();
        }
        let zi = &mut z[i * l..(i + 1) * l];
        matvec(w2, l, h, &u[i * h..(i + 1) * h], zi);
        for (slot, b) in zi.iter_mut().zip(b2) {
            *slot += b;
        }
    }
    Encoded { u, z }
}

/// Accumulate encoder gradients for one sample given upstream d(loss)/dz per
/// patch (rows of `g_z`, zero rows are skipped).
fn encoder_backprop(model: &ModelState, x: &[f64], enc: &Encoded, g_z: &[f64], grad: &mut [f64]) {
    let d = &model.dims;
    let (p, q, h, l) = (d.patches, d.patch_dim(), d.hidden, d.latent);
    let w2 = &model.params[d.off_w2()..d.off_b2()];
    let mut g_u = vec![0.0; h];
    for i in 0..p {
        let gz = &g_z[i * l..(i + 1) * l];
        if gz.iter().all(|g| *g == 0.0) {
            continue;
        }
        let ui = &enc.u[i * h..(i + 1) * h];
        let xi = &x[i * q..(i + 1) * q];
        {
            let (gw2, gb2) = {
                let (lo, hi) = (d.off_w2(), d.off_b2());
                let (a, b) = grad.split_at_mut(hi);
                (&mut a[lo..], &mut b[..l])
            };
            outer_acc(gw2, gz, ui);
            for (slot, g) in gb2.iter_mut().zip(gz) {
                *slot += g;
            }
        }
        matvec_t(w2, l, h, gz, &mut g_u);
        for (gu, u) in g_u.iter_mut().zip(ui) {
            *gu *= 1.0 - u * u;
        }
        let (gw1, gb1) = {
            let (lo, hi) = (d.off_w1(), d.off_b1());
            let (a, b) = grad.split_at_mut(hi);
            (&mut a[lo..], &mut b[..h])
        };
        outer_acc(gw1, &g_u, xi);
        for (slot, g) in gb1.iter_mut().zip(&g_u) {
            *slot += g;
        }
    }
}

fn check_sample(model: &ModelState, x: &[f64], mask: Option<&MaskPattern>) -> Result<()> {
    if x.len() != model.dims.dim {
        return Err(CptError::InvalidInput(format!(
            "sample dim {} does not match model dim {}",
            x.len(),
            model.dims.dim
        )));
    }
    if let Some(m) = mask {
        if m.len() != model.dims.patches {
            return Err(CptError::InvalidInput(format!(
                "mask over {} patches does not match model's {}",
                m.len(),
                model.dims.patches
            )));
        }
    }
    Ok(())
}

/// Shared reconstruction r = Wd(mask_token + mean visible latent) + bd.
fn reconstruct(model: &ModelState, enc: &Encoded, mask: &MaskPattern) -> Vec<f64> {
    let d = &model.dims;
    let (q, l) = (d.patch_dim(), d.latent);
    let n_visible = d.patches - mask.n_masked();
    let mut pooled = model.params[d.off_mask()..d.off_wd()].to_vec();
    for i in 0..d.patches {
        if !mask.is_masked(i) {
            for (slot, z) in pooled.iter_mut().zip(&enc.z[i * l..(i + 1) * l]) {
                *slot += z / n_visible as f64;
            }
        }
    }
    let wd = &model.params[d.off_wd()..d.off_bd()];
    let bd = &model.params[d.off_bd()..];
    let mut r = vec![0.0; q];
    matvec(wd, q, l, &pooled, &mut r);
    for (slot, b) in r.iter_mut().zip(bd) {
        *slot += b;
    }
    r
}

/// Masked-reconstruction loss: squared error on masked patches, averaged
/// over masked entries.
pub fn mae_loss(model: &ModelState, x: &[f64], mask: &MaskPattern) -> Result<f64> {
    check_sample(model, x, Some(mask))?;
    let d = &model.dims;
    let q = d.patch_dim();
    let enc = encode(model, x);
    let r = reconstruct(model, &enc, mask);
    let mut sq = 0.0;
    for j in 0..d.patches {
        if mask.is_masked(j) {
            let xj = &x[j * q..(j + 1) * q];
            sq += r.iter().zip(xj).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        }
    }
    Ok(sq / (mask.n_masked() * q) as f64)
}

/// Loss and its exact analytic gradient over the full parameter vector.
pub fn mae_grad(model: &ModelState, x: &[f64], mask: &MaskPattern) -> Result<(f64, Vec<f64>)> {
    check_sample(model, x, Some(mask))?;
    let d = &model.dims;
    let (p, q, l) = (d.patches, d.patch_dim(), d.latent);
    let enc = encode(model, x);
    let n_visible = p - mask.n_masked();
    let mut pooled = model.params[d.off_mask()..d.off_wd()].to_vec();
    for i in 0..p {
        if !mask.is_masked(i) {
            for (slot, z) in pooled.iter_mut().zip(&enc.z[i * l..(i + 1) * l]) {
                *slot += z / n_visible as f64;
            }
        }
    }
    let wd = &model.params[d.off_wd()..d.off_bd()];
    let bd = &model.params[d.off_bd()..];
    let mut r = vec![0.0; q];
    matvec(wd, q, l, &pooled, &mut r);
    for (slot, b) in r.iter_mut().zip(bd) {
        *slot += b;
    }

    let denom = (mask.n_masked() * q) as f64;
    let mut loss = 0.0;
    // s = d(loss)/dr summed over masked patches.
    let mut s = vec![0.0; q];
    for j in 0..p {
        if mask.is_masked(j) {
            let xj = &x[j * q..(j + 1) * q];
            let mut patch_sq = 0.0;
            for (a, (ri, xi)) in s.iter_mut().zip(r.iter().zip(xj)) {
                let diff = ri - xi;
                patch_sq += diff * diff;
                *a += 2.0 * diff / denom;
            }
            loss += patch_sq; // same grouping as mae_loss, bit for bit
        }
    }
    loss /= denom;

    let mut grad = vec![0.0; d.n_params()];
    grad[d.off_bd()..].copy_from_slice(&s);
    outer_acc(&mut grad[d.off_wd()..d.off_bd()], &s, &pooled);
    let mut g_pooled = vec![0.0; l];
    matvec_t(wd, q, l, &s, &mut g_pooled);
    grad[d.off_mask()..d.off_wd()].copy_from_slice(&g_pooled);
    let mut g_z = vec![0.0; p * l];
    for i in 0..p {
        if !mask.is_masked(i) {
            for (slot, g) in g_z[i * l..(i + 1) * l].iter_mut().zip(&g_pooled) {
                *slot = g / n_visible as f64;
            }
        }
    }
    encoder_backprop(model, x, &enc, &g_z, &mut grad);
    Ok((loss, grad))
}

/// Feature vector f(x): latent outputs mean-pooled over all patches.
pub fn features(model: &ModelState, x: &[f64]) -> Result<Vec<f64>> {
    check_sample(model, x, None)?;
    let d = &model.dims;
    let (p, l) = (d.patches, d.latent);
    let enc = encode(model, x);
    let mut f = vec![0.0; l];
    for i in 0..p {
        for (slot, z) in f.iter_mut().zip(&enc.z[i * l..(i + 1) * l]) {
            *slot += z / p as f64;
        }
    }
    Ok(f)
}

/// Gradient of the squared feature norm ||f(x)||^2 over all parameters.
/// Decoder blocks (mask token, Wd, bd) do not feed f, so their entries are 0.
pub fn feature_sqnorm_grad(model: &ModelState, x: &[f64]) -> Result<Vec<f64>> {
    check_sample(model, x, None)?;
    let d = &model.dims;
    let (p, l) = (d.patches, d.latent);
    let enc = encode(model, x);
    let mut f = vec![0.0; l];
    for i in 0..p {
        for (slot, z) in f.iter_mut().zip(&enc.z[i * l..(i + 1) * l]) {
            *slot += z / p as f64;
        }
    }
    // d||f||^2/dz_i = 2f/p for every patch.
    let mut g_z = vec![0.0; p * l];
    for i in 0..p {
        for (slot, fl) in g_z[i * l..(i + 1) * l].iter_mut().zip(&f) {
            *slot = 2.0 * fl / p as f64;
        }
    }
    let mut grad = vec![0.0; d.n_params()];
    encoder_backprop(model, x, &enc, &g_z, &mut grad);
    Ok(grad)
}

/// Parameter importance: mean absolute gradient of the squared feature norm
/// over the given samples.
pub fn mas_importance(model: &ModelState, data: &[Vec<f64>]) -> Result<Vec<f64>> {
    if data.is_empty() {
        return Err(CptError::InvalidInput(
            "importance needs at least one sample".into(),
        ));
    }
    let mut omega = vec![0.0; model.dims.n_params()];
    for x in data {
        let g = feature_sqnorm_grad(model, x)?;
        for (o, gi) in omega.iter_mut().zip(&g) {
            *o += gi.abs() / data.len() as f64;
        }
    }
    Ok(omega)
}

fn check_mas_shapes(params: &[f64], anchor: &[f64], omega: &[f64]) -> Result<()> {
    if params.len() != anchor.len() || params.len() != omega.len() {
        return Err(CptError::InvalidInput(format!(
            "importance/anchor shape mismatch: params {}, anchor {}, omega {}",
            params.len(),
            anchor.len(),
            omega.len()
        )));
    }
    Ok(())
}

/// Drift penalty lambda * sum_j omega_j (theta_j - anchor_j)^2.
pub fn mas_penalty(params: &[f64], anchor: &[f64], omega: &[f64], lambda: f64) -> Result<f64> {
    check_mas_shapes(params, anchor, omega)?;
    Ok(lambda
        * params
            .iter()
            .zip(anchor)
            .zip(omega)
            .map(|((p, a), o)| o * (p - a) * (p - a))
            .sum::<f64>())
}

/// Add the penalty gradient 2 * lambda * omega_j (theta_j - anchor_j) in place.
pub fn mas_penalty_grad_into(
    params: &[f64],
    anchor: &[f64],
    omega: &[f64],
    lambda: f64,
    grad: &mut [f64],
) -> Result<()> {
    check_mas_shapes(params, anchor, omega)?;
    for ((g, (p, a)), o) in grad.iter_mut().zip(params.iter().zip(anchor)).zip(omega) {
        *g += 2.0 * lambda * o * (p - a);
    }
    Ok(())
}

/// Feature-distillation loss alpha * mean_batch ||f(x) - f_prev(x)||^2 and its
/// gradient for the current model (the previous model is a frozen snapshot).
pub fn lwf_distill(
    model: &ModelState,
    prev: &ModelState,
    batch: &[Vec<f64>],
    alpha: f64,
) -> Result<(f64, Vec<f64>)> {
    if model.dims != prev.dims {
        return Err(CptError::InvalidInput(
            "distillation models must share dims".into(),
        ));
    }
    let d = &model.dims;
    let (p, l) = (d.patches, d.latent);
    let mut loss = 0.0;
    let mut grad = vec![0.0; d.n_params()];
    if batch.is_empty() || alpha == 0.0 {
        return Ok((0.0, grad));
    }
    let b = batch.len() as f64;
    for x in batch {
        check_sample(model, x, None)?;
        let enc = encode(model, x);
        let mut f = vec![0.0; l];
        for i in 0..p {
            for (slot, z) in f.iter_mut().zip(&enc.z[i * l..(i + 1) * l]) {
                *slot += z / p as f64;
            }
        }
        let f_prev = features(prev, x)?;
        let diff: Vec<f64> = f.iter().zip(&f_prev).map(|(a, c)| a - c).collect();
        loss += alpha * diff.iter().map(|d| d * d).sum::<f64>() / b;
        let mut g_z = vec![0.0; p * l];
        for i in 0..p {
            for (slot, dl) in g_z[i * l..(i + 1) * l].iter_mut().zip(&diff) {
                *slot = 2.0 * alpha * dl / (b * p as f64);
            }
        }
        encoder_backprop(model, x, &enc, &g_z, &mut grad);
    }
    Ok((loss, grad))
}

#[cfg(test)]
pub(crate) mod test_support {
    /// Central-difference check: analytic gradient vs (f(x+h)-f(x-h))/2h.
    /// Components with both values below 1e-4 are compared absolutely.
    pub fn assert_grad_matches_fd(
        f: &mut dyn FnMut(&[f64]) -> f64,
        params: &[f64],
        analytic: &[f64],
    ) {
        let h = 1e-6;
        let mut work = params.to_vec();
        for j in 0..params.len() {
            work[j] = params[j] + h;
            let up = f(&work);
            work[j] = params[j] - h;
            let down = f(&work);
            work[j] = params[j];
            let fd = (up - down) / (2.0 * h);
            let a = analytic[j];
            let scale = a.abs().max(fd.abs());
            if scale < 1e-4 {
                assert!(
                    (a - fd).abs() <= 1e-8,
                    "param {j}: analytic {a} vs fd {fd} (absolute)"
                );
            } else {
                assert!(
                    (a - fd).abs() / scale <= 1e-5,
                    "param {j}: analytic {a} vs fd {fd} (relative {})",
                    (a - fd).abs() / scale
                );
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::test_support::assert_grad_matches_fd;
    use super::*;
    use crate::rng::derive_rng;

    fn small_dims() -> ModelDims {
        ModelDims::new(8, 4, 5, 3).unwrap()
    }

    fn sample(seed: u64, dim: usize) -> Vec<f64> {
        let mut rng = derive_rng(seed, "sample", &[]);
        let dist = Normal::new(0.0, 1.0).unwrap();
        (0..dim).map(|_| dist.sample(&mut rng)).collect()
    }

    #[test]
    fn layout_offsets_cover_the_parameter_vector() {
        let d = small_dims();
        // q=2: W1 5x2=10, b1 5, W2 3x5=15, b2 3, mask 3, Wd 2x3=6, bd 2 = 44.
        assert_eq!(d.patch_dim(), 2);
        assert_eq!(d.n_params(), 44);
        assert_eq!(d.n_encoder_params(), 33);
        assert!(ModelDims::new(7, 4, 5, 3).is_err(), "dim not divisible");
        assert!(ModelDims::new(8, 1, 5, 3).is_err(), "single patch");
        assert!(ModelDims::new(8, 4, 0, 3).is_err(), "zero width");
    }

    #[test]
    fn init_is_deterministic_and_finite() {
        let d = small_dims();
        let a = ModelState::init(d, 42);
        let b = ModelState::init(d, 42);
        let c = ModelState::init(d, 43);
        assert_eq!(a.params, b.params);
        assert_ne!(a.params, c.params);
        assert!(a.is_finite());
        // Biases start at zero.
        assert_eq!(a.params[d.off_b1()..d.off_w2()], vec![0.0; 5][..]);
        assert_eq!(a.params[d.off_b2()..d.off_mask()], vec![0.0; 3][..]);
    }

    #[test]
    fn mask_sampling_hits_the_exact_count() {
        let mut rng = derive_rng(1, "mask", &[]);
        for _ in 0..50 {
            let m = MaskPattern::sample(8, 0.75, &mut rng).unwrap();
            assert_eq!(m.n_masked(), 6);
            assert_eq!(m.len(), 8);
        }
        let m = MaskPattern::sample(4, 0.75, &mut rng).unwrap();
        assert_eq!(m.n_masked(), 3);
        assert!(MaskPattern::sample(4, 0.1, &mut rng).is_err(), "0 masked");
        assert!(MaskPattern::sample(4, 1.0, &mut rng).is_err(), "all masked");
        assert!(MaskPattern::sample(4, -0.1, &mut rng).is_err());
    }

    #[test]
    fn every_patch_gets_masked_somewhere() {
        let mut rng = derive_rng(2, "mask-cover", &[]);
        let mut hit = [false; 8];
        for _ in 0..200 {
            let m = MaskPattern::sample(8, 0.5, &mut rng).unwrap();
            for (i, h) in hit.iter_mut().enumerate() {
                *h |= m.is_masked(i);
            }
        }
        assert!(hit.iter().all(|h| *h), "mask never covered some patch");
    }

    #[test]
    fn perfect_reconstruction_gives_zero_loss() {
        // Zero weights, bd = x_j: the reconstruction equals the masked patch.
        let d = small_dims();
        let mut model = ModelState::zeros(d);
        let mask = MaskPattern::from_masked_indices(4, &[1]).unwrap();
        let mut x = vec![0.0; 8];
        x[2] = 0.7; // patch 1 = (0.7, -0.3)
        x[3] = -0.3;
        model.params[d.off_bd()] = 0.7;
        model.params[d.off_bd() + 1] = -0.3;
        let loss = mae_loss(&model, &x, &mask).unwrap();
        assert_eq!(loss, 0.0);
        let (_, grad) = mae_grad(&model, &x, &mask).unwrap();
        assert!(grad.iter().all(|g| *g == 0.0), "zero loss, zero gradient");
    }

    #[test]
    fn single_masked_scalar_patch_gives_unit_loss() {
        // d=2, p=2, q=1: zero model reconstructs 0; x = (0, 1), patch 1 masked.
        let d = ModelDims::new(2, 2, 3, 2).unwrap();
        let model = ModelState::zeros(d);
        let mask = MaskPattern::from_masked_indices(2, &[1]).unwrap();
        let loss = mae_loss(&model, &[0.0, 1.0], &mask).unwrap();
        assert_eq!(loss, 1.0);
    }

    #[test]
    fn loss_matches_a_straight_line_recomputation() {
        let d = ModelDims::new(4, 2, 2, 2).unwrap();
        let mut model = ModelState::zeros(d);
        let vals = [
            0.3, -0.1, 0.2, 0.4, // W1 2x2
            0.1, -0.2, // b1
            0.5, -0.3, 0.2, 0.1, // W2 2x2
            0.05, -0.05, // b2
            0.2, -0.1, // mask token
            0.4, 0.3, -0.2, 0.6, // Wd 2x2
            0.01, 0.02, // bd
        ];
        model.params.copy_from_slice(&vals);
        let x = [0.5, -0.4, 0.8, 0.2];
        let mask = MaskPattern::from_masked_indices(2, &[1]).unwrap();
        // Visible patch 0 = (0.5, -0.4):
        let a1 = (0.3f64 * 0.5 + (-0.1) * (-0.4) + 0.1).tanh();
        let a2 = (0.2f64 * 0.5 + 0.4 * (-0.4) + (-0.2)).tanh();
        let z1 = 0.5 * a1 + (-0.3) * a2 + 0.05;
        let z2 = 0.2 * a1 + 0.1 * a2 + (-0.05);
        let (c1, c2) = (0.2 + z1, -0.1 + z2);
        let r1 = 0.4 * c1 + 0.3 * c2 + 0.01;
        let r2 = -0.2 * c1 + 0.6 * c2 + 0.02;
        let expect = ((r1 - 0.8f64).powi(2) + (r2 - 0.2f64).powi(2)) / 2.0;
        let got = mae_loss(&model, &x, &mask).unwrap();
        assert!((got - expect).abs() < 1e-15, "got {got}, expect {expect}");
    }

    #[test]
    fn mae_gradient_matches_finite_differences() {
        let d = small_dims();
        let model = ModelState::init(d, 7);
        let x = sample(11, 8);
        let mask = MaskPattern::from_masked_indices(4, &[0, 2, 3]).unwrap();
        let (_, grad) = mae_grad(&model, &x, &mask).unwrap();
        let mut f = |params: &[f64]| {
            let m = ModelState { dims: d, params: params.to_vec() };
            mae_loss(&m, &x, &mask).unwrap()
        };
        assert_grad_matches_fd(&mut f, &model.params, &grad);
    }

    #[test]
    fn loss_ignores_visible_patch_targets() {
        // Changing x on a visible patch changes the encoding, but changing the
        // *target* side only matters for masked patches; with the encoder cut
        // off (zero W1), visible content is irrelevant entirely.
        let d = small_dims();
        let mut model = ModelState::init(d, 3);
        for w in model.params[d.off_w1()..d.off_w2()].iter_mut() {
            *w = 0.0;
        }
        let mask = MaskPattern::from_masked_indices(4, &[1, 3]).unwrap();
        let mut x = sample(12, 8);
        let base = mae_loss(&model, &x, &mask).unwrap();
        x[0] += 5.0; // patch 0 is visible
        x[4] -= 3.0; // patch 2 is visible
        let moved = mae_loss(&model, &x, &mask).unwrap();
        assert_eq!(base, moved);
    }

    #[test]
    fn dimension_mismatches_are_rejected() {
        let d = small_dims();
        let model = ModelState::init(d, 1);
        let mask = MaskPattern::from_masked_indices(4, &[1]).unwrap();
        assert!(mae_loss(&model, &[0.0; 7], &mask).is_err());
        let bad_mask = MaskPattern::from_masked_indices(3, &[1]).unwrap();
        assert!(mae_loss(&model, &[0.0; 8], &bad_mask).is_err());
        assert!(features(&model, &[0.0; 9]).is_err());
    }

    #[test]
    fn features_are_the_mean_latent_over_all_patches() {
        let d = ModelDims::new(2, 2, 3, 2).unwrap();
        let mut model = ModelState::zeros(d);
        // b2 = (0.4, -0.6): with zero weights every patch's latent is b2.
        model.params[d.off_b2()] = 0.4;
        model.params[d.off_b2() + 1] = -0.6;
        let f = features(&model, &[1.0, 2.0]).unwrap();
        assert_eq!(f, vec![0.4, -0.6]);
    }

    #[test]
    fn feature_norm_gradient_matches_finite_differences() {
        let d = small_dims();
        let model = ModelState::init(d, 9);
        let x = sample(13, 8);
        let grad = feature_sqnorm_grad(&model, &x).unwrap();
        let mut f = |params: &[f64]| {
            let m = ModelState { dims: d, params: params.to_vec() };
            features(&m, &x).unwrap().iter().map(|v| v * v).sum()
        };
        assert_grad_matches_fd(&mut f, &model.params, &grad);
        // Decoder blocks never touch f.
        assert!(grad[d.off_mask()..].iter().all(|g| *g == 0.0));
    }

    #[test]
    fn importance_is_zero_for_a_constant_zero_encoder() {
        let d = small_dims();
        let model = ModelState::zeros(d);
        let data: Vec<Vec<f64>> = (0..4).map(|i| sample(20 + i, 8)).collect();
        let omega = mas_importance(&model, &data).unwrap();
        assert!(omega.iter().all(|o| *o == 0.0));
        assert!(mas_importance(&model, &[]).is_err());
    }

    #[test]
    fn penalty_vanishes_at_the_anchor_and_grows_quadratically() {
        let d = small_dims();
        let model = ModelState::init(d, 5);
        let omega = vec![1.0; d.n_params()];
        assert_eq!(
            mas_penalty(&model.params, &model.params, &omega, 0.75).unwrap(),
            0.0
        );
        let mut moved = model.params.clone();
        moved[0] += 2.0;
        // lambda * omega * delta^2 = 0.75 * 1 * 4 = 3.
        assert!((mas_penalty(&moved, &model.params, &omega, 0.75).unwrap() - 3.0).abs() < 1e-12);
        let mut grad = vec![0.0; d.n_params()];
        mas_penalty_grad_into(&moved, &model.params, &omega, 0.75, &mut grad).unwrap();
        assert!((grad[0] - 3.0).abs() < 1e-12, "2 * 0.75 * 1 * 2 = 3");
        assert!(grad[1..].iter().all(|g| *g == 0.0));
        assert!(mas_penalty(&moved, &model.params, &omega[..3], 0.75).is_err());
    }

    #[test]
    fn mas_penalty_gradient_matches_finite_differences() {
        let d = small_dims();
        let model = ModelState::init(d, 6);
        let anchor = ModelState::init(d, 16);
        let data: Vec<Vec<f64>> = (0..3).map(|i| sample(30 + i, 8)).collect();
        let omega = mas_importance(&anchor, &data).unwrap();
        let mut grad = vec![0.0; d.n_params()];
        mas_penalty_grad_into(&model.params, &anchor.params, &omega, 0.75, &mut grad).unwrap();
        let anchor_params = anchor.params.clone();
        let omega_c = omega.clone();
        let mut f =
            |params: &[f64]| mas_penalty(params, &anchor_params, &omega_c, 0.75).unwrap();
        assert_grad_matches_fd(&mut f, &model.params, &grad);
    }

    #[test]
    fn importance_matches_finite_differences_of_the_feature_norm() {
        let d = small_dims();
        let model = ModelState::init(d, 8);
        let x = sample(40, 8);
        let omega = mas_importance(&model, std::slice::from_ref(&x)).unwrap();
        // With one sample, omega = |grad|; check against FD of ||f||^2.
        let h = 1e-6;
        let mut work = model.params.clone();
        for j in 0..work.len() {
            work[j] = model.params[j] + h;
            let up: f64 = {
                let m = ModelState { dims: d, params: work.clone() };
                features(&m, &x).unwrap().iter().map(|v| v * v).sum()
            };
            work[j] = model.params[j] - h;
            let down: f64 = {
                let m = ModelState { dims: d, params: work.clone() };
                features(&m, &x).unwrap().iter().map(|v| v * v).sum()
            };
            work[j] = model.params[j];
            let fd = ((up - down) / (2.0 * h)).abs();
            let scale = omega[j].max(fd);
            if scale >= 1e-4 {
                assert!(
                    (omega[j] - fd).abs() / scale <= 1e-5,
                    "omega[{j}] = {} vs |fd| {fd}",
                    omega[j]
                );
            }
        }
    }

    #[test]
    fn distillation_is_zero_for_identical_models_or_zero_alpha() {
        let d = small_dims();
        let model = ModelState::init(d, 2);
        let batch: Vec<Vec<f64>> = (0..3).map(|i| sample(50 + i, 8)).collect();
        let (loss, grad) = lwf_distill(&model, &model, &batch, 0.75).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.iter().all(|g| *g == 0.0));
        let other = ModelState::init(d, 99);
        let (loss, _) = lwf_distill(&model, &other, &batch, 0.0).unwrap();
        assert_eq!(loss, 0.0);
    }

    #[test]
    fn unit_latent_difference_costs_alpha() {
        // Zero models, but the current one offsets b2 so f differs by a unit
        // vector: loss = alpha * ||(1,0,..)||^2 = 0.75.
        let d = small_dims();
        let prev = ModelState::zeros(d);
        let mut model = ModelState::zeros(d);
        model.params[d.off_b2()] = 1.0;
        let (loss, _) = lwf_distill(&model, &prev, &[vec![0.0; 8]], 0.75).unwrap();
        assert!((loss - 0.75).abs() < 1e-15);
    }

    #[test]
    fn distillation_gradient_matches_finite_differences() {
        let d = small_dims();
        let model = ModelState::init(d, 21);
        let prev = ModelState::init(d, 22);
        let batch: Vec<Vec<f64>> = (0..2).map(|i| sample(60 + i, 8)).collect();
        let (_, grad) = lwf_distill(&model, &prev, &batch, 0.75).unwrap();
        let prev_c = prev.clone();
        let batch_c = batch.clone();
        let mut f = |params: &[f64]| {
            let m = ModelState { dims: d, params: params.to_vec() };
            lwf_distill(&m, &prev_c, &batch_c, 0.75).unwrap().0
        };
        assert_grad_matches_fd(&mut f, &model.params, &grad);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn loss_is_non_negative_and_finite(
                seed in any::<u64>(),
                xseed in any::<u64>(),
                mask_bits in 1usize..15,
            ) {
                let d = small_dims();
                let model = ModelState::init(d, seed);
                let x = sample(xseed, 8);
                let indices: Vec<usize> =
                    (0..4).filter(|i| mask_bits >> i & 1 == 1).collect();
                prop_assume!(!indices.is_empty() && indices.len() < 4);
                let mask = MaskPattern::from_masked_indices(4, &indices).unwrap();
                let loss = mae_loss(&model, &x, &mask).unwrap();
                prop_assert!(loss.is_finite() && loss >= 0.0);
                let (l2, grad) = mae_grad(&model, &x, &mask).unwrap();
                prop_assert_eq!(loss.to_bits(), l2.to_bits());
                prop_assert!(grad.iter().all(|g| g.is_finite()));
            }

            #[test]
            fn masked_targets_enter_the_loss_purely_quadratically(
                seed in any::<u64>(),
                delta in 0.1f64..2.0,
                coord in 2usize..4, // inside masked patch 1 (dims 2, 3)
            ) {
                // Masked patches feed only the reconstruction target, never
                // the encoding, so along any masked coordinate the loss is an
                // exact parabola: its second difference must be
                // 2 * delta^2 / (n_masked * q) regardless of the model.
                let d = small_dims();
                let model = ModelState::init(d, seed);
                let mask = MaskPattern::from_masked_indices(4, &[1, 2]).unwrap();
                let x = sample(seed ^ 0xabc, 8);
                let at = |offset: f64| {
                    let mut moved = x.clone();
                    moved[coord] += offset;
                    mae_loss(&model, &moved, &mask).unwrap()
                };
                let (l0, l1, l2) = (at(0.0), at(delta), at(2.0 * delta));
                let second_diff = l2 - 2.0 * l1 + l0;
                let expect = 2.0 * delta * delta / (2.0 * 2.0);
                prop_assert!(
                    (second_diff - expect).abs() <= 1e-9 * expect.max(1.0),
                    "second difference {second_diff}, expected {expect}"
                );
            }
        }
    }
}
