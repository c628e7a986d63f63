//! Two small differentiable point-cloud classifiers with hand-written
//! reverse-mode gradients.
//!
//! Architecture A: per-point MLP 3->32->64 (ReLU), max-pool over points,
//! head 64->32->c with a ReLU hidden layer. Architecture B: per-point MLP
//! 3->48->48 (ReLU), mean-pool, linear head 48->c. Max vs mean pooling and
//! the width difference give the two nets visibly different decision
//! boundaries, which is what the transfer experiments need.
//!
//! Gradients are exact: max pooling routes to the argmax point (lowest
//! index on ties) and the ReLU subgradient at exactly zero is zero.

use std::io::{Read as _, Write as _};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::geometry::{LabeledDataset, PointCloud};
use crate::mat::Mat;
use crate::optim::Adam;
use crate::real::{real, Real};

/// Magic bytes of the model file format.
pub const MODEL_MAGIC: &[u8; 9] = b"SAAO-MDL1";

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("input cloud has a non-finite coordinate")]
    NonFiniteInput,
    #[error("expected gradient of length {expected}, got {got}")]
    GradLengthMismatch { expected: usize, got: usize },
    #[error("training dataset is empty")]
    EmptyDataset,
    #[error("training config values must be positive")]
    BadTrainConfig,
    #[error("batch and label counts differ: {0} vs {1}")]
    BatchMismatch(usize, usize),
    #[error("label {label} out of range for {classes} classes")]
    BadLabel { label: usize, classes: usize },
    #[error("model file {path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

fn io_err(path: &Path, source: std::io::Error) -> ClassifierError {
    ClassifierError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Which of the two fixed architectures a model instantiates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArchId {
    A,
    B,
}

impl ArchId {
    pub fn byte(self) -> u8 {
        match self {
            ArchId::A => b'A',
            ArchId::B => b'B',
        }
    }

    pub fn from_byte(b: u8) -> Option<Self> {
        match b {
            b'A' => Some(ArchId::A),
            b'B' => Some(ArchId::B),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ArchId::A => "A",
            ArchId::B => "B",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "A" | "a" => Some(ArchId::A),
            "B" | "b" => Some(ArchId::B),
            _ => None,
        }
    }

    fn pooling(self) -> Pooling {
        match self {
            ArchId::A => Pooling::Max,
            ArchId::B => Pooling::Mean,
        }
    }

    /// `(point-layer dims, head dims)` as (in, out) pairs, with `c` classes.
    fn layer_dims(self, class_count: usize) -> (Vec<(usize, usize)>, Vec<(usize, usize)>) {
        match self {
            ArchId::A => (
                vec![(3, 32), (32, 64)],
                vec![(64, 32), (32, class_count)],
            ),
            ArchId::B => (vec![(3, 48), (48, 48)], vec![(48, class_count)]),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Pooling {
    Max,
    Mean,
}

/// Dense layer, weights stored out x in.
#[derive(Debug, Clone, PartialEq)]
struct Linear<T> {
    w: Mat<T>,
    b: Vec<T>,
}

impl<T: Real> Linear<T> {
    fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            w: Mat::zeros(out_dim, in_dim),
            b: vec![T::zero(); out_dim],
        }
    }

    fn out_dim(&self) -> usize {
        self.b.len()
    }

    fn in_dim(&self) -> usize {
        self.w.cols()
    }

    fn forward(&self, input: &[T], out: &mut Vec<T>) {
        out.clear();
        for o in 0..self.out_dim() {
            let row = self.w.row(o);
            let mut acc = self.b[o];
            for (w, x) in row.iter().zip(input) {
                acc = acc + *w * *x;
            }
            out.push(acc);
        }
    }

    /// `d_input = W^T d_out`.
    fn backward_input(&self, d_out: &[T], d_in: &mut [T]) {
        for v in d_in.iter_mut() {
            *v = T::zero();
        }
        for o in 0..self.out_dim() {
            let row = self.w.row(o);
            let g = d_out[o];
            if g == T::zero() {
                continue;
            }
            for (i, w) in row.iter().enumerate() {
                d_in[i] = d_in[i] + *w * g;
            }
        }
    }
}

#[inline]
fn relu<T: Real>(z: T) -> T {
    if z > T::zero() {
        z
    } else {
        T::zero()
    }
}

/// A point-cloud classifier with fixed architecture and learned weights.
#[derive(Debug, Clone, PartialEq)]
pub struct MiniPointNet<T> {
    arch: ArchId,
    class_count: usize,
    point_layers: Vec<Linear<T>>,
    head_layers: Vec<Linear<T>>,
}

/// Intermediate activations of one forward pass, kept for backprop.
struct ForwardCache<T> {
    /// Pre-activations per point layer: `[layer][point][feature]`.
    point_pre: Vec<Vec<Vec<T>>>,
    /// Pooled feature vector.
    pooled: Vec<T>,
    /// Argmax point per feature (max pooling only).
    argmax: Vec<usize>,
    /// Pre-activations per head layer (logits last).
    head_pre: Vec<Vec<T>>,
}

impl<T: Real> MiniPointNet<T> {
    /// All-zero weights; useful as a degenerate fixture.
    pub fn zeroed(arch: ArchId, class_count: usize) -> Self {
        let (point_dims, head_dims) = arch.layer_dims(class_count);
        Self {
            arch,
            class_count,
            point_layers: point_dims
                .iter()
                .map(|&(i, o)| Linear::zeros(i, o))
                .collect(),
            head_layers: head_dims
                .iter()
                .map(|&(i, o)| Linear::zeros(i, o))
                .collect(),
        }
    }

    /// Xavier-uniform initialization from a seed.
    pub fn init(arch: ArchId, class_count: usize, seed: u64) -> Self {
        let mut model = Self::zeroed(arch, class_count);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in model
            .point_layers
            .iter_mut()
            .chain(model.head_layers.iter_mut())
        {
            let limit = (6.0 / (layer.in_dim() + layer.out_dim()) as f64).sqrt();
            for v in layer.w.as_mut_slice() {
                *v = real(rng.random_range(-limit..limit));
            }
        }
        model
    }

    pub fn arch(&self) -> ArchId {
        self.arch
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    fn check_input(&self, cloud: &PointCloud<T>) -> Result<(), ClassifierError> {
        for p in cloud.points() {
            if !(p[0].is_finite() && p[1].is_finite() && p[2].is_finite()) {
                return Err(ClassifierError::NonFiniteInput);
            }
        }
        Ok(())
    }

    fn forward_cached(&self, cloud: &PointCloud<T>) -> ForwardCache<T> {
        let n = cloud.len();
        let mut point_pre: Vec<Vec<Vec<T>>> = self
            .point_layers
            .iter()
            .map(|_| Vec::with_capacity(n))
            .collect();
        // Per-point MLP.
        let mut h: Vec<T> = Vec::new();
        let mut z: Vec<T> = Vec::new();
        for p in cloud.points() {
            h.clear();
            h.extend_from_slice(p);
            for (li, layer) in self.point_layers.iter().enumerate() {
                layer.forward(&h, &mut z);
                point_pre[li].push(z.clone());
                h.clear();
                h.extend(z.iter().map(|&v| relu(v)));
            }
        }
        // Pool over points.
        let feat = self.point_layers.last().map(|l| l.out_dim()).unwrap_or(3);
        let last_pre = &point_pre[self.point_layers.len() - 1];
        let mut pooled = vec![T::zero(); feat];
        let mut argmax = vec![0usize; feat];
        match self.arch.pooling() {
            Pooling::Max => {
                for f in 0..feat {
                    let mut best = relu(last_pre[0][f]);
                    let mut best_i = 0usize;
                    for (i, pre) in last_pre.iter().enumerate().skip(1) {
                        let v = relu(pre[f]);
                        if v > best {
                            best = v;
                            best_i = i;
                        }
                    }
                    pooled[f] = best;
                    argmax[f] = best_i;
                }
            }
            Pooling::Mean => {
                // Summation in sorted order keeps the mean bit-identical
                // under point permutations.
                let mut column: Vec<T> = Vec::with_capacity(n);
                for f in 0..feat {
                    column.clear();
                    column.extend(last_pre.iter().map(|pre| relu(pre[f])));
                    column.sort_by(|a, b| a.partial_cmp(b).expect("finite activation"));
                    let sum = column.iter().fold(T::zero(), |acc, &v| acc + v);
                    pooled[f] = sum / real(n as f64);
                }
            }
        }
        // Head.
        let mut head_pre = Vec::with_capacity(self.head_layers.len());
        let mut g = pooled.clone();
        for (li, layer) in self.head_layers.iter().enumerate() {
            layer.forward(&g, &mut z);
            head_pre.push(z.clone());
            if li + 1 < self.head_layers.len() {
                g.clear();
                g.extend(z.iter().map(|&v| relu(v)));
            }
        }
        ForwardCache {
            point_pre,
            pooled,
            argmax,
            head_pre,
        }
    }

    /// Logit vector of length `class_count`.
    pub fn forward(&self, cloud: &PointCloud<T>) -> Result<Vec<T>, ClassifierError> {
        self.check_input(cloud)?;
        let cache = self.forward_cached(cloud);
        Ok(cache.head_pre.last().expect("at least one head layer").clone())
    }

    /// Predicted class: argmax of the logits, lowest index on ties.
    pub fn predict(&self, cloud: &PointCloud<T>) -> Result<usize, ClassifierError> {
        let logits = self.forward(cloud)?;
        Ok(argmax(&logits))
    }

    /// Exact gradient of `<logits, grad_logits>` with respect to the point
    /// coordinates.
    pub fn input_gradient(
        &self,
        cloud: &PointCloud<T>,
        grad_logits: &[T],
    ) -> Result<Vec<[T; 3]>, ClassifierError> {
        if grad_logits.len() != self.class_count {
            return Err(ClassifierError::GradLengthMismatch {
                expected: self.class_count,
                got: grad_logits.len(),
            });
        }
        self.check_input(cloud)?;
        let cache = self.forward_cached(cloud);
        let d_pooled = self.backward_head_to_pooled(&cache, grad_logits, None);
        self.backward_points(cloud, &cache, &d_pooled, None)
    }

    /// Backward through the head; optionally accumulates parameter
    /// gradients. Returns the gradient at the pooled features.
    fn backward_head_to_pooled(
        &self,
        cache: &ForwardCache<T>,
        grad_logits: &[T],
        mut grads: Option<&mut ModelGrads<T>>,
    ) -> Vec<T> {
        let mut d = grad_logits.to_vec();
        for li in (0..self.head_layers.len()).rev() {
            let layer = &self.head_layers[li];
            // Gradient at this layer's pre-activation.
            if li + 1 < self.head_layers.len() {
                for (v, z) in d.iter_mut().zip(&cache.head_pre[li]) {
                    if !(*z > T::zero()) {
                        *v = T::zero();
                    }
                }
            }
            let input: Vec<T> = if li == 0 {
                cache.pooled.clone()
            } else {
                cache.head_pre[li - 1].iter().map(|&z| relu(z)).collect()
            };
            if let Some(g) = grads.as_deref_mut() {
                g.accumulate_head(li, &d, &input);
            }
            let mut d_in = vec![T::zero(); layer.in_dim()];
            layer.backward_input(&d, &mut d_in);
            d = d_in;
        }
        d
    }

    /// Backward from pooled features to the input points; optionally
    /// accumulates parameter gradients of the point layers.
    fn backward_points(
        &self,
        cloud: &PointCloud<T>,
        cache: &ForwardCache<T>,
        d_pooled: &[T],
        mut grads: Option<&mut ModelGrads<T>>,
    ) -> Result<Vec<[T; 3]>, ClassifierError> {
        let n = cloud.len();
        let last = self.point_layers.len() - 1;
        let feat = self.point_layers[last].out_dim();
        // Gradient at each point's last-layer ReLU output.
        let mut d_h_last = vec![vec![T::zero(); feat]; n];
        match self.arch.pooling() {
            Pooling::Max => {
                for f in 0..feat {
                    d_h_last[cache.argmax[f]][f] = d_pooled[f];
                }
            }
            Pooling::Mean => {
                let inv_n = real::<T>(n as f64).recip();
                for row in &mut d_h_last {
                    for (f, v) in row.iter_mut().enumerate() {
                        *v = d_pooled[f] * inv_n;
                    }
                }
            }
        }
        let mut out = vec![[T::zero(); 3]; n];
        let mut d = Vec::new();
        let mut d_in = Vec::new();
        for (pi, point) in cloud.points().iter().enumerate() {
            d.clear();
            d.extend_from_slice(&d_h_last[pi]);
            for li in (0..=last).rev() {
                let layer = &self.point_layers[li];
                // ReLU mask at this layer's pre-activation.
                for (v, z) in d.iter_mut().zip(&cache.point_pre[li][pi]) {
                    if !(*z > T::zero()) {
                        *v = T::zero();
                    }
                }
                if let Some(g) = grads.as_deref_mut() {
                    let input: Vec<T> = if li == 0 {
                        point.to_vec()
                    } else {
                        cache.point_pre[li - 1][pi].iter().map(|&z| relu(z)).collect()
                    };
                    g.accumulate_point(li, &d, &input);
                }
                d_in.resize(layer.in_dim(), T::zero());
                layer.backward_input(&d, &mut d_in);
                std::mem::swap(&mut d, &mut d_in);
            }
            out[pi] = [d[0], d[1], d[2]];
        }
        Ok(out)
    }
}

#[inline]
pub fn argmax<T: Real>(values: &[T]) -> usize {
    let mut best = 0usize;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Parameter gradients mirroring the model layout.
#[derive(Debug, Clone)]
pub struct ModelGrads<T> {
    point: Vec<(Mat<T>, Vec<T>)>,
    head: Vec<(Mat<T>, Vec<T>)>,
}

impl<T: Real> ModelGrads<T> {
    fn zeros_like(model: &MiniPointNet<T>) -> Self {
        Self {
            point: model
                .point_layers
                .iter()
                .map(|l| (Mat::zeros(l.out_dim(), l.in_dim()), vec![T::zero(); l.out_dim()]))
                .collect(),
            head: model
                .head_layers
                .iter()
                .map(|l| (Mat::zeros(l.out_dim(), l.in_dim()), vec![T::zero(); l.out_dim()]))
                .collect(),
        }
    }

    fn accumulate_head(&mut self, layer: usize, d_pre: &[T], input: &[T]) {
        accumulate(&mut self.head[layer], d_pre, input);
    }

    fn accumulate_point(&mut self, layer: usize, d_pre: &[T], input: &[T]) {
        accumulate(&mut self.point[layer], d_pre, input);
    }

    fn scale(&mut self, factor: T) {
        for (w, b) in self.point.iter_mut().chain(self.head.iter_mut()) {
            for v in w.as_mut_slice() {
                *v = *v * factor;
            }
            for v in b {
                *v = *v * factor;
            }
        }
    }

    /// Flattens in the same order as [`MiniPointNet::flat_params`].
    pub fn flatten(&self) -> Vec<T> {
        let mut out = Vec::new();
        for (w, b) in self.point.iter().chain(self.head.iter()) {
            out.extend_from_slice(w.as_slice());
            out.extend_from_slice(b);
        }
        out
    }
}

fn accumulate<T: Real>(target: &mut (Mat<T>, Vec<T>), d_pre: &[T], input: &[T]) {
    for o in 0..d_pre.len() {
        let g = d_pre[o];
        if g == T::zero() {
            continue;
        }
        let row = target.0.row_mut(o);
        for (i, x) in input.iter().enumerate() {
            row[i] = row[i] + g * *x;
        }
        target.1[o] = target.1[o] + g;
    }
}

impl<T: Real> MiniPointNet<T> {
    /// Parameters flattened layer by layer (weights row-major, then bias),
    /// point layers first.
    pub fn flat_params(&self) -> Vec<T> {
        let mut out = Vec::new();
        for l in self.point_layers.iter().chain(self.head_layers.iter()) {
            out.extend_from_slice(l.w.as_slice());
            out.extend_from_slice(&l.b);
        }
        out
    }

    pub fn set_flat_params(&mut self, flat: &[T]) {
        let mut offset = 0;
        for l in self
            .point_layers
            .iter_mut()
            .chain(self.head_layers.iter_mut())
        {
            let wlen = l.w.as_slice().len();
            l.w.as_mut_slice().copy_from_slice(&flat[offset..offset + wlen]);
            offset += wlen;
            let blen = l.b.len();
            l.b.copy_from_slice(&flat[offset..offset + blen]);
            offset += blen;
        }
        assert_eq!(offset, flat.len(), "parameter length mismatch");
    }
}

/// Softmax cross-entropy over a batch: returns the mean loss and the mean
/// parameter gradient.
pub fn param_gradient<T: Real>(
    model: &MiniPointNet<T>,
    batch: &[PointCloud<T>],
    labels: &[usize],
) -> Result<(T, ModelGrads<T>), ClassifierError> {
    if batch.is_empty() {
        return Err(ClassifierError::EmptyDataset);
    }
    if batch.len() != labels.len() {
        return Err(ClassifierError::BatchMismatch(batch.len(), labels.len()));
    }
    let c = model.class_count;
    let mut grads = ModelGrads::zeros_like(model);
    let mut total_loss = T::zero();
    for (cloud, &label) in batch.iter().zip(labels) {
        if label >= c {
            return Err(ClassifierError::BadLabel { label, classes: c });
        }
        model.check_input(cloud)?;
        let cache = model.forward_cached(cloud);
        let logits = cache.head_pre.last().expect("head").clone();
        let (loss, d_logits) = softmax_cross_entropy(&logits, label);
        total_loss = total_loss + loss;
        let d_pooled = model.backward_head_to_pooled(&cache, &d_logits, Some(&mut grads));
        model.backward_points(cloud, &cache, &d_pooled, Some(&mut grads))?;
    }
    let inv = real::<T>(batch.len() as f64).recip();
    grads.scale(inv);
    Ok((total_loss * inv, grads))
}

/// `(loss, d_loss/d_logits)` of softmax cross-entropy for one sample.
fn softmax_cross_entropy<T: Real>(logits: &[T], label: usize) -> (T, Vec<T>) {
    let max = logits.iter().fold(T::neg_infinity(), |a, &v| a.max(v));
    let exps: Vec<T> = logits.iter().map(|&v| (v - max).exp()).collect();
    let sum = exps.iter().fold(T::zero(), |a, &v| a + v);
    let loss = sum.ln() - (logits[label] - max);
    let mut d: Vec<T> = exps.iter().map(|&e| e / sum).collect();
    d[label] = d[label] - T::one();
    (loss, d)
}

/// Training hyperparameters; all fields must be positive.
#[derive(Debug, Clone)]
pub struct TrainConfig<T> {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: T,
    pub seed: u64,
}

impl<T: Real> Default for TrainConfig<T> {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 32,
            lr: real(0.01),
            seed: 11,
        }
    }
}

/// Trains a fresh model with Adam; deterministic given the seed. Returns the
/// model and mean training loss per epoch.
pub fn train_with_history<T: Real>(
    dataset: &LabeledDataset<T>,
    arch: ArchId,
    cfg: &TrainConfig<T>,
) -> Result<(MiniPointNet<T>, Vec<T>), ClassifierError> {
    if dataset.is_empty() {
        return Err(ClassifierError::EmptyDataset);
    }
    if cfg.epochs == 0 || cfg.batch_size == 0 || !(cfg.lr > T::zero()) {
        return Err(ClassifierError::BadTrainConfig);
    }
    let mut model = MiniPointNet::init(arch, dataset.class_count, cfg.seed);
    let mut params = model.flat_params();
    let mut adam = Adam::new(cfg.lr, real(0.9), real(0.999), params.len());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0xA5A5));
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        shuffle(&mut order, &mut rng);
        let mut epoch_loss = T::zero();
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<PointCloud<T>> =
                chunk.iter().map(|&i| dataset.clouds[i].clone()).collect();
            let labels: Vec<usize> = chunk
                .iter()
                .map(|&i| dataset.clouds[i].label().expect("labeled dataset"))
                .collect();
            let (loss, grads) = param_gradient(&model, &batch, &labels)?;
            adam.step(&mut params, &grads.flatten());
            model.set_flat_params(&params);
            epoch_loss = epoch_loss + loss;
            batches += 1;
        }
        history.push(epoch_loss / real(batches as f64));
    }
    Ok((model, history))
}

pub fn train<T: Real>(
    dataset: &LabeledDataset<T>,
    arch: ArchId,
    cfg: &TrainConfig<T>,
) -> Result<MiniPointNet<T>, ClassifierError> {
    train_with_history(dataset, arch, cfg).map(|(m, _)| m)
}

/// Fisher-Yates with the crate's seeded RNG.
fn shuffle(order: &mut [usize], rng: &mut ChaCha8Rng) {
    for i in (1..order.len()).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
}

/// Fraction of clouds whose predicted class matches the label.
pub fn evaluate<T: Real>(
    model: &MiniPointNet<T>,
    dataset: &LabeledDataset<T>,
) -> Result<f64, ClassifierError> {
    if dataset.is_empty() {
        return Err(ClassifierError::EmptyDataset);
    }
    let mut correct = 0usize;
    for cloud in &dataset.clouds {
        if model.predict(cloud)? == cloud.label().expect("labeled dataset") {
            correct += 1;
        }
    }
    Ok(correct as f64 / dataset.len() as f64)
}

/// Writes the binary model format: magic, arch byte, layer-dimension
/// header, then row-major little-endian f64 weights and biases per layer in
/// declaration order.
pub fn save_model<T: Real>(model: &MiniPointNet<T>, path: &Path) -> Result<(), ClassifierError> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(MODEL_MAGIC);
    buf.push(model.arch.byte());
    let layers: Vec<&Linear<T>> = model
        .point_layers
        .iter()
        .chain(model.head_layers.iter())
        .collect();
    buf.extend_from_slice(&(layers.len() as u32).to_le_bytes());
    for l in &layers {
        buf.extend_from_slice(&(l.out_dim() as u32).to_le_bytes());
        buf.extend_from_slice(&(l.in_dim() as u32).to_le_bytes());
    }
    for l in &layers {
        for v in l.w.as_slice() {
            buf.extend_from_slice(&v.to_f64().expect("finite weight").to_le_bytes());
        }
        for v in &l.b {
            buf.extend_from_slice(&v.to_f64().expect("finite bias").to_le_bytes());
        }
    }
    let mut file = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
    file.write_all(&buf).map_err(|e| io_err(path, e))
}

pub fn load_model<T: Real>(path: &Path) -> Result<MiniPointNet<T>, ClassifierError> {
    let format_err = |message: String| ClassifierError::Format {
        path: path.to_path_buf(),
        message,
    };
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .map_err(|e| io_err(path, e))?
        .read_to_end(&mut bytes)
        .map_err(|e| io_err(path, e))?;
    if bytes.len() < MODEL_MAGIC.len() + 1 + 4 {
        return Err(format_err("file too short".into()));
    }
    if &bytes[..MODEL_MAGIC.len()] != MODEL_MAGIC {
        return Err(format_err("bad magic".into()));
    }
    let mut off = MODEL_MAGIC.len();
    let arch = ArchId::from_byte(bytes[off])
        .ok_or_else(|| format_err(format!("unknown arch byte {}", bytes[off])))?;
    off += 1;
    let read_u32 = |bytes: &[u8], off: &mut usize| -> Result<u32, ClassifierError> {
        if *off + 4 > bytes.len() {
            return Err(format_err("truncated header".into()));
        }
        let v = u32::from_le_bytes(bytes[*off..*off + 4].try_into().unwrap());
        *off += 4;
        Ok(v)
    };
    let layer_count = read_u32(&bytes, &mut off)? as usize;
    let mut dims = Vec::with_capacity(layer_count);
    for _ in 0..layer_count {
        let out_dim = read_u32(&bytes, &mut off)? as usize;
        let in_dim = read_u32(&bytes, &mut off)? as usize;
        dims.push((in_dim, out_dim));
    }
    let class_count = dims.last().map(|&(_, o)| o).unwrap_or(0);
    if class_count < 2 {
        return Err(format_err(format!("bad class count {class_count}")));
    }
    let (point_dims, head_dims) = arch.layer_dims(class_count);
    let expected: Vec<(usize, usize)> =
        point_dims.iter().chain(head_dims.iter()).copied().collect();
    if dims != expected {
        return Err(format_err(format!(
            "layer dims {dims:?} do not match architecture {} template {expected:?}",
            arch.name()
        )));
    }
    let mut model = MiniPointNet::<T>::zeroed(arch, class_count);
    let total_params: usize = dims.iter().map(|&(i, o)| o * i + o).sum();
    if bytes.len() - off != total_params * 8 {
        return Err(format_err(format!(
            "payload is {} bytes, expected {}",
            bytes.len() - off,
            total_params * 8
        )));
    }
    let mut flat = Vec::with_capacity(total_params);
    for _ in 0..total_params {
        let v = f64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
        if !v.is_finite() {
            return Err(format_err("non-finite parameter".into()));
        }
        flat.push(real::<T>(v));
        off += 8;
    }
    model.set_flat_params(&flat);
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{generate_dataset, DatasetConfig, Split};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_cloud(n: usize, seed: u64) -> PointCloud<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        PointCloud::new(
            (0..n)
                .map(|_| {
                    [
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                    ]
                })
                .collect(),
            None,
        )
        .unwrap()
    }

    fn random_model(arch: ArchId, c: usize, seed: u64) -> MiniPointNet<f64> {
        let mut model = MiniPointNet::init(arch, c, seed);
        // Random biases too, so gradient checks exercise every parameter.
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 999);
        let mut params = model.flat_params();
        for v in &mut params {
            if *v == 0.0 {
                *v = rng.random_range(-0.1..0.1);
            }
        }
        model.set_flat_params(&params);
        model
    }

    #[test]
    fn zero_model_gives_zero_logits() {
        let model = MiniPointNet::<f64>::zeroed(ArchId::A, 5);
        let logits = model.forward(&random_cloud(16, 0)).unwrap();
        assert_eq!(logits, vec![0.0; 5]);
    }

    #[test]
    fn forward_is_permutation_invariant_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for arch in [ArchId::A, ArchId::B] {
            let model = random_model(arch, 6, 21);
            let cloud = random_cloud(32, 8);
            let logits = model.forward(&cloud).unwrap();
            for _ in 0..100 {
                let mut pts = cloud.points().to_vec();
                // Seeded permutation.
                for i in (1..pts.len()).rev() {
                    let j = rng.random_range(0..=i);
                    pts.swap(i, j);
                }
                let permuted = PointCloud::new(pts, None).unwrap();
                let permuted_logits = model.forward(&permuted).unwrap();
                for (a, b) in logits.iter().zip(&permuted_logits) {
                    assert_eq!(a.to_bits(), b.to_bits(), "arch {:?}", arch);
                }
            }
        }
    }

    #[test]
    fn zero_grad_logits_gives_zero_input_gradient() {
        let model = random_model(ArchId::A, 4, 3);
        let cloud = random_cloud(12, 5);
        let grad = model.input_gradient(&cloud, &vec![0.0; 4]).unwrap();
        assert!(grad.iter().all(|g| *g == [0.0, 0.0, 0.0]));
    }

    #[test]
    fn mean_pool_all_active_gradient_identical_across_points() {
        // Positive weights and inputs keep every ReLU strictly active, so
        // mean pooling spreads one identical gradient over the points.
        let mut model = MiniPointNet::<f64>::zeroed(ArchId::B, 3);
        let mut params = model.flat_params();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for v in &mut params {
            *v = rng.random_range(0.05..0.3);
        }
        model.set_flat_params(&params);
        let cloud = PointCloud::new(
            (0..8)
                .map(|i| {
                    let base = 0.2 + 0.05 * i as f64;
                    [base, base * 1.5, base * 0.7]
                })
                .collect(),
            None,
        )
        .unwrap();
        let grad = model.input_gradient(&cloud, &[1.0, -0.5, 0.25]).unwrap();
        for g in &grad[1..] {
            for c in 0..3 {
                assert!((g[c] - grad[0][c]).abs() < 1e-15);
            }
        }
        assert!(grad[0].iter().any(|v| v.abs() > 1e-12));
    }

    /// Relative max deviation between analytic and central-difference input
    /// gradients, resampling configurations near ReLU or max-pool ties.
    fn input_grad_fd_error(arch: ArchId, seed: u64) -> Option<f64> {
        let model = random_model(arch, 4, seed);
        let cloud = random_cloud(10, seed + 50);
        // Reject configurations with near-ties that break differentiability.
        let cache = model.forward_cached(&cloud);
        for layer in &cache.point_pre {
            for pre in layer {
                if pre.iter().any(|z| z.abs() < 1e-4) {
                    return None;
                }
            }
        }
        if arch == ArchId::A {
            let feat = cache.pooled.len();
            let last = &cache.point_pre[cache.point_pre.len() - 1];
            for f in 0..feat {
                let mut best = f64::NEG_INFINITY;
                let mut second = f64::NEG_INFINITY;
                for pre in last {
                    let v = relu(pre[f]);
                    if v > best {
                        second = best;
                        best = v;
                    } else if v > second {
                        second = v;
                    }
                }
                // A feature that never activates is locally constant, so
                // only competing active points are a real tie.
                if best > 0.0 && best - second < 1e-4 {
                    return None;
                }
            }
        }
        for pre in &cache.head_pre[..cache.head_pre.len() - 1] {
            if pre.iter().any(|z| z.abs() < 1e-4) {
                return None;
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 77);
        let grad_logits: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let grad = model.input_gradient(&cloud, &grad_logits).unwrap();
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for pi in 0..cloud.len() {
            for c in 0..3 {
                let mut plus = cloud.points().to_vec();
                plus[pi][c] += h;
                let mut minus = cloud.points().to_vec();
                minus[pi][c] -= h;
                let objective = |pts: Vec<[f64; 3]>| -> f64 {
                    let logits = model
                        .forward(&PointCloud::new(pts, None).unwrap())
                        .unwrap();
                    logits.iter().zip(&grad_logits).map(|(l, g)| l * g).sum()
                };
                let fd = (objective(plus) - objective(minus)) / (2.0 * h);
                let denom = grad[pi][c].abs().max(fd.abs()).max(1e-6);
                worst = worst.max((grad[pi][c] - fd).abs() / denom);
            }
        }
        Some(worst)
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        for arch in [ArchId::A, ArchId::B] {
            let mut checked = 0;
            let mut seed = 0u64;
            while checked < 25 {
                seed += 1;
                if let Some(err) = input_grad_fd_error(arch, seed) {
                    assert!(err < 1e-5, "arch {arch:?} seed {seed}: rel err {err}");
                    checked += 1;
                }
                assert!(seed < 500, "too many rejected configurations");
            }
        }
    }

    #[test]
    fn param_gradient_zero_at_symmetric_stationary_point() {
        let model = MiniPointNet::<f64>::zeroed(ArchId::A, 4);
        let batch: Vec<PointCloud<f64>> = (0..4).map(|i| random_cloud(8, i)).collect();
        let labels = vec![0, 1, 2, 3];
        let (_, grads) = param_gradient(&model, &batch, &labels).unwrap();
        for g in grads.flatten() {
            assert_eq!(g, 0.0);
        }
    }

    #[test]
    fn param_gradient_matches_finite_differences() {
        let model = random_model(ArchId::B, 3, 31);
        let batch: Vec<PointCloud<f64>> = (0..3).map(|i| random_cloud(8, 200 + i)).collect();
        let labels = vec![0, 2, 1];
        let (_, grads) = param_gradient(&model, &batch, &labels).unwrap();
        let flat_grads = grads.flatten();
        let params = model.flat_params();
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        // Check a deterministic subset of parameters to keep runtime sane.
        for idx in (0..params.len()).step_by(7) {
            let mut m_plus = model.clone();
            let mut p = params.clone();
            p[idx] += h;
            m_plus.set_flat_params(&p);
            let mut m_minus = model.clone();
            p[idx] -= 2.0 * h;
            m_minus.set_flat_params(&p);
            let (lp, _) = param_gradient(&m_plus, &batch, &labels).unwrap();
            let (lm, _) = param_gradient(&m_minus, &batch, &labels).unwrap();
            let fd = (lp - lm) / (2.0 * h);
            let denom = flat_grads[idx].abs().max(fd.abs()).max(1e-6);
            worst = worst.max((flat_grads[idx] - fd).abs() / denom);
        }
        assert!(worst < 1e-5, "relative error {worst}");
    }

    #[test]
    fn training_loss_decreases() {
        let cfg = DatasetConfig {
            points_per_cloud: 32,
            train_per_class: 8,
            test_per_class: 2,
            jitter: 0.02,
            seed: 3,
        };
        let ds = generate_dataset::<f64>(&cfg, Split::Train).unwrap();
        let train_cfg = TrainConfig {
            epochs: 10,
            batch_size: 16,
            lr: 0.01,
            seed: 5,
        };
        let (_, history) = train_with_history(&ds, ArchId::A, &train_cfg).unwrap();
        for w in history.windows(2) {
            assert!(w[1] < w[0], "loss did not decrease: {history:?}");
        }
    }

    #[test]
    fn training_is_deterministic() {
        let cfg = DatasetConfig {
            points_per_cloud: 24,
            train_per_class: 4,
            test_per_class: 1,
            jitter: 0.02,
            seed: 9,
        };
        let ds = generate_dataset::<f64>(&cfg, Split::Train).unwrap();
        let train_cfg = TrainConfig {
            epochs: 3,
            batch_size: 8,
            lr: 0.01,
            seed: 42,
        };
        let a = train(&ds, ArchId::B, &train_cfg).unwrap();
        let b = train(&ds, ArchId::B, &train_cfg).unwrap();
        for (x, y) in a.flat_params().iter().zip(b.flat_params()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn model_roundtrip_preserves_logits() {
        let dir = std::env::temp_dir().join(format!("saao-model-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("model.bin");
        let model = random_model(ArchId::A, 8, 77);
        save_model(&model, &path).unwrap();
        let back = load_model::<f64>(&path).unwrap();
        assert_eq!(model, back);
        for seed in 0..10 {
            let cloud = random_cloud(16, 300 + seed);
            let a = model.forward(&cloud).unwrap();
            let b = back.forward(&cloud).unwrap();
            for (x, y) in a.iter().zip(&b) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn load_rejects_malformed_files() {
        let dir = std::env::temp_dir().join(format!("saao-model-bad-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.bin");
        std::fs::write(&path, b"WRONGMAGIC").unwrap();
        assert!(matches!(
            load_model::<f64>(&path),
            Err(ClassifierError::Format { .. })
        ));
        // Valid magic but truncated payload.
        let model = MiniPointNet::<f64>::zeroed(ArchId::B, 4);
        save_model(&model, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 9]).unwrap();
        assert!(matches!(
            load_model::<f64>(&path),
            Err(ClassifierError::Format { .. })
        ));
        std::fs::remove_dir_all(&dir).ok();
    }
}
