//! Distortion metrics and the learnable spectral mixing metric.
//!
//! Spatial metrics: indexed mean-square error plus set-based Chamfer and
//! Hausdorff distances. Spectral side: a positive diagonal metric `M` whose
//! weighted distance sets each mixing weight `w = exp(-Dist)`, together with
//! the exact gradient of `w` with respect to the diagonal.

use thiserror::Error;

use crate::geometry::{dist2, PointCloud};
use crate::real::{real, Real};
use crate::spectral::SpectralCloud;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("point clouds must be nonempty")]
    EmptyCloud,
    #[error("indexed metric needs equal point counts, got {0} and {1}")]
    CountMismatch(usize, usize),
    #[error("spectral features have different sizes: {0} vs {1}")]
    SpectralSizeMismatch(usize, usize),
    #[error("spectral features come from different bases")]
    SpectralBasisMismatch,
    #[error("metric diagonal has {diag} entries for features of size {n}")]
    MetricSizeMismatch { diag: usize, n: usize },
    #[error("metric initialization needs a batch of at least 2, got {0}")]
    BatchTooSmall(usize),
}

/// Indexed mean squared error `(1/n) sum_i ||p_i - p'_i||^2`.
pub fn mse_dist<T: Real>(a: &PointCloud<T>, b: &PointCloud<T>) -> Result<T, MetricError> {
    if a.is_empty() || b.is_empty() {
        return Err(MetricError::EmptyCloud);
    }
    if a.len() != b.len() {
        return Err(MetricError::CountMismatch(a.len(), b.len()));
    }
    let sum = a
        .points()
        .iter()
        .zip(b.points())
        .fold(T::zero(), |acc, (p, q)| acc + dist2(*p, *q));
    Ok(sum / real(a.len() as f64))
}

/// Nearest-neighbor structure shared by the set-based metrics: for every
/// point of one cloud, the squared distance to and index of its nearest
/// point in the other cloud (ties toward the lower index).
pub(crate) struct NearestPairs<T> {
    /// `(min squared distance, argmin)` from each `a`-point into `b`.
    pub a_to_b: Vec<(T, usize)>,
    /// `(min squared distance, argmin)` from each `b`-point into `a`.
    pub b_to_a: Vec<(T, usize)>,
}

pub(crate) fn nearest_pairs<T: Real>(a: &[[T; 3]], b: &[[T; 3]]) -> NearestPairs<T> {
    let mut a_to_b = vec![(T::infinity(), 0usize); a.len()];
    let mut b_to_a = vec![(T::infinity(), 0usize); b.len()];
    for (i, p) in a.iter().enumerate() {
        for (j, q) in b.iter().enumerate() {
            let d = dist2(*p, *q);
            if d < a_to_b[i].0 {
                a_to_b[i] = (d, j);
            }
            if d < b_to_a[j].0 {
                b_to_a[j] = (d, i);
            }
        }
    }
    NearestPairs { a_to_b, b_to_a }
}

/// Chamfer distance: mean squared nearest-neighbor distance, both ways.
pub fn chamfer<T: Real>(a: &PointCloud<T>, b: &PointCloud<T>) -> Result<T, MetricError> {
    if a.is_empty() || b.is_empty() {
        return Err(MetricError::EmptyCloud);
    }
    let pairs = nearest_pairs(a.points(), b.points());
    Ok(chamfer_from_pairs(&pairs, a.len(), b.len()))
}

pub(crate) fn chamfer_from_pairs<T: Real>(pairs: &NearestPairs<T>, na: usize, nb: usize) -> T {
    let fwd = pairs
        .a_to_b
        .iter()
        .fold(T::zero(), |acc, (d, _)| acc + *d);
    let bwd = pairs
        .b_to_a
        .iter()
        .fold(T::zero(), |acc, (d, _)| acc + *d);
    fwd / real(na as f64) + bwd / real(nb as f64)
}

/// Hausdorff distance: the larger, over both directions, of the worst
/// nearest-neighbor (non-squared) distance.
pub fn hausdorff<T: Real>(a: &PointCloud<T>, b: &PointCloud<T>) -> Result<T, MetricError> {
    if a.is_empty() || b.is_empty() {
        return Err(MetricError::EmptyCloud);
    }
    let pairs = nearest_pairs(a.points(), b.points());
    Ok(hausdorff_from_pairs(&pairs).0)
}

/// Returns `(distance, direction, index)` where direction 0 means the
/// extremum is an `a`-point (its nearest `b` realizes the max) and 1 means a
/// `b`-point. Ties prefer direction 0 and the lower index.
pub(crate) fn hausdorff_from_pairs<T: Real>(pairs: &NearestPairs<T>) -> (T, u8, usize) {
    let mut best = (T::neg_infinity(), 0u8, 0usize);
    for (i, (d, _)) in pairs.a_to_b.iter().enumerate() {
        if *d > best.0 {
            best = (*d, 0, i);
        }
    }
    for (j, (d, _)) in pairs.b_to_a.iter().enumerate() {
        if *d > best.0 {
            best = (*d, 1, j);
        }
    }
    (best.0.sqrt(), best.1, best.2)
}

/// Learnable positive diagonal metric on spectral rows.
#[derive(Debug, Clone, PartialEq)]
pub struct MixMetric<T> {
    m_diag: Vec<T>,
    epsilon: T,
    m_min: T,
    m_max: T,
}

/// Default variance regularizer for metric initialization.
pub fn default_epsilon<T: Real>() -> T {
    real(1e-6)
}

/// Default clipping bounds for the metric diagonal.
pub fn default_bounds<T: Real>() -> (T, T) {
    (real(1e-4), real(1e4))
}

impl<T: Real> MixMetric<T> {
    /// Identity metric of size `n` with the default bounds.
    pub fn identity(n: usize) -> Self {
        let (m_min, m_max) = default_bounds();
        Self {
            m_diag: vec![T::one(); n],
            epsilon: default_epsilon(),
            m_min,
            m_max,
        }
    }

    pub fn n(&self) -> usize {
        self.m_diag.len()
    }

    pub fn diag(&self) -> &[T] {
        &self.m_diag
    }

    pub fn epsilon(&self) -> T {
        self.epsilon
    }

    pub fn bounds(&self) -> (T, T) {
        (self.m_min, self.m_max)
    }

    /// Clips every entry into the positive bounds; the update path calls
    /// this after each optimizer step.
    pub fn clip_in_place(&mut self) {
        for v in &mut self.m_diag {
            *v = v.max(self.m_min).min(self.m_max);
        }
    }

    /// Applies an additive update then clips.
    pub fn apply_update(&mut self, delta: &[T]) {
        debug_assert_eq!(delta.len(), self.m_diag.len());
        for (v, d) in self.m_diag.iter_mut().zip(delta) {
            *v = *v + *d;
        }
        self.clip_in_place();
    }

    /// Rescales the diagonal and its bounds by `factor`.
    ///
    /// The raw inverse-variance metric gives two independent population
    /// draws an expected squared distance of about twice the feature
    /// dimension, which drives `exp(-Dist)` to zero for any realistic
    /// cloud size; scaling by one over the dimension keeps the mixing
    /// weight informative.
    pub fn scaled(&self, factor: T) -> Self {
        let mut out = Self {
            m_diag: self.m_diag.iter().map(|&v| v * factor).collect(),
            epsilon: self.epsilon,
            m_min: self.m_min * factor,
            m_max: self.m_max * factor,
        };
        out.clip_in_place();
        out
    }
}

fn check_pair<T: Real>(
    a: &SpectralCloud<T>,
    b: &SpectralCloud<T>,
    metric: &MixMetric<T>,
) -> Result<(), MetricError> {
    if a.n() != b.n() {
        return Err(MetricError::SpectralSizeMismatch(a.n(), b.n()));
    }
    if a.basis_id() != b.basis_id() {
        return Err(MetricError::SpectralBasisMismatch);
    }
    if metric.n() != a.n() {
        return Err(MetricError::MetricSizeMismatch {
            diag: metric.n(),
            n: a.n(),
        });
    }
    Ok(())
}

/// Weighted Euclidean distance over spectral rows:
/// `sqrt( sum_ch sum_row m[row] * d[row][ch]^2 )` with `d = a - b`.
/// Each coordinate channel enters as an independent signal.
pub fn weighted_spectral_dist<T: Real>(
    a: &SpectralCloud<T>,
    b: &SpectralCloud<T>,
    metric: &MixMetric<T>,
) -> Result<T, MetricError> {
    check_pair(a, b, metric)?;
    let mut acc = T::zero();
    for ((ra, rb), &m) in a.coeffs().iter().zip(b.coeffs()).zip(metric.diag()) {
        for c in 0..3 {
            let d = ra[c] - rb[c];
            acc = acc + m * d * d;
        }
    }
    Ok(acc.sqrt())
}

/// Mixing weight `w = exp(-Dist)` in `(0, 1]`; 1 exactly when the features
/// coincide.
pub fn mix_weight<T: Real>(
    a: &SpectralCloud<T>,
    b: &SpectralCloud<T>,
    metric: &MixMetric<T>,
) -> Result<T, MetricError> {
    Ok((-weighted_spectral_dist(a, b, metric)?).exp())
}

/// Gradient of the mixing weight with respect to the metric diagonal:
/// `dw/dm[j] = w * (-1 / (2 Dist)) * sum_ch d[j][ch]^2`.
///
/// At `Dist < 1e-12` the weight sits at its maximum and the gradient is
/// defined as zero, which avoids the division blowup.
pub fn grad_mix_weight_wrt_metric<T: Real>(
    a: &SpectralCloud<T>,
    b: &SpectralCloud<T>,
    metric: &MixMetric<T>,
) -> Result<Vec<T>, MetricError> {
    check_pair(a, b, metric)?;
    let dist = weighted_spectral_dist(a, b, metric)?;
    if dist < real(1e-12) {
        return Ok(vec![T::zero(); metric.n()]);
    }
    let w = (-dist).exp();
    let scale = -w / (real::<T>(2.0) * dist);
    Ok(a.coeffs()
        .iter()
        .zip(b.coeffs())
        .map(|(ra, rb)| {
            let mut s = T::zero();
            for c in 0..3 {
                let d = ra[c] - rb[c];
                s = s + d * d;
            }
            scale * s
        })
        .collect())
}

/// Initializes the metric as the inverse of the per-row coefficient
/// variance, clipped into the given bounds. Variance is taken across the
/// batch separately per coordinate channel (population convention), then
/// pooled into one scalar per row by averaging the three channel variances;
/// a batch of identical features therefore has exactly zero variance.
pub fn init_metric<T: Real>(
    batch: &[SpectralCloud<T>],
    epsilon: T,
    bounds: (T, T),
) -> Result<MixMetric<T>, MetricError> {
    if batch.len() < 2 {
        return Err(MetricError::BatchTooSmall(batch.len()));
    }
    let n = batch[0].n();
    for s in batch {
        if s.n() != n {
            return Err(MetricError::SpectralSizeMismatch(n, s.n()));
        }
    }
    let count = real::<T>(batch.len() as f64);
    let mut m_diag = Vec::with_capacity(n);
    for row in 0..n {
        let mut pooled = T::zero();
        for c in 0..3 {
            let mut sum = T::zero();
            let mut sum_sq = T::zero();
            for s in batch {
                let v = s.coeffs()[row][c];
                sum = sum + v;
                sum_sq = sum_sq + v * v;
            }
            let mean = sum / count;
            pooled = pooled + (sum_sq / count - mean * mean).max(T::zero());
        }
        let var = pooled / real(3.0);
        m_diag.push((var + epsilon).recip().max(bounds.0).min(bounds.1));
    }
    Ok(MixMetric {
        m_diag,
        epsilon,
        m_min: bounds.0,
        m_max: bounds.1,
    })
}

/// Cosine similarity of two flattened gradients; a zero vector compares as
/// -1 (the worst possible path, never selected).
pub fn cosine_similarity<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut dot = T::zero();
    let mut na = T::zero();
    let mut nb = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        dot = dot + x * y;
        na = na + x * x;
        nb = nb + y * y;
    }
    if na == T::zero() || nb == T::zero() {
        return -T::one();
    }
    dot / (na.sqrt() * nb.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::PointCloud;
    use crate::spectral::{gft, gft_basis};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cloud(points: Vec<[f64; 3]>) -> PointCloud<f64> {
        PointCloud::new(points, None).unwrap()
    }

    fn random_cloud(n: usize, seed: u64) -> PointCloud<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        cloud(
            (0..n)
                .map(|_| {
                    [
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                    ]
                })
                .collect(),
        )
    }

    #[test]
    fn identical_clouds_have_zero_distances() {
        let a = random_cloud(16, 1);
        assert_eq!(mse_dist(&a, &a).unwrap(), 0.0);
        assert_eq!(chamfer(&a, &a).unwrap(), 0.0);
        assert_eq!(hausdorff(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn unit_offset_values_match_definitions() {
        // Four stacked copies keep the cloud-size invariant while acting as
        // single-point sets.
        let a = cloud(vec![[0.0, 0.0, 0.0]; 4]);
        let b = cloud(vec![[1.0, 0.0, 0.0]; 4]);
        assert!((mse_dist(&a, &b).unwrap() - 1.0).abs() < 1e-15);
        assert!((chamfer(&a, &b).unwrap() - 2.0).abs() < 1e-15);
        assert!((hausdorff(&a, &b).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn permutation_moves_mse_but_not_set_metrics() {
        let a = random_cloud(24, 2);
        let mut pts = a.points().to_vec();
        pts.rotate_left(7);
        let b = cloud(pts);
        assert!(chamfer(&a, &b).unwrap() < 1e-15);
        assert!(hausdorff(&a, &b).unwrap() < 1e-15);
        assert!(mse_dist(&a, &b).unwrap() > 1e-3);
    }

    #[test]
    fn chamfer_and_hausdorff_are_symmetric() {
        let a = random_cloud(20, 3);
        let b = random_cloud(24, 4);
        assert!((chamfer(&a, &b).unwrap() - chamfer(&b, &a).unwrap()).abs() < 1e-15);
        assert!((hausdorff(&a, &b).unwrap() - hausdorff(&b, &a).unwrap()).abs() < 1e-15);
    }

    fn spectral_pair(seed: u64) -> (SpectralCloud<f64>, SpectralCloud<f64>, usize) {
        let base = random_cloud(16, seed);
        let basis = gft_basis(&base, 3).unwrap();
        let other = random_cloud(16, seed + 1000);
        (
            gft(&base, &basis).unwrap(),
            gft(&other, &basis).unwrap(),
            16,
        )
    }

    #[test]
    fn weighted_dist_identity_metric_is_frobenius() {
        let (sa, sb, n) = spectral_pair(1);
        let metric = MixMetric::identity(n);
        let d = weighted_spectral_dist(&sa, &sb, &metric).unwrap();
        let mut frob = 0.0;
        for (ra, rb) in sa.coeffs().iter().zip(sb.coeffs()) {
            for c in 0..3 {
                frob += (ra[c] - rb[c]).powi(2);
            }
        }
        assert!((d - frob.sqrt()).abs() < 1e-12);
        assert_eq!(weighted_spectral_dist(&sa, &sa, &metric).unwrap(), 0.0);
    }

    #[test]
    fn one_hot_difference_matches_closed_form() {
        let base = random_cloud(16, 7);
        let basis = gft_basis(&base, 3).unwrap();
        let sa = gft(&base, &basis).unwrap();
        let mut coeffs = sa.coeffs().to_vec();
        let j = 5;
        let v = 0.75;
        coeffs[j][1] += v;
        let sb = SpectralCloud::from_coeffs(coeffs, &basis).unwrap();
        let mut metric = MixMetric::identity(16);
        metric.m_diag[j] = 4.0;
        let d = weighted_spectral_dist(&sa, &sb, &metric).unwrap();
        assert!((d - 2.0 * v).abs() < 1e-12); // sqrt(m[j]) * |v|
        let grad = grad_mix_weight_wrt_metric(&sa, &sb, &metric).unwrap();
        let w = (-d).exp();
        let expect = -w / (2.0 * d) * v * v;
        for (idx, g) in grad.iter().enumerate() {
            if idx == j {
                assert!((g - expect).abs() < 1e-12);
            } else {
                assert_eq!(*g, 0.0);
            }
        }
    }

    #[test]
    fn mix_weight_range_and_identity() {
        let (sa, sb, n) = spectral_pair(2);
        let metric = MixMetric::identity(n);
        assert_eq!(mix_weight(&sa, &sa, &metric).unwrap(), 1.0);
        let w = mix_weight(&sa, &sb, &metric).unwrap();
        assert!(w > 0.0 && w < 1.0);
        assert_eq!(
            grad_mix_weight_wrt_metric(&sa, &sa, &metric).unwrap(),
            vec![0.0; n]
        );
    }

    #[test]
    fn mix_weight_halves_at_ln2_distance() {
        let base = random_cloud(16, 11);
        let basis = gft_basis(&base, 3).unwrap();
        let sa = gft(&base, &basis).unwrap();
        let mut coeffs = sa.coeffs().to_vec();
        coeffs[0][0] += std::f64::consts::LN_2;
        let sb = SpectralCloud::from_coeffs(coeffs, &basis).unwrap();
        let metric = MixMetric::identity(16);
        let w = mix_weight(&sa, &sb, &metric).unwrap();
        assert!((w - 0.5).abs() < 1e-12);
    }

    #[test]
    fn mix_weight_decreases_as_metric_entry_grows() {
        let (sa, sb, n) = spectral_pair(3);
        let metric = MixMetric::identity(n);
        let w0 = mix_weight(&sa, &sb, &metric).unwrap();
        for j in 0..n {
            let mut bigger = metric.clone();
            bigger.m_diag[j] = 3.0;
            let w1 = mix_weight(&sa, &sb, &bigger).unwrap();
            // Strict decrease requires a nonzero difference at row j.
            let diff: f64 = (0..3)
                .map(|c| (sa.coeffs()[j][c] - sb.coeffs()[j][c]).powi(2))
                .sum();
            if diff > 1e-20 {
                assert!(w1 < w0, "row {j}");
            }
        }
    }

    #[test]
    fn grad_mix_weight_matches_finite_differences() {
        let mut worst: f64 = 0.0;
        for seed in 0..100 {
            let (sa, sb, n) = spectral_pair(100 + seed);
            let mut metric = MixMetric::identity(n);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for v in &mut metric.m_diag {
                *v = rng.random_range(0.5..2.0);
            }
            let grad = grad_mix_weight_wrt_metric(&sa, &sb, &metric).unwrap();
            let h = 1e-6;
            for j in 0..n {
                let mut plus = metric.clone();
                plus.m_diag[j] += h;
                let mut minus = metric.clone();
                minus.m_diag[j] -= h;
                let fd = (mix_weight(&sa, &sb, &plus).unwrap()
                    - mix_weight(&sa, &sb, &minus).unwrap())
                    / (2.0 * h);
                let denom = grad[j].abs().max(fd.abs()).max(1e-9);
                worst = worst.max((grad[j] - fd).abs() / denom);
            }
        }
        assert!(worst < 1e-6, "worst relative error {worst}");
    }

    #[test]
    fn init_metric_zero_variance_saturates() {
        let base = random_cloud(16, 5);
        let basis = gft_basis(&base, 3).unwrap();
        let s = gft(&base, &basis).unwrap();
        let batch = vec![s.clone(), s.clone(), s];
        let eps = 1e-6;
        let metric = init_metric(&batch, eps, default_bounds()).unwrap();
        for &v in metric.diag() {
            assert_eq!(v, 1e4); // min(1/eps, m_max) with the default bounds
        }
    }

    #[test]
    fn init_metric_largest_variance_row_gets_smallest_weight() {
        let base = random_cloud(16, 6);
        let basis = gft_basis(&base, 3).unwrap();
        let s = gft(&base, &basis).unwrap();
        let mut bumped = s.coeffs().to_vec();
        bumped[0][0] += 5.0;
        let s2 = SpectralCloud::from_coeffs(bumped, &basis).unwrap();
        let metric = init_metric(&[s, s2], 1e-6, default_bounds()).unwrap();
        let m0 = metric.diag()[0];
        for (j, &v) in metric.diag().iter().enumerate().skip(1) {
            assert!(m0 < v, "row {j}");
        }
    }

    #[test]
    fn init_metric_matches_brute_force_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let base = random_cloud(12, 8);
        let basis = gft_basis(&base, 3).unwrap();
        let batch: Vec<SpectralCloud<f64>> = (0..5)
            .map(|_| {
                let coeffs = (0..12)
                    .map(|_| {
                        [
                            rng.random_range(-1.0..1.0),
                            rng.random_range(-1.0..1.0),
                            rng.random_range(-1.0..1.0),
                        ]
                    })
                    .collect();
                SpectralCloud::from_coeffs(coeffs, &basis).unwrap()
            })
            .collect();
        let eps = 1e-6;
        let metric = init_metric(&batch, eps, default_bounds()).unwrap();
        for row in 0..12 {
            // Oracle: per-channel population variance across the batch,
            // averaged over the three channels.
            let mut pooled = 0.0;
            for c in 0..3 {
                let vals: Vec<f64> = batch.iter().map(|s| s.coeffs()[row][c]).collect();
                let mean: f64 = vals.iter().sum::<f64>() / vals.len() as f64;
                pooled +=
                    vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / vals.len() as f64;
            }
            let expect = 1.0 / (pooled / 3.0 + eps);
            assert!(
                (metric.diag()[row] - expect).abs() <= 1e-12 * expect.max(1.0),
                "row {row}: {} vs {expect}",
                metric.diag()[row]
            );
        }
    }

    #[test]
    fn init_metric_rejects_tiny_batch() {
        let base = random_cloud(8, 9);
        let basis = gft_basis(&base, 3).unwrap();
        let s = gft(&base, &basis).unwrap();
        assert!(matches!(
            init_metric(&[s], 1e-6, default_bounds()),
            Err(MetricError::BatchTooSmall(1))
        ));
    }

    #[test]
    fn cosine_similarity_basics() {
        let g = [1.0f64, -2.0, 0.5];
        let doubled = [2.0, -4.0, 1.0];
        let negated = [-1.0, 2.0, -0.5];
        assert!((cosine_similarity(&g, &doubled) - 1.0).abs() < 1e-12);
        assert!((cosine_similarity(&g, &negated) + 1.0).abs() < 1e-12);
        let orth_a = [1.0f64, 0.0];
        let orth_b = [0.0f64, 3.0];
        assert_eq!(cosine_similarity(&orth_a, &orth_b), 0.0);
        assert_eq!(cosine_similarity(&[0.0f64, 0.0], &[1.0, 1.0]), -1.0);
    }

    #[test]
    fn weighted_dist_triangle_inequality() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let base = random_cloud(10, 20);
        let basis = gft_basis(&base, 3).unwrap();
        let mut metric = MixMetric::identity(10);
        for v in &mut metric.m_diag {
            *v = rng.random_range(0.1..5.0);
        }
        for _ in 0..100 {
            let mut tri = Vec::new();
            for _ in 0..3 {
                let coeffs = (0..10)
                    .map(|_| {
                        [
                            rng.random_range(-1.0..1.0),
                            rng.random_range(-1.0..1.0),
                            rng.random_range(-1.0..1.0),
                        ]
                    })
                    .collect();
                tri.push(SpectralCloud::from_coeffs(coeffs, &basis).unwrap());
            }
            let ab = weighted_spectral_dist(&tri[0], &tri[1], &metric).unwrap();
            let bc = weighted_spectral_dist(&tri[1], &tri[2], &metric).unwrap();
            let ac = weighted_spectral_dist(&tri[0], &tri[2], &metric).unwrap();
            assert!(ac <= ab + bc + 1e-12);
        }
    }
}
