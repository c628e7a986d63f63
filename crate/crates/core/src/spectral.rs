//! Graph-spectral machinery: KNN graph, combinatorial Laplacian, symmetric
//! eigendecomposition, graph Fourier transform and the fixed frequency mask.
//!
//! The eigensolver is a cyclic Jacobi sweep: provably convergent for real
//! symmetric input, and trivially fast at the cloud sizes used here
//! (n <= 256). The basis of one cloud is computed once and frozen; the
//! attack never rebuilds the graph while perturbing.

use std::sync::atomic::{AtomicU64, Ordering};

use thiserror::Error;

use crate::geometry::{dist2, PointCloud};
use crate::mat::{mul_points, transpose_mul_points, Mat};
use crate::real::{real, Real};

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("k must satisfy 1 <= k < n, got k={k}, n={n}")]
    BadNeighborCount { k: usize, n: usize },
    #[error("adjacency must be symmetric 0/1 with zero diagonal")]
    BadAdjacency,
    #[error("matrix asymmetry {0:e} exceeds tolerance")]
    NotSymmetric(f64),
    #[error("Jacobi sweep did not converge: off-diagonal residual {residual:e} after {sweeps} sweeps")]
    NoConvergence { residual: f64, sweeps: usize },
    #[error("dimension mismatch: basis is {basis}, cloud is {cloud}")]
    DimensionMismatch { basis: usize, cloud: usize },
    #[error("spectral feature was produced under a different basis")]
    BasisMismatch,
    #[error("mask band must satisfy 1 <= b < n, got b={band}, n={n}")]
    BadBand { band: usize, n: usize },
    #[error("mask weights must satisfy 0 < alpha_high < alpha_low < 1, got low={low}, high={high}")]
    BadMaskWeights { low: f64, high: f64 },
}

static NEXT_BASIS_ID: AtomicU64 = AtomicU64::new(1);

/// Orthonormal eigenbasis of one cloud's graph Laplacian.
#[derive(Debug, Clone)]
pub struct GftBasis<T> {
    /// Column `j` of `q` is the eigenvector for `eigenvalues[j]`.
    q: Mat<T>,
    eigenvalues: Vec<T>,
    k_used: usize,
    id: u64,
}

impl<T: Real> GftBasis<T> {
    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[T] {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &Mat<T> {
        &self.q
    }

    pub fn k_used(&self) -> usize {
        self.k_used
    }

    pub fn id(&self) -> u64 {
        self.id
    }
}

/// GFT coefficient block of one cloud: row r holds the three channel
/// coefficients at frequency index r.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralCloud<T> {
    coeffs: Vec<[T; 3]>,
    basis_id: u64,
}

impl<T: Real> SpectralCloud<T> {
    pub fn n(&self) -> usize {
        self.coeffs.len()
    }

    pub fn coeffs(&self) -> &[[T; 3]] {
        &self.coeffs
    }

    pub fn basis_id(&self) -> u64 {
        self.basis_id
    }

    /// Rebinds raw coefficients to an existing basis id; the attack loop
    /// uses this for perturbed and mixed features.
    pub(crate) fn bound_to(coeffs: Vec<[T; 3]>, basis_id: u64) -> Self {
        Self { coeffs, basis_id }
    }

    /// Builds a coefficient block bound to `basis` without transforming;
    /// used for perturbed copies of an existing feature.
    pub fn from_coeffs(coeffs: Vec<[T; 3]>, basis: &GftBasis<T>) -> Result<Self, SpectralError> {
        if coeffs.len() != basis.n() {
            return Err(SpectralError::DimensionMismatch {
                basis: basis.n(),
                cloud: coeffs.len(),
            });
        }
        Ok(Self {
            coeffs,
            basis_id: basis.id(),
        })
    }

    /// Squared Frobenius norm of the coefficients.
    pub fn energy(&self) -> T {
        self.coeffs.iter().fold(T::zero(), |acc, r| {
            acc + r[0] * r[0] + r[1] * r[1] + r[2] * r[2]
        })
    }
}

/// Symmetric KNN adjacency: an edge is kept when either endpoint selects the
/// other. Ties in distance break toward the lower index.
pub fn knn_graph<T: Real>(cloud: &PointCloud<T>, k: usize) -> Result<Mat<T>, SpectralError> {
    let n = cloud.len();
    if k == 0 || k >= n {
        return Err(SpectralError::BadNeighborCount { k, n });
    }
    let pts = cloud.points();
    let mut adj = Mat::zeros(n, n);
    let mut order: Vec<usize> = Vec::with_capacity(n - 1);
    for i in 0..n {
        order.clear();
        order.extend((0..n).filter(|&j| j != i));
        order.sort_by(|&a, &b| {
            let da = dist2(pts[i], pts[a]);
            let db = dist2(pts[i], pts[b]);
            da.partial_cmp(&db)
                .expect("finite distances")
                .then(a.cmp(&b))
        });
        for &j in order.iter().take(k) {
            adj.set(i, j, T::one());
            adj.set(j, i, T::one());
        }
    }
    Ok(adj)
}

/// Combinatorial Laplacian `L = D - A` of a symmetric 0/1 adjacency.
pub fn laplacian<T: Real>(adj: &Mat<T>) -> Result<Mat<T>, SpectralError> {
    let n = adj.rows();
    if adj.cols() != n {
        return Err(SpectralError::BadAdjacency);
    }
    for i in 0..n {
        if adj.get(i, i) != T::zero() {
            return Err(SpectralError::BadAdjacency);
        }
        for j in 0..n {
            let v = adj.get(i, j);
            if v != T::zero() && v != T::one() {
                return Err(SpectralError::BadAdjacency);
            }
            if adj.get(j, i) != v {
                return Err(SpectralError::BadAdjacency);
            }
        }
    }
    let mut lap = Mat::zeros(n, n);
    for i in 0..n {
        let mut degree = T::zero();
        for j in 0..n {
            let a = adj.get(i, j);
            degree = degree + a;
            lap.set(i, j, -a);
        }
        lap.set(i, i, degree);
    }
    Ok(lap)
}

fn off_diagonal_frobenius<T: Real>(a: &Mat<T>) -> T {
    let n = a.rows();
    let mut acc = T::zero();
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let v = a.get(i, j);
                acc = acc + v * v;
            }
        }
    }
    acc.sqrt()
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Sweeps run until the off-diagonal Frobenius norm drops below
/// `tol * ||L||_F` with `tol = max(1e-12, 16 eps)` (the floor keeps the
/// `f32` instantiation convergent; for `f64` the bound is exactly 1e-12),
/// capped at 100 sweeps. Output eigenvalues ascend, ties keeping their
/// original column order, and each eigenvector's first entry above 1e-12
/// in magnitude is made positive so the basis is deterministic.
pub fn eigh<T: Real>(l: &Mat<T>, k_used: usize) -> Result<GftBasis<T>, SpectralError> {
    let n = l.rows();
    assert_eq!(l.cols(), n, "square input required");
    let asym = l.max_asymmetry();
    if asym >= real(1e-10) {
        return Err(SpectralError::NotSymmetric(
            asym.to_f64().unwrap_or(f64::NAN),
        ));
    }
    let mut a = l.clone();
    // Exact symmetrization so rotations see a_pq == a_qp.
    for i in 0..n {
        for j in (i + 1)..n {
            let v = (a.get(i, j) + a.get(j, i)) / real(2.0);
            a.set(i, j, v);
            a.set(j, i, v);
        }
    }
    let mut q = Mat::<T>::identity(n);
    let norm = a.frobenius();
    let tol = real::<T>(1e-12).max(T::epsilon() * real(16.0)) * norm;
    let max_sweeps = 100;
    let mut converged = norm == T::zero() || off_diagonal_frobenius(&a) <= tol;
    let mut sweeps = 0;
    while !converged && sweeps < max_sweeps {
        for p in 0..n - 1 {
            for r in p + 1..n {
                let apr = a.get(p, r);
                if apr == T::zero() {
                    continue;
                }
                let app = a.get(p, p);
                let arr = a.get(r, r);
                let theta = (arr - app) / (real::<T>(2.0) * apr);
                let t = if theta.abs() > real(1e150) {
                    // Rotation angle ~ 1/(2 theta); avoids overflow in theta^2.
                    (real::<T>(2.0) * theta).recip()
                } else {
                    let sign = if theta < T::zero() { -T::one() } else { T::one() };
                    sign / (theta.abs() + (T::one() + theta * theta).sqrt())
                };
                let c = (T::one() + t * t).sqrt().recip();
                let s = t * c;
                let tau = s / (T::one() + c);
                // Update the p/r rows and columns.
                a.set(p, p, app - t * apr);
                a.set(r, r, arr + t * apr);
                a.set(p, r, T::zero());
                a.set(r, p, T::zero());
                for j in 0..n {
                    if j != p && j != r {
                        let ajp = a.get(j, p);
                        let ajr = a.get(j, r);
                        let new_p = ajp - s * (ajr + tau * ajp);
                        let new_r = ajr + s * (ajp - tau * ajr);
                        a.set(j, p, new_p);
                        a.set(p, j, new_p);
                        a.set(j, r, new_r);
                        a.set(r, j, new_r);
                    }
                }
                for j in 0..n {
                    let qjp = q.get(j, p);
                    let qjr = q.get(j, r);
                    q.set(j, p, qjp - s * (qjr + tau * qjp));
                    q.set(j, r, qjr + s * (qjp - tau * qjr));
                }
            }
        }
        sweeps += 1;
        converged = off_diagonal_frobenius(&a) <= tol;
    }
    if !converged {
        return Err(SpectralError::NoConvergence {
            residual: off_diagonal_frobenius(&a).to_f64().unwrap_or(f64::NAN),
            sweeps,
        });
    }
    // Ascending eigenvalues; stable order under exact ties.
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| {
        a.get(i, i)
            .partial_cmp(&a.get(j, j))
            .expect("finite eigenvalues")
            .then(i.cmp(&j))
    });
    let eigenvalues: Vec<T> = idx.iter().map(|&i| a.get(i, i)).collect();
    let mut sorted_q = Mat::zeros(n, n);
    for (new_col, &old_col) in idx.iter().enumerate() {
        let mut flip = T::one();
        for i in 0..n {
            let v = q.get(i, old_col);
            if v.abs() > real(1e-12) {
                if v < T::zero() {
                    flip = -T::one();
                }
                break;
            }
        }
        for i in 0..n {
            sorted_q.set(i, new_col, flip * q.get(i, old_col));
        }
    }
    Ok(GftBasis {
        q: sorted_q,
        eigenvalues,
        k_used,
        id: NEXT_BASIS_ID.fetch_add(1, Ordering::Relaxed),
    })
}

/// KNN graph -> Laplacian -> eigendecomposition for one cloud.
pub fn gft_basis<T: Real>(cloud: &PointCloud<T>, k: usize) -> Result<GftBasis<T>, SpectralError> {
    let adj = knn_graph(cloud, k)?;
    let lap = laplacian(&adj)?;
    eigh(&lap, k)
}

/// Forward transform: coefficients `Q^T P`.
pub fn gft<T: Real>(
    cloud: &PointCloud<T>,
    basis: &GftBasis<T>,
) -> Result<SpectralCloud<T>, SpectralError> {
    if cloud.len() != basis.n() {
        return Err(SpectralError::DimensionMismatch {
            basis: basis.n(),
            cloud: cloud.len(),
        });
    }
    Ok(SpectralCloud {
        coeffs: transpose_mul_points(&basis.q, cloud.points()),
        basis_id: basis.id(),
    })
}

/// Inverse transform: points `Q coeffs`. The label of the result is unset.
pub fn igft<T: Real>(
    spectral: &SpectralCloud<T>,
    basis: &GftBasis<T>,
) -> Result<PointCloud<T>, SpectralError> {
    if spectral.n() != basis.n() {
        return Err(SpectralError::DimensionMismatch {
            basis: basis.n(),
            cloud: spectral.n(),
        });
    }
    if spectral.basis_id() != basis.id() {
        return Err(SpectralError::BasisMismatch);
    }
    let pts = mul_points(&basis.q, &spectral.coeffs);
    Ok(PointCloud::new(pts, None).expect("orthonormal transform preserves validity"))
}

/// Fixed low/high frequency weighting: `alpha_low` on rows below the band,
/// `alpha_high` elsewhere.
#[derive(Debug, Clone)]
pub struct SpectralMask<T> {
    n: usize,
    low_band: usize,
    alpha_low: T,
    alpha_high: T,
}

impl<T: Real> SpectralMask<T> {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn low_band(&self) -> usize {
        self.low_band
    }

    /// Diagonal weight for frequency row `row`.
    #[inline]
    pub fn weight(&self, row: usize) -> T {
        if row < self.low_band {
            self.alpha_low
        } else {
            self.alpha_high
        }
    }

    /// Diagonal of the complement `I - M_s` at `row`.
    #[inline]
    pub fn complement_weight(&self, row: usize) -> T {
        T::one() - self.weight(row)
    }

    pub fn diag(&self) -> Vec<T> {
        (0..self.n).map(|r| self.weight(r)).collect()
    }

    /// Indicator of the low band (1 below the band, 0 elsewhere).
    pub fn low_indicator(&self) -> Vec<T> {
        (0..self.n)
            .map(|r| if r < self.low_band { T::one() } else { T::zero() })
            .collect()
    }

    /// Identity mask: every row weighted 1, so the complement vanishes.
    /// Escape hatch for the mixing-disabled reduction mode; `make_mask`
    /// itself enforces strictly interior weights.
    pub fn identity(n: usize) -> Self {
        Self {
            n,
            low_band: n,
            alpha_low: T::one(),
            alpha_high: T::one(),
        }
    }
}

/// Default low band: 32 rows at full scale, proportionally fewer for small
/// clouds.
pub fn default_low_band(n: usize) -> usize {
    32.min(n / 4).max(1)
}

pub fn make_mask<T: Real>(
    n: usize,
    low_band: usize,
    alpha_low: T,
    alpha_high: T,
) -> Result<SpectralMask<T>, SpectralError> {
    if low_band == 0 || low_band >= n {
        return Err(SpectralError::BadBand { band: low_band, n });
    }
    let ok = T::zero() < alpha_high && alpha_high < alpha_low && alpha_low < T::one();
    if !ok {
        return Err(SpectralError::BadMaskWeights {
            low: alpha_low.to_f64().unwrap_or(f64::NAN),
            high: alpha_high.to_f64().unwrap_or(f64::NAN),
        });
    }
    Ok(SpectralMask {
        n,
        low_band,
        alpha_low,
        alpha_high,
    })
}

/// Per-row spectral energy `sum_ch coeff[row][ch]^2`.
pub fn row_energies<T: Real>(spectral: &SpectralCloud<T>) -> Vec<T> {
    spectral
        .coeffs
        .iter()
        .map(|r| r[0] * r[0] + r[1] * r[1] + r[2] * r[2])
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{generate_shape, normalize_unit_ball};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_cloud(n: usize, seed: u64) -> PointCloud<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts = (0..n)
            .map(|_| {
                [
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                ]
            })
            .collect();
        normalize_unit_ball(&PointCloud::new(pts, None).unwrap()).unwrap()
    }

    #[test]
    fn knn_collinear_three_points() {
        let pts = vec![
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [3.0, 0.0, 0.0],
            [10.0, 0.0, 0.0],
        ];
        // Use the first three; pad with a far point to satisfy the minimum
        // size, then check the expected sub-block.
        let cloud = PointCloud::new(pts, None).unwrap();
        let adj = knn_graph(&cloud, 1).unwrap();
        assert_eq!(adj.get(0, 1), 1.0);
        assert_eq!(adj.get(1, 0), 1.0);
        assert_eq!(adj.get(1, 2), 1.0); // 2's nearest is 1, symmetrized
        assert_eq!(adj.get(2, 1), 1.0);
        assert_eq!(adj.get(0, 2), 0.0);
        assert_eq!(adj.get(2, 3), 1.0);
    }

    #[test]
    fn knn_complete_graph_when_k_is_n_minus_1() {
        let cloud = random_cloud(8, 1);
        let adj = knn_graph(&cloud, 7).unwrap();
        for i in 0..8 {
            for j in 0..8 {
                let expect = if i == j { 0.0 } else { 1.0 };
                assert_eq!(adj.get(i, j), expect);
            }
        }
    }

    #[test]
    fn knn_rejects_k_out_of_range() {
        let cloud = random_cloud(6, 2);
        assert!(knn_graph(&cloud, 6).is_err());
        assert!(knn_graph(&cloud, 0).is_err());
    }

    /// Brute-force oracle: neighbor sets from a full distance sort.
    fn knn_oracle(cloud: &PointCloud<f64>, k: usize) -> Vec<Vec<usize>> {
        let pts = cloud.points();
        let n = pts.len();
        (0..n)
            .map(|i| {
                let mut all: Vec<(f64, usize)> = (0..n)
                    .filter(|&j| j != i)
                    .map(|j| (dist2(pts[i], pts[j]), j))
                    .collect();
                all.sort_by(|a, b| a.partial_cmp(b).unwrap());
                all.into_iter().take(k).map(|(_, j)| j).collect()
            })
            .collect()
    }

    #[test]
    fn knn_matches_brute_force_oracle() {
        for seed in 0..10 {
            let cloud = random_cloud(64, 100 + seed);
            let k = 5;
            let adj = knn_graph(&cloud, k).unwrap();
            let oracle = knn_oracle(&cloud, k);
            let mut expect = Mat::<f64>::zeros(64, 64);
            for (i, neigh) in oracle.iter().enumerate() {
                for &j in neigh {
                    expect.set(i, j, 1.0);
                    expect.set(j, i, 1.0);
                }
            }
            assert_eq!(adj, expect, "seed {seed}");
        }
    }

    #[test]
    fn laplacian_two_nodes() {
        let mut adj = Mat::<f64>::zeros(2, 2);
        adj.set(0, 1, 1.0);
        adj.set(1, 0, 1.0);
        let lap = laplacian(&adj).unwrap();
        assert_eq!(
            (lap.get(0, 0), lap.get(0, 1), lap.get(1, 0), lap.get(1, 1)),
            (1.0, -1.0, -1.0, 1.0)
        );
    }

    #[test]
    fn laplacian_k3() {
        let mut adj = Mat::<f64>::zeros(3, 3);
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    adj.set(i, j, 1.0);
                }
            }
        }
        let lap = laplacian(&adj).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 2.0 } else { -1.0 };
                assert_eq!(lap.get(i, j), expect);
            }
        }
    }

    #[test]
    fn laplacian_rejects_asymmetric() {
        let mut adj = Mat::<f64>::zeros(2, 2);
        adj.set(0, 1, 1.0);
        assert!(laplacian(&adj).is_err());
    }

    #[test]
    fn eigh_two_by_two_by_hand() {
        let l = Mat::from_rows(&[vec![1.0f64, -1.0], vec![-1.0, 1.0]]);
        let basis = eigh(&l, 1).unwrap();
        assert!((basis.eigenvalues()[0] - 0.0).abs() < 1e-12);
        assert!((basis.eigenvalues()[1] - 2.0).abs() < 1e-12);
        let inv_sqrt2 = 1.0 / 2.0f64.sqrt();
        assert!((basis.eigenvectors().get(0, 0) - inv_sqrt2).abs() < 1e-12);
        assert!((basis.eigenvectors().get(1, 0) - inv_sqrt2).abs() < 1e-12);
    }

    #[test]
    fn eigh_diagonal_input_sorts_with_sign_convention() {
        let l = Mat::from_rows(&[
            vec![3.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 2.0],
        ]);
        let basis = eigh(&l, 1).unwrap();
        assert_eq!(basis.eigenvalues(), &[1.0, 2.0, 3.0]);
        // Permutation matrix with positive leading entries.
        assert_eq!(basis.eigenvectors().get(1, 0), 1.0);
        assert_eq!(basis.eigenvectors().get(2, 1), 1.0);
        assert_eq!(basis.eigenvectors().get(0, 2), 1.0);
    }

    #[test]
    fn eigh_reconstructs_random_symmetric() {
        let n = 64;
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut l = Mat::<f64>::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = rng.random_range(-1.0..1.0);
                l.set(i, j, v);
                l.set(j, i, v);
            }
        }
        let basis = eigh(&l, 1).unwrap();
        // ||Q L Q^T - L||_inf via residual L*q_j - lambda_j q_j.
        let mut worst = 0.0f64;
        for j in 0..n {
            for i in 0..n {
                let mut lv = 0.0;
                for m in 0..n {
                    lv += l.get(i, m) * basis.eigenvectors().get(m, j);
                }
                let resid = (lv - basis.eigenvalues()[j] * basis.eigenvectors().get(i, j)).abs();
                worst = worst.max(resid);
            }
        }
        assert!(worst < 1e-8, "residual {worst}");
        // Orthonormality.
        let q = basis.eigenvectors();
        for a in 0..n {
            for b in 0..n {
                let mut dot = 0.0;
                for i in 0..n {
                    dot += q.get(i, a) * q.get(i, b);
                }
                let expect = if a == b { 1.0 } else { 0.0 };
                assert!((dot - expect).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn laplacian_kernel_contains_constant_vector() {
        let cloud = random_cloud(32, 9);
        let basis = gft_basis(&cloud, 4).unwrap();
        assert!(basis.eigenvalues()[0] > -1e-9);
        assert!(basis.eigenvalues()[0].abs() < 1e-9);
        // With a connected union-KNN graph the kernel is the constant vector.
        let q0: Vec<f64> = (0..32).map(|i| basis.eigenvectors().get(i, 0)).collect();
        let expect = 1.0 / (32.0f64).sqrt();
        for v in q0 {
            assert!((v - expect).abs() < 1e-8);
        }
    }

    #[test]
    fn gft_igft_roundtrip_and_parseval() {
        let cloud = random_cloud(48, 3);
        let basis = gft_basis(&cloud, 6).unwrap();
        let spec = gft(&cloud, &basis).unwrap();
        let back = igft(&spec, &basis).unwrap();
        for (p, q) in cloud.points().iter().zip(back.points()) {
            for c in 0..3 {
                assert!((p[c] - q[c]).abs() < 1e-9);
            }
        }
        let cloud_energy: f64 = cloud
            .points()
            .iter()
            .map(|p| p[0] * p[0] + p[1] * p[1] + p[2] * p[2])
            .sum();
        assert!((spec.energy() - cloud_energy).abs() < 1e-9);
    }

    #[test]
    fn gft_constant_cloud_energy_in_kernel() {
        // All points equal is invalid for KNN, so take a constant signal on
        // a random graph instead: transform the all-equal displacement.
        let cloud = random_cloud(24, 5);
        let basis = gft_basis(&cloud, 3).unwrap();
        let ones = PointCloud::new(vec![[0.5, -0.25, 0.125]; 24], None).unwrap();
        let spec = gft(&ones, &basis).unwrap();
        let energies = row_energies(&spec);
        let total: f64 = energies.iter().sum();
        // Zero-eigenvalue rows carry everything.
        let kernel_energy: f64 = energies
            .iter()
            .zip(basis.eigenvalues())
            .filter(|(_, &ev)| ev.abs() < 1e-9)
            .map(|(e, _)| e)
            .sum();
        assert!((kernel_energy - total).abs() < 1e-9 * total.max(1.0));
    }

    #[test]
    fn igft_rejects_foreign_basis() {
        let cloud = random_cloud(16, 1);
        let basis_a = gft_basis(&cloud, 3).unwrap();
        let basis_b = gft_basis(&cloud, 3).unwrap();
        let spec = gft(&cloud, &basis_a).unwrap();
        assert!(matches!(
            igft(&spec, &basis_b),
            Err(SpectralError::BasisMismatch)
        ));
    }

    #[test]
    fn sphere_energy_concentrates_in_low_band() {
        let cloud = generate_shape::<f64>(0, 128, 1, 0.0).unwrap();
        let basis = gft_basis(&cloud, 10).unwrap();
        let spec = gft(&cloud, &basis).unwrap();
        let energies = row_energies(&spec);
        let total: f64 = energies.iter().sum();
        let low: f64 = energies.iter().take(32).sum();
        assert!(
            low / total >= 0.9,
            "low-band fraction {} below 0.9",
            low / total
        );
    }

    #[test]
    fn mask_matches_weights() {
        let mask = make_mask::<f64>(4, 2, 0.9, 0.25).unwrap();
        assert_eq!(mask.diag(), vec![0.9, 0.9, 0.25, 0.25]);
        let complement: Vec<f64> = (0..4).map(|r| mask.complement_weight(r)).collect();
        for (c, expect) in complement.iter().zip([0.1, 0.1, 0.75, 0.75]) {
            assert!((c - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn mask_rejects_degenerate_weights() {
        assert!(make_mask::<f64>(8, 2, 0.5, 0.5).is_err());
        assert!(make_mask::<f64>(8, 2, 0.25, 0.9).is_err());
        assert!(make_mask::<f64>(8, 0, 0.9, 0.25).is_err());
        assert!(make_mask::<f64>(8, 8, 0.9, 0.25).is_err());
    }

    #[test]
    fn default_low_band_is_proportional() {
        assert_eq!(default_low_band(1024), 32);
        assert_eq!(default_low_band(128), 32);
        assert_eq!(default_low_band(64), 16);
        assert_eq!(default_low_band(16), 4);
    }
}
