//! Attack objective: classification margin plus weighted distortion terms,
//! with the exact gradient with respect to the adversarial coordinates.

use super::AttackError;
use crate::classifier::MiniPointNet;
use crate::geometry::{sub3, PointCloud};
use crate::metrics::{chamfer_from_pairs, hausdorff_from_pairs, nearest_pairs};
use crate::real::{real, Real};

/// Margin loss `max(logit_y - max_{y' != y} logit_{y'}, 0)`: zero exactly
/// when the true class no longer (strictly) wins.
pub fn margin_loss<T: Real>(logits: &[T], label: usize) -> Result<T, AttackError> {
    if logits.len() < 2 {
        return Err(AttackError::TooFewClasses(logits.len()));
    }
    if label >= logits.len() {
        return Err(AttackError::BadLabel {
            label,
            classes: logits.len(),
        });
    }
    let best_other = best_other_index(logits, label);
    Ok((logits[label] - logits[best_other]).max(T::zero()))
}

/// Subgradient of the margin with respect to the logits: `+1` at the true
/// class and `-1` at the strongest other class while the margin is
/// positive, zero otherwise.
pub fn margin_loss_grad<T: Real>(logits: &[T], label: usize) -> Result<Vec<T>, AttackError> {
    if logits.len() < 2 {
        return Err(AttackError::TooFewClasses(logits.len()));
    }
    if label >= logits.len() {
        return Err(AttackError::BadLabel {
            label,
            classes: logits.len(),
        });
    }
    let mut grad = vec![T::zero(); logits.len()];
    let best_other = best_other_index(logits, label);
    if logits[label] - logits[best_other] > T::zero() {
        grad[label] = T::one();
        grad[best_other] = -T::one();
    }
    Ok(grad)
}

/// Value of the confidence-shifted hinge without the model backward.
pub fn hinge_value<T: Real>(logits: &[T], label: usize, offset: T) -> Result<T, AttackError> {
    if logits.len() < 2 {
        return Err(AttackError::TooFewClasses(logits.len()));
    }
    if label >= logits.len() {
        return Err(AttackError::BadLabel {
            label,
            classes: logits.len(),
        });
    }
    let best_other = best_other_index(logits, label);
    Ok((logits[label] - logits[best_other] + offset).max(T::zero()))
}

fn best_other_index<T: Real>(logits: &[T], label: usize) -> usize {
    let mut best = usize::MAX;
    for (i, v) in logits.iter().enumerate() {
        if i == label {
            continue;
        }
        if best == usize::MAX || *v > logits[best] {
            best = i;
        }
    }
    best
}

/// Weights of the three distortion terms.
#[derive(Debug, Clone, Copy)]
pub struct LossWeights<T> {
    pub mse: T,
    pub chamfer: T,
    pub hausdorff: T,
}

impl<T: Real> LossWeights<T> {
    pub fn zero() -> Self {
        Self {
            mse: T::zero(),
            chamfer: T::zero(),
            hausdorff: T::zero(),
        }
    }
}

/// Margin loss of the surrogate at `cloud` plus its gradient with respect
/// to the point coordinates (zero once the margin saturates at zero).
pub fn margin_with_grad<T: Real>(
    model: &MiniPointNet<T>,
    cloud: &PointCloud<T>,
    label: usize,
) -> Result<(T, Vec<[T; 3]>), AttackError> {
    hinge_with_grad(model, cloud, label, T::zero())
}

/// Confidence-shifted hinge `max(logit_y - max_other + offset, 0)` and its
/// coordinate gradient. A positive offset keeps the attack pushing until
/// the true class loses by at least that much, which is what makes the
/// crossing survive a change of model.
pub fn hinge_with_grad<T: Real>(
    model: &MiniPointNet<T>,
    cloud: &PointCloud<T>,
    label: usize,
    offset: T,
) -> Result<(T, Vec<[T; 3]>), AttackError> {
    let logits = model.forward(cloud)?;
    if logits.len() < 2 {
        return Err(AttackError::TooFewClasses(logits.len()));
    }
    if label >= logits.len() {
        return Err(AttackError::BadLabel {
            label,
            classes: logits.len(),
        });
    }
    let best_other = best_other_index(&logits, label);
    let hinge = (logits[label] - logits[best_other] + offset).max(T::zero());
    if hinge > T::zero() {
        let mut d_logits = vec![T::zero(); logits.len()];
        d_logits[label] = T::one();
        d_logits[best_other] = -T::one();
        Ok((hinge, model.input_gradient(cloud, &d_logits)?))
    } else {
        Ok((hinge, vec![[T::zero(); 3]; cloud.len()]))
    }
}

/// Weighted distortion `w_mse * D_n + w_chamfer * D_c + w_hausdorff * D_h`
/// and its gradient with respect to the adversarial points. The Chamfer and
/// Hausdorff terms differentiate through their nearest-neighbor selections,
/// held fixed within this evaluation.
pub fn distortion_with_grad<T: Real>(
    clean: &PointCloud<T>,
    adversarial: &PointCloud<T>,
    weights: &LossWeights<T>,
) -> Result<(T, Vec<[T; 3]>), AttackError> {
    if clean.len() != adversarial.len() {
        return Err(AttackError::SizeMismatch(clean.len(), adversarial.len()));
    }
    let n = clean.len();
    let nf = real::<T>(n as f64);
    let mut grad = vec![[T::zero(); 3]; n];
    let mut loss = T::zero();

    // Indexed mean squared error.
    if weights.mse != T::zero() {
        let mut mse = T::zero();
        let scale = weights.mse * real::<T>(2.0) / nf;
        for (i, (p, q)) in clean.points().iter().zip(adversarial.points()).enumerate() {
            let d = sub3(*q, *p);
            mse = mse + d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
            for c in 0..3 {
                grad[i][c] = grad[i][c] + scale * d[c];
            }
        }
        loss = loss + weights.mse * mse / nf;
    }

    // Set metrics share one nearest-neighbor pass.
    if weights.chamfer != T::zero() || weights.hausdorff != T::zero() {
        let pairs = nearest_pairs(clean.points(), adversarial.points());
        if weights.chamfer != T::zero() {
            loss = loss + weights.chamfer * chamfer_from_pairs(&pairs, n, n);
            let scale = weights.chamfer * real::<T>(2.0) / nf;
            for (i, (_, j)) in pairs.a_to_b.iter().enumerate() {
                // d/d adv_j of ||clean_i - adv_j||^2
                let d = sub3(adversarial.points()[*j], clean.points()[i]);
                for c in 0..3 {
                    grad[*j][c] = grad[*j][c] + scale * d[c];
                }
            }
            for (j, (_, i)) in pairs.b_to_a.iter().enumerate() {
                let d = sub3(adversarial.points()[j], clean.points()[*i]);
                for c in 0..3 {
                    grad[j][c] = grad[j][c] + scale * d[c];
                }
            }
        }
        if weights.hausdorff != T::zero() {
            let (h, direction, index) = hausdorff_from_pairs(&pairs);
            loss = loss + weights.hausdorff * h;
            if h > T::zero() {
                // Unit vector from the realizing pair, pointing away from
                // the clean point.
                let (adv_idx, clean_idx) = match direction {
                    0 => (pairs.a_to_b[index].1, index),
                    _ => (index, pairs.b_to_a[index].1),
                };
                let d = sub3(
                    adversarial.points()[adv_idx],
                    clean.points()[clean_idx],
                );
                let scale = weights.hausdorff / h;
                for c in 0..3 {
                    grad[adv_idx][c] = grad[adv_idx][c] + scale * d[c];
                }
            }
        }
    }
    Ok((loss, grad))
}

/// Full attack objective
/// `margin + w_mse * D_n + w_chamfer * D_c + w_hausdorff * D_h`
/// and its gradient with respect to the adversarial points.
pub fn total_loss<T: Real>(
    clean: &PointCloud<T>,
    adversarial: &PointCloud<T>,
    label: usize,
    model: &MiniPointNet<T>,
    weights: &LossWeights<T>,
) -> Result<(T, Vec<[T; 3]>), AttackError> {
    let (margin, mut grad) = margin_with_grad(model, adversarial, label)?;
    let (dist, dist_grad) = distortion_with_grad(clean, adversarial, weights)?;
    for (acc, g) in grad.iter_mut().zip(&dist_grad) {
        for c in 0..3 {
            acc[c] = acc[c] + g[c];
        }
    }
    Ok((margin + dist, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::{argmax, ArchId, MiniPointNet};
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

    fn random_model(seed: u64) -> MiniPointNet<f64> {
        let mut model = MiniPointNet::init(ArchId::A, 4, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
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
    fn margin_loss_matches_hand_values() {
        assert!((margin_loss(&[0.2f64, 0.9], 1).unwrap() - 0.7).abs() < 1e-15);
        assert_eq!(margin_loss(&[0.9, 0.2], 1).unwrap(), 0.0);
        assert_eq!(margin_loss(&[0.5, 0.5], 1).unwrap(), 0.0);
        assert!(margin_loss(&[0.5], 0).is_err());
        assert!(margin_loss(&[0.5, 0.1], 3).is_err());
    }

    #[test]
    fn margin_grad_routes_to_top_two() {
        let grad = margin_loss_grad(&[0.1, 0.9, 0.4], 1).unwrap();
        assert_eq!(grad, vec![0.0, 1.0, -1.0]);
        // Already misclassified: zero subgradient.
        let grad = margin_loss_grad(&[0.9, 0.1, 0.4], 1).unwrap();
        assert_eq!(grad, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn identical_misclassified_cloud_has_zero_loss() {
        let model = random_model(3);
        let cloud = random_cloud(12, 4);
        let logits = model.forward(&cloud).unwrap();
        let wrong_label = (argmax(&logits) + 1) % 4;
        let weights = LossWeights {
            mse: 0.5,
            chamfer: 20.0,
            hausdorff: 50.0,
        };
        let (loss, grad) = total_loss(&cloud, &cloud, wrong_label, &model, &weights).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.iter().all(|g| *g == [0.0; 3]));
    }

    #[test]
    fn zero_weights_reduce_to_margin() {
        let model = random_model(5);
        let cloud = random_cloud(10, 6);
        let adv = random_cloud(10, 7);
        let logits = model.forward(&adv).unwrap();
        let label = argmax(&logits); // still "correct": margin positive
        let (loss, _) = total_loss(&cloud, &adv, label, &model, &LossWeights::zero()).unwrap();
        let margin = margin_loss(&logits, label).unwrap();
        assert!((loss - margin).abs() < 1e-15);
    }

    /// Central-difference check of the full gradient, rejecting setups near
    /// any selection tie.
    fn fd_error(seed: u64) -> Option<f64> {
        let model = random_model(seed);
        let clean = random_cloud(8, seed + 10);
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 20);
        let adv_pts: Vec<[f64; 3]> = clean
            .points()
            .iter()
            .map(|p| {
                [
                    p[0] + rng.random_range(-0.05..0.05),
                    p[1] + rng.random_range(-0.05..0.05),
                    p[2] + rng.random_range(-0.05..0.05),
                ]
            })
            .collect();
        let adv = PointCloud::new(adv_pts, None).unwrap();
        let logits = model.forward(&adv).unwrap();
        let label = argmax(&logits);
        let others: Vec<f64> = logits
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != label)
            .map(|(_, v)| *v)
            .collect();
        let top_other = others.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if logits[label] - top_other < 1e-3 {
            return None; // margin kink nearby
        }
        // Nearest-neighbor margins: reject near-ties of the selections.
        let pts_a = clean.points();
        let pts_b = adv.points();
        for p in pts_a {
            let mut d: Vec<f64> = pts_b.iter().map(|q| crate::geometry::dist2(*p, *q)).collect();
            d.sort_by(|a, b| a.partial_cmp(b).unwrap());
            if d[1] - d[0] < 1e-4 {
                return None;
            }
        }
        for q in pts_b {
            let mut d: Vec<f64> = pts_a.iter().map(|p| crate::geometry::dist2(*p, *q)).collect();
            d.sort_by(|a, b| a.partial_cmp(b).unwrap());
            if d[1] - d[0] < 1e-4 {
                return None;
            }
        }
        let weights = LossWeights {
            mse: 0.5,
            chamfer: 20.0,
            hausdorff: 50.0,
        };
        let (_, grad) = total_loss(&clean, &adv, label, &model, &weights).unwrap();
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        for i in 0..adv.len() {
            for c in 0..3 {
                let mut plus = adv.points().to_vec();
                plus[i][c] += h;
                let mut minus = adv.points().to_vec();
                minus[i][c] -= h;
                let lp = total_loss(
                    &clean,
                    &PointCloud::new(plus, None).unwrap(),
                    label,
                    &model,
                    &weights,
                )
                .unwrap()
                .0;
                let lm = total_loss(
                    &clean,
                    &PointCloud::new(minus, None).unwrap(),
                    label,
                    &model,
                    &weights,
                )
                .unwrap()
                .0;
                let fd = (lp - lm) / (2.0 * h);
                let denom = grad[i][c].abs().max(fd.abs()).max(1e-4);
                worst = worst.max((grad[i][c] - fd).abs() / denom);
            }
        }
        Some(worst)
    }

    #[test]
    fn total_loss_gradient_matches_finite_differences() {
        let mut checked = 0;
        let mut seed = 0u64;
        while checked < 20 {
            seed += 1;
            if let Some(err) = fd_error(seed) {
                assert!(err < 1e-4, "seed {seed}: rel err {err}");
                checked += 1;
            }
            assert!(seed < 400, "too many rejected configurations");
        }
    }
}
