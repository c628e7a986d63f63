//! Spectral Admix: mixture construction and the inner optimization loop.
//!
//! Each iteration mixes the current adversarial spectral feature with every
//! candidate feature along a fixed interpolation schedule, averages the
//! weighted loss gradients over all mixtures, Adam-updates the perturbation
//! and the mixing metric, and clips. The candidate weight
//! `w = exp(-Dist(clean, candidate; M))` scales both the candidate's
//! contribution inside the mixture and its gradient contribution.

use super::loss::{distortion_with_grad, hinge_value, hinge_with_grad, total_loss};
use super::{AttackConfig, AttackError};
use crate::classifier::MiniPointNet;
use crate::geometry::{norm3, PointCloud};
use crate::mat::{mul_points, transpose_mul_points};
use crate::metrics::{grad_mix_weight_wrt_metric, mix_weight, MixMetric};
use crate::optim::Adam;
use crate::real::{real, Real};
use crate::spectral::{GftBasis, SpectralCloud, SpectralMask};

/// Interpolation schedule `beta_i = b_l + (i / (m - 1)) (b_u - b_l)`.
pub fn admix_beta_schedule<T: Real>(b_l: T, b_u: T, m: usize) -> Result<Vec<T>, AttackError> {
    if m < 2 {
        return Err(AttackError::BadConfig(format!(
            "mixture count must be >= 2, got {m}"
        )));
    }
    if !(b_l >= T::zero() && b_l <= b_u && b_u <= T::one()) {
        return Err(AttackError::BadConfig(format!(
            "need 0 <= b_l <= b_u <= 1, got b_l={b_l}, b_u={b_u}"
        )));
    }
    let span = b_u - b_l;
    let denom = real::<T>((m - 1) as f64);
    Ok((0..m)
        .map(|i| b_l + real::<T>(i as f64) / denom * span)
        .collect())
}

/// The `m` mixtures of one path:
/// `beta_i * M_s .* S_adv + (1 - beta_i) * (I - M_s) .* (w * S_cand)`.
/// Both features must live in the same basis; the mixtures stay bound to it.
pub fn admix_step_samples<T: Real>(
    s_adv: &SpectralCloud<T>,
    s_cand: &SpectralCloud<T>,
    mix_w: T,
    mask: &SpectralMask<T>,
    b_l: T,
    b_u: T,
    m: usize,
) -> Result<Vec<SpectralCloud<T>>, AttackError> {
    if s_adv.n() != s_cand.n() {
        return Err(AttackError::SizeMismatch(s_adv.n(), s_cand.n()));
    }
    if s_adv.basis_id() != s_cand.basis_id() {
        return Err(AttackError::Spectral(
            crate::spectral::SpectralError::BasisMismatch,
        ));
    }
    let betas = admix_beta_schedule(b_l, b_u, m)?;
    Ok(betas
        .iter()
        .map(|&beta| mixed_sample(s_adv, s_cand, mix_w, mask, beta))
        .collect())
}

fn mixed_sample<T: Real>(
    s_adv: &SpectralCloud<T>,
    s_cand: &SpectralCloud<T>,
    mix_w: T,
    mask: &SpectralMask<T>,
    beta: T,
) -> SpectralCloud<T> {
    let one_minus = T::one() - beta;
    let coeffs: Vec<[T; 3]> = s_adv
        .coeffs()
        .iter()
        .zip(s_cand.coeffs())
        .enumerate()
        .map(|(row, (a, c))| {
            let own = beta * mask.weight(row);
            let other = one_minus * mask.complement_weight(row) * mix_w;
            [
                own * a[0] + other * c[0],
                own * a[1] + other * c[1],
                own * a[2] + other * c[2],
            ]
        })
        .collect();
    SpectralCloud::bound_to(coeffs, s_adv.basis_id())
}

/// Mutable state of one cloud's attack: the spectral perturbation, the
/// metric, both optimizers, and the closest successful iterate seen so
/// far. Carried across the warmup and main phases so path selection never
/// resets the trajectory.
///
/// The margin hinge saturates at zero once the surrogate is fooled, after
/// which the distortion pull drags the live iterate back across the
/// boundary; keeping the lowest-distortion successful snapshot makes the
/// returned example the best of the trajectory rather than whatever the
/// final oscillation phase happens to be.
#[derive(Debug, Clone)]
pub struct AttackState<T> {
    delta: Vec<[T; 3]>,
    metric: MixMetric<T>,
    adam_delta: Adam<T>,
    adam_metric: Adam<T>,
    steps_taken: usize,
    best: Option<(T, Vec<[T; 3]>)>,
}

impl<T: Real> AttackState<T> {
    pub fn new(n: usize, metric: MixMetric<T>, cfg: &AttackConfig<T>) -> Self {
        Self {
            delta: vec![[T::zero(); 3]; n],
            adam_delta: Adam::new(cfg.lr, cfg.beta1, cfg.beta2, n * 3),
            adam_metric: Adam::new(cfg.lr, cfg.beta1, cfg.beta2, metric.n()),
            metric,
            steps_taken: 0,
            best: None,
        }
    }

    fn consider_snapshot(&mut self, margin: T, distortion: T) {
        if margin <= T::zero() {
            let better = match &self.best {
                Some((dist, _)) => distortion < *dist,
                None => true,
            };
            if better {
                self.best = Some((distortion, self.delta.clone()));
            }
        }
    }

    pub fn delta(&self) -> &[[T; 3]] {
        &self.delta
    }

    pub fn metric(&self) -> &MixMetric<T> {
        &self.metric
    }

    pub fn steps_taken(&self) -> usize {
        self.steps_taken
    }

    pub fn into_metric(self) -> MixMetric<T> {
        self.metric
    }

    fn adversarial_feature(&self, clean: &SpectralCloud<T>) -> SpectralCloud<T> {
        let coeffs: Vec<[T; 3]> = clean
            .coeffs()
            .iter()
            .zip(&self.delta)
            .map(|(c, d)| [c[0] + d[0], c[1] + d[1], c[2] + d[2]])
            .collect();
        SpectralCloud::bound_to(coeffs, clean.basis_id())
    }
}

/// Per-phase outputs: the adversarial cloud plus the gradients path
/// selection consumes (all in the spectral domain).
#[derive(Debug, Clone)]
pub struct InnerOutcome<T> {
    pub adversarial: PointCloud<T>,
    /// Gradient of the loss at the unmixed adversarial feature.
    pub adv_grad: Vec<[T; 3]>,
    /// Per-path gradient averaged over the mixture schedule.
    pub path_grads: Vec<Vec<[T; 3]>>,
    /// Loss at the unmixed adversarial sample on exit.
    pub final_loss: T,
}

/// Runs `steps` iterations of the weighted spectral Admix update, then
/// evaluates the exit gradients. With `steps = 0` the perturbation and
/// metric stay untouched but the gradients are still produced.
#[allow(clippy::too_many_arguments)]
pub fn admix_inner<T: Real>(
    clean: &PointCloud<T>,
    spectral_clean: &SpectralCloud<T>,
    basis: &GftBasis<T>,
    candidates: &[SpectralCloud<T>],
    label: usize,
    model: &MiniPointNet<T>,
    mask: &SpectralMask<T>,
    cfg: &AttackConfig<T>,
    steps: usize,
    state: &mut AttackState<T>,
) -> Result<InnerOutcome<T>, AttackError> {
    if candidates.is_empty() {
        return Err(AttackError::BadConfig("empty candidate list".into()));
    }
    let n = clean.len();
    let betas = admix_beta_schedule(cfg.admix_low, cfg.admix_high, cfg.mix_samples)?;
    let weights = cfg.loss_weights();
    let sample_count = real::<T>((cfg.mix_samples * candidates.len()) as f64);

    let mut g_delta = vec![[T::zero(); 3]; n];
    let mut g_metric = vec![T::zero(); state.metric.n()];
    let mut delta_flat = vec![T::zero(); n * 3];
    let mut update_flat = vec![T::zero(); n * 3];
    let mut metric_update = vec![T::zero(); state.metric.n()];

    for _ in 0..steps {
        let step_id = state.steps_taken;
        let s_adv = state.adversarial_feature(spectral_clean);
        for g in g_delta.iter_mut() {
            *g = [T::zero(); 3];
        }
        for g in g_metric.iter_mut() {
            *g = T::zero();
        }
        // Classifier term averaged over the weighted mixtures. The margin
        // gradient chains through the mixture's own-feature coefficient and
        // picks up the path weight once more as a gradient weight.
        for cand in candidates {
            let w = mix_weight(spectral_clean, cand, &state.metric)?;
            let dw_dm = grad_mix_weight_wrt_metric(spectral_clean, cand, &state.metric)?;
            for &beta in &betas {
                let sample = mixed_sample(&s_adv, cand, w, mask, beta);
                let spatial = crate::spectral::igft(&sample, basis)?;
                let (margin, grad_spatial) =
                    hinge_with_grad(model, &spatial, label, cfg.confidence)?;
                if !margin.is_finite() {
                    return Err(AttackError::NonFinite {
                        step: step_id,
                        what: "mixed-sample margin",
                    });
                }
                let grad_spectral = transpose_mul_points(basis.eigenvectors(), &grad_spatial);
                for (row, g) in grad_spectral.iter().enumerate() {
                    let chain = w * beta * mask.weight(row);
                    g_delta[row][0] = g_delta[row][0] + chain * g[0];
                    g_delta[row][1] = g_delta[row][1] + chain * g[1];
                    g_delta[row][2] = g_delta[row][2] + chain * g[2];
                }
                // Metric gradient flows only through the mixing weight
                // inside the sample.
                let mut dl_dw = T::zero();
                for (row, (g, c)) in grad_spectral.iter().zip(cand.coeffs()).enumerate() {
                    let factor = (T::one() - beta) * mask.complement_weight(row);
                    dl_dw = dl_dw + factor * (g[0] * c[0] + g[1] * c[1] + g[2] * c[2]);
                }
                for (gm, dm) in g_metric.iter_mut().zip(&dw_dm) {
                    *gm = *gm + dl_dw * *dm;
                }
            }
        }
        // Distortion terms constrain the actual adversarial example, not
        // the shrunken mixtures.
        let adv_now = crate::spectral::igft(&s_adv, basis)?;
        let (distortion_now, distortion_spatial) =
            distortion_with_grad(clean, &adv_now, &weights)?;
        let hinge_now = hinge_value(&model.forward(&adv_now)?, label, cfg.confidence)?;
        state.consider_snapshot(hinge_now, distortion_now);
        let distortion_spectral =
            transpose_mul_points(basis.eigenvectors(), &distortion_spatial);
        for g in g_delta.iter_mut() {
            for c in 0..3 {
                g[c] = g[c] / sample_count;
            }
        }
        for (g, d) in g_delta.iter_mut().zip(&distortion_spectral) {
            for c in 0..3 {
                g[c] = g[c] + d[c];
                if !g[c].is_finite() {
                    return Err(AttackError::NonFinite {
                        step: step_id,
                        what: "perturbation gradient",
                    });
                }
            }
        }
        for g in g_metric.iter_mut() {
            *g = *g / sample_count;
            if !g.is_finite() {
                return Err(AttackError::NonFinite {
                    step: step_id,
                    what: "metric gradient",
                });
            }
        }

        // Adam step on the perturbation, then the spectral and spatial clips.
        for (i, g) in g_delta.iter().enumerate() {
            delta_flat[i * 3] = g[0];
            delta_flat[i * 3 + 1] = g[1];
            delta_flat[i * 3 + 2] = g[2];
        }
        state.adam_delta.update_into(&delta_flat, &mut update_flat);
        for (i, d) in state.delta.iter_mut().enumerate() {
            for c in 0..3 {
                d[c] = d[c] + update_flat[i * 3 + c];
            }
        }
        project_feasible(&mut state.delta, basis, cfg.eps_spectral, cfg.eps_spatial);

        // Adam step on the metric diagonal, clipped into its bounds.
        state.adam_metric.update_into(&g_metric, &mut metric_update);
        state.metric.apply_update(&metric_update);
        state.steps_taken += 1;
    }

    // Exit state: the adversarial cloud (closest successful snapshot when
    // one exists), the loss, and the classifier-gradient directions path
    // selection compares.
    let s_adv = state.adversarial_feature(spectral_clean);
    let current_adv = crate::spectral::igft(&s_adv, basis)?;
    let (hinge_val, margin_spatial) =
        hinge_with_grad(model, &current_adv, label, cfg.confidence)?;
    let margin_val = hinge_value(&model.forward(&current_adv)?, label, T::zero())?;
    let (distortion_val, _) = distortion_with_grad(clean, &current_adv, &weights)?;
    let final_loss = margin_val + distortion_val;
    if !final_loss.is_finite() {
        return Err(AttackError::NonFinite {
            step: state.steps_taken,
            what: "exit loss",
        });
    }
    state.consider_snapshot(hinge_val, distortion_val);
    let adv_grad = transpose_mul_points(basis.eigenvectors(), &margin_spatial);
    let adversarial = match &state.best {
        Some((_, snapshot)) => {
            let coeffs: Vec<[T; 3]> = spectral_clean
                .coeffs()
                .iter()
                .zip(snapshot)
                .map(|(c, d)| [c[0] + d[0], c[1] + d[1], c[2] + d[2]])
                .collect();
            crate::spectral::igft(
                &SpectralCloud::bound_to(coeffs, spectral_clean.basis_id()),
                basis,
            )?
        }
        None => current_adv,
    };

    let mut path_grads = Vec::with_capacity(candidates.len());
    for cand in candidates {
        let w = mix_weight(spectral_clean, cand, &state.metric)?;
        let mut acc = vec![[T::zero(); 3]; n];
        for &beta in &betas {
            let sample = mixed_sample(&s_adv, cand, w, mask, beta);
            let spatial = crate::spectral::igft(&sample, basis)?;
            let (_, grad_spatial) = hinge_with_grad(model, &spatial, label, cfg.confidence)?;
            let grad_spectral = transpose_mul_points(basis.eigenvectors(), &grad_spatial);
            for (row, g) in grad_spectral.iter().enumerate() {
                let chain = beta * mask.weight(row);
                acc[row][0] = acc[row][0] + chain * g[0];
                acc[row][1] = acc[row][1] + chain * g[1];
                acc[row][2] = acc[row][2] + chain * g[2];
            }
        }
        let inv_m = real::<T>(cfg.mix_samples as f64).recip();
        for g in acc.iter_mut() {
            for c in 0..3 {
                g[c] = g[c] * inv_m;
            }
        }
        path_grads.push(acc);
    }

    Ok(InnerOutcome {
        adversarial,
        adv_grad,
        path_grads,
        final_loss,
    })
}

/// Projects the perturbation into the intersection of the spectral box
/// (`|delta| <= eps_spec` entrywise) and the spatial ball (every point's
/// displacement norm at most `eps_xyz`).
///
/// The spatial step shrinks each row of `Q * delta` onto the cap ball and
/// maps back with `Q^T`, which is exact because `Q` is orthonormal; a
/// uniform whole-perturbation rescale would burn the entire budget on the
/// single worst point. The two projections alternate, with a final uniform
/// rescale as the safety net (it shrinks both measures at once).
fn project_feasible<T: Real>(delta: &mut [[T; 3]], basis: &GftBasis<T>, eps_spec: T, eps_xyz: T) {
    let clamp_spectral = |delta: &mut [[T; 3]]| {
        for d in delta.iter_mut() {
            for c in 0..3 {
                d[c] = d[c].max(-eps_spec).min(eps_spec);
            }
        }
    };
    let spatial_excess = |delta: &[[T; 3]]| -> T {
        mul_points(basis.eigenvectors(), delta)
            .iter()
            .fold(T::zero(), |acc, d| acc.max(norm3(*d)))
    };
    for _ in 0..2 {
        clamp_spectral(delta);
        let mut disp = mul_points(basis.eigenvectors(), delta);
        let mut violated = false;
        for d in disp.iter_mut() {
            let norm = norm3(*d);
            if norm > eps_xyz {
                violated = true;
                let scale = eps_xyz / norm;
                for c in 0..3 {
                    d[c] = d[c] * scale;
                }
            }
        }
        if !violated {
            clamp_spectral(delta);
            return;
        }
        let back = transpose_mul_points(basis.eigenvectors(), &disp);
        delta.copy_from_slice(&back);
    }
    clamp_spectral(delta);
    let max_disp = spatial_excess(delta);
    if max_disp > eps_xyz && max_disp > T::zero() {
        let scale = eps_xyz / max_disp;
        for d in delta.iter_mut() {
            for c in 0..3 {
                d[c] = d[c] * scale;
            }
        }
    }
}
