//! The spectral Admix attack with augmentation-path selection, plus an
//! iterative sign-gradient baseline.
//!
//! One attacked cloud goes through two phases: a short warmup over the full
//! candidate pool that learns the mixing metric and scores every
//! augmentation path, then the main run over the paths whose averaged mixed
//! gradient points most like the plain adversarial gradient. Perturbations
//! live in the cloud's frozen GFT basis and are clipped both spectrally and
//! spatially after every optimizer step.

mod admix;
mod baseline;
mod loss;

pub use admix::{
    admix_beta_schedule, admix_inner, admix_step_samples, AttackState, InnerOutcome,
};
pub use baseline::{baseline_batch, baseline_ifgsm, BaselineConfig};
pub use loss::{margin_loss, margin_loss_grad, total_loss, LossWeights};

use rand::SeedableRng as _;
use rayon::prelude::*;
use thiserror::Error;

use crate::classifier::{ClassifierError, MiniPointNet};
use crate::geometry::{GeometryError, PointCloud};
use crate::metrics::{
    chamfer, cosine_similarity, default_bounds, default_epsilon, hausdorff, init_metric, mse_dist,
    weighted_spectral_dist, MetricError, MixMetric,
};
use crate::real::{real, Real};
use crate::spectral::{
    default_low_band, gft, gft_basis, make_mask, SpectralCloud, SpectralError,
};

#[derive(Debug, Error)]
pub enum AttackError {
    #[error("logit vector needs at least 2 classes, got {0}")]
    TooFewClasses(usize),
    #[error("label {label} out of range for {classes} classes")]
    BadLabel { label: usize, classes: usize },
    #[error("clouds must have matching point counts: {0} vs {1}")]
    SizeMismatch(usize, usize),
    #[error("attack config invalid: {0}")]
    BadConfig(String),
    #[error("cloud {0} has no candidate with a different label in the batch")]
    NoCandidates(usize),
    #[error("non-finite {what} at step {step}")]
    NonFinite { step: usize, what: &'static str },
    #[error("cloud {0} is missing a label")]
    MissingLabel(usize),
    #[error("worker pool: {0}")]
    Pool(String),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// How the batch loop schedules per-cloud attacks.
///
/// Sequential mode carries the learned metric across clouds, which is the
/// reference behavior; parallel mode restarts each cloud from the batch
/// metric so results do not depend on scheduling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecutionMode {
    Sequential,
    Parallel { workers: usize },
}

/// Attack hyperparameters. Defaults are the desk profile; `paper_profile`
/// matches the published schedule.
#[derive(Debug, Clone)]
pub struct AttackConfig<T> {
    /// Main-phase step count `k`.
    pub steps: usize,
    /// Warmup step count `k'` used for path scoring.
    pub warmup_steps: usize,
    /// Mixtures per path `m`.
    pub mix_samples: usize,
    /// Paths kept after selection.
    pub paths_selected: usize,
    /// Candidate pool size drawn per cloud.
    pub candidate_pool: usize,
    /// Admix interpolation bounds `b_l <= b_u` in `[0, 1]`.
    pub admix_low: T,
    pub admix_high: T,
    /// Spectral mask band; `None` picks `min(32, n/4)`.
    pub low_band: Option<usize>,
    pub alpha_low: T,
    pub alpha_high: T,
    /// Distortion weights of the loss.
    pub lambda_mse: T,
    pub lambda_chamfer: T,
    pub lambda_hausdorff: T,
    /// Adam settings shared by the perturbation and the metric.
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    /// Confidence offset of the attack hinge: optimization keeps pushing
    /// until the true class loses by at least this much. Zero reproduces
    /// the plain margin objective.
    pub confidence: T,
    /// Per-coefficient spectral clip.
    pub eps_spectral: T,
    /// Per-point spatial displacement cap.
    pub eps_spatial: T,
    /// Neighbor count of the frozen KNN graph.
    pub knn_k: usize,
    pub seed: u64,
    /// Disable to run the ablation without path selection: the main phase
    /// then uses the first `paths_selected` pool entries for the combined
    /// `warmup_steps + steps` budget.
    pub path_selection: bool,
    pub mode: ExecutionMode,
}

impl<T: Real> Default for AttackConfig<T> {
    fn default() -> Self {
        Self::desk_profile()
    }
}

impl<T: Real> AttackConfig<T> {
    /// Fast profile: small step budget sized for CI.
    pub fn desk_profile() -> Self {
        Self {
            steps: 100,
            warmup_steps: 10,
            mix_samples: 5,
            paths_selected: 3,
            candidate_pool: 12,
            admix_low: real(0.1),
            admix_high: real(0.9),
            low_band: None,
            alpha_low: real(0.9),
            alpha_high: real(0.25),
            lambda_mse: real(0.5),
            lambda_chamfer: real(20.0),
            lambda_hausdorff: real(50.0),
            lr: real(0.01),
            beta1: real(0.9),
            beta2: real(0.999),
            confidence: real(1.0),
            eps_spectral: real(0.4),
            eps_spatial: real(0.2),
            knn_k: 10,
            seed: 0,
            path_selection: true,
            mode: ExecutionMode::Sequential,
        }
    }

    /// Published schedule: 500 steps, 20 mixtures, 9 selected paths, the
    /// plain margin objective and the published mixing weights.
    pub fn paper_profile() -> Self {
        Self {
            steps: 500,
            warmup_steps: 10,
            mix_samples: 20,
            paths_selected: 9,
            candidate_pool: 16,
            admix_low: real(0.1),
            admix_high: real(0.9),
            alpha_low: real(0.9),
            alpha_high: real(0.25),
            lambda_mse: real(0.5),
            lambda_chamfer: real(20.0),
            lambda_hausdorff: real(50.0),
            confidence: T::zero(),
            eps_spectral: real(0.15),
            eps_spatial: real(0.08),
            ..Self::desk_profile()
        }
    }

    pub fn loss_weights(&self) -> LossWeights<T> {
        LossWeights {
            mse: self.lambda_mse,
            chamfer: self.lambda_chamfer,
            hausdorff: self.lambda_hausdorff,
        }
    }

    pub fn validate(&self) -> Result<(), AttackError> {
        let bad = |msg: String| Err(AttackError::BadConfig(msg));
        if !(self.admix_low >= T::zero()
            && self.admix_low < self.admix_high
            && self.admix_high <= T::one())
        {
            return bad(format!(
                "need 0 <= b_l < b_u <= 1, got b_l={}, b_u={}",
                self.admix_low, self.admix_high
            ));
        }
        if self.mix_samples < 2 {
            return bad(format!("mix_samples must be >= 2, got {}", self.mix_samples));
        }
        if self.paths_selected == 0 || self.paths_selected > self.candidate_pool {
            return bad(format!(
                "need 1 <= paths_selected <= candidate_pool, got {} and {}",
                self.paths_selected, self.candidate_pool
            ));
        }
        if self.warmup_steps >= self.steps {
            return bad(format!(
                "warmup_steps must be below steps, got {} and {}",
                self.warmup_steps, self.steps
            ));
        }
        if !(self.eps_spectral > T::zero() && self.eps_spatial > T::zero()) {
            return bad("clip bounds must be positive".into());
        }
        if self.confidence < T::zero() {
            return bad("confidence offset must be >= 0".into());
        }
        if !(self.lr > T::zero()) {
            return bad("learning rate must be positive".into());
        }
        if self.knn_k == 0 {
            return bad("knn_k must be >= 1".into());
        }
        if let ExecutionMode::Parallel { workers } = self.mode {
            if workers == 0 {
                return bad("worker count must be >= 1".into());
            }
        }
        Ok(())
    }
}

/// Per-cloud outcome of a batch attack, serialized by the harness as one
/// CSV row.
#[derive(Debug, Clone)]
pub struct AttackReport<T> {
    pub cloud_id: usize,
    pub true_label: usize,
    pub surrogate_pred: usize,
    /// Misclassified by the surrogate after the attack.
    pub success: bool,
    pub d_h: T,
    pub d_c: T,
    pub d_norm: T,
    pub steps_used: usize,
    /// Batch indices of the candidate clouds used in the main phase.
    pub selected_paths: Vec<usize>,
    /// The surrogate got the clean cloud wrong, so no attack ran.
    pub skipped: bool,
}

/// Result of attacking a batch.
#[derive(Debug, Clone)]
pub struct BatchOutcome<T> {
    /// Adversarial cloud per input, `None` where the cloud was skipped.
    pub adversarial: Vec<Option<PointCloud<T>>>,
    pub reports: Vec<AttackReport<T>>,
    /// Metric state after the batch (sequential mode carries it through).
    pub metric: MixMetric<T>,
}

/// Indices of the `n_sel` paths whose averaged mixed gradient has the
/// largest cosine similarity with the plain adversarial gradient. Ties
/// break toward the lower index; the result is in ascending index order.
pub fn select_paths<T: Real>(
    path_grads: &[Vec<[T; 3]>],
    adv_grad: &[[T; 3]],
    n_sel: usize,
) -> Vec<usize> {
    let flat_adv = flatten(adv_grad);
    let mut scored: Vec<(usize, T)> = path_grads
        .iter()
        .enumerate()
        .map(|(j, g)| (j, cosine_similarity(&flatten(g), &flat_adv)))
        .collect();
    scored.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .expect("finite cosine")
            .then(a.0.cmp(&b.0))
    });
    let mut picked: Vec<usize> = scored.into_iter().take(n_sel).map(|(j, _)| j).collect();
    picked.sort_unstable();
    picked
}

fn flatten<T: Real>(rows: &[[T; 3]]) -> Vec<T> {
    let mut out = Vec::with_capacity(rows.len() * 3);
    for r in rows {
        out.extend_from_slice(r);
    }
    out
}

fn mix_seed(seed: u64, id: u64) -> u64 {
    let mut z = seed ^ id.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

struct CloudJob<'a, T> {
    cloud_id: usize,
    label: usize,
    clean: &'a PointCloud<T>,
    candidate_ids: Vec<usize>,
}

/// Attacks every correctly-classified cloud of the batch with the spectral
/// Admix attack. Candidates are drawn from the batch itself among clouds
/// with a different label.
pub fn attack_batch<T: Real>(
    batch: &[PointCloud<T>],
    model: &MiniPointNet<T>,
    cfg: &AttackConfig<T>,
) -> Result<BatchOutcome<T>, AttackError> {
    cfg.validate()?;
    if batch.is_empty() {
        return Err(AttackError::BadConfig("empty batch".into()));
    }
    let n_points = batch[0].len();
    for (i, cloud) in batch.iter().enumerate() {
        if cloud.len() != n_points {
            return Err(AttackError::SizeMismatch(n_points, cloud.len()));
        }
        if cloud.label().is_none() {
            return Err(AttackError::MissingLabel(i));
        }
    }

    // One frozen basis per cloud; the batch spectral features initialize
    // the shared metric.
    let bases = batch
        .iter()
        .map(|c| gft_basis(c, cfg.knn_k))
        .collect::<Result<Vec<_>, _>>()?;
    let feats = batch
        .iter()
        .zip(&bases)
        .map(|(c, b)| gft(c, b))
        .collect::<Result<Vec<_>, _>>()?;
    // The raw inverse-variance metric puts candidate distances at the
    // feature-dimension scale, which drives every mixing weight exp(-Dist)
    // to zero. Calibrate the metric so the median clean-to-candidate
    // distance is 1: weights then spread usefully around exp(-1) and the
    // metric stays learnable from there.
    let metric0 = {
        let raw = init_metric(&feats, default_epsilon(), default_bounds())?;
        let mut dists = Vec::new();
        let stride = (batch.len() / 8).max(1);
        for i in (0..batch.len()).step_by(stride) {
            for offset in [1, batch.len() / 2 + 1] {
                let j = (i + offset) % batch.len();
                if j == i {
                    continue;
                }
                let foreign = gft(&batch[j], &bases[i])?;
                dists.push(weighted_spectral_dist(&feats[i], &foreign, &raw)?);
            }
        }
        dists.sort_by(|a, b| a.partial_cmp(b).expect("finite distance"));
        let median = dists.get(dists.len() / 2).copied().unwrap_or(T::one());
        if median > T::zero() {
            raw.scaled((median * median).recip())
        } else {
            raw
        }
    };
    let band = cfg.low_band.unwrap_or_else(|| default_low_band(n_points));
    let mask = make_mask(n_points, band, cfg.alpha_low, cfg.alpha_high)?;

    // Plan candidate draws up front; the per-cloud RNG stream depends only
    // on (seed, cloud_id), never on scheduling.
    let mut jobs = Vec::with_capacity(batch.len());
    for (cloud_id, cloud) in batch.iter().enumerate() {
        let label = cloud.label().expect("checked above");
        let eligible: Vec<usize> = batch
            .iter()
            .enumerate()
            .filter(|(j, other)| *j != cloud_id && other.label() != Some(label))
            .map(|(j, _)| j)
            .collect();
        if eligible.is_empty() {
            return Err(AttackError::NoCandidates(cloud_id));
        }
        let take = cfg.candidate_pool.min(eligible.len());
        let mut rng =
            rand_chacha::ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, cloud_id as u64));
        let picked = rand::seq::index::sample(&mut rng, eligible.len(), take);
        let candidate_ids: Vec<usize> = picked.iter().map(|i| eligible[i]).collect();
        jobs.push(CloudJob {
            cloud_id,
            label,
            clean: cloud,
            candidate_ids,
        });
    }

    let run_job = |job: &CloudJob<T>,
                   metric_in: MixMetric<T>|
     -> Result<(Option<PointCloud<T>>, AttackReport<T>, MixMetric<T>), AttackError> {
        let pred = model.predict(job.clean)?;
        if pred != job.label {
            let report = AttackReport {
                cloud_id: job.cloud_id,
                true_label: job.label,
                surrogate_pred: pred,
                success: false,
                d_h: T::zero(),
                d_c: T::zero(),
                d_norm: T::zero(),
                steps_used: 0,
                selected_paths: Vec::new(),
                skipped: true,
            };
            return Ok((None, report, metric_in));
        }
        let basis = &bases[job.cloud_id];
        let spectral_clean = &feats[job.cloud_id];
        let pool: Vec<SpectralCloud<T>> = job
            .candidate_ids
            .iter()
            .map(|&j| gft(&batch[j], basis))
            .collect::<Result<Vec<_>, _>>()?;
        let n_sel = cfg.paths_selected.min(pool.len());
        let mut state = AttackState::new(n_points, metric_in, cfg);
        let (outcome, selected) = if cfg.path_selection {
            let warm = admix_inner(
                job.clean,
                spectral_clean,
                basis,
                &pool,
                job.label,
                model,
                &mask,
                cfg,
                cfg.warmup_steps,
                &mut state,
            )?;
            let picked = select_paths(&warm.path_grads, &warm.adv_grad, n_sel);
            let selected_feats: Vec<SpectralCloud<T>> =
                picked.iter().map(|&j| pool[j].clone()).collect();
            let selected_ids: Vec<usize> =
                picked.iter().map(|&j| job.candidate_ids[j]).collect();
            let outcome = admix_inner(
                job.clean,
                spectral_clean,
                basis,
                &selected_feats,
                job.label,
                model,
                &mask,
                cfg,
                cfg.steps,
                &mut state,
            )?;
            (outcome, selected_ids)
        } else {
            let kept: Vec<SpectralCloud<T>> = pool.iter().take(n_sel).cloned().collect();
            let selected_ids: Vec<usize> =
                job.candidate_ids.iter().take(n_sel).copied().collect();
            let outcome = admix_inner(
                job.clean,
                spectral_clean,
                basis,
                &kept,
                job.label,
                model,
                &mask,
                cfg,
                cfg.warmup_steps + cfg.steps,
                &mut state,
            )?;
            (outcome, selected_ids)
        };
        let adv = outcome.adversarial.with_label(Some(job.label));
        let success = model.predict(&adv)? != job.label;
        let report = AttackReport {
            cloud_id: job.cloud_id,
            true_label: job.label,
            surrogate_pred: pred,
            success,
            d_h: hausdorff(job.clean, &adv)?,
            d_c: chamfer(job.clean, &adv)?,
            d_norm: mse_dist(job.clean, &adv)?,
            steps_used: state.steps_taken(),
            selected_paths: selected,
            skipped: false,
        };
        Ok((Some(adv), report, state.into_metric()))
    };

    let mut adversarial = Vec::with_capacity(batch.len());
    let mut reports = Vec::with_capacity(batch.len());
    let final_metric;
    match cfg.mode {
        ExecutionMode::Sequential => {
            let mut metric = metric0;
            for job in &jobs {
                let (adv, report, metric_out) = run_job(job, metric)?;
                adversarial.push(adv);
                reports.push(report);
                metric = metric_out;
            }
            final_metric = metric;
        }
        ExecutionMode::Parallel { workers } => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .build()
                .map_err(|e| AttackError::Pool(e.to_string()))?;
            let results: Vec<_> = pool.install(|| {
                jobs.par_iter()
                    .map(|job| run_job(job, metric0.clone()))
                    .collect::<Result<Vec<_>, _>>()
            })?;
            for (adv, report, _) in results {
                adversarial.push(adv);
                reports.push(report);
            }
            final_metric = metric0;
        }
    }
    Ok(BatchOutcome {
        adversarial,
        reports,
        metric: final_metric,
    })
}
