use saao_core::attack::{admix_inner, AttackConfig, AttackState, ExecutionMode};
use saao_core::classifier::{train, ArchId, TrainConfig};
use saao_core::geometry::{generate_dataset, DatasetConfig, LabeledDataset, PointCloud, Split};
use saao_core::metrics::MixMetric;
use saao_core::spectral::{gft, gft_basis, SpectralMask};

fn stratified(ds: &LabeledDataset<f64>, per_class: usize) -> Vec<PointCloud<f64>> {
    let mut out = Vec::new();
    for class in 0..ds.class_count {
        out.extend(ds.clouds.iter().filter(|c| c.label() == Some(class)).take(per_class).cloned());
    }
    out
}

fn main() {
    let cfg = DatasetConfig::default();
    let train_ds = generate_dataset::<f64>(&cfg, Split::Train).unwrap();
    let test_ds = generate_dataset::<f64>(&cfg, Split::Test).unwrap();
    let eval = stratified(&test_ds, 3);
    let model = train(&train_ds, ArchId::A, &TrainConfig { epochs: 20, batch_size: 32, lr: 0.01, seed: 11 }).unwrap();

    for lr in [0.01, 0.03] {
        for (es, ex) in [(0.15, 0.08), (0.4, 0.2)] {
            let acfg = AttackConfig::<f64> {
                seed: 101, mode: ExecutionMode::Sequential,
                mix_samples: 2, admix_low: 1.0 - 1e-12, admix_high: 1.0,
                lambda_mse: 0.0, lambda_chamfer: 0.0, lambda_hausdorff: 0.0,
                eps_spectral: es, eps_spatial: ex, lr,
                steps: 108, warmup_steps: 2,
                ..AttackConfig::desk_profile()
            };
            let mask = SpectralMask::identity(128);
            let mut wb = 0; let mut total = 0; let mut dn_sum = 0.0;
            for clean in &eval {
                let label = clean.label().unwrap();
                if model.predict(clean).unwrap() != label { continue; }
                total += 1;
                let basis = gft_basis(clean, 10).unwrap();
                let s_clean = gft(clean, &basis).unwrap();
                let cand = s_clean.clone();
                let mut state = AttackState::new(128, MixMetric::identity(128), &acfg);
                let out = admix_inner(clean, &s_clean, &basis, &[cand], label, &model, &mask, &acfg, 110, &mut state).unwrap();
                if model.predict(&out.adversarial).unwrap() != label { wb += 1; }
                dn_sum += saao_core::metrics::mse_dist(clean, &out.adversarial).unwrap();
            }
            println!("pure spectral descent lr={lr} eps({es},{ex}): wb {wb}/{total} dnorm {:.4}", dn_sum / total as f64);
        }
    }
}
