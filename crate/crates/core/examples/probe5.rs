use saao_core::attack::{attack_batch, AttackConfig, ExecutionMode};
use saao_core::classifier::{train, ArchId, TrainConfig};
use saao_core::geometry::{generate_dataset, DatasetConfig, LabeledDataset, PointCloud, Split};

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
    let model_a = train(&train_ds, ArchId::A, &TrainConfig { epochs: 20, batch_size: 32, lr: 0.01, seed: 11 }).unwrap();
    let model_b = train(&train_ds, ArchId::B, &TrainConfig { epochs: 20, batch_size: 32, lr: 0.01, seed: 12 }).unwrap();

    for (bl, bu, al, ah) in [(0.1, 0.9, 0.9, 0.25), (0.5, 1.0, 0.95, 0.25)] {
        for (es, ex) in [(0.15, 0.08), (0.4, 0.2)] {
            for lam in [0.0, 0.05, 0.2] {
                let acfg = AttackConfig::<f64> {
                    seed: 101, mode: ExecutionMode::Sequential,
                    admix_low: bl, admix_high: bu, alpha_low: al, alpha_high: ah,
                    eps_spectral: es, eps_spatial: ex,
                    lambda_mse: 0.5 * lam, lambda_chamfer: 20.0 * lam, lambda_hausdorff: 50.0 * lam,
                    ..AttackConfig::desk_profile()
                };
                let out = attack_batch(&eval, &model_a, &acfg).unwrap();
                let att: Vec<_> = out.reports.iter().filter(|r| !r.skipped).collect();
                let wb = att.iter().filter(|r| r.success).count();
                let dn: f64 = att.iter().map(|r| r.d_norm).sum::<f64>() / att.len() as f64;
                let dh: f64 = att.iter().map(|r| r.d_h).sum::<f64>() / att.len() as f64;
                let mut tok = 0; let mut ttot = 0;
                for (i, adv) in out.adversarial.iter().enumerate() {
                    if let Some(adv) = adv {
                        let y = eval[i].label().unwrap();
                        if model_b.predict(&eval[i]).unwrap() == y {
                            ttot += 1;
                            if model_b.predict(adv).unwrap() != y { tok += 1; }
                        }
                    }
                }
                println!("beta({bl},{bu}) alpha({al},{ah}) eps({es},{ex}) lam*{lam}: wb {wb}/{} dnorm {dn:.4} dh {dh:.4} tAB {tok}/{ttot}", att.len());
            }
        }
    }
}
