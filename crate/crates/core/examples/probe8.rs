use saao_core::attack::{attack_batch, AttackConfig, ExecutionMode};
use saao_core::classifier::{train, ArchId, TrainConfig, MiniPointNet};
use saao_core::geometry::{generate_dataset, DatasetConfig, LabeledDataset, PointCloud, Split};

fn stratified(ds: &LabeledDataset<f64>, per_class: usize) -> Vec<PointCloud<f64>> {
    let mut out = Vec::new();
    for class in 0..ds.class_count {
        out.extend(ds.clouds.iter().filter(|c| c.label() == Some(class)).take(per_class).cloned());
    }
    out
}
fn transfer(eval: &[PointCloud<f64>], adv: &[Option<PointCloud<f64>>], victim: &MiniPointNet<f64>) -> (usize, usize) {
    let mut ok = 0; let mut total = 0;
    for (i, a) in adv.iter().enumerate() {
        if let Some(a) = a {
            let y = eval[i].label().unwrap();
            if victim.predict(&eval[i]).unwrap() == y {
                total += 1;
                if victim.predict(a).unwrap() != y { ok += 1; }
            }
        }
    }
    (ok, total)
}

fn main() {
    let cfg = DatasetConfig::default();
    let train_ds = generate_dataset::<f64>(&cfg, Split::Train).unwrap();
    let test_ds = generate_dataset::<f64>(&cfg, Split::Test).unwrap();
    let eval = stratified(&test_ds, 3);
    let model_a = train(&train_ds, ArchId::A, &TrainConfig { epochs: 20, batch_size: 32, lr: 0.01, seed: 11 }).unwrap();
    let model_b = train(&train_ds, ArchId::B, &TrainConfig { epochs: 20, batch_size: 32, lr: 0.01, seed: 12 }).unwrap();

    for kappa in [0.5, 1.0, 2.0] {
        for (bl, bu, al, ah) in [(0.8, 1.0, 0.95, 0.5), (0.9, 1.0, 0.95, 0.5)] {
            for lam in [(0.05, 0.5, 0.2), (0.1, 1.0, 0.5)] {
                let acfg = AttackConfig::<f64> {
                    seed: 101, mode: ExecutionMode::Sequential,
                    admix_low: bl, admix_high: bu, alpha_low: al, alpha_high: ah,
                    eps_spectral: 0.4, eps_spatial: 0.2, confidence: kappa,
                    lambda_mse: lam.0, lambda_chamfer: lam.1, lambda_hausdorff: lam.2,
                    ..AttackConfig::desk_profile()
                };
                let out = attack_batch(&eval, &model_a, &acfg).unwrap();
                let att: Vec<_> = out.reports.iter().filter(|r| !r.skipped).collect();
                let wb = att.iter().filter(|r| r.success).count();
                let dn: f64 = att.iter().map(|r| r.d_norm).sum::<f64>() / att.len() as f64;
                let (tab, tt) = transfer(&eval, &out.adversarial, &model_b);
                println!("k={kappa} b({bl},{bu}) a({al},{ah}) lam{lam:?}: wb {wb}/{} dnorm {dn:.4} tAB {tab}/{tt}", att.len());
            }
        }
    }
}
