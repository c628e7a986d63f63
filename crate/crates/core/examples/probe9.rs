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

    // How deep can any margin-following attack transfer at this scale?
    for ex in [0.2, 0.3, 0.4] {
        for kappa in [4.0, 1e9] {
            let acfg = AttackConfig::<f64> {
                seed: 101, mode: ExecutionMode::Sequential,
                mix_samples: 2, admix_low: 1.0 - 1e-12, admix_high: 1.0,
                alpha_low: 0.95, alpha_high: 0.5,
                lambda_mse: 0.0, lambda_chamfer: 0.0, lambda_hausdorff: 0.0,
                eps_spectral: 2.0 * ex, eps_spatial: ex, confidence: kappa,
                ..AttackConfig::desk_profile()
            };
            let out = attack_batch(&eval, &model_a, &acfg).unwrap();
            let att: Vec<_> = out.reports.iter().filter(|r| !r.skipped).collect();
            let wb = att.iter().filter(|r| r.success).count();
            let dn: f64 = att.iter().map(|r| r.d_norm).sum::<f64>() / att.len() as f64;
            let (tab, tt) = transfer(&eval, &out.adversarial, &model_b);
            // also reverse direction quickly (B as surrogate)
            let outb = attack_batch(&eval, &model_b, &acfg).unwrap();
            let (tba, ttb) = transfer(&eval, &outb.adversarial, &model_a);
            let wbb = outb.reports.iter().filter(|r| !r.skipped && r.success).count();
            println!("pure-descent eps_xyz={ex} kappa={kappa:>5}: A-wb {wb}/{} dnorm {dn:.4} tA->B {tab}/{tt}; B-wb {wbb} tB->A {tba}/{ttb}", att.len());
        }
    }
    // SAAO at same depths
    for ex in [0.3] {
        for kappa in [4.0, 8.0] {
            let acfg = AttackConfig::<f64> {
                seed: 101, mode: ExecutionMode::Sequential,
                admix_low: 0.9, admix_high: 1.0, alpha_low: 0.95, alpha_high: 0.5,
                lambda_mse: 0.02, lambda_chamfer: 0.2, lambda_hausdorff: 0.1,
                eps_spectral: 2.0 * ex, eps_spatial: ex, confidence: kappa,
                ..AttackConfig::desk_profile()
            };
            let out = attack_batch(&eval, &model_a, &acfg).unwrap();
            let att: Vec<_> = out.reports.iter().filter(|r| !r.skipped).collect();
            let wb = att.iter().filter(|r| r.success).count();
            let dn: f64 = att.iter().map(|r| r.d_norm).sum::<f64>() / att.len() as f64;
            let (tab, tt) = transfer(&eval, &out.adversarial, &model_b);
            let outb = attack_batch(&eval, &model_b, &acfg).unwrap();
            let (tba, ttb) = transfer(&eval, &outb.adversarial, &model_a);
            let wbb = outb.reports.iter().filter(|r| !r.skipped && r.success).count();
            println!("SAAO eps_xyz={ex} kappa={kappa}: A-wb {wb}/{} dnorm {dn:.4} tA->B {tab}/{tt}; B-wb {wbb} tB->A {tba}/{ttb}", att.len());
        }
    }
}
