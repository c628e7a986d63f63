use saao_core::attack::{attack_batch, baseline_batch, AttackConfig, BaselineConfig, ExecutionMode};
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

    for (l1, l2, l3) in [(0.005, 0.2, 0.5), (0.01, 0.4, 1.0), (0.025, 1.0, 2.5), (0.2, 1.0, 0.5), (0.05, 0.5, 0.2)] {
        let acfg = AttackConfig::<f64> {
            seed: 101, mode: ExecutionMode::Sequential,
            admix_low: 0.5, admix_high: 1.0,
            eps_spectral: 0.4, eps_spatial: 0.2,
            lambda_mse: l1, lambda_chamfer: l2, lambda_hausdorff: l3,
            ..AttackConfig::desk_profile()
        };
        let out = attack_batch(&eval, &model_a, &acfg).unwrap();
        let att: Vec<_> = out.reports.iter().filter(|r| !r.skipped).collect();
        let wb = att.iter().filter(|r| r.success).count();
        let dn: f64 = att.iter().map(|r| r.d_norm).sum::<f64>() / att.len() as f64;
        let dh: f64 = att.iter().map(|r| r.d_h).sum::<f64>() / att.len() as f64;
        let (tab, tt) = transfer(&eval, &out.adversarial, &model_b);
        println!("lam({l1},{l2},{l3}): wb {wb}/{} dnorm {dn:.4} dh {dh:.4} tAB {tab}/{tt}", att.len());
    }
    // baseline reference at budgets bracketing the SAAO d_norms
    for eps in [0.05f64, 0.1, 0.15, 0.2] {
        let bl = BaselineConfig::new(110, eps / 25.0, eps);
        let bout = baseline_batch(&eval, &model_a, &bl).unwrap();
        let batt: Vec<_> = bout.reports.iter().filter(|r| !r.skipped).collect();
        let bwb = batt.iter().filter(|r| r.success).count();
        let bdn: f64 = batt.iter().map(|r| r.d_norm).sum::<f64>() / batt.len() as f64;
        let bdh: f64 = batt.iter().map(|r| r.d_h).sum::<f64>() / batt.len() as f64;
        let (tab, tt) = transfer(&eval, &bout.adversarial, &model_b);
        println!("baseline eps={eps}: wb {bwb}/{} dnorm {bdn:.4} dh {bdh:.4} tAB {tab}/{tt}", batt.len());
    }
}
