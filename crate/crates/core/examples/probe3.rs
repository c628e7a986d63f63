use saao_core::attack::{attack_batch, baseline_batch, AttackConfig, BaselineConfig, ExecutionMode};
use saao_core::classifier::{evaluate, train, ArchId, TrainConfig, MiniPointNet};
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
    for epochs in [10usize, 20] {
        let ta = TrainConfig { epochs, batch_size: 32, lr: 0.01, seed: 11 };
        let tb = TrainConfig { epochs, batch_size: 32, lr: 0.01, seed: 12 };
        let model_a = train(&train_ds, ArchId::A, &ta).unwrap();
        let model_b = train(&train_ds, ArchId::B, &tb).unwrap();
        println!("epochs {epochs}: acc A {:.3} B {:.3}",
            evaluate(&model_a, &test_ds).unwrap(), evaluate(&model_b, &test_ds).unwrap());
        for (eps_spec, eps_xyz) in [(0.15, 0.08), (0.4, 0.2), (0.8, 0.4)] {
            for (l1, l2, l3) in [(0.5, 20.0, 50.0), (0.5, 5.0, 10.0)] {
                let acfg = AttackConfig::<f64> {
                    seed: 101, mode: ExecutionMode::Sequential,
                    eps_spectral: eps_spec, eps_spatial: eps_xyz,
                    lambda_mse: l1, lambda_chamfer: l2, lambda_hausdorff: l3,
                    ..AttackConfig::desk_profile()
                };
                let out = attack_batch(&eval, &model_a, &acfg).unwrap();
                let att: Vec<_> = out.reports.iter().filter(|r| !r.skipped).collect();
                let wb = att.iter().filter(|r| r.success).count();
                let dn: f64 = att.iter().map(|r| r.d_norm).sum::<f64>() / att.len() as f64;
                let dh: f64 = att.iter().map(|r| r.d_h).sum::<f64>() / att.len() as f64;
                let (tok, ttot) = transfer(&eval, &out.adversarial, &model_b);
                println!("  eps=({eps_spec},{eps_xyz}) lam=({l1},{l2},{l3}): wb {wb}/{} dnorm {dn:.4} dh {dh:.4} transferAB {tok}/{ttot}", att.len());
            }
        }
        // baseline calibrated roughly to comparable budgets
        for eps in [0.08, 0.2] {
            let bl = BaselineConfig::new(110, eps / 25.0, eps);
            let bout = baseline_batch(&eval, &model_a, &bl).unwrap();
            let batt: Vec<_> = bout.reports.iter().filter(|r| !r.skipped).collect();
            let bwb = batt.iter().filter(|r| r.success).count();
            let bdn: f64 = batt.iter().map(|r| r.d_norm).sum::<f64>() / batt.len() as f64;
            let (tok, ttot) = transfer(&eval, &bout.adversarial, &model_b);
            println!("  baseline eps={eps}: wb {bwb}/{} dnorm {bdn:.4} transferAB {tok}/{ttot}", batt.len());
        }
    }
}
