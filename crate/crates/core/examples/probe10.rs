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
fn transfer(eval: &[PointCloud<f64>], adv: &[Option<PointCloud<f64>>], victim: &MiniPointNet<f64>) -> f64 {
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
    ok as f64 / total.max(1) as f64
}
fn dnorm(rep: &saao_core::attack::BatchOutcome<f64>) -> f64 {
    let att: Vec<_> = rep.reports.iter().filter(|r| !r.skipped).collect();
    att.iter().map(|r| r.d_norm).sum::<f64>() / att.len() as f64
}
fn wb(rep: &saao_core::attack::BatchOutcome<f64>) -> f64 {
    let att: Vec<_> = rep.reports.iter().filter(|r| !r.skipped).collect();
    att.iter().filter(|r| r.success).count() as f64 / att.len() as f64
}

fn main() {
    let cfg = DatasetConfig::default();
    let train_ds = generate_dataset::<f64>(&cfg, Split::Train).unwrap();
    let test_ds = generate_dataset::<f64>(&cfg, Split::Test).unwrap();
    let eval = stratified(&test_ds, 3);
    let model_a = train(&train_ds, ArchId::A, &TrainConfig { epochs: 20, batch_size: 32, lr: 0.01, seed: 11 }).unwrap();
    let model_b = train(&train_ds, ArchId::B, &TrainConfig { epochs: 20, batch_size: 32, lr: 0.01, seed: 12 }).unwrap();

    for kappa in [4.0, 8.0, 12.0] {
        let acfg = AttackConfig::<f64> {
            seed: 101, mode: ExecutionMode::Sequential,
            admix_low: 0.9, admix_high: 1.0, alpha_low: 0.95, alpha_high: 0.5,
            lambda_mse: 0.02, lambda_chamfer: 0.2, lambda_hausdorff: 0.1,
            eps_spectral: 0.8, eps_spatial: 0.4, confidence: kappa,
            ..AttackConfig::desk_profile()
        };
        let out_a = attack_batch(&eval, &model_a, &acfg).unwrap();
        let out_b = attack_batch(&eval, &model_b, &acfg).unwrap();
        println!("SAAO k={kappa}: A-wb {:.2} dnA {:.4} tA->B {:.2} | B-wb {:.2} dnB {:.4} tB->A {:.2}",
            wb(&out_a), dnorm(&out_a), transfer(&eval, &out_a.adversarial, &model_b),
            wb(&out_b), dnorm(&out_b), transfer(&eval, &out_b.adversarial, &model_a));
        // no-selection variant
        let mut bcfg = acfg.clone();
        bcfg.path_selection = false;
        let nb_a = attack_batch(&eval, &model_a, &bcfg).unwrap();
        println!("  no-select: A-wb {:.2} dn {:.4} tA->B {:.2}", wb(&nb_a), dnorm(&nb_a), transfer(&eval, &nb_a.adversarial, &model_b));
        // baseline calibrated to A-direction d_norm by bisection on eps
        let target = dnorm(&out_a);
        let (mut lo, mut hi) = (0.005f64, 0.6f64);
        let mut cal = 0.1;
        for _ in 0..12 {
            cal = 0.5 * (lo + hi);
            let b = baseline_batch(&eval, &model_a, &BaselineConfig::new(110, cal / 25.0, cal)).unwrap();
            if dnorm(&b) < target { lo = cal } else { hi = cal }
        }
        let bout = baseline_batch(&eval, &model_a, &BaselineConfig::new(110, cal / 25.0, cal)).unwrap();
        println!("  baseline cal eps={cal:.3}: wb {:.2} dn {:.4} tA->B {:.2}", wb(&bout), dnorm(&bout), transfer(&eval, &bout.adversarial, &model_b));
    }
}
