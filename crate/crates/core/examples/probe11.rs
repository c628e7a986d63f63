use saao_core::attack::{attack_batch, baseline_batch, AttackConfig, BaselineConfig, BatchOutcome, ExecutionMode};
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
fn dnorm(rep: &BatchOutcome<f64>) -> f64 {
    let att: Vec<_> = rep.reports.iter().filter(|r| !r.skipped).collect();
    att.iter().map(|r| r.d_norm).sum::<f64>() / att.len() as f64
}
fn wb(rep: &BatchOutcome<f64>) -> f64 {
    let att: Vec<_> = rep.reports.iter().filter(|r| !r.skipped).collect();
    att.iter().filter(|r| r.success).count() as f64 / att.len() as f64
}
fn calib(eval: &[PointCloud<f64>], m: &MiniPointNet<f64>, target: f64) -> (f64, BatchOutcome<f64>) {
    let (mut lo, mut hi) = (0.005f64, 0.8f64);
    let mut cal = 0.1;
    for _ in 0..12 {
        cal = 0.5 * (lo + hi);
        let b = baseline_batch(eval, m, &BaselineConfig::new(110, cal / 25.0, cal)).unwrap();
        if dnorm(&b) < target { lo = cal } else { hi = cal }
    }
    (cal, baseline_batch(eval, m, &BaselineConfig::new(110, cal / 25.0, cal)).unwrap())
}

fn main() {
    let cfg = DatasetConfig::default();
    let train_ds = generate_dataset::<f64>(&cfg, Split::Train).unwrap();
    let test_ds = generate_dataset::<f64>(&cfg, Split::Test).unwrap();
    let eval = stratified(&test_ds, 4);
    let model_a = train(&train_ds, ArchId::A, &TrainConfig { epochs: 20, batch_size: 32, lr: 0.01, seed: 11 }).unwrap();
    let model_b = train(&train_ds, ArchId::B, &TrainConfig { epochs: 20, batch_size: 32, lr: 0.01, seed: 12 }).unwrap();

    for kappa in [12.0, 20.0] {
        for (al, ah) in [(0.95, 0.5), (0.9, 0.4)] {
            let acfg = AttackConfig::<f64> {
                seed: 101, mode: ExecutionMode::Sequential,
                admix_low: 0.85, admix_high: 1.0, alpha_low: al, alpha_high: ah,
                lambda_mse: 0.02, lambda_chamfer: 0.2, lambda_hausdorff: 0.1,
                eps_spectral: 0.8, eps_spatial: 0.4, confidence: kappa,
                ..AttackConfig::desk_profile()
            };
            let out_a = attack_batch(&eval, &model_a, &acfg).unwrap();
            let out_b = attack_batch(&eval, &model_b, &acfg).unwrap();
            let (ca, bal_a) = calib(&eval, &model_a, dnorm(&out_a));
            let (cb, bal_b) = calib(&eval, &model_b, dnorm(&out_b));
            println!("k={kappa} a=({al},{ah}):");
            println!("  A: wb {:.2} dn {:.4} tA->B {:.2} | base(eps {ca:.3}) dn {:.4} t {:.2}",
                wb(&out_a), dnorm(&out_a), transfer(&eval, &out_a.adversarial, &model_b), dnorm(&bal_a), transfer(&eval, &bal_a.adversarial, &model_b));
            println!("  B: wb {:.2} dn {:.4} tB->A {:.2} | base(eps {cb:.3}) dn {:.4} t {:.2}",
                wb(&out_b), dnorm(&out_b), transfer(&eval, &out_b.adversarial, &model_a), dnorm(&bal_b), transfer(&eval, &bal_b.adversarial, &model_a));
        }
    }
}
