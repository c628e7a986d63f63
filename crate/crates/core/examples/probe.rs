use std::time::Instant;

use saao_core::attack::{attack_batch, baseline_batch, AttackConfig, BaselineConfig, ExecutionMode};
use saao_core::classifier::{evaluate, train, ArchId, TrainConfig};
use saao_core::geometry::{generate_dataset, DatasetConfig, LabeledDataset, PointCloud, Split};

fn stratified(ds: &LabeledDataset<f64>, per_class: usize) -> Vec<PointCloud<f64>> {
    let mut out = Vec::new();
    for class in 0..ds.class_count {
        out.extend(
            ds.clouds
                .iter()
                .filter(|c| c.label() == Some(class))
                .take(per_class)
                .cloned(),
        );
    }
    out
}

fn main() {
    let t0 = Instant::now();
    let cfg = DatasetConfig::default();
    let train_ds = generate_dataset::<f64>(&cfg, Split::Train).unwrap();
    let test_ds = generate_dataset::<f64>(&cfg, Split::Test).unwrap();
    println!("dataset: {} train, {} test ({:.1?})", train_ds.len(), test_ds.len(), t0.elapsed());

    let t = Instant::now();
    let model_a = train(&train_ds, ArchId::A, &TrainConfig { epochs: 30, batch_size: 32, lr: 0.01, seed: 11 }).unwrap();
    println!("arch A trained in {:.1?}: train acc {:.3}, test acc {:.3}",
        t.elapsed(), evaluate(&model_a, &train_ds).unwrap(), evaluate(&model_a, &test_ds).unwrap());
    let t = Instant::now();
    let model_b = train(&train_ds, ArchId::B, &TrainConfig { epochs: 30, batch_size: 32, lr: 0.01, seed: 12 }).unwrap();
    println!("arch B trained in {:.1?}: train acc {:.3}, test acc {:.3}",
        t.elapsed(), evaluate(&model_b, &train_ds).unwrap(), evaluate(&model_b, &test_ds).unwrap());

    // disagreement
    let mut disagree = 0;
    for c in &test_ds.clouds {
        if model_a.predict(c).unwrap() != model_b.predict(c).unwrap() { disagree += 1; }
    }
    println!("A vs B disagreement on test: {}/{}", disagree, test_ds.len());

    // small eval set
    let eval = stratified(&test_ds, 3);
    println!("eval set: {} clouds", eval.len());

    let atk = AttackConfig::<f64> { seed: 101, mode: ExecutionMode::Sequential, ..AttackConfig::desk_profile() };
    let t = Instant::now();
    let out = attack_batch(&eval, &model_a, &atk).unwrap();
    let attacked: Vec<_> = out.reports.iter().filter(|r| !r.skipped).collect();
    let wb = attacked.iter().filter(|r| r.success).count();
    let mean_dnorm: f64 = attacked.iter().map(|r| r.d_norm).sum::<f64>() / attacked.len() as f64;
    let mean_dh: f64 = attacked.iter().map(|r| r.d_h).sum::<f64>() / attacked.len() as f64;
    let mean_dc: f64 = attacked.iter().map(|r| r.d_c).sum::<f64>() / attacked.len() as f64;
    println!("SAAO A whitebox: {}/{} in {:.1?}; mean d_norm {:.5} d_h {:.5} d_c {:.6}",
        wb, attacked.len(), t.elapsed(), mean_dnorm, mean_dh, mean_dc);

    // transfer A -> B
    let mut transfer_ok = 0; let mut transfer_total = 0;
    for (i, adv) in out.adversarial.iter().enumerate() {
        if let Some(adv) = adv {
            let y = eval[i].label().unwrap();
            if model_b.predict(&eval[i]).unwrap() == y {
                transfer_total += 1;
                if model_b.predict(adv).unwrap() != y { transfer_ok += 1; }
            }
        }
    }
    println!("SAAO transfer A->B: {}/{}", transfer_ok, transfer_total);

    // baseline at a few epsilons
    for eps in [0.02f64, 0.04, 0.06] {
        let bl = BaselineConfig::new(110, eps / 25.0, eps);
        let t = Instant::now();
        let bout = baseline_batch(&eval, &model_a, &bl).unwrap();
        let batt: Vec<_> = bout.reports.iter().filter(|r| !r.skipped).collect();
        let bwb = batt.iter().filter(|r| r.success).count();
        let bdn: f64 = batt.iter().map(|r| r.d_norm).sum::<f64>() / batt.len() as f64;
        let mut tok = 0; let mut ttot = 0;
        for (i, adv) in bout.adversarial.iter().enumerate() {
            if let Some(adv) = adv {
                let y = eval[i].label().unwrap();
                if model_b.predict(&eval[i]).unwrap() == y {
                    ttot += 1;
                    if model_b.predict(adv).unwrap() != y { tok += 1; }
                }
            }
        }
        println!("baseline eps={eps}: whitebox {}/{} d_norm {:.5} transfer {}/{} ({:.1?})",
            bwb, batt.len(), bdn, tok, ttot, t.elapsed());
    }
    println!("total {:.1?}", t0.elapsed());
}
