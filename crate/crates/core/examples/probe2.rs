use saao_core::attack::{admix_inner, AttackConfig, AttackState, ExecutionMode, LossWeights, total_loss, margin_loss};
use saao_core::classifier::{train, ArchId, TrainConfig};
use saao_core::geometry::{generate_dataset, DatasetConfig, Split};
use saao_core::metrics::{init_metric, default_bounds, default_epsilon, mix_weight};
use saao_core::spectral::{gft, gft_basis, make_mask};

fn main() {
    let cfg = DatasetConfig { train_per_class: 40, test_per_class: 4, ..DatasetConfig::default() };
    let train_ds = generate_dataset::<f64>(&cfg, Split::Train).unwrap();
    let test_ds = generate_dataset::<f64>(&cfg, Split::Test).unwrap();
    let model = train(&train_ds, ArchId::A, &TrainConfig { epochs: 20, batch_size: 32, lr: 0.01, seed: 11 }).unwrap();

    let clean = test_ds.clouds.iter().find(|c| c.label() == Some(0)).unwrap().clone();
    let label = 0usize;
    assert_eq!(model.predict(&clean).unwrap(), label);
    let basis = gft_basis(&clean, 10).unwrap();
    let s_clean = gft(&clean, &basis).unwrap();
    // candidates: 3 clouds of other classes, projected into clean's basis
    let cands: Vec<_> = test_ds.clouds.iter().filter(|c| c.label() != Some(0)).take(3)
        .map(|c| gft(c, &basis).unwrap()).collect();
    let feats: Vec<_> = test_ds.clouds.iter().take(10).map(|c| {
        let b = gft_basis(c, 10).unwrap(); gft(c, &b).unwrap()
    }).collect();
    let metric0 = init_metric(&feats, default_epsilon(), default_bounds()).unwrap().scaled(1.0 / (3.0 * 128.0));
    println!("metric diag range: {:?} .. {:?}",
        metric0.diag().iter().cloned().fold(f64::INFINITY, f64::min),
        metric0.diag().iter().cloned().fold(f64::NEG_INFINITY, f64::max));
    for (j, c) in cands.iter().enumerate() {
        println!("w_{j} = {}", mix_weight(&s_clean, c, &metric0).unwrap());
    }
    let acfg = AttackConfig::<f64> { seed: 1, mode: ExecutionMode::Sequential, ..AttackConfig::desk_profile() };
    let mask = make_mask(clean.len(), 32, 0.9, 0.25).unwrap();
    let mut state = AttackState::new(clean.len(), metric0, &acfg);
    let weights = LossWeights { mse: 0.5, chamfer: 20.0, hausdorff: 50.0 };
    for outer in 0..11 {
        let out = admix_inner(&clean, &s_clean, &basis, &cands, label, &model, &mask, &acfg, if outer == 0 { 0 } else { 10 }, &mut state).unwrap();
        let logits = model.forward(&out.adversarial).unwrap();
        let margin = margin_loss(&logits, label).unwrap();
        let dmax = state.delta().iter().flat_map(|d| d.iter().map(|v| v.abs())).fold(0.0f64, f64::max);
        let (l, _) = total_loss(&clean, &out.adversarial.clone().with_label(Some(label)), label, &model, &weights).unwrap();
        println!("steps {:3}: loss {:.4} margin {:.4} |delta|max {:.5} pred {}",
            state.steps_taken(), l, margin, dmax, model.predict(&out.adversarial).unwrap());
    }
}
