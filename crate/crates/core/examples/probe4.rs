use saao_core::attack::{margin_loss, AttackConfig};
use saao_core::classifier::{train, ArchId, TrainConfig};
use saao_core::geometry::{generate_dataset, DatasetConfig, PointCloud, Split};
use saao_core::metrics::{init_metric, default_bounds, default_epsilon, mix_weight, weighted_spectral_dist};
use saao_core::spectral::{gft, gft_basis, igft, make_mask, SpectralCloud};

fn main() {
    let cfg = DatasetConfig { ..DatasetConfig::default() };
    let train_ds = generate_dataset::<f64>(&cfg, Split::Train).unwrap();
    let test_ds = generate_dataset::<f64>(&cfg, Split::Test).unwrap();
    let model = train(&train_ds, ArchId::A, &TrainConfig { epochs: 20, batch_size: 32, lr: 0.01, seed: 11 }).unwrap();

    let clean = test_ds.clouds.iter().find(|c| c.label() == Some(0)).unwrap().clone();
    let label = 0usize;
    let basis = gft_basis(&clean, 10).unwrap();
    let s_clean = gft(&clean, &basis).unwrap();
    let cands: Vec<(usize, SpectralCloud<f64>)> = test_ds.clouds.iter()
        .filter(|c| c.label() != Some(0)).take(6)
        .map(|c| (c.label().unwrap(), gft(c, &basis).unwrap())).collect();
    let feats: Vec<_> = test_ds.clouds.iter().take(16).map(|c| {
        let b = gft_basis(c, 10).unwrap(); gft(c, &b).unwrap()
    }).collect();
    let raw = init_metric(&feats, default_epsilon(), default_bounds()).unwrap();
    // median calibration like attack_batch
    let mut dists = Vec::new();
    for i in 0..8 {
        let b = gft_basis(&test_ds.clouds[i], 10).unwrap();
        let f = gft(&test_ds.clouds[i], &b).unwrap();
        let g2 = gft(&test_ds.clouds[i+8], &b).unwrap();
        dists.push(weighted_spectral_dist(&f, &g2, &raw).unwrap());
    }
    dists.sort_by(|a,b| a.partial_cmp(b).unwrap());
    let metric = raw.scaled(1.0/(dists[4]*dists[4]));
    println!("median raw dist {:.3}", dists[4]);

    let mask = make_mask::<f64>(128, 32, 0.9, 0.25).unwrap();
    // margin of clean and of mixtures at delta=0
    let m_clean = margin_loss(&model.forward(&clean).unwrap(), label).unwrap();
    println!("clean margin {m_clean:.3}");
    let _acfg = AttackConfig::<f64>::desk_profile();
    for (cl, cand) in &cands {
        let w = mix_weight(&s_clean, cand, &metric).unwrap();
        print!("cand(label {cl}) w={w:.4}: margins ");
        for i in 0..5 {
            let beta = 0.1 + (i as f64 / 4.0) * 0.8;
            let coeffs: Vec<[f64;3]> = s_clean.coeffs().iter().zip(cand.coeffs()).enumerate().map(|(row,(a,c))| {
                let own = beta * mask.weight(row);
                let oth = (1.0-beta) * mask.complement_weight(row) * w;
                [own*a[0]+oth*c[0], own*a[1]+oth*c[1], own*a[2]+oth*c[2]]
            }).collect();
            let sample = SpectralCloud::from_coeffs(coeffs, &basis).unwrap();
            let spatial = igft(&sample, &basis).unwrap();
            let logits = model.forward(&spatial).unwrap();
            let m = margin_loss(&logits, label).unwrap();
            let pred = logits.iter().enumerate().max_by(|a,b| a.1.partial_cmp(b.1).unwrap()).unwrap().0;
            print!("b{beta:.1}:{m:.2}(p{pred}) ");
        }
        println!();
    }
    // what does a PURE rescale do to the prediction?
    for scale in [0.3, 0.5, 0.7, 0.81, 0.9, 1.0] {
        let pts: Vec<[f64;3]> = clean.points().iter().map(|p| [p[0]*scale, p[1]*scale, p[2]*scale]).collect();
        let c2 = PointCloud::new(pts, None).unwrap();
        let logits = model.forward(&c2).unwrap();
        let m = margin_loss(&logits, label).unwrap();
        let pred = logits.iter().enumerate().max_by(|a,b| a.1.partial_cmp(b.1).unwrap()).unwrap().0;
        println!("scale {scale}: margin {m:.3} pred {pred}");
    }
}
