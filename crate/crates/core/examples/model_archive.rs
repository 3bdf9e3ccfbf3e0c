//! Saving and loading a model archive; predictions survive bit for bit.

use nss::composition::{CompositionPlan, NetworkOptions, QuantileModel};
use nss::data::archive::{decode_model, encode_model};
use nss::data::synth::synth_regression;
use nss::data::{load_model, save_model, split_dataset, Fingerprint};
use nss::training::{fit, TrainConfig};

fn main() -> nss::Result<()> {
    let data = synth_regression(500, 2)?;
    let (splits, stats) = split_dataset(&data, [0.8, 0.1, 0.1], 0, false)?.normalized()?;
    let model = QuantileModel::new(
        CompositionPlan::parse("nss-alpha-chain", 8, 0.5)?,
        stats,
        &NetworkOptions::default(),
        5,
    )?;
    let cfg = TrainConfig {
        epochs: 10,
        ..TrainConfig::default()
    };
    let model = fit(model, &splits.train, None, &cfg)?.into_result()?.model;

    let path = std::env::temp_dir().join("nss-example.nss");
    let fp = Fingerprint {
        config_hash: "example".into(),
        seed: 5,
    };
    save_model(&model, &fp, &path)?;
    let (back, fp_back) = load_model(&path)?;
    println!(
        "archive at {} ({} bytes)",
        path.display(),
        std::fs::metadata(&path).map(|m| m.len()).unwrap_or(0)
    );
    println!("fingerprint: {fp_back:?}");

    let same = [-1.5, 0.0, 0.7].iter().all(|&x| {
        [0.05, 0.5, 0.95].iter().all(|&a| {
            let (q1, q2) = (model.quantile(&[x], a).unwrap(), back.quantile(&[x], a).unwrap());
            q1.to_bits() == q2.to_bits()
        })
    });
    println!("predictions bitwise identical after reload: {same}");

    let text = encode_model(&model, &fp)?;
    println!("header: {}", text.lines().next().unwrap_or(""));
    let tampered = text.replacen("\"weights\": \"3", "\"weights\": \"4", 1);
    if tampered != text {
        println!("tampered archive: {}", decode_model(&tampered).unwrap_err());
    }
    std::fs::remove_file(&path).ok();
    Ok(())
}
