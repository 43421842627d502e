mod common;

use lmsteg::analysis::{
    capacity_sweep, entropy_profile, linear_fit, read_capacity_csv, write_capacity_csv, SweepSettings,
};
use lmsteg::model::{ModelConfig, ModelRegistry, Prompt};
use lmsteg::steg::{FullScheme, OneQueryScheme, StegConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

fn settings(lengths: Vec<usize>, trials: usize) -> SweepSettings {
    SweepSettings {
        lengths,
        trials_per_length: trials,
        seed: 42,
        key_bits: 128,
        workers: 2,
    }
}

#[test]
fn recovered_bits_grow_with_length() {
    let report = capacity_sweep(
        &OneQueryScheme,
        &ModelRegistry::builtin(),
        &ModelConfig::coin(0.5, 1),
        &Prompt::default(),
        &settings(vec![100, 200, 300, 400, 500], 50),
        &StegConfig::default(),
    )
    .unwrap();
    assert!(report.errors.is_empty());
    let xs: Vec<f64> = report.points.iter().map(|p| p.response_len_tokens as f64).collect();
    let ys: Vec<f64> = report.points.iter().map(|p| p.mean_recovered_bits).collect();
    let fit = linear_fit(&xs, &ys).unwrap();
    assert!(fit.slope > 0.0 && fit.slope_p_value < 0.01, "{fit:?}");
    assert!(report.points.iter().all(|p| p.trials == 50 && p.stderr > 0.0));
}

#[test]
fn sweep_is_reproducible_and_survives_csv() {
    let run = || {
        capacity_sweep(
            &OneQueryScheme,
            &ModelRegistry::builtin(),
            &common::markov_config(1),
            &Prompt::default(),
            &settings(vec![20, 40], 8),
            &StegConfig::default(),
        )
        .unwrap()
    };
    let a = run();
    assert_eq!(a, run());
    let mut buf = vec![];
    write_capacity_csv(&mut buf, &a.points).unwrap();
    assert_eq!(read_capacity_csv(&buf[..]).unwrap(), a.points);
}

#[test]
fn failing_trials_are_reported_per_length() {
    let broken = ModelConfig::new("markov", serde_json::json!({"transitions": [[2.0]]}));
    let report = capacity_sweep(
        &FullScheme,
        &ModelRegistry::builtin(),
        &broken,
        &Prompt::default(),
        &settings(vec![10, 20], 3),
        &StegConfig::default(),
    )
    .unwrap();
    assert!(report.points.is_empty());
    assert_eq!(report.errors.len(), 6);
    assert_eq!(report.errors[0].0, 10);
    assert_eq!(report.errors[5].0, 20);
}

#[test]
fn profile_of_a_generated_transcript() {
    let mut rng = ChaCha20Rng::seed_from_u64(4);
    let prf = common::hmac_prf(&mut rng);
    let payload = lmsteg::steg::payload::frame_bits(&[true; 4]).unwrap();
    let cfg = common::markov_config(300);
    let t = common::embed(&OneQueryScheme, &prf, &cfg, &payload, &StegConfig::default(), &mut rng, false);
    let p = entropy_profile(&t);
    assert_eq!(p.per_token.len(), 300);
    assert!((p.per_token.iter().sum::<f64>() - p.total_bits).abs() < 1e-9);
    // each token contributes -log2 of its probability under the chain
    let initial = [0.5, 0.3, 0.2];
    let rows = [[0.6, 0.3, 0.1], [0.2, 0.5, 0.3], [0.3, 0.3, 0.4]];
    for (i, (&tok, &h)) in t.tokens.iter().zip(&p.per_token).enumerate() {
        let prob: f64 = if i == 0 { initial[tok as usize] } else { rows[t.tokens[i - 1] as usize][tok as usize] };
        assert!((h + prob.log2()).abs() < 1e-9, "token {i}: {h} vs {prob}");
    }
    assert!(p.windows.iter().all(|w| !w.saturation.saturated));
    assert_eq!(p.windows.len(), 3);
}
