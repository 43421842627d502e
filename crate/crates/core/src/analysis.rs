//! Entropy profiles and capacity sweeps (hidden bits vs response length).

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::generate::{GenerateOptions, Transcript};
use crate::model::{ModelConfig, ModelRegistry, Prompt};
use crate::prf::{HmacPrf, SecretKey};
use crate::steg::payload::matched_prefix;
use crate::steg::{saturation_check, EmbedContext, SaturationVerdict, Scheme, StegConfig};

pub const PROFILE_WINDOWS: [usize; 3] = [8, 32, 128];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapacityPoint {
    #[serde(rename = "length")]
    pub response_len_tokens: usize,
    pub trials: usize,
    #[serde(rename = "mean_bits")]
    pub mean_recovered_bits: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub points: Vec<CapacityPoint>,
    /// Failed trials as (length, message).
    pub errors: Vec<(usize, String)>,
}

#[derive(Debug, Clone)]
pub struct SweepSettings {
    pub lengths: Vec<usize>,
    pub trials_per_length: usize,
    /// Seeds keys, entropy-prefix randomness and payloads of every trial.
    pub seed: u64,
    pub key_bits: usize,
    /// 0 uses rayon's default pool size.
    pub workers: usize,
}

/// Recovered bits of one trial: longest common prefix of payload and retrieval.
pub fn run_trial(
    scheme: &dyn Scheme,
    registry: &ModelRegistry,
    model_config: &ModelConfig,
    prompt: &Prompt,
    length: usize,
    config: &StegConfig,
    seed: u64,
    key_bits: usize,
) -> Result<usize> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let key = SecretKey::generate(key_bits, &mut rng)?;
    let prf = HmacPrf::new(&key);
    let cfg = model_config.clone().with_max_len(length);
    let mut model = registry.build(&cfg)?;
    let width = model.token_width();
    let payload: Vec<bool> = (0..(length * width).clamp(64, u16::MAX as usize))
        .map(|_| rng.gen())
        .collect();
    let transcript = scheme.generate(
        EmbedContext {
            prf: &prf,
            model: model.as_mut(),
            model_digest: cfg.digest(),
            prompt,
            rng: &mut rng,
            options: GenerateOptions::default(),
        },
        &payload,
        config,
    )?;
    let got = scheme
        .retrieve(&prf, &transcript.bits, transcript.token_bits, config)
        .map(|r| r.decoded)
        .unwrap_or_default();
    Ok(matched_prefix(&payload, &got))
}

/// Runs `trials_per_length` fresh-key embeddings per length with an unframed
/// random payload and averages the recovered prefix length.
pub fn capacity_sweep(
    scheme: &dyn Scheme,
    registry: &ModelRegistry,
    model_config: &ModelConfig,
    prompt: &Prompt,
    settings: &SweepSettings,
    config: &StegConfig,
) -> Result<SweepReport> {
    if settings.trials_per_length == 0 {
        return Err(Error::config("trials_per_length must be at least 1"));
    }
    let config = StegConfig {
        framed: false,
        max_payload_bits: None,
        ..config.clone()
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(settings.workers)
        .build()
        .map_err(|e| Error::config(e.to_string()))?;
    let mut points = vec![];
    let mut errors = vec![];
    for (li, &length) in settings.lengths.iter().enumerate() {
        let outcomes: Vec<Result<usize>> = pool.install(|| {
            (0..settings.trials_per_length)
                .into_par_iter()
                .map(|trial| {
                    let seed = trial_seed(settings.seed, li, trial);
                    run_trial(
                        scheme,
                        registry,
                        model_config,
                        prompt,
                        length,
                        &config,
                        seed,
                        settings.key_bits,
                    )
                })
                .collect()
        });
        let mut values = vec![];
        for outcome in outcomes {
            match outcome {
                Ok(v) => values.push(v as f64),
                Err(e) => errors.push((length, e.to_string())),
            }
        }
        if !values.is_empty() {
            let (mean, stderr) = mean_and_stderr(&values);
            points.push(CapacityPoint {
                response_len_tokens: length,
                trials: values.len(),
                mean_recovered_bits: mean,
                stderr,
            });
        }
    }
    Ok(SweepReport { points, errors })
}

fn trial_seed(base: u64, length_index: usize, trial: usize) -> u64 {
    let mut rng = ChaCha20Rng::seed_from_u64(base);
    rng.set_stream(((length_index as u64) << 32) | trial as u64);
    rng.gen()
}

pub fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub fn write_capacity_csv<W: Write>(out: W, points: &[CapacityPoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for p in points {
        w.serialize(p).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_capacity_csv<R: Read>(input: R) -> Result<Vec<CapacityPoint>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .map(|row| row.map_err(csv_error))
        .collect()
}

fn csv_error(e: csv::Error) -> Error {
    Error::InvalidInput(format!("capacity csv: {e}"))
}

/// Gnuplot script plotting mean recovered bits with error bars.
pub fn gnuplot_script(csv_path: &str) -> String {
    format!(
        "set datafile separator ','\n\
         set key off\n\
         set xlabel 'Response length (tokens)'\n\
         set ylabel 'Recovered payload bits'\n\
         set grid ytics\n\
         plot '{csv_path}' every ::1 using 1:3:4 with yerrorlines pt 4\n"
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// Two-sided p-value of the slope under a zero-slope null.
    pub slope_p_value: f64,
}

/// Ordinary least squares; needs at least three points with distinct x.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Option<LinearFit> {
    let n = xs.len();
    if n != ys.len() || n < 3 {
        return None;
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let r_squared = if syy == 0.0 { 1.0 } else { 1.0 - sse / syy };
    let dof = nf - 2.0;
    let se = (sse / dof / sxx).sqrt();
    let slope_p_value = if se == 0.0 {
        if slope == 0.0 { 1.0 } else { 0.0 }
    } else {
        let t = StudentsT::new(0.0, 1.0, dof).expect("positive degrees of freedom");
        2.0 * (1.0 - t.cdf((slope / se).abs()))
    };
    Some(LinearFit {
        slope,
        intercept,
        r_squared,
        slope_p_value,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowStats {
    pub window_bits: usize,
    pub min_sum: Option<f64>,
    pub mean_sum: Option<f64>,
    pub saturation: SaturationVerdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyProfile {
    pub per_token: Vec<f64>,
    pub total_bits: f64,
    pub windows: Vec<WindowStats>,
    /// Least-squares slope of cumulative entropy against token count.
    pub cumulative_slope: Option<f64>,
}

pub fn entropy_profile(transcript: &Transcript) -> EntropyProfile {
    let ledger = transcript.ledger();
    let per_bit = ledger.per_bit();
    let width = transcript.token_bits.max(1);
    let per_token: Vec<f64> = per_bit.chunks(width).map(|c| c.iter().sum()).collect();
    let windows = PROFILE_WINDOWS
        .iter()
        .map(|&w| {
            let sums: Vec<f64> = per_bit.windows(w).map(|s| s.iter().sum()).collect();
            WindowStats {
                window_bits: w,
                min_sum: sums.iter().copied().reduce(f64::min),
                mean_sum: (!sums.is_empty()).then(|| sums.iter().sum::<f64>() / sums.len() as f64),
                saturation: saturation_check(&ledger, w),
            }
        })
        .collect();
    let mut running = 0.0;
    let cumulative: Vec<f64> = per_token
        .iter()
        .map(|h| {
            running += h;
            running
        })
        .collect();
    let xs: Vec<f64> = (1..=cumulative.len()).map(|i| i as f64).collect();
    EntropyProfile {
        per_token,
        total_bits: ledger.total(),
        windows,
        cumulative_slope: linear_fit(&xs, &cumulative).map(|f| f.slope),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::{BitRecord, Phase};

    fn transcript_with(entropies: &[f64], token_bits: usize) -> Transcript {
        Transcript {
            scheme: "test".into(),
            tokens: vec![],
            token_bits,
            bits: vec![false; entropies.len()],
            phase_boundary: None,
            payload_start: None,
            per_bit: entropies
                .iter()
                .map(|&h| BitRecord {
                    p_one: 0.5,
                    entropy: h,
                    phase: Phase::Entropy,
                    prf_value: None,
                })
                .collect(),
            code: None,
            low_entropy: false,
            model_config_digest: String::new(),
            text: None,
        }
    }

    #[test]
    fn fit_recovers_exact_line() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys = [3.0, 5.0, 7.0, 9.0];
        let fit = linear_fit(&xs, &ys).unwrap();
        assert!((fit.slope - 2.0).abs() < 1e-12);
        assert!((fit.intercept - 1.0).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
        assert_eq!(fit.slope_p_value, 0.0);
        assert!(linear_fit(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).is_none());
    }

    #[test]
    fn fit_p_value_matches_reference() {
        // scipy.stats.linregress([1,2,3,4,5],[1,3,2,5,4]): slope 0.8, p 0.1040880
        let fit = linear_fit(&[1.0, 2.0, 3.0, 4.0, 5.0], &[1.0, 3.0, 2.0, 5.0, 4.0]).unwrap();
        assert!((fit.slope - 0.8).abs() < 1e-12);
        assert!((fit.r_squared - 0.64).abs() < 1e-12);
        assert!((fit.slope_p_value - 0.104_088_039).abs() < 1e-6);
    }

    #[test]
    fn stderr_of_constant_sample_is_zero() {
        assert_eq!(mean_and_stderr(&[2.0, 2.0, 2.0]), (2.0, 0.0));
        assert_eq!(mean_and_stderr(&[5.0]), (5.0, 0.0));
        let (m, s) = mean_and_stderr(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn csv_layout() {
        let points = vec![CapacityPoint {
            response_len_tokens: 20,
            trials: 100,
            mean_recovered_bits: 4.19,
            stderr: 0.25,
        }];
        let mut buf = vec![];
        write_capacity_csv(&mut buf, &points).unwrap();
        assert_eq!(
            String::from_utf8(buf.clone()).unwrap(),
            "length,trials,mean_bits,stderr\n20,100,4.19,0.25\n"
        );
        assert_eq!(read_capacity_csv(&buf[..]).unwrap(), points);
        assert!(read_capacity_csv(&b"length,trials\nx,1\n"[..]).is_err());
        assert!(gnuplot_script("cap.csv").contains("'cap.csv'"));
    }

    #[test]
    fn profile_of_fair_coin() {
        let t = transcript_with(&vec![1.0; 300], 1);
        let p = entropy_profile(&t);
        assert_eq!(p.per_token.len(), 300);
        assert!((p.total_bits - 300.0).abs() < 1e-9);
        assert!((p.per_token.iter().sum::<f64>() - t.ledger().total()).abs() < 1e-9);
        assert_eq!(p.windows[0].min_sum, Some(8.0));
        // 8 bits of entropy is far below 10 sqrt(8) ln 8
        assert!(!p.windows[0].saturation.saturated);
        assert!((p.cumulative_slope.unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn profile_of_deterministic_transcript() {
        let p = entropy_profile(&transcript_with(&[0.0; 64], 2));
        assert_eq!(p.per_token, vec![0.0; 32]);
        assert_eq!(p.total_bits, 0.0);
        assert_eq!(p.cumulative_slope, Some(0.0));
    }
}
