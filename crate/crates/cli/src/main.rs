//! `lmsteg`: key generation, embedding, extraction, watermark detection and
//! capacity simulation from the command line.
//!
//! Exit codes: 0 success, 1 nothing found (no payload, clean text),
//! 2 usage or configuration error, 3 invalid input.

use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde_json::{json, Value};

use lmsteg::analysis::{
    capacity_sweep, entropy_profile, gnuplot_script, write_capacity_csv, SweepSettings,
};
use lmsteg::generate::{GenerateOptions, Transcript};
use lmsteg::model::{token_width, Model, ModelConfig, ModelRegistry, Prompt, TokenId};
use lmsteg::prf::{HmacPrf, SecretKey};
use lmsteg::steg::payload::{bits_to_bytes, bytes_to_bits, frame_bytes, unframe};
use lmsteg::steg::{EmbedContext, SchemeRegistry, StegConfig};
use lmsteg::watermark::{wat_detect, wat_generate};
use lmsteg::Error;

const LOW_ENTROPY_WARNING: &str = "low entropy: payload not embedded";

#[derive(Parser)]
#[command(name = "lmsteg", version, about = "Undetectable steganography for token-generating models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a fresh hex-encoded secret key.
    Keygen {
        /// Key length in bits (64, 128 or 256).
        #[arg(long, default_value_t = 128)]
        lambda: usize,
        /// Key file; prints to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        force: bool,
    },
    /// Generate a response carrying a hidden payload.
    Embed(EmbedArgs),
    /// Recover a hidden payload from a response.
    Extract(ExtractArgs),
    /// Generate a watermarked response (no payload).
    Watermark(WatermarkArgs),
    /// Check a response for the keyed watermark.
    Detect(DetectArgs),
    /// Mean recovered payload bits against response length.
    SimulateCapacity(CapacityArgs),
    /// Per-token entropy, window sums and saturation of a transcript.
    Profile {
        /// Transcript JSON; stdin when omitted.
        #[arg(long)]
        input: Option<PathBuf>,
    },
}

#[derive(Args)]
struct SchemeArgs {
    /// Steg config JSON {lambda_bits, threshold_t, scored_bits_per_token, max_payload_bits}.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "full")]
    scheme: String,
    /// Overrides lambda_bits.
    #[arg(long)]
    lambda: Option<usize>,
    /// Overrides threshold_t.
    #[arg(long)]
    threshold: Option<f64>,
}

#[derive(Args)]
struct EmbedArgs {
    #[arg(long)]
    key: PathBuf,
    /// Model config JSON.
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    scheme: SchemeArgs,
    #[arg(long, conflicts_with = "payload_file", required_unless_present = "payload_file")]
    payload_hex: Option<String>,
    #[arg(long)]
    payload_file: Option<PathBuf>,
    #[arg(long, default_value = "")]
    prompt: String,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::TranscriptJson)]
    format: Format,
    /// Seeds the true randomness of the entropy prefix.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_tokens: Option<usize>,
    /// Keep per-bit sampling values in the transcript.
    #[arg(long)]
    debug: bool,
}

#[derive(Args)]
struct ExtractArgs {
    #[arg(long)]
    key: PathBuf,
    /// Needed for text input, or when the input lacks a token width.
    #[arg(long)]
    model: Option<PathBuf>,
    #[command(flatten)]
    scheme: SchemeArgs,
    /// Token JSON {"tokens": [...]} or a transcript; stdin when omitted.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Treat the input as text and re-tokenize it with the model.
    #[arg(long)]
    text: bool,
    /// Print the decoded bits instead of payload bytes.
    #[arg(long)]
    bits: bool,
}

#[derive(Args)]
struct WatermarkArgs {
    #[arg(long)]
    key: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = 16)]
    lambda: usize,
    #[arg(long, default_value = "")]
    prompt: String,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::TranscriptJson)]
    format: Format,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_tokens: Option<usize>,
}

#[derive(Args)]
struct DetectArgs {
    #[arg(long)]
    key: PathBuf,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, default_value_t = 16)]
    lambda: usize,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    text: bool,
}

#[derive(Args)]
struct CapacityArgs {
    #[arg(long)]
    model: PathBuf,
    /// Comma-separated response lengths in tokens.
    #[arg(long, value_delimiter = ',', default_values_t = [20, 40, 60, 80, 100])]
    lengths: Vec<usize>,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value = "one-query")]
    scheme: String,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    lambda: Option<usize>,
    /// Score only the first m bits of each token.
    #[arg(long)]
    scored_bits: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 0 picks one per core.
    #[arg(long, default_value_t = 0)]
    workers: usize,
    #[arg(long)]
    prompt: Option<String>,
    /// CSV output; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write a gnuplot script plotting the CSV.
    #[arg(long, requires = "out")]
    plot: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    TokensJson,
    Text,
    TranscriptJson,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            message: message.into(),
        }
    }

    fn input(message: impl Into<String>) -> Self {
        Failure {
            code: 3,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidInput(_) | Error::Encoding(_) | Error::InvalidPrefix(_) => 3,
            _ => 2,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Keygen { lambda, out, force } => keygen(lambda, out.as_deref(), force),
        Command::Embed(args) => embed(args),
        Command::Extract(args) => extract(args),
        Command::Watermark(args) => watermark(args),
        Command::Detect(args) => detect(args),
        Command::SimulateCapacity(args) => simulate_capacity(args),
        Command::Profile { input } => profile(input.as_deref()),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn keygen(lambda: usize, out: Option<&Path>, force: bool) -> CliResult<u8> {
    let key = SecretKey::setup(lambda)?;
    match out {
        Some(path) => {
            if path.exists() && !force {
                return Err(Failure::usage(format!(
                    "{} exists; pass --force to overwrite",
                    path.display()
                )));
            }
            key.write_file(path)?;
        }
        None => println!("{}", key.to_hex()),
    }
    Ok(0)
}

fn load_key(path: &Path) -> CliResult<HmacPrf> {
    let key = SecretKey::read_file(path)
        .map_err(|e| Failure::usage(format!("key {}: {e}", path.display())))?;
    Ok(HmacPrf::new(&key))
}

fn load_model(path: &Path) -> CliResult<(ModelConfig, Box<dyn Model>)> {
    let cfg = ModelConfig::read_file(path)
        .map_err(|e| Failure::usage(format!("model config {}: {e}", path.display())))?;
    let model = ModelRegistry::builtin().build(&cfg)?;
    Ok((cfg, model))
}

fn steg_config(args: &SchemeArgs) -> CliResult<StegConfig> {
    let mut config = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Failure::usage(format!("steg config {}: {e}", path.display())))?;
            StegConfig::from_json(&text)
                .map_err(|e| Failure::usage(format!("steg config {}: {e}", path.display())))?
        }
        None => StegConfig::default(),
    };
    if let Some(l) = args.lambda {
        config.lambda_bits = l;
    }
    if let Some(t) = args.threshold {
        config.threshold_t = t;
    }
    Ok(config)
}

fn session_rng(seed: Option<u64>) -> ChaCha20Rng {
    match seed {
        Some(s) => ChaCha20Rng::seed_from_u64(s),
        None => ChaCha20Rng::from_entropy(),
    }
}

fn prompt_for(model: &mut dyn Model, text: &str) -> CliResult<Prompt> {
    let tokens = if text.is_empty() {
        vec![]
    } else {
        model.tokenize(text)?.unwrap_or_default()
    };
    Ok(Prompt {
        text: text.to_string(),
        tokens,
    })
}

fn read_input(path: Option<&Path>) -> CliResult<String> {
    match path {
        Some(p) => fs::read_to_string(p).map_err(|e| Failure::input(format!("{}: {e}", p.display()))),
        None => {
            let mut s = String::new();
            io::stdin()
                .read_to_string(&mut s)
                .map_err(|e| Failure::input(format!("stdin: {e}")))?;
            Ok(s)
        }
    }
}

fn write_output(out: Option<&Path>, content: &str) -> CliResult {
    match out {
        Some(p) => fs::write(p, content).map_err(|e| Failure::usage(format!("{}: {e}", p.display()))),
        None => {
            let mut stdout = io::stdout().lock();
            stdout
                .write_all(content.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| Failure::usage(format!("stdout: {e}")))
        }
    }
}

fn render(transcript: &mut Transcript, model: &mut dyn Model, format: Format) -> CliResult<String> {
    if transcript.text.is_none() {
        transcript.text = model.detokenize(&transcript.tokens)?;
    }
    Ok(match format {
        Format::TokensJson => {
            let v = json!({"tokens": transcript.tokens, "token_bits": transcript.token_bits});
            format!("{v}\n")
        }
        Format::Text => {
            let text = transcript.text.clone().ok_or_else(|| {
                Failure::usage("model cannot detokenize; use --format tokens-json")
            })?;
            format!("{text}\n")
        }
        Format::TranscriptJson => format!("{}\n", transcript.to_json()?),
    })
}

fn payload_bytes(args: &EmbedArgs) -> CliResult<Vec<u8>> {
    let bytes = match (&args.payload_hex, &args.payload_file) {
        (Some(h), None) => {
            let h = h.trim();
            let h = h.strip_prefix("0x").unwrap_or(h);
            hex::decode(h).map_err(|e| Failure::input(format!("payload hex: {e}")))?
        }
        (None, Some(p)) => fs::read(p).map_err(|e| Failure::input(format!("{}: {e}", p.display())))?,
        _ => return Err(Failure::usage("give exactly one of --payload-hex, --payload-file")),
    };
    if bytes.is_empty() {
        return Err(Failure::input("payload is empty"));
    }
    Ok(bytes)
}

fn embed(args: EmbedArgs) -> CliResult<u8> {
    let bytes = payload_bytes(&args)?;
    let prf = load_key(&args.key)?;
    let (cfg, mut model) = load_model(&args.model)?;
    let config = steg_config(&args.scheme)?;
    config.validate(model.token_width())?;
    let scheme = SchemeRegistry::builtin().get(&args.scheme.scheme)?;
    let payload = if config.framed && config.max_payload_bits.is_none() {
        frame_bytes(&bytes)?
    } else {
        bytes_to_bits(&bytes)
    };
    let prompt = prompt_for(model.as_mut(), &args.prompt)?;
    let mut rng = session_rng(args.seed);
    let mut transcript = scheme.generate(
        EmbedContext {
            prf: &prf,
            model: model.as_mut(),
            model_digest: cfg.digest(),
            prompt: &prompt,
            rng: &mut rng,
            options: GenerateOptions {
                max_tokens: args.max_tokens,
                debug: args.debug,
            },
        },
        &payload,
        &config,
    )?;
    if transcript.low_entropy {
        eprintln!("warning: {LOW_ENTROPY_WARNING}");
    }
    if !args.debug {
        transcript = transcript.redacted();
    }
    let rendered = render(&mut transcript, model.as_mut(), args.format)?;
    write_output(args.out.as_deref(), &rendered)?;
    Ok(0)
}

/// Token ids and bit width from token JSON, a transcript, or text.
fn read_response(
    input: Option<&Path>,
    text: bool,
    model: Option<&Path>,
) -> CliResult<(Vec<TokenId>, usize)> {
    let raw = read_input(input)?;
    let mut model = model.map(load_model).transpose()?.map(|(_, m)| m);
    if text {
        let m = model
            .as_mut()
            .ok_or_else(|| Failure::usage("--text needs --model to re-tokenize"))?;
        let tokens = m
            .tokenize(raw.trim_end_matches('\n'))?
            .ok_or_else(|| Failure::usage("model has no tokenizer"))?;
        return Ok((tokens, m.token_width()));
    }
    let value: Value = serde_json::from_str(&raw)
        .map_err(|e| Failure::input(format!("response is not JSON: {e}")))?;
    let tokens: Vec<TokenId> = serde_json::from_value(value.get("tokens").cloned().unwrap_or(Value::Null))
        .map_err(|_| Failure::input("response needs a \"tokens\" array of token ids"))?;
    let width = match (&model, value.get("token_bits").and_then(Value::as_u64)) {
        (Some(m), _) => m.token_width(),
        (None, Some(w)) => w as usize,
        (None, None) => match value.get("vocab_size").and_then(Value::as_u64) {
            Some(v) => token_width(v as usize),
            None => return Err(Failure::usage("token width unknown; pass --model")),
        },
    };
    if width == 0 || width > 32 || tokens.iter().any(|&t| width < 32 && t >> width != 0) {
        return Err(Failure::input(format!("token ids do not fit in {width} bits")));
    }
    Ok((tokens, width))
}

fn tokens_to_bits(tokens: &[TokenId], width: usize) -> CliResult<Vec<bool>> {
    Ok(lmsteg::model::tokens_to_bits(tokens, width)?)
}

fn extract(args: ExtractArgs) -> CliResult<u8> {
    let prf = load_key(&args.key)?;
    let config = steg_config(&args.scheme)?;
    let scheme = SchemeRegistry::builtin().get(&args.scheme.scheme)?;
    let (tokens, width) = read_response(args.input.as_deref(), args.text, args.model.as_deref())?;
    config.validate(width)?;
    let bits = tokens_to_bits(&tokens, width)?;
    let Some(found) = scheme.retrieve(&prf, &bits, width, &config) else {
        println!("none");
        return Ok(1);
    };
    if args.bits {
        let s: String = found.decoded.iter().map(|&b| if b { '1' } else { '0' }).collect();
        println!("{s}");
        return Ok(if found.decoded.is_empty() { 1 } else { 0 });
    }
    if !config.framed || config.max_payload_bits.is_some() {
        if found.decoded.is_empty() {
            println!("none");
            return Ok(1);
        }
        eprintln!("recovered {} bits", found.decoded.len());
        println!("{}", hex::encode(bits_to_bytes(&found.decoded)));
        return Ok(0);
    }
    let unframed = unframe(&found.decoded);
    match unframed.declared_bits {
        Some(declared) if !unframed.bits.is_empty() => {
            if !unframed.is_complete() {
                eprintln!("partial payload: {} of {declared} bits", unframed.bits.len());
            }
            println!("{}", hex::encode(unframed.bytes()));
            Ok(0)
        }
        _ => {
            println!("none");
            Ok(1)
        }
    }
}

fn watermark(args: WatermarkArgs) -> CliResult<u8> {
    let prf = load_key(&args.key)?;
    let (cfg, mut model) = load_model(&args.model)?;
    let prompt = prompt_for(model.as_mut(), &args.prompt)?;
    let mut rng = session_rng(args.seed);
    let mut transcript = wat_generate(
        &prf,
        model.as_mut(),
        cfg.digest(),
        &prompt,
        args.lambda,
        &mut rng,
        &GenerateOptions {
            max_tokens: args.max_tokens,
            debug: false,
        },
    )?;
    if transcript.low_entropy {
        eprintln!("warning: low entropy: response not watermarked");
    }
    let rendered = render(&mut transcript, model.as_mut(), args.format)?;
    write_output(args.out.as_deref(), &rendered)?;
    Ok(0)
}

fn detect(args: DetectArgs) -> CliResult<u8> {
    let prf = load_key(&args.key)?;
    let raw_empty = args.input.is_some() && !args.text && {
        let s = read_input(args.input.as_deref())?;
        s.trim().is_empty()
    };
    if raw_empty {
        println!("clean");
        return Ok(1);
    }
    let (tokens, width) = read_response(args.input.as_deref(), args.text, args.model.as_deref())?;
    let bits = tokens_to_bits(&tokens, width)?;
    let verdict = wat_detect(&prf, &bits, args.lambda);
    match verdict.split_index {
        Some(i) if verdict.detected => {
            println!("WATERMARKED at split {i}");
            Ok(0)
        }
        _ => {
            println!("clean");
            Ok(1)
        }
    }
}

fn simulate_capacity(args: CapacityArgs) -> CliResult<u8> {
    let cfg = ModelConfig::read_file(&args.model)
        .map_err(|e| Failure::usage(format!("model config {}: {e}", args.model.display())))?;
    let mut config = steg_config(&SchemeArgs {
        config: args.config.clone(),
        scheme: args.scheme.clone(),
        lambda: args.lambda,
        threshold: args.threshold,
    })?;
    if args.scored_bits.is_some() {
        config.scored_bits_per_token = args.scored_bits;
    }
    if args.lengths.is_empty() || args.lengths.contains(&0) {
        return Err(Failure::usage("--lengths must be positive"));
    }
    let scheme = SchemeRegistry::builtin().get(&args.scheme)?;
    let registry = ModelRegistry::builtin();
    let mut probe = registry.build(&cfg)?;
    config.validate(probe.token_width())?;
    let prompt = prompt_for(probe.as_mut(), args.prompt.as_deref().unwrap_or(""))?;
    drop(probe);
    let settings = SweepSettings {
        lengths: args.lengths,
        trials_per_length: args.trials,
        seed: args.seed.unwrap_or_else(rand::random),
        key_bits: 128,
        workers: args.workers,
    };
    let report = capacity_sweep(scheme.as_ref(), &registry, &cfg, &prompt, &settings, &config)?;
    for (length, message) in &report.errors {
        eprintln!("length {length}: trial failed: {message}");
    }
    let mut csv = vec![];
    write_capacity_csv(&mut csv, &report.points)?;
    let csv = String::from_utf8(csv).expect("csv is utf-8");
    write_output(args.out.as_deref(), &csv)?;
    if let (Some(plot), Some(out)) = (&args.plot, &args.out) {
        let script = gnuplot_script(&out.display().to_string());
        fs::write(plot, script).map_err(|e| Failure::usage(format!("{}: {e}", plot.display())))?;
    }
    Ok(if report.points.is_empty() { 2 } else { 0 })
}

fn profile(input: Option<&Path>) -> CliResult<u8> {
    let raw = read_input(input)?;
    let transcript =
        Transcript::from_json(&raw).map_err(|e| Failure::input(format!("transcript: {e}")))?;
    let p = entropy_profile(&transcript);
    let out = serde_json::to_string_pretty(&p).map_err(Error::from)?;
    println!("{out}");
    Ok(0)
}
