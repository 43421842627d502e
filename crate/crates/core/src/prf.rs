//! Keyed pseudorandom function mapping structured inputs to the unit interval.
//!
//! Generator and retriever must agree on every PRF value, so the input
//! encoding is fixed byte-for-byte:
//!
//! ```text
//! 0x01 ‖ u32-BE bit length of prefix ‖ prefix packed MSB-first (zero padded)
//!      ‖ u64-BE index ‖ symbol byte (0x00 '0', 0x01 '1', 0x02 '←', 0x03 none)
//! ```
//!
//! The keyed hash is HMAC-SHA256; the first eight output bytes, read as a
//! big-endian `u64` and divided by 2^64, give the unit value.

use std::fmt;
use std::path::Path;

use hmac::{Hmac, Mac};
use rand::{CryptoRng, RngCore};
use sha2::Sha256;

use crate::ecc::CodeSymbol;
use crate::error::{Error, Result};

type HmacSha256 = Hmac<Sha256>;

pub const ENCODING_VERSION: u8 = 0x01;
pub const SUPPORTED_KEY_BITS: [usize; 3] = [64, 128, 256];

const TWO_POW_64: f64 = 18_446_744_073_709_551_616.0;

#[derive(Clone, PartialEq, Eq)]
pub struct SecretKey(Vec<u8>);

impl SecretKey {
    /// Fresh key from the operating system's CSPRNG.
    pub fn setup(lambda_bits: usize) -> Result<Self> {
        Self::generate(lambda_bits, &mut rand::rngs::OsRng)
    }

    pub fn generate<R: RngCore + CryptoRng>(lambda_bits: usize, rng: &mut R) -> Result<Self> {
        check_key_bits(lambda_bits)?;
        let mut bytes = vec![0u8; lambda_bits / 8];
        rng.fill_bytes(&mut bytes);
        Ok(SecretKey(bytes))
    }

    pub fn from_bytes(bytes: Vec<u8>) -> Result<Self> {
        check_key_bits(bytes.len() * 8)?;
        Ok(SecretKey(bytes))
    }

    pub fn from_hex(text: &str) -> Result<Self> {
        let bytes = hex::decode(text.trim())
            .map_err(|e| Error::InvalidInput(format!("key is not valid hex: {e}")))?;
        Self::from_bytes(bytes)
    }

    pub fn to_hex(&self) -> String {
        hex::encode(&self.0)
    }

    pub fn read_file(path: &Path) -> Result<Self> {
        Self::from_hex(&std::fs::read_to_string(path)?)
    }

    /// Key file format: one line of hex.
    pub fn write_file(&self, path: &Path) -> Result<()> {
        std::fs::write(path, format!("{}\n", self.to_hex()))?;
        Ok(())
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn bits(&self) -> usize {
        self.0.len() * 8
    }
}

impl fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SecretKey({} bits)", self.bits())
    }
}

fn check_key_bits(bits: usize) -> Result<()> {
    if SUPPORTED_KEY_BITS.contains(&bits) {
        Ok(())
    } else {
        Err(Error::config(format!(
            "unsupported key size {bits} bits (expected one of 64, 128, 256)"
        )))
    }
}

/// One PRF query: `F_k(prefix, index, symbol)`. A `None` symbol is the
/// payload-independent input used by plain watermarking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PrfInput<'a> {
    pub prefix: &'a [bool],
    pub index: u64,
    pub symbol: Option<CodeSymbol>,
}

impl<'a> PrfInput<'a> {
    pub fn new(prefix: &'a [bool], index: u64, symbol: Option<CodeSymbol>) -> Self {
        PrfInput { prefix, index, symbol }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = encode_prefix(self.prefix);
        out.extend_from_slice(&self.index.to_be_bytes());
        out.push(symbol_byte(self.symbol));
        out
    }
}

pub fn symbol_byte(symbol: Option<CodeSymbol>) -> u8 {
    match symbol {
        Some(CodeSymbol::Zero) => 0x00,
        Some(CodeSymbol::One) => 0x01,
        Some(CodeSymbol::Back) => 0x02,
        None => 0x03,
    }
}

fn encode_prefix(prefix: &[bool]) -> Vec<u8> {
    let bit_len = u32::try_from(prefix.len()).expect("prefix longer than u32::MAX bits");
    let mut out = Vec::with_capacity(5 + prefix.len().div_ceil(8) + 9);
    out.push(ENCODING_VERSION);
    out.extend_from_slice(&bit_len.to_be_bytes());
    out.extend(pack_bits(prefix));
    out
}

/// Packs bits MSB-first, zero-padding the final byte.
pub fn pack_bits(bits: &[bool]) -> Vec<u8> {
    bits.chunks(8)
        .map(|chunk| {
            chunk
                .iter()
                .enumerate()
                .fold(0u8, |acc, (i, &b)| acc | ((b as u8) << (7 - i)))
        })
        .collect()
}

/// Maps eight big-endian bytes onto `[0, 1)`.
pub fn unit_from_bytes(bytes: [u8; 8]) -> f64 {
    u64::from_be_bytes(bytes) as f64 / TWO_POW_64
}

/// A PRF whose prefix has already been absorbed; evaluating only the
/// trailing `(index, symbol)` part.
pub trait BoundPrf {
    fn eval(&self, index: u64, symbol: Option<CodeSymbol>) -> f64;
}

/// Source of keyed unit values. Implementations must be deterministic.
pub trait UnitPrf: Send + Sync {
    fn bind<'a>(&'a self, prefix: &[bool]) -> Box<dyn BoundPrf + 'a>;

    fn unit(&self, input: &PrfInput<'_>) -> f64 {
        self.bind(input.prefix).eval(input.index, input.symbol)
    }
}

/// HMAC-SHA256 instantiation.
#[derive(Clone)]
pub struct HmacPrf {
    keyed: HmacSha256,
}

impl HmacPrf {
    pub fn new(key: &SecretKey) -> Self {
        let keyed = HmacSha256::new_from_slice(key.as_bytes()).expect("HMAC accepts any key length");
        HmacPrf { keyed }
    }
}

impl fmt::Debug for HmacPrf {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("HmacPrf")
    }
}

struct BoundHmac {
    state: HmacSha256,
}

impl BoundPrf for BoundHmac {
    fn eval(&self, index: u64, symbol: Option<CodeSymbol>) -> f64 {
        let mut mac = self.state.clone();
        mac.update(&index.to_be_bytes());
        mac.update(&[symbol_byte(symbol)]);
        let digest = mac.finalize().into_bytes();
        let mut head = [0u8; 8];
        head.copy_from_slice(&digest[..8]);
        unit_from_bytes(head)
    }
}

impl UnitPrf for HmacPrf {
    fn bind<'a>(&'a self, prefix: &[bool]) -> Box<dyn BoundPrf + 'a> {
        let mut state = self.keyed.clone();
        state.update(&encode_prefix(prefix));
        Box::new(BoundHmac { state })
    }
}

/// Single-shot evaluation with a fresh HMAC instance.
pub fn prf_unit(key: &SecretKey, input: &PrfInput<'_>) -> f64 {
    let mut mac = HmacSha256::new_from_slice(key.as_bytes()).expect("HMAC accepts any key length");
    mac.update(&input.encode());
    let digest = mac.finalize().into_bytes();
    let mut head = [0u8; 8];
    head.copy_from_slice(&digest[..8]);
    unit_from_bytes(head)
}
