//! Dynamic error-correcting code over a noiseless-feedback channel.
//!
//! Messages are bits; the channel alphabet adds a backspace symbol. The
//! sender always looks at what the receiver has decoded so far: if the
//! decoding has a wrong suffix it sends a backspace, otherwise the next
//! message bit. With at most `e` corrupted symbols among `n` delivered,
//! the receiver's decoding agrees with the message on at least `n - 2e`
//! leading bits.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CodeSymbol {
    Zero,
    One,
    Back,
}

impl CodeSymbol {
    /// Fixed iteration order used when several scores cross together.
    pub const ALL: [CodeSymbol; 3] = [CodeSymbol::Zero, CodeSymbol::One, CodeSymbol::Back];

    pub fn from_bit(bit: bool) -> Self {
        if bit {
            CodeSymbol::One
        } else {
            CodeSymbol::Zero
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// Compact ASCII form used in trace dumps.
    pub fn ascii(self) -> char {
        match self {
            CodeSymbol::Zero => '0',
            CodeSymbol::One => '1',
            CodeSymbol::Back => '<',
        }
    }

    pub fn from_ascii(c: char) -> Option<Self> {
        match c {
            '0' => Some(CodeSymbol::Zero),
            '1' => Some(CodeSymbol::One),
            '<' | '←' => Some(CodeSymbol::Back),
            _ => None,
        }
    }
}

impl fmt::Display for CodeSymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CodeSymbol::Zero => f.write_str("0"),
            CodeSymbol::One => f.write_str("1"),
            CodeSymbol::Back => f.write_str("←"),
        }
    }
}

pub fn symbols_to_string(symbols: &[CodeSymbol]) -> String {
    symbols.iter().map(|s| s.ascii()).collect()
}

pub fn symbols_from_str(text: &str) -> Result<Vec<CodeSymbol>> {
    text.chars()
        .map(|c| {
            CodeSymbol::from_ascii(c)
                .ok_or_else(|| Error::InvalidInput(format!("not a code symbol: {c:?}")))
        })
        .collect()
}

pub fn bits_to_string(bits: &[bool]) -> String {
    bits.iter().map(|&b| if b { '1' } else { '0' }).collect()
}

/// Runs the backspace recursion left to right. Linear time.
pub fn decode(received: &[CodeSymbol]) -> Vec<bool> {
    let mut out = Vec::with_capacity(received.len());
    for &symbol in received {
        apply(&mut out, symbol);
    }
    out
}

fn apply(decoded: &mut Vec<bool>, symbol: CodeSymbol) {
    match symbol {
        CodeSymbol::Zero => decoded.push(false),
        CodeSymbol::One => decoded.push(true),
        CodeSymbol::Back => {
            decoded.pop();
        }
    }
}

fn common_prefix(a: &[bool], b: &[bool]) -> usize {
    a.iter().zip(b).take_while(|(x, y)| x == y).count()
}

/// Length of the longest prefix on which `message` and `decode(received)` agree.
pub fn last_agree(message: &[bool], received: &[CodeSymbol]) -> usize {
    common_prefix(message, &decode(received))
}

/// Length of the wrong suffix of the receiver's decoding.
pub fn suffix_len(message: &[bool], received: &[CodeSymbol]) -> usize {
    let decoded = decode(received);
    decoded.len() - common_prefix(message, &decoded)
}

/// `last - suff`; never below `-len(decode(received))`.
pub fn potential(message: &[bool], received: &[CodeSymbol]) -> i64 {
    let decoded = decode(received);
    let last = common_prefix(message, &decoded);
    last as i64 - (decoded.len() - last) as i64
}

/// The symbol the sender transmits next, or `None` once the receiver
/// already holds the whole message.
pub fn next_symbol(message: &[bool], received: &[CodeSymbol]) -> Option<CodeSymbol> {
    let decoded = decode(received);
    let last = common_prefix(message, &decoded);
    select_next(message, last, decoded.len() - last)
}

fn select_next(message: &[bool], last: usize, suff: usize) -> Option<CodeSymbol> {
    if suff > 0 {
        Some(CodeSymbol::Back)
    } else {
        message.get(last).map(|&b| CodeSymbol::from_bit(b))
    }
}

/// `ceil(k / (1 - 2 epsilon))`: code length sufficient to deliver `k` bits
/// when at most an `epsilon` fraction of symbols is corrupted.
pub fn required_length(k: usize, epsilon: f64) -> Result<usize> {
    if !(0.0..0.5).contains(&epsilon) {
        return Err(Error::config(format!(
            "epsilon must lie in [0, 0.5), got {epsilon}"
        )));
    }
    let exact = k as f64 / (1.0 - 2.0 * epsilon);
    // Guard against 10.000000000000002-style rounding before the ceiling.
    let rounded = exact.round();
    if (exact - rounded).abs() < 1e-9 {
        Ok(rounded as usize)
    } else {
        Ok(exact.ceil() as usize)
    }
}

/// Receiver side: the running decoding of everything received.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Receiver {
    received: Vec<CodeSymbol>,
    decoded: Vec<bool>,
}

impl Receiver {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, symbol: CodeSymbol) {
        self.received.push(symbol);
        apply(&mut self.decoded, symbol);
    }

    pub fn received(&self) -> &[CodeSymbol] {
        &self.received
    }

    pub fn decoded(&self) -> &[bool] {
        &self.decoded
    }
}

/// Sender-side view of a transmission: the message plus the receiver's
/// state (known through feedback). Updates are O(1) per symbol.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EccState {
    message: Vec<bool>,
    receiver: Receiver,
    last: usize,
}

impl EccState {
    pub fn new(message: Vec<bool>) -> Self {
        EccState {
            message,
            receiver: Receiver::new(),
            last: 0,
        }
    }

    pub fn message(&self) -> &[bool] {
        &self.message
    }

    pub fn received(&self) -> &[CodeSymbol] {
        self.receiver.received()
    }

    pub fn decoded(&self) -> &[bool] {
        self.receiver.decoded()
    }

    pub fn last(&self) -> usize {
        self.last
    }

    pub fn suff(&self) -> usize {
        self.decoded().len() - self.last
    }

    pub fn potential(&self) -> i64 {
        self.last as i64 - self.suff() as i64
    }

    pub fn is_complete(&self) -> bool {
        self.suff() == 0 && self.last == self.message.len()
    }

    pub fn next_symbol(&self) -> Option<CodeSymbol> {
        select_next(&self.message, self.last, self.suff())
    }

    /// Records what the receiver actually got.
    pub fn deliver(&mut self, symbol: CodeSymbol) {
        let before = self.receiver.decoded.len();
        self.receiver.push(symbol);
        let decoded = self.receiver.decoded();
        match symbol {
            CodeSymbol::Back => self.last = self.last.min(decoded.len()),
            CodeSymbol::Zero | CodeSymbol::One => {
                let bit = symbol == CodeSymbol::One;
                if self.last == before && self.message.get(before) == Some(&bit) {
                    self.last += 1;
                }
            }
        }
    }
}

/// Tab-separated trace line: step, sent, received, potential, decoding.
pub fn trace_line(
    step: usize,
    sent: Option<CodeSymbol>,
    received: CodeSymbol,
    state: &EccState,
) -> String {
    format!(
        "{}\t{}\t{}\t{}\t{}",
        step,
        sent.map_or('-', CodeSymbol::ascii),
        received.ascii(),
        state.potential(),
        bits_to_string(state.decoded())
    )
}
