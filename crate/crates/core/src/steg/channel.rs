//! The score-threshold channel shared by embedding and retrieval.
//!
//! Both sides keep one running score per code symbol over the bits since the
//! last chunk boundary. The first symbol (in `0, 1, ←` order) whose
//! normalized score `(score - len) / sqrt(len)` exceeds the threshold is the
//! received symbol; all scores then restart. The embedder runs this exact
//! code on its own output, which is how it learns what the receiver saw.

use crate::ecc::{CodeSymbol, Receiver};
use crate::prf::BoundPrf;
use crate::watermark::bit_score;

use super::payload::FRAME_HEADER_BITS;
use super::StopRule;

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ScoreState {
    scores: [f64; 3],
    len: u64,
}

impl ScoreState {
    pub fn scores(&self) -> [f64; 3] {
        self.scores
    }

    pub fn len(&self) -> u64 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Adds one bit's scores (one keyed value per symbol, in `CodeSymbol::ALL`
    /// order) and returns the symbol that crossed the threshold, if any.
    pub fn update(&mut self, bit: bool, keyed: [f64; 3], threshold: f64) -> Option<CodeSymbol> {
        self.len += 1;
        let root = (self.len as f64).sqrt();
        for symbol in CodeSymbol::ALL {
            let slot = symbol.index();
            self.scores[slot] += bit_score(bit, keyed[slot]);
            if (self.scores[slot] - self.len as f64) / root > threshold {
                *self = ScoreState::default();
                return Some(symbol);
            }
        }
        None
    }
}

/// Receiver end of the channel: scores, received code, and its decoding.
#[derive(Debug, Clone)]
pub struct ChunkReceiver {
    state: ScoreState,
    receiver: Receiver,
    threshold: f64,
    stop: StopRule,
    stopped: bool,
}

impl ChunkReceiver {
    pub fn new(threshold: f64, stop: StopRule) -> Self {
        ChunkReceiver {
            state: ScoreState::default(),
            receiver: Receiver::new(),
            threshold,
            stop,
            stopped: false,
        }
    }

    /// False once the stop rule has fired; no further symbols are taken.
    pub fn is_active(&self) -> bool {
        !self.stopped
    }

    pub fn code(&self) -> &[CodeSymbol] {
        self.receiver.received()
    }

    pub fn decoded(&self) -> &[bool] {
        self.receiver.decoded()
    }

    pub fn score_state(&self) -> &ScoreState {
        &self.state
    }

    /// Scores bit `index` under all three symbols.
    pub fn observe(&mut self, bound: &dyn BoundPrf, index: u64, bit: bool) -> Option<CodeSymbol> {
        if self.stopped {
            return None;
        }
        let keyed = CodeSymbol::ALL.map(|s| bound.eval(index, Some(s)));
        let fired = self.state.update(bit, keyed, self.threshold)?;
        self.receiver.push(fired);
        self.stopped = self.stop_reached();
        Some(fired)
    }

    fn stop_reached(&self) -> bool {
        let have = self.receiver.decoded().len();
        match self.stop {
            StopRule::Never => false,
            StopRule::AtLength(n) => have >= n,
            StopRule::Framed => {
                have >= FRAME_HEADER_BITS
                    && have
                        >= FRAME_HEADER_BITS
                            + super::payload::header_value(&self.receiver.decoded()[..FRAME_HEADER_BITS])
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fires_in_fixed_symbol_order_and_resets() {
        let mut s = ScoreState::default();
        // bit 1 with tiny keyed values scores high for every symbol; Zero wins the tie.
        let fired = s.update(true, [1e-9, 1e-9, 1e-9], 2.0);
        assert_eq!(fired, Some(CodeSymbol::Zero));
        assert!(s.is_empty());
        assert_eq!(s.scores(), [0.0; 3]);

        let fired = s.update(true, [0.9, 1e-9, 1e-9], 2.0);
        assert_eq!(fired, Some(CodeSymbol::One));
        let fired = s.update(true, [0.9, 0.9, 1e-9], 2.0);
        assert_eq!(fired, Some(CodeSymbol::Back));
    }

    #[test]
    fn accumulates_without_crossing() {
        let mut s = ScoreState::default();
        assert_eq!(s.update(false, [0.5, 0.5, 0.5], 2.0), None);
        assert_eq!(s.len(), 1);
        let ln2 = std::f64::consts::LN_2;
        assert!(s.scores().iter().all(|&v| (v - ln2).abs() < 1e-12));
    }

    struct Constant(f64);

    impl BoundPrf for Constant {
        fn eval(&self, _: u64, _: Option<CodeSymbol>) -> f64 {
            self.0
        }
    }

    #[test]
    fn stop_rule_at_length() {
        let mut rx = ChunkReceiver::new(2.0, StopRule::AtLength(2));
        let prf = Constant(1e-9);
        assert_eq!(rx.observe(&prf, 1, true), Some(CodeSymbol::Zero));
        assert!(rx.is_active());
        assert_eq!(rx.observe(&prf, 2, true), Some(CodeSymbol::Zero));
        assert!(!rx.is_active());
        assert_eq!(rx.observe(&prf, 3, true), None);
        assert_eq!(rx.decoded(), &[false, false]);
    }

    #[test]
    fn framed_stop_reads_header() {
        let mut rx = ChunkReceiver::new(2.0, StopRule::Framed);
        let prf = Constant(1e-9);
        // header all zeros: zero payload bits, stop right after the header
        for i in 0..16 {
            assert!(rx.is_active());
            rx.observe(&prf, i + 1, true);
        }
        assert!(!rx.is_active());
    }
}
