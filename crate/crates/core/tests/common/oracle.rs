//! Straight-line re-derivation of the one-query channel on a coin model,
//! written from the pseudo-code without touching the library. Every PRF
//! value is a fresh uniform, which the undetectability argument licenses.

use rand::Rng;

const BACK: u8 = 2;

fn decode(y: &[u8]) -> Vec<bool> {
    let mut out = vec![];
    for &s in y {
        if s == BACK {
            out.pop();
        } else {
            out.push(s == 1);
        }
    }
    out
}

fn next(x: &[bool], y: &[u8]) -> Option<u8> {
    let d = decode(y);
    let last = x.iter().zip(&d).take_while(|(a, b)| a == b).count();
    if d.len() > last {
        Some(BACK)
    } else {
        x.get(last).map(|&b| b as u8)
    }
}

/// Decoded bits after `n` coin flips with `P(1) = p`, threshold `t`, and an
/// optional stop once `stop` bits are decoded.
pub fn one_query_coin(p: f64, n: usize, payload: &[bool], t: f64, stop: Option<usize>, rng: &mut impl Rng) -> Vec<bool> {
    let mut y: Vec<u8> = vec![];
    let mut score = [0.0f64; 3];
    let mut len = 0usize;
    let mut active = true;
    for _ in 0..n {
        let u: [f64; 3] = [rng.gen(), rng.gen(), rng.gen()];
        let unkeyed: f64 = rng.gen();
        let v = match active.then(|| next(payload, &y)).flatten() {
            Some(s) => u[s as usize],
            None => unkeyed,
        };
        let x = v <= p;
        if !active {
            continue;
        }
        len += 1;
        for s in 0..3 {
            score[s] += if x { -u[s].ln() } else { -(1.0 - u[s]).ln() };
            if (score[s] - len as f64) / (len as f64).sqrt() > t {
                y.push(s as u8);
                score = [0.0; 3];
                len = 0;
                active = stop.is_none_or(|k| decode(&y).len() < k);
                break;
            }
        }
    }
    decode(&y)
}

/// Whether a zero-entropy response of `n` bits leaves the code empty.
pub fn deterministic_code_empty(n: usize, t: f64, rng: &mut impl Rng) -> bool {
    let mut score = [0.0f64; 3];
    for len in 1..=n {
        for s in score.iter_mut() {
            // the bit is always 1, so each symbol scores ln(1/u)
            *s += -rng.gen::<f64>().ln();
            if (*s - len as f64) / (len as f64).sqrt() > t {
                return false;
            }
        }
    }
    true
}
