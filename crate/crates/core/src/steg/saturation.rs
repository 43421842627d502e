use serde::{Deserialize, Serialize};

use crate::model::EntropyLedger;

/// Entropy a window of `r` bits must hold: `10 * sqrt(r) * ln r`.
pub fn saturation_threshold(r: usize) -> f64 {
    let r = r as f64;
    10.0 * r.sqrt() * r.ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SaturationVerdict {
    pub saturated: bool,
    /// First failing window as (1-based start, length), scanning lengths in
    /// increasing order.
    pub first_violation: Option<(usize, usize)>,
}

/// Checks that every window of at least `r0` consecutive bits carries
/// enough entropy. Quadratic in the ledger length.
pub fn saturation_check(ledger: &EntropyLedger, r0: usize) -> SaturationVerdict {
    assert!(r0 >= 2, "saturation needs r0 >= 2");
    let n = ledger.len();
    let prefix: Vec<f64> = std::iter::once(0.0)
        .chain(ledger.cumulative().iter().copied())
        .collect();
    for r in r0..=n {
        let need = saturation_threshold(r);
        for start in 0..=(n - r) {
            if prefix[start + r] - prefix[start] < need {
                return SaturationVerdict {
                    saturated: false,
                    first_violation: Some((start + 1, r)),
                };
            }
        }
    }
    SaturationVerdict {
        saturated: true,
        first_violation: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_ledger_is_vacuously_saturated() {
        assert!(saturation_check(&EntropyLedger::new(), 8).saturated);
    }

    #[test]
    fn zero_ledger_fails_at_first_window() {
        let ledger = EntropyLedger::from_entries(vec![0.0; 40]);
        let v = saturation_check(&ledger, 8);
        assert!(!v.saturated);
        assert_eq!(v.first_violation, Some((1, 8)));
    }

    #[test]
    fn short_ledger_has_no_windows() {
        let ledger = EntropyLedger::from_entries(vec![0.0; 5]);
        assert!(saturation_check(&ledger, 8).saturated);
    }

    #[test]
    fn high_entropy_window_passes() {
        // 10 sqrt(8) ln 8 ~ 58.8 bits per 8-bit window
        let ledger = EntropyLedger::from_entries(vec![20.0; 12]);
        assert!(saturation_check(&ledger, 8).saturated);
        let mut entries = vec![20.0; 12];
        entries[11] = 0.0;
        let v = saturation_check(&EntropyLedger::from_entries(entries), 8);
        assert!(v.saturated, "{v:?}");
    }

    #[test]
    fn constant_entropy_crossover_by_direct_scan() {
        // smallest r past which r >= 10 sqrt(r) ln r holds for good
        let crossover = (3..20_000)
            .rev()
            .find(|&r| saturation_threshold(r) > r as f64)
            .unwrap()
            + 1;
        assert!((8000..8200).contains(&crossover), "{crossover}");
        assert!(saturation_threshold(3000) > 3000.0);

        let ledger = EntropyLedger::from_entries(vec![1.0; crossover + 50]);
        assert!(saturation_check(&ledger, crossover).saturated);
        let v = saturation_check(&ledger, 3000);
        assert_eq!(v.first_violation, Some((1, 3000)));
    }
}
