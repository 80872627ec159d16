//! Reversed saliency variant: swap the lowest band of a map with a band just
//! below its top, to test whether a metric notices the damage.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::saliency::SaliencyMap;

/// `l`: percent of top-ranked pixels left untouched. `m`: band width in percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReversalParams {
    pub l: f64,
    pub m: f64,
}

impl Default for ReversalParams {
    fn default() -> Self {
        Self { l: 20.0, m: 30.0 }
    }
}

impl ReversalParams {
    pub fn new(l: f64, m: f64) -> Result<Self> {
        let p = Self { l, m };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.l.is_finite() && self.m.is_finite() && self.l >= 0.0 && self.m > 0.0 && self.l + 2.0 * self.m <= 100.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "reversal needs l >= 0, m > 0 and l + 2m <= 100 (got l = {}, m = {})",
                self.l, self.m
            )))
        }
    }

    /// Ascending ranks of the low band A and the high band B for `n` pixels.
    pub fn bands(&self, n: usize) -> (Vec<usize>, Vec<usize>) {
        let nf = n as f64;
        let a = (0..n).filter(|&r| 100.0 * (r as f64) < self.m * nf).collect();
        let lo = (100.0 - self.l - self.m) * nf;
        let hi = (100.0 - self.l) * nf;
        let b = (0..n)
            .filter(|&r| {
                let x = 100.0 * r as f64;
                lo <= x && x < hi
            })
            .collect();
        (a, b)
    }
}

/// Swaps values between band A (lowest m%) and band B (the m% just below the
/// top l%), pairing the i-th lowest of each. When the bands differ in size the
/// larger one loses its highest ranks. The value multiset is preserved.
pub fn reversed_variant(map: &SaliencyMap, params: ReversalParams) -> Result<SaliencyMap> {
    params.validate()?;
    let order = map.rank_ascending();
    let (a, b) = params.bands(order.len());
    let mut values = map.values().to_vec();
    for (&ra, &rb) in a.iter().zip(&b) {
        values.swap(order[ra], order[rb]);
    }
    Ok(map.with_values(values))
}
