//! Brute-force reference implementations and random instance generators.
//!
//! Nothing here calls the production algorithm it checks: Gini is a double
//! sum, substitution is exhaustive enumeration, isochrones come from an
//! all-pairs table, spatial queries are linear scans with their own
//! distance and winding-number code. Everything is seeded and
//! deterministic.

pub mod network;
pub mod planted;
pub mod spatial;
pub mod substitution;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Suite-wide RNG for a given seed.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Weighted Gini as the mean absolute difference,
/// `Σᵢⱼ wᵢwⱼ|vᵢ − vⱼ| / (2 W² μ)`. `None` when undefined.
pub fn gini_oracle(entries: &[(f64, f64)]) -> Option<f64> {
    let w: f64 = entries.iter().map(|e| e.1).sum();
    if w <= 0.0 || entries.iter().any(|e| e.0 < 0.0) {
        return None;
    }
    let mu = entries.iter().map(|e| e.0 * e.1).sum::<f64>() / w;
    if mu <= 0.0 {
        return None;
    }
    let mut s = 0.0;
    for a in entries {
        for b in entries {
            s += a.1 * b.1 * (a.0 - b.0).abs();
        }
    }
    Some(s / (2.0 * w * w * mu))
}
