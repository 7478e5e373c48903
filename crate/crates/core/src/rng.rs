//! Counter-based random number generation.
//!
//! All sampling in this crate is driven by splitmix64 (Steele, Lea & Flood;
//! reference implementation by Sebastiano Vigna, public domain).  The
//! generator is chosen because it is trivially re-implementable in any
//! language from its algorithm name alone, which keeps result files
//! reproducible outside this crate:
//!
//! ```text
//! state += 0x9E3779B97F4A7C15                       (odd golden-ratio gamma)
//! z = state
//! z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//! z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//! output = z ^ (z >> 31)
//! ```
//!
//! Test vectors (first three outputs):
//!
//! | seed                | outputs                                                        |
//! |---------------------|----------------------------------------------------------------|
//! | 0                   | 0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4, 0x06C45D188009454F     |
//! | 42                  | 0xBDD732262FEB6E95, 0x28EFE333B266F103, 0x47526757130F9F52     |
//! | 0x0123456789ABCDEF  | 0x157A3807A48FAA9D, 0xD573529B34A1D093, 0x2F90B72E996DCCBE     |
//!
//! Uniform doubles take the top 53 bits: `(x >> 11) * 2^-53`, giving values in
//! `[0, 1)`.  Normals use the Box-Muller transform on two uniforms, so every
//! normal consumes exactly two generator outputs (no rejection step, which
//! keeps stream consumption predictable).
//!
//! Parallel trials never share a generator.  Trial `k` of a run with master
//! seed `s` uses [`derive_seed`]`(s, k)` — the `(k+1)`-th raw output of the
//! master stream — as its own seed.  The derivation is stateless, so the set
//! of per-trial streams is independent of scheduling and thread count.

use serde::{Deserialize, Serialize};

/// Seed for any reproducible operation; 64-bit unsigned everywhere.
pub type Seed = u64;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stateless substream derivation: the `(index + 1)`-th splitmix64 output of
/// the `master` stream.  Used for per-trial and per-component seeds.
#[inline]
pub fn derive_seed(master: Seed, index: u64) -> Seed {
    mix(master.wrapping_add(index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
}

/// The splitmix64 generator.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: Seed) -> Self {
        Self { state: seed }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix(self.state)
    }

    /// Uniform draw in `[0, 1)` with 53-bit resolution.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / 9_007_199_254_740_992.0)
    }

    /// Fair coin.
    #[inline]
    pub fn next_bool(&mut self) -> bool {
        self.next_u64() & 1 == 1
    }

    /// Standard normal via Box-Muller; consumes exactly two outputs.
    pub fn next_normal(&mut self) -> f64 {
        let u1 = self.next_f64().max(f64::MIN_POSITIVE);
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_vectors() {
        // Frozen from an independent implementation; first vector matches the
        // canonical reference output for seed 0.
        let cases: [(u64, [u64; 3]); 3] = [
            (
                0,
                [0xE220_A839_7B1D_CDAF, 0x6E78_9E6A_A1B9_65F4, 0x06C4_5D18_8009_454F],
            ),
            (
                42,
                [0xBDD7_3226_2FEB_6E95, 0x28EF_E333_B266_F103, 0x4752_6757_130F_9F52],
            ),
            (
                0x0123_4567_89AB_CDEF,
                [0x157A_3807_A48F_AA9D, 0xD573_529B_34A1_D093, 0x2F90_B72E_996D_CCBE],
            ),
        ];
        for (seed, expect) in cases {
            let mut rng = SplitMix64::new(seed);
            for e in expect {
                assert_eq!(rng.next_u64(), e, "seed {seed:#x}");
            }
        }
    }

    #[test]
    fn derive_matches_stream_outputs() {
        let master = 0xDEAD_BEEF;
        let mut rng = SplitMix64::new(master);
        for k in 0..8 {
            assert_eq!(derive_seed(master, k), rng.next_u64());
        }
    }

    #[test]
    fn uniform_range_and_first_value() {
        let mut rng = SplitMix64::new(0);
        let u = rng.next_f64();
        assert!((u - 0.8833108082136426).abs() < 1e-15);
        for _ in 0..1000 {
            let v = rng.next_f64();
            assert!((0.0..1.0).contains(&v));
        }
    }

    #[test]
    fn derived_seeds_have_no_collisions() {
        let mut seen = std::collections::HashSet::new();
        for master in [0u64, 42, u64::MAX] {
            for k in 0..10_000 {
                assert!(seen.insert(derive_seed(master, k)));
            }
        }
    }

    #[test]
    fn normal_moments() {
        let mut rng = SplitMix64::new(7);
        let n = 200_000;
        let (mut sum, mut sum2) = (0.0, 0.0);
        for _ in 0..n {
            let z = rng.next_normal();
            sum += z;
            sum2 += z * z;
        }
        let mean = sum / n as f64;
        let var = sum2 / n as f64 - mean * mean;
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!((var - 1.0).abs() < 0.02, "var {var}");
    }
}
