//! Deterministic random sampling on independent ChaCha8 streams.
//!
//! Every traffic source draws from its own counter-mode stream derived from
//! the master seed, so adding or reordering sources never perturbs another
//! source's draws, and a (seed, config) pair fully determines a run.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// One independent sampling stream.
#[derive(Debug, Clone)]
pub struct Sampler {
    rng: ChaCha8Rng,
}

impl Sampler {
    /// Stream `stream` of the generator family keyed by `seed`.
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Sampler { rng }
    }

    /// Uniform draw in [0, 1) with 53-bit resolution.
    pub fn u01(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in [lo, hi], both inclusive.
    pub fn uniform_u64(&mut self, lo: u64, hi: u64) -> u64 {
        debug_assert!(lo <= hi && hi - lo < u64::MAX);
        let span = (hi - lo + 1) as u128;
        lo + ((self.rng.next_u64() as u128 * span) >> 64) as u64
    }

    /// Poisson count with the given mean.
    ///
    /// Knuth's product method below mean 30, Hörmann's transformed rejection
    /// (PTRD) above it; both draw from the exact distribution.
    pub fn poisson(&mut self, mean: f64) -> u64 {
        if mean <= 0.0 {
            0
        } else if mean < 30.0 {
            self.poisson_knuth(mean)
        } else {
            self.poisson_ptrd(mean)
        }
    }

    fn poisson_knuth(&mut self, mean: f64) -> u64 {
        let limit = libm::exp(-mean);
        let mut k = 0u64;
        let mut p = 1.0f64;
        loop {
            p *= self.u01();
            if p <= limit {
                return k;
            }
            k += 1;
        }
    }

    fn poisson_ptrd(&mut self, mean: f64) -> u64 {
        let slam = libm::sqrt(mean);
        let loglam = libm::log(mean);
        let b = 0.931 + 2.53 * slam;
        let a = -0.059 + 0.02483 * b;
        let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
        let vr = 0.9277 - 3.6224 / (b - 2.0);
        const LOG_SQRT_2PI: f64 = 0.918_938_533_204_672_7;
        loop {
            let u;
            let mut v = self.u01();
            if v <= 0.86 * vr {
                u = v / vr - 0.43;
                return ((2.0 * a / (0.5 - libm::fabs(u)) + b) * u + mean + 0.445) as u64;
            }
            if v >= vr {
                u = self.u01() - 0.5;
            } else {
                let w = v / vr - 0.93;
                u = if w < 0.0 { -0.5 - w } else { 0.5 - w };
                v = self.u01() * vr;
            }
            let us = 0.5 - libm::fabs(u);
            if us < 0.013 && v > us {
                continue;
            }
            let kf = libm::floor((2.0 * a / us + b) * u + mean + 0.445);
            if kf < 0.0 {
                continue;
            }
            v = v * inv_alpha / (a / (us * us) + b);
            if kf >= 10.0 {
                let bound = (kf + 0.5) * libm::log(mean / kf) - mean - LOG_SQRT_2PI + kf
                    - (1.0 / 12.0 - 1.0 / (360.0 * kf * kf)) / kf;
                if libm::log(v * slam) <= bound {
                    return kf as u64;
                }
            } else {
                let bound = kf * loglam - mean - libm::lgamma(kf + 1.0);
                if libm::log(v) <= bound {
                    return kf as u64;
                }
            }
        }
    }

    /// Pareto draw with scale `xm` and shape `alpha`, by inverse transform.
    pub fn pareto(&mut self, xm: f64, alpha: f64) -> f64 {
        debug_assert!(xm > 0.0 && alpha > 0.0);
        let u = self.u01();
        xm * libm::pow(1.0 - u, -1.0 / alpha)
    }
}

/// Derive an unrelated 64-bit seed for e.g. sweep point `index`
/// (one SplitMix64 step keyed by the pair).
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn u01_is_in_unit_interval_with_sane_mean() {
        let mut s = Sampler::new(7, 0);
        let mut sum = 0.0;
        for _ in 0..100_000 {
            let u = s.u01();
            assert!((0.0..1.0).contains(&u));
            sum += u;
        }
        let mean = sum / 100_000.0;
        assert!((mean - 0.5).abs() < 0.005, "mean {mean}");
    }

    #[test]
    fn uniform_u64_covers_inclusive_range() {
        let mut s = Sampler::new(1, 1);
        let mut seen_lo = false;
        let mut seen_hi = false;
        for _ in 0..10_000 {
            let v = s.uniform_u64(64, 71);
            assert!((64..=71).contains(&v));
            seen_lo |= v == 64;
            seen_hi |= v == 71;
        }
        assert!(seen_lo && seen_hi);
    }

    #[test]
    fn poisson_small_mean_matches_pmf() {
        // Histogram against e^-1 / k! for mean 1.
        let mut s = Sampler::new(42, 3);
        let n = 200_000;
        let mut counts = [0u64; 8];
        for _ in 0..n {
            let k = s.poisson(1.0) as usize;
            counts[k.min(7)] += 1;
        }
        let e1 = libm::exp(-1.0);
        let expect = [e1, e1, e1 / 2.0, e1 / 6.0, e1 / 24.0, e1 / 120.0];
        for (k, &p) in expect.iter().enumerate() {
            let obs = counts[k] as f64 / n as f64;
            assert!(
                (obs - p).abs() < 4.0 * libm::sqrt(p * (1.0 - p) / n as f64) + 1e-4,
                "k={k}: obs {obs} vs {p}"
            );
        }
    }

    #[test]
    fn poisson_large_mean_moments() {
        // PTRD path: mean and variance of Poisson(200) within tight bounds.
        let mut s = Sampler::new(9, 5);
        let n = 200_000u64;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..n {
            let k = s.poisson(200.0) as f64;
            sum += k;
            sumsq += k * k;
        }
        let mean = sum / n as f64;
        let var = sumsq / n as f64 - mean * mean;
        // se(mean) = sqrt(200/n) ~ 0.032
        assert!((mean - 200.0).abs() < 0.2, "mean {mean}");
        assert!((var / 200.0 - 1.0).abs() < 0.03, "var {var}");
    }

    #[test]
    fn poisson_ptrd_and_knuth_agree_in_distribution() {
        // Both methods at mean 29.9/30.1: means should be indistinguishable.
        let mut a = Sampler::new(11, 0);
        let mut b = Sampler::new(11, 1);
        let n = 100_000u64;
        let (mut ma, mut mb) = (0.0, 0.0);
        for _ in 0..n {
            ma += a.poisson(29.9) as f64;
            mb += b.poisson(30.1) as f64;
        }
        ma /= n as f64;
        mb /= n as f64;
        assert!((ma - 29.9).abs() < 0.1, "knuth mean {ma}");
        assert!((mb - 30.1).abs() < 0.1, "ptrd mean {mb}");
    }

    #[test]
    fn pareto_median_matches_closed_form() {
        // Median is xm * 2^(1/alpha); robust against the heavy tail.
        let mut s = Sampler::new(5, 9);
        let mut draws: Vec<f64> = (0..100_001).map(|_| s.pareto(2.0, 1.4)).collect();
        draws.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
        let median = draws[50_000];
        let expect = 2.0 * libm::pow(2.0, 1.0 / 1.4);
        assert!((median / expect - 1.0).abs() < 0.02, "median {median} vs {expect}");
        assert!(draws[0] >= 2.0);
    }

    #[test]
    fn streams_are_independent_and_reproducible() {
        let mut a1 = Sampler::new(123, 4);
        let mut a2 = Sampler::new(123, 4);
        let mut b = Sampler::new(123, 5);
        let xs1: Vec<u64> = (0..32).map(|_| a1.rng.next_u64()).collect();
        let xs2: Vec<u64> = (0..32).map(|_| a2.rng.next_u64()).collect();
        let ys: Vec<u64> = (0..32).map(|_| b.rng.next_u64()).collect();
        assert_eq!(xs1, xs2);
        assert_ne!(xs1, ys);
    }

    #[test]
    fn derive_seed_spreads_indices() {
        let s0 = derive_seed(99, 0);
        let s1 = derive_seed(99, 1);
        let s2 = derive_seed(100, 0);
        assert_ne!(s0, s1);
        assert_ne!(s0, s2);
        // Stable across calls.
        assert_eq!(s0, derive_seed(99, 0));
    }
}
