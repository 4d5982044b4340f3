//! Packet arrival models and the three-class packet mix.
//!
//! Two arrival processes are provided per (ONU, direction) stream:
//!
//! * **Poisson**: per-cycle counts drawn from the exact Poisson law for the
//!   configured packet rate, with arrival offsets uniform in the cycle.
//! * **Self-similar**: the superposition of independent ON/OFF sources, the
//!   classic construction that yields long-range-dependent aggregate traffic
//!   with Hurst parameter `H`. A burst carries a Pareto-tailed (shape
//!   `3 - 2H`) integer number of packets emitted back to back at the
//!   source's peak rate, and OFF gaps are Pareto of the same shape. Both
//!   laws are clamped four to five decades above their scale (far beyond any
//!   horizon the simulator measures) and their scale parameters are
//!   calibrated so the configured mean burst size and duty cycle — and
//!   therefore the offered load — are hit exactly.
//!
//! Every packet draws a service class and a size from the shared mix: a
//! fixed-size constant-rate class plus two uniform-size classes. Class draw
//! probabilities are per *packet*, derived from the configured per-*byte*
//! shares (probability proportional to share / mean size), so the byte split
//! comes out as configured.

use crate::error::{Error, Result};
use crate::rng::Sampler;
use alloc::format;
use alloc::vec::Vec;

/// Number of service classes; index 0 has the highest priority.
pub const NUM_CLASSES: usize = 3;

/// One service class of the mix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServiceClass {
    /// Priority index; 0 is served first.
    pub index: usize,
    /// Per-packet delivery delay threshold in seconds.
    pub delay_threshold_s: f64,
    /// Fraction of offered bytes carried by this class.
    pub byte_share: f64,
}

/// Which arrival process a stream uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrafficModel {
    Poisson,
    SelfSimilar,
}

/// Traffic settings for one direction of one ONU.
#[derive(Debug, Clone, PartialEq)]
pub struct TrafficConfig {
    pub model: TrafficModel,
    /// Offered load in bits/s (0 disables the stream).
    pub load_bps: f64,
    /// Per-class byte shares; must sum to 1.
    pub byte_shares: [f64; NUM_CLASSES],
    /// Fixed packet size of class 0, bytes.
    pub cbr_size_bytes: u32,
    /// Uniform size range of classes 1 and 2, bytes, inclusive.
    pub size_min_bytes: u32,
    pub size_max_bytes: u32,
    /// Hurst parameter of the self-similar model, in (0.5, 1).
    pub hurst: f64,
    /// Number of superposed ON/OFF sources.
    pub num_sources: u32,
    /// Fraction of time each ON/OFF source spends ON. Lower values mean
    /// burstier traffic (higher peak rate for the same mean load).
    pub on_duty: f64,
    /// Mean packets per ON period.
    pub burst_packets: f64,
}

impl Default for TrafficConfig {
    fn default() -> Self {
        TrafficConfig {
            model: TrafficModel::SelfSimilar,
            load_bps: 0.0,
            byte_shares: [0.2, 0.4, 0.4],
            cbr_size_bytes: 70,
            size_min_bytes: 64,
            size_max_bytes: 1518,
            hurst: 0.8,
            num_sources: 32,
            on_duty: 0.01,
            burst_packets: 20.0,
        }
    }
}

impl TrafficConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.load_bps >= 0.0) || !self.load_bps.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "load_bps must be finite and >= 0, got {}",
                self.load_bps
            )));
        }
        let share_sum: f64 = self.byte_shares.iter().sum();
        if self.byte_shares.iter().any(|&s| !(0.0..=1.0).contains(&s))
            || (share_sum - 1.0).abs() > 1e-9
        {
            return Err(Error::InvalidArgument(format!(
                "byte_shares must lie in [0,1] and sum to 1, got {:?}",
                self.byte_shares
            )));
        }
        if self.cbr_size_bytes == 0 {
            return Err(Error::InvalidArgument("cbr_size_bytes must be > 0".into()));
        }
        if self.size_min_bytes == 0 || self.size_min_bytes > self.size_max_bytes {
            return Err(Error::InvalidArgument(format!(
                "packet size range invalid: [{}, {}]",
                self.size_min_bytes, self.size_max_bytes
            )));
        }
        if self.model == TrafficModel::SelfSimilar {
            if !(self.hurst > 0.5 && self.hurst < 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "hurst must lie in (0.5, 1), got {}",
                    self.hurst
                )));
            }
            if self.num_sources == 0 {
                return Err(Error::InvalidArgument("num_sources must be >= 1".into()));
            }
            if !(self.on_duty > 0.0 && self.on_duty < 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "on_duty must lie in (0, 1), got {}",
                    self.on_duty
                )));
            }
            if !(self.burst_packets >= 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "burst_packets must be >= 1, got {}",
                    self.burst_packets
                )));
            }
        }
        Ok(())
    }

    /// Per-packet class probabilities and mean sizes implied by the byte
    /// shares.
    pub fn class_mix(&self) -> ClassMix {
        let mean_bytes = [
            self.cbr_size_bytes as f64,
            (self.size_min_bytes as f64 + self.size_max_bytes as f64) / 2.0,
            (self.size_min_bytes as f64 + self.size_max_bytes as f64) / 2.0,
        ];
        // Packets per byte-share unit: share_i / mean_i, normalized.
        let mut probs = [0.0f64; NUM_CLASSES];
        let mut norm = 0.0;
        for i in 0..NUM_CLASSES {
            probs[i] = self.byte_shares[i] / mean_bytes[i];
            norm += probs[i];
        }
        for p in probs.iter_mut() {
            *p /= norm;
        }
        let mean_packet_bytes = (0..NUM_CLASSES).map(|i| probs[i] * mean_bytes[i]).sum();
        ClassMix {
            probs,
            cum: [probs[0], probs[0] + probs[1]],
            mean_class_bytes: mean_bytes,
            mean_packet_bytes,
            cbr_size_bytes: self.cbr_size_bytes,
            size_min_bytes: self.size_min_bytes,
            size_max_bytes: self.size_max_bytes,
        }
    }

    /// Mean packet rate implied by the load and the mix, packets/s.
    pub fn packet_rate_pps(&self) -> f64 {
        if self.load_bps <= 0.0 {
            0.0
        } else {
            self.load_bps / (8.0 * self.class_mix().mean_packet_bytes)
        }
    }
}

/// Derived per-packet view of the class mix.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassMix {
    /// Per-packet probability of each class.
    pub probs: [f64; NUM_CLASSES],
    cum: [f64; 2],
    /// Mean packet size per class, bytes.
    pub mean_class_bytes: [f64; NUM_CLASSES],
    /// Mean packet size of the mix, bytes.
    pub mean_packet_bytes: f64,
    cbr_size_bytes: u32,
    size_min_bytes: u32,
    size_max_bytes: u32,
}

/// Draw one packet's class and size from the mix.
pub fn draw_class_and_size(rng: &mut Sampler, mix: &ClassMix) -> (u8, u32) {
    let u = rng.u01();
    if u < mix.cum[0] {
        (0, mix.cbr_size_bytes)
    } else {
        let class = if u < mix.cum[1] { 1 } else { 2 };
        let size = rng.uniform_u64(mix.size_min_bytes as u64, mix.size_max_bytes as u64) as u32;
        (class, size)
    }
}

/// One generated packet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PacketRecord {
    /// Absolute arrival time, seconds.
    pub arrival_s: f64,
    pub size_bytes: u32,
    pub class: u8,
}

/// Stateful arrival generator for one (ONU, direction) stream.
#[derive(Debug, Clone)]
pub struct TrafficGenerator {
    cycle_s: f64,
    rng: Sampler,
    mix: ClassMix,
    kind: GenKind,
}

#[derive(Debug, Clone)]
enum GenKind {
    /// Zero offered load.
    Idle,
    Poisson {
        rate_pps: f64,
    },
    SelfSimilar {
        sources: Vec<OnOffSource>,
        /// Peak emission rate of one source while ON, bits/s.
        r_on_bps: f64,
        /// Pareto scale of the per-burst packet count.
        xm_burst: f64,
        /// Pareto scale of OFF periods, seconds.
        xm_off: f64,
        /// Clamp on OFF period lengths, seconds.
        off_cap_s: f64,
        /// Pareto shape, 3 - 2H.
        alpha: f64,
    },
}

/// Upper clamp on the packets of one burst; the tail this removes sits far
/// beyond every time scale the simulator measures, and the burst-size
/// calibration accounts for it exactly.
const BURST_CAP_PKTS: u64 = 100_000;

/// OFF periods are clamped at this multiple of their Pareto scale.
const OFF_CAP_FACTOR: f64 = 1e4;

#[derive(Debug, Clone, Copy)]
struct OnOffSource {
    /// Packets still to emit in the current burst; 0 while OFF.
    burst_left: u64,
    /// Next packet start while in a burst, seconds.
    next_emit_s: f64,
    /// When the current OFF period ends, seconds; valid while OFF.
    on_at_s: f64,
}

/// Expected value of `min(ceil(X), cap)` for X ~ Pareto(xm, alpha), via the
/// tail-sum identity: 1 + sum over j = 1..cap-1 of P(X > j).
fn expected_clamped_burst(xm: f64, alpha: f64, cap: u64, tail_sum: f64) -> f64 {
    // tail_sum = sum over j = 1..cap-1 of j^(-alpha), precomputed.
    let whole = libm::floor(xm) as u64; // P(X > j) = 1 for j < xm
    let whole = whole.min(cap - 1);
    let mut partial = tail_sum;
    for j in 1..=whole {
        partial -= libm::pow(j as f64, -alpha);
    }
    1.0 + whole as f64 + libm::pow(xm, alpha) * partial
}

/// Pareto scale for the burst packet count whose clamped-ceiling mean equals
/// `target`, found by bisection (the mean is increasing in the scale).
fn calibrate_burst_scale(target: f64, alpha: f64, cap: u64) -> f64 {
    let tail_sum: f64 = (1..cap).map(|j| libm::pow(j as f64, -alpha)).sum();
    let mut lo = 0.0f64;
    let mut hi = 2.0 * target + 2.0;
    while expected_clamped_burst(hi, alpha, cap, tail_sum) < target {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if expected_clamped_burst(mid, alpha, cap, tail_sum) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

impl TrafficGenerator {
    /// Build the generator for stream `stream` of the family keyed by `seed`.
    pub fn new(cfg: &TrafficConfig, cycle_s: f64, seed: u64, stream: u64) -> Result<Self> {
        cfg.validate()?;
        if !(cycle_s > 0.0) {
            return Err(Error::InvalidArgument(format!("cycle_s must be > 0, got {cycle_s}")));
        }
        let mix = cfg.class_mix();
        let mut rng = Sampler::new(seed, stream);
        let kind = if cfg.load_bps <= 0.0 {
            GenKind::Idle
        } else {
            match cfg.model {
                TrafficModel::Poisson => GenKind::Poisson { rate_pps: cfg.packet_rate_pps() },
                TrafficModel::SelfSimilar => {
                    let alpha = 3.0 - 2.0 * cfg.hurst;
                    let per_source_bps = cfg.load_bps / cfg.num_sources as f64;
                    let r_on_bps = per_source_bps / cfg.on_duty;
                    let xm_burst = calibrate_burst_scale(cfg.burst_packets, alpha, BURST_CAP_PKTS);
                    // A burst of the mean packet count lasts this long.
                    let mean_on_s = cfg.burst_packets * 8.0 * mix.mean_packet_bytes / r_on_bps;
                    let mean_off_s = mean_on_s * (1.0 - cfg.on_duty) / cfg.on_duty;
                    // Scale of the clamped Pareto whose mean is mean_off_s:
                    // E[min(X, F * xm)] = xm * (alpha - F^(1-alpha)) / (alpha - 1).
                    let clamped_factor =
                        (alpha - libm::pow(OFF_CAP_FACTOR, 1.0 - alpha)) / (alpha - 1.0);
                    let xm_off = mean_off_s / clamped_factor;
                    let off_cap_s = OFF_CAP_FACTOR * xm_off;
                    let sources = (0..cfg.num_sources)
                        .map(|_| OnOffSource {
                            burst_left: 0,
                            next_emit_s: 0.0,
                            on_at_s: rng.pareto(xm_off, alpha).min(off_cap_s),
                        })
                        .collect();
                    GenKind::SelfSimilar { sources, r_on_bps, xm_burst, xm_off, off_cap_s, alpha }
                }
            }
        };
        Ok(TrafficGenerator { cycle_s, rng, mix, kind })
    }

    /// Fill `out` with the packets arriving during cycle `cycle`, replacing
    /// its contents. Arrival times are ascending and lie in
    /// `[cycle * cycle_s, (cycle + 1) * cycle_s)`.
    pub fn generate_into(&mut self, cycle: u64, out: &mut Vec<PacketRecord>) {
        out.clear();
        let t0 = cycle as f64 * self.cycle_s;
        let t1 = (cycle + 1) as f64 * self.cycle_s;
        match &mut self.kind {
            GenKind::Idle => {}
            GenKind::Poisson { rate_pps } => {
                let n = self.rng.poisson(*rate_pps * self.cycle_s);
                for _ in 0..n {
                    let offset = self.rng.u01() * self.cycle_s;
                    out.push(PacketRecord { arrival_s: t0 + offset, size_bytes: 0, class: 0 });
                }
                out.sort_unstable_by(|a, b| a.arrival_s.partial_cmp(&b.arrival_s).unwrap());
                for p in out.iter_mut() {
                    let (class, size) = draw_class_and_size(&mut self.rng, &self.mix);
                    p.class = class;
                    p.size_bytes = size;
                }
            }
            GenKind::SelfSimilar { sources, r_on_bps, xm_burst, xm_off, off_cap_s, alpha } => {
                for src in sources.iter_mut() {
                    loop {
                        if src.burst_left == 0 {
                            if src.on_at_s >= t1 {
                                break;
                            }
                            let draw = self.rng.pareto(*xm_burst, *alpha);
                            src.burst_left =
                                (libm::ceil(draw) as u64).clamp(1, BURST_CAP_PKTS);
                            src.next_emit_s = src.on_at_s;
                        }
                        while src.burst_left > 0 && src.next_emit_s < t1 {
                            let (class, size) = draw_class_and_size(&mut self.rng, &self.mix);
                            out.push(PacketRecord {
                                arrival_s: src.next_emit_s,
                                size_bytes: size,
                                class,
                            });
                            src.next_emit_s += size as f64 * 8.0 / *r_on_bps;
                            src.burst_left -= 1;
                        }
                        if src.burst_left > 0 {
                            // The burst spills into the next cycle.
                            break;
                        }
                        // OFF starts where the last packet's emission ended.
                        src.on_at_s =
                            src.next_emit_s + self.rng.pareto(*xm_off, *alpha).min(*off_cap_s);
                    }
                }
                out.sort_unstable_by(|a, b| a.arrival_s.partial_cmp(&b.arrival_s).unwrap());
                // Sources emit into their own timelines; anything stamped
                // before this window belongs to a previous cycle only when
                // the caller skips cycles, which the engine never does.
                debug_assert!(out.iter().all(|p| p.arrival_s >= t0 && p.arrival_s < t1));
            }
        }
    }

    /// Convenience wrapper around [`TrafficGenerator::generate_into`].
    pub fn generate(&mut self, cycle: u64) -> Vec<PacketRecord> {
        let mut v = Vec::new();
        self.generate_into(cycle, &mut v);
        v
    }
}
