//! Cycle-driven simulation of one PON tree: a head end serving N ONUs whose
//! receiver and transmitter machines doze independently.
//!
//! Each polling cycle runs through a fixed phase order:
//!
//! 1. arrivals are generated for both directions; upstream packets join the
//!    ONUs' class queues,
//! 2. every ONU whose transmitter is not asleep reports its whole backlog,
//! 3. the head end folds mid-stretch wake reports into its replicas, audits
//!    replica agreement, schedules downstream deliveries (sleeping receivers
//!    are buffered for), and lays out the upstream cycle: sleeping receivers
//!    get share-capped grants pinned one cycle after their previous start,
//!    awake transmitters split the remaining capacity in proportion to their
//!    requests,
//! 4. ONUs transmit in strict priority order within their granted windows;
//!    downstream deliveries complete at the cycle's end,
//! 5. the cycle's (receiver, transmitter) state pair is tallied per ONU:
//!    energy is, by construction, exactly the tally weighted by the power
//!    grid and the cycle length,
//! 6. both machines step from what the cycle exposed, and the head end's
//!    replicas step from protocol observables alone,
//! 7. packet and byte conservation is audited across queues and buffers.
//!
//! Within a cycle the byte-position of a grant stands in for time: a packet
//! "finishes" where its last byte sits in the cycle, never earlier than its
//! own arrival plus serialization. Sub-cycle wake overheads are absorbed
//! into the whole-cycle states, which is exactly the regime where the
//! whole-cycle power grid is meaningful.

use crate::analysis::{predict_upstream, PkNumerator};
use crate::error::{Error, Result};
use crate::fsm::{
    mirror_observe_wake, mirror_predict, rx_step, tx_step, FsmConfig, MirrorObs, MirrorState,
    RxObs, RxState, TxObs, TxState,
};
use crate::power::{joint_index, PowerProfile, RxKind, TxKind};
use crate::sched::{
    buffer_downstream, collect_reports, dba_allocate, deliver_downstream, home_position,
    layout_grants, rx_sleep_allocate, GrantSeg, OltBook,
};
use crate::traffic::{PacketRecord, TrafficConfig, TrafficGenerator, NUM_CLASSES};
use alloc::collections::VecDeque;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

/// Full description of one simulation run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub n_onus: usize,
    pub ds_rate_bps: f64,
    pub us_rate_bps: f64,
    /// Polling cycle length, seconds.
    pub cycle_s: f64,
    /// One-way propagation delay added to every delivery, seconds.
    pub propagation_s: f64,
    /// Transceiver wake transient, seconds; must fit inside one cycle, where
    /// it is absorbed by the whole-cycle state accounting.
    pub wake_overhead_s: f64,
    pub warmup_cycles: u64,
    pub measured_cycles: u64,
    pub seed: u64,
    pub fsm: FsmConfig,
    /// Per-class delivery deadlines, seconds, non-decreasing.
    pub thresholds_s: [f64; NUM_CLASSES],
    pub ds_traffic: TrafficConfig,
    pub us_traffic: TrafficConfig,
    pub power: PowerProfile,
    /// Wake a sleeping transmitter early when a queued deadline approaches.
    pub deadline_wake: bool,
    /// How many cycles before a deadline the early wake fires.
    pub deadline_margin_cycles: u32,
    pub pk_numerator: PkNumerator,
    /// Upstream bytes consumed by each report message.
    pub report_bytes: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n_onus: 32,
            ds_rate_bps: 10e9,
            us_rate_bps: 2.5e9,
            cycle_s: 2e-3,
            propagation_s: 0.0,
            wake_overhead_s: 0.0,
            warmup_cycles: 1000,
            measured_cycles: 20_000,
            seed: 1,
            fsm: FsmConfig::default(),
            thresholds_s: [0.1, 1.0, 50.0],
            ds_traffic: TrafficConfig { load_bps: 15.625e6, ..TrafficConfig::default() },
            us_traffic: TrafficConfig { load_bps: 3.906_25e6, ..TrafficConfig::default() },
            power: PowerProfile::default(),
            deadline_wake: true,
            deadline_margin_cycles: 4,
            pk_numerator: PkNumerator::AllClasses,
            report_bytes: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_onus == 0 {
            return Err(Error::InvalidArgument("n_onus must be >= 1".into()));
        }
        if !(self.ds_rate_bps > 0.0) || !self.ds_rate_bps.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "ds_rate_bps must be finite and > 0, got {}",
                self.ds_rate_bps
            )));
        }
        if !(self.us_rate_bps > 0.0) || !self.us_rate_bps.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "us_rate_bps must be finite and > 0, got {}",
                self.us_rate_bps
            )));
        }
        if !(self.cycle_s > 0.0) || !self.cycle_s.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "cycle_s must be finite and > 0, got {}",
                self.cycle_s
            )));
        }
        if !(self.propagation_s >= 0.0) || !self.propagation_s.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "propagation_s must be finite and >= 0, got {}",
                self.propagation_s
            )));
        }
        if !(self.wake_overhead_s >= 0.0) || self.wake_overhead_s >= self.cycle_s {
            return Err(Error::InvalidArgument(format!(
                "wake_overhead_s must lie in [0, cycle_s), got {}",
                self.wake_overhead_s
            )));
        }
        if self.measured_cycles == 0 {
            return Err(Error::InvalidArgument("measured_cycles must be >= 1".into()));
        }
        if self.warmup_cycles >= self.measured_cycles {
            return Err(Error::InvalidArgument(format!(
                "warmup_cycles must stay below measured_cycles, got {} >= {}",
                self.warmup_cycles, self.measured_cycles
            )));
        }
        self.fsm.validate().map_err(Error::InvalidArgument)?;
        if self.thresholds_s.iter().any(|t| !(*t > 0.0) || !t.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "thresholds_s must be finite and > 0, got {:?}",
                self.thresholds_s
            )));
        }
        if self.thresholds_s.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidArgument(format!(
                "thresholds_s must be non-decreasing across classes, got {:?}",
                self.thresholds_s
            )));
        }
        if self.deadline_margin_cycles == 0 {
            return Err(Error::InvalidArgument("deadline_margin_cycles must be >= 1".into()));
        }
        self.ds_traffic.validate()?;
        self.us_traffic.validate()?;
        self.power.validate()?;
        let us_cap = bytes_per_cycle(self.us_rate_bps, self.cycle_s);
        if us_cap < self.n_onus as u64 {
            return Err(Error::InvalidArgument(format!(
                "upstream capacity of {us_cap} bytes/cycle cannot host {} ONUs",
                self.n_onus
            )));
        }
        if bytes_per_cycle(self.ds_rate_bps, self.cycle_s) == 0 {
            return Err(Error::InvalidArgument(
                "downstream capacity must be at least one byte per cycle".into(),
            ));
        }
        Ok(())
    }
}

/// Whole bytes one direction carries per cycle.
fn bytes_per_cycle(rate_bps: f64, cycle_s: f64) -> u64 {
    (rate_bps * cycle_s / 8.0) as u64
}

/// Everything a finished run reports.
#[derive(Debug, Clone, PartialEq)]
pub struct SimMetrics {
    pub measured_cycles: u64,
    pub measured_s: f64,
    /// Offered loads measured over the window, bits/s, whole tree.
    pub offered_ds_bps: f64,
    pub offered_us_bps: f64,
    pub utilization_ds: f64,
    pub utilization_us: f64,
    pub energy_j: f64,
    /// Energy of the same window with every ONU fully awake throughout.
    pub baseline_j: f64,
    pub energy_saving: f64,
    /// The saving fell outside [0, 1] and was clamped.
    pub saving_clamped: bool,
    /// Fraction of ONU-cycles spent in each (receiver, transmitter) state
    /// pair, receiver-major order.
    pub occupancy: [f64; 9],
    pub delay_ds_mean_s: f64,
    pub delay_ds_p95_s: f64,
    pub delay_ds_class_mean_s: [f64; NUM_CLASSES],
    pub delay_us_class_mean_s: [f64; NUM_CLASSES],
    pub delay_us_class_p95_s: [f64; NUM_CLASSES],
    pub delay_us_class_max_s: [f64; NUM_CLASSES],
    /// Upstream deliveries that missed their class deadline.
    pub threshold_violations: [u64; NUM_CLASSES],
    /// Mean transmitter sleep stretch, seconds (0 when none ended).
    pub tx_sleep_mean_s: f64,
    pub tx_sleep_episodes: u64,
    /// Whole-cycle sleep allowance the delay model granted the transmitters.
    pub tx_budget_cycles: u32,
    pub pkts_generated: u64,
    pub pkts_delivered: u64,
    /// Packets still queued or buffered when the run ended.
    pub pkts_residual: u64,
    /// ONU-cycles where a head-end replica disagreed with its machine.
    pub mirror_divergences: u64,
    /// ONU-cycles where the two ends disagreed on a pinned grant start.
    pub ts_divergences: u64,
    /// Cycles where a packet or byte count failed to balance.
    pub conservation_violations: u64,
    /// The offered load exceeded capacity or the backlog kept growing.
    pub saturated: bool,
}

/// Energy saving against the always-awake baseline, clamped to [0, 1];
/// the flag reports whether clamping changed the value.
pub fn energy_saving(energy_j: f64, baseline_j: f64) -> (f64, bool) {
    if !(baseline_j > 0.0) {
        return (0.0, true);
    }
    let raw = 1.0 - energy_j / baseline_j;
    if (0.0..=1.0).contains(&raw) {
        (raw, false)
    } else {
        (raw.clamp(0.0, 1.0), true)
    }
}

/// Log-spaced delay histogram, 128 buckets per decade from 100 ns up.
struct LogHist {
    counts: Vec<u64>,
    total: u64,
}

const HIST_FLOOR_S: f64 = 1e-7;
const HIST_PER_DECADE: f64 = 128.0;
const HIST_DECADES: usize = 11;

impl LogHist {
    fn new() -> Self {
        LogHist { counts: vec![0; (HIST_PER_DECADE as usize) * HIST_DECADES], total: 0 }
    }

    fn add(&mut self, v: f64) {
        let last = self.counts.len() - 1;
        let idx = if v <= HIST_FLOOR_S {
            0
        } else {
            let b = libm::log10(v / HIST_FLOOR_S) * HIST_PER_DECADE;
            if b >= last as f64 {
                last
            } else {
                b as usize
            }
        };
        self.counts[idx] += 1;
        self.total += 1;
    }

    /// Geometric-midpoint quantile estimate; 0 when empty.
    fn quantile(&self, q: f64) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        let target = (libm::ceil(q * self.total as f64) as u64).clamp(1, self.total);
        let mut cum = 0u64;
        for (i, &c) in self.counts.iter().enumerate() {
            cum += c;
            if cum >= target {
                return HIST_FLOOR_S * libm::pow(10.0, (i as f64 + 0.5) / HIST_PER_DECADE);
            }
        }
        0.0
    }
}

/// Running mean / max / histogram of one delay population.
struct DelayStats {
    sum: f64,
    n: u64,
    max: f64,
    hist: LogHist,
}

impl DelayStats {
    fn new() -> Self {
        DelayStats { sum: 0.0, n: 0, max: 0.0, hist: LogHist::new() }
    }

    fn record(&mut self, v: f64) {
        self.sum += v;
        self.n += 1;
        if v > self.max {
            self.max = v;
        }
        self.hist.add(v);
    }

    fn mean(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.sum / self.n as f64
        }
    }
}

/// Cursor over one ONU's granted windows; positions are cycle-relative bytes.
struct SegWalk<'a> {
    segs: &'a [GrantSeg],
    idx: usize,
    used: u64,
}

impl<'a> SegWalk<'a> {
    fn new(segs: &'a [GrantSeg]) -> Self {
        SegWalk { segs, idx: 0, used: 0 }
    }

    /// Consume `bytes` of granted space and return the byte position right
    /// after the last one consumed. The caller never asks for more than the
    /// grant holds.
    fn advance(&mut self, bytes: u64) -> u64 {
        let mut rem = bytes;
        loop {
            let seg = self.segs[self.idx];
            let free = seg.bytes - self.used;
            if rem < free {
                self.used += rem;
                return seg.pos + self.used;
            }
            rem -= free;
            self.idx += 1;
            self.used = 0;
            if rem == 0 {
                return seg.pos + seg.bytes;
            }
        }
    }
}

/// One ONU's ground truth.
struct OnuState {
    tx: TxState,
    rx: RxState,
    queues: [VecDeque<PacketRecord>; NUM_CLASSES],
    queue_bytes: u64,
    queue_pkts: u64,
    /// Requested-but-unserved bytes as of the last report.
    leftover: u64,
    /// Previous granted start as (cycle, byte position).
    t_ps: (u64, u64),
}

impl OnuState {
    fn new() -> Self {
        OnuState {
            tx: TxState::Awake,
            rx: RxState::Awake,
            queues: core::array::from_fn(|_| VecDeque::new()),
            queue_bytes: 0,
            queue_pkts: 0,
            leftover: 0,
            t_ps: (0, 0),
        }
    }
}

/// Earliest delivery deadline over the queue heads; infinity when empty.
fn nearest_deadline_s(onu: &OnuState, thresholds_s: &[f64; NUM_CLASSES]) -> f64 {
    let mut nearest = f64::INFINITY;
    for c in 0..NUM_CLASSES {
        if let Some(p) = onu.queues[c].front() {
            let d = p.arrival_s + thresholds_s[c];
            if d < nearest {
                nearest = d;
            }
        }
    }
    nearest
}

/// Run one simulation to completion.
pub fn run_simulation(cfg: &SimConfig) -> Result<SimMetrics> {
    cfg.validate()?;
    let n = cfg.n_onus;
    let cycle = cfg.cycle_s;
    let us_cap = bytes_per_cycle(cfg.us_rate_bps, cycle);
    let ds_cap = bytes_per_cycle(cfg.ds_rate_bps, cycle);
    let margin_s = cfg.deadline_margin_cycles as f64 * cycle;

    // The transmitter sleep allowance both ends derive from the delay model.
    let prediction = predict_upstream(
        &cfg.us_traffic,
        &cfg.thresholds_s,
        cfg.us_rate_bps,
        cfg.propagation_s,
        cycle,
        cfg.pk_numerator,
    )?;
    let budget_cycles = prediction.budget.cycles;

    let mut us_gen = Vec::with_capacity(n);
    let mut ds_gen = Vec::with_capacity(n);
    for i in 0..n {
        us_gen.push(TrafficGenerator::new(&cfg.us_traffic, cycle, cfg.seed, (i as u64) * 2)?);
        ds_gen.push(TrafficGenerator::new(&cfg.ds_traffic, cycle, cfg.seed, (i as u64) * 2 + 1)?);
    }

    let mut onus: Vec<OnuState> = (0..n).map(|_| OnuState::new()).collect();
    let mut mirrors = vec![MirrorState::new(); n];
    let mut book = OltBook::new(n, us_cap, ds_cap);

    // Per-cycle scratch.
    let mut us_arrivals: Vec<Vec<PacketRecord>> = vec![Vec::new(); n];
    let mut ds_arrivals: Vec<Vec<PacketRecord>> = vec![Vec::new(); n];
    let mut delivered: Vec<Vec<PacketRecord>> = vec![Vec::new(); n];
    let mut tx_sleeping = vec![false; n];
    let mut queued_bytes = vec![0u64; n];
    let mut requested: Vec<Option<u64>> = vec![None; n];
    let mut ds_requests = vec![0u64; n];
    let mut dba_requests = vec![0u64; n];
    let mut grant_bytes = vec![0u64; n];
    let mut pinned: Vec<Option<u64>> = vec![None; n];
    let mut transmitted = vec![0u64; n];
    let mut olt_grant: Vec<Option<(u64, u64)>> = vec![None; n];
    let mut onu_expect: Vec<Option<(u64, u64)>> = vec![None; n];

    // Counters.
    let mut occupancy_counts = [0u64; 9];
    let mut us_gen_pkts = 0u64;
    let mut us_gen_bytes = 0u64;
    let mut ds_gen_pkts = 0u64;
    let mut ds_gen_bytes = 0u64;
    let mut us_del_pkts = 0u64;
    let mut us_del_bytes = 0u64;
    let mut ds_del_pkts = 0u64;
    let mut ds_del_bytes = 0u64;
    let mut measured_us_bytes = 0u64;
    let mut measured_ds_bytes = 0u64;
    let mut violations = [0u64; NUM_CLASSES];
    let mut episodes = 0u64;
    let mut episode_cycles = 0u64;
    let mut mirror_divergences = 0u64;
    let mut ts_divergences = 0u64;
    let mut conservation_violations = 0u64;
    let mut us_stats: [DelayStats; NUM_CLASSES] = core::array::from_fn(|_| DelayStats::new());
    let mut ds_stats: [DelayStats; NUM_CLASSES] = core::array::from_fn(|_| DelayStats::new());
    let mut ds_all = DelayStats::new();

    let horizon = cfg.warmup_cycles + cfg.measured_cycles;
    for t in 0..horizon {
        let measuring = t >= cfg.warmup_cycles;
        let cycle_start = t as f64 * cycle;
        let cycle_end = (t + 1) as f64 * cycle;

        // (1) Arrivals; upstream joins the ONU queues immediately.
        for i in 0..n {
            us_gen[i].generate_into(t, &mut us_arrivals[i]);
            ds_gen[i].generate_into(t, &mut ds_arrivals[i]);
            for p in &ds_arrivals[i] {
                ds_gen_pkts += 1;
                ds_gen_bytes += p.size_bytes as u64;
                if measuring {
                    measured_ds_bytes += p.size_bytes as u64;
                }
            }
            let o = &mut onus[i];
            for p in us_arrivals[i].drain(..) {
                us_gen_pkts += 1;
                us_gen_bytes += p.size_bytes as u64;
                if measuring {
                    measured_us_bytes += p.size_bytes as u64;
                }
                o.queue_bytes += p.size_bytes as u64;
                o.queue_pkts += 1;
                o.queues[p.class as usize].push_back(p);
            }
        }

        // (2) Reports from every transmitter that is not asleep.
        for i in 0..n {
            tx_sleeping[i] = onus[i].tx.is_sleep();
            queued_bytes[i] = onus[i].queue_bytes;
            requested[i] = None;
        }
        let reports = collect_reports(t, &tx_sleeping, &queued_bytes);
        for r in &reports {
            requested[r.onu] = Some(r.requested_bytes);
        }

        // (3) Head end. A report from a replica held asleep is a deadline
        // wake; fold it in before anything consults the replicas.
        for i in 0..n {
            if mirrors[i].tx.is_sleep() && requested[i].is_some() {
                mirror_observe_wake(&mut mirrors[i]);
            }
        }
        for i in 0..n {
            let m = &mirrors[i];
            let o = &onus[i];
            if m.rx != o.rx || m.tx != o.tx || m.leftover != o.leftover {
                mirror_divergences += 1;
            }
        }

        // Downstream: absorb arrivals, split capacity over non-sleeping
        // receivers in proportion to their head-end backlogs, deliver FIFO.
        for i in 0..n {
            delivered[i].clear();
            buffer_downstream(&mut book, i, &mut ds_arrivals[i]);
            ds_requests[i] = if mirrors[i].rx.kind() == RxKind::Sleep {
                0
            } else {
                book.ds_buffer_bytes[i]
            };
        }
        let ds_shares = dba_allocate(&ds_requests, ds_cap);
        for i in 0..n {
            if ds_shares[i] > 0 {
                deliver_downstream(&mut book, i, ds_shares[i], &mut delivered[i]);
            }
        }

        // Upstream: pinned share-capped grants for sleeping receivers first,
        // then the flexible split of what remains.
        let mut sleeper_total = 0u64;
        for i in 0..n {
            pinned[i] = None;
            grant_bytes[i] = 0;
            dba_requests[i] = 0;
            olt_grant[i] = None;
            let tx_awake = mirrors[i].tx == TxState::Awake;
            if mirrors[i].rx.kind() == RxKind::Sleep {
                if let Some((pos, bytes)) =
                    rx_sleep_allocate(&mut book, i, requested[i].unwrap_or(0), tx_awake, t)
                {
                    pinned[i] = Some(pos);
                    grant_bytes[i] = bytes;
                    sleeper_total += bytes;
                    olt_grant[i] = Some((t, pos));
                }
            } else if tx_awake {
                dba_requests[i] = requested[i].unwrap_or(0);
            }
        }
        let report_overhead = reports.len() as u64 * cfg.report_bytes;
        let flex_cap = us_cap.saturating_sub(sleeper_total).saturating_sub(report_overhead);
        let flex = dba_allocate(&dba_requests, flex_cap);
        for i in 0..n {
            if pinned[i].is_none() {
                grant_bytes[i] = flex[i];
            }
        }
        let segs = layout_grants(&grant_bytes, &pinned, us_cap)?;

        // The ONU side tracks the pinned start it is owed from its own
        // state alone; any disagreement with the issued grant is counted.
        for i in 0..n {
            onu_expect[i] = None;
            let o = &mut onus[i];
            if o.rx.kind() == RxKind::Sleep {
                o.t_ps.0 += 1;
                if o.tx == TxState::Awake {
                    onu_expect[i] = Some(o.t_ps);
                }
            }
        }
        for i in 0..n {
            if onu_expect[i] != olt_grant[i] || onus[i].t_ps != book.t_ps[i] {
                ts_divergences += 1;
            }
        }

        // (4) Upstream transmission: strict priority, FIFO within class,
        // whole packets, stopping at the first head that no longer fits.
        for i in 0..n {
            transmitted[i] = 0;
            let total_granted: u64 = segs[i].iter().map(|s| s.bytes).sum();
            if total_granted == 0 || onus[i].queue_pkts == 0 {
                continue;
            }
            let mut walk = SegWalk::new(&segs[i]);
            let mut budget = total_granted;
            let o = &mut onus[i];
            loop {
                let Some(class) = (0..NUM_CLASSES).find(|&c| !o.queues[c].is_empty()) else {
                    break;
                };
                let size = o.queues[class].front().unwrap().size_bytes as u64;
                if size > budget {
                    break;
                }
                let p = o.queues[class].pop_front().unwrap();
                budget -= size;
                o.queue_bytes -= size;
                o.queue_pkts -= 1;
                transmitted[i] += size;
                us_del_pkts += 1;
                us_del_bytes += size;
                let end_pos = walk.advance(size);
                let finish_s = cycle_start + end_pos as f64 * 8.0 / cfg.us_rate_bps;
                let serial_s = size as f64 * 8.0 / cfg.us_rate_bps;
                let completion_s = finish_s.max(p.arrival_s + serial_s) + cfg.propagation_s;
                if measuring {
                    let delay = completion_s - p.arrival_s;
                    us_stats[class].record(delay);
                    if delay > cfg.thresholds_s[class] {
                        violations[class] += 1;
                    }
                }
            }
        }

        // Downstream deliveries complete at the cycle's end.
        for i in 0..n {
            for p in &delivered[i] {
                ds_del_pkts += 1;
                ds_del_bytes += p.size_bytes as u64;
                if measuring {
                    let delay = cycle_end + cfg.propagation_s - p.arrival_s;
                    ds_stats[p.class as usize].record(delay);
                    ds_all.record(delay);
                }
            }
        }

        // (5) State occupancy in force during this cycle.
        if measuring {
            for o in &onus {
                occupancy_counts[joint_index(o.rx.kind(), o.tx.kind())] += 1;
            }
        }

        // (6) Step the machines into the next cycle; the replicas step from
        // protocol observables alone.
        for i in 0..n {
            let reporting = requested[i].is_some();
            let req = requested[i].unwrap_or(0);
            let o = &mut onus[i];
            let arrived_visible = reporting && req > o.leftover;
            let queue_empty = o.queue_pkts == 0;
            let deadline_near = cfg.deadline_wake
                && o.tx.is_sleep()
                && nearest_deadline_s(o, &cfg.thresholds_s) < cycle_end + margin_s;
            let old_tx = o.tx;
            o.tx = tx_step(
                old_tx,
                TxObs { arrived: arrived_visible, queue_empty, deadline_near },
                budget_cycles,
                &cfg.fsm,
            );
            if reporting {
                o.leftover = req - transmitted[i];
            }
            if !o.tx.is_sleep() {
                if let TxState::Sleep { k, .. } = old_tx {
                    if measuring {
                        episodes += 1;
                        episode_cycles += k as u64;
                    }
                }
            }
            let old_rx = o.rx;
            let rx_obs = RxObs {
                allocated: !delivered[i].is_empty(),
                buffered: book.ds_buffer_bytes[i] > 0,
            };
            o.rx = rx_step(old_rx, rx_obs, &cfg.fsm);
            if o.rx.kind() == RxKind::Sleep && old_rx.kind() != RxKind::Sleep {
                o.t_ps = (t, home_position(us_cap, i, n));
            }

            let old_mirror_rx = mirrors[i].rx.kind();
            let mobs = MirrorObs {
                reported: reporting,
                requested: req,
                transmitted: transmitted[i],
                allocated_down: !delivered[i].is_empty(),
                buffered_down: book.ds_buffer_bytes[i] > 0,
            };
            mirrors[i] = mirror_predict(mirrors[i], &mobs, budget_cycles, &cfg.fsm);
            if mirrors[i].rx.kind() == RxKind::Sleep && old_mirror_rx != RxKind::Sleep {
                book.t_ps[i] = (t, home_position(us_cap, i, n));
            }
        }

        // (7) Nothing may leak: generated = delivered + still waiting.
        let queued_pkts_total: u64 = onus.iter().map(|o| o.queue_pkts).sum();
        let queued_bytes_total: u64 = onus.iter().map(|o| o.queue_bytes).sum();
        let buffered_pkts_total: u64 = book.ds_buffers.iter().map(|b| b.len() as u64).sum();
        let buffered_bytes_total: u64 = book.ds_buffer_bytes.iter().sum();
        if us_gen_pkts != us_del_pkts + queued_pkts_total
            || us_gen_bytes != us_del_bytes + queued_bytes_total
            || ds_gen_pkts != ds_del_pkts + buffered_pkts_total
            || ds_gen_bytes != ds_del_bytes + buffered_bytes_total
        {
            conservation_violations += 1;
        }
    }

    // Finalize. Energy falls out of the occupancy tally exactly.
    let measured_s = cfg.measured_cycles as f64 * cycle;
    let mut energy_j = 0.0;
    for rx in RxKind::ALL {
        for tx in TxKind::ALL {
            energy_j +=
                occupancy_counts[joint_index(rx, tx)] as f64 * cfg.power.power_of(rx, tx) * cycle;
        }
    }
    let baseline_j = n as f64 * measured_s * cfg.power.full_power();
    let (saving, saving_clamped) = energy_saving(energy_j, baseline_j);
    let onu_cycles = (n as u64 * cfg.measured_cycles) as f64;
    let mut occupancy = [0.0f64; 9];
    for k in 0..9 {
        occupancy[k] = occupancy_counts[k] as f64 / onu_cycles;
    }
    let offered_ds_bps = measured_ds_bytes as f64 * 8.0 / measured_s;
    let offered_us_bps = measured_us_bytes as f64 * 8.0 / measured_s;
    let utilization_ds = offered_ds_bps / cfg.ds_rate_bps;
    let utilization_us = offered_us_bps / cfg.us_rate_bps;
    let queued_pkts_total: u64 = onus.iter().map(|o| o.queue_pkts).sum();
    let buffered_pkts_total: u64 = book.ds_buffers.iter().map(|b| b.len() as u64).sum();
    let pkts_residual = queued_pkts_total + buffered_pkts_total;
    let pkts_generated = us_gen_pkts + ds_gen_pkts;
    let pkts_delivered = us_del_pkts + ds_del_pkts;
    let saturated = utilization_ds > 1.0
        || utilization_us > 1.0
        || pkts_residual.saturating_mul(50) > pkts_generated;

    Ok(SimMetrics {
        measured_cycles: cfg.measured_cycles,
        measured_s,
        offered_ds_bps,
        offered_us_bps,
        utilization_ds,
        utilization_us,
        energy_j,
        baseline_j,
        energy_saving: saving,
        saving_clamped,
        occupancy,
        delay_ds_mean_s: ds_all.mean(),
        delay_ds_p95_s: ds_all.hist.quantile(0.95),
        delay_ds_class_mean_s: core::array::from_fn(|c| ds_stats[c].mean()),
        delay_us_class_mean_s: core::array::from_fn(|c| us_stats[c].mean()),
        delay_us_class_p95_s: core::array::from_fn(|c| us_stats[c].hist.quantile(0.95)),
        delay_us_class_max_s: core::array::from_fn(|c| us_stats[c].max),
        threshold_violations: violations,
        tx_sleep_mean_s: if episodes == 0 {
            0.0
        } else {
            episode_cycles as f64 * cycle / episodes as f64
        },
        tx_sleep_episodes: episodes,
        tx_budget_cycles: budget_cycles,
        pkts_generated,
        pkts_delivered,
        pkts_residual,
        mirror_divergences,
        ts_divergences,
        conservation_violations,
        saturated,
    })
}

/// Which configuration knob a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    DsLoad,
    UsLoad,
    RxListen,
    RxSleep,
    TxListen,
    /// One common deadline applied to every class.
    DelayThreshold,
}

impl SweepAxis {
    /// Human-readable name of the swept quantity.
    pub fn label(self) -> &'static str {
        match self {
            SweepAxis::DsLoad => "ds_load_bps",
            SweepAxis::UsLoad => "us_load_bps",
            SweepAxis::RxListen => "rx_listen_cycles",
            SweepAxis::RxSleep => "rx_sleep_cycles",
            SweepAxis::TxListen => "tx_listen_cycles",
            SweepAxis::DelayThreshold => "delay_threshold_s",
        }
    }
}

/// Set one axis value on a configuration.
pub fn apply_axis(cfg: &mut SimConfig, axis: SweepAxis, value: f64) -> Result<()> {
    fn whole_cycles(value: f64, what: &str) -> Result<u32> {
        if value.is_finite()
            && value >= 1.0
            && value <= u32::MAX as f64
            && libm::floor(value) == value
        {
            Ok(value as u32)
        } else {
            Err(Error::InvalidArgument(format!(
                "{what} must be a whole number of cycles >= 1, got {value}"
            )))
        }
    }
    match axis {
        SweepAxis::DsLoad | SweepAxis::UsLoad => {
            if !value.is_finite() || value < 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "offered load must be finite and >= 0, got {value}"
                )));
            }
            if axis == SweepAxis::DsLoad {
                cfg.ds_traffic.load_bps = value;
            } else {
                cfg.us_traffic.load_bps = value;
            }
        }
        SweepAxis::RxListen => cfg.fsm.rx_listen = whole_cycles(value, "rx_listen")?,
        SweepAxis::RxSleep => cfg.fsm.rx_sleep = whole_cycles(value, "rx_sleep")?,
        SweepAxis::TxListen => cfg.fsm.tx_listen = whole_cycles(value, "tx_listen")?,
        SweepAxis::DelayThreshold => {
            if !value.is_finite() || value <= 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "delay threshold must be finite and > 0, got {value}"
                )));
            }
            cfg.thresholds_s = [value; NUM_CLASSES];
        }
    }
    Ok(())
}

/// The configuration of sweep point `index`: the base with one axis value
/// applied and the seed offset by the point's position, so a one-point sweep
/// reproduces a plain run of the base seed.
pub fn sweep_point_config(
    base: &SimConfig,
    axis: SweepAxis,
    value: f64,
    index: usize,
) -> Result<SimConfig> {
    let mut cfg = base.clone();
    apply_axis(&mut cfg, axis, value)?;
    cfg.seed = base.seed.wrapping_add(index as u64);
    Ok(cfg)
}

/// One sweep point's outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub axis_value: f64,
    pub seed: u64,
    pub metrics: SimMetrics,
}

/// Run one simulation per axis value, in the given order.
pub fn sweep(base: &SimConfig, axis: SweepAxis, values: &[f64]) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("a sweep needs at least one axis value".into()));
    }
    values
        .iter()
        .enumerate()
        .map(|(index, &value)| {
            let cfg = sweep_point_config(base, axis, value, index)?;
            let metrics = run_simulation(&cfg)?;
            Ok(SweepRow { axis_value: value, seed: cfg.seed, metrics })
        })
        .collect()
}
