//! Closed-form companions to the simulator: the per-cycle arrival law,
//! non-preemptive priority queue waiting times, transmitter sleep budgets
//! derived from delay thresholds, and whole-cycle Markov chains over the
//! sleep-machine states.
//!
//! The chains deliberately model the *budgeted* machines (no deadline-aware
//! early wakes) and treat the wake check at the end of a sleep stretch the
//! same way for both directions: the accumulated-arrival mass decides
//! between waking into the awake state and starting another stretch. The
//! receiver machine in the simulator behaves exactly like that; the
//! simulated transmitter additionally always wakes to report at budget
//! exhaustion, so its chain is the same structural approximation the
//! receiver uses, not a cycle-exact unfolding. Both chains are built by one
//! routine and are therefore identical under identical parameters.

use crate::error::{Error, Result};
use crate::power::PowerProfile;
use crate::traffic::{TrafficConfig, NUM_CLASSES};
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

/// P(`count` arrivals in `interval_s` seconds) for a Poisson stream of
/// `rate` arrivals/s.
///
/// Exact product arithmetic for small counts, log-space evaluation
/// (`exp(-x + k ln x - ln k!)`) beyond, so the value stays finite and
/// accurate for counts and means in the tens of thousands.
pub fn cycle_pmf(count: u64, rate: f64, interval_s: f64) -> Result<f64> {
    if !(rate >= 0.0) || !rate.is_finite() {
        return Err(Error::InvalidArgument(format!("arrival rate must be >= 0, got {rate}")));
    }
    if !(interval_s >= 0.0) || !interval_s.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "interval must be >= 0 seconds, got {interval_s}"
        )));
    }
    let x = rate * interval_s;
    if x == 0.0 {
        return Ok(if count == 0 { 1.0 } else { 0.0 });
    }
    if count <= 20 && x < 700.0 {
        let mut p = libm::exp(-x);
        for i in 1..=count {
            p *= x / i as f64;
        }
        Ok(p)
    } else {
        let k = count as f64;
        let log_p = -x + k * libm::log(x) - libm::lgamma(k + 1.0);
        Ok(libm::exp(log_p))
    }
}

/// Which classes feed the residual-work numerator of the priority waiting
/// time formula.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PkNumerator {
    /// Every class contributes residual work regardless of priority.
    AllClasses,
    /// Only the target class and higher priorities contribute (textbook
    /// variant).
    UpToPriority,
}

/// Mean queueing waits of a non-preemptive priority M/G/1 queue.
///
/// `lambda[i]` in arrivals/s, `ex[i]` mean service time (s), `ex2[i]` second
/// moment of service time (s²); class 0 has the highest priority. Wait for
/// class i is `R_i / ((1 - sigma_{i-1}) (1 - sigma_i))` with
/// `sigma_i = sum_{k<=i} lambda_k ex_k` and `R_i` half the summed
/// `lambda_k ex2_k` over the numerator classes.
pub fn pk_waiting_times(
    lambda: &[f64],
    ex: &[f64],
    ex2: &[f64],
    numerator: PkNumerator,
) -> Result<Vec<f64>> {
    let (waits, saturated) = pk_waiting_times_partial(lambda, ex, ex2, numerator)?;
    if let Some((class, utilization)) = saturated {
        return Err(Error::Saturated { class, utilization });
    }
    Ok(waits.into_iter().map(|w| w.unwrap()).collect())
}

/// Like [`pk_waiting_times`] but keeps the waits of classes below the
/// stability limit when higher-numbered classes saturate. Returns the waits
/// (None once saturated) and the first saturated class with its cumulative
/// utilization.
pub fn pk_waiting_times_partial(
    lambda: &[f64],
    ex: &[f64],
    ex2: &[f64],
    numerator: PkNumerator,
) -> Result<(Vec<Option<f64>>, Option<(usize, f64)>)> {
    let n = lambda.len();
    if n == 0 || ex.len() != n || ex2.len() != n {
        return Err(Error::InvalidArgument(
            "lambda, ex, ex2 must be non-empty and equally long".into(),
        ));
    }
    for i in 0..n {
        if !(lambda[i] >= 0.0) || !(ex[i] >= 0.0) || !(ex2[i] >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "class {i}: rates and moments must be >= 0"
            )));
        }
    }
    let all_residual: f64 = (0..n).map(|i| lambda[i] * ex2[i]).sum::<f64>() / 2.0;
    let mut waits = vec![None; n];
    let mut saturated = None;
    let mut sigma_prev = 0.0;
    let mut residual_upto = 0.0;
    for i in 0..n {
        residual_upto += lambda[i] * ex2[i] / 2.0;
        let sigma = sigma_prev + lambda[i] * ex[i];
        if sigma >= 1.0 {
            saturated = Some((i, sigma));
            break;
        }
        let r = match numerator {
            PkNumerator::AllClasses => all_residual,
            PkNumerator::UpToPriority => residual_upto,
        };
        waits[i] = Some(r / ((1.0 - sigma_prev) * (1.0 - sigma)));
        sigma_prev = sigma;
    }
    Ok((waits, saturated))
}

/// End-to-end mean delay: queueing wait + one mean service + propagation.
pub fn total_delay(wait_s: f64, service_mean_s: f64, propagation_s: f64) -> f64 {
    wait_s + service_mean_s + propagation_s
}

/// Transmitter sleep allowance derived from delay thresholds.
#[derive(Debug, Clone, PartialEq)]
pub struct SleepBudget {
    /// Per-class slack: threshold - predicted delay - one cycle.
    pub per_class_s: Vec<f64>,
    /// Binding slack, the minimum over classes. May be negative.
    pub tx_sleep_s: f64,
    /// Whole-cycle budget: floor(tx_sleep / cycle) when at least one cycle
    /// fits, otherwise 0 (sleeping disabled).
    pub cycles: u32,
}

/// Allowed transmitter sleep given per-class delay thresholds and predicted
/// per-class delays. The allowance reserves one cycle of post-wake latency,
/// then quantizes to whole cycles.
pub fn sleep_budget(thresholds_s: &[f64], delays_s: &[f64], cycle_s: f64) -> Result<SleepBudget> {
    if thresholds_s.is_empty() || thresholds_s.len() != delays_s.len() {
        return Err(Error::InvalidArgument(
            "thresholds and delays must be non-empty and equally long".into(),
        ));
    }
    if !(cycle_s > 0.0) {
        return Err(Error::InvalidArgument(format!("cycle_s must be > 0, got {cycle_s}")));
    }
    let per_class: Vec<f64> = thresholds_s
        .iter()
        .zip(delays_s)
        .map(|(&d, &t)| d - t - cycle_s)
        .collect();
    let tx_sleep = per_class.iter().cloned().fold(f64::INFINITY, f64::min);
    let cycles = if tx_sleep >= cycle_s { libm::floor(tx_sleep / cycle_s) as u32 } else { 0 };
    Ok(SleepBudget { per_class_s: per_class, tx_sleep_s: tx_sleep, cycles })
}

/// One state of a whole-cycle sleep chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChainState {
    /// Awake with this many packets queued at the cycle start.
    Awake(u32),
    /// k-th consecutive listening cycle.
    Listen(u32),
    /// k-th cycle of the current sleep stretch.
    Sleep(u32),
}

/// Sparse row-stochastic transition matrix over [`ChainState`]s.
#[derive(Debug, Clone)]
pub struct MarkovChain {
    /// State labels, index-aligned with `rows`.
    pub states: Vec<ChainState>,
    /// Sparse rows of (column, probability); each row sums to 1.
    pub rows: Vec<Vec<(usize, f64)>>,
    /// True when the queue cap holds at least 1 - 1e-6 of the one-cycle
    /// arrival mass; false means results carry truncation error worth a
    /// warning.
    pub truncation_ok: bool,
}

/// Parameters shared by both chain builders.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainParams {
    /// Packet arrivals into the queue, packets/s.
    pub lambda_pps: f64,
    /// Packet departures while awake, packets/s.
    pub mu_pps: f64,
    pub cycle_s: f64,
    /// Listening window, cycles (>= 1).
    pub listen: u32,
    /// Sleep stretch length, cycles; 0 disables sleeping (the chain then
    /// parks in the last listen state on empty cycles).
    pub sleep: u32,
    /// Queue cap in packets; arrivals beyond it pile into the cap state.
    pub q_max: u32,
}

impl ChainParams {
    fn validate(&self) -> Result<()> {
        if !(self.lambda_pps >= 0.0) || !self.lambda_pps.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "lambda_pps must be finite and >= 0, got {}",
                self.lambda_pps
            )));
        }
        if !(self.mu_pps >= 0.0) || !self.mu_pps.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "mu_pps must be finite and >= 0, got {}",
                self.mu_pps
            )));
        }
        if !(self.cycle_s > 0.0) {
            return Err(Error::InvalidArgument(format!("cycle_s must be > 0, got {}", self.cycle_s)));
        }
        if self.listen < 1 {
            return Err(Error::InvalidArgument("listen window must be >= 1 cycle".into()));
        }
        if self.q_max < 1 {
            return Err(Error::InvalidArgument("q_max must be >= 1".into()));
        }
        Ok(())
    }
}

/// Whole-cycle chain of the receiver machine: awake states track the
/// head-end buffer for this ONU, listening counts idle cycles, a sleep
/// stretch ends with a wake check over the traffic accumulated during the
/// whole stretch.
pub fn build_rx_chain(params: &ChainParams) -> Result<MarkovChain> {
    build_sleep_chain(params)
}

/// Whole-cycle chain of the transmitter machine; structurally identical to
/// the receiver chain (see the module docs for how this relates to the
/// simulated transmitter).
pub fn build_tx_chain(params: &ChainParams) -> Result<MarkovChain> {
    build_sleep_chain(params)
}

/// Poisson pmf vector for the given mean-defining (rate, interval), cut once
/// the cumulative mass reaches 1 - 1e-13, with the residual folded into the
/// final entry so the vector sums to exactly 1.
fn pmf_vector(rate: f64, interval_s: f64) -> Vec<f64> {
    let x = rate * interval_s;
    let cap = (x + 20.0 * libm::sqrt(x) + 100.0) as usize;
    let mut v = Vec::with_capacity(cap.min(1 << 20) + 1);
    let mut cum = 0.0f64;
    let mut k = 0u64;
    loop {
        let p = cycle_pmf(k, rate, interval_s).unwrap();
        v.push(p);
        cum += p;
        if (cum >= 1.0 - 1e-13 && k as f64 >= x) || k as usize >= cap {
            break;
        }
        k += 1;
    }
    let last = v.len() - 1;
    v[last] += (1.0 - cum).max(0.0);
    v
}

fn build_sleep_chain(params: &ChainParams) -> Result<MarkovChain> {
    params.validate()?;
    let q = params.q_max as usize;
    let listen = params.listen as usize;
    let sleep = params.sleep as usize;
    let n = (q + 1) + listen + sleep;

    let a_idx = |r: usize| r;
    let l_idx = |k: usize| q + 1 + (k - 1);
    let s_idx = |k: usize| q + 1 + listen + (k - 1);

    let mut states = Vec::with_capacity(n);
    for r in 0..=q {
        states.push(ChainState::Awake(r as u32));
    }
    for k in 1..=listen {
        states.push(ChainState::Listen(k as u32));
    }
    for k in 1..=sleep {
        states.push(ChainState::Sleep(k as u32));
    }

    // One-cycle arrival and departure laws.
    let pa = pmf_vector(params.lambda_pps, params.cycle_s);
    let pd = pmf_vector(params.mu_pps, params.cycle_s);
    // prefix(y) = P(d < y); beyond the vector the mass is complete.
    let pd_prefix: Vec<f64> = {
        let mut acc = 0.0;
        let mut v = Vec::with_capacity(pd.len() + 1);
        v.push(0.0);
        for &p in &pd {
            acc += p;
            v.push(acc);
        }
        v
    };
    let prefix = |y: usize| -> f64 {
        if y >= pd_prefix.len() {
            pd_prefix[pd_prefix.len() - 1]
        } else {
            pd_prefix[y]
        }
    };
    let pd_at = |d: usize| -> f64 {
        if d < pd.len() {
            pd[d]
        } else {
            0.0
        }
    };

    // Truncation diagnostic: how much one-cycle arrival mass the cap holds.
    let mass_within_cap: f64 = pa.iter().take(q + 1).sum();
    let truncation_ok = mass_within_cap >= 1.0 - 1e-6 || pa.len() <= q + 1;

    let mut rows: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n);

    // Awake rows: arrivals join, then up to d departures leave; the machine
    // enters listening only from an empty, arrival-free cycle.
    for r in 0..=q {
        let mut dense = vec![0.0f64; n];
        for (a, &pa_a) in pa.iter().enumerate() {
            if r == 0 && a == 0 {
                dense[l_idx(1)] += pa_a;
                continue;
            }
            let x = r + a;
            // next = 0: every queued packet served.
            dense[a_idx(0)] += pa_a * (1.0 - prefix(x));
            // exact next-queue levels below the cap.
            let m_hi = x.min(q.saturating_sub(1));
            for m in 1..=m_hi {
                dense[a_idx(m)] += pa_a * pd_at(x - m);
            }
            // cap state absorbs everything at or above it.
            if x >= q {
                dense[a_idx(q)] += pa_a * prefix(x - q + 1);
            }
        }
        rows.push(sparsify(&dense));
    }

    // Listening rows: no service; any arrival wakes the machine with that
    // many packets queued, an empty cycle advances the window.
    for k in 1..=listen {
        let mut dense = vec![0.0f64; n];
        let quiet_next = if k < listen {
            l_idx(k + 1)
        } else if sleep > 0 {
            s_idx(1)
        } else {
            l_idx(k) // sleeping disabled: park here
        };
        dense[quiet_next] += pa[0];
        for (a, &pa_a) in pa.iter().enumerate().skip(1) {
            dense[a_idx(a.min(q))] += pa_a;
        }
        rows.push(sparsify(&dense));
    }

    // Sleep rows: a stretch runs to its end unconditionally; the wake check
    // sees everything that accumulated over the whole stretch.
    if sleep > 0 {
        for k in 1..sleep {
            rows.push(vec![(s_idx(k + 1), 1.0)]);
        }
        let accumulated = pmf_vector(params.lambda_pps, params.sleep as f64 * params.cycle_s);
        let mut dense = vec![0.0f64; n];
        dense[s_idx(1)] += accumulated[0];
        for (m, &p) in accumulated.iter().enumerate().skip(1) {
            dense[a_idx(m.min(q))] += p;
        }
        rows.push(sparsify(&dense));
    }

    debug_assert_eq!(rows.len(), n);
    #[cfg(debug_assertions)]
    for row in &rows {
        let s: f64 = row.iter().map(|&(_, p)| p).sum();
        debug_assert!((s - 1.0).abs() < 1e-11, "row sum {s}");
    }

    Ok(MarkovChain { states, rows, truncation_ok })
}

fn sparsify(dense: &[f64]) -> Vec<(usize, f64)> {
    dense.iter().enumerate().filter(|&(_, &p)| p > 0.0).map(|(j, &p)| (j, p)).collect()
}

/// A stationary distribution and how it was certified.
#[derive(Debug, Clone)]
pub struct Stationary {
    pub pi: Vec<f64>,
    /// Achieved max-norm residual of pi P = pi.
    pub residual: f64,
    /// Set when the direct solve found the balance system singular (for
    /// example every state absorbing) and the result came from iterating a
    /// uniform start instead.
    pub reducible: bool,
}

const DENSE_LIMIT: usize = 2000;
const POWER_MAX_ITERS: u64 = 1_000_000;
const RESIDUAL_TOL: f64 = 1e-10;

/// Stationary distribution of a chain: dense Gaussian elimination on the
/// balance equations up to 2000 states, damped power iteration beyond (or
/// as fallback when the direct system is singular).
pub fn stationary(chain: &MarkovChain) -> Result<Stationary> {
    let n = chain.rows.len();
    if n == 0 {
        return Err(Error::InvalidArgument("chain has no states".into()));
    }
    if n <= DENSE_LIMIT {
        if let Some(mut pi) = stationary_dense(chain) {
            for p in pi.iter_mut() {
                if *p < 0.0 {
                    *p = 0.0;
                }
            }
            normalize(&mut pi);
            let residual = chain_residual(chain, &pi);
            if residual < RESIDUAL_TOL {
                return Ok(Stationary { pi, residual, reducible: false });
            }
        }
        // Singular or ill-conditioned: fall through to iteration.
        return power_iteration(chain, true);
    }
    power_iteration(chain, false)
}

fn stationary_dense(chain: &MarkovChain) -> Option<Vec<f64>> {
    let n = chain.rows.len();
    // Column-oriented balance equations (P^T - I) pi = 0 with the last row
    // replaced by the normalization sum(pi) = 1.
    let mut m = vec![0.0f64; n * n];
    for (i, row) in chain.rows.iter().enumerate() {
        for &(j, p) in row {
            m[j * n + i] += p;
        }
    }
    for i in 0..n {
        m[i * n + i] -= 1.0;
    }
    for j in 0..n {
        m[(n - 1) * n + j] = 1.0;
    }
    let mut rhs = vec![0.0f64; n];
    rhs[n - 1] = 1.0;

    // Gaussian elimination with partial pivoting.
    for col in 0..n {
        let mut piv = col;
        let mut best = m[col * n + col].abs();
        for r in (col + 1)..n {
            let v = m[r * n + col].abs();
            if v > best {
                best = v;
                piv = r;
            }
        }
        if best < 1e-12 {
            return None; // singular: reducible or degenerate chain
        }
        if piv != col {
            for c in 0..n {
                m.swap(piv * n + c, col * n + c);
            }
            rhs.swap(piv, col);
        }
        let d = m[col * n + col];
        for r in (col + 1)..n {
            let f = m[r * n + col] / d;
            if f == 0.0 {
                continue;
            }
            m[r * n + col] = 0.0;
            for c in (col + 1)..n {
                m[r * n + c] -= f * m[col * n + c];
            }
            rhs[r] -= f * rhs[col];
        }
    }
    let mut x = vec![0.0f64; n];
    for row in (0..n).rev() {
        let mut acc = rhs[row];
        for c in (row + 1)..n {
            acc -= m[row * n + c] * x[c];
        }
        x[row] = acc / m[row * n + row];
    }
    Some(x)
}

fn power_iteration(chain: &MarkovChain, reducible: bool) -> Result<Stationary> {
    let n = chain.rows.len();
    let mut x = vec![1.0 / n as f64; n];
    let mut next = vec![0.0f64; n];
    for it in 0..POWER_MAX_ITERS {
        next.iter_mut().for_each(|v| *v = 0.0);
        for (i, row) in chain.rows.iter().enumerate() {
            let xi = x[i];
            if xi == 0.0 {
                continue;
            }
            for &(j, p) in row {
                next[j] += xi * p;
            }
        }
        // Damped update keeps periodic ladders (pure cycles) convergent.
        let mut delta = 0.0f64;
        for i in 0..n {
            let blended = 0.5 * x[i] + 0.5 * next[i];
            delta = delta.max((next[i] - x[i]).abs());
            x[i] = blended;
        }
        normalize(&mut x);
        if delta < 5e-13 {
            let residual = chain_residual(chain, &x);
            if residual < RESIDUAL_TOL {
                return Ok(Stationary { pi: x, residual, reducible });
            }
            return Err(Error::NoConvergence { iterations: it + 1, residual });
        }
    }
    let residual = chain_residual(chain, &x);
    Err(Error::NoConvergence { iterations: POWER_MAX_ITERS, residual })
}

fn normalize(x: &mut [f64]) {
    let s: f64 = x.iter().sum();
    if s > 0.0 {
        for v in x.iter_mut() {
            *v /= s;
        }
    }
}

fn chain_residual(chain: &MarkovChain, pi: &[f64]) -> f64 {
    let n = chain.rows.len();
    let mut out = vec![0.0f64; n];
    for (i, row) in chain.rows.iter().enumerate() {
        for &(j, p) in row {
            out[j] += pi[i] * p;
        }
    }
    let mut r = 0.0f64;
    for i in 0..n {
        r = r.max((out[i] - pi[i]).abs());
    }
    r
}

/// Collapse a stationary distribution onto awake/listen/sleep occupancy.
pub fn kind_occupancy(chain: &MarkovChain, pi: &[f64]) -> [f64; 3] {
    let mut occ = [0.0f64; 3];
    for (state, &p) in chain.states.iter().zip(pi) {
        let k = match state {
            ChainState::Awake(_) => 0,
            ChainState::Listen(_) => 1,
            ChainState::Sleep(_) => 2,
        };
        occ[k] += p;
    }
    occ
}

/// Expected per-ONU wattage from independent receiver and transmitter kind
/// occupancies.
pub fn expected_power(rx_occ: &[f64; 3], tx_occ: &[f64; 3], profile: &PowerProfile) -> f64 {
    let mut w = 0.0;
    for r in 0..3 {
        for t in 0..3 {
            w += rx_occ[r] * tx_occ[t] * profile.watts[r][t];
        }
    }
    w
}

/// Closed-form upstream predictions for one ONU's traffic settings: per-class
/// arrival rates and service moments at the line rate, priority waits, total
/// delays, and the sleep budget the thresholds leave.
#[derive(Debug, Clone)]
pub struct UpstreamPrediction {
    pub lambda_pps: [f64; NUM_CLASSES],
    pub service_mean_s: [f64; NUM_CLASSES],
    pub service_second_moment: [f64; NUM_CLASSES],
    /// Per-class queueing waits; None from the first saturated class on.
    pub waits_s: [Option<f64>; NUM_CLASSES],
    /// Per-class total delays (wait + class service + propagation).
    pub delays_s: [Option<f64>; NUM_CLASSES],
    /// First saturated class and its cumulative utilization, if any.
    pub saturated: Option<(usize, f64)>,
    /// Sleep allowance; zero-cycle budget whenever any class saturates.
    pub budget: SleepBudget,
}

/// Evaluate the upstream queueing model for one ONU.
///
/// Service times are the packet transmission times at `line_rate_bps`; class
/// 0 is deterministic (fixed size), the others uniform over the size range.
pub fn predict_upstream(
    traffic: &TrafficConfig,
    thresholds_s: &[f64; NUM_CLASSES],
    line_rate_bps: f64,
    propagation_s: f64,
    cycle_s: f64,
    numerator: PkNumerator,
) -> Result<UpstreamPrediction> {
    traffic.validate()?;
    if !(line_rate_bps > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "line_rate_bps must be > 0, got {line_rate_bps}"
        )));
    }
    if !(propagation_s >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "propagation_s must be >= 0, got {propagation_s}"
        )));
    }
    if thresholds_s.iter().any(|t| !(*t > 0.0)) {
        return Err(Error::InvalidArgument("delay thresholds must be > 0".into()));
    }
    let mix = traffic.class_mix();
    let total_pps = traffic.packet_rate_pps();
    let mut lambda = [0.0f64; NUM_CLASSES];
    let mut ex = [0.0f64; NUM_CLASSES];
    let mut ex2 = [0.0f64; NUM_CLASSES];
    for i in 0..NUM_CLASSES {
        lambda[i] = total_pps * mix.probs[i];
        ex[i] = mix.mean_class_bytes[i] * 8.0 / line_rate_bps;
    }
    // Second moments of transmission time: deterministic for class 0,
    // uniform integer sizes for classes 1 and 2.
    ex2[0] = ex[0] * ex[0];
    let (a, b) = (traffic.size_min_bytes as f64, traffic.size_max_bytes as f64);
    // E[s^2] of the discrete uniform on [a, b].
    let count = b - a + 1.0;
    let sum_sq = |m: f64| m * (m + 1.0) * (2.0 * m + 1.0) / 6.0;
    let es2 = (sum_sq(b) - sum_sq(a - 1.0)) / count;
    let scale = 8.0 / line_rate_bps;
    ex2[1] = es2 * scale * scale;
    ex2[2] = ex2[1];

    let (waits_v, saturated) = pk_waiting_times_partial(&lambda, &ex, &ex2, numerator)?;
    let mut waits = [None; NUM_CLASSES];
    let mut delays = [None; NUM_CLASSES];
    for i in 0..NUM_CLASSES {
        waits[i] = waits_v[i];
        delays[i] = waits_v[i].map(|w| total_delay(w, ex[i], propagation_s));
    }
    let budget = if delays.iter().all(|d| d.is_some()) {
        let d: Vec<f64> = delays.iter().map(|d| d.unwrap()).collect();
        sleep_budget(thresholds_s, &d, cycle_s)?
    } else {
        SleepBudget {
            per_class_s: vec![f64::NEG_INFINITY; NUM_CLASSES],
            tx_sleep_s: f64::NEG_INFINITY,
            cycles: 0,
        }
    };
    Ok(UpstreamPrediction {
        lambda_pps: lambda,
        service_mean_s: ex,
        service_second_moment: ex2,
        waits_s: waits,
        delays_s: delays,
        saturated,
        budget,
    })
}
