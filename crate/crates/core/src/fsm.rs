//! The receiver and transmitter sleep state machines, and the head-end's
//! replicas of them driven purely from protocol observables.
//!
//! Both machines share one shape: an awake component that enters a fixed
//! listening window when it runs out of work, then sleeps in whole-cycle
//! stretches. They differ in what ends a stretch:
//!
//! * The **receiver** sleeps a fixed stretch (`rx_sleep` cycles), checks once
//!   at the end whether the head end holds buffered downstream traffic for
//!   it, and either wakes or starts another stretch directly (no second
//!   listening window). Mid-stretch it is unreachable.
//! * The **transmitter** sleeps one budgeted stretch (computed at entry from
//!   configured mean rates and delay thresholds) and always wakes at the end
//!   to send a report, even an empty one. In deadline-aware mode it may also
//!   wake mid-stretch when a queued packet's slack runs low.
//!
//! # Why the head end can mirror this without handshakes
//!
//! Every transition is a function of quantities the head end either causes
//! or observes, so it replays the same step functions with reconstructed
//! inputs ([`mirror_predict`]):
//!
//! * A reporting transmitter's request equals its leftover from the last
//!   report plus whatever became visible since, and the head end knows the
//!   leftover (it granted the previous request and received the resulting
//!   bytes). So "traffic appeared" is exactly `requested > leftover`, and
//!   "queue drained" is exactly `transmitted == requested`. Both sides
//!   evaluate the same arithmetic on the same numbers, which also gives the
//!   right answer at a budget wake: the accumulated backlog shows up in the
//!   wake report and counts as newly visible traffic for both.
//! * A transmitter entering or continuing sleep goes silent, which matches
//!   the replica expecting no report; counters advance in lockstep because
//!   the sleep budget is derived from configuration both sides know, and
//!   budget wakes are therefore predicted, not observed.
//! * A deadline wake is the one unpredicted transition. It always produces
//!   a report from an ONU the replica holds mid-stretch — unambiguous,
//!   because a sleeping ONU is otherwise silent — and is applied as a
//!   correction ([`mirror_observe_wake`]) when that report arrives, before
//!   the replica is consulted for scheduling.
//! * Receiver transitions depend only on head-end actions (whether it
//!   scheduled downstream bytes, whether its buffer is non-empty), so the
//!   replica is authoritative by construction.

use crate::power::{RxKind, TxKind};
use alloc::format;
use alloc::string::String;

/// Counter limits for both machines, in cycles.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FsmConfig {
    /// Consecutive no-downstream-traffic cycles the receiver listens before
    /// sleeping.
    pub rx_listen: u32,
    /// Length of one receiver sleep stretch; the wake check happens only at
    /// its end.
    pub rx_sleep: u32,
    /// Consecutive idle cycles the transmitter listens before sleeping.
    pub tx_listen: u32,
}

impl Default for FsmConfig {
    fn default() -> Self {
        FsmConfig { rx_listen: 2, rx_sleep: 2, tx_listen: 2 }
    }
}

impl FsmConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.rx_listen < 1 || self.rx_sleep < 1 || self.tx_listen < 1 {
            return Err(format!(
                "window counters must be >= 1 cycle (rx_listen={}, rx_sleep={}, tx_listen={})",
                self.rx_listen, self.rx_sleep, self.tx_listen
            ));
        }
        Ok(())
    }
}

/// Receiver state in force during a cycle. Counters are 1-based: `Listen(k)`
/// is the k-th consecutive listening cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RxState {
    Awake,
    Listen(u32),
    Sleep(u32),
}

impl RxState {
    pub fn kind(self) -> RxKind {
        match self {
            RxState::Awake => RxKind::Awake,
            RxState::Listen(_) => RxKind::Listen,
            RxState::Sleep(_) => RxKind::Sleep,
        }
    }
}

/// What the receiver side observed during one cycle.
#[derive(Debug, Clone, Copy)]
pub struct RxObs {
    /// Downstream bytes were scheduled to this ONU this cycle.
    pub allocated: bool,
    /// The head end holds buffered downstream traffic for this ONU at the
    /// cycle's end. Only consulted when a sleep stretch expires.
    pub buffered: bool,
}

/// Advance the receiver machine by one cycle.
pub fn rx_step(state: RxState, obs: RxObs, cfg: &FsmConfig) -> RxState {
    match state {
        RxState::Awake => {
            if obs.allocated {
                RxState::Awake
            } else {
                RxState::Listen(1)
            }
        }
        RxState::Listen(k) => {
            if obs.allocated {
                RxState::Awake
            } else if k < cfg.rx_listen {
                RxState::Listen(k + 1)
            } else {
                RxState::Sleep(1)
            }
        }
        // Mid-stretch the receiver is off and unreachable: no wake checks.
        RxState::Sleep(k) if k < cfg.rx_sleep => RxState::Sleep(k + 1),
        RxState::Sleep(_) => {
            if obs.buffered {
                RxState::Awake
            } else {
                // Nothing pending: start another stretch without listening.
                RxState::Sleep(1)
            }
        }
    }
}

/// Transmitter state in force during a cycle. A sleep stretch carries the
/// whole-cycle budget fixed at entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TxState {
    Awake,
    Listen(u32),
    Sleep { k: u32, budget: u32 },
}

impl TxState {
    pub fn kind(self) -> TxKind {
        match self {
            TxState::Awake => TxKind::Awake,
            TxState::Listen(_) => TxKind::Listen,
            TxState::Sleep { .. } => TxKind::Sleep,
        }
    }

    pub fn is_sleep(self) -> bool {
        matches!(self, TxState::Sleep { .. })
    }
}

/// What the transmitter side observed during one cycle.
#[derive(Debug, Clone, Copy)]
pub struct TxObs {
    /// New upstream traffic became visible this cycle: the reported backlog
    /// exceeded what was already on the books. Always false while silent.
    pub arrived: bool,
    /// Nothing is left in the upstream queues at the cycle's end, after the
    /// cycle's arrivals and the served grant have both landed (for a
    /// reporting transmitter this is exactly requested == received).
    pub queue_empty: bool,
    /// A queued packet's delivery deadline is close enough that the
    /// transmitter must wake now. Always false when deadline-aware mode is
    /// off; only honoured while asleep.
    pub deadline_near: bool,
}

/// Advance the transmitter machine by one cycle.
///
/// `sleep_budget` is consulted only on the listen -> sleep transition: it is
/// the whole-cycle length of the stretch being entered, derived from
/// configured mean rates so both ends agree on it. A budget of 0 disables
/// sleeping; the machine then idles at `Listen(tx_listen)`.
pub fn tx_step(state: TxState, obs: TxObs, sleep_budget: u32, cfg: &FsmConfig) -> TxState {
    match state {
        TxState::Awake => {
            if obs.queue_empty && !obs.arrived {
                TxState::Listen(1)
            } else {
                TxState::Awake
            }
        }
        TxState::Listen(k) => {
            if obs.arrived {
                // An arrival during listening always wins, including against
                // an expiring counter.
                TxState::Awake
            } else if k < cfg.tx_listen {
                TxState::Listen(k + 1)
            } else if sleep_budget == 0 {
                TxState::Listen(k)
            } else {
                TxState::Sleep { k: 1, budget: sleep_budget }
            }
        }
        TxState::Sleep { k, budget } => {
            if k >= budget || obs.deadline_near {
                // Budget exhaustion always wakes the transmitter so it can
                // report, even with nothing queued.
                TxState::Awake
            } else {
                TxState::Sleep { k: k + 1, budget }
            }
        }
    }
}

/// The head end's replica of one ONU's pair of machines, plus the one piece
/// of queue knowledge the protocol exposes: the bytes left unserved after
/// the last report (request minus received upstream bytes).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MirrorState {
    pub rx: RxState,
    pub tx: TxState,
    /// Requested-but-unserved bytes as of the last report.
    pub leftover: u64,
}

impl MirrorState {
    pub fn new() -> Self {
        MirrorState { rx: RxState::Awake, tx: TxState::Awake, leftover: 0 }
    }
}

impl Default for MirrorState {
    fn default() -> Self {
        Self::new()
    }
}

/// Protocol events the head end observed about one ONU during a cycle.
#[derive(Debug, Clone, Copy)]
pub struct MirrorObs {
    /// A report arrived from this ONU this cycle.
    pub reported: bool,
    /// Requested upstream bytes in that report (0 when none arrived).
    pub requested: u64,
    /// Upstream bytes the head end received from this ONU this cycle.
    pub transmitted: u64,
    /// The head end scheduled downstream bytes to this ONU this cycle.
    pub allocated_down: bool,
    /// The head end still buffers downstream traffic for this ONU at the
    /// cycle's end.
    pub buffered_down: bool,
}

/// Advance the replica one cycle from observables alone.
///
/// Deadline wakes are never predicted here; they are applied through
/// [`mirror_observe_wake`] when the tell-tale mid-stretch report arrives in
/// the following cycle.
pub fn mirror_predict(
    m: MirrorState,
    obs: &MirrorObs,
    sleep_budget: u32,
    cfg: &FsmConfig,
) -> MirrorState {
    let (arrived, queue_empty, leftover) = if obs.reported {
        (obs.requested > m.leftover, obs.requested == obs.transmitted, obs.requested - obs.transmitted)
    } else {
        // Silent cycle: the transmitter is mid-stretch and its step ignores
        // these inputs; the leftover carries over (it is 0 in practice,
        // since sleep is only entered from a drained listen window).
        (false, true, m.leftover)
    };
    MirrorState {
        rx: rx_step(
            m.rx,
            RxObs { allocated: obs.allocated_down, buffered: obs.buffered_down },
            cfg,
        ),
        tx: tx_step(m.tx, TxObs { arrived, queue_empty, deadline_near: false }, sleep_budget, cfg),
        leftover,
    }
}

/// Fold an observed mid-stretch wake into the replica: a report from an ONU
/// the replica holds asleep before its budget ran out means the ONU woke
/// itself (a deadline wake). Call before consulting the replica for
/// scheduling in the cycle the report arrived.
pub fn mirror_observe_wake(m: &mut MirrorState) {
    debug_assert!(m.tx.is_sleep(), "a wake correction only applies to a sleeping replica");
    m.tx = TxState::Awake;
}
