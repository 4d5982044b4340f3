//! Upstream bandwidth allocation and cycle layout.
//!
//! Grant arithmetic works in whole bytes and grant layout works in byte
//! positions within the cycle (position = bytes transmittable since cycle
//! start), so the head end and the ONUs can reproduce each other's numbers
//! exactly. Conversion to seconds happens only at the edges.
//!
//! ONUs whose receiver sleeps cannot hear per-cycle grant messages, so their
//! slots are pinned at agreed "home" positions that both ends derive from
//! the ONU index alone; awake ONUs are packed into the remaining gaps and
//! may have their grants split across several segments.

use crate::error::{Error, Result};
use crate::traffic::PacketRecord;
use alloc::collections::VecDeque;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

/// One ONU's per-cycle bandwidth request.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReportMsg {
    pub onu: usize,
    pub requested_bytes: u64,
    pub cycle: u64,
}

/// One contiguous upstream transmission window granted to an ONU.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleGrant {
    pub onu: usize,
    /// Absolute start time of the window.
    pub start_s: f64,
    pub bytes: u64,
    pub cycle: u64,
}

/// Reports from every ONU whose transmitter is not asleep; a report with 0
/// requested bytes is still a report (it keeps the ONU visible).
pub fn collect_reports(cycle: u64, tx_sleeping: &[bool], queued_bytes: &[u64]) -> Vec<ReportMsg> {
    debug_assert_eq!(tx_sleeping.len(), queued_bytes.len());
    tx_sleeping
        .iter()
        .zip(queued_bytes)
        .enumerate()
        .filter(|&(_, (&sleeping, _))| !sleeping)
        .map(|(onu, (_, &requested_bytes))| ReportMsg { onu, requested_bytes, cycle })
        .collect()
}

/// The head end's per-ONU scheduling ledger: previous granted start times
/// for the pinned-slot path, downstream buffers for sleeping receivers, and
/// the cycle's fixed byte quantities.
///
/// Start times are kept as (cycle index, byte offset within the cycle), the
/// exact integers both ends derive independently; seconds are produced only
/// at the edge, so the start-time agreement check needs no float tolerance.
#[derive(Debug, Clone)]
pub struct OltBook {
    /// Fixed per-ONU share used to cap grants of sleeping receivers.
    pub fba_bytes: u64,
    pub us_capacity_bytes: u64,
    pub ds_capacity_bytes: u64,
    /// Previous granted start per ONU, as (cycle, byte position).
    pub t_ps: Vec<(u64, u64)>,
    pub ds_buffers: Vec<VecDeque<PacketRecord>>,
    pub ds_buffer_bytes: Vec<u64>,
}

impl OltBook {
    pub fn new(n_onus: usize, us_capacity_bytes: u64, ds_capacity_bytes: u64) -> Self {
        OltBook {
            fba_bytes: fba_share(us_capacity_bytes, n_onus),
            us_capacity_bytes,
            ds_capacity_bytes,
            t_ps: vec![(0, 0); n_onus],
            ds_buffers: (0..n_onus).map(|_| VecDeque::new()).collect(),
            ds_buffer_bytes: vec![0; n_onus],
        }
    }
}

/// Advance the pinned-slot bookkeeping of an ONU whose receiver sleeps,
/// during cycle `cycle`.
///
/// With an active transmitter the ONU is granted min(request, fixed share)
/// one cycle after its previous start, and that becomes the new previous
/// start; returns the slot as (byte position, grant bytes). While the
/// transmitter also sleeps nothing is granted and the previous start just
/// slides forward one cycle, so both ends stay aligned for the wake.
pub fn rx_sleep_allocate(
    book: &mut OltBook,
    onu: usize,
    requested_bytes: u64,
    tx_active: bool,
    cycle: u64,
) -> Option<(u64, u64)> {
    let (prev_cycle, pos) = book.t_ps[onu];
    debug_assert_eq!(prev_cycle + 1, cycle, "pinned-slot bookkeeping out of phase");
    book.t_ps[onu] = (prev_cycle + 1, pos);
    if tx_active {
        Some((pos, rx_sleep_grant(requested_bytes, book.fba_bytes)))
    } else {
        None
    }
}

/// Append one cycle's downstream arrivals for an ONU to its head-end buffer.
pub fn buffer_downstream(book: &mut OltBook, onu: usize, arrivals: &mut Vec<PacketRecord>) {
    for p in arrivals.drain(..) {
        book.ds_buffer_bytes[onu] += p.size_bytes as u64;
        book.ds_buffers[onu].push_back(p);
    }
}

/// Release buffered downstream packets FIFO into `deliver`, whole packets
/// only, stopping at the first head that does not fit in `share_bytes`.
pub fn deliver_downstream(
    book: &mut OltBook,
    onu: usize,
    share_bytes: u64,
    deliver: &mut Vec<PacketRecord>,
) {
    let mut budget = share_bytes;
    while let Some(head) = book.ds_buffers[onu].front() {
        let size = head.size_bytes as u64;
        if size > budget {
            break;
        }
        budget -= size;
        book.ds_buffer_bytes[onu] -= size;
        deliver.push(book.ds_buffers[onu].pop_front().unwrap());
    }
}

/// Absorb one cycle's downstream arrivals for an ONU and hand back what may
/// be sent this cycle.
///
/// Arrivals join the ONU's head-end buffer in order; if the receiver is
/// awake or listening, buffered-then-new packets are released FIFO into
/// `deliver` as long as whole packets fit in `share_bytes`. A sleeping
/// receiver gets nothing and the buffer just grows.
pub fn buffer_or_deliver_downstream(
    book: &mut OltBook,
    onu: usize,
    arrivals: &mut Vec<PacketRecord>,
    rx_sleeping: bool,
    share_bytes: u64,
    deliver: &mut Vec<PacketRecord>,
) {
    buffer_downstream(book, onu, arrivals);
    if !rx_sleeping {
        deliver_downstream(book, onu, share_bytes, deliver);
    }
}

/// Demand-proportional allocation with a byte-exact largest-remainder split.
///
/// When total demand fits, every request is granted in full. Otherwise each
/// ONU gets floor(request * capacity / total) and the bytes lost to
/// flooring go, one each, to the ONUs with the largest remainders (ties to
/// the lower index). Grants never exceed requests and always sum to
/// min(total demand, capacity).
pub fn dba_allocate(requests: &[u64], capacity_bytes: u64) -> Vec<u64> {
    let total: u128 = requests.iter().map(|&r| r as u128).sum();
    if total <= capacity_bytes as u128 {
        return requests.to_vec();
    }
    let cap = capacity_bytes as u128;
    let mut grants = Vec::with_capacity(requests.len());
    let mut remainders: Vec<(u128, usize)> = Vec::with_capacity(requests.len());
    let mut allocated: u128 = 0;
    for (i, &r) in requests.iter().enumerate() {
        let num = r as u128 * cap;
        let base = num / total;
        grants.push(base as u64);
        allocated += base;
        remainders.push((num % total, i));
    }
    let mut leftover = cap - allocated;
    // Largest remainder first; equal remainders favor the lower index.
    remainders.sort_unstable_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(rem, i) in &remainders {
        if leftover == 0 {
            break;
        }
        if rem > 0 {
            grants[i] += 1;
            leftover -= 1;
        }
    }
    grants
}

/// Fixed per-ONU share of the cycle: capacity / n, floored.
pub fn fba_share(capacity_bytes: u64, n_onus: usize) -> u64 {
    if n_onus == 0 {
        return 0;
    }
    capacity_bytes / n_onus as u64
}

/// Grant for an ONU whose receiver sleeps: its request capped at the fixed
/// share, so the pinned slot never outgrows its home window.
pub fn rx_sleep_grant(requested_bytes: u64, fba_bytes: u64) -> u64 {
    requested_bytes.min(fba_bytes)
}

/// Home position (byte offset within the cycle) of ONU `onu` out of `n`.
///
/// floor(capacity * onu / n) spaces the homes so that consecutive windows
/// are at least one fixed share apart; a grant capped at [`fba_share`]
/// therefore never reaches the next home.
pub fn home_position(capacity_bytes: u64, onu: usize, n_onus: usize) -> u64 {
    debug_assert!(onu < n_onus);
    (capacity_bytes as u128 * onu as u128 / n_onus as u128) as u64
}

/// One contiguous piece of an upstream grant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GrantSeg {
    /// Byte offset of the segment start within the cycle.
    pub pos: u64,
    pub bytes: u64,
}

/// Lay out one cycle: pinned grants stay at their positions, flexible
/// grants fill the gaps in ONU order, splitting across gaps when needed.
///
/// `grants[i]` is the byte grant of ONU i; `pinned_pos[i]` is Some(home
/// position) for ONUs that must sit at a fixed slot. Fails if pinned slots
/// overlap each other or the cycle end, or if the flexible grants do not
/// fit in the remaining space — all of which indicate an allocation bug
/// upstream of the layout, not an operating condition.
pub fn layout_grants(
    grants: &[u64],
    pinned_pos: &[Option<u64>],
    capacity_bytes: u64,
) -> Result<Vec<Vec<GrantSeg>>> {
    if grants.len() != pinned_pos.len() {
        return Err(Error::InvalidArgument("grants and pinned_pos lengths differ".into()));
    }
    let n = grants.len();
    let mut segs: Vec<Vec<GrantSeg>> = vec![Vec::new(); n];

    // Place pinned grants and validate they do not collide.
    let mut pinned: Vec<(u64, u64, usize)> = Vec::new();
    for i in 0..n {
        if let Some(pos) = pinned_pos[i] {
            if pos.saturating_add(grants[i]) > capacity_bytes {
                return Err(Error::InvalidArgument(format!(
                    "pinned grant of onu {i} ends beyond the cycle ({} > {capacity_bytes})",
                    pos + grants[i]
                )));
            }
            if grants[i] > 0 {
                pinned.push((pos, grants[i], i));
            }
        }
    }
    pinned.sort_unstable_by_key(|&(pos, _, _)| pos);
    for w in pinned.windows(2) {
        let (pos0, len0, onu0) = w[0];
        let (pos1, _, onu1) = w[1];
        if pos0 + len0 > pos1 {
            return Err(Error::InvalidArgument(format!(
                "pinned grants of onus {onu0} and {onu1} overlap"
            )));
        }
    }
    for &(pos, bytes, i) in &pinned {
        segs[i].push(GrantSeg { pos, bytes });
    }

    // Gaps between pinned slots, in time order.
    let mut gaps: Vec<(u64, u64)> = Vec::new(); // (pos, len)
    let mut cursor = 0u64;
    for &(pos, len, _) in &pinned {
        if pos > cursor {
            gaps.push((cursor, pos - cursor));
        }
        cursor = pos + len;
    }
    if cursor < capacity_bytes {
        gaps.push((cursor, capacity_bytes - cursor));
    }

    // Pack flexible grants into the gaps, front to back.
    let mut gap_i = 0usize;
    for i in 0..n {
        if pinned_pos[i].is_some() {
            continue;
        }
        let mut need = grants[i];
        while need > 0 {
            if gap_i >= gaps.len() {
                return Err(Error::InvalidArgument(format!(
                    "flexible grants exceed remaining cycle space at onu {i}"
                )));
            }
            let (gpos, glen) = gaps[gap_i];
            let take = need.min(glen);
            segs[i].push(GrantSeg { pos: gpos, bytes: take });
            need -= take;
            if take == glen {
                gap_i += 1;
            } else {
                gaps[gap_i] = (gpos + take, glen - take);
            }
        }
    }
    Ok(segs)
}
