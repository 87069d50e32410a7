//! Base-station side: access-code marking, contention resolution, grants,
//! reassembly and downlink scheduling on the MCCH.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use crate::ms_mac::{AccessBurst, AccessCode};
use crate::tdma::{reserved_run, SubslotAddress};
use crate::traffic::{MessageId, SdsMessage, StationId};

/// Uplink designation of one MCCH subslot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubslotDesignation {
    Open(AccessCode),
    ReservedUplink { station: StationId, serial: u64 },
    /// Frame 18: control signalling only.
    Control,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AccessOutcome {
    Idle,
    Success(StationId),
    Collision(usize),
}

/// MAC-RESOURCE contents plus the subslot it goes out on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grant {
    pub station: StationId,
    pub serial: u64,
    pub message: MessageId,
    pub sent_at: SubslotAddress,
    pub subslots: Vec<SubslotAddress>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReassemblyResult {
    AckScheduled,
    SilentDiscard,
}

/// Code used at position `k` of the non-control subslot sequence.
fn rotation_index(addr: SubslotAddress) -> u64 {
    u64::from(addr.multiframe()) * 34 + u64::from(addr.frame() - 1) * 2 + u64::from(addr.subslot())
}

/// Uplink booking ledger plus access-code marking.
#[derive(Debug, Clone)]
pub struct BsSchedule {
    pattern: Vec<AccessCode>,
    skip_control_frame: bool,
    uplink: BTreeMap<u64, SubslotDesignation>,
    tail: Option<SubslotAddress>,
}

impl BsSchedule {
    /// Panics on an empty pattern.
    pub fn new(pattern: Vec<AccessCode>, skip_control_frame: bool) -> Self {
        assert!(!pattern.is_empty(), "access code pattern must not be empty");
        BsSchedule {
            pattern,
            skip_control_frame,
            uplink: BTreeMap::new(),
            tail: None,
        }
    }

    pub fn pattern(&self) -> &[AccessCode] {
        &self.pattern
    }

    pub fn designation(&self, addr: SubslotAddress) -> SubslotDesignation {
        if let Some(d) = self.uplink.get(&addr.index()) {
            return *d;
        }
        if addr.is_control_frame() && self.skip_control_frame {
            return SubslotDesignation::Control;
        }
        let k = if addr.is_control_frame() {
            // Only reachable with control-frame access enabled; append after the 34 regular subslots.
            u64::from(addr.multiframe()) * 36 + 34 + u64::from(addr.subslot())
        } else {
            rotation_index(addr)
        };
        SubslotDesignation::Open(self.pattern[(k % self.pattern.len() as u64) as usize])
    }

    pub fn opportunity_code(&self, addr: SubslotAddress) -> Option<AccessCode> {
        match self.designation(addr) {
            SubslotDesignation::Open(code) => Some(code),
            _ => None,
        }
    }

    /// Books `n_reserved` contiguous uplink subslots starting no earlier than the frame after `now`.
    pub fn issue_grant(&mut self, access: &AccessBurst, now: SubslotAddress) -> Grant {
        let sent_at = now.start_of_next_frame(true);
        let subslots = if access.reserved_requested == 0 {
            Vec::new()
        } else {
            let start = match self.tail {
                Some(tail) if tail >= sent_at => crate::tdma::next_mcch_subslot(tail, true),
                _ => sent_at,
            };
            let run = reserved_run(start, access.reserved_requested).expect("n_reserved >= 1");
            for a in &run {
                let previous = self.uplink.insert(
                    a.index(),
                    SubslotDesignation::ReservedUplink {
                        station: access.station,
                        serial: access.serial,
                    },
                );
                assert!(previous.is_none(), "uplink subslot {a} double-booked");
            }
            self.tail = run.last().copied();
            run
        };
        Grant {
            station: access.station,
            serial: access.serial,
            message: access.message,
            sent_at,
            subslots,
        }
    }

    /// Forgets bookings strictly before `addr`.
    pub fn prune_before(&mut self, addr: SubslotAddress) {
        self.uplink = self.uplink.split_off(&addr.index());
    }

    pub fn booked(&self) -> usize {
        self.uplink.len()
    }
}

/// Code marking of every subslot in multiframes `0..horizon`.
pub fn mark_opportunities(schedule: &BsSchedule, horizon_multiframes: u32) -> Vec<(SubslotAddress, AccessCode)> {
    let last = u64::from(horizon_multiframes) * 36;
    (0..last)
        .map(SubslotAddress::from_index)
        .filter_map(|a| schedule.opportunity_code(a).map(|c| (a, c)))
        .collect()
}

/// Contention at one access subslot; no capture.
pub fn resolve_access<F>(bursts: &[AccessBurst], mut delivered: F) -> AccessOutcome
where
    F: FnMut(&AccessBurst) -> bool,
{
    match bursts {
        [] => AccessOutcome::Idle,
        [one] if delivered(one) => AccessOutcome::Success(one.station),
        // Lost on the channel: the BS hears nothing.
        [_] => AccessOutcome::Idle,
        many => AccessOutcome::Collision(many.len()),
    }
}

/// `fragments[0]` is the MAC-ACCESS fragment.
pub fn reassemble_and_ack(fragments: &[bool]) -> ReassemblyResult {
    if !fragments.is_empty() && fragments.iter().all(|&ok| ok) {
        ReassemblyResult::AckScheduled
    } else {
        ReassemblyResult::SilentDiscard
    }
}

/// Uplink message being collected from reserved subslots.
#[derive(Debug, Clone)]
pub struct Reassembly {
    pub grant: Grant,
    pub fragments: Vec<bool>,
}

impl Reassembly {
    pub fn new(grant: Grant) -> Self {
        let mut fragments = Vec::with_capacity(grant.subslots.len() + 1);
        fragments.push(true);
        Reassembly { grant, fragments }
    }

    pub fn is_complete(&self) -> bool {
        self.fragments.len() == self.grant.subslots.len() + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum JobClass {
    Voice,
    Ack,
    Sds,
}

impl JobClass {
    pub const ALL: [JobClass; 3] = [JobClass::Voice, JobClass::Ack, JobClass::Sds];
}

#[derive(Debug, Clone, PartialEq)]
pub enum DownlinkKind {
    Ack { serial: u64, deadline: SubslotAddress },
    VoiceAssignment { serial: u64, deadline: SubslotAddress, call_duration_s: f64 },
    Teardown,
    Forward { message: SdsMessage },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DownlinkJob {
    pub seq: u64,
    pub recipient: StationId,
    pub kind: DownlinkKind,
    pub subslots_needed: u32,
    pub subslots_sent: u32,
    pub all_delivered: bool,
    pub attempts: u32,
}

impl DownlinkJob {
    pub fn class(&self) -> JobClass {
        match self.kind {
            DownlinkKind::VoiceAssignment { .. } | DownlinkKind::Teardown => JobClass::Voice,
            DownlinkKind::Ack { .. } => JobClass::Ack,
            DownlinkKind::Forward { .. } => JobClass::Sds,
        }
    }
}

/// What finished on one downlink subslot.
#[derive(Debug, Clone, PartialEq)]
pub enum DownlinkEvent {
    AckSent { station: StationId, serial: u64, delivered: bool },
    VoiceAssigned { station: StationId, serial: u64, call_duration_s: f64, delivered: bool },
    TeardownSent { station: StationId },
    ForwardComplete { message: SdsMessage, recipient: StationId },
    ForwardFailed { message: SdsMessage, recipient: StationId },
    /// A fragment went out; the job continues.
    Fragment,
}

/// Picks which class gets the next downlink subslot.
pub trait DownlinkPolicy: fmt::Debug + Send + Sync {
    fn name(&self) -> &str;
    fn select(&self, queues: &DownlinkQueues) -> Option<JobClass>;
}

/// Strict priority over a fixed class order.
#[derive(Debug, Clone)]
pub struct PriorityPolicy {
    name: &'static str,
    order: [JobClass; 3],
}

impl DownlinkPolicy for PriorityPolicy {
    fn name(&self) -> &str {
        self.name
    }

    fn select(&self, queues: &DownlinkQueues) -> Option<JobClass> {
        self.order.iter().copied().find(|c| !queues.class(*c).is_empty())
    }
}

/// Oldest job first regardless of class.
#[derive(Debug, Clone, Copy, Default)]
pub struct FifoPolicy;

impl DownlinkPolicy for FifoPolicy {
    fn name(&self) -> &str {
        "fifo"
    }

    fn select(&self, queues: &DownlinkQueues) -> Option<JobClass> {
        JobClass::ALL
            .iter()
            .copied()
            .filter_map(|c| queues.class(c).front().map(|j| (j.seq, c)))
            .min()
            .map(|(_, c)| c)
    }
}

pub type PolicyFactory = fn() -> Box<dyn DownlinkPolicy>;

#[derive(Debug, Clone)]
pub struct PolicyRegistry {
    factories: BTreeMap<String, PolicyFactory>,
}

impl Default for PolicyRegistry {
    fn default() -> Self {
        let mut r = PolicyRegistry {
            factories: BTreeMap::new(),
        };
        r.register("priority", || {
            Box::new(PriorityPolicy {
                name: "priority",
                order: [JobClass::Voice, JobClass::Ack, JobClass::Sds],
            })
        });
        r.register("ack-first", || {
            Box::new(PriorityPolicy {
                name: "ack-first",
                order: [JobClass::Ack, JobClass::Voice, JobClass::Sds],
            })
        });
        r.register("fifo", || Box::new(FifoPolicy));
        r
    }
}

impl PolicyRegistry {
    pub fn register(&mut self, name: &str, factory: PolicyFactory) {
        self.factories.insert(name.to_owned(), factory);
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }

    pub fn build(&self, name: &str) -> Option<Box<dyn DownlinkPolicy>> {
        self.factories.get(name).map(|f| f())
    }
}

#[derive(Debug, Default, Clone)]
pub struct DownlinkQueues {
    voice: VecDeque<DownlinkJob>,
    ack: VecDeque<DownlinkJob>,
    sds: VecDeque<DownlinkJob>,
    next_seq: u64,
}

impl DownlinkQueues {
    pub fn class(&self, class: JobClass) -> &VecDeque<DownlinkJob> {
        match class {
            JobClass::Voice => &self.voice,
            JobClass::Ack => &self.ack,
            JobClass::Sds => &self.sds,
        }
    }

    fn class_mut(&mut self, class: JobClass) -> &mut VecDeque<DownlinkJob> {
        match class {
            JobClass::Voice => &mut self.voice,
            JobClass::Ack => &mut self.ack,
            JobClass::Sds => &mut self.sds,
        }
    }

    pub fn len(&self) -> usize {
        self.voice.len() + self.ack.len() + self.sds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn push(&mut self, recipient: StationId, kind: DownlinkKind, subslots_needed: u32) {
        let job = DownlinkJob {
            seq: self.next_seq,
            recipient,
            kind,
            subslots_needed: subslots_needed.max(1),
            subslots_sent: 0,
            all_delivered: true,
            attempts: 1,
        };
        self.next_seq += 1;
        let class = job.class();
        self.class_mut(class).push_back(job);
    }

    /// Drops queued ACKs and assignments whose station has already timed out.
    fn drop_stale(&mut self, now: SubslotAddress) {
        let stale = |j: &DownlinkJob| match j.kind {
            DownlinkKind::Ack { deadline, .. } | DownlinkKind::VoiceAssignment { deadline, .. } => deadline < now,
            _ => false,
        };
        self.ack.retain(|j| !stale(j));
        self.voice.retain(|j| !stale(j));
    }

    /// Sends one burst on the downlink subslot `now`.
    ///
    /// `delivered` decides the channel outcome toward a recipient. A
    /// forwarded SDS with a lost fragment is restarted until
    /// `sds_retry_limit` retries are used up.
    pub fn serve_subslot<F>(
        &mut self,
        now: SubslotAddress,
        policy: &dyn DownlinkPolicy,
        sds_retry_limit: u32,
        mut delivered: F,
    ) -> Option<DownlinkEvent>
    where
        F: FnMut(StationId) -> bool,
    {
        self.drop_stale(now);
        let class = policy.select(self)?;
        let queue = self.class_mut(class);
        let job = queue.front_mut().expect("policy picked a nonempty class");
        let ok = delivered(job.recipient);
        job.subslots_sent += 1;
        job.all_delivered &= ok;
        if job.subslots_sent < job.subslots_needed {
            return Some(DownlinkEvent::Fragment);
        }
        if let DownlinkKind::Forward { .. } = job.kind {
            if !job.all_delivered && job.attempts <= sds_retry_limit {
                job.attempts += 1;
                job.subslots_sent = 0;
                job.all_delivered = true;
                return Some(DownlinkEvent::Fragment);
            }
        }
        let job = queue.pop_front().expect("front exists");
        let station = job.recipient;
        Some(match job.kind {
            DownlinkKind::Ack { serial, .. } => DownlinkEvent::AckSent {
                station,
                serial,
                delivered: ok,
            },
            DownlinkKind::VoiceAssignment {
                serial,
                call_duration_s,
                ..
            } => DownlinkEvent::VoiceAssigned {
                station,
                serial,
                call_duration_s,
                delivered: ok,
            },
            DownlinkKind::Teardown => DownlinkEvent::TeardownSent { station },
            DownlinkKind::Forward { message } if job.all_delivered => DownlinkEvent::ForwardComplete {
                message,
                recipient: station,
            },
            DownlinkKind::Forward { message } => DownlinkEvent::ForwardFailed {
                message,
                recipient: station,
            },
        })
    }
}
