//! Event loop binding traffic, MAC, channel and metrics for one replication.
//!
//! Time advances over a priority queue keyed by
//! `(time, event class, station, sequence)`. The MCCH is driven by one
//! boundary event per subslot. At each boundary the BS serves one downlink
//! burst, hands out MAC-RESOURCE grants due at that instant, and then
//! resolves the uplink subslot (a reserved fragment or an open access
//! opportunity). Timers carry the access serial of the attempt that armed
//! them so that stale expiries are discarded.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap, HashSet};

use rand::Rng;
use rand_distr::StandardNormal;

use crate::bs_mac::{
    reassemble_and_ack, resolve_access, AccessOutcome, BsSchedule, DownlinkEvent, DownlinkKind, DownlinkPolicy,
    DownlinkQueues, Grant, PolicyRegistry, Reassembly, ReassemblyResult, SubslotDesignation,
};
use crate::channel::{decide_burst, ModelRegistry, RadioLink};
use crate::config::{BackoffClock, ConfigError, ScenarioConfig};
use crate::metrics::{Counts, FlowKey, MetricStore, RunSummary};
use crate::ms_mac::{fragments_needed, AccessBurst, DropCause, MacConfig, MacState, MsAction, MsContext, MsEvent};
use crate::rng::{StreamFactory, StreamId, StreamRng};
use crate::tdma::{SimTime, SubslotAddress};
use crate::traffic::{generate_report, generate_voice_call, sample_interarrival, MessageId, MessageKind, SdsMessage, StationId};

/// Same-instant ordering: boundaries first, then timers, call ends, arrivals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EventClass {
    Boundary,
    Timer,
    CallEnd,
    Arrival,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EventKey {
    pub time: SimTime,
    pub class: EventClass,
    pub station: u32,
    pub seq: u64,
}

#[derive(Debug)]
struct Entry<E> {
    key: EventKey,
    payload: E,
}

impl<E> PartialEq for Entry<E> {
    fn eq(&self, other: &Self) -> bool {
        self.key == other.key
    }
}
impl<E> Eq for Entry<E> {}
impl<E> PartialOrd for Entry<E> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl<E> Ord for Entry<E> {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.key.cmp(&other.key)
    }
}

/// Min-queue of events with a deterministic tiebreak.
#[derive(Debug)]
pub struct EventQueue<E> {
    heap: BinaryHeap<Reverse<Entry<E>>>,
    next_seq: u64,
    now: SimTime,
}

impl<E> Default for EventQueue<E> {
    fn default() -> Self {
        EventQueue {
            heap: BinaryHeap::new(),
            next_seq: 0,
            now: SimTime::ZERO,
        }
    }
}

impl<E> EventQueue<E> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    /// Panics when `time` lies before the last popped event.
    pub fn push(&mut self, time: SimTime, class: EventClass, station: u32, payload: E) -> EventKey {
        assert!(time >= self.now, "event scheduled in the past: {time} < {}", self.now);
        let key = EventKey {
            time,
            class,
            station,
            seq: self.next_seq,
        };
        self.next_seq += 1;
        self.heap.push(Reverse(Entry { key, payload }));
        key
    }

    pub fn peek_time(&self) -> Option<SimTime> {
        self.heap.peek().map(|e| e.0.key.time)
    }

    pub fn pop(&mut self) -> Option<(EventKey, E)> {
        let Reverse(Entry { key, payload }) = self.heap.pop()?;
        assert!(key.time >= self.now, "event queue went back in time");
        self.now = key.time;
        Some((key, payload))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Agent,
    Responder,
    Background,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Process {
    Report,
    Background,
    Voice,
    Feedback,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Event {
    Boundary(u64),
    WtExpiry { station: StationId, serial: u64 },
    AckTimeout { station: StationId, serial: u64 },
    CallEnd { station: StationId },
    Arrival { station: StationId, process: Process },
}

/// BS-side counters; uplink receptions, ACKs and forwarding jobs line up per message kind.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BsStats {
    pub opportunities: u64,
    pub access_success: u64,
    pub access_collisions: u64,
    pub access_silent: u64,
    pub grants_issued: u64,
    pub grants_lost: u64,
    pub uplink_received: BTreeMap<&'static str, u64>,
    pub uplink_discarded: u64,
    pub acks_enqueued: BTreeMap<&'static str, u64>,
    pub forwards_created: BTreeMap<&'static str, u64>,
    pub forwards_completed: u64,
    pub forwards_failed: u64,
    pub calls_started: u64,
    pub max_booked: usize,
}

pub fn kind_name(kind: MessageKind) -> &'static str {
    match kind {
        MessageKind::Report => "report",
        MessageKind::Background => "background",
        MessageKind::Feedback => "feedback",
        MessageKind::VoiceSetup => "voice_setup",
    }
}

/// Everything a replication produces.
#[derive(Debug, Clone)]
pub struct ReplicationOutput {
    pub summary: RunSummary,
    pub metrics: MetricStore,
    /// Per message kind over the whole run (warm-up included).
    pub ledger: BTreeMap<&'static str, Counts>,
    pub bs: BsStats,
    pub streams: Vec<StreamId>,
    pub events_processed: u64,
    pub horizon: SimTime,
    pub links: Vec<RadioLink>,
}

struct Streams {
    channel: StreamRng,
    backoff: StreamRng,
    report: StreamRng,
    background: StreamRng,
    voice: StreamRng,
    feedback: StreamRng,
    call_duration: StreamRng,
    destinations: StreamRng,
}

struct InFlightUplink {
    reassembly: Reassembly,
    message: SdsMessage,
    access_addr: SubslotAddress,
}

pub struct Simulation<'a> {
    cfg: &'a ScenarioConfig,
    mac: MacConfig,
    policy: Box<dyn DownlinkPolicy>,
    roles: Vec<Role>,
    stations: Vec<MsContext>,
    links: Vec<RadioLink>,
    schedule: BsSchedule,
    downlink: DownlinkQueues,
    pending_grants: BTreeMap<u64, Vec<Grant>>,
    uplinks: HashMap<(StationId, u64), InFlightUplink>,
    contenders: BTreeSet<u32>,
    /// Earliest subslot index at which a contender may transmit, for the subslot backoff clock.
    ready_at: HashMap<u32, u64>,
    call_durations: HashMap<MessageId, f64>,
    forwarded_reports: HashSet<MessageId>,
    events: EventQueue<Event>,
    metrics: MetricStore,
    ledger: BTreeMap<&'static str, Counts>,
    bs: BsStats,
    rng: Streams,
    factory: StreamFactory,
    next_message: u64,
    horizon: SimTime,
    events_processed: u64,
}

pub const AGENT: StationId = StationId(0);

impl<'a> Simulation<'a> {
    pub fn new(cfg: &'a ScenarioConfig, replication: u64) -> Result<Self, ConfigError> {
        cfg.validate()?;
        let mac = cfg.mac_config()?;
        let model = ModelRegistry::default()
            .build(&cfg.channel.model, &cfg.channel.environments)
            .map_err(|e| ConfigError::field("channel.model", e.to_string()))?;
        let policy = PolicyRegistry::default()
            .build(&cfg.downlink_policy)
            .ok_or_else(|| ConfigError::field("downlink.policy", "unknown policy"))?;

        let mut factory = StreamFactory::new(cfg.master_seed, replication);
        let mut placement = factory.stream("placement");
        let rng = Streams {
            channel: factory.stream("channel"),
            backoff: factory.stream("backoff"),
            report: factory.stream("arrivals.report"),
            background: factory.stream("arrivals.background"),
            voice: factory.stream("arrivals.voice"),
            feedback: factory.stream("arrivals.feedback"),
            call_duration: factory.stream("call_duration"),
            destinations: factory.stream("destinations"),
        };

        let t = &cfg.traffic;
        let mut roles = vec![Role::Agent];
        roles.extend((0..t.n_f).map(|_| Role::Responder));
        roles.extend((0..t.n_c).map(|_| Role::Background));

        let codes = &cfg.access.codes;
        let mut stations = Vec::with_capacity(roles.len());
        let mut links = Vec::with_capacity(roles.len());
        for i in 0..roles.len() {
            stations.push(MsContext::new(StationId(i as u32), codes[i % codes.len()]));
            // Uniform over the disc; shadowing scales one standard normal so placements line up across models.
            let u: f64 = placement.random();
            let z: f64 = placement.sample(StandardNormal);
            let distance = (cfg.channel.cell_radius_m * u.sqrt()).max(1.0);
            let link = RadioLink::new(distance, model.shadowing_sigma_db() * z, model.as_ref(), &cfg.channel.budget)
                .map_err(|e| ConfigError::field("channel", e.to_string()))?;
            links.push(link);
        }

        let ledger = [
            MessageKind::Report,
            MessageKind::Background,
            MessageKind::Feedback,
            MessageKind::VoiceSetup,
        ]
        .into_iter()
        .map(|k| (kind_name(k), Counts::default()))
        .collect();

        let mut sim = Simulation {
            cfg,
            mac,
            policy,
            roles,
            stations,
            links,
            schedule: BsSchedule::new(codes.clone(), !cfg.access.control_frame_access),
            downlink: DownlinkQueues::default(),
            pending_grants: BTreeMap::new(),
            uplinks: HashMap::new(),
            contenders: BTreeSet::new(),
            ready_at: HashMap::new(),
            call_durations: HashMap::new(),
            forwarded_reports: HashSet::new(),
            events: EventQueue::new(),
            metrics: MetricStore::new(cfg.warmup_end(), cfg.paoi_closure),
            ledger,
            bs: BsStats::default(),
            rng,
            factory,
            next_message: 0,
            horizon: cfg.horizon(),
            events_processed: 0,
        };
        sim.seed_events();
        Ok(sim)
    }

    fn seed_events(&mut self) {
        self.events.push(SimTime::ZERO, EventClass::Boundary, 0, Event::Boundary(0));
        for i in 0..self.roles.len() {
            let station = StationId(i as u32);
            let processes: &[Process] = match self.roles[i] {
                Role::Agent => &[Process::Feedback],
                Role::Responder => &[Process::Report],
                Role::Background => &[Process::Background, Process::Voice],
            };
            for &p in processes {
                self.schedule_arrival(station, p, SimTime::ZERO);
            }
        }
    }

    fn rate(&self, process: Process) -> f64 {
        let t = &self.cfg.traffic;
        match process {
            Process::Report => t.lambda_o,
            Process::Background => t.lambda_c(),
            Process::Voice => t.lambda_voice(),
            Process::Feedback if t.n_f == 0 => 0.0,
            Process::Feedback => t.lambda_f(),
        }
    }

    fn schedule_arrival(&mut self, station: StationId, process: Process, from: SimTime) {
        let rate = self.rate(process);
        if rate <= 0.0 {
            return;
        }
        let rng = match process {
            Process::Report => &mut self.rng.report,
            Process::Background => &mut self.rng.background,
            Process::Voice => &mut self.rng.voice,
            Process::Feedback => &mut self.rng.feedback,
        };
        let gap = sample_interarrival(rate, rng).expect("positive rate");
        let at = from + SimTime::from_secs_f64(gap);
        if at < self.horizon {
            self.events
                .push(at, EventClass::Arrival, station.0, Event::Arrival { station, process });
        }
    }

    pub fn run(mut self) -> ReplicationOutput {
        while let Some(time) = self.events.peek_time() {
            if time >= self.horizon {
                break;
            }
            let (_, event) = self.events.pop().expect("peeked");
            self.events_processed += 1;
            match event {
                Event::Boundary(index) => self.on_boundary(index),
                Event::WtExpiry { station, serial } => self.on_wt_expiry(station, serial),
                Event::AckTimeout { station, serial } => self.on_ack_timeout(station, serial),
                Event::CallEnd { station } => self.downlink.push(station, DownlinkKind::Teardown, 1),
                Event::Arrival { station, process } => self.on_arrival(station, process),
            }
        }
        self.finish()
    }

    fn now(&self) -> SimTime {
        self.events.now()
    }

    fn link_ok(&mut self, station: StationId) -> bool {
        let p = self.links[station.0 as usize].burst_error_prob;
        decide_burst(&mut self.rng.channel, p).expect("probability in range").delivered()
    }

    fn new_message_id(&mut self) -> MessageId {
        self.next_message += 1;
        MessageId(self.next_message)
    }

    fn on_arrival(&mut self, station: StationId, process: Process) {
        let now = self.now();
        let t = &self.cfg.traffic;
        let id = self.new_message_id();
        let msg = match process {
            Process::Report => generate_report(id, station, AGENT, now, t),
            Process::Background => {
                let destination = self.background_peer(station);
                SdsMessage {
                    id,
                    kind: MessageKind::Background,
                    source: station,
                    destination,
                    payload_bits: t.background_bits,
                    generated_at: now,
                    holding_deadline: None,
                    sds_retry_count: 0,
                }
            }
            Process::Feedback => {
                let k = self.rng.destinations.random_range(0..t.n_f);
                SdsMessage {
                    id,
                    kind: MessageKind::Feedback,
                    source: station,
                    destination: StationId(1 + k),
                    payload_bits: t.feedback_bits,
                    generated_at: now,
                    holding_deadline: None,
                    sds_retry_count: 0,
                }
            }
            Process::Voice => {
                let call = generate_voice_call(station, now, t, &mut self.rng.call_duration).expect("validated durations");
                self.call_durations.insert(id, call.duration_s);
                SdsMessage {
                    id,
                    kind: MessageKind::VoiceSetup,
                    source: station,
                    destination: station,
                    payload_bits: t.voice_setup_bits,
                    generated_at: now,
                    holding_deadline: None,
                    sds_retry_count: 0,
                }
            }
        };
        self.ledger.get_mut(kind_name(msg.kind)).expect("kind").generated += 1;
        if msg.kind == MessageKind::Report {
            self.metrics.record_generated(now);
        }
        self.stations[station.0 as usize].handle(MsEvent::MessageQueued(msg), &self.mac)
            .expect("enqueue never fails");
        self.purge_queue(station);
        self.refresh_contention(station);
        self.schedule_arrival(station, process, now);
    }

    fn background_peer(&mut self, source: StationId) -> StationId {
        let n_c = self.cfg.traffic.n_c;
        if n_c < 2 {
            return AGENT;
        }
        let first = 1 + self.cfg.traffic.n_f;
        let own = source.0 - first;
        let k = self.rng.destinations.random_range(0..n_c - 1);
        StationId(first + if k >= own { k + 1 } else { k })
    }

    fn station_mut(&mut self, station: StationId) -> &mut MsContext {
        &mut self.stations[station.0 as usize]
    }

    fn purge_queue(&mut self, station: StationId) {
        let now = self.now();
        let dropped = self.station_mut(station).queue_mut().purge_expired(now);
        for msg in dropped {
            self.record_drop(&msg, DropCause::HoldingTimer);
        }
    }

    /// Adds or removes the station from the contention set; joining draws a fresh backoff.
    fn refresh_contention(&mut self, station: StationId) {
        let contending = self.stations[station.0 as usize].is_contending();
        let present = self.contenders.contains(&station.0);
        if contending && !present {
            let ms = &self.stations[station.0 as usize];
            let window = if ms.state() == MacState::Idle {
                self.cfg.access.initial_window
            } else {
                self.cfg.access.frame_length
            };
            let backoff = self.rng.backoff.random_range(0..window);
            match self.cfg.access.backoff_clock {
                BackoffClock::Subslots => {
                    let idx = SubslotAddress::at_or_after(self.now()).index();
                    self.ready_at.insert(station.0, idx + u64::from(backoff));
                }
                BackoffClock::Opportunities => self.station_mut(station).set_backoff(backoff),
            }
            self.contenders.insert(station.0);
        } else if !contending && present {
            self.contenders.remove(&station.0);
        }
    }

    fn record_drop(&mut self, msg: &SdsMessage, cause: DropCause) {
        let c = self.ledger.get_mut(kind_name(msg.kind)).expect("kind");
        match cause {
            DropCause::HoldingTimer => c.dropped_holding += 1,
            DropCause::NuExceeded => c.dropped_nu += 1,
            DropCause::SdsRetryExceeded => c.dropped_sds_retry += 1,
        }
        if msg.kind == MessageKind::Report {
            let flow = FlowKey {
                source: msg.source,
                destination: msg.destination,
            };
            self.metrics.record_drop(flow, msg.generated_at, cause);
        }
    }

    fn record_delivery(&mut self, msg: &SdsMessage) {
        self.ledger.get_mut(kind_name(msg.kind)).expect("kind").delivered += 1;
        if msg.kind == MessageKind::Report {
            let flow = FlowKey {
                source: msg.source,
                destination: msg.destination,
            };
            let now = self.now();
            self.metrics
                .record_delivery(flow, msg.generated_at, now)
                .expect("ACK closures are time-ordered");
        }
    }

    fn on_boundary(&mut self, index: u64) {
        let addr = SubslotAddress::from_index(index);
        if !addr.is_control_frame() {
            self.serve_downlink(addr);
            self.deliver_grants(index);
        }
        match self.schedule.designation(addr) {
            SubslotDesignation::Open(code) => self.access_opportunity(addr, code),
            SubslotDesignation::ReservedUplink { station, serial } => self.reserved_subslot(addr, station, serial),
            SubslotDesignation::Control => {}
        }
        if index % 36 == 35 {
            self.schedule.prune_before(addr);
        }
        let next = SubslotAddress::from_index(index + 1).time();
        if next < self.horizon {
            self.events.push(next, EventClass::Boundary, 0, Event::Boundary(index + 1));
        }
    }

    fn serve_downlink(&mut self, addr: SubslotAddress) {
        let limit = self.mac.sds_retry_limit;
        let (links, channel) = (&self.links, &mut self.rng.channel);
        let event = self.downlink.serve_subslot(addr, self.policy.as_ref(), limit, |recipient| {
            let p = links[recipient.0 as usize].burst_error_prob;
            decide_burst(channel, p).expect("probability in range").delivered()
        });
        let Some(event) = event else { return };
        match event {
            DownlinkEvent::AckSent {
                station,
                serial,
                delivered,
            } => {
                if delivered {
                    self.ack_received(station, serial);
                }
            }
            DownlinkEvent::VoiceAssigned {
                station,
                serial,
                call_duration_s,
                delivered,
            } => {
                if delivered && self.ack_received(station, serial) {
                    self.bs.calls_started += 1;
                    let end = self.now() + SimTime::from_secs_f64(call_duration_s);
                    if end < self.horizon {
                        self.events
                            .push(end, EventClass::CallEnd, station.0, Event::CallEnd { station });
                    }
                }
            }
            DownlinkEvent::TeardownSent { .. } | DownlinkEvent::Fragment => {}
            DownlinkEvent::ForwardComplete { message, recipient } => {
                self.bs.forwards_completed += 1;
                if message.kind == MessageKind::Report && self.forwarded_reports.insert(message.id) {
                    let flow = FlowKey {
                        source: message.source,
                        destination: recipient,
                    };
                    let now = self.now();
                    self.metrics
                        .record_forwarded(flow, message.generated_at, now)
                        .expect("forwarding closures are time-ordered");
                }
            }
            DownlinkEvent::ForwardFailed { .. } => self.bs.forwards_failed += 1,
        }
    }

    /// Returns whether the ACK closed the station's current message.
    fn ack_received(&mut self, station: StationId, serial: u64) -> bool {
        let ms = &self.stations[station.0 as usize];
        if ms.serial() != serial || ms.state() != MacState::AwaitingAck {
            return false;
        }
        let action = self.stations[station.0 as usize].handle(MsEvent::AckReceived, &self.mac).expect("ack");
        let MsAction::Deliver(msg) = action else {
            unreachable!("AwaitingAck + ACK delivers")
        };
        self.record_delivery(&msg);
        self.purge_queue(station);
        self.refresh_contention(station);
        true
    }

    fn deliver_grants(&mut self, index: u64) {
        let Some(grants) = self.pending_grants.remove(&index) else {
            return;
        };
        for grant in grants {
            let station = grant.station;
            let ok = self.link_ok(station);
            let ms = &self.stations[station.0 as usize];
            let listening = ms.serial() == grant.serial && ms.is_waiting_for_grant();
            if !ok {
                self.bs.grants_lost += 1;
            }
            if ok && listening {
                let action = self.stations[station.0 as usize].handle(MsEvent::GrantReceived(grant.subslots.clone()), &self.mac)
                    .expect("grant length matches the request");
                if let MsAction::AwaitAck { ack_expiry } = action {
                    self.arm_ack_timer(station, grant.serial, ack_expiry);
                }
            }
            if grant.subslots.is_empty() {
                // Single-fragment message: MAC-ACCESS already carried everything.
                let up = self.uplinks.remove(&(station, grant.serial)).expect("uplink tracked");
                let deadline = up.access_addr.advance_frames(u64::from(self.mac.ack_wait_frames));
                self.complete_reception(up.message, station, grant.serial, deadline);
            }
        }
    }

    fn arm_ack_timer(&mut self, station: StationId, serial: u64, ack_expiry: SubslotAddress) {
        self.events.push(
            ack_expiry.time(),
            EventClass::Timer,
            station.0,
            Event::AckTimeout { station, serial },
        );
    }

    fn complete_reception(&mut self, msg: SdsMessage, station: StationId, serial: u64, deadline: SubslotAddress) {
        let kind = kind_name(msg.kind);
        *self.bs.uplink_received.entry(kind).or_default() += 1;
        if msg.kind == MessageKind::VoiceSetup {
            let call_duration_s = self.call_durations.get(&msg.id).copied().unwrap_or(0.0);
            self.downlink.push(
                station,
                DownlinkKind::VoiceAssignment {
                    serial,
                    deadline,
                    call_duration_s,
                },
                1,
            );
            return;
        }
        *self.bs.acks_enqueued.entry(kind).or_default() += 1;
        self.downlink.push(station, DownlinkKind::Ack { serial, deadline }, 1);
        let subslots = fragments_needed(msg.payload_bits, self.mac.subslot_capacity_bits).expect("validated payload");
        *self.bs.forwards_created.entry(kind).or_default() += 1;
        let recipient = msg.destination;
        self.downlink.push(recipient, DownlinkKind::Forward { message: msg }, subslots);
    }

    fn access_opportunity(&mut self, addr: SubslotAddress, code: crate::ms_mac::AccessCode) {
        self.bs.opportunities += 1;
        let now = addr.time();
        let mut bursts: Vec<AccessBurst> = Vec::new();
        let ids: Vec<u32> = self.contenders.iter().copied().collect();
        for id in ids {
            let station = StationId(id);
            if self.stations[id as usize].code() != code {
                continue;
            }
            if self.ready_at.get(&id).is_some_and(|&r| r > addr.index()) {
                continue;
            }
            self.purge_queue(station);
            if self.cfg.access.abort_in_flight {
                if let Some(msg) = self.station_mut(station).abort_if_expired(now) {
                    self.record_drop(&msg, DropCause::HoldingTimer);
                }
            }
            if !self.stations[id as usize].is_contending() {
                self.contenders.remove(&id);
                continue;
            }
            let action = self.stations[station.0 as usize].handle(MsEvent::AccessOpportunity { addr, code }, &self.mac)
                .expect("access handling");
            if let MsAction::SendAccess(burst) = action {
                let wt_expiry = self.stations[id as usize].wt_expiry().expect("WT armed after access");
                self.events.push(
                    wt_expiry.time(),
                    EventClass::Timer,
                    id,
                    Event::WtExpiry {
                        station,
                        serial: burst.serial,
                    },
                );
                self.contenders.remove(&id);
                bursts.push(burst);
            }
        }
        let mut delivered = |b: &AccessBurst| {
            let p = self.links[b.station.0 as usize].burst_error_prob;
            decide_burst(&mut self.rng.channel, p).expect("probability").delivered()
        };
        match resolve_access(&bursts, &mut delivered) {
            AccessOutcome::Idle => {
                if !bursts.is_empty() {
                    self.bs.access_silent += 1;
                }
            }
            AccessOutcome::Collision(_) => self.bs.access_collisions += 1,
            AccessOutcome::Success(station) => {
                self.bs.access_success += 1;
                let burst = bursts.into_iter().next().expect("one burst");
                let message = self.stations[station.0 as usize]
                    .current_message()
                    .expect("sender holds its message")
                    .clone();
                let grant = self.schedule.issue_grant(&burst, addr);
                self.bs.grants_issued += 1;
                self.bs.max_booked = self.bs.max_booked.max(self.schedule.booked());
                self.pending_grants
                    .entry(grant.sent_at.index())
                    .or_default()
                    .push(grant.clone());
                self.uplinks.insert(
                    (station, burst.serial),
                    InFlightUplink {
                        reassembly: Reassembly::new(grant),
                        message,
                        access_addr: addr,
                    },
                );
            }
        }
    }

    fn reserved_subslot(&mut self, addr: SubslotAddress, station: StationId, serial: u64) {
        let ms = &self.stations[station.0 as usize];
        let mut sent = false;
        if ms.serial() == serial && ms.state() == MacState::SendingReserved {
            match self.stations[station.0 as usize].handle(MsEvent::ReservedSubslot(addr), &self.mac)
                .expect("reserved handling")
            {
                MsAction::SendFragment(_) => sent = true,
                MsAction::SendLastFragment { ack_expiry, .. } => {
                    sent = true;
                    self.arm_ack_timer(station, serial, ack_expiry);
                }
                _ => {}
            }
        }
        let delivered = sent && self.link_ok(station);
        let key = (station, serial);
        let up = self.uplinks.get_mut(&key).expect("booked subslot has an uplink");
        up.reassembly.fragments.push(delivered);
        if !up.reassembly.is_complete() {
            return;
        }
        let up = self.uplinks.remove(&key).expect("present");
        match reassemble_and_ack(&up.reassembly.fragments) {
            ReassemblyResult::AckScheduled => {
                let deadline = addr.advance_frames(u64::from(self.mac.ack_wait_frames));
                self.complete_reception(up.message, station, serial, deadline);
            }
            ReassemblyResult::SilentDiscard => self.bs.uplink_discarded += 1,
        }
    }

    fn on_wt_expiry(&mut self, station: StationId, serial: u64) {
        let ms = &self.stations[station.0 as usize];
        if ms.serial() != serial || !ms.is_waiting_for_grant() {
            return;
        }
        match self.stations[station.0 as usize].handle(MsEvent::WtExpiry, &self.mac).expect("wt") {
            MsAction::Drop(msg, cause) => {
                self.record_drop(&msg, cause);
                self.purge_queue(station);
            }
            MsAction::Rearm => {
                if self.cfg.access.abort_in_flight {
                    let now = self.now();
                    if let Some(msg) = self.station_mut(station).abort_if_expired(now) {
                        self.record_drop(&msg, DropCause::HoldingTimer);
                        self.purge_queue(station);
                    }
                }
            }
            other => unreachable!("WT expiry produced {}", other.label()),
        }
        self.refresh_contention(station);
    }

    fn on_ack_timeout(&mut self, station: StationId, serial: u64) {
        let ms = &self.stations[station.0 as usize];
        if ms.serial() != serial || ms.state() != MacState::AwaitingAck {
            return;
        }
        match self.stations[station.0 as usize].handle(MsEvent::AckTimeout, &self.mac).expect("ack timeout") {
            MsAction::Drop(msg, cause) => {
                self.record_drop(&msg, cause);
                self.purge_queue(station);
            }
            MsAction::FullRetry => {}
            other => unreachable!("ACK timeout produced {}", other.label()),
        }
        self.refresh_contention(station);
    }

    fn finish(mut self) -> ReplicationOutput {
        let horizon = self.horizon;
        for i in 0..self.stations.len() {
            let dropped = self.stations[i].queue_mut().purge_expired(horizon);
            for msg in dropped {
                self.record_drop(&msg, DropCause::HoldingTimer);
            }
            let in_flight = self.stations[i].take_in_flight();
            let queued: Vec<SdsMessage> = self.stations[i].queue_mut().drain().collect();
            for msg in in_flight.into_iter().chain(queued) {
                self.ledger.get_mut(kind_name(msg.kind)).expect("kind").pending += 1;
                if msg.kind == MessageKind::Report {
                    self.metrics.record_pending(msg.generated_at);
                }
            }
        }
        for (kind, c) in &self.ledger {
            assert!(c.is_conserved(), "conservation violated for {kind}: {c:?}");
        }
        assert!(self.metrics.counts().is_conserved(), "metric conservation violated");
        let streams = self.factory.issued().collect();
        ReplicationOutput {
            summary: self.metrics.summary(),
            metrics: self.metrics,
            ledger: self.ledger,
            bs: self.bs,
            streams,
            events_processed: self.events_processed,
            horizon,
            links: self.links,
        }
    }
}

/// Runs one replication and returns its full output.
pub fn simulate(cfg: &ScenarioConfig, replication: u64) -> Result<ReplicationOutput, ConfigError> {
    Ok(Simulation::new(cfg, replication)?.run())
}

pub fn run_replication(cfg: &ScenarioConfig, replication: u64) -> Result<RunSummary, ConfigError> {
    simulate(cfg, replication).map(|o| o.summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn queue_orders_by_time_then_class_then_station() {
        let mut q = EventQueue::new();
        let t = SimTime::from_nanos(10);
        q.push(t, EventClass::Arrival, 1, "arrival");
        q.push(t, EventClass::Timer, 5, "timer5");
        q.push(t, EventClass::Timer, 2, "timer2");
        q.push(t, EventClass::Boundary, 9, "boundary");
        q.push(SimTime::from_nanos(5), EventClass::Arrival, 0, "early");
        let order: Vec<_> = std::iter::from_fn(|| q.pop().map(|(_, e)| e)).collect();
        assert_eq!(order, ["early", "boundary", "timer2", "timer5", "arrival"]);
    }

    #[test]
    #[should_panic(expected = "past")]
    fn queue_rejects_past_events() {
        let mut q = EventQueue::new();
        q.push(SimTime::from_nanos(10), EventClass::Timer, 0, ());
        q.pop();
        q.push(SimTime::from_nanos(9), EventClass::Timer, 0, ());
    }

    fn small(n_f: u32, n_c: u32) -> ScenarioConfig {
        let mut cfg = ScenarioConfig::default();
        cfg.traffic.n_f = n_f;
        cfg.traffic.n_c = n_c;
        cfg.run_length_multiframes = 200;
        cfg.warmup_multiframes = 10;
        cfg
    }

    #[test]
    fn horizon_of_a_full_run() {
        let cfg = ScenarioConfig::default();
        assert_eq!(cfg.horizon().as_nanos(), 1_020_024_000_000);
        assert!((cfg.horizon().as_secs_f64() - 1020.024).abs() < 1e-9);
    }

    #[test]
    fn empty_system_has_no_samples() {
        let out = simulate(&small(0, 0), 0).unwrap();
        assert_eq!(out.summary.counts, Counts::default());
        assert_eq!(out.summary.average_delay, None);
        assert_eq!(out.summary.failure_probability, None);
        assert_eq!(out.bs.access_success + out.bs.access_collisions, 0);
        // One boundary per subslot and nothing else.
        assert_eq!(out.events_processed, 200 * 36);
    }

    #[test]
    fn same_seed_same_summary() {
        let cfg = small(5, 50);
        let a = simulate(&cfg, 3).unwrap();
        let b = simulate(&cfg, 3).unwrap();
        assert_eq!(a.summary, b.summary);
        assert_eq!(a.bs, b.bs);
        let c = simulate(&cfg, 4).unwrap();
        assert_ne!(a.summary, c.summary);
    }

    #[test]
    fn streams_differ_across_replications() {
        let cfg = small(1, 1);
        let a = simulate(&cfg, 0).unwrap().streams;
        let b = simulate(&cfg, 1).unwrap().streams;
        for s in &a {
            assert!(b.iter().all(|t| t.key() != s.key()));
        }
    }

    #[test]
    fn bs_counters_line_up_for_reports() {
        let out = simulate(&small(10, 100), 1).unwrap();
        let rx = out.bs.uplink_received.get("report").copied().unwrap_or(0);
        assert!(rx > 0);
        assert_eq!(out.bs.acks_enqueued.get("report").copied().unwrap_or(0), rx);
        assert_eq!(out.bs.forwards_created.get("report").copied().unwrap_or(0), rx);
    }
}
