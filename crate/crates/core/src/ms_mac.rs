//! Mobile-station side of the random access procedure.
//!
//! One [`MsContext`] per station. The state machine is driven only through
//! [`MsContext::handle`]; the `on_*` methods are thin wrappers around it.
//! The full transition table lives in `docs/ms-mac-transitions.md` and is
//! checked against this code by the `state_machine` integration test.
//!
//! `AwaitingGrant` covers two situations: the WT timer is running
//! (`wt_expiry` is set), or the station is armed for its next attempt
//! (`wt_expiry` is `None`) after a WT expiry or a full message retry.

use std::fmt;

use thiserror::Error;

use crate::tdma::SubslotAddress;
use crate::traffic::{MessageId, OutputQueue, SdsMessage, StationId};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MacError {
    #[error("subslot capacity must be at least one bit")]
    ZeroCapacity,
    #[error("payload must be at least one bit")]
    EmptyPayload,
    #[error("{0} must be in 1..=15, got {1}")]
    ParamOutOfRange(&'static str, u8),
    #[error("grant for {station} lists {got} subslots, expected {expected}")]
    GrantLengthMismatch { station: StationId, expected: usize, got: usize },
    #[error("unknown drop cause `{0}`")]
    UnknownDropCause(String),
    #[error("unknown access code `{0}`")]
    UnknownAccessCode(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AccessCode {
    A,
    B,
    C,
    D,
}

impl AccessCode {
    pub const ALL: [AccessCode; 4] = [AccessCode::A, AccessCode::B, AccessCode::C, AccessCode::D];
}

impl std::str::FromStr for AccessCode {
    type Err = MacError;
    fn from_str(s: &str) -> Result<Self, MacError> {
        match s.trim() {
            "A" | "a" => Ok(AccessCode::A),
            "B" | "b" => Ok(AccessCode::B),
            "C" | "c" => Ok(AccessCode::C),
            "D" | "d" => Ok(AccessCode::D),
            other => Err(MacError::UnknownAccessCode(other.to_owned())),
        }
    }
}

impl fmt::Display for AccessCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

/// WT, Nu and the access code announced for a station's group.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AccessParams {
    wt: u8,
    nu: u8,
    pub access_code: AccessCode,
}

impl AccessParams {
    pub fn new(wt: u8, nu: u8, access_code: AccessCode) -> Result<Self, MacError> {
        if !(1..=15).contains(&wt) {
            return Err(MacError::ParamOutOfRange("WT", wt));
        }
        if !(1..=15).contains(&nu) {
            return Err(MacError::ParamOutOfRange("Nu", nu));
        }
        Ok(AccessParams { wt, nu, access_code })
    }

    /// Waiting time for a grant, in TDMA frames.
    pub fn wt(&self) -> u8 {
        self.wt
    }

    /// Maximum number of random access attempts per message.
    pub fn nu(&self) -> u8 {
        self.nu
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MacConfig {
    pub access: AccessParams,
    /// Payload bits carried by one reserved subslot.
    pub subslot_capacity_bits: u32,
    /// Payload bits of the first fragment riding in MAC-ACCESS.
    pub access_capacity_bits: u32,
    pub sds_retry_limit: u32,
    pub ack_wait_frames: u32,
}

impl Default for MacConfig {
    fn default() -> Self {
        MacConfig {
            access: AccessParams::new(5, 5, AccessCode::A).expect("defaults in range"),
            subslot_capacity_bits: 92,
            access_capacity_bits: 92,
            sds_retry_limit: 3,
            ack_wait_frames: 4,
        }
    }
}

impl MacConfig {
    /// Total fragments for a payload: one in MAC-ACCESS plus the reserved ones.
    pub fn fragments_for(&self, payload_bits: u32) -> u32 {
        let rest = payload_bits.saturating_sub(self.access_capacity_bits);
        1 + rest.div_ceil(self.subslot_capacity_bits.max(1))
    }
}

pub fn fragments_needed(payload_bits: u32, subslot_capacity_bits: u32) -> Result<u32, MacError> {
    if subslot_capacity_bits == 0 {
        return Err(MacError::ZeroCapacity);
    }
    if payload_bits == 0 {
        return Err(MacError::EmptyPayload);
    }
    Ok(payload_bits.div_ceil(subslot_capacity_bits))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MacState {
    Idle,
    AwaitingGrant,
    SendingReserved,
    AwaitingAck,
}

impl MacState {
    pub const ALL: [MacState; 4] = [
        MacState::Idle,
        MacState::AwaitingGrant,
        MacState::SendingReserved,
        MacState::AwaitingAck,
    ];
}

impl fmt::Display for MacState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

/// Why a message left a station without being acknowledged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DropCause {
    HoldingTimer,
    NuExceeded,
    SdsRetryExceeded,
}

impl DropCause {
    pub const ALL: [DropCause; 3] = [DropCause::HoldingTimer, DropCause::NuExceeded, DropCause::SdsRetryExceeded];

    pub fn as_str(self) -> &'static str {
        match self {
            DropCause::HoldingTimer => "holding",
            DropCause::NuExceeded => "nu",
            DropCause::SdsRetryExceeded => "sds_retry",
        }
    }
}

impl std::str::FromStr for DropCause {
    type Err = MacError;
    fn from_str(s: &str) -> Result<Self, MacError> {
        DropCause::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| MacError::UnknownDropCause(s.to_owned()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccessBurst {
    pub station: StationId,
    pub message: MessageId,
    pub addr: SubslotAddress,
    pub reserved_requested: usize,
    pub serial: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FragmentBurst {
    pub station: StationId,
    pub message: MessageId,
    pub addr: SubslotAddress,
    /// 1-based; fragment 1 rode in MAC-ACCESS.
    pub fragment: usize,
    pub last: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MsEvent {
    MessageQueued(SdsMessage),
    AccessOpportunity { addr: SubslotAddress, code: AccessCode },
    WtExpiry,
    GrantReceived(Vec<SubslotAddress>),
    ReservedSubslot(SubslotAddress),
    AckReceived,
    AckTimeout,
}

impl MsEvent {
    pub fn label(&self) -> &'static str {
        match self {
            MsEvent::MessageQueued(_) => "MessageQueued",
            MsEvent::AccessOpportunity { .. } => "AccessOpportunity",
            MsEvent::WtExpiry => "WtExpiry",
            MsEvent::GrantReceived(_) => "GrantReceived",
            MsEvent::ReservedSubslot(_) => "ReservedSubslot",
            MsEvent::AckReceived => "AckReceived",
            MsEvent::AckTimeout => "AckTimeout",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MsAction {
    /// Event does not apply in the current state.
    Ignored,
    Enqueued,
    /// Opportunity seen but nothing to send, or the WT timer is still running.
    Wait,
    BackoffTick,
    SendAccess(AccessBurst),
    Rearm,
    Drop(SdsMessage, DropCause),
    StoreGrant,
    /// Nothing reserved: straight to waiting for the ACK.
    AwaitAck { ack_expiry: SubslotAddress },
    SendFragment(FragmentBurst),
    SendLastFragment { burst: FragmentBurst, ack_expiry: SubslotAddress },
    Deliver(SdsMessage),
    FullRetry,
}

impl MsAction {
    pub fn label(&self) -> &'static str {
        match self {
            MsAction::Ignored => "ignore",
            MsAction::Enqueued => "enqueue",
            MsAction::Wait => "wait",
            MsAction::BackoffTick => "backoff",
            MsAction::SendAccess(_) => "send MAC-ACCESS",
            MsAction::Rearm => "re-arm",
            MsAction::Drop(_, DropCause::NuExceeded) => "drop (Nu)",
            MsAction::Drop(_, DropCause::SdsRetryExceeded) => "drop (SDS retry)",
            MsAction::Drop(_, DropCause::HoldingTimer) => "drop (holding)",
            MsAction::StoreGrant => "store grant",
            MsAction::AwaitAck { .. } => "await ACK",
            MsAction::SendFragment(_) => "send fragment",
            MsAction::SendLastFragment { .. } => "send last fragment",
            MsAction::Deliver(_) => "deliver",
            MsAction::FullRetry => "full retry",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WtOutcome {
    Retry,
    MessageFailed,
    NotApplicable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AckEvent {
    AckReceived,
    AckTimeout,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AckOutcome {
    Delivered,
    FullRetry,
    MessageFailed,
    NotApplicable,
}

/// MAC state and output queue of one mobile station.
#[derive(Debug, Clone)]
pub struct MsContext {
    station: StationId,
    code: AccessCode,
    state: MacState,
    current: Option<SdsMessage>,
    access_attempts_used: u8,
    wt_expiry: Option<SubslotAddress>,
    ack_expiry: Option<SubslotAddress>,
    last_access: Option<SubslotAddress>,
    reserved_schedule: Vec<SubslotAddress>,
    fragments_sent: usize,
    backoff: u32,
    serial: u64,
    queue: OutputQueue,
}

impl MsContext {
    pub fn new(station: StationId, code: AccessCode) -> Self {
        MsContext {
            station,
            code,
            state: MacState::Idle,
            current: None,
            access_attempts_used: 0,
            wt_expiry: None,
            ack_expiry: None,
            last_access: None,
            reserved_schedule: Vec::new(),
            fragments_sent: 0,
            backoff: 0,
            serial: 0,
            queue: OutputQueue::new(station),
        }
    }

    pub fn station(&self) -> StationId {
        self.station
    }

    pub fn code(&self) -> AccessCode {
        self.code
    }

    pub fn state(&self) -> MacState {
        self.state
    }

    pub fn current_message(&self) -> Option<&SdsMessage> {
        self.current.as_ref()
    }

    pub fn access_attempts_used(&self) -> u8 {
        self.access_attempts_used
    }

    pub fn wt_expiry(&self) -> Option<SubslotAddress> {
        self.wt_expiry
    }

    pub fn ack_expiry(&self) -> Option<SubslotAddress> {
        self.ack_expiry
    }

    pub fn reserved_schedule(&self) -> &[SubslotAddress] {
        &self.reserved_schedule
    }

    /// Identifies the current access attempt; timers carry it so stale ones can be discarded.
    pub fn serial(&self) -> u64 {
        self.serial
    }

    pub fn queue(&self) -> &OutputQueue {
        &self.queue
    }

    pub fn queue_mut(&mut self) -> &mut OutputQueue {
        &mut self.queue
    }

    pub fn backoff(&self) -> u32 {
        self.backoff
    }

    /// Number of matching opportunities to let pass before the next MAC-ACCESS.
    pub fn set_backoff(&mut self, opportunities: u32) {
        self.backoff = opportunities;
    }

    /// Whether the station would transmit MAC-ACCESS at a matching opportunity (backoff aside).
    pub fn is_contending(&self) -> bool {
        match self.state {
            MacState::Idle => !self.queue.is_empty(),
            MacState::AwaitingGrant => self.wt_expiry.is_none(),
            MacState::SendingReserved | MacState::AwaitingAck => false,
        }
    }

    pub fn is_waiting_for_grant(&self) -> bool {
        self.state == MacState::AwaitingGrant && self.wt_expiry.is_some()
    }

    /// Takes the in-flight message out while it is waiting for access, if its holding deadline has passed.
    pub fn abort_if_expired(&mut self, now: crate::tdma::SimTime) -> Option<SdsMessage> {
        if self.state != MacState::AwaitingGrant {
            return None;
        }
        let expired = self
            .current
            .as_ref()
            .and_then(|m| m.holding_deadline)
            .is_some_and(|d| d < now);
        if expired {
            let msg = self.current.take();
            self.reset_to_idle();
            msg
        } else {
            None
        }
    }

    /// Leaves the station idle with its queue intact and returns whatever was in flight.
    pub fn take_in_flight(&mut self) -> Option<SdsMessage> {
        let msg = self.current.take();
        self.reset_to_idle();
        msg
    }

    fn reset_to_idle(&mut self) {
        self.state = MacState::Idle;
        self.current = None;
        self.access_attempts_used = 0;
        self.wt_expiry = None;
        self.ack_expiry = None;
        self.last_access = None;
        self.reserved_schedule.clear();
        self.fragments_sent = 0;
    }

    fn check_invariants(&self, cfg: &MacConfig) {
        debug_assert_eq!(self.state == MacState::Idle, self.current.is_none());
        assert!(self.access_attempts_used <= cfg.access.nu(), "attempt counter above Nu");
        if let Some(m) = &self.current {
            assert!(m.sds_retry_count <= cfg.sds_retry_limit, "SDS retry counter above limit");
        }
    }

    pub fn handle(&mut self, event: MsEvent, cfg: &MacConfig) -> Result<MsAction, MacError> {
        let action = match (self.state, event) {
            (_, MsEvent::MessageQueued(msg)) => {
                self.queue.push(msg);
                MsAction::Enqueued
            }
            (MacState::Idle | MacState::AwaitingGrant, MsEvent::AccessOpportunity { addr, code }) => {
                if code != self.code || !self.is_contending() {
                    MsAction::Wait
                } else if self.backoff > 0 {
                    self.backoff -= 1;
                    MsAction::BackoffTick
                } else {
                    self.transmit_access(addr, cfg)
                }
            }
            (MacState::AwaitingGrant, MsEvent::WtExpiry) if self.wt_expiry.is_some() => {
                if self.access_attempts_used < cfg.access.nu() {
                    self.wt_expiry = None;
                    MsAction::Rearm
                } else {
                    let msg = self.current.take().expect("AwaitingGrant carries a message");
                    self.reset_to_idle();
                    MsAction::Drop(msg, DropCause::NuExceeded)
                }
            }
            (MacState::AwaitingGrant, MsEvent::GrantReceived(grant)) if self.wt_expiry.is_some() => {
                let msg = self.current.as_ref().expect("AwaitingGrant carries a message");
                let expected = cfg.fragments_for(msg.payload_bits) as usize - 1;
                if grant.len() != expected {
                    return Err(MacError::GrantLengthMismatch {
                        station: self.station,
                        expected,
                        got: grant.len(),
                    });
                }
                self.wt_expiry = None;
                self.fragments_sent = 1;
                if grant.is_empty() {
                    let access = self.last_access.expect("access precedes grant");
                    let ack_expiry = access.advance_frames(u64::from(cfg.ack_wait_frames));
                    self.state = MacState::AwaitingAck;
                    self.ack_expiry = Some(ack_expiry);
                    MsAction::AwaitAck { ack_expiry }
                } else {
                    self.reserved_schedule = grant;
                    self.state = MacState::SendingReserved;
                    MsAction::StoreGrant
                }
            }
            (MacState::SendingReserved, MsEvent::ReservedSubslot(addr)) => {
                let idx = self.fragments_sent - 1;
                if self.reserved_schedule.get(idx) != Some(&addr) {
                    MsAction::Ignored
                } else {
                    self.fragments_sent += 1;
                    let last = idx + 1 == self.reserved_schedule.len();
                    let burst = FragmentBurst {
                        station: self.station,
                        message: self.current.as_ref().expect("in flight").id,
                        addr,
                        fragment: self.fragments_sent,
                        last,
                    };
                    if last {
                        let ack_expiry = addr.advance_frames(u64::from(cfg.ack_wait_frames));
                        self.state = MacState::AwaitingAck;
                        self.ack_expiry = Some(ack_expiry);
                        MsAction::SendLastFragment { burst, ack_expiry }
                    } else {
                        MsAction::SendFragment(burst)
                    }
                }
            }
            (MacState::AwaitingAck, MsEvent::AckReceived) => {
                let msg = self.current.take().expect("AwaitingAck carries a message");
                self.reset_to_idle();
                MsAction::Deliver(msg)
            }
            (MacState::AwaitingAck, MsEvent::AckTimeout) => {
                let msg = self.current.as_mut().expect("AwaitingAck carries a message");
                if msg.sds_retry_count < cfg.sds_retry_limit {
                    msg.sds_retry_count += 1;
                    self.state = MacState::AwaitingGrant;
                    self.access_attempts_used = 0;
                    self.wt_expiry = None;
                    self.ack_expiry = None;
                    self.reserved_schedule.clear();
                    self.fragments_sent = 0;
                    MsAction::FullRetry
                } else {
                    let msg = self.current.take().expect("checked above");
                    self.reset_to_idle();
                    MsAction::Drop(msg, DropCause::SdsRetryExceeded)
                }
            }
            _ => MsAction::Ignored,
        };
        self.check_invariants(cfg);
        Ok(action)
    }

    fn transmit_access(&mut self, addr: SubslotAddress, cfg: &MacConfig) -> MsAction {
        if self.state == MacState::Idle {
            let msg = self.queue.pop_front().expect("contending idle station has a queued message");
            self.current = Some(msg);
            self.access_attempts_used = 0;
        }
        let msg = self.current.as_ref().expect("message in flight");
        self.access_attempts_used += 1;
        self.serial += 1;
        self.state = MacState::AwaitingGrant;
        self.last_access = Some(addr);
        self.wt_expiry = Some(addr.advance_frames(u64::from(cfg.access.wt())));
        MsAction::SendAccess(AccessBurst {
            station: self.station,
            message: msg.id,
            addr,
            reserved_requested: cfg.fragments_for(msg.payload_bits) as usize - 1,
            serial: self.serial,
        })
    }

    pub fn on_access_opportunity(
        &mut self,
        addr: SubslotAddress,
        code: AccessCode,
        cfg: &MacConfig,
    ) -> Option<AccessBurst> {
        match self.handle(MsEvent::AccessOpportunity { addr, code }, cfg) {
            Ok(MsAction::SendAccess(burst)) => Some(burst),
            _ => None,
        }
    }

    /// Returns the dropped message alongside the outcome when Nu is exhausted.
    pub fn on_wt_expiry(&mut self, cfg: &MacConfig) -> (WtOutcome, Option<SdsMessage>) {
        match self.handle(MsEvent::WtExpiry, cfg) {
            Ok(MsAction::Rearm) => (WtOutcome::Retry, None),
            Ok(MsAction::Drop(msg, _)) => (WtOutcome::MessageFailed, Some(msg)),
            _ => (WtOutcome::NotApplicable, None),
        }
    }

    pub fn on_grant(&mut self, grant: Vec<SubslotAddress>, cfg: &MacConfig) -> Result<MsAction, MacError> {
        self.handle(MsEvent::GrantReceived(grant), cfg)
    }

    pub fn on_ack_or_timeout(&mut self, outcome: AckEvent, cfg: &MacConfig) -> (AckOutcome, Option<SdsMessage>) {
        let event = match outcome {
            AckEvent::AckReceived => MsEvent::AckReceived,
            AckEvent::AckTimeout => MsEvent::AckTimeout,
        };
        match self.handle(event, cfg) {
            Ok(MsAction::Deliver(msg)) => (AckOutcome::Delivered, Some(msg)),
            Ok(MsAction::FullRetry) => (AckOutcome::FullRetry, None),
            Ok(MsAction::Drop(msg, _)) => (AckOutcome::MessageFailed, Some(msg)),
            _ => (AckOutcome::NotApplicable, None),
        }
    }
}
