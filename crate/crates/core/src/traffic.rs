//! Arrival processes, message construction and per-station output queues.

use std::collections::VecDeque;
use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, Exp, Uniform};
use thiserror::Error;

use crate::tdma::SimTime;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrafficError {
    #[error("arrival rate must be positive, got {0}")]
    NonPositiveRate(f64),
    #[error("call duration bounds [{0}, {1}] are not a valid interval")]
    BadCallDuration(f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StationId(pub u32);

impl fmt::Display for StationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ms{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MessageId(pub u64);

/// What an uplink transaction carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MessageKind {
    /// Monitoring report from a first responder to the remote agent.
    Report,
    /// SDS between two background stations.
    Background,
    /// 1-byte notification from the remote agent to a first responder.
    Feedback,
    /// Call-setup signalling of a background voice call.
    VoiceSetup,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdsMessage {
    pub id: MessageId,
    pub kind: MessageKind,
    pub source: StationId,
    pub destination: StationId,
    pub payload_bits: u32,
    pub generated_at: SimTime,
    pub holding_deadline: Option<SimTime>,
    pub sds_retry_count: u32,
}

/// Holding-timer period applied to first-responder report queues.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HoldingTimer {
    Disabled,
    Fixed(f64),
    /// Period tracks the report rate: 1 / lambda_o.
    InverseRate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrafficConfig {
    /// Number of first responders (N_F).
    pub n_f: u32,
    /// Number of background stations (N_C).
    pub n_c: u32,
    /// Report rate per first responder, messages per second.
    pub lambda_o: f64,
    pub lambda_c_per_hour: f64,
    pub lambda_voice_per_hour: f64,
    /// Feedback rate from the remote agent; `None` means N_F / 60 s.
    pub lambda_f: Option<f64>,
    pub call_duration_min_s: f64,
    pub call_duration_max_s: f64,
    pub holding_timer: HoldingTimer,
    pub report_bits: u32,
    pub background_bits: u32,
    pub feedback_bits: u32,
    pub voice_setup_bits: u32,
}

impl Default for TrafficConfig {
    fn default() -> Self {
        TrafficConfig {
            n_f: 10,
            n_c: 100,
            lambda_o: 0.1,
            lambda_c_per_hour: 10.0,
            lambda_voice_per_hour: 3.0,
            lambda_f: None,
            call_duration_min_s: 20.0,
            call_duration_max_s: 40.0,
            holding_timer: HoldingTimer::Disabled,
            report_bits: 800,
            background_bits: 800,
            feedback_bits: 8,
            voice_setup_bits: 92,
        }
    }
}

impl TrafficConfig {
    /// N_tot = N_C + N_F + 1 (the remote agent).
    pub fn n_tot(&self) -> u32 {
        self.n_c + self.n_f + 1
    }

    pub fn lambda_c(&self) -> f64 {
        self.lambda_c_per_hour / 3600.0
    }

    pub fn lambda_voice(&self) -> f64 {
        self.lambda_voice_per_hour / 3600.0
    }

    pub fn lambda_f(&self) -> f64 {
        self.lambda_f.unwrap_or(f64::from(self.n_f) / 60.0)
    }

    pub fn holding_period(&self) -> Option<SimTime> {
        match self.holding_timer {
            HoldingTimer::Disabled => None,
            HoldingTimer::Fixed(secs) => Some(SimTime::from_secs_f64(secs)),
            HoldingTimer::InverseRate if self.lambda_o > 0.0 => Some(SimTime::from_secs_f64(1.0 / self.lambda_o)),
            HoldingTimer::InverseRate => None,
        }
    }
}

/// Exponential inter-arrival time (seconds) of a Poisson process with `rate` events per second.
pub fn sample_interarrival<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> Result<f64, TrafficError> {
    if rate.is_nan() || rate <= 0.0 || !rate.is_finite() {
        return Err(TrafficError::NonPositiveRate(rate));
    }
    let exp = Exp::new(rate).map_err(|_| TrafficError::NonPositiveRate(rate))?;
    Ok(exp.sample(rng))
}

pub fn generate_report(
    id: MessageId,
    responder: StationId,
    agent: StationId,
    t: SimTime,
    cfg: &TrafficConfig,
) -> SdsMessage {
    SdsMessage {
        id,
        kind: MessageKind::Report,
        source: responder,
        destination: agent,
        payload_bits: cfg.report_bits,
        generated_at: t,
        holding_deadline: cfg.holding_period().map(|h| t + h),
        sds_retry_count: 0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoiceCall {
    pub station: StationId,
    pub setup_at: SimTime,
    pub duration_s: f64,
}

pub fn generate_voice_call<R: Rng + ?Sized>(
    ms: StationId,
    t: SimTime,
    cfg: &TrafficConfig,
    rng: &mut R,
) -> Result<VoiceCall, TrafficError> {
    let (lo, hi) = (cfg.call_duration_min_s, cfg.call_duration_max_s);
    let dist = Uniform::new_inclusive(lo, hi).map_err(|_| TrafficError::BadCallDuration(lo, hi))?;
    Ok(VoiceCall {
        station: ms,
        setup_at: t,
        duration_s: dist.sample(rng),
    })
}

/// FIFO output queue of one station.
#[derive(Debug, Clone)]
pub struct OutputQueue {
    owner: StationId,
    pending: VecDeque<SdsMessage>,
}

impl OutputQueue {
    pub fn new(owner: StationId) -> Self {
        OutputQueue {
            owner,
            pending: VecDeque::new(),
        }
    }

    pub fn owner(&self) -> StationId {
        self.owner
    }

    pub fn push(&mut self, msg: SdsMessage) {
        debug_assert!(self
            .pending
            .back()
            .is_none_or(|last| last.generated_at <= msg.generated_at));
        self.pending.push_back(msg);
    }

    pub fn pop_front(&mut self) -> Option<SdsMessage> {
        self.pending.pop_front()
    }

    pub fn front(&self) -> Option<&SdsMessage> {
        self.pending.front()
    }

    pub fn len(&self) -> usize {
        self.pending.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pending.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &SdsMessage> {
        self.pending.iter()
    }

    pub fn drain(&mut self) -> impl Iterator<Item = SdsMessage> + '_ {
        self.pending.drain(..)
    }

    /// Removes every message whose holding deadline is strictly before `now`.
    pub fn purge_expired(&mut self, now: SimTime) -> Vec<SdsMessage> {
        if self.pending.iter().all(|m| !is_expired(m, now)) {
            return Vec::new();
        }
        let (dropped, kept): (Vec<_>, Vec<_>) = self.pending.drain(..).partition(|m| is_expired(m, now));
        self.pending = kept.into();
        dropped
    }
}

fn is_expired(msg: &SdsMessage, now: SimTime) -> bool {
    msg.holding_deadline.is_some_and(|d| d < now)
}

/// Convenience used by [`purge_expired`] callers that hold the queue by value.
pub fn purge_expired(queue: &mut OutputQueue, now: SimTime) -> Vec<SdsMessage> {
    queue.purge_expired(now)
}
