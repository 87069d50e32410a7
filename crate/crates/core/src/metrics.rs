//! Delay, failure probability and peak Age-of-Information bookkeeping.
//!
//! A [`MetricStore`] belongs to one replication. Only messages generated
//! after the warm-up instant produce samples and count toward totals; the
//! per-flow "last delivered generation time" is tracked from time zero so
//! the first post-warm-up PAoI sample has its true predecessor.

use std::collections::BTreeMap;

use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::ms_mac::DropCause;
use crate::tdma::SimTime;
use crate::traffic::StationId;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("closure at {closed} precedes generation at {generated}")]
    ClosedBeforeGenerated { generated: SimTime, closed: SimTime },
    #[error("closure at {closed} precedes the previous closure at {previous} on the same flow")]
    OutOfOrder { previous: SimTime, closed: SimTime },
    #[error("aggregation needs at least two runs, got {0}")]
    InsufficientData(usize),
    #[error("confidence level must be in (0, 1), got {0}")]
    BadConfidence(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FlowKey {
    pub source: StationId,
    pub destination: StationId,
}

/// Where a report counts as received for PAoI purposes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PaoiClosure {
    AtAck,
    AtForwardingComplete,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeliverySample {
    pub delay: f64,
    pub paoi: Option<f64>,
}

/// Delivery and drop history of one (source, destination) flow.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowRecord {
    pub flow: FlowKey,
    /// (generated_at, closed_at), in closure order.
    pub deliveries: Vec<(SimTime, SimTime)>,
    pub drops: Vec<(SimTime, DropCause)>,
    pub last_delivered_generation_time: Option<SimTime>,
}

impl FlowRecord {
    pub fn new(flow: FlowKey) -> Self {
        FlowRecord {
            flow,
            deliveries: Vec::new(),
            drops: Vec::new(),
            last_delivered_generation_time: None,
        }
    }

    pub fn record_delivery(&mut self, generated_at: SimTime, closed_at: SimTime) -> Result<DeliverySample, MetricsError> {
        if closed_at < generated_at {
            return Err(MetricsError::ClosedBeforeGenerated {
                generated: generated_at,
                closed: closed_at,
            });
        }
        if let Some(&(_, previous)) = self.deliveries.last() {
            if closed_at < previous {
                return Err(MetricsError::OutOfOrder {
                    previous,
                    closed: closed_at,
                });
            }
        }
        let paoi = self
            .last_delivered_generation_time
            .map(|prev| closed_at.as_secs_f64() - prev.as_secs_f64());
        self.deliveries.push((generated_at, closed_at));
        self.last_delivered_generation_time = Some(generated_at);
        Ok(DeliverySample {
            delay: closed_at.as_secs_f64() - generated_at.as_secs_f64(),
            paoi,
        })
    }

    pub fn record_drop(&mut self, generated_at: SimTime, cause: DropCause) {
        self.drops.push((generated_at, cause));
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counts {
    pub generated: u64,
    pub delivered: u64,
    pub dropped_holding: u64,
    pub dropped_nu: u64,
    pub dropped_sds_retry: u64,
    pub pending: u64,
}

impl Counts {
    pub fn dropped(&self) -> u64 {
        self.dropped_holding + self.dropped_nu + self.dropped_sds_retry
    }

    pub fn dropped_by(&self, cause: DropCause) -> u64 {
        match cause {
            DropCause::HoldingTimer => self.dropped_holding,
            DropCause::NuExceeded => self.dropped_nu,
            DropCause::SdsRetryExceeded => self.dropped_sds_retry,
        }
    }

    /// generated = delivered + dropped (all causes) + pending.
    pub fn is_conserved(&self) -> bool {
        self.generated == self.delivered + self.dropped() + self.pending
    }

    pub fn add(&mut self, other: &Counts) {
        self.generated += other.generated;
        self.delivered += other.delivered;
        self.dropped_holding += other.dropped_holding;
        self.dropped_nu += other.dropped_nu;
        self.dropped_sds_retry += other.dropped_sds_retry;
        self.pending += other.pending;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub average_delay: Option<f64>,
    pub failure_probability: Option<f64>,
    pub average_paoi: Option<f64>,
    pub counts: Counts,
}

#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: u64,
    sum: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1;
        self.sum += x;
    }

    fn mean(&self) -> Option<f64> {
        (self.n > 0).then(|| self.sum / self.n as f64)
    }
}

#[derive(Debug, Clone)]
pub struct MetricStore {
    warmup_end: SimTime,
    closure: PaoiClosure,
    ack_flows: BTreeMap<FlowKey, FlowRecord>,
    forward_flows: BTreeMap<FlowKey, FlowRecord>,
    counts: Counts,
    delay: Moments,
    paoi_ack: Moments,
    paoi_forward: Moments,
}

impl MetricStore {
    pub fn new(warmup_end: SimTime, closure: PaoiClosure) -> Self {
        MetricStore {
            warmup_end,
            closure,
            ack_flows: BTreeMap::new(),
            forward_flows: BTreeMap::new(),
            counts: Counts::default(),
            delay: Moments::default(),
            paoi_ack: Moments::default(),
            paoi_forward: Moments::default(),
        }
    }

    pub fn counts_toward_metrics(&self, generated_at: SimTime) -> bool {
        generated_at >= self.warmup_end
    }

    pub fn record_generated(&mut self, generated_at: SimTime) {
        if self.counts_toward_metrics(generated_at) {
            self.counts.generated += 1;
        }
    }

    /// ACK received by the source: closes the delay sample and the at-ACK PAoI timeline.
    pub fn record_delivery(
        &mut self,
        flow: FlowKey,
        generated_at: SimTime,
        closed_at: SimTime,
    ) -> Result<Option<DeliverySample>, MetricsError> {
        let sample = self
            .ack_flows
            .entry(flow)
            .or_insert_with(|| FlowRecord::new(flow))
            .record_delivery(generated_at, closed_at)?;
        if !self.counts_toward_metrics(generated_at) {
            return Ok(None);
        }
        self.counts.delivered += 1;
        self.delay.push(sample.delay);
        if let Some(p) = sample.paoi {
            self.paoi_ack.push(p);
        }
        Ok(Some(sample))
    }

    /// Report handed to its final destination by the BS downlink.
    pub fn record_forwarded(&mut self, flow: FlowKey, generated_at: SimTime, closed_at: SimTime) -> Result<(), MetricsError> {
        let sample = self
            .forward_flows
            .entry(flow)
            .or_insert_with(|| FlowRecord::new(flow))
            .record_delivery(generated_at, closed_at)?;
        if self.counts_toward_metrics(generated_at) {
            if let Some(p) = sample.paoi {
                self.paoi_forward.push(p);
            }
        }
        Ok(())
    }

    pub fn record_drop(&mut self, flow: FlowKey, generated_at: SimTime, cause: DropCause) {
        self.ack_flows
            .entry(flow)
            .or_insert_with(|| FlowRecord::new(flow))
            .record_drop(generated_at, cause);
        if !self.counts_toward_metrics(generated_at) {
            return;
        }
        match cause {
            DropCause::HoldingTimer => self.counts.dropped_holding += 1,
            DropCause::NuExceeded => self.counts.dropped_nu += 1,
            DropCause::SdsRetryExceeded => self.counts.dropped_sds_retry += 1,
        }
    }

    pub fn record_pending(&mut self, generated_at: SimTime) {
        if self.counts_toward_metrics(generated_at) {
            self.counts.pending += 1;
        }
    }

    pub fn counts(&self) -> &Counts {
        &self.counts
    }

    pub fn warmup_end(&self) -> SimTime {
        self.warmup_end
    }

    pub fn ack_flows(&self) -> impl Iterator<Item = &FlowRecord> {
        self.ack_flows.values()
    }

    pub fn forward_flows(&self) -> impl Iterator<Item = &FlowRecord> {
        self.forward_flows.values()
    }

    pub fn summary(&self) -> RunSummary {
        let paoi = match self.closure {
            PaoiClosure::AtAck => self.paoi_ack,
            PaoiClosure::AtForwardingComplete => self.paoi_forward,
        };
        RunSummary {
            average_delay: self.delay.mean(),
            failure_probability: (self.counts.generated > 0)
                .then(|| self.counts.dropped() as f64 / self.counts.generated as f64),
            average_paoi: paoi.mean(),
            counts: self.counts,
        }
    }
}

/// Sample mean and two-sided Student-t half-width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: Option<f64>,
    pub half_width: Option<f64>,
    pub samples: usize,
}

impl Estimate {
    pub fn from_samples(values: &[f64], confidence: f64) -> Estimate {
        let n = values.len();
        if n == 0 {
            return Estimate {
                mean: None,
                half_width: None,
                samples: 0,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let half_width = (n >= 2).then(|| {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            t_quantile(confidence, (n - 1) as f64) * (var / n as f64).sqrt()
        });
        Estimate {
            mean: Some(mean),
            half_width,
            samples: n,
        }
    }
}

/// Two-sided Student-t critical value at `confidence` with `df` degrees of freedom.
pub fn t_quantile(confidence: f64, df: f64) -> f64 {
    let dist = StudentsT::new(0.0, 1.0, df).expect("df > 0");
    dist.inverse_cdf(1.0 - (1.0 - confidence) / 2.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub delay: Estimate,
    pub failure_probability: Estimate,
    pub paoi: Estimate,
    pub counts: Counts,
    pub runs: usize,
}

pub fn aggregate(runs: &[RunSummary], confidence: f64) -> Result<Aggregate, MetricsError> {
    if runs.len() < 2 {
        return Err(MetricsError::InsufficientData(runs.len()));
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(MetricsError::BadConfidence(confidence));
    }
    let pick = |f: fn(&RunSummary) -> Option<f64>| -> Vec<f64> { runs.iter().filter_map(f).collect() };
    let mut counts = Counts::default();
    for r in runs {
        counts.add(&r.counts);
    }
    Ok(Aggregate {
        delay: Estimate::from_samples(&pick(|r| r.average_delay), confidence),
        failure_probability: Estimate::from_samples(&pick(|r| r.failure_probability), confidence),
        paoi: Estimate::from_samples(&pick(|r| r.average_paoi), confidence),
        counts,
        runs: runs.len(),
    })
}
