//! Scenario configuration.
//!
//! The file format is flat `key = value` lines with dotted keys and `#`
//! comments. Every field has a default, so an empty file is a valid
//! scenario. [`ScenarioConfig::to_text`] writes every key back out in a
//! fixed order; feeding that text back in yields an identical config.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::channel::{default_environments, EnvironmentParams, EnvironmentTable, LinkBudget, ModelRegistry};
use crate::bs_mac::PolicyRegistry;
use crate::metrics::PaoiClosure;
use crate::ms_mac::{AccessCode, AccessParams, MacConfig};
use crate::tdma::SimTime;
use crate::traffic::{HoldingTimer, TrafficConfig};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldError {
    pub key: String,
    pub message: String,
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.key, self.message)
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid configuration:\n{}", .0.iter().map(|e| format!("  {e}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<FieldError>),
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl ConfigError {
    pub fn field(key: &str, message: impl Into<String>) -> Self {
        ConfigError::Invalid(vec![FieldError {
            key: key.to_owned(),
            message: message.into(),
        }])
    }

    pub fn fields(&self) -> &[FieldError] {
        match self {
            ConfigError::Invalid(v) => v,
            _ => &[],
        }
    }
}

/// Parameters a sweep may vary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    NC,
    NF,
    LambdaO,
    Wt,
    Nu,
    Model,
    Holding,
}

impl SweepAxis {
    pub const ALL: [SweepAxis; 7] = [
        SweepAxis::NC,
        SweepAxis::NF,
        SweepAxis::LambdaO,
        SweepAxis::Wt,
        SweepAxis::Nu,
        SweepAxis::Model,
        SweepAxis::Holding,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::NC => "n_c",
            SweepAxis::NF => "n_f",
            SweepAxis::LambdaO => "lambda_o",
            SweepAxis::Wt => "wt",
            SweepAxis::Nu => "nu",
            SweepAxis::Model => "model",
            SweepAxis::Holding => "holding",
        }
    }

    pub fn config_key(self) -> &'static str {
        match self {
            SweepAxis::NC => "traffic.n_c",
            SweepAxis::NF => "traffic.n_f",
            SweepAxis::LambdaO => "traffic.lambda_o",
            SweepAxis::Wt => "access.wt",
            SweepAxis::Nu => "access.nu",
            SweepAxis::Model => "channel.model",
            SweepAxis::Holding => "traffic.holding_timer",
        }
    }

    /// Maps a sweep value onto the config key's value syntax.
    pub fn config_value(self, value: &str) -> String {
        match (self, value.trim()) {
            (SweepAxis::Holding, "on") => "inverse_rate".into(),
            (SweepAxis::Holding, "off") => "none".into(),
            (_, v) => v.to_owned(),
        }
    }
}

impl FromStr for SweepAxis {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, ConfigError> {
        let s = s.trim();
        SweepAxis::ALL
            .into_iter()
            .find(|a| a.name() == s || a.config_key() == s)
            .ok_or_else(|| {
                let known: Vec<_> = SweepAxis::ALL.iter().map(|a| a.name()).collect();
                ConfigError::field("sweep.axis", format!("unknown axis `{s}` (known: {})", known.join(", ")))
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub axis: SweepAxis,
    pub values: Vec<String>,
}

impl Sweep {
    /// Parses `axis=v1,v2,...`.
    pub fn parse(spec: &str) -> Result<Sweep, ConfigError> {
        let (axis, values) = spec
            .split_once('=')
            .ok_or_else(|| ConfigError::field("sweep", format!("expected axis=v1,v2,..., got `{spec}`")))?;
        let sweep = Sweep {
            axis: axis.parse()?,
            values: split_list(values),
        };
        if sweep.values.is_empty() {
            return Err(ConfigError::field("sweep.values", "sweep needs at least one value"));
        }
        Ok(sweep)
    }
}

fn split_list(s: &str) -> Vec<String> {
    s.split(',').map(str::trim).filter(|v| !v.is_empty()).map(str::to_owned).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelConfig {
    pub model: String,
    pub cell_radius_m: f64,
    pub budget: LinkBudget,
    pub environments: EnvironmentTable,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        ChannelConfig {
            model: "TU".into(),
            cell_radius_m: 2000.0,
            budget: LinkBudget::default(),
            environments: default_environments(),
        }
    }
}

/// Unit of the random access backoff.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackoffClock {
    /// Uplink subslots of wall-clock time; the station then waits for the next matching opportunity.
    Subslots,
    /// Matching access opportunities only, so the wait stretches when reservations crowd them out.
    Opportunities,
}

impl BackoffClock {
    pub fn name(self) -> &'static str {
        match self {
            BackoffClock::Subslots => "subslots",
            BackoffClock::Opportunities => "opportunities",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccessConfig {
    pub wt: u8,
    pub nu: u8,
    pub codes: Vec<AccessCode>,
    /// A new message waits a uniform draw from `0..initial_window` backoff units; 1 means immediately.
    pub initial_window: u32,
    /// After WT expiry the retry waits a uniform draw from `0..frame_length` backoff units.
    pub frame_length: u32,
    pub backoff_clock: BackoffClock,
    pub control_frame_access: bool,
    pub abort_in_flight: bool,
}

impl Default for AccessConfig {
    fn default() -> Self {
        AccessConfig {
            wt: 5,
            nu: 5,
            codes: vec![AccessCode::A],
            initial_window: 1,
            frame_length: 16,
            backoff_clock: BackoffClock::Subslots,
            control_frame_access: false,
            abort_in_flight: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub traffic: TrafficConfig,
    pub access: AccessConfig,
    pub subslot_capacity_bits: u32,
    pub access_capacity_bits: u32,
    pub sds_retry_limit: u32,
    pub ack_wait_frames: u32,
    pub channel: ChannelConfig,
    pub downlink_policy: String,
    pub paoi_closure: PaoiClosure,
    pub warmup_multiframes: u32,
    pub confidence: f64,
    pub run_length_multiframes: u32,
    pub replications: u32,
    pub master_seed: u64,
    pub sweep: Option<Sweep>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            traffic: TrafficConfig::default(),
            access: AccessConfig::default(),
            subslot_capacity_bits: 92,
            access_capacity_bits: 92,
            sds_retry_limit: 3,
            ack_wait_frames: 4,
            channel: ChannelConfig::default(),
            downlink_policy: "priority".into(),
            paoi_closure: PaoiClosure::AtAck,
            warmup_multiframes: 50,
            confidence: 0.95,
            run_length_multiframes: 1000,
            replications: 30,
            master_seed: 20_240_601,
            sweep: None,
        }
    }
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T, FieldError> {
    value.trim().parse().map_err(|_| FieldError {
        key: key.to_owned(),
        message: format!("cannot parse `{value}`"),
    })
}

fn parse_bool(key: &str, value: &str) -> Result<bool, FieldError> {
    match value.trim() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        other => Err(FieldError {
            key: key.to_owned(),
            message: format!("expected a boolean, got `{other}`"),
        }),
    }
}

fn holding_to_text(h: HoldingTimer) -> String {
    match h {
        HoldingTimer::Disabled => "none".into(),
        HoldingTimer::InverseRate => "inverse_rate".into(),
        HoldingTimer::Fixed(s) => s.to_string(),
    }
}

const ENV_FIELDS: [&str; 4] = ["path_loss_exponent", "shadowing_sigma_db", "midpoint_db", "slope_per_db"];

impl ScenarioConfig {
    pub fn from_text(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = ScenarioConfig::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_text(&text)
    }

    /// Applies every `key = value` line; reports all bad keys at once.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        let mut errors = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError::Syntax {
                    line: lineno + 1,
                    text: raw.to_owned(),
                });
            };
            if let Err(e) = self.set(key.trim(), value.trim()) {
                errors.push(e);
            }
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(errors))
        }
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), FieldError> {
        let t = &mut self.traffic;
        match key {
            "traffic.n_f" => t.n_f = parse_num(key, value)?,
            "traffic.n_c" => t.n_c = parse_num(key, value)?,
            "traffic.lambda_o" => t.lambda_o = parse_num(key, value)?,
            "traffic.lambda_c" => t.lambda_c_per_hour = parse_num(key, value)?,
            "traffic.lambda_voice" => t.lambda_voice_per_hour = parse_num(key, value)?,
            "traffic.lambda_f" => {
                t.lambda_f = match value {
                    "auto" => None,
                    v => Some(parse_num(key, v)?),
                }
            }
            "traffic.call_duration_min" => t.call_duration_min_s = parse_num(key, value)?,
            "traffic.call_duration_max" => t.call_duration_max_s = parse_num(key, value)?,
            "traffic.holding_timer" => {
                t.holding_timer = match value {
                    "none" | "off" => HoldingTimer::Disabled,
                    "inverse_rate" | "on" => HoldingTimer::InverseRate,
                    v => HoldingTimer::Fixed(parse_num(key, v)?),
                }
            }
            "traffic.report_bits" => t.report_bits = parse_num(key, value)?,
            "traffic.background_bits" => t.background_bits = parse_num(key, value)?,
            "traffic.feedback_bits" => t.feedback_bits = parse_num(key, value)?,
            "traffic.voice_setup_bits" => t.voice_setup_bits = parse_num(key, value)?,
            "access.wt" => self.access.wt = parse_num(key, value)?,
            "access.nu" => self.access.nu = parse_num(key, value)?,
            "access.codes" => {
                self.access.codes = split_list(value)
                    .iter()
                    .map(|c| c.parse::<AccessCode>())
                    .collect::<Result<_, _>>()
                    .map_err(|e| FieldError {
                        key: key.to_owned(),
                        message: e.to_string(),
                    })?
            }
            "access.initial_window" => self.access.initial_window = parse_num(key, value)?,
            "access.frame_length" => self.access.frame_length = parse_num(key, value)?,
            "access.backoff_clock" => {
                self.access.backoff_clock = match value {
                    "subslots" => BackoffClock::Subslots,
                    "opportunities" => BackoffClock::Opportunities,
                    other => {
                        return Err(FieldError {
                            key: key.into(),
                            message: format!("expected subslots or opportunities, got `{other}`"),
                        })
                    }
                }
            }
            "access.control_frame_access" => self.access.control_frame_access = parse_bool(key, value)?,
            "access.abort_in_flight" => self.access.abort_in_flight = parse_bool(key, value)?,
            "mac.subslot_capacity_bits" => self.subslot_capacity_bits = parse_num(key, value)?,
            "mac.access_capacity_bits" => self.access_capacity_bits = parse_num(key, value)?,
            "mac.sds_retry_limit" => self.sds_retry_limit = parse_num(key, value)?,
            "mac.ack_wait_frames" => self.ack_wait_frames = parse_num(key, value)?,
            "channel.model" => self.channel.model = value.to_owned(),
            "channel.cell_radius_m" => self.channel.cell_radius_m = parse_num(key, value)?,
            "channel.tx_margin_db" => self.channel.budget.tx_margin_db = parse_num(key, value)?,
            "channel.reference_distance_m" => self.channel.budget.reference_distance_m = parse_num(key, value)?,
            "downlink.policy" => self.downlink_policy = value.to_owned(),
            "metrics.paoi_closure" => {
                self.paoi_closure = match value {
                    "at_ack" => PaoiClosure::AtAck,
                    "at_forwarding_complete" => PaoiClosure::AtForwardingComplete,
                    other => {
                        return Err(FieldError {
                            key: key.into(),
                            message: format!("expected at_ack or at_forwarding_complete, got `{other}`"),
                        })
                    }
                }
            }
            "metrics.warmup_multiframes" => self.warmup_multiframes = parse_num(key, value)?,
            "metrics.confidence" => self.confidence = parse_num(key, value)?,
            "run.length_multiframes" => self.run_length_multiframes = parse_num(key, value)?,
            "run.replications" => self.replications = parse_num(key, value)?,
            "run.seed" => self.master_seed = parse_num(key, value)?,
            "sweep.axis" => {
                let axis = value.parse::<SweepAxis>().map_err(|e| e.fields()[0].clone())?;
                let values = self.sweep.take().map(|s| s.values).unwrap_or_default();
                self.sweep = Some(Sweep { axis, values });
            }
            "sweep.values" => {
                let values = split_list(value);
                match &mut self.sweep {
                    Some(s) => s.values = values,
                    None => {
                        return Err(FieldError {
                            key: key.into(),
                            message: "set sweep.axis before sweep.values".into(),
                        })
                    }
                }
            }
            _ => return self.set_environment(key, value),
        }
        Ok(())
    }

    fn set_environment(&mut self, key: &str, value: &str) -> Result<(), FieldError> {
        let unknown = || FieldError {
            key: key.to_owned(),
            message: "unknown key".into(),
        };
        let rest = key.strip_prefix("channel.").ok_or_else(unknown)?;
        let (env, field) = rest.split_once('.').ok_or_else(unknown)?;
        if !ENV_FIELDS.contains(&field) {
            return Err(unknown());
        }
        let x: f64 = parse_num(key, value)?;
        let params = self
            .channel
            .environments
            .entry(env.to_owned())
            .or_insert(EnvironmentParams::TYPICAL_URBAN);
        match field {
            "path_loss_exponent" => params.path_loss_exponent = x,
            "shadowing_sigma_db" => params.shadowing_sigma_db = x,
            "midpoint_db" => params.midpoint_db = x,
            _ => params.slope_per_db = x,
        }
        Ok(())
    }

    /// Semantic checks; lists every offending field.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut errs = Vec::new();
        let mut bad = |key: &str, msg: String| {
            errs.push(FieldError {
                key: key.into(),
                message: msg,
            })
        };
        let t = &self.traffic;
        for (key, rate) in [
            ("traffic.lambda_o", t.lambda_o),
            ("traffic.lambda_c", t.lambda_c_per_hour),
            ("traffic.lambda_voice", t.lambda_voice_per_hour),
            ("traffic.lambda_f", t.lambda_f()),
        ] {
            if !(rate >= 0.0 && rate.is_finite()) {
                bad(key, format!("rate must be finite and >= 0, got {rate}"));
            }
        }
        if t.n_c > 500 {
            bad("traffic.n_c", format!("at most 500 background stations, got {}", t.n_c));
        }
        if !(t.call_duration_min_s >= 0.0 && t.call_duration_min_s <= t.call_duration_max_s) {
            bad(
                "traffic.call_duration_min",
                format!("need 0 <= min <= max, got [{}, {}]", t.call_duration_min_s, t.call_duration_max_s),
            );
        }
        if let HoldingTimer::Fixed(s) = t.holding_timer {
            if s.is_nan() || s <= 0.0 {
                bad("traffic.holding_timer", format!("period must be positive, got {s}"));
            }
        }
        if !(16..=2047).contains(&t.report_bits) {
            bad("traffic.report_bits", format!("SDS type-4 payload is 16..=2047 bits, got {}", t.report_bits));
        }
        for (key, bits) in [
            ("traffic.background_bits", t.background_bits),
            ("traffic.feedback_bits", t.feedback_bits),
            ("traffic.voice_setup_bits", t.voice_setup_bits),
        ] {
            if !(1..=2047).contains(&bits) {
                bad(key, format!("payload must be 1..=2047 bits, got {bits}"));
            }
        }
        if !(1..=15).contains(&self.access.wt) {
            bad("access.wt", format!("must be in 1..=15, got {}", self.access.wt));
        }
        if !(1..=15).contains(&self.access.nu) {
            bad("access.nu", format!("must be in 1..=15, got {}", self.access.nu));
        }
        if self.access.codes.is_empty() {
            bad("access.codes", "pattern must not be empty".into());
        }
        if self.access.initial_window == 0 {
            bad("access.initial_window", "must be at least 1".into());
        }
        if self.access.frame_length == 0 {
            bad("access.frame_length", "must be at least 1".into());
        }
        if self.subslot_capacity_bits == 0 {
            bad("mac.subslot_capacity_bits", "must be positive".into());
        }
        if self.access_capacity_bits == 0 {
            bad("mac.access_capacity_bits", "must be positive".into());
        }
        if self.ack_wait_frames == 0 {
            bad("mac.ack_wait_frames", "must be positive".into());
        }
        let models = ModelRegistry::default();
        if !models.contains(&self.channel.model) {
            bad(
                "channel.model",
                format!(
                    "unknown model `{}` (known: {})",
                    self.channel.model,
                    models.names().collect::<Vec<_>>().join(", ")
                ),
            );
        } else if let Err(e) = models.build(&self.channel.model, &self.channel.environments) {
            bad("channel.model", e.to_string());
        }
        if self.channel.cell_radius_m.is_nan() || self.channel.cell_radius_m <= 0.0 {
            bad("channel.cell_radius_m", "must be positive".into());
        }
        if self.channel.budget.reference_distance_m.is_nan() || self.channel.budget.reference_distance_m <= 0.0 {
            bad("channel.reference_distance_m", "must be positive".into());
        }
        if PolicyRegistry::default().build(&self.downlink_policy).is_none() {
            bad(
                "downlink.policy",
                format!(
                    "unknown policy `{}` (known: {})",
                    self.downlink_policy,
                    PolicyRegistry::default().names().collect::<Vec<_>>().join(", ")
                ),
            );
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            bad("metrics.confidence", format!("must be in (0, 1), got {}", self.confidence));
        }
        if self.run_length_multiframes == 0 {
            bad("run.length_multiframes", "must be positive".into());
        }
        if self.warmup_multiframes >= self.run_length_multiframes {
            bad(
                "metrics.warmup_multiframes",
                format!("warm-up {} must be shorter than the run", self.warmup_multiframes),
            );
        }
        if self.replications < 2 {
            bad(
                "run.replications",
                format!("confidence intervals need at least 2 replications, got {}", self.replications),
            );
        }
        if let Some(s) = &self.sweep {
            if s.values.is_empty() {
                bad("sweep.values", "sweep needs at least one value".into());
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(errs))
        }
    }

    pub fn mac_config(&self) -> Result<MacConfig, ConfigError> {
        let access = AccessParams::new(self.access.wt, self.access.nu, self.access.codes[0])
            .map_err(|e| ConfigError::field("access", e.to_string()))?;
        Ok(MacConfig {
            access,
            subslot_capacity_bits: self.subslot_capacity_bits,
            access_capacity_bits: self.access_capacity_bits,
            sds_retry_limit: self.sds_retry_limit,
            ack_wait_frames: self.ack_wait_frames,
        })
    }

    pub fn horizon(&self) -> SimTime {
        SimTime::multiframes(self.run_length_multiframes)
    }

    pub fn warmup_end(&self) -> SimTime {
        SimTime::multiframes(self.warmup_multiframes)
    }

    /// Every key with its resolved value, in a fixed order.
    pub fn to_text(&self) -> String {
        let t = &self.traffic;
        let mut lines: Vec<(String, String)> = vec![
            ("traffic.n_f".into(), t.n_f.to_string()),
            ("traffic.n_c".into(), t.n_c.to_string()),
            ("traffic.lambda_o".into(), t.lambda_o.to_string()),
            ("traffic.lambda_c".into(), t.lambda_c_per_hour.to_string()),
            ("traffic.lambda_voice".into(), t.lambda_voice_per_hour.to_string()),
            (
                "traffic.lambda_f".into(),
                t.lambda_f.map_or_else(|| "auto".into(), |v| v.to_string()),
            ),
            ("traffic.call_duration_min".into(), t.call_duration_min_s.to_string()),
            ("traffic.call_duration_max".into(), t.call_duration_max_s.to_string()),
            ("traffic.holding_timer".into(), holding_to_text(t.holding_timer)),
            ("traffic.report_bits".into(), t.report_bits.to_string()),
            ("traffic.background_bits".into(), t.background_bits.to_string()),
            ("traffic.feedback_bits".into(), t.feedback_bits.to_string()),
            ("traffic.voice_setup_bits".into(), t.voice_setup_bits.to_string()),
            ("access.wt".into(), self.access.wt.to_string()),
            ("access.nu".into(), self.access.nu.to_string()),
            (
                "access.codes".into(),
                self.access.codes.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(","),
            ),
            ("access.initial_window".into(), self.access.initial_window.to_string()),
            ("access.frame_length".into(), self.access.frame_length.to_string()),
            ("access.backoff_clock".into(), self.access.backoff_clock.name().into()),
            (
                "access.control_frame_access".into(),
                self.access.control_frame_access.to_string(),
            ),
            ("access.abort_in_flight".into(), self.access.abort_in_flight.to_string()),
            ("mac.subslot_capacity_bits".into(), self.subslot_capacity_bits.to_string()),
            ("mac.access_capacity_bits".into(), self.access_capacity_bits.to_string()),
            ("mac.sds_retry_limit".into(), self.sds_retry_limit.to_string()),
            ("mac.ack_wait_frames".into(), self.ack_wait_frames.to_string()),
            ("channel.model".into(), self.channel.model.clone()),
            ("channel.cell_radius_m".into(), self.channel.cell_radius_m.to_string()),
            ("channel.tx_margin_db".into(), self.channel.budget.tx_margin_db.to_string()),
            (
                "channel.reference_distance_m".into(),
                self.channel.budget.reference_distance_m.to_string(),
            ),
        ];
        for (name, p) in &self.channel.environments {
            let values = [p.path_loss_exponent, p.shadowing_sigma_db, p.midpoint_db, p.slope_per_db];
            for (field, v) in ENV_FIELDS.iter().zip(values) {
                lines.push((format!("channel.{name}.{field}"), v.to_string()));
            }
        }
        lines.extend([
            ("downlink.policy".into(), self.downlink_policy.clone()),
            (
                "metrics.paoi_closure".into(),
                match self.paoi_closure {
                    PaoiClosure::AtAck => "at_ack".into(),
                    PaoiClosure::AtForwardingComplete => "at_forwarding_complete".into(),
                },
            ),
            ("metrics.warmup_multiframes".into(), self.warmup_multiframes.to_string()),
            ("metrics.confidence".into(), self.confidence.to_string()),
            ("run.length_multiframes".into(), self.run_length_multiframes.to_string()),
            ("run.replications".into(), self.replications.to_string()),
            ("run.seed".into(), self.master_seed.to_string()),
        ]);
        if let Some(s) = &self.sweep {
            lines.push(("sweep.axis".into(), s.axis.name().into()));
            lines.push(("sweep.values".into(), s.values.join(",")));
        }
        let mut out = String::new();
        for (k, v) in lines {
            out.push_str(&k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_table_defaults() {
        let cfg = ScenarioConfig::from_text("# nothing here\n\n").unwrap();
        assert_eq!(cfg, ScenarioConfig::default());
        assert_eq!(cfg.sds_retry_limit, 3);
        assert_eq!(cfg.ack_wait_frames, 4);
        assert_eq!(cfg.run_length_multiframes, 1000);
        assert_eq!(cfg.traffic.lambda_c_per_hour, 10.0);
        assert_eq!(cfg.traffic.lambda_voice_per_hour, 3.0);
        assert_eq!(cfg.traffic.report_bits, 800);
        assert_eq!(cfg.channel.model, "TU");
        cfg.validate().unwrap();
    }

    #[test]
    fn dotted_keys_and_comments() {
        let cfg = ScenarioConfig::from_text(
            "traffic.lambda_o = 0.2   # faster reports\nchannel.model = HT\nchannel.HT.midpoint_db = 9.5\n",
        )
        .unwrap();
        assert_eq!(cfg.traffic.lambda_o, 0.2);
        assert_eq!(cfg.channel.model, "HT");
        assert_eq!(cfg.channel.environments["HT"].midpoint_db, 9.5);
    }

    #[test]
    fn all_bad_keys_are_reported() {
        let err = ScenarioConfig::from_text("traffic.n_f = many\nbogus.key = 1\naccess.wt = 3\n").unwrap_err();
        let keys: Vec<_> = err.fields().iter().map(|f| f.key.as_str()).collect();
        assert_eq!(keys, vec!["traffic.n_f", "bogus.key"]);
    }

    #[test]
    fn validation_lists_offending_fields() {
        let mut cfg = ScenarioConfig::default();
        cfg.access.wt = 16;
        cfg.access.nu = 0;
        cfg.channel.model = "XX".into();
        let err = cfg.validate().unwrap_err();
        let keys: Vec<_> = err.fields().iter().map(|f| f.key.as_str()).collect();
        assert_eq!(keys, vec!["access.wt", "access.nu", "channel.model"]);
    }

    #[test]
    fn text_round_trip() {
        let mut cfg = ScenarioConfig::default();
        cfg.traffic.holding_timer = HoldingTimer::Fixed(7.25);
        cfg.traffic.lambda_o = 0.1 + 0.2;
        cfg.access.codes = vec![AccessCode::A, AccessCode::C];
        cfg.sweep = Some(Sweep::parse("n_c=100,200").unwrap());
        let back = ScenarioConfig::from_text(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn sweep_parsing() {
        let s = Sweep::parse("holding=on,off").unwrap();
        assert_eq!(s.axis, SweepAxis::Holding);
        assert_eq!(s.axis.config_value("on"), "inverse_rate");
        assert!(Sweep::parse("colour=red").is_err());
        assert!(Sweep::parse("n_c=").is_err());
        assert!(Sweep::parse("n_c").is_err());
    }

    #[test]
    fn syntax_error_has_line_number() {
        match ScenarioConfig::from_text("traffic.n_f = 3\nnot a pair\n") {
            Err(ConfigError::Syntax { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }
}
