//! Burst success/failure under a propagation environment.
//!
//! Links are quasi-static: each station gets a distance and one shadowing
//! sample per replication. Each transmitted burst then fails independently
//! with a probability read off a logistic curve in SNR. Environments are
//! trait objects looked up by name in a [`ModelRegistry`].

use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChannelError {
    #[error("link distance must be positive, got {0} m")]
    NonPositiveDistance(f64),
    #[error("burst error probability {0} outside [0, 1]")]
    InvalidProbability(f64),
    #[error("unknown propagation model `{0}` (known: {1})")]
    UnknownModel(String, String),
    #[error("no parameters configured for propagation model `{0}`")]
    MissingParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BurstOutcome {
    Delivered,
    Corrupted,
}

impl BurstOutcome {
    pub fn delivered(self) -> bool {
        self == BurstOutcome::Delivered
    }
}

/// A propagation environment: how distance and shadowing map to SNR, and SNR to burst loss.
pub trait PropagationModel: fmt::Debug + Send + Sync {
    fn name(&self) -> &str;
    fn path_loss_exponent(&self) -> f64;
    fn shadowing_sigma_db(&self) -> f64;
    /// Probability that a single burst is lost at `snr_db`.
    fn burst_error_prob(&self, snr_db: f64) -> f64;
}

/// Curve and path-loss parameters of one logistic environment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvironmentParams {
    pub path_loss_exponent: f64,
    pub shadowing_sigma_db: f64,
    pub midpoint_db: f64,
    pub slope_per_db: f64,
}

impl EnvironmentParams {
    pub const RURAL_AREA: EnvironmentParams = EnvironmentParams {
        path_loss_exponent: 2.7,
        shadowing_sigma_db: 4.0,
        midpoint_db: 3.0,
        slope_per_db: 0.6,
    };
    pub const TYPICAL_URBAN: EnvironmentParams = EnvironmentParams {
        path_loss_exponent: 3.5,
        shadowing_sigma_db: 8.0,
        midpoint_db: 5.0,
        slope_per_db: 0.6,
    };
    pub const HILLY_TERRAIN: EnvironmentParams = EnvironmentParams {
        path_loss_exponent: 4.0,
        shadowing_sigma_db: 10.0,
        midpoint_db: 7.0,
        slope_per_db: 0.6,
    };
}

/// Per-environment parameter table, keyed by model name.
pub type EnvironmentTable = BTreeMap<String, EnvironmentParams>;

pub fn default_environments() -> EnvironmentTable {
    let mut table = EnvironmentTable::new();
    table.insert("RA".into(), EnvironmentParams::RURAL_AREA);
    table.insert("TU".into(), EnvironmentParams::TYPICAL_URBAN);
    table.insert("HT".into(), EnvironmentParams::HILLY_TERRAIN);
    table
}

#[derive(Debug, Clone)]
pub struct LogisticEnvironment {
    name: String,
    params: EnvironmentParams,
}

impl LogisticEnvironment {
    pub fn new(name: impl Into<String>, params: EnvironmentParams) -> Self {
        LogisticEnvironment {
            name: name.into(),
            params,
        }
    }

    pub fn params(&self) -> &EnvironmentParams {
        &self.params
    }
}

impl PropagationModel for LogisticEnvironment {
    fn name(&self) -> &str {
        &self.name
    }

    fn path_loss_exponent(&self) -> f64 {
        self.params.path_loss_exponent
    }

    fn shadowing_sigma_db(&self) -> f64 {
        self.params.shadowing_sigma_db
    }

    fn burst_error_prob(&self, snr_db: f64) -> f64 {
        let p = 1.0 / (1.0 + (self.params.slope_per_db * (snr_db - self.params.midpoint_db)).exp());
        p.clamp(0.0, 1.0)
    }
}

/// Lossless channel with no shadowing. Used for timeline checks.
#[derive(Debug, Clone, Copy, Default)]
pub struct ErrorFree;

impl PropagationModel for ErrorFree {
    fn name(&self) -> &str {
        "ideal"
    }

    fn path_loss_exponent(&self) -> f64 {
        2.0
    }

    fn shadowing_sigma_db(&self) -> f64 {
        0.0
    }

    fn burst_error_prob(&self, _snr_db: f64) -> f64 {
        0.0
    }
}

pub type ModelFactory = fn(&str, &EnvironmentTable) -> Result<Box<dyn PropagationModel>, ChannelError>;

fn logistic_factory(name: &str, table: &EnvironmentTable) -> Result<Box<dyn PropagationModel>, ChannelError> {
    let params = table
        .get(name)
        .ok_or_else(|| ChannelError::MissingParams(name.to_owned()))?;
    Ok(Box::new(LogisticEnvironment::new(name, *params)))
}

fn error_free_factory(_: &str, _: &EnvironmentTable) -> Result<Box<dyn PropagationModel>, ChannelError> {
    Ok(Box::new(ErrorFree))
}

/// Name -> constructor map for propagation models.
#[derive(Debug, Clone)]
pub struct ModelRegistry {
    factories: BTreeMap<String, ModelFactory>,
}

impl Default for ModelRegistry {
    fn default() -> Self {
        let mut registry = ModelRegistry {
            factories: BTreeMap::new(),
        };
        registry.register("RA", logistic_factory);
        registry.register("TU", logistic_factory);
        registry.register("HT", logistic_factory);
        registry.register("ideal", error_free_factory);
        registry
    }
}

impl ModelRegistry {
    pub fn register(&mut self, name: &str, factory: ModelFactory) {
        self.factories.insert(name.to_owned(), factory);
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.factories.contains_key(name)
    }

    pub fn build(&self, name: &str, table: &EnvironmentTable) -> Result<Box<dyn PropagationModel>, ChannelError> {
        let factory = self.factories.get(name).ok_or_else(|| {
            ChannelError::UnknownModel(name.to_owned(), self.names().collect::<Vec<_>>().join(", "))
        })?;
        factory(name, table)
    }
}

/// Link-budget constants shared by every environment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkBudget {
    /// SNR at the reference distance with no shadowing.
    pub tx_margin_db: f64,
    pub reference_distance_m: f64,
}

impl Default for LinkBudget {
    fn default() -> Self {
        LinkBudget {
            tx_margin_db: 63.0,
            reference_distance_m: 100.0,
        }
    }
}

/// Quasi-static radio link between one station and the base station.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadioLink {
    pub distance_m: f64,
    pub shadowing_db: f64,
    pub snr_db: f64,
    pub burst_error_prob: f64,
}

impl RadioLink {
    pub fn new(
        distance_m: f64,
        shadowing_db: f64,
        model: &dyn PropagationModel,
        budget: &LinkBudget,
    ) -> Result<Self, ChannelError> {
        let snr_db = snr_of_link(distance_m, shadowing_db, model, budget)?;
        Ok(RadioLink {
            distance_m,
            shadowing_db,
            snr_db,
            burst_error_prob: model.burst_error_prob(snr_db),
        })
    }
}

pub fn snr_of_link(
    distance_m: f64,
    shadowing_db: f64,
    model: &dyn PropagationModel,
    budget: &LinkBudget,
) -> Result<f64, ChannelError> {
    if distance_m.is_nan() || distance_m <= 0.0 {
        return Err(ChannelError::NonPositiveDistance(distance_m));
    }
    Ok(budget.tx_margin_db - 10.0 * model.path_loss_exponent() * (distance_m / budget.reference_distance_m).log10()
        + shadowing_db)
}

/// One Bernoulli draw: corrupted with probability `p`. Always consumes exactly one value from `rng`.
pub fn decide_burst<R: Rng + ?Sized>(rng: &mut R, p: f64) -> Result<BurstOutcome, ChannelError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(ChannelError::InvalidProbability(p));
    }
    let u: f64 = rng.random();
    Ok(if u < p {
        BurstOutcome::Corrupted
    } else {
        BurstOutcome::Delivered
    })
}
