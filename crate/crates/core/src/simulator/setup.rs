//! Turns a resolved scenario into oracles, algorithms and simulation configs.

use std::sync::Arc;

use crate::bdl::scenario::{PredictorKind, ResolvedScenario};
use crate::error::SimulationError;
use crate::money::{Money, Qty};
use crate::predictor::{build_lp_predictor, build_spreading_predictor, DemandOracle, FlatOracle, LpOptions, PredictorSettings};
use crate::scheduler::{Algorithm, PriceBounds};
use crate::simulator::SimulationConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AlgorithmName {
    BasicEcon,
    FirstFit,
    OnDemand,
}

impl std::str::FromStr for AlgorithmName {
    type Err = SimulationError;

    fn from_str(s: &str) -> Result<Self, SimulationError> {
        match s.trim() {
            "basicEcon" | "basic-econ" | "econ" => Ok(AlgorithmName::BasicEcon),
            "firstFit" | "first-fit" => Ok(AlgorithmName::FirstFit),
            "onDemand" | "on-demand" => Ok(AlgorithmName::OnDemand),
            other => Err(SimulationError::Config(format!("unknown algorithm {other:?} (expected basicEcon, firstFit or onDemand)"))),
        }
    }
}

pub fn predictor_settings(s: &ResolvedScenario) -> PredictorSettings {
    let defaults = PredictorSettings::for_grid(&s.spec.grid());
    PredictorSettings {
        period: s.predictor.period_slots.unwrap_or(defaults.period).max(1),
        history_window: s.predictor.history_window_slots.or(defaults.history_window),
    }
}

fn flat(s: &ResolvedScenario) -> Option<FlatOracle> {
    let (price, quantity) = (s.predictor.price?, s.predictor.quantity?);
    Some(FlatOracle::uniform(s.spec.horizon(), s.spec.resources().len(), price, Qty::from_f64(quantity)))
}

/// Builds the demand oracle. Data-driven kinds fall back to the flat curve
/// (or to no demand) while the history is empty.
pub fn build_oracle(s: &ResolvedScenario, kind: PredictorKind) -> Result<Arc<dyn DemandOracle>, SimulationError> {
    let horizon = s.spec.horizon();
    let zero = || FlatOracle::zero(horizon, s.spec.resources().len());
    let settings = predictor_settings(s);
    let oracle: Arc<dyn DemandOracle> = match kind {
        PredictorKind::Zero => Arc::new(zero()),
        PredictorKind::Flat => {
            Arc::new(flat(s).ok_or_else(|| SimulationError::Config("flat predictor needs predictor.price and predictor.quantity".into()))?)
        }
        PredictorKind::Spreading | PredictorKind::Lp if s.history.is_empty() => Arc::new(flat(s).unwrap_or_else(zero)),
        PredictorKind::Spreading => Arc::new(build_spreading_predictor(&s.history, &s.spec, horizon, settings)),
        PredictorKind::Lp => Arc::new(build_lp_predictor(&s.history, &s.spec, horizon, settings, &LpOptions::default())?),
    };
    Ok(oracle)
}

pub fn build_algorithm(s: &ResolvedScenario, name: AlgorithmName, oracle: &Arc<dyn DemandOracle>) -> Algorithm {
    let a = &s.algorithms;
    match name {
        AlgorithmName::BasicEcon => Algorithm::BasicEcon {
            oracle: oracle.clone(),
            bounds: PriceBounds { floor: a.basic_econ.unit_floor, cap: a.basic_econ.unit_cap },
        },
        AlgorithmName::FirstFit => Algorithm::FirstFit { unit_price: a.first_fit.unit_price },
        AlgorithmName::OnDemand => Algorithm::OnDemand { unit_price: a.on_demand.unit_price },
    }
}

/// One config per algorithm name, all on the same cloud and workload.
pub fn simulation_configs(
    s: &ResolvedScenario,
    names: &[String],
    predictor: Option<PredictorKind>,
) -> Result<Vec<SimulationConfig>, SimulationError> {
    let parsed = names.iter().map(|n| n.parse()).collect::<Result<Vec<AlgorithmName>, _>>()?;
    if parsed.is_empty() {
        return Err(SimulationError::Config("no algorithms to run".into()));
    }
    let oracle = if parsed.contains(&AlgorithmName::BasicEcon) {
        build_oracle(s, predictor.unwrap_or(s.predictor.kind))?
    } else {
        Arc::new(FlatOracle::zero(s.spec.horizon(), s.spec.resources().len()))
    };
    Ok(parsed
        .into_iter()
        .map(|name| SimulationConfig {
            spec: s.spec.clone(),
            workload: s.workload.clone(),
            algorithm: build_algorithm(s, name, &oracle),
            seed: s.seed,
            failures: s.failures.clone(),
            early_termination: s.early_termination.clone(),
            early_start: s.early_start,
        })
        .collect())
}

/// Unit price bounds written as a list price and a maximum discount.
pub fn discount_bounds(list_price: Money, max_discount: f64) -> PriceBounds {
    PriceBounds { floor: Some(list_price.scale(1.0 - max_discount)), cap: Some(list_price) }
}
