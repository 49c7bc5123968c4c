//! Built-in junction scenarios and loading of custom network files.
//!
//! All built-ins use unit-length roads: incoming roads span `[-1, 0]` and
//! outgoing roads `[0, 1]`. The travelling wave, when present, starts at
//! `x = -0.5` on the first incoming road.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::ScenarioError;
use crate::flux::{Branch, FluxModel};
use crate::network::{
    FluxDoc, JunctionDoc, NetworkDoc, NetworkSpec, RoadDoc, ScheduleEntryDoc, TrackingDoc, SPEC_VERSION,
};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScenarioId {
    /// 3x3 junction where one wave raises the flux variation.
    AppendixA,
    /// 2x2 equilibrium where a weak wave creates a strong one.
    AppendixB,
    /// 2x2 junction whose distribution coefficients swap at `tbar`.
    TrafficLightSwap,
    Custom(PathBuf),
}

impl ScenarioId {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "appendix_a" => Some(ScenarioId::AppendixA),
            "appendix_b" => Some(ScenarioId::AppendixB),
            "traffic_light_swap" => Some(ScenarioId::TrafficLightSwap),
            _ => None,
        }
    }

    pub fn name(&self) -> &str {
        match self {
            ScenarioId::AppendixA => "appendix_a",
            ScenarioId::AppendixB => "appendix_b",
            ScenarioId::TrafficLightSwap => "traffic_light_swap",
            ScenarioId::Custom(_) => "custom",
        }
    }
}

/// Scenario knobs; unset fields take the scenario's default.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScenarioParams {
    /// `f(rho_1)` of the incoming wave, as a fraction of `fmax`.
    pub rho1_flux: Option<f64>,
    pub alpha1: Option<f64>,
    pub alpha2: Option<f64>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub tbar: Option<f64>,
    pub delta: Option<f64>,
    pub horizon: Option<f64>,
    pub fmax: Option<f64>,
    /// Drop the travelling wave and keep only the equilibrium.
    #[serde(default)]
    pub remove_wave: bool,
}

const DEFAULT_DELTA: f64 = 0.02;
const DEFAULT_HORIZON: f64 = 1.0;
const WAVE_AT: f64 = -0.5;

fn range(name: &'static str, value: f64, ok: bool, expected: &'static str) -> Result<f64, ScenarioError> {
    if ok && value.is_finite() {
        Ok(value)
    } else {
        Err(ScenarioError::Range { name, value, expected })
    }
}

pub fn build_scenario(id: &ScenarioId, params: &ScenarioParams) -> Result<NetworkSpec, ScenarioError> {
    let mut spec = match id {
        ScenarioId::AppendixA => appendix_a(params)?,
        ScenarioId::AppendixB => appendix_b(params)?,
        ScenarioId::TrafficLightSwap => traffic_light_swap(params)?,
        ScenarioId::Custom(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| ScenarioError::Io { path: path.display().to_string(), message: e.to_string() })?;
            crate::network::parse_network(&text)?
        }
    };
    if let ScenarioId::Custom(_) = id {
        if let Some(delta) = params.delta {
            spec = spec.with_delta(range("delta", delta, delta > 0.0, "> 0")?);
        }
        if let Some(horizon) = params.horizon {
            spec.tracking.horizon = range("horizon", horizon, horizon >= 0.0, ">= 0")?;
        }
    }
    Ok(spec)
}

fn tracking(params: &ScenarioParams) -> Result<TrackingDoc, ScenarioError> {
    let delta = params.delta.unwrap_or(DEFAULT_DELTA);
    let horizon = params.horizon.unwrap_or(DEFAULT_HORIZON);
    Ok(TrackingDoc {
        delta: range("delta", delta, delta > 0.0, "> 0")?,
        horizon: range("horizon", horizon, horizon >= 0.0, ">= 0")?,
    })
}

fn road(id: usize, incoming: bool, values: &[(f64, f64)]) -> RoadDoc {
    let (a, b) = if incoming { (-1.0, 0.0) } else { (0.0, 1.0) };
    RoadDoc { id: id.to_string(), a, b, initial: values.to_vec() }
}

fn entry(t: f64, matrix: Vec<Vec<f64>>) -> ScheduleEntryDoc {
    ScheduleEntryDoc { t, matrix, lights: None }
}

fn finish(doc: NetworkDoc) -> Result<NetworkSpec, ScenarioError> {
    Ok(NetworkSpec::from_doc(&doc)?)
}

fn first_road(params: &ScenarioParams, rho1: f64, sigma: f64) -> RoadDoc {
    if params.remove_wave {
        road(1, true, &[(-1.0, sigma)])
    } else {
        road(1, true, &[(-1.0, rho1), (WAVE_AT, sigma)])
    }
}

fn appendix_a(params: &ScenarioParams) -> Result<NetworkSpec, ScenarioError> {
    if let Some(fmax) = params.fmax {
        range("fmax", fmax, fmax == 1.0, "pinned to 1 for this scenario")?;
    }
    let a = params.rho1_flux.unwrap_or(0.5);
    range("rho1_flux", a, a > 0.0 && a < 1.0, "in (0, 1)")?;
    let m = FluxModel::smooth(1.0)?;
    let sigma = m.sigma();
    let rho1 = m.invert_flux(a, Branch::Ascending)?;
    let rho20 = m.invert_flux(1.0 / 3.0, Branch::Descending)?;
    let rho60 = m.invert_flux(1.0 / 3.0, Branch::Ascending)?;
    let third = 1.0 / 3.0;
    let sixth = 1.0 / 6.0;
    finish(NetworkDoc {
        spec_version: SPEC_VERSION,
        flux: FluxDoc { family: "smooth".into(), fmax: 1.0, nu: None },
        roads: vec![
            first_road(params, rho1, sigma),
            road(2, true, &[(-1.0, rho20)]),
            road(3, true, &[(-1.0, sigma)]),
            road(4, false, &[(0.0, sigma)]),
            road(5, false, &[(0.0, sigma)]),
            road(6, false, &[(0.0, rho60)]),
        ],
        junctions: vec![JunctionDoc {
            id: "J".into(),
            incoming: vec!["1".into(), "2".into(), "3".into()],
            outgoing: vec!["4".into(), "5".into(), "6".into()],
            schedule: vec![entry(0.0, vec![vec![0.5, 0.5, third], vec![third, 0.5, 0.5], vec![sixth, 0.0, sixth]])],
            period: None,
        }],
        tracking: tracking(params)?,
    })
}

fn two_by_two_matrix(x: f64, y: f64) -> Vec<Vec<f64>> {
    vec![vec![x, y], vec![1.0 - x, 1.0 - y]]
}

fn two_by_two_roads(params: &ScenarioParams, m: &FluxModel, rho1: f64, q: f64, rho20_branch: Branch) -> Result<Vec<RoadDoc>, ScenarioError> {
    let sigma = m.sigma();
    let rho20 = m.invert_flux(q, rho20_branch)?;
    let rho30 = m.invert_flux(q, Branch::Descending)?;
    Ok(vec![
        first_road(params, rho1, sigma),
        road(2, true, &[(-1.0, rho20)]),
        road(3, false, &[(0.0, rho30)]),
        road(4, false, &[(0.0, sigma)]),
    ])
}

fn fmax_of(params: &ScenarioParams) -> Result<f64, ScenarioError> {
    let fmax = params.fmax.unwrap_or(1.0);
    range("fmax", fmax, fmax > 0.0, "> 0")
}

fn appendix_b(params: &ScenarioParams) -> Result<NetworkSpec, ScenarioError> {
    let a1 = params.alpha1.unwrap_or(0.25);
    let a2 = params.alpha2.unwrap_or(0.4);
    range("alpha1", a1, a1 > 0.0 && a1 < 0.5, "0 < alpha1 < alpha2 < 1/2")?;
    range("alpha2", a2, a2 > a1 && a2 < 0.5, "0 < alpha1 < alpha2 < 1/2")?;
    let level = params.rho1_flux.unwrap_or(0.99);
    range("rho1_flux", level, level > 0.0 && level <= 1.0, "in (0, 1]")?;
    let fmax = fmax_of(params)?;
    let m = FluxModel::smooth(fmax)?;
    let rho1 = m.invert_flux(level * fmax, Branch::Ascending)?;
    let q = a1 / (1.0 - a2) * fmax;
    finish(NetworkDoc {
        spec_version: SPEC_VERSION,
        flux: FluxDoc { family: "smooth".into(), fmax, nu: None },
        roads: two_by_two_roads(params, &m, rho1, q, Branch::Ascending)?,
        junctions: vec![JunctionDoc {
            id: "J".into(),
            incoming: vec!["1".into(), "2".into()],
            outgoing: vec!["3".into(), "4".into()],
            schedule: vec![entry(0.0, two_by_two_matrix(a1, a2))],
            period: None,
        }],
        tracking: tracking(params)?,
    })
}

fn traffic_light_swap(params: &ScenarioParams) -> Result<NetworkSpec, ScenarioError> {
    let b1 = params.beta1.unwrap_or(0.4);
    let b2 = params.beta2.unwrap_or(0.3);
    range("beta2", b2, b2 > 0.0 && b2 < 0.5, "0 < beta2 <= beta1 < 1/2")?;
    range("beta1", b1, b1 >= b2 && b1 < 0.5, "0 < beta2 <= beta1 < 1/2")?;
    let tbar = params.tbar.unwrap_or(0.5);
    range("tbar", tbar, tbar > 0.0, "> 0")?;
    let fmax = fmax_of(params)?;
    let m = FluxModel::smooth(fmax)?;
    let q = b1 / (1.0 - b2) * fmax;
    let swap = ScenarioParams { remove_wave: true, ..params.clone() };
    finish(NetworkDoc {
        spec_version: SPEC_VERSION,
        flux: FluxDoc { family: "smooth".into(), fmax, nu: None },
        roads: two_by_two_roads(&swap, &m, m.sigma(), q, Branch::Descending)?,
        junctions: vec![JunctionDoc {
            id: "J".into(),
            incoming: vec!["1".into(), "2".into()],
            outgoing: vec!["3".into(), "4".into()],
            schedule: vec![entry(0.0, two_by_two_matrix(b1, b2)), entry(tbar, two_by_two_matrix(b2, b1))],
            period: None,
        }],
        tracking: tracking(params)?,
    })
}
