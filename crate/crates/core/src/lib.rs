//! Exact wave-front tracking for the LWR traffic model on road networks.

pub mod error;
pub mod flux;
pub mod functionals;
pub mod network;
pub mod riemann;
pub mod scenarios;
pub mod tracking;

pub use error::{ConfigError, FluxError, FunctionalError, ScenarioError, SimError};
pub use flux::{Branch, FluxFamily, FluxModel, Side};
pub use functionals::{
    big_wave_count, flux_total_variation, l1_distance, total_mass, total_variation, FunctionalSample,
    TelemetryRecorder,
};
pub use network::{parse_network, DistributionMatrix, JunctionSpec, NetworkSpec, RoadSpec};
pub use riemann::{solve_junction_riemann, solve_road_riemann, JunctionSolution, WaveFan};
pub use scenarios::{build_scenario, ScenarioId, ScenarioParams};
pub use tracking::{initialize, Event, EventKind, EventRecord, Observer, SimulationState, Snapshot};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/flux.md")]
    mod flux {}
    #[doc = include_str!("../../../book/src/riemann.md")]
    mod riemann {}
    #[doc = include_str!("../../../book/src/network.md")]
    mod network {}
    #[doc = include_str!("../../../book/src/tracking.md")]
    mod tracking {}
    #[doc = include_str!("../../../book/src/functionals.md")]
    mod functionals {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
    #[doc = include_str!("../../../book/src/edge-cases.md")]
    mod edge_cases {}
}
