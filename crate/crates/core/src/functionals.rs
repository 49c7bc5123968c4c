//! Monitoring functionals evaluated on exact snapshots.

use serde::Serialize;

use crate::error::FunctionalError;
use crate::flux::FluxModel;
use crate::network::NetworkSpec;
use crate::tracking::{EventRecord, Observer, Sample, SimulationState, Snapshot};

/// Functional values at one instant.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FunctionalSample {
    pub time: f64,
    /// Number of events processed when the sample was taken.
    pub event_index: u64,
    pub tv_density: f64,
    pub tv_flux: f64,
    pub big_waves: usize,
    /// Bad traces per junction.
    pub phi: Vec<usize>,
    pub mass: f64,
}

impl FunctionalSample {
    pub fn measure(snapshot: &Snapshot, spec: &NetworkSpec, event_index: u64) -> Self {
        let phi = bad_traces(snapshot, spec);
        let big_waves = phi.iter().sum::<usize>() + big_fronts(snapshot, spec.flux.sigma());
        FunctionalSample {
            time: snapshot.time,
            event_index,
            tv_density: total_variation(snapshot),
            tv_flux: flux_total_variation(snapshot, &spec.flux),
            big_waves,
            phi,
            mass: total_mass(snapshot),
        }
    }
}

/// Sum over roads of the jumps of the density. Jumps across a junction are
/// not counted.
pub fn total_variation(snapshot: &Snapshot) -> f64 {
    snapshot.roads.iter().map(|r| r.values.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>()).sum()
}

/// Sum over roads of the jumps of `f(rho)`.
pub fn flux_total_variation(snapshot: &Snapshot, m: &FluxModel) -> f64 {
    snapshot
        .roads
        .iter()
        .map(|r| r.values.windows(2).map(|w| (m.f(w[1]) - m.f(w[0])).abs()).sum::<f64>())
        .sum()
}

fn sgn(x: f64) -> i32 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

/// Fronts whose two states are not strictly on the same side of `sigma`.
pub fn big_fronts(snapshot: &Snapshot, sigma: f64) -> usize {
    snapshot
        .roads
        .iter()
        .map(|r| r.values.windows(2).filter(|w| sgn(w[0] - sigma) * sgn(w[1] - sigma) <= 0).count())
        .sum()
}

/// For each junction, incoming traces in `[0, sigma]` plus outgoing traces
/// in `[sigma, 1]`.
pub fn bad_traces(snapshot: &Snapshot, spec: &NetworkSpec) -> Vec<usize> {
    let sigma = spec.flux.sigma();
    spec.junctions
        .iter()
        .map(|j| {
            let incoming = j.incoming.iter().filter(|&&r| snapshot.roads[r].last() <= sigma).count();
            let outgoing = j.outgoing.iter().filter(|&&r| snapshot.roads[r].first() >= sigma).count();
            incoming + outgoing
        })
        .collect()
}

/// Bad junction traces plus big fronts.
pub fn big_wave_count(snapshot: &Snapshot, spec: &NetworkSpec) -> usize {
    bad_traces(snapshot, spec).iter().sum::<usize>() + big_fronts(snapshot, spec.flux.sigma())
}

/// Exact integral of `|rho_1 - rho_2|` over the network.
pub fn l1_distance(s1: &Snapshot, s2: &Snapshot) -> Result<f64, FunctionalError> {
    if s1.roads.len() != s2.roads.len() {
        return Err(FunctionalError::NetworkMismatch(format!("{} roads vs {}", s1.roads.len(), s2.roads.len())));
    }
    let mut total = 0.0;
    for (r1, r2) in s1.roads.iter().zip(&s2.roads) {
        if r1.a != r2.a || r1.b != r2.b {
            return Err(FunctionalError::NetworkMismatch(format!(
                "road {} spans [{}, {}] vs [{}, {}]",
                r1.road, r1.a, r1.b, r2.a, r2.b
            )));
        }
        let c1: Vec<_> = r1.cells().collect();
        let c2: Vec<_> = r2.cells().collect();
        let (mut i, mut j, mut x) = (0, 0, r1.a);
        while i < c1.len() && j < c2.len() {
            let end = c1[i].1.min(c2[j].1);
            if end > x {
                total += (end - x) * (c1[i].2 - c2[j].2).abs();
                x = end;
            }
            if c1[i].1 <= x {
                i += 1;
            }
            if j < c2.len() && c2[j].1 <= x {
                j += 1;
            }
        }
    }
    Ok(total)
}

/// Integral of the density over the network.
pub fn total_mass(snapshot: &Snapshot) -> f64 {
    snapshot.roads.iter().flat_map(|r| r.cells()).map(|(lo, hi, rho)| (hi - lo) * rho).sum()
}

/// Observer keeping every functional sample and event record of a run.
#[derive(Debug, Clone, Default)]
pub struct TelemetryRecorder {
    pub samples: Vec<FunctionalSample>,
    pub events: Vec<EventRecord>,
}

impl TelemetryRecorder {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Observer for TelemetryRecorder {
    fn observe(&mut self, state: &SimulationState, at: Sample<'_>) {
        if let Sample::Event(record) = at {
            self.events.push(record.clone());
        }
        self.samples.push(FunctionalSample::measure(&state.snapshot_now(), state.spec(), state.event_count()));
    }
}
