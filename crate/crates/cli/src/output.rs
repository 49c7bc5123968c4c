use std::fs::File;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use lwr_net::tracking::Sample;
use lwr_net::{EventRecord, FunctionalSample, NetworkSpec, Observer, SimulationState, Snapshot};

pub const TELEMETRY_HEADER: [&str; 6] = ["t", "event_idx", "tv_density", "tv_flux", "N", "mass"];
pub const EVENTS_HEADER: [&str; 11] =
    ["event_idx", "time", "kind", "junction", "road", "before", "after", "tv_density", "tv_flux", "N", "mass"];
pub const SNAPSHOT_HEADER: [&str; 4] = ["road_id", "x_left", "x_right", "rho"];

fn densities(values: &[f64]) -> String {
    values.iter().map(f64::to_string).collect::<Vec<_>>().join(" ")
}

pub fn write_snapshot(path: &Path, spec: &NetworkSpec, snapshot: &Snapshot) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("cannot write {}", path.display()))?;
    w.write_record(SNAPSHOT_HEADER)?;
    for road in &snapshot.roads {
        let id = &spec.roads[road.road].id;
        for (lo, hi, rho) in road.cells() {
            w.write_record([id.clone(), lo.to_string(), hi.to_string(), rho.to_string()])?;
        }
    }
    w.flush().with_context(|| format!("cannot write {}", path.display()))
}

/// Observer streaming telemetry and the event log to CSV files.
pub struct RunWriter {
    dir: PathBuf,
    spec: NetworkSpec,
    telemetry: csv::Writer<File>,
    events: csv::Writer<File>,
    every_event: bool,
    started: bool,
    error: Option<anyhow::Error>,
}

impl RunWriter {
    pub fn create(dir: &Path, spec: &NetworkSpec, every_event: bool) -> Result<Self> {
        let open = |name: &str| {
            let path = dir.join(name);
            csv::Writer::from_path(&path).with_context(|| format!("cannot write {}", path.display()))
        };
        let mut telemetry = open("telemetry.csv")?;
        let mut events = open("events.csv")?;
        telemetry.write_record(TELEMETRY_HEADER)?;
        events.write_record(EVENTS_HEADER)?;
        Ok(RunWriter {
            dir: dir.to_path_buf(),
            spec: spec.clone(),
            telemetry,
            events,
            every_event,
            started: false,
            error: None,
        })
    }

    fn telemetry_row(&mut self, s: &FunctionalSample) -> Result<()> {
        self.telemetry.write_record([
            s.time.to_string(),
            s.event_index.to_string(),
            s.tv_density.to_string(),
            s.tv_flux.to_string(),
            s.big_waves.to_string(),
            s.mass.to_string(),
        ])?;
        Ok(())
    }

    fn event_row(&mut self, r: &EventRecord, s: &FunctionalSample) -> Result<()> {
        let junction = r.kind.junction().map(|j| self.spec.junctions[j].id.clone()).unwrap_or_default();
        let road = r.kind.road().map(|k| self.spec.roads[k].id.clone()).unwrap_or_default();
        self.events.write_record([
            r.index.to_string(),
            r.time.to_string(),
            r.kind.name().to_string(),
            junction,
            road,
            densities(&r.before),
            densities(&r.after),
            s.tv_density.to_string(),
            s.tv_flux.to_string(),
            s.big_waves.to_string(),
            s.mass.to_string(),
        ])?;
        Ok(())
    }

    fn record(&mut self, state: &SimulationState, at: Sample<'_>) -> Result<()> {
        let snapshot = state.snapshot_now();
        let sample = FunctionalSample::measure(&snapshot, state.spec(), state.event_count());
        match at {
            Sample::Start if !self.started => {
                self.started = true;
                self.telemetry_row(&sample)
            }
            Sample::Event(record) => {
                self.telemetry_row(&sample)?;
                self.event_row(record, &sample)?;
                if self.every_event {
                    write_snapshot(&self.dir.join(format!("snapshot_event_{}.csv", record.index)), &self.spec, &snapshot)?;
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Surfaces the first write error seen while observing.
    pub fn check(&mut self) -> Result<()> {
        self.error.take().map_or(Ok(()), Err)
    }

    /// Writes the horizon row and flushes both files.
    pub fn finish(mut self, state: &SimulationState) -> Result<()> {
        self.check()?;
        let sample = FunctionalSample::measure(&state.snapshot_now(), state.spec(), state.event_count());
        self.telemetry_row(&sample)?;
        self.telemetry.flush().context("cannot write telemetry.csv")?;
        self.events.flush().context("cannot write events.csv")?;
        write_snapshot(&self.dir.join(format!("snapshot_{}.csv", state.time())), &self.spec, &state.snapshot_now())
    }
}

impl Observer for RunWriter {
    fn observe(&mut self, state: &SimulationState, at: Sample<'_>) {
        if self.error.is_none() {
            if let Err(e) = self.record(state, at) {
                self.error = Some(e);
            }
        }
    }
}
