//! Event-driven wave-front tracking on a network.
//!
//! Between events every front moves at its Rankine-Hugoniot speed, so the
//! state is stored lazily: each front remembers where it was at a reference
//! time and positions are evaluated on demand. Events are front collisions
//! inside a road, fronts reaching a junction or a free road end, and
//! schedule jumps at junctions. Each is resolved exactly by a road or
//! junction Riemann solve.

use std::collections::VecDeque;
use std::fmt;

use crate::error::SimError;
use crate::functionals::FunctionalSample;
use crate::network::{DistributionMatrix, NetworkSpec, ScheduleJump};
use crate::riemann::{solve_junction_riemann, solve_road_riemann, WaveFan};

/// Events closer than this in time are simultaneous.
pub const TIME_TOL: f64 = 1e-12;
pub const DEFAULT_EVENT_LIMIT: u64 = 10_000_000;
pub const DEFAULT_TELEMETRY_CAPACITY: usize = 64;
const RECENT_EVENTS: usize = 10;

/// A discontinuity travelling along a road.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Front {
    pub left: f64,
    pub right: f64,
    pub speed: f64,
    /// Time the front was created.
    pub birth: f64,
    /// Number of interactions in the front's ancestry.
    pub generation: u32,
    x_ref: f64,
    t_ref: f64,
}

impl Front {
    pub fn position(&self, t: f64) -> f64 {
        self.x_ref + self.speed * (t - self.t_ref)
    }
}

#[derive(Debug, Clone, PartialEq)]
struct RoadState {
    /// Density at `a+`.
    first: f64,
    fronts: Vec<Front>,
    cached: Option<Option<Event>>,
}

impl RoadState {
    fn last(&self) -> f64 {
        self.fronts.last().map_or(self.first, |f| f.right)
    }

    fn value(&self, segment: usize) -> f64 {
        if segment == 0 {
            self.first
        } else {
            self.fronts[segment - 1].right
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct JunctionState {
    entry: usize,
    ordinal: u64,
    next: Option<ScheduleJump>,
    /// Effective matrix of every schedule entry.
    effective: Vec<DistributionMatrix>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    /// The fronts `front` and `front + 1` of `road` meet.
    Collision { road: usize, front: usize },
    /// A front of `road` reaches the end attached to `junction`.
    JunctionArrival { junction: usize, road: usize, front: usize },
    /// A front leaves the network through a free road end.
    BoundaryExit { road: usize, front: usize },
    ScheduleJump { junction: usize },
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::Collision { .. } => "collision",
            EventKind::JunctionArrival { .. } => "junction_arrival",
            EventKind::BoundaryExit { .. } => "boundary_exit",
            EventKind::ScheduleJump { .. } => "schedule_jump",
        }
    }

    fn rank(&self) -> u8 {
        match self {
            EventKind::ScheduleJump { .. } => 0,
            EventKind::JunctionArrival { .. } => 1,
            EventKind::BoundaryExit { .. } => 2,
            EventKind::Collision { .. } => 3,
        }
    }

    pub fn road(&self) -> Option<usize> {
        match *self {
            EventKind::Collision { road, .. }
            | EventKind::JunctionArrival { road, .. }
            | EventKind::BoundaryExit { road, .. } => Some(road),
            EventKind::ScheduleJump { .. } => None,
        }
    }

    pub fn junction(&self) -> Option<usize> {
        match *self {
            EventKind::JunctionArrival { junction, .. } | EventKind::ScheduleJump { junction } => Some(junction),
            _ => None,
        }
    }

    fn order_key(&self) -> (u8, usize) {
        (self.rank(), self.road().or(self.junction()).unwrap_or(0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub time: f64,
    pub kind: EventKind,
}

/// Picks the event to process first: the earliest, with simultaneous events
/// ordered by kind and then by road (or junction) index.
fn select(candidates: impl IntoIterator<Item = Event>) -> Option<Event> {
    let all: Vec<Event> = candidates.into_iter().collect();
    let t_min = all.iter().map(|e| e.time).fold(f64::INFINITY, f64::min);
    all.into_iter()
        .filter(|e| e.time <= t_min + TIME_TOL)
        .min_by(|x, y| x.kind.order_key().cmp(&y.kind.order_key()).then(x.time.total_cmp(&y.time)))
}

/// What happened at one processed event.
#[derive(Debug, Clone, PartialEq)]
pub struct EventRecord {
    /// 1-based position in the event sequence.
    pub index: u64,
    pub time: f64,
    pub kind: EventKind,
    /// Densities entering the Riemann solve: the merged jump for a
    /// collision, the traces (incoming then outgoing) for a junction.
    pub before: Vec<f64>,
    /// Densities leaving it.
    pub after: Vec<f64>,
    /// `(left, right)` of the front removed at a road end.
    pub absorbed: Option<(f64, f64)>,
    pub fronts_emitted: usize,
    /// `sum f(in) - sum f(out)` of the junction solve, if any.
    pub balance_residual: Option<f64>,
    /// Coefficients that jumped at a schedule jump.
    pub schedule_changes: usize,
}

impl fmt::Display for EventRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{} t={:.15} {}", self.index, self.time, self.kind.name())?;
        if let Some(j) = self.kind.junction() {
            write!(f, " junction={j}")?;
        }
        if let Some(r) = self.kind.road() {
            write!(f, " road={r}")?;
        }
        write!(f, " before={:?} after={:?}", self.before, self.after)
    }
}

/// Piecewise-constant density on one road.
#[derive(Debug, Clone, PartialEq)]
pub struct RoadSnapshot {
    pub road: usize,
    pub a: f64,
    pub b: f64,
    /// Front positions, non-decreasing.
    pub breakpoints: Vec<f64>,
    /// `values[k]` holds between `breakpoints[k-1]` and `breakpoints[k]`.
    pub values: Vec<f64>,
}

impl RoadSnapshot {
    /// `(x_left, x_right, rho)` cells, zero-width cells included.
    pub fn cells(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        let n = self.values.len();
        (0..n).map(move |k| {
            let lo = if k == 0 { self.a } else { self.breakpoints[k - 1] };
            let hi = if k + 1 == n { self.b } else { self.breakpoints[k] };
            (lo, hi, self.values[k])
        })
    }

    pub fn first(&self) -> f64 {
        self.values[0]
    }

    pub fn last(&self) -> f64 {
        *self.values.last().expect("a road has at least one value")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub time: f64,
    pub roads: Vec<RoadSnapshot>,
}

/// Where in a run an observer is being called.
#[derive(Debug, Clone, Copy)]
pub enum Sample<'a> {
    Start,
    Event(&'a EventRecord),
    Horizon,
}

pub trait Observer {
    fn observe(&mut self, state: &SimulationState, at: Sample<'_>);
}

/// Outcome of [`SimulationState::run_until`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSummary {
    pub events: u64,
    pub time: f64,
}

#[derive(Debug, Clone)]
pub struct SimulationState {
    spec: NetworkSpec,
    time: f64,
    last_event_time: f64,
    roads: Vec<RoadState>,
    junctions: Vec<JunctionState>,
    event_count: u64,
    event_limit: u64,
    recent: VecDeque<EventRecord>,
    telemetry: VecDeque<FunctionalSample>,
    telemetry_capacity: usize,
    max_residual: f64,
}

/// Builds the state at `t = 0`: every initial jump is resolved on its road
/// and every junction is solved once.
pub fn initialize(spec: &NetworkSpec) -> Result<SimulationState, SimError> {
    SimulationState::new(spec)
}

impl SimulationState {
    pub fn new(spec: &NetworkSpec) -> Result<Self, SimError> {
        let m = &spec.flux;
        let delta = spec.tracking.delta;
        let mut roads = Vec::with_capacity(spec.roads.len());
        for road in &spec.roads {
            let mut fronts = Vec::new();
            for pair in road.initial.windows(2) {
                let (_, left) = pair[0];
                let (x, right) = pair[1];
                let fan = solve_road_riemann(left, right, m, delta)?;
                fronts.extend(fan.fronts.iter().map(|w| Front {
                    left: w.left,
                    right: w.right,
                    speed: w.speed,
                    birth: 0.0,
                    generation: 0,
                    x_ref: x,
                    t_ref: 0.0,
                }));
            }
            roads.push(RoadState { first: road.initial[0].1, fronts, cached: None });
        }
        let junctions = spec
            .junctions
            .iter()
            .map(|j| JunctionState {
                entry: j.entry_index_at(0.0),
                ordinal: 0,
                next: j.next_jump(0),
                effective: j.schedule.iter().map(|e| e.effective()).collect(),
            })
            .collect();
        let mut state = SimulationState {
            spec: spec.clone(),
            time: 0.0,
            last_event_time: 0.0,
            roads,
            junctions,
            event_count: 0,
            event_limit: DEFAULT_EVENT_LIMIT,
            recent: VecDeque::with_capacity(RECENT_EVENTS),
            telemetry: VecDeque::new(),
            telemetry_capacity: DEFAULT_TELEMETRY_CAPACITY,
            max_residual: 0.0,
        };
        for j in 0..state.junctions.len() {
            state.solve_junction(j, 0.0, 0)?;
        }
        state.check_consistency("initialization")?;
        Ok(state)
    }

    pub fn with_event_limit(mut self, limit: u64) -> Self {
        self.event_limit = limit;
        self
    }

    /// Capacity of the telemetry ring; zero disables it.
    pub fn with_telemetry_capacity(mut self, capacity: usize) -> Self {
        self.telemetry_capacity = capacity;
        self.telemetry.truncate(capacity);
        self
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn event_count(&self) -> u64 {
        self.event_count
    }

    pub fn fronts(&self, road: usize) -> &[Front] {
        &self.roads[road].fronts
    }

    pub fn front_count(&self) -> usize {
        self.roads.iter().map(|r| r.fronts.len()).sum()
    }

    /// Density at `a+` of `road`.
    pub fn first_value(&self, road: usize) -> f64 {
        self.roads[road].first
    }

    /// Density at `b-` of `road`.
    pub fn last_value(&self, road: usize) -> f64 {
        self.roads[road].last()
    }

    /// Largest `|sum f(in) - sum f(out)|` seen over all junction solves.
    pub fn max_balance_residual(&self) -> f64 {
        self.max_residual
    }

    /// Most recent functional samples, oldest first.
    pub fn telemetry(&self) -> impl Iterator<Item = &FunctionalSample> {
        self.telemetry.iter()
    }

    /// Schedule entry currently active at `junction`.
    pub fn active_entry(&self, junction: usize) -> usize {
        self.junctions[junction].entry
    }

    fn road_candidate(&mut self, r: usize) -> Option<Event> {
        if let Some(cached) = self.roads[r].cached {
            return cached;
        }
        let now = self.time;
        let spec = &self.spec.roads[r];
        let road = &self.roads[r];
        let mut candidates = Vec::new();
        for (k, pair) in road.fronts.windows(2).enumerate() {
            let (p, q) = (&pair[0], &pair[1]);
            if p.speed > q.speed {
                let gap = (q.position(now) - p.position(now)).max(0.0);
                let time = now + gap / (p.speed - q.speed);
                candidates.push(Event { time, kind: EventKind::Collision { road: r, front: k } });
            }
        }
        if let Some(last) = road.fronts.last().filter(|f| f.speed > 0.0) {
            let front = road.fronts.len() - 1;
            let time = now + (spec.b - last.position(now)).max(0.0) / last.speed;
            let kind = match self.spec.head[r] {
                Some((junction, _)) => EventKind::JunctionArrival { junction, road: r, front },
                None => EventKind::BoundaryExit { road: r, front },
            };
            candidates.push(Event { time, kind });
        }
        if let Some(first) = road.fronts.first().filter(|f| f.speed < 0.0) {
            let time = now + (first.position(now) - spec.a).max(0.0) / -first.speed;
            let kind = match self.spec.tail[r] {
                Some((junction, _)) => EventKind::JunctionArrival { junction, road: r, front: 0 },
                None => EventKind::BoundaryExit { road: r, front: 0 },
            };
            candidates.push(Event { time, kind });
        }
        let best = select(candidates);
        self.roads[r].cached = Some(best);
        best
    }

    /// Earliest pending event, regardless of the horizon.
    pub fn peek_event(&mut self) -> Option<Event> {
        let mut candidates: Vec<Event> = (0..self.roads.len()).filter_map(|r| self.road_candidate(r)).collect();
        for (j, js) in self.junctions.iter().enumerate() {
            if let Some(jump) = js.next {
                candidates.push(Event { time: jump.time, kind: EventKind::ScheduleJump { junction: j } });
            }
        }
        select(candidates)
    }

    /// Next event no later than the horizon of the network.
    pub fn next_event(&mut self) -> Option<Event> {
        let horizon = self.spec.tracking.horizon;
        self.peek_event().filter(|e| e.time <= horizon)
    }

    /// Processes the earliest pending event; `None` when nothing is pending.
    pub fn advance(&mut self) -> Result<Option<EventRecord>, SimError> {
        let Some(event) = self.peek_event() else { return Ok(None) };
        if self.event_count >= self.event_limit {
            return Err(SimError::Runaway { limit: self.event_limit, recent: self.recent_summary() });
        }
        let t = event.time.max(self.time);
        self.time = t;
        let mut record = EventRecord {
            index: self.event_count + 1,
            time: t,
            kind: event.kind,
            before: Vec::new(),
            after: Vec::new(),
            absorbed: None,
            fronts_emitted: 0,
            balance_residual: None,
            schedule_changes: 0,
        };
        match event.kind {
            EventKind::Collision { road, front } => self.collide(road, front, t, &mut record)?,
            EventKind::JunctionArrival { junction, road, front } => {
                let absorbed = self.remove_front(road, front);
                record.absorbed = Some((absorbed.left, absorbed.right));
                self.junction_event(junction, t, absorbed.generation + 1, &mut record)?;
            }
            EventKind::BoundaryExit { road, front } => {
                let gone = self.remove_front(road, front);
                record.absorbed = Some((gone.left, gone.right));
            }
            EventKind::ScheduleJump { junction } => {
                let spec = &self.spec.junctions[junction];
                let js = &mut self.junctions[junction];
                let jump = js.next.expect("a scheduled jump is pending");
                js.entry = jump.entry;
                js.ordinal = jump.ordinal;
                js.next = spec.next_jump(jump.ordinal);
                record.schedule_changes = jump.changes;
                self.junction_event(junction, t, 0, &mut record)?;
            }
        }
        self.event_count += 1;
        self.last_event_time = t;
        self.check_consistency(&record.to_string())?;
        if self.recent.len() == RECENT_EVENTS {
            self.recent.pop_front();
        }
        self.recent.push_back(record.clone());
        if self.telemetry_capacity > 0 {
            if self.telemetry.len() == self.telemetry_capacity {
                self.telemetry.pop_front();
            }
            let sample = FunctionalSample::measure(&self.snapshot_now(), &self.spec, self.event_count);
            self.telemetry.push_back(sample);
        }
        Ok(Some(record))
    }

    fn recent_summary(&self) -> String {
        self.recent.iter().map(|r| r.to_string()).collect::<Vec<_>>().join("\n")
    }

    /// Processes every event up to `horizon`, then moves the fronts to it.
    /// Observers see the state at the start, after each event and at the
    /// horizon.
    pub fn run_until(&mut self, horizon: f64, observers: &mut [&mut dyn Observer]) -> Result<RunSummary, SimError> {
        if horizon < self.time - TIME_TOL {
            return Err(SimError::Backwards { horizon, now: self.time });
        }
        for o in observers.iter_mut() {
            o.observe(self, Sample::Start);
        }
        let mut events = 0;
        while self.peek_event().is_some_and(|e| e.time <= horizon) {
            let record = self.advance()?.expect("an event is pending");
            events += 1;
            for o in observers.iter_mut() {
                o.observe(self, Sample::Event(&record));
            }
        }
        self.time = self.time.max(horizon);
        for o in observers.iter_mut() {
            o.observe(self, Sample::Horizon);
        }
        Ok(RunSummary { events, time: self.time })
    }

    /// Exact state at the current time.
    pub fn snapshot_now(&self) -> Snapshot {
        self.snapshot_at(self.time)
    }

    /// Exact state at `t`, which must lie between the last processed event
    /// and the next pending one.
    pub fn sample_state(&mut self, t: f64) -> Result<Snapshot, SimError> {
        let from = self.last_event_time;
        let to = self.peek_event().map_or(f64::INFINITY, |e| e.time.max(self.time));
        if t < from - TIME_TOL || t > to + TIME_TOL {
            return Err(SimError::OutsideInterval { t, from, to });
        }
        Ok(self.snapshot_at(t))
    }

    fn snapshot_at(&self, t: f64) -> Snapshot {
        let roads = self
            .roads
            .iter()
            .zip(&self.spec.roads)
            .enumerate()
            .map(|(r, (state, spec))| {
                let mut breakpoints = Vec::with_capacity(state.fronts.len());
                let mut lo = spec.a;
                for f in &state.fronts {
                    let x = f.position(t).clamp(lo, spec.b);
                    breakpoints.push(x);
                    lo = x;
                }
                let values = (0..=state.fronts.len()).map(|k| state.value(k)).collect();
                RoadSnapshot { road: r, a: spec.a, b: spec.b, breakpoints, values }
            })
            .collect();
        Snapshot { time: t, roads }
    }
}

fn place(fan: &WaveFan, x: f64, t: f64, generation: u32) -> impl Iterator<Item = Front> + '_ {
    fan.fronts.iter().map(move |w| Front {
        left: w.left,
        right: w.right,
        speed: w.speed,
        birth: t,
        generation,
        x_ref: x,
        t_ref: t,
    })
}

impl SimulationState {
    fn position_tol(&self, road: usize) -> f64 {
        1e-11 * self.spec.roads[road].length().max(1.0)
    }

    /// Removes a front that reached a road end; a front leaving through `a`
    /// hands its right state to the road start.
    fn remove_front(&mut self, road: usize, index: usize) -> Front {
        let state = &mut self.roads[road];
        let front = state.fronts.remove(index);
        if front.speed < 0.0 {
            state.first = front.right;
        }
        state.cached = None;
        front
    }

    fn collide(&mut self, road: usize, k: usize, t: f64, record: &mut EventRecord) -> Result<(), SimError> {
        let tol = self.position_tol(road);
        let spec = &self.spec.roads[road];
        let fronts = &self.roads[road].fronts;
        let pos: Vec<f64> = fronts.iter().map(|f| f.position(t)).collect();
        let x = 0.5 * (pos[k] + pos[k + 1]);
        let mut lo = k;
        while lo > 0 && (pos[lo - 1] - x).abs() <= tol {
            lo -= 1;
        }
        let mut hi = k + 1;
        while hi + 1 < fronts.len() && (pos[hi + 1] - x).abs() <= tol {
            hi += 1;
        }
        let lower = if lo > 0 { pos[lo - 1] } else { spec.a };
        let upper = if hi + 1 < fronts.len() { pos[hi + 1] } else { spec.b };
        let x = x.max(lower).min(upper);

        let left = fronts[lo].left;
        let right = fronts[hi].right;
        let generation = fronts[lo..=hi].iter().map(|f| f.generation).max().unwrap_or(0) + 1;
        record.before = std::iter::once(left).chain(fronts[lo..=hi].iter().map(|f| f.right)).collect();

        let fan = solve_road_riemann(left, right, &self.spec.flux, self.spec.tracking.delta)?;
        record.after = if fan.is_empty() { vec![left] } else { fan.breakpoint_values() };
        record.fronts_emitted = fan.len();
        let new: Vec<Front> = place(&fan, x, t, generation).collect();
        let state = &mut self.roads[road];
        state.fronts.splice(lo..=hi, new);
        state.cached = None;
        Ok(())
    }

    fn junction_event(&mut self, j: usize, t: f64, generation: u32, record: &mut EventRecord) -> Result<(), SimError> {
        let outcome = self.solve_junction(j, t, generation)?;
        record.before = outcome.traces;
        record.after = outcome.solved;
        record.fronts_emitted = outcome.emitted;
        record.balance_residual = Some(outcome.residual);
        Ok(())
    }

    fn solve_junction(&mut self, j: usize, t: f64, generation: u32) -> Result<JunctionOutcome, SimError> {
        let js = &self.spec.junctions[j];
        let incoming: Vec<f64> = js.incoming.iter().map(|&r| self.roads[r].last()).collect();
        let outgoing: Vec<f64> = js.outgoing.iter().map(|&r| self.roads[r].first).collect();
        let state = &self.junctions[j];
        let matrix = &state.effective[state.entry];
        let m = &self.spec.flux;
        let sol = solve_junction_riemann(&incoming, &outgoing, matrix, m, self.spec.tracking.delta)?;
        let residual = sol.balance_residual(m);
        self.max_residual = self.max_residual.max(residual.abs());

        let mut emitted = 0;
        // outgoing ends first so that a road looping back into the same
        // junction keeps its incoming trace intact
        for (slot, &r) in js.outgoing.iter().enumerate() {
            let fan = &sol.fans_out[slot];
            if fan.is_empty() {
                continue;
            }
            let a = self.spec.roads[r].a;
            let road = &mut self.roads[r];
            road.first = sol.rho_out[slot];
            road.fronts.splice(0..0, place(fan, a, t, generation));
            road.cached = None;
            emitted += fan.len();
        }
        for (slot, &r) in js.incoming.iter().enumerate() {
            let fan = &sol.fans_in[slot];
            if fan.is_empty() {
                continue;
            }
            let b = self.spec.roads[r].b;
            let road = &mut self.roads[r];
            road.fronts.extend(place(fan, b, t, generation));
            road.cached = None;
            emitted += fan.len();
        }

        let traces = incoming.into_iter().chain(outgoing).collect();
        let solved = sol.rho_in.iter().chain(&sol.rho_out).copied().collect();
        Ok(JunctionOutcome { traces, solved, emitted, residual })
    }

    /// Engine invariants; only enforced in debug builds.
    fn check_consistency(&self, context: &str) -> Result<(), SimError> {
        if !cfg!(debug_assertions) {
            return Ok(());
        }
        let fail = |detail: String| Err(SimError::Inconsistent { event: context.to_string(), detail });
        let m = &self.spec.flux;
        let speed_tol = 1e-12 * m.c_hi().max(1.0);
        for (r, (road, spec)) in self.roads.iter().zip(&self.spec.roads).enumerate() {
            let tol = 1e-9 * spec.length().max(1.0);
            let mut expected_left = road.first;
            let mut prev = spec.a - tol;
            for (k, f) in road.fronts.iter().enumerate() {
                if f.left != expected_left {
                    return fail(format!("road {r} front {k}: left {} does not chain with {expected_left}", f.left));
                }
                if f.left == f.right {
                    return fail(format!("road {r} front {k}: null front at {}", f.left));
                }
                let rh = m.rh_speed(f.left, f.right);
                if (f.speed - rh).abs() > speed_tol {
                    return fail(format!("road {r} front {k}: speed {} differs from {rh}", f.speed));
                }
                let x = f.position(self.time);
                if x < prev - tol || x > spec.b + tol {
                    return fail(format!("road {r} front {k}: position {x} out of order"));
                }
                prev = x;
                expected_left = f.right;
            }
        }
        for (j, js) in self.spec.junctions.iter().enumerate() {
            let incoming: Vec<f64> = js.incoming.iter().map(|&r| self.roads[r].last()).collect();
            let outgoing: Vec<f64> = js.outgoing.iter().map(|&r| self.roads[r].first).collect();
            let state = &self.junctions[j];
            let sol = solve_junction_riemann(&incoming, &outgoing, &state.effective[state.entry], m, self.spec.tracking.delta)?;
            if !sol.is_equilibrium() {
                return fail(format!("junction {j}: traces {incoming:?} / {outgoing:?} are not an equilibrium"));
            }
        }
        Ok(())
    }
}

struct JunctionOutcome {
    traces: Vec<f64>,
    solved: Vec<f64>,
    emitted: usize,
    residual: f64,
}
