//! Road networks: roads, junctions with time-dependent distribution matrices
//! and traffic lights, and the JSON configuration they are read from.
//!
//! The document schema (`spec_version` 1):
//!
//! ```json
//! {
//!   "spec_version": 1,
//!   "flux": {"family": "smooth", "fmax": 1.0},
//!   "roads": [{"id": "r1", "a": 0.0, "b": 1.0, "initial": [[0.0, 0.3], [0.5, 0.7]]}],
//!   "junctions": [{"id": "J", "incoming": ["r1"], "outgoing": ["r2"],
//!                  "schedule": [{"t": 0.0, "matrix": [[1.0]]}], "period": null}],
//!   "tracking": {"delta": 0.02, "horizon": 10.0}
//! }
//! ```
//!
//! `initial` lists `(x, rho)` pairs: `rho` holds on `[x, next x)`. The first
//! `x` must equal `a`; the others are strictly increasing inside `(a, b)`.
//! Road ends not attached to a junction are absorbing.

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::flux::FluxModel;

pub const SPEC_VERSION: u32 = 1;
pub const MAX_JUNCTION_ARITY: usize = 3;
const COLUMN_SUM_TOL: f64 = 1e-12;
const SCHEDULE_TOL: f64 = 1e-12;

// ---------------------------------------------------------------------------
// Document types

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkDoc {
    pub spec_version: u32,
    pub flux: FluxDoc,
    pub roads: Vec<RoadDoc>,
    #[serde(default)]
    pub junctions: Vec<JunctionDoc>,
    pub tracking: TrackingDoc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FluxDoc {
    pub family: String,
    #[serde(default = "default_fmax")]
    pub fmax: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
}

fn default_fmax() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoadDoc {
    pub id: String,
    pub a: f64,
    pub b: f64,
    pub initial: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JunctionDoc {
    pub id: String,
    pub incoming: Vec<String>,
    pub outgoing: Vec<String>,
    pub schedule: Vec<ScheduleEntryDoc>,
    #[serde(default)]
    pub period: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleEntryDoc {
    pub t: f64,
    pub matrix: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lights: Option<Vec<u8>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackingDoc {
    pub delta: f64,
    pub horizon: f64,
}

// ---------------------------------------------------------------------------
// Validated types

#[derive(Debug, Clone, PartialEq)]
pub struct RoadSpec {
    pub id: String,
    pub a: f64,
    pub b: f64,
    /// `(x, rho)` pairs, first `x == a`.
    pub initial: Vec<(f64, f64)>,
}

impl RoadSpec {
    pub fn length(&self) -> f64 {
        self.b - self.a
    }
}

/// Column-stochastic `m x n` matrix; entry `(j, i)` is the share of traffic
/// from incoming road `i` that takes outgoing road `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<f64>,
}

impl DistributionMatrix {
    /// Builds from row-major rows without validation.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let m = rows.len();
        let n = rows.first().map_or(0, Vec::len);
        let entries = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Self { rows: m, cols: n, entries }
    }

    pub fn outgoing(&self) -> usize {
        self.rows
    }

    pub fn incoming(&self) -> usize {
        self.cols
    }

    pub fn get(&self, j: usize, i: usize) -> f64 {
        self.entries[j * self.cols + i]
    }

    pub fn column(&self, i: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.rows).map(move |j| self.get(j, i))
    }

    pub fn column_sum(&self, i: usize) -> f64 {
        self.column(i).sum()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.entries.chunks(self.cols.max(1)).map(<[f64]>::to_vec).collect()
    }

    /// Multiplies column `i` by `gates[i]`.
    pub fn gated(&self, gates: &[u8]) -> Self {
        let mut out = self.clone();
        for j in 0..self.rows {
            for i in 0..self.cols {
                out.entries[j * self.cols + i] *= f64::from(gates[i]);
            }
        }
        out
    }

    /// `A gamma`.
    pub fn apply(&self, gamma: &[f64]) -> Vec<f64> {
        (0..self.rows)
            .map(|j| (0..self.cols).map(|i| self.get(j, i) * gamma[i]).sum())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleEntry {
    pub time: f64,
    pub matrix: DistributionMatrix,
    /// Per-incoming-road gate (1 green, 0 red); `None` means all green.
    pub lights: Option<Vec<u8>>,
}

impl ScheduleEntry {
    pub fn gates(&self) -> Vec<u8> {
        self.lights.clone().unwrap_or_else(|| vec![1; self.matrix.incoming()])
    }

    /// `alpha_ji * chi_i`.
    pub fn effective(&self) -> DistributionMatrix {
        self.matrix.gated(&self.gates())
    }

    /// Number of coefficients that differ from `prev`: one per changed
    /// column of the matrix plus one per changed gate.
    fn changes_from(&self, prev: &ScheduleEntry) -> usize {
        let n = self.matrix.incoming();
        let columns = (0..n)
            .filter(|&i| self.matrix.column(i).zip(prev.matrix.column(i)).any(|(x, y)| x != y))
            .count();
        let gates = self.gates().iter().zip(prev.gates()).filter(|(x, y)| **x != *y).count();
        columns + gates
    }
}

/// A schedule discontinuity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleJump {
    pub time: f64,
    /// Entry that becomes active at `time`.
    pub entry: usize,
    /// Index of the instant within the (possibly periodic) sequence.
    pub ordinal: u64,
    /// Number of coefficients that jump.
    pub changes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JunctionSpec {
    pub id: String,
    /// Road indices.
    pub incoming: Vec<usize>,
    pub outgoing: Vec<usize>,
    pub schedule: Vec<ScheduleEntry>,
    pub period: Option<f64>,
}

impl JunctionSpec {
    /// Index of the schedule entry active at `t` (right-continuous).
    pub fn entry_index_at(&self, t: f64) -> usize {
        let local = match self.period {
            Some(p) => {
                let mut r = t - p * (t / p).floor();
                if r >= p - SCHEDULE_TOL * p.max(1.0) {
                    r = 0.0;
                }
                r
            }
            None => t,
        };
        let tol = SCHEDULE_TOL * local.abs().max(1.0);
        self.schedule.iter().rposition(|e| e.time <= local + tol).unwrap_or(0)
    }

    /// The schedule entry active at `t`; its [`ScheduleEntry::effective`]
    /// matrix carries the light gates.
    pub fn matrix_at(&self, t: f64) -> &ScheduleEntry {
        &self.schedule[self.entry_index_at(t)]
    }

    fn instant(&self, ordinal: u64) -> (f64, usize) {
        let k = self.schedule.len() as u64;
        match self.period {
            Some(p) => {
                let cycle = ordinal / k;
                let idx = (ordinal % k) as usize;
                (self.schedule[idx].time + cycle as f64 * p, idx)
            }
            None => (self.schedule[ordinal as usize].time, ordinal as usize),
        }
    }

    /// First jump whose ordinal exceeds `after` (ordinal 0 is the start).
    pub fn next_jump(&self, after: u64) -> Option<ScheduleJump> {
        let k = self.schedule.len() as u64;
        let limit = match self.period {
            Some(_) => after + k + 1,
            None => k - 1,
        };
        let mut ordinal = after + 1;
        while ordinal <= limit {
            let (time, entry) = self.instant(ordinal);
            let prev = if entry == 0 { self.schedule.len() - 1 } else { entry - 1 };
            let changes = self.schedule[entry].changes_from(&self.schedule[prev]);
            if changes > 0 {
                return Some(ScheduleJump { time, entry, ordinal, changes });
            }
            ordinal += 1;
        }
        None
    }

    /// Number of coefficient jumps in `(t1, t2]`.
    pub fn jump_count(&self, t1: f64, t2: f64) -> usize {
        let mut total = 0;
        let mut ordinal = 0;
        while let Some(jump) = self.next_jump(ordinal) {
            if jump.time > t2 {
                break;
            }
            if jump.time > t1 {
                total += jump.changes;
            }
            ordinal = jump.ordinal;
        }
        total
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackingParams {
    /// Maximal density step inside discretized rarefactions.
    pub delta: f64,
    pub horizon: f64,
}

/// Junction attachment of one road end: `(junction index, slot)`.
pub type Attachment = Option<(usize, usize)>;

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    pub roads: Vec<RoadSpec>,
    pub junctions: Vec<JunctionSpec>,
    pub flux: FluxModel,
    pub tracking: TrackingParams,
    /// Non-fatal findings, e.g. repeated entries in a matrix row.
    pub warnings: Vec<String>,
    /// Junction the road leaves from (at `a`), as outgoing slot.
    pub tail: Vec<Attachment>,
    /// Junction the road enters (at `b`), as incoming slot.
    pub head: Vec<Attachment>,
}

impl NetworkSpec {
    pub fn road_index(&self, id: &str) -> Option<usize> {
        self.roads.iter().position(|r| r.id == id)
    }

    pub fn total_length(&self) -> f64 {
        self.roads.iter().map(RoadSpec::length).sum()
    }

    /// Same network with different flux and tracking parameters.
    pub fn with_flux(&self, flux: FluxModel) -> Self {
        Self { flux, ..self.clone() }
    }

    pub fn with_delta(&self, delta: f64) -> Self {
        let mut out = self.clone();
        out.tracking.delta = delta;
        out
    }

    pub fn to_doc(&self) -> NetworkDoc {
        let flux = match self.flux.nu() {
            None => FluxDoc { family: "smooth".into(), fmax: self.flux.fmax(), nu: None },
            Some(nu) => FluxDoc { family: "kinked".into(), fmax: self.flux.fmax(), nu: Some(nu) },
        };
        let ids = |v: &[usize]| v.iter().map(|&r| self.roads[r].id.clone()).collect();
        NetworkDoc {
            spec_version: SPEC_VERSION,
            flux,
            roads: self
                .roads
                .iter()
                .map(|r| RoadDoc { id: r.id.clone(), a: r.a, b: r.b, initial: r.initial.clone() })
                .collect(),
            junctions: self
                .junctions
                .iter()
                .map(|j| JunctionDoc {
                    id: j.id.clone(),
                    incoming: ids(&j.incoming),
                    outgoing: ids(&j.outgoing),
                    schedule: j
                        .schedule
                        .iter()
                        .map(|e| ScheduleEntryDoc {
                            t: e.time,
                            matrix: e.matrix.to_rows(),
                            lights: e.lights.clone(),
                        })
                        .collect(),
                    period: j.period,
                })
                .collect(),
            tracking: TrackingDoc { delta: self.tracking.delta, horizon: self.tracking.horizon },
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_doc()).expect("network documents always serialize")
    }

    pub fn from_doc(doc: &NetworkDoc) -> Result<Self, ConfigError> {
        validate(doc)
    }
}

/// Parses and validates a JSON network document.
pub fn parse_network(text: &str) -> Result<NetworkSpec, ConfigError> {
    let doc: NetworkDoc =
        serde_json::from_str(text).map_err(|e| ConfigError::Syntax(e.to_string()))?;
    validate(&doc)
}

fn finite(path: &str, v: f64) -> Result<f64, ConfigError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(ConfigError::at(path, format!("value {v} is not finite")))
    }
}

fn build_flux(doc: &FluxDoc) -> Result<FluxModel, ConfigError> {
    let base = FluxModel::smooth(finite("flux.fmax", doc.fmax)?)
        .map_err(|e| ConfigError::at("flux.fmax", e.to_string()))?;
    match doc.family.as_str() {
        "smooth" => {
            if doc.nu.is_some() {
                return Err(ConfigError::at("flux.nu", "only the kinked family takes nu"));
            }
            Ok(base)
        }
        "kinked" => {
            let nu = doc.nu.ok_or_else(|| ConfigError::at("flux.nu", "kinked family needs nu"))?;
            FluxModel::kinked(&base, nu).map_err(|e| ConfigError::at("flux.nu", e.to_string()))
        }
        other => Err(ConfigError::at("flux.family", format!("unknown family {other:?}"))),
    }
}

fn validate_road(k: usize, r: &RoadDoc) -> Result<RoadSpec, ConfigError> {
    let p = format!("roads[{k}]");
    if r.id.is_empty() {
        return Err(ConfigError::at(format!("{p}.id"), "empty road id"));
    }
    let a = finite(&format!("{p}.a"), r.a)?;
    let b = finite(&format!("{p}.b"), r.b)?;
    if a >= b {
        return Err(ConfigError::at(format!("{p}.b"), format!("need a < b, got a={a}, b={b}")));
    }
    if r.initial.is_empty() {
        return Err(ConfigError::at(format!("{p}.initial"), "initial data is empty"));
    }
    for (i, &(x, rho)) in r.initial.iter().enumerate() {
        let q = format!("{p}.initial[{i}]");
        finite(&q, x)?;
        if !(0.0..=1.0).contains(&rho) {
            return Err(ConfigError::at(q, format!("density {rho} outside [0, 1]")));
        }
        if i == 0 {
            if x != a {
                return Err(ConfigError::at(q, format!("first breakpoint must equal a = {a}, got {x}")));
            }
        } else {
            let prev = r.initial[i - 1].0;
            if x <= prev {
                return Err(ConfigError::at(q, "breakpoints must be strictly increasing"));
            }
            if x >= b {
                return Err(ConfigError::at(q, format!("breakpoint {x} not inside (a, b)")));
            }
        }
    }
    Ok(RoadSpec { id: r.id.clone(), a, b, initial: r.initial.clone() })
}

fn validate_entry(
    p: &str,
    e: &ScheduleEntryDoc,
    n: usize,
    m: usize,
    warnings: &mut Vec<String>,
) -> Result<ScheduleEntry, ConfigError> {
    finite(&format!("{p}.t"), e.t)?;
    if e.matrix.len() != m || e.matrix.iter().any(|row| row.len() != n) {
        return Err(ConfigError::at(
            format!("{p}.matrix"),
            format!("expected {m} rows of {n} entries (outgoing x incoming)"),
        ));
    }
    for (j, row) in e.matrix.iter().enumerate() {
        for (i, &v) in row.iter().enumerate() {
            if !(v.is_finite() && (0.0..=1.0).contains(&v)) {
                return Err(ConfigError::at(format!("{p}.matrix[{j}][{i}]"), format!("entry {v} outside [0, 1]")));
            }
        }
        let repeated = (0..n).any(|i| (i + 1..n).any(|i2| row[i] == row[i2]));
        if repeated {
            warnings.push(format!("{p}.matrix[{j}]: entries not pairwise distinct {row:?}"));
        }
    }
    let matrix = DistributionMatrix::from_rows(&e.matrix);
    for i in 0..n {
        let s = matrix.column_sum(i);
        if (s - 1.0).abs() > COLUMN_SUM_TOL {
            return Err(ConfigError::at(
                format!("{p}.matrix"),
                format!("column {i} sums to {s}, expected 1"),
            ));
        }
    }
    if let Some(lights) = &e.lights {
        if lights.len() != n {
            return Err(ConfigError::at(format!("{p}.lights"), format!("expected {n} gates")));
        }
        if lights.iter().any(|&g| g > 1) {
            return Err(ConfigError::at(format!("{p}.lights"), "gates must be 0 or 1"));
        }
        if n == 2 && lights[0] + lights[1] != 1 {
            return Err(ConfigError::at(format!("{p}.lights"), "two-road lights need exactly one green"));
        }
        if lights.iter().all(|&g| g == 0) {
            return Err(ConfigError::at(format!("{p}.lights"), "all incoming roads red"));
        }
    }
    Ok(ScheduleEntry { time: e.t, matrix, lights: e.lights.clone() })
}

fn validate(doc: &NetworkDoc) -> Result<NetworkSpec, ConfigError> {
    if doc.spec_version != SPEC_VERSION {
        return Err(ConfigError::at(
            "spec_version",
            format!("unsupported version {}, expected {SPEC_VERSION}", doc.spec_version),
        ));
    }
    let flux = build_flux(&doc.flux)?;
    let roads = doc
        .roads
        .iter()
        .enumerate()
        .map(|(k, r)| validate_road(k, r))
        .collect::<Result<Vec<_>, _>>()?;
    if roads.is_empty() {
        return Err(ConfigError::at("roads", "network has no roads"));
    }
    for (k, r) in roads.iter().enumerate() {
        if roads[..k].iter().any(|o| o.id == r.id) {
            return Err(ConfigError::at(format!("roads[{k}].id"), format!("duplicate road id {:?}", r.id)));
        }
    }
    let lookup = |path: String, id: &str| {
        roads
            .iter()
            .position(|r| r.id == id)
            .ok_or_else(|| ConfigError::at(path, format!("unknown road id {id:?}")))
    };

    let mut warnings = Vec::new();
    let mut tail: Vec<Attachment> = vec![None; roads.len()];
    let mut head: Vec<Attachment> = vec![None; roads.len()];
    let mut junctions = Vec::with_capacity(doc.junctions.len());
    for (jk, jd) in doc.junctions.iter().enumerate() {
        let p = format!("junctions[{jk}]");
        if jd.id.is_empty() {
            return Err(ConfigError::at(format!("{p}.id"), "empty junction id"));
        }
        if doc.junctions[..jk].iter().any(|o| o.id == jd.id) {
            return Err(ConfigError::at(format!("{p}.id"), format!("duplicate junction id {:?}", jd.id)));
        }
        let (n, m) = (jd.incoming.len(), jd.outgoing.len());
        if !(1..=MAX_JUNCTION_ARITY).contains(&n) {
            return Err(ConfigError::at(format!("{p}.incoming"), format!("need 1 to 3 incoming roads, got {n}")));
        }
        if !(1..=MAX_JUNCTION_ARITY).contains(&m) {
            return Err(ConfigError::at(format!("{p}.outgoing"), format!("need 1 to 3 outgoing roads, got {m}")));
        }
        let mut incoming = Vec::with_capacity(n);
        for (slot, id) in jd.incoming.iter().enumerate() {
            let path = format!("{p}.incoming[{slot}]");
            let r = lookup(path.clone(), id)?;
            if head[r].is_some() {
                return Err(ConfigError::at(path, format!("road {id:?} already enters a junction")));
            }
            head[r] = Some((jk, slot));
            incoming.push(r);
        }
        let mut outgoing = Vec::with_capacity(m);
        for (slot, id) in jd.outgoing.iter().enumerate() {
            let path = format!("{p}.outgoing[{slot}]");
            let r = lookup(path.clone(), id)?;
            if tail[r].is_some() {
                return Err(ConfigError::at(path, format!("road {id:?} already leaves a junction")));
            }
            tail[r] = Some((jk, slot));
            outgoing.push(r);
        }
        if jd.schedule.is_empty() {
            return Err(ConfigError::at(format!("{p}.schedule"), "schedule is empty"));
        }
        let mut schedule = Vec::with_capacity(jd.schedule.len());
        for (sk, e) in jd.schedule.iter().enumerate() {
            let q = format!("{p}.schedule[{sk}]");
            if sk == 0 && e.t != 0.0 {
                return Err(ConfigError::at(format!("{q}.t"), "first schedule entry must start at t = 0"));
            }
            if sk > 0 && e.t <= jd.schedule[sk - 1].t {
                return Err(ConfigError::at(format!("{q}.t"), "activation times must be strictly increasing"));
            }
            schedule.push(validate_entry(&q, e, n, m, &mut warnings)?);
        }
        if let Some(period) = jd.period {
            let last = schedule.last().map_or(0.0, |e| e.time);
            if !(period.is_finite() && period > last) {
                return Err(ConfigError::at(
                    format!("{p}.period"),
                    format!("period {period} must exceed the last activation time {last}"),
                ));
            }
        }
        junctions.push(JunctionSpec { id: jd.id.clone(), incoming, outgoing, schedule, period: jd.period });
    }

    let delta = finite("tracking.delta", doc.tracking.delta)?;
    if delta <= 0.0 {
        return Err(ConfigError::at("tracking.delta", "delta must be positive"));
    }
    let horizon = finite("tracking.horizon", doc.tracking.horizon)?;
    if horizon < 0.0 {
        return Err(ConfigError::at("tracking.horizon", "horizon must be non-negative"));
    }

    Ok(NetworkSpec {
        roads,
        junctions,
        flux,
        tracking: TrackingParams { delta, horizon },
        warnings,
        tail,
        head,
    })
}
