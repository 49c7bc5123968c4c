//! Acceptance criteria. Each test prints one PASS/FAIL line on stderr
//! (uncaptured) and then asserts the verdict.

mod common;

use std::io::Write;
use std::time::{Duration, Instant};

use common::{random_initial, random_network, NetOptions};
use lwr_net::network::{FluxDoc, JunctionDoc, NetworkDoc, RoadDoc, ScheduleEntryDoc, TrackingDoc, SPEC_VERSION};
use lwr_net::riemann::{build_feasible_region, maximize_through_flux, FeasibleRegion};
use lwr_net::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EXACT_TOL: f64 = 1e-10;
const BALANCE_TOL: f64 = 1e-12;
const MONOTONE_TOL: f64 = 1e-9;
const MASS_REL_TOL: f64 = 1e-10;

fn report(criterion: u32, pass: bool, detail: &str) {
    let line = format!("acceptance criterion {criterion}: {} {detail}\n", if pass { "PASS" } else { "FAIL" });
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(pass, "{}", line.trim_end());
}

fn flux(spec: &NetworkSpec, rho: f64) -> f64 {
    spec.flux.eval_flux(rho).unwrap()
}

fn close_all(got: &[f64], want: &[f64], tol: f64) -> bool {
    got.len() == want.len() && got.iter().zip(want).all(|(g, w)| (g - w).abs() <= tol)
}

#[test]
fn criterion_1_flux_variation_jump_at_three_by_three() {
    let start = Instant::now();
    let spec = build_scenario(&ScenarioId::AppendixA, &ScenarioParams { rho1_flux: Some(0.5), ..Default::default() }).unwrap();
    let mut state = initialize(&spec).unwrap();
    let before = flux_total_variation(&state.snapshot_now(), &spec.flux);
    let record = state.advance().unwrap().expect("the wave reaches the junction");
    let after = flux_total_variation(&state.snapshot_now(), &spec.flux);
    let fluxes: Vec<f64> = record.after.iter().map(|&r| flux(&spec, r)).collect();
    let elapsed = start.elapsed();

    let expected = [0.5, 7.0 / 6.0, 0.5, 1.0, 1.0, 1.0 / 6.0];
    let arrival = matches!(record.kind, EventKind::JunctionArrival { .. });
    let pass = arrival
        && (before - 0.5).abs() <= EXACT_TOL
        && (after - 2.0).abs() <= EXACT_TOL
        && close_all(&fluxes, &expected, EXACT_TOL)
        && elapsed < Duration::from_secs(1);
    report(
        1,
        pass,
        &format!("tv_flux before {before:.12} (want 0.5), after {after:.12} (want 2.0), fluxes {fluxes:.6?} (want {expected:.6?}), {elapsed:?}"),
    );
}

#[test]
fn criterion_2_weak_wave_creates_strong_wave() {
    let start = Instant::now();
    let params = ScenarioParams { alpha1: Some(0.25), alpha2: Some(0.4), rho1_flux: Some(0.99), ..Default::default() };
    let spec = build_scenario(&ScenarioId::AppendixB, &params).unwrap();
    let m = &spec.flux;
    let rho1 = spec.roads[0].initial[0].1;
    let rho30 = spec.roads[2].initial[0].1;
    let mut state = initialize(&spec).unwrap();
    let record = state.advance().unwrap().expect("the wave reaches the junction");
    let hat3 = record.after[2];
    let emitted = (hat3 - rho30).abs();
    let reference = (m.eval_tau(rho30).unwrap() - rho30).abs();
    let incoming = (rho1 - m.sigma()).abs();
    let elapsed = start.elapsed();

    let pass = matches!(record.kind, EventKind::JunctionArrival { road: 0, .. })
        && emitted >= 0.9 * reference
        && incoming < 0.06
        && elapsed < Duration::from_secs(1);
    report(
        2,
        pass,
        &format!("road-3 wave {emitted:.6} vs 0.9*|tau-rho30| = {:.6}, incoming wave {incoming:.6} (< 0.06), {elapsed:?}", 0.9 * reference),
    );
}

/// Runs one network, returning the samples taken after every event, or
/// `None` when fewer than `min_events` happen.
fn sampled_run(spec: &NetworkSpec, horizon: f64, min_events: usize) -> Option<TelemetryRecorder> {
    let mut state = initialize(spec).unwrap();
    let mut recorder = TelemetryRecorder::new();
    state.run_until(horizon, &mut [&mut recorder]).unwrap();
    (recorder.events.len() >= min_events).then_some(recorder)
}

/// Pairs of consecutive samples bracketing one event, with that event.
fn per_event(rec: &TelemetryRecorder) -> impl Iterator<Item = (&FunctionalSample, &FunctionalSample, &EventRecord)> {
    rec.samples.windows(2).filter(|w| w[1].event_index != w[0].event_index).map(move |w| {
        let event = &rec.events[w[1].event_index as usize - 1];
        (&w[0], &w[1], event)
    })
}

const NETWORKS: usize = 200;
const MIN_EVENTS: usize = 50;
const RANDOM_HORIZON: f64 = 10.0;

#[test]
fn criterion_3_big_wave_count_never_grows() {
    let start = Instant::now();
    let opts = NetOptions::smooth(0.02);
    let (mut networks, mut events, mut violations, mut seed) = (0, 0, 0, 0u64);
    let mut first = None;
    while networks < NETWORKS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        seed += 1;
        let spec = random_network(&mut rng, &opts);
        let Some(rec) = sampled_run(&spec, RANDOM_HORIZON, MIN_EVENTS) else { continue };
        networks += 1;
        events += rec.events.len();
        for (prev, next, event) in per_event(&rec) {
            if next.big_waves > prev.big_waves {
                violations += 1;
                first.get_or_insert_with(|| format!("seed {}: N {} -> {} at {event}", seed - 1, prev.big_waves, next.big_waves));
            }
        }
    }
    let elapsed = start.elapsed();
    let pass = violations == 0 && elapsed < Duration::from_secs(60);
    report(
        3,
        pass,
        &format!("{networks} networks, {events} events, {violations} increases of N, {elapsed:?}; first: {}", first.unwrap_or_default()),
    );
}

#[test]
fn criterion_4_flux_variation_never_grows() {
    let start = Instant::now();
    let plain = NetOptions::kinked(0.02, 0.05);
    let scheduled = NetOptions { schedules: true, ..plain.clone() };
    let (mut networks, mut violations, mut jumps, mut worst_jump, mut seed) = (0, 0, 0, 0.0_f64, 0u64);
    let mut first = None;
    while networks < NETWORKS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        seed += 1;
        let spec = random_network(&mut rng, &plain);
        let Some(rec) = sampled_run(&spec, RANDOM_HORIZON, MIN_EVENTS) else { continue };
        networks += 1;
        for (prev, next, event) in per_event(&rec) {
            if next.tv_flux > prev.tv_flux + MONOTONE_TOL * spec.flux.fmax() {
                violations += 1;
                first.get_or_insert_with(|| format!("seed {}: {:.6} -> {:.6} at {event}", seed - 1, prev.tv_flux, next.tv_flux));
            }
        }
    }
    let mut scheduled_networks = 0;
    let mut jump_violations = 0;
    for seed in 0..NETWORKS as u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(10_000 + seed);
        let spec = random_network(&mut rng, &scheduled);
        let Some(rec) = sampled_run(&spec, RANDOM_HORIZON, 0) else { continue };
        scheduled_networks += 1;
        for (prev, next, event) in per_event(&rec) {
            if let EventKind::ScheduleJump { .. } = event.kind {
                jumps += 1;
                let increase = next.tv_flux - prev.tv_flux;
                worst_jump = worst_jump.max(increase);
                if increase > 4.0 * spec.flux.fmax() + MONOTONE_TOL {
                    jump_violations += 1;
                }
            }
        }
    }
    let elapsed = start.elapsed();
    let pass = violations == 0 && jump_violations == 0 && elapsed < Duration::from_secs(90);
    report(
        4,
        pass,
        &format!(
            "{networks} networks: {violations} increases of tv_flux; {scheduled_networks} scheduled networks: {jumps} jumps, \
             largest increase {worst_jump:.6} (<= 4), {jump_violations} over; {elapsed:?}; first: {}",
            first.unwrap_or_default()
        ),
    );
}

fn random_matrix(rng: &mut ChaCha8Rng, m: usize, n: usize) -> DistributionMatrix {
    let columns: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let w: Vec<f64> = (0..m).map(|_| -rng.gen_range(1e-9_f64..1.0).ln()).collect();
            let total: f64 = w.iter().sum();
            w.iter().map(|x| x / total).collect()
        })
        .collect();
    let rows: Vec<Vec<f64>> = (0..m).map(|j| columns.iter().map(|c| c[j]).collect()).collect();
    DistributionMatrix::from_rows(&rows)
}

/// Grid search over the feasible region with pitch `h`: the first `n - 1`
/// coordinates run over the grid and the last takes the largest feasible
/// grid value. Ties go to the lexicographically largest point.
fn grid_oracle(region: &FeasibleRegion, h: f64) -> Vec<f64> {
    let n = region.demand.len();
    let m = region.supply.len();
    let a: Vec<Vec<f64>> = (0..m).map(|j| (0..n).map(|i| region.matrix.get(j, i)).collect()).collect();
    let steps: Vec<usize> = region.demand.iter().map(|d| (d / h + 1e-9).floor() as usize).collect();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut prefix = vec![0usize; n - 1];
    loop {
        let head: Vec<f64> = prefix.iter().map(|&k| k as f64 * h).collect();
        let mut top = region.demand[n - 1];
        let mut feasible = true;
        for j in 0..m {
            let used: f64 = head.iter().enumerate().map(|(i, g)| a[j][i] * g).sum();
            let room = region.supply[j] - used;
            if a[j][n - 1] > 0.0 {
                top = top.min(room / a[j][n - 1]);
            } else if room < -1e-12 {
                feasible = false;
            }
        }
        if feasible && top >= -1e-12 {
            let last = ((top.max(0.0) / h) + 1e-9).floor() * h;
            let e = head.iter().sum::<f64>() + last;
            let mut point = head.clone();
            point.push(last);
            let take = match &best {
                None => true,
                Some((be, _)) => e >= be - 1e-12,
            };
            if take {
                let e = best.as_ref().map_or(e, |(be, _)| e.max(*be));
                best = Some((e, point));
            }
        }
        // next prefix in lexicographic order
        let mut k = n - 1;
        loop {
            if k == 0 {
                return best.map(|(_, p)| p).unwrap_or_else(|| vec![0.0; n]);
            }
            k -= 1;
            if prefix[k] < steps[k] {
                prefix[k] += 1;
                for later in prefix.iter_mut().skip(k + 1) {
                    *later = 0;
                }
                break;
            }
        }
    }
}

#[test]
fn criterion_5_vertex_enumeration_matches_grid_search() {
    let start = Instant::now();
    let m = FluxModel::smooth(1.0).unwrap();
    let h = m.fmax() / 400.0;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut mismatches, mut beaten, mut worst_gamma, mut worst_e) = (0, 0, 0.0_f64, 0.0_f64);
    let mut first = None;
    for (size, count) in [(2usize, 500usize), (3, 200)] {
        for case in 0..count {
            let incoming: Vec<f64> = (0..size).map(|_| rng.gen_range(0.0..=1.0)).collect();
            let outgoing: Vec<f64> = (0..size).map(|_| rng.gen_range(0.0..=1.0)).collect();
            let matrix = random_matrix(&mut rng, size, size);
            let region = build_feasible_region(&incoming, &outgoing, &matrix, &m).unwrap();
            let vertex = maximize_through_flux(&region);
            let grid = grid_oracle(&region, h);
            let dg = vertex.iter().zip(&grid).map(|(v, g)| (v - g).abs()).fold(0.0, f64::max);
            let de = (vertex.iter().sum::<f64>() - grid.iter().sum::<f64>()).abs();
            if grid.iter().sum::<f64>() > vertex.iter().sum::<f64>() + 1e-12 {
                beaten += 1;
            }
            worst_gamma = worst_gamma.max(dg);
            worst_e = worst_e.max(de);
            if dg > h * (1.0 + 1e-9) || de > 2.0 * h {
                mismatches += 1;
                first.get_or_insert_with(|| format!("{size}x{size} case {case}: vertex {vertex:?} grid {grid:?}"));
            }
        }
    }
    let elapsed = start.elapsed();
    let pass = mismatches == 0 && elapsed < Duration::from_secs(30);
    report(
        5,
        pass,
        &format!(
            "700 regions, {mismatches} mismatches, {beaten} beaten by a grid point, max |dgamma| {worst_gamma:.2e} (<= {h}), max |dE| {worst_e:.2e} (<= {}), {elapsed:?} {}",
            2.0 * h,
            first.unwrap_or_default()
        ),
    );
}

fn ring_spec(rng: &mut ChaCha8Rng) -> NetworkSpec {
    let identity = || vec![ScheduleEntryDoc { t: 0.0, matrix: vec![vec![1.0]], lights: None }];
    let road = |id: &str, rng: &mut ChaCha8Rng| RoadDoc { id: id.into(), a: 0.0, b: 1.0, initial: random_initial(rng, 0.0, 1.0, 8) };
    let doc = NetworkDoc {
        spec_version: SPEC_VERSION,
        flux: FluxDoc { family: "smooth".into(), fmax: 1.0, nu: None },
        roads: vec![road("u", rng), road("v", rng)],
        junctions: vec![
            JunctionDoc { id: "uv".into(), incoming: vec!["u".into()], outgoing: vec!["v".into()], schedule: identity(), period: None },
            JunctionDoc { id: "vu".into(), incoming: vec!["v".into()], outgoing: vec!["u".into()], schedule: identity(), period: None },
        ],
        tracking: TrackingDoc { delta: 0.02, horizon: 100.0 },
    };
    NetworkSpec::from_doc(&doc).unwrap()
}

#[test]
fn criterion_6_ring_conserves_mass() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let spec = ring_spec(&mut rng);
    let mut state = initialize(&spec).unwrap();
    let mass0 = total_mass(&state.snapshot_now());
    let (mut events, mut solves, mut worst_mass, mut worst_balance) = (0, 0, 0.0_f64, state.max_balance_residual());
    while events < 200 {
        let Some(record) = state.advance().unwrap() else { break };
        events += 1;
        let mass = total_mass(&state.snapshot_now());
        worst_mass = worst_mass.max((mass - mass0).abs() / mass0);
        if let Some(r) = record.balance_residual {
            solves += 1;
            worst_balance = worst_balance.max(r.abs());
        }
    }
    let pass = events >= 100 && solves > 0 && worst_mass <= MASS_REL_TOL && worst_balance <= BALANCE_TOL * spec.flux.fmax();
    report(
        6,
        pass,
        &format!("{events} events, {solves} junction solves, max relative mass drift {worst_mass:.2e}, max flux imbalance {worst_balance:.2e}"),
    );
}

fn event_times(spec: &NetworkSpec, horizon: f64) -> Vec<f64> {
    let mut state = initialize(spec).unwrap();
    let mut rec = TelemetryRecorder::new();
    state.run_until(horizon, &mut [&mut rec]).unwrap();
    rec.events.iter().map(|e| e.time).collect()
}

/// Copy of `spec` with one interior breakpoint moved inside its cell.
fn shift_one_breakpoint(spec: &NetworkSpec, rng: &mut ChaCha8Rng) -> NetworkSpec {
    let mut doc = spec.to_doc();
    let slots: Vec<(usize, usize)> =
        doc.roads.iter().enumerate().flat_map(|(r, road)| (1..road.initial.len()).map(move |k| (r, k))).collect();
    let (r, k) = slots[rng.gen_range(0..slots.len())];
    let b = doc.roads[r].b;
    let initial = &mut doc.roads[r].initial;
    let lo = initial[k - 1].0;
    let hi = initial.get(k + 1).map_or(b, |p| p.0);
    initial[k].0 = lo + (hi - lo) * rng.gen_range(0.05..0.95);
    NetworkSpec::from_doc(&doc).unwrap()
}

#[test]
fn criterion_7_l1_distance_does_not_grow() {
    let start = Instant::now();
    let opts = NetOptions { max_junctions: 2, ..NetOptions::kinked(0.01, 0.05) };
    let horizon = 2.0;
    let (mut violations, mut worst, mut checked) = (0, 0.0_f64, 0);
    let mut first = None;
    for pair in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + pair);
        let spec = random_network(&mut rng, &opts);
        let shifted = shift_one_breakpoint(&spec, &mut rng);
        let mut times = event_times(&spec, horizon);
        times.extend(event_times(&shifted, horizon));
        times.sort_by(f64::total_cmp);
        times.dedup();
        let mut s1 = initialize(&spec).unwrap();
        let mut s2 = initialize(&shifted).unwrap();
        let d0 = l1_distance(&s1.snapshot_now(), &s2.snapshot_now()).unwrap();
        for &t in &times {
            s1.run_until(t, &mut []).unwrap();
            s2.run_until(t, &mut []).unwrap();
            let excess = l1_distance(&s1.snapshot_now(), &s2.snapshot_now()).unwrap() - d0;
            checked += 1;
            worst = worst.max(excess);
            if excess > MONOTONE_TOL {
                violations += 1;
                first.get_or_insert_with(|| format!("pair {pair} at t = {t:.6}: excess {excess:.3e} over {d0:.3e}"));
            }
        }
    }
    let pass = violations == 0;
    report(
        7,
        pass,
        &format!("50 pairs, {checked} event times, {violations} over tolerance, largest excess {worst:.3e}, {:?}; first: {}", start.elapsed(), first.unwrap_or_default()),
    );
}

fn convergence_spec(delta: f64, nu: f64) -> NetworkSpec {
    let base = parse_network(
        r#"{"spec_version": 1, "flux": {"family": "smooth"},
            "roads": [{"id": "1", "a": -1, "b": 0, "initial": [[-1, 0.15], [-0.6, 0.8], [-0.3, 0.35]]},
                      {"id": "2", "a": -1, "b": 0, "initial": [[-1, 0.9], [-0.5, 0.25]]},
                      {"id": "3", "a": 0, "b": 1, "initial": [[0, 0.3], [0.4, 0.85]]},
                      {"id": "4", "a": 0, "b": 1, "initial": [[0, 0.65], [0.7, 0.1]]}],
            "junctions": [{"id": "J", "incoming": ["1", "2"], "outgoing": ["3", "4"],
                "schedule": [{"t": 0, "matrix": [[0.3, 0.6], [0.7, 0.4]]}]}],
            "tracking": {"delta": 0.04, "horizon": 1}}"#,
    )
    .unwrap();
    base.with_flux(FluxModel::kinked(&base.flux, nu).unwrap()).with_delta(delta)
}

fn state_at(spec: &NetworkSpec, t: f64) -> Snapshot {
    let mut state = initialize(spec).unwrap();
    state.run_until(t, &mut []).unwrap();
    state.snapshot_now()
}

#[test]
fn criterion_8_refinement_converges() {
    let (delta0, nu0, horizon) = (0.04, 0.1, 1.0);
    let runs: Vec<Snapshot> = (0..5)
        .map(|k| {
            let scale = 0.5_f64.powi(k);
            state_at(&convergence_spec(delta0 * scale, nu0 * scale), horizon)
        })
        .collect();
    let diffs: Vec<f64> = runs.windows(2).map(|w| l1_distance(&w[0], &w[1]).unwrap()).collect();
    let swap = l1_distance(&state_at(&convergence_spec(delta0, nu0), horizon), &state_at(&convergence_spec(delta0, nu0 / 2.0), horizon)).unwrap();
    let length = convergence_spec(delta0, nu0).total_length();
    let pass = diffs.windows(2).all(|w| w[1] < w[0]);
    report(
        8,
        pass,
        &format!(
            "L1 gaps between refinements {diffs:.6?}; flux-swap gap {swap:.6} vs 2*nu*fmax*T = {:.3} on length {length}",
            2.0 * nu0 * horizon
        ),
    );
}

#[test]
fn criterion_9_swapped_coefficients() {
    let (b1, b2) = (0.4, 0.3);
    let spec = build_scenario(&ScenarioId::TrafficLightSwap, &ScenarioParams { beta1: Some(b1), beta2: Some(b2), ..Default::default() }).unwrap();
    let mut state = initialize(&spec).unwrap();
    let record = state.advance().unwrap().expect("the schedule jumps");
    let fluxes: Vec<f64> = record.after.iter().map(|&r| flux(&spec, r)).collect();
    let low = b2 / (1.0 - b1);
    let expected = [low, 1.0, low, 1.0];
    let fluxes_ok = matches!(record.kind, EventKind::ScheduleJump { .. }) && close_all(&fluxes, &expected, EXACT_TOL);

    let limit = 2.0 * (1.0 - b2 / (1.0 - b2));
    let mut generated = Vec::new();
    for k in 0..5 {
        let beta1 = b2 + 0.1 * 0.5_f64.powi(k);
        let params = ScenarioParams { beta1: Some(beta1), beta2: Some(b2), ..Default::default() };
        let spec = build_scenario(&ScenarioId::TrafficLightSwap, &params).unwrap();
        let mut state = initialize(&spec).unwrap();
        let before = flux_total_variation(&state.snapshot_now(), &spec.flux);
        state.advance().unwrap().expect("the schedule jumps");
        generated.push(flux_total_variation(&state.snapshot_now(), &spec.flux) - before);
    }
    let sweep_ok = generated.iter().all(|&g| g >= limit - 1e-6);
    report(
        9,
        fluxes_ok && sweep_ok,
        &format!("post-jump fluxes {fluxes:.6?} (want {expected:.6?}); generated tv_flux over the sweep {generated:.6?} (want >= {limit:.6})"),
    );
}
