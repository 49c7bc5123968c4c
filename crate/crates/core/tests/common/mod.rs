#![allow(dead_code)]

use lwr_net::network::{FluxDoc, JunctionDoc, NetworkDoc, RoadDoc, ScheduleEntryDoc, TrackingDoc, SPEC_VERSION};
use lwr_net::NetworkSpec;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct NetOptions {
    pub flux: FluxDoc,
    pub delta: f64,
    pub horizon: f64,
    pub max_junctions: usize,
    pub max_breakpoints: usize,
    pub schedules: bool,
}

impl NetOptions {
    pub fn smooth(delta: f64) -> Self {
        NetOptions {
            flux: FluxDoc { family: "smooth".into(), fmax: 1.0, nu: None },
            delta,
            horizon: 50.0,
            max_junctions: 4,
            max_breakpoints: 10,
            schedules: false,
        }
    }

    pub fn kinked(delta: f64, nu: f64) -> Self {
        NetOptions { flux: FluxDoc { family: "kinked".into(), fmax: 1.0, nu: Some(nu) }, ..Self::smooth(delta) }
    }
}

fn density(rng: &mut ChaCha8Rng) -> f64 {
    if rng.gen_bool(0.15) {
        [0.0, 0.5, 1.0][rng.gen_range(0..3)]
    } else {
        rng.gen_range(0.0..=1.0)
    }
}

/// Piecewise-constant data on `[a, b]` with `jumps` interior breakpoints.
pub fn random_initial(rng: &mut ChaCha8Rng, a: f64, b: f64, jumps: usize) -> Vec<(f64, f64)> {
    let mut xs: Vec<f64> = (0..jumps).map(|_| rng.gen_range(a..b)).filter(|&x| x > a).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let mut out = vec![(a, density(rng))];
    out.extend(xs.into_iter().map(|x| (x, density(rng))));
    out
}

fn random_matrix(rng: &mut ChaCha8Rng, m: usize, n: usize) -> Vec<Vec<f64>> {
    let columns: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            if m == 1 {
                vec![1.0]
            } else {
                let alpha = rng.gen_range(0.05..0.95);
                vec![alpha, 1.0 - alpha]
            }
        })
        .collect();
    (0..m).map(|j| columns.iter().map(|c| c[j]).collect()).collect()
}

/// Chain of 1 to `max_junctions` junctions, each with at most two incoming
/// and two outgoing roads; consecutive junctions often share a road.
pub fn random_network(rng: &mut ChaCha8Rng, opts: &NetOptions) -> NetworkSpec {
    let junction_count = rng.gen_range(1..=opts.max_junctions);
    let mut roads: Vec<RoadDoc> = Vec::new();
    let mut junctions = Vec::new();
    let mut previous_out: Vec<String> = Vec::new();
    let new_road = |rng: &mut ChaCha8Rng, roads: &mut Vec<RoadDoc>| {
        let id = format!("r{}", roads.len());
        let jumps = rng.gen_range(2..=opts.max_breakpoints.max(2));
        roads.push(RoadDoc { id: id.clone(), a: 0.0, b: 1.0, initial: random_initial(rng, 0.0, 1.0, jumps) });
        id
    };
    for k in 0..junction_count {
        let n = rng.gen_range(1..=2);
        let m = rng.gen_range(1..=2);
        let mut incoming = Vec::new();
        if !previous_out.is_empty() && rng.gen_bool(0.8) {
            incoming.push(previous_out.remove(rng.gen_range(0..previous_out.len())));
        }
        while incoming.len() < n {
            incoming.push(new_road(rng, &mut roads));
        }
        let outgoing: Vec<String> = (0..m).map(|_| new_road(rng, &mut roads)).collect();
        let mut schedule = vec![ScheduleEntryDoc { t: 0.0, matrix: random_matrix(rng, m, n), lights: None }];
        let mut period = None;
        if opts.schedules {
            let tbar = rng.gen_range(0.05..1.0);
            let mut second = ScheduleEntryDoc { t: tbar, matrix: random_matrix(rng, m, n), lights: None };
            if n == 2 && rng.gen_bool(0.3) {
                schedule[0].lights = Some(vec![1, 0]);
                second.lights = Some(vec![0, 1]);
            }
            schedule.push(second);
            if rng.gen_bool(0.5) {
                period = Some(tbar * rng.gen_range(1.5..3.0));
            }
        }
        junctions.push(JunctionDoc { id: format!("J{k}"), incoming, outgoing: outgoing.clone(), schedule, period });
        previous_out = outgoing;
    }
    let doc = NetworkDoc {
        spec_version: SPEC_VERSION,
        flux: opts.flux.clone(),
        roads,
        junctions,
        tracking: TrackingDoc { delta: opts.delta, horizon: opts.horizon },
    };
    NetworkSpec::from_doc(&doc).expect("generated networks are valid")
}
