//! Exact Riemann solvers on a road and at a junction.
//!
//! On a road, an increasing jump is a single entropic shock and a decreasing
//! jump is a rarefaction, realized as a fan of rarefaction shocks whose
//! densities follow the `delta` grid with `sigma` always inserted.
//!
//! At a junction the incoming fluxes maximize the total through-flux over the
//! polytope cut out by the demands, the supplies and the distribution
//! matrix. With at most three incoming roads the polytope is small enough
//! that enumerating its vertices is exact and cheap.

use crate::error::FluxError;
use crate::flux::{Branch, FluxModel};
use crate::network::DistributionMatrix;

/// One discontinuity emitted by a Riemann solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wave {
    pub left: f64,
    pub right: f64,
    pub speed: f64,
}

/// Fronts emitted by one Riemann solve, ordered left to right (speeds
/// non-decreasing, values chained).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WaveFan {
    pub fronts: Vec<Wave>,
}

impl WaveFan {
    pub fn is_empty(&self) -> bool {
        self.fronts.is_empty()
    }

    pub fn len(&self) -> usize {
        self.fronts.len()
    }

    /// Densities met left to right: `left` of the first front, then the
    /// `right` of each front.
    pub fn breakpoint_values(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.fronts.first().map(|w| w.left).into_iter().collect();
        out.extend(self.fronts.iter().map(|w| w.right));
        out
    }
}

fn check(rho: f64) -> Result<(), FluxError> {
    if (0.0..=1.0).contains(&rho) {
        Ok(())
    } else {
        Err(FluxError::Domain(rho))
    }
}

/// Grid points closer than this to a fan endpoint are skipped.
const FAN_GAP: f64 = 1e-12;

/// Solves the Riemann problem `(left, right)` on a road.
pub fn solve_road_riemann(left: f64, right: f64, m: &FluxModel, delta: f64) -> Result<WaveFan, FluxError> {
    check(left)?;
    check(right)?;
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(FluxError::Parameter(format!("rarefaction step must be positive, got {delta}")));
    }
    if left == right {
        return Ok(WaveFan::default());
    }
    if left < right {
        let speed = m.rh_speed(left, right);
        return Ok(WaveFan { fronts: vec![Wave { left, right, speed }] });
    }

    let mut values = vec![left];
    let top = (left / delta).floor() as i64;
    let bottom = (right / delta).ceil() as i64;
    let sigma = m.sigma();
    let sigma_inside = right < sigma && sigma < left;
    let mut sigma_pending = sigma_inside;
    let mut k = top;
    while k >= bottom {
        let v = k as f64 * delta;
        k -= 1;
        if v >= left - FAN_GAP || v <= right + FAN_GAP {
            continue;
        }
        if sigma_pending && sigma > v {
            push_distinct(&mut values, sigma);
            sigma_pending = false;
        }
        if (v - sigma).abs() <= FAN_GAP && sigma_inside {
            continue;
        }
        push_distinct(&mut values, v);
    }
    if sigma_pending {
        push_distinct(&mut values, sigma);
    }
    values.push(right);

    let fronts = values
        .windows(2)
        .map(|w| Wave { left: w[0], right: w[1], speed: m.rh_speed(w[0], w[1]) })
        .collect();
    Ok(WaveFan { fronts })
}

fn push_distinct(values: &mut Vec<f64>, v: f64) {
    if values.last().is_none_or(|&last| (last - v).abs() > FAN_GAP) {
        values.push(v);
    }
}

/// The polytope of admissible incoming fluxes at a junction.
#[derive(Debug, Clone, PartialEq)]
pub struct FeasibleRegion {
    /// Upper bounds of the incoming fluxes (zero on red roads).
    pub demand: Vec<f64>,
    /// Upper bounds of the outgoing fluxes.
    pub supply: Vec<f64>,
    /// Effective matrix `alpha_ji * chi_i`.
    pub matrix: DistributionMatrix,
}

impl FeasibleRegion {
    pub fn incoming(&self) -> usize {
        self.demand.len()
    }

    fn scale(&self) -> f64 {
        self.demand.iter().chain(&self.supply).fold(1.0_f64, |a, &b| a.max(b))
    }

    /// Membership test with absolute slack `tol`.
    pub fn contains(&self, gamma: &[f64], tol: f64) -> bool {
        gamma.len() == self.incoming()
            && gamma.iter().zip(&self.demand).all(|(&g, &d)| g >= -tol && g <= d + tol)
            && self.matrix.apply(gamma).iter().zip(&self.supply).all(|(&o, &s)| o <= s + tol)
    }
}

/// A gate is open when its effective column carries traffic.
fn column_open(matrix: &DistributionMatrix, i: usize) -> bool {
    matrix.column_sum(i) > 0.5
}

pub fn build_feasible_region(
    incoming: &[f64],
    outgoing: &[f64],
    matrix: &DistributionMatrix,
    m: &FluxModel,
) -> Result<FeasibleRegion, FluxError> {
    assert_eq!(matrix.incoming(), incoming.len(), "matrix columns must match incoming roads");
    assert_eq!(matrix.outgoing(), outgoing.len(), "matrix rows must match outgoing roads");
    let demand = incoming
        .iter()
        .enumerate()
        .map(|(i, &rho)| Ok(if column_open(matrix, i) { m.demand(rho)? } else { 0.0 }))
        .collect::<Result<Vec<_>, FluxError>>()?;
    let supply = outgoing.iter().map(|&rho| m.supply(rho)).collect::<Result<Vec<_>, _>>()?;
    Ok(FeasibleRegion { demand, supply, matrix: matrix.clone() })
}

/// Solves the square system `a x = b` by Gaussian elimination with partial
/// pivoting; `None` when singular.
fn solve_square(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))?;
        if a[pivot][col].abs() < 1e-13 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let tail: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - tail) / a[row][row];
    }
    Some(x)
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::with_capacity(k), &mut out);
    out
}

/// `Ordering` of `a` against `b`, coordinates equal within `tol`.
fn lex_cmp(a: &[f64], b: &[f64], tol: f64) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        if x > &(y + tol) {
            return std::cmp::Ordering::Greater;
        }
        if x < &(y - tol) {
            return std::cmp::Ordering::Less;
        }
    }
    std::cmp::Ordering::Equal
}

/// Maximizes `sum(gamma)` over the region by vertex enumeration.
///
/// When the maximizer is not unique the lexicographically largest one is
/// returned (largest `gamma_1`, then `gamma_2`, ...). That point is always a
/// vertex, so enumerating vertices suffices.
pub fn maximize_through_flux(region: &FeasibleRegion) -> Vec<f64> {
    let n = region.incoming();
    let scale = region.scale();
    let tol = 1e-12 * scale;
    let tie = 1e-11 * scale;

    // rows of `coeff . gamma <= rhs`
    let mut constraints: Vec<(Vec<f64>, f64)> = Vec::with_capacity(2 * n + region.supply.len());
    for i in 0..n {
        let mut lower = vec![0.0; n];
        lower[i] = -1.0;
        constraints.push((lower, 0.0));
        let mut upper = vec![0.0; n];
        upper[i] = 1.0;
        constraints.push((upper, region.demand[i]));
    }
    for (j, &s) in region.supply.iter().enumerate() {
        let row: Vec<f64> = (0..n).map(|i| region.matrix.get(j, i)).collect();
        if row.iter().any(|&c| c != 0.0) {
            constraints.push((row, s));
        }
    }

    let mut best: Option<(f64, Vec<f64>)> = None;
    for active in combinations(constraints.len(), n) {
        let a = active.iter().map(|&k| constraints[k].0.clone()).collect();
        let b = active.iter().map(|&k| constraints[k].1).collect();
        let Some(mut gamma) = solve_square(a, b) else { continue };
        if !region.contains(&gamma, tol) {
            continue;
        }
        for (g, &d) in gamma.iter_mut().zip(&region.demand) {
            *g = g.clamp(0.0, d);
        }
        let e: f64 = gamma.iter().sum();
        let better = match &best {
            None => true,
            Some((be, bg)) => {
                e > be + tie || ((e - be).abs() <= tie && lex_cmp(&gamma, bg, tol).is_gt())
            }
        };
        if better {
            best = Some((e, gamma));
        }
    }
    // the origin is always a vertex
    best.map(|(_, g)| g).unwrap_or_else(|| vec![0.0; n])
}

/// Result of a junction Riemann solve.
#[derive(Debug, Clone, PartialEq)]
pub struct JunctionSolution {
    pub gamma_in: Vec<f64>,
    pub gamma_out: Vec<f64>,
    /// New traces on the incoming roads.
    pub rho_in: Vec<f64>,
    /// New traces on the outgoing roads.
    pub rho_out: Vec<f64>,
    /// Fan on each incoming road, from the old trace to `rho_in` (speeds <= 0).
    pub fans_in: Vec<WaveFan>,
    /// Fan on each outgoing road, from `rho_out` to the old trace (speeds >= 0).
    pub fans_out: Vec<WaveFan>,
}

impl JunctionSolution {
    pub fn is_equilibrium(&self) -> bool {
        self.fans_in.iter().chain(&self.fans_out).all(WaveFan::is_empty)
    }

    /// `sum f(rho_in) - sum f(rho_out)`.
    pub fn balance_residual(&self, m: &FluxModel) -> f64 {
        let inflow: f64 = self.rho_in.iter().map(|&r| m.f(r)).sum();
        let outflow: f64 = self.rho_out.iter().map(|&r| m.f(r)).sum();
        inflow - outflow
    }
}

/// Junction Riemann solver.
///
/// Incoming traces are the densities at `b-` of the incoming roads, outgoing
/// traces the densities at `a+` of the outgoing roads. `matrix` is the
/// effective (light-gated) distribution matrix.
pub fn solve_junction_riemann(
    incoming: &[f64],
    outgoing: &[f64],
    matrix: &DistributionMatrix,
    m: &FluxModel,
    delta: f64,
) -> Result<JunctionSolution, FluxError> {
    let region = build_feasible_region(incoming, outgoing, matrix, m)?;
    let gamma_in = maximize_through_flux(&region);
    let gamma_out = matrix.apply(&gamma_in);
    let tol = m.flux_tol();

    let pick = |trace: f64, gamma: f64, branch: Branch| -> Result<f64, FluxError> {
        if (gamma - m.f(trace)).abs() <= tol {
            Ok(trace)
        } else {
            m.invert_flux(gamma.clamp(0.0, m.fmax()), branch)
        }
    };
    let rho_in = incoming
        .iter()
        .zip(&gamma_in)
        .map(|(&t, &g)| pick(t, g, Branch::Descending))
        .collect::<Result<Vec<_>, _>>()?;
    let rho_out = outgoing
        .iter()
        .zip(&gamma_out)
        .map(|(&t, &g)| pick(t, g, Branch::Ascending))
        .collect::<Result<Vec<_>, _>>()?;

    let mut fans_in = Vec::with_capacity(incoming.len());
    for (&trace, &hat) in incoming.iter().zip(&rho_in) {
        let mut fan = solve_road_riemann(trace, hat, m, delta)?;
        for w in &mut fan.fronts {
            w.speed = w.speed.min(0.0);
        }
        fans_in.push(fan);
    }
    let mut fans_out = Vec::with_capacity(outgoing.len());
    for (&trace, &hat) in outgoing.iter().zip(&rho_out) {
        let mut fan = solve_road_riemann(hat, trace, m, delta)?;
        for w in &mut fan.fronts {
            w.speed = w.speed.max(0.0);
        }
        fans_out.push(fan);
    }
    Ok(JunctionSolution { gamma_in, gamma_out, rho_in, rho_out, fans_in, fans_out })
}
