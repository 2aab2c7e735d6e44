//! Closed-form queueing results: M/M/1, M/M/c (Erlang C), open Jackson
//! networks and the local-versus-central placement tradeoff.
//!
//! Everything here is a pure function of its inputs.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Utilizations above `1 - STABILITY_MARGIN` are reported as unstable.
pub const STABILITY_MARGIN: f64 = 1e-9;
/// Networks up to this size are solved directly; larger ones iterate.
pub const DIRECT_SOLVE_MAX_NODES: usize = 64;
const FIXED_POINT_TOL: f64 = 1e-12;
const FIXED_POINT_MAX_ITERS: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalyticError {
    #[error("unstable: utilization {rho:.6} at node {node} (needs < 1)")]
    Unstable { node: usize, rho: f64 },
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error("traffic equations have no non-negative solution")]
    SingularRouting,
}

/// Service side of a queueing node: `c` servers of rate `mu` each.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ServerSpec {
    pub mu_per_s: f64,
    pub c: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyticNodeSpec {
    pub lambda_per_s: f64,
    pub mu_per_s: f64,
    pub c: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MmcMetrics {
    pub erlang_c: f64,
    pub wq_s: f64,
    pub w_s: f64,
    pub rho: f64,
}

fn check_node(lambda: f64, mu: f64, c: u32, node: usize) -> Result<f64, AnalyticError> {
    if !(mu > 0.0) || !mu.is_finite() {
        return Err(AnalyticError::InvalidSpec(format!("mu must be positive, got {mu}")));
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(AnalyticError::InvalidSpec(format!("lambda must be non-negative, got {lambda}")));
    }
    if c == 0 {
        return Err(AnalyticError::InvalidSpec("c must be at least 1".into()));
    }
    let rho = lambda / (c as f64 * mu);
    if rho > 1.0 - STABILITY_MARGIN {
        return Err(AnalyticError::Unstable { node, rho });
    }
    Ok(rho)
}

pub fn mm1_sojourn(lambda: f64, mu: f64) -> Result<f64, AnalyticError> {
    check_node(lambda, mu, 1, 0)?;
    Ok(1.0 / (mu - lambda))
}

/// Erlang C probability of waiting, computed in log space so large `c`
/// does not overflow.
pub fn erlang_c(lambda: f64, mu: f64, c: u32) -> Result<f64, AnalyticError> {
    let rho = check_node(lambda, mu, c, 0)?;
    if lambda == 0.0 {
        return Ok(0.0);
    }
    let a = lambda / mu;
    let ln_a = a.ln();
    // ln(a^k / k!) for k = 0..c
    let mut ln_terms = Vec::with_capacity(c as usize);
    let mut ln_t = 0.0;
    for k in 0..c {
        if k > 0 {
            ln_t += ln_a - (k as f64).ln();
        }
        ln_terms.push(ln_t);
    }
    let ln_tc = ln_t + ln_a - (c as f64).ln() - (1.0 - rho).ln();
    let max = ln_terms.iter().copied().fold(ln_tc, f64::max);
    let sum: f64 = ln_terms.iter().map(|t| (t - max).exp()).sum();
    let tc = (ln_tc - max).exp();
    Ok(tc / (sum + tc))
}

pub fn mmc_metrics(lambda: f64, mu: f64, c: u32) -> Result<MmcMetrics, AnalyticError> {
    let rho = check_node(lambda, mu, c, 0)?;
    if c == 1 {
        // closed form, so the single-server case is bit-identical to M/M/1
        let w = mm1_sojourn(lambda, mu)?;
        return Ok(MmcMetrics {
            erlang_c: rho,
            wq_s: w - 1.0 / mu,
            w_s: w,
            rho,
        });
    }
    let ec = erlang_c(lambda, mu, c)?;
    let wq = ec / (c as f64 * mu - lambda);
    Ok(MmcMetrics {
        erlang_c: ec,
        wq_s: wq,
        w_s: wq + 1.0 / mu,
        rho,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JacksonNetworkSpec {
    pub nodes: Vec<ServerSpec>,
    pub external_rates: Vec<f64>,
    /// `routing[i][j]`: probability a customer leaving `i` joins `j`.
    pub routing: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JacksonNodeResult {
    pub lambda_eff: f64,
    pub rho: f64,
    /// Mean sojourn per visit.
    pub w_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JacksonResult {
    pub nodes: Vec<JacksonNodeResult>,
    pub mean_sojourn_s: f64,
}

fn validate_network(spec: &JacksonNetworkSpec) -> Result<(), AnalyticError> {
    let n = spec.nodes.len();
    if n == 0 {
        return Err(AnalyticError::InvalidSpec("network has no nodes".into()));
    }
    if spec.external_rates.len() != n || spec.routing.len() != n || spec.routing.iter().any(|r| r.len() != n) {
        return Err(AnalyticError::InvalidSpec("external rates and routing must match node count".into()));
    }
    for (i, row) in spec.routing.iter().enumerate() {
        if row.iter().any(|p| !(*p >= 0.0)) {
            return Err(AnalyticError::InvalidSpec(format!("routing row {i} has a negative entry")));
        }
        let s: f64 = row.iter().sum();
        if s > 1.0 + 1e-12 {
            return Err(AnalyticError::InvalidSpec(format!("routing row {i} sums to {s} > 1")));
        }
    }
    if spec.external_rates.iter().any(|r| !(*r >= 0.0)) {
        return Err(AnalyticError::InvalidSpec("external rates must be non-negative".into()));
    }
    Ok(())
}

/// Solves `(I - Pᵀ) λ = e` by Gaussian elimination with partial pivoting.
fn solve_direct(p: &[Vec<f64>], e: &[f64]) -> Result<Vec<f64>, AnalyticError> {
    let n = e.len();
    let mut a: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut row: Vec<f64> = (0..n).map(|j| if i == j { 1.0 } else { 0.0 } - p[j][i]).collect();
            row.push(e[i]);
            row
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))
            .expect("non-empty range");
        if a[pivot][col].abs() < 1e-14 {
            return Err(AnalyticError::SingularRouting);
        }
        a.swap(col, pivot);
        for r in 0..n {
            if r != col {
                let f = a[r][col] / a[col][col];
                if f != 0.0 {
                    for k in col..=n {
                        a[r][k] -= f * a[col][k];
                    }
                }
            }
        }
    }
    Ok((0..n).map(|i| a[i][n] / a[i][i]).collect())
}

fn solve_fixed_point(p: &[Vec<f64>], e: &[f64]) -> Result<Vec<f64>, AnalyticError> {
    let n = e.len();
    let mut lam = e.to_vec();
    for _ in 0..FIXED_POINT_MAX_ITERS {
        let next: Vec<f64> = (0..n).map(|j| e[j] + (0..n).map(|i| lam[i] * p[i][j]).sum::<f64>()).collect();
        let converged = next
            .iter()
            .zip(&lam)
            .all(|(a, b)| (a - b).abs() <= FIXED_POINT_TOL * a.abs().max(1e-300));
        lam = next;
        if converged {
            return Ok(lam);
        }
        if lam.iter().any(|x| !x.is_finite()) {
            break;
        }
    }
    Err(AnalyticError::SingularRouting)
}

/// Effective arrival rates from the traffic equations.
pub fn traffic_rates(spec: &JacksonNetworkSpec) -> Result<Vec<f64>, AnalyticError> {
    validate_network(spec)?;
    let lam = if spec.nodes.len() <= DIRECT_SOLVE_MAX_NODES {
        solve_direct(&spec.routing, &spec.external_rates)?
    } else {
        solve_fixed_point(&spec.routing, &spec.external_rates)?
    };
    if lam.iter().any(|x| !x.is_finite() || *x < -1e-9) {
        return Err(AnalyticError::SingularRouting);
    }
    Ok(lam.into_iter().map(|x| x.max(0.0)).collect())
}

/// Product-form solution: every node is an independent M/M/c at its
/// effective rate.
pub fn jackson_solve(spec: &JacksonNetworkSpec) -> Result<JacksonResult, AnalyticError> {
    let lam = traffic_rates(spec)?;
    let mut nodes = Vec::with_capacity(lam.len());
    for (i, (&l, s)) in lam.iter().zip(&spec.nodes).enumerate() {
        let m = mmc_metrics(l, s.mu_per_s, s.c).map_err(|e| match e {
            AnalyticError::Unstable { rho, .. } => AnalyticError::Unstable { node: i, rho },
            other => other,
        })?;
        nodes.push(JacksonNodeResult {
            lambda_eff: l,
            rho: m.rho,
            w_s: m.w_s,
        });
    }
    let external: f64 = spec.external_rates.iter().sum();
    let mean_sojourn_s = if external > 0.0 {
        nodes.iter().map(|n| n.lambda_eff * n.w_s).sum::<f64>() / external
    } else {
        0.0
    };
    Ok(JacksonResult { nodes, mean_sojourn_s })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlacementSpec {
    pub site_rate_per_s: f64,
    pub n_sites: u32,
    pub local: ServerSpec,
    pub central: ServerSpec,
    pub fronthaul_one_way_s: f64,
}

impl PlacementSpec {
    /// Four sites at 1000 tasks/s each; local M/M/1 at 2000/s against a
    /// four-server pool at 10000/s per server.
    pub fn reference() -> Self {
        PlacementSpec {
            site_rate_per_s: 1000.0,
            n_sites: 4,
            local: ServerSpec { mu_per_s: 2000.0, c: 1 },
            central: ServerSpec { mu_per_s: 10000.0, c: 4 },
            fronthaul_one_way_s: 0.0,
        }
    }

    pub fn with_fronthaul(mut self, one_way_s: f64) -> Self {
        self.fronthaul_one_way_s = one_way_s;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PlacementMode {
    AllLocal,
    AllCentral,
}

pub fn placement_latency(spec: &PlacementSpec, mode: PlacementMode) -> Result<f64, AnalyticError> {
    if !(spec.fronthaul_one_way_s >= 0.0) || !spec.fronthaul_one_way_s.is_finite() {
        return Err(AnalyticError::InvalidSpec("fronthaul delay must be a finite non-negative value".into()));
    }
    match mode {
        PlacementMode::AllLocal => Ok(mmc_metrics(spec.site_rate_per_s, spec.local.mu_per_s, spec.local.c)?.w_s),
        PlacementMode::AllCentral => {
            let aggregate = spec.n_sites as f64 * spec.site_rate_per_s;
            let w = mmc_metrics(aggregate, spec.central.mu_per_s, spec.central.c)?.w_s;
            Ok(2.0 * spec.fronthaul_one_way_s + w)
        }
    }
}

/// One-way fronthaul delay at which central placement stops paying off, or
/// `None` if the pool is no faster even with zero network delay.
pub fn crossover_delay(spec: &PlacementSpec) -> Result<Option<f64>, AnalyticError> {
    let at_zero = spec.with_fronthaul(0.0);
    let local = placement_latency(&at_zero, PlacementMode::AllLocal)?;
    let central = placement_latency(&at_zero, PlacementMode::AllCentral)?;
    if central >= local {
        return Ok(None);
    }
    Ok(Some((local - central) / 2.0))
}

/// Crossover from precomputed sojourns.
pub fn crossover_from(w_local: f64, w_central: f64) -> Option<f64> {
    (w_central < w_local).then(|| (w_local - w_central) / 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1e-300)
    }

    /// Direct finite-sum Erlang C, independent of the log-space routine.
    fn erlang_c_direct(lambda: f64, mu: f64, c: u32) -> f64 {
        let a = lambda / mu;
        let rho = a / c as f64;
        let mut term = 1.0;
        let mut sum = 0.0;
        for k in 0..c {
            if k > 0 {
                term *= a / k as f64;
            }
            sum += term;
        }
        let tc = term * a / c as f64 / (1.0 - rho);
        tc / (sum + tc)
    }

    #[test]
    fn mm1_examples() {
        assert_eq!(mm1_sojourn(0.5, 1.0).unwrap(), 2.0);
        assert_eq!(mm1_sojourn(0.0, 1.0).unwrap(), 1.0);
        assert!(matches!(mm1_sojourn(1.0, 1.0), Err(AnalyticError::Unstable { .. })));
        assert!(matches!(mm1_sojourn(0.5, 0.0), Err(AnalyticError::InvalidSpec(_))));
    }

    #[test]
    fn mmc_two_servers_unit_load() {
        // frozen from the finite sum: C = 1/(2 + 1) = 1/3, W = 1/3 + 1
        let m = mmc_metrics(1.0, 1.0, 2).unwrap();
        assert!(close(m.erlang_c, 1.0 / 3.0, 1e-12));
        assert!(close(m.w_s, 4.0 / 3.0, 1e-12));
        assert!(close(erlang_c_direct(1.0, 1.0, 2), 1.0 / 3.0, 1e-12));
    }

    #[test]
    fn mmc_reduces_to_mm1() {
        for &l in &[0.0, 0.1, 0.5, 0.9, 0.99] {
            let m = mmc_metrics(l, 1.0, 1).unwrap();
            assert_eq!(m.w_s, mm1_sojourn(l, 1.0).unwrap());
        }
        assert_eq!(mmc_metrics(0.5, 1.0, 1).unwrap().w_s, 2.0);
    }

    #[test]
    fn empty_system() {
        let m = mmc_metrics(0.0, 3.0, 5).unwrap();
        assert_eq!(m.erlang_c, 0.0);
        assert_eq!(m.w_s, 1.0 / 3.0);
    }

    #[test]
    fn log_space_matches_direct_sum() {
        for &(c, rho) in &[(2u32, 0.9), (4, 0.9), (8, 0.9), (16, 0.5), (50, 0.95), (100, 0.9)] {
            let l = rho * c as f64;
            assert!(close(erlang_c(l, 1.0, c).unwrap(), erlang_c_direct(l, 1.0, c), 1e-10), "c={c}");
        }
        // frozen reference values from the direct sum
        assert!(close(erlang_c(1.8, 1.0, 2).unwrap(), 0.8526315789473684, 1e-12));
        assert!(close(erlang_c(3.6, 1.0, 4).unwrap(), 0.7877532642953624, 1e-12));
        assert!(close(erlang_c(7.2, 1.0, 8).unwrap(), 0.7015329901462571, 1e-12));
    }

    #[test]
    fn huge_server_counts_do_not_overflow() {
        let ec = erlang_c(9_900.0, 1.0, 10_000).unwrap();
        assert!(ec > 0.0 && ec < 1.0);
    }

    #[test]
    fn stability_margin() {
        assert!(mmc_metrics(2.0 - 1e-12, 1.0, 2).is_err());
        assert!(mmc_metrics(2.0 - 1e-6, 1.0, 2).is_ok());
    }

    fn tandem(lambda: f64) -> JacksonNetworkSpec {
        JacksonNetworkSpec {
            nodes: vec![ServerSpec { mu_per_s: 1.0, c: 1 }; 2],
            external_rates: vec![lambda, 0.0],
            routing: vec![vec![0.0, 1.0], vec![0.0, 0.0]],
        }
    }

    #[test]
    fn tandem_sojourn() {
        let r = jackson_solve(&tandem(0.5)).unwrap();
        assert!(close(r.mean_sojourn_s, 4.0, 1e-12));
        assert!(close(r.nodes[1].lambda_eff, 0.5, 1e-12));
    }

    #[test]
    fn single_node_network_is_mm1() {
        let spec = JacksonNetworkSpec {
            nodes: vec![ServerSpec { mu_per_s: 1.0, c: 1 }],
            external_rates: vec![0.3],
            routing: vec![vec![0.0]],
        };
        assert!(close(jackson_solve(&spec).unwrap().mean_sojourn_s, mm1_sojourn(0.3, 1.0).unwrap(), 1e-12));
    }

    #[test]
    fn feedback_loop() {
        // λ = 0.25 + 0.5 λ  =>  λ = 0.5; per visit W = 1/(1 - 0.5)
        let spec = JacksonNetworkSpec {
            nodes: vec![ServerSpec { mu_per_s: 1.0, c: 1 }],
            external_rates: vec![0.25],
            routing: vec![vec![0.5]],
        };
        let r = jackson_solve(&spec).unwrap();
        assert!(close(r.nodes[0].lambda_eff, 0.5, 1e-12));
        assert!(close(r.nodes[0].w_s, 2.0, 1e-12));
        assert!(close(r.mean_sojourn_s, 4.0, 1e-12));
    }

    #[test]
    fn closed_loop_routing_is_singular() {
        let spec = JacksonNetworkSpec {
            nodes: vec![ServerSpec { mu_per_s: 1.0, c: 1 }; 2],
            external_rates: vec![0.1, 0.0],
            routing: vec![vec![0.0, 1.0], vec![1.0, 0.0]],
        };
        assert_eq!(jackson_solve(&spec), Err(AnalyticError::SingularRouting));
    }

    #[test]
    fn overloaded_node_is_named() {
        let spec = JacksonNetworkSpec {
            nodes: vec![ServerSpec { mu_per_s: 1.0, c: 1 }, ServerSpec { mu_per_s: 0.4, c: 1 }],
            external_rates: vec![0.5, 0.0],
            routing: vec![vec![0.0, 1.0], vec![0.0, 0.0]],
        };
        assert!(matches!(jackson_solve(&spec), Err(AnalyticError::Unstable { node: 1, .. })));
    }

    #[test]
    fn fixed_point_agrees_with_direct_solve() {
        // a 70-node ring with 50% feedback to the next node
        let n = 70;
        let mut routing = vec![vec![0.0; n]; n];
        for (i, row) in routing.iter_mut().enumerate() {
            row[(i + 1) % n] = 0.5;
        }
        let mut e = vec![0.0; n];
        e[0] = 0.2;
        let fp = solve_fixed_point(&routing, &e).unwrap();
        let direct = solve_direct(&routing, &e).unwrap();
        for (a, b) in fp.iter().zip(&direct) {
            assert!((a - b).abs() < 1e-10);
        }
        let spec = JacksonNetworkSpec {
            nodes: vec![ServerSpec { mu_per_s: 1.0, c: 1 }; n],
            external_rates: e,
            routing,
        };
        assert!(jackson_solve(&spec).is_ok());
    }

    #[test]
    fn placement_reference_spec() {
        let spec = PlacementSpec::reference();
        let local = placement_latency(&spec, PlacementMode::AllLocal).unwrap();
        let central = placement_latency(&spec, PlacementMode::AllCentral).unwrap();
        assert!(close(local, 1e-3, 1e-12));
        // frozen from the finite-sum Erlang C: W = 1.0002206774798632e-4
        assert!(close(central, 1.0002206774798632e-4, 1e-9));
        assert!(central < local);

        let far = spec.with_fronthaul(2e-3);
        assert!(placement_latency(&far, PlacementMode::AllLocal).unwrap() < placement_latency(&far, PlacementMode::AllCentral).unwrap());
    }

    #[test]
    fn crossover_linear_solve() {
        assert!(close(crossover_from(1.0e-3, 0.2e-3).unwrap(), 0.4e-3, 1e-12));
        assert_eq!(crossover_from(0.2e-3, 0.2e-3), None);
        let slow_pool = PlacementSpec {
            central: ServerSpec { mu_per_s: 1100.0, c: 4 },
            ..PlacementSpec::reference()
        };
        assert_eq!(crossover_delay(&slow_pool).unwrap(), None);
    }

    #[test]
    fn crossover_matches_bisection() {
        let spec = PlacementSpec::reference();
        let d_star = crossover_delay(&spec).unwrap().unwrap();
        let gap = |d: f64| {
            let s = spec.with_fronthaul(d);
            placement_latency(&s, PlacementMode::AllCentral).unwrap() - placement_latency(&s, PlacementMode::AllLocal).unwrap()
        };
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if gap(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!((d_star - lo).abs() < 1e-15, "{d_star} vs {lo}");
        assert!(close(d_star, 0.00044998896612600685, 1e-9));
    }

    #[test]
    fn central_is_affine_in_fronthaul() {
        let spec = PlacementSpec::reference();
        let base = placement_latency(&spec, PlacementMode::AllCentral).unwrap();
        for &d in &[1e-4, 5e-4, 2e-3] {
            let v = placement_latency(&spec.with_fronthaul(d), PlacementMode::AllCentral).unwrap();
            assert!(close(v - base, 2.0 * d, 1e-9));
        }
    }
}
