//! Boundary obstacle problem
//!
//! ```text
//!   T(u) = argmin { v^T A v : v >= 0 in the interior, tr(v) >= tr(u) }
//! ```
//!
//! Every index carries a lower bound (the trace of `u` on the boundary, zero
//! inside), so the feasible set is a box and the problem is a bound-constrained
//! SPD quadratic program. The default solver is a primal-dual active set
//! iteration; if it revisits an active set it falls back to projected
//! Gauss-Seidel with over-relaxation, polishing the final active set with an
//! exact solve.
//!
//! Multipliers are those of `1/2 v^T A v`, so stationarity reads `A v = lambda`.

use std::collections::HashSet;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::algebra::{BoundaryStructure, EnergyForm, EPS_FLOOR};
use crate::error::{check_len, Result, YoError};
use crate::linalg::{norm_inf, SymCsr};

/// Forms whose condition estimate exceeds this are flagged, not solved.
pub const CONDITION_LIMIT: f64 = 1e12;

/// Largest number of constrained indices the enumeration oracle accepts.
pub const ENUMERATION_LIMIT: usize = 14;

const TIE: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowerBound {
    values: Vec<f64>,
}

impl LowerBound {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|&x| !x.is_finite() || x < 0.0) {
            return Err(YoError::Domain(format!("bound entry {i} = {} is negative", values[i])));
        }
        Ok(LowerBound { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Bound carrying `tr(u)` on the boundary and zero elsewhere.
pub fn make_bound(bs: &BoundaryStructure, u: &[f64]) -> Result<LowerBound> {
    check_len(bs.size(), u.len())?;
    let mut values = vec![0.0; u.len()];
    for &i in bs.indices() {
        if !(u[i] >= EPS_FLOOR) || !u[i].is_finite() {
            return Err(YoError::Domain(format!(
                "boundary entry {i} = {} must be positive to define the obstacle",
                u[i]
            )));
        }
        values[i] = u[i];
    }
    Ok(LowerBound { values })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverMethod {
    ActiveSet,
    ProjectedGaussSeidel,
    Enumeration,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObstacleOptions {
    /// Relative KKT tolerance.
    pub tol: f64,
    pub max_active_set_iters: usize,
    pub max_sweeps: usize,
    pub relaxation: f64,
    pub condition_limit: f64,
}

impl Default for ObstacleOptions {
    fn default() -> Self {
        ObstacleOptions {
            tol: 1e-10,
            max_active_set_iters: 200,
            max_sweeps: 200_000,
            relaxation: 1.3,
            condition_limit: CONDITION_LIMIT,
        }
    }
}

impl ObstacleOptions {
    pub fn with_tol(tol: f64) -> Self {
        ObstacleOptions {
            tol,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObstacleSolution {
    pub state: Vec<f64>,
    /// Indices where the state sits on its bound.
    pub active_set: Vec<usize>,
    /// Full-length; zero off the active set.
    pub multipliers: Vec<f64>,
    /// `<state, state>`.
    pub energy: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub method: SolverMethod,
}

/// Solves the obstacle problem warm-started from the bound itself.
pub fn solve_obstacle(form: &EnergyForm, bound: &LowerBound, tol: f64) -> Result<ObstacleSolution> {
    solve_obstacle_from(form, bound, bound.values(), &ObstacleOptions::with_tol(tol))
}

/// `T(u)`: solves with the bound built from `u`, warm-started at `u`.
pub fn obstacle_map(
    form: &EnergyForm,
    bs: &BoundaryStructure,
    u: &[f64],
    opts: &ObstacleOptions,
) -> Result<ObstacleSolution> {
    bs.check_admissible(u)?;
    let bound = make_bound(bs, u)?;
    solve_obstacle_from(form, &bound, u, opts)
}

pub fn solve_obstacle_from(
    form: &EnergyForm,
    bound: &LowerBound,
    start: &[f64],
    opts: &ObstacleOptions,
) -> Result<ObstacleSolution> {
    check_len(form.size(), bound.len())?;
    check_len(form.size(), start.len())?;
    let cond = form.certificate().condition_estimate;
    if cond > opts.condition_limit {
        return Err(YoError::IllConditioned {
            estimate: cond,
            limit: opts.condition_limit,
        });
    }
    let problem = BoxQp::new(form.matrix(), bound.values());
    match problem.active_set(start, opts) {
        Ok(sol) => Ok(sol),
        Err(Fallback { last }) => problem.projected_gauss_seidel(&last, opts),
    }
}

struct BoxQp<'a> {
    a: &'a SymCsr,
    b: &'a [f64],
    /// Per-index weight for the complementarity function; the diagonal of `A`.
    c: Vec<f64>,
}

struct Fallback {
    last: Vec<f64>,
}

impl<'a> BoxQp<'a> {
    fn new(a: &'a SymCsr, b: &'a [f64]) -> Self {
        BoxQp { a, b, c: a.diagonal() }
    }

    fn scale(&self, v: &[f64], av: &[f64]) -> f64 {
        let mut s = norm_inf(av);
        for i in 0..v.len() {
            s = s.max(self.c[i] * v[i].abs()).max(self.c[i] * self.b[i].abs());
        }
        s.max(f64::MIN_POSITIVE)
    }

    /// Relative natural residual `max_i |min(lambda_i, c_i (v_i - b_i))| / scale`.
    fn kkt(&self, v: &[f64], av: &[f64]) -> f64 {
        let s = self.scale(v, av);
        let mut r: f64 = 0.0;
        for i in 0..v.len() {
            r = r.max(av[i].min(self.c[i] * (v[i] - self.b[i])).abs());
        }
        r / s
    }

    fn solve_reduced(&self, active: &[bool], guess: &[f64]) -> Result<Vec<f64>> {
        let n = self.b.len();
        let mut v = vec![0.0; n];
        let free: Vec<usize> = (0..n).filter(|&i| !active[i]).collect();
        for i in 0..n {
            if active[i] {
                v[i] = self.b[i];
            }
        }
        if free.is_empty() {
            return Ok(v);
        }
        let rhs: Vec<f64> = free
            .iter()
            .map(|&i| {
                -self
                    .a
                    .row(i)
                    .filter(|&(j, _)| active[j])
                    .map(|(j, aij)| aij * self.b[j])
                    .sum::<f64>()
            })
            .collect();
        let sub = self.a.principal_submatrix(&free);
        let x0: Vec<f64> = free.iter().map(|&i| guess[i]).collect();
        let x = sub.solve_spd(&rhs, Some(&x0))?;
        for (k, &i) in free.iter().enumerate() {
            v[i] = x[k];
        }
        Ok(v)
    }

    fn finish(&self, mut v: Vec<f64>, iterations: usize, method: SolverMethod) -> ObstacleSolution {
        // clear rounding-level infeasibility so the state is admissible downstream
        for (vi, bi) in v.iter_mut().zip(self.b) {
            if *vi < *bi {
                *vi = *bi;
            }
        }
        let av = self.a.matvec(&v);
        let kkt_residual = self.kkt(&v, &av);
        let active_set: Vec<usize> = (0..v.len()).filter(|&i| v[i] == self.b[i]).collect();
        let mut multipliers = vec![0.0; v.len()];
        for &i in &active_set {
            multipliers[i] = av[i];
        }
        let energy = crate::linalg::dot(&v, &av);
        ObstacleSolution {
            state: v,
            active_set,
            multipliers,
            energy,
            kkt_residual,
            iterations,
            method,
        }
    }

    fn next_active(&self, v: &[f64], av: &[f64], active: &[bool]) -> Vec<bool> {
        let s = self.scale(v, av);
        (0..v.len())
            .map(|i| {
                let lambda = if active[i] { av[i] } else { 0.0 };
                lambda + self.c[i] * (self.b[i] - v[i]) > TIE * s
            })
            .collect()
    }

    fn active_set(&self, start: &[f64], opts: &ObstacleOptions) -> std::result::Result<ObstacleSolution, Fallback> {
        let n = self.b.len();
        let x0: Vec<f64> = start.iter().zip(self.b).map(|(s, b)| s.max(*b)).collect();
        let ax0 = self.a.matvec(&x0);
        let s0 = self.scale(&x0, &ax0);
        let mut active: Vec<bool> = (0..n)
            .map(|i| ax0[i] + self.c[i] * (self.b[i] - x0[i]) > TIE * s0)
            .collect();
        let mut seen: HashSet<Vec<bool>> = HashSet::new();
        let mut v = x0;
        for it in 1..=opts.max_active_set_iters {
            v = match self.solve_reduced(&active, &v) {
                Ok(v) => v,
                Err(_) => return Err(Fallback { last: v }),
            };
            let av = self.a.matvec(&v);
            let next = self.next_active(&v, &av, &active);
            if next == active {
                let sol = self.finish(v.clone(), it, SolverMethod::ActiveSet);
                if sol.kkt_residual <= opts.tol {
                    return Ok(sol);
                }
                return Err(Fallback { last: v });
            }
            if !seen.insert(active.clone()) || seen.contains(&next) {
                return Err(Fallback { last: v });
            }
            active = next;
        }
        Err(Fallback { last: v })
    }

    fn projected_gauss_seidel(&self, start: &[f64], opts: &ObstacleOptions) -> Result<ObstacleSolution> {
        let n = self.b.len();
        let mut v: Vec<f64> = start.iter().zip(self.b).map(|(s, b)| s.max(*b)).collect();
        let omega = opts.relaxation;
        let mut best = v.clone();
        let mut best_res = f64::INFINITY;
        for sweep in 1..=opts.max_sweeps {
            for i in 0..n {
                let r: f64 = self.a.row(i).map(|(j, aij)| aij * v[j]).sum();
                v[i] = (v[i] - omega * r / self.c[i]).max(self.b[i]);
            }
            if sweep % 10 == 0 {
                let av = self.a.matvec(&v);
                let res = self.kkt(&v, &av);
                if res < best_res {
                    best_res = res;
                    best.copy_from_slice(&v);
                }
                // polish: take the identified active set and solve exactly
                let s = self.scale(&v, &av);
                let active: Vec<bool> = (0..n)
                    .map(|i| self.c[i] * (v[i] - self.b[i]) <= 1e-9 * s && av[i] > 0.0)
                    .collect();
                if let Ok(exact) = self.solve_reduced(&active, &v) {
                    let sol = self.finish(exact, sweep, SolverMethod::ProjectedGaussSeidel);
                    if sol.kkt_residual <= opts.tol {
                        return Ok(sol);
                    }
                }
                if res <= opts.tol {
                    return Ok(self.finish(v, sweep, SolverMethod::ProjectedGaussSeidel));
                }
            }
        }
        Err(YoError::Solver {
            iterations: opts.max_sweeps,
            residual: best_res,
            best,
        })
    }
}

/// Exhaustive verification oracle: tries every active subset, keeps the KKT
/// points and returns the one of least energy. Dense LU, independent of the
/// Cholesky / CG path used by the main solver.
pub fn oracle_enumerate(form: &EnergyForm, bound: &LowerBound) -> Result<ObstacleSolution> {
    check_len(form.size(), bound.len())?;
    let n = form.size();
    if n > ENUMERATION_LIMIT {
        return Err(YoError::SizeGuard(format!(
            "enumeration over {n} constrained indices exceeds the limit of {ENUMERATION_LIMIT}"
        )));
    }
    let a = form.matrix().to_dense();
    let b = bound.values();
    let scale = a.iter().fold(0.0f64, |m, x| m.max(x.abs())) * b.iter().fold(1.0f64, |m, x| m.max(x.abs()));
    let feas_tol = 1e-12 * scale;
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut tried = 0;
    for mask in 0u32..(1u32 << n) {
        tried += 1;
        let is_active = |i: usize| mask & (1 << i) != 0;
        let free: Vec<usize> = (0..n).filter(|&i| !is_active(i)).collect();
        let mut v: Vec<f64> = (0..n).map(|i| if is_active(i) { b[i] } else { 0.0 }).collect();
        if !free.is_empty() {
            let k = free.len();
            let sub = DMatrix::from_fn(k, k, |r, c| a[(free[r], free[c])]);
            let rhs = DVector::from_fn(k, |r, _| {
                -(0..n).filter(|&j| is_active(j)).map(|j| a[(free[r], j)] * b[j]).sum::<f64>()
            });
            let Some(x) = sub.lu().solve(&rhs) else { continue };
            for (r, &i) in free.iter().enumerate() {
                v[i] = x[r];
            }
        }
        let primal_ok = free.iter().all(|&i| v[i] >= b[i] - feas_tol);
        let av: Vec<f64> = (0..n).map(|i| (0..n).map(|j| a[(i, j)] * v[j]).sum()).collect();
        let dual_ok = (0..n).filter(|&i| is_active(i)).all(|i| av[i] >= -feas_tol);
        if primal_ok && dual_ok {
            let energy: f64 = v.iter().zip(&av).map(|(x, y)| x * y).sum();
            if best.as_ref().is_none_or(|(e, _)| energy < *e) {
                best = Some((energy, v));
            }
        }
    }
    let (_, v) = best.ok_or_else(|| YoError::Solver {
        iterations: tried,
        residual: f64::INFINITY,
        best: b.to_vec(),
    })?;
    let problem = BoxQp::new(form.matrix(), b);
    Ok(problem.finish(v, tried, SolverMethod::Enumeration))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPointCheck {
    pub is_fixed: bool,
    /// `||T(u) - u||_A / ||u||_A`.
    pub distance: f64,
}

/// Whether `u` lies in `Fix(T)` up to `tol`, measured in the energy norm.
pub fn is_fixed_point(form: &EnergyForm, bs: &BoundaryStructure, u: &[f64], tol: f64) -> Result<FixedPointCheck> {
    fixed_point_distance(form, bs, u, tol, &ObstacleOptions::default())
}

pub fn fixed_point_distance(
    form: &EnergyForm,
    bs: &BoundaryStructure,
    u: &[f64],
    tol: f64,
    opts: &ObstacleOptions,
) -> Result<FixedPointCheck> {
    let t = obstacle_map(form, bs, u, opts)?;
    let diff: Vec<f64> = t.state.iter().zip(u).map(|(a, b)| a - b).collect();
    let distance = form.norm(&diff)? / form.norm(u)?;
    Ok(FixedPointCheck {
        is_fixed: distance <= tol,
        distance,
    })
}
