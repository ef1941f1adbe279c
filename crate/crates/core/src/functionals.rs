//! Quotients `E_p`, `I_p`, their monotonicity deficits, and the
//! T-projected minimizing-sequence driver.
//!
//! ```text
//!   E_p(u) = <u,u> / ||u||_{p+1}^2        I_p(u) = <u,u> / ||T(u)||_{p+1}^2
//! ```
//!
//! `p` ranges over `[1, 2# - 1]`; the critical value `p = 2# - 1` gives the
//! conformally invariant quotients.

use serde::{Deserialize, Serialize};

use crate::algebra::{boundary_norm, BoundaryStructure, Dimension, EnergyForm, PositiveField, EPS_FLOOR};
use crate::error::{check_len, Result, YoError};
use crate::linalg::{dot, norm2, norm_inf};
use crate::obstacle::{obstacle_map, ObstacleOptions};

pub fn check_p(dim: Dimension, p: f64) -> Result<()> {
    let hi = dim.critical_p();
    if !(p >= 1.0 && p <= hi * (1.0 + 1e-12)) {
        return Err(YoError::Domain(format!("exponent p = {p} outside [1, {hi}]")));
    }
    Ok(())
}

fn quotient_raw(form: &EnergyForm, bs: &BoundaryStructure, u: &[f64], q: f64, w: Option<&PositiveField>) -> Result<f64> {
    let den = boundary_norm(bs, u, q, w)?;
    if !(den > 0.0) {
        return Err(YoError::Domain("state has zero boundary trace".into()));
    }
    Ok(form.pair(u, u)? / (den * den))
}

/// `E_p(u)`, with the boundary measure of `g_w` when `w` is given.
pub fn energy_quotient(
    form: &EnergyForm,
    bs: &BoundaryStructure,
    u: &[f64],
    p: f64,
    w: Option<&PositiveField>,
) -> Result<f64> {
    check_p(bs.dimension(), p)?;
    bs.check_admissible(u)?;
    quotient_raw(form, bs, u, p + 1.0, w)
}

/// `I_p(u)`; solves one obstacle problem.
pub fn control_quotient(
    form: &EnergyForm,
    bs: &BoundaryStructure,
    u: &[f64],
    p: f64,
    opts: &ObstacleOptions,
    w: Option<&PositiveField>,
) -> Result<f64> {
    check_p(bs.dimension(), p)?;
    let t = obstacle_map(form, bs, u, opts)?;
    let den = boundary_norm(bs, &t.state, p + 1.0, w)?;
    Ok(form.pair(u, u)? / (den * den))
}

/// Both sides of a monotonicity statement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Deficit {
    pub lhs: f64,
    pub rhs: f64,
}

/// Shared right-hand side `(<u,u> - <Tu,Tu>) / ||Tu||_{p+1}^2`.
fn deficit_parts(
    form: &EnergyForm,
    bs: &BoundaryStructure,
    u: &[f64],
    p: f64,
    opts: &ObstacleOptions,
) -> Result<(Vec<f64>, f64, f64)> {
    check_p(bs.dimension(), p)?;
    let t = obstacle_map(form, bs, u, opts)?.state;
    let nt = boundary_norm(bs, &t, p + 1.0, None)?;
    let rhs = (form.pair(u, u)? - form.pair(&t, &t)?) / (nt * nt);
    Ok((t, nt, rhs))
}

/// `E_p(u) - E_p(T u)` against the energy drop over `||Tu||^2`; expect `lhs >= rhs >= 0`.
pub fn deficit_e(form: &EnergyForm, bs: &BoundaryStructure, u: &[f64], p: f64, opts: &ObstacleOptions) -> Result<Deficit> {
    let (t, _, rhs) = deficit_parts(form, bs, u, p, opts)?;
    let lhs = energy_quotient(form, bs, u, p, None)? - energy_quotient(form, bs, &t, p, None)?;
    Ok(Deficit { lhs, rhs })
}

/// `I_p(u) - I_p(T u)` against the same right-hand side; an exact identity.
pub fn deficit_i(form: &EnergyForm, bs: &BoundaryStructure, u: &[f64], p: f64, opts: &ObstacleOptions) -> Result<Deficit> {
    let (t, _, rhs) = deficit_parts(form, bs, u, p, opts)?;
    let lhs = control_quotient(form, bs, u, p, opts, None)? - control_quotient(form, bs, &t, p, opts, None)?;
    Ok(Deficit { lhs, rhs })
}

/// `|E_p(T u) - I_p(T u)|`.
pub fn composed_equality_check(
    form: &EnergyForm,
    bs: &BoundaryStructure,
    u: &[f64],
    p: f64,
    opts: &ObstacleOptions,
) -> Result<f64> {
    let t = obstacle_map(form, bs, u, opts)?.state;
    Ok((energy_quotient(form, bs, &t, p, None)? - control_quotient(form, bs, &t, p, opts, None)?).abs())
}

/// Analytic gradient of `E_p` with respect to nodal values:
///
/// ```text
///   grad E = 2 A u / N^2 - 2 <u,u> N^{-2-q} (m_j w_j^{2#} |u_j|^{q-2} u_j)_j,   N = ||u||_q
/// ```
pub fn energy_gradient(
    form: &EnergyForm,
    bs: &BoundaryStructure,
    u: &[f64],
    p: f64,
    w: Option<&PositiveField>,
) -> Result<Vec<f64>> {
    check_len(form.size(), u.len())?;
    let q = p + 1.0;
    let nq = boundary_norm(bs, u, q, w)?;
    if !(nq > 0.0) {
        return Err(YoError::Domain("state has zero boundary trace".into()));
    }
    let au = form.apply(u)?;
    let energy = dot(u, &au);
    let n2 = nq * nq;
    let mut g: Vec<f64> = au.iter().map(|x| 2.0 * x / n2).collect();
    let coef = 2.0 * energy * nq.powf(-2.0 - q);
    let e = bs.two_sharp();
    for (&i, &m) in bs.indices().iter().zip(bs.weights()) {
        let mut wj = m;
        if let Some(w) = w {
            wj *= w.values()[i].powf(e);
        }
        g[i] -= coef * wj * u[i].abs().powf(q - 2.0) * u[i];
    }
    Ok(g)
}

/// Largest deviation between the analytic gradient and central differences,
/// relative to the gradient's sup norm. Step for entry `i` is `h_fd * max(1, |u_i|)`.
pub fn grad_check(form: &EnergyForm, bs: &BoundaryStructure, u: &[f64], p: f64, h_fd: f64) -> Result<f64> {
    check_p(bs.dimension(), p)?;
    let g = energy_gradient(form, bs, u, p, None)?;
    let q = p + 1.0;
    let mut x = u.to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..u.len() {
        let h = h_fd * u[i].abs().max(1.0);
        x[i] = u[i] + h;
        let fp = quotient_raw(form, bs, &x, q, None)?;
        x[i] = u[i] - h;
        let fm = quotient_raw(form, bs, &x, q, None)?;
        x[i] = u[i];
        worst = worst.max((g[i] - (fp - fm) / (2.0 * h)).abs());
    }
    Ok(worst / norm_inf(&g).max(f64::MIN_POSITIVE))
}

/// Weighted least-squares constant `c` in `(A u)_j ~ c m_j u_j^{n/(n-2)}` over
/// boundary rows, and the relative misfit of that fit.
pub fn mean_curvature_constant(form: &EnergyForm, bs: &BoundaryStructure, u: &[f64]) -> Result<(f64, f64)> {
    let au = form.apply(u)?;
    let e = bs.dimension().critical_p();
    let (mut num, mut den) = (0.0, 0.0);
    for (&j, &m) in bs.indices().iter().zip(bs.weights()) {
        let s = u[j].powf(e);
        num += au[j] * s;
        den += m * s * s;
    }
    if !(den > 0.0) {
        return Err(YoError::Domain("state has zero boundary trace".into()));
    }
    let c = num / den;
    let (mut res, mut tot) = (0.0, 0.0);
    for (&j, &m) in bs.indices().iter().zip(bs.weights()) {
        let r = au[j] - c * m * u[j].powf(e);
        res += r * r / m;
        tot += au[j] * au[j] / m;
    }
    let misfit = if tot > 0.0 { (res / tot).sqrt() } else { 0.0 };
    Ok((c, misfit))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinimizeOptions {
    /// Stop when an accepted step changes `E` by less than this, relatively.
    pub tol: f64,
    /// Stop when the free gradient is this small relative to `2 A u / N^2`.
    pub grad_tol: f64,
    pub max_iters: usize,
    pub obstacle: ObstacleOptions,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        MinimizeOptions {
            tol: 1e-12,
            grad_tol: 1e-9,
            max_iters: 5000,
            obstacle: ObstacleOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterateRecord {
    pub e_value: f64,
    pub i_value: f64,
    pub gradient_norm: f64,
    pub step_size: f64,
    pub fixed_point_distance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Stationary,
    SmallChange,
    MaxIterations,
    LineSearchFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimizeTrace {
    /// Iterate 0 is the projected, normalized initial state; one record per accepted step after that.
    pub iterates: Vec<IterateRecord>,
    pub converged: bool,
    pub stop_reason: StopReason,
    pub final_state: Vec<f64>,
}

impl MinimizeTrace {
    pub fn accepted_steps(&self) -> usize {
        self.iterates.len().saturating_sub(1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuotientReport {
    pub p: f64,
    pub q: f64,
    pub e_value: f64,
    pub i_value: f64,
    pub deficit_e: f64,
    pub deficit_i: f64,
    pub c_mean_curvature: f64,
    pub mu_estimate: f64,
    pub mu_oc_estimate: f64,
    pub fixed_point_distance: f64,
    pub dofs: usize,
    pub refinement: Option<u32>,
}

struct Projected {
    state: Vec<f64>,
    e: f64,
}

struct Driver<'a> {
    form: &'a EnergyForm,
    bs: &'a BoundaryStructure,
    q: f64,
    opts: &'a MinimizeOptions,
}

impl Driver<'_> {
    /// `T(x)` rescaled to unit boundary norm. Rescaling can push boundary
    /// entries sitting at the floor below it, so the floor is reapplied.
    fn project(&self, x: &[f64]) -> Result<Projected> {
        let t = obstacle_map(self.form, self.bs, x, &self.opts.obstacle)?.state;
        let nq = boundary_norm(self.bs, &t, self.q, None)?;
        let mut state: Vec<f64> = t.iter().map(|v| v / nq).collect();
        self.clip(&mut state);
        let e = quotient_raw(self.form, self.bs, &state, self.q, None)?;
        Ok(Projected { state, e })
    }

    /// Entries pinned at their lower limit whose gradient points outward are not free.
    fn free_gradient(&self, u: &[f64], g: &[f64]) -> Vec<f64> {
        (0..u.len())
            .map(|i| {
                let floor = if self.bs.is_boundary(i) { EPS_FLOOR } else { 0.0 };
                if u[i] <= floor && g[i] > 0.0 {
                    0.0
                } else {
                    g[i]
                }
            })
            .collect()
    }

    fn clip(&self, x: &mut [f64]) {
        for (i, v) in x.iter_mut().enumerate() {
            let floor = if self.bs.is_boundary(i) { EPS_FLOOR } else { 0.0 };
            if !(*v >= floor) {
                *v = floor;
            }
        }
    }

    fn record(&self, u: &[f64], e: f64, gnorm: f64, step: f64) -> Result<IterateRecord> {
        let t = obstacle_map(self.form, self.bs, u, &self.opts.obstacle)?.state;
        let nt = boundary_norm(self.bs, &t, self.q, None)?;
        let i_value = self.form.pair(u, u)? / (nt * nt);
        let diff: Vec<f64> = t.iter().zip(u).map(|(a, b)| a - b).collect();
        let fixed_point_distance = self.form.norm(&diff)? / self.form.norm(u)?;
        Ok(IterateRecord {
            e_value: e,
            i_value,
            gradient_norm: gnorm,
            step_size: step,
            fixed_point_distance,
        })
    }
}

/// Minimizes `E_p` over the positive cone by projected gradient steps
///
/// ```text
///   u_{k+1} = T(clip(u_k - eta_k grad E_p(u_k))) / ||.||_{p+1}
/// ```
///
/// with Barzilai-Borwein trial steps and backtracking until `E_p` decreases.
/// Every iterate lies in the range of `T`, hence in `Fix(T)`, so the final
/// `E_p` and `I_p` values estimate `mu^p` and `mu^p_oc` simultaneously.
pub fn minimize(
    form: &EnergyForm,
    bs: &BoundaryStructure,
    p: f64,
    init: &[f64],
    opts: &MinimizeOptions,
) -> Result<(MinimizeTrace, QuotientReport)> {
    check_p(bs.dimension(), p)?;
    bs.check_admissible(init)?;
    let d = Driver {
        form,
        bs,
        q: p + 1.0,
        opts,
    };
    let start = d.project(init)?;
    let mut u = start.state;
    let mut e = start.e;
    let mut g = energy_gradient(form, bs, &u, p, None)?;
    let mut iterates = vec![d.record(&u, e, norm2(&d.free_gradient(&u, &g)), 0.0)?];
    let mut eta: Option<f64> = None;
    let mut stop = StopReason::MaxIterations;

    for _ in 0..opts.max_iters {
        let gfree = d.free_gradient(&u, &g);
        let gnorm = norm2(&gfree);
        let au = form.apply(&u)?;
        let reference = 2.0 * norm2(&au) / boundary_norm(bs, &u, d.q, None)?.powi(2);
        if gnorm <= opts.grad_tol * reference {
            stop = StopReason::Stationary;
            break;
        }
        let ginf = norm_inf(&gfree);
        let uinf = norm_inf(&u);
        let mut step = eta.unwrap_or(1e-2 * uinf / ginf);
        let accepted = loop {
            if step * ginf < 1e-16 * uinf {
                break None;
            }
            let mut x: Vec<f64> = u.iter().zip(&gfree).map(|(ui, gi)| ui - step * gi).collect();
            d.clip(&mut x);
            let trial = d.project(&x)?;
            if trial.e < e {
                break Some(trial);
            }
            step *= 0.5;
        };
        let Some(next) = accepted else {
            stop = StopReason::LineSearchFailure;
            break;
        };
        let g_next = energy_gradient(form, bs, &next.state, p, None)?;
        let s: Vec<f64> = next.state.iter().zip(&u).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_next.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        eta = Some(if sy > 0.0 { dot(&s, &s) / sy } else { 2.0 * step });
        let change = (e - next.e) / e.abs();
        u = next.state;
        e = next.e;
        g = g_next;
        let gn = norm2(&d.free_gradient(&u, &g));
        iterates.push(d.record(&u, e, gn, step)?);
        if change < opts.tol {
            stop = StopReason::SmallChange;
            break;
        }
    }

    let converged = matches!(stop, StopReason::Stationary | StopReason::SmallChange);
    let last = *iterates.last().expect("at least the initial record");
    let de = deficit_e(form, bs, &u, p, &opts.obstacle)?;
    let di = deficit_i(form, bs, &u, p, &opts.obstacle)?;
    let (c, _) = mean_curvature_constant(form, bs, &u)?;
    let report = QuotientReport {
        p,
        q: d.q,
        e_value: last.e_value,
        i_value: last.i_value,
        deficit_e: de.lhs,
        deficit_i: di.lhs,
        c_mean_curvature: c,
        mu_estimate: last.e_value,
        mu_oc_estimate: last.i_value,
        fixed_point_distance: last.fixed_point_distance,
        dofs: form.size(),
        refinement: None,
    };
    Ok((
        MinimizeTrace {
            iterates,
            converged,
            stop_reason: stop,
            final_state: u,
        },
        report,
    ))
}
