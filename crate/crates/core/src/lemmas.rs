//! Randomized verification of the algebraic identities and inequalities
//! satisfied by `T`, `E_p` and `I_p`.
//!
//! Each seed draws an instance, a field, a conformal factor and an exponent;
//! every check records a dimensionless residual and the suite keeps the worst
//! one per check. Seeds run in parallel; results are folded in seed order.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algebra::{boundary_norm, pullback_form};
use crate::error::Result;
use crate::functionals::{
    composed_equality_check, control_quotient, deficit_e, deficit_i, energy_quotient, grad_check,
};
use crate::linalg::norm_inf;
use crate::obstacle::{fixed_point_distance, make_bound, obstacle_map, oracle_enumerate, solve_obstacle, ObstacleOptions};
use crate::synthetic::{admissible_field, conformal_factor, instance, rng, Instance};

use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub first_seed: u64,
    pub seeds: u64,
    pub max_size: usize,
    pub max_boundary: usize,
    /// Size cap for the exhaustive-enumeration comparison.
    pub oracle_max_size: usize,
    /// Size cap for the finite-difference gradient comparison.
    pub grad_max_size: usize,
    pub tol: f64,
    pub oracle_tol: f64,
    pub grad_tol: f64,
    /// Tolerance the obstacle solves run at.
    pub solver_tol: f64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            first_seed: 0,
            seeds: 1000,
            max_size: 40,
            max_boundary: 12,
            oracle_max_size: 10,
            grad_max_size: 20,
            tol: 1e-8,
            oracle_tol: 1e-9,
            grad_tol: 1e-5,
            solver_tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckId {
    SolverSuccess,
    Idempotency,
    Homogeneity,
    ScaleInvariance,
    ConformalCovariance,
    FixSetCovariance,
    BoundaryNormCovariance,
    ControlBelowEnergy,
    ComposedEquality,
    DeficitInequality,
    DeficitEquality,
    OracleAgreement,
    Gradient,
}

impl CheckId {
    pub const ALL: [CheckId; 13] = [
        CheckId::SolverSuccess,
        CheckId::Idempotency,
        CheckId::Homogeneity,
        CheckId::ScaleInvariance,
        CheckId::ConformalCovariance,
        CheckId::FixSetCovariance,
        CheckId::BoundaryNormCovariance,
        CheckId::ControlBelowEnergy,
        CheckId::ComposedEquality,
        CheckId::DeficitInequality,
        CheckId::DeficitEquality,
        CheckId::OracleAgreement,
        CheckId::Gradient,
    ];

    pub fn statement(self) -> &'static str {
        match self {
            CheckId::SolverSuccess => "every obstacle solve returns",
            CheckId::Idempotency => "T(T u) = T u",
            CheckId::Homogeneity => "T(s u) = s T(u) for s > 0",
            CheckId::ScaleInvariance => "E_p(s u) = E_p(u) and I_p(s u) = I_p(u)",
            CheckId::ConformalCovariance => "T_{A_w}(u) = w^-1 T_A(w u)",
            CheckId::FixSetCovariance => "dist_{A_w}(u) = dist_A(w u); w^-1 T_A(z) is fixed by T_{A_w}",
            CheckId::BoundaryNormCovariance => "||u||_{2#, g_w} = ||w u||_{2#, g}",
            CheckId::ControlBelowEnergy => "I_p(u) <= E_p(u)",
            CheckId::ComposedEquality => "E_p(T u) = I_p(T u)",
            CheckId::DeficitInequality => "E_p(u) - E_p(T u) >= (<u,u> - <Tu,Tu>) / ||Tu||^2 >= 0",
            CheckId::DeficitEquality => "I_p(u) - I_p(T u) = (<u,u> - <Tu,Tu>) / ||Tu||^2",
            CheckId::OracleAgreement => "active-set solution = exhaustive enumeration",
            CheckId::Gradient => "analytic grad E_p = central differences",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaCheck {
    pub name: CheckId,
    pub statement: String,
    pub max_residual: f64,
    pub tolerance: f64,
    pub cases: usize,
    pub worst_seed: Option<u64>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaSuite {
    pub config: SuiteConfig,
    pub checks: Vec<LemmaCheck>,
    pub passed: bool,
}

impl LemmaSuite {
    pub fn failed(&self) -> impl Iterator<Item = &LemmaCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

fn rel(diff: f64, scale: f64) -> f64 {
    diff / scale.max(f64::MIN_POSITIVE)
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

type Samples = Vec<(CheckId, f64)>;

fn quotient_checks(inst: &Instance, u: &[f64], p: f64, s: f64, o: &ObstacleOptions, out: &mut Samples) -> Result<()> {
    let (form, bs) = (&inst.form, &inst.bs);
    let su: Vec<f64> = u.iter().map(|x| s * x).collect();
    let e = energy_quotient(form, bs, u, p, None)?;
    let i = control_quotient(form, bs, u, p, o, None)?;
    let es = energy_quotient(form, bs, &su, p, None)?;
    let is = control_quotient(form, bs, &su, p, o, None)?;
    out.push((CheckId::ScaleInvariance, rel((es - e).abs(), e).max(rel((is - i).abs(), i))));
    out.push((CheckId::ControlBelowEnergy, rel((i - e).max(0.0), e)));
    let ce = composed_equality_check(form, bs, u, p, o)?;
    out.push((CheckId::ComposedEquality, rel(ce, i)));
    let de = deficit_e(form, bs, u, p, o)?;
    out.push((CheckId::DeficitInequality, rel((de.rhs - de.lhs).max(0.0).max(-de.rhs), e)));
    let di = deficit_i(form, bs, u, p, o)?;
    out.push((CheckId::DeficitEquality, rel((di.lhs - di.rhs).abs(), e)));
    Ok(())
}

fn seed_checks(seed: u64, cfg: &SuiteConfig) -> Result<Samples> {
    let o = ObstacleOptions::with_tol(cfg.solver_tol);
    let inst = instance(seed, cfg.max_size, cfg.max_boundary)?;
    let (form, bs) = (&inst.form, &inst.bs);
    let mut r = rng(seed ^ 0x9e37_79b9_7f4a_7c15);
    let u = admissible_field(&mut r, bs);
    let w = conformal_factor(&mut r, bs.size());
    let s: f64 = r.random_range(0.1..10.0);
    let p_crit = bs.dimension().critical_p();
    let p_rand: f64 = r.random_range(1.0..p_crit);
    let mut out = Samples::new();

    let tu = obstacle_map(form, bs, &u, &o)?.state;
    let tnorm = norm_inf(&tu);
    let ttu = obstacle_map(form, bs, &tu, &o)?.state;
    out.push((CheckId::Idempotency, rel(max_abs_diff(&ttu, &tu), tnorm)));

    let su: Vec<f64> = u.iter().map(|x| s * x).collect();
    let tsu = obstacle_map(form, bs, &su, &o)?.state;
    let stu: Vec<f64> = tu.iter().map(|x| s * x).collect();
    out.push((CheckId::Homogeneity, rel(max_abs_diff(&tsu, &stu), s * tnorm)));

    for p in [p_rand, p_crit] {
        quotient_checks(&inst, &u, p, s, &o, &mut out)?;
    }

    // Conformal change: A_w = D_w A D_w with boundary weights m w^{2#}.
    let wv = w.values();
    let form_w = pullback_form(form, &w)?;
    let bs_w = bs.conformal(&w)?;
    let wu: Vec<f64> = u.iter().zip(wv).map(|(a, b)| a * b).collect();
    let t_wu = obstacle_map(form, bs, &wu, &o)?.state;
    let t_w_u = obstacle_map(&form_w, bs, &u, &o)?.state;
    let back: Vec<f64> = t_w_u.iter().zip(wv).map(|(a, b)| a * b).collect();
    out.push((CheckId::ConformalCovariance, rel(max_abs_diff(&back, &t_wu), norm_inf(&t_wu))));

    let d_w = fixed_point_distance(&form_w, bs, &u, 0.0, &o)?.distance;
    let d = fixed_point_distance(form, bs, &wu, 0.0, &o)?.distance;
    let fixed: Vec<f64> = t_wu.iter().zip(wv).map(|(a, b)| a / b).collect();
    let d_fixed = fixed_point_distance(&form_w, bs, &fixed, 0.0, &o)?.distance;
    out.push((CheckId::FixSetCovariance, (d_w - d).abs().max(d_fixed)));

    let q = bs.two_sharp();
    let nw = boundary_norm(&bs_w, &u, q, None)?;
    let nw_field = boundary_norm(bs, &u, q, Some(&w))?;
    let n = boundary_norm(bs, &wu, q, None)?;
    out.push((CheckId::BoundaryNormCovariance, rel((nw - n).abs().max((nw_field - n).abs()), n)));

    let small = instance(seed, cfg.oracle_max_size, cfg.max_boundary)?;
    let v = admissible_field(&mut r, &small.bs);
    let bound = make_bound(&small.bs, &v)?;
    let fast = solve_obstacle(&small.form, &bound, cfg.solver_tol)?.state;
    let exact = oracle_enumerate(&small.form, &bound)?.state;
    out.push((CheckId::OracleAgreement, rel(max_abs_diff(&fast, &exact), norm_inf(&exact))));

    let mid = instance(seed, cfg.grad_max_size, cfg.max_boundary)?;
    let g = admissible_field(&mut r, &mid.bs);
    let pg = r.random_range(1.0..=mid.bs.dimension().critical_p());
    out.push((CheckId::Gradient, grad_check(&mid.form, &mid.bs, &g, pg, 1e-6)?));
    Ok(out)
}

fn tolerance(id: CheckId, cfg: &SuiteConfig) -> f64 {
    match id {
        CheckId::SolverSuccess => 0.0,
        CheckId::OracleAgreement => cfg.oracle_tol,
        CheckId::Gradient => cfg.grad_tol,
        _ => cfg.tol,
    }
}

/// Runs every check over `cfg.seeds` consecutive seeds.
pub fn run_suite(cfg: &SuiteConfig) -> LemmaSuite {
    let results: Vec<(u64, Result<Samples>)> = (cfg.first_seed..cfg.first_seed + cfg.seeds)
        .into_par_iter()
        .map(|seed| (seed, seed_checks(seed, cfg)))
        .collect();
    let mut checks: Vec<LemmaCheck> = CheckId::ALL
        .iter()
        .map(|&id| LemmaCheck {
            name: id,
            statement: id.statement().to_string(),
            max_residual: 0.0,
            tolerance: tolerance(id, cfg),
            cases: 0,
            worst_seed: None,
            passed: true,
        })
        .collect();
    let slot = |id: CheckId| CheckId::ALL.iter().position(|&c| c == id).expect("listed");
    for (seed, res) in results {
        let samples = match res {
            Ok(s) => vec![(CheckId::SolverSuccess, 0.0)].into_iter().chain(s).collect(),
            Err(_) => vec![(CheckId::SolverSuccess, 1.0)],
        };
        for (id, value) in samples {
            let c = &mut checks[slot(id)];
            c.cases += 1;
            // NaN counts as the worst possible residual.
            let v = if value.is_nan() { f64::INFINITY } else { value };
            if c.worst_seed.is_none() || v > c.max_residual {
                c.max_residual = v;
                c.worst_seed = Some(seed);
            }
        }
    }
    for c in &mut checks {
        c.passed = c.max_residual <= c.tolerance;
    }
    let passed = checks.iter().all(|c| c.passed);
    LemmaSuite {
        config: *cfg,
        checks,
        passed,
    }
}
