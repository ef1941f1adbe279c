//! Acceptance gate: one PASS/FAIL line per criterion, plus ungated diagnostics.
//! Exits non-zero if any criterion fails. Run with `cargo test --test acceptance`.

use std::process::ExitCode;
use std::time::Instant;

use rand::Rng;
use yo_core::bubbles::{bubble_field, sharp_constant, trace_ratio, BubbleParams};
use yo_core::fem::{assemble, build_ball_mesh, MetricData, SimplicialMesh};
use yo_core::functionals::{grad_check, minimize, MinimizeOptions, QuotientReport};
use yo_core::io::convergence_rows;
use yo_core::lemmas::{run_suite, SuiteConfig};
use yo_core::obstacle::ObstacleOptions;
use yo_core::runner::{bubble_family, energy_spread, fitted_order, POLE_DIRECTIONS};
use yo_core::synthetic::{admissible_field, instance, rng};
use yo_core::algebra::{BoundaryStructure, EnergyForm};

struct Gate {
    failures: Vec<String>,
}

impl Gate {
    fn report(&mut self, id: &str, passed: bool, detail: String) {
        println!("{} {id}: {detail}", if passed { "PASS" } else { "FAIL" });
        if !passed {
            self.failures.push(id.to_string());
        }
    }
}

fn ball(level: u32) -> (SimplicialMesh, EnergyForm, BoundaryStructure) {
    let m = build_ball_mesh(level).expect("mesh");
    let (f, b) = assemble(&m, &MetricData::flat_ball(&m), 3).expect("assembly");
    (m, f, b)
}

/// Fixed-point distances of converged runs, collected for criterion 5.
struct Converged {
    distances: Vec<f64>,
}

impl Converged {
    fn push(&mut self, converged: bool, report: &QuotientReport) {
        if converged {
            self.distances.push(report.fixed_point_distance);
        }
    }
}

fn criterion_1(g: &mut Gate) {
    let t = Instant::now();
    let suite = run_suite(&SuiteConfig::default());
    let secs = t.elapsed().as_secs_f64();
    for c in &suite.checks {
        println!("    {:<26} max {:.2e}  tol {:.0e}  cases {}", format!("{:?}", c.name), c.max_residual, c.tolerance, c.cases);
    }
    let failed: Vec<String> = suite.failed().map(|c| format!("{:?}", c.name)).collect();
    g.report(
        "criterion-1 algebraic lemma suite (1000 seeds, dim <= 40)",
        suite.passed && secs <= 60.0,
        format!("{} checks, failed {:?}, {secs:.1} s (limit 60 s)", suite.checks.len(), failed),
    );
}

fn criterion_2(g: &mut Gate, conv: &mut Converged) {
    let sharp = sharp_constant(3).unwrap();
    let mut samples = Vec::new();
    let mut agreement: f64 = 0.0;
    let mut level4_secs = 0.0;
    for level in 2..=4 {
        let (m, form, bs) = ball(level);
        let t = Instant::now();
        let (trace, rep) = minimize(&form, &bs, 3.0, &vec![1.0; m.num_vertices()], &MinimizeOptions::default()).unwrap();
        if level == 4 {
            level4_secs = t.elapsed().as_secs_f64();
        }
        conv.push(trace.converged, &rep);
        agreement = agreement.max((rep.mu_estimate - rep.mu_oc_estimate).abs() / rep.mu_estimate);
        samples.push((level, m.h(), rep.e_value, rep.i_value, rep.mu_estimate));
    }
    let rows = convergence_rows(&samples, sharp);
    for r in &rows {
        println!(
            "    level {} h {:.4} mu {:.6} rel.err {:.3e} order {}",
            r.level,
            r.h,
            r.mu_estimate,
            r.relative_error,
            r.order_estimate.map_or("-".into(), |o| format!("{o:.2}"))
        );
    }
    let decreasing = rows.windows(2).all(|w| w[1].relative_error < w[0].relative_error);
    let order = fitted_order(&rows).unwrap_or(f64::NAN);
    let err3 = rows[1].relative_error;
    g.report(
        "criterion-2 sharp constant on the ball (levels 2-4, p = 2# - 1)",
        err3 <= 0.03 && decreasing && order >= 1.5 && agreement <= 1e-6 && level4_secs <= 600.0,
        format!(
            "level-3 error {:.2}% (<= 3%), decreasing {decreasing}, fitted order {order:.2} (>= 1.5), \
             max |mu - mu_oc|/mu {agreement:.1e} (<= 1e-6), level-4 {level4_secs:.2} s",
            100.0 * err3
        ),
    );
    // Not gated: perturbed starts on coarse meshes find lower discrete values
    // (mesh-scale concentration), so the table above uses the round start u = 1.
    for level in 2..=3 {
        let (m, form, bs) = ball(level);
        let mut r = rng(11);
        let init: Vec<f64> = (0..m.num_vertices()).map(|_| 1.0 + 0.2 * r.random_range(-1.0..1.0)).collect();
        let (trace, rep) = minimize(&form, &bs, 3.0, &init, &MinimizeOptions::default()).unwrap();
        conv.push(trace.converged, &rep);
        println!(
            "    diagnostic: random start, level {level}: mu {:.4} after {} steps ({:?})",
            rep.mu_estimate,
            trace.accepted_steps(),
            trace.stop_reason
        );
    }
}

fn criterion_3(g: &mut Gate) {
    const RADIUS: f64 = 5.0;
    let mut per_level = Vec::new();
    for level in 2..=4 {
        let (m, form, bs) = ball(level);
        per_level.push(bubble_family(&m, &form, &bs, RADIUS, 1.0, 1e-10).unwrap());
    }
    let l3 = &per_level[1];
    let c_err = l3.iter().map(|b| b.report.c_relative_error).fold(0.0, f64::max);
    let fp3 = l3.iter().map(|b| b.report.fixed_point_distance).fold(0.0, f64::max);
    let spread = energy_spread(l3);
    let decreasing = (0..POLE_DIRECTIONS.len()).all(|k| {
        per_level.windows(2).all(|w| w[1][k].report.fixed_point_distance < w[0][k].report.fixed_point_distance)
    });
    for (k, b) in l3.iter().enumerate() {
        let fps: Vec<String> = per_level.iter().map(|l| format!("{:.2e}", l[k].report.fixed_point_distance)).collect();
        println!(
            "    pole {:?}: c_est {:.4}  E {:.4}  I {:.4}  fixed-point gap L2..L4 [{}]",
            b.pole,
            b.report.c_est,
            b.report.e_value,
            b.report.i_value,
            fps.join(", ")
        );
    }
    g.report(
        "criterion-3 bubbles (5 poles, |a| = 5, level 3)",
        c_err <= 0.05 && fp3 <= 1e-3 && decreasing && spread <= 0.01,
        format!(
            "max c_est error {:.2}% (<= 5%), max fixed-point gap {fp3:.2e} (<= 1e-3), decreasing {decreasing}, E spread {:.3}% (<= 1%)",
            100.0 * c_err,
            100.0 * spread
        ),
    );
    // Not gated: the interpolation gap of T grows as the pole approaches the sphere.
    let (m, form, bs) = ball(3);
    for radius in [2.0, 3.0] {
        let fam = bubble_family(&m, &form, &bs, radius, 1.0, 1e-10).unwrap();
        let fp = fam.iter().map(|b| b.report.fixed_point_distance).fold(0.0, f64::max);
        let c = fam.iter().map(|b| b.report.c_relative_error).fold(0.0, f64::max);
        println!("    diagnostic: |a| = {radius}: max fixed-point gap {fp:.2e}, max c_est error {:.2}%", 100.0 * c);
    }
}

/// `1 + eps * sum_k c_k x^alpha_k` over random low-degree monomials, floored at 0.05.
fn smooth_field(m: &SimplicialMesh, eps: f64, r: &mut impl Rng) -> Vec<f64> {
    let c: Vec<f64> = (0..9).map(|_| eps * r.random_range(-0.5..0.5)).collect();
    m.vertices()
        .iter()
        .map(|x| {
            let terms = [x[0], x[1], x[2], x[0] * x[1], x[1] * x[2], x[0] * x[2], x[0] * x[0], x[1] * x[1], x[2] * x[2]];
            (1.0 + terms.iter().zip(&c).map(|(t, k)| t * k).sum::<f64>()).max(0.05)
        })
        .collect()
}

fn criterion_4(g: &mut Gate) {
    let (m, form, bs) = ball(3);
    let opts = ObstacleOptions::default();
    let mut r = rng(2024);
    let ratios: Vec<f64> = (0..100)
        .map(|_| trace_ratio(&form, &bs, &admissible_field(&mut r, &bs), &opts).unwrap())
        .collect();
    let mut bubble_ratios = Vec::new();
    for d in POLE_DIRECTIONS {
        let params = BubbleParams::new([3.0 * d[0], 3.0 * d[1], 3.0 * d[2]], 1.0).unwrap();
        let u = bubble_field(&m, &params).unwrap().into_vec();
        bubble_ratios.push(trace_ratio(&form, &bs, &u, &opts).unwrap());
    }
    bubble_ratios.push(trace_ratio(&form, &bs, &vec![1.0; m.num_vertices()], &opts).unwrap());
    let limit = 1.03;
    let violations = ratios.iter().chain(&bubble_ratios).filter(|&&x| x > limit).count();
    let near_random = ratios.iter().filter(|&&x| x >= 0.99).count();
    let near_bubble = bubble_ratios.iter().filter(|&&x| x >= 0.99).count();
    let max_random = ratios.iter().copied().fold(0.0, f64::max);
    let min_bubble = bubble_ratios.iter().copied().fold(f64::INFINITY, f64::min);
    println!("    random fields: max ratio {max_random:.4} (slack {:.1}%)", 100.0 * (1.0 - max_random));
    println!("    bubbles and u = 1: ratios in [{min_bubble:.4}, {:.4}]", bubble_ratios.iter().copied().fold(0.0, f64::max));
    g.report(
        "criterion-4 obstacle trace inequality (100 random fields, level 3)",
        violations == 0 && near_random == 0 && max_random <= 0.95 && near_bubble == bubble_ratios.len(),
        format!(
            "violations of ||Tu||_4 sqrt(mu) <= 1.03 ||u||_A: {violations}; near-equality (>= 0.99) at random fields: {near_random}, \
             at bubbles: {near_bubble}/{}",
            bubble_ratios.len()
        ),
    );
    // Not gated: smooth perturbations 1 + eps * (low-degree polynomial) approach the
    // bubble u = 1, and their slack shrinks with eps.
    for eps in [1.0, 0.5, 0.25] {
        let worst = (0..20).map(|_| trace_ratio(&form, &bs, &smooth_field(&m, eps, &mut r), &opts).unwrap()).fold(0.0, f64::max);
        println!("    diagnostic: smooth perturbations of 1, amplitude {eps}: max ratio {worst:.4}");
    }
}

fn criterion_5(g: &mut Gate, conv: &mut Converged) {
    for seed in 0..60 {
        let inst = instance(seed, 40, 12).unwrap();
        let mut r = rng(seed + 7);
        let init = admissible_field(&mut r, &inst.bs);
        let crit = inst.bs.dimension().critical_p();
        let p = if seed % 2 == 0 { crit } else { r.random_range(1.0..crit) };
        let (trace, rep) = minimize(&inst.form, &inst.bs, p, &init, &MinimizeOptions::default()).unwrap();
        conv.push(trace.converged, &rep);
    }
    let worst = conv.distances.iter().copied().fold(0.0, f64::max);
    g.report(
        "criterion-5 minimizers are fixed points",
        !conv.distances.is_empty() && worst <= 1e-6,
        format!("{} converged runs, max fixed-point distance {worst:.2e} (<= 1e-6)", conv.distances.len()),
    );
}

fn criterion_6(g: &mut Gate) {
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for seed in 0..500 {
        let inst = instance(seed, 20, 12).unwrap();
        let mut r = rng(seed ^ 0xabcdef);
        let u = admissible_field(&mut r, &inst.bs);
        let crit = inst.bs.dimension().critical_p();
        for p in [1.0, r.random_range(1.0..crit), crit] {
            worst = worst.max(grad_check(&inst.form, &inst.bs, &u, p, 1e-6).unwrap());
            cases += 1;
        }
    }
    g.report(
        "criterion-6 gradient vs central differences (dim <= 20)",
        worst <= 1e-5,
        format!("{cases} cases, max relative deviation {worst:.2e} (<= 1e-5)"),
    );
}

fn main() -> ExitCode {
    let t = Instant::now();
    let mut g = Gate { failures: Vec::new() };
    let mut conv = Converged { distances: Vec::new() };
    criterion_1(&mut g);
    criterion_2(&mut g, &mut conv);
    criterion_3(&mut g);
    criterion_4(&mut g);
    criterion_5(&mut g, &mut conv);
    criterion_6(&mut g);
    println!("acceptance: {} failed, {:.1} s total", g.failures.len(), t.elapsed().as_secs_f64());
    if g.failures.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
