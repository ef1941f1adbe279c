//! Property tests: invariants of the obstacle map, oracle agreement,
//! conformal identities and the mesh round-trip, over proptest-drawn inputs.

use proptest::prelude::*;
use yo_core::algebra::{boundary_norm, pair, pullback_form, push_field, BoundaryStructure, PositiveField};
use yo_core::fem::{build_ball_mesh, SimplicialMesh};
use yo_core::functionals::{control_quotient, energy_quotient};
use yo_core::io::{fmt_g17, mesh_from_str, mesh_to_string};
use yo_core::obstacle::{make_bound, obstacle_map, oracle_enumerate, solve_obstacle, ObstacleOptions};
use yo_core::synthetic::{admissible_field, conformal_factor, instance, rng};

fn opts() -> ObstacleOptions {
    ObstacleOptions::with_tol(1e-12)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

fn max_rel_diff(x: &[f64], y: &[f64]) -> f64 {
    let scale = x.iter().chain(y).fold(1.0f64, |m, v| m.max(v.abs()));
    x.iter().zip(y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / scale
}

/// Field from proptest values, kept admissible for `bs`.
fn field(bs: &BoundaryStructure, raw: &[f64]) -> Vec<f64> {
    (0..bs.size())
        .map(|i| {
            let x = raw[i % raw.len()];
            if bs.is_boundary(i) {
                0.1 + x
            } else {
                x
            }
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn obstacle_state_is_feasible_and_idempotent(seed in any::<u64>(), raw in prop::collection::vec(0.0f64..2.0, 1..40)) {
        let inst = instance(seed, 30, 10).unwrap();
        let u = field(&inst.bs, &raw);
        let t = obstacle_map(&inst.form, &inst.bs, &u, &opts()).unwrap();
        let bound = make_bound(&inst.bs, &u).unwrap();
        for (x, b) in t.state.iter().zip(bound.values()) {
            prop_assert!(*x >= *b);
        }
        let tt = obstacle_map(&inst.form, &inst.bs, &t.state, &opts()).unwrap();
        prop_assert!(max_rel_diff(&t.state, &tt.state) <= 1e-9);
    }

    #[test]
    fn obstacle_minimizes_energy_over_feasible_fields(seed in any::<u64>(), raw in prop::collection::vec(0.0f64..2.0, 1..40)) {
        let inst = instance(seed, 30, 10).unwrap();
        let u = field(&inst.bs, &raw);
        let t = obstacle_map(&inst.form, &inst.bs, &u, &opts()).unwrap();
        let eu = pair(&inst.form, &u, &u).unwrap();
        prop_assert!(t.energy <= eu * (1.0 + 1e-12));
        let p = inst.bs.dimension().critical_p();
        prop_assert!(control_quotient(&inst.form, &inst.bs, &u, p, &opts(), None).unwrap()
            <= energy_quotient(&inst.form, &inst.bs, &u, p, None).unwrap() * (1.0 + 1e-10));
    }

    #[test]
    fn active_set_matches_enumeration(seed in any::<u64>()) {
        let inst = instance(seed, 10, 6).unwrap();
        let u = admissible_field(&mut rng(seed ^ 0x5eed), &inst.bs);
        let bound = make_bound(&inst.bs, &u).unwrap();
        let fast = solve_obstacle(&inst.form, &bound, 1e-13).unwrap();
        let exact = oracle_enumerate(&inst.form, &bound).unwrap();
        prop_assert!(max_rel_diff(&fast.state, &exact.state) <= 1e-9);
    }

    #[test]
    fn pullback_is_a_congruence(seed in any::<u64>()) {
        let inst = instance(seed, 25, 8).unwrap();
        let mut r = rng(seed.wrapping_add(1));
        let w = conformal_factor(&mut r, inst.form.size());
        let u = admissible_field(&mut r, &inst.bs);
        let v = admissible_field(&mut r, &inst.bs);
        let aw = pullback_form(&inst.form, &w).unwrap();
        let lhs = pair(&aw, &u, &v).unwrap();
        let rhs = pair(&inst.form, &push_field(&w, &u).unwrap(), &push_field(&w, &v).unwrap()).unwrap();
        prop_assert!(rel(lhs, rhs) <= 1e-10);
    }

    #[test]
    fn conformal_obstacle_map_is_covariant(seed in any::<u64>()) {
        let inst = instance(seed, 25, 8).unwrap();
        let mut r = rng(seed.wrapping_add(2));
        let w = conformal_factor(&mut r, inst.form.size());
        let u = admissible_field(&mut r, &inst.bs);
        let aw = pullback_form(&inst.form, &w).unwrap();
        let lhs = obstacle_map(&aw, &inst.bs, &u, &opts()).unwrap().state;
        let wu = push_field(&w, &u).unwrap();
        let t = obstacle_map(&inst.form, &inst.bs, &wu, &opts()).unwrap().state;
        let rhs = push_field(&w.reciprocal(), &t).unwrap();
        prop_assert!(max_rel_diff(&lhs, &rhs) <= 1e-8);
    }

    #[test]
    fn conformal_boundary_norm_is_covariant(seed in any::<u64>(), q in 2.0f64..4.0) {
        let inst = instance(seed, 25, 8).unwrap();
        let mut r = rng(seed.wrapping_add(3));
        let w = conformal_factor(&mut r, inst.form.size());
        let u = admissible_field(&mut r, &inst.bs);
        let critical = inst.bs.two_sharp();
        let lhs = boundary_norm(&inst.bs, &u, critical, Some(&w)).unwrap();
        let rhs = boundary_norm(&inst.bs, &push_field(&w, &u).unwrap(), critical, None).unwrap();
        prop_assert!(rel(lhs, rhs) <= 1e-12);
        // Away from the critical exponent the norm still scales homogeneously.
        let s = 1.7;
        let su: Vec<f64> = u.iter().map(|x| s * x).collect();
        prop_assert!(rel(boundary_norm(&inst.bs, &su, q, None).unwrap(), s * boundary_norm(&inst.bs, &u, q, None).unwrap()) <= 1e-12);
    }

    #[test]
    fn positive_field_rejects_nonpositive_entries(x in -1.0f64..=0.0) {
        prop_assert!(PositiveField::new(vec![1.0, x]).is_err());
    }

    #[test]
    fn g17_round_trips(x in any::<f64>().prop_filter("finite", |x| x.is_finite())) {
        prop_assert_eq!(fmt_g17(x).parse::<f64>().unwrap(), x);
    }

    #[test]
    fn perturbed_mesh_round_trips(level in 0u32..3, jitter in prop::collection::vec(-1e-3f64..1e-3, 3)) {
        let m = build_ball_mesh(level).unwrap();
        let vertices: Vec<[f64; 3]> = m
            .vertices()
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let s = 1.0 + jitter[i % 3] * (i as f64).sin();
                [v[0] * s, v[1] * s, v[2] * s]
            })
            .collect();
        let perturbed = SimplicialMesh::new(vertices, m.cells().to_vec(), m.boundary_faces().to_vec()).unwrap();
        let text = mesh_to_string(&perturbed);
        let back = mesh_from_str(&text).unwrap();
        prop_assert_eq!(&back, &perturbed);
        prop_assert_eq!(mesh_to_string(&back), text);
    }
}
