//! Closed-form extremals on the flat unit ball and the sharp trace constant.
//!
//! For a pole `a` outside the closed ball,
//!
//! ```text
//!   u_a(x) = s ((|a|^2 - 1) / |x - a|^2)^{(n-2)/2}
//! ```
//!
//! is harmonic in the ball and satisfies `8 d_nu u + 4 u = 4 s^{-2} u^3` on the
//! unit sphere (n = 3), so its boundary constant is `4 / s^2`.

use serde::{Deserialize, Serialize};

use crate::algebra::{boundary_norm, BoundaryStructure, Dimension, EnergyForm, PositiveField};
use crate::error::{check_len, Result, YoError};
use crate::fem::{curvature_residual, SimplicialMesh};
use crate::functionals::{control_quotient, energy_quotient};
use crate::obstacle::{fixed_point_distance, obstacle_map, ObstacleOptions};

/// Minimal distance of the pole from the closed ball.
pub const POLE_MARGIN: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BubbleParams {
    a: [f64; 3],
    scale: f64,
}

impl BubbleParams {
    pub fn new(a: [f64; 3], scale: f64) -> Result<Self> {
        let r = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
        if !(r >= 1.0 + POLE_MARGIN) {
            return Err(YoError::Domain(format!("bubble pole |a| = {r} must be at least 1 + {POLE_MARGIN:e}")));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(YoError::Domain(format!("bubble scale must be positive, got {scale}")));
        }
        Ok(BubbleParams { a, scale })
    }

    pub fn pole(&self) -> [f64; 3] {
        self.a
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Boundary constant of the continuum bubble, `4 / s^2`.
    pub fn expected_constant(&self) -> f64 {
        4.0 / (self.scale * self.scale)
    }

    pub fn value_at(&self, x: [f64; 3]) -> f64 {
        let a = self.a;
        let a2 = a[0] * a[0] + a[1] * a[1] + a[2] * a[2];
        let d2 = (x[0] - a[0]).powi(2) + (x[1] - a[1]).powi(2) + (x[2] - a[2]).powi(2);
        self.scale * ((a2 - 1.0) / d2).sqrt()
    }
}

/// Nodal interpolant of the bubble.
pub fn bubble_field(mesh: &SimplicialMesh, params: &BubbleParams) -> Result<PositiveField> {
    PositiveField::new(mesh.vertices().iter().map(|&x| params.value_at(x)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BubbleReport {
    pub c_est: f64,
    pub c_expected: f64,
    pub c_relative_error: f64,
    pub r_interior: f64,
    pub r_boundary: f64,
    /// `||T u - u||_A / ||u||_A` at the interpolated bubble.
    pub fixed_point_distance: f64,
    pub e_value: f64,
    pub i_value: f64,
    /// Tolerance the obstacle solves were run at.
    pub tol: f64,
}

/// Curvature residual, fixed-point gap and quotients of the interpolated bubble.
pub fn verify_bubble(
    mesh: &SimplicialMesh,
    form: &EnergyForm,
    bs: &BoundaryStructure,
    params: &BubbleParams,
    tol: f64,
) -> Result<BubbleReport> {
    let u = bubble_field(mesh, params)?.into_vec();
    let cr = curvature_residual(mesh, form, bs, &u)?;
    let opts = ObstacleOptions::with_tol(tol);
    let fp = fixed_point_distance(form, bs, &u, tol, &opts)?;
    let p = form.dimension().critical_p();
    let c_expected = params.expected_constant();
    Ok(BubbleReport {
        c_est: cr.c_est,
        c_expected,
        c_relative_error: (cr.c_est - c_expected).abs() / c_expected,
        r_interior: cr.r_interior,
        r_boundary: cr.r_boundary,
        fixed_point_distance: fp.distance,
        e_value: energy_quotient(form, bs, &u, p, None)?,
        i_value: control_quotient(form, bs, &u, p, &opts, None)?,
        tol,
    })
}

/// `Gamma(k / 2)` for a positive integer `k`.
fn gamma_half(k: u32) -> f64 {
    let (mut g, mut x) = if k.is_multiple_of(2) { (1.0, 1.0) } else { (std::f64::consts::PI.sqrt(), 0.5) };
    while 2.0 * x < k as f64 {
        g *= x;
        x += 1.0;
    }
    g
}

/// `(n-1)`-volume of the unit sphere in `R^n`.
pub fn sphere_area(n: u32) -> f64 {
    2.0 * std::f64::consts::PI.powf(n as f64 / 2.0) / gamma_half(n)
}

/// `2(n-1) sigma^{1/(n-1)}` for a given sphere area `sigma`.
pub fn sharp_constant_from_area(n: u32, sigma: f64) -> Result<f64> {
    Dimension::new(n)?;
    let k = (n - 1) as f64;
    Ok(2.0 * k * sigma.powf(1.0 / k))
}

/// Sharp constant of the trace inequality on the flat unit ball; `8 sqrt(pi)` for `n = 3`.
pub fn sharp_constant(n: u32) -> Result<f64> {
    sharp_constant_from_area(n, sphere_area(n.max(1)))
}

/// `||T u||_{2#} sqrt(mu) / ||u||_A`; the sharp obstacle trace inequality says
/// this is at most one in the continuum, with equality only at bubbles.
pub fn trace_ratio(form: &EnergyForm, bs: &BoundaryStructure, u: &[f64], opts: &ObstacleOptions) -> Result<f64> {
    check_len(form.size(), u.len())?;
    let mu = sharp_constant(form.n())?;
    let t = obstacle_map(form, bs, u, opts)?.state;
    Ok(boundary_norm(bs, &t, bs.two_sharp(), None)? * mu.sqrt() / form.norm(u)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{assemble, build_ball_mesh, MetricData};
    use std::f64::consts::PI;

    #[test]
    fn sharp_constant_values() {
        assert!((sharp_constant(3).unwrap() - 8.0 * PI.sqrt()).abs() < 1e-13);
        assert!((sharp_constant(4).unwrap() - 6.0 * (2.0 * PI * PI).cbrt()).abs() < 1e-12);
        assert!((sphere_area(5) - 8.0 * PI * PI / 3.0).abs() < 1e-12);
        let s = sphere_area(3);
        let ratio = sharp_constant_from_area(3, 2.0 * s).unwrap() / sharp_constant_from_area(3, s).unwrap();
        assert!((ratio - 2f64.sqrt()).abs() < 1e-14);
        assert!(sharp_constant(2).is_err());
    }

    #[test]
    fn closed_form_samples() {
        let b = BubbleParams::new([0.0, 0.0, 2.0], 1.0).unwrap();
        assert!((b.value_at([0.0, 0.0, 1.0]) - 3f64.sqrt()).abs() < 1e-15);
        let far = BubbleParams::new([100.0, 0.0, 0.0], 1.0).unwrap();
        let m = build_ball_mesh(2).unwrap();
        let u = bubble_field(&m, &far).unwrap();
        assert!(u.values().iter().all(|v| (v - 1.0).abs() <= 3e-2));
        let twice = bubble_field(&m, &BubbleParams::new([100.0, 0.0, 0.0], 2.0).unwrap()).unwrap();
        assert!(u.values().iter().zip(twice.values()).all(|(a, b)| (2.0 * a - b).abs() < 1e-14));
        assert!(BubbleParams::new([0.0, 0.5, 0.0], 1.0).is_err());
        assert!(BubbleParams::new([0.0, 0.0, 2.0], 0.0).is_err());
    }

    #[test]
    fn bubble_boundary_constant() {
        let m = build_ball_mesh(3).unwrap();
        let (form, bs) = assemble(&m, &MetricData::flat_ball(&m), 3).unwrap();
        let near = BubbleParams::new([0.0, 0.0, 2.0], 1.0).unwrap();
        let r = verify_bubble(&m, &form, &bs, &near, 1e-10).unwrap();
        assert!(r.c_relative_error < 0.05, "{r:?}");
        // The interpolation gap of T decays like |a|^-2; far poles sit well inside 1e-3.
        let far = BubbleParams::new([0.0, 3.0, 4.0], 1.0).unwrap();
        let r = verify_bubble(&m, &form, &bs, &far, 1e-10).unwrap();
        assert!(r.fixed_point_distance < 1e-3, "{r:?}");
    }

    #[test]
    fn constant_is_fixed() {
        let m = build_ball_mesh(2).unwrap();
        let (form, bs) = assemble(&m, &MetricData::flat_ball(&m), 3).unwrap();
        let u = vec![1.0; m.num_vertices()];
        let d = fixed_point_distance(&form, &bs, &u, 1e-10, &ObstacleOptions::default()).unwrap();
        assert!(d.distance <= 1e-10);
    }
}
