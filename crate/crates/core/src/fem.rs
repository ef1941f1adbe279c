//! P1 finite elements on tetrahedral meshes of the unit ball.
//!
//! The discrete energy form is
//!
//! ```text
//!   A = a_n K + diag(R_i M_i) + b_n diag(H_j m_j)
//! ```
//!
//! with `K` the P1 stiffness matrix, `M_i` the lumped volume mass, and `m_j`
//! the lumped boundary mass (one third of the incident face areas).

use std::collections::HashMap;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::algebra::{BoundaryStructure, Dimension, EnergyForm, PositiveField};
use crate::error::{check_len, Result, YoError};
use crate::linalg::{norm2, SymCsr};

/// Refinement levels above this are refused (level 6 already has ~2M cells).
pub const MAX_LEVEL: u32 = 6;

/// Local faces of a positively oriented tetrahedron, each ordered so that its
/// right-hand normal points away from the opposite vertex.
const LOCAL_FACES: [[usize; 3]; 4] = [[1, 2, 3], [0, 3, 2], [0, 1, 3], [0, 2, 1]];

#[derive(Debug, Clone, PartialEq)]
pub struct SimplicialMesh {
    vertices: Vec<[f64; 3]>,
    cells: Vec<[usize; 4]>,
    boundary_faces: Vec<[usize; 3]>,
    boundary_vertices: Vec<usize>,
}

fn sub(a: [f64; 3], b: [f64; 3]) -> Vector3<f64> {
    Vector3::new(a[0] - b[0], a[1] - b[1], a[2] - b[2])
}

fn signed_volume(v: &[[f64; 3]], c: &[usize; 4]) -> f64 {
    let (p0, p1, p2, p3) = (v[c[0]], v[c[1]], v[c[2]], v[c[3]]);
    sub(p1, p0).cross(&sub(p2, p0)).dot(&sub(p3, p0)) / 6.0
}

fn face_area(v: &[[f64; 3]], f: &[usize; 3]) -> f64 {
    0.5 * sub(v[f[1]], v[f[0]]).cross(&sub(v[f[2]], v[f[0]])).norm()
}

fn sorted3(f: [usize; 3]) -> [usize; 3] {
    let mut s = f;
    s.sort_unstable();
    s
}

/// Faces incident to exactly one cell, outward oriented, in first-seen order.
fn exterior_faces(cells: &[[usize; 4]]) -> Vec<[usize; 3]> {
    let mut count: HashMap<[usize; 3], u32> = HashMap::with_capacity(cells.len() * 2);
    for c in cells {
        for lf in LOCAL_FACES {
            *count.entry(sorted3([c[lf[0]], c[lf[1]], c[lf[2]]])).or_insert(0) += 1;
        }
    }
    let mut out = Vec::new();
    for c in cells {
        for lf in LOCAL_FACES {
            let f = [c[lf[0]], c[lf[1]], c[lf[2]]];
            if count[&sorted3(f)] == 1 {
                out.push(f);
            }
        }
    }
    out
}

impl SimplicialMesh {
    /// Validates index ranges, cell orientation, and that the boundary faces
    /// are exactly the faces incident to a single cell.
    pub fn new(vertices: Vec<[f64; 3]>, cells: Vec<[usize; 4]>, boundary_faces: Vec<[usize; 3]>) -> Result<Self> {
        let nv = vertices.len();
        if cells.is_empty() {
            return Err(YoError::Mesh("mesh has no cells".into()));
        }
        if let Some(p) = vertices.iter().position(|x| x.iter().any(|c| !c.is_finite())) {
            return Err(YoError::Mesh(format!("vertex {p} has a non-finite coordinate")));
        }
        for (k, c) in cells.iter().enumerate() {
            if let Some(&i) = c.iter().find(|&&i| i >= nv) {
                return Err(YoError::Mesh(format!("cell {k} references vertex {i}, but there are {nv} vertices")));
            }
            let vol = signed_volume(&vertices, c);
            if !(vol > 0.0) {
                return Err(YoError::Mesh(format!("cell {k} has non-positive volume {vol:e}")));
            }
        }
        for (k, f) in boundary_faces.iter().enumerate() {
            if let Some(&i) = f.iter().find(|&&i| i >= nv) {
                return Err(YoError::Mesh(format!(
                    "boundary face {k} references vertex {i}, but there are {nv} vertices"
                )));
            }
        }
        let mut expected: Vec<[usize; 3]> = exterior_faces(&cells).into_iter().map(sorted3).collect();
        let mut given: Vec<[usize; 3]> = boundary_faces.iter().copied().map(sorted3).collect();
        expected.sort_unstable();
        given.sort_unstable();
        if expected != given {
            return Err(YoError::Mesh(format!(
                "boundary faces ({}) do not match the exterior faces of the cells ({})",
                given.len(),
                expected.len()
            )));
        }
        let mut boundary_vertices: Vec<usize> = boundary_faces.iter().flatten().copied().collect();
        boundary_vertices.sort_unstable();
        boundary_vertices.dedup();
        Ok(SimplicialMesh {
            vertices,
            cells,
            boundary_faces,
            boundary_vertices,
        })
    }

    /// Builds a mesh whose boundary faces are derived from the cells.
    pub fn from_cells(vertices: Vec<[f64; 3]>, cells: Vec<[usize; 4]>) -> Result<Self> {
        let faces = exterior_faces(&cells);
        SimplicialMesh::new(vertices, cells, faces)
    }

    pub fn vertices(&self) -> &[[f64; 3]] {
        &self.vertices
    }

    pub fn cells(&self) -> &[[usize; 4]] {
        &self.cells
    }

    pub fn boundary_faces(&self) -> &[[usize; 3]] {
        &self.boundary_faces
    }

    /// Sorted indices of vertices lying on a boundary face.
    pub fn boundary_vertices(&self) -> &[usize] {
        &self.boundary_vertices
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn volume(&self) -> f64 {
        self.cells.iter().map(|c| signed_volume(&self.vertices, c)).sum()
    }

    pub fn boundary_area(&self) -> f64 {
        self.boundary_faces.iter().map(|f| face_area(&self.vertices, f)).sum()
    }

    /// Mesh size: the longest edge.
    pub fn h(&self) -> f64 {
        let mut h: f64 = 0.0;
        for c in &self.cells {
            for a in 0..4 {
                for b in a + 1..4 {
                    h = h.max(sub(self.vertices[c[a]], self.vertices[c[b]]).norm());
                }
            }
        }
        h
    }

    /// Largest `| |x| - 1 |` over boundary vertices.
    pub fn sphere_deviation(&self) -> f64 {
        self.boundary_vertices
            .iter()
            .map(|&i| (Vector3::from(self.vertices[i]).norm() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

fn octahedron() -> (Vec<[f64; 3]>, Vec<[usize; 4]>) {
    let v = vec![
        [0.0, 0.0, 0.0],
        [1.0, 0.0, 0.0],
        [-1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, -1.0, 0.0],
        [0.0, 0.0, 1.0],
        [0.0, 0.0, -1.0],
    ];
    let mut cells = Vec::with_capacity(8);
    for &x in &[1usize, 2] {
        for &y in &[3usize, 4] {
            for &z in &[5usize, 6] {
                cells.push([0, x, y, z]);
            }
        }
    }
    orient(&v, &mut cells);
    (v, cells)
}

fn orient(v: &[[f64; 3]], cells: &mut [[usize; 4]]) {
    for c in cells.iter_mut() {
        if signed_volume(v, c) < 0.0 {
            c.swap(2, 3);
        }
    }
}

/// One 1-to-8 red refinement. Midpoints of boundary edges are pushed out to
/// the unit sphere; the inner octahedron is split along its shortest diagonal.
fn refine(v: &mut Vec<[f64; 3]>, cells: &[[usize; 4]]) -> Vec<[usize; 4]> {
    let mut on_sphere: std::collections::HashSet<(usize, usize)> = std::collections::HashSet::new();
    for f in exterior_faces(cells) {
        for (a, b) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
            on_sphere.insert((a.min(b), a.max(b)));
        }
    }
    let mut mid: HashMap<(usize, usize), usize> = HashMap::with_capacity(cells.len() * 2);
    let mut midpoint = |v: &mut Vec<[f64; 3]>, a: usize, b: usize| -> usize {
        let key = (a.min(b), a.max(b));
        *mid.entry(key).or_insert_with(|| {
            let (pa, pb) = (v[key.0], v[key.1]);
            let mut m = [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1]), 0.5 * (pa[2] + pb[2])];
            if on_sphere.contains(&key) {
                let r = (m[0] * m[0] + m[1] * m[1] + m[2] * m[2]).sqrt();
                m = [m[0] / r, m[1] / r, m[2] / r];
            }
            v.push(m);
            v.len() - 1
        })
    };
    let mut out = Vec::with_capacity(cells.len() * 8);
    for c in cells {
        let [p0, p1, p2, p3] = *c;
        let m01 = midpoint(v, p0, p1);
        let m02 = midpoint(v, p0, p2);
        let m03 = midpoint(v, p0, p3);
        let m12 = midpoint(v, p1, p2);
        let m13 = midpoint(v, p1, p3);
        let m23 = midpoint(v, p2, p3);
        out.push([p0, m01, m02, m03]);
        out.push([m01, p1, m12, m13]);
        out.push([m02, m12, p2, m23]);
        out.push([m03, m13, m23, p3]);
        // Inner octahedron: three diagonals joining opposite-edge midpoints.
        let diagonals = [(m01, m23, [m02, m12, m13, m03]), (m02, m13, [m01, m12, m23, m03]), (m03, m12, [m01, m13, m23, m02])];
        let len = |d: &(usize, usize, [usize; 4])| sub(v[d.0], v[d.1]).norm();
        let mut best = 0;
        for k in 1..3 {
            if len(&diagonals[k]) < len(&diagonals[best]) {
                best = k;
            }
        }
        let (a, b, ring) = diagonals[best];
        for k in 0..4 {
            out.push([a, b, ring[k], ring[(k + 1) % 4]]);
        }
    }
    orient(v, &mut out);
    out
}

/// Tetrahedral mesh of the unit ball: an octahedron refined `level` times.
pub fn build_ball_mesh(level: u32) -> Result<SimplicialMesh> {
    if level > MAX_LEVEL {
        return Err(YoError::SizeGuard(format!("refinement level {level} exceeds {MAX_LEVEL}")));
    }
    let (mut v, mut cells) = octahedron();
    for _ in 0..level {
        cells = refine(&mut v, &cells);
    }
    SimplicialMesh::from_cells(v, cells)
}

/// Background geometry: scalar curvature per vertex, boundary mean curvature
/// per boundary vertex (in `mesh.boundary_vertices()` order), and an optional
/// conformal factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricData {
    pub r_field: Vec<f64>,
    pub h_field: Vec<f64>,
    pub conformal_w: Option<PositiveField>,
}

impl MetricData {
    /// Round unit ball: `R = 0`, `H = 1`, no conformal factor.
    pub fn flat_ball(mesh: &SimplicialMesh) -> Self {
        MetricData {
            r_field: vec![0.0; mesh.num_vertices()],
            h_field: vec![1.0; mesh.boundary_vertices().len()],
            conformal_w: None,
        }
    }
}

/// Lumped boundary mass: one third of the area of each incident face.
pub fn boundary_masses(mesh: &SimplicialMesh) -> Vec<f64> {
    let mut m = vec![0.0; mesh.num_vertices()];
    for f in mesh.boundary_faces() {
        let a = face_area(mesh.vertices(), f) / 3.0;
        for &i in f {
            m[i] += a;
        }
    }
    mesh.boundary_vertices().iter().map(|&i| m[i]).collect()
}

/// Lumped volume mass: one quarter of the volume of each incident cell.
pub fn volume_masses(mesh: &SimplicialMesh) -> Vec<f64> {
    let mut m = vec![0.0; mesh.num_vertices()];
    for c in mesh.cells() {
        let q = signed_volume(mesh.vertices(), c) / 4.0;
        for &i in c {
            m[i] += q;
        }
    }
    m
}

/// Assembles the energy form and boundary structure of `(mesh, metric)`.
/// Only `n = 3` is meaningful for tetrahedral meshes.
pub fn assemble(mesh: &SimplicialMesh, metric: &MetricData, n: u32) -> Result<(EnergyForm, BoundaryStructure)> {
    let dim = Dimension::new(n)?;
    if n != 3 {
        return Err(YoError::Domain(format!("tetrahedral meshes require n = 3, got {n}")));
    }
    let nv = mesh.num_vertices();
    check_len(nv, metric.r_field.len())?;
    check_len(mesh.boundary_vertices().len(), metric.h_field.len())?;
    let (a_n, b_n) = (dim.a_n(), dim.b_n());
    let v = mesh.vertices();
    let mut trip = Vec::with_capacity(mesh.cells().len() * 16 + nv);
    for c in mesh.cells() {
        let jac = Matrix3::from_columns(&[sub(v[c[1]], v[c[0]]), sub(v[c[2]], v[c[0]]), sub(v[c[3]], v[c[0]])]);
        let vol = jac.determinant() / 6.0;
        let inv_t = jac
            .try_inverse()
            .ok_or_else(|| YoError::Mesh("degenerate cell".into()))?
            .transpose();
        // Gradients of the barycentric coordinates.
        let mut g = [Vector3::zeros(); 4];
        for k in 0..3 {
            g[k + 1] = inv_t.column(k).into_owned();
        }
        g[0] = -(g[1] + g[2] + g[3]);
        for a in 0..4 {
            for b in 0..4 {
                trip.push((c[a], c[b], a_n * vol * g[a].dot(&g[b])));
            }
        }
    }
    let vm = volume_masses(mesh);
    for i in 0..nv {
        let r = metric.r_field[i] * vm[i];
        if r != 0.0 {
            trip.push((i, i, r));
        }
    }
    let bm = boundary_masses(mesh);
    for (k, &j) in mesh.boundary_vertices().iter().enumerate() {
        let h = b_n * metric.h_field[k] * bm[k];
        if h != 0.0 {
            trip.push((j, j, h));
        }
    }
    let matrix = SymCsr::from_triplets(nv, &trip)?;
    let bs = BoundaryStructure::new(n, nv, mesh.boundary_vertices().to_vec(), bm)?;
    match &metric.conformal_w {
        None => Ok((EnergyForm::new(n, matrix)?, bs)),
        Some(w) => {
            check_len(nv, w.len())?;
            let pulled = SymCsr::congruence(&matrix, w.values());
            Ok((EnergyForm::new(n, pulled)?, bs.conformal(w)?))
        }
    }
}

/// How far `u` is from solving the discrete Yamabe boundary problem with
/// zero interior equation and `B u = c u^{n/(n-2)}` on the boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvatureResidual {
    /// `||(A u)_interior|| / ||(A u)_boundary||`.
    pub r_interior: f64,
    /// Relative weighted misfit of the boundary fit.
    pub r_boundary: f64,
    /// Fitted boundary constant.
    pub c_est: f64,
}

pub fn curvature_residual(
    mesh: &SimplicialMesh,
    form: &EnergyForm,
    bs: &BoundaryStructure,
    u: &[f64],
) -> Result<CurvatureResidual> {
    check_len(mesh.num_vertices(), form.size())?;
    check_len(form.size(), u.len())?;
    if let Some(i) = u.iter().position(|x| !(*x > 0.0)) {
        return Err(YoError::Domain(format!("curvature residual needs u > 0; u[{i}] = {}", u[i])));
    }
    let au = form.apply(u)?;
    let interior: Vec<f64> = (0..u.len()).filter(|&i| !bs.is_boundary(i)).map(|i| au[i]).collect();
    let boundary: Vec<f64> = bs.indices().iter().map(|&j| au[j]).collect();
    let (c_est, r_boundary) = crate::functionals::mean_curvature_constant(form, bs, u)?;
    let bnorm = norm2(&boundary);
    let r_interior = if bnorm > 0.0 { norm2(&interior) / bnorm } else { norm2(&interior) };
    Ok(CurvatureResidual {
        r_interior,
        r_boundary,
        c_est,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn octahedron_counts() {
        let m = build_ball_mesh(0).unwrap();
        assert_eq!(m.num_vertices(), 7);
        assert_eq!(m.cells().len(), 8);
        assert_eq!(m.boundary_faces().len(), 8);
        assert_eq!(m.boundary_vertices(), &[1, 2, 3, 4, 5, 6]);
        assert!((m.volume() - 4.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn refinement_converges_to_ball() {
        let mut prev_err = f64::INFINITY;
        for level in 0..=3 {
            let m = build_ball_mesh(level).unwrap();
            assert_eq!(m.cells().len(), 8 * 8usize.pow(level));
            assert!(m.sphere_deviation() < 1e-14);
            let err = (m.boundary_area() - 4.0 * PI).abs();
            assert!(err < prev_err);
            prev_err = err;
            // Euler characteristic of the sphere.
            let nb = m.boundary_vertices().len() as i64;
            let nf = m.boundary_faces().len() as i64;
            assert_eq!(nb - 3 * nf / 2 + nf, 2);
        }
    }

    #[test]
    fn constants_in_kernel_of_stiffness() {
        let m = build_ball_mesh(2).unwrap();
        let mut md = MetricData::flat_ball(&m);
        md.h_field.iter_mut().for_each(|h| *h = 0.0);
        // R = H = 0 leaves only the stiffness matrix, which kills constants.
        assert!(matches!(assemble(&m, &md, 3), Err(YoError::NotPositiveDefinite { .. })));
    }

    #[test]
    fn flat_ball_constant_is_critical() {
        let m = build_ball_mesh(2).unwrap();
        let (form, bs) = assemble(&m, &MetricData::flat_ball(&m), 3).unwrap();
        let u = vec![1.0; m.num_vertices()];
        let r = curvature_residual(&m, &form, &bs, &u).unwrap();
        assert!(r.r_interior < 1e-12);
        assert!(r.r_boundary < 1e-12);
        assert!((r.c_est - 4.0).abs() < 1e-12);
    }

    #[test]
    fn conformal_assembly_is_pullback() {
        let m = build_ball_mesh(1).unwrap();
        let nv = m.num_vertices();
        let w = PositiveField::new((0..nv).map(|i| 1.0 + 0.1 * i as f64).collect()).unwrap();
        let mut md = MetricData::flat_ball(&m);
        let (f0, b0) = assemble(&m, &md, 3).unwrap();
        md.conformal_w = Some(w.clone());
        let (f1, b1) = assemble(&m, &md, 3).unwrap();
        let u: Vec<f64> = (0..nv).map(|i| 0.5 + (i % 3) as f64).collect();
        let wu: Vec<f64> = u.iter().zip(w.values()).map(|(a, b)| a * b).collect();
        assert!((f1.pair(&u, &u).unwrap() - f0.pair(&wu, &wu).unwrap()).abs() < 1e-10);
        assert!((b1.area() - b0.area()).abs() > 1e-3);
    }

    #[test]
    fn rejects_bad_meshes() {
        let (v, mut cells) = octahedron();
        cells[0].swap(2, 3);
        assert!(matches!(SimplicialMesh::from_cells(v.clone(), cells), Err(YoError::Mesh(_))));
        let (_, cells) = octahedron();
        let mut bad = cells.clone();
        bad[1][0] = 99;
        assert!(matches!(SimplicialMesh::from_cells(v.clone(), bad), Err(YoError::Mesh(_))));
        let faces = exterior_faces(&cells)[1..].to_vec();
        assert!(matches!(SimplicialMesh::new(v, cells, faces), Err(YoError::Mesh(_))));
        assert!(matches!(build_ball_mesh(7), Err(YoError::SizeGuard(_))));
    }
}
