//! Discrete energy pairing, boundary traces and the exact conformal pullback.
//!
//! Everything here is mesh independent: a pairing is an SPD matrix together
//! with the manifold dimension `n`, and the boundary is a set of indices with
//! lumped measure weights. Because the boundary measure is diagonal, the
//! conformal rules
//!
//! ```text
//!   <u, u>_{g_w} = <w u, w u>_g,     ||u||_{L^{2#}(g_w)} = ||w u||_{L^{2#}(g)}
//! ```
//!
//! hold exactly (up to rounding) at the discrete level.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Result, YoError};
use crate::linalg::{certify_spd, SpdCertificate, SymCsr};

/// Smallest boundary value accepted for an admissible state.
pub const EPS_FLOOR: f64 = 1e-12;

/// Exponents and coefficients determined by the manifold dimension `n >= 3`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dimension(u32);

impl Dimension {
    pub fn new(n: u32) -> Result<Self> {
        if n < 3 {
            return Err(YoError::Domain(format!("manifold dimension must be >= 3, got {n}")));
        }
        Ok(Dimension(n))
    }

    pub fn get(self) -> u32 {
        self.0
    }

    fn ratio(num: u32, den: u32) -> f64 {
        // reduce first so simple cases (n = 3, 4, 6) come out exact
        let g = gcd(num, den);
        (num / g) as f64 / (den / g) as f64
    }

    /// `a_n = 4(n-1)/(n-2)`, the gradient coefficient of the conformal Laplacian.
    pub fn a_n(self) -> f64 {
        Self::ratio(4 * (self.0 - 1), self.0 - 2)
    }

    /// `b_n = 2(n-1)`, the mean-curvature coefficient of the conformal Robin operator.
    pub fn b_n(self) -> f64 {
        (2 * (self.0 - 1)) as f64
    }

    /// Critical trace exponent `2# = 2(n-1)/(n-2)`.
    pub fn two_sharp(self) -> f64 {
        Self::ratio(2 * (self.0 - 1), self.0 - 2)
    }

    /// Critical volume exponent `2* = 2n/(n-2)`.
    pub fn two_star(self) -> f64 {
        Self::ratio(2 * self.0, self.0 - 2)
    }

    /// `p = 2# - 1 = n/(n-2)`, the critical quotient exponent.
    pub fn critical_p(self) -> f64 {
        Self::ratio(self.0, self.0 - 2)
    }

    /// Exponent of the conformal factor in `g_w = w^{4/(n-2)} g`.
    pub fn metric_exponent(self) -> f64 {
        Self::ratio(4, self.0 - 2)
    }
}

fn gcd(a: u32, b: u32) -> u32 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// The discrete pairing `<u, v>_h = u^T A v`.
#[derive(Debug, Clone)]
pub struct EnergyForm {
    dim: Dimension,
    matrix: SymCsr,
    certificate: SpdCertificate,
}

impl EnergyForm {
    /// Wraps `matrix`, rejecting it unless the Cholesky test succeeds.
    pub fn new(n: u32, matrix: SymCsr) -> Result<Self> {
        let dim = Dimension::new(n)?;
        let certificate = certify_spd(&matrix)?;
        Ok(EnergyForm {
            dim,
            matrix,
            certificate,
        })
    }

    pub fn from_dense(n: u32, rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(n, SymCsr::from_dense(rows)?)
    }

    pub fn size(&self) -> usize {
        self.matrix.dim()
    }

    pub fn dimension(&self) -> Dimension {
        self.dim
    }

    pub fn n(&self) -> u32 {
        self.dim.get()
    }

    pub fn matrix(&self) -> &SymCsr {
        &self.matrix
    }

    pub fn certificate(&self) -> SpdCertificate {
        self.certificate
    }

    pub fn pair(&self, u: &[f64], v: &[f64]) -> Result<f64> {
        check_len(self.size(), u.len())?;
        check_len(self.size(), v.len())?;
        Ok(self.matrix.bilinear(u, v))
    }

    /// `||u||_h = sqrt(<u, u>_h)`.
    pub fn norm(&self, u: &[f64]) -> Result<f64> {
        Ok(self.pair(u, u)?.max(0.0).sqrt())
    }

    pub fn apply(&self, u: &[f64]) -> Result<Vec<f64>> {
        check_len(self.size(), u.len())?;
        Ok(self.matrix.matvec(u))
    }

    /// Form of the conformal metric `g_w`: matrix `D_w A D_w`.
    pub fn pullback(&self, w: &PositiveField) -> Result<EnergyForm> {
        check_len(self.size(), w.len())?;
        w.require_strict()?;
        EnergyForm::new(self.n(), self.matrix.congruence(w.values()))
    }
}

/// Boundary index set with lumped measure weights.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryStructure {
    dim: Dimension,
    size: usize,
    indices: Vec<usize>,
    weights: Vec<f64>,
    on_boundary: Vec<bool>,
}

impl BoundaryStructure {
    pub fn new(n: u32, size: usize, indices: Vec<usize>, weights: Vec<f64>) -> Result<Self> {
        let dim = Dimension::new(n)?;
        check_len(indices.len(), weights.len())?;
        if indices.is_empty() {
            return Err(YoError::Input("boundary index set is empty".into()));
        }
        let mut on_boundary = vec![false; size];
        for &i in &indices {
            if i >= size {
                return Err(YoError::Input(format!("boundary index {i} out of range {size}")));
            }
            if on_boundary[i] {
                return Err(YoError::Input(format!("boundary index {i} repeated")));
            }
            on_boundary[i] = true;
        }
        if let Some(w) = weights.iter().find(|w| !(**w > 0.0) || !w.is_finite()) {
            return Err(YoError::Domain(format!("boundary weight must be positive, got {w}")));
        }
        Ok(BoundaryStructure {
            dim,
            size,
            indices,
            weights,
            on_boundary,
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn n(&self) -> u32 {
        self.dim.get()
    }

    pub fn dimension(&self) -> Dimension {
        self.dim
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn is_boundary(&self, i: usize) -> bool {
        self.on_boundary[i]
    }

    pub fn two_sharp(&self) -> f64 {
        self.dim.two_sharp()
    }

    pub fn two_star(&self) -> f64 {
        self.dim.two_star()
    }

    /// Boundary values of `u`, in index-set order.
    pub fn trace(&self, u: &[f64]) -> Vec<f64> {
        self.indices.iter().map(|&i| u[i]).collect()
    }

    /// Total boundary measure.
    pub fn area(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Boundary measure of `g_w`: weights multiplied by `w^{2#}`.
    pub fn conformal(&self, w: &PositiveField) -> Result<BoundaryStructure> {
        check_len(self.size, w.len())?;
        w.require_strict()?;
        let e = self.two_sharp();
        let weights = self
            .indices
            .iter()
            .zip(&self.weights)
            .map(|(&i, &m)| m * w.values()[i].powf(e))
            .collect();
        BoundaryStructure::new(self.n(), self.size, self.indices.clone(), weights)
    }

    /// Checks `u >= 0` everywhere and `u >= EPS_FLOOR` on the boundary.
    pub fn check_admissible(&self, u: &[f64]) -> Result<()> {
        check_len(self.size, u.len())?;
        for (i, &x) in u.iter().enumerate() {
            if !x.is_finite() || x < 0.0 {
                return Err(YoError::Domain(format!("state entry {i} = {x} is not nonnegative")));
            }
            if self.on_boundary[i] && x < EPS_FLOOR {
                return Err(YoError::Domain(format!(
                    "boundary entry {i} = {x} is not positive (floor {EPS_FLOOR:e})"
                )));
            }
        }
        Ok(())
    }

    /// Interior indices where an admissible state vanishes.
    pub fn interior_zeros(&self, u: &[f64]) -> Vec<usize> {
        (0..self.size).filter(|&i| !self.on_boundary[i] && u[i] == 0.0).collect()
    }
}

/// A nonnegative nodal field: a conformal factor `w` or an admissible state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositiveField {
    values: Vec<f64>,
}

impl PositiveField {
    /// Conformal factor: every entry strictly positive and finite.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        let f = PositiveField { values };
        f.require_strict()?;
        Ok(f)
    }

    pub fn ones(len: usize) -> Self {
        PositiveField { values: vec![1.0; len] }
    }

    fn require_strict(&self) -> Result<()> {
        match self.values.iter().position(|&x| !(x > 0.0) || !x.is_finite()) {
            Some(i) => Err(YoError::Domain(format!(
                "conformal factor entry {i} = {} is not strictly positive",
                self.values[i]
            ))),
            None => Ok(()),
        }
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

    pub fn reciprocal(&self) -> PositiveField {
        PositiveField {
            values: self.values.iter().map(|x| 1.0 / x).collect(),
        }
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }
}

pub fn pair(form: &EnergyForm, u: &[f64], v: &[f64]) -> Result<f64> {
    form.pair(u, v)
}

pub fn pullback_form(form: &EnergyForm, w: &PositiveField) -> Result<EnergyForm> {
    form.pullback(w)
}

/// `(sum_j m_j w_j^{2#} |u_j|^q)^{1/q}` over boundary indices; the `w` factor
/// is omitted when absent.
pub fn boundary_norm(bs: &BoundaryStructure, u: &[f64], q: f64, w: Option<&PositiveField>) -> Result<f64> {
    if !(q >= 2.0) {
        return Err(YoError::Domain(format!("norm exponent q must be >= 2, got {q}")));
    }
    check_len(bs.size(), u.len())?;
    if let Some(w) = w {
        check_len(bs.size(), w.len())?;
        w.require_strict()?;
    }
    let e = bs.two_sharp();
    let mut acc = 0.0;
    for (&i, &m) in bs.indices().iter().zip(bs.weights()) {
        let mut term = m * u[i].abs().powf(q);
        if let Some(w) = w {
            term *= w.values()[i].powf(e);
        }
        acc += term;
    }
    Ok(acc.powf(1.0 / q))
}

/// Entrywise product `w * u`.
pub fn push_field(w: &PositiveField, u: &[f64]) -> Result<Vec<f64>> {
    check_len(w.len(), u.len())?;
    Ok(w.values().iter().zip(u).map(|(a, b)| a * b).collect())
}
