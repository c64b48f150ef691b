use crate::{CVec, PhasorError, NORMAL_EQ_COND_LIMIT, RANK_TOL};

/// A real `M x 2` matrix stored as two columns.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoCol {
    pub c0: Vec<f64>,
    pub c1: Vec<f64>,
}

impl TwoCol {
    pub fn new(c0: Vec<f64>, c1: Vec<f64>) -> Result<Self, PhasorError> {
        if c0.len() != c1.len() {
            return Err(PhasorError::LengthMismatch { expected: c0.len(), got: c1.len() });
        }
        Ok(TwoCol { c0, c1 })
    }

    /// `J = [Re j, Im j]`.
    pub fn j(j: &CVec) -> Self {
        TwoCol { c0: j.re(), c1: j.im() }
    }

    /// `J Q1 = [Re j, -Im j]`, so that `(J Q1 z)_m = Re(j_m z)`.
    pub fn jq1(j: &CVec) -> Self {
        TwoCol { c0: j.re(), c1: j.iter().map(|c| -c.im).collect() }
    }

    /// `J Q2 = [Im j, Re j]`, so that `(J Q2 z)_m = Im(j_m z)`.
    pub fn jq2(j: &CVec) -> Self {
        TwoCol { c0: j.im(), c1: j.re() }
    }

    /// A single row `[a, b]`.
    pub fn row(a: f64, b: f64) -> Self {
        TwoCol { c0: vec![a], c1: vec![b] }
    }

    pub fn rows(&self) -> usize {
        self.c0.len()
    }

    pub fn mul(&self, z: [f64; 2]) -> Vec<f64> {
        self.c0.iter().zip(&self.c1).map(|(a, b)| a * z[0] + b * z[1]).collect()
    }

    /// `A^T b`.
    pub fn tmul(&self, b: &[f64]) -> [f64; 2] {
        [dot(&self.c0, b), dot(&self.c1, b)]
    }

    /// `A^T A` as `[g00, g01, g11]`.
    pub fn gram(&self) -> [f64; 3] {
        [dot(&self.c0, &self.c0), dot(&self.c0, &self.c1), dot(&self.c1, &self.c1)]
    }

    pub fn scaled(&self, k: f64) -> Self {
        TwoCol {
            c0: self.c0.iter().map(|x| x * k).collect(),
            c1: self.c1.iter().map(|x| x * k).collect(),
        }
    }

    /// Stacks `other` below `self`.
    pub fn vstack(&self, other: &Self) -> Self {
        let mut c0 = self.c0.clone();
        c0.extend_from_slice(&other.c0);
        let mut c1 = self.c1.clone();
        c1.extend_from_slice(&other.c1);
        TwoCol { c0, c1 }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// One-sided Jacobi SVD: rotates the columns until they are orthogonal.
/// Returns `(c, s, u0, u1)` with `A V = [u0 u1]`, `V = [[c, s], [-s, c]]`.
fn jacobi(a: &TwoCol) -> (f64, f64, Vec<f64>, Vec<f64>) {
    let (mut c, mut s) = (1.0, 0.0);
    let mut u0 = a.c0.clone();
    let mut u1 = a.c1.clone();
    for _ in 0..8 {
        let alpha = dot(&u0, &u0);
        let beta = dot(&u1, &u1);
        let gamma = dot(&u0, &u1);
        if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
            break;
        }
        let zeta = (beta - alpha) / (2.0 * gamma);
        let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
        let cr = 1.0 / (1.0 + t * t).sqrt();
        let sr = cr * t;
        for (x, y) in u0.iter_mut().zip(u1.iter_mut()) {
            let (p, q) = (*x, *y);
            *x = cr * p - sr * q;
            *y = sr * p + cr * q;
        }
        (c, s) = (c * cr - s * sr, s * cr + c * sr);
    }
    (c, s, u0, u1)
}

/// Singular values `(sigma_max, sigma_min)`.
pub fn singular_values(a: &TwoCol) -> (f64, f64) {
    let (_, _, u0, u1) = jacobi(a);
    let s0 = dot(&u0, &u0).sqrt();
    let s1 = dot(&u1, &u1).sqrt();
    (s0.max(s1), s0.min(s1))
}

/// `sigma_max / sigma_min`; infinite for a rank-deficient matrix.
pub fn condition_number(a: &TwoCol) -> f64 {
    let (hi, lo) = singular_values(a);
    if lo == 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Minimum-norm-residual solution of `A z = b` for an `M x 2` matrix.
///
/// Uses the normal equations when the Gram matrix is well conditioned and a
/// Jacobi SVD otherwise.
pub fn lstsq_2col(a: &TwoCol, b: &[f64]) -> Result<[f64; 2], PhasorError> {
    if a.c0.len() != a.c1.len() {
        return Err(PhasorError::LengthMismatch { expected: a.c0.len(), got: a.c1.len() });
    }
    if b.len() != a.rows() {
        return Err(PhasorError::LengthMismatch { expected: a.rows(), got: b.len() });
    }
    if b.is_empty() {
        return Err(PhasorError::Empty);
    }
    let [g00, g01, g11] = a.gram();
    let half_tr = 0.5 * (g00 + g11);
    let rad = (0.25 * (g00 - g11).powi(2) + g01 * g01).sqrt();
    let l_max = half_tr + rad;
    let det = g00 * g11 - g01 * g01;
    if l_max > 0.0 && det > l_max * l_max / NORMAL_EQ_COND_LIMIT {
        let [r0, r1] = a.tmul(b);
        return Ok([(g11 * r0 - g01 * r1) / det, (g00 * r1 - g01 * r0) / det]);
    }
    let (c, s, u0, u1) = jacobi(a);
    let s0 = dot(&u0, &u0).sqrt();
    let s1 = dot(&u1, &u1).sqrt();
    let (hi, lo) = (s0.max(s1), s0.min(s1));
    if hi == 0.0 || lo <= RANK_TOL * hi {
        return Err(PhasorError::RankDeficient { sigma_max: hi, sigma_min: lo });
    }
    let w0 = dot(&u0, b) / (s0 * s0);
    let w1 = dot(&u1, b) / (s1 * s1);
    Ok([c * w0 + s * w1, -s * w0 + c * w1])
}

/// Solves `min ||b - A z||^2 + mu ||D z||^2` by stacking `sqrt(mu) D` below `A`.
/// `D` may have any number of rows.
pub fn regularized_lstsq(a: &TwoCol, b: &[f64], d: &TwoCol, mu: f64) -> Result<[f64; 2], PhasorError> {
    if !(mu.is_finite() && mu >= 0.0) {
        return Err(PhasorError::InvalidWeight(mu));
    }
    if mu == 0.0 {
        return lstsq_2col(a, b);
    }
    if b.len() != a.rows() {
        return Err(PhasorError::LengthMismatch { expected: a.rows(), got: b.len() });
    }
    let stacked = a.vstack(&d.scaled(mu.sqrt()));
    let mut rhs = b.to_vec();
    rhs.resize(stacked.rows(), 0.0);
    lstsq_2col(&stacked, &rhs)
}
