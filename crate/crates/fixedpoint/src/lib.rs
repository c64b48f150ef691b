//! Damped fixed-point solver for `min ||A x - B y - c||^2` subject to `y = g(x)`.
//!
//! For fixed `y` the inner problem is linear least squares with the closed-form
//! minimiser `h(y) = A^+ (B y + c)`; a solution of the constrained problem is a
//! fixed point of `g o h`, found with `y <- y + alpha (g(h(y)) - y)`.

use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FixedPointError {
    #[error("A is rank deficient (singular values {sigma_max:e} / {sigma_min:e})")]
    RankDeficient { sigma_max: f64, sigma_min: f64 },
    #[error("g left its domain at iteration {iteration}, row {row}")]
    DomainViolation { iteration: usize, row: usize },
    #[error("no convergence after {iterations} iterations (gap {gap:e})")]
    ConvergenceNotReached { iterations: usize, gap: f64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Relative singular-value threshold for the rank check on `A`.
pub const RANK_TOL: f64 = 1e-12;

/// The coupling matrix `B`.
#[derive(Debug, Clone, PartialEq)]
pub enum Coupling {
    Diagonal(Vec<f64>),
    Dense(DMatrix<f64>),
}

impl Coupling {
    fn rows(&self) -> usize {
        match self {
            Coupling::Diagonal(d) => d.len(),
            Coupling::Dense(b) => b.nrows(),
        }
    }

    fn cols(&self) -> usize {
        match self {
            Coupling::Diagonal(d) => d.len(),
            Coupling::Dense(b) => b.ncols(),
        }
    }

    fn apply(&self, y: &[f64]) -> Vec<f64> {
        match self {
            Coupling::Diagonal(d) => d.iter().zip(y).map(|(a, b)| a * b).collect(),
            Coupling::Dense(b) => (b * nalgebra::DVector::from_column_slice(y)).as_slice().to_vec(),
        }
    }
}

/// The constraint map `g`. Implementations write `g(x)` into `out` and report
/// the first row whose value is undefined.
pub trait Constraint {
    fn eval(&self, x: &[f64], out: &mut [f64]) -> Result<(), usize>;
}

impl<F: Fn(&[f64], &mut [f64]) -> Result<(), usize>> Constraint for F {
    fn eval(&self, x: &[f64], out: &mut [f64]) -> Result<(), usize> {
        self(x, out)
    }
}

/// A problem instance with `h` precomputed as `h(y) = H y + h0`.
#[derive(Clone)]
pub struct ConstrainedLs<G> {
    a: DMatrix<f64>,
    b: Coupling,
    c: Vec<f64>,
    g: G,
    gain: Vec<Vec<f64>>,
    offset: Vec<f64>,
}

impl<G: Constraint> ConstrainedLs<G> {
    pub fn new(a: DMatrix<f64>, b: Coupling, c: Vec<f64>, g: G) -> Result<Self, FixedPointError> {
        Self::build(a, b, c, g, None)
    }

    /// Like [`ConstrainedLs::new`] but `h(y)` minimises
    /// `||A x - B y - c||^2 + mu ||D x||^2`.
    pub fn with_tikhonov(a: DMatrix<f64>, b: Coupling, c: Vec<f64>, g: G, d: &DMatrix<f64>, mu: f64) -> Result<Self, FixedPointError> {
        if !(mu.is_finite() && mu >= 0.0) {
            return Err(FixedPointError::InvalidParameter(format!("mu = {mu}")));
        }
        Self::build(a, b, c, g, Some((d, mu)))
    }

    fn build(a: DMatrix<f64>, b: Coupling, c: Vec<f64>, g: G, reg: Option<(&DMatrix<f64>, f64)>) -> Result<Self, FixedPointError> {
        let m = a.nrows();
        let n = a.ncols();
        if m == 0 || n == 0 {
            return Err(FixedPointError::Dimension("A is empty".into()));
        }
        if b.rows() != m || c.len() != m {
            return Err(FixedPointError::Dimension(format!("A has {m} rows, B {} and c {}", b.rows(), c.len())));
        }
        let stacked = match reg {
            Some((d, mu)) if mu > 0.0 => {
                if d.ncols() != n {
                    return Err(FixedPointError::Dimension(format!("D has {} columns, expected {n}", d.ncols())));
                }
                let mut s = DMatrix::zeros(m + d.nrows(), n);
                s.rows_mut(0, m).copy_from(&a);
                s.rows_mut(m, d.nrows()).copy_from(&(d * mu.sqrt()));
                s
            }
            _ => a.clone(),
        };
        let pinv = pseudo_inverse(&stacked)?;
        // Only the first m columns act on the data rows; the regularizer rows have zero targets.
        let pinv = pinv.columns(0, m).into_owned();
        let gain: Vec<Vec<f64>> = (0..n)
            .map(|r| {
                let row: Vec<f64> = pinv.row(r).iter().copied().collect();
                match &b {
                    Coupling::Diagonal(d) => row.iter().zip(d).map(|(p, q)| p * q).collect(),
                    Coupling::Dense(bm) => (nalgebra::RowDVector::from_vec(row) * bm).iter().copied().collect(),
                }
            })
            .collect();
        let offset = (0..n).map(|r| pinv.row(r).iter().zip(&c).map(|(p, q)| p * q).sum()).collect();
        Ok(ConstrainedLs { a, b, c, g, gain, offset })
    }

    /// Dimension of `y`.
    pub fn y_dim(&self) -> usize {
        self.b.cols()
    }

    pub fn x_dim(&self) -> usize {
        self.a.ncols()
    }

    /// `h(y) = A^+ (B y + c)`.
    pub fn solve_h(&self, y: &[f64]) -> Result<Vec<f64>, FixedPointError> {
        if y.len() != self.y_dim() {
            return Err(FixedPointError::Dimension(format!("y has {} entries, expected {}", y.len(), self.y_dim())));
        }
        Ok(self.h(y))
    }

    fn h(&self, y: &[f64]) -> Vec<f64> {
        self.gain.iter().zip(&self.offset).map(|(g, o)| g.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() + o).collect()
    }

    pub fn g(&self, x: &[f64], out: &mut [f64]) -> Result<(), usize> {
        self.g.eval(x, out)
    }

    /// Residual `A x - B y - c`.
    pub fn residual(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        let ax = &self.a * nalgebra::DVector::from_column_slice(x);
        let by = self.b.apply(y);
        ax.iter().zip(&by).zip(&self.c).map(|((p, q), r)| p - q - r).collect()
    }

    /// `f(x, y) = ||A x - B y - c||^2`.
    pub fn objective(&self, x: &[f64], y: &[f64]) -> f64 {
        self.residual(x, y).iter().map(|r| r * r).sum()
    }

    /// `grad_x f = 2 A^T r` and `grad_y f = -2 B^T r` at `(x, y)`.
    pub fn gradients(&self, x: &[f64], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let r = nalgebra::DVector::from_vec(self.residual(x, y));
        let gx = (self.a.transpose() * &r) * 2.0;
        let gy = match &self.b {
            Coupling::Diagonal(d) => d.iter().zip(r.iter()).map(|(p, q)| -2.0 * p * q).collect(),
            Coupling::Dense(b) => (b.transpose() * &r * -2.0).as_slice().to_vec(),
        };
        (gx.as_slice().to_vec(), gy)
    }
}

impl<G> std::fmt::Debug for ConstrainedLs<G> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ConstrainedLs").field("rows", &self.a.nrows()).field("cols", &self.a.ncols()).finish()
    }
}

fn pseudo_inverse(a: &DMatrix<f64>) -> Result<DMatrix<f64>, FixedPointError> {
    let svd = a.clone().svd(true, true);
    let hi = svd.singular_values.max();
    let lo = svd.singular_values.min();
    if hi == 0.0 || lo <= RANK_TOL * hi || a.nrows() < a.ncols() {
        return Err(FixedPointError::RankDeficient { sigma_max: hi, sigma_min: lo });
    }
    let u = svd.u.expect("requested");
    let vt = svd.v_t.expect("requested");
    let inv = DMatrix::from_diagonal(&svd.singular_values.map(|s| 1.0 / s));
    Ok(vt.transpose() * inv * u.transpose())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterOptions {
    pub alpha: f64,
    pub eps: f64,
    /// Maximum number of `g o h` evaluations; `1` returns `h(y0)` unchanged.
    pub max_iters: usize,
}

impl Default for IterOptions {
    fn default() -> Self {
        IterOptions { alpha: 0.1, eps: 1e-8, max_iters: 200 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Converged,
    ConvergenceNotReached,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointResult {
    pub x_star: Vec<f64>,
    pub y_star: Vec<f64>,
    /// Damped updates applied before the returned iterate.
    pub iterations: usize,
    /// `||g(h(y_star)) - y_star||_2`.
    pub final_gap: f64,
    pub status: Status,
    /// Gap at every evaluation, in order.
    pub history: Vec<f64>,
}

impl FixedPointResult {
    pub fn converged(&self) -> bool {
        self.status == Status::Converged
    }

    /// Turns an exhausted run into [`FixedPointError::ConvergenceNotReached`].
    pub fn require_converged(self) -> Result<Self, FixedPointError> {
        match self.status {
            Status::Converged => Ok(self),
            Status::ConvergenceNotReached => {
                Err(FixedPointError::ConvergenceNotReached { iterations: self.iterations, gap: self.final_gap })
            }
        }
    }
}

/// Runs `y <- y + alpha (g(h(y)) - y)` from `y0` until the gap is at most
/// `eps`. When `max_iters` evaluations pass without convergence the iterate
/// with the smallest gap is returned with [`Status::ConvergenceNotReached`].
pub fn fixed_point_iterate<G: Constraint>(
    prob: &ConstrainedLs<G>,
    opts: IterOptions,
    y0: &[f64],
) -> Result<FixedPointResult, FixedPointError> {
    if !(opts.alpha > 0.0 && opts.alpha < 1.0) {
        return Err(FixedPointError::InvalidParameter(format!("alpha = {} not in (0, 1)", opts.alpha)));
    }
    if !(opts.eps >= 0.0) || opts.max_iters == 0 {
        return Err(FixedPointError::InvalidParameter("eps must be >= 0 and max_iters >= 1".into()));
    }
    if y0.len() != prob.y_dim() {
        return Err(FixedPointError::Dimension(format!("y0 has {} entries, expected {}", y0.len(), prob.y_dim())));
    }
    let mut y = y0.to_vec();
    let mut gy = vec![0.0; y.len()];
    let mut history = Vec::new();
    let mut best: Option<(Vec<f64>, Vec<f64>, usize, f64)> = None;
    for it in 0..opts.max_iters {
        let x = prob.h(&y);
        prob.g.eval(&x, &mut gy).map_err(|row| FixedPointError::DomainViolation { iteration: it, row })?;
        let gap = gy.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        history.push(gap);
        if gap <= opts.eps {
            return Ok(FixedPointResult { x_star: x, y_star: y, iterations: it, final_gap: gap, status: Status::Converged, history });
        }
        if best.as_ref().is_none_or(|b| gap < b.3) {
            best = Some((x, y.clone(), it, gap));
        }
        if it + 1 == opts.max_iters {
            break;
        }
        for (yi, gi) in y.iter_mut().zip(&gy) {
            *yi += opts.alpha * (gi - *yi);
        }
    }
    let (x_star, y_star, iterations, final_gap) = best.expect("at least one evaluation");
    Ok(FixedPointResult { x_star, y_star, iterations, final_gap, status: Status::ConvergenceNotReached, history })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn identity_g(x: &[f64], out: &mut [f64]) -> Result<(), usize> {
        out.copy_from_slice(x);
        Ok(())
    }

    #[test]
    fn identity_instance() {
        let p = ConstrainedLs::new(DMatrix::identity(3, 3), Coupling::Diagonal(vec![1.0; 3]), vec![0.0; 3], identity_g).unwrap();
        let y = [0.3, -0.2, 0.9];
        let h = p.solve_h(&y).unwrap();
        for (a, b) in h.iter().zip(&y) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-15);
        }
        let r = fixed_point_iterate(&p, IterOptions::default(), &y).unwrap();
        assert!(r.converged());
        assert_eq!(r.iterations, 0);
        assert!(r.final_gap < 1e-15);
    }

    #[test]
    fn zero_coupling_gives_constant() {
        let c = vec![1.5, -2.0];
        let p = ConstrainedLs::new(DMatrix::identity(2, 2), Coupling::Diagonal(vec![0.0; 2]), c.clone(), identity_g).unwrap();
        for y in [[0.0, 0.0], [5.0, -3.0]] {
            let h = p.solve_h(&y).unwrap();
            assert_abs_diff_eq!(h[0], c[0], epsilon = 1e-15);
            assert_abs_diff_eq!(h[1], c[1], epsilon = 1e-15);
        }
    }

    fn fig3() -> ConstrainedLs<impl Constraint> {
        let g = |x: &[f64], out: &mut [f64]| {
            let r = 1.0 - 0.02 * x[0] * x[0];
            if r < 0.0 {
                return Err(0);
            }
            out[0] = r.sqrt();
            Ok(())
        };
        ConstrainedLs::new(DMatrix::from_element(1, 1, 1.0), Coupling::Diagonal(vec![12.0]), vec![-6.0], g).unwrap()
    }

    #[test]
    fn scalar_crossing_point() {
        // h(y) = 12 y - 6 and y = sqrt(1 - 0.02 h^2) cross at the positive root of
        // 3.88 y^2 - 2.88 y - 0.28 = 0.
        let expect = (2.88 + (2.88f64 * 2.88 + 4.0 * 3.88 * 0.28).sqrt()) / (2.0 * 3.88);
        let r = fixed_point_iterate(&fig3(), IterOptions { alpha: 0.1, eps: 1e-12, max_iters: 2000 }, &[1.0]).unwrap();
        assert!(r.converged());
        assert_abs_diff_eq!(r.y_star[0], expect, epsilon = 1e-10);
        assert!((r.y_star[0] - 0.827).abs() < 5e-3);
    }

    #[test]
    fn scalar_gap_monotone() {
        for alpha in [0.05, 0.1, 0.3] {
            let r = fixed_point_iterate(&fig3(), IterOptions { alpha, eps: 1e-12, max_iters: 5000 }, &[1.0]).unwrap();
            assert!(r.converged());
            assert!(r.history.windows(2).all(|w| w[1] <= w[0]), "alpha {alpha}");
        }
    }

    #[test]
    fn single_evaluation_returns_h_of_start() {
        let p = fig3();
        let r = fixed_point_iterate(&p, IterOptions { alpha: 0.1, eps: 0.0, max_iters: 1 }, &[1.0]).unwrap();
        assert_eq!(r.status, Status::ConvergenceNotReached);
        assert_eq!(r.x_star, p.solve_h(&[1.0]).unwrap());
        assert!(r.clone().require_converged().is_err());
    }

    #[test]
    fn domain_violation_reported() {
        let g = |_: &[f64], _: &mut [f64]| Err(0);
        let p = ConstrainedLs::new(DMatrix::identity(1, 1), Coupling::Diagonal(vec![1.0]), vec![0.0], g).unwrap();
        let e = fixed_point_iterate(&p, IterOptions::default(), &[1.0]).unwrap_err();
        assert!(matches!(e, FixedPointError::DomainViolation { iteration: 0, row: 0 }));
    }

    #[test]
    fn rank_deficient_a() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0]);
        let e = ConstrainedLs::new(a, Coupling::Diagonal(vec![1.0; 3]), vec![0.0; 3], identity_g).unwrap_err();
        assert!(matches!(e, FixedPointError::RankDeficient { .. }));
    }

    #[test]
    fn parameter_checks() {
        let p = fig3();
        for opts in [
            IterOptions { alpha: 0.0, ..Default::default() },
            IterOptions { alpha: 1.0, ..Default::default() },
            IterOptions { max_iters: 0, ..Default::default() },
            IterOptions { eps: -1.0, ..Default::default() },
        ] {
            assert!(matches!(fixed_point_iterate(&p, opts, &[1.0]), Err(FixedPointError::InvalidParameter(_))));
        }
        assert!(matches!(p.solve_h(&[1.0, 2.0]), Err(FixedPointError::Dimension(_))));
    }

    #[test]
    fn tikhonov_zero_weight_is_plain() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.5, -1.0, 2.0, 0.3, 0.3]);
        let d = DMatrix::from_row_slice(1, 2, &[1.0, -1.0]);
        let p = ConstrainedLs::new(a.clone(), Coupling::Diagonal(vec![2.0; 3]), vec![1.0, 0.0, -1.0], identity_g).unwrap();
        let q = ConstrainedLs::with_tikhonov(a, Coupling::Diagonal(vec![2.0; 3]), vec![1.0, 0.0, -1.0], identity_g, &d, 0.0).unwrap();
        assert_eq!(p.solve_h(&[0.1, 0.2, 0.3]).unwrap(), q.solve_h(&[0.1, 0.2, 0.3]).unwrap());
    }

    #[test]
    fn tikhonov_matches_normal_equations() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.5, -1.0, 2.0, 0.3, 0.3]);
        let d = DMatrix::from_row_slice(1, 2, &[1.0, -1.0]);
        let mu = 0.4;
        let c = vec![1.0, 0.0, -1.0];
        let q = ConstrainedLs::with_tikhonov(a.clone(), Coupling::Diagonal(vec![1.0; 3]), c.clone(), identity_g, &d, mu).unwrap();
        let y = [0.5, 0.5, 0.5];
        let x = q.solve_h(&y).unwrap();
        let rhs = a.transpose() * nalgebra::DVector::from_iterator(3, y.iter().zip(&c).map(|(p, q)| p + q));
        let lhs = a.transpose() * &a + d.transpose() * &d * mu;
        let want = lhs.lu().solve(&rhs).unwrap();
        assert_abs_diff_eq!(x[0], want[0], epsilon = 1e-12);
        assert_abs_diff_eq!(x[1], want[1], epsilon = 1e-12);
    }
}
