use fixedpoint::{fixed_point_iterate, ConstrainedLs, Constraint, Coupling, IterOptions};
use nalgebra::DMatrix;
use phasor_core::{condition_number, lstsq_2col, CVec, Complex, TwoCol};

use crate::{AlgoConfig, IdentifyError, RegKind, Variant};

/// Data of one line: RMS voltages at both ends and the line current relative
/// to the phase of the receiving node.
#[derive(Debug, Clone, PartialEq)]
pub struct LineProblem {
    pub v_up: Vec<f64>,
    pub v_down: Vec<f64>,
    pub j: CVec,
}

impl LineProblem {
    pub fn new(v_up: Vec<f64>, v_down: Vec<f64>, j: CVec) -> Result<Self, IdentifyError> {
        let p = LineProblem { v_up, v_down, j };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), IdentifyError> {
        let m = self.v_up.len();
        if self.v_down.len() != m || self.j.len() != m {
            return Err(IdentifyError::InconsistentSnapshotLengths(format!(
                "v_up {m}, v_down {}, j {}",
                self.v_down.len(),
                self.j.len()
            )));
        }
        if m < 2 {
            return Err(IdentifyError::InvalidProblem(format!("need at least 2 snapshots, got {m}")));
        }
        if self.v_up.iter().chain(&self.v_down).any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(IdentifyError::InvalidProblem("voltages must be positive".into()));
        }
        if self.j.iter().any(|c| !c.is_finite()) {
            return Err(IdentifyError::InvalidProblem("non-finite current".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.v_up.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v_up.is_empty()
    }

    /// `v_up - v_down`.
    pub fn dv(&self) -> Vec<f64> {
        self.v_up.iter().zip(&self.v_down).map(|(a, b)| a - b).collect()
    }

    /// `J Q2 z = Im(j z)`.
    pub fn q2_image(&self, z: Complex) -> Vec<f64> {
        self.j.iter().map(|c| (c * z).im).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineEstimate {
    pub z_hat: Complex,
    /// Estimated `cos(delta)` per snapshot; all ones for the linear variants.
    pub gamma: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Final fixed-point gap (zero for the linear variants).
    pub gap: f64,
    pub cost_full: f64,
    pub cond_j: f64,
}

impl LineEstimate {
    pub fn gamma_min(&self) -> f64 {
        self.gamma.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// The line reduced to the single unknown `r` with `z = r (1 + i k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct XrReduced {
    pub k: f64,
    /// `J Q1 [1, k]^T = Re(j) - k Im(j)`.
    pub col: Vec<f64>,
    /// `J Q2 [1, k]^T = k Re(j) + Im(j)`.
    pub q2_col: Vec<f64>,
}

pub fn apply_xr(p: &LineProblem, k: f64) -> Result<XrReduced, IdentifyError> {
    if !(k.is_finite() && k > 0.0) {
        return Err(IdentifyError::InvalidConfig(format!("xr_ratio must be positive, got {k}")));
    }
    let col: Vec<f64> = p.j.iter().map(|c| c.re - k * c.im).collect();
    let q2_col = p.j.iter().map(|c| k * c.re + c.im).collect();
    let norm = col.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 || norm <= phasor_core::RANK_TOL * p.j.norm() {
        return Err(IdentifyError::ZeroColumn);
    }
    Ok(XrReduced { k, col, q2_col })
}

fn xr_impedance(r: f64, k: f64) -> Complex {
    Complex::new(r, r * k)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn cond_for(p: &LineProblem, cfg: &AlgoConfig) -> f64 {
    if cfg.xr_ratio.is_some() {
        1.0
    } else {
        condition_number(&TwoCol::j(&p.j))
    }
}

/// Prop. 5's cost `N(z, gamma)`, with the sine of the phase increment signed
/// like `J Q2 z`:
/// `||V gamma - v - J Q1 z||^2 + ||V s sqrt(1 - gamma^2) - J Q2 z||^2`, `s = sign(J Q2 z)`.
pub fn cost_full(p: &LineProblem, z: Complex, gamma: &[f64]) -> f64 {
    cost_impl(p, z, gamma, true)
}

/// The same cost with the unsigned root `sqrt(1 - gamma^2)`.
pub fn cost_full_unsigned(p: &LineProblem, z: Complex, gamma: &[f64]) -> f64 {
    cost_impl(p, z, gamma, false)
}

fn cost_impl(p: &LineProblem, z: Complex, gamma: &[f64], signed: bool) -> f64 {
    let mut total = 0.0;
    for m in 0..p.len() {
        let jz = p.j[m] * z;
        let g = gamma[m];
        let r1 = p.v_up[m] * g - p.v_down[m] - jz.re;
        let root = (1.0 - g * g).max(0.0).sqrt();
        let sign = if signed { signum0(jz.im) } else { 1.0 };
        let r2 = p.v_up[m] * sign * root - jz.im;
        total += r1 * r1 + r2 * r2;
    }
    total
}

fn signum0(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `mu ||D z||^2` for the configured regularizer (zero without one).
pub fn regularization_penalty(p: &LineProblem, z: Complex, cfg: &AlgoConfig) -> f64 {
    match cfg.reg {
        None => 0.0,
        Some(r) => {
            let d = match r.kind {
                RegKind::Q2Image => p.q2_image(z).iter().map(|x| x * x).sum(),
                RegKind::XrRow(k) => (k * z.re - z.im).powi(2),
            };
            r.mu * d
        }
    }
}

/// Linear estimator: minimises `||dv - J Q1 z||^2 + ||J Q2 z||^2` (plus the
/// optional penalty).
pub fn lbci_line(p: &LineProblem, cfg: &AlgoConfig) -> Result<LineEstimate, IdentifyError> {
    p.validate()?;
    cfg.validate()?;
    let dv = p.dv();
    let z = match cfg.xr_ratio {
        Some(k) => {
            let red = apply_xr(p, k)?;
            let mut den = dot(&red.col, &red.col) + dot(&red.q2_col, &red.q2_col);
            if let Some(r) = cfg.reg {
                den += r.mu
                    * match r.kind {
                        RegKind::Q2Image => dot(&red.q2_col, &red.q2_col),
                        RegKind::XrRow(kr) => (kr - k).powi(2),
                    };
            }
            xr_impedance(dot(&red.col, &dv) / den, k)
        }
        None => {
            let mut a = TwoCol::jq1(&p.j).vstack(&TwoCol::jq2(&p.j));
            if let Some(r) = cfg.reg.filter(|r| r.mu > 0.0) {
                let d = match r.kind {
                    RegKind::Q2Image => TwoCol::jq2(&p.j),
                    RegKind::XrRow(k) => TwoCol::row(k, -1.0),
                };
                a = a.vstack(&d.scaled(r.mu.sqrt()));
            }
            let mut rhs = dv;
            rhs.resize(a.rows(), 0.0);
            let [re, im] = lstsq_2col(&a, &rhs)?;
            Complex::new(re, im)
        }
    };
    let gamma = vec![1.0; p.len()];
    Ok(LineEstimate { z_hat: z, cost_full: cost_full(p, z, &gamma), gamma, iterations: 0, converged: true, gap: 0.0, cond_j: cond_for(p, cfg) })
}

/// `g(x) = sqrt(1 - (S x / v)^2)` with `S` the `J Q2` image rows.
struct CosConstraint {
    s: DMatrix<f64>,
    v: Vec<f64>,
    clamp: bool,
}

impl Constraint for CosConstraint {
    fn eval(&self, x: &[f64], out: &mut [f64]) -> Result<(), usize> {
        let n = x.len();
        for (m, o) in out.iter_mut().enumerate() {
            let mut sx = 0.0;
            for c in 0..n {
                sx += self.s[(m, c)] * x[c];
            }
            let t = sx / self.v[m];
            let mut r = 1.0 - t * t;
            if r < 0.0 {
                if !self.clamp {
                    return Err(m);
                }
                r = 0.0;
            }
            *o = r.sqrt();
        }
        Ok(())
    }
}

/// The constrained problem in BCI form: `A = J Q1`, `B = diag(v_up)`,
/// `c = -v_down`, reduced to one column when the X/R ratio is known.
fn bci_problem(p: &LineProblem, cfg: &AlgoConfig) -> Result<ConstrainedLs<CosConstraint>, IdentifyError> {
    let m = p.len();
    let (a, s) = match cfg.xr_ratio {
        Some(k) => {
            let red = apply_xr(p, k)?;
            (DMatrix::from_vec(m, 1, red.col), DMatrix::from_vec(m, 1, red.q2_col))
        }
        None => {
            let q1 = TwoCol::jq1(&p.j);
            let q2 = TwoCol::jq2(&p.j);
            (
                DMatrix::from_fn(m, 2, |r, c| if c == 0 { q1.c0[r] } else { q1.c1[r] }),
                DMatrix::from_fn(m, 2, |r, c| if c == 0 { q2.c0[r] } else { q2.c1[r] }),
            )
        }
    };
    let b = Coupling::Diagonal(p.v_up.clone());
    let c: Vec<f64> = p.v_down.iter().map(|v| -v).collect();
    let reg_d = cfg.reg.filter(|r| r.mu > 0.0).map(|r| {
        let d = match (r.kind, cfg.xr_ratio) {
            (RegKind::Q2Image, _) => s.clone(),
            (RegKind::XrRow(kr), None) => DMatrix::from_row_slice(1, 2, &[kr, -1.0]),
            (RegKind::XrRow(kr), Some(k)) => DMatrix::from_element(1, 1, kr - k),
        };
        (d, r.mu)
    });
    let g = CosConstraint { s, v: p.v_up.clone(), clamp: cfg.clamp_domain };
    Ok(match reg_d {
        Some((d, mu)) => ConstrainedLs::with_tikhonov(a, b, c, g, &d, mu)?,
        None => ConstrainedLs::new(a, b, c, g)?,
    })
}

fn to_impedance(x: &[f64], cfg: &AlgoConfig) -> Complex {
    match cfg.xr_ratio {
        Some(k) => xr_impedance(x[0], k),
        None => Complex::new(x[0], x[1]),
    }
}

/// Plain least squares on `||dv - J Q1 z||^2`, i.e. BCI's `h(1)`.
pub fn lbci_old_line(p: &LineProblem, cfg: &AlgoConfig) -> Result<LineEstimate, IdentifyError> {
    p.validate()?;
    cfg.validate()?;
    let prob = bci_problem(p, cfg)?;
    let gamma = vec![1.0; p.len()];
    let z = to_impedance(&prob.solve_h(&gamma)?, cfg);
    Ok(LineEstimate { z_hat: z, cost_full: cost_full(p, z, &gamma), gamma, iterations: 0, converged: true, gap: 0.0, cond_j: cond_for(p, cfg) })
}

/// Damped fixed-point iteration on `gamma = cos(delta)` from `gamma = 1`.
pub fn bci_line(p: &LineProblem, cfg: &AlgoConfig) -> Result<LineEstimate, IdentifyError> {
    p.validate()?;
    cfg.validate()?;
    let prob = bci_problem(p, cfg)?;
    let opts = IterOptions { alpha: cfg.alpha, eps: cfg.eps, max_iters: cfg.max_iters };
    let mut res = fixed_point_iterate(&prob, opts, &vec![1.0; p.len()])?;
    if cfg.require_convergence {
        res = res.require_converged()?;
    }
    let z = to_impedance(&res.x_star, cfg);
    let cost = cost_full(p, z, &res.y_star);
    Ok(LineEstimate {
        z_hat: z,
        converged: res.converged(),
        gap: res.final_gap,
        iterations: res.iterations,
        gamma: res.y_star,
        cost_full: cost,
        cond_j: cond_for(p, cfg),
    })
}

pub fn estimate_line(p: &LineProblem, cfg: &AlgoConfig) -> Result<LineEstimate, IdentifyError> {
    match cfg.variant {
        Variant::Lbci => lbci_line(p, cfg),
        Variant::LbciOld => lbci_old_line(p, cfg),
        Variant::Bci => bci_line(p, cfg),
    }
}

/// Phase increments of the line: `J Q2 z / v_up` for the linear variants and
/// `sign(J Q2 z) acos(gamma)` for BCI.
pub fn phase_increments(est: &LineEstimate, p: &LineProblem, variant: Variant) -> Vec<f64> {
    let s = p.q2_image(est.z_hat);
    match variant {
        Variant::Lbci | Variant::LbciOld => s.iter().zip(&p.v_up).map(|(a, v)| a / v).collect(),
        Variant::Bci => s.iter().zip(&est.gamma).map(|(a, g)| signum0(*a) * g.clamp(0.0, 1.0).acos()).collect(),
    }
}
