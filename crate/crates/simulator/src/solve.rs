use network::{traversal_plan, FeederNetwork};
use phasor_core::Complex;

use crate::SimError;

/// Exact phasor state of one snapshot, indexed by node id.
///
/// `v[n]` and `i[n]` are global voltage and consumed current; `j[n]` is the
/// current on the line from `parent(n)` into `n` (`j[0]` is zero).
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub v: Vec<Complex>,
    pub i: Vec<Complex>,
    pub j: Vec<Complex>,
}

/// Solves the nodal equations `Y v = b` of snapshot `m`.
///
/// The substation is a Dirichlet node at nominal voltage and angle 0. Nodes
/// are eliminated leaf-first, which on a tree-structured admittance matrix is
/// Gaussian elimination without fill-in.
pub fn solve_snapshot(net: &FeederNetwork, m: usize) -> Result<Snapshot, SimError> {
    if m >= net.snapshots() {
        return Err(SimError::SnapshotOutOfRange { m, len: net.snapshots() });
    }
    let n = net.node_count();
    let v0 = Complex::new(net.nominal_voltage(), 0.0);
    let y_line: Vec<Complex> = (0..n).map(|k| if k == 0 { Complex::new(0.0, 0.0) } else { net.z(k).inv() }).collect();
    let y_load: Vec<Complex> = (0..n)
        .map(|k| net.load(k).map_or(Complex::new(0.0, 0.0), |l| l.impedance(m, net.nominal_voltage()).inv()))
        .collect();

    let mut diag = vec![Complex::new(0.0, 0.0); n];
    let mut rhs = vec![Complex::new(0.0, 0.0); n];
    for k in 1..n {
        diag[k] += y_load[k] + y_line[k];
        for &c in net.children(k) {
            diag[k] += y_line[c];
        }
        if net.parent(k) == Some(0) {
            rhs[k] += y_line[k] * v0;
        }
    }
    let plan = traversal_plan(net);
    for &k in &plan.order {
        let d = diag[k];
        if d.norm() == 0.0 || !d.is_finite() {
            return Err(SimError::SingularSystem { node: k, snapshot: m });
        }
        let p = net.parent(k).expect("non-root");
        if p != 0 {
            let y = y_line[k];
            diag[p] -= y * y / d;
            let carried = y * rhs[k] / d;
            rhs[p] += carried;
        }
    }
    let mut v = vec![Complex::new(0.0, 0.0); n];
    v[0] = v0;
    for &k in plan.order.iter().rev() {
        let p = net.parent(k).expect("non-root");
        let coupling = if p == 0 { Complex::new(0.0, 0.0) } else { y_line[k] * v[p] };
        v[k] = (rhs[k] + coupling) / diag[k];
    }
    let i = (0..n).map(|k| v[k] * y_load[k]).collect();
    let j = (0..n)
        .map(|k| net.parent(k).map_or(Complex::new(0.0, 0.0), |p| (v[p] - v[k]) * y_line[k]))
        .collect();
    Ok(Snapshot { v, i, j })
}

/// All snapshots of the network's load profiles.
pub fn simulate(net: &FeederNetwork) -> Result<Vec<Snapshot>, SimError> {
    (0..net.snapshots()).map(|m| solve_snapshot(net, m)).collect()
}

/// Worst relative KCL residual (scaled by the largest current) and worst
/// relative KVL residual (scaled by the largest voltage).
pub fn kcl_kvl_residuals(net: &FeederNetwork, s: &Snapshot) -> (f64, f64) {
    let i_scale = s.i.iter().chain(&s.j).map(|c| c.norm()).fold(0.0, f64::max);
    let v_scale = s.v.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let mut kcl: f64 = 0.0;
    let mut kvl: f64 = 0.0;
    for k in 1..net.node_count() {
        let out: Complex = net.children(k).iter().map(|&c| s.j[c]).sum();
        kcl = kcl.max((s.j[k] - s.i[k] - out).norm());
        let p = net.parent(k).expect("non-root");
        kvl = kvl.max((s.v[p] - s.v[k] - s.j[k] * net.z(k)).norm());
    }
    (if i_scale > 0.0 { kcl / i_scale } else { kcl }, if v_scale > 0.0 { kvl / v_scale } else { kvl })
}

/// Evaluates both lines of the power-flow identity and returns the worst
/// relative residual. Line powers are receiving-end, `S = conj(j) v_l`.
pub fn power_flow_check(net: &FeederNetwork, s: &Snapshot) -> f64 {
    let mut worst: f64 = 0.0;
    for l in 1..net.node_count() {
        let n = net.parent(l).expect("non-root");
        let z = net.z(l);
        let sl = s.j[l].conj() * s.v[l];
        let lhs = s.v[n].norm_sqr();
        let rhs = s.v[l].norm_sqr() + (sl * z.conj() + sl.conj() * z).re + (s.j[l] * z).norm_sqr();
        worst = worst.max(rel(lhs - rhs, lhs.max(rhs)));
    }
    for n in 1..net.node_count() {
        let incoming = s.j[n].conj() * s.v[n];
        let mut scale = incoming.norm();
        let mut bal = incoming;
        for &l in net.children(n) {
            let sent = s.j[l].conj() * s.v[l] + s.j[l].norm_sqr() * net.z(l);
            scale = scale.max(sent.norm());
            bal -= sent;
        }
        let local = s.i[n].conj() * s.v[n];
        scale = scale.max(local.norm());
        bal -= local;
        worst = worst.max(rel(bal.norm(), scale));
    }
    worst
}

fn rel(r: f64, scale: f64) -> f64 {
    if scale > 0.0 {
        r.abs() / scale
    } else {
        r.abs()
    }
}
