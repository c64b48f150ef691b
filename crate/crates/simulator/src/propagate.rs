use network::{traversal_plan, FeederNetwork};
use phasor_core::Complex;

use crate::{MeasurementSet, SimError};

/// Backward-model quantities of one snapshot, indexed by node.
///
/// `delta[n]` is the phase increment `delta_parent - delta_n` of the line into
/// `n`; `j[n]` is that line's current relative to the phase of `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Backward {
    pub delta: Vec<f64>,
    pub j: Vec<Complex>,
}

/// Forward-model quantities of one snapshot on a chain, indexed by node.
///
/// `v[n]` is the RMS voltage, `delta[n]` the phase increment of the line into
/// `n`, and `j[n]` that line's current relative to the phase of the sending node.
#[derive(Debug, Clone, PartialEq)]
pub struct Forward {
    pub v: Vec<f64>,
    pub delta: Vec<f64>,
    pub j: Vec<Complex>,
}

/// Leaf-to-root recursion from RMS voltages `v` and local currents `i`
/// (both indexed by node), using the given line impedances.
///
/// At every node the line current is the local current plus the children's
/// line currents rotated by `e^{-i delta}`; the increment follows from
/// `v_parent e^{i delta} = v_n + j_n z_n`.
pub fn backward_snapshot(net: &FeederNetwork, v: &[f64], i: &[Complex], z: &[Complex]) -> Backward {
    let n = net.node_count();
    let mut delta = vec![0.0; n];
    let mut j = vec![Complex::new(0.0, 0.0); n];
    for &k in &traversal_plan(net).order {
        let mut jk = i[k];
        for &c in net.children(k) {
            jk += j[c] * Complex::from_polar(1.0, -delta[c]);
        }
        j[k] = jk;
        delta[k] = (Complex::new(v[k], 0.0) + jk * z[k]).arg();
    }
    Backward { delta, j }
}

/// [`backward_snapshot`] over every snapshot of a measurement set.
pub fn backward_propagate(net: &FeederNetwork, ms: &MeasurementSet, z: &[Complex]) -> Vec<Backward> {
    let n = net.node_count();
    (0..ms.len())
        .map(|m| {
            let v: Vec<f64> = (0..n).map(|k| ms.v[k][m]).collect();
            let i: Vec<Complex> = (0..n).map(|k| ms.local_current_at(k, m)).collect();
            backward_snapshot(net, &v, &i, z)
        })
        .collect()
}

/// Root-to-leaf recursion on a chain from the substation voltage and the
/// substation line current `j1` (phase reference: the substation).
pub fn forward_propagate(
    net: &FeederNetwork,
    v0: Complex,
    j1: Complex,
    i: &[Complex],
    z: &[Complex],
) -> Result<Forward, SimError> {
    if let Some(k) = (0..net.node_count()).find(|&k| net.children(k).len() > 1) {
        return Err(SimError::BranchingUnsupported(k));
    }
    let n = net.node_count();
    let mut v = vec![0.0; n];
    let mut delta = vec![0.0; n];
    let mut j = vec![Complex::new(0.0, 0.0); n];
    v[0] = v0.norm();
    let mut prev = 0;
    let mut current = j1;
    while let Some(&k) = net.children(prev).first() {
        j[k] = current;
        let w = Complex::new(v[prev], 0.0) - current * z[k];
        v[k] = w.norm();
        delta[k] = -w.arg();
        current = current * Complex::from_polar(1.0, delta[k]) - i[k];
        prev = k;
    }
    Ok(Forward { v, delta, j })
}
