use network::{traversal_plan, FeederNetwork};
use phasor_core::{CVec, Complex};
use simulator::MeasurementSet;

use crate::{estimate_line, phase_increments, AlgoConfig, IdentifyError, LineEstimate, LineProblem, Variant};

/// A processed line `(parent, node)` as seen from the parent when merging.
#[derive(Debug, Clone)]
pub struct ChildLine {
    pub node: usize,
    pub problem: LineProblem,
    pub estimate: LineEstimate,
    /// Phase increment of the line per snapshot.
    pub delta: Vec<f64>,
    /// Phase offset of `problem.j` relative to the child's own voltage. Zero
    /// for BCI; for the linear variants the increments neglected below.
    pub frame: Vec<f64>,
}

impl ChildLine {
    pub fn new(node: usize, problem: LineProblem, estimate: LineEstimate, variant: Variant, frame: Vec<f64>) -> Self {
        let delta = phase_increments(&estimate, &problem, variant);
        ChildLine { node, problem, estimate, delta, frame }
    }

    fn mean_current(&self) -> f64 {
        self.problem.j.iter().map(|c| c.norm()).sum::<f64>() / self.problem.len() as f64
    }
}

#[derive(Debug, Clone)]
pub struct LineResult {
    pub from: usize,
    pub to: usize,
    pub estimate: LineEstimate,
    pub delta: Vec<f64>,
    /// Line current used for the estimate, relative to the `to` node's phase.
    pub current: CVec,
}

#[derive(Debug, Clone)]
pub struct NetworkEstimate {
    pub variant: Variant,
    /// In processing order (leaf to root).
    pub lines: Vec<LineResult>,
}

impl NetworkEstimate {
    pub fn line(&self, to: usize) -> Option<&LineResult> {
        self.lines.iter().find(|l| l.to == to)
    }

    pub fn impedances(&self) -> Vec<(usize, usize, Complex)> {
        self.lines.iter().map(|l| (l.from, l.to, l.estimate.z_hat)).collect()
    }
}

/// Current a single child line contributes to the parent's outgoing line
/// current: `j` itself for the linear variants, the magnitude identity
/// `j v_down / v_up + conj(z) |j|^2 / v_up` for BCI.
pub fn chain_contribution(variant: Variant, child: &ChildLine) -> CVec {
    let p = &child.problem;
    match variant {
        Variant::Lbci | Variant::LbciOld => p.j.clone(),
        Variant::Bci => {
            let zc = child.estimate.z_hat.conj();
            (0..p.len()).map(|m| (p.j[m] * p.v_down[m] + zc * p.j[m].norm_sqr()) / p.v_up[m]).collect()
        }
    }
}

/// Outgoing line current of a node from its children's lines and its local
/// current, with the phase frame that current carries. At branch nodes BCI
/// rotates each child by `e^{-i Delta}` rebuilt from `gamma` and the sign of
/// the increment; the linear variants align every child to the branch with
/// the largest mean current using the accumulated increments.
pub fn merge_at_node(variant: Variant, children: &[ChildLine], i_local: &CVec) -> Result<(CVec, Vec<f64>), IdentifyError> {
    let m = i_local.len();
    if let Some(c) = children.iter().find(|c| c.problem.len() != m || c.frame.len() != m) {
        return Err(IdentifyError::InconsistentSnapshotLengths(format!(
            "child {} has {} snapshots, node has {m}",
            c.node,
            c.problem.len()
        )));
    }
    let mut j = i_local.clone();
    let linear = variant != Variant::Bci;
    let frame = match children {
        [] => vec![0.0; m],
        [c] => {
            for (acc, x) in j.iter_mut().zip(chain_contribution(variant, c).iter()) {
                *acc += x;
            }
            if linear {
                c.frame.iter().zip(&c.delta).map(|(r, d)| r + d).collect()
            } else {
                vec![0.0; m]
            }
        }
        _ if linear => {
            let phase = |c: &ChildLine| -> Vec<f64> { c.frame.iter().zip(&c.delta).map(|(r, d)| r + d).collect() };
            let reference = children
                .iter()
                .fold(None::<&ChildLine>, |best, c| match best {
                    Some(b) if b.mean_current() > c.mean_current() => Some(b),
                    Some(b) if b.mean_current() == c.mean_current() && b.node < c.node => Some(b),
                    _ => Some(c),
                })
                .expect("non-empty");
            let phi_ref = phase(reference);
            for c in children {
                let phi = phase(c);
                for k in 0..m {
                    j[k] += c.problem.j[k] * Complex::from_polar(1.0, phi_ref[k] - phi[k]);
                }
            }
            phi_ref
        }
        _ => {
            for c in children {
                let s = c.problem.q2_image(c.estimate.z_hat);
                for k in 0..m {
                    let g = c.estimate.gamma[k].clamp(0.0, 1.0);
                    let sign = if s[k] > 0.0 { 1.0 } else if s[k] < 0.0 { -1.0 } else { 0.0 };
                    j[k] += c.problem.j[k] * Complex::new(g, -sign * (1.0 - g * g).sqrt());
                }
            }
            vec![0.0; m]
        }
    };
    Ok((j, frame))
}

fn line_err(from: usize, to: usize) -> impl FnOnce(IdentifyError) -> IdentifyError {
    move |e| IdentifyError::Line { from, to, source: Box::new(e) }
}

fn check_measurements(ms: &MeasurementSet) -> Result<(), IdentifyError> {
    ms.validate().map_err(|e| IdentifyError::InconsistentSnapshotLengths(e.to_string()))?;
    if ms.len() < 2 {
        return Err(IdentifyError::InvalidProblem(format!("need at least 2 snapshots, got {}", ms.len())));
    }
    Ok(())
}

/// Chain feeder `0 - 1 - ... - N` processed from line `N` to line `1`.
pub fn identify_chain(ms: &MeasurementSet, cfg: &AlgoConfig) -> Result<NetworkEstimate, IdentifyError> {
    check_measurements(ms)?;
    cfg.validate()?;
    let n = ms.node_count();
    if n < 2 {
        return Err(IdentifyError::Topology("chain needs at least one line".into()));
    }
    let mut lines = Vec::with_capacity(n - 1);
    let mut below: Option<ChildLine> = None;
    for k in (1..n).rev() {
        let i_local = ms.local_current(k);
        let (j, frame) = merge_at_node(cfg.variant, below.as_slice(), &i_local).map_err(line_err(k - 1, k))?;
        let line = solve_line(ms, cfg, k - 1, k, j, frame)?;
        lines.push(result_of(k - 1, &line));
        below = Some(line);
    }
    Ok(NetworkEstimate { variant: cfg.variant, lines })
}

fn solve_line(ms: &MeasurementSet, cfg: &AlgoConfig, from: usize, to: usize, j: CVec, frame: Vec<f64>) -> Result<ChildLine, IdentifyError> {
    let problem = LineProblem::new(ms.v[from].clone(), ms.v[to].clone(), j).map_err(line_err(from, to))?;
    let estimate = estimate_line(&problem, cfg).map_err(line_err(from, to))?;
    Ok(ChildLine::new(to, problem, estimate, cfg.variant, frame))
}

fn result_of(from: usize, c: &ChildLine) -> LineResult {
    LineResult { from, to: c.node, estimate: c.estimate.clone(), delta: c.delta.clone(), current: c.problem.j.clone() }
}

pub fn identify_tree(ms: &MeasurementSet, net: &FeederNetwork, cfg: &AlgoConfig) -> Result<NetworkEstimate, IdentifyError> {
    identify_tree_with(ms, net, &|_| *cfg)
}

/// Tree identification with a configuration per line, keyed by the line's
/// child node. All lines must use the same variant.
pub fn identify_tree_with(
    ms: &MeasurementSet,
    net: &FeederNetwork,
    cfg_for: &dyn Fn(usize) -> AlgoConfig,
) -> Result<NetworkEstimate, IdentifyError> {
    check_measurements(ms)?;
    if ms.node_count() != net.node_count() {
        return Err(IdentifyError::Topology(format!(
            "measurements cover {} nodes, network has {}",
            ms.node_count(),
            net.node_count()
        )));
    }
    if net.edge_count() == 0 {
        return Err(IdentifyError::Topology("network has no lines".into()));
    }
    let variant = cfg_for(1).variant;
    for k in 1..net.node_count() {
        let cfg = cfg_for(k);
        if cfg.variant != variant {
            return Err(IdentifyError::InvalidConfig(format!(
                "mixed variants: line to {k} uses {}, line to 1 uses {}",
                cfg.variant.as_str(),
                variant.as_str()
            )));
        }
        cfg.validate().map_err(line_err(net.parent(k).expect("non-root"), k))?;
    }
    let plan = traversal_plan(net);
    let mut done: Vec<Option<ChildLine>> = vec![None; net.node_count()];
    let mut lines = Vec::with_capacity(net.edge_count());
    for (p, k) in plan.edges(net) {
        let children: Vec<ChildLine> = net.children(k).iter().map(|&c| done[c].take().expect("plan order")).collect();
        let (j, frame) = merge_at_node(variant, &children, &ms.local_current(k)).map_err(line_err(p, k))?;
        let line = solve_line(ms, &cfg_for(k), p, k, j, frame)?;
        lines.push(result_of(p, &line));
        done[k] = Some(line);
    }
    Ok(NetworkEstimate { variant, lines })
}

#[cfg(test)]
mod tests {
    use super::*;
    use network::LoadModel;
    use simulator::{measure, simulate};

    fn fig2(m: usize) -> FeederNetwork {
        let loads = (0..3)
            .map(|k| {
                let p = (0..m).map(|t| 400.0 + 300.0 * (k + 1) as f64 * ((t * (3 + k)) % 17) as f64 / 17.0).collect();
                let pf = (0..m).map(|t| 0.9 + 0.1 * ((t * 7 + k) % 10) as f64 / 10.0).collect();
                let lead = (0..m).map(|t| (t + k) % 4 == 0).collect();
                LoadModel::new(p, pf, lead).unwrap()
            })
            .collect();
        let z = [Complex::new(0.2, 0.14), Complex::new(0.1, 0.07), Complex::new(0.16, 0.112)];
        FeederNetwork::from_parents(&[None, Some(0), Some(1), Some(1)], &z, loads, 230.0).unwrap()
    }

    #[test]
    fn leaf_merge_is_local_current() {
        let i = CVec(vec![Complex::new(1.0, 0.5); 3]);
        for v in [Variant::Lbci, Variant::Bci] {
            let (j, frame) = merge_at_node(v, &[], &i).unwrap();
            assert_eq!(j, i);
            assert_eq!(frame, vec![0.0; 3]);
        }
    }

    #[test]
    fn tree_matches_truth_noiseless() {
        let net = fig2(60);
        let snaps = simulate(&net).unwrap();
        let ms = measure(&net, &snaps);
        let cfg = AlgoConfig::default().with_iters(3000, 1e-14);
        let est = identify_tree(&ms, &net, &cfg).unwrap();
        assert_eq!(est.lines.len(), 3);
        assert_eq!(est.lines.last().unwrap().to, 1);
        for l in &est.lines {
            let z = net.z(l.to);
            assert!((l.estimate.z_hat - z).norm() / z.norm() < 1e-5, "line {}: {}", l.to, l.estimate.z_hat);
        }
        let trunk = &est.line(1).unwrap().current;
        for (m, s) in snaps.iter().enumerate() {
            let truth = s.j[1] * Complex::from_polar(1.0, -s.v[1].arg());
            assert!((trunk[m] - truth).norm() / truth.norm() < 1e-6);
        }
    }

    #[test]
    fn mixed_variants_rejected() {
        let net = fig2(5);
        let ms = measure(&net, &simulate(&net).unwrap());
        let r = identify_tree_with(&ms, &net, &|k| AlgoConfig::new(if k == 2 { Variant::Lbci } else { Variant::Bci }));
        assert!(matches!(r, Err(IdentifyError::InvalidConfig(_))));
    }

    #[test]
    fn line_errors_carry_indices() {
        let net = fig2(5);
        let mut ms = measure(&net, &simulate(&net).unwrap());
        // Constant current on a leaf makes its line rank deficient.
        ms.i_mag[3] = vec![4.0; 5];
        ms.theta[3] = vec![0.1; 5];
        let e = identify_tree(&ms, &net, &AlgoConfig::new(Variant::LbciOld)).unwrap_err();
        assert!(matches!(e, IdentifyError::Line { from: 1, to: 3, .. }), "{e}");
        assert!(e.is_numerical());
    }

    #[test]
    fn snapshot_mismatch() {
        let net = fig2(5);
        let mut ms = measure(&net, &simulate(&net).unwrap());
        ms.v[2].pop();
        assert!(matches!(identify_tree(&ms, &net, &AlgoConfig::default()), Err(IdentifyError::InconsistentSnapshotLengths(_))));
        assert!(matches!(identify_chain(&ms, &AlgoConfig::default()), Err(IdentifyError::InconsistentSnapshotLengths(_))));
    }
}
