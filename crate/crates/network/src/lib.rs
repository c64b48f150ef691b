//! Radial feeder topology, line impedances and per-node load models.

mod loads;
mod plan;
mod topology;

pub use loads::{synth_load_profiles, LoadGenConfig, LoadModel};
pub use plan::{traversal_plan, TraversalPlan};
pub use topology::{read_load_csv, write_load_csv, NodeJson, Topology};

use phasor_core::Complex;
use thiserror::Error;

/// Nominal low-voltage phase voltage used for load conversion.
pub const DEFAULT_NOMINAL_VOLTAGE: f64 = 230.0;

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("cycle detected through node {0}")]
    CycleDetected(usize),
    #[error("node {0} is not connected to the substation")]
    DisconnectedNode(usize),
    #[error("line into node {node} has non-positive resistance {r}")]
    NonPositiveResistance { node: usize, r: f64 },
    #[error("load profile of node {node} has {got} snapshots, expected {expected}")]
    ProfileLengthMismatch { node: usize, expected: usize, got: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed topology: {0}")]
    Json(#[from] serde_json::Error),
    #[error("malformed load csv: {0}")]
    Csv(#[from] csv::Error),
}

/// One node description as fed to [`build_network`].
#[derive(Debug, Clone, PartialEq)]
pub struct NodeSpec {
    pub id: usize,
    pub parent: Option<usize>,
    /// Impedance of the line from `parent` into this node; ignored for the root.
    pub z: Complex,
    pub load: Option<LoadModel>,
}

/// A validated radial feeder. Node ids are `0..=N` with node 0 the substation;
/// the line into node `n` is identified by `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeederNetwork {
    parent: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
    z: Vec<Complex>,
    loads: Vec<Option<LoadModel>>,
    nominal_voltage: f64,
    snapshots: usize,
}

/// Validates node descriptions and assembles the network.
pub fn build_network(nodes: Vec<NodeSpec>, nominal_voltage: f64) -> Result<FeederNetwork, NetworkError> {
    if !(nominal_voltage.is_finite() && nominal_voltage > 0.0) {
        return Err(NetworkError::InvalidConfig(format!("nominal voltage {nominal_voltage}")));
    }
    let n = nodes.len();
    if n == 0 {
        return Err(NetworkError::InvalidConfig("empty node list".into()));
    }
    let mut slots: Vec<Option<NodeSpec>> = vec![None; n];
    for node in nodes {
        if node.id >= n {
            return Err(NetworkError::InvalidConfig(format!("node ids must be 0..{}, found {}", n - 1, node.id)));
        }
        let id = node.id;
        if slots[id].replace(node).is_some() {
            return Err(NetworkError::InvalidConfig(format!("duplicate node id {id}")));
        }
    }
    let nodes: Vec<NodeSpec> = slots.into_iter().map(|s| s.expect("ids are a permutation of 0..n")).collect();

    let mut parent = vec![None; n];
    for node in &nodes {
        match (node.id, node.parent) {
            (id, Some(p)) if p == id => return Err(NetworkError::CycleDetected(id)),
            (0, Some(_)) => return Err(NetworkError::InvalidConfig("substation node 0 must not have a parent".into())),
            (0, None) => {}
            (id, None) => return Err(NetworkError::DisconnectedNode(id)),
            (id, Some(p)) if p >= n => return Err(NetworkError::DisconnectedNode(id)),
            (id, Some(p)) => parent[id] = Some(p),
        }
    }
    // Every parent chain must reach the root within n steps.
    for start in 1..n {
        let mut cur = start;
        let mut steps = 0;
        while let Some(p) = parent[cur] {
            cur = p;
            steps += 1;
            if steps > n {
                return Err(NetworkError::CycleDetected(start));
            }
        }
        if cur != 0 {
            return Err(NetworkError::DisconnectedNode(start));
        }
    }

    let mut snapshots = None;
    for node in &nodes {
        if node.id != 0 && !(node.z.re > 0.0 && node.z.re.is_finite() && node.z.im.is_finite()) {
            return Err(NetworkError::NonPositiveResistance { node: node.id, r: node.z.re });
        }
        if let Some(load) = &node.load {
            load.validate(node.id)?;
            match snapshots {
                None => snapshots = Some(load.len()),
                Some(m) if m != load.len() => {
                    return Err(NetworkError::ProfileLengthMismatch { node: node.id, expected: m, got: load.len() })
                }
                _ => {}
            }
        }
    }
    if nodes[0].load.is_some() {
        return Err(NetworkError::InvalidConfig("substation node 0 cannot carry a load".into()));
    }

    let mut children = vec![Vec::new(); n];
    for id in 1..n {
        children[parent[id].expect("validated")].push(id);
    }
    Ok(FeederNetwork {
        parent,
        children,
        z: nodes.iter().map(|s| if s.id == 0 { Complex::new(0.0, 0.0) } else { s.z }).collect(),
        loads: nodes.into_iter().map(|s| s.load).collect(),
        nominal_voltage,
        snapshots: snapshots.unwrap_or(0),
    })
}

impl FeederNetwork {
    /// A chain `0 - 1 - ... - n_lines` with identical lines, loads on nodes `1..=n_lines`.
    pub fn chain(z: &[Complex], loads: Vec<LoadModel>, nominal_voltage: f64) -> Result<Self, NetworkError> {
        if z.len() != loads.len() {
            return Err(NetworkError::InvalidConfig(format!("{} lines but {} loads", z.len(), loads.len())));
        }
        let parents: Vec<Option<usize>> = std::iter::once(None).chain((0..z.len()).map(Some)).collect();
        Self::from_parents(&parents, z, loads, nominal_voltage)
    }

    /// Builds a tree from a parent list (`parents[0]` must be `None`); `z[k]`
    /// and `loads[k]` belong to node `k + 1`.
    pub fn from_parents(
        parents: &[Option<usize>],
        z: &[Complex],
        loads: Vec<LoadModel>,
        nominal_voltage: f64,
    ) -> Result<Self, NetworkError> {
        let n = parents.len();
        if z.len() + 1 != n || loads.len() + 1 != n {
            return Err(NetworkError::InvalidConfig("parents, impedances and loads disagree in length".into()));
        }
        let mut specs = vec![NodeSpec { id: 0, parent: parents[0], z: Complex::new(0.0, 0.0), load: None }];
        for (k, load) in loads.into_iter().enumerate() {
            specs.push(NodeSpec { id: k + 1, parent: parents[k + 1], z: z[k], load: Some(load) });
        }
        build_network(specs, nominal_voltage)
    }

    /// Number of nodes including the substation.
    pub fn node_count(&self) -> usize {
        self.parent.len()
    }

    pub fn edge_count(&self) -> usize {
        self.parent.len() - 1
    }

    pub fn parent(&self, node: usize) -> Option<usize> {
        self.parent[node]
    }

    pub fn children(&self, node: usize) -> &[usize] {
        &self.children[node]
    }

    /// Impedance of the line into `node` (zero for the substation).
    pub fn z(&self, node: usize) -> Complex {
        self.z[node]
    }

    /// X/R ratio of the line into `node`.
    pub fn xr_ratio(&self, node: usize) -> f64 {
        self.z[node].im / self.z[node].re
    }

    pub fn load(&self, node: usize) -> Option<&LoadModel> {
        self.loads[node].as_ref()
    }

    pub fn nominal_voltage(&self) -> f64 {
        self.nominal_voltage
    }

    /// Snapshot count shared by all load profiles.
    pub fn snapshots(&self) -> usize {
        self.snapshots
    }

    pub fn is_chain(&self) -> bool {
        self.children.iter().all(|c| c.len() <= 1)
    }

    /// Edges as `(parent, child)` in child-id order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (1..self.node_count()).map(|n| (self.parent[n].expect("non-root"), n))
    }

    /// Same topology and impedances with the first `m` snapshots of every load.
    pub fn truncated(&self, m: usize) -> Result<Self, NetworkError> {
        if m > self.snapshots {
            return Err(NetworkError::InvalidConfig(format!("cannot take {m} of {} snapshots", self.snapshots)));
        }
        let mut out = self.clone();
        for l in out.loads.iter_mut().flatten() {
            *l = l.prefix(m);
        }
        out.snapshots = m;
        Ok(out)
    }
}
