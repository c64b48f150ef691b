use std::collections::BTreeMap;
use std::fs::File;
use std::path::Path;

use phasor_core::Complex;
use serde::{Deserialize, Serialize};

use crate::{build_network, synth_load_profiles, FeederNetwork, LoadGenConfig, LoadModel, NetworkError, NodeSpec};

/// On-disk topology description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub nodes: Vec<NodeJson>,
    #[serde(default = "default_vnom")]
    pub nominal_voltage: f64,
    pub snapshots: usize,
}

fn default_vnom() -> f64 {
    crate::DEFAULT_NOMINAL_VOLTAGE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeJson {
    pub id: usize,
    pub parent: Option<usize>,
    #[serde(default)]
    pub z_re: f64,
    #[serde(default)]
    pub z_im: f64,
    /// Load CSV path, relative to the topology file.
    #[serde(default)]
    pub load_csv: Option<String>,
    /// Inline profile, used when no CSV is given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub load: Option<LoadModel>,
}

#[derive(Debug, Deserialize, Serialize)]
struct LoadRow {
    snapshot: usize,
    node: usize,
    active_power_w: f64,
    power_factor: f64,
}

fn io_err(path: &Path, source: std::io::Error) -> NetworkError {
    NetworkError::Io { path: path.display().to_string(), source }
}

impl Topology {
    pub fn read(path: &Path) -> Result<Self, NetworkError> {
        let f = File::open(path).map_err(|e| io_err(path, e))?;
        Ok(serde_json::from_reader(std::io::BufReader::new(f))?)
    }

    pub fn write(&self, path: &Path) -> Result<(), NetworkError> {
        let s = serde_json::to_string_pretty(self)?;
        std::fs::write(path, s).map_err(|e| io_err(path, e))
    }

    /// Description of an existing network without load data, so that loads are
    /// synthesized when it is read back.
    pub fn skeleton(net: &FeederNetwork, snapshots: usize) -> Self {
        let nodes = (0..net.node_count())
            .map(|n| NodeJson {
                id: n,
                parent: net.parent(n),
                z_re: net.z(n).re,
                z_im: net.z(n).im,
                load_csv: None,
                load: None,
            })
            .collect();
        Topology { nodes, nominal_voltage: net.nominal_voltage(), snapshots }
    }

    /// Resolves loads and validates the network.
    ///
    /// Non-root nodes without CSV or inline data receive the synthetic profile
    /// of stream `id - 1` from `synth`; without `synth` they carry no load.
    /// `snapshots` overrides the file's count; longer profiles are truncated.
    pub fn to_network(
        &self,
        base_dir: &Path,
        snapshots: Option<usize>,
        synth: Option<(&LoadGenConfig, u64)>,
    ) -> Result<FeederNetwork, NetworkError> {
        let m = snapshots.unwrap_or(self.snapshots);
        let n_nodes = self.nodes.len();
        let synthetic = match synth {
            Some((cfg, seed)) if n_nodes > 1 => Some(synth_load_profiles(cfg, n_nodes - 1, m, seed)?),
            _ => None,
        };
        let mut csv_cache: BTreeMap<String, BTreeMap<usize, LoadModel>> = BTreeMap::new();
        let mut specs = Vec::with_capacity(n_nodes);
        for node in &self.nodes {
            let load = if let Some(rel) = &node.load_csv {
                if !csv_cache.contains_key(rel) {
                    csv_cache.insert(rel.clone(), read_load_csv(&base_dir.join(rel))?);
                }
                let l = csv_cache[rel]
                    .get(&node.id)
                    .ok_or_else(|| NetworkError::InvalidConfig(format!("{rel} has no rows for node {}", node.id)))?;
                Some(take(l, m, node.id)?)
            } else if let Some(l) = &node.load {
                Some(take(l, m, node.id)?)
            } else if node.id == 0 || node.parent.is_none() {
                None
            } else {
                synthetic.as_ref().and_then(|s| s.get(node.id - 1)).cloned()
            };
            specs.push(NodeSpec { id: node.id, parent: node.parent, z: Complex::new(node.z_re, node.z_im), load });
        }
        build_network(specs, self.nominal_voltage)
    }
}

fn take(l: &LoadModel, m: usize, node: usize) -> Result<LoadModel, NetworkError> {
    if l.len() < m {
        return Err(NetworkError::ProfileLengthMismatch { node, expected: m, got: l.len() });
    }
    Ok(l.prefix(m))
}

/// Reads `snapshot,node,active_power_w,power_factor` rows; a negative power
/// factor marks a leading snapshot.
pub fn read_load_csv(path: &Path) -> Result<BTreeMap<usize, LoadModel>, NetworkError> {
    let f = File::open(path).map_err(|e| io_err(path, e))?;
    let mut rows: BTreeMap<usize, BTreeMap<usize, (f64, f64)>> = BTreeMap::new();
    for row in csv::Reader::from_reader(f).deserialize() {
        let r: LoadRow = row?;
        if rows.entry(r.node).or_default().insert(r.snapshot, (r.active_power_w, r.power_factor)).is_some() {
            return Err(NetworkError::InvalidConfig(format!("duplicate row for node {} snapshot {}", r.node, r.snapshot)));
        }
    }
    let mut out = BTreeMap::new();
    for (node, snaps) in rows {
        let m = snaps.len();
        if snaps.keys().next_back() != Some(&(m - 1)) {
            return Err(NetworkError::InvalidConfig(format!("node {node}: snapshots are not contiguous from 0")));
        }
        let p_w = snaps.values().map(|v| v.0).collect();
        let pf = snaps.values().map(|v| v.1.abs()).collect();
        let leading = snaps.values().map(|v| v.1 < 0.0).collect();
        let l = LoadModel { p_w, pf, leading };
        l.validate(node)?;
        out.insert(node, l);
    }
    Ok(out)
}

pub fn write_load_csv(path: &Path, loads: &[(usize, &LoadModel)]) -> Result<(), NetworkError> {
    let f = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = csv::Writer::from_writer(f);
    for &(node, l) in loads {
        for m in 0..l.len() {
            let pf = if l.leading[m] { -l.pf[m] } else { l.pf[m] };
            w.serialize(LoadRow { snapshot: m, node, active_power_w: l.p_w[m], power_factor: pf })?;
        }
    }
    w.flush().map_err(|e| io_err(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_roundtrip_with_csv_loads() {
        let dir = tempfile::tempdir().unwrap();
        let l1 = LoadModel::new(vec![100.0, 200.0, 300.0], vec![0.9, 0.95, 1.0], vec![false, true, false]).unwrap();
        let l2 = LoadModel::new(vec![50.0, 0.0, 10.0], vec![1.0, 0.99, 0.8], vec![true, false, false]).unwrap();
        write_load_csv(&dir.path().join("loads.csv"), &[(1, &l1), (2, &l2)]).unwrap();
        let json = r#"{"nodes":[
            {"id":0,"parent":null,"z_re":0,"z_im":0,"load_csv":null},
            {"id":1,"parent":0,"z_re":0.02,"z_im":0.014,"load_csv":"loads.csv"},
            {"id":2,"parent":1,"z_re":0.02,"z_im":0.014,"load_csv":"loads.csv"}],
            "nominal_voltage":230.0,"snapshots":2}"#;
        std::fs::write(dir.path().join("t.json"), json).unwrap();
        let topo = Topology::read(&dir.path().join("t.json")).unwrap();
        let net = topo.to_network(dir.path(), None, None).unwrap();
        assert_eq!(net.snapshots(), 2);
        assert_eq!(*net.load(1).unwrap(), l1.prefix(2));
        assert_eq!(*net.load(2).unwrap(), l2.prefix(2));
        assert!(matches!(topo.to_network(dir.path(), Some(5), None), Err(NetworkError::ProfileLengthMismatch { .. })));
    }

    #[test]
    fn synthesized_loads_match_generator() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = LoadGenConfig::default();
        let loads = synth_load_profiles(&cfg, 3, 20, 4).unwrap();
        let net = FeederNetwork::chain(&[Complex::new(0.02, 0.014); 3], loads, 230.0).unwrap();
        let topo = Topology::skeleton(&net, 20);
        topo.write(&dir.path().join("t.json")).unwrap();
        let back = Topology::read(&dir.path().join("t.json")).unwrap().to_network(dir.path(), None, Some((&cfg, 4))).unwrap();
        assert_eq!(back, net);
    }

    #[test]
    fn malformed_json() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("t.json"), "{\"nodes\": 3}").unwrap();
        assert!(matches!(Topology::read(&dir.path().join("t.json")), Err(NetworkError::Json(_))));
        assert!(matches!(Topology::read(&dir.path().join("missing.json")), Err(NetworkError::Io { .. })));
    }

    #[test]
    fn gap_in_csv_snapshots() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("l.csv");
        std::fs::write(&p, "snapshot,node,active_power_w,power_factor\n0,1,10,0.9\n2,1,10,0.9\n").unwrap();
        assert!(matches!(read_load_csv(&p), Err(NetworkError::InvalidConfig(_))));
    }
}
