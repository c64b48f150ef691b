use std::path::Path;

use identify::{AlgoConfig, Regularizer, Variant};
use network::{FeederNetwork, LoadGenConfig, NodeJson, Topology};
use serde::{Deserialize, Serialize};

use crate::seed::loads_seed;
use crate::ExpError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Shape {
    /// `lines` lines in series from the substation.
    Chain { lines: usize },
    /// `parents[k]` is the parent of node `k + 1`.
    Tree { parents: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    #[serde(flatten)]
    pub shape: Shape,
    pub line_length_m: f64,
    #[serde(default = "default_ohm_per_km")]
    pub ohm_per_km: f64,
    #[serde(default = "default_xr")]
    pub xr_ratio: f64,
}

fn default_ohm_per_km() -> f64 {
    0.4
}

fn default_xr() -> f64 {
    0.7
}

impl NetworkSpec {
    pub fn line_impedance(&self) -> phasor_core::Complex {
        let r = self.ohm_per_km * self.line_length_m / 1000.0;
        phasor_core::Complex::new(r, self.xr_ratio * r)
    }

    pub fn parents(&self) -> Vec<usize> {
        match &self.shape {
            Shape::Chain { lines } => (0..*lines).collect(),
            Shape::Tree { parents } => parents.clone(),
        }
    }

    /// Topology without load data; every line has the same impedance.
    pub fn topology(&self, snapshots: usize) -> Topology {
        let z = self.line_impedance();
        let mut nodes = vec![NodeJson { id: 0, parent: None, z_re: 0.0, z_im: 0.0, load_csv: None, load: None }];
        for (k, &p) in self.parents().iter().enumerate() {
            nodes.push(NodeJson { id: k + 1, parent: Some(p), z_re: z.re, z_im: z.im, load_csv: None, load: None });
        }
        Topology { nodes, nominal_voltage: network::DEFAULT_NOMINAL_VOLTAGE, snapshots }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoadPreset {
    NormalPf,
    HighPf,
}

impl LoadPreset {
    pub fn config(self) -> LoadGenConfig {
        match self {
            LoadPreset::NormalPf => LoadGenConfig::default(),
            LoadPreset::HighPf => LoadGenConfig::high_pf_variation(),
        }
    }
}

/// How noisy data at different snapshot counts relate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoisePolicy {
    /// One noisy dataset per realization; smaller counts use its prefix.
    #[default]
    Prefix,
    /// Independent noise draw for each snapshot count.
    Fresh,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgoSpec {
    pub name: String,
    pub variant: Variant,
    /// Give the solver the network's true X/R ratio.
    #[serde(default)]
    pub use_xr: bool,
    /// Regularization weight; `D` follows [`Regularizer::default_for`].
    #[serde(default)]
    pub mu: Option<f64>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
}

fn default_alpha() -> f64 {
    0.1
}

fn default_eps() -> f64 {
    1e-8
}

fn default_max_iters() -> usize {
    200
}

impl AlgoSpec {
    pub fn new(name: &str, variant: Variant) -> Self {
        AlgoSpec {
            name: name.into(),
            variant,
            use_xr: false,
            mu: None,
            alpha: default_alpha(),
            eps: default_eps(),
            max_iters: default_max_iters(),
        }
    }

    pub fn config(&self, true_xr: f64) -> AlgoConfig {
        let xr_ratio = self.use_xr.then_some(true_xr);
        AlgoConfig {
            variant: self.variant,
            xr_ratio,
            reg: self.mu.map(|mu| Regularizer { mu, ..Regularizer::default_for(xr_ratio) }),
            alpha: self.alpha,
            eps: self.eps,
            max_iters: self.max_iters,
            ..AlgoConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub network: NetworkSpec,
    pub load_preset: LoadPreset,
    /// Accuracy classes in percent of full scale.
    pub noise_pct: Vec<f64>,
    pub snapshot_counts: Vec<usize>,
    pub realizations: usize,
    pub algorithms: Vec<AlgoSpec>,
    pub master_seed: u64,
    #[serde(default)]
    pub noise_policy: NoisePolicy,
}

const BUNDLED: [(&str, &str); 5] = [
    ("chain50_noiseless", include_str!("../scenarios/chain50_noiseless.json")),
    ("chain50_noisy", include_str!("../scenarios/chain50_noisy.json")),
    ("chain50_highpf", include_str!("../scenarios/chain50_highpf.json")),
    ("chain500_noisy", include_str!("../scenarios/chain500_noisy.json")),
    ("tree_fig2", include_str!("../scenarios/tree_fig2.json")),
];

impl Scenario {
    pub fn bundled_names() -> Vec<&'static str> {
        BUNDLED.iter().map(|(n, _)| *n).collect()
    }

    pub fn bundled(name: &str) -> Result<Scenario, ExpError> {
        let (_, text) = BUNDLED
            .iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| ExpError::InvalidScenario(format!("no bundled scenario {name:?}")))?;
        Self::from_json(text)
    }

    pub fn from_json(text: &str) -> Result<Scenario, ExpError> {
        let sc: Scenario = serde_json::from_str(text).map_err(|e| ExpError::InvalidScenario(e.to_string()))?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn read(path: &Path) -> Result<Scenario, ExpError> {
        let text = std::fs::read_to_string(path).map_err(|source| ExpError::Io { path: path.to_path_buf(), source })?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), ExpError> {
        let bad = |s: String| Err(ExpError::InvalidScenario(format!("{}: {s}", self.name)));
        if self.realizations == 0 {
            return bad("realizations must be at least 1".into());
        }
        if self.snapshot_counts.is_empty() || self.snapshot_counts[0] < 2 {
            return bad("snapshot counts must start at 2 or more".into());
        }
        if self.snapshot_counts.windows(2).any(|w| w[1] < w[0]) {
            return bad("snapshot counts must be non-decreasing".into());
        }
        if self.noise_pct.is_empty() || self.noise_pct.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return bad("noise classes must be non-negative percentages".into());
        }
        if self.algorithms.is_empty() {
            return bad("no algorithms".into());
        }
        for (k, a) in self.algorithms.iter().enumerate() {
            if self.algorithms[..k].iter().any(|b| b.name == a.name) {
                return bad(format!("duplicate algorithm name {:?}", a.name));
            }
            a.config(self.network.xr_ratio).validate().map_err(|e| ExpError::InvalidScenario(format!("{}: {}: {e}", self.name, a.name)))?;
        }
        let n = &self.network;
        if !(n.line_length_m > 0.0 && n.ohm_per_km > 0.0 && n.xr_ratio > 0.0) {
            return bad("line length, resistance and X/R must be positive".into());
        }
        if n.parents().is_empty() {
            return bad("network has no lines".into());
        }
        Ok(())
    }

    pub fn max_snapshots(&self) -> usize {
        *self.snapshot_counts.last().expect("validated")
    }

    /// Network with synthetic loads for the largest snapshot count. The load
    /// seed depends only on the master seed.
    pub fn build_network(&self) -> Result<FeederNetwork, ExpError> {
        let m = self.max_snapshots();
        let cfg = self.load_preset.config();
        Ok(self.network.topology(m).to_network(Path::new("."), Some(m), Some((&cfg, loads_seed(self.master_seed))))?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_scenarios_parse() {
        for name in Scenario::bundled_names() {
            let sc = Scenario::bundled(name).unwrap();
            assert_eq!(sc.name, name);
        }
        assert!(Scenario::bundled("nope").is_err());
    }

    #[test]
    fn rejects_decreasing_sweep() {
        let mut sc = Scenario::bundled("chain50_noiseless").unwrap();
        sc.snapshot_counts = vec![500, 100];
        assert!(sc.validate().is_err());
        sc.snapshot_counts = vec![100];
        sc.realizations = 0;
        assert!(sc.validate().is_err());
    }

    #[test]
    fn tree_shape_json() {
        let spec: NetworkSpec = serde_json::from_str(r#"{"shape":"tree","parents":[0,1,1],"line_length_m":50}"#).unwrap();
        assert_eq!(spec.parents(), vec![0, 1, 1]);
        assert!((spec.line_impedance() - phasor_core::Complex::new(0.02, 0.014)).norm() < 1e-15);
        let topo = spec.topology(10);
        assert_eq!(topo.nodes.len(), 4);
        assert_eq!(topo.nodes[3].parent, Some(1));
    }

    #[test]
    fn algo_spec_regularizer_follows_xr() {
        let mut a = AlgoSpec::new("x", Variant::Bci);
        a.mu = Some(0.1);
        assert_eq!(a.config(0.7).reg.unwrap().kind, identify::RegKind::Q2Image);
        a.use_xr = true;
        assert_eq!(a.config(0.7).reg.unwrap().kind, identify::RegKind::XrRow(0.7));
        assert_eq!(a.config(0.7).xr_ratio, Some(0.7));
    }
}
