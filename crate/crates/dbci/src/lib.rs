//! Decentralised identification: one agent per meter, each estimating the
//! lines to its children from their upstream payloads and forwarding its own
//! aggregated current to its parent.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use identify::{merge_at_node, AlgoConfig, ChildLine, IdentifyError, LineEstimate, LineProblem, LineResult, NetworkEstimate, Variant};
use network::{traversal_plan, FeederNetwork};
use phasor_core::{CVec, Complex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use simulator::MeasurementSet;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DbciError {
    #[error("agent {node} has no payload from child {child}")]
    MissingChildPayload { node: usize, child: usize },
    #[error("agent {node} activated while waiting for children {waiting:?}")]
    Deadlock { node: usize, waiting: Vec<usize> },
    #[error("schedule ended with agents {pending:?} not run")]
    Incomplete { pending: Vec<usize> },
    #[error("unexpected payload for agent {node} from {sender}")]
    UnexpectedPayload { node: usize, sender: usize },
    #[error(transparent)]
    Identify(#[from] IdentifyError),
    #[error("{0}")]
    Topology(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// What a meter sends to its parent after its step.
#[derive(Debug, Clone, PartialEq)]
pub struct UpstreamPayload {
    pub sender: usize,
    pub m: usize,
    /// Sender's RMS voltages.
    pub v: Vec<f64>,
    /// Current on the line into the sender, relative to the sender's phase.
    pub j: CVec,
    /// Phase offset carried by `j` (zero for BCI).
    pub frame: Vec<f64>,
}

impl UpstreamPayload {
    /// First 8 bytes of the SHA-256 of the payload's contents, hex encoded.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.sender as u64).to_le_bytes());
        h.update((self.m as u64).to_le_bytes());
        for x in &self.v {
            h.update(x.to_le_bytes());
        }
        for c in self.j.iter() {
            h.update(c.re.to_le_bytes());
            h.update(c.im.to_le_bytes());
        }
        for x in &self.frame {
            h.update(x.to_le_bytes());
        }
        hex::encode(&h.finalize()[..8])
    }
}

#[derive(Debug, Clone)]
pub struct MeterAgent {
    pub node: usize,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    pub v: Vec<f64>,
    pub i_mag: Vec<f64>,
    pub theta: Vec<f64>,
    /// Solver settings for each line to a child, keyed by the child.
    pub line_cfg: BTreeMap<usize, AlgoConfig>,
    pub variant: Variant,
    inbox: Vec<UpstreamPayload>,
    done: bool,
}

impl MeterAgent {
    pub fn pending_children(&self) -> Vec<usize> {
        self.children.iter().copied().filter(|c| !self.inbox.iter().any(|p| p.sender == *c)).collect()
    }

    pub fn is_ready(&self) -> bool {
        !self.done && self.pending_children().is_empty()
    }

    fn local_current(&self) -> CVec {
        self.i_mag.iter().zip(&self.theta).map(|(&m, &t)| Complex::from_polar(m, t)).collect()
    }
}

#[derive(Debug, Clone)]
pub struct AgentOutput {
    pub lines: Vec<LineResult>,
    pub payload: Option<UpstreamPayload>,
}

/// Builds one agent per node; `cfg_for(child)` configures line `(parent, child)`.
pub fn build_agents(
    net: &FeederNetwork,
    ms: &MeasurementSet,
    cfg_for: &dyn Fn(usize) -> AlgoConfig,
) -> Result<Vec<MeterAgent>, DbciError> {
    ms.validate().map_err(|e| IdentifyError::InconsistentSnapshotLengths(e.to_string()))?;
    if ms.node_count() != net.node_count() {
        return Err(DbciError::Topology(format!(
            "measurements cover {} nodes, network has {}",
            ms.node_count(),
            net.node_count()
        )));
    }
    if net.edge_count() == 0 {
        return Err(DbciError::Topology("network has no lines".into()));
    }
    let variant = cfg_for(1).variant;
    let mut agents = Vec::with_capacity(net.node_count());
    for n in 0..net.node_count() {
        let children = net.children(n).to_vec();
        let mut line_cfg = BTreeMap::new();
        for &c in &children {
            let cfg = cfg_for(c);
            if cfg.variant != variant {
                return Err(IdentifyError::InvalidConfig(format!("mixed variants at line ({n}, {c})")).into());
            }
            line_cfg.insert(c, cfg);
        }
        agents.push(MeterAgent {
            node: n,
            parent: net.parent(n),
            children,
            v: ms.v[n].clone(),
            i_mag: ms.i_mag[n].clone(),
            theta: ms.theta[n].clone(),
            line_cfg,
            variant,
            inbox: Vec::new(),
            done: false,
        });
    }
    Ok(agents)
}

/// Estimates every line to a child and merges the children's currents with
/// the local one into the upstream payload. The root emits nothing.
pub fn agent_step(agent: &MeterAgent, inbox: &[UpstreamPayload]) -> Result<AgentOutput, DbciError> {
    let mut sorted: Vec<&UpstreamPayload> = inbox.iter().collect();
    sorted.sort_by_key(|p| p.sender);
    for p in &sorted {
        if !agent.children.contains(&p.sender) {
            return Err(DbciError::UnexpectedPayload { node: agent.node, sender: p.sender });
        }
    }
    let mut lines = Vec::with_capacity(agent.children.len());
    let mut merged = Vec::with_capacity(agent.children.len());
    for &c in &agent.children {
        let p = sorted
            .iter()
            .find(|p| p.sender == c)
            .ok_or(DbciError::MissingChildPayload { node: agent.node, child: c })?;
        let cfg = agent.line_cfg.get(&c).copied().unwrap_or_else(|| AlgoConfig::new(agent.variant));
        let wrap = |e| IdentifyError::Line { from: agent.node, to: c, source: Box::new(e) };
        let problem = LineProblem::new(agent.v.clone(), p.v.clone(), p.j.clone()).map_err(wrap)?;
        let estimate: LineEstimate = identify::estimate_line(&problem, &cfg).map_err(wrap)?;
        let child = ChildLine::new(c, problem, estimate, agent.variant, p.frame.clone());
        lines.push(LineResult {
            from: agent.node,
            to: c,
            estimate: child.estimate.clone(),
            delta: child.delta.clone(),
            current: child.problem.j.clone(),
        });
        merged.push(child);
    }
    let payload = match agent.parent {
        None => None,
        Some(_) => {
            let (j, frame) = merge_at_node(agent.variant, &merged, &agent.local_current())?;
            Some(UpstreamPayload { sender: agent.node, m: agent.v.len(), v: agent.v.clone(), j, frame })
        }
    };
    Ok(AgentOutput { lines, payload })
}

/// Order in which agents are activated.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Schedule {
    /// Leaf-to-root plan order, root last.
    Sequential,
    /// Uniformly random choice among ready agents at each step.
    Random { seed: u64 },
    /// Fixed activation list; activating an agent that still waits for a
    /// child is a deadlock.
    Explicit(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub t: u64,
    pub from: usize,
    pub to: usize,
    pub m: usize,
    pub checksum: String,
}

#[derive(Debug, Clone)]
pub struct DecentralizedRun {
    /// Lines in the same order as the centralised tree identification.
    pub estimate: NetworkEstimate,
    pub trace: Vec<TraceEntry>,
    /// Agents in activation order.
    pub activations: Vec<usize>,
}

impl DecentralizedRun {
    pub fn payload_count(&self) -> usize {
        self.trace.len()
    }

    pub fn write_trace(&self, path: &Path) -> Result<(), DbciError> {
        let io = |source| DbciError::Io { path: path.to_path_buf(), source };
        let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
        for e in &self.trace {
            let line = serde_json::to_string(e).expect("plain struct");
            writeln!(f, "{line}").map_err(io)?;
        }
        f.flush().map_err(io)
    }
}

pub fn run_decentralized(
    net: &FeederNetwork,
    ms: &MeasurementSet,
    cfg_for: &dyn Fn(usize) -> AlgoConfig,
    schedule: &Schedule,
) -> Result<DecentralizedRun, DbciError> {
    let mut agents = build_agents(net, ms, cfg_for)?;
    let n = agents.len();
    let order: Vec<usize> = match schedule {
        Schedule::Sequential => {
            let mut o = traversal_plan(net).order;
            o.push(0);
            o
        }
        Schedule::Explicit(o) => o.clone(),
        Schedule::Random { .. } => Vec::new(),
    };
    let mut rng = match schedule {
        Schedule::Random { seed } => Some(ChaCha8Rng::seed_from_u64(*seed)),
        _ => None,
    };
    let mut by_child: Vec<Option<LineResult>> = vec![None; n];
    let mut trace = Vec::with_capacity(net.edge_count());
    let mut activations = Vec::with_capacity(n);
    let mut t = 0u64;
    let mut step = 0usize;
    loop {
        let node = match &mut rng {
            Some(rng) => {
                let ready: Vec<usize> = (0..n).filter(|&k| agents[k].is_ready()).collect();
                if ready.is_empty() {
                    break;
                }
                ready[rng.random_range(0..ready.len())]
            }
            None => match order.get(step) {
                Some(&k) => k,
                None => break,
            },
        };
        step += 1;
        let agent = agents.get(node).ok_or_else(|| DbciError::Topology(format!("no agent {node}")))?;
        if agent.done {
            return Err(DbciError::Topology(format!("agent {node} activated twice")));
        }
        let waiting = agent.pending_children();
        if !waiting.is_empty() {
            return Err(DbciError::Deadlock { node, waiting });
        }
        let inbox = std::mem::take(&mut agents[node].inbox);
        let out = agent_step(&agents[node], &inbox)?;
        agents[node].done = true;
        activations.push(node);
        for l in out.lines {
            let to = l.to;
            by_child[to] = Some(l);
        }
        if let (Some(p), Some(payload)) = (agents[node].parent, out.payload) {
            t += 1;
            trace.push(TraceEntry { t, from: node, to: p, m: payload.m, checksum: payload.checksum() });
            agents[p].inbox.push(payload);
        }
    }
    let pending: Vec<usize> = (0..n).filter(|&k| !agents[k].done).collect();
    if !pending.is_empty() {
        return Err(DbciError::Incomplete { pending });
    }
    let lines = traversal_plan(net).order.iter().map(|&k| by_child[k].take().expect("every edge estimated")).collect();
    Ok(DecentralizedRun { estimate: NetworkEstimate { variant: agents[0].variant, lines }, trace, activations })
}
