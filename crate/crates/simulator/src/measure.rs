use std::fs::File;
use std::path::Path;

use network::FeederNetwork;
use phasor_core::{CVec, Complex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::{SimError, Snapshot, CHANNEL_ANGLE, CHANNEL_CURRENT, CHANNEL_VOLTAGE};

/// Smart-meter readings indexed by node. Node 0 is the substation meter,
/// whose `i_mag` and `theta` are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    pub v: Vec<Vec<f64>>,
    pub i_mag: Vec<Vec<f64>>,
    pub theta: Vec<Vec<f64>>,
}

impl MeasurementSet {
    /// Snapshot count.
    pub fn len(&self) -> usize {
        self.v.first().map_or(0, |v| v.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn node_count(&self) -> usize {
        self.v.len()
    }

    pub fn v0(&self) -> &[f64] {
        &self.v[0]
    }

    /// Local consumed current `i_mag e^{i theta}` of node `n`.
    pub fn local_current(&self, n: usize) -> CVec {
        self.i_mag[n].iter().zip(&self.theta[n]).map(|(&m, &t)| Complex::from_polar(m, t)).collect()
    }

    pub fn local_current_at(&self, n: usize, m: usize) -> Complex {
        Complex::from_polar(self.i_mag[n][m], self.theta[n][m])
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |s: String| Err(SimError::InvalidMeasurements(s));
        let m = self.len();
        if self.v.is_empty() || self.i_mag.len() != self.v.len() || self.theta.len() != self.v.len() {
            return bad("channel node counts differ".into());
        }
        for n in 0..self.v.len() {
            if self.v[n].len() != m || self.i_mag[n].len() != m || self.theta[n].len() != m {
                return bad(format!("node {n} has inconsistent snapshot count"));
            }
            if self.v[n].iter().any(|x| !(x.is_finite() && *x > 0.0)) {
                return bad(format!("node {n} has a non-positive voltage"));
            }
            if self.i_mag[n].iter().any(|x| !(x.is_finite() && *x >= 0.0)) || self.theta[n].iter().any(|x| !x.is_finite()) {
                return bad(format!("node {n} has an invalid current reading"));
            }
        }
        Ok(())
    }

    /// The first `m` snapshots.
    pub fn prefix(&self, m: usize) -> Self {
        let cut = |ch: &Vec<Vec<f64>>| ch.iter().map(|x| x[..m.min(x.len())].to_vec()).collect();
        MeasurementSet { v: cut(&self.v), i_mag: cut(&self.i_mag), theta: cut(&self.theta) }
    }

    /// Writes `snapshot,node,v_rms,i_rms,theta_rad`; substation rows leave the
    /// current columns empty.
    pub fn write_csv(&self, path: &Path) -> Result<(), SimError> {
        let f = File::create(path).map_err(|e| io_err(path, e))?;
        let mut w = csv::Writer::from_writer(std::io::BufWriter::new(f));
        for m in 0..self.len() {
            for n in 0..self.node_count() {
                let (i_rms, theta_rad) = if n == 0 { (None, None) } else { (Some(self.i_mag[n][m]), Some(self.theta[n][m])) };
                w.serialize(MeasRow { snapshot: m, node: n, v_rms: self.v[n][m], i_rms, theta_rad })?;
            }
        }
        w.flush().map_err(|e| io_err(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Self, SimError> {
        let f = File::open(path).map_err(|e| io_err(path, e))?;
        let mut rows: Vec<MeasRow> = Vec::new();
        for r in csv::Reader::from_reader(std::io::BufReader::new(f)).deserialize() {
            rows.push(r?);
        }
        let nodes = rows.iter().map(|r| r.node + 1).max().unwrap_or(0);
        let m = rows.iter().map(|r| r.snapshot + 1).max().unwrap_or(0);
        let mut ms = MeasurementSet { v: vec![vec![f64::NAN; m]; nodes], i_mag: vec![vec![0.0; m]; nodes], theta: vec![vec![0.0; m]; nodes] };
        let mut seen = vec![vec![false; m]; nodes];
        for r in rows {
            if std::mem::replace(&mut seen[r.node][r.snapshot], true) {
                return Err(SimError::InvalidMeasurements(format!("duplicate row node {} snapshot {}", r.node, r.snapshot)));
            }
            ms.v[r.node][r.snapshot] = r.v_rms;
            match (r.node, r.i_rms, r.theta_rad) {
                (0, _, _) => {}
                (_, Some(i), Some(t)) => {
                    ms.i_mag[r.node][r.snapshot] = i;
                    ms.theta[r.node][r.snapshot] = t;
                }
                _ => return Err(SimError::InvalidMeasurements(format!("node {} snapshot {} lacks current data", r.node, r.snapshot))),
            }
        }
        if seen.iter().flatten().any(|s| !s) {
            return Err(SimError::InvalidMeasurements("missing (snapshot, node) rows".into()));
        }
        ms.validate()?;
        Ok(ms)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct MeasRow {
    snapshot: usize,
    node: usize,
    v_rms: f64,
    i_rms: Option<f64>,
    theta_rad: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TruthRow {
    snapshot: usize,
    node: usize,
    v_re: f64,
    v_im: f64,
    i_re: f64,
    i_im: f64,
}

fn io_err(path: &Path, source: std::io::Error) -> SimError {
    SimError::Io { path: path.display().to_string(), source }
}

/// Ideal readings: RMS magnitudes and `theta = angle(i) - angle(v)`.
pub fn measure(net: &FeederNetwork, snaps: &[Snapshot]) -> MeasurementSet {
    let n = net.node_count();
    let mut ms = MeasurementSet {
        v: vec![Vec::with_capacity(snaps.len()); n],
        i_mag: vec![Vec::with_capacity(snaps.len()); n],
        theta: vec![Vec::with_capacity(snaps.len()); n],
    };
    for s in snaps {
        for k in 0..n {
            ms.v[k].push(s.v[k].norm());
            ms.i_mag[k].push(s.i[k].norm());
            ms.theta[k].push((s.i[k] * s.v[k].conj()).arg());
        }
    }
    ms
}

/// Full-scale Gaussian meter noise: each channel gets `sigma = fs * pct_fs / 2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub pct_fs: f64,
    pub fs_voltage: f64,
    pub fs_current: f64,
    pub fs_angle: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub const FS_VOLTAGE: f64 = 250.0;
    pub const FS_ANGLE: f64 = std::f64::consts::FRAC_PI_3;
    /// Current full scale relative to the largest ideal current.
    pub const FS_CURRENT_HEADROOM: f64 = 1.2;

    /// Default full scales for an ideal measurement set.
    pub fn for_ideal(ideal: &MeasurementSet, pct_fs: f64, seed: u64) -> Self {
        let i_max = ideal.i_mag.iter().flatten().copied().fold(0.0, f64::max);
        NoiseSpec {
            pct_fs,
            fs_voltage: Self::FS_VOLTAGE,
            fs_current: if i_max > 0.0 { Self::FS_CURRENT_HEADROOM * i_max } else { 1.0 },
            fs_angle: Self::FS_ANGLE,
            seed,
        }
    }

    pub fn sigma_voltage(&self) -> f64 {
        self.fs_voltage * self.pct_fs / 2.0
    }

    pub fn sigma_current(&self) -> f64 {
        self.fs_current * self.pct_fs / 2.0
    }

    pub fn sigma_angle(&self) -> f64 {
        self.fs_angle * self.pct_fs / 2.0
    }
}

/// Standard-normal draws for one `(seed, node, channel)` stream; entry `m`
/// does not depend on how many entries are drawn.
pub(crate) fn stream(seed: u64, node: usize, channel: u64, len: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(node as u64 * 3 + channel);
    (0..len).map(|_| StandardNormal.sample(&mut rng)).collect()
}

/// Adds independent noise to every channel. Noisy current magnitudes are
/// clipped at zero so the set stays valid.
pub fn add_noise(ms: &MeasurementSet, spec: &NoiseSpec) -> Result<MeasurementSet, SimError> {
    if !(spec.pct_fs.is_finite() && spec.pct_fs >= 0.0) {
        return Err(SimError::InvalidNoise(format!("pct_fs {}", spec.pct_fs)));
    }
    if [spec.fs_voltage, spec.fs_current, spec.fs_angle].iter().any(|f| !(f.is_finite() && *f > 0.0)) {
        return Err(SimError::InvalidNoise("full scales must be positive".into()));
    }
    if spec.pct_fs == 0.0 {
        return Ok(ms.clone());
    }
    let m = ms.len();
    let mut out = ms.clone();
    for n in 0..ms.node_count() {
        let sv = spec.sigma_voltage();
        for (x, e) in out.v[n].iter_mut().zip(stream(spec.seed, n, CHANNEL_VOLTAGE, m)) {
            *x += sv * e;
        }
        if n == 0 {
            continue;
        }
        let si = spec.sigma_current();
        for (x, e) in out.i_mag[n].iter_mut().zip(stream(spec.seed, n, CHANNEL_CURRENT, m)) {
            *x = (*x + si * e).max(0.0);
        }
        let sa = spec.sigma_angle();
        for (x, e) in out.theta[n].iter_mut().zip(stream(spec.seed, n, CHANNEL_ANGLE, m)) {
            *x += sa * e;
        }
    }
    Ok(out)
}

pub fn write_ground_truth_csv(path: &Path, snaps: &[Snapshot]) -> Result<(), SimError> {
    let f = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(f));
    for (m, s) in snaps.iter().enumerate() {
        for n in 0..s.v.len() {
            w.serialize(TruthRow { snapshot: m, node: n, v_re: s.v[n].re, v_im: s.v[n].im, i_re: s.i[n].re, i_im: s.i[n].im })?;
        }
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Reads node voltages and currents back; line currents are recomputed from
/// the network's impedances.
pub fn read_ground_truth_csv(path: &Path, net: &FeederNetwork) -> Result<Vec<Snapshot>, SimError> {
    let f = File::open(path).map_err(|e| io_err(path, e))?;
    let n = net.node_count();
    let mut snaps: Vec<Snapshot> = Vec::new();
    for r in csv::Reader::from_reader(f).deserialize() {
        let r: TruthRow = r?;
        if r.node >= n {
            return Err(SimError::InvalidMeasurements(format!("node {} not in network", r.node)));
        }
        while snaps.len() <= r.snapshot {
            let zero = vec![Complex::new(0.0, 0.0); n];
            snaps.push(Snapshot { v: zero.clone(), i: zero.clone(), j: zero });
        }
        snaps[r.snapshot].v[r.node] = Complex::new(r.v_re, r.v_im);
        snaps[r.snapshot].i[r.node] = Complex::new(r.i_re, r.i_im);
    }
    for s in &mut snaps {
        for k in 1..n {
            let p = net.parent(k).expect("non-root");
            s.j[k] = (s.v[p] - s.v[k]) / net.z(k);
        }
    }
    Ok(snaps)
}
