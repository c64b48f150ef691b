use phasor_core::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::NetworkError;

/// Powers below this are raised to it so a load never becomes an open circuit.
pub const MIN_POWER_W: f64 = 1.0;

/// Per-snapshot demand of one node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadModel {
    pub p_w: Vec<f64>,
    pub pf: Vec<f64>,
    /// `true` where the load is capacitive (leading) in that snapshot.
    pub leading: Vec<bool>,
}

impl LoadModel {
    pub fn new(p_w: Vec<f64>, pf: Vec<f64>, leading: Vec<bool>) -> Result<Self, NetworkError> {
        let l = LoadModel { p_w, pf, leading };
        l.validate(0)?;
        Ok(l)
    }

    pub(crate) fn validate(&self, node: usize) -> Result<(), NetworkError> {
        let m = self.p_w.len();
        for got in [self.pf.len(), self.leading.len()] {
            if got != m {
                return Err(NetworkError::ProfileLengthMismatch { node, expected: m, got });
            }
        }
        if let Some(p) = self.p_w.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
            return Err(NetworkError::InvalidConfig(format!("node {node}: active power {p}")));
        }
        if let Some(pf) = self.pf.iter().find(|pf| !(**pf > 0.0 && **pf <= 1.0)) {
            return Err(NetworkError::InvalidConfig(format!("node {node}: power factor {pf}")));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.p_w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p_w.is_empty()
    }

    pub fn prefix(&self, m: usize) -> Self {
        LoadModel { p_w: self.p_w[..m].to_vec(), pf: self.pf[..m].to_vec(), leading: self.leading[..m].to_vec() }
    }

    /// Complex power `P (1 + i tan(acos pf) sign)` at nominal voltage.
    pub fn power(&self, m: usize) -> Complex {
        let p = self.p_w[m].max(MIN_POWER_W);
        let q = p * self.pf[m].acos().tan();
        Complex::new(p, if self.leading[m] { -q } else { q })
    }

    /// Constant-impedance equivalent `|V_nom|^2 / conj(S)`.
    pub fn impedance(&self, m: usize, nominal_voltage: f64) -> Complex {
        Complex::new(nominal_voltage * nominal_voltage, 0.0) / self.power(m).conj()
    }
}

/// Parameters of the synthetic load generator.
///
/// Each node gets a base power drawn uniformly from `[base_min_w, base_max_w]`
/// and a random phase for a daily sinusoidal shape; every snapshot multiplies
/// the shape by a uniform jitter. Power factors are clipped normal draws and
/// each snapshot is leading with probability `leading_prob`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadGenConfig {
    pub base_min_w: f64,
    pub base_max_w: f64,
    /// Snapshots per daily cycle (one snapshot per minute).
    pub period: f64,
    /// The daily shape swings between `1 - 2a` and `1` for amplitude `a`.
    pub daily_amplitude: f64,
    /// Jitter factor is uniform in `[1 - jitter, 1 + jitter]`.
    pub jitter: f64,
    pub pf_mean: f64,
    pub pf_sd: f64,
    pub pf_min: f64,
    pub pf_max: f64,
    pub leading_prob: f64,
}

impl Default for LoadGenConfig {
    fn default() -> Self {
        LoadGenConfig {
            base_min_w: 200.0,
            base_max_w: 1500.0,
            period: 1440.0,
            daily_amplitude: 0.4,
            jitter: 0.5,
            pf_mean: 0.95,
            pf_sd: 0.05,
            pf_min: 0.9,
            pf_max: 1.0,
            leading_prob: 0.25,
        }
    }
}

impl LoadGenConfig {
    /// Wider power-factor spread, clipped to `[0.7, 1]`.
    pub fn high_pf_variation() -> Self {
        LoadGenConfig { pf_mean: 0.85, pf_sd: 0.1, pf_min: 0.7, ..Self::default() }
    }

    fn validate(&self) -> Result<(), NetworkError> {
        let bad = |what: &str| Err(NetworkError::InvalidConfig(what.to_string()));
        if !(self.base_min_w >= 0.0 && self.base_min_w <= self.base_max_w && self.base_max_w.is_finite()) {
            return bad("base power range is empty or negative");
        }
        if !(self.pf_min > 0.0 && self.pf_min <= self.pf_max && self.pf_max <= 1.0) {
            return bad("power-factor clip interval is empty or outside (0, 1]");
        }
        if !(self.pf_sd >= 0.0 && self.pf_mean.is_finite()) {
            return bad("power-factor distribution");
        }
        if !(0.0..=1.0).contains(&self.leading_prob) {
            return bad("leading probability outside [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.jitter) || !(0.0..=0.5).contains(&self.daily_amplitude) || !(self.period > 0.0) {
            return bad("load shape parameters");
        }
        Ok(())
    }
}

/// Deterministic synthetic profiles for `n_loads` nodes over `m` snapshots.
///
/// Each node draws from its own ChaCha stream, so the first `k` snapshots of a
/// longer run equal a run of length `k`.
pub fn synth_load_profiles(cfg: &LoadGenConfig, n_loads: usize, m: usize, seed: u64) -> Result<Vec<LoadModel>, NetworkError> {
    cfg.validate()?;
    if m == 0 {
        return Err(NetworkError::InvalidConfig("snapshot count must be at least 1".into()));
    }
    let pf_dist = Normal::new(cfg.pf_mean, cfg.pf_sd).map_err(|e| NetworkError::InvalidConfig(e.to_string()))?;
    let mut out = Vec::with_capacity(n_loads);
    for node in 0..n_loads {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(node as u64);
        let base = rng.random_range(cfg.base_min_w..=cfg.base_max_w);
        let phase = rng.random_range(0.0..std::f64::consts::TAU);
        let mut p_w = Vec::with_capacity(m);
        let mut pf = Vec::with_capacity(m);
        let mut leading = Vec::with_capacity(m);
        for k in 0..m {
            let shape = 1.0 - cfg.daily_amplitude + cfg.daily_amplitude * (std::f64::consts::TAU * k as f64 / cfg.period + phase).sin();
            let jitter = rng.random_range(1.0 - cfg.jitter..=1.0 + cfg.jitter);
            p_w.push(base * shape * jitter);
            pf.push(pf_dist.sample(&mut rng).clamp(cfg.pf_min, cfg.pf_max));
            leading.push(rng.random_bool(cfg.leading_prob));
        }
        out.push(LoadModel { p_w, pf, leading });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn zero_sd_gives_constant_pf() {
        let cfg = LoadGenConfig { pf_sd: 0.0, ..Default::default() };
        let p = synth_load_profiles(&cfg, 3, 50, 1).unwrap();
        assert!(p.iter().all(|l| l.pf.iter().all(|&x| x == 0.95)));
    }

    #[test]
    fn deterministic_and_prefix_stable() {
        let cfg = LoadGenConfig::default();
        let a = synth_load_profiles(&cfg, 4, 200, 9).unwrap();
        assert_eq!(a, synth_load_profiles(&cfg, 4, 200, 9).unwrap());
        let b = synth_load_profiles(&cfg, 4, 120, 9).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.prefix(120), *y);
        }
        assert_ne!(a, synth_load_profiles(&cfg, 4, 200, 10).unwrap());
    }

    #[test]
    fn clipped_normal_mean() {
        let p = synth_load_profiles(&LoadGenConfig::default(), 1, 10_000, 3).unwrap();
        let mean = p[0].pf.iter().sum::<f64>() / 10_000.0;
        // Normal(0.95, 0.05) clipped to [0.9, 1] keeps its mean by symmetry.
        assert_abs_diff_eq!(mean, 0.95, epsilon = 0.01);
        assert!(p[0].pf.iter().all(|&x| (0.9..=1.0).contains(&x)));
    }

    #[test]
    fn high_variation_range() {
        let p = synth_load_profiles(&LoadGenConfig::high_pf_variation(), 2, 2000, 3).unwrap();
        let lo = p.iter().flat_map(|l| l.pf.iter().copied()).fold(1.0, f64::min);
        assert!((0.7..0.75).contains(&lo));
    }

    #[test]
    fn empty_clip_interval_rejected() {
        let cfg = LoadGenConfig { pf_min: 0.99, pf_max: 0.9, ..Default::default() };
        assert!(matches!(synth_load_profiles(&cfg, 1, 10, 0), Err(NetworkError::InvalidConfig(_))));
        assert!(synth_load_profiles(&LoadGenConfig::default(), 1, 0, 0).is_err());
    }

    #[test]
    fn impedance_conversion() {
        let l = LoadModel::new(vec![1000.0, 0.0], vec![0.8, 1.0], vec![false, false]).unwrap();
        // S = 1000 + 750i; Z = 230^2 / conj(S), inductive.
        let z = l.impedance(0, 230.0);
        let expect = Complex::new(52900.0, 0.0) / Complex::new(1000.0, -750.0);
        assert_abs_diff_eq!((z - expect).norm(), 0.0, epsilon = 1e-12);
        assert!(z.im > 0.0);
        // Zero demand is floored at 1 W.
        assert_abs_diff_eq!(l.impedance(1, 230.0).re, 52900.0, epsilon = 1e-9);
        let lead = LoadModel::new(vec![1000.0], vec![0.8], vec![true]).unwrap();
        assert!(lead.impedance(0, 230.0).im < 0.0);
    }

    #[test]
    fn invalid_models() {
        assert!(LoadModel::new(vec![1.0], vec![1.1], vec![false]).is_err());
        assert!(LoadModel::new(vec![-1.0], vec![0.9], vec![false]).is_err());
        assert!(LoadModel::new(vec![1.0, 2.0], vec![0.9], vec![false, true]).is_err());
    }
}
