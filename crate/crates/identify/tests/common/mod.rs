#![allow(dead_code)]

use network::{synth_load_profiles, FeederNetwork, LoadGenConfig};
use phasor_core::Complex;
use simulator::{measure, simulate, MeasurementSet, Snapshot};

/// 0.4 ohm/km with X/R 0.7.
pub fn line_z(length_m: f64) -> Complex {
    let r = 0.4 * length_m / 1000.0;
    Complex::new(r, 0.7 * r)
}

pub fn chain(lines: usize, length_m: f64, m: usize, seed: u64) -> FeederNetwork {
    let loads = synth_load_profiles(&LoadGenConfig::default(), lines, m, seed).unwrap();
    FeederNetwork::chain(&vec![line_z(length_m); lines], loads, 230.0).unwrap()
}

pub fn tree(parents: &[usize], length_m: f64, m: usize, seed: u64) -> FeederNetwork {
    let loads = synth_load_profiles(&LoadGenConfig::default(), parents.len(), m, seed).unwrap();
    let mut p = vec![None];
    p.extend(parents.iter().map(|&x| Some(x)));
    FeederNetwork::from_parents(&p, &vec![line_z(length_m); parents.len()], loads, 230.0).unwrap()
}

pub fn ideal(net: &FeederNetwork) -> (Vec<Snapshot>, MeasurementSet) {
    let snaps = simulate(net).unwrap();
    let ms = measure(net, &snaps);
    (snaps, ms)
}

pub fn rel_err(est: Complex, truth: Complex) -> f64 {
    (est - truth).norm() / truth.norm()
}
