use identify::{bci_line, cost_full, lbci_line, regularization_penalty, AlgoConfig, LineProblem, RegKind, Regularizer, Variant};
use phasor_core::{CVec, Complex};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Random line with `m` snapshots; voltages and currents perturbed by a
/// relative noise level `noise`.
fn line(seed: u64, m: usize, noise: f64) -> (LineProblem, Complex) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = rng.random_range(0.005..0.4);
    let z = Complex::new(r, r * rng.random_range(0.2..2.0));
    let w = Normal::new(0.0, 1.0).unwrap();
    let mut v_up = Vec::with_capacity(m);
    let mut v_down = Vec::with_capacity(m);
    let mut j = Vec::with_capacity(m);
    for _ in 0..m {
        let vd: f64 = rng.random_range(210.0..235.0);
        let c = Complex::from_polar(rng.random_range(0.5..40.0), rng.random_range(-0.6..0.4));
        let vu = (vd + c * z).norm();
        let mut n = || 1.0 + noise * w.sample(&mut rng);
        v_up.push(vu * n());
        v_down.push(vd * n());
        j.push(c * n());
    }
    (LineProblem::new(v_up, v_down, CVec(j)).unwrap(), z)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn bci_cost_never_exceeds_lbci(seed in any::<u64>(), noise in prop::sample::select(vec![0.0, 1e-4, 1e-3, 1e-2]), xr in any::<bool>()) {
        let (p, z) = line(seed, 40, noise);
        let k = z.im / z.re;
        let base = if xr { AlgoConfig::default().with_xr(k) } else { AlgoConfig::default() };
        let bci = bci_line(&p, &base).unwrap();
        let lin = lbci_line(&p, &AlgoConfig { variant: Variant::Lbci, ..base }).unwrap();
        prop_assert!(bci.cost_full <= lin.cost_full + 1e-12, "{} > {}", bci.cost_full, lin.cost_full);
    }

    #[test]
    fn regularized_bci_against_plain_lbci(seed in any::<u64>(), noise in prop::sample::select(vec![0.0, 1e-3, 1e-2]), mu in prop::sample::select(vec![0.1, 1.0]), q2 in any::<bool>()) {
        let (p, z) = line(seed, 40, noise);
        let kind = if q2 { RegKind::Q2Image } else { RegKind::XrRow(z.im / z.re) };
        let reg = Regularizer { mu, kind };
        let cfg = AlgoConfig::default().with_reg(reg);
        let bci = bci_line(&p, &cfg).unwrap();
        let plain = lbci_line(&p, &AlgoConfig::new(Variant::Lbci)).unwrap();
        // Penalised objectives with the same mu and D on both sides.
        let lreg = lbci_line(&p, &AlgoConfig { variant: Variant::Lbci, ..cfg }).unwrap();
        let ones = vec![1.0; p.len()];
        prop_assert!(bci.cost_full <= plain.cost_full + 1e-12);
        let lhs = cost_full(&p, bci.z_hat, &bci.gamma) + regularization_penalty(&p, bci.z_hat, &cfg);
        let rhs = cost_full(&p, lreg.z_hat, &ones) + regularization_penalty(&p, lreg.z_hat, &cfg);
        prop_assert!(lhs <= rhs + 1e-12, "{lhs} > {rhs}");
    }

    #[test]
    fn gamma_stays_in_unit_interval(seed in any::<u64>(), noise in prop::sample::select(vec![0.0, 1e-2, 5e-2])) {
        let (p, _) = line(seed, 20, noise);
        let e = bci_line(&p, &AlgoConfig::default()).unwrap();
        prop_assert!(e.gamma.iter().all(|g| (0.0..=1.0).contains(g)));
    }

    #[test]
    fn first_iterate_identity(seed in any::<u64>(), noise in prop::sample::select(vec![0.0, 1e-2])) {
        let (p, _) = line(seed, 30, noise);
        let one = bci_line(&p, &AlgoConfig::default().with_iters(1, 1e-8)).unwrap();
        let old = identify::lbci_old_line(&p, &AlgoConfig::new(Variant::LbciOld)).unwrap();
        prop_assert_eq!(one.z_hat.re.to_bits(), old.z_hat.re.to_bits());
        prop_assert_eq!(one.z_hat.im.to_bits(), old.z_hat.im.to_bits());
    }
}
