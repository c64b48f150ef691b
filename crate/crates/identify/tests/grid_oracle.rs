use identify::{bci_line, AlgoConfig, LineProblem};
use phasor_core::{CVec, Complex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `N(z, g(z))`: the cost with gamma tied to z through the constraint.
fn tied_cost(p: &LineProblem, z: Complex) -> f64 {
    let mut total = 0.0;
    for m in 0..p.len() {
        let jz = p.j[m] * z;
        let t = jz.im / p.v_up[m];
        let g = (1.0 - t * t).max(0.0).sqrt();
        let r1 = p.v_up[m] * g - p.v_down[m] - jz.re;
        let r2 = p.v_up[m] * t.signum() * (1.0 - g * g).sqrt() - jz.im;
        total += r1 * r1 + r2 * r2;
    }
    total
}

#[test]
fn bci_is_global_optimum_on_z_grid() {
    for seed in 0..3u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = rng.random_range(0.2..0.5);
        let z = Complex::new(r, r * rng.random_range(0.5..1.0));
        let mut v_up = Vec::new();
        let mut j = Vec::new();
        for _ in 0..200 {
            let c = Complex::from_polar(rng.random_range(1.0..40.0), rng.random_range(-0.5..0.3));
            v_up.push((230.0 + c * z).norm());
            j.push(c);
        }
        let p = LineProblem::new(v_up, vec![230.0; 200], CVec(j)).unwrap();
        let max_delta = p.j.iter().zip(&p.v_up).map(|(c, v)| ((c * z).im / v).asin().abs()).fold(0.0, f64::max);
        assert!(max_delta <= 0.1 && max_delta > 0.02, "{max_delta}");

        let e = bci_line(&p, &AlgoConfig::default().with_iters(5000, 1e-14)).unwrap();
        assert!(e.converged);
        assert!((e.z_hat - z).norm() / z.norm() < 1e-6, "{}", e.z_hat);

        // 201 x 201 scan over [0, 2R] x [0, 2X].
        let steps = 200;
        let (hr, hx) = (2.0 * z.re / steps as f64, 2.0 * z.im / steps as f64);
        let mut best = (f64::INFINITY, Complex::new(0.0, 0.0));
        for a in 0..=steps {
            for b in 0..=steps {
                let zz = Complex::new(a as f64 * hr, b as f64 * hx);
                let c = tied_cost(&p, zz);
                if c < best.0 {
                    best = (c, zz);
                }
            }
        }
        let f_bci = tied_cost(&p, e.z_hat);
        assert!(f_bci <= best.0 + 1e-9, "{f_bci} vs grid {}", best.0);
        assert!((best.1.re - e.z_hat.re).abs() <= hr && (best.1.im - e.z_hat.im).abs() <= hx);
    }
}
