//! Band-variation properties across random systems: closed-form identity
//! for real spectra, the complex-spectrum upper bound, asymptotics of the
//! square-root approximation, roll-off slope, additivity, and the
//! real-vs-complex matched comparison.

use mvh_core::rng;
use mvh_core::spectral::{FrequencyInterval, TransferFunction};
use num_complex::Complex64;
use rand::Rng;

fn random_real_system(r: &mut rand_chacha::ChaCha12Rng) -> TransferFunction {
    let n = r.gen_range(1..=16);
    let lambdas: Vec<f64> = (0..n).map(|_| r.gen_range(0.1..50.0)).collect();
    let residues: Vec<f64> = (0..n).map(|_| r.gen_range(0.0..3.0)).collect();
    TransferFunction::from_real_poles(&lambdas, &residues).unwrap()
}

#[test]
fn quadrature_matches_arctan_closed_form_on_random_real_systems() {
    let mut r = rng::stream(31, "spectral-exact");
    for trial in 0..100 {
        let g = random_real_system(&mut r);
        let omega0 = r.gen_range(0.0..2.0 * g.max_pole_magnitude());
        let exact = g.tv_highfreq_exact_real(omega0).unwrap();
        let quad = g
            .total_variation_quadrature(FrequencyInterval::from_threshold(omega0).unwrap(), 1e-9)
            .unwrap();
        let rel = (quad - exact).abs() / exact;
        assert!(rel < 1e-6, "trial {trial}: quad {quad} vs exact {exact}");
    }
}

#[test]
fn complex_bound_inequality_on_random_systems() {
    let mut r = rng::stream(32, "spectral-bound");
    for trial in 0..100 {
        let n = r.gen_range(1..=8);
        let eigs: Vec<Complex64> = (0..n)
            .map(|_| Complex64::new(-r.gen_range(0.1..10.0), r.gen_range(-20.0..20.0)))
            .collect();
        let res: Vec<Complex64> = (0..n)
            .map(|_| Complex64::from_polar(r.gen_range(0.1..3.0), r.gen_range(0.0..6.28)))
            .collect();
        let g = TransferFunction::new(eigs, res, 0.0).unwrap();
        let omega0 = 2.0 * g.max_abs_imag() + 1.0;
        let bound = g.tv_highfreq_bound_complex(omega0).unwrap();
        let quad = g
            .total_variation_quadrature(FrequencyInterval::from_threshold(omega0).unwrap(), 1e-9)
            .unwrap();
        assert!(
            quad <= bound * (1.0 + 1e-9),
            "trial {trial}: quadrature {quad} exceeds bound {bound}"
        );
    }
}

#[test]
fn approximation_ratio_tends_to_one_far_above_cutoffs() {
    let mut r = rng::stream(33, "spectral-asym");
    for _ in 0..50 {
        let g = random_real_system(&mut r);
        let omega0 = 1000.0 * g.max_pole_magnitude();
        let approx = g.tv_highfreq_approx_real(omega0).unwrap();
        let exact = g.tv_highfreq_exact_real(omega0).unwrap();
        let ratio = approx / exact;
        assert!((0.999..=1.001).contains(&ratio), "ratio {ratio}");
    }
}

#[test]
fn log_log_slope_is_minus_one_beyond_cutoffs() {
    let mut r = rng::stream(34, "spectral-slope");
    for _ in 0..50 {
        let g = random_real_system(&mut r);
        let lo = 10.0 * g.max_pole_magnitude();
        let hi = 1000.0 * g.max_pole_magnitude();
        let m = g.magnitude_response(&[lo, hi]);
        let slope = (m[1].log10() - m[0].log10()) / (hi.log10() - lo.log10());
        assert!((slope + 1.0).abs() < 0.02, "slope {slope}");
    }
}

#[test]
fn band_variation_is_additive() {
    let mut r = rng::stream(35, "spectral-additive");
    let tol = 1e-9;
    for _ in 0..20 {
        let g = random_real_system(&mut r);
        let scale = g.max_pole_magnitude();
        let (a, b, c) = (0.0, 0.7 * scale, 3.0 * scale);
        let v_ab = g
            .total_variation_quadrature(FrequencyInterval::new(a, b).unwrap(), tol)
            .unwrap();
        let v_bc = g
            .total_variation_quadrature(FrequencyInterval::new(b, c).unwrap(), tol)
            .unwrap();
        let v_ac = g
            .total_variation_quadrature(FrequencyInterval::new(a, c).unwrap(), tol)
            .unwrap();
        let rel = ((v_ab + v_bc) - v_ac).abs() / v_ac;
        assert!(rel < 2.0 * tol.max(1e-12) * 1e3 + 2e-9, "additivity gap {rel}");
    }
}

#[test]
fn matched_real_spectrum_has_smaller_high_band_variation() {
    // pair each negative real eigenvalue -lambda with a complex one of the
    // same magnitude and positive imaginary part; beyond twice the largest
    // imaginary part, the real system's band variation is strictly smaller
    let mut r = rng::stream(36, "spectral-matched");
    let mut wins = 0;
    let trials = 100;
    for _ in 0..trials {
        let n = r.gen_range(1..=6);
        let lambdas: Vec<f64> = (0..n).map(|_| r.gen_range(0.5..10.0)).collect();
        let residues: Vec<f64> = (0..n).map(|_| r.gen_range(0.1..2.0)).collect();
        let real = TransferFunction::from_real_poles(&lambdas, &residues).unwrap();

        let mut max_w: f64 = 0.0;
        let eigs: Vec<Complex64> = lambdas
            .iter()
            .map(|&l| {
                let w = r.gen_range(0.3 * l..0.9 * l);
                max_w = max_w.max(w);
                Complex64::new(-(l * l - w * w).sqrt(), w)
            })
            .collect();
        let res: Vec<Complex64> = residues.iter().map(|&c| Complex64::new(c, 0.0)).collect();
        let complex = TransferFunction::new(eigs, res, 0.0).unwrap();

        let omega0 = 2.0 * max_w + 0.5;
        let iv = FrequencyInterval::from_threshold(omega0).unwrap();
        let v_real = real.total_variation_quadrature(iv, 1e-8).unwrap();
        let v_complex = complex.total_variation_quadrature(iv, 1e-8).unwrap();
        if v_real < v_complex {
            wins += 1;
        }
    }
    assert!(wins >= 99, "real spectrum smaller in only {wins}/{trials} trials");
}
