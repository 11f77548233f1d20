use std::f64::consts::PI;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use waveguide_bec::condensation::{alpha_f, random_vector, weight_m, CondensateRef, WeightFn};
use waveguide_bec::geometry::{bishop_frame, reparameterize_arclength, CurveSpec, FrameOptions};
use waveguide_bec::linalg::{cmatmul, cnorm, C64};
use waveguide_bec::manybody::{fock_dimension, one_body_density, FockBasis};
use waveguide_bec::nls::{evolve, EvolveOptions, Potential1D, Profile, Wave1D};
use waveguide_bec::scaling::{xi_cap, ScalingPoint};

fn binomial(n: u128, k: u128) -> u128 {
    (1..=k).fold(1, |acc, i| acc * (n + 1 - i) / i)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn fock_ranking_round_trips(modes in 1usize..6, particles in 1usize..5) {
        let basis = FockBasis::new(modes, particles).unwrap();
        prop_assert_eq!(basis.dim() as u128, binomial((modes + particles - 1) as u128, particles as u128));
        prop_assert_eq!(fock_dimension(modes, particles), basis.dim() as u128);
        for s in 0..basis.dim() {
            let occ = basis.occupation(s).to_vec();
            prop_assert_eq!(occ.iter().map(|&v| v as usize).sum::<usize>(), particles);
            prop_assert_eq!(basis.index(&occ), s);
        }
    }

    #[test]
    fn density_and_excitations_are_probabilities(seed in 0u64..1000, modes in 2usize..5, particles in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let basis = FockBasis::new(modes, particles).unwrap();
        let mut psi = random_vector(basis.dim(), &mut rng);
        let nrm = cnorm(&psi);
        psi.iter_mut().for_each(|c| *c /= nrm);
        let g = one_body_density(&basis, &psi);
        prop_assert!((g.trace().re - 1.0).abs() < 1e-12);
        prop_assert!((&g - g.adjoint()).iter().all(|z| z.norm() < 1e-12));
        let phi = random_vector(modes, &mut rng);
        let c = CondensateRef::new(&phi).unwrap();
        let dist = c.excitation_distribution(&basis, &psi);
        prop_assert!((dist.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(dist.iter().all(|&p| p > -1e-14));
        // the condensate itself has no excitations
        let cond = basis.condensate(&phi);
        prop_assert!(alpha_f(&c, &basis, &cond, &WeightFn::n(particles)).abs() < 1e-12);
    }

    #[test]
    fn weight_sandwich_below_the_cap(n in 2usize..3000, xi in 0.02f64..0.45) {
        let m = weight_m(n, xi).unwrap();
        prop_assert_eq!(m.sandwich_violation(), None);
        prop_assert!(m.weight.values.windows(2).all(|w| w[1] >= w[0]));
        prop_assert_eq!(m.weight.values[n], 1.0);
    }

    #[test]
    fn scaling_point_relations(n in 2.0f64..1e6, eps in 0.01f64..1.0, beta in 0.01f64..0.33) {
        let p = ScalingPoint::new(n, eps, beta).unwrap();
        prop_assert!((p.a() - eps * eps / n).abs() <= 1e-14 * p.a());
        prop_assert!((p.mu().powf(1.0 / beta) / p.a() - 1.0).abs() < 1e-9);
        prop_assert!(xi_cap(beta) > 0.0 && xi_cap(beta) < 1.0);
    }

    #[test]
    fn circle_frames_are_orthonormal(radius in 0.5f64..5.0) {
        let c = reparameterize_arclength(&CurveSpec::circle(radius), 1e-9).unwrap();
        let f = bishop_frame(&c, FrameOptions::default()).unwrap();
        prop_assert!(f.orthonormality_defect() < 1e-10);
        prop_assert!(f.kappa.iter().all(|k| (k - 1.0 / radius).abs() < 1e-8 / radius));
    }

    #[test]
    fn split_step_conserves_mass(center in -2.0f64..2.0, width in 0.5f64..1.5, momentum in -2.0f64..2.0, b in 0.0f64..3.0) {
        let w = Wave1D::from_fn(10.0, 128, |x| {
            C64::from_polar((-(x - center).powi(2) / (2.0 * width * width)).exp(), momentum * x)
        }).unwrap();
        let pot = Potential1D::stationary(Profile::Harmonic { strength: 0.3, center: 0.0 }.sample(&w.grid()));
        let t = evolve(&w, &pot, b, 2e-3, 0.2, EvolveOptions { record_every: 20, ..Default::default() }).unwrap();
        let m0 = t.reports[0].mass;
        prop_assert!(t.reports.iter().all(|r| (r.mass - m0).abs() < 1e-11 * m0));
    }

    #[test]
    fn complex_product_is_associative(seed in 0u64..1000, n in 1usize..9) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut mat = || nalgebra::DMatrix::from_vec(n, n, random_vector(n * n, &mut rng));
        let (a, b, c) = (mat(), mat(), mat());
        let d = cmatmul(&cmatmul(&a, &b), &c) - cmatmul(&a, &cmatmul(&b, &c));
        prop_assert!(d.iter().all(|z| z.norm() < 1e-12 * (n as f64)));
    }
}

#[test]
fn square_ground_mode_is_a_product_of_sines() {
    use waveguide_bec::transverse::{dirichlet_modes, CrossSection};
    let sq = dirichlet_modes(&CrossSection::rectangle(PI, PI, 32), 1).unwrap();
    // χ₀ = (2/π) sin y₁ sin y₂ up to sign
    let sign = sq.value_at(0, [PI / 2.0, PI / 2.0]).signum();
    let worst = sq
        .coords()
        .iter()
        .enumerate()
        .map(|(k, y)| (sign * sq.modes[0][k] - 2.0 / PI * y[0].sin() * y[1].sin()).abs())
        .fold(0.0, f64::max);
    assert!(worst < 2e-3, "{worst}");
}
