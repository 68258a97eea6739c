use std::f64::consts::PI;

use relu_lab::distributions::{sample, DistributionSpec};
use relu_lab::init::{sample_ball, sample_ball_with, success_experiment, InitSpec};
use relu_lab::linalg::{angle, eig_sym, Vector};
use relu_lab::optimize::phi_bound;
use relu_lab::rng::{gaussian_vector, stream};
use relu_lab::smoothness::{closed_form_2d, grid, profile, verify_beta_bounds};
use relu_lab::RealVector;

#[test]
fn closed_form_eigenvalues_on_a_grid() {
    for phi in grid(0.0, PI, 100) {
        let e = eig_sym(&closed_form_2d(phi).unwrap()).unwrap();
        assert!((e.values[0] - (phi + phi.sin()) / 2.0).abs() < 1e-12, "φ={phi}");
        assert!((e.values[1] - (phi - phi.sin()) / 2.0).abs() < 1e-12, "φ={phi}");
    }
    assert!(closed_form_2d(-0.1).is_err());
    assert!(closed_form_2d(PI + 0.1).is_err());
}

#[test]
fn unit_circle_beta_is_one() {
    let data = sample(&DistributionSpec::unit_sphere(2, 1), 200_000, 5).unwrap();
    let ws = Vector::basis(2, 0);
    let prof = profile(data.view(), &ws, &grid(0.05, PI - 0.05, 25), 2, 1).unwrap();
    let r = verify_beta_bounds(&prof, &DistributionSpec::<f64>::unit_sphere(2, 1).kind);
    assert_eq!(r.pass, Some(true), "{r:?}");
    assert_eq!(prof.l_cross_hat, 0.0);
    assert!(!prof.is_multi_patch());
}

#[test]
fn gaussian_profile_matches_sector_formula() {
    // at angle φ the PP sector has width π − φ, so γ = (π − φ − sin φ)/(2π)
    // in the plane and (π − φ)/(2π) off it
    let p = 4;
    let data = sample(&DistributionSpec::gaussian(p, 1), 200_000, 7).unwrap();
    let ws = Vector::basis(p, 0);
    let phis = [0.3, 1.0, 2.0];
    let prof = profile(data.view(), &ws, &phis, 4, 3).unwrap();
    for (i, &phi) in phis.iter().enumerate() {
        let gamma = (PI - phi - phi.sin()) / (2.0 * PI);
        let ell = (PI - phi + phi.sin()) / (2.0 * PI);
        // min and max over directions bias slightly outward
        assert!((prof.gamma[i] - gamma).abs() < 5.0 * prof.gamma_se[i] + 2e-3, "φ={phi}: {} vs {gamma}", prof.gamma[i]);
        assert!((prof.ell[i] - ell).abs() < 5.0 * prof.ell_se[i] + 2e-3, "φ={phi}: {} vs {ell}", prof.ell[i]);
    }
}

#[test]
fn profile_is_independent_of_thread_count() {
    let data = sample(&DistributionSpec::gaussian(3, 2), 10_000, 8).unwrap();
    let ws = Vector::basis(3, 1);
    let phis = grid(0.1, 1.5, 6);
    let run = |n| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .unwrap()
            .install(|| profile(data.view(), &ws, &phis, 3, 4).unwrap())
    };
    assert_eq!(run(1), run(3));
}

#[test]
fn duplicated_patches_have_no_cross_term() {
    let base = sample(&DistributionSpec::gaussian(4, 1), 20_000, 2).unwrap();
    let ws = Vector::basis(4, 0);
    let prof = profile(base.duplicated(4).view(), &ws, &grid(0.1, 1.5, 8), 3, 1).unwrap();
    assert!(prof.is_multi_patch());
    assert_eq!(prof.l_cross_hat, 0.0);
}

#[test]
fn interval_draws_have_mean_abs_half_radius() {
    let n = 40_000;
    let mut rng = stream(3, &[]);
    let xs: Vec<f64> = (0..n).map(|_| sample_ball_with::<f64, _>(&mut rng, 1, 2.0).unwrap().as_slice()[0]).collect();
    let mean_abs = xs.iter().map(|x| x.abs()).sum::<f64>() / n as f64;
    // |x| is uniform on [0, 2]: sd 2/√12
    let se = 2.0 / 12f64.sqrt() / (n as f64).sqrt();
    assert!((mean_abs - 1.0).abs() < 4.0 * se, "{mean_abs}");
    let mean = xs.iter().sum::<f64>() / n as f64;
    assert!(mean.abs() < 4.0 * 2.0 / 3f64.sqrt() / (n as f64).sqrt());
}

#[test]
fn ball_volume_fraction_in_three_dimensions() {
    let n = 40_000;
    let mut rng = stream(4, &[]);
    let inside = (0..n)
        .filter(|_| sample_ball_with::<f64, _>(&mut rng, 3, 1.0).unwrap().norm() <= 0.5)
        .count() as f64
        / n as f64;
    let sigma = (0.125 * 0.875 / n as f64).sqrt();
    assert!((inside - 0.125).abs() < 4.0 * sigma, "{inside}");
}

#[test]
fn radial_law_passes_kolmogorov_smirnov() {
    // (‖x‖/r)^p is uniform on [0, 1]
    for p in [2usize, 5, 12] {
        let n = 5000;
        let mut rng = stream(6, &[p as u64]);
        let mut u: Vec<f64> = (0..n)
            .map(|_| (sample_ball_with::<f64, _>(&mut rng, p, 3.0).unwrap().norm() / 3.0).powi(p as i32))
            .collect();
        u.sort_by(f64::total_cmp);
        let d = u
            .iter()
            .enumerate()
            .map(|(i, &x)| ((i + 1) as f64 / n as f64 - x).max(x - i as f64 / n as f64))
            .fold(0.0, f64::max);
        assert!(d < 1.63 / (n as f64).sqrt(), "p={p}: D = {d}");
    }
}

#[test]
fn ball_directions_are_isotropic() {
    let n = 20_000;
    let p = 4;
    let mut m = vec![0.0; p];
    for i in 0..n {
        let v: RealVector = sample_ball(p, 1.0, i).unwrap().normalized();
        for (a, x) in m.iter_mut().zip(v.iter()) {
            *a += x / n as f64;
        }
    }
    // each coordinate of a uniform unit vector has variance 1/p
    let se = (1.0 / p as f64 / n as f64).sqrt();
    assert!(m.iter().all(|x| x.abs() < 4.0 * se), "{m:?}");
}

#[test]
fn success_rate_meets_bound_across_dimensions() {
    for p in [2usize, 4, 8, 16] {
        let amax = (1.0 / (2.0 * PI * p as f64)).sqrt();
        for (j, frac) in [0.1, 0.5, 1.0].into_iter().enumerate() {
            let spec = InitSpec { p, alpha: frac * amax, trials: 10_000, seed: 100 + j as u64 };
            assert!(spec.hypothesis_ok());
            let w_star: RealVector = gaussian_vector(&mut stream(p as u64, &[]), p);
            let r = success_experiment(&spec, &w_star).unwrap();
            assert!(r.frequency >= r.bound - 3.0 * r.sigma, "{r:?}");
        }
    }
}

#[test]
fn angle_never_exceeds_distance_bound() {
    let mut rng = stream(77, &[]);
    let mut checked = 0;
    for i in 0..10_000 {
        let p = 2 + i % 9;
        let ws: RealVector = gaussian_vector(&mut rng, p);
        let mut w: RealVector = gaussian_vector(&mut rng, p);
        // half the pairs start close to the teacher
        if i % 2 == 0 {
            w = ws.add(&w.scaled(0.3 * ws.norm() / w.norm()));
        }
        let d = w.distance(&ws);
        if d < ws.norm() {
            checked += 1;
            assert!(angle(&w, &ws).unwrap() <= phi_bound(d, ws.norm()) + 1e-12);
        }
    }
    assert!(checked >= 5000);
}
