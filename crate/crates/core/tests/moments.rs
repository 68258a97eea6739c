use std::f64::consts::PI;

use relu_lab::distributions::{sample, DistributionSpec};
use relu_lab::linalg::{angle, eig_sym, rotate_toward, Vector};
use relu_lab::model::{batch_stats, loss, predict, sample_gradient};
use relu_lab::regions::{
    estimate_moments, estimate_moments_batched, population_gradient, region_vectors, Region, SE_BATCHES,
};
use relu_lab::rng::{gaussian_vector, stream, unit_perpendicular};
use relu_lab::smoothness::closed_form_2d;
use relu_lab::RealVector;

/// Orthonormal pair spanning the plane of `w*` and a perpendicular draw.
fn plane(p: usize, seed: u64) -> (RealVector, RealVector) {
    let mut rng = stream(seed, &[]);
    let ws: RealVector = gaussian_vector::<f64, _>(&mut rng, p).normalized();
    let u = unit_perpendicular(&mut rng, &ws);
    (ws, u)
}

#[test]
fn gaussian_region_moments_match_sector_integrals() {
    // For Z ~ N(0, I) a sector of width ψ in the (w, w*) plane carries
    // planar eigenvalues (ψ ± sin ψ)/(2π) and ψ/(2π) on the complement.
    let p = 5;
    let data = sample(&DistributionSpec::gaussian(p, 1), 200_000, 3).unwrap();
    for (i, theta) in [0.3, 1.0, PI / 2.0, 2.4].into_iter().enumerate() {
        let (ws, u) = plane(p, 10 + i as u64);
        let w = rotate_toward(&ws, &u, theta).unwrap().scaled(1.7);
        let mb = estimate_moments_batched(data.view(), &w, &ws, SE_BATCHES).unwrap();
        let (x, y) = (ws.as_slice(), u.as_slice());
        let mut comp = gaussian_vector::<f64, _>(&mut stream(99, &[i as u64]), p);
        comp.axpy(-comp.dot(&ws), x);
        comp.axpy(-comp.dot(&u), y);
        let comp = comp.normalized();
        for (psi, pick) in [(PI - theta, 0usize), (theta, 1)] {
            let m = |s: &relu_lab::RealMomentSet| if pick == 0 { s.a_pp.clone() } else { s.a_pn.clone() };
            let planar_eigs = |s: &relu_lab::RealMomentSet| {
                let a = m(s);
                eig_sym(&relu_lab::RealSymMatrix::from_fn(2, |r, c| a.bilinear([x, y][r], [x, y][c]))).unwrap().values
            };
            let e = planar_eigs(&mb.total);
            // eigenvalues come out in descending order
            let want = [(psi + psi.sin()) / (2.0 * PI), (psi - psi.sin()) / (2.0 * PI)];
            for j in 0..2 {
                let se = mb.se(|s| Ok(planar_eigs(s)[j])).unwrap();
                assert!((e[j] - want[j]).abs() < 4.0 * se + 1e-4, "θ={theta} {e:?} vs {want:?}");
            }
            let a = m(&mb.total);
            let q = a.bilinear(comp.as_slice(), comp.as_slice());
            let se_q = mb.se(|s| Ok(m(s).bilinear(comp.as_slice(), comp.as_slice()))).unwrap();
            assert!((q - psi / (2.0 * PI)).abs() < 4.0 * se_q + 1e-4, "θ={theta} complement {q}");
        }
    }
}

#[test]
fn region_counts_partition_the_patches() {
    let data = sample(&DistributionSpec::gaussian(4, 3), 5000, 1).unwrap();
    let (ws, u) = plane(4, 2);
    let w = rotate_toward(&ws, &u, 2.0).unwrap();
    let m = estimate_moments(data.view(), &w, &ws).unwrap();
    assert_eq!(m.counts.iter().sum::<usize>(), 5000 * 3);
    assert!(m.counts.iter().all(|&c| c > 0));
    // Z_pp + Z_pn is the average of the patches w activates
    for z in data.view().samples().take(200) {
        let rv = region_vectors(&w, &ws, z).unwrap();
        let mut active = vec![0.0; 4];
        for c in z.columns() {
            if w.as_slice().iter().zip(c).map(|(a, b)| a * b).sum::<f64>() >= 0.0 {
                for (a, x) in active.iter_mut().zip(c) {
                    *a += x / 3.0;
                }
            }
        }
        let sum = rv.z_pp.add(&rv.z_pn);
        assert!(sum.distance(&Vector::new(active).unwrap()) < 1e-12);
    }
}

#[test]
fn gradient_matches_finite_differences() {
    let mut worst: f64 = 0.0;
    for case in 0..200u64 {
        let mut rng = stream(500, &[case]);
        let p = 2 + (case as usize % 7);
        let k = 1 + (case as usize % 4);
        let ws: RealVector = gaussian_vector(&mut rng, p);
        let w: RealVector = gaussian_vector(&mut rng, p);
        let data = sample(&DistributionSpec::gaussian(p, k), 1, 700 + case).unwrap();
        let z = data.sample(0);
        let g = sample_gradient(&w, &ws, z).unwrap().g;
        let h = 1e-6;
        for i in 0..p {
            let mut a = w.clone();
            a.as_mut_slice()[i] += h;
            let mut b = w.clone();
            b.as_mut_slice()[i] -= h;
            let fd = (loss(&a, &ws, z).unwrap() - loss(&b, &ws, z).unwrap()) / (2.0 * h);
            let rel = (fd - g.as_slice()[i]).abs() / g.norm().max(1e-3);
            worst = worst.max(rel);
        }
    }
    assert!(worst < 1e-5, "worst relative error {worst}");
}

#[test]
fn prediction_is_nonnegative_and_homogeneous() {
    let data = sample(&DistributionSpec::gaussian(6, 4), 500, 8).unwrap();
    let w: RealVector = gaussian_vector(&mut stream(1, &[]), 6);
    for z in data.view().samples() {
        let f = predict(&w, z).unwrap();
        assert!(f >= 0.0);
        for c in [0.5, 2.0, 7.0] {
            let fc = predict(&w.scaled(c), z).unwrap();
            assert!((fc - c * f).abs() <= 1e-12 * (1.0 + fc.abs()));
        }
    }
}

#[test]
fn mean_gradient_matches_gaussian_closed_form() {
    // E[∇] = w/2 − ((π − θ)w* + ‖w*‖ sin θ · w/‖w‖)/(2π) for Z ~ N(0, I), k = 1
    let p = 6;
    let n = 320_000;
    let data = sample(&DistributionSpec::gaussian(p, 1), n, 21).unwrap();
    for seed in 0..4u64 {
        let mut rng = stream(40, &[seed]);
        let ws: RealVector = gaussian_vector(&mut rng, p);
        let w: RealVector = gaussian_vector(&mut rng, p);
        let th = angle(&w, &ws).unwrap();
        let mut want = w.scaled(0.5);
        want.axpy(-(PI - th) / (2.0 * PI), ws.as_slice());
        want.axpy(-ws.norm() * th.sin() / (2.0 * PI * w.norm()), w.as_slice());
        let b = SE_BATCHES;
        let per: Vec<RealVector> = (0..b)
            .map(|i| batch_stats(data.view().slice(i * n / b..(i + 1) * n / b), &w, &ws).unwrap().mean_gradient())
            .collect();
        let got = batch_stats(data.view(), &w, &ws).unwrap().mean_gradient();
        for j in 0..p {
            let vals: Vec<f64> = per.iter().map(|g| g.as_slice()[j]).collect();
            let se = relu_lab::regions::batch_means_se(&vals).unwrap();
            let err = (got.as_slice()[j] - want.as_slice()[j]).abs();
            assert!(err < 4.0 * se, "seed {seed} coord {j}: {err} vs se {se}");
        }
        // the moment route gives the same vector
        let m = estimate_moments(data.view(), &w, &ws).unwrap();
        let pg = population_gradient(&m, &w, &ws).unwrap();
        assert!(pg.distance(&got) < 1e-10 * (1.0 + got.norm()));
    }
}

#[test]
fn swapping_teacher_and_student_swaps_pn_and_np() {
    let data = sample(&DistributionSpec::gaussian(4, 3), 20_000, 4).unwrap();
    let (ws, u) = plane(4, 5);
    let w = rotate_toward(&ws, &u, 1.2).unwrap().scaled(0.8);
    let a = estimate_moments(data.view(), &w, &ws).unwrap();
    let b = estimate_moments(data.view(), &ws, &w).unwrap();
    assert_eq!(a.m_pp, b.m_pp);
    assert_eq!(a.counts[Region::Pp.index()], b.counts[Region::Pp.index()]);
    assert_eq!(a.counts[Region::Pn.index()], b.counts[Region::Np.index()]);
    assert_eq!(a.counts[Region::Np.index()], b.counts[Region::Pn.index()]);
    assert_eq!(a.counts[Region::Nn.index()], b.counts[Region::Nn.index()]);

    let one = sample(&DistributionSpec::gaussian(4, 1), 20_000, 6).unwrap();
    let a = estimate_moments(one.view(), &w, &ws).unwrap();
    let b = estimate_moments(one.view(), &ws, &w).unwrap();
    assert_eq!(a.a_pp, b.a_pp);
}

#[test]
fn pn_mass_grows_with_the_angle() {
    // in a fixed plane the PN sector is nested in θ, so λmax(a_pn) cannot drop
    let data = sample(&DistributionSpec::unit_sphere(3, 1), 50_000, 9).unwrap();
    let (ws, u) = plane(3, 7);
    let mut last = 0.0;
    for i in 1..=40 {
        let th = PI * i as f64 / 41.0;
        let w = rotate_toward(&ws, &u, th).unwrap();
        let l = estimate_moments(data.view(), &w, &ws).unwrap().a_pn.lambda_max().unwrap();
        assert!(l >= last - 1e-15, "θ={th}: {l} < {last}");
        last = l;
    }
}

#[test]
fn unit_circle_moments_match_planar_closed_form() {
    let data = sample(&DistributionSpec::unit_sphere(2, 1), 200_000, 12).unwrap();
    let ws = Vector::from_slice(&[1.0, 0.0]).unwrap();
    for (i, th) in [0.4, PI / 2.0, 2.5].into_iter().enumerate() {
        let w = Vector::from_slice(&[th.cos(), th.sin()]).unwrap();
        let mb = estimate_moments_batched(data.view(), &w, &ws, SE_BATCHES).unwrap();
        let want = eig_sym(&closed_form_2d(th).unwrap()).unwrap();
        let got = eig_sym(&mb.total.a_pn).unwrap();
        for j in 0..2 {
            let se = mb.se(|m| Ok(eig_sym(&m.a_pn).unwrap().values[j])).unwrap();
            let err = (got.values[j] - want.values[j] / (2.0 * PI)).abs();
            assert!(err < 4.0 * se + 1e-6, "case {i} eig {j}: {err} vs {se}");
        }
    }
}
