//! Reproducible random streams.
//!
//! Every stochastic routine draws from a ChaCha8 stream whose key is derived
//! from a user seed plus a path of indices (chunk, trial, step, ...). Work is
//! always partitioned by those indices, never by thread, so results do not
//! depend on the size of the worker pool.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::linalg::Vector;
use crate::scalar::Scalar;

pub type StreamRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hashes `seed` together with a path of indices into a child seed.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(seed), |acc, &i| splitmix64(acc ^ splitmix64(i.wrapping_add(0x632B_E59B_D9B4_E019))))
}

pub fn stream(seed: u64, path: &[u64]) -> StreamRng {
    StreamRng::seed_from_u64(derive_seed(seed, path))
}

/// Fills `out` with independent standard normals.
///
/// Draws are made in `f64` and converted, so `f32` and `f64` runs consume
/// the same stream.
pub fn fill_normal<T: Scalar, R: Rng + ?Sized>(rng: &mut R, out: &mut [T]) {
    for x in out {
        *x = T::of(rng.sample::<f64, _>(StandardNormal));
    }
}

pub fn gaussian_vector<T: Scalar, R: Rng + ?Sized>(rng: &mut R, p: usize) -> Vector<T> {
    let mut v = vec![T::zero(); p];
    fill_normal(rng, &mut v);
    Vector::from_vec_unchecked(v)
}

/// Uniform direction on the unit sphere in `p` dimensions.
pub fn unit_sphere<T: Scalar, R: Rng + ?Sized>(rng: &mut R, p: usize) -> Vector<T> {
    loop {
        let v = gaussian_vector::<T, R>(rng, p);
        let n = v.norm();
        if n > T::zero() && n.is_finite() {
            return v.scaled(n.recip());
        }
    }
}

/// Uniform unit vector orthogonal to `axis` (which must be nonzero, and `p >= 2`).
pub fn unit_perpendicular<T: Scalar, R: Rng + ?Sized>(rng: &mut R, axis: &Vector<T>) -> Vector<T> {
    let a = axis.normalized();
    loop {
        let g = gaussian_vector::<T, R>(rng, axis.len());
        let proj = g.dot(&a);
        let mut u = g.sub(&a.scaled(proj));
        // one re-orthogonalization pass keeps |<u, a>| at rounding level
        let proj2 = u.dot(&a);
        u = u.sub(&a.scaled(proj2));
        let n = u.norm();
        if n > T::tol(1e-6) {
            return u.scaled(n.recip());
        }
    }
}
