//! The four activation regions of a patch relative to `(w, w*)` and the
//! region-restricted second moments built from them.
//!
//! Boundary convention: `wᵀz ≥ 0` is active, `w*ᵀz < 0` is strictly
//! negative, so every patch lands in exactly one region.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::distributions::{DataView, Patches};
use crate::error::{check_dim, domain, Error, Result};
use crate::linalg::{axpy, dot, Matrix, SymMatrix, Vector};
use crate::reduce::{self, tree_reduce};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Region {
    /// `wᵀz ≥ 0, w*ᵀz ≥ 0`
    Pp,
    /// `wᵀz ≥ 0, w*ᵀz < 0`
    Pn,
    /// `wᵀz < 0, w*ᵀz < 0`
    Nn,
    /// `wᵀz < 0, w*ᵀz ≥ 0`
    Np,
}

impl Region {
    pub const ALL: [Region; 4] = [Region::Pp, Region::Pn, Region::Nn, Region::Np];

    #[inline]
    pub fn from_projections<T: Scalar>(wz: T, wsz: T) -> Self {
        match (wz >= T::zero(), wsz >= T::zero()) {
            (true, true) => Region::Pp,
            (true, false) => Region::Pn,
            (false, false) => Region::Nn,
            (false, true) => Region::Np,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

fn check_nonzero<T: Scalar>(v: &Vector<T>, name: &str) -> Result<()> {
    if v.iter().all(|&x| x == T::zero()) {
        return Err(domain(format!("{name} must be nonzero")));
    }
    Ok(())
}

pub fn classify<T: Scalar>(w: &Vector<T>, w_star: &Vector<T>, z: &[T]) -> Result<Region> {
    check_dim(w.len(), w_star.len())?;
    check_dim(w.len(), z.len())?;
    check_nonzero(w, "w")?;
    check_nonzero(w_star, "w_star")?;
    Ok(Region::from_projections(dot(w.as_slice(), z), dot(w_star.as_slice(), z)))
}

/// Per-sample patch averages `Z_S = (1/k) Σ Zᵢ 1{Zᵢ ∈ S}`.
#[derive(Clone, Debug, PartialEq)]
pub struct RegionVectors<T = f64> {
    pub z_pp: Vector<T>,
    pub z_pn: Vector<T>,
    pub z_np: Vector<T>,
}

pub fn region_vectors<T: Scalar>(w: &Vector<T>, w_star: &Vector<T>, z: Patches<'_, T>) -> Result<RegionVectors<T>> {
    check_dim(w.len(), w_star.len())?;
    check_dim(w.len(), z.p())?;
    check_nonzero(w, "w")?;
    check_nonzero(w_star, "w_star")?;
    let p = z.p();
    let mut out = [vec![T::zero(); p], vec![T::zero(); p], vec![T::zero(); p]];
    let inv_k = T::of_usize(z.k()).recip();
    for c in z.columns() {
        let slot = match Region::from_projections(dot(w.as_slice(), c), dot(w_star.as_slice(), c)) {
            Region::Pp => 0,
            Region::Pn => 1,
            Region::Np => 2,
            Region::Nn => continue,
        };
        axpy(&mut out[slot], inv_k, c);
    }
    let [pp, pn, np] = out;
    Ok(RegionVectors {
        z_pp: Vector::from_vec_unchecked(pp),
        z_pn: Vector::from_vec_unchecked(pn),
        z_np: Vector::from_vec_unchecked(np),
    })
}

/// Monte Carlo region moments at one `(w, w*)`.
///
/// `a_pp`, `a_pn` pool patches: `E[(1/k) Σ Zᵢ Zᵢᵀ 1{Zᵢ ∈ S}]`. `m_*` and
/// `c_*` use the patch averages: `m_pp = E[Z_pp Z_ppᵀ]`,
/// `c_pp_pn = E[Z_pp Z_pnᵀ]`, and so on. With `k = 1` the two families
/// coincide and the cross terms vanish.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentSet<T = f64> {
    pub p: usize,
    pub k: usize,
    pub n_used: usize,
    pub w: Vector<T>,
    pub w_star: Vector<T>,
    pub a_pp: SymMatrix<T>,
    pub a_pn: SymMatrix<T>,
    pub m_pp: SymMatrix<T>,
    pub m_pn: SymMatrix<T>,
    pub c_pp_pn: Matrix<T>,
    pub c_pp_np: Matrix<T>,
    pub c_pn_np: Matrix<T>,
    /// Patch counts per region, indexed by [`Region::index`].
    pub counts: [usize; 4],
}

impl<T: Scalar> MomentSet<T> {
    /// Moments for a single-patch model given `A_{w,w*}` and `A_{w,−w*}`.
    pub fn single_patch(w: Vector<T>, w_star: Vector<T>, a_pp: SymMatrix<T>, a_pn: SymMatrix<T>) -> Result<Self> {
        let p = w.len();
        check_dim(p, w_star.len())?;
        check_dim(p, a_pp.dim())?;
        check_dim(p, a_pn.dim())?;
        Ok(Self {
            p,
            k: 1,
            n_used: 0,
            w,
            w_star,
            m_pp: a_pp.clone(),
            m_pn: a_pn.clone(),
            a_pp,
            a_pn,
            c_pp_pn: Matrix::zeros(p, p),
            c_pp_np: Matrix::zeros(p, p),
            c_pn_np: Matrix::zeros(p, p),
            counts: [0; 4],
        })
    }

    /// Sum of the three cross-covariance operator norms.
    pub fn cross_norm_sum(&self) -> Result<T> {
        if self.k == 1 {
            return Ok(T::zero());
        }
        Ok(self.c_pp_pn.op_norm()? + self.c_pp_np.op_norm()? + self.c_pn_np.op_norm()?)
    }

    /// Smallest eigenvalue over the diagonal-region moments, relative to the
    /// largest; `None` when every moment is zero.
    pub fn worst_psd_ratio(&self) -> Result<Option<T>> {
        let mut worst: Option<T> = None;
        for m in [&self.a_pp, &self.a_pn, &self.m_pp, &self.m_pn] {
            let e = crate::linalg::eig_sym(m)?;
            let top = e.lambda_max().abs().max(e.lambda_min().abs());
            if top > T::zero() {
                let r = e.lambda_min() / top;
                worst = Some(worst.map_or(r, |w| w.min(r)));
            }
        }
        Ok(worst)
    }

    pub fn to_json(&self) -> Result<String>
    where
        T: Serialize,
    {
        Ok(serde_json::to_string_pretty(&MomentDoc::from(self))?)
    }

    pub fn from_json(s: &str) -> Result<Self>
    where
        T: DeserializeOwned,
    {
        let doc: MomentDoc<T> = serde_json::from_str(s)?;
        doc.try_into()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Deserialize<'de>"))]
struct MomentDoc<T> {
    p: usize,
    k: usize,
    n_used: usize,
    w: Vec<T>,
    w_star: Vec<T>,
    a_pp: Vec<Vec<T>>,
    a_pn: Vec<Vec<T>>,
    m_pp: Vec<Vec<T>>,
    m_pn: Vec<Vec<T>>,
    c_pp_pn: Vec<Vec<T>>,
    c_pp_np: Vec<Vec<T>>,
    c_pn_np: Vec<Vec<T>>,
    counts: [usize; 4],
}

impl<T: Scalar> From<&MomentSet<T>> for MomentDoc<T> {
    fn from(m: &MomentSet<T>) -> Self {
        Self {
            p: m.p,
            k: m.k,
            n_used: m.n_used,
            w: m.w.as_slice().to_vec(),
            w_star: m.w_star.as_slice().to_vec(),
            a_pp: m.a_pp.to_rows(),
            a_pn: m.a_pn.to_rows(),
            m_pp: m.m_pp.to_rows(),
            m_pn: m.m_pn.to_rows(),
            c_pp_pn: m.c_pp_pn.to_rows(),
            c_pp_np: m.c_pp_np.to_rows(),
            c_pn_np: m.c_pn_np.to_rows(),
            counts: m.counts,
        }
    }
}

impl<T: Scalar> TryFrom<MomentDoc<T>> for MomentSet<T> {
    type Error = Error;

    fn try_from(d: MomentDoc<T>) -> Result<Self> {
        let sym = |rows: &[Vec<T>]| -> Result<SymMatrix<T>> {
            let m = SymMatrix::from_rows(rows, T::zero())?;
            check_dim(d.p, m.dim())?;
            Ok(m)
        };
        let full = |rows: &[Vec<T>]| -> Result<Matrix<T>> {
            let m = Matrix::from_rows(rows)?;
            check_dim(d.p, m.shape().0)?;
            check_dim(d.p, m.shape().1)?;
            Ok(m)
        };
        let w = Vector::new(d.w.clone())?;
        let w_star = Vector::new(d.w_star.clone())?;
        check_dim(d.p, w.len())?;
        check_dim(d.p, w_star.len())?;
        Ok(Self {
            p: d.p,
            k: d.k,
            n_used: d.n_used,
            w,
            w_star,
            a_pp: sym(&d.a_pp)?,
            a_pn: sym(&d.a_pn)?,
            m_pp: sym(&d.m_pp)?,
            m_pn: sym(&d.m_pn)?,
            c_pp_pn: full(&d.c_pp_pn)?,
            c_pp_np: full(&d.c_pp_np)?,
            c_pn_np: full(&d.c_pn_np)?,
            counts: d.counts,
        })
    }
}

/// Unnormalized sums over a run of samples.
#[derive(Clone)]
struct Acc<T> {
    a_pp: SymMatrix<T>,
    a_pn: SymMatrix<T>,
    m_pp: SymMatrix<T>,
    m_pn: SymMatrix<T>,
    c_pp_pn: Matrix<T>,
    c_pp_np: Matrix<T>,
    c_pn_np: Matrix<T>,
    counts: [usize; 4],
    n: usize,
}

impl<T: Scalar> Acc<T> {
    fn new(p: usize, k: usize) -> Self {
        let (q, c) = if k == 1 { (0, 0) } else { (p, p) };
        Self {
            a_pp: SymMatrix::zeros(p),
            a_pn: SymMatrix::zeros(p),
            m_pp: SymMatrix::zeros(q),
            m_pn: SymMatrix::zeros(q),
            c_pp_pn: Matrix::zeros(c, c),
            c_pp_np: Matrix::zeros(c, c),
            c_pn_np: Matrix::zeros(c, c),
            counts: [0; 4],
            n: 0,
        }
    }

    fn merge(mut self, o: Self) -> Self {
        self.a_pp.add_assign(&o.a_pp);
        self.a_pn.add_assign(&o.a_pn);
        self.m_pp.add_assign(&o.m_pp);
        self.m_pn.add_assign(&o.m_pn);
        self.c_pp_pn.add_assign(&o.c_pp_pn);
        self.c_pp_np.add_assign(&o.c_pp_np);
        self.c_pn_np.add_assign(&o.c_pn_np);
        for (a, b) in self.counts.iter_mut().zip(o.counts) {
            *a += b;
        }
        self.n += o.n;
        self
    }

    fn push(&mut self, w: &[T], ws: &[T], z: Patches<'_, T>, scratch: &mut [Vec<T>; 3]) {
        self.n += 1;
        let k = z.k();
        let inv_k = T::of_usize(k).recip();
        if k == 1 {
            let c = z.column(0);
            let r = Region::from_projections(dot(w, c), dot(ws, c));
            self.counts[r.index()] += 1;
            match r {
                Region::Pp => self.a_pp.add_outer(c, T::one()),
                Region::Pn => self.a_pn.add_outer(c, T::one()),
                _ => {}
            }
            return;
        }
        for s in scratch.iter_mut() {
            s.iter_mut().for_each(|x| *x = T::zero());
        }
        let mut seen = [false; 3];
        for c in z.columns() {
            let r = Region::from_projections(dot(w, c), dot(ws, c));
            self.counts[r.index()] += 1;
            let slot = match r {
                Region::Pp => {
                    self.a_pp.add_outer(c, inv_k);
                    0
                }
                Region::Pn => {
                    self.a_pn.add_outer(c, inv_k);
                    1
                }
                Region::Np => 2,
                Region::Nn => continue,
            };
            seen[slot] = true;
            axpy(&mut scratch[slot], inv_k, c);
        }
        let [pp, pn, np] = &*scratch;
        if seen[0] {
            self.m_pp.add_outer(pp, T::one());
        }
        if seen[1] {
            self.m_pn.add_outer(pn, T::one());
        }
        if seen[0] && seen[1] {
            self.c_pp_pn.add_outer(pp, pn, T::one());
        }
        if seen[0] && seen[2] {
            self.c_pp_np.add_outer(pp, np, T::one());
        }
        if seen[1] && seen[2] {
            self.c_pn_np.add_outer(pn, np, T::one());
        }
    }

    fn run(data: DataView<'_, T>, w: &[T], ws: &[T]) -> Self {
        let (p, k) = (data.p(), data.k());
        reduce::map_reduce(
            data.len(),
            reduce::CHUNK,
            |range| {
                let mut acc = Acc::new(p, k);
                let mut scratch = [vec![T::zero(); p], vec![T::zero(); p], vec![T::zero(); p]];
                for z in data.slice(range).samples() {
                    acc.push(w, ws, z, &mut scratch);
                }
                acc
            },
            Acc::merge,
        )
        .unwrap_or_else(|| Acc::new(p, k))
    }

    fn finish(&self, p: usize, k: usize, w: &Vector<T>, w_star: &Vector<T>) -> MomentSet<T> {
        let inv_n = T::of_usize(self.n.max(1)).recip();
        let a_pp = self.a_pp.scaled(inv_n);
        let a_pn = self.a_pn.scaled(inv_n);
        let (m_pp, m_pn, c_pp_pn, c_pp_np, c_pn_np) = if k == 1 {
            (a_pp.clone(), a_pn.clone(), Matrix::zeros(p, p), Matrix::zeros(p, p), Matrix::zeros(p, p))
        } else {
            (
                self.m_pp.scaled(inv_n),
                self.m_pn.scaled(inv_n),
                self.c_pp_pn.scaled(inv_n),
                self.c_pp_np.scaled(inv_n),
                self.c_pn_np.scaled(inv_n),
            )
        };
        MomentSet {
            p,
            k,
            n_used: self.n,
            w: w.clone(),
            w_star: w_star.clone(),
            a_pp,
            a_pn,
            m_pp,
            m_pn,
            c_pp_pn,
            c_pp_np,
            c_pn_np,
            counts: self.counts,
        }
    }
}

fn check_inputs<T: Scalar>(data: &DataView<'_, T>, w: &Vector<T>, w_star: &Vector<T>) -> Result<()> {
    if data.is_empty() {
        return Err(domain("empty dataset"));
    }
    check_dim(data.p(), w.len())?;
    check_dim(data.p(), w_star.len())?;
    check_nonzero(w, "w")?;
    check_nonzero(w_star, "w_star")
}

pub fn estimate_moments<T: Scalar>(data: DataView<'_, T>, w: &Vector<T>, w_star: &Vector<T>) -> Result<MomentSet<T>> {
    check_inputs(&data, w, w_star)?;
    let acc = Acc::run(data, w.as_slice(), w_star.as_slice());
    Ok(acc.finish(data.p(), data.k(), w, w_star))
}

/// Pooled moments plus one estimate per contiguous batch, for batch-means
/// standard errors.
#[derive(Clone, Debug)]
pub struct MomentBatches<T = f64> {
    pub total: MomentSet<T>,
    pub batches: Vec<MomentSet<T>>,
}

impl<T: Scalar> MomentBatches<T> {
    /// Standard error of `f(total)` from the spread of `f` over batches.
    pub fn se(&self, f: impl Fn(&MomentSet<T>) -> Result<T>) -> Result<T> {
        let vals = self.batches.iter().map(&f).collect::<Result<Vec<_>>>()?;
        batch_means_se(&vals)
    }
}

/// `sd(values) / √b` with the `b − 1` denominator.
pub fn batch_means_se<T: Scalar>(values: &[T]) -> Result<T> {
    let b = values.len();
    if b < 2 {
        return Err(domain("need at least two batches for a standard error"));
    }
    let bt = T::of_usize(b);
    let mean = values.iter().copied().sum::<T>() / bt;
    let var = values.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / T::of_usize(b - 1);
    Ok((var / bt).sqrt())
}

/// Default batch count for standard errors.
pub const SE_BATCHES: usize = 16;

pub fn estimate_moments_batched<T: Scalar>(
    data: DataView<'_, T>,
    w: &Vector<T>,
    w_star: &Vector<T>,
    n_batches: usize,
) -> Result<MomentBatches<T>> {
    check_inputs(&data, w, w_star)?;
    let n = data.len();
    let b = n_batches.clamp(1, n);
    let (ws, wss) = (w.as_slice(), w_star.as_slice());
    let accs: Vec<Acc<T>> = (0..b).map(|i| Acc::run(data.slice(i * n / b..(i + 1) * n / b), ws, wss)).collect();
    let (p, k) = (data.p(), data.k());
    let batches = accs.iter().map(|a| a.finish(p, k, w, w_star)).collect();
    let total = tree_reduce(accs, Acc::merge).expect("at least one batch");
    Ok(MomentBatches { total: total.finish(p, k, w, w_star), batches })
}

/// Expected gradient assembled from the moments.
///
/// Single patch: `a_pp (w − w*) + a_pn w`. Multiple patches:
/// `m_pp (w − w*) + (c_pp_pn + c_pp_pnᵀ + m_pn) w − (c_pp_np + c_pp_pnᵀ + c_pn_np) w*`,
/// which is `E[(Z_pp + Z_pn)((Z_pp + Z_pn)ᵀw − (Z_pp + Z_np)ᵀw*)]` expanded.
pub fn population_gradient<T: Scalar>(m: &MomentSet<T>, w: &Vector<T>, w_star: &Vector<T>) -> Result<Vector<T>> {
    check_dim(m.p, w.len())?;
    check_dim(m.p, w_star.len())?;
    let d = w.sub(w_star);
    if m.k == 1 {
        return Ok(m.a_pp.mul_vec(d.as_slice()).add(&m.a_pn.mul_vec(w.as_slice())));
    }
    let ws = w.as_slice();
    let wss = w_star.as_slice();
    let c_pn_pp = m.c_pp_pn.transpose();
    let mut g = m.m_pp.mul_vec(d.as_slice());
    g.axpy(T::one(), m.c_pp_pn.mul_vec(ws).as_slice());
    g.axpy(T::one(), c_pn_pp.mul_vec(ws).as_slice());
    g.axpy(T::one(), m.m_pn.mul_vec(ws).as_slice());
    g.axpy(-T::one(), m.c_pp_np.mul_vec(wss).as_slice());
    g.axpy(-T::one(), c_pn_pp.mul_vec(wss).as_slice());
    g.axpy(-T::one(), m.c_pn_np.mul_vec(wss).as_slice());
    Ok(g)
}

/// `((w − w*)ᵀ a_pp (w − w*), (w − w*)ᵀ a_pn w)`; single-patch moments only.
pub fn lemma_decomposition<T: Scalar>(m: &MomentSet<T>, w: &Vector<T>, w_star: &Vector<T>) -> Result<(T, T)> {
    if m.k != 1 {
        return Err(domain("the two-term decomposition needs single-patch moments"));
    }
    check_dim(m.p, w.len())?;
    check_dim(m.p, w_star.len())?;
    let d = w.sub(w_star);
    let term1 = m.a_pp.bilinear(d.as_slice(), d.as_slice());
    let term2 = m.a_pn.bilinear(d.as_slice(), w.as_slice());
    Ok((term1, term2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::{sample, Dataset, DistributionSpec};
    use crate::linalg::eig_sym;

    fn v(x: &[f64]) -> Vector {
        Vector::from_slice(x).unwrap()
    }

    #[test]
    fn classify_examples() {
        let (w, ws) = (v(&[1.0, 0.0]), v(&[0.0, 1.0]));
        assert_eq!(classify(&w, &ws, &[1.0, 1.0]).unwrap(), Region::Pp);
        assert_eq!(classify(&w, &ws, &[1.0, -1.0]).unwrap(), Region::Pn);
        assert_eq!(classify(&w, &ws, &[-1.0, -1.0]).unwrap(), Region::Nn);
        assert_eq!(classify(&w, &ws, &[-1.0, 1.0]).unwrap(), Region::Np);
        // boundary
        assert_eq!(classify(&w, &ws, &[0.0, 0.0]).unwrap(), Region::Pp);
        assert!(classify(&v(&[0.0, 0.0]), &ws, &[1.0, 1.0]).is_err());
        assert!(classify(&w, &v(&[0.0, 0.0]), &[1.0, 1.0]).is_err());
    }

    #[test]
    fn region_vectors_average_by_region() {
        let z = crate::distributions::PatchSample::from_columns(&[vec![1.0, 1.0], vec![1.0, -1.0], vec![-2.0, 2.0], vec![-1.0, -1.0]])
            .unwrap();
        let r = region_vectors(&v(&[1.0, 0.0]), &v(&[0.0, 1.0]), z.view()).unwrap();
        assert_eq!(r.z_pp.as_slice(), &[0.25, 0.25]);
        assert_eq!(r.z_pn.as_slice(), &[0.25, -0.25]);
        assert_eq!(r.z_np.as_slice(), &[-0.5, 0.5]);
    }

    #[test]
    fn aligned_student_has_empty_pn() {
        let d = sample(&DistributionSpec::<f64>::gaussian(3, 1), 4000, 1).unwrap();
        let w = v(&[0.2, -0.5, 1.0]);
        let m = estimate_moments(d.view(), &w, &w).unwrap();
        assert_eq!(m.a_pn, SymMatrix::zeros(3));
        assert_eq!(m.counts[Region::Pn.index()] + m.counts[Region::Np.index()], 0);
        assert_eq!(m.counts.iter().sum::<usize>(), 4000);
        assert_eq!(population_gradient(&m, &w, &w).unwrap(), Vector::zeros(3));
        assert_eq!(lemma_decomposition(&m, &w, &w).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn identity_moments_give_plain_difference() {
        let (w, ws) = (v(&[1.0, 2.0]), v(&[-0.5, 0.5]));
        let m = MomentSet::single_patch(w.clone(), ws.clone(), SymMatrix::identity(2), SymMatrix::zeros(2)).unwrap();
        assert_eq!(population_gradient(&m, &w, &ws).unwrap(), w.sub(&ws));
    }

    #[test]
    fn decomposition_matches_inner_product() {
        let d = sample(&DistributionSpec::<f64>::gaussian(4, 1), 3000, 5).unwrap();
        let (w, ws) = (v(&[0.3, -1.0, 0.4, 0.2]), v(&[1.0, 0.1, -0.3, 0.5]));
        let m = estimate_moments(d.view(), &w, &ws).unwrap();
        let (t1, t2) = lemma_decomposition(&m, &w, &ws).unwrap();
        let g = population_gradient(&m, &w, &ws).unwrap();
        assert!((t1 + t2 - g.dot(&w.sub(&ws))).abs() < 1e-12);
        assert!(t1 >= 0.0 && t2 >= 0.0);
    }

    #[test]
    fn multi_patch_gradient_matches_sample_mean() {
        let data = sample(&DistributionSpec::<f64>::gaussian(3, 4), 3000, 9).unwrap();
        let (w, ws) = (v(&[0.7, -0.2, 0.4]), v(&[0.1, 0.9, -0.3]));
        let m = estimate_moments(data.view(), &w, &ws).unwrap();
        let g = population_gradient(&m, &w, &ws).unwrap();
        let direct = crate::model::batch_stats(data.view(), &w, &ws).unwrap().mean_gradient();
        // identical expectation over the same samples: agreement up to rounding
        assert!(g.distance(&direct) < 1e-12, "{g:?} vs {direct:?}");
        assert_eq!(m.counts.iter().sum::<usize>(), 3000 * 4);
        assert!(lemma_decomposition(&m, &w, &ws).is_err());
    }

    #[test]
    fn duplicate_patches_have_no_cross_terms() {
        let base = sample(&DistributionSpec::<f64>::gaussian(3, 1), 2000, 2).unwrap();
        let dup: Dataset = base.duplicated(3);
        let (w, ws) = (v(&[1.0, 0.5, 0.0]), v(&[0.0, 1.0, 0.2]));
        let m = estimate_moments(dup.view(), &w, &ws).unwrap();
        assert_eq!(m.cross_norm_sum().unwrap(), 0.0);
    }

    #[test]
    fn batched_total_agrees_with_single_pass() {
        let d = sample(&DistributionSpec::<f64>::unit_sphere(2, 1), 5000, 3).unwrap();
        let (w, ws) = (v(&[1.0, 0.0]), v(&[0.0, 1.0]));
        let one = estimate_moments(d.view(), &w, &ws).unwrap();
        let b = estimate_moments_batched(d.view(), &w, &ws, 8).unwrap();
        assert_eq!(b.batches.len(), 8);
        assert!(one.a_pn.scaled(-1.0).to_matrix().add(&b.total.a_pn.to_matrix()).frobenius_norm() < 1e-14);
        let se = b.se(|m| Ok(eig_sym(&m.a_pn)?.lambda_max())).unwrap();
        assert!(se > 0.0 && se < 0.05);
        assert_eq!(b.total.n_used, 5000);
    }

    #[test]
    fn json_round_trip() {
        let d = sample(&DistributionSpec::<f64>::gaussian(2, 2), 500, 4).unwrap();
        let m = estimate_moments(d.view(), &v(&[1.0, 0.3]), &v(&[-0.2, 1.0])).unwrap();
        let s = m.to_json().unwrap();
        assert!(s.contains("\"n_used\""));
        assert_eq!(MomentSet::from_json(&s).unwrap(), m);
    }

    #[test]
    fn batch_means_se_needs_two_values() {
        assert!(batch_means_se(&[1.0]).is_err());
        assert_eq!(batch_means_se(&[2.0, 2.0, 2.0]).unwrap(), 0.0);
    }
}
