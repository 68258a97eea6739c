//! Patch distributions: generation, file ingestion, and patch extraction.
//!
//! A [`Dataset`] stores `n` samples flat, each sample a `p×k` patch matrix in
//! column-major order (patch 0 first). Generation is chunked with per-chunk
//! seeds so the output is identical for any thread count.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::ops::Range;
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, domain, Error, Result};
use crate::linalg::{angle_slices, dot, Vector};
use crate::reduce::chunk_ranges;
use crate::rng::{self, fill_normal};
use crate::scalar::Scalar;

const GEN_CHUNK: usize = 1024;

/// Which patch law to draw from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Deserialize<'de>"))]
pub enum DistributionKind<T = f64> {
    /// Every patch entry i.i.d. `N(0, 1)`.
    StandardGaussian,
    /// Every patch i.i.d. uniform on the unit sphere.
    UnitSphere,
    /// Unit-norm patches clustered around a per-sample center, with the
    /// centers kept away from the hyperplane orthogonal to `margin_dir`.
    ClusteredPatches {
        /// Maximum angle between any patch and the sample's patch average.
        rho: T,
        /// Declared bound on boundary mass per radian (`P[band φ] ≤ μφ`).
        mu: T,
        margin_dir: Vector<T>,
        /// Minimum angular distance of a center from the margin hyperplane.
        /// Defaults to `1.5·rho`, which leaves every patch at least `rho` away.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        gap: Option<T>,
    },
    /// Samples read from a dataset file.
    FromFile { path: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Deserialize<'de>"))]
pub struct DistributionSpec<T = f64> {
    #[serde(flatten)]
    pub kind: DistributionKind<T>,
    /// Patch dimension.
    pub p: usize,
    /// Patches per sample.
    pub k: usize,
}

impl<T: Scalar> DistributionSpec<T> {
    pub fn gaussian(p: usize, k: usize) -> Self {
        Self { kind: DistributionKind::StandardGaussian, p, k }
    }

    pub fn unit_sphere(p: usize, k: usize) -> Self {
        Self { kind: DistributionKind::UnitSphere, p, k }
    }

    pub fn clustered(p: usize, k: usize, rho: T, mu: T, margin_dir: Vector<T>) -> Self {
        Self {
            kind: DistributionKind::ClusteredPatches { rho, mu, margin_dir, gap: None },
            p,
            k,
        }
    }

    pub fn from_file(p: usize, k: usize, path: impl Into<PathBuf>) -> Self {
        Self { kind: DistributionKind::FromFile { path: path.into() }, p, k }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p == 0 || self.k == 0 {
            return Err(domain("patch dimension p and patch count k must be ≥ 1"));
        }
        if let DistributionKind::ClusteredPatches { rho, mu, margin_dir, .. } = &self.kind {
            if !(*rho >= T::zero() && *rho < T::FRAC_PI_2()) {
                return Err(domain(format!("rho = {rho} outside [0, π/2)")));
            }
            if !(*mu >= T::zero()) {
                return Err(domain(format!("mu = {mu} must be ≥ 0")));
            }
            check_dim(self.p, margin_dir.len())?;
            if !(margin_dir.norm() > T::zero()) {
                return Err(domain("margin direction must be nonzero"));
            }
            if self.p < 2 {
                return Err(domain("clustered patches need p ≥ 2"));
            }
            let gap = self.margin_gap().unwrap_or_else(T::zero);
            if !(gap >= T::zero() && gap < T::FRAC_PI_2() - T::of(1e-3)) {
                return Err(domain(format!("margin gap {gap} leaves no admissible centers")));
            }
        }
        Ok(())
    }

    /// Effective center exclusion half-width for clustered patches.
    pub fn margin_gap(&self) -> Option<T> {
        match &self.kind {
            DistributionKind::ClusteredPatches { rho, gap, .. } => Some(gap.unwrap_or(*rho * T::of(1.5))),
            _ => None,
        }
    }
}

/// One input: `k` patches of dimension `p`, stored column-major.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchSample<T = f64> {
    p: usize,
    k: usize,
    data: Vec<T>,
}

impl<T: Scalar> PatchSample<T> {
    pub fn from_columns(columns: &[Vec<T>]) -> Result<Self> {
        let p = columns.first().map_or(0, Vec::len);
        if p == 0 {
            return Err(domain("a patch sample needs at least one nonempty column"));
        }
        let mut data = Vec::with_capacity(p * columns.len());
        for c in columns {
            check_dim(p, c.len())?;
            data.extend_from_slice(c);
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(domain("patch entries must be finite"));
        }
        Ok(Self { p, k: columns.len(), data })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn column(&self, i: usize) -> &[T] {
        &self.data[i * self.p..(i + 1) * self.p]
    }

    pub fn view(&self) -> Patches<'_, T> {
        Patches { p: self.p, data: &self.data }
    }
}

/// Borrowed `p×k` patch matrix.
#[derive(Clone, Copy, Debug)]
pub struct Patches<'a, T = f64> {
    p: usize,
    data: &'a [T],
}

impl<'a, T: Scalar> Patches<'a, T> {
    pub fn new(p: usize, data: &'a [T]) -> Self {
        debug_assert!(p > 0 && data.len().is_multiple_of(p));
        Self { p, data }
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn k(&self) -> usize {
        self.data.len() / self.p
    }

    pub fn column(&self, i: usize) -> &'a [T] {
        &self.data[i * self.p..(i + 1) * self.p]
    }

    pub fn columns(&self) -> std::slice::ChunksExact<'a, T> {
        self.data.chunks_exact(self.p)
    }

    /// Patch average `(1/k) Σ Zᵢ`.
    pub fn average(&self) -> Vec<T> {
        let mut avg = vec![T::zero(); self.p];
        for c in self.columns() {
            for (a, &x) in avg.iter_mut().zip(c) {
                *a = *a + x;
            }
        }
        let inv = T::of_usize(self.k()).recip();
        avg.iter_mut().for_each(|a| *a = *a * inv);
        avg
    }

    pub fn to_owned(&self) -> PatchSample<T> {
        PatchSample { p: self.p, k: self.k(), data: self.data.to_vec() }
    }
}

/// Borrowed run of consecutive samples sharing `(p, k)`.
#[derive(Clone, Copy, Debug)]
pub struct DataView<'a, T = f64> {
    p: usize,
    k: usize,
    data: &'a [T],
}

impl<'a, T: Scalar> DataView<'a, T> {
    pub fn p(&self) -> usize {
        self.p
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.data.len() / (self.p * self.k)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn sample(&self, i: usize) -> Patches<'a, T> {
        let s = self.p * self.k;
        Patches { p: self.p, data: &self.data[i * s..(i + 1) * s] }
    }

    pub fn slice(&self, range: Range<usize>) -> DataView<'a, T> {
        let s = self.p * self.k;
        DataView { p: self.p, k: self.k, data: &self.data[range.start * s..range.end * s] }
    }

    pub fn samples(&self) -> impl Iterator<Item = Patches<'a, T>> + 'a {
        let p = self.p;
        self.data.chunks_exact(self.p * self.k).map(move |d| Patches { p, data: d })
    }
}

/// `n` samples with identical `(p, k)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset<T = f64> {
    /// Generating law; `None` for datasets assembled in memory.
    pub spec: Option<DistributionSpec<T>>,
    pub seed: u64,
    p: usize,
    k: usize,
    data: Vec<T>,
}

impl<T: Scalar> Dataset<T> {
    /// Assembles a dataset from flat column-major samples.
    pub fn from_flat(p: usize, k: usize, data: Vec<T>) -> Result<Self> {
        if p == 0 || k == 0 || !data.len().is_multiple_of(p * k) {
            return Err(domain(format!("{} values do not form whole {p}×{k} samples", data.len())));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(domain("dataset entries must be finite"));
        }
        Ok(Self { spec: None, seed: 0, p, k, data })
    }

    pub fn from_samples(samples: &[PatchSample<T>]) -> Result<Self> {
        let first = samples.first().ok_or_else(|| domain("empty sample list"))?;
        let (p, k) = (first.p, first.k);
        let mut data = Vec::with_capacity(samples.len() * p * k);
        for s in samples {
            check_dim(p, s.p)?;
            check_dim(k, s.k)?;
            data.extend_from_slice(&s.data);
        }
        Self::from_flat(p, k, data)
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.data.len() / (self.p * self.k)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn sample(&self, i: usize) -> Patches<'_, T> {
        self.view().sample(i)
    }

    pub fn view(&self) -> DataView<'_, T> {
        DataView { p: self.p, k: self.k, data: &self.data }
    }

    pub fn as_flat(&self) -> &[T] {
        &self.data
    }

    /// One-patch dataset whose patch is each sample's patch average.
    pub fn averaged(&self) -> Self {
        let data = self.view().samples().flat_map(|s| s.average()).collect();
        Self { spec: None, seed: self.seed, p: self.p, k: 1, data }
    }

    /// Repeats every sample's first patch `k` times (`Z₁ = … = Z_k`).
    pub fn duplicated(&self, k: usize) -> Self {
        let mut data = Vec::with_capacity(self.len() * self.p * k);
        for s in self.view().samples() {
            for _ in 0..k {
                data.extend_from_slice(s.column(0));
            }
        }
        Self { spec: None, seed: self.seed, p: self.p, k, data }
    }

    /// Applies `f` to every patch in place (e.g. a rotation).
    pub fn map_patches(&self, f: impl Fn(&[T]) -> Vec<T>) -> Self {
        let data = self.data.chunks_exact(self.p).flat_map(f).collect();
        Self { spec: self.spec.clone(), seed: self.seed, p: self.p, k: self.k, data }
    }
}

/// Draws `n` i.i.d. samples from `spec`.
///
/// Deterministic in `(spec, n, seed)`. For `FromFile` the first `n` samples
/// of the file are returned and `seed` is unused.
pub fn sample<T: Scalar>(spec: &DistributionSpec<T>, n: usize, seed: u64) -> Result<Dataset<T>> {
    spec.validate()?;
    if n == 0 {
        return Err(domain("sample size must be ≥ 1"));
    }
    let (p, k) = (spec.p, spec.k);
    let data = match &spec.kind {
        DistributionKind::FromFile { path } => {
            let file = read_dataset::<T>(path)?;
            check_dim(p, file.p)?;
            check_dim(k, file.k)?;
            if file.len() < n {
                return Err(domain(format!("{} holds {} samples, {n} requested", path.display(), file.len())));
            }
            let mut data = file.data;
            data.truncate(n * p * k);
            data
        }
        kind => {
            let gap = spec.margin_gap();
            let parts: Vec<Vec<T>> = chunk_ranges(n, GEN_CHUNK)
                .into_par_iter()
                .enumerate()
                .map(|(chunk, range)| {
                    let mut rng = rng::stream(seed, &[chunk as u64]);
                    let mut out = vec![T::zero(); range.len() * p * k];
                    for s in out.chunks_exact_mut(p * k) {
                        draw_sample(kind, p, gap, &mut rng, s);
                    }
                    out
                })
                .collect();
            parts.concat()
        }
    };
    Ok(Dataset { spec: Some(spec.clone()), seed, p, k, data })
}

fn draw_sample<T: Scalar, R: Rng>(
    kind: &DistributionKind<T>,
    p: usize,
    gap: Option<T>,
    rng: &mut R,
    out: &mut [T],
) {
    match kind {
        DistributionKind::StandardGaussian => fill_normal(rng, out),
        DistributionKind::UnitSphere => {
            for col in out.chunks_exact_mut(p) {
                col.copy_from_slice(rng::unit_sphere::<T, R>(rng, p).as_slice());
            }
        }
        DistributionKind::ClusteredPatches { rho, margin_dir, .. } => {
            draw_clustered(rng, *rho, margin_dir, gap.unwrap_or_else(T::zero), out)
        }
        DistributionKind::FromFile { .. } => unreachable!("file datasets are not drawn"),
    }
}

fn draw_clustered<T: Scalar, R: Rng>(rng: &mut R, rho: T, dir: &Vector<T>, gap: T, out: &mut [T]) {
    let p = dir.len();
    let center = loop {
        let c = rng::unit_sphere::<T, R>(rng, p);
        let theta = c.dot(dir) / dir.norm();
        let theta = theta.max(-T::one()).min(T::one()).acos();
        if (theta - T::FRAC_PI_2()).abs() >= gap {
            break c;
        }
    };
    let half = rho * T::of(0.5);
    loop {
        for col in out.chunks_exact_mut(p) {
            let u = rng::unit_perpendicular(rng, &center);
            let a = half * T::of(rng.gen::<f64>());
            let mut z = center.scaled(a.cos());
            z.axpy(a.sin(), u.as_slice());
            let z = z.normalized();
            col.copy_from_slice(z.as_slice());
        }
        let avg = Patches::new(p, out).average();
        let ok = out
            .chunks_exact(p)
            .all(|c| angle_slices(c, &avg).is_ok_and(|t| t <= rho));
        if ok {
            return;
        }
    }
}

/// Slides a window of `patch_size` over `x` with the given stride; column `i`
/// is `x[i·stride .. i·stride + patch_size]`.
pub fn extract_patches<T: Scalar>(x: &[T], patch_size: usize, stride: usize) -> Result<PatchSample<T>> {
    if patch_size == 0 || stride == 0 {
        return Err(domain("patch size and stride must be ≥ 1"));
    }
    if patch_size > x.len() {
        return Err(domain(format!("patch size {patch_size} exceeds input length {}", x.len())));
    }
    let k = (x.len() - patch_size) / stride + 1;
    let columns: Vec<Vec<T>> = (0..k).map(|i| x[i * stride..i * stride + patch_size].to_vec()).collect();
    PatchSample::from_columns(&columns)
}

/// Fraction of all patches whose angle to `w_star` lies within `phi` of π/2.
pub fn margin_mass<T: Scalar>(data: DataView<'_, T>, w_star: &Vector<T>, phi: T) -> Result<T> {
    if data.is_empty() {
        return Err(domain("margin mass of an empty dataset"));
    }
    check_dim(data.p(), w_star.len())?;
    if !(phi > T::zero() && phi <= T::FRAC_PI_2()) {
        return Err(domain(format!("band half-width {phi} outside (0, π/2]")));
    }
    let wn = w_star.norm();
    if !(wn > T::zero()) {
        return Err(domain("teacher must be nonzero"));
    }
    let mut inside = 0usize;
    let mut total = 0usize;
    for s in data.samples() {
        for z in s.columns() {
            total += 1;
            let zn = dot(z, z).sqrt();
            if zn == T::zero() {
                continue;
            }
            let c = (dot(z, w_star.as_slice()) / (zn * wn)).max(-T::one()).min(T::one());
            if (c.acos() - T::FRAC_PI_2()).abs() <= phi {
                inside += 1;
            }
        }
    }
    Ok(T::of_usize(inside) / T::of_usize(total))
}

/// Writes the text dataset format: a `p k n` header, then one line per sample
/// with `p·k` values, patch 0's coordinates first.
pub fn write_dataset<T: Scalar>(path: &Path, data: &Dataset<T>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{} {} {}", data.p, data.k, data.len())?;
    for s in data.data.chunks_exact(data.p * data.k) {
        let mut first = true;
        for x in s {
            if !first {
                out.write_all(b" ")?;
            }
            write!(out, "{x}")?;
            first = false;
        }
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_dataset<T: Scalar>(path: &Path) -> Result<Dataset<T>> {
    let fail = |line: usize, msg: String| Error::Format { path: path.to_path_buf(), line, msg };
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines().enumerate();
    let header = loop {
        match lines.next() {
            Some((_, l)) => {
                let l = l?;
                if !l.trim().is_empty() {
                    break l;
                }
            }
            None => return Err(fail(1, "missing `p k n` header".into())),
        }
    };
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(str::parse)
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| fail(1, format!("bad header: {e}")))?;
    let [p, k, n] = dims[..] else {
        return Err(fail(1, format!("header needs 3 fields, found {}", dims.len())));
    };
    if p == 0 || k == 0 {
        return Err(fail(1, "p and k must be ≥ 1".into()));
    }
    let mut data = Vec::with_capacity(n * p * k);
    let mut rows = 0;
    for (idx, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let lineno = idx + 1;
        if rows == n {
            return Err(fail(lineno, format!("more than the declared {n} samples")));
        }
        let before = data.len();
        for tok in line.split_whitespace() {
            let v: f64 = tok.parse().map_err(|e| fail(lineno, format!("`{tok}`: {e}")))?;
            if !v.is_finite() {
                return Err(fail(lineno, format!("non-finite value `{tok}`")));
            }
            data.push(T::of(v));
        }
        if data.len() - before != p * k {
            return Err(fail(lineno, format!("expected {} values, found {}", p * k, data.len() - before)));
        }
        rows += 1;
    }
    if rows != n {
        return Err(fail(rows + 2, format!("declared {n} samples, found {rows}")));
    }
    Ok(Dataset { spec: None, seed: 0, p, k, data })
}

#[cfg(test)]
mod tests {
    use std::f64::consts::FRAC_PI_2;

    use super::*;
    use crate::linalg::angle;

    #[test]
    fn extract_examples() {
        let s = extract_patches(&[1.0, 2.0, 3.0], 2, 1).unwrap();
        assert_eq!((s.k(), s.column(0), s.column(1)), (2, &[1.0, 2.0][..], &[2.0, 3.0][..]));
        let s = extract_patches(&[1.0, 2.0, 3.0, 4.0], 2, 2).unwrap();
        assert_eq!((s.k(), s.column(0), s.column(1)), (2, &[1.0, 2.0][..], &[3.0, 4.0][..]));
        let s = extract_patches(&[5.0], 1, 1).unwrap();
        assert_eq!((s.k(), s.column(0)), (1, &[5.0][..]));
        assert!(extract_patches(&[1.0, 2.0], 3, 1).is_err());
        assert!(extract_patches(&[1.0, 2.0], 1, 0).is_err());
    }

    #[test]
    fn margin_mass_extremes() {
        let w = Vector::from_slice(&[2.0, 0.0]).unwrap();
        let aligned = Dataset::from_flat(2, 1, vec![1.0, 0.0, 1.0, 0.0]).unwrap();
        assert_eq!(margin_mass(aligned.view(), &w, 1.5).unwrap(), 0.0);
        let perp = Dataset::from_flat(2, 2, vec![0.0, 1.0, 0.0, -3.0]).unwrap();
        assert_eq!(margin_mass(perp.view(), &w, 1e-6).unwrap(), 1.0);
        assert!(margin_mass(perp.view(), &w, 0.0).is_err());
        assert!(margin_mass(perp.view(), &w, 2.0).is_err());
    }

    #[test]
    fn unit_sphere_patches_have_unit_norm() {
        let d = sample(&DistributionSpec::<f64>::unit_sphere(3, 2), 500, 1).unwrap();
        for s in d.view().samples() {
            for c in s.columns() {
                assert!((dot(c, c).sqrt() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn clustered_respects_rho_and_gap() {
        let dir = Vector::<f64>::basis(8, 0);
        let spec = DistributionSpec::clustered(8, 5, 0.2, 0.1, dir.clone());
        let d = sample(&spec, 1000, 3).unwrap();
        let mut worst = 0.0f64;
        for s in d.view().samples() {
            let avg = s.average();
            for c in s.columns() {
                assert!((dot(c, c).sqrt() - 1.0).abs() < 1e-10);
                worst = worst.max(angle_slices(c, &avg).unwrap());
                let t = angle(&Vector::from_slice(c).unwrap(), &dir).unwrap();
                assert!((t - FRAC_PI_2).abs() >= 0.2 - 1e-12);
            }
        }
        assert!(worst <= 0.2 + 1e-8, "{worst}");
    }

    #[test]
    fn invalid_specs() {
        let dir = Vector::basis(2, 0);
        assert!(sample(&DistributionSpec::<f64>::gaussian(0, 1), 1, 0).is_err());
        assert!(sample(&DistributionSpec::<f64>::gaussian(2, 1), 0, 0).is_err());
        assert!(sample(&DistributionSpec::clustered(2, 2, 1.6, 0.1, dir.clone()), 1, 0).is_err());
        assert!(sample(&DistributionSpec::clustered(2, 2, 0.1, -1.0, dir), 1, 0).is_err());
        assert!(sample(&DistributionSpec::clustered(3, 2, 0.1, 0.1, Vector::basis(2, 0)), 1, 0).is_err());
    }

    #[test]
    fn deterministic_and_chunk_independent() {
        let spec = DistributionSpec::<f64>::gaussian(3, 2);
        let a = sample(&spec, 3000, 9).unwrap();
        let b = sample(&spec, 3000, 9).unwrap();
        assert_eq!(a.as_flat(), b.as_flat());
        // a prefix of a larger draw matches a smaller draw chunk for chunk
        let c = sample(&spec, GEN_CHUNK, 9).unwrap();
        assert_eq!(&a.as_flat()[..c.as_flat().len()], c.as_flat());
        assert_ne!(a.as_flat(), sample(&spec, 3000, 10).unwrap().as_flat());
    }

    #[test]
    fn averaged_and_duplicated() {
        let d = Dataset::from_flat(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(d.averaged().as_flat(), &[0.5, 0.5]);
        assert_eq!(d.duplicated(3).as_flat(), &[1.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
    }
}
