//! Invariant measures: ν_n on the sphere S^{2n-1} ⊂ C^n and Haar measure on
//! U(n). Sampling, Monte Carlo integration and exact monomial moments.

use std::fmt;

use nalgebra::DMatrix;
use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::Zero;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{require_dimension, shape, Error, Result};
use crate::exact::factorial;

/// Tolerance on `|‖z‖² − 1|` accepted when constructing a [`SpherePoint`].
pub const SPHERE_TOL: f64 = 1e-12;
/// Tolerance on `max |U†U − I|` accepted when constructing a [`UnitaryMatrix`].
pub const UNITARY_TOL: f64 = 1e-12;

/// Seed plus stream id. Identical pairs produce identical sample sequences.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    pub fn rng(&self) -> ChaCha20Rng {
        let mut rng = ChaCha20Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }

    /// Stream used by worker `k` of a chunked reduction. Worker 0 is `self`.
    pub fn fork(&self, k: u64) -> Self {
        if k == 0 {
            return *self;
        }
        Self {
            seed: splitmix64(self.seed ^ splitmix64(k)),
            stream_id: self.stream_id,
        }
    }

    /// A different stream on the same seed.
    pub fn with_stream(&self, stream_id: u64) -> Self {
        Self {
            seed: self.seed,
            stream_id,
        }
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// A unit vector of C^n, n ≥ 3.
#[derive(Debug, Clone, PartialEq)]
pub struct SpherePoint {
    coords: Vec<Complex64>,
}

impl SpherePoint {
    pub fn new(coords: Vec<Complex64>) -> Result<Self> {
        require_dimension(coords.len())?;
        let norm_sq: f64 = coords.iter().map(|c| c.norm_sqr()).sum();
        if !norm_sq.is_finite() || (norm_sq - 1.0).abs() > SPHERE_TOL {
            return Err(Error::Precondition(format!(
                "point is not on the unit sphere: squared norm {norm_sq}"
            )));
        }
        Ok(Self { coords })
    }

    /// Normalizes a nonzero vector onto the sphere.
    pub fn normalized(coords: Vec<Complex64>) -> Result<Self> {
        require_dimension(coords.len())?;
        let norm = coords.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::Precondition(format!(
                "cannot normalize vector of norm {norm}"
            )));
        }
        Ok(Self {
            coords: coords.into_iter().map(|c| c / norm).collect(),
        })
    }

    pub(crate) fn from_unit_unchecked(coords: Vec<Complex64>) -> Self {
        Self { coords }
    }

    /// Standard basis vector `e_k` (0-based).
    pub fn basis(n: usize, k: usize) -> Result<Self> {
        require_dimension(n)?;
        if k >= n {
            return Err(shape(format!("index < {n}"), k));
        }
        let mut coords = vec![Complex64::zero(); n];
        coords[k] = Complex64::new(1.0, 0.0);
        Ok(Self { coords })
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[Complex64] {
        &self.coords
    }

    /// `⟨self|other⟩ = Σ conj(self_k) other_k`.
    pub fn inner(&self, other: &SpherePoint) -> Complex64 {
        self.coords
            .iter()
            .zip(&other.coords)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.coords.iter().map(|c| c.norm_sqr()).sum()
    }

    /// Multiplies every coordinate by the phase `alpha` (`|alpha| = 1`).
    pub fn rotate_phase(&self, alpha: Complex64) -> Self {
        Self {
            coords: self.coords.iter().map(|c| c * alpha).collect(),
        }
    }
}

impl fmt::Display for SpherePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.coords.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{}{:+}i", c.re, c.im)?;
        }
        write!(f, ")")
    }
}

/// An n×n unitary matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitaryMatrix {
    entries: DMatrix<Complex64>,
}

impl UnitaryMatrix {
    pub fn new(entries: DMatrix<Complex64>) -> Result<Self> {
        if !entries.is_square() || entries.nrows() == 0 {
            return Err(shape(
                "nonempty square matrix",
                format!("{}x{}", entries.nrows(), entries.ncols()),
            ));
        }
        let dev = unitarity_defect(&entries);
        if !(dev <= UNITARY_TOL) {
            return Err(Error::Precondition(format!(
                "matrix is not unitary: max |U†U - I| = {dev:e}"
            )));
        }
        Ok(Self { entries })
    }

    pub(crate) fn from_unchecked(entries: DMatrix<Complex64>) -> Self {
        Self { entries }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            entries: DMatrix::identity(n, n),
        }
    }

    /// Permutation matrix sending `e_k` to `e_{perm[k]}`.
    pub fn permutation(perm: &[usize]) -> Result<Self> {
        let n = perm.len();
        let mut m = DMatrix::zeros(n, n);
        for (k, &target) in perm.iter().enumerate() {
            if target >= n {
                return Err(shape(format!("index < {n}"), target));
            }
            m[(target, k)] = Complex64::new(1.0, 0.0);
        }
        Self::new(m)
    }

    /// `exp(i·s·H)` for a Hermitian generator `H`.
    pub fn exp_hermitian(generator: &DMatrix<Complex64>, s: f64) -> Result<Self> {
        let n = generator.nrows();
        let eig = generator.clone().symmetric_eigen();
        let mut phases = DMatrix::zeros(n, n);
        for k in 0..n {
            phases[(k, k)] = Complex64::from_polar(1.0, s * eig.eigenvalues[k]);
        }
        let v = &eig.eigenvectors;
        Self::new(v * phases * v.adjoint())
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.entries
    }

    pub fn entry(&self, row: usize, col: usize) -> Complex64 {
        self.entries[(row, col)]
    }

    /// The inverse, `U†`.
    pub fn inverse(&self) -> Self {
        Self {
            entries: self.entries.adjoint(),
        }
    }

    pub fn compose(&self, other: &UnitaryMatrix) -> Self {
        Self {
            entries: &self.entries * &other.entries,
        }
    }

    pub fn trace(&self) -> Complex64 {
        self.entries.trace()
    }

    pub fn column(&self, k: usize) -> Vec<Complex64> {
        self.entries.column(k).iter().copied().collect()
    }

    /// `U z`.
    pub fn apply(&self, z: &SpherePoint) -> SpherePoint {
        SpherePoint::from_unit_unchecked(self.apply_vec(z.coords()))
    }

    /// `U† z`.
    pub fn apply_inverse(&self, z: &SpherePoint) -> SpherePoint {
        let n = self.dim();
        let c = z.coords();
        let out = (0..n)
            .map(|k| (0..n).map(|l| self.entries[(l, k)].conj() * c[l]).sum())
            .collect();
        SpherePoint::from_unit_unchecked(out)
    }

    fn apply_vec(&self, c: &[Complex64]) -> Vec<Complex64> {
        let n = self.dim();
        (0..n)
            .map(|k| (0..n).map(|l| self.entries[(k, l)] * c[l]).sum())
            .collect()
    }

    pub fn unitarity_defect(&self) -> f64 {
        unitarity_defect(&self.entries)
    }
}

fn unitarity_defect(m: &DMatrix<Complex64>) -> f64 {
    let n = m.nrows();
    let prod = m.adjoint() * m;
    let mut dev = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let target = if i == j { 1.0 } else { 0.0 };
            let d = (prod[(i, j)] - Complex64::new(target, 0.0)).norm();
            if !d.is_finite() {
                return f64::INFINITY;
            }
            dev = dev.max(d);
        }
    }
    dev
}

/// A Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MCEstimate {
    pub mean: Complex64,
    /// Sample standard deviation (of the complex values) over `sqrt(n_samples)`.
    pub stderr: f64,
    pub n_samples: usize,
    pub workers: usize,
}

impl MCEstimate {
    /// Whether `target` lies within `k` standard errors of the mean.
    pub fn within(&self, target: Complex64, k: f64) -> bool {
        (self.mean - target).norm() <= k * self.stderr
    }

    /// `|mean - target|` in units of the standard error.
    pub fn z_score(&self, target: Complex64) -> f64 {
        let d = (self.mean - target).norm();
        if self.stderr == 0.0 {
            if d == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            d / self.stderr
        }
    }
}

/// Sample count and worker count of a Monte Carlo reduction.
///
/// Samples are split into `workers` contiguous chunks; chunk `k` draws from
/// `stream.fork(k)` and chunk results are merged in index order, so the
/// estimate is a pure function of `(seed, stream_id, workers)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct McOptions {
    pub n_samples: usize,
    pub workers: usize,
}

impl McOptions {
    pub fn new(n_samples: usize) -> Self {
        Self {
            n_samples,
            workers: 1,
        }
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers.max(1);
        self
    }

    fn validate(&self) -> Result<()> {
        if self.n_samples < 2 {
            return Err(Error::Configuration(format!(
                "Monte Carlo needs at least 2 samples, got {}",
                self.n_samples
            )));
        }
        if self.workers == 0 {
            return Err(Error::Configuration("worker count must be positive".into()));
        }
        Ok(())
    }

    fn chunks(&self) -> Vec<usize> {
        let w = self.workers.min(self.n_samples).max(1);
        let base = self.n_samples / w;
        let extra = self.n_samples % w;
        (0..w).map(|k| base + usize::from(k < extra)).collect()
    }
}

/// Streaming mean/variance of complex values (Welford, with Chan's merge).
#[derive(Debug, Clone, Copy, Default)]
pub struct Accumulator {
    count: usize,
    mean: Complex64,
    m2: f64,
}

impl Accumulator {
    pub fn push(&mut self, x: Complex64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        let delta2 = x - self.mean;
        self.m2 += (delta.conj() * delta2).re;
    }

    pub fn merge(&mut self, other: &Accumulator) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let total = (self.count + other.count) as f64;
        let delta = other.mean - self.mean;
        self.mean += delta * (other.count as f64 / total);
        self.m2 += other.m2 + delta.norm_sqr() * (self.count as f64 * other.count as f64 / total);
        self.count += other.count;
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn mean(&self) -> Complex64 {
        self.mean
    }

    pub fn stderr(&self) -> f64 {
        if self.count < 2 {
            return f64::INFINITY;
        }
        let var = (self.m2 / (self.count - 1) as f64).max(0.0);
        (var / self.count as f64).sqrt()
    }

    pub fn estimate(&self, workers: usize) -> MCEstimate {
        MCEstimate {
            mean: self.mean,
            stderr: self.stderr(),
            n_samples: self.count,
            workers,
        }
    }
}

/// A ν_n-distributed point: normalized vector of i.i.d. complex Gaussians.
pub fn sample_sphere_point<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<SpherePoint> {
    require_dimension(n)?;
    Ok(sample_unit_vector(n, rng))
}

pub(crate) fn sample_unit_vector<R: Rng + ?Sized>(n: usize, rng: &mut R) -> SpherePoint {
    loop {
        let v: Vec<Complex64> = (0..n).map(|_| complex_gaussian(rng)).collect();
        let norm = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if norm > 1e-300 {
            return SpherePoint::from_unit_unchecked(v.into_iter().map(|c| c / norm).collect());
        }
    }
}

/// Standard complex Gaussian, `E|w|² = 1`.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// A Haar-distributed unitary: QR of a complex Ginibre matrix with the
/// phases of `diag(R)` folded back into `Q`.
pub fn sample_haar_unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<UnitaryMatrix> {
    if n == 0 {
        return Err(Error::DimensionUnsupported { n, min: 1 });
    }
    loop {
        let g = DMatrix::from_fn(n, n, |_, _| complex_gaussian(rng));
        let qr = g.qr();
        let r = qr.r();
        let mut q = qr.q();
        let mut degenerate = false;
        for k in 0..n {
            let d = r[(k, k)];
            let norm = d.norm();
            if norm < 1e-300 {
                degenerate = true;
                break;
            }
            let phase = d / norm;
            for i in 0..n {
                q[(i, k)] *= phase;
            }
        }
        if !degenerate {
            return Ok(UnitaryMatrix::from_unchecked(q));
        }
    }
}

fn run_chunks<S>(opts: McOptions, stream: RngStream, sample: S) -> Result<MCEstimate>
where
    S: Fn(&mut ChaCha20Rng) -> Result<Complex64> + Sync,
{
    opts.validate()?;
    let chunks = opts.chunks();
    let run = |(k, size): (usize, &usize)| -> Result<Accumulator> {
        let mut rng = stream.fork(k as u64).rng();
        let mut acc = Accumulator::default();
        for _ in 0..*size {
            acc.push(sample(&mut rng)?);
        }
        Ok(acc)
    };
    let parts: Vec<Result<Accumulator>> = if chunks.len() == 1 {
        vec![run((0, &chunks[0]))]
    } else {
        chunks.par_iter().enumerate().map(run).collect()
    };
    let mut total = Accumulator::default();
    for part in parts {
        total.merge(&part?);
    }
    Ok(total.estimate(opts.workers))
}

/// Runs a chunked reduction of an arbitrary per-sample statistic.
pub fn mc_reduce<S>(opts: McOptions, stream: RngStream, sample: S) -> Result<MCEstimate>
where
    S: Fn(&mut ChaCha20Rng) -> Result<Complex64> + Sync,
{
    run_chunks(opts, stream, sample)
}

/// Chunked reduction of a vector-valued statistic; `sample` fills one slot
/// per component. Returns one estimate per component.
pub fn mc_reduce_vector<S>(
    opts: McOptions,
    stream: RngStream,
    components: usize,
    sample: S,
) -> Result<Vec<MCEstimate>>
where
    S: Fn(&mut ChaCha20Rng, &mut [Complex64]) -> Result<()> + Sync,
{
    opts.validate()?;
    let chunks = opts.chunks();
    let run = |(k, size): (usize, &usize)| -> Result<Vec<Accumulator>> {
        let mut rng = stream.fork(k as u64).rng();
        let mut accs = vec![Accumulator::default(); components];
        let mut buf = vec![Complex64::zero(); components];
        for _ in 0..*size {
            sample(&mut rng, &mut buf)?;
            for (acc, v) in accs.iter_mut().zip(&buf) {
                acc.push(*v);
            }
        }
        Ok(accs)
    };
    let parts: Vec<Result<Vec<Accumulator>>> = if chunks.len() == 1 {
        vec![run((0, &chunks[0]))]
    } else {
        chunks.par_iter().enumerate().map(run).collect()
    };
    let mut total = vec![Accumulator::default(); components];
    for part in parts {
        for (t, p) in total.iter_mut().zip(part?) {
            t.merge(&p);
        }
    }
    Ok(total.iter().map(|a| a.estimate(opts.workers)).collect())
}

pub(crate) fn check_finite(value: Complex64, at: impl FnOnce() -> String) -> Result<Complex64> {
    if value.re.is_finite() && value.im.is_finite() {
        Ok(value)
    } else {
        Err(Error::SamplingFailure {
            point: at(),
            value: value.to_string(),
        })
    }
}

/// Monte Carlo estimate of `∫ f dν_n`.
pub fn mc_integrate_sphere<F>(f: F, n: usize, opts: McOptions, stream: RngStream) -> Result<MCEstimate>
where
    F: Fn(&SpherePoint) -> Complex64 + Sync,
{
    require_dimension(n)?;
    run_chunks(
        opts,
        stream,
        |rng| {
            let z = sample_unit_vector(n, rng);
            check_finite(f(&z), || z.to_string())
        },
    )
}

/// Monte Carlo estimate of `∫ h dμ` over U(n).
pub fn mc_integrate_group<H>(h: H, n: usize, opts: McOptions, stream: RngStream) -> Result<MCEstimate>
where
    H: Fn(&UnitaryMatrix) -> Complex64 + Sync,
{
    if n == 0 {
        return Err(Error::DimensionUnsupported { n, min: 1 });
    }
    run_chunks(
        opts,
        stream,
        |rng| {
            let g = sample_haar_unitary(n, rng)?;
            check_finite(h(&g), || format!("{}", g.matrix()))
        },
    )
}

/// `∫ z^alpha conj(z)^beta dν_n` as an exact rational.
///
/// Zero unless `alpha == beta`; otherwise `(n−1)! α! / (n−1+|α|)!`.
pub fn exact_monomial_moment(alpha: &[u32], beta: &[u32], n: usize) -> Result<BigRational> {
    require_dimension(n)?;
    if alpha.len() != n {
        return Err(shape(format!("multi-index of length {n}"), alpha.len()));
    }
    if beta.len() != n {
        return Err(shape(format!("multi-index of length {n}"), beta.len()));
    }
    if alpha != beta {
        return Ok(BigRational::zero());
    }
    Ok(diagonal_moment(alpha, n))
}

pub(crate) fn diagonal_moment(alpha: &[u32], n: usize) -> BigRational {
    let total: u64 = alpha.iter().map(|&a| a as u64).sum();
    let num: BigInt = alpha
        .iter()
        .fold(factorial(n as u64 - 1), |acc, &a| acc * factorial(a as u64));
    BigRational::new(num, factorial(n as u64 - 1 + total))
}

pub(crate) fn diagonal_moment_f64(alpha: &[u32], n: usize) -> f64 {
    // (n-1)! Π α_k! / (n-1+|α|)!  =  Π α_k! / Π_{i=n}^{n-1+|α|} i
    let mut value = 1.0f64;
    let mut next = n as f64;
    for &a in alpha {
        for i in 1..=a {
            value *= i as f64 / next;
            next += 1.0;
        }
    }
    value
}

#[cfg(test)]
mod tests {
    use super::*;

    const SIGMA: f64 = 4.0;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn sphere_points_are_unit() {
        let mut rng = RngStream::new(1, 0).rng();
        for n in 3..7 {
            for _ in 0..100 {
                let z = sample_sphere_point(n, &mut rng).unwrap();
                assert!((z.norm_sqr() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_small_dimension() {
        let mut rng = RngStream::new(1, 0).rng();
        assert_eq!(
            sample_sphere_point(2, &mut rng),
            Err(Error::DimensionUnsupported { n: 2, min: 3 })
        );
        assert!(SpherePoint::new(vec![c(1.0), c(0.0)]).is_err());
    }

    #[test]
    fn sphere_second_moments() {
        let opts = McOptions::new(100_000);
        let e11 = mc_integrate_sphere(|z| c(z.coords()[0].norm_sqr()), 3, opts, RngStream::new(7, 0)).unwrap();
        assert!(e11.within(c(1.0 / 3.0), SIGMA), "{e11:?}");
        let e12 = mc_integrate_sphere(|z| z.coords()[0] * z.coords()[1].conj(), 3, opts, RngStream::new(7, 1)).unwrap();
        assert!(e12.within(c(0.0), SIGMA), "{e12:?}");
    }

    #[test]
    fn constant_integrands_are_exact() {
        let opts = McOptions::new(1000);
        let s = mc_integrate_sphere(|_| c(1.0), 4, opts, RngStream::new(3, 0)).unwrap();
        assert_eq!(s.mean, c(1.0));
        assert_eq!(s.stderr, 0.0);
        let g = mc_integrate_group(|_| c(1.0), 3, opts, RngStream::new(3, 0)).unwrap();
        assert_eq!(g.mean, c(1.0));
        assert_eq!(g.stderr, 0.0);
    }

    #[test]
    fn fourth_moment_matches_exact() {
        let opts = McOptions::new(100_000);
        let est = mc_integrate_sphere(|z| c(z.coords()[0].norm_sqr().powi(2)), 3, opts, RngStream::new(11, 0)).unwrap();
        assert!(est.within(c(1.0 / 6.0), SIGMA), "{est:?}");
    }

    #[test]
    fn haar_unitaries() {
        let mut rng = RngStream::new(5, 0).rng();
        for n in 1..6 {
            for _ in 0..50 {
                let u = sample_haar_unitary(n, &mut rng).unwrap();
                assert!(u.unitarity_defect() < 1e-12);
            }
        }
        let opts = McOptions::new(100_000);
        let e = mc_integrate_group(|g| g.entry(0, 0), 3, opts, RngStream::new(5, 1)).unwrap();
        assert!(e.within(c(0.0), SIGMA), "{e:?}");
        let col = mc_integrate_group(|g| c(g.entry(0, 0).norm_sqr()), 3, opts, RngStream::new(5, 2)).unwrap();
        let sph = mc_integrate_sphere(|z| c(z.coords()[0].norm_sqr()), 3, opts, RngStream::new(5, 3)).unwrap();
        let combined = (col.stderr.powi(2) + sph.stderr.powi(2)).sqrt();
        assert!((col.mean - sph.mean).norm() <= SIGMA * combined);
        assert!(col.within(c(1.0 / 3.0), SIGMA));
        let tr = mc_integrate_group(|g| c(g.trace().norm_sqr()), 3, opts, RngStream::new(5, 4)).unwrap();
        assert!(tr.within(c(1.0), SIGMA), "{tr:?}");
    }

    #[test]
    fn non_finite_values_are_reported() {
        let opts = McOptions::new(10);
        let err = mc_integrate_sphere(|_| c(f64::NAN), 3, opts, RngStream::new(1, 0)).unwrap_err();
        assert!(matches!(err, Error::SamplingFailure { .. }));
        let err = mc_integrate_sphere(|_| c(1.0), 3, McOptions::new(1), RngStream::new(1, 0)).unwrap_err();
        assert!(matches!(err, Error::Configuration(_)));
    }

    #[test]
    fn determinism_per_worker_count() {
        let f = |z: &SpherePoint| z.coords()[1] * z.coords()[2].conj() + c(z.coords()[0].re);
        for workers in [1, 3] {
            let opts = McOptions::new(5000).with_workers(workers);
            let a = mc_integrate_sphere(f, 3, opts, RngStream::new(9, 2)).unwrap();
            let b = mc_integrate_sphere(f, 3, opts, RngStream::new(9, 2)).unwrap();
            assert_eq!(a.mean.re.to_bits(), b.mean.re.to_bits());
            assert_eq!(a.mean.im.to_bits(), b.mean.im.to_bits());
            assert_eq!(a.stderr.to_bits(), b.stderr.to_bits());
            assert_eq!(a.workers, workers);
        }
        let mut r1 = RngStream::new(4, 4).rng();
        let mut r2 = RngStream::new(4, 4).rng();
        for _ in 0..10 {
            assert_eq!(sample_sphere_point(3, &mut r1).unwrap(), sample_sphere_point(3, &mut r2).unwrap());
        }
    }

    #[test]
    fn unitary_invariance_of_sampling() {
        let mut rng = RngStream::new(21, 0).rng();
        let u = sample_haar_unitary(3, &mut rng).unwrap();
        let f = |z: &SpherePoint| c(z.coords()[0].norm_sqr() * 3.0 + z.coords()[1].re);
        let opts = McOptions::new(100_000);
        let plain = mc_integrate_sphere(f, 3, opts, RngStream::new(21, 1)).unwrap();
        let rotated = mc_integrate_sphere(|z| f(&u.apply(z)), 3, opts, RngStream::new(21, 2)).unwrap();
        let combined = (plain.stderr.powi(2) + rotated.stderr.powi(2)).sqrt();
        assert!((plain.mean - rotated.mean).norm() <= SIGMA * combined);
    }

    #[test]
    fn moment_values() {
        let r = |a: i64, b: i64| BigRational::new(a.into(), b.into());
        for n in 3..6 {
            assert_eq!(exact_monomial_moment(&vec![0; n], &vec![0; n], n).unwrap(), r(1, 1));
        }
        assert_eq!(exact_monomial_moment(&[1, 0, 0], &[1, 0, 0], 3).unwrap(), r(1, 3));
        assert_eq!(exact_monomial_moment(&[2, 0, 0], &[2, 0, 0], 3).unwrap(), r(1, 6));
        assert_eq!(exact_monomial_moment(&[1, 0, 0], &[0, 1, 0], 3).unwrap(), r(0, 1));
        assert!(matches!(
            exact_monomial_moment(&[1, 0], &[1, 0, 0], 3),
            Err(Error::Shape { .. })
        ));
        assert!((diagonal_moment_f64(&[2, 1, 0], 3) - 2.0 * 2.0 / 120.0).abs() < 1e-16);
    }

    #[test]
    fn moment_formula_against_monte_carlo() {
        // (alpha, n) pairs checked against sampling before the closed form is trusted.
        let cases: &[(&[u32], usize)] = &[
            (&[2, 0, 0], 3),
            (&[1, 1, 0], 3),
            (&[2, 1, 0], 3),
            (&[1, 1, 1, 0], 4),
            (&[3, 0, 0, 0, 0], 5),
            (&[2, 2, 0, 0], 4),
        ];
        for (i, &(alpha, n)) in cases.iter().enumerate() {
            let exact = rational_f64(&exact_monomial_moment(alpha, alpha, n).unwrap());
            let f = |z: &SpherePoint| {
                c(z.coords()
                    .iter()
                    .zip(alpha)
                    .map(|(w, &a)| w.norm_sqr().powi(a as i32))
                    .product())
            };
            let est = mc_integrate_sphere(f, n, McOptions::new(200_000), RngStream::new(99, i as u64)).unwrap();
            assert!(est.within(c(exact), SIGMA), "{alpha:?} n={n}: {est:?} vs {exact}");
        }
    }

    fn rational_f64(r: &BigRational) -> f64 {
        crate::exact::rational_to_f64(r)
    }
}
