//! Frame functions on S^{2n-1}, their weights, and reconstruction of the
//! operator `A` with `f(z) = ⟨z|Az⟩` by two independent routes: fourth-order
//! moments and projection onto H_{(0,0)} ⊕ H_{(1,1)}.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use num_traits::Zero;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{require_dimension, shape, Error, Result};
use crate::harmonics::{build_basis, project_basis, project_basis_mc, BiDegree, HarmonicSubspace, Integration};
use crate::measure::{
    mc_reduce_vector, sample_haar_unitary, sample_sphere_point, sample_unit_vector, Accumulator, MCEstimate,
    RngStream, SpherePoint, UnitaryMatrix,
};
use crate::polynomials::{FloatPolynomial, SpherePolynomial};

/// Tolerance of the Hermitian flag and other exact-regime identities.
pub const HERMITIAN_TOL: f64 = 1e-10;
/// Max deviation accepted between two exact reconstruction routes.
pub const EXACT_TOL: f64 = 1e-10;
/// Number of standard errors used by every Monte Carlo verdict.
pub const MC_SIGMAS: f64 = 4.0;
/// Accepted `| |z|² − 1 |` for sample points read from text.
pub const SAMPLE_NORM_TOL: f64 = 1e-9;

const C1: Complex64 = Complex64::new(1.0, 0.0);

/// A linear operator on C^n.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorMatrix {
    entries: DMatrix<Complex64>,
}

/// File form `{"n", "re", "im"}`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorRecord {
    pub n: usize,
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

impl OperatorMatrix {
    pub fn new(entries: DMatrix<Complex64>) -> Result<Self> {
        if entries.nrows() != entries.ncols() || entries.nrows() == 0 {
            return Err(shape("non-empty square matrix", format!("{}x{}", entries.nrows(), entries.ncols())));
        }
        if entries.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::Precondition("operator has non-finite entries".into()));
        }
        Ok(Self { entries })
    }

    pub fn from_rows(rows: &[Vec<Complex64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(shape(format!("{n}x{n} rows"), "ragged rows"));
        }
        Self::new(DMatrix::from_fn(n, n, |k, l| rows[k][l]))
    }

    pub fn identity(n: usize) -> Self {
        Self {
            entries: DMatrix::identity(n, n),
        }
    }

    pub fn diagonal(d: &[f64]) -> Result<Self> {
        let n = d.len();
        Self::new(DMatrix::from_fn(n, n, |k, l| if k == l { Complex64::new(d[k], 0.0) } else { Complex64::zero() }))
    }

    /// Hermitian, with real diagonal and real and imaginary parts of the
    /// upper triangle uniform in [−1, 1].
    pub fn random_hermitian<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let mut m = DMatrix::zeros(n, n);
        for k in 0..n {
            m[(k, k)] = Complex64::new(rng.random_range(-1.0..=1.0), 0.0);
            for l in k + 1..n {
                let c = Complex64::new(rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0));
                m[(k, l)] = c;
                m[(l, k)] = c.conj();
            }
        }
        Self { entries: m }
    }

    /// Random density matrix `G G† / tr(G G†)` with Gaussian `G`.
    pub fn random_density<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let g = DMatrix::from_fn(n, n, |_, _| crate::measure::complex_gaussian(rng));
        let h = &g * g.adjoint();
        let tr = h.trace();
        let mut m = h / tr;
        for k in 0..n {
            m[(k, k)].im = 0.0;
        }
        Self { entries: m }
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<Complex64> {
        &self.entries
    }

    pub fn entry(&self, k: usize, l: usize) -> Complex64 {
        self.entries[(k, l)]
    }

    pub fn rows(&self) -> Vec<Vec<Complex64>> {
        (0..self.n()).map(|k| (0..self.n()).map(|l| self.entries[(k, l)]).collect()).collect()
    }

    pub fn trace(&self) -> Complex64 {
        self.entries.trace()
    }

    /// `max |A_kl − conj(A_lk)|`.
    pub fn hermitian_deviation(&self) -> f64 {
        let n = self.n();
        let mut d = 0.0f64;
        for k in 0..n {
            for l in 0..n {
                d = d.max((self.entries[(k, l)] - self.entries[(l, k)].conj()).norm());
            }
        }
        d
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian_deviation() <= HERMITIAN_TOL
    }

    /// `⟨z|Az⟩` for any vector (not only unit ones).
    pub fn quadratic_form(&self, z: &[Complex64]) -> Complex64 {
        let n = self.n();
        let mut total = Complex64::zero();
        for k in 0..n {
            let mut row = Complex64::zero();
            for l in 0..n {
                row += self.entries[(k, l)] * z[l];
            }
            total += z[k].conj() * row;
        }
        total
    }

    pub fn scale(&self, c: Complex64) -> Self {
        Self {
            entries: &self.entries * c,
        }
    }

    pub fn to_polynomial(&self) -> FloatPolynomial {
        FloatPolynomial::quadratic_form(&self.rows()).expect("square rows")
    }

    pub fn max_abs_diff(&self, other: &OperatorMatrix) -> f64 {
        (&self.entries - &other.entries).iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn frobenius_diff(&self, other: &OperatorMatrix) -> f64 {
        (&self.entries - &other.entries).norm()
    }

    /// Eigenvalues in ascending order; requires the Hermitian flag.
    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        if !self.is_hermitian() {
            return Err(Error::NonHermitian {
                deviation: self.hermitian_deviation(),
            });
        }
        let h = (&self.entries + self.entries.adjoint()) * Complex64::new(0.5, 0.0);
        let mut ev: Vec<f64> = h.symmetric_eigen().eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        Ok(ev)
    }

    pub fn to_record(&self) -> OperatorRecord {
        let rows = self.rows();
        OperatorRecord {
            n: self.n(),
            re: rows.iter().map(|r| r.iter().map(|c| c.re).collect()).collect(),
            im: rows.iter().map(|r| r.iter().map(|c| c.im).collect()).collect(),
        }
    }

    pub fn from_record(rec: &OperatorRecord) -> Result<Self> {
        let bad = |field: &str, message: String| Error::Parse {
            line: 0,
            field: field.into(),
            message,
        };
        for (name, part) in [("re", &rec.re), ("im", &rec.im)] {
            if part.len() != rec.n {
                return Err(bad(name, format!("expected {} rows, found {}", rec.n, part.len())));
            }
            if let Some((i, r)) = part.iter().enumerate().find(|(_, r)| r.len() != rec.n) {
                return Err(bad(name, format!("row {i} has {} entries, expected {}", r.len(), rec.n)));
            }
        }
        let n = rec.n;
        Self::new(DMatrix::from_fn(n, n, |k, l| Complex64::new(rec.re[k][l], rec.im[k][l])))
            .map_err(|e| bad("re", e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let rec: OperatorRecord = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            field: "operator".into(),
            message: e.to_string(),
        })?;
        Self::from_record(&rec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_record()).expect("finite entries serialize")
    }
}

/// A function on the sphere given by one of three models.
#[derive(Debug, Clone)]
pub enum FrameFunction {
    /// `z ↦ ⟨z|Az⟩`.
    Operator(OperatorMatrix),
    /// `Σ_j f_j` with `f_j ∈ H_j`.
    Harmonic {
        n: usize,
        components: BTreeMap<BiDegree, FloatPolynomial>,
    },
    /// Scattered values `(z_i, f(z_i))`.
    Samples { n: usize, samples: Vec<(SpherePoint, Complex64)> },
}

impl FrameFunction {
    pub fn operator(a: OperatorMatrix) -> Result<Self> {
        require_dimension(a.n())?;
        Ok(Self::Operator(a))
    }

    /// Harmonic model; each component must have its declared bidegree and be
    /// annihilated by Δ up to rounding.
    pub fn harmonic(n: usize, components: BTreeMap<BiDegree, FloatPolynomial>) -> Result<Self> {
        require_dimension(n)?;
        for (j, f) in &components {
            if f.n() != n {
                return Err(shape(format!("dimension {n}"), f.n()));
            }
            if f.bidegree() != (j.p, j.q) {
                return Err(shape(format!("bidegree {j}"), format!("{:?}", f.bidegree())));
            }
            let scale = f.terms().map(|(_, _, c)| c.norm()).fold(1.0, f64::max);
            let lap = f.apply_laplacian().terms().map(|(_, _, c)| c.norm()).fold(0.0, f64::max);
            if lap > 1e-9 * scale {
                return Err(Error::Precondition(format!("component {j} is not harmonic (|Δf| = {lap:e})")));
            }
        }
        Ok(Self::Harmonic { n, components })
    }

    /// Exact orthogonal decomposition of a polynomial into harmonic parts.
    pub fn from_polynomial(f: &SpherePolynomial<Complex64>) -> Result<Self> {
        let n = f.n();
        require_dimension(n)?;
        let mut components: BTreeMap<BiDegree, FloatPolynomial> = BTreeMap::new();
        let mut spaces: BTreeMap<BiDegree, HarmonicSubspace> = BTreeMap::new();
        for part in f.parts() {
            let (p, q) = part.bidegree();
            let single = SpherePolynomial::from_part(part.clone());
            for k in 0..=p.min(q) {
                let j = BiDegree::new(p - k, q - k);
                if !spaces.contains_key(&j) {
                    spaces.insert(j, build_basis(n, j)?);
                }
                let proj = project_basis(&single, &spaces[&j])?;
                if proj.is_zero() {
                    continue;
                }
                let entry = components.entry(j).or_insert_with(|| FloatPolynomial::zero(n, j.p, j.q));
                *entry = entry.add(&proj)?;
            }
        }
        components.retain(|_, c| !c.is_zero());
        Ok(Self::Harmonic { n, components })
    }

    pub fn samples(samples: Vec<(SpherePoint, Complex64)>) -> Result<Self> {
        let n = samples.first().map(|(z, _)| z.dim()).ok_or(Error::Underdetermined { got: 0, need: 1 })?;
        require_dimension(n)?;
        for (i, (z, v)) in samples.iter().enumerate() {
            if z.dim() != n {
                return Err(shape(format!("dimension {n}"), format!("{} at sample {i}", z.dim())));
            }
            if !v.re.is_finite() || !v.im.is_finite() {
                return Err(Error::SamplingFailure {
                    point: z.to_string(),
                    value: v.to_string(),
                });
            }
        }
        Ok(Self::Samples { n, samples })
    }

    pub fn n(&self) -> usize {
        match self {
            Self::Operator(a) => a.n(),
            Self::Harmonic { n, .. } | Self::Samples { n, .. } => *n,
        }
    }

    pub fn is_evaluatable(&self) -> bool {
        !matches!(self, Self::Samples { .. })
    }

    /// Polynomial form of an evaluatable model.
    pub fn to_polynomial(&self) -> Result<SpherePolynomial<Complex64>> {
        match self {
            Self::Operator(a) => Ok(SpherePolynomial::from_part(a.to_polynomial())),
            Self::Harmonic { n, components } => {
                let mut out = SpherePolynomial::new(*n);
                for c in components.values() {
                    out.add_part(c)?;
                }
                Ok(out)
            }
            Self::Samples { .. } => Err(Error::UnsupportedEvaluation),
        }
    }

    fn eval_coords(&self, z: &[Complex64]) -> Result<Complex64> {
        match self {
            Self::Operator(a) => Ok(a.quadratic_form(z)),
            Self::Harmonic { components, .. } => Ok(components.values().map(|c| c.evaluate_at(z)).sum()),
            Self::Samples { .. } => Err(Error::UnsupportedEvaluation),
        }
    }
}

/// `f(z)` for an evaluatable model.
pub fn evaluate_frame(f: &FrameFunction, z: &SpherePoint) -> Result<Complex64> {
    if z.dim() != f.n() {
        return Err(shape(format!("dimension {}", f.n()), z.dim()));
    }
    f.eval_coords(z.coords())
}

/// An orthonormal basis of C^n.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthonormalBasis {
    vectors: Vec<SpherePoint>,
}

impl OrthonormalBasis {
    pub fn new(vectors: Vec<SpherePoint>) -> Result<Self> {
        let n = vectors.len();
        if vectors.iter().any(|v| v.dim() != n) {
            return Err(shape(format!("{n} vectors in C^{n}"), "mismatched lengths"));
        }
        for a in 0..n {
            for b in 0..n {
                let target = if a == b { 1.0 } else { 0.0 };
                let d = (vectors[a].inner(&vectors[b]) - target).norm();
                if d > 1e-12 {
                    return Err(Error::Precondition(format!("Gram entry ({a},{b}) deviates by {d:e}")));
                }
            }
        }
        Ok(Self { vectors })
    }

    pub fn standard(n: usize) -> Self {
        Self::from_unitary(&UnitaryMatrix::identity(n))
    }

    /// Columns of `g`.
    pub fn from_unitary(g: &UnitaryMatrix) -> Self {
        Self {
            vectors: (0..g.dim()).map(|k| SpherePoint::from_unit_unchecked(g.column(k))).collect(),
        }
    }

    pub fn vectors(&self) -> &[SpherePoint] {
        &self.vectors
    }

    pub fn n(&self) -> usize {
        self.vectors.len()
    }
}

/// Columns of a Haar unitary.
pub fn random_orthonormal_basis<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<OrthonormalBasis> {
    Ok(OrthonormalBasis::from_unitary(&sample_haar_unitary(n, rng)?))
}

/// `Σ_k f(e_k)`.
pub fn basis_sum(f: &FrameFunction, basis: &OrthonormalBasis) -> Result<Complex64> {
    basis.vectors.iter().map(|e| evaluate_frame(f, e)).sum()
}

/// Outcome of evaluating basis sums over random bases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameCheck {
    /// Mean of the basis sums.
    pub weight: Complex64,
    /// Max `|sum − mean|`.
    pub max_deviation: f64,
    pub passed: bool,
    pub sums: Vec<Complex64>,
}

pub fn check_frame_property<R: Rng + ?Sized>(
    f: &FrameFunction,
    n_bases: usize,
    tol: f64,
    rng: &mut R,
) -> Result<FrameCheck> {
    if n_bases == 0 {
        return Err(Error::Configuration("need at least one basis".into()));
    }
    let sums: Vec<Complex64> = (0..n_bases)
        .map(|_| basis_sum(f, &random_orthonormal_basis(f.n(), rng)?))
        .collect::<Result<_>>()?;
    let weight = sums.iter().sum::<Complex64>() / n_bases as f64;
    let max_deviation = sums.iter().map(|s| (s - weight).norm()).fold(0.0, f64::max);
    Ok(FrameCheck {
        weight,
        max_deviation,
        passed: max_deviation <= tol,
        sums,
    })
}

/// A reconstructed operator with the Monte Carlo uncertainty of the route.
#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub operator: OperatorMatrix,
    /// `sqrt(Σ_kl stderr(A_kl)²)`; zero for exact quadrature.
    pub frobenius_stderr: f64,
    pub n_samples: usize,
}

/// `A = n(n+1)·M − n·s·I` with `M_kl = ∫ f z_k conj(z_l)`, `s = ∫ f`, for a
/// polynomial `f` in any coefficient regime.
pub fn moment_operator_exact<C: crate::exact::Coefficient>(f: &SpherePolynomial<C>) -> Result<Vec<Vec<C>>> {
    let n = f.n();
    require_dimension(n)?;
    let one = crate::polynomials::BiDegreePolynomial::<C>::constant(n, C::one());
    let s = f.inner_with(&one)?;
    let nn1 = C::from_i64((n * (n + 1)) as i64);
    let ns = C::from_i64(n as i64) * s;
    let mut out = vec![vec![C::zero(); n]; n];
    for (k, row) in out.iter_mut().enumerate() {
        for (l, slot) in row.iter_mut().enumerate() {
            // ⟨g, f⟩ with g = conj(z_k) z_l
            let g = crate::polynomials::BiDegreePolynomial::monomial(
                n,
                crate::polynomials::MultiIndex::unit(n, l),
                crate::polynomials::MultiIndex::unit(n, k),
                C::one(),
            )?;
            let m = f.inner_with(&g)?;
            *slot = nn1.clone() * m;
            if k == l {
                *slot = slot.clone() - ns.clone();
            }
        }
    }
    Ok(out)
}

fn operator_from_vec(n: usize, v: &[Complex64]) -> Result<OperatorMatrix> {
    OperatorMatrix::new(DMatrix::from_fn(n, n, |k, l| v[k * n + l]))
}

fn frobenius_stderr(est: &[MCEstimate]) -> f64 {
    est.iter().map(|e| e.stderr * e.stderr).sum::<f64>().sqrt()
}

/// Per-sample estimator of `A_kl`: `f(z)·(n(n+1) z_k conj(z_l) − n δ_kl)`.
fn moment_sample(n: usize, z: &[Complex64], v: Complex64, out: &mut [Complex64]) {
    let nn1 = (n * (n + 1)) as f64;
    for k in 0..n {
        for l in 0..n {
            let mut a = z[k] * z[l].conj() * nn1;
            if k == l {
                a -= n as f64;
            }
            out[k * n + l] = v * a;
        }
    }
}

/// Moment route. Exact quadrature for polynomial models; Monte Carlo over
/// ν_n when requested; sample means for sample sets (at least n² points).
pub fn reconstruct_moment(f: &FrameFunction, integration: Integration) -> Result<Reconstruction> {
    let n = f.n();
    match (f, integration) {
        (FrameFunction::Samples { samples, .. }, _) => {
            require_samples(samples.len(), n)?;
            let mut accs = vec![Accumulator::default(); n * n];
            let mut buf = vec![Complex64::zero(); n * n];
            for (z, v) in samples {
                moment_sample(n, z.coords(), *v, &mut buf);
                for (a, x) in accs.iter_mut().zip(&buf) {
                    a.push(*x);
                }
            }
            let est: Vec<MCEstimate> = accs.iter().map(|a| a.estimate(1)).collect();
            let means: Vec<Complex64> = est.iter().map(|e| e.mean).collect();
            Ok(Reconstruction {
                operator: operator_from_vec(n, &means)?,
                frobenius_stderr: frobenius_stderr(&est),
                n_samples: samples.len(),
            })
        }
        (_, Integration::Exact) => {
            let rows = moment_operator_exact(&f.to_polynomial()?)?;
            Ok(Reconstruction {
                operator: OperatorMatrix::from_rows(&rows)?,
                frobenius_stderr: 0.0,
                n_samples: 0,
            })
        }
        (_, Integration::MonteCarlo { opts, stream }) => {
            if opts.n_samples == 0 {
                return Err(Error::Configuration("Monte Carlo reconstruction with zero samples".into()));
            }
            let est = mc_reduce_vector(opts, stream, n * n, |rng, out| {
                let z = sample_unit_vector(n, rng);
                let v = crate::measure::check_finite(f.eval_coords(z.coords())?, || z.to_string())?;
                moment_sample(n, z.coords(), v, out);
                Ok(())
            })?;
            let means: Vec<Complex64> = est.iter().map(|e| e.mean).collect();
            Ok(Reconstruction {
                operator: operator_from_vec(n, &means)?,
                frobenius_stderr: frobenius_stderr(&est),
                n_samples: opts.n_samples,
            })
        }
    }
}

fn require_samples(got: usize, n: usize) -> Result<()> {
    if got < n * n {
        Err(Error::Underdetermined { got, need: n * n })
    } else {
        Ok(())
    }
}

/// Matrices `B^m` with `Z_m(z) = ⟨z|B^m z⟩` for the basis of H_{(1,1)}.
fn adjoint_forms(space: &HarmonicSubspace) -> Result<Vec<Vec<Vec<Complex64>>>> {
    space.basis().iter().map(|z| z.quadratic_matrix()).collect()
}

/// Ordinary least squares of sample values on the orthonormal features
/// `{1} ∪ {Z_m}` of H_{(0,0)} ⊕ H_{(1,1)}.
struct SampleFit {
    coefficients: Vec<Complex64>,
    /// `σ² (X†X)⁻¹`.
    covariance: DMatrix<Complex64>,
    residuals: Vec<Complex64>,
}

fn fit_quadratic(n: usize, samples: &[(SpherePoint, Complex64)], h11: &HarmonicSubspace) -> Result<SampleFit> {
    require_samples(samples.len(), n)?;
    let k = 1 + h11.dim();
    let rows = samples.len();
    let x = DMatrix::from_fn(rows, k, |i, c| {
        if c == 0 {
            C1
        } else {
            h11.basis()[c - 1].evaluate_at(samples[i].0.coords())
        }
    });
    let y = DVector::from_iterator(rows, samples.iter().map(|(_, v)| *v));
    let xtx = x.adjoint() * &x;
    let inv = xtx
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Underdetermined { got: rows, need: n * n })?;
    let coef = &inv * (x.adjoint() * &y);
    let fitted = &x * &coef;
    let residuals: Vec<Complex64> = (0..rows).map(|i| y[i] - fitted[i]).collect();
    let dof = rows.saturating_sub(k).max(1) as f64;
    let sigma2 = residuals.iter().map(|r| r.norm_sqr()).sum::<f64>() / dof;
    Ok(SampleFit {
        coefficients: coef.iter().copied().collect(),
        covariance: inv * Complex64::new(sigma2, 0.0),
        residuals,
    })
}

/// Harmonic route: `A = c·I + A₀` with `c = ⟨1, f⟩` and `A₀` read off the
/// coefficients of `f_{(1,1)}` (coefficient of `z_l conj(z_k)` is `(A₀)_kl`).
pub fn reconstruct_harmonic(f: &FrameFunction, integration: Integration) -> Result<Reconstruction> {
    let n = f.n();
    let h00 = build_basis(n, BiDegree::new(0, 0))?;
    let h11 = build_basis(n, BiDegree::new(1, 1))?;
    let forms = adjoint_forms(&h11)?;
    let assemble = |c: Complex64, cm: &[Complex64]| -> Result<OperatorMatrix> {
        let mut a = DMatrix::from_fn(n, n, |k, l| if k == l { c } else { Complex64::zero() });
        let mut a0_trace = Complex64::zero();
        for (coef, b) in cm.iter().zip(&forms) {
            for k in 0..n {
                for l in 0..n {
                    a[(k, l)] += coef * b[k][l];
                }
                a0_trace += coef * b[k][k];
            }
        }
        if a0_trace.norm() > EXACT_TOL {
            return Err(Error::Disagreement(format!("traceless part has trace {a0_trace}")));
        }
        OperatorMatrix::new(a)
    };
    match (f, integration) {
        (FrameFunction::Samples { samples, .. }, _) => {
            let fit = fit_quadratic(n, samples, &h11)?;
            let operator = assemble(fit.coefficients[0], &fit.coefficients[1..])?;
            // Var(A_kl) = w† Cov w with w the feature weights of entry (k,l)
            let mut var = 0.0;
            for k in 0..n {
                for l in 0..n {
                    let w: Vec<Complex64> = std::iter::once(if k == l { C1 } else { Complex64::zero() })
                        .chain(forms.iter().map(|b| b[k][l]))
                        .collect();
                    let mut s = Complex64::zero();
                    for (a, wa) in w.iter().enumerate() {
                        for (b, wb) in w.iter().enumerate() {
                            s += wa * wb.conj() * fit.covariance[(a, b)];
                        }
                    }
                    var += s.re.max(0.0);
                }
            }
            Ok(Reconstruction {
                operator,
                frobenius_stderr: var.sqrt(),
                n_samples: samples.len(),
            })
        }
        (_, Integration::Exact) => {
            let poly = f.to_polynomial()?;
            let c = poly.inner_with(&h00.basis()[0])?;
            let cm = h11.coefficients(&poly)?;
            Ok(Reconstruction {
                operator: assemble(c, &cm)?,
                frobenius_stderr: 0.0,
                n_samples: 0,
            })
        }
        (_, Integration::MonteCarlo { opts, stream }) => {
            if opts.n_samples == 0 {
                return Err(Error::Configuration("Monte Carlo reconstruction with zero samples".into()));
            }
            let d = h11.dim();
            // slots: c, the d coefficients ⟨Z_m, f⟩, then the n² entries of
            // the per-sample operator estimator (for the error bar)
            let est = mc_reduce_vector(opts, stream, 1 + d + n * n, |rng, out| {
                let z = sample_unit_vector(n, rng);
                let v = crate::measure::check_finite(f.eval_coords(z.coords())?, || z.to_string())?;
                out[0] = v;
                for (slot, b) in out[1..=d].iter_mut().zip(h11.basis()) {
                    *slot = b.evaluate_at(z.coords()).conj() * v;
                }
                for k in 0..n {
                    for l in 0..n {
                        let mut a = out[0] * if k == l { 1.0 } else { 0.0 };
                        for (m, form) in forms.iter().enumerate() {
                            a += out[1 + m] * form[k][l];
                        }
                        out[1 + d + k * n + l] = a;
                    }
                }
                Ok(())
            })?;
            let cm: Vec<Complex64> = est[1..=d].iter().map(|e| e.mean).collect();
            Ok(Reconstruction {
                operator: assemble(est[0].mean, &cm)?,
                frobenius_stderr: frobenius_stderr(&est[1 + d..]),
                n_samples: opts.n_samples,
            })
        }
    }
}

/// Norm of one harmonic component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentNorm {
    pub p: u32,
    pub q: u32,
    pub dim: usize,
    pub norm: f64,
    /// `sqrt(Σ_m stderr_m²)` of the coefficient estimates; zero when exact.
    pub stderr: f64,
    pub significant: bool,
}

impl ComponentNorm {
    pub fn bidegree(&self) -> BiDegree {
        BiDegree::new(self.p, self.q)
    }
}

fn component_from_estimates(j: BiDegree, dim: usize, est: &[MCEstimate]) -> ComponentNorm {
    let norm = est.iter().map(|e| e.mean.norm_sqr()).sum::<f64>().sqrt();
    let stderr = frobenius_stderr(est);
    ComponentNorm {
        p: j.p,
        q: j.q,
        dim,
        norm,
        stderr,
        significant: norm > MC_SIGMAS * stderr,
    }
}

fn sample_coefficients(points: &[&SpherePoint], values: &[Complex64], space: &HarmonicSubspace) -> Vec<MCEstimate> {
    space
        .basis()
        .iter()
        .map(|z| {
            let mut acc = Accumulator::default();
            for (pt, v) in points.iter().zip(values) {
                acc.push(z.evaluate_at(pt.coords()).conj() * v);
            }
            acc.estimate(1)
        })
        .collect()
}

/// `‖f_j‖₂` for every bidegree with `p + q ≤ j_max`.
///
/// Exact models use exact projection and flag norms above `tol`; Monte Carlo
/// and sample-set estimates are flagged above 4 standard errors. For sample
/// sets, `subtract_fit` first removes the least-squares fit on
/// H_{(0,0)} ⊕ H_{(1,1)}, which lowers the variance of the other components.
pub fn component_norms(
    f: &FrameFunction,
    j_max: u32,
    integration: Integration,
    tol: f64,
    subtract_fit: bool,
) -> Result<Vec<ComponentNorm>> {
    let n = f.n();
    let mut out = Vec::new();
    match (f, integration) {
        (FrameFunction::Samples { samples, .. }, _) => {
            let points: Vec<&SpherePoint> = samples.iter().map(|(z, _)| z).collect();
            let values: Vec<Complex64> = if subtract_fit {
                fit_quadratic(n, samples, &build_basis(n, BiDegree::new(1, 1))?)?.residuals
            } else {
                samples.iter().map(|(_, v)| *v).collect()
            };
            for j in BiDegree::all_up_to(j_max) {
                let space = build_basis(n, j)?;
                let est = sample_coefficients(&points, &values, &space);
                out.push(component_from_estimates(j, space.dim(), &est));
            }
        }
        (_, Integration::Exact) => {
            let poly = f.to_polynomial()?;
            for j in BiDegree::all_up_to(j_max) {
                let space = build_basis(n, j)?;
                let norm = match f {
                    FrameFunction::Harmonic { components, .. } => {
                        components.get(&j).map_or(Ok(0.0), |c| c.norm_sqr().map(|v| v.re))?
                    }
                    _ => project_basis(&poly, &space)?.norm_sqr()?.re,
                }
                .max(0.0)
                .sqrt();
                out.push(ComponentNorm {
                    p: j.p,
                    q: j.q,
                    dim: space.dim(),
                    norm,
                    stderr: 0.0,
                    significant: norm > tol,
                });
            }
        }
        (_, Integration::MonteCarlo { opts, stream }) => {
            for (i, j) in BiDegree::all_up_to(j_max).into_iter().enumerate() {
                let space = build_basis(n, j)?;
                let proj = project_basis_mc(
                    |z| f.eval_coords(z.coords()).unwrap_or(Complex64::new(f64::NAN, 0.0)),
                    &space,
                    opts,
                    stream.with_stream(stream_id(stream, i)),
                )?;
                out.push(component_from_estimates(j, space.dim(), &proj.coefficients));
            }
        }
    }
    Ok(out)
}

fn stream_id(stream: RngStream, i: usize) -> u64 {
    stream.stream_id.wrapping_add(i as u64)
}

/// Norm of `f − f_{(0,0)} − f_{(1,1)}` over components with `p + q ≤ j_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub residual_l2: f64,
    pub stderr: f64,
    pub j_max: u32,
    /// Components other than (0,0) and (1,1).
    pub components: Vec<ComponentNorm>,
    pub significant: bool,
}

impl ResidualReport {
    pub fn flagged(&self) -> Vec<BiDegree> {
        self.components.iter().filter(|c| c.significant).map(ComponentNorm::bidegree).collect()
    }
}

/// The residual is significant when any single component is (above `tol`
/// when exact, above 4 standard errors otherwise).
pub fn frame_residual(f: &FrameFunction, j_max: u32, integration: Integration, tol: f64) -> Result<ResidualReport> {
    if j_max == 0 {
        return Err(Error::Configuration("j_max must be positive".into()));
    }
    let comps: Vec<ComponentNorm> = component_norms(f, j_max, integration, tol, true)?
        .into_iter()
        .filter(|c| !matches!((c.p, c.q), (0, 0) | (1, 1)))
        .collect();
    let residual_l2 = comps.iter().map(|c| c.norm * c.norm).sum::<f64>().sqrt();
    let stderr = comps.iter().map(|c| c.stderr * c.stderr).sum::<f64>().sqrt();
    // per-component flags; pooling all components would dilute one real
    // component among many null ones
    let significant = comps.iter().any(|c| c.significant);
    Ok(ResidualReport {
        residual_l2,
        stderr,
        j_max,
        components: comps,
        significant,
    })
}

/// `⟨x|Cy⟩ = ¼ Σ_{k=0}^{3} (−i)^k q(x + i^k y)` on the standard basis.
pub fn operator_from_quadratic_form<Q>(n: usize, q: Q) -> Result<OperatorMatrix>
where
    Q: Fn(&[Complex64]) -> Complex64,
{
    let powers = [C1, Complex64::i(), -C1, -Complex64::i()];
    let mut m = DMatrix::zeros(n, n);
    for k in 0..n {
        for l in 0..n {
            let mut acc = Complex64::zero();
            for (ik, phase) in powers.iter().enumerate() {
                let mut v = vec![Complex64::zero(); n];
                v[k] += C1;
                v[l] += phase;
                acc += powers[(4 - ik) % 4] * q(&v);
            }
            m[(k, l)] = acc / 4.0;
        }
    }
    OperatorMatrix::new(m)
}

/// Result of comparing two operators through their quadratic forms.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarizationCheck {
    /// True iff the forms agree on every sampled point and the operators
    /// then agree within 1e-8 in max norm.
    pub passed: bool,
    pub max_form_difference: f64,
    /// A sampled point where the forms differ by more than 1e-10.
    pub witness: Option<SpherePoint>,
    /// `max |A − B|` of the difference recovered by polarization.
    pub operator_difference: f64,
}

pub fn polarization_uniqueness_check<R: Rng + ?Sized>(
    a: &OperatorMatrix,
    b: &OperatorMatrix,
    n_points: usize,
    rng: &mut R,
) -> Result<PolarizationCheck> {
    let n = a.n();
    if b.n() != n {
        return Err(shape(format!("dimension {n}"), b.n()));
    }
    let mut max_diff = 0.0f64;
    let mut witness = None;
    for _ in 0..n_points {
        let z = sample_sphere_point(n, rng)?;
        let d = (a.quadratic_form(z.coords()) - b.quadratic_form(z.coords())).norm();
        if d > max_diff {
            max_diff = d;
            if d > 1e-10 {
                witness = Some(z);
            }
        }
    }
    let diff = operator_from_quadratic_form(n, |v| a.quadratic_form(v) - b.quadratic_form(v))?;
    let operator_difference = diff.entries().iter().map(|c| c.norm()).fold(0.0, f64::max);
    Ok(PolarizationCheck {
        passed: witness.is_none() && operator_difference <= 1e-8,
        max_form_difference: max_diff,
        witness,
        operator_difference,
    })
}

/// Real-valuedness of `f` against the Hermitian flag of `A`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HermitianCheck {
    pub f_real: bool,
    pub max_imaginary: f64,
    pub hermitian: bool,
    pub hermitian_deviation: f64,
    /// `f_real ⇒ hermitian`.
    pub passed: bool,
}

/// Samples `f` at the data points (sample sets) or at `n_points` random
/// points; if every value is real within 1e-10, the check requires `A` to
/// carry the Hermitian flag.
pub fn hermitian_check<R: Rng + ?Sized>(
    f: &FrameFunction,
    a: &OperatorMatrix,
    n_points: usize,
    rng: &mut R,
) -> Result<HermitianCheck> {
    let values: Vec<Complex64> = match f {
        FrameFunction::Samples { samples, .. } => samples.iter().map(|(_, v)| *v).collect(),
        _ => (0..n_points)
            .map(|_| evaluate_frame(f, &sample_sphere_point(f.n(), rng)?))
            .collect::<Result<_>>()?,
    };
    let max_imaginary = values.iter().map(|v| v.im.abs()).fold(0.0, f64::max);
    let f_real = max_imaginary <= HERMITIAN_TOL;
    let hermitian_deviation = a.hermitian_deviation();
    let hermitian = hermitian_deviation <= HERMITIAN_TOL;
    Ok(HermitianCheck {
        f_real,
        max_imaginary,
        hermitian,
        hermitian_deviation,
        passed: !f_real || hermitian,
    })
}

/// `tr(T P)` for `P = Σ_z |z⟩⟨z|`.
pub fn projector_measure(t: &OperatorMatrix, vectors: &[&SpherePoint]) -> Complex64 {
    vectors.iter().map(|z| t.quadratic_form(z.coords())).sum()
}

/// Outcome of the additivity check `μ(P) = tr(T P)` over random partitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdditivityCheck {
    pub max_error: f64,
    pub trials: usize,
    pub eigenvalues: Vec<f64>,
    pub negative_eigenvalues: Vec<f64>,
    pub warning: Option<String>,
}

/// For random bases and random partitions of the basis into groups, checks
/// `Σ_k tr(T P_k) = 1` and `tr(T P_k) = Σ_{z ∈ group k} ⟨z|Tz⟩`.
pub fn gleason_additivity_check<R: Rng + ?Sized>(
    t: &OperatorMatrix,
    n_trials: usize,
    rng: &mut R,
) -> Result<AdditivityCheck> {
    if !t.is_hermitian() {
        return Err(Error::NonHermitian {
            deviation: t.hermitian_deviation(),
        });
    }
    let n = t.n();
    if (t.trace() - 1.0).norm() > HERMITIAN_TOL {
        return Err(Error::Precondition(format!("operator must have unit trace, got {}", t.trace())));
    }
    let eigenvalues = t.eigenvalues()?;
    let negative_eigenvalues: Vec<f64> = eigenvalues.iter().copied().filter(|&e| e < -1e-12).collect();
    let warning = (!negative_eigenvalues.is_empty()).then(|| {
        let msg = format!("operator is not positive: negative eigenvalues {negative_eigenvalues:?}");
        log::warn!("{msg}");
        msg
    });
    let mut max_error = 0.0f64;
    for _ in 0..n_trials {
        let basis = random_orthonormal_basis(n, rng)?;
        let groups = rng.random_range(1..=n);
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..groups)).collect();
        let mut total = Complex64::zero();
        for g in 0..groups {
            let members: Vec<&SpherePoint> = (0..n).filter(|&k| labels[k] == g).map(|k| &basis.vectors[k]).collect();
            if members.is_empty() {
                continue;
            }
            let mut proj = DMatrix::<Complex64>::zeros(n, n);
            for z in &members {
                let v = DVector::from_column_slice(z.coords());
                proj += &v * v.adjoint();
            }
            let tr = (t.entries() * proj).trace();
            let frame_sum = projector_measure(t, &members);
            max_error = max_error.max((tr - frame_sum).norm());
            total += tr;
        }
        max_error = max_error.max((total - 1.0).norm());
    }
    Ok(AdditivityCheck {
        max_error,
        trials: n_trials,
        eigenvalues,
        negative_eigenvalues,
        warning,
    })
}

/// Settings of [`verify_frame`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyConfig {
    pub n_bases: usize,
    pub tol: f64,
    pub j_max: u32,
    pub additivity_trials: usize,
    pub hermitian_points: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            n_bases: 100,
            tol: 1e-8,
            j_max: 4,
            additivity_trials: 100,
            hermitian_points: 200,
        }
    }
}

/// Combined verification of one input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GleasonReport {
    pub n: usize,
    /// Per-basis sums; for sample sets the single value `tr A` of the fit.
    pub weight_estimates: Vec<Complex64>,
    pub weight: Complex64,
    pub max_deviation: f64,
    /// `None` for sample sets, where basis sums cannot be evaluated.
    pub frame_property: Option<bool>,
    pub reconstruction: OperatorRecord,
    pub reconstruction_moment: OperatorRecord,
    pub reconstruction_stderr: f64,
    pub routes_difference: f64,
    pub routes_agree: bool,
    pub residual_l2: f64,
    pub residual: ResidualReport,
    pub hermitian: HermitianCheck,
    pub additivity_max_error: Option<f64>,
    pub additivity: Option<AdditivityCheck>,
    pub passed: bool,
}

/// Runs the frame check, residual, both reconstructions, the Hermitian check
/// and (when `A` is Hermitian with nonzero trace) additivity of `A / tr A`.
pub fn verify_frame(f: &FrameFunction, cfg: &VerifyConfig, stream: RngStream) -> Result<GleasonReport> {
    let n = f.n();
    let (moment, harmonic) = (
        reconstruct_moment(f, Integration::Exact)?,
        reconstruct_harmonic(f, Integration::Exact)?,
    );
    let routes_difference = moment.operator.max_abs_diff(&harmonic.operator);
    let routes_agree = if f.is_evaluatable() {
        routes_difference <= EXACT_TOL
    } else {
        let combined = (moment.frobenius_stderr.powi(2) + harmonic.frobenius_stderr.powi(2)).sqrt();
        moment.operator.frobenius_diff(&harmonic.operator) <= MC_SIGMAS * combined
    };
    if !routes_agree {
        log::error!("reconstruction routes disagree by {routes_difference:e}");
    }
    let a = harmonic.operator.clone();

    let (weight_estimates, weight, max_deviation, frame_property) = if f.is_evaluatable() {
        let check = check_frame_property(f, cfg.n_bases, cfg.tol, &mut stream.with_stream(stream_id(stream, 1)).rng())?;
        (check.sums, check.weight, check.max_deviation, Some(check.passed))
    } else {
        (vec![a.trace()], a.trace(), 0.0, None)
    };
    let residual = frame_residual(f, cfg.j_max, Integration::Exact, cfg.tol)?;
    let hermitian = hermitian_check(f, &a, cfg.hermitian_points, &mut stream.with_stream(stream_id(stream, 2)).rng())?;
    let additivity = if a.is_hermitian() && a.trace().norm() > 1e-12 {
        let t = a.scale(a.trace().inv());
        Some(gleason_additivity_check(&t, cfg.additivity_trials, &mut stream.with_stream(stream_id(stream, 3)).rng())?)
    } else {
        None
    };
    let additivity_ok = additivity.as_ref().is_none_or(|c| c.max_error <= EXACT_TOL);
    let passed = frame_property.unwrap_or(true) && !residual.significant && routes_agree && hermitian.passed && additivity_ok;
    Ok(GleasonReport {
        n,
        weight_estimates,
        weight,
        max_deviation,
        frame_property,
        reconstruction: a.to_record(),
        reconstruction_moment: moment.operator.to_record(),
        reconstruction_stderr: harmonic.frobenius_stderr,
        routes_difference,
        routes_agree,
        residual_l2: residual.residual_l2,
        additivity_max_error: additivity.as_ref().map(|c| c.max_error),
        residual,
        hermitian,
        additivity,
        passed,
    })
}

fn csv_err(line: usize, field: &str, message: impl ToString) -> Error {
    Error::Parse {
        line,
        field: field.into(),
        message: message.to_string(),
    }
}

/// Reads `re_1..re_n, im_1..im_n, f_re, f_im`. Points are accepted when
/// `| |z|² − 1 | ≤ 1e-9` and renormalized.
pub fn read_samples_csv<R: Read>(reader: R) -> Result<Vec<(SpherePoint, Complex64)>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| csv_err(1, "header", e))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.len() < 2 || (header.len() - 2) % 2 != 0 {
        return Err(csv_err(1, "header", format!("expected 2n+2 columns, found {}", header.len())));
    }
    let n = (header.len() - 2) / 2;
    let expected: Vec<String> = (1..=n)
        .map(|k| format!("re_{k}"))
        .chain((1..=n).map(|k| format!("im_{k}")))
        .chain(["f_re".to_string(), "f_im".to_string()])
        .collect();
    for (got, want) in header.iter().zip(&expected) {
        if got != want {
            return Err(csv_err(1, got, format!("expected column `{want}`")));
        }
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| csv_err(line, "record", e))?;
        if rec.len() != header.len() {
            return Err(csv_err(line, "record", format!("expected {} fields, found {}", header.len(), rec.len())));
        }
        let vals: Vec<f64> = rec
            .iter()
            .zip(&expected)
            .map(|(s, name)| {
                s.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| csv_err(line, name, format!("not a finite number: `{s}`")))
            })
            .collect::<Result<_>>()?;
        let coords: Vec<Complex64> = (0..n).map(|k| Complex64::new(vals[k], vals[n + k])).collect();
        let norm_sq: f64 = coords.iter().map(|c| c.norm_sqr()).sum();
        if (norm_sq - 1.0).abs() > SAMPLE_NORM_TOL {
            return Err(csv_err(line, "re_1", format!("point is not a unit vector (|z| = {})", norm_sq.sqrt())));
        }
        let z = SpherePoint::normalized(coords).map_err(|e| csv_err(line, "re_1", e))?;
        out.push((z, Complex64::new(vals[2 * n], vals[2 * n + 1])));
    }
    Ok(out)
}

pub fn write_samples_csv<W: Write>(writer: W, samples: &[(SpherePoint, Complex64)]) -> Result<()> {
    let io = |e: csv::Error| Error::Configuration(format!("writing samples: {e}"));
    let n = samples.first().map_or(0, |(z, _)| z.dim());
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
    let header: Vec<String> = (1..=n)
        .map(|k| format!("re_{k}"))
        .chain((1..=n).map(|k| format!("im_{k}")))
        .chain(["f_re".to_string(), "f_im".to_string()])
        .collect();
    w.write_record(&header).map_err(io)?;
    for (z, v) in samples {
        let row: Vec<String> = z
            .coords()
            .iter()
            .map(|c| c.re)
            .chain(z.coords().iter().map(|c| c.im))
            .chain([v.re, v.im])
            .map(|x| format!("{x:?}"))
            .collect();
        w.write_record(&row).map_err(io)?;
    }
    w.flush().map_err(|e| Error::Configuration(format!("writing samples: {e}")))?;
    Ok(())
}

/// `n_samples` points from ν_n with the values of an evaluatable model.
pub fn sample_frame(f: &FrameFunction, n_samples: usize, stream: RngStream) -> Result<Vec<(SpherePoint, Complex64)>> {
    let mut rng = stream.rng();
    (0..n_samples)
        .map(|_| {
            let z = sample_sphere_point(f.n(), &mut rng)?;
            let v = evaluate_frame(f, &z)?;
            Ok((z, v))
        })
        .collect()
}
