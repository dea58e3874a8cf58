//! Harmonic subspaces H_{(p,q)} = ker Δ ∩ P^{p,q}, zonal polynomials, the
//! representation `D(g) f = f ∘ g⁻¹` restricted to each subspace, its
//! characters, and the two projection methods (basis expansion and
//! character integral).

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use nalgebra::DMatrix;
use num_bigint::BigInt;
use num_complex::Complex64;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{require_dimension, shape, Error, Result};
use crate::exact::{parse_rational, rational_to_f64, Coefficient, GaussRational};
use crate::measure::{
    mc_reduce, mc_reduce_vector, sample_haar_unitary, sample_unit_vector, MCEstimate, McOptions,
    RngStream, SpherePoint, UnitaryMatrix, SPHERE_TOL,
};
use crate::polynomials::{
    monomial_count, monomials, BiDegreePolynomial, ExactPolynomial, FloatPolynomial, MultiIndex,
    SpherePolynomial, TermRecord,
};

/// The label j = (p, q) of a harmonic subspace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BiDegree {
    pub p: u32,
    pub q: u32,
}

impl BiDegree {
    pub const fn new(p: u32, q: u32) -> Self {
        Self { p, q }
    }

    pub fn total(&self) -> u32 {
        self.p + self.q
    }

    /// All bidegrees with `p + q ≤ max_total`, ordered by total degree, then p.
    pub fn all_up_to(max_total: u32) -> Vec<BiDegree> {
        (0..=max_total)
            .flat_map(|t| (0..=t).rev().map(move |p| BiDegree::new(p, t - p)))
            .collect()
    }
}

impl fmt::Display for BiDegree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.p, self.q)
    }
}

impl FromStr for BiDegree {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().trim_start_matches('(').trim_end_matches(')');
        let bad = || Error::Parse {
            line: 0,
            field: "bidegree".into(),
            message: format!("expected `p,q`, got `{s}`"),
        };
        let (p, q) = t.split_once(',').ok_or_else(bad)?;
        Ok(Self::new(
            p.trim().parse().map_err(|_| bad())?,
            q.trim().parse().map_err(|_| bad())?,
        ))
    }
}

/// Bound on dim P^{p,q} (number of monomial pairs) accepted by basis
/// construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BasisConfig {
    pub max_monomial_pairs: usize,
}

impl Default for BasisConfig {
    fn default() -> Self {
        Self {
            max_monomial_pairs: 2000,
        }
    }
}

/// dim P^{p,q} = C(p+n−1, n−1)·C(q+n−1, n−1).
pub fn polynomial_space_dim(n: usize, j: BiDegree) -> usize {
    monomial_count(n, j.p).saturating_mul(monomial_count(n, j.q))
}

/// dim H_{(p,q)} = dim P^{p,q} − dim P^{p−1,q−1}.
pub fn dimension(n: usize, j: BiDegree) -> Result<usize> {
    require_dimension(n)?;
    let lower = if j.p > 0 && j.q > 0 {
        polynomial_space_dim(n, BiDegree::new(j.p - 1, j.q - 1))
    } else {
        0
    };
    Ok(polynomial_space_dim(n, j) - lower)
}

fn guard(n: usize, j: BiDegree, cfg: &BasisConfig) -> Result<()> {
    let size = polynomial_space_dim(n, j);
    if size > cfg.max_monomial_pairs {
        return Err(Error::ResourceGuard {
            n,
            p: j.p,
            q: j.q,
            size,
            bound: cfg.max_monomial_pairs,
        });
    }
    Ok(())
}

fn monomial_pairs(n: usize, j: BiDegree) -> Vec<(MultiIndex, MultiIndex)> {
    let holo = monomials(n, j.p);
    let anti = monomials(n, j.q);
    holo.iter()
        .flat_map(|a| anti.iter().map(move |b| (a.clone(), b.clone())))
        .collect()
}

/// Matrix of Δ: P^{p,q} → P^{p−1,q−1} in the monomial bases (rows: target
/// monomials, columns: source monomials).
fn laplacian_matrix(n: usize, j: BiDegree) -> (Vec<(MultiIndex, MultiIndex)>, Vec<Vec<BigRational>>) {
    let cols = monomial_pairs(n, j);
    if j.p == 0 || j.q == 0 {
        return (cols, Vec::new());
    }
    let rows = monomial_pairs(n, BiDegree::new(j.p - 1, j.q - 1));
    let row_index: HashMap<&(MultiIndex, MultiIndex), usize> =
        rows.iter().enumerate().map(|(i, r)| (r, i)).collect();
    let mut mat = vec![vec![BigRational::zero(); cols.len()]; rows.len()];
    for (c, (alpha, beta)) in cols.iter().enumerate() {
        let mono = ExactPolynomial::monomial(n, alpha.clone(), beta.clone(), GaussRational::one())
            .expect("consistent dimensions");
        for (a, b, v) in mono.apply_laplacian().terms() {
            let r = row_index[&(a.clone(), b.clone())];
            mat[r][c] = v.re.clone();
        }
    }
    (cols, mat)
}

/// Reduced row echelon form in place; returns pivot columns.
fn rref(mat: &mut [Vec<BigRational>], ncols: usize) -> Vec<usize> {
    let mut pivots = Vec::new();
    let mut row = 0;
    for col in 0..ncols {
        if row == mat.len() {
            break;
        }
        let Some(pr) = (row..mat.len()).find(|&r| !mat[r][col].is_zero()) else {
            continue;
        };
        mat.swap(row, pr);
        let inv = mat[row][col].recip();
        for v in mat[row].iter_mut() {
            if !v.is_zero() {
                *v *= &inv;
            }
        }
        let pivot_row = mat[row].clone();
        for (r, other) in mat.iter_mut().enumerate() {
            if r == row || other[col].is_zero() {
                continue;
            }
            let factor = other[col].clone();
            for (v, pv) in other.iter_mut().zip(&pivot_row) {
                if !pv.is_zero() {
                    *v -= &factor * pv;
                }
            }
        }
        pivots.push(col);
        row += 1;
    }
    pivots
}

/// Exact rank of ker Δ on P^{p,q}, from row reduction.
pub fn kernel_rank(n: usize, j: BiDegree, cfg: &BasisConfig) -> Result<usize> {
    require_dimension(n)?;
    guard(n, j, cfg)?;
    let (cols, mut mat) = laplacian_matrix(n, j);
    let pivots = rref(&mut mat, cols.len());
    Ok(cols.len() - pivots.len())
}

fn exact_kernel(n: usize, j: BiDegree) -> Vec<ExactPolynomial> {
    let (cols, mut mat) = laplacian_matrix(n, j);
    let pivots = rref(&mut mat, cols.len());
    let is_pivot: Vec<bool> = {
        let mut v = vec![false; cols.len()];
        for &p in &pivots {
            v[p] = true;
        }
        v
    };
    let mut out = Vec::new();
    for free in (0..cols.len()).filter(|&c| !is_pivot[c]) {
        let mut terms = vec![(cols[free].0.clone(), cols[free].1.clone(), GaussRational::one())];
        for (r, &pc) in pivots.iter().enumerate() {
            let v = &mat[r][free];
            if !v.is_zero() {
                terms.push((cols[pc].0.clone(), cols[pc].1.clone(), GaussRational::real(-v.clone())));
            }
        }
        out.push(ExactPolynomial::from_terms(n, j.p, j.q, terms).expect("kernel terms are homogeneous"));
    }
    out
}

/// Rescales to coprime integer coefficients with a positive leading term.
fn primitive(poly: &ExactPolynomial) -> ExactPolynomial {
    let mut den = BigInt::one();
    let mut num = BigInt::zero();
    let mut lead_negative = None;
    for (_, _, c) in poly.terms() {
        for part in [&c.re, &c.im] {
            if part.is_zero() {
                continue;
            }
            den = den.lcm(part.denom());
            num = num.gcd(part.numer());
            if lead_negative.is_none() {
                lead_negative = Some(part.is_negative());
            }
        }
    }
    if num.is_zero() {
        return poly.clone();
    }
    let mut factor = BigRational::new(den, num);
    if lead_negative == Some(true) {
        factor = -factor;
    }
    poly.scale_rational(&factor)
}

/// An orthonormal basis {Z_m} of H_{(p,q)}.
///
/// Stored exactly as mutually orthogonal polynomials `V_m` with exact
/// rational squared norms `N_m`; the orthonormal element is
/// `Z_m = V_m / sqrt(N_m)`. Projections only need `V_m / N_m` and stay
/// rational. A floating copy of the `Z_m` is kept for numerical work.
#[derive(Debug, Clone)]
pub struct HarmonicSubspace {
    n: usize,
    j: BiDegree,
    orthogonal: Vec<ExactPolynomial>,
    norms_sq: Vec<BigRational>,
    basis: Vec<FloatPolynomial>,
    kernel: OnceLock<CharacterKernel>,
}

pub fn build_basis(n: usize, j: BiDegree) -> Result<HarmonicSubspace> {
    build_basis_with(n, j, &BasisConfig::default())
}

/// Exact kernel of Δ on P^{p,q} followed by exact Gram–Schmidt.
pub fn build_basis_with(n: usize, j: BiDegree, cfg: &BasisConfig) -> Result<HarmonicSubspace> {
    require_dimension(n)?;
    guard(n, j, cfg)?;
    let kernel = if j == BiDegree::new(0, 0) {
        vec![ExactPolynomial::constant(n, GaussRational::one())]
    } else {
        exact_kernel(n, j)
    };
    let mut orthogonal: Vec<ExactPolynomial> = Vec::with_capacity(kernel.len());
    let mut norms_sq: Vec<BigRational> = Vec::with_capacity(kernel.len());
    for w in kernel {
        let mut v = w.clone();
        for (vi, ni) in orthogonal.iter().zip(&norms_sq) {
            let c = vi.inner_product(&w)?;
            if c.is_zero() {
                continue;
            }
            v = v.sub(&vi.scale(&c).scale_rational(&ni.recip()))?;
        }
        let v = primitive(&v);
        let nn = v.norm_sqr()?;
        debug_assert!(nn.im.is_zero() && nn.re.is_positive());
        orthogonal.push(v);
        norms_sq.push(nn.re);
    }
    Ok(HarmonicSubspace::from_parts(n, j, orthogonal, norms_sq))
}

impl HarmonicSubspace {
    fn from_parts(n: usize, j: BiDegree, orthogonal: Vec<ExactPolynomial>, norms_sq: Vec<BigRational>) -> Self {
        let basis = orthogonal
            .iter()
            .zip(&norms_sq)
            .map(|(v, nn)| {
                let s = 1.0 / rational_to_f64(nn).sqrt();
                v.to_complex().scale(&Complex64::new(s, 0.0))
            })
            .collect();
        Self {
            n,
            j,
            orthogonal,
            norms_sq,
            basis,
            kernel: OnceLock::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bidegree(&self) -> BiDegree {
        self.j
    }

    pub fn dim(&self) -> usize {
        self.orthogonal.len()
    }

    /// Floating orthonormal basis `Z_m`.
    pub fn basis(&self) -> &[FloatPolynomial] {
        &self.basis
    }

    /// Exact orthogonal basis `V_m` with `Z_m = V_m / sqrt(N_m)`.
    pub fn orthogonal_basis(&self) -> &[ExactPolynomial] {
        &self.orthogonal
    }

    /// Exact squared norms `N_m = ⟨V_m, V_m⟩`.
    pub fn norms_sq(&self) -> &[BigRational] {
        &self.norms_sq
    }

    /// Exact Gram matrix `⟨Z_m, Z_m'⟩`. Entries are well defined when the
    /// off-diagonal inner products vanish or `N_m N_m'` is a rational square.
    pub fn gram_exact(&self) -> Result<Vec<Vec<GaussRational>>> {
        let d = self.dim();
        let mut out = vec![vec![GaussRational::zero(); d]; d];
        for a in 0..d {
            for b in 0..d {
                let ip = self.orthogonal[a].inner_product(&self.orthogonal[b])?;
                out[a][b] = if a == b {
                    ip.scale(&self.norms_sq[a].recip())
                } else if ip.is_zero() {
                    ip
                } else {
                    let prod = &self.norms_sq[a] * &self.norms_sq[b];
                    let root = rational_sqrt(&prod).ok_or_else(|| {
                        Error::Precondition(format!("Gram entry ({a},{b}) is irrational"))
                    })?;
                    ip.scale(&root.recip())
                };
            }
        }
        Ok(out)
    }

    /// Projection of a polynomial function onto this subspace, exact in the
    /// coefficient regime of the input: `Σ_m ⟨V_m, f⟩ / N_m · V_m`.
    pub fn project<C: Coefficient>(&self, f: &SpherePolynomial<C>) -> Result<BiDegreePolynomial<C>> {
        if f.n() != self.n {
            return Err(shape(format!("dimension {}", self.n), f.n()));
        }
        let mut out = BiDegreePolynomial::<C>::zero(self.n, self.j.p, self.j.q);
        for (v, nn) in self.orthogonal.iter().zip(&self.norms_sq) {
            let v = v.map_coeffs(C::from_gauss);
            let c = f.inner_with(&v)? * C::from_rational(&nn.recip());
            if !c.is_zero() {
                out = out.add(&v.scale(&c))?;
            }
        }
        Ok(out)
    }

    /// Coefficients `⟨Z_m, f⟩` in the floating regime.
    pub fn coefficients(&self, f: &SpherePolynomial<Complex64>) -> Result<Vec<Complex64>> {
        self.basis.iter().map(|z| f.inner_with(z)).collect()
    }

    /// `Σ_m c_m Z_m`.
    pub fn combine(&self, coefficients: &[Complex64]) -> Result<FloatPolynomial> {
        if coefficients.len() != self.dim() {
            return Err(shape(format!("{} coefficients", self.dim()), coefficients.len()));
        }
        let mut out = FloatPolynomial::zero(self.n, self.j.p, self.j.q);
        for (z, c) in self.basis.iter().zip(coefficients) {
            out = out.add(&z.scale(c))?;
        }
        Ok(out)
    }

    fn character_kernel(&self) -> &CharacterKernel {
        self.kernel.get_or_init(|| CharacterKernel::new(self))
    }

    /// Serializable form; basis element m is `terms / sqrt(norm_sq)`.
    pub fn to_record(&self) -> SubspaceRecord {
        SubspaceRecord {
            n: self.n,
            p: self.j.p,
            q: self.j.q,
            dim: self.dim(),
            basis: self
                .orthogonal
                .iter()
                .zip(&self.norms_sq)
                .map(|(v, nn)| BasisElementRecord {
                    norm_sq: nn.to_string(),
                    terms: v.to_records(),
                })
                .collect(),
        }
    }

    /// Rebuilds a subspace, re-checking harmonicity, orthogonality and norms
    /// exactly.
    pub fn from_record(rec: &SubspaceRecord) -> Result<Self> {
        require_dimension(rec.n)?;
        let j = BiDegree::new(rec.p, rec.q);
        let expected = dimension(rec.n, j)?;
        if rec.dim != expected || rec.basis.len() != expected {
            return Err(shape(format!("{expected} basis elements"), rec.basis.len()));
        }
        let mut orthogonal = Vec::new();
        let mut norms_sq = Vec::new();
        for (i, el) in rec.basis.iter().enumerate() {
            let parse_err = |message: String| Error::Parse {
                line: i + 1,
                field: "basis".into(),
                message,
            };
            let nn = parse_rational(&el.norm_sq).ok_or_else(|| parse_err(format!("bad norm_sq `{}`", el.norm_sq)))?;
            let v = ExactPolynomial::from_records(&el.terms, Some(rec.n))?;
            if v.bidegree() != (rec.p, rec.q) || !v.apply_laplacian().is_zero() {
                return Err(parse_err("element is not in the harmonic subspace".into()));
            }
            if v.norm_sqr()? != GaussRational::real(nn.clone()) {
                return Err(parse_err("norm_sq does not match the element".into()));
            }
            orthogonal.push(v);
            norms_sq.push(nn);
        }
        for a in 0..orthogonal.len() {
            for b in 0..a {
                if !orthogonal[a].inner_product(&orthogonal[b])?.is_zero() {
                    return Err(Error::Precondition(format!("basis elements {b} and {a} are not orthogonal")));
                }
            }
        }
        Ok(Self::from_parts(rec.n, j, orthogonal, norms_sq))
    }
}

fn rational_sqrt(r: &BigRational) -> Option<BigRational> {
    if r.is_negative() {
        return None;
    }
    let (n, d) = (r.numer(), r.denom());
    let (sn, sd) = (n.sqrt(), d.sqrt());
    (&sn * &sn == *n && &sd * &sd == *d).then(|| BigRational::new(sn, sd))
}

/// `{n, p, q, dim, basis}` header plus canonical term records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubspaceRecord {
    pub n: usize,
    pub p: u32,
    pub q: u32,
    pub dim: usize,
    pub basis: Vec<BasisElementRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisElementRecord {
    pub norm_sq: String,
    pub terms: Vec<TermRecord>,
}

/// Symmetric-power bookkeeping for degree `d` monomials: for each monomial,
/// a variable `k` and the index of `γ − e_k` one degree down, plus the
/// "raise by e_l" table.
#[derive(Debug, Clone)]
struct PowerLevel {
    parent: Vec<(usize, usize)>,
    raise: Vec<Vec<usize>>,
}

#[derive(Debug, Clone)]
struct PowerPlan {
    n: usize,
    sizes: Vec<usize>,
    levels: Vec<PowerLevel>,
}

impl PowerPlan {
    fn new(n: usize, max_degree: u32) -> Self {
        let monos: Vec<Vec<MultiIndex>> = (0..=max_degree + 1).map(|d| monomials(n, d)).collect();
        let index: Vec<HashMap<MultiIndex, usize>> = monos
            .iter()
            .map(|ms| ms.iter().cloned().enumerate().map(|(i, m)| (m, i)).collect())
            .collect();
        let mut levels = Vec::new();
        for d in 0..=max_degree as usize {
            let parent = monos[d]
                .iter()
                .map(|g| {
                    if d == 0 {
                        return (0, 0);
                    }
                    let k = g.as_slice().iter().position(|&e| e > 0).unwrap();
                    (k, index[d - 1][&g.minus_unit(k).unwrap()])
                })
                .collect();
            let raise = monos[d]
                .iter()
                .map(|a| {
                    (0..n)
                        .map(|l| index[d + 1][&a.plus(&MultiIndex::unit(n, l))])
                        .collect()
                })
                .collect();
            levels.push(PowerLevel { parent, raise });
        }
        Self {
            n,
            sizes: monos.iter().map(Vec::len).collect(),
            levels,
        }
    }

    /// `T[α][γ]` = coefficient of `z^α` in `(M z)^γ`, degree `d`.
    fn power(&self, m: &DMatrix<Complex64>, d: u32) -> Vec<Vec<Complex64>> {
        let mut t = vec![vec![Complex64::new(1.0, 0.0)]];
        for deg in 1..=d as usize {
            let size = self.sizes[deg];
            let mut next = vec![vec![Complex64::zero(); size]; size];
            let prev_size = self.sizes[deg - 1];
            for (gamma, &(k, parent)) in self.levels[deg].parent.iter().enumerate() {
                for a in 0..prev_size {
                    let c = t[a][parent];
                    if c == Complex64::zero() {
                        continue;
                    }
                    for l in 0..self.n {
                        let target = self.levels[deg - 1].raise[a][l];
                        next[target][gamma] += m[(k, l)] * c;
                    }
                }
            }
            t = next;
        }
        t
    }
}

/// Precomputed data for the fast character `χ(g) = tr(S(g⁻¹) Π)`, where
/// `S(M)` is the composition operator `h ↦ h ∘ M` on P^{p,q} in monomial
/// coordinates and `Π` is the orthogonal projector onto H_{(p,q)}.
#[derive(Debug, Clone)]
struct CharacterKernel {
    p: u32,
    q: u32,
    anti_len: usize,
    plan: PowerPlan,
    projector: Vec<Vec<Complex64>>,
}

impl CharacterKernel {
    fn new(space: &HarmonicSubspace) -> Self {
        let n = space.n;
        let (p, q) = (space.j.p, space.j.q);
        let pairs = monomial_pairs(n, space.j);
        let anti_len = monomial_count(n, q);
        let index: HashMap<(MultiIndex, MultiIndex), usize> =
            pairs.iter().cloned().enumerate().map(|(i, k)| (k, i)).collect();
        let size = pairs.len();
        // Π = Σ_m Z_m ⟨Z_m, ·⟩;  Π[ν][μ] = Σ_m Z_m[ν] ⟨Z_m, x_μ⟩
        let mut projector = vec![vec![Complex64::zero(); size]; size];
        for z in &space.basis {
            let mut dense = vec![Complex64::zero(); size];
            for (a, b, c) in z.terms() {
                dense[index[&(a.clone(), b.clone())]] = *c;
            }
            for (mu, (alpha, beta)) in pairs.iter().enumerate() {
                let x = FloatPolynomial::monomial(n, alpha.clone(), beta.clone(), Complex64::new(1.0, 0.0)).unwrap();
                let ip = z.inner_product(&x).unwrap();
                if ip == Complex64::zero() {
                    continue;
                }
                for nu in 0..size {
                    projector[nu][mu] += dense[nu] * ip;
                }
            }
        }
        Self {
            p,
            q,
            anti_len,
            plan: PowerPlan::new(n, p.max(q)),
            projector,
        }
    }

    fn character(&self, g: &UnitaryMatrix) -> Complex64 {
        let m = g.matrix().adjoint();
        let tp = self.plan.power(&m, self.p);
        let tq = self.plan.power(&m, self.q);
        let (np, nq) = (tp.len(), tq.len());
        // χ = Σ_{μ=(α,β), ν=(γ,δ)} T_p[α][γ] conj(T_q[β][δ]) Π[ν][μ]
        let mut total = Complex64::zero();
        for alpha in 0..np {
            for gamma in 0..np {
                let a = tp[alpha][gamma];
                if a == Complex64::zero() {
                    continue;
                }
                for beta in 0..nq {
                    let mu = alpha * self.anti_len + beta;
                    let mut inner = Complex64::zero();
                    for delta in 0..nq {
                        let b = tq[beta][delta];
                        if b == Complex64::zero() {
                            continue;
                        }
                        inner += b.conj() * self.projector[gamma * self.anti_len + delta][mu];
                    }
                    total += a * inner;
                }
            }
        }
        total
    }
}

/// `D^j(g)_{mm'} = ⟨Z_m, Z_{m'} ∘ g⁻¹⟩`.
pub fn representation_matrix(space: &HarmonicSubspace, g: &UnitaryMatrix) -> Result<DMatrix<Complex64>> {
    if g.dim() != space.n {
        return Err(shape(format!("{0}x{0} unitary", space.n), g.dim()));
    }
    let d = space.dim();
    let moved: Vec<FloatPolynomial> = space
        .basis
        .iter()
        .map(|z| z.compose_with_linear(g, true))
        .collect::<Result<_>>()?;
    let mut out = DMatrix::zeros(d, d);
    for (m, zm) in space.basis.iter().enumerate() {
        for (mp, w) in moved.iter().enumerate() {
            out[(m, mp)] = zm.inner_product(w)?;
        }
    }
    Ok(out)
}

/// `χ_j(g) = tr D^j(g)`.
pub fn character(space: &HarmonicSubspace, g: &UnitaryMatrix) -> Result<Complex64> {
    if g.dim() != space.n {
        return Err(shape(format!("{0}x{0} unitary", space.n), g.dim()));
    }
    Ok(space.character_kernel().character(g))
}

/// Monte Carlo `∫ χ_a(g) conj(χ_b(g)) dμ(g)`.
pub fn schur_inner_product(
    a: &HarmonicSubspace,
    b: &HarmonicSubspace,
    opts: McOptions,
    stream: RngStream,
) -> Result<MCEstimate> {
    if a.n != b.n {
        return Err(shape(format!("dimension {}", a.n), b.n));
    }
    let (ka, kb) = (a.character_kernel(), b.character_kernel());
    let n = a.n;
    mc_reduce(opts, stream, |rng| {
        let g = sample_haar_unitary(n, rng)?;
        Ok(ka.character(&g) * kb.character(&g).conj())
    })
}

/// Per-sample character values `χ(g_i)`, i = 0..n_samples (one stream).
pub fn character_samples(space: &HarmonicSubspace, n_samples: usize, stream: RngStream) -> Result<Vec<Complex64>> {
    let kernel = space.character_kernel();
    let mut rng = stream.rng();
    (0..n_samples)
        .map(|_| Ok(kernel.character(&sample_haar_unitary(space.n, &mut rng)?)))
        .collect()
}

/// How inner products against the basis are evaluated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Integration {
    /// Exact monomial quadrature; requires a polynomial model.
    Exact,
    MonteCarlo { opts: McOptions, stream: RngStream },
}

/// Result of a Monte Carlo basis projection.
#[derive(Debug, Clone)]
pub struct McProjection {
    pub component: FloatPolynomial,
    /// Estimates of `⟨Z_m, f⟩`.
    pub coefficients: Vec<MCEstimate>,
}

impl McProjection {
    /// `Σ_m |⟨Z_m, f⟩|²` and its propagated standard error scale
    /// `sqrt(Σ_m stderr_m²)`.
    pub fn norm_with_stderr(&self) -> (f64, f64) {
        let norm = self.coefficients.iter().map(|c| c.mean.norm_sqr()).sum::<f64>().sqrt();
        let se = self.coefficients.iter().map(|c| c.stderr * c.stderr).sum::<f64>().sqrt();
        (norm, se)
    }
}

/// `f_j = Σ_m ⟨Z_m, f⟩ Z_m`, exact in the input's coefficient regime.
pub fn project_basis<C: Coefficient>(f: &SpherePolynomial<C>, space: &HarmonicSubspace) -> Result<BiDegreePolynomial<C>> {
    space.project(f)
}

/// `f_j` with `⟨Z_m, f⟩` estimated by Monte Carlo over ν_n.
pub fn project_basis_mc<F>(f: F, space: &HarmonicSubspace, opts: McOptions, stream: RngStream) -> Result<McProjection>
where
    F: Fn(&SpherePoint) -> Complex64 + Sync,
{
    if opts.n_samples == 0 {
        return Err(Error::Configuration("Monte Carlo projection with zero samples".into()));
    }
    let n = space.n;
    let basis = &space.basis;
    let coefficients = mc_reduce_vector(opts, stream, basis.len(), |rng, out| {
        let z = sample_unit_vector(n, rng);
        let v = crate::measure::check_finite(f(&z), || z.to_string())?;
        for (slot, zm) in out.iter_mut().zip(basis) {
            *slot = zm.evaluate_at(z.coords()).conj() * v;
        }
        Ok(())
    })?;
    let means: Vec<Complex64> = coefficients.iter().map(|c| c.mean).collect();
    Ok(McProjection {
        component: space.combine(&means)?,
        coefficients,
    })
}

/// Monte Carlo estimate of `f_j(u) = dim H_j · ∫ conj(χ_j(g)) f(g⁻¹u) dμ(g)`.
pub fn project_character<F>(
    f: F,
    space: &HarmonicSubspace,
    u: &SpherePoint,
    opts: McOptions,
    stream: RngStream,
) -> Result<MCEstimate>
where
    F: Fn(&SpherePoint) -> Complex64 + Sync,
{
    if u.dim() != space.n {
        return Err(shape(format!("dimension {}", space.n), u.dim()));
    }
    let kernel = space.character_kernel();
    let dim = space.dim() as f64;
    let n = space.n;
    mc_reduce(opts, stream, |rng| {
        let g = sample_haar_unitary(n, rng)?;
        let moved = g.apply_inverse(u);
        let v = crate::measure::check_finite(f(&moved), || moved.to_string())?;
        Ok(kernel.character(&g).conj() * v * dim)
    })
}

/// `‖f ∘ g⁻¹ − f‖₂`, exact quadrature in the floating regime.
pub fn continuity_defect(f: &FloatPolynomial, g: &UnitaryMatrix) -> Result<f64> {
    let diff = f.compose_with_linear(g, true)?.sub(f)?;
    Ok(diff.norm_sqr()?.re.max(0.0).sqrt())
}

/// `R^n_{p,q}(z) = Σ c_{ab} z^a z̄^b`, the coefficient of `ξ^p η^q` in
/// `(1 − ξz − ηz̄ + ξη)^{1−n}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ZonalPolynomial {
    n: usize,
    j: BiDegree,
    coeffs: BTreeMap<(u32, u32), BigRational>,
}

type OneVar = BTreeMap<(u32, u32), BigRational>;

fn add_scaled(acc: &mut OneVar, src: &OneVar, factor: &BigRational, shift: (u32, u32)) {
    for ((a, b), c) in src {
        let key = (a + shift.0, b + shift.1);
        let v = acc.entry(key).or_insert_with(BigRational::zero);
        *v += c * factor;
        if v.is_zero() {
            acc.remove(&key);
        }
    }
}

/// `R_{a,b}` for all `a ≤ p_max`, `b ≤ q_max`, by the recurrences
/// `R_{0,b+1} = (b+n−1)/(b+1) z̄ R_{0,b}` and
/// `(a+1) R_{a+1,b} = (a+n−1) z R_{a,b} + (a+1) z̄ R_{a+1,b−1} − (a+n−1) R_{a,b−1}`.
fn zonal_grid(n: usize, p_max: u32, q_max: u32) -> HashMap<(u32, u32), OneVar> {
    let mut grid: HashMap<(u32, u32), OneVar> = HashMap::new();
    let r = |num: i64, den: i64| BigRational::new(num.into(), den.into());
    let nn = n as i64;
    grid.insert((0, 0), OneVar::from([((0, 0), BigRational::one())]));
    for b in 0..q_max {
        let mut next = OneVar::new();
        add_scaled(&mut next, &grid[&(0, b)], &r(b as i64 + nn - 1, b as i64 + 1), (0, 1));
        grid.insert((0, b + 1), next);
    }
    for a in 0..p_max {
        let ai = a as i64;
        for b in 0..=q_max {
            let mut next = OneVar::new();
            add_scaled(&mut next, &grid[&(a, b)], &r(ai + nn - 1, ai + 1), (1, 0));
            if b > 0 {
                add_scaled(&mut next, &grid[&(a + 1, b - 1)], &BigRational::one(), (0, 1));
                add_scaled(&mut next, &grid[&(a, b - 1)], &r(-(ai + nn - 1), ai + 1), (0, 0));
            }
            grid.insert((a + 1, b), next);
        }
    }
    grid
}

pub fn zonal_polynomial(n: usize, j: BiDegree) -> Result<ZonalPolynomial> {
    require_dimension(n)?;
    let mut grid = zonal_grid(n, j.p, j.q);
    Ok(ZonalPolynomial {
        n,
        j,
        coeffs: grid.remove(&(j.p, j.q)).unwrap_or_default(),
    })
}

impl ZonalPolynomial {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bidegree(&self) -> BiDegree {
        self.j
    }

    /// Coefficients of `z^a z̄^b`, keyed by `(a, b)`.
    pub fn coefficients(&self) -> &BTreeMap<(u32, u32), BigRational> {
        &self.coeffs
    }

    pub fn coefficient(&self, a: u32, b: u32) -> BigRational {
        self.coeffs.get(&(a, b)).cloned().unwrap_or_else(BigRational::zero)
    }

    pub fn evaluate(&self, z: Complex64) -> Complex64 {
        self.coeffs
            .iter()
            .map(|((a, b), c)| z.powu(*a) * z.conj().powu(*b) * rational_to_f64(c))
            .sum()
    }

    pub fn evaluate_exact(&self, z: &GaussRational) -> GaussRational {
        let zc = z.conj();
        let mut total = GaussRational::zero();
        for ((a, b), c) in &self.coeffs {
            let mut term = GaussRational::real(c.clone());
            for _ in 0..*a {
                term = term * z.clone();
            }
            for _ in 0..*b {
                term = term * zc.clone();
            }
            total = total + term;
        }
        total
    }

    /// `R(1)`.
    pub fn value_at_one(&self) -> BigRational {
        self.coeffs.values().fold(BigRational::zero(), |acc, c| acc + c)
    }

    /// `R(0)`.
    pub fn value_at_zero(&self) -> BigRational {
        self.coefficient(0, 0)
    }
}

/// `F^j_t(u) = R_j(w)` with the pairing `w = Σ_k conj(t_k) u_k`.
///
/// With this pairing `u ↦ F^j_t(u)` lies in H_j (bidegree (p, q) in u).
pub fn zonal_harmonic(zonal: &ZonalPolynomial, t: &[Complex64], u: &[Complex64]) -> Result<Complex64> {
    let n = zonal.n;
    for (name, v) in [("t", t), ("u", u)] {
        if v.len() != n {
            return Err(shape(format!("{name} of length {n}"), v.len()));
        }
        let norm_sq: f64 = v.iter().map(|c| c.norm_sqr()).sum();
        if !((norm_sq - 1.0).abs() <= SPHERE_TOL) {
            return Err(Error::Precondition(format!(
                "{name} must be a unit vector, measured norm {}",
                norm_sq.sqrt()
            )));
        }
    }
    let w: Complex64 = t.iter().zip(u).map(|(a, b)| a.conj() * b).sum();
    Ok(zonal.evaluate(w))
}

/// The zonal harmonic `u ↦ F^j_t(u)` as a homogeneous polynomial of
/// bidegree (p, q); lower-order terms are lifted by powers of `|u|²`.
pub fn zonal_harmonic_polynomial<C: Coefficient>(zonal: &ZonalPolynomial, t: &[C]) -> Result<BiDegreePolynomial<C>> {
    let n = zonal.n;
    if t.len() != n {
        return Err(shape(format!("t of length {n}"), t.len()));
    }
    let conj_t: Vec<C> = t.iter().map(C::conj).collect();
    let w = BiDegreePolynomial::linear_form(&conj_t);
    let w_bar = BiDegreePolynomial::antilinear_form(t);
    let (p, q) = (zonal.j.p, zonal.j.q);
    let mut out = BiDegreePolynomial::zero(n, p, q);
    for ((a, b), c) in &zonal.coeffs {
        let mut term = BiDegreePolynomial::constant(n, C::from_rational(c));
        for _ in 0..*a {
            term = term.mul(&w)?;
        }
        for _ in 0..*b {
            term = term.mul(&w_bar)?;
        }
        out = out.add(&term.homogenize(p, q)?)?;
    }
    Ok(out)
}

/// `R_j(1) + (n − 1) R_j(0) = Σ_k F^j_{e₁}(e_k)`.
pub fn zonal_frame_sum(n: usize, j: BiDegree) -> Result<BigRational> {
    let r = zonal_polynomial(n, j)?;
    Ok(r.value_at_one() + r.value_at_zero() * BigRational::from_integer(BigInt::from(n as i64 - 1)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::sample_sphere_point;
    use rand::Rng;

    fn q(a: i64, b: i64) -> BigRational {
        BigRational::new(a.into(), b.into())
    }

    fn random_harmonic(space: &HarmonicSubspace, rng: &mut impl Rng) -> FloatPolynomial {
        let c: Vec<Complex64> = (0..space.dim())
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        space.combine(&c).unwrap()
    }

    #[test]
    fn dimension_examples() {
        for n in 3..7 {
            assert_eq!(dimension(n, BiDegree::new(0, 0)).unwrap(), 1);
            assert_eq!(dimension(n, BiDegree::new(1, 1)).unwrap(), n * n - 1);
        }
        assert_eq!(dimension(3, BiDegree::new(1, 0)).unwrap(), 3);
        assert_eq!(dimension(3, BiDegree::new(2, 2)).unwrap(), 27);
        assert!(matches!(dimension(2, BiDegree::new(1, 1)), Err(Error::DimensionUnsupported { .. })));
    }

    #[test]
    fn closed_form_dimension_matches_kernel_rank() {
        let cfg = BasisConfig::default();
        for n in 3..=5 {
            for j in BiDegree::all_up_to(5) {
                assert_eq!(kernel_rank(n, j, &cfg).unwrap(), dimension(n, j).unwrap(), "n={n} j={j}");
            }
        }
    }

    #[test]
    fn resource_guard_trips() {
        let cfg = BasisConfig { max_monomial_pairs: 10 };
        let err = build_basis_with(3, BiDegree::new(2, 2), &cfg).unwrap_err();
        assert!(matches!(err, Error::ResourceGuard { size: 36, bound: 10, .. }));
    }

    #[test]
    fn trivial_and_linear_bases() {
        let s = build_basis(4, BiDegree::new(0, 0)).unwrap();
        assert_eq!(s.dim(), 1);
        assert_eq!(s.orthogonal_basis()[0], ExactPolynomial::constant(4, GaussRational::one()));
        assert_eq!(s.norms_sq()[0], q(1, 1));
        let s = build_basis(3, BiDegree::new(2, 0)).unwrap();
        assert_eq!(s.dim(), 6);
        assert!(s.orthogonal_basis().iter().all(|v| v.apply_laplacian().is_zero()));
    }

    #[test]
    fn quadratic_harmonics_are_traceless_forms() {
        let s = build_basis(3, BiDegree::new(1, 1)).unwrap();
        assert_eq!(s.dim(), 8);
        for v in s.orthogonal_basis() {
            let a = v.quadratic_matrix().unwrap();
            let tr = (0..3).fold(GaussRational::zero(), |acc, k| acc + a[k][k].clone());
            assert!(tr.is_zero());
        }
    }

    #[test]
    fn bases_are_exactly_orthonormal_and_harmonic() {
        for j in BiDegree::all_up_to(3) {
            let s = build_basis(3, j).unwrap();
            let gram = s.gram_exact().unwrap();
            for (a, row) in gram.iter().enumerate() {
                for (b, v) in row.iter().enumerate() {
                    let expect = if a == b { GaussRational::one() } else { GaussRational::zero() };
                    assert_eq!(v, &expect, "j={j} ({a},{b})");
                }
            }
            assert!(s.orthogonal_basis().iter().all(|v| v.apply_laplacian().is_zero()));
        }
    }

    #[test]
    fn subspace_record_round_trip() {
        let s = build_basis(3, BiDegree::new(2, 1)).unwrap();
        let rec = s.to_record();
        let json = serde_json::to_string(&rec).unwrap();
        let back: SubspaceRecord = serde_json::from_str(&json).unwrap();
        let s2 = HarmonicSubspace::from_record(&back).unwrap();
        assert_eq!(s2.orthogonal_basis(), s.orthogonal_basis());
        let mut broken = rec.clone();
        broken.basis[0].norm_sq = "7".into();
        assert!(HarmonicSubspace::from_record(&broken).is_err());
    }

    #[test]
    fn zonal_low_orders() {
        for n in 3..6usize {
            let ni = n as i64;
            let r00 = zonal_polynomial(n, BiDegree::new(0, 0)).unwrap();
            assert_eq!(r00.coefficients().len(), 1);
            assert_eq!(r00.coefficient(0, 0), q(1, 1));
            let r10 = zonal_polynomial(n, BiDegree::new(1, 0)).unwrap();
            assert_eq!(r10.coefficients().len(), 1);
            assert_eq!(r10.coefficient(1, 0), q(ni - 1, 1));
            let r11 = zonal_polynomial(n, BiDegree::new(1, 1)).unwrap();
            assert_eq!(r11.coefficient(1, 1), q(ni * (ni - 1), 1));
            assert_eq!(r11.coefficient(0, 0), q(-(ni - 1), 1));
            assert_eq!(r11.coefficients().len(), 2);
            assert_eq!(r11.value_at_zero(), q(-(ni - 1), 1));
            assert_eq!(r11.value_at_one(), q((ni - 1) * (ni - 1), 1));
        }
    }

    /// Coefficient of ξ^p η^q z^a z̄^b in Σ_k C(k+n−2, k) (ξz + ηz̄ − ξη)^k.
    fn taylor_coefficient(n: u64, p: u32, q_: u32, a: u32, b: u32) -> BigRational {
        if a > p || b > q_ || p - a != q_ - b {
            return BigRational::zero();
        }
        let c = (p - a) as u64;
        let k = a as u64 + b as u64 + c;
        let multinomial = crate::exact::factorial(k)
            / (crate::exact::factorial(a as u64) * crate::exact::factorial(b as u64) * crate::exact::factorial(c));
        let mut v = crate::exact::binomial(k + n - 2, k) * multinomial;
        if c % 2 == 1 {
            v = -v;
        }
        BigRational::from_integer(v)
    }

    #[test]
    fn recurrence_matches_generating_function() {
        for n in 3..7usize {
            for j in BiDegree::all_up_to(6) {
                let r = zonal_polynomial(n, j).unwrap();
                for a in 0..=j.p {
                    for b in 0..=j.q {
                        assert_eq!(r.coefficient(a, b), taylor_coefficient(n as u64, j.p, j.q, a, b), "n={n} j={j} ({a},{b})");
                    }
                }
                assert!(r.coefficients().keys().all(|&(a, b)| a <= j.p && b <= j.q));
            }
        }
    }

    #[test]
    fn zonal_frame_sums() {
        assert_eq!(zonal_frame_sum(3, BiDegree::new(1, 1)).unwrap(), q(0, 1));
        assert_eq!(zonal_frame_sum(3, BiDegree::new(1, 0)).unwrap(), q(2, 1));
        for n in 3..6 {
            assert_eq!(zonal_frame_sum(n, BiDegree::new(0, 0)).unwrap(), q(n as i64, 1));
        }
    }

    #[test]
    fn zonal_harmonic_values() {
        let mut rng = RngStream::new(3, 0).rng();
        let n = 4;
        let r00 = zonal_polynomial(n, BiDegree::new(0, 0)).unwrap();
        let r11 = zonal_polynomial(n, BiDegree::new(1, 1)).unwrap();
        let t = sample_sphere_point(n, &mut rng).unwrap();
        let u = sample_sphere_point(n, &mut rng).unwrap();
        assert!((zonal_harmonic(&r00, t.coords(), u.coords()).unwrap() - 1.0).norm() < 1e-15);
        assert!((zonal_harmonic(&r11, t.coords(), t.coords()).unwrap() - 9.0).norm() < 1e-12);
        // u ⟂ t
        let e1 = SpherePoint::basis(n, 0).unwrap();
        let e2 = SpherePoint::basis(n, 1).unwrap();
        assert!((zonal_harmonic(&r11, e1.coords(), e2.coords()).unwrap() + 3.0).norm() < 1e-15);
        let not_unit = vec![Complex64::new(2.0, 0.0), Complex64::zero(), Complex64::zero(), Complex64::zero()];
        let err = zonal_harmonic(&r11, &not_unit, e1.coords()).unwrap_err();
        assert!(matches!(err, Error::Precondition(ref m) if m.contains("measured norm 2")));
    }

    #[test]
    fn zonal_harmonics_lie_in_their_subspace() {
        // exact unit vector t = (3/5, 4i/5, 0)
        let t = vec![
            GaussRational::from_ratio(3, 5),
            GaussRational::new(q(0, 1), q(4, 5)),
            GaussRational::zero(),
        ];
        let spaces: Vec<HarmonicSubspace> = BiDegree::all_up_to(3).into_iter().map(|k| build_basis(3, k).unwrap()).collect();
        for j in BiDegree::all_up_to(3) {
            let zonal = zonal_polynomial(3, j).unwrap();
            let f = zonal_harmonic_polynomial(&zonal, &t).unwrap();
            assert!(f.apply_laplacian().is_zero(), "j={j}");
            let sf = SpherePolynomial::from_part(f.clone());
            for s in &spaces {
                let proj = project_basis(&sf, s).unwrap();
                if s.bidegree() == j {
                    assert_eq!(proj, f, "j={j}");
                } else {
                    assert!(proj.is_zero(), "j={j} k={}", s.bidegree());
                }
            }
            // polynomial agrees with direct evaluation
            let tc: Vec<Complex64> = t.iter().map(|c| c.to_complex()).collect();
            let u = SpherePoint::basis(3, 1).unwrap();
            let direct = zonal_harmonic(&zonal, &tc, u.coords()).unwrap();
            assert!((f.evaluate(&u).unwrap() - direct).norm() < 1e-12);
        }
    }

    #[test]
    fn projection_examples() {
        let n = 3;
        let s00 = build_basis(n, BiDegree::new(0, 0)).unwrap();
        let s11 = build_basis(n, BiDegree::new(1, 1)).unwrap();
        let s20 = build_basis(n, BiDegree::new(2, 0)).unwrap();
        let z = ExactPolynomial::monomial(n, MultiIndex::unit(n, 0), MultiIndex::unit(n, 0), GaussRational::one()).unwrap();
        let proj = project_basis(&SpherePolynomial::from_part(z), &s00).unwrap();
        assert_eq!(proj, ExactPolynomial::constant(n, GaussRational::from_ratio(1, 3)));
        for v in s11.orthogonal_basis() {
            let sf = SpherePolynomial::from_part(v.clone());
            assert_eq!(&project_basis(&sf, &s11).unwrap(), v);
            assert!(project_basis(&sf, &s00).unwrap().is_zero());
            assert!(project_basis(&sf, &s20).unwrap().is_zero());
        }
        let err = project_basis_mc(|_| Complex64::zero(), &s11, McOptions::new(0), RngStream::new(1, 0)).unwrap_err();
        assert!(matches!(err, Error::Configuration(_)));
    }

    #[test]
    fn orthogonal_decomposition_reconstructs() {
        let mut rng = RngStream::new(8, 0).rng();
        let n = 3;
        for (p, q_) in [(1, 1), (2, 1), (2, 2), (3, 1)] {
            let terms: Vec<_> = monomial_pairs(n, BiDegree::new(p, q_))
                .into_iter()
                .map(|(a, b)| (a, b, GaussRational::new(q(rng.random_range(-5..6), rng.random_range(1..4)), q(rng.random_range(-3..4), 2))))
                .collect();
            let f = ExactPolynomial::from_terms(n, p, q_, terms).unwrap();
            let sf = SpherePolynomial::from_part(f.clone());
            let mut total = ExactPolynomial::zero(n, p, q_);
            for j in BiDegree::all_up_to(p + q_) {
                let comp = project_basis(&sf, &build_basis(n, j).unwrap()).unwrap();
                if j.p <= p && j.q <= q_ && p - j.p == q_ - j.q {
                    total = total.add(&comp.homogenize(p, q_).unwrap()).unwrap();
                } else {
                    assert!(comp.is_zero(), "({p},{q_}) -> {j}");
                }
            }
            assert_eq!(total, f);
        }
    }

    #[test]
    fn projection_commutes_with_group_action() {
        let mut rng = RngStream::new(9, 0).rng();
        let n = 3;
        let s = build_basis(n, BiDegree::new(1, 1)).unwrap();
        let f = FloatPolynomial::from_terms(
            n,
            2,
            2,
            monomial_pairs(n, BiDegree::new(2, 2))
                .into_iter()
                .map(|(a, b)| (a, b, Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))),
        )
        .unwrap();
        for _ in 0..5 {
            let g = sample_haar_unitary(n, &mut rng).unwrap();
            let lhs = project_basis(&SpherePolynomial::from_part(f.compose_with_linear(&g, true).unwrap()), &s).unwrap();
            let rhs = project_basis(&SpherePolynomial::from_part(f.clone()), &s).unwrap().compose_with_linear(&g, true).unwrap();
            assert!(lhs.max_coeff_diff(&rhs) < 1e-10);
        }
    }

    #[test]
    fn representation_is_unitary_homomorphism() {
        let mut rng = RngStream::new(10, 0).rng();
        let s = build_basis(3, BiDegree::new(2, 1)).unwrap();
        let id = representation_matrix(&s, &UnitaryMatrix::identity(3)).unwrap();
        assert!((id - DMatrix::<Complex64>::identity(s.dim(), s.dim())).norm() < 1e-12);
        let g = sample_haar_unitary(3, &mut rng).unwrap();
        let h = sample_haar_unitary(3, &mut rng).unwrap();
        let dg = representation_matrix(&s, &g).unwrap();
        let dh = representation_matrix(&s, &h).unwrap();
        let dgh = representation_matrix(&s, &g.compose(&h)).unwrap();
        assert!((&dg * &dh - dgh).norm() < 1e-10);
        let eye = DMatrix::<Complex64>::identity(s.dim(), s.dim());
        assert!((dg.adjoint() * &dg - eye).norm() < 1e-10);
    }

    #[test]
    fn fast_character_matches_trace() {
        let mut rng = RngStream::new(11, 0).rng();
        for j in [BiDegree::new(1, 1), BiDegree::new(2, 0), BiDegree::new(2, 1), BiDegree::new(0, 3)] {
            let s = build_basis(3, j).unwrap();
            assert!((character(&s, &UnitaryMatrix::identity(3)).unwrap() - s.dim() as f64).norm() < 1e-10);
            for _ in 0..3 {
                let g = sample_haar_unitary(3, &mut rng).unwrap();
                let tr = representation_matrix(&s, &g).unwrap().trace();
                assert!((character(&s, &g).unwrap() - tr).norm() < 1e-10, "j={j}");
            }
        }
    }

    #[test]
    fn adjoint_character() {
        let mut rng = RngStream::new(12, 0).rng();
        for n in 3..5 {
            let s = build_basis(n, BiDegree::new(1, 1)).unwrap();
            let s0 = build_basis(n, BiDegree::new(0, 0)).unwrap();
            for _ in 0..5 {
                let g = sample_haar_unitary(n, &mut rng).unwrap();
                let expect = g.trace().norm_sqr() - 1.0;
                assert!((representation_matrix(&s, &g).unwrap().trace() - expect).norm() < 1e-10);
                assert!((character(&s0, &g).unwrap() - 1.0).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn blocks_are_exactly_orthogonal_across_subspaces() {
        // exactly orthogonal rotation in the (1,2) plane
        let r = |a, b| GaussRational::from_ratio(a, b);
        let m = vec![
            vec![r(3, 5), r(-4, 5), r(0, 1)],
            vec![r(4, 5), r(3, 5), r(0, 1)],
            vec![r(0, 1), r(0, 1), r(1, 1)],
        ];
        let inv: Vec<Vec<GaussRational>> = (0..3).map(|i| (0..3).map(|k| m[k][i].conj()).collect()).collect();
        let spaces: Vec<_> = [(0, 0), (1, 1), (2, 2)].iter().map(|&(p, q_)| build_basis(3, BiDegree::new(p, q_)).unwrap()).collect();
        for a in &spaces {
            for b in &spaces {
                if a.bidegree() == b.bidegree() {
                    continue;
                }
                for za in a.orthogonal_basis() {
                    for zb in b.orthogonal_basis() {
                        let moved = zb.compose_with_matrix(&inv).unwrap();
                        assert!(za.inner_product(&moved).unwrap().is_zero());
                    }
                }
            }
        }
    }

    #[test]
    fn character_projection_of_constant_vanishes() {
        let s = build_basis(3, BiDegree::new(1, 1)).unwrap();
        let u = SpherePoint::basis(3, 0).unwrap();
        let est = project_character(|_| Complex64::new(1.0, 0.0), &s, &u, McOptions::new(50_000), RngStream::new(13, 0)).unwrap();
        assert!(est.within(Complex64::zero(), 4.0), "{est:?}");
        let z1 = s.basis()[0].clone();
        let target = z1.evaluate(&u).unwrap();
        let est = project_character(|z| z1.evaluate_at(z.coords()), &s, &u, McOptions::new(50_000), RngStream::new(13, 1)).unwrap();
        assert!(est.within(target, 4.0), "{est:?} vs {target}");
    }

    #[test]
    fn strong_continuity_probe() {
        let mut rng = RngStream::new(14, 0).rng();
        let s = build_basis(3, BiDegree::new(2, 1)).unwrap();
        let f = random_harmonic(&s, &mut rng);
        let h = DMatrix::from_fn(3, 3, |_, _| crate::measure::complex_gaussian(&mut rng));
        let h = (&h + h.adjoint()) * Complex64::new(0.5, 0.0);
        let defects: Vec<f64> = [0.1, 0.01, 0.001]
            .iter()
            .map(|&t| continuity_defect(&f, &UnitaryMatrix::exp_hermitian(&h, t).unwrap()).unwrap())
            .collect();
        assert!(defects[0] > defects[1] && defects[1] > defects[2], "{defects:?}");
    }

    #[test]
    fn bidegree_parsing() {
        assert_eq!("2,1".parse::<BiDegree>().unwrap(), BiDegree::new(2, 1));
        assert_eq!("(0, 3)".parse::<BiDegree>().unwrap(), BiDegree::new(0, 3));
        assert!("x".parse::<BiDegree>().is_err());
        assert_eq!(BiDegree::all_up_to(1), vec![BiDegree::new(0, 0), BiDegree::new(1, 0), BiDegree::new(0, 1)]);
    }
}
