//! Homogeneous polynomials of bidegree (p, q) in (z, z̄) on C^n.
//!
//! A [`BiDegreePolynomial`] stores `Σ c_{αβ} z^α z̄^β` sparsely with
//! `|α| = p`, `|β| = q`. Coefficients are either exact ([`GaussRational`])
//! or floating ([`Complex64`]); every operation here keeps the regime of its
//! inputs. Inner products are the L²(ν_n) ones, computed from exact moments.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{require_dimension, shape, Error, Result};
use crate::exact::{parse_rational, Coefficient, GaussRational};
use crate::measure::{SpherePoint, UnitaryMatrix};

/// Exponent vector of a monomial in n variables.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(exponents: Vec<u32>) -> Self {
        Self(exponents)
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0; n])
    }

    pub fn unit(n: usize, k: usize) -> Self {
        let mut e = vec![0; n];
        e[k] = 1;
        Self(e)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.0
    }

    pub fn plus(&self, other: &MultiIndex) -> MultiIndex {
        MultiIndex(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    /// `self − e_k`, or `None` if the k-th exponent is zero.
    pub fn minus_unit(&self, k: usize) -> Option<MultiIndex> {
        if self.0[k] == 0 {
            return None;
        }
        let mut e = self.0.clone();
        e[k] -= 1;
        Some(MultiIndex(e))
    }

    pub fn factorial(&self) -> u64 {
        self.0
            .iter()
            .map(|&a| (1..=a as u64).product::<u64>())
            .product()
    }
}

/// All multi-indices of length `n` and total degree `degree`, in ascending
/// lexicographic order.
pub fn monomials(n: usize, degree: u32) -> Vec<MultiIndex> {
    fn rec(prefix: &mut Vec<u32>, remaining: u32, slots: usize, out: &mut Vec<MultiIndex>) {
        if slots == 1 {
            prefix.push(remaining);
            out.push(MultiIndex(prefix.clone()));
            prefix.pop();
            return;
        }
        for e in 0..=remaining {
            prefix.push(e);
            rec(prefix, remaining - e, slots - 1, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if n == 0 {
        return out;
    }
    rec(&mut Vec::with_capacity(n), degree, n, &mut out);
    out
}

/// `C(degree + n − 1, n − 1)`, the number of monomials of a given degree.
pub fn monomial_count(n: usize, degree: u32) -> usize {
    let (top, k) = (degree as u64 + n as u64 - 1, n as u64 - 1);
    crate::exact::binomial(top, k).to_usize().unwrap_or(usize::MAX)
}

type Term = (MultiIndex, MultiIndex);

/// `Σ c_{αβ} z^α z̄^β` with `|α| = p`, `|β| = q`; zero coefficients are not
/// stored and terms are ordered lexicographically on `(α, β)`.
#[derive(Clone, PartialEq)]
pub struct BiDegreePolynomial<C> {
    n: usize,
    p: u32,
    q: u32,
    terms: BTreeMap<Term, C>,
}

pub type ExactPolynomial = BiDegreePolynomial<GaussRational>;
pub type FloatPolynomial = BiDegreePolynomial<Complex64>;

impl<C: Coefficient> BiDegreePolynomial<C> {
    pub fn zero(n: usize, p: u32, q: u32) -> Self {
        Self {
            n,
            p,
            q,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(n: usize, c: C) -> Self {
        let mut poly = Self::zero(n, 0, 0);
        poly.insert(MultiIndex::zeros(n), MultiIndex::zeros(n), c);
        poly
    }

    pub fn monomial(n: usize, alpha: MultiIndex, beta: MultiIndex, c: C) -> Result<Self> {
        if alpha.len() != n || beta.len() != n {
            return Err(shape(format!("multi-indices of length {n}"), format!("{} and {}", alpha.len(), beta.len())));
        }
        let mut poly = Self::zero(n, alpha.degree(), beta.degree());
        poly.insert(alpha, beta, c);
        Ok(poly)
    }

    /// Builds a polynomial from `(α, β, c)` triples, summing duplicates.
    pub fn from_terms<I>(n: usize, p: u32, q: u32, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (MultiIndex, MultiIndex, C)>,
    {
        let mut poly = Self::zero(n, p, q);
        for (alpha, beta, c) in terms {
            if alpha.len() != n || beta.len() != n {
                return Err(shape(format!("multi-indices of length {n}"), format!("{} and {}", alpha.len(), beta.len())));
            }
            if alpha.degree() != p || beta.degree() != q {
                return Err(shape(
                    format!("term of bidegree ({p},{q})"),
                    format!("({},{})", alpha.degree(), beta.degree()),
                ));
            }
            poly.insert(alpha, beta, c);
        }
        Ok(poly)
    }

    /// `z̄ᵗ A z = Σ_{k,l} A_kl z̄_k z_l` for a square matrix given by rows.
    pub fn quadratic_form(a: &[Vec<C>]) -> Result<Self> {
        let n = a.len();
        let mut poly = Self::zero(n, 1, 1);
        for (k, row) in a.iter().enumerate() {
            if row.len() != n {
                return Err(shape(format!("row of length {n}"), row.len()));
            }
            for (l, c) in row.iter().enumerate() {
                poly.insert(MultiIndex::unit(n, l), MultiIndex::unit(n, k), c.clone());
            }
        }
        Ok(poly)
    }

    /// `Σ_l c_l z_l`.
    pub fn linear_form(c: &[C]) -> Self {
        let n = c.len();
        let mut poly = Self::zero(n, 1, 0);
        for (l, v) in c.iter().enumerate() {
            poly.insert(MultiIndex::unit(n, l), MultiIndex::zeros(n), v.clone());
        }
        poly
    }

    /// `Σ_l c_l z̄_l`.
    pub fn antilinear_form(c: &[C]) -> Self {
        let n = c.len();
        let mut poly = Self::zero(n, 0, 1);
        for (l, v) in c.iter().enumerate() {
            poly.insert(MultiIndex::zeros(n), MultiIndex::unit(n, l), v.clone());
        }
        poly
    }

    /// `|z|^{2k} = (Σ_l z_l z̄_l)^k`.
    pub fn norm_power(n: usize, k: u32) -> Self {
        let mut base = Self::zero(n, 1, 1);
        for l in 0..n {
            base.insert(MultiIndex::unit(n, l), MultiIndex::unit(n, l), C::one());
        }
        let mut acc = Self::constant(n, C::one());
        for _ in 0..k {
            acc = acc.mul_unchecked(&base);
        }
        acc
    }

    fn insert(&mut self, alpha: MultiIndex, beta: MultiIndex, c: C) {
        use std::collections::btree_map::Entry;
        if c.is_zero() {
            return;
        }
        match self.terms.entry((alpha, beta)) {
            Entry::Vacant(v) => {
                v.insert(c);
            }
            Entry::Occupied(mut o) => {
                let sum = o.get().clone() + c;
                if sum.is_zero() {
                    o.remove();
                } else {
                    *o.get_mut() = sum;
                }
            }
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bidegree(&self) -> (u32, u32) {
        (self.p, self.q)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&MultiIndex, &MultiIndex, &C)> {
        self.terms.iter().map(|((a, b), c)| (a, b, c))
    }

    pub fn coeff(&self, alpha: &MultiIndex, beta: &MultiIndex) -> C {
        self.terms
            .get(&(alpha.clone(), beta.clone()))
            .cloned()
            .unwrap_or_else(C::zero)
    }

    fn check_same_n(&self, n: usize) -> Result<()> {
        if self.n != n {
            return Err(shape(format!("dimension {}", self.n), n));
        }
        Ok(())
    }

    /// `Σ c · z^α · z̄^β` at a point of the sphere.
    pub fn evaluate(&self, z: &SpherePoint) -> Result<Complex64> {
        self.check_same_n(z.dim())?;
        Ok(self.evaluate_at(z.coords()))
    }

    /// Evaluation at an arbitrary vector of C^n (length is not checked).
    pub fn evaluate_at(&self, z: &[Complex64]) -> Complex64 {
        let max_p = self.p as usize;
        let max_q = self.q as usize;
        let mut zp = vec![vec![Complex64::one(); max_p + 1]; self.n];
        let mut zq = vec![vec![Complex64::one(); max_q + 1]; self.n];
        for k in 0..self.n {
            for e in 1..=max_p {
                zp[k][e] = zp[k][e - 1] * z[k];
            }
            let conj = z[k].conj();
            for e in 1..=max_q {
                zq[k][e] = zq[k][e - 1] * conj;
            }
        }
        let mut total = Complex64::zero();
        for ((alpha, beta), c) in &self.terms {
            let mut m = c.to_complex();
            for k in 0..self.n {
                let (a, b) = (alpha.0[k] as usize, beta.0[k] as usize);
                if a > 0 {
                    m *= zp[k][a];
                }
                if b > 0 {
                    m *= zq[k][b];
                }
            }
            total += m;
        }
        total
    }

    pub fn scale(&self, c: &C) -> Self {
        let mut out = Self::zero(self.n, self.p, self.q);
        for ((a, b), v) in &self.terms {
            out.insert(a.clone(), b.clone(), v.clone() * c.clone());
        }
        out
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same_n(other.n)?;
        if self.bidegree() != other.bidegree() {
            return Err(shape(
                format!("bidegree {:?}", self.bidegree()),
                format!("{:?}", other.bidegree()),
            ));
        }
        let mut out = self.clone();
        for ((a, b), v) in &other.terms {
            out.insert(a.clone(), b.clone(), v.clone());
        }
        Ok(out)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scale(&-C::one()))
    }

    /// Product; bidegrees add.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.check_same_n(other.n)?;
        Ok(self.mul_unchecked(other))
    }

    fn mul_unchecked(&self, other: &Self) -> Self {
        let mut out = Self::zero(self.n, self.p + other.p, self.q + other.q);
        for ((a1, b1), c1) in &self.terms {
            for ((a2, b2), c2) in &other.terms {
                out.insert(a1.plus(a2), b1.plus(b2), c1.clone() * c2.clone());
            }
        }
        out
    }

    /// Pointwise complex conjugate; bidegree (p, q) becomes (q, p).
    pub fn conj(&self) -> Self {
        let mut out = Self::zero(self.n, self.q, self.p);
        for ((a, b), v) in &self.terms {
            out.insert(b.clone(), a.clone(), v.conj());
        }
        out
    }

    /// Multiplies by `|z|^{2k}` to reach bidegree `(p + k, q + k)`; the
    /// restriction to the sphere is unchanged.
    pub fn homogenize(&self, p: u32, q: u32) -> Result<Self> {
        if p < self.p || q < self.q || p - self.p != q - self.q {
            return Err(shape(
                format!("target bidegree (p+k, q+k) above {:?}", self.bidegree()),
                format!("({p},{q})"),
            ));
        }
        Ok(self.mul_unchecked(&Self::norm_power(self.n, p - self.p)))
    }

    /// Real Laplacian of R^{2n}, `Δ = 4 Σ_k ∂²/∂z_k∂z̄_k`, mapping
    /// P^{p,q} → P^{p−1,q−1}. Zero when p = 0 or q = 0.
    pub fn apply_laplacian(&self) -> Self {
        let mut out = Self::zero(self.n, self.p.saturating_sub(1), self.q.saturating_sub(1));
        if self.p == 0 || self.q == 0 {
            return out;
        }
        for ((alpha, beta), c) in &self.terms {
            for k in 0..self.n {
                let factor = 4 * alpha.0[k] as i64 * beta.0[k] as i64;
                if factor == 0 {
                    continue;
                }
                let (a, b) = (alpha.minus_unit(k).unwrap(), beta.minus_unit(k).unwrap());
                out.insert(a, b, c.clone() * C::from_i64(factor));
            }
        }
        out
    }

    /// The polynomial `z ↦ self(M z)` for a matrix `M` given by rows.
    pub fn compose_with_matrix(&self, m: &[Vec<C>]) -> Result<Self> {
        if m.len() != self.n || m.iter().any(|row| row.len() != self.n) {
            return Err(shape(format!("{0}x{0} matrix", self.n), format!("{} rows", m.len())));
        }
        let n = self.n;
        let forms: Vec<Self> = m.iter().map(|row| Self::linear_form(row)).collect();
        let conj_forms: Vec<Self> = m
            .iter()
            .map(|row| Self::antilinear_form(&row.iter().map(C::conj).collect::<Vec<_>>()))
            .collect();
        let mut pow_cache: HashMap<(bool, usize, u32), Self> = HashMap::new();
        let mut power = |conj: bool, k: usize, e: u32| -> Self {
            if let Some(p) = pow_cache.get(&(conj, k, e)) {
                return p.clone();
            }
            let base = if conj { &conj_forms[k] } else { &forms[k] };
            let mut acc = Self::constant(n, C::one());
            for _ in 0..e {
                acc = acc.mul_unchecked(base);
            }
            pow_cache.insert((conj, k, e), acc.clone());
            acc
        };
        let mut out = Self::zero(n, self.p, self.q);
        for ((alpha, beta), c) in &self.terms {
            let mut prod = Self::constant(n, c.clone());
            for k in 0..n {
                if alpha.0[k] > 0 {
                    prod = prod.mul_unchecked(&power(false, k, alpha.0[k]));
                }
                if beta.0[k] > 0 {
                    prod = prod.mul_unchecked(&power(true, k, beta.0[k]));
                }
            }
            for ((a, b), v) in prod.terms {
                out.insert(a, b, v);
            }
        }
        Ok(out)
    }

    /// `⟨self, other⟩ = ∫ conj(self) · other dν_n`.
    ///
    /// Vanishes unless `p − q` agrees for both arguments; polynomials of
    /// different bidegree with equal `p − q` need not be orthogonal on the
    /// sphere (e.g. `⟨1, |z₁|²⟩ = 1/n`).
    pub fn inner_product(&self, other: &Self) -> Result<C> {
        self.check_same_n(other.n)?;
        require_dimension(self.n)?;
        if self.p as i64 - self.q as i64 != other.p as i64 - other.q as i64 {
            return Ok(C::zero());
        }
        let mut total = C::zero();
        // conj(c1 z^a1 z̄^b1) · c2 z^a2 z̄^b2 = conj(c1) c2 z^{b1+a2} z̄^{a1+b2}
        for ((a1, b1), c1) in &self.terms {
            let c1 = c1.conj();
            for ((a2, b2), c2) in &other.terms {
                let holo = b1.plus(a2);
                if holo != a1.plus(b2) {
                    continue;
                }
                total = total + c1.clone() * c2.clone() * C::sphere_moment(holo.as_slice(), self.n);
            }
        }
        Ok(total)
    }

    pub fn norm_sqr(&self) -> Result<C> {
        self.inner_product(self)
    }

    /// For bidegree (1,1): the matrix `A` with `self = z̄ᵗ A z`.
    pub fn quadratic_matrix(&self) -> Result<Vec<Vec<C>>> {
        if self.bidegree() != (1, 1) {
            return Err(shape("bidegree (1,1)", format!("{:?}", self.bidegree())));
        }
        let n = self.n;
        Ok((0..n)
            .map(|k| {
                (0..n)
                    .map(|l| self.coeff(&MultiIndex::unit(n, l), &MultiIndex::unit(n, k)))
                    .collect()
            })
            .collect())
    }

    pub fn map_coeffs<D: Coefficient>(&self, f: impl Fn(&C) -> D) -> BiDegreePolynomial<D> {
        let mut out = BiDegreePolynomial::zero(self.n, self.p, self.q);
        for ((a, b), c) in &self.terms {
            out.insert(a.clone(), b.clone(), f(c));
        }
        out
    }

    pub fn to_complex(&self) -> FloatPolynomial {
        self.map_coeffs(|c| c.to_complex())
    }
}

impl FloatPolynomial {
    /// `z ↦ self(g⁻¹ z)` when `inverse` is set (the action `D_n(g)`),
    /// otherwise `z ↦ self(g z)`.
    pub fn compose_with_linear(&self, g: &UnitaryMatrix, inverse: bool) -> Result<Self> {
        if g.dim() != self.n {
            return Err(shape(format!("{0}x{0} unitary", self.n), g.dim()));
        }
        let m = if inverse { g.inverse() } else { g.clone() };
        let rows: Vec<Vec<Complex64>> = (0..self.n)
            .map(|k| (0..self.n).map(|l| m.entry(k, l)).collect())
            .collect();
        self.compose_with_matrix(&rows)
    }

    /// Largest coefficient modulus of `self − other`.
    pub fn max_coeff_diff(&self, other: &Self) -> f64 {
        let mut keys: Vec<&Term> = self.terms.keys().chain(other.terms.keys()).collect();
        keys.sort();
        keys.dedup();
        keys.into_iter()
            .map(|k| {
                let a = self.terms.get(k).copied().unwrap_or_default();
                let b = other.terms.get(k).copied().unwrap_or_default();
                (a - b).norm()
            })
            .fold(0.0, f64::max)
    }
}

impl ExactPolynomial {
    /// Scales by an exact rational.
    pub fn scale_rational(&self, r: &BigRational) -> Self {
        self.scale(&GaussRational::real(r.clone()))
    }
}

impl<C: Coefficient> fmt::Debug for BiDegreePolynomial<C> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "P^{{{},{}}}(n={})[", self.p, self.q, self.n)?;
        for (i, ((a, b), c)) in self.terms.iter().enumerate() {
            if i > 0 {
                write!(f, " + ")?;
            }
            write!(f, "({c:?}) z^{:?} zbar^{:?}", a.0, b.0)?;
        }
        write!(f, "]")
    }
}

/// A function on the sphere given as a finite sum of homogeneous pieces,
/// keyed by bidegree.
#[derive(Clone, PartialEq)]
pub struct SpherePolynomial<C> {
    n: usize,
    parts: BTreeMap<(u32, u32), BiDegreePolynomial<C>>,
}

impl<C: Coefficient> SpherePolynomial<C> {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            parts: BTreeMap::new(),
        }
    }

    pub fn from_part(poly: BiDegreePolynomial<C>) -> Self {
        let mut s = Self::new(poly.n());
        s.parts.insert(poly.bidegree(), poly);
        s
    }

    pub fn add_part(&mut self, poly: &BiDegreePolynomial<C>) -> Result<()> {
        if poly.n() != self.n {
            return Err(shape(format!("dimension {}", self.n), poly.n()));
        }
        let key = poly.bidegree();
        let merged = match self.parts.get(&key) {
            Some(existing) => existing.add(poly)?,
            None => poly.clone(),
        };
        if merged.is_zero() {
            self.parts.remove(&key);
        } else {
            self.parts.insert(key, merged);
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn parts(&self) -> impl Iterator<Item = &BiDegreePolynomial<C>> {
        self.parts.values()
    }

    pub fn part(&self, p: u32, q: u32) -> Option<&BiDegreePolynomial<C>> {
        self.parts.get(&(p, q))
    }

    pub fn max_total_degree(&self) -> u32 {
        self.parts.keys().map(|(p, q)| p + q).max().unwrap_or(0)
    }

    pub fn evaluate(&self, z: &SpherePoint) -> Result<Complex64> {
        if z.dim() != self.n {
            return Err(shape(format!("dimension {}", self.n), z.dim()));
        }
        Ok(self.evaluate_at(z.coords()))
    }

    pub fn evaluate_at(&self, z: &[Complex64]) -> Complex64 {
        self.parts.values().map(|p| p.evaluate_at(z)).sum()
    }

    /// `⟨poly, self⟩` summed over the homogeneous pieces.
    pub fn inner_with(&self, poly: &BiDegreePolynomial<C>) -> Result<C> {
        let mut total = C::zero();
        for part in self.parts.values() {
            total = total + poly.inner_product(part)?;
        }
        Ok(total)
    }

    pub fn inner_product(&self, other: &Self) -> Result<C> {
        let mut total = C::zero();
        for part in self.parts.values() {
            total = total + other.inner_with(part)?;
        }
        Ok(total)
    }

    pub fn to_complex(&self) -> SpherePolynomial<Complex64> {
        SpherePolynomial {
            n: self.n,
            parts: self
                .parts
                .iter()
                .map(|(k, v)| (*k, v.to_complex()))
                .collect(),
        }
    }
}

impl<C: Coefficient> fmt::Debug for SpherePolynomial<C> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.parts.values()).finish()
    }
}

/// One serialized term: `{alpha, beta, re, im}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermRecord {
    pub alpha: Vec<u32>,
    pub beta: Vec<u32>,
    pub re: Value,
    pub im: Value,
}

/// Coefficients that serialize to the canonical record format: exact
/// coefficients as rational strings, floating ones as JSON numbers.
pub trait RecordCoefficient: Coefficient {
    fn to_parts(&self) -> (Value, Value);
    fn from_parts(re: &Value, im: &Value) -> Option<Self>;
}

fn value_to_rational(v: &Value) -> Option<BigRational> {
    match v {
        Value::String(s) => parse_rational(s),
        Value::Number(num) => {
            if let Some(i) = num.as_i64() {
                Some(BigRational::from_integer(i.into()))
            } else {
                BigRational::from_float(num.as_f64()?)
            }
        }
        _ => None,
    }
}

fn value_to_f64(v: &Value) -> Option<f64> {
    match v {
        Value::Number(num) => num.as_f64(),
        Value::String(s) => parse_rational(s).and_then(|r| r.to_f64()),
        _ => None,
    }
}

impl RecordCoefficient for GaussRational {
    fn to_parts(&self) -> (Value, Value) {
        (Value::String(self.re.to_string()), Value::String(self.im.to_string()))
    }

    fn from_parts(re: &Value, im: &Value) -> Option<Self> {
        Some(GaussRational::new(value_to_rational(re)?, value_to_rational(im)?))
    }
}

impl RecordCoefficient for Complex64 {
    fn to_parts(&self) -> (Value, Value) {
        (json_number(self.re), json_number(self.im))
    }

    fn from_parts(re: &Value, im: &Value) -> Option<Self> {
        Some(Complex64::new(value_to_f64(re)?, value_to_f64(im)?))
    }
}

fn json_number(x: f64) -> Value {
    serde_json::Number::from_f64(x)
        .map(Value::Number)
        .unwrap_or(Value::Null)
}

impl<C: RecordCoefficient> BiDegreePolynomial<C> {
    /// Canonically ordered term records.
    pub fn to_records(&self) -> Vec<TermRecord> {
        self.terms
            .iter()
            .map(|((a, b), c)| {
                let (re, im) = c.to_parts();
                TermRecord {
                    alpha: a.0.clone(),
                    beta: b.0.clone(),
                    re,
                    im,
                }
            })
            .collect()
    }

    /// Parses records that all share one bidegree. `n` is taken from the
    /// records, or from `n_hint` when the list is empty.
    pub fn from_records(records: &[TermRecord], n_hint: Option<usize>) -> Result<Self> {
        let sphere = SpherePolynomial::<C>::from_records(records, n_hint)?;
        let mut parts: Vec<_> = sphere.parts.into_values().collect();
        match parts.len() {
            0 => Ok(Self::zero(n_hint.unwrap_or(0), 0, 0)),
            1 => Ok(parts.pop().unwrap()),
            k => Err(shape("records of a single bidegree", format!("{k} bidegrees"))),
        }
    }
}

impl<C: RecordCoefficient> SpherePolynomial<C> {
    pub fn to_records(&self) -> Vec<TermRecord> {
        self.parts.values().flat_map(|p| p.to_records()).collect()
    }

    pub fn from_records(records: &[TermRecord], n_hint: Option<usize>) -> Result<Self> {
        let n = records.first().map(|r| r.alpha.len()).or(n_hint).unwrap_or(0);
        let mut grouped: BTreeMap<(u32, u32), Vec<(MultiIndex, MultiIndex, C)>> = BTreeMap::new();
        for (i, r) in records.iter().enumerate() {
            if r.alpha.len() != n || r.beta.len() != n {
                return Err(Error::Parse {
                    line: i + 1,
                    field: "alpha/beta".into(),
                    message: format!("expected multi-indices of length {n}"),
                });
            }
            let c = C::from_parts(&r.re, &r.im).ok_or_else(|| Error::Parse {
                line: i + 1,
                field: "re/im".into(),
                message: format!("unparsable coefficient ({}, {})", r.re, r.im),
            })?;
            let (a, b) = (MultiIndex::new(r.alpha.clone()), MultiIndex::new(r.beta.clone()));
            grouped.entry((a.degree(), b.degree())).or_default().push((a, b, c));
        }
        let mut out = Self::new(n);
        for ((p, q), terms) in grouped {
            let poly = BiDegreePolynomial::from_terms(n, p, q, terms)?;
            if !poly.is_zero() {
                out.parts.insert((p, q), poly);
            }
        }
        Ok(out)
    }
}
