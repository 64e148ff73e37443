//! Multivariate polynomials over `f64` and the Lie-derivative calculus built on them.
//!
//! A [`Polynomial`] is kept in canonical form at all times: terms are sorted in
//! graded lexicographic order of their exponent vectors, no exponent vector
//! appears twice, and terms whose coefficient is exactly zero are dropped. The
//! zero polynomial is therefore the empty term list, and two polynomials built
//! along different routes compare equal iff their term lists are identical.

mod lie;

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use lie::{input_gain, lie_chain, lie_derivative, relative_degree, GainCertificate};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolyError {
    #[error("dimension mismatch: expected {expected} variables, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("variable index {index} out of range for a polynomial in {nvars} variables")]
    IndexOutOfRange { index: usize, nvars: usize },
    #[error("input gain of order {order} changes sign on the domain (certified range [{lower}, {upper}])")]
    MixedSign { order: usize, lower: f64, upper: f64 },
    #[error("input does not appear in any Lie derivative up to order {0}")]
    MaxOrderExceeded(usize),
}

/// Exponent vector ordered by total degree first, then lexicographically.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Monomial(pub Vec<u32>);

impl Monomial {
    pub fn degree(&self) -> u32 {
        self.0.iter().sum()
    }
}

impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree()
            .cmp(&other.degree())
            .then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// One entry of the JSON term-list encoding: `{"c": <real>, "e": [<int>, ...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolyTerm {
    pub c: f64,
    pub e: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    nvars: usize,
    terms: Vec<(f64, Monomial)>,
}

impl Polynomial {
    pub fn zero(nvars: usize) -> Self {
        Self {
            nvars,
            terms: Vec::new(),
        }
    }

    pub fn constant(nvars: usize, c: f64) -> Self {
        Self::from_map(nvars, std::iter::once((Monomial(vec![0; nvars]), c)))
    }

    /// The coordinate polynomial `x_index`.
    pub fn var(nvars: usize, index: usize) -> Result<Self, PolyError> {
        if index >= nvars {
            return Err(PolyError::IndexOutOfRange { index, nvars });
        }
        let mut e = vec![0; nvars];
        e[index] = 1;
        Ok(Self::monomial(1.0, e))
    }

    pub fn monomial(coeff: f64, exps: Vec<u32>) -> Self {
        let nvars = exps.len();
        Self::from_map(nvars, std::iter::once((Monomial(exps), coeff)))
    }

    /// Builds a canonical polynomial from arbitrary (possibly repeated) terms.
    pub fn from_terms<I>(nvars: usize, terms: I) -> Result<Self, PolyError>
    where
        I: IntoIterator<Item = (f64, Vec<u32>)>,
    {
        let mut collected = Vec::new();
        for (c, e) in terms {
            if e.len() != nvars {
                return Err(PolyError::DimensionMismatch {
                    expected: nvars,
                    got: e.len(),
                });
            }
            collected.push((Monomial(e), c));
        }
        Ok(Self::from_map(nvars, collected))
    }

    pub fn from_poly_terms(nvars: usize, terms: &[PolyTerm]) -> Result<Self, PolyError> {
        Self::from_terms(nvars, terms.iter().map(|t| (t.c, t.e.clone())))
    }

    pub fn to_poly_terms(&self) -> Vec<PolyTerm> {
        self.terms
            .iter()
            .map(|(c, m)| PolyTerm {
                c: *c,
                e: m.0.clone(),
            })
            .collect()
    }

    fn from_map<I>(nvars: usize, terms: I) -> Self
    where
        I: IntoIterator<Item = (Monomial, f64)>,
    {
        let mut map: BTreeMap<Monomial, f64> = BTreeMap::new();
        for (m, c) in terms {
            *map.entry(m).or_insert(0.0) += c;
        }
        Self {
            nvars,
            terms: map.into_iter().filter(|(_, c)| *c != 0.0).map(|(m, c)| (c, m)).collect(),
        }
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn terms(&self) -> impl Iterator<Item = (f64, &[u32])> + '_ {
        self.terms.iter().map(|(c, m)| (*c, m.0.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Total degree; the zero polynomial has degree 0.
    pub fn degree(&self) -> u32 {
        self.terms.iter().map(|(_, m)| m.degree()).max().unwrap_or(0)
    }

    /// Highest power of `var` appearing in any term.
    pub fn degree_in(&self, var: usize) -> u32 {
        self.terms.iter().map(|(_, m)| m.0[var]).max().unwrap_or(0)
    }

    pub fn depends_on(&self, var: usize) -> bool {
        self.terms.iter().any(|(_, m)| m.0[var] > 0)
    }

    /// Returns `Some(c)` when the polynomial is the constant `c` (zero included).
    pub fn as_constant(&self) -> Option<f64> {
        match self.terms.as_slice() {
            [] => Some(0.0),
            [(c, m)] if m.degree() == 0 => Some(*c),
            _ => None,
        }
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<f64, PolyError> {
        self.check_point(x)?;
        Ok(self.eval_unchecked(x))
    }

    pub(crate) fn check_point(&self, x: &[f64]) -> Result<(), PolyError> {
        if x.len() != self.nvars {
            return Err(PolyError::DimensionMismatch {
                expected: self.nvars,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Evaluation without the dimension check; `x` must have `nvars` entries.
    pub fn eval_unchecked(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(c, m)| {
                m.0.iter()
                    .zip(x)
                    .fold(*c, |acc, (&e, &xi)| if e == 0 { acc } else { acc * xi.powi(e as i32) })
            })
            .sum()
    }

    pub fn partial_derivative(&self, index: usize) -> Result<Self, PolyError> {
        if index >= self.nvars {
            return Err(PolyError::IndexOutOfRange {
                index,
                nvars: self.nvars,
            });
        }
        let terms = self.terms.iter().filter(|(_, m)| m.0[index] > 0).map(|(c, m)| {
            let mut e = m.0.clone();
            let k = e[index];
            e[index] -= 1;
            (Monomial(e), c * k as f64)
        });
        Ok(Self::from_map(self.nvars, terms))
    }

    pub fn scale(&self, k: f64) -> Self {
        Self::from_map(self.nvars, self.terms.iter().map(|(c, m)| (m.clone(), c * k)))
    }

    pub fn try_add(&self, other: &Self) -> Result<Self, PolyError> {
        self.same_dims(other)?;
        Ok(Self::from_map(
            self.nvars,
            self.terms.iter().chain(&other.terms).map(|(c, m)| (m.clone(), *c)),
        ))
    }

    pub fn try_sub(&self, other: &Self) -> Result<Self, PolyError> {
        self.try_add(&other.scale(-1.0))
    }

    pub fn try_mul(&self, other: &Self) -> Result<Self, PolyError> {
        self.same_dims(other)?;
        let mut map: BTreeMap<Monomial, f64> = BTreeMap::new();
        for (ca, ma) in &self.terms {
            for (cb, mb) in &other.terms {
                let e = ma.0.iter().zip(&mb.0).map(|(a, b)| a + b).collect();
                *map.entry(Monomial(e)).or_insert(0.0) += ca * cb;
            }
        }
        Ok(Self::from_map(self.nvars, map))
    }

    /// Re-expresses the polynomial in a larger variable space; the new variables
    /// are appended after the existing ones and do not appear.
    pub fn extend_vars(&self, nvars: usize) -> Result<Self, PolyError> {
        if nvars < self.nvars {
            return Err(PolyError::DimensionMismatch {
                expected: self.nvars,
                got: nvars,
            });
        }
        let terms = self.terms.iter().map(|(c, m)| {
            let mut e = m.0.clone();
            e.resize(nvars, 0);
            (Monomial(e), *c)
        });
        Ok(Self::from_map(nvars, terms))
    }

    fn same_dims(&self, other: &Self) -> Result<(), PolyError> {
        if self.nvars != other.nvars {
            return Err(PolyError::DimensionMismatch {
                expected: self.nvars,
                got: other.nvars,
            });
        }
        Ok(())
    }
}

// Operator sugar for polynomials known to share a variable space. These panic on
// mismatched dimensions; fallible code paths use the `try_*` methods.
impl Add for &Polynomial {
    type Output = Polynomial;
    fn add(self, rhs: &Polynomial) -> Polynomial {
        self.try_add(rhs).expect("polynomial dimension mismatch")
    }
}

impl Sub for &Polynomial {
    type Output = Polynomial;
    fn sub(self, rhs: &Polynomial) -> Polynomial {
        self.try_sub(rhs).expect("polynomial dimension mismatch")
    }
}

impl Mul for &Polynomial {
    type Output = Polynomial;
    fn mul(self, rhs: &Polynomial) -> Polynomial {
        self.try_mul(rhs).expect("polynomial dimension mismatch")
    }
}

impl Neg for &Polynomial {
    type Output = Polynomial;
    fn neg(self) -> Polynomial {
        self.scale(-1.0)
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (i, (c, m)) in self.terms.iter().enumerate() {
            if i > 0 {
                write!(f, " + ")?;
            }
            write!(f, "{c}")?;
            for (v, &e) in m.0.iter().enumerate() {
                match e {
                    0 => {}
                    1 => write!(f, "*x{}", v + 1)?,
                    _ => write!(f, "*x{}^{}", v + 1, e)?,
                }
            }
        }
        Ok(())
    }
}

impl Serialize for Polynomial {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_poly_terms().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Polynomial {
    /// The variable count is taken from the first term; an empty list decodes to a
    /// zero polynomial in zero variables, which [`Polynomial::conform`] widens.
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let terms = Vec::<PolyTerm>::deserialize(deserializer)?;
        let nvars = terms.first().map_or(0, |t| t.e.len());
        Self::from_poly_terms(nvars, &terms).map_err(serde::de::Error::custom)
    }
}

impl Polynomial {
    /// Checks that a decoded polynomial lives in `nvars` variables, widening an
    /// empty (zero) polynomial as needed.
    pub fn conform(self, nvars: usize) -> Result<Self, PolyError> {
        if self.is_zero() {
            return Ok(Self::zero(nvars));
        }
        if self.nvars != nvars {
            return Err(PolyError::DimensionMismatch {
                expected: nvars,
                got: self.nvars,
            });
        }
        Ok(self)
    }
}

/// A polynomial vector field `x ↦ (F_1(x), …, F_n(x))`.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    entries: Vec<Polynomial>,
}

impl VectorField {
    pub fn new(entries: Vec<Polynomial>) -> Result<Self, PolyError> {
        let n = entries.len();
        for p in &entries {
            if p.nvars() != n {
                return Err(PolyError::DimensionMismatch {
                    expected: n,
                    got: p.nvars(),
                });
            }
        }
        Ok(Self { entries })
    }

    pub fn zero(n: usize) -> Self {
        Self {
            entries: vec![Polynomial::zero(n); n],
        }
    }

    pub fn dim(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[Polynomial] {
        &self.entries
    }

    pub fn evaluate_into(&self, x: &[f64], out: &mut [f64]) {
        for (o, p) in out.iter_mut().zip(&self.entries) {
            *o = p.eval_unchecked(x);
        }
    }
}

/// The `n × m` input matrix `g(x)`, stored column by column so that each input
/// channel is itself a vector field.
#[derive(Debug, Clone, PartialEq)]
pub struct InputMatrix {
    columns: Vec<VectorField>,
}

impl InputMatrix {
    pub fn from_columns(columns: Vec<VectorField>) -> Result<Self, PolyError> {
        if let Some(first) = columns.first() {
            for c in &columns {
                if c.dim() != first.dim() {
                    return Err(PolyError::DimensionMismatch {
                        expected: first.dim(),
                        got: c.dim(),
                    });
                }
            }
        }
        Ok(Self { columns })
    }

    /// Builds the matrix from row-major entries `rows[i][j] = g_{ij}`.
    pub fn from_rows(rows: Vec<Vec<Polynomial>>) -> Result<Self, PolyError> {
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        let mut columns = vec![Vec::with_capacity(n); m];
        for row in rows {
            if row.len() != m {
                return Err(PolyError::DimensionMismatch {
                    expected: m,
                    got: row.len(),
                });
            }
            for (j, p) in row.into_iter().enumerate() {
                columns[j].push(p);
            }
        }
        Self::from_columns(
            columns
                .into_iter()
                .map(VectorField::new)
                .collect::<Result<_, _>>()?,
        )
    }

    pub fn rows(&self) -> Vec<Vec<Polynomial>> {
        let n = self.state_dim();
        (0..n)
            .map(|i| self.columns.iter().map(|c| c.entries[i].clone()).collect())
            .collect()
    }

    pub fn columns(&self) -> &[VectorField] {
        &self.columns
    }

    pub fn input_dim(&self) -> usize {
        self.columns.len()
    }

    pub fn state_dim(&self) -> usize {
        self.columns.first().map_or(0, VectorField::dim)
    }
}
