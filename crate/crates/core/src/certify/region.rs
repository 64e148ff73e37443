use serde::{Deserialize, Serialize};

use super::CertifyError;
use crate::polynomial::Polynomial;

/// Axis-aligned box `Π [lo_i, hi_i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntervalBox {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl IntervalBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self, CertifyError> {
        if lo.len() != hi.len() {
            return Err(CertifyError::InvalidBox(format!(
                "bound lengths differ ({} vs {})",
                lo.len(),
                hi.len()
            )));
        }
        for (i, (l, h)) in lo.iter().zip(&hi).enumerate() {
            if !(l.is_finite() && h.is_finite()) || l > h {
                return Err(CertifyError::InvalidBox(format!(
                    "component {i}: [{l}, {h}] is not a finite nonempty interval"
                )));
            }
        }
        Ok(Self { lo, hi })
    }

    /// The degenerate box containing only `point`.
    pub fn point(point: Vec<f64>) -> Self {
        Self {
            lo: point.clone(),
            hi: point,
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && x.iter().zip(self.lo.iter().zip(&self.hi)).all(|(v, (l, h))| l <= v && v <= h)
    }

    pub fn clamp(&self, x: &mut [f64]) {
        for (v, (l, h)) in x.iter_mut().zip(self.lo.iter().zip(&self.hi)) {
            *v = v.clamp(*l, *h);
        }
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(l, h)| 0.5 * (l + h)).collect()
    }

    /// All `2^k` vertices over the `k` nondegenerate axes, in lexicographic
    /// order with `lo` before `hi`.
    pub fn vertices(&self) -> Vec<Vec<f64>> {
        let mut out = vec![Vec::with_capacity(self.dim())];
        for (l, h) in self.lo.iter().zip(&self.hi) {
            out = out
                .into_iter()
                .flat_map(|v| {
                    let mut a = v.clone();
                    a.push(*l);
                    if l == h {
                        vec![a]
                    } else {
                        let mut b = v;
                        b.push(*h);
                        vec![a, b]
                    }
                })
                .collect();
        }
        out
    }

    /// Cartesian product `self × other`.
    pub fn product(&self, other: &IntervalBox) -> IntervalBox {
        IntervalBox {
            lo: self.lo.iter().chain(&other.lo).copied().collect(),
            hi: self.hi.iter().chain(&other.hi).copied().collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = ">=0")]
    Geq,
    #[serde(rename = "<=0")]
    Leq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub poly: Polynomial,
    pub relation: Relation,
}

impl Constraint {
    pub fn geq(poly: Polynomial) -> Self {
        Self {
            poly,
            relation: Relation::Geq,
        }
    }

    pub fn leq(poly: Polynomial) -> Self {
        Self {
            poly,
            relation: Relation::Leq,
        }
    }

    /// The constraint rewritten as `g(x) ≥ 0`.
    pub fn as_nonnegative(&self) -> Polynomial {
        match self.relation {
            Relation::Geq => self.poly.clone(),
            Relation::Leq => self.poly.scale(-1.0),
        }
    }

    pub fn satisfied(&self, x: &[f64]) -> bool {
        let v = self.poly.eval_unchecked(x);
        match self.relation {
            Relation::Geq => v >= 0.0,
            Relation::Leq => v <= 0.0,
        }
    }
}

/// A box intersected with finitely many polynomial sign constraints.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub domain: IntervalBox,
    pub constraints: Vec<Constraint>,
}

impl Region {
    pub fn new(domain: IntervalBox, constraints: Vec<Constraint>) -> Result<Self, CertifyError> {
        for c in &constraints {
            if c.poly.nvars() != domain.dim() {
                return Err(CertifyError::Dimension(crate::polynomial::PolyError::DimensionMismatch {
                    expected: domain.dim(),
                    got: c.poly.nvars(),
                }));
            }
        }
        Ok(Self { domain, constraints })
    }

    pub fn unconstrained(domain: IntervalBox) -> Self {
        Self {
            domain,
            constraints: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn with_constraint(mut self, c: Constraint) -> Self {
        self.constraints.push(c);
        self
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.domain.contains(x) && self.constraints.iter().all(|c| c.satisfied(x))
    }

    /// Membership with every constraint relaxed by `tol`.
    pub fn contains_within(&self, x: &[f64], tol: f64) -> bool {
        self.domain.contains(x)
            && self.constraints.iter().all(|c| c.as_nonnegative().eval_unchecked(x) >= -tol)
    }
}
