//! Certified lower bounds for polynomials over constrained boxes, and the
//! policy checks built on them.

pub mod bernstein;
mod bound;
mod policy;
mod region;
mod synth;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Exec;
use crate::polynomial::{PolyError, Polynomial};
use crate::system::CpsSystem;

pub use bound::{minimize, CertifiedBound, Objective, PolyObjective, VertexObjective, Witness};
pub use policy::{
    closed_loop_polynomial, closed_loop_rate_bound, complement_rate_bound, pointwise_min_norm_input,
    verify_inside_condition, verify_policy_range, AlphaFunction, Policy,
};
pub use region::{Constraint, IntervalBox, Region, Relation};
pub use synth::{synthesize_policy, SynthConfig, Synthesis};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CertifyError {
    #[error("invalid box: {0}")]
    InvalidBox(String),
    #[error(transparent)]
    Dimension(#[from] PolyError),
    #[error("cell budget exhausted after {} cells (lower bound {}, gap {})", partial.cells_expanded, partial.lower_bound, partial.gap())]
    BudgetExhausted { partial: CertifiedBound },
    #[error("policy has no closed polynomial form")]
    PolicyNotPolynomial,
    #[error("no feasible policy found within the search budget")]
    NoFeasiblePolicy,
    #[error("no admissible input satisfies the constraint at this state (residual {residual})")]
    PointwiseInfeasible { residual: f64 },
    #[error("policy has {got} channels, system has {expected} inputs")]
    PolicyShape { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CertifyConfig {
    /// Stop once the best sample is within `tol` of the certified bound.
    pub tol: f64,
    /// Cell expansions before giving up.
    pub max_cells: usize,
    /// A condition `p ≥ 0` holds when its certified bound is at least `-verdict_tol`.
    pub verdict_tol: f64,
    pub exec: Exec,
}

impl Default for CertifyConfig {
    fn default() -> Self {
        Self {
            tol: 1e-4,
            max_cells: 200_000,
            verdict_tol: 1e-9,
            exec: Exec::default(),
        }
    }
}

/// Outcome of checking `p ≥ 0` over a region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    /// `margin` is the certified lower bound; an empty region holds vacuously
    /// with an infinite margin.
    Holds {
        #[serde(with = "crate::serde_real")]
        margin: f64,
        empty_region: bool,
    },
    Fails { witness: Vec<f64>, value: f64 },
    /// Neither certified nor refuted within budget; callers treat this as failure.
    Unknown { lower_bound: f64 },
}

impl Verdict {
    pub fn holds(&self) -> bool {
        matches!(self, Verdict::Holds { .. })
    }

    /// Certified margin for `Holds`, witness value for `Fails`, bound for `Unknown`.
    pub fn margin(&self) -> f64 {
        match self {
            Verdict::Holds { margin, .. } => *margin,
            Verdict::Fails { value, .. } => *value,
            Verdict::Unknown { lower_bound } => *lower_bound,
        }
    }

    /// The weaker of two verdicts: any failure dominates, then unknown, then the
    /// smaller margin.
    pub fn and(self, other: Verdict) -> Verdict {
        let rank = |v: &Verdict| match v {
            Verdict::Fails { .. } => 0,
            Verdict::Unknown { .. } => 1,
            Verdict::Holds { .. } => 2,
        };
        match rank(&self).cmp(&rank(&other)) {
            std::cmp::Ordering::Less => self,
            std::cmp::Ordering::Greater => other,
            std::cmp::Ordering::Equal => {
                if other.margin() < self.margin() {
                    other
                } else {
                    self
                }
            }
        }
    }

    pub(crate) fn from_bound(bound: &CertifiedBound, verdict_tol: f64) -> Verdict {
        if bound.is_empty_region() {
            return Verdict::Holds {
                margin: f64::INFINITY,
                empty_region: true,
            };
        }
        if bound.lower_bound >= -verdict_tol {
            return Verdict::Holds {
                margin: bound.lower_bound,
                empty_region: false,
            };
        }
        match &bound.upper_witness {
            Some(w) if w.value < -verdict_tol => Verdict::Fails {
                witness: w.point.clone(),
                value: w.value,
            },
            _ => Verdict::Unknown {
                lower_bound: bound.lower_bound,
            },
        }
    }
}

/// Certified lower bound of `p` over `region`.
pub fn bound_min_on_region(
    p: &Polynomial,
    region: &Region,
    config: &CertifyConfig,
) -> Result<CertifiedBound, CertifyError> {
    if p.nvars() != region.dim() {
        return Err(PolyError::DimensionMismatch {
            expected: region.dim(),
            got: p.nvars(),
        }
        .into());
    }
    minimize(&PolyObjective::new(p), region, config)
}

/// Decides `p ≥ 0` over `region`, stopping as soon as the answer is certain.
pub fn decide_nonnegative(p: &Polynomial, region: &Region, config: &CertifyConfig) -> Result<Verdict, CertifyError> {
    if p.nvars() != region.dim() {
        return Err(PolyError::DimensionMismatch {
            expected: region.dim(),
            got: p.nvars(),
        }
        .into());
    }
    Ok(decide(&PolyObjective::new(p), region, config))
}

pub(crate) fn decide<O: Objective>(objective: &O, region: &Region, config: &CertifyConfig) -> Verdict {
    let bound = match bound::search(objective, region, config, Some(-config.verdict_tol)) {
        Ok(b) => b,
        Err(CertifyError::BudgetExhausted { partial }) => partial,
        Err(e) => unreachable!("search only fails on budget: {e}"),
    };
    Verdict::from_bound(&bound, config.verdict_tol)
}

/// Certified minimum over `C × U_l` of `L_f^r h + L_g L_f^{r-1} h · u`.
pub fn adversarial_rate_bound(
    system: &CpsSystem,
    input_box: &IntervalBox,
    config: &CertifyConfig,
) -> Result<CertifiedBound, CertifyError> {
    if input_box.dim() != system.input_dim() {
        return Err(PolyError::DimensionMismatch {
            expected: system.input_dim(),
            got: input_box.dim(),
        }
        .into());
    }
    let objective = VertexObjective::new(system.lie_top(), system.gain(), input_box);
    minimize(&objective, &system.safe_region(), config)
}
