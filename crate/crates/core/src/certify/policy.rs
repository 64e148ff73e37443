use serde::{Deserialize, Serialize};

use super::{decide, CertifiedBound, CertifyConfig, CertifyError, IntervalBox, PolyObjective, Region, Verdict};
use crate::polynomial::Polynomial;
use crate::system::CpsSystem;

/// Linear extended class-K function `α(z) = κ z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlphaFunction {
    pub gain: f64,
}

impl AlphaFunction {
    pub fn new(gain: f64) -> Result<Self, CertifyError> {
        if gain.is_finite() && gain > 0.0 {
            Ok(Self { gain })
        } else {
            Err(CertifyError::InvalidBox(format!("class-K gain must be positive, got {gain}")))
        }
    }

    pub fn apply(&self, z: f64) -> f64 {
        self.gain * z
    }
}

impl Default for AlphaFunction {
    fn default() -> Self {
        Self { gain: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Policy {
    /// `u = λ(x)`, one polynomial per input channel.
    Polynomial { lambda: Vec<Polynomial> },
    /// Pointwise minimum-norm input keeping the top-order barrier condition.
    MinNormPointwise { level_set: Vec<f64>, alpha: AlphaFunction },
}

impl Policy {
    pub fn constant(nvars: usize, u: &[f64]) -> Self {
        Policy::Polynomial {
            lambda: u.iter().map(|&v| Polynomial::constant(nvars, v)).collect(),
        }
    }

    pub fn lambda(&self) -> Result<&[Polynomial], CertifyError> {
        match self {
            Policy::Polynomial { lambda } => Ok(lambda),
            Policy::MinNormPointwise { .. } => Err(CertifyError::PolicyNotPolynomial),
        }
    }

    /// Widens decoded zero polynomials to the system dimension and checks shapes.
    pub fn conform(self, system: &CpsSystem) -> Result<Self, CertifyError> {
        match self {
            Policy::Polynomial { lambda } => {
                if lambda.len() != system.input_dim() {
                    return Err(CertifyError::PolicyShape {
                        expected: system.input_dim(),
                        got: lambda.len(),
                    });
                }
                Ok(Policy::Polynomial {
                    lambda: lambda
                        .into_iter()
                        .map(|p| p.conform(system.dim()))
                        .collect::<Result<_, _>>()?,
                })
            }
            Policy::MinNormPointwise { level_set, alpha } => {
                if level_set.len() != system.relative_degree() {
                    return Err(CertifyError::PolicyShape {
                        expected: system.relative_degree(),
                        got: level_set.len(),
                    });
                }
                Ok(Policy::MinNormPointwise { level_set, alpha })
            }
        }
    }

    /// The input at `x`, clamped to `input_box`.
    pub fn input(&self, system: &CpsSystem, input_box: &IntervalBox, x: &[f64]) -> Result<Vec<f64>, CertifyError> {
        let mut u = match self {
            Policy::Polynomial { lambda } => lambda.iter().map(|p| p.eval_unchecked(x)).collect(),
            Policy::MinNormPointwise { level_set, alpha } => pointwise_min_norm_input(system, level_set, alpha, x)?,
        };
        input_box.clamp(&mut u);
        Ok(u)
    }
}

/// `L_f^r h + L_g L_f^{r-1} h · λ`.
pub fn closed_loop_polynomial(system: &CpsSystem, policy: &Policy) -> Result<Polynomial, CertifyError> {
    let lambda = policy.lambda()?;
    if lambda.len() != system.input_dim() {
        return Err(CertifyError::PolicyShape {
            expected: system.input_dim(),
            got: lambda.len(),
        });
    }
    let mut p = system.lie_top().clone();
    for (g, l) in system.gain().iter().zip(lambda) {
        p = p.try_add(&g.try_mul(l)?)?;
    }
    Ok(p)
}

/// Certified lower bound of the closed-loop top derivative over one region.
pub fn closed_loop_rate_bound(
    system: &CpsSystem,
    policy: &Policy,
    region: &Region,
    config: &CertifyConfig,
) -> Result<CertifiedBound, CertifyError> {
    super::bound_min_on_region(&closed_loop_polynomial(system, policy)?, region, config)
}

/// Minimum of [`closed_loop_rate_bound`] over the pieces covering `C \ A`;
/// `+∞` when every piece is empty.
pub fn complement_rate_bound(
    system: &CpsSystem,
    policy: &Policy,
    level_set: &[f64],
    config: &CertifyConfig,
) -> Result<f64, CertifyError> {
    let p = closed_loop_polynomial(system, policy)?;
    let mut s = f64::INFINITY;
    for piece in system.complement_pieces(level_set) {
        let b = match super::bound_min_on_region(&p, &piece, config) {
            Ok(b) => b,
            Err(CertifyError::BudgetExhausted { partial }) => partial,
            Err(e) => return Err(e),
        };
        s = s.min(b.lower_bound);
    }
    Ok(s)
}

/// Checks `L_f^r h + L_g L_f^{r-1} h · λ + α(L_f^{r-1} h - c_{r-1}) ≥ 0` on `A`.
pub fn verify_inside_condition(
    system: &CpsSystem,
    policy: &Policy,
    level_set: &[f64],
    alpha: &AlphaFunction,
    config: &CertifyConfig,
) -> Result<Verdict, CertifyError> {
    let r = system.relative_degree();
    let n = system.dim();
    let shifted = system.lie(r - 1) - &Polynomial::constant(n, level_set[r - 1]);
    let p = closed_loop_polynomial(system, policy)?.try_add(&shifted.scale(alpha.gain))?;
    Ok(decide(&PolyObjective::new(&p), &system.level_set_region(level_set), config))
}

/// Checks `u_i^min ≤ λ_i ≤ u_i^max` on `region`.
pub fn verify_policy_range(
    policy: &Policy,
    region: &Region,
    input_box: &IntervalBox,
    config: &CertifyConfig,
) -> Result<Verdict, CertifyError> {
    let lambda = policy.lambda()?;
    if lambda.len() != input_box.dim() {
        return Err(CertifyError::PolicyShape {
            expected: input_box.dim(),
            got: lambda.len(),
        });
    }
    let n = region.dim();
    let mut verdict = Verdict::Holds {
        margin: f64::INFINITY,
        empty_region: false,
    };
    for (i, l) in lambda.iter().enumerate() {
        let l = l.clone().conform(n)?;
        let above = &l - &Polynomial::constant(n, input_box.lo()[i]);
        let below = &Polynomial::constant(n, input_box.hi()[i]) - &l;
        for p in [above, below] {
            verdict = verdict.and(decide(&PolyObjective::new(&p), region, config));
        }
    }
    Ok(verdict)
}

/// Minimum-norm `u` with `L_f^r h + L_g L_f^{r-1} h · u + α(L_f^{r-1} h - c_{r-1}) ≥ 0`,
/// clamped to the input box.
pub fn pointwise_min_norm_input(
    system: &CpsSystem,
    level_set: &[f64],
    alpha: &AlphaFunction,
    x: &[f64],
) -> Result<Vec<f64>, CertifyError> {
    let r = system.relative_degree();
    let a = system.lie_top().eval_unchecked(x) + alpha.apply(system.lie(r - 1).eval_unchecked(x) - level_set[r - 1]);
    let b: Vec<f64> = system.gain().iter().map(|g| g.eval_unchecked(x)).collect();
    let mut u = vec![0.0; b.len()];
    if a < 0.0 {
        let norm2: f64 = b.iter().map(|v| v * v).sum();
        if norm2 > 0.0 {
            for (ui, bi) in u.iter_mut().zip(&b) {
                *ui = -a * bi / norm2;
            }
        }
    }
    system.input_box().clamp(&mut u);
    let residual = a + b.iter().zip(&u).map(|(bi, ui)| bi * ui).sum::<f64>();
    if residual < -1e-9 {
        return Err(CertifyError::PointwiseInfeasible { residual });
    }
    Ok(u)
}
