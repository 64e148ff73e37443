//! Derivative-free policy search over a monomial template.
//!
//! A candidate is scored by feasibility first (range containment on `C` and the
//! inside condition on `A`), then by its certified closed-loop rate on `C \ A`.
//! Compass search polls `±step` along every coefficient, moves to the best
//! improving poll point, and halves the step when none improves.

use std::cmp::Ordering;

use super::{
    complement_rate_bound, verify_inside_condition, verify_policy_range, AlphaFunction, CertifyConfig, CertifyError,
    IntervalBox, Policy, Verdict,
};
use crate::polynomial::Polynomial;
use crate::system::CpsSystem;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    /// Total degree of the policy template.
    pub degree: u32,
    /// Candidate evaluations before the search stops.
    pub max_evals: usize,
    /// Search stops once the step falls below this fraction of the input width.
    pub min_step: f64,
    pub certify: CertifyConfig,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            degree: 0,
            max_evals: 200,
            min_step: 1e-2,
            certify: CertifyConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Synthesis {
    pub policy: Policy,
    /// Certified closed-loop rate `s_k`.
    pub rate: f64,
    pub inside: Verdict,
    pub range: Verdict,
    pub evaluations: usize,
}

#[derive(Debug, Clone)]
struct Candidate {
    theta: Vec<f64>,
    feasible: bool,
    rate: f64,
    inside: Verdict,
    range: Verdict,
}

impl Candidate {
    fn beats(&self, other: &Candidate) -> bool {
        match (self.feasible, other.feasible) {
            (true, false) => true,
            (false, true) => false,
            _ => self.rate.total_cmp(&other.rate) == Ordering::Greater && self.rate - other.rate > 1e-12,
        }
    }
}

/// Exponent vectors of total degree `≤ degree` in graded lexicographic order.
pub(crate) fn monomial_basis(nvars: usize, degree: u32) -> Vec<Vec<u32>> {
    fn rec(prefix: &mut Vec<u32>, left: usize, budget: u32, out: &mut Vec<Vec<u32>>) {
        if left == 0 {
            out.push(prefix.clone());
            return;
        }
        for e in 0..=budget {
            prefix.push(e);
            rec(prefix, left - 1, budget - e, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), nvars, degree, &mut out);
    out.sort_by(|a, b| {
        let (da, db): (u32, u32) = (a.iter().sum(), b.iter().sum());
        da.cmp(&db).then_with(|| a.cmp(b))
    });
    out
}

struct Search<'a> {
    system: &'a CpsSystem,
    level_set: &'a [f64],
    alpha: &'a AlphaFunction,
    input_box: &'a IntervalBox,
    basis: Vec<Vec<u32>>,
    config: &'a SynthConfig,
}

impl Search<'_> {
    fn policy(&self, theta: &[f64]) -> Policy {
        let n = self.system.dim();
        let m = self.basis.len();
        Policy::Polynomial {
            lambda: theta
                .chunks(m)
                .map(|coeffs| {
                    Polynomial::from_terms(n, coeffs.iter().zip(&self.basis).map(|(c, e)| (*c, e.clone())))
                        .expect("basis matches dimension")
                })
                .collect(),
        }
    }

    fn evaluate(&self, theta: &[f64]) -> Result<Candidate, CertifyError> {
        let cfg = &self.config.certify;
        let policy = self.policy(theta);
        let range = verify_policy_range(&policy, &self.system.safe_region(), self.input_box, cfg)?;
        let inside = if range.holds() {
            verify_inside_condition(self.system, &policy, self.level_set, self.alpha, cfg)?
        } else {
            Verdict::Unknown {
                lower_bound: f64::NEG_INFINITY,
            }
        };
        let mut rate = complement_rate_bound(self.system, &policy, self.level_set, cfg)?;
        if rate == f64::INFINITY {
            let whole = super::closed_loop_rate_bound(self.system, &policy, &self.system.safe_region(), cfg);
            rate = match whole {
                Ok(b) => b.lower_bound,
                Err(CertifyError::BudgetExhausted { partial }) => partial.lower_bound,
                Err(e) => return Err(e),
            };
        }
        if rate == f64::INFINITY {
            rate = 0.0;
        }
        Ok(Candidate {
            theta: theta.to_vec(),
            feasible: range.holds() && inside.holds(),
            rate,
            inside,
            range,
        })
    }

    fn evaluate_all(&self, thetas: &[Vec<f64>]) -> Result<Vec<Candidate>, CertifyError> {
        self.config.certify.exec.map(thetas, |t| self.evaluate(t)).into_iter().collect()
    }
}

/// Best policy from the template for the final segment of a cycle, whose
/// admissible inputs are `input_box`.
pub fn synthesize_policy(
    system: &CpsSystem,
    level_set: &[f64],
    alpha: &AlphaFunction,
    input_box: &IntervalBox,
    config: &SynthConfig,
) -> Result<Synthesis, CertifyError> {
    let basis = monomial_basis(system.dim(), config.degree);
    let m = basis.len();
    let dims = m * system.input_dim();
    let search = Search {
        system,
        level_set,
        alpha,
        input_box,
        basis,
        config,
    };

    let mut starts = vec![vec![0.0; dims]];
    for v in input_box.vertices() {
        let mut theta = vec![0.0; dims];
        for (ch, uv) in v.iter().enumerate() {
            theta[ch * m] = *uv;
        }
        if !starts.contains(&theta) {
            starts.push(theta);
        }
    }
    let mut evaluations = starts.len();
    let mut best = search
        .evaluate_all(&starts)?
        .into_iter()
        .reduce(|a, b| if b.beats(&a) { b } else { a })
        .expect("at least one start");

    let width = input_box
        .lo()
        .iter()
        .zip(input_box.hi())
        .map(|(l, h)| h - l)
        .fold(0.0, f64::max);
    let mut step = 0.5 * width;
    let floor = config.min_step * width;
    while step >= floor && step > 0.0 && evaluations < config.max_evals {
        let polls: Vec<Vec<f64>> = (0..dims)
            .flat_map(|i| {
                [step, -step].map(|d| {
                    let mut t = best.theta.clone();
                    t[i] += d;
                    t
                })
            })
            .collect();
        evaluations += polls.len();
        let improved = search
            .evaluate_all(&polls)?
            .into_iter()
            .filter(|c| c.beats(&best))
            .reduce(|a, b| if b.beats(&a) { b } else { a });
        match improved {
            Some(c) => best = c,
            None => step *= 0.5,
        }
    }

    if !best.feasible {
        return Err(CertifyError::NoFeasiblePolicy);
    }
    Ok(Synthesis {
        policy: search.policy(&best.theta),
        rate: best.rate,
        inside: best.inside,
        range: best.range,
        evaluations,
    })
}
