//! Per-cycle propagation of lower bounds on `h` and its Lie derivatives.
//!
//! Row `j` of the recurrence table bounds `L_f^i h` at the end of segment `j`
//! given the row before it, the segment's rate `s_j` and its duration `τ_j`.
//! Within a segment, `h` stays above the Taylor-like segment polynomial.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::certify::bernstein::{coefficient_range, DensePoly};
use crate::certify::Verdict;
use crate::polynomial::Polynomial;

/// Tolerance shared by segment and return checks.
pub const DEFAULT_TOL: f64 = 1e-9;
/// Subdivision cells per segment check.
pub const SEGMENT_BUDGET: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TimingError {
    #[error("duration {index} is negative ({value})")]
    NegativeDuration { index: usize, value: f64 },
    #[error("level constant {index} must be finite and nonnegative, got {value}")]
    InvalidLevel { index: usize, value: f64 },
    #[error("{what}: expected length {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("empty interval [{lo}, {hi}]")]
    EmptyInterval { lo: f64, hi: f64 },
}

/// Level constants `c_0..c_{r-1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LevelSet(Vec<f64>);

impl LevelSet {
    pub fn new(c: Vec<f64>) -> Result<Self, TimingError> {
        for (index, &value) in c.iter().enumerate() {
            if !(value.is_finite() && value >= 0.0) {
                return Err(TimingError::InvalidLevel { index, value });
            }
        }
        Ok(Self(c))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn order(&self) -> usize {
        self.0.len()
    }
}

/// `a[j][i] = a_{j,i}` and the segment start times `ξ_1..ξ_{k+1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecurrenceTable {
    pub a: Vec<Vec<f64>>,
    pub xi: Vec<f64>,
}

impl RecurrenceTable {
    pub fn segments(&self) -> usize {
        self.a.len() - 1
    }

    pub fn last(&self) -> &[f64] {
        &self.a[self.a.len() - 1]
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

fn check_durations(timings: &[f64]) -> Result<(), TimingError> {
    for (index, &value) in timings.iter().enumerate() {
        if !(value >= 0.0) {
            return Err(TimingError::NegativeDuration { index, value });
        }
    }
    Ok(())
}

/// `ξ_1 = t1`, `ξ_{j+1} = ξ_j + τ_j`.
pub fn partial_sums(timings: &[f64], t1: f64) -> Result<Vec<f64>, TimingError> {
    check_durations(timings)?;
    let mut xi = Vec::with_capacity(timings.len() + 1);
    xi.push(t1);
    for t in timings {
        xi.push(xi[xi.len() - 1] + t);
    }
    Ok(xi)
}

/// One step of the recurrence: bounds at the end of a segment of length `tau`.
pub fn advance(row: &[f64], s: f64, tau: f64) -> Vec<f64> {
    let r = row.len();
    let mut next = vec![0.0; r];
    for p in 1..=r {
        let mut acc = s * tau.powi(p as i32) / factorial(p);
        for i in 1..=p {
            acc += row[r - i] * tau.powi((p - i) as i32) / factorial(p - i);
        }
        next[r - p] = acc;
    }
    next
}

pub fn recurrence(c: &[f64], s: &[f64], timings: &[f64]) -> Result<RecurrenceTable, TimingError> {
    if s.len() != timings.len() {
        return Err(TimingError::DimensionMismatch {
            what: "rates",
            expected: timings.len(),
            got: s.len(),
        });
    }
    let xi = partial_sums(timings, 0.0)?;
    let mut a = vec![c.to_vec()];
    for (sj, tj) in s.iter().zip(timings) {
        let next = advance(&a[a.len() - 1], *sj, *tj);
        a.push(next);
    }
    Ok(RecurrenceTable { a, xi })
}

/// `Σ_{q<r} a_q σ^q / q! + s σ^r / r!` as a polynomial in `σ = t - ξ_j`.
pub fn segment_polynomial(row: &[f64], s: f64) -> Polynomial {
    let r = row.len();
    let terms = row
        .iter()
        .enumerate()
        .map(|(q, aq)| (aq / factorial(q), vec![q as u32]))
        .chain(std::iter::once((s / factorial(r), vec![r as u32])));
    Polynomial::from_terms(1, terms).expect("univariate terms")
}

/// Certifies `p(σ) ≥ -tol` on `[lo, hi]` by Bernstein subdivision.
///
/// Endpoints are sampled first, then cell midpoints; the first sample below
/// `-tol` is returned as the witness.
pub fn check_segment_nonnegative(p: &Polynomial, lo: f64, hi: f64, tol: f64) -> Result<Verdict, TimingError> {
    if !(lo <= hi) {
        return Err(TimingError::EmptyInterval { lo, hi });
    }
    assert_eq!(p.nvars(), 1, "segment polynomials are univariate");
    let fails = |t: f64| {
        let v = p.eval_unchecked(&[t]);
        (v < -tol).then(|| Verdict::Fails {
            witness: vec![t],
            value: v,
        })
    };
    for t in [lo, hi] {
        if let Some(v) = fails(t) {
            return Ok(v);
        }
    }
    let dense = DensePoly::new(p);
    let mut margin = f64::INFINITY;
    let mut queue = std::collections::VecDeque::from([(lo, hi)]);
    let mut cells = 0;
    while let Some((a, b)) = queue.pop_front() {
        let lb = coefficient_range(&dense.bernstein(&[a], &[b])).0;
        if lb >= -tol {
            margin = margin.min(lb);
            continue;
        }
        let mid = 0.5 * (a + b);
        if let Some(v) = fails(mid) {
            return Ok(v);
        }
        cells += 1;
        if cells >= SEGMENT_BUDGET || mid <= a || mid >= b {
            let rest = queue
                .iter()
                .map(|&(x, y)| coefficient_range(&dense.bernstein(&[x], &[y])).0)
                .fold(lb, f64::min);
            return Ok(Verdict::Unknown { lower_bound: rest });
        }
        queue.push_back((a, mid));
        queue.push_back((mid, b));
    }
    Ok(Verdict::Holds {
        margin,
        empty_region: false,
    })
}

/// `a_{k,i} - c_i` for every order.
pub fn return_margins(table: &RecurrenceTable, c: &[f64]) -> Vec<f64> {
    table.last().iter().zip(c).map(|(a, c)| a - c).collect()
}

pub fn check_return(table: &RecurrenceTable, c: &[f64]) -> bool {
    return_margins(table, c).iter().all(|m| *m >= -DEFAULT_TOL)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "condition", rename_all = "snake_case")]
pub enum TimingFailure {
    /// Segment `index` (0-based) dips below zero.
    Segment { index: usize },
    /// `a_{k,index} < c_index`.
    Return { index: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub table: RecurrenceTable,
    pub segments: Vec<Verdict>,
    pub return_margins: Vec<f64>,
}

impl TimingReport {
    /// The first failing condition, segments before the return condition.
    pub fn failure(&self) -> Option<TimingFailure> {
        if let Some(index) = self.segments.iter().position(|v| !v.holds()) {
            return Some(TimingFailure::Segment { index });
        }
        self.return_margins
            .iter()
            .position(|m| *m < -DEFAULT_TOL)
            .map(|index| TimingFailure::Return { index })
    }

    pub fn holds(&self) -> bool {
        self.failure().is_none()
    }
}

/// Checks the segments `0..count` of a cycle; the remaining rates are ignored.
pub fn segments_feasible(c: &[f64], s: &[f64], timings: &[f64], count: usize) -> Result<bool, TimingError> {
    check_durations(timings)?;
    let mut row = c.to_vec();
    for j in 0..count.min(timings.len()) {
        let p = segment_polynomial(&row, s[j]);
        if !check_segment_nonnegative(&p, 0.0, timings[j], DEFAULT_TOL)?.holds() {
            return Ok(false);
        }
        row = advance(&row, s[j], timings[j]);
    }
    Ok(true)
}

pub fn timing_feasible(c: &[f64], s: &[f64], timings: &[f64]) -> Result<TimingReport, TimingError> {
    let table = recurrence(c, s, timings)?;
    let segments = (0..timings.len())
        .map(|j| check_segment_nonnegative(&segment_polynomial(&table.a[j], s[j]), 0.0, timings[j], DEFAULT_TOL))
        .collect::<Result<_, _>>()?;
    let return_margins = return_margins(&table, c);
    Ok(TimingReport {
        table,
        segments,
        return_margins,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_sum_examples() {
        let close = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-15);
        assert!(close(&partial_sums(&[0.2, 0.2, 0.4], 0.0).unwrap(), &[0.0, 0.2, 0.4, 0.8]));
        assert_eq!(partial_sums(&[0.5, 0.5], 1.0).unwrap(), vec![1.0, 1.5, 2.0]);
        assert_eq!(partial_sums(&[0.0, 0.1], 0.0).unwrap(), vec![0.0, 0.0, 0.1]);
        assert!(matches!(partial_sums(&[0.1, -0.1], 0.0), Err(TimingError::NegativeDuration { index: 1, .. })));
    }

    #[test]
    fn two_segment_table() {
        let t = recurrence(&[0.8, 0.1], &[-1.2, -1.2, 1.2], &[0.2, 0.2, 0.4]).unwrap();
        let expect = [[0.8, 0.1], [0.796, -0.14], [0.744, -0.38]];
        for (row, e) in t.a.iter().zip(expect) {
            assert!((row[0] - e[0]).abs() < 1e-12 && (row[1] - e[1]).abs() < 1e-12, "{row:?}");
        }
        assert!((t.a[3][1] - 0.1).abs() < 1e-12);
        assert!((t.a[3][0] - 0.688).abs() < 1e-12);
        assert!(!check_return(&t, &[0.8, 0.1]));
        let report = timing_feasible(&[0.8, 0.1], &[-1.2, -1.2, 1.2], &[0.2, 0.2, 0.4]).unwrap();
        assert_eq!(report.failure(), Some(TimingFailure::Return { index: 0 }));
    }

    #[test]
    fn zero_durations_change_nothing() {
        let t = recurrence(&[0.3, 0.7], &[-5.0, 2.0], &[0.0, 0.0]).unwrap();
        assert!(t.a.iter().all(|row| row == &[0.3, 0.7]));
        assert!(check_return(&t, &[0.3, 0.7]));
        assert!(timing_feasible(&[0.0], &[0.0], &[0.0]).unwrap().holds());
    }

    #[test]
    fn segment_polynomial_examples() {
        let p = segment_polynomial(&[0.8, 0.1], -1.2);
        let expect = Polynomial::from_terms(1, [(0.8, vec![0]), (0.1, vec![1]), (-0.6, vec![2])]).unwrap();
        assert_eq!(p, expect);
        assert!(segment_polynomial(&[0.0], 0.0).is_zero());
        let v = check_segment_nonnegative(&p, 0.0, 0.4, DEFAULT_TOL).unwrap();
        assert!(v.holds() && (v.margin() - 0.744).abs() < 1e-9, "{v:?}");
    }

    #[test]
    fn segment_check_examples() {
        let (c, eta) = (0.7, 0.3);
        let p = segment_polynomial(&[c], -c / eta);
        assert!(check_segment_nonnegative(&p, 0.0, eta, DEFAULT_TOL).unwrap().holds());
        let q = Polynomial::from_terms(1, [(1.0, vec![1]), (-0.1, vec![0])]).unwrap();
        assert_eq!(
            check_segment_nonnegative(&q, 0.0, 0.2, DEFAULT_TOL).unwrap(),
            Verdict::Fails {
                witness: vec![0.0],
                value: -0.1
            }
        );
        assert!(check_segment_nonnegative(&q, 0.3, 0.2, DEFAULT_TOL).is_err());
        // interior dip, endpoints positive: (σ - 0.5)² - 0.01
        let dip = Polynomial::from_terms(1, [(1.0, vec![2]), (-1.0, vec![1]), (0.24, vec![0])]).unwrap();
        assert!(matches!(
            check_segment_nonnegative(&dip, 0.0, 1.0, DEFAULT_TOL).unwrap(),
            Verdict::Fails { .. }
        ));
    }

    #[test]
    fn corollary_instance() {
        let (c, eta, tau) = (0.5, 0.2, 0.7);
        let s = [-c / eta, c / tau];
        let t = recurrence(&[c], &s, &[eta, tau]).unwrap();
        assert!(t.a[1][0].abs() < 1e-12);
        assert!(check_return(&t, &[c]));
        assert!(timing_feasible(&[c], &s, &[eta, tau]).unwrap().holds());
    }

    #[test]
    fn level_set_validation() {
        assert!(LevelSet::new(vec![0.1, 0.0]).is_ok());
        assert!(LevelSet::new(vec![-0.1]).is_err());
    }
}
