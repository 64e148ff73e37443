//! Branch-and-bound global minimization over a constrained box.
//!
//! Cells are kept in a min-heap keyed by `(lower bound, cell origin)`. Each
//! round pops a fixed-size batch of the lowest cells, splits each along its
//! widest relevant axis, and evaluates the children (optionally in parallel).
//! Children are merged back in a fixed order, so the expansion sequence and the
//! final bound do not depend on how the batch was scheduled.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use super::bernstein::{coefficient_range, DensePoly};
use super::{CertifyConfig, CertifyError, IntervalBox, Region};
use crate::polynomial::Polynomial;

const BATCH: usize = 32;
/// Cells narrower than this fraction of the root along every relevant axis are
/// not split further.
const MIN_RELATIVE_WIDTH: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub point: Vec<f64>,
    pub value: f64,
}

/// A certified lower bound on a minimum together with the best feasible sample.
///
/// `lower_bound` is `+∞` when the feasible set was shown to be empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertifiedBound {
    #[serde(with = "crate::serde_real")]
    pub lower_bound: f64,
    pub upper_witness: Option<Witness>,
    pub cells_expanded: usize,
}

impl CertifiedBound {
    pub fn is_empty_region(&self) -> bool {
        self.lower_bound == f64::INFINITY && self.upper_witness.is_none()
    }

    /// Gap between the best sample and the certified bound.
    pub fn gap(&self) -> f64 {
        self.upper_witness
            .as_ref()
            .map_or(f64::INFINITY, |w| w.value - self.lower_bound)
    }
}

/// Something the branch-and-bound can minimize.
pub trait Objective: Sync {
    fn dim(&self) -> usize;
    /// A valid lower bound over the whole cell.
    fn lower_bound(&self, lo: &[f64], hi: &[f64]) -> f64;
    fn value(&self, x: &[f64]) -> f64;
    fn depends_on(&self, var: usize) -> bool;
}

/// Plain polynomial objective.
pub struct PolyObjective {
    poly: Polynomial,
    dense: DensePoly,
}

impl PolyObjective {
    pub fn new(poly: &Polynomial) -> Self {
        Self {
            poly: poly.clone(),
            dense: DensePoly::new(poly),
        }
    }
}

impl Objective for PolyObjective {
    fn dim(&self) -> usize {
        self.poly.nvars()
    }

    fn lower_bound(&self, lo: &[f64], hi: &[f64]) -> f64 {
        coefficient_range(&self.dense.bernstein(lo, hi)).0
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.poly.eval_unchecked(x)
    }

    fn depends_on(&self, var: usize) -> bool {
        self.dense.depends_on(var)
    }
}

/// `min_{u ∈ U} drift(x) + Σ_i gain_i(x) u_i`, minimized over `x`.
///
/// The inner minimum is attained at a vertex of `U` chosen per channel by the
/// sign of the gain. On a cell, the Bernstein coefficients of drift and gains
/// share one tensor shape, and taking the per-coefficient minimum over the two
/// endpoints of each channel bounds the vertex-selected polynomial from below.
pub struct VertexObjective {
    drift: Polynomial,
    gains: Vec<Polynomial>,
    drift_dense: DensePoly,
    gains_dense: Vec<DensePoly>,
    input: IntervalBox,
}

impl VertexObjective {
    pub fn new(drift: &Polynomial, gains: &[Polynomial], input: &IntervalBox) -> Self {
        assert_eq!(gains.len(), input.dim());
        let n = drift.nvars();
        let degs: Vec<usize> = (0..n)
            .map(|v| {
                gains
                    .iter()
                    .map(|g| g.degree_in(v))
                    .chain(std::iter::once(drift.degree_in(v)))
                    .max()
                    .unwrap_or(0) as usize
            })
            .collect();
        Self {
            drift: drift.clone(),
            gains: gains.to_vec(),
            drift_dense: DensePoly::with_degrees(drift, degs.clone()),
            gains_dense: gains.iter().map(|g| DensePoly::with_degrees(g, degs.clone())).collect(),
            input: input.clone(),
        }
    }

    /// The minimizing input at `x`: per channel, the endpoint that makes
    /// `gain_i(x) u_i` smallest (the lower endpoint on ties).
    pub fn minimizing_input(&self, x: &[f64]) -> Vec<f64> {
        self.gains
            .iter()
            .enumerate()
            .map(|(i, g)| {
                let gv = g.eval_unchecked(x);
                let (lo, hi) = (self.input.lo()[i], self.input.hi()[i]);
                if gv * hi < gv * lo {
                    hi
                } else {
                    lo
                }
            })
            .collect()
    }
}

impl Objective for VertexObjective {
    fn dim(&self) -> usize {
        self.drift.nvars()
    }

    fn lower_bound(&self, lo: &[f64], hi: &[f64]) -> f64 {
        let mut acc = self.drift_dense.bernstein(lo, hi);
        for (i, g) in self.gains_dense.iter().enumerate() {
            if g.is_constant() && g.bernstein(lo, hi)[0] == 0.0 {
                continue;
            }
            let (ul, uh) = (self.input.lo()[i], self.input.hi()[i]);
            for (a, b) in acc.iter_mut().zip(g.bernstein(lo, hi)) {
                *a += (ul * b).min(uh * b);
            }
        }
        coefficient_range(&acc).0
    }

    fn value(&self, x: &[f64]) -> f64 {
        let u = self.minimizing_input(x);
        self.drift.eval_unchecked(x)
            + self
                .gains
                .iter()
                .zip(&u)
                .map(|(g, ui)| g.eval_unchecked(x) * ui)
                .sum::<f64>()
    }

    fn depends_on(&self, var: usize) -> bool {
        self.drift_dense.depends_on(var) || self.gains_dense.iter().any(|g| g.depends_on(var))
    }
}

struct Cell {
    lo: Vec<f64>,
    hi: Vec<f64>,
    lb: f64,
    /// Constraints not yet certified to hold on the whole cell.
    active: Vec<usize>,
}

impl PartialEq for Cell {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Cell {}

impl Ord for Cell {
    // Reversed so that `BinaryHeap` pops the lowest bound, then the
    // lexicographically smallest origin.
    fn cmp(&self, other: &Self) -> Ordering {
        other.lb.total_cmp(&self.lb).then_with(|| {
            for (a, b) in other.lo.iter().zip(&self.lo) {
                match a.total_cmp(b) {
                    Ordering::Equal => continue,
                    o => return o,
                }
            }
            Ordering::Equal
        })
    }
}

impl PartialOrd for Cell {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct Problem<'a, O: Objective> {
    objective: &'a O,
    constraints: Vec<(Polynomial, DensePoly)>,
    root_width: Vec<f64>,
}

impl<O: Objective> Problem<'_, O> {
    /// `None` when some constraint is certified violated on the whole cell.
    fn evaluate(&self, lo: Vec<f64>, hi: Vec<f64>, parent_active: &[usize], parent_lb: f64) -> Option<(Cell, Option<Witness>)> {
        let mut active = Vec::with_capacity(parent_active.len());
        for &ci in parent_active {
            let (l, u) = coefficient_range(&self.constraints[ci].1.bernstein(&lo, &hi));
            if u < 0.0 {
                return None;
            }
            if l < 0.0 {
                active.push(ci);
            }
        }
        let lb = self.objective.lower_bound(&lo, &hi).max(parent_lb);
        let center: Vec<f64> = lo.iter().zip(&hi).map(|(l, h)| 0.5 * (l + h)).collect();
        let feasible = active
            .iter()
            .all(|&ci| self.constraints[ci].0.eval_unchecked(&center) >= 0.0);
        let witness = feasible.then(|| Witness {
            value: self.objective.value(&center),
            point: center,
        });
        Some((Cell { lo, hi, lb, active }, witness))
    }

    /// Axis to split, or `None` when the cell is already at the resolution floor.
    fn split_axis(&self, cell: &Cell) -> Option<usize> {
        let relevant = |v: usize| {
            self.objective.depends_on(v) || cell.active.iter().any(|&ci| self.constraints[ci].1.depends_on(v))
        };
        let rel = |v: usize| {
            if self.root_width[v] > 0.0 {
                (cell.hi[v] - cell.lo[v]) / self.root_width[v]
            } else {
                0.0
            }
        };
        let pick = |filter: &dyn Fn(usize) -> bool| {
            (0..cell.lo.len())
                .filter(|&v| filter(v))
                .fold(None, |best: Option<(usize, f64)>, v| match best {
                    Some((_, w)) if w >= rel(v) => best,
                    _ => Some((v, rel(v))),
                })
        };
        let (axis, width) = pick(&relevant).or_else(|| pick(&|_| true))?;
        (width > MIN_RELATIVE_WIDTH).then_some(axis)
    }
}

fn better(candidate: &Witness, current: &Option<Witness>) -> bool {
    match current {
        None => true,
        Some(w) => match candidate.value.total_cmp(&w.value) {
            Ordering::Less => true,
            Ordering::Greater => false,
            Ordering::Equal => candidate
                .point
                .iter()
                .zip(&w.point)
                .map(|(a, b)| a.total_cmp(b))
                .find(|o| *o != Ordering::Equal)
                == Some(Ordering::Less),
        },
    }
}

/// Minimizes `objective` over `region` to within `config.tol`.
pub fn minimize<O: Objective>(objective: &O, region: &Region, config: &CertifyConfig) -> Result<CertifiedBound, CertifyError> {
    search(objective, region, config, None)
}

/// Like [`minimize`], but also stops once the bound clears `threshold` or a
/// sample falls below it.
pub(crate) fn search<O: Objective>(
    objective: &O,
    region: &Region,
    config: &CertifyConfig,
    threshold: Option<f64>,
) -> Result<CertifiedBound, CertifyError> {
    assert_eq!(objective.dim(), region.dim(), "objective and region dimensions differ");
    let problem = Problem {
        objective,
        constraints: region
            .constraints
            .iter()
            .map(|c| {
                let g = c.as_nonnegative();
                let d = DensePoly::new(&g);
                (g, d)
            })
            .collect(),
        root_width: region
            .domain
            .lo()
            .iter()
            .zip(region.domain.hi())
            .map(|(l, h)| h - l)
            .collect(),
    };

    let all: Vec<usize> = (0..problem.constraints.len()).collect();
    let mut best: Option<Witness> = None;
    let mut heap = BinaryHeap::new();
    let mut settled = f64::INFINITY;
    let mut expanded = 0usize;

    let root = problem.evaluate(
        region.domain.lo().to_vec(),
        region.domain.hi().to_vec(),
        &all,
        f64::NEG_INFINITY,
    );
    if let Some((cell, w)) = root {
        if let Some(w) = w {
            best = Some(w);
        }
        heap.push(cell);
    }

    let lower = |heap: &BinaryHeap<Cell>, settled: f64| heap.peek().map_or(f64::INFINITY, |c| c.lb).min(settled);

    loop {
        let lb = lower(&heap, settled);
        if heap.is_empty() {
            break;
        }
        if let Some(w) = &best {
            if w.value - lb <= config.tol {
                break;
            }
        }
        if let Some(t) = threshold {
            if lb >= t || best.as_ref().is_some_and(|w| w.value < t) {
                break;
            }
        }
        if expanded >= config.max_cells {
            return Err(CertifyError::BudgetExhausted {
                partial: CertifiedBound {
                    lower_bound: lb,
                    upper_witness: best,
                    cells_expanded: expanded,
                },
            });
        }

        let mut jobs = Vec::with_capacity(2 * BATCH);
        for _ in 0..BATCH {
            let Some(cell) = heap.pop() else { break };
            expanded += 1;
            match problem.split_axis(&cell) {
                None => settled = settled.min(cell.lb),
                Some(axis) => {
                    let mid = 0.5 * (cell.lo[axis] + cell.hi[axis]);
                    let mut left_hi = cell.hi.clone();
                    left_hi[axis] = mid;
                    let mut right_lo = cell.lo.clone();
                    right_lo[axis] = mid;
                    jobs.push((cell.lo.clone(), left_hi, cell.active.clone(), cell.lb));
                    jobs.push((right_lo, cell.hi, cell.active, cell.lb));
                }
            }
        }
        let children = config
            .exec
            .map(&jobs, |(lo, hi, active, plb)| problem.evaluate(lo.clone(), hi.clone(), active, *plb));
        for (cell, w) in children.into_iter().flatten() {
            if let Some(w) = w {
                if better(&w, &best) {
                    best = Some(w);
                }
            }
            match &best {
                Some(b) if cell.lb > b.value => {}
                _ => heap.push(cell),
            }
        }
    }

    Ok(CertifiedBound {
        lower_bound: lower(&heap, settled),
        upper_witness: best,
        cells_expanded: expanded,
    })
}
