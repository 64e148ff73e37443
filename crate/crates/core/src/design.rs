//! Joint search over level-set constants, segment timings and the recovery
//! policy, and independent re-verification of the result.
//!
//! Level constants are visited in graded order (ascending sum, then
//! lexicographic). Rates of the segments before the last one are certified once
//! per input invariant, since they do not depend on the level set. For each
//! level set the timings are swept with earlier segments descending and the
//! last segment ascending, and the first feasible point is returned.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::certify::{
    self, decide, synthesize_policy, verify_inside_condition, verify_policy_range, AlphaFunction, CertifyConfig,
    CertifyError, IntervalBox, Policy, PolyObjective, SynthConfig, Verdict, VertexObjective,
};
use crate::exec::Exec;
use crate::hybrid::{input_invariant, CraProfile};
use crate::polynomial::Polynomial;
use crate::system::{CpsSystem, SystemError, SystemSpecFile};
use crate::timing::{self, RecurrenceTable, TimingError};

#[derive(Debug, Error)]
pub enum DesignError {
    #[error("no feasible design among {evaluated} level sets")]
    Infeasible { evaluated: usize },
    #[error("grid budget exhausted after {evaluated} level sets")]
    BudgetExhausted { evaluated: usize },
    #[error("sweep configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Certify(#[from] CertifyError),
    #[error(transparent)]
    Timing(#[from] TimingError),
    #[error(transparent)]
    System(#[from] SystemError),
    #[error("malformed design file: {0}")]
    Parse(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    /// Largest level constant per order; `None` uses the certified maximum of
    /// `L_f^i h` over `C`.
    pub c_max: Option<Vec<f64>>,
    /// Grid step per order; `None` uses `c_max / 20`.
    pub c_step: Option<Vec<f64>>,
    /// Timing step in epochs.
    pub tau_step: u32,
    pub alpha: AlphaFunction,
    pub synth: SynthConfig,
    /// Level sets evaluated concurrently per round.
    pub chunk: usize,
    /// Stop after this many level sets.
    pub max_grid_points: Option<usize>,
    pub exec: Exec,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            c_max: None,
            c_step: None,
            tau_step: 1,
            alpha: AlphaFunction::default(),
            synth: SynthConfig::default(),
            chunk: 16,
            max_grid_points: None,
            exec: Exec::default(),
        }
    }
}

impl SweepConfig {
    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self.synth.certify.exec = exec;
        self
    }

    pub fn with_certify(mut self, certify: CertifyConfig) -> Self {
        self.synth.certify = certify;
        self
    }
}

/// Outcome of one condition, with its certified margin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub name: String,
    pub holds: bool,
    #[serde(with = "crate::serde_real")]
    pub margin: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<Vec<f64>>,
}

impl ConditionReport {
    fn from_verdict(name: String, v: &Verdict) -> Self {
        Self {
            name,
            holds: v.holds(),
            margin: v.margin(),
            witness: match v {
                Verdict::Fails { witness, .. } => Some(witness.clone()),
                _ => None,
            },
        }
    }

    fn from_margin(name: String, margin: f64, tol: f64) -> Self {
        Self {
            name,
            holds: margin >= -tol,
            margin,
            witness: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignReport {
    pub conditions: Vec<ConditionReport>,
    pub table: Option<RecurrenceTable>,
}

impl DesignReport {
    pub fn holds(&self) -> bool {
        self.conditions.iter().all(|c| c.holds)
    }

    pub fn min_margin(&self) -> f64 {
        self.conditions.iter().map(|c| c.margin).fold(f64::INFINITY, f64::min)
    }

    pub fn failures(&self) -> impl Iterator<Item = &ConditionReport> {
        self.conditions.iter().filter(|c| !c.holds)
    }
}

/// A certified design for one architecture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SafetyDesign {
    pub version: u32,
    pub system: SystemSpecFile,
    pub profile: CraProfile,
    pub level_set: Vec<f64>,
    pub epochs: Vec<u32>,
    pub timings: Vec<f64>,
    pub rates: Vec<f64>,
    pub policy: Policy,
    pub alpha: AlphaFunction,
    pub grid_points: usize,
    pub report: DesignReport,
}

impl SafetyDesign {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("design serializes")
    }

    /// Parses a design and rebuilds its system.
    pub fn from_json(text: &str) -> Result<(Self, CpsSystem), DesignError> {
        let mut design: SafetyDesign = serde_json::from_str(text)?;
        if design.version != 1 {
            return Err(DesignError::Config(format!("unsupported version {}", design.version)));
        }
        let system = CpsSystem::from_spec(design.system.clone())?;
        design.policy = design.policy.conform(&system)?;
        Ok((design, system))
    }
}

/// Level constants in graded order: ascending grid-index sum, then lexicographic.
pub fn level_grid(c_max: &[f64], c_step: &[f64]) -> Vec<Vec<f64>> {
    let counts: Vec<usize> = c_max
        .iter()
        .zip(c_step)
        .map(|(m, s)| (m / s + 1e-9).floor() as usize + 1)
        .collect();
    let mut idx: Vec<Vec<usize>> = vec![vec![]];
    for &n in &counts {
        idx = idx
            .into_iter()
            .flat_map(|p| {
                (0..n).map(move |i| {
                    let mut q = p.clone();
                    q.push(i);
                    q
                })
            })
            .collect();
    }
    idx.sort_by(|a, b| {
        let (sa, sb): (usize, usize) = (a.iter().sum(), b.iter().sum());
        sa.cmp(&sb).then_with(|| a.cmp(b))
    });
    idx.into_iter()
        .map(|i| i.iter().zip(c_step).map(|(k, s)| *k as f64 * s).collect())
        .collect()
}

/// Candidate epoch vectors in sweep order: earlier unknown segments from their
/// maximum down, the last segment from its minimum up.
pub fn timing_grid(profile: &CraProfile, tau_step: u32) -> Vec<Vec<u32>> {
    let k = profile.k();
    let step = tau_step.max(1);
    let values = |j: usize| -> Vec<u32> {
        if let Some(&n) = profile.known_epochs.get(&j) {
            return vec![n];
        }
        let (lo, hi) = profile.unknown_timings[&j];
        let mut v: Vec<u32> = (lo..=hi).step_by(step as usize).collect();
        if j + 1 < k {
            v.reverse();
        }
        v
    };
    let mut out: Vec<Vec<u32>> = vec![vec![]];
    for j in 0..k {
        let vals = values(j);
        out = out
            .into_iter()
            .flat_map(|p| {
                vals.iter().map(move |&v| {
                    let mut q = p.clone();
                    q.push(v);
                    q
                })
            })
            .collect();
    }
    out
}

fn certified_max(system: &CpsSystem, p: &Polynomial, config: &CertifyConfig) -> Result<f64, CertifyError> {
    let b = match certify::bound_min_on_region(&p.scale(-1.0), &system.safe_region(), config) {
        Ok(b) => b,
        Err(CertifyError::BudgetExhausted { partial }) => partial,
        Err(e) => return Err(e),
    };
    Ok((-b.lower_bound).max(0.0))
}

/// Certified upper bounds of `L_f^i h` over `C`, floored at zero, for `i < r`.
pub fn level_maxima(system: &CpsSystem, config: &CertifyConfig) -> Result<Vec<f64>, CertifyError> {
    (0..system.relative_degree())
        .map(|i| certified_max(system, system.lie(i), config))
        .collect()
}

/// Certified rates for every segment but the last.
pub fn adversarial_rates(system: &CpsSystem, profile: &CraProfile, config: &CertifyConfig) -> Result<Vec<f64>, CertifyError> {
    let mut cache: Vec<(IntervalBox, f64)> = Vec::new();
    let mut rates = Vec::new();
    for &l in &profile.sequence[..profile.k() - 1] {
        let ib = input_invariant(system, l);
        if let Some((_, s)) = cache.iter().find(|(b, _)| *b == ib) {
            rates.push(*s);
            continue;
        }
        let s = match certify::adversarial_rate_bound(system, &ib, config) {
            Ok(b) => b.lower_bound,
            Err(CertifyError::BudgetExhausted { partial }) => partial.lower_bound,
            Err(e) => return Err(e),
        };
        cache.push((ib, s));
        rates.push(s);
    }
    Ok(rates)
}

struct Candidate {
    epochs: Vec<u32>,
    rates: Vec<f64>,
    policy: Policy,
}

enum PolicySource<'a> {
    Synthesize,
    Fixed(&'a Policy),
}

struct Sweep<'a> {
    system: &'a CpsSystem,
    profile: &'a CraProfile,
    config: &'a SweepConfig,
    prefix_rates: Vec<f64>,
    grid: Vec<Vec<u32>>,
    source: PolicySource<'a>,
}

impl Sweep<'_> {
    fn seconds(&self, epochs: &[u32]) -> Vec<f64> {
        self.profile.to_seconds(epochs)
    }

    fn evaluate(&self, c: &[f64]) -> Result<Option<Candidate>, DesignError> {
        let k = self.profile.k();
        // Rows of the timing grid sharing a prefix are contiguous.
        let mut prefix_ok: Vec<bool> = Vec::with_capacity(self.grid.len());
        let mut last: Option<(&[u32], bool)> = None;
        for e in &self.grid {
            let prefix = &e[..k - 1];
            let ok = match last {
                Some((p, ok)) if p == prefix => ok,
                _ => {
                    let mut s = self.prefix_rates.clone();
                    s.push(0.0);
                    timing::segments_feasible(c, &s, &self.seconds(e), k - 1)?
                }
            };
            last = Some((prefix, ok));
            prefix_ok.push(ok);
        }
        if !prefix_ok.iter().any(|ok| *ok) {
            return Ok(None);
        }

        let final_inputs = input_invariant(self.system, self.profile.final_location());
        let cfg = &self.config.synth.certify;
        let (policy, s_k) = match self.source {
            PolicySource::Synthesize => {
                match synthesize_policy(self.system, c, &self.config.alpha, &final_inputs, &self.config.synth) {
                    Ok(s) => (s.policy, s.rate),
                    Err(CertifyError::NoFeasiblePolicy) => return Ok(None),
                    Err(e) => return Err(e.into()),
                }
            }
            PolicySource::Fixed(p) => {
                let range = verify_policy_range(p, &self.system.safe_region(), &final_inputs, cfg)?;
                let inside = verify_inside_condition(self.system, p, c, &self.config.alpha, cfg)?;
                if !(range.holds() && inside.holds()) {
                    return Ok(None);
                }
                let mut s = certify::complement_rate_bound(self.system, p, c, cfg)?;
                if s == f64::INFINITY {
                    s = match certify::closed_loop_rate_bound(self.system, p, &self.system.safe_region(), cfg) {
                        Ok(b) => b.lower_bound,
                        Err(CertifyError::BudgetExhausted { partial }) => partial.lower_bound,
                        Err(e) => return Err(e.into()),
                    };
                }
                if s == f64::INFINITY {
                    s = 0.0;
                }
                (p.clone(), s)
            }
        };

        let mut rates = self.prefix_rates.clone();
        rates.push(s_k);
        for (e, ok) in self.grid.iter().zip(&prefix_ok) {
            if !ok {
                continue;
            }
            let tau = self.seconds(e);
            let table = timing::recurrence(c, &rates, &tau)?;
            if !timing::check_return(&table, c) {
                continue;
            }
            if timing::timing_feasible(c, &rates, &tau)?.holds() {
                return Ok(Some(Candidate {
                    epochs: e.clone(),
                    rates,
                    policy,
                }));
            }
        }
        Ok(None)
    }
}

fn run_sweep(
    system: &CpsSystem,
    profile: &CraProfile,
    config: &SweepConfig,
    source: PolicySource<'_>,
) -> Result<SafetyDesign, DesignError> {
    let r = system.relative_degree();
    let cfg = config.synth.certify;
    let c_max = match &config.c_max {
        Some(v) => v.clone(),
        None => level_maxima(system, &cfg)?,
    };
    let c_step = match &config.c_step {
        Some(v) => v.clone(),
        None => c_max.iter().map(|m| if *m > 0.0 { m / 20.0 } else { 1.0 }).collect(),
    };
    if c_max.len() != r || c_step.len() != r {
        return Err(DesignError::Config(format!("level grid needs {r} entries per vector")));
    }
    if c_max.iter().any(|m| !(m.is_finite() && *m >= 0.0)) || c_step.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
        return Err(DesignError::Config("grid maxima must be nonnegative and steps positive".into()));
    }
    let levels = level_grid(&c_max, &c_step);
    let sweep = Sweep {
        system,
        profile,
        config,
        prefix_rates: adversarial_rates(system, profile, &cfg)?,
        grid: timing_grid(profile, config.tau_step),
        source,
    };

    let limit = config.max_grid_points.unwrap_or(usize::MAX).min(levels.len());
    let mut evaluated = 0;
    for chunk in levels[..limit].chunks(config.chunk.max(1)) {
        let results = config.exec.map(chunk, |c| sweep.evaluate(c));
        for (c, res) in chunk.iter().zip(results) {
            evaluated += 1;
            if let Some(cand) = res? {
                let mut design = SafetyDesign {
                    version: 1,
                    system: system.to_spec(),
                    profile: profile.clone(),
                    level_set: c.clone(),
                    timings: profile.to_seconds(&cand.epochs),
                    epochs: cand.epochs,
                    rates: cand.rates,
                    policy: cand.policy,
                    alpha: config.alpha,
                    grid_points: evaluated,
                    report: DesignReport {
                        conditions: vec![],
                        table: None,
                    },
                };
                design.report = verify_design(system, profile, &design, &cfg)?;
                return Ok(design);
            }
        }
    }
    if limit < levels.len() {
        Err(DesignError::BudgetExhausted { evaluated })
    } else {
        Err(DesignError::Infeasible { evaluated })
    }
}

pub fn design_parameters(system: &CpsSystem, profile: &CraProfile, config: &SweepConfig) -> Result<SafetyDesign, DesignError> {
    run_sweep(system, profile, config, PolicySource::Synthesize)
}

/// Sweeps level sets and timings with `policy` fixed.
pub fn verify_existing_policy(
    system: &CpsSystem,
    profile: &CraProfile,
    policy: &Policy,
    config: &SweepConfig,
) -> Result<SafetyDesign, DesignError> {
    policy.lambda()?;
    run_sweep(system, profile, config, PolicySource::Fixed(policy))
}

/// Re-certifies every condition of a design from scratch.
pub fn verify_design(
    system: &CpsSystem,
    profile: &CraProfile,
    design: &SafetyDesign,
    config: &CertifyConfig,
) -> Result<DesignReport, DesignError> {
    let k = profile.k();
    let c = &design.level_set;
    let n = system.dim();
    let vt = config.verdict_tol;
    if design.rates.len() != k || design.timings.len() != k || c.len() != system.relative_degree() {
        return Err(DesignError::Config("design does not match the profile".into()));
    }
    let mut conditions = Vec::new();

    for j in 0..k - 1 {
        let ib = input_invariant(system, profile.sequence[j]);
        let shifted = system.lie_top() - &Polynomial::constant(n, design.rates[j]);
        let obj = VertexObjective::new(&shifted, system.gain(), &ib);
        let v = decide(&obj, &system.safe_region(), config);
        conditions.push(ConditionReport::from_verdict(format!("adversarial_rate[{}]", j + 1), &v));
    }

    let final_inputs = input_invariant(system, profile.final_location());
    match certify::closed_loop_polynomial(system, &design.policy) {
        Ok(cl) => {
            let shifted = &cl - &Polynomial::constant(n, design.rates[k - 1]);
            let obj = PolyObjective::new(&shifted);
            let mut v = Verdict::Holds {
                margin: f64::INFINITY,
                empty_region: true,
            };
            let pieces = system.complement_pieces(c);
            let all_empty = pieces.iter().all(|p| {
                matches!(decide(&obj, p, config), Verdict::Holds { empty_region: true, .. })
            });
            let regions = if all_empty { vec![system.safe_region()] } else { pieces };
            for p in &regions {
                v = v.and(decide(&obj, p, config));
            }
            conditions.push(ConditionReport::from_verdict("closed_loop_rate".into(), &v));
            let inside = verify_inside_condition(system, &design.policy, c, &design.alpha, config)?;
            conditions.push(ConditionReport::from_verdict("inside_level_set".into(), &inside));
            let range = verify_policy_range(&design.policy, &system.safe_region(), &final_inputs, config)?;
            conditions.push(ConditionReport::from_verdict("policy_range".into(), &range));
        }
        Err(CertifyError::PolicyNotPolynomial) => {
            conditions.push(ConditionReport {
                name: "closed_loop_rate".into(),
                holds: false,
                margin: f64::NEG_INFINITY,
                witness: None,
            });
        }
        Err(e) => return Err(e.into()),
    }

    let timing = timing::timing_feasible(c, &design.rates, &design.timings)?;
    for (j, v) in timing.segments.iter().enumerate() {
        conditions.push(ConditionReport::from_verdict(format!("segment[{}]", j + 1), v));
    }
    for (i, m) in timing.return_margins.iter().enumerate() {
        conditions.push(ConditionReport::from_margin(format!("return[{i}]"), *m, vt.max(timing::DEFAULT_TOL)));
    }
    Ok(DesignReport {
        conditions,
        table: Some(timing.table),
    })
}

/// Upper bound on the number of level-set and timing points the sweep visits.
pub fn grid_size(c_max: &[f64], c_step: &[f64], profile: &CraProfile, tau_step: u32) -> usize {
    level_grid(c_max, c_step).len() * timing_grid(profile, tau_step).len()
}
