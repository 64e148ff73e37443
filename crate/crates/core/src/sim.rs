//! Closed-loop simulation of repeated attack cycles.
//!
//! Inputs are held for one epoch and the dynamics are integrated with RK4 on
//! `substeps` sub-intervals of each epoch. The adversary acts in corrupted and
//! restoration statuses, restart and switching apply zero, and the designed
//! policy drives normal and safety-controller statuses. Integration stops the
//! moment `h` turns negative.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::certify::{CertifyError, IntervalBox, Policy};
use crate::design::SafetyDesign;
use crate::exec::Exec;
use crate::hybrid::{input_invariant, transition_label, CraProfile, Location, CYBER_INTRUSION, SAFETY_CROSSED};
use crate::system::CpsSystem;

/// Cycle length used when every segment of the architecture has zero length.
pub const IDLE_CYCLE_EPOCHS: u32 = 10;
pub const DEFAULT_SUBSTEPS: u32 = 10;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("{what} has length {got}, expected {expected}")]
    Dimension { what: &'static str, expected: usize, got: usize },
    #[error("cycle of {cycle} epochs is shorter than the {total} epochs of its segments")]
    CycleTooShort { cycle: u32, total: u32 },
    #[error("adversary input sequence is empty")]
    EmptyAdversary,
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("could not sample the level set after {0} attempts")]
    Sampling(usize),
    #[error("initial state {0:?} is outside the level set")]
    InitialState(Vec<f64>),
    #[error("state became non-finite at t = {0}")]
    NonFinite(f64),
    #[error(transparent)]
    Certify(#[from] CertifyError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Adversary {
    /// Per epoch, the input-box vertex minimizing `L_g L_f^{r-1} h · u`.
    WorstCaseVertex,
    /// Inputs for successive adversarial epochs, repeated cyclically.
    Sequence { inputs: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub profile: CraProfile,
    pub epochs: Vec<u32>,
    pub policy: Policy,
    pub initial_state: Vec<f64>,
    /// When set, the initial state must lie in this level set.
    pub level_set: Option<Vec<f64>>,
    pub cycles: usize,
    /// Epochs per cycle; defaults to the segment total.
    pub cycle_epochs: Option<u32>,
    pub substeps: u32,
    pub adversary: Adversary,
}

impl Scenario {
    pub fn from_design(design: &SafetyDesign, initial_state: Vec<f64>, cycles: usize) -> Self {
        Self {
            profile: design.profile.clone(),
            epochs: design.epochs.clone(),
            policy: design.policy.clone(),
            initial_state,
            level_set: Some(design.level_set.clone()),
            cycles,
            cycle_epochs: None,
            substeps: DEFAULT_SUBSTEPS,
            adversary: Adversary::WorstCaseVertex,
        }
    }

    fn cycle_length(&self) -> Result<u32, SimError> {
        let total: u32 = self.epochs.iter().sum();
        match self.cycle_epochs {
            Some(c) if c < total => Err(SimError::CycleTooShort { cycle: c, total }),
            Some(0) => Err(SimError::Invalid("cycle length must be positive".into())),
            Some(c) => Ok(c),
            None if total == 0 => Ok(IDLE_CYCLE_EPOCHS),
            None => Ok(total),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub status: Location,
    pub h: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub t: f64,
    pub from: Location,
    pub to: Location,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub events: Vec<Event>,
    /// `h` became negative and integration stopped.
    pub crossed: bool,
}

impl Trajectory {
    pub fn final_state(&self) -> &[f64] {
        &self.samples.last().expect("trajectories start with a sample").x
    }

    /// `max_t (h(x_0) - h(x_t))`, floored at zero.
    pub fn max_impact(&self) -> f64 {
        let h0 = self.samples[0].h;
        self.samples.iter().map(|s| h0 - s.h).fold(0.0, f64::max)
    }

    pub fn min_h(&self) -> f64 {
        self.samples.iter().map(|s| s.h).fold(f64::INFINITY, f64::min)
    }

    /// Header `t,<states>,<inputs>,status,h`, one row per sample.
    pub fn to_csv(&self, system: &CpsSystem) -> String {
        let mut out = String::from("t");
        for v in system.variables().iter().chain(system.inputs()) {
            out.push(',');
            out.push_str(v);
        }
        out.push_str(",status,h\n");
        for s in &self.samples {
            let _ = write!(out, "{}", s.t);
            for v in s.x.iter().chain(&s.u) {
                let _ = write!(out, ",{v}");
            }
            let _ = writeln!(out, ",{},{}", s.status, s.h);
        }
        out
    }

    /// One `t,label` line per event.
    pub fn events_csv(&self) -> String {
        self.events.iter().fold(String::new(), |mut out, e| {
            let _ = writeln!(out, "{},{}", e.t, e.label);
            out
        })
    }
}

/// One classical RK4 step of `ẋ = f(x) + g(x) u` with `u` held.
pub fn rk4_step(system: &CpsSystem, x: &[f64], u: &[f64], dt: f64) -> Vec<f64> {
    let n = x.len();
    let mut k: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; n]);
    let mut y = vec![0.0; n];
    system.vector_field(x, u, &mut k[0]);
    for (stage, scale) in [(1usize, 0.5), (2, 0.5), (3, 1.0)] {
        for i in 0..n {
            y[i] = x[i] + scale * dt * k[stage - 1][i];
        }
        system.vector_field(&y, u, &mut k[stage]);
    }
    (0..n)
        .map(|i| x[i] + dt / 6.0 * (k[0][i] + 2.0 * k[1][i] + 2.0 * k[2][i] + k[3][i]))
        .collect()
}

/// The input-box vertex minimizing the gain-weighted input at `x`.
pub fn worst_case_input(system: &CpsSystem, input_box: &IntervalBox, x: &[f64]) -> Vec<f64> {
    system
        .gain()
        .iter()
        .enumerate()
        .map(|(i, g)| {
            let b = g.eval_unchecked(x);
            let (lo, hi) = (input_box.lo()[i], input_box.hi()[i]);
            if b * lo <= b * hi {
                lo
            } else {
                hi
            }
        })
        .collect()
}

struct Runner<'a> {
    system: &'a CpsSystem,
    scenario: &'a Scenario,
    adversarial_epochs: usize,
    traj: Trajectory,
    x: Vec<f64>,
    t: f64,
    /// Integration steps taken; `t = steps / rate` avoids drift from
    /// summation and prints cleanly when the rate is integral.
    steps: u64,
    dt: f64,
    rate: f64,
}

impl Runner<'_> {
    fn input(&mut self, location: Location) -> Result<Vec<f64>, SimError> {
        let ib = input_invariant(self.system, location);
        if location.silent() {
            return Ok(vec![0.0; self.system.input_dim()]);
        }
        if location.adversarial() {
            let mut u = match &self.scenario.adversary {
                Adversary::WorstCaseVertex => worst_case_input(self.system, &ib, &self.x),
                Adversary::Sequence { inputs } => inputs[self.adversarial_epochs % inputs.len()].clone(),
            };
            self.adversarial_epochs += 1;
            ib.clamp(&mut u);
            return Ok(u);
        }
        Ok(self.scenario.policy.input(self.system, &ib, &self.x)?)
    }

    fn event(&mut self, from: Location, to: Location) {
        let label = transition_label(self.scenario.profile.architecture, from, to).unwrap_or("status change");
        self.traj.events.push(Event {
            t: self.t,
            from,
            to,
            label: label.to_string(),
        });
    }

    /// Returns `false` once the safety region is left.
    fn epoch(&mut self, location: Location) -> Result<bool, SimError> {
        let dt = self.dt;
        let u = self.input(location)?;
        if self.traj.samples.is_empty() {
            let h = self.system.h().eval_unchecked(&self.x);
            self.traj.samples.push(Sample {
                t: self.t,
                x: self.x.clone(),
                u: u.clone(),
                status: location,
                h,
            });
        }
        for _ in 0..self.scenario.substeps {
            self.x = rk4_step(self.system, &self.x, &u, dt);
            self.steps += 1;
            self.t = self.steps as f64 / self.rate;
            if self.x.iter().any(|v| !v.is_finite()) {
                return Err(SimError::NonFinite(self.t));
            }
            let h = self.system.h().eval_unchecked(&self.x);
            let crossed = h < 0.0;
            self.traj.samples.push(Sample {
                t: self.t,
                x: self.x.clone(),
                u: u.clone(),
                status: if crossed { Location::Unsafe } else { location },
                h,
            });
            if crossed {
                self.traj.crossed = true;
                self.traj.events.push(Event {
                    t: self.t,
                    from: location,
                    to: Location::Unsafe,
                    label: SAFETY_CROSSED.to_string(),
                });
                return Ok(false);
            }
        }
        Ok(true)
    }
}

pub fn simulate(system: &CpsSystem, scenario: &Scenario) -> Result<Trajectory, SimError> {
    let profile = &scenario.profile;
    let k = profile.k();
    if scenario.epochs.len() != k {
        return Err(SimError::Dimension {
            what: "epoch vector",
            expected: k,
            got: scenario.epochs.len(),
        });
    }
    if scenario.initial_state.len() != system.dim() {
        return Err(SimError::Dimension {
            what: "initial state",
            expected: system.dim(),
            got: scenario.initial_state.len(),
        });
    }
    if let Some(c) = &scenario.level_set {
        if c.len() != system.relative_degree() {
            return Err(SimError::Dimension {
                what: "level set",
                expected: system.relative_degree(),
                got: c.len(),
            });
        }
        if !system.level_set_region(c).contains_within(&scenario.initial_state, 1e-9) {
            return Err(SimError::InitialState(scenario.initial_state.clone()));
        }
    }
    if scenario.substeps == 0 {
        return Err(SimError::Invalid("substeps must be positive".into()));
    }
    if let Adversary::Sequence { inputs } = &scenario.adversary {
        if inputs.is_empty() {
            return Err(SimError::EmptyAdversary);
        }
        if let Some(bad) = inputs.iter().find(|u| u.len() != system.input_dim()) {
            return Err(SimError::Dimension {
                what: "adversary input",
                expected: system.input_dim(),
                got: bad.len(),
            });
        }
    }
    let cycle = scenario.cycle_length()?;
    let slack = cycle - scenario.epochs.iter().sum::<u32>();
    let dt = profile.epoch_seconds / f64::from(scenario.substeps);

    let mut run = Runner {
        system,
        scenario,
        adversarial_epochs: 0,
        traj: Trajectory {
            samples: Vec::new(),
            events: Vec::new(),
            crossed: false,
        },
        x: scenario.initial_state.clone(),
        t: 0.0,
        steps: 0,
        dt,
        rate: f64::from(scenario.substeps) / profile.epoch_seconds,
    };
    let mut prev = Location::Normal;
    'cycles: for _ in 0..scenario.cycles {
        if prev != Location::Normal {
            run.event(prev, Location::Normal);
        }
        run.traj.events.push(Event {
            t: run.t,
            from: Location::Normal,
            to: Location::Corrupted,
            label: CYBER_INTRUSION.to_string(),
        });
        prev = Location::Corrupted;
        for (j, &location) in profile.sequence.iter().enumerate() {
            if location != prev {
                run.event(prev, location);
            }
            prev = location;
            let n = scenario.epochs[j] + if j + 1 == k { slack } else { 0 };
            for _ in 0..n {
                if !run.epoch(location)? {
                    break 'cycles;
                }
            }
        }
    }
    if run.traj.samples.is_empty() {
        let h = system.h().eval_unchecked(&run.x);
        run.traj.samples.push(Sample {
            t: 0.0,
            x: run.x.clone(),
            u: vec![0.0; system.input_dim()],
            status: Location::Normal,
            h,
        });
    }
    Ok(run.traj)
}

/// Simulates every scenario, in input order.
pub fn simulate_all(system: &CpsSystem, scenarios: &[Scenario], exec: Exec) -> Vec<Result<Trajectory, SimError>> {
    exec.map(scenarios, |s| simulate(system, s))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InvarianceConfig {
    pub trials: usize,
    pub horizon_seconds: f64,
    pub substeps: u32,
    /// Allowed violation of each level-set inequality.
    pub tol: f64,
    pub seed: u64,
    pub exec: Exec,
}

impl Default for InvarianceConfig {
    fn default() -> Self {
        Self {
            trials: 200,
            horizon_seconds: 2.0,
            substeps: DEFAULT_SUBSTEPS,
            tol: 1e-3,
            seed: 0,
            exec: Exec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvarianceViolation {
    pub start: Vec<f64>,
    pub t: f64,
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvarianceReport {
    pub trials: usize,
    pub violations: Vec<InvarianceViolation>,
    /// Smallest level-set slack seen over all trials.
    pub min_slack: f64,
}

impl InvarianceReport {
    pub fn holds(&self) -> bool {
        self.violations.is_empty()
    }
}

const SAMPLING_ATTEMPTS: usize = 100_000;

fn uniform(rng: &mut ChaCha8Rng, b: &IntervalBox) -> Vec<f64> {
    b.lo().iter().zip(b.hi()).map(|(l, h)| if h > l { rng.gen_range(*l..=*h) } else { *l }).collect()
}

/// Starting points on the boundary of the level set: bisection between a
/// sampled inside point and a sampled outside point, keeping the inside end.
pub fn boundary_starts(system: &CpsSystem, level_set: &[f64], count: usize, seed: u64) -> Result<Vec<Vec<f64>>, SimError> {
    // Both ends lie in the convex state region, so the bisection finds the
    // level-set boundary rather than the boundary of `X`.
    let inside = system.level_set_region(level_set);
    let state = system.state_region();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |want_inside: bool, rng: &mut ChaCha8Rng| {
        (0..SAMPLING_ATTEMPTS)
            .map(|_| uniform(rng, system.state_box()))
            .find(|x| state.contains(x) && inside.contains(x) == want_inside)
            .ok_or(SimError::Sampling(SAMPLING_ATTEMPTS))
    };
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let mut a = draw(true, &mut rng)?;
        let mut b = draw(false, &mut rng)?;
        for _ in 0..60 {
            let m: Vec<f64> = a.iter().zip(&b).map(|(p, q)| 0.5 * (p + q)).collect();
            if inside.contains(&m) {
                a = m;
            } else {
                b = m;
            }
        }
        out.push(a);
    }
    Ok(out)
}

/// Runs `policy` from boundary points of the level set and records every
/// sample where a level-set inequality is violated by more than `tol`.
pub fn forward_invariance_check(
    system: &CpsSystem,
    policy: &Policy,
    level_set: &[f64],
    config: &InvarianceConfig,
) -> Result<InvarianceReport, SimError> {
    if config.substeps == 0 || !(config.horizon_seconds > 0.0) {
        return Err(SimError::Invalid("horizon and substeps must be positive".into()));
    }
    let starts = boundary_starts(system, level_set, config.trials, config.seed)?;
    let delta = system.epoch_seconds();
    let epochs = (config.horizon_seconds / delta).ceil() as usize;
    let dt = delta / f64::from(config.substeps);
    let runs = config.exec.map(&starts, |x0| -> Result<(f64, Option<InvarianceViolation>), SimError> {
        let mut x = x0.clone();
        let mut t = 0.0;
        let mut min_slack = system.level_set_slack(&x, level_set);
        let mut first = None;
        for _ in 0..epochs {
            let u = policy.input(system, system.input_box(), &x)?;
            for _ in 0..config.substeps {
                x = rk4_step(system, &x, &u, dt);
                t += dt;
                let s = system.level_set_slack(&x, level_set);
                min_slack = min_slack.min(s);
                if s < -config.tol && first.is_none() {
                    first = Some(InvarianceViolation {
                        start: x0.clone(),
                        t,
                        slack: s,
                    });
                }
            }
        }
        Ok((min_slack, first))
    });
    let mut report = InvarianceReport {
        trials: starts.len(),
        violations: Vec::new(),
        min_slack: f64::INFINITY,
    };
    for r in runs {
        let (s, v) = r?;
        report.min_slack = report.min_slack.min(s);
        report.violations.extend(v);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hybrid::Architecture;

    fn bftpp(n3: u32) -> Scenario {
        Scenario {
            profile: CraProfile::preset(Architecture::Bftpp, 0.1),
            epochs: vec![2, 2, n3],
            policy: Policy::constant(3, &[-1.0]),
            initial_state: vec![0.1, 0.0, 2.8],
            level_set: Some(vec![0.5, 0.1]),
            cycles: 2,
            cycle_epochs: None,
            substeps: 10,
            adversary: Adversary::WorstCaseVertex,
        }
    }

    #[test]
    fn rk4_is_exact_on_quadratics_in_time() {
        // Constant input: D is cubic in t only through v_f, and v_l is linear.
        let sys = crate::acc::system();
        let x = rk4_step(&sys, &[0.0, 0.0, 3.0], &[0.0], 0.1);
        assert!((x[0] - 0.03).abs() < 1e-12);
        assert!((x[1]).abs() < 1e-12);
        assert!((x[2] - (3.0 + 0.5 * 0.3 * 0.01)).abs() < 1e-12);
    }

    #[test]
    fn worst_case_accelerates_follower() {
        let sys = crate::acc::system();
        assert_eq!(worst_case_input(&sys, sys.input_box(), &[0.0, 0.0, 3.0]), vec![1.0]);
    }

    #[test]
    fn bftpp_cycle_events_and_samples() {
        let sys = crate::acc::system();
        let tr = simulate(&sys, &bftpp(6)).unwrap();
        assert!(!tr.crossed);
        assert_eq!(tr.samples.len(), 1 + 2 * 10 * 10);
        assert!(tr.samples.windows(2).all(|w| w[1].t > w[0].t));
        let labels: Vec<&str> = tr.events.iter().map(|e| e.label.as_str()).collect();
        assert_eq!(
            labels,
            [CYBER_INTRUSION, "controller crash", "controller restored"].repeat(2)
        );
        assert!((tr.events[3].t - 1.0).abs() < 1e-9);
        assert_eq!(tr.samples[1].status, Location::Corrupted);
        assert_eq!(tr.samples[1].u, vec![1.0]);
        assert_eq!(tr.samples[50].u, vec![-1.0]);
        let csv = tr.to_csv(&sys);
        assert!(csv.starts_with("t,v_l,v_f,D,u,status,h\n"), "{}", &csv[..40]);
        assert_eq!(tr.events_csv().lines().next().unwrap(), "0,cyber intrusion");
    }

    #[test]
    fn crossing_stops_integration() {
        let sys = crate::acc::system();
        let mut s = bftpp(6);
        s.initial_state = vec![0.0, 0.0, 2.01];
        s.level_set = None;
        let tr = simulate(&sys, &s).unwrap();
        assert!(tr.crossed);
        assert_eq!(tr.samples.last().unwrap().status, Location::Unsafe);
        assert_eq!(tr.events.last().unwrap().label, SAFETY_CROSSED);
        assert!(tr.samples.last().unwrap().h < 0.0);
        assert!(tr.samples[..tr.samples.len() - 1].iter().all(|s| s.h >= 0.0));
    }

    #[test]
    fn simplex_uses_idle_cycle() {
        let sys = crate::acc::system();
        let s = Scenario {
            profile: CraProfile::preset(Architecture::Simplex, 0.1),
            epochs: vec![0],
            cycles: 2,
            ..bftpp(0)
        };
        let tr = simulate(&sys, &s).unwrap();
        assert_eq!(tr.samples.len(), 1 + 2 * IDLE_CYCLE_EPOCHS as usize * 10);
        assert!(tr.samples[1..].iter().all(|s| s.status == Location::SafetyController));
        let labels: Vec<&str> = tr.events.iter().map(|e| e.label.as_str()).collect();
        assert_eq!(
            labels,
            [
                CYBER_INTRUSION,
                "safety controller invoked",
                "main controller invoked",
                CYBER_INTRUSION,
                "safety controller invoked"
            ]
        );
    }

    #[test]
    fn sequence_adversary_is_clamped_and_cycled() {
        let sys = crate::acc::system();
        let mut s = bftpp(6);
        s.adversary = Adversary::Sequence {
            inputs: vec![vec![5.0], vec![-0.5]],
        };
        let tr = simulate(&sys, &s).unwrap();
        assert_eq!(tr.samples[1].u, vec![1.0]);
        assert_eq!(tr.samples[11].u, vec![-0.5]);
        assert_eq!(tr.samples[21].u, vec![1.0]);
    }

    #[test]
    fn zero_cycles_and_bad_start() {
        let sys = crate::acc::system();
        let mut s = bftpp(6);
        s.cycles = 0;
        let tr = simulate(&sys, &s).unwrap();
        assert_eq!(tr.samples.len(), 1);
        assert!(tr.events.is_empty());
        s.initial_state = vec![0.0, 0.0, 2.1];
        assert!(matches!(simulate(&sys, &s), Err(SimError::InitialState(_))));
    }

    #[test]
    fn short_cycle_is_rejected() {
        let sys = crate::acc::system();
        let mut s = bftpp(6);
        s.cycle_epochs = Some(5);
        assert!(matches!(simulate(&sys, &s), Err(SimError::CycleTooShort { cycle: 5, total: 10 })));
    }

    #[test]
    fn boundary_starts_are_deterministic_and_on_boundary() {
        let sys = crate::acc::system();
        let c = [0.8, 0.1];
        let a = boundary_starts(&sys, &c, 5, 7).unwrap();
        assert_eq!(a, boundary_starts(&sys, &c, 5, 7).unwrap());
        for x in &a {
            assert!(sys.level_set_region(&c).contains(x));
        }
    }

    #[test]
    fn full_braking_keeps_level_set() {
        let sys = crate::acc::system();
        let cfg = InvarianceConfig {
            trials: 20,
            ..InvarianceConfig::default()
        };
        let r = forward_invariance_check(&sys, &Policy::constant(3, &[-1.0]), &[0.8, 0.1], &cfg).unwrap();
        assert!(r.holds(), "{:?}", r.violations.first());
        let bad = forward_invariance_check(&sys, &Policy::constant(3, &[1.0]), &[0.8, 0.1], &cfg).unwrap();
        assert!(!bad.holds());
    }
}
