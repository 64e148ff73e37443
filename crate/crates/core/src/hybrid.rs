//! Controller status automaton, architecture profiles and attack-cycle runs.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::certify::{IntervalBox, Region};
use crate::system::CpsSystem;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HybridError {
    #[error("unknown architecture {0:?}")]
    UnknownArchitecture(String),
    #[error("{label} is not a timing parameter of {arch}")]
    UnknownParameter { label: String, arch: Architecture },
    #[error("{label} is fixed for {arch} and cannot be changed")]
    FixedParameter { label: String, arch: Architecture },
    #[error("invalid range for {label}: {lo}..{hi}")]
    InvalidRange { label: String, lo: u32, hi: u32 },
    #[error("expected {expected} durations, got {got}")]
    DurationCount { expected: usize, got: usize },
    #[error("cycle of {span} s is shorter than the {total} s of the segments")]
    NegativeSlack { span: f64, total: f64 },
    #[error("epoch length must be positive, got {0}")]
    EpochSeconds(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Location {
    Normal,
    Corrupted,
    Restart,
    Restoration,
    SafetyController,
    Switching,
    Unsafe,
}

impl Location {
    /// A controller is issuing inputs, compromised or not.
    pub fn online(self) -> bool {
        !matches!(self, Location::Restart | Location::Switching | Location::Restoration | Location::Unsafe)
    }

    /// The designed policy is in charge.
    pub fn nominal(self) -> bool {
        matches!(self, Location::Normal | Location::SafetyController)
    }

    /// The adversary chooses the input.
    pub fn adversarial(self) -> bool {
        matches!(self, Location::Corrupted | Location::Restoration)
    }

    /// The input is forced to zero.
    pub fn silent(self) -> bool {
        matches!(self, Location::Restart | Location::Switching)
    }

    pub fn name(self) -> &'static str {
        match self {
            Location::Normal => "normal",
            Location::Corrupted => "corrupted",
            Location::Restart => "restart",
            Location::Restoration => "restoration",
            Location::SafetyController => "sc",
            Location::Switching => "switching",
            Location::Unsafe => "unsafe",
        }
    }
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    Bftpp,
    Yolo,
    DualRedundant,
    ProactiveRestart,
    ReactiveRestart,
    Simplex,
}

impl Architecture {
    pub const ALL: [Architecture; 6] = [
        Architecture::Bftpp,
        Architecture::Yolo,
        Architecture::DualRedundant,
        Architecture::ProactiveRestart,
        Architecture::ReactiveRestart,
        Architecture::Simplex,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Architecture::Bftpp => "bftpp",
            Architecture::Yolo => "yolo",
            Architecture::DualRedundant => "dual",
            Architecture::ProactiveRestart => "proactive",
            Architecture::ReactiveRestart => "reactive",
            Architecture::Simplex => "simplex",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Architecture::Bftpp => "BFT++",
            Architecture::Yolo => "YOLO",
            Architecture::DualRedundant => "Dual redundant",
            Architecture::ProactiveRestart => "Proactive restart",
            Architecture::ReactiveRestart => "Reactive restart",
            Architecture::Simplex => "Simplex",
        }
    }

    pub fn sequence(self) -> Vec<Location> {
        use Location::*;
        match self {
            Architecture::Bftpp => vec![Corrupted, Restoration, Normal],
            Architecture::Yolo => vec![Corrupted, Restart],
            Architecture::DualRedundant => vec![Corrupted, Switching],
            Architecture::ProactiveRestart => vec![Corrupted, Restart, SafetyController],
            Architecture::ReactiveRestart => vec![Corrupted, Restart, Normal],
            Architecture::Simplex => vec![SafetyController],
        }
    }

    /// Epoch-count labels `N_i` of the segments, in sequence order.
    pub fn parameter_labels(self) -> Vec<&'static str> {
        match self {
            Architecture::Bftpp => vec!["N_1", "N_2", "N_3"],
            Architecture::Yolo | Architecture::DualRedundant => vec!["N_4", "N_5"],
            Architecture::ProactiveRestart => vec!["N_6", "N_7", "N_8"],
            Architecture::ReactiveRestart => vec!["N_9", "N_10", "N_11"],
            Architecture::Simplex => vec![],
        }
    }

    /// Parameters measured from the platform; only the ones marked `true`
    /// may be overridden.
    fn known(self) -> Vec<(usize, u32, bool)> {
        match self {
            Architecture::Bftpp => vec![(0, 2, false), (1, 2, false)],
            Architecture::ProactiveRestart => vec![(1, 1, true)],
            _ => vec![],
        }
    }

    /// Number of design parameters: unknown timings plus the policy.
    pub fn design_freedom(self) -> usize {
        let k = self.sequence().len();
        let timings = if self == Architecture::Simplex { 0 } else { k - self.known().len() };
        let policy = usize::from(self.sequence().last().is_some_and(|l| l.nominal()));
        timings + policy
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.title())
    }
}

impl FromStr for Architecture {
    type Err = HybridError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_lowercase();
        Ok(match key.as_str() {
            "bftpp" | "bft" => Architecture::Bftpp,
            "yolo" => Architecture::Yolo,
            "dual" | "dualredundant" => Architecture::DualRedundant,
            "proactive" | "proactiverestart" => Architecture::ProactiveRestart,
            "reactive" | "reactiverestart" => Architecture::ReactiveRestart,
            "simplex" | "s3a" => Architecture::Simplex,
            _ => return Err(HybridError::UnknownArchitecture(s.to_string())),
        })
    }
}

/// Default epoch range for timings left to the design.
pub const DEFAULT_RANGE: (u32, u32) = (1, 40);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CraProfile {
    pub architecture: Architecture,
    pub epoch_seconds: f64,
    pub sequence: Vec<Location>,
    /// Fixed epoch counts, keyed by 0-based segment index.
    pub known_epochs: BTreeMap<usize, u32>,
    /// Inclusive epoch ranges for the remaining segments.
    pub unknown_timings: BTreeMap<usize, (u32, u32)>,
}

impl CraProfile {
    /// Applies `N_i = v` overrides (pinning a design parameter to one value)
    /// and `N_i = lo..hi` range overrides to the architecture defaults.
    pub fn new(
        architecture: Architecture,
        epoch_seconds: f64,
        overrides: &[(String, u32)],
        ranges: &[(String, u32, u32)],
    ) -> Result<Self, HybridError> {
        if !(epoch_seconds.is_finite() && epoch_seconds > 0.0) {
            return Err(HybridError::EpochSeconds(epoch_seconds));
        }
        let sequence = architecture.sequence();
        let labels = architecture.parameter_labels();
        let mut known_epochs = BTreeMap::new();
        let mut unknown_timings = BTreeMap::new();
        if architecture == Architecture::Simplex {
            known_epochs.insert(0, 0);
        } else {
            for j in 0..sequence.len() {
                unknown_timings.insert(j, DEFAULT_RANGE);
            }
            for (j, n, _) in architecture.known() {
                unknown_timings.remove(&j);
                known_epochs.insert(j, n);
            }
        }
        let index = |label: &str| {
            let norm = normalize_label(label);
            labels
                .iter()
                .position(|l| *l == norm)
                .ok_or_else(|| HybridError::UnknownParameter {
                    label: label.to_string(),
                    arch: architecture,
                })
        };
        let fixed = |j: usize| architecture.known().iter().any(|(i, _, overridable)| *i == j && !overridable);
        for (label, v) in overrides {
            let j = index(label)?;
            if fixed(j) {
                return Err(HybridError::FixedParameter {
                    label: label.clone(),
                    arch: architecture,
                });
            }
            if let Some(n) = known_epochs.get_mut(&j) {
                *n = *v;
            } else {
                unknown_timings.insert(j, (*v, *v));
            }
        }
        for (label, lo, hi) in ranges {
            let j = index(label)?;
            if known_epochs.contains_key(&j) {
                return Err(HybridError::FixedParameter {
                    label: label.clone(),
                    arch: architecture,
                });
            }
            if lo > hi {
                return Err(HybridError::InvalidRange {
                    label: label.clone(),
                    lo: *lo,
                    hi: *hi,
                });
            }
            unknown_timings.insert(j, (*lo, *hi));
        }
        Ok(Self {
            architecture,
            epoch_seconds,
            sequence,
            known_epochs,
            unknown_timings,
        })
    }

    pub fn preset(architecture: Architecture, epoch_seconds: f64) -> Self {
        Self::new(architecture, epoch_seconds, &[], &[]).expect("presets are valid")
    }

    pub fn k(&self) -> usize {
        self.sequence.len()
    }

    pub fn final_location(&self) -> Location {
        self.sequence[self.k() - 1]
    }

    pub fn seconds(&self, epochs: u32) -> f64 {
        epochs as f64 * self.epoch_seconds
    }

    pub fn to_seconds(&self, epochs: &[u32]) -> Vec<f64> {
        epochs.iter().map(|&n| self.seconds(n)).collect()
    }
}

fn normalize_label(label: &str) -> String {
    let digits: String = label.chars().filter(|c| c.is_ascii_digit()).collect();
    format!("N_{digits}")
}

/// Admissible inputs in `location`.
pub fn input_invariant(system: &CpsSystem, location: Location) -> IntervalBox {
    if location.silent() {
        IntervalBox::point(vec![0.0; system.input_dim()])
    } else {
        system.input_box().clone()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub from: Location,
    pub to: Location,
    pub label: String,
}

pub const SAFETY_CROSSED: &str = "safety region crossed";
pub const CYBER_INTRUSION: &str = "cyber intrusion";

/// The catalogue of status transitions with the architectures that use them.
pub fn catalogue() -> Vec<(Location, Location, &'static str, &'static [Architecture])> {
    use Architecture::*;
    use Location::*;
    const ALL: &[Architecture] = &Architecture::ALL;
    vec![
        (Normal, Corrupted, CYBER_INTRUSION, ALL),
        (Corrupted, Restoration, "controller crash", &[Bftpp]),
        (Restoration, Normal, "controller restored", &[Bftpp]),
        (Corrupted, Restart, "controller crash", &[Yolo, ReactiveRestart]),
        (Corrupted, Restart, "restart timer", &[Yolo, ProactiveRestart]),
        (Normal, Restart, "restart timer", &[Yolo, ProactiveRestart]),
        (Restart, Normal, "controller restarted", &[Yolo, ReactiveRestart]),
        (Restart, SafetyController, "controller restarted", &[ProactiveRestart]),
        (SafetyController, Normal, "SEI ended", &[ProactiveRestart]),
        (Normal, Switching, "switching timer", &[DualRedundant]),
        (Corrupted, Switching, "switching timer", &[DualRedundant]),
        (Switching, Normal, "switching completed", &[DualRedundant]),
        (Corrupted, SafetyController, "safety controller invoked", &[Simplex]),
        (SafetyController, Normal, "main controller invoked", &[Simplex]),
    ]
}

/// Label of the first catalogue edge `from → to` valid for `arch`.
pub fn transition_label(arch: Architecture, from: Location, to: Location) -> Option<&'static str> {
    if to == Location::Unsafe && from != Location::Unsafe {
        return Some(SAFETY_CROSSED);
    }
    catalogue()
        .into_iter()
        .find(|(f, t, _, archs)| *f == from && *t == to && archs.contains(&arch))
        .map(|(_, _, l, _)| l)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HybridModel {
    pub architecture: Architecture,
    pub locations: Vec<Location>,
    pub transitions: Vec<Transition>,
    pub input_invariant: BTreeMap<Location, IntervalBox>,
    /// `X` for every location except `Unsafe`.
    pub state_invariant: BTreeMap<Location, Region>,
}

impl HybridModel {
    pub fn out_degree(&self, l: Location) -> usize {
        self.transitions.iter().filter(|t| t.from == l).count()
    }

    pub fn in_degree(&self, l: Location) -> usize {
        self.transitions.iter().filter(|t| t.to == l).count()
    }
}

pub fn transition_system(system: &CpsSystem, profile: &CraProfile) -> HybridModel {
    let arch = profile.architecture;
    let mut transitions: Vec<Transition> = catalogue()
        .into_iter()
        .filter(|(_, _, _, archs)| archs.contains(&arch))
        .map(|(from, to, label, _)| Transition {
            from,
            to,
            label: label.to_string(),
        })
        .collect();
    let mut locations: Vec<Location> = transitions.iter().flat_map(|t| [t.from, t.to]).collect();
    locations.sort();
    locations.dedup();
    for &l in &locations {
        transitions.push(Transition {
            from: l,
            to: Location::Unsafe,
            label: SAFETY_CROSSED.to_string(),
        });
    }
    locations.push(Location::Unsafe);
    let input_invariant = locations
        .iter()
        .filter(|l| **l != Location::Unsafe)
        .map(|&l| (l, input_invariant(system, l)))
        .collect();
    let state_invariant = locations
        .iter()
        .filter(|l| **l != Location::Unsafe)
        .map(|&l| (l, system.state_region()))
        .collect();
    HybridModel {
        architecture: arch,
        locations,
        transitions,
        input_invariant,
        state_invariant,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackCycle {
    pub t1: f64,
    pub t2: f64,
    pub durations: Vec<f64>,
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub location: Location,
    pub start: f64,
    pub end: f64,
}

/// Segments of one attack cycle; the last one absorbs the slack.
pub fn attack_cycle_run(profile: &CraProfile, timings: &[f64], t1: f64, t2: f64) -> Result<(AttackCycle, Vec<Segment>), HybridError> {
    if timings.len() != profile.k() {
        return Err(HybridError::DurationCount {
            expected: profile.k(),
            got: timings.len(),
        });
    }
    let total: f64 = timings.iter().sum();
    let slack = (t2 - t1) - total;
    if slack < -1e-12 * (1.0 + total.abs()) {
        return Err(HybridError::NegativeSlack { span: t2 - t1, total });
    }
    let xi = crate::timing::partial_sums(timings, t1).map_err(|_| HybridError::NegativeSlack { span: t2 - t1, total })?;
    let mut segments: Vec<Segment> = profile
        .sequence
        .iter()
        .enumerate()
        .map(|(j, &location)| Segment {
            location,
            start: xi[j],
            end: xi[j + 1],
        })
        .collect();
    if let Some(last) = segments.last_mut() {
        last.end = t2;
    }
    Ok((
        AttackCycle {
            t1,
            t2,
            durations: timings.to_vec(),
            slack: slack.max(0.0),
        },
        segments,
    ))
}

/// `(online, nominal)` fractions of a cycle, counted in epochs.
///
/// A zero-length cycle is treated as spent entirely in the final location.
pub fn availability(profile: &CraProfile, epochs: &[u32]) -> (f64, f64) {
    let total: u32 = epochs.iter().sum();
    if total == 0 {
        let l = profile.final_location();
        return (f64::from(u8::from(l.online())), f64::from(u8::from(l.nominal())));
    }
    let count = |pred: fn(Location) -> bool| -> u32 {
        profile
            .sequence
            .iter()
            .zip(epochs)
            .filter(|(l, _)| pred(**l))
            .map(|(_, n)| *n)
            .sum()
    };
    let on = count(Location::online);
    let nominal = count(Location::nominal);
    (on as f64 / total as f64, nominal as f64 / total as f64)
}
