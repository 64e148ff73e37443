//! Adaptive cruise control case study.
//!
//! State `(v_l, v_f, D)`: leader speed, follower speed, gap. The leader
//! accelerates at 0.3, the follower (unit mass) feels resistance
//! `v_f + 0.5 v_f²` and is driven by `u ∈ [-1, 1]`. Safety is `D ≥ 2`, and
//! states are confined to `‖x‖² ≤ 10`.

use crate::certify::{CertifyConfig, CertifyError, IntervalBox};
use crate::design::{level_maxima, SweepConfig};
use crate::hybrid::{Architecture, CraProfile};
use crate::polynomial::{InputMatrix, Polynomial, VectorField};
use crate::system::{CpsSystem, SystemParts};

pub const LEADER_ACCEL: f64 = 0.3;
pub const MIN_GAP: f64 = 2.0;
pub const NORM_BALL: f64 = 10.0;
pub const EPOCH_SECONDS: f64 = 0.1;
/// Nominal start: both vehicles at rest, 3 m apart.
pub const START: [f64; 3] = [0.0, 0.0, 3.0];

fn build(speed_lo: f64) -> CpsSystem {
    let p = |terms: &[(f64, [u32; 3])]| Polynomial::from_terms(3, terms.iter().map(|(c, e)| (*c, e.to_vec()))).unwrap();
    let f = VectorField::new(vec![
        p(&[(LEADER_ACCEL, [0, 0, 0])]),
        p(&[(-1.0, [0, 1, 0]), (-0.5, [0, 2, 0])]),
        p(&[(1.0, [1, 0, 0]), (-1.0, [0, 1, 0])]),
    ])
    .unwrap();
    let g = InputMatrix::from_rows(vec![
        vec![Polynomial::zero(3)],
        vec![Polynomial::constant(3, 1.0)],
        vec![Polynomial::zero(3)],
    ])
    .unwrap();
    let h = p(&[(1.0, [0, 0, 1]), (-MIN_GAP, [0, 0, 0])]);
    let r = NORM_BALL.sqrt();
    CpsSystem::new(SystemParts {
        variables: vec!["v_l".into(), "v_f".into(), "D".into()],
        inputs: vec!["u".into()],
        f,
        g,
        h,
        state_box: IntervalBox::new(vec![speed_lo, speed_lo, -r], vec![r, r, r]).unwrap(),
        norm_ball: Some(NORM_BALL),
        input_box: IntervalBox::new(vec![-1.0], vec![1.0]).unwrap(),
        epoch_seconds: EPOCH_SECONDS,
    })
    .expect("bundled system is well formed")
}

/// The bundled system over the full norm ball.
pub fn system() -> CpsSystem {
    build(-NORM_BALL.sqrt())
}

/// The same dynamics restricted to nonnegative speeds.
///
/// On the full ball the resistance term lets `L_f² h` drop to -0.2 with no
/// input, which rules out any architecture whose cycle ends with the
/// controller offline. With `v_l, v_f ≥ 0` the drift term is at least 0.3.
pub fn forward_system() -> CpsSystem {
    build(0.0)
}

/// A state in the level set `{D - 2 ≥ c_0, v_l - v_f ≥ c_1}` near the nominal
/// start `(0, 0, 3)`: the leader speed and the gap are raised just enough.
pub fn initial_state(c: &[f64]) -> Vec<f64> {
    let (c0, c1) = (c[0], c[1]);
    let (mut vl, vf, mut d) = (0.0, 0.0, 3.0);
    if vl - vf < c1 {
        vl = vf + c1;
    }
    if d - MIN_GAP < c0 {
        d = MIN_GAP + c0;
    }
    vec![vl, vf, d]
}

/// Case-study timings: every segment but the last is pinned to the exposure
/// used in the evaluation, and the last one is left to the sweep.
pub fn case_study_profile(arch: Architecture) -> CraProfile {
    let pins: &[(&str, u32)] = match arch {
        Architecture::Bftpp | Architecture::Simplex => &[],
        Architecture::Yolo | Architecture::DualRedundant => &[("N_4", 5)],
        Architecture::ProactiveRestart => &[("N_6", 3), ("N_7", 1)],
        Architecture::ReactiveRestart => &[("N_9", 3), ("N_10", 1)],
    };
    let pins: Vec<(String, u32)> = pins.iter().map(|(l, v)| (l.to_string(), *v)).collect();
    CraProfile::new(arch, EPOCH_SECONDS, &pins, &[]).expect("case-study pins are valid")
}

/// Case-study system per architecture: the forward-speed variant where the
/// cycle ends offline, the full ball otherwise.
pub fn case_study_system(arch: Architecture) -> CpsSystem {
    match arch {
        Architecture::Yolo | Architecture::DualRedundant => forward_system(),
        _ => system(),
    }
}

/// Level grid with `c_1` held at zero, so that [`START`] lies in every
/// candidate level set with `c_0 ≤ 1`.
pub fn case_study_sweep(system: &CpsSystem, config: &CertifyConfig) -> Result<SweepConfig, CertifyError> {
    let m = level_maxima(system, config)?;
    Ok(SweepConfig {
        c_max: Some(vec![m[0], 0.0]),
        c_step: Some(vec![m[0] / 20.0, 1.0]),
        ..SweepConfig::default()
    }
    .with_certify(*config))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn evaluation_examples() {
        let sys = system();
        assert_eq!(sys.h().evaluate(&[0.0, 0.0, 3.0]).unwrap(), 1.0);
        assert!((sys.lie(1).evaluate(&[0.5, 0.2, 3.0]).unwrap() - 0.3).abs() < 1e-15);
        let fr = Polynomial::from_terms(3, [(1.0, vec![0, 1, 0]), (0.5, vec![0, 2, 0])]).unwrap();
        assert_eq!(fr.evaluate(&[0.0, -1.0, 2.5]).unwrap(), -0.5);
    }

    #[test]
    fn relative_degree_two() {
        assert_eq!(system().relative_degree(), 2);
        assert_eq!(system().gain(), &[Polynomial::constant(3, -1.0)]);
        assert_eq!(forward_system().relative_degree(), 2);
    }

    #[test]
    fn initial_state_is_in_level_set() {
        let sys = system();
        for c in [[0.0, 0.0], [0.8, 0.1], [1.0, 0.4]] {
            let x = initial_state(&c);
            assert!(sys.level_set_region(&c).contains(&x), "{c:?} -> {x:?}");
        }
        assert_eq!(initial_state(&[0.5, 0.0]), vec![0.0, 0.0, 3.0]);
    }
}
