//! Control-affine polynomial systems `ẋ = f(x) + g(x) u` with a safety function
//! `h`, and the regions derived from them.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::certify::{CertifyError, Constraint, IntervalBox, Region};
use crate::polynomial::{lie_chain, relative_degree, GainCertificate, InputMatrix, PolyError, Polynomial, VectorField};

#[derive(Debug, Error)]
pub enum SystemError {
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Certify(#[from] CertifyError),
    #[error("{0}")]
    Invalid(String),
    #[error("malformed system file: {0}")]
    Parse(#[from] serde_json::Error),
}

/// A certified-relative-degree system with its Lie-derivative chain cached.
#[derive(Debug, Clone, PartialEq)]
pub struct CpsSystem {
    variables: Vec<String>,
    inputs: Vec<String>,
    f: VectorField,
    g: InputMatrix,
    h: Polynomial,
    state_box: IntervalBox,
    norm_ball: Option<f64>,
    input_box: IntervalBox,
    epoch_seconds: f64,
    r: usize,
    certificate: GainCertificate,
    /// `chain[i] = L_f^i h` for `i = 0..=r`.
    chain: Vec<Polynomial>,
    /// `L_g L_f^{r-1} h`, one entry per input.
    gain: Vec<Polynomial>,
}

pub struct SystemParts {
    pub variables: Vec<String>,
    pub inputs: Vec<String>,
    pub f: VectorField,
    pub g: InputMatrix,
    pub h: Polynomial,
    pub state_box: IntervalBox,
    pub norm_ball: Option<f64>,
    pub input_box: IntervalBox,
    pub epoch_seconds: f64,
}

impl CpsSystem {
    pub fn new(parts: SystemParts) -> Result<Self, SystemError> {
        let n = parts.f.dim();
        let invalid = |m: String| Err(SystemError::Invalid(m));
        if parts.variables.len() != n {
            return invalid(format!("{} variable names for a {n}-dimensional state", parts.variables.len()));
        }
        if parts.g.state_dim() != n || parts.g.input_dim() != parts.inputs.len() {
            return invalid(format!(
                "input matrix is {}x{}, expected {n}x{}",
                parts.g.state_dim(),
                parts.g.input_dim(),
                parts.inputs.len()
            ));
        }
        if parts.h.nvars() != n {
            return invalid(format!("safety function has {} variables, expected {n}", parts.h.nvars()));
        }
        if parts.state_box.dim() != n {
            return invalid(format!("state box has dimension {}, expected {n}", parts.state_box.dim()));
        }
        if parts.input_box.dim() != parts.inputs.len() {
            return invalid(format!(
                "input box has dimension {}, expected {}",
                parts.input_box.dim(),
                parts.inputs.len()
            ));
        }
        if let Some(d) = parts.norm_ball {
            if !(d.is_finite() && d > 0.0) {
                return invalid(format!("norm-ball radius squared must be positive, got {d}"));
            }
        }
        if !(parts.epoch_seconds.is_finite() && parts.epoch_seconds > 0.0) {
            return invalid(format!("epoch length must be positive, got {}", parts.epoch_seconds));
        }
        let (r, certificate) = relative_degree(&parts.h, &parts.f, &parts.g, &parts.state_box, n.max(1))?;
        let chain: Vec<Polynomial> = (0..=r)
            .map(|i| lie_chain(&parts.h, &parts.f, i))
            .collect::<Result<_, _>>()?;
        let gain = crate::polynomial::input_gain(&parts.h, &parts.f, &parts.g, r)?;
        Ok(Self {
            variables: parts.variables,
            inputs: parts.inputs,
            f: parts.f,
            g: parts.g,
            h: parts.h,
            state_box: parts.state_box,
            norm_ball: parts.norm_ball,
            input_box: parts.input_box,
            epoch_seconds: parts.epoch_seconds,
            r,
            certificate,
            chain,
            gain,
        })
    }

    pub fn dim(&self) -> usize {
        self.f.dim()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.len()
    }

    pub fn variables(&self) -> &[String] {
        &self.variables
    }

    pub fn inputs(&self) -> &[String] {
        &self.inputs
    }

    pub fn f(&self) -> &VectorField {
        &self.f
    }

    pub fn g(&self) -> &InputMatrix {
        &self.g
    }

    pub fn h(&self) -> &Polynomial {
        &self.h
    }

    pub fn state_box(&self) -> &IntervalBox {
        &self.state_box
    }

    pub fn norm_ball(&self) -> Option<f64> {
        self.norm_ball
    }

    pub fn input_box(&self) -> &IntervalBox {
        &self.input_box
    }

    pub fn epoch_seconds(&self) -> f64 {
        self.epoch_seconds
    }

    pub fn relative_degree(&self) -> usize {
        self.r
    }

    pub fn gain_certificate(&self) -> &GainCertificate {
        &self.certificate
    }

    /// `L_f^i h` for `i ≤ r`.
    pub fn lie(&self, i: usize) -> &Polynomial {
        &self.chain[i]
    }

    /// `L_f^r h`.
    pub fn lie_top(&self) -> &Polynomial {
        &self.chain[self.r]
    }

    /// `L_g L_f^{r-1} h`.
    pub fn gain(&self) -> &[Polynomial] {
        &self.gain
    }

    /// `ẋ = f(x) + g(x) u`.
    pub fn vector_field(&self, x: &[f64], u: &[f64], out: &mut [f64]) {
        self.f.evaluate_into(x, out);
        for (col, uj) in self.g.columns().iter().zip(u) {
            if *uj == 0.0 {
                continue;
            }
            for (o, p) in out.iter_mut().zip(col.entries()) {
                if !p.is_zero() {
                    *o += p.eval_unchecked(x) * uj;
                }
            }
        }
    }

    /// The state region `X`.
    pub fn state_region(&self) -> Region {
        let mut region = Region::unconstrained(self.state_box.clone());
        if let Some(d) = self.norm_ball {
            let n = self.dim();
            let mut ball = Polynomial::constant(n, d);
            for i in 0..n {
                let v = Polynomial::var(n, i).expect("index in range");
                ball = &ball - &(&v * &v);
            }
            region = region.with_constraint(Constraint::geq(ball));
        }
        region
    }

    /// `C = X ∩ {h ≥ 0}`.
    pub fn safe_region(&self) -> Region {
        self.state_region().with_constraint(Constraint::geq(self.h.clone()))
    }

    fn shifted(&self, i: usize, c: f64) -> Polynomial {
        &self.chain[i] - &Polynomial::constant(self.dim(), c)
    }

    /// `A = C ∩ ⋂_i {L_f^i h ≥ c_i}`.
    pub fn level_set_region(&self, c: &[f64]) -> Region {
        assert_eq!(c.len(), self.r, "one level per derivative order");
        c.iter()
            .enumerate()
            .fold(self.safe_region(), |reg, (i, &ci)| reg.with_constraint(Constraint::geq(self.shifted(i, ci))))
    }

    /// Closed cover of `C \ A`: one piece `C ∩ {L_f^i h ≤ c_i}` per order.
    ///
    /// The order-zero piece is omitted when `c_0 ≤ 0`, since `C` already
    /// forces `h ≥ 0` and the piece would only hold the null set `{h = 0}`.
    pub fn complement_pieces(&self, c: &[f64]) -> Vec<Region> {
        assert_eq!(c.len(), self.r, "one level per derivative order");
        c.iter()
            .enumerate()
            .filter(|&(i, &ci)| i > 0 || ci > 0.0)
            .map(|(i, &ci)| self.safe_region().with_constraint(Constraint::leq(self.shifted(i, ci))))
            .collect()
    }

    /// Smallest slack `L_f^i h(x) - c_i` over the level-set inequalities.
    pub fn level_set_slack(&self, x: &[f64], c: &[f64]) -> f64 {
        c.iter()
            .enumerate()
            .map(|(i, ci)| self.chain[i].eval_unchecked(x) - ci)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn with_epoch_seconds(mut self, delta: f64) -> Result<Self, SystemError> {
        if !(delta.is_finite() && delta > 0.0) {
            return Err(SystemError::Invalid(format!("epoch length must be positive, got {delta}")));
        }
        self.epoch_seconds = delta;
        Ok(self)
    }

    pub fn to_spec(&self) -> SystemSpecFile {
        SystemSpecFile {
            version: 1,
            variables: self.variables.clone(),
            inputs: self.inputs.clone(),
            f: self.f.entries().to_vec(),
            g: self.g.rows(),
            h: self.h.clone(),
            state_box: self.state_box.clone(),
            norm_ball: self.norm_ball,
            input_box: self.input_box.clone(),
            epoch_seconds: self.epoch_seconds,
        }
    }

    pub fn from_spec(spec: SystemSpecFile) -> Result<Self, SystemError> {
        if spec.version != 1 {
            return Err(SystemError::Invalid(format!("unsupported version {}", spec.version)));
        }
        let n = spec.variables.len();
        let conform = |p: Polynomial, what: &str| {
            p.conform(n)
                .map_err(|e| SystemError::Invalid(format!("{what}: {e}")))
        };
        let f = spec
            .f
            .into_iter()
            .enumerate()
            .map(|(i, p)| conform(p, &format!("f[{i}]")))
            .collect::<Result<Vec<_>, _>>()?;
        if f.len() != n {
            return Err(SystemError::Invalid(format!("f has {} entries, expected {n}", f.len())));
        }
        let rows = spec
            .g
            .into_iter()
            .enumerate()
            .map(|(i, row)| {
                row.into_iter()
                    .enumerate()
                    .map(|(j, p)| conform(p, &format!("g[{i}][{j}]")))
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        if rows.len() != n {
            return Err(SystemError::Invalid(format!("g has {} rows, expected {n}", rows.len())));
        }
        Self::new(SystemParts {
            variables: spec.variables,
            inputs: spec.inputs,
            f: VectorField::new(f)?,
            g: InputMatrix::from_rows(rows)?,
            h: conform(spec.h, "h")?,
            state_box: spec.state_box,
            norm_ball: spec.norm_ball,
            input_box: spec.input_box,
            epoch_seconds: spec.epoch_seconds,
        })
    }

    pub fn from_json(text: &str) -> Result<Self, SystemError> {
        Self::from_spec(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_spec()).expect("system spec serializes")
    }
}

/// On-disk form of a [`CpsSystem`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpecFile {
    pub version: u32,
    pub variables: Vec<String>,
    pub inputs: Vec<String>,
    pub f: Vec<Polynomial>,
    /// Row-major `n × m` input matrix.
    pub g: Vec<Vec<Polynomial>>,
    pub h: Polynomial,
    pub state_box: IntervalBox,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub norm_ball: Option<f64>,
    pub input_box: IntervalBox,
    pub epoch_seconds: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip_is_identity() {
        let sys = crate::acc::system();
        let text = sys.to_json();
        let back = CpsSystem::from_json(&text).unwrap();
        assert_eq!(back, sys);
        assert_eq!(back.to_json(), text);
    }

    #[test]
    fn unknown_fields_are_rejected_with_location() {
        let text = crate::acc::system().to_json().replacen("\"version\": 1", "\"version\": 1, \"bogus\": 2", 1);
        let err = CpsSystem::from_json(&text).unwrap_err().to_string();
        assert!(err.contains("bogus") && err.contains("line"), "{err}");
    }

    #[test]
    fn level_set_pieces_cover_complement() {
        let sys = crate::acc::system();
        let c = [0.8, 0.1];
        let a = sys.level_set_region(&c);
        let pieces = sys.complement_pieces(&c);
        for x in [[0.5, 0.2, 3.0], [0.0, 0.0, 2.5], [0.3, 0.2, 2.9], [1.0, 0.0, 2.0]] {
            let in_c = sys.safe_region().contains(&x);
            let in_a = a.contains(&x);
            let covered = pieces.iter().any(|p| p.contains(&x));
            assert_eq!(in_c && !in_a, in_c && covered && !in_a);
            if in_c && !in_a {
                assert!(covered);
            }
        }
        assert!((sys.level_set_slack(&[0.5, 0.2, 3.0], &c) - 0.2).abs() < 1e-12);
        assert_eq!(sys.complement_pieces(&[0.0, 0.1]).len(), 1);
    }
}
