use super::{InputMatrix, PolyError, Polynomial, VectorField};
use crate::certify::bernstein::range_enclosure;
use crate::certify::IntervalBox;

/// `L_F p = Σ_i ∂p/∂x_i · F_i`.
pub fn lie_derivative(p: &Polynomial, field: &VectorField) -> Result<Polynomial, PolyError> {
    if p.nvars() != field.dim() {
        return Err(PolyError::DimensionMismatch {
            expected: field.dim(),
            got: p.nvars(),
        });
    }
    let mut acc = Polynomial::zero(p.nvars());
    for (i, fi) in field.entries().iter().enumerate() {
        if fi.is_zero() || !p.depends_on(i) {
            continue;
        }
        acc = acc.try_add(&p.partial_derivative(i)?.try_mul(fi)?)?;
    }
    Ok(acc)
}

/// `L_f^order h`, with `L_f^0 h = h`.
pub fn lie_chain(h: &Polynomial, f: &VectorField, order: usize) -> Result<Polynomial, PolyError> {
    (0..order).try_fold(h.clone(), |acc, _| lie_derivative(&acc, f))
}

/// The row `L_g L_f^{r-1} h`, one polynomial per input channel.
pub fn input_gain(
    h: &Polynomial,
    f: &VectorField,
    g: &InputMatrix,
    r: usize,
) -> Result<Vec<Polynomial>, PolyError> {
    assert!(r >= 1, "relative degree order starts at 1");
    if g.state_dim() != f.dim() {
        return Err(PolyError::DimensionMismatch {
            expected: f.dim(),
            got: g.state_dim(),
        });
    }
    let base = lie_chain(h, f, r - 1)?;
    g.columns().iter().map(|col| lie_derivative(&base, col)).collect()
}

/// Certified range of the input gain on the domain for the channel that proves
/// the relative degree.
#[derive(Debug, Clone, PartialEq)]
pub struct GainCertificate {
    pub channel: usize,
    pub lower: f64,
    pub upper: f64,
}

/// Smallest `r` with `L_g L_f^{i} h ≡ 0` for `i < r - 1` and `L_g L_f^{r-1} h`
/// certified nonvanishing on `domain`.
pub fn relative_degree(
    h: &Polynomial,
    f: &VectorField,
    g: &InputMatrix,
    domain: &IntervalBox,
    max_order: usize,
) -> Result<(usize, GainCertificate), PolyError> {
    if domain.dim() != h.nvars() {
        return Err(PolyError::DimensionMismatch {
            expected: h.nvars(),
            got: domain.dim(),
        });
    }
    let mut chain = h.clone();
    for r in 1..=max_order {
        let gains: Vec<Polynomial> = g
            .columns()
            .iter()
            .map(|col| lie_derivative(&chain, col))
            .collect::<Result<_, _>>()?;
        if gains.iter().any(|p| !p.is_zero()) {
            let mut widest = None;
            for (channel, gain) in gains.iter().enumerate() {
                if gain.is_zero() {
                    continue;
                }
                let (lower, upper) = range_enclosure(gain, domain.lo(), domain.hi());
                if lower > 0.0 || upper < 0.0 {
                    return Ok((r, GainCertificate { channel, lower, upper }));
                }
                widest.get_or_insert((lower, upper));
            }
            let (lower, upper) = widest.expect("some channel is nonzero");
            return Err(PolyError::MixedSign { order: r, lower, upper });
        }
        chain = lie_derivative(&chain, f)?;
    }
    Err(PolyError::MaxOrderExceeded(max_order))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn acc() -> (Polynomial, VectorField, InputMatrix) {
        let sys = crate::acc::system();
        (sys.h().clone(), sys.f().clone(), sys.g().clone())
    }

    #[test]
    fn acc_lie_derivatives() {
        let (h, f, g) = acc();
        let lfh = lie_derivative(&h, &f).unwrap();
        let expected = Polynomial::from_terms(3, [(1.0, vec![1, 0, 0]), (-1.0, vec![0, 1, 0])]).unwrap();
        assert_eq!(lfh, expected);
        let lf2h = lie_derivative(&lfh, &f).unwrap();
        let expected = Polynomial::from_terms(
            3,
            [(0.3, vec![0, 0, 0]), (1.0, vec![0, 1, 0]), (0.5, vec![0, 2, 0])],
        )
        .unwrap();
        assert_eq!(lf2h, expected);
        assert!(lie_derivative(&h, &g.columns()[0]).unwrap().is_zero());
        assert_eq!(lie_chain(&h, &f, 0).unwrap(), h);
        assert_eq!(lie_chain(&h, &f, 2).unwrap(), lf2h);
    }

    #[test]
    fn acc_input_gain() {
        let (h, f, g) = acc();
        assert_eq!(input_gain(&h, &f, &g, 2).unwrap(), vec![Polynomial::constant(3, -1.0)]);
        assert!(input_gain(&h, &f, &g, 1).unwrap()[0].is_zero());
        let zero_g = InputMatrix::from_columns(vec![VectorField::zero(3)]).unwrap();
        assert!(input_gain(&h, &f, &zero_g, 2).unwrap()[0].is_zero());
    }

    #[test]
    fn relative_degree_cases() {
        let sys = crate::acc::system();
        let (r, cert) =
            relative_degree(sys.h(), sys.f(), sys.g(), sys.state_box(), 6).unwrap();
        assert_eq!(r, 2);
        assert!((cert.lower + 1.0).abs() < 1e-12 && (cert.upper + 1.0).abs() < 1e-12);
        assert!(cert.lower <= -1.0 && cert.upper >= -1.0);

        let x = Polynomial::var(1, 0).unwrap();
        let f = VectorField::zero(1);
        let g = InputMatrix::from_columns(vec![VectorField::new(vec![Polynomial::constant(1, 1.0)]).unwrap()])
            .unwrap();
        let dom = IntervalBox::new(vec![-1.0], vec![1.0]).unwrap();
        assert_eq!(relative_degree(&x, &f, &g, &dom, 4).unwrap().0, 1);

        let g0 = InputMatrix::from_columns(vec![VectorField::zero(1)]).unwrap();
        assert_eq!(
            relative_degree(&x, &f, &g0, &dom, 4),
            Err(PolyError::MaxOrderExceeded(4))
        );

        // gain x changes sign on [-1, 1]
        let gx = InputMatrix::from_columns(vec![VectorField::new(vec![x.clone()]).unwrap()]).unwrap();
        assert!(matches!(
            relative_degree(&x, &f, &gx, &dom, 4),
            Err(PolyError::MixedSign { order: 1, .. })
        ));
    }
}
