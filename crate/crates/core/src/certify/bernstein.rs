//! Bernstein-coefficient range enclosures of polynomials over boxes.
//!
//! On a box, a polynomial written in the tensor Bernstein basis has coefficients
//! whose minimum and maximum enclose its range; the corner coefficients are the
//! exact corner values. Both the affine change of variables onto `[0, 1]^n` and
//! the power-to-Bernstein conversion act one axis at a time, so each cell costs
//! `O(N · Σ d_k)` for `N = Π (d_k + 1)` coefficients.

use crate::polynomial::Polynomial;

/// Relative allowance for floating-point rounding in the coefficient transforms.
const ROUNDING_GUARD: f64 = 1e-13;

/// A polynomial stored as a dense coefficient tensor in the power basis.
#[derive(Debug, Clone, PartialEq)]
pub struct DensePoly {
    degs: Vec<usize>,
    strides: Vec<usize>,
    coeffs: Vec<f64>,
}

impl DensePoly {
    pub fn new(p: &Polynomial) -> Self {
        let degs = (0..p.nvars()).map(|v| p.degree_in(v) as usize).collect();
        Self::with_degrees(p, degs)
    }

    /// Dense form with per-variable degrees raised to at least `degs`.
    pub fn with_degrees(p: &Polynomial, degs: Vec<usize>) -> Self {
        assert_eq!(degs.len(), p.nvars());
        let degs: Vec<usize> = degs
            .iter()
            .enumerate()
            .map(|(v, &d)| d.max(p.degree_in(v) as usize))
            .collect();
        let mut strides = vec![1; degs.len()];
        for k in (0..degs.len().saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * (degs[k + 1] + 1);
        }
        let size = degs.iter().map(|d| d + 1).product();
        let mut coeffs = vec![0.0; size];
        for (c, e) in p.terms() {
            let idx: usize = e.iter().zip(&strides).map(|(&ek, &s)| ek as usize * s).sum();
            coeffs[idx] += c;
        }
        Self {
            degs,
            strides,
            coeffs,
        }
    }

    pub fn degrees(&self) -> &[usize] {
        &self.degs
    }

    pub fn dim(&self) -> usize {
        self.degs.len()
    }

    pub fn is_constant(&self) -> bool {
        self.degs.iter().all(|&d| d == 0)
    }

    pub fn depends_on(&self, var: usize) -> bool {
        self.degs[var] > 0
    }

    /// Bernstein coefficients on the box `[lo, hi]`, laid out like the power
    /// coefficients.
    pub fn bernstein(&self, lo: &[f64], hi: &[f64]) -> Vec<f64> {
        let mut c = self.coeffs.clone();
        let mut fiber = Vec::new();
        let mut out = Vec::new();
        for axis in 0..self.degs.len() {
            let d = self.degs[axis];
            if d == 0 {
                continue;
            }
            let m = axis_matrix(d, lo[axis], hi[axis] - lo[axis]);
            let stride = self.strides[axis];
            let block = stride * (d + 1);
            fiber.resize(d + 1, 0.0);
            out.resize(d + 1, 0.0);
            for outer in (0..c.len()).step_by(block) {
                for inner in 0..stride {
                    let base = outer + inner;
                    for j in 0..=d {
                        fiber[j] = c[base + j * stride];
                    }
                    for i in 0..=d {
                        out[i] = (0..=d).map(|j| m[i * (d + 1) + j] * fiber[j]).sum();
                    }
                    for i in 0..=d {
                        c[base + i * stride] = out[i];
                    }
                }
            }
        }
        c
    }
}

/// `M = B · A` where `A` maps power coefficients on `[a, a + w]` to power
/// coefficients on `[0, 1]` and `B` maps those to Bernstein coefficients.
fn axis_matrix(d: usize, a: f64, w: f64) -> Vec<f64> {
    let n = d + 1;
    let binom = |n: usize, k: usize| -> f64 {
        (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
    };
    // A[k][j] = C(j,k) a^{j-k} w^k
    let mut am = vec![0.0; n * n];
    for k in 0..n {
        for j in k..n {
            am[k * n + j] = binom(j, k) * a.powi((j - k) as i32) * w.powi(k as i32);
        }
    }
    // B[i][k] = C(i,k) / C(d,k)
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..=i {
            let b = binom(i, k) / binom(d, k);
            for j in 0..n {
                m[i * n + j] += b * am[k * n + j];
            }
        }
    }
    m
}

/// Min and max of a Bernstein coefficient array, widened by the rounding guard.
pub fn coefficient_range(coeffs: &[f64]) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut scale: f64 = 1.0;
    for &b in coeffs {
        lo = lo.min(b);
        hi = hi.max(b);
        scale = scale.max(b.abs());
    }
    let guard = ROUNDING_GUARD * scale;
    (lo - guard, hi + guard)
}

/// Certified enclosure `[lower, upper]` of `p` over the box `[lo, hi]`.
pub fn range_enclosure(p: &Polynomial, lo: &[f64], hi: &[f64]) -> (f64, f64) {
    coefficient_range(&DensePoly::new(p).bernstein(lo, hi))
}
