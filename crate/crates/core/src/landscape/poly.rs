use serde::{Deserialize, Serialize};

/// Dense polynomial, `coeffs[k]` multiplies `x^k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polynomial {
    pub coeffs: Vec<f64>,
}

impl Polynomial {
    pub fn new(coeffs: Vec<f64>) -> Self {
        Polynomial { coeffs }
    }

    /// Antiderivative (zero constant term) of `scale * prod (x - r)`.
    ///
    /// The critical points of the result are exactly `roots`, and with
    /// `scale > 0` and an odd root count the outermost roots are minima.
    pub fn from_gradient_roots(roots: &[f64], scale: f64) -> Self {
        let mut grad = vec![scale];
        for &r in roots {
            let mut next = vec![0.0; grad.len() + 1];
            for (k, &c) in grad.iter().enumerate() {
                next[k + 1] += c;
                next[k] -= r * c;
            }
            grad = next;
        }
        Polynomial::new(grad).antiderivative()
    }

    pub fn derivative(&self) -> Polynomial {
        Polynomial::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, &c)| k as f64 * c)
                .collect(),
        )
    }

    pub fn antiderivative(&self) -> Polynomial {
        let mut out = vec![0.0];
        out.extend(self.coeffs.iter().enumerate().map(|(k, &c)| c / (k + 1) as f64));
        Polynomial::new(out)
    }

    /// Value and first two derivatives by a single Horner pass.
    #[inline]
    pub fn eval3(&self, x: f64) -> (f64, f64, f64) {
        let (mut p, mut d, mut dd) = (0.0, 0.0, 0.0);
        for &c in self.coeffs.iter().rev() {
            dd = dd * x + 2.0 * d;
            d = d * x + p;
            p = p * x + c;
        }
        (p, d, dd)
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    #[inline]
    pub fn eval_derivative(&self, x: f64) -> f64 {
        let (mut p, mut d) = (0.0, 0.0);
        for &c in self.coeffs.iter().rev() {
            d = d * x + p;
            p = p * x + c;
        }
        d
    }
}
