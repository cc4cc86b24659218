//! Trigonometric polynomials on the unit torus `𝕋^d`.
//!
//! Profiles, test functions and heat-equation solutions share the mode form
//! `f(u) = c + Σ a_k cos(2π k·u + θ_k)` with integer wave vectors `k`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub k: Vec<i64>,
    pub amp: f64,
    #[serde(default)]
    pub phase: f64,
}

impl Mode {
    pub fn new(k: Vec<i64>, amp: f64, phase: f64) -> Self {
        Mode { k, amp, phase }
    }

    pub fn is_constant(&self) -> bool {
        self.k.iter().all(|&k| k == 0)
    }

    fn argument(&self, u: &[f64]) -> f64 {
        let dot: f64 = self.k.iter().zip(u).map(|(&k, &x)| k as f64 * x).sum();
        2.0 * PI * dot + self.phase
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrigPolynomial {
    pub dim: usize,
    #[serde(default)]
    pub offset: f64,
    #[serde(default)]
    pub modes: Vec<Mode>,
}

impl TrigPolynomial {
    pub fn new(dim: usize, offset: f64, modes: Vec<Mode>) -> Result<Self> {
        let p = TrigPolynomial { dim, offset, modes };
        p.validate()?;
        Ok(p)
    }

    pub fn zero(dim: usize) -> Self {
        TrigPolynomial {
            dim,
            offset: 0.0,
            modes: vec![],
        }
    }

    /// Single cosine `amp · cos(2π k·u)`.
    pub fn cosine(k: Vec<i64>, amp: f64) -> Self {
        TrigPolynomial {
            dim: k.len(),
            offset: 0.0,
            modes: vec![Mode::new(k, amp, 0.0)],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::InvalidParameter("profile dimension is zero".into()));
        }
        for m in &self.modes {
            if m.k.len() != self.dim {
                return Err(Error::InvalidParameter(format!(
                    "wave vector {:?} is not {}-dimensional",
                    m.k, self.dim
                )));
            }
            if !m.amp.is_finite() || !m.phase.is_finite() {
                return Err(Error::InvalidParameter("non-finite mode".into()));
            }
        }
        Ok(())
    }

    pub fn eval(&self, u: &[f64]) -> f64 {
        self.offset + self.modes.iter().map(|m| m.amp * m.argument(u).cos()).sum::<f64>()
    }

    /// `∫_{𝕋^d} f(u) du`.
    pub fn integral(&self) -> f64 {
        self.offset
            + self
                .modes
                .iter()
                .filter(|m| m.is_constant())
                .map(|m| m.amp * m.phase.cos())
                .sum::<f64>()
    }

    /// `∫ f g du` by mode orthogonality.
    pub fn inner(&self, other: &TrigPolynomial) -> f64 {
        let mut total = self.offset * other.offset;
        for m in &self.modes {
            if m.is_constant() {
                total += other.offset * m.amp * m.phase.cos();
            }
        }
        for m in &other.modes {
            if m.is_constant() {
                total += self.offset * m.amp * m.phase.cos();
            }
        }
        for a in &self.modes {
            for b in &other.modes {
                // cos A cos B = [cos(A − B) + cos(A + B)] / 2
                let mut s = 0.0;
                if a.k == b.k {
                    s += (a.phase - b.phase).cos();
                }
                if a.k.iter().zip(&b.k).all(|(x, y)| *x == -*y) {
                    s += (a.phase + b.phase).cos();
                }
                total += 0.5 * a.amp * b.amp * s;
            }
        }
        total
    }

    /// `f(· + shift)`.
    pub fn shifted(&self, shift: &[f64]) -> Self {
        let modes = self
            .modes
            .iter()
            .map(|m| {
                let dot: f64 = m.k.iter().zip(shift).map(|(&k, &s)| k as f64 * s).sum();
                Mode::new(m.k.clone(), m.amp, m.phase + 2.0 * PI * dot)
            })
            .collect();
        TrigPolynomial {
            dim: self.dim,
            offset: self.offset,
            modes,
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        TrigPolynomial {
            dim: self.dim,
            offset: self.offset * factor,
            modes: self
                .modes
                .iter()
                .map(|m| Mode::new(m.k.clone(), m.amp * factor, m.phase))
                .collect(),
        }
    }

    /// Lower bound `c − Σ |a_k|`.
    pub fn lower_bound(&self) -> f64 {
        self.offset - self.modes.iter().map(|m| m.amp.abs()).sum::<f64>()
    }

    pub fn is_constant(&self) -> bool {
        self.modes.iter().all(|m| m.is_constant() || m.amp == 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inner_product_by_orthogonality() {
        let f = TrigPolynomial::cosine(vec![1, -1], 1.0);
        let g = TrigPolynomial::cosine(vec![1, -1], 2.0);
        assert!((f.inner(&g) - 1.0).abs() < 1e-15);
        let h = TrigPolynomial::cosine(vec![-1, 1], 2.0);
        assert!((f.inner(&h) - 1.0).abs() < 1e-15);
        let other = TrigPolynomial::cosine(vec![1, 0], 1.0);
        assert_eq!(f.inner(&other), 0.0);
    }

    #[test]
    fn inner_matches_quadrature() {
        let f = TrigPolynomial::new(
            2,
            0.3,
            vec![Mode::new(vec![1, 2], 0.7, 0.4), Mode::new(vec![0, 1], -0.2, 1.1)],
        )
        .unwrap();
        let g = TrigPolynomial::new(
            2,
            -0.5,
            vec![Mode::new(vec![-1, -2], 1.3, -0.9), Mode::new(vec![0, 1], 0.5, 0.0)],
        )
        .unwrap();
        // midpoint rule is exact for trig polynomials of low enough degree
        let n = 16;
        let mut q = 0.0;
        for i in 0..n {
            for j in 0..n {
                let u = [i as f64 / n as f64, j as f64 / n as f64];
                q += f.eval(&u) * g.eval(&u);
            }
        }
        q /= (n * n) as f64;
        assert!((q - f.inner(&g)).abs() < 1e-12);
        assert!((f.integral() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn shift_is_translation() {
        let f = TrigPolynomial::new(2, 0.1, vec![Mode::new(vec![2, -1], 1.0, 0.3)]).unwrap();
        let s = [0.25, 0.125];
        let g = f.shifted(&s);
        let u = [0.3, 0.8];
        assert!((g.eval(&u) - f.eval(&[u[0] + s[0], u[1] + s[1]])).abs() < 1e-12);
    }
}
