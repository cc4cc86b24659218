//! Finite-range jump kernels on `ℤ^d`.

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Largest denominator accepted when reading kernel probabilities as rationals.
const MAX_DENOMINATOR: i64 = 1 << 20;

/// A displacement with its probability.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Jump {
    pub displacement: Vec<i64>,
    pub prob: f64,
}

/// Asymmetric, finite-range jump law `p(·)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KernelSpec", into = "KernelSpec")]
pub struct JumpKernel {
    dim: usize,
    support: Vec<Jump>,
    range: i64,
    drift: Vec<f64>,
    sigma: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KernelSpec {
    pub dim: usize,
    pub jumps: Vec<Jump>,
}

impl TryFrom<KernelSpec> for JumpKernel {
    type Error = Error;
    fn try_from(spec: KernelSpec) -> Result<Self> {
        JumpKernel::new(spec.dim, spec.jumps)
    }
}

impl From<JumpKernel> for KernelSpec {
    fn from(k: JumpKernel) -> Self {
        KernelSpec {
            dim: k.dim,
            jumps: k.support,
        }
    }
}

impl JumpKernel {
    pub fn new(dim: usize, jumps: Vec<Jump>) -> Result<Self> {
        let support = normalize_support(dim, jumps)?;
        let drift: Vec<f64> = (0..dim)
            .map(|i| support.iter().map(|j| j.displacement[i] as f64 * j.prob).sum())
            .collect();
        if drift.iter().all(|&m| m.abs() < 1e-15) {
            return Err(Error::InvalidKernel("kernel has zero drift".into()));
        }
        let range = support
            .iter()
            .flat_map(|j| j.displacement.iter().map(|x| x.abs()))
            .max()
            .unwrap_or(0);
        let mut sigma = vec![0.0; dim * dim];
        for j in &support {
            for a in 0..dim {
                for b in 0..dim {
                    sigma[a * dim + b] += j.displacement[a] as f64 * j.displacement[b] as f64 * j.prob;
                }
            }
        }
        Ok(JumpKernel {
            dim,
            support,
            range,
            drift,
            sigma,
        })
    }

    /// `p(e_i) = 1/d` for each unit vector: total drift `(1/d, …, 1/d)`.
    pub fn positive_axes(dim: usize) -> Self {
        let jumps = (0..dim)
            .map(|i| {
                let mut displacement = vec![0; dim];
                displacement[i] = 1;
                Jump {
                    displacement,
                    prob: 1.0 / dim as f64,
                }
            })
            .collect();
        JumpKernel::new(dim, jumps).expect("axis kernel is valid")
    }

    /// Nearest-neighbour walk with `p(e_i) = q/d`, `p(−e_i) = (1 − q)/d`.
    pub fn biased_nearest_neighbor(dim: usize, q: f64) -> Result<Self> {
        let mut jumps = Vec::new();
        for i in 0..dim {
            for (sign, prob) in [(1, q), (-1, 1.0 - q)] {
                if prob > 0.0 {
                    let mut displacement = vec![0; dim];
                    displacement[i] = sign;
                    jumps.push(Jump {
                        displacement,
                        prob: prob / dim as f64,
                    });
                }
            }
        }
        JumpKernel::new(dim, jumps)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn support(&self) -> &[Jump] {
        &self.support
    }

    /// Max-norm range `R`.
    pub fn range(&self) -> i64 {
        self.range
    }

    /// `m = Σ x p(x)`.
    pub fn drift(&self) -> &[f64] {
        &self.drift
    }

    /// Row-major `σ_ij = Σ x_i x_j p(x)`.
    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn sigma_entry(&self, i: usize, j: usize) -> f64 {
        self.sigma[i * self.dim + j]
    }

    /// `kᵀ σ k`.
    pub fn quadratic_form(&self, k: &[i64]) -> f64 {
        let mut q = 0.0;
        for a in 0..self.dim {
            for b in 0..self.dim {
                q += k[a] as f64 * self.sigma_entry(a, b) * k[b] as f64;
            }
        }
        q
    }

    /// Largest absolute row sum of `σ`, an upper bound on its spectral radius.
    pub fn sigma_bound(&self) -> f64 {
        (0..self.dim)
            .map(|a| (0..self.dim).map(|b| self.sigma_entry(a, b).abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Kernel of the adjoint dynamics, `p(−·)`.
    pub fn reversed(&self) -> Self {
        let jumps = self
            .support
            .iter()
            .map(|j| Jump {
                displacement: j.displacement.iter().map(|x| -x).collect(),
                prob: j.prob,
            })
            .collect();
        JumpKernel::new(self.dim, jumps).expect("reversal preserves validity")
    }

    /// `s(x) = [p(x) + p(−x)] / 2`.
    pub fn symmetrized(&self) -> SymKernel {
        let mut jumps: Vec<Jump> = Vec::new();
        for j in &self.support {
            for (disp, w) in [
                (j.displacement.clone(), 0.5 * j.prob),
                (j.displacement.iter().map(|x| -x).collect(), 0.5 * j.prob),
            ] {
                match jumps.iter_mut().find(|e| e.displacement == disp) {
                    Some(e) => e.prob += w,
                    None => jumps.push(Jump {
                        displacement: disp,
                        prob: w,
                    }),
                }
            }
        }
        SymKernel { dim: self.dim, jumps }
    }

    /// Drift as exact rationals; fails if a probability is not a small-denominator rational.
    pub fn rational_drift(&self) -> Result<Vec<Ratio<i64>>> {
        let mut drift = vec![Ratio::from_integer(0); self.dim];
        for j in &self.support {
            let p = to_rational(j.prob)?;
            for (m, &x) in drift.iter_mut().zip(&j.displacement) {
                *m += p * Ratio::from_integer(x);
            }
        }
        Ok(drift)
    }
}

fn normalize_support(dim: usize, jumps: Vec<Jump>) -> Result<Vec<Jump>> {
    if dim == 0 {
        return Err(Error::InvalidKernel("dimension must be at least 1".into()));
    }
    let mut support: Vec<Jump> = Vec::new();
    let mut total = 0.0;
    for j in jumps {
        if j.displacement.len() != dim {
            return Err(Error::InvalidKernel(format!(
                "displacement {:?} is not {dim}-dimensional",
                j.displacement
            )));
        }
        if !(j.prob >= 0.0) || !j.prob.is_finite() {
            return Err(Error::InvalidKernel(format!("probability {}", j.prob)));
        }
        if j.prob == 0.0 {
            continue;
        }
        if j.displacement.iter().all(|&x| x == 0) {
            return Err(Error::InvalidKernel("p(0) must be zero".into()));
        }
        total += j.prob;
        match support.iter_mut().find(|e| e.displacement == j.displacement) {
            Some(e) => e.prob += j.prob,
            None => support.push(j),
        }
    }
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidKernel(format!("probabilities sum to {total}")));
    }
    Ok(support)
}

fn to_rational(x: f64) -> Result<Ratio<i64>> {
    // continued fraction with bounded denominator, accepted only if exact to round-off
    let (mut h0, mut h1) = (0i64, 1i64);
    let (mut k0, mut k1) = (1i64, 0i64);
    let mut v = x;
    for _ in 0..64 {
        let a = v.floor();
        if a.abs() > i64::MAX as f64 / 4.0 {
            break;
        }
        let a = a as i64;
        let h2 = a.checked_mul(h1).and_then(|t| t.checked_add(h0));
        let k2 = a.checked_mul(k1).and_then(|t| t.checked_add(k0));
        let (Some(h2), Some(k2)) = (h2, k2) else { break };
        if k2 > MAX_DENOMINATOR {
            break;
        }
        (h0, h1, k0, k1) = (h1, h2, k1, k2);
        if (h1 as f64 / k1 as f64 - x).abs() <= 4.0 * f64::EPSILON * x.abs().max(1.0) {
            return Ok(Ratio::new(h1, k1));
        }
        let frac = v - a as f64;
        if frac == 0.0 {
            break;
        }
        v = 1.0 / frac;
    }
    Err(Error::UnsupportedKernel(x))
}

/// Symmetric kernel `s(·)` used by block generators.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymKernel {
    pub dim: usize,
    pub jumps: Vec<Jump>,
}

impl SymKernel {
    /// `s(±e_i) = 1/(2d)`, the symmetrisation of [`JumpKernel::positive_axes`].
    pub fn nearest_neighbor(dim: usize) -> Self {
        JumpKernel::positive_axes(dim).symmetrized()
    }

    pub fn weight(&self, displacement: &[i64]) -> f64 {
        self.jumps
            .iter()
            .find(|j| j.displacement == displacement)
            .map_or(0.0, |j| j.prob)
    }
}
