//! Lanczos iteration with full reorthogonalisation for the lowest eigenvalue
//! of a symmetric operator on the orthogonal complement of known null vectors.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;

use crate::{Error, Result};

pub struct LowestPair {
    pub value: f64,
    pub vector: Vec<f64>,
    pub residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = dot(v, v).sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

/// Lowest eigenpair of `apply` restricted to the complement of `deflate`
/// (orthonormal vectors). Krylov dimension grows until the Ritz residual is
/// below `tol` times the operator scale.
pub fn lowest_eigenpair<F, R>(dim: usize, apply: F, deflate: &[Vec<f64>], tol: f64, rng: &mut R) -> Result<LowestPair>
where
    F: Fn(&[f64], &mut [f64]),
    R: Rng + ?Sized,
{
    let free = dim.saturating_sub(deflate.len());
    if free == 0 {
        return Err(Error::Degenerate("no directions left after deflation".into()));
    }
    let project = |v: &mut [f64], basis: &[Vec<f64>]| {
        for _ in 0..2 {
            for b in deflate.iter().chain(basis) {
                let c = dot(v, b);
                axpy(v, -c, b);
            }
        }
    };
    let mut start: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() - 0.5).collect();
    project(&mut start, &[]);
    if normalize(&mut start) == 0.0 {
        return Err(Error::Invariant("Lanczos start vector vanished".into()));
    }
    let max_steps = free.min(2000);
    let mut basis: Vec<Vec<f64>> = vec![start];
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut w = vec![0.0; dim];
    let mut scale: f64 = 0.0;
    let mut check_at = 20.min(max_steps);
    loop {
        let k = basis.len() - 1;
        apply(&basis[k], &mut w);
        let a = dot(&w, &basis[k]);
        alphas.push(a);
        scale = scale.max(a.abs());
        axpy(&mut w, -a, &basis[k]);
        if k > 0 {
            axpy(&mut w, -betas[k - 1], &basis[k - 1]);
        }
        project(&mut w, &basis);
        let b = normalize(&mut w);
        let steps = alphas.len();
        let exhausted = b <= 1e-12 * scale.max(1.0) || steps >= max_steps;
        if steps >= check_at || exhausted {
            let t = DMatrix::from_fn(steps, steps, |i, j| {
                if i == j {
                    alphas[i]
                } else if i + 1 == j {
                    betas[i]
                } else if j + 1 == i {
                    betas[j]
                } else {
                    0.0
                }
            });
            let eig = SymmetricEigen::new(t);
            let (idx, &value) = eig
                .eigenvalues
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(b.1))
                .expect("nonempty");
            let coeffs = eig.eigenvectors.column(idx);
            let residual = (b * coeffs[steps - 1]).abs();
            if residual <= tol * scale.max(1.0) || exhausted {
                let mut vector = vec![0.0; dim];
                for (c, v) in coeffs.iter().zip(&basis) {
                    axpy(&mut vector, *c, v);
                }
                normalize(&mut vector);
                return Ok(LowestPair {
                    value,
                    vector,
                    residual,
                });
            }
            check_at = (check_at * 3 / 2).min(max_steps);
        }
        betas.push(b);
        basis.push(w.clone());
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn path_laplacian_second_eigenvalue() {
        // Laplacian of the path on n nodes: eigenvalues 2 − 2cos(πk/n)
        let n = 60;
        let apply = |x: &[f64], y: &mut [f64]| {
            for i in 0..n {
                let mut v = 0.0;
                if i > 0 {
                    v += x[i] - x[i - 1];
                }
                if i + 1 < n {
                    v += x[i] - x[i + 1];
                }
                y[i] = v;
            }
        };
        let ones = vec![1.0 / (n as f64).sqrt(); n];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let pair = lowest_eigenpair(n, apply, &[ones], 1e-10, &mut rng).unwrap();
        let expected = 2.0 - 2.0 * (std::f64::consts::PI / n as f64).cos();
        assert!((pair.value - expected).abs() < 1e-9, "{} vs {expected}", pair.value);
    }
}
