//! Empirical fields compared against the hydrodynamic limit.

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::lattice::{block_average_field, Configuration};
use crate::stats::{linear_fit, percentile};
use crate::thermo::Thermo;
use crate::trig::TrigPolynomial;
use crate::{Error, Result};

/// A named trigonometric test function `F`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    pub name: String,
    pub poly: TrigPolynomial,
}

impl TestFunction {
    pub fn new(name: impl Into<String>, poly: TrigPolynomial) -> Self {
        TestFunction {
            name: name.into(),
            poly,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairingRecord {
    pub replica: usize,
    pub side: usize,
    pub alpha: f64,
    pub time: f64,
    pub test_function: String,
    /// Empirical pairing `X`.
    pub value: f64,
    /// `∫ ρ(t, u) F(u) du`.
    pub reference: f64,
}

impl PairingRecord {
    pub fn error(&self) -> f64 {
        self.value - self.reference
    }
}

/// `X = N^{α−d} Σ_x (η(x) − ρ*) F(x/N)`.
pub fn empirical_pairing(eta: &Configuration, rho_star: f64, alpha: f64, f: &TrigPolynomial) -> f64 {
    let torus = eta.torus();
    let n = torus.side() as f64;
    let sum: f64 = eta
        .occupancy()
        .iter()
        .enumerate()
        .map(|(site, &k)| (k as f64 - rho_star) * f.eval(&torus.position(site)))
        .sum();
    n.powf(alpha - torus.dim() as f64) * sum
}

#[derive(Clone, Debug, PartialEq)]
pub struct OneBlock {
    /// `V_g^ℓ(τ_y η) = ḡ^ℓ(y) − Φ(η̄^ℓ(y))` at every site `y`.
    pub per_site: Vec<f64>,
    /// `N^{−d−α} Σ_y F(y/N) V_g^ℓ(τ_y η)` when a test function was given.
    pub weighted: Option<f64>,
}

impl OneBlock {
    pub fn mean_abs(&self) -> f64 {
        self.per_site.iter().map(|v| v.abs()).sum::<f64>() / self.per_site.len() as f64
    }
}

/// Replacement error of block-averaged rates by `Φ` of the block density,
/// with periodic blocks of radius `ℓ`.
pub fn one_block_field(
    eta: &Configuration,
    radius: usize,
    thermo: &Thermo,
    weight: Option<(&TrigPolynomial, f64)>,
) -> Result<OneBlock> {
    let torus = eta.torus();
    let rates: Vec<f64> = eta.occupancy().iter().map(|&k| thermo.g(k)).collect();
    let g_bar = block_average_field(&torus, &rates, radius)?;
    let eta_bar = block_average_field(&torus, &eta.as_field(), radius)?;
    let mut phi_cache: HashMap<u64, f64> = HashMap::new();
    let mut per_site = Vec::with_capacity(g_bar.len());
    for (gb, rho) in g_bar.iter().zip(&eta_bar) {
        let phi = match phi_cache.get(&rho.to_bits()) {
            Some(&p) => p,
            None => {
                let p = thermo.fugacity_of_density(*rho)?;
                phi_cache.insert(rho.to_bits(), p);
                p
            }
        };
        per_site.push(gb - phi);
    }
    let weighted = weight.map(|(f, alpha)| {
        let n = torus.side() as f64;
        let s: f64 = per_site
            .iter()
            .enumerate()
            .map(|(y, v)| f.eval(&torus.position(y)) * v)
            .sum();
        n.powf(-(torus.dim() as f64) - alpha) * s
    });
    Ok(OneBlock { per_site, weighted })
}

/// Log-log fit of error against system size.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub sides: Vec<usize>,
    /// Mean `|X − reference|` per side.
    pub errors: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    /// 95% percentile-bootstrap interval of the slope.
    pub ci: (f64, f64),
    pub strictly_decreasing: bool,
}

/// Fits `log mean|X − ref|` against `log N`, resampling replicas within each
/// side for the bootstrap interval.
pub fn convergence_report(records: &[PairingRecord], resamples: usize, seed: u64) -> Result<ConvergenceReport> {
    let mut by_side: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for r in records {
        by_side.entry(r.side).or_default().push(r.error().abs());
    }
    convergence_fit(&by_side, resamples, seed)
}

/// Same as [`convergence_report`] on per-side absolute errors.
pub fn convergence_fit(by_side: &BTreeMap<usize, Vec<f64>>, resamples: usize, seed: u64) -> Result<ConvergenceReport> {
    if by_side.len() < 3 {
        return Err(Error::Degenerate(format!(
            "need at least 3 system sizes, got {}",
            by_side.len()
        )));
    }
    if let Some((side, v)) = by_side.iter().find(|(_, v)| v.len() < 2) {
        return Err(Error::Degenerate(format!(
            "side {side} has {} replicas, need at least 2",
            v.len()
        )));
    }
    let sides: Vec<usize> = by_side.keys().copied().collect();
    let xs: Vec<f64> = sides.iter().map(|&n| (n as f64).ln()).collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let errors: Vec<f64> = by_side.values().map(|v| mean(v)).collect();
    if errors.iter().any(|&e| !(e > 0.0) || !e.is_finite()) {
        return Err(Error::Degenerate("zero or non-finite mean error".into()));
    }
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let fit = linear_fit(&xs, &ys)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut slopes = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        let ys: Vec<f64> = by_side
            .values()
            .map(|v| {
                let s: f64 = (0..v.len()).map(|_| v[rng.random_range(0..v.len())]).sum();
                (s / v.len() as f64).max(f64::MIN_POSITIVE).ln()
            })
            .collect();
        slopes.push(linear_fit(&xs, &ys)?.slope);
    }
    let ci = if slopes.is_empty() {
        (fit.slope, fit.slope)
    } else {
        slopes.sort_by(f64::total_cmp);
        (percentile(&slopes, 0.025), percentile(&slopes, 0.975))
    };
    let strictly_decreasing = errors.windows(2).all(|w| w[1] < w[0]);
    Ok(ConvergenceReport {
        sides,
        errors,
        slope: fit.slope,
        intercept: fit.intercept,
        ci,
        strictly_decreasing,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Torus;
    use crate::thermo::RateFunction;
    use crate::trig::Mode;
    use proptest::prelude::*;

    #[test]
    fn pairing_examples() {
        let t = Torus::new(1, 2).unwrap();
        let eta = Configuration::from_occupancy(t, vec![2, 0]).unwrap();
        let f = TrigPolynomial::cosine(vec![1], 1.0);
        let x = empirical_pairing(&eta, 1.0, 0.5, &f);
        assert!((x - 2f64.sqrt()).abs() < 1e-12);

        let t = Torus::new(2, 4).unwrap();
        let flat = Configuration::constant(t, 2);
        assert!(empirical_pairing(&flat, 2.0, 0.5, &f_diag()).abs() < 1e-12);
        let one = TrigPolynomial::new(2, 1.0, vec![]).unwrap();
        let eta = Configuration::from_occupancy(t, (0..16).map(|i| i % 3).collect()).unwrap();
        let expected = 4f64.powf(0.5 - 2.0) * (eta.total() as f64 - 16.0);
        assert!((empirical_pairing(&eta, 1.0, 0.5, &one) - expected).abs() < 1e-12);
    }

    fn f_diag() -> TrigPolynomial {
        TrigPolynomial::cosine(vec![1, -1], 2.0)
    }

    #[test]
    fn one_block_examples() {
        let lin = Thermo::new(RateFunction::Linear);
        let t = Torus::new(2, 5).unwrap();
        let eta = Configuration::from_occupancy(t, (0..25).map(|i| (i * 7 % 5) as u32).collect()).unwrap();
        let v = one_block_field(&eta, 1, &lin, None).unwrap();
        assert!(v.per_site.iter().all(|x| x.abs() < 1e-12));

        let ind = Thermo::new(RateFunction::Indicator);
        let c = Configuration::constant(t, 3);
        let v = one_block_field(&c, 2, &ind, None).unwrap();
        let expected = ind.g(3) - ind.fugacity_of_density(3.0).unwrap();
        assert!(v.per_site.iter().all(|x| (x - expected).abs() < 1e-12));

        let t = Torus::new(1, 3).unwrap();
        let eta = Configuration::from_occupancy(t, vec![1, 0, 2]).unwrap();
        let v = one_block_field(&eta, 1, &ind, None).unwrap();
        assert!((v.per_site[0] - 1.0 / 6.0).abs() < 1e-12);

        let too_big = one_block_field(&eta, 2, &ind, None);
        assert!(matches!(too_big, Err(Error::BlockExceedsTorus { .. })));
    }

    #[test]
    fn one_block_weighted_sum() {
        let ind = Thermo::new(RateFunction::Indicator);
        let t = Torus::new(1, 5).unwrap();
        let eta = Configuration::from_occupancy(t, vec![0, 3, 1, 0, 2]).unwrap();
        let f = TrigPolynomial::cosine(vec![1], 1.0);
        let v = one_block_field(&eta, 1, &ind, Some((&f, 0.5))).unwrap();
        let direct: f64 = (0..5).map(|y| f.eval(&[y as f64 / 5.0]) * v.per_site[y]).sum::<f64>() * 5f64.powf(-1.5);
        assert!((v.weighted.unwrap() - direct).abs() < 1e-14);
    }

    fn synthetic(error: impl Fn(usize) -> f64) -> Vec<PairingRecord> {
        let mut out = Vec::new();
        for &n in &[16usize, 32, 64, 128] {
            for r in 0..3 {
                out.push(PairingRecord {
                    replica: r,
                    side: n,
                    alpha: 0.5,
                    time: 0.0,
                    test_function: "f".into(),
                    value: 1.0 + error(n),
                    reference: 1.0,
                });
            }
        }
        out
    }

    #[test]
    fn convergence_synthetic_power_law() {
        let rep = convergence_report(&synthetic(|n| 3.0 / n as f64), 200, 1).unwrap();
        assert!((rep.slope + 1.0).abs() < 1e-6);
        assert!((rep.ci.0 + 1.0).abs() < 1e-6 && (rep.ci.1 + 1.0).abs() < 1e-6);
        assert!(rep.strictly_decreasing);
        let flat = convergence_report(&synthetic(|_| 0.25), 50, 1).unwrap();
        assert!(flat.slope.abs() < 1e-12);
        assert!(!flat.strictly_decreasing);
    }

    #[test]
    fn convergence_degenerate_inputs() {
        assert!(convergence_report(&synthetic(|_| 0.0), 10, 1).is_err());
        let few: Vec<_> = synthetic(|n| 1.0 / n as f64)
            .into_iter()
            .filter(|r| r.side <= 32)
            .collect();
        assert!(convergence_report(&few, 10, 1).is_err());
        let single: Vec<_> = synthetic(|n| 1.0 / n as f64)
            .into_iter()
            .filter(|r| r.replica == 0)
            .collect();
        assert!(convergence_report(&single, 10, 1).is_err());
    }

    proptest! {
        #[test]
        fn pairing_linear_and_covariant(
            occ in proptest::collection::vec(0u32..6, 36),
            occ2 in proptest::collection::vec(0u32..6, 36),
            shift in proptest::collection::vec(-6i64..6, 2),
            a in -2.0f64..2.0,
            phase in 0.0f64..6.0,
        ) {
            let t = Torus::new(2, 6).unwrap();
            let eta = Configuration::from_occupancy(t, occ).unwrap();
            let eta2 = Configuration::from_occupancy(t, occ2.clone()).unwrap();
            let f = TrigPolynomial::new(2, 0.2, vec![Mode::new(vec![1, 2], 1.0, phase)]).unwrap();
            let g = TrigPolynomial::cosine(vec![-1, 1], a);
            let sum = TrigPolynomial { dim: 2, offset: f.offset, modes: [f.modes.clone(), g.modes.clone()].concat() };
            let lhs = empirical_pairing(&eta, 1.0, 0.5, &sum);
            let rhs = empirical_pairing(&eta, 1.0, 0.5, &f) + empirical_pairing(&eta, 1.0, 0.5, &g);
            prop_assert!((lhs - rhs).abs() < 1e-9);
            // linear in η − ρ*
            let both: Vec<u32> = eta.occupancy().iter().zip(&occ2).map(|(a, b)| a + b).collect();
            let both = Configuration::from_occupancy(t, both).unwrap();
            let l = empirical_pairing(&both, 2.0, 0.5, &f);
            let r = empirical_pairing(&eta, 1.0, 0.5, &f) + empirical_pairing(&eta2, 1.0, 0.5, &f);
            prop_assert!((l - r).abs() < 1e-9);
            // Σ_x η(x + y) F(x/N) = Σ_z η(z) F((z − y)/N)
            let moved = eta.translate(&shift);
            let back = f.shifted(&[-(shift[0] as f64) / 6.0, -(shift[1] as f64) / 6.0]);
            let l = empirical_pairing(&moved, 1.0, 0.5, &f);
            let r = empirical_pairing(&eta, 1.0, 0.5, &back);
            prop_assert!((l - r).abs() < 1e-9);
            let neg: Vec<i64> = shift.iter().map(|s| -s).collect();
            let shifted_f = f.shifted(&[shift[0] as f64 / 6.0, shift[1] as f64 / 6.0]);
            let l2 = empirical_pairing(&eta.translate(&neg), 1.0, 0.5, &f);
            let r2 = empirical_pairing(&eta, 1.0, 0.5, &shifted_f);
            prop_assert!((l2 - r2).abs() < 1e-9);
        }

        #[test]
        fn one_block_vanishes_for_linear_rate(occ in proptest::collection::vec(0u32..8, 49), radius in 0usize..4) {
            let t = Torus::new(2, 7).unwrap();
            let eta = Configuration::from_occupancy(t, occ).unwrap();
            let v = one_block_field(&eta, radius, &Thermo::new(RateFunction::Linear), None).unwrap();
            prop_assert!(v.per_site.iter().all(|x| x.abs() < 1e-12));
        }
    }
}
