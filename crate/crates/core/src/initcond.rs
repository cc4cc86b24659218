//! Perturbed product initial measures and their relative entropy.
//!
//! The initial law puts independent marginals of density
//! `ρ_N(x) = ρ* + N^{−α} ρ₀(x/N)` at every site, where `ρ₀` is a
//! trigonometric polynomial constant along the drift direction.

use std::collections::HashMap;

use num_rational::Ratio;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::kernel::JumpKernel;
use crate::lattice::{Configuration, Torus};
use crate::thermo::Thermo;
use crate::trig::TrigPolynomial;
use crate::{Error, Result};

pub type PerturbationProfile = TrigPolynomial;

/// Tail mass left out of the single-site sampling tables.
pub const SAMPLER_TAIL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitialCondition {
    pub rho_star: f64,
    pub alpha: f64,
    pub profile: PerturbationProfile,
}

impl InitialCondition {
    pub fn new(rho_star: f64, alpha: f64, profile: PerturbationProfile) -> Result<Self> {
        let ic = InitialCondition {
            rho_star,
            alpha,
            profile,
        };
        ic.validate()?;
        Ok(ic)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho_star > 0.0) || !self.rho_star.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "base density must be positive, got {}",
                self.rho_star
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        self.profile.validate()
    }

    /// `N^{−α}`.
    pub fn scale(&self, side: usize) -> f64 {
        (side as f64).powf(-self.alpha)
    }

    /// `ρ* + N^{−α} ρ₀(x/N)` at every site.
    pub fn site_densities(&self, torus: &Torus) -> Result<Vec<f64>> {
        let eps = self.scale(torus.side());
        (0..torus.sites())
            .map(|site| {
                let density = self.rho_star + eps * self.profile.eval(&torus.position(site));
                if density > 0.0 {
                    Ok(density)
                } else {
                    Err(Error::NegativeDensity { site, density })
                }
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DriftReport {
    pub orthogonal: bool,
    /// `k · m` for every mode.
    pub mode_products: Vec<Ratio<i64>>,
}

impl DriftReport {
    pub fn failing_modes(&self) -> Vec<usize> {
        self.mode_products
            .iter()
            .enumerate()
            .filter(|(_, p)| **p != Ratio::from_integer(0))
            .map(|(i, _)| i)
            .collect()
    }
}

/// Exact check of `m · ∇ρ₀ = 0`, i.e. `k · m = 0` for every mode.
pub fn check_drift_orthogonal(profile: &PerturbationProfile, kernel: &JumpKernel) -> Result<DriftReport> {
    if profile.dim != kernel.dim() {
        return Err(Error::InvalidParameter(format!(
            "profile dimension {} differs from kernel dimension {}",
            profile.dim,
            kernel.dim()
        )));
    }
    let active: Vec<_> = profile
        .modes
        .iter()
        .filter(|m| m.amp != 0.0 && !m.is_constant())
        .collect();
    if active.is_empty() {
        return Ok(DriftReport {
            orthogonal: true,
            mode_products: vec![Ratio::from_integer(0); profile.modes.len()],
        });
    }
    let drift = kernel.rational_drift()?;
    let mode_products: Vec<Ratio<i64>> = profile
        .modes
        .iter()
        .map(|m| {
            if m.amp == 0.0 {
                return Ratio::from_integer(0);
            }
            m.k.iter()
                .zip(&drift)
                .fold(Ratio::from_integer(0), |acc, (&k, &d)| acc + d * k)
        })
        .collect();
    let orthogonal = mode_products.iter().all(|p| *p == Ratio::from_integer(0));
    Ok(DriftReport {
        orthogonal,
        mode_products,
    })
}

/// Per-site inverse-CDF tables for the initial product measure.
#[derive(Clone, Debug)]
pub struct InitialSampler {
    torus: Torus,
    densities: Vec<f64>,
    table_of_site: Vec<u32>,
    cdfs: Vec<Vec<f64>>,
}

impl InitialSampler {
    pub fn new(torus: Torus, ic: &InitialCondition, thermo: &Thermo) -> Result<Self> {
        ic.validate()?;
        let densities = ic.site_densities(&torus)?;
        let mut table_of_key: HashMap<u64, u32> = HashMap::new();
        let mut cdfs = Vec::new();
        let mut table_of_site = Vec::with_capacity(densities.len());
        for &rho in &densities {
            let key = rho.to_bits();
            let id = match table_of_key.get(&key) {
                Some(&id) => id,
                None => {
                    let phi = thermo.fugacity_of_density(rho)?;
                    let pmf = thermo.marginal_distribution(phi, SAMPLER_TAIL)?;
                    cdfs.push(pmf.cdf());
                    let id = (cdfs.len() - 1) as u32;
                    table_of_key.insert(key, id);
                    id
                }
            };
            table_of_site.push(id);
        }
        Ok(InitialSampler {
            torus,
            densities,
            table_of_site,
            cdfs,
        })
    }

    pub fn torus(&self) -> Torus {
        self.torus
    }

    /// Target densities `ρ_N(0, x/N)`.
    pub fn densities(&self) -> &[f64] {
        &self.densities
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Configuration {
        let occupancy = self
            .table_of_site
            .iter()
            .map(|&id| {
                let cdf = &self.cdfs[id as usize];
                let u: f64 = rng.random();
                cdf.partition_point(|&c| c <= u).min(cdf.len() - 1) as u32
            })
            .collect();
        Configuration::from_occupancy(self.torus, occupancy).expect("sizes match")
    }
}

/// Draws one configuration from the initial product measure.
pub fn sample_initial<R: Rng + ?Sized>(
    torus: Torus,
    ic: &InitialCondition,
    thermo: &Thermo,
    rng: &mut R,
) -> Result<Configuration> {
    Ok(InitialSampler::new(torus, ic, thermo)?.sample(rng))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EntropyReport {
    pub side: usize,
    /// Relative entropy in nats.
    pub total: f64,
    /// `total / N^d`.
    pub per_volume: f64,
}

/// Relative entropy of the initial product law against the flat product
/// measure at density `ρ*`, summed site by site in closed form:
/// `log[Z(Φ(ρ*)) / Z(Φ(ρ₁))] + ρ₁ log[Φ(ρ₁) / Φ(ρ*)]`.
pub fn initial_entropy(torus: Torus, ic: &InitialCondition, thermo: &Thermo) -> Result<EntropyReport> {
    ic.validate()?;
    let densities = ic.site_densities(&torus)?;
    let phi_star = thermo.fugacity_of_density(ic.rho_star)?;
    let log_z_star = thermo.log_partition(phi_star)?;
    let log_phi_star = phi_star.ln();
    let mut cache: HashMap<u64, f64> = HashMap::new();
    let mut total = 0.0;
    for &rho in &densities {
        let term = match cache.get(&rho.to_bits()) {
            Some(&t) => t,
            None => {
                let phi = thermo.fugacity_of_density(rho)?;
                let t = log_z_star - thermo.log_partition(phi)? + rho * (phi.ln() - log_phi_star);
                cache.insert(rho.to_bits(), t);
                t
            }
        };
        total += term;
    }
    // exact zero for identical measures, tiny negative round-off clipped
    let total = total.max(0.0);
    Ok(EntropyReport {
        side: torus.side(),
        total,
        per_volume: total / torus.sites() as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::thermo::RateFunction;
    use crate::trig::Mode;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn diagonal(amp: f64) -> PerturbationProfile {
        TrigPolynomial::cosine(vec![1, -1], amp)
    }

    #[test]
    fn drift_orthogonality_examples() {
        let k = JumpKernel::positive_axes(2);
        assert!(check_drift_orthogonal(&diagonal(1.0), &k).unwrap().orthogonal);
        let bad = TrigPolynomial::cosine(vec![1, 0], 1.0);
        let r = check_drift_orthogonal(&bad, &k).unwrap();
        assert!(!r.orthogonal);
        assert_eq!(r.failing_modes(), vec![0]);
        assert_eq!(r.mode_products[0], Ratio::new(1, 2));
        let flat = TrigPolynomial::new(2, 0.3, vec![]).unwrap();
        assert!(check_drift_orthogonal(&flat, &k).unwrap().orthogonal);
    }

    #[test]
    fn one_dimensional_drift_forces_constant() {
        let k = JumpKernel::positive_axes(1);
        let p = TrigPolynomial::cosine(vec![1], 1.0);
        assert!(!check_drift_orthogonal(&p, &k).unwrap().orthogonal);
        let c = TrigPolynomial::new(1, 0.0, vec![Mode::new(vec![0], 0.4, 0.0)]).unwrap();
        assert!(check_drift_orthogonal(&c, &k).unwrap().orthogonal);
    }

    #[test]
    fn negative_density_rejected() {
        let torus = Torus::new(2, 4).unwrap();
        let ic = InitialCondition::new(0.1, 0.5, diagonal(5.0)).unwrap();
        let thermo = Thermo::new(RateFunction::Linear);
        assert!(matches!(
            InitialSampler::new(torus, &ic, &thermo),
            Err(Error::NegativeDensity { .. })
        ));
    }

    #[test]
    fn entropy_zero_for_flat_profile() {
        let torus = Torus::new(2, 8).unwrap();
        let ic = InitialCondition::new(1.0, 0.5, TrigPolynomial::zero(2)).unwrap();
        for rate in [RateFunction::Linear, RateFunction::Indicator] {
            let h = initial_entropy(torus, &ic, &Thermo::new(rate)).unwrap();
            assert_eq!(h.total, 0.0);
        }
    }

    #[test]
    fn entropy_matches_poisson_kl() {
        let torus = Torus::new(2, 8).unwrap();
        let ic = InitialCondition::new(1.3, 0.5, diagonal(1.0)).unwrap();
        // series path against the independent Poisson closed form
        let thermo = Thermo::series_only(RateFunction::Linear);
        let h = initial_entropy(torus, &ic, &thermo).unwrap();
        let expected: f64 = ic
            .site_densities(&torus)
            .unwrap()
            .iter()
            .map(|&r1| ic.rho_star - r1 + r1 * (r1 / ic.rho_star).ln())
            .sum();
        assert!((h.total - expected).abs() < 1e-10 * expected);
        assert!(h.total > 0.0);
    }

    #[test]
    fn entropy_positive_for_indicator() {
        let torus = Torus::new(2, 8).unwrap();
        let ic = InitialCondition::new(1.0, 0.5, diagonal(0.8)).unwrap();
        let h = initial_entropy(torus, &ic, &Thermo::new(RateFunction::Indicator)).unwrap();
        // geometric KL: Σ ρ₁ log(ρ₁/ρ*) − (1+ρ₁) log((1+ρ₁)/(1+ρ*))
        let expected: f64 = ic
            .site_densities(&torus)
            .unwrap()
            .iter()
            .map(|&r| r * (r / 1.0).ln() - (1.0 + r) * ((1.0 + r) / 2.0).ln())
            .sum();
        assert!((h.total - expected).abs() < 1e-10 * expected);
    }

    #[test]
    fn sampler_marginal_means() {
        let torus = Torus::new(2, 4).unwrap();
        let ic = InitialCondition::new(1.0, 0.5, diagonal(1.0)).unwrap();
        let thermo = Thermo::new(RateFunction::Linear);
        let sampler = InitialSampler::new(torus, &ic, &thermo).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let reps = 10_000;
        let mut sums = vec![0.0; torus.sites()];
        for _ in 0..reps {
            let eta = sampler.sample(&mut rng);
            for (s, &k) in sums.iter_mut().zip(eta.occupancy()) {
                *s += k as f64;
            }
        }
        for (site, &target) in sampler.densities().iter().enumerate() {
            let mean = sums[site] / reps as f64;
            let se = (target / reps as f64).sqrt();
            assert!((mean - target).abs() < 3.5 * se, "site {site}: {mean} vs {target}");
        }
    }
}
