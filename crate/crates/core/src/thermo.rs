//! Grand-canonical thermodynamics of the zero range process.
//!
//! For a rate function `g` with `g(0) = 0` and `g(k) > 0` otherwise, the
//! product invariant measures have single-site marginals
//! `P(η = k) = φ^k / (Z(φ) g(k)!)` with `g(k)! = g(1)···g(k)`. This module
//! evaluates `Z`, the density `R(φ)`, its inverse `Φ(ρ)`, the derivatives
//! `Φ′`, `Φ″`, the cumulant `Λ` and the Legendre rate function `I`.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Hard cap on the number of series terms.
pub const SERIES_CAP: usize = 100_000;
/// Consecutive negligible terms required before a series is truncated.
const QUIET_RUN: usize = 10;
/// Fugacity above which density bracketing gives up.
const FUGACITY_CAP: f64 = 1e12;

/// Jump rate `g(k)` of a site holding `k` particles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RateFunction {
    /// `g(k) = k` (independent walkers; Poisson marginals).
    Linear,
    /// `g(k) = 1{k ≥ 1}` (geometric marginals).
    Indicator,
    /// `g(k) = k^exponent`.
    Power { exponent: f64 },
    /// Tabulated values `g(0..len)`; held constant at the last entry beyond the table.
    Table { values: Vec<f64> },
}

impl RateFunction {
    /// Builds a tabulated rate, checking `g(0) = 0` and `g(k) > 0` for `k ≥ 1`.
    pub fn table(values: Vec<f64>) -> Result<Self> {
        check_table(&values)?;
        if values.len() < 2 {
            return Err(Error::InvalidParameter(
                "a rate table needs at least g(0) and g(1)".into(),
            ));
        }
        Ok(RateFunction::Table { values })
    }

    pub fn rate(&self, k: u32) -> f64 {
        if k == 0 {
            return 0.0;
        }
        match self {
            RateFunction::Linear => k as f64,
            RateFunction::Indicator => 1.0,
            RateFunction::Power { exponent } => (k as f64).powf(*exponent),
            RateFunction::Table { values } => {
                let i = (k as usize).min(values.len() - 1);
                values[i]
            }
        }
    }

    /// Radius of convergence of `Σ φ^k / g(k)!`, `None` when infinite.
    pub fn radius(&self) -> Option<f64> {
        match self {
            RateFunction::Linear => None,
            RateFunction::Indicator => Some(1.0),
            RateFunction::Power { exponent } if *exponent > 0.0 => None,
            RateFunction::Power { .. } => Some(1.0),
            RateFunction::Table { values } => values.last().copied(),
        }
    }

    /// Tabulates `g(0..len)`.
    pub fn tabulate(&self, len: usize) -> Vec<f64> {
        (0..len as u32).map(|k| self.rate(k)).collect()
    }

    pub fn name(&self) -> String {
        match self {
            RateFunction::Linear => "linear".into(),
            RateFunction::Indicator => "indicator".into(),
            RateFunction::Power { exponent } => format!("power({exponent})"),
            RateFunction::Table { values } => format!("table[{}]", values.len()),
        }
    }
}

fn check_table(values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(Error::EmptyRateTable);
    }
    for (index, &value) in values.iter().enumerate() {
        if !value.is_finite() || value < 0.0 {
            return Err(Error::InvalidRate { index, value });
        }
    }
    if values[0] != 0.0 {
        return Err(Error::InvalidRate {
            index: 0,
            value: values[0],
        });
    }
    if let Some(k) = values.iter().skip(1).position(|&v| v == 0.0) {
        return Err(Error::DegenerateRate(k + 1));
    }
    Ok(())
}

/// Outcome of checking the two structural conditions on a rate table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationReport {
    pub window: usize,
    /// Largest increment `|g(k+1) − g(k)|` in the window.
    pub a0: f64,
    /// Increments do not grow over the window.
    pub bounded_increments: bool,
    /// Indices `k` whose increment exceeds every increment of the first half of the window.
    pub increment_violations: Vec<usize>,
    /// Gap witness `(k0, a1)` with `g(k) − g(j) > a1` whenever `k ≥ j + k0`.
    pub gap: Option<(usize, f64)>,
    pub note: Option<String>,
}

impl ValidationReport {
    pub fn gap_holds(&self) -> bool {
        self.gap.is_some()
    }
}

/// Checks bounded increments and the gap condition on `g(0..window)`.
///
/// Increments are declared bounded when the largest increment in the second
/// half of the window does not exceed the largest one in the first half.
/// The gap witness is the smallest lag `k0 ≥ 2` for which the minimal
/// lag-`(k0−1)` difference `m` is positive and every lag-`k0` difference
/// exceeds it; `a1 = m`.
pub fn validate_rate_function(g: &[f64], window: usize) -> Result<ValidationReport> {
    check_table(g)?;
    if window > g.len() {
        return Err(Error::WindowTooLarge { window, len: g.len() });
    }
    if window < 2 {
        return Err(Error::InvalidParameter(
            "validation window must cover at least two values".into(),
        ));
    }
    let g = &g[..window];
    let increments: Vec<f64> = g.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    let a0 = increments.iter().copied().fold(0.0, f64::max);
    let half = increments.len().div_ceil(2);
    let head_max = increments[..half].iter().copied().fold(0.0, f64::max);
    let increment_violations: Vec<usize> = increments
        .iter()
        .enumerate()
        .skip(half)
        .filter(|(_, &inc)| inc > head_max)
        .map(|(k, _)| k)
        .collect();
    let bounded_increments = increment_violations.is_empty();

    // suffix_min[i] = min_{k ≥ i} g(k)
    let mut suffix_min = g.to_vec();
    for i in (0..window - 1).rev() {
        suffix_min[i] = suffix_min[i].min(suffix_min[i + 1]);
    }
    let min_diff = |lag: usize| -> f64 {
        (0..window - lag)
            .map(|j| suffix_min[j + lag] - g[j])
            .fold(f64::INFINITY, f64::min)
    };
    let mut gap = None;
    for k0 in 2..window {
        let prev = min_diff(k0 - 1);
        if prev > 0.0 && min_diff(k0) > prev {
            gap = Some((k0, prev));
            break;
        }
    }
    let constant_tail = g[1..].iter().all(|&v| v == g[1]);
    let note = match (gap.is_some(), constant_tail) {
        (false, true) => Some(
            "gap condition fails: g is constant on k >= 1; the constant-rate \
             process has a separately established spectral gap"
                .to_string(),
        ),
        (false, false) => Some("gap condition fails on this window".to_string()),
        _ => None,
    };
    Ok(ValidationReport {
        window,
        a0,
        bounded_increments,
        increment_violations,
        gap,
        note,
    })
}

/// Truncated series `Σ_k φ^k / g(k)!` held in log space.
#[derive(Clone, Debug)]
pub struct Series {
    fugacity: f64,
    /// `log(φ^k / g(k)!)` for `k = 0..=truncation`.
    log_terms: Vec<f64>,
    log_z: f64,
}

impl Series {
    pub fn fugacity(&self) -> f64 {
        self.fugacity
    }

    /// Index of the last term kept.
    pub fn truncation(&self) -> usize {
        self.log_terms.len() - 1
    }

    pub fn log_z(&self) -> f64 {
        self.log_z
    }

    pub fn z(&self) -> f64 {
        self.log_z.exp()
    }

    /// Normalised probabilities `φ^k / (Z g(k)!)`.
    pub fn probabilities(&self) -> impl Iterator<Item = f64> + '_ {
        self.log_terms.iter().map(move |&l| (l - self.log_z).exp())
    }

    pub fn mean(&self) -> f64 {
        self.probabilities().enumerate().map(|(k, p)| k as f64 * p).sum()
    }

    pub fn variance(&self) -> f64 {
        let mean = self.mean();
        self.probabilities()
            .enumerate()
            .map(|(k, p)| (k as f64 - mean).powi(2) * p)
            .sum()
    }
}

/// Probability mass function on `0..probs.len()`.
#[derive(Clone, Debug, PartialEq)]
pub struct Pmf {
    pub probs: Vec<f64>,
}

impl Pmf {
    pub fn mean(&self) -> f64 {
        self.probs.iter().enumerate().map(|(k, p)| k as f64 * p).sum()
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    /// Cumulative sums, normalised so the last entry is exactly 1.
    pub fn cdf(&self) -> Vec<f64> {
        let total = self.total();
        let mut acc = 0.0;
        let mut cdf: Vec<f64> = self
            .probs
            .iter()
            .map(|p| {
                acc += p;
                acc / total
            })
            .collect();
        if let Some(last) = cdf.last_mut() {
            *last = 1.0;
        }
        cdf
    }
}

/// Evaluators for `Z`, `R`, `Φ` and friends built from a rate function.
///
/// `Linear` and `Indicator` rates use closed forms; every other rate goes
/// through the truncated series.
#[derive(Clone, Debug)]
pub struct Thermo {
    rate: RateFunction,
    tol: f64,
    closed_form: bool,
}

impl Thermo {
    pub fn new(rate: RateFunction) -> Self {
        Thermo {
            rate,
            tol: 1e-14,
            closed_form: true,
        }
    }

    /// Forces the series path even for rates with closed forms.
    pub fn series_only(rate: RateFunction) -> Self {
        Thermo {
            closed_form: false,
            ..Thermo::new(rate)
        }
    }

    /// Relative tolerance of the series truncation.
    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn rate(&self) -> &RateFunction {
        &self.rate
    }

    pub fn g(&self, k: u32) -> f64 {
        self.rate.rate(k)
    }

    /// `log g(k)!`.
    pub fn log_factorial(&self, k: u32) -> f64 {
        (1..=k).map(|i| self.rate.rate(i).ln()).sum()
    }

    fn check_fugacity(&self, phi: f64) -> Result<()> {
        if !(phi >= 0.0) || !phi.is_finite() {
            return Err(Error::InvalidParameter(format!("fugacity {phi}")));
        }
        if let Some(r) = self.rate.radius() {
            if phi >= r {
                return Err(Error::Divergence {
                    fugacity: phi,
                    cap: SERIES_CAP,
                });
            }
        }
        Ok(())
    }

    /// Sums the series, stopping after 10 consecutive terms whose relative
    /// contribution falls below `tol`.
    pub fn series(&self, phi: f64) -> Result<Series> {
        self.series_with_tol(phi, self.tol)
    }

    fn series_with_tol(&self, phi: f64, tol: f64) -> Result<Series> {
        self.check_fugacity(phi)?;
        if phi == 0.0 {
            return Ok(Series {
                fugacity: 0.0,
                log_terms: vec![0.0],
                log_z: 0.0,
            });
        }
        let log_phi = phi.ln();
        let log_tol = tol.ln();
        let mut log_terms = vec![0.0];
        let mut log_z = 0.0f64;
        let mut current = 0.0f64;
        let mut quiet = 0;
        for k in 1..=SERIES_CAP as u32 {
            current += log_phi - self.rate.rate(k).ln();
            log_terms.push(current);
            log_z = log_add_exp(log_z, current);
            if current - log_z < log_tol {
                quiet += 1;
                if quiet >= QUIET_RUN {
                    return Ok(Series {
                        fugacity: phi,
                        log_terms,
                        log_z,
                    });
                }
            } else {
                quiet = 0;
            }
        }
        Err(Error::Divergence {
            fugacity: phi,
            cap: SERIES_CAP,
        })
    }

    pub fn log_partition(&self, phi: f64) -> Result<f64> {
        if self.closed_form {
            match self.rate {
                RateFunction::Linear => {
                    self.check_fugacity(phi)?;
                    return Ok(phi);
                }
                RateFunction::Indicator => {
                    self.check_fugacity(phi)?;
                    return Ok(-(-phi).ln_1p());
                }
                _ => {}
            }
        }
        Ok(self.series(phi)?.log_z())
    }

    /// `Z(φ)`.
    pub fn partition_function(&self, phi: f64) -> Result<f64> {
        Ok(self.log_partition(phi)?.exp())
    }

    /// `R(φ)`, the mean occupation under the marginal of fugacity `φ`.
    pub fn density_of_fugacity(&self, phi: f64) -> Result<f64> {
        if self.closed_form {
            match self.rate {
                RateFunction::Linear => {
                    self.check_fugacity(phi)?;
                    return Ok(phi);
                }
                RateFunction::Indicator => {
                    self.check_fugacity(phi)?;
                    return Ok(phi / (1.0 - phi));
                }
                _ => {}
            }
        }
        Ok(self.series(phi)?.mean())
    }

    /// `(R(φ), Var_φ(η))`.
    fn mean_and_variance(&self, phi: f64) -> Result<(f64, f64)> {
        if self.closed_form {
            match self.rate {
                RateFunction::Linear => {
                    self.check_fugacity(phi)?;
                    return Ok((phi, phi));
                }
                RateFunction::Indicator => {
                    self.check_fugacity(phi)?;
                    let q = 1.0 - phi;
                    return Ok((phi / q, phi / (q * q)));
                }
                _ => {}
            }
        }
        let s = self.series(phi)?;
        Ok((s.mean(), s.variance()))
    }

    /// `Φ(ρ) = R⁻¹(ρ)` to `|R(Φ(ρ)) − ρ| ≤ tol · max(1, ρ)`.
    pub fn fugacity_of_density(&self, rho: f64) -> Result<f64> {
        self.fugacity_of_density_tol(rho, 1e-13)
    }

    pub fn fugacity_of_density_tol(&self, rho: f64, tol: f64) -> Result<f64> {
        if !(rho >= 0.0) || !rho.is_finite() {
            return Err(Error::InvalidParameter(format!("density {rho}")));
        }
        if rho == 0.0 {
            return Ok(0.0);
        }
        if self.closed_form {
            match self.rate {
                RateFunction::Linear => return Ok(rho),
                RateFunction::Indicator => return Ok(rho / (1.0 + rho)),
                _ => {}
            }
        }
        let target = tol * rho.max(1.0);
        let radius = self.rate.radius();
        // Bracket: R(lo) < ρ ≤ R(hi).
        let mut lo = 0.0;
        let mut hi = match radius {
            Some(r) => r * 0.5,
            None => 1.0,
        };
        loop {
            let r_hi = self.density_of_fugacity(hi)?;
            if r_hi >= rho {
                break;
            }
            lo = hi;
            hi = match radius {
                Some(r) => 0.5 * (hi + r),
                None => hi * 2.0,
            };
            if hi > FUGACITY_CAP || radius.is_some_and(|r| r - hi < r * 1e-15) {
                return Err(Error::DensityUnreachable(rho));
            }
        }
        // Safeguarded Newton on R(φ) = ρ using R′(φ) = Var/φ.
        let mut phi = 0.5 * (lo + hi);
        for _ in 0..200 {
            let (mean, var) = self.mean_and_variance(phi)?;
            let resid = mean - rho;
            if resid.abs() <= target {
                return Ok(phi);
            }
            if resid > 0.0 {
                hi = phi;
            } else {
                lo = phi;
            }
            let slope = var / phi;
            let newton = phi - resid / slope;
            phi = if slope > 0.0 && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if hi - lo <= f64::EPSILON * hi {
                return Ok(phi);
            }
        }
        Err(Error::Invariant(format!(
            "root finding for density {rho} did not converge"
        )))
    }

    /// `Φ′(ρ) = Φ(ρ) / Var_{Φ(ρ)}(η)`.
    pub fn phi_prime(&self, rho: f64) -> Result<f64> {
        if rho <= 0.0 {
            // Limit ρ → 0⁺: Φ(ρ) ≈ g(1) ρ.
            return Ok(self.g(1));
        }
        let phi = self.fugacity_of_density(rho)?;
        let (_, var) = self.mean_and_variance(phi)?;
        if !(var > 0.0) {
            return Err(Error::Invariant(format!("zero occupation variance at density {rho}")));
        }
        Ok(phi / var)
    }

    /// `(Φ′(ρ), Φ″(ρ))`, the latter by a centred difference of `Φ′`.
    pub fn phi_derivatives(&self, rho: f64) -> Result<(f64, f64)> {
        if !(rho > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "derivatives need a positive density, got {rho}"
            )));
        }
        let d1 = self.phi_prime(rho)?;
        let h = (1e-4 * rho.max(1.0)).min(0.5 * rho);
        let d2 = (self.phi_prime(rho + h)? - self.phi_prime(rho - h)?) / (2.0 * h);
        Ok((d1, d2))
    }

    /// Marginal pmf at fugacity `φ`, truncated where the dropped tail is below `tail_mass / 2`.
    pub fn marginal_distribution(&self, phi: f64, tail_mass: f64) -> Result<Pmf> {
        let series = self.series_with_tol(phi, (tail_mass * 1e-3).min(self.tol))?;
        let probs: Vec<f64> = series.probabilities().collect();
        let mut tail = 0.0;
        let mut cut = probs.len();
        for (k, &p) in probs.iter().enumerate().rev() {
            if tail + p >= 0.5 * tail_mass {
                cut = k + 1;
                break;
            }
            tail += p;
        }
        let mut probs = probs;
        probs.truncate(cut.max(1));
        Ok(Pmf { probs })
    }

    /// `Λ(λ) = log Z(φ e^λ) − log Z(φ)`.
    pub fn cumulant(&self, phi: f64, lambda: f64) -> Result<f64> {
        if phi == 0.0 {
            return Ok(0.0);
        }
        Ok(self.log_partition(phi * lambda.exp())? - self.log_partition(phi)?)
    }

    /// `I(θ) = sup_λ {λθ − Λ(λ)}` by golden-section search; `+∞` when the
    /// supremum is unbounded.
    pub fn rate_function(&self, phi: f64, theta: f64) -> Result<f64> {
        self.check_fugacity(phi)?;
        if theta < 0.0 || !theta.is_finite() {
            return Ok(f64::INFINITY);
        }
        if phi == 0.0 {
            return Ok(if theta == 0.0 { 0.0 } else { f64::INFINITY });
        }
        if theta == 0.0 {
            // λ → −∞ limit.
            return self.log_partition(phi);
        }
        let mean = self.density_of_fugacity(phi)?;
        let objective = |lambda: f64| -> Result<f64> { Ok(lambda * theta - self.cumulant(phi, lambda)?) };
        let lambda_cap = self.rate.radius().map(|r| (r / phi).ln());
        let (mut lo, mut hi) = if theta >= mean { (0.0, 1.0) } else { (-1.0, 0.0) };
        if theta >= mean {
            loop {
                if let Some(cap) = lambda_cap {
                    if hi >= cap {
                        hi = cap - 1e-12 * cap.abs().max(1.0);
                        break;
                    }
                }
                if self.density_of_fugacity(phi * hi.exp())? > theta {
                    break;
                }
                lo = hi;
                hi *= 2.0;
                if hi > 700.0 {
                    return Ok(f64::INFINITY);
                }
            }
        } else {
            loop {
                if self.density_of_fugacity(phi * lo.exp())? < theta {
                    break;
                }
                hi = lo;
                lo *= 2.0;
                if lo < -700.0 {
                    return Ok(f64::INFINITY);
                }
            }
        }
        let best = golden_section_max(lo, hi, 1e-10, objective)?;
        Ok(best.max(0.0))
    }
}

/// Golden-section maximisation of a concave function on `[lo, hi]`.
fn golden_section_max<F>(mut lo: f64, mut hi: f64, tol: f64, f: F) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    while hi - lo > tol {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2)?;
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1)?;
        }
    }
    Ok(f1.max(f2))
}

pub(crate) fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}
