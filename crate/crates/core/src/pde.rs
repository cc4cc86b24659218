//! Reference solutions of the macroscopic equations.
//!
//! [`HeatSolution`] solves `∂_t ρ = ½ Φ′(ρ*) Σ σ_ij ∂²_ij ρ` exactly mode by
//! mode. [`solve_parabolic_fd`] integrates the nonlinear equation
//! `∂_t ϱ = ½ Σ σ_ij ∂²_ij Φ(ϱ)` with explicit Euler and central differences.

use std::f64::consts::PI;

use serde::Serialize;

use crate::kernel::JumpKernel;
use crate::lattice::Torus;
use crate::thermo::Thermo;
use crate::trig::{Mode, TrigPolynomial};
use crate::{Error, Result};

#[derive(Clone, Debug)]
pub struct HeatSolution {
    initial: TrigPolynomial,
    diffusivity: f64,
    decay: Vec<f64>,
}

impl HeatSolution {
    pub fn new(profile: &TrigPolynomial, rho_star: f64, kernel: &JumpKernel, thermo: &Thermo) -> Result<Self> {
        if profile.dim != kernel.dim() {
            return Err(Error::InvalidParameter("profile and kernel dimensions differ".into()));
        }
        let diffusivity = thermo.phi_prime(rho_star)?;
        let decay = profile
            .modes
            .iter()
            .map(|m| 2.0 * PI * PI * diffusivity * kernel.quadratic_form(&m.k))
            .collect();
        Ok(HeatSolution {
            initial: profile.clone(),
            diffusivity,
            decay,
        })
    }

    /// `Φ′(ρ*)`.
    pub fn diffusivity(&self) -> f64 {
        self.diffusivity
    }

    /// `λ_k = 2π² Φ′(ρ*) kᵀσk` per mode.
    pub fn decay_rates(&self) -> &[f64] {
        &self.decay
    }

    pub fn modes(&self) -> &[Mode] {
        &self.initial.modes
    }

    /// `ρ(t, ·)` as a trigonometric polynomial.
    pub fn at(&self, t: f64) -> TrigPolynomial {
        let modes = self
            .initial
            .modes
            .iter()
            .zip(&self.decay)
            .map(|(m, &l)| Mode::new(m.k.clone(), m.amp * (-l * t).exp(), m.phase))
            .collect();
        TrigPolynomial {
            dim: self.initial.dim,
            offset: self.initial.offset,
            modes,
        }
    }

    pub fn eval(&self, t: f64, u: &[f64]) -> f64 {
        self.initial.offset
            + self
                .initial
                .modes
                .iter()
                .zip(&self.decay)
                .map(|(m, &l)| {
                    let dot: f64 = m.k.iter().zip(u).map(|(&k, &x)| k as f64 * x).sum();
                    m.amp * (-l * t).exp() * (2.0 * PI * dot + m.phase).cos()
                })
                .sum::<f64>()
    }

    /// `∫ ρ(t, u) F(u) du`, exact by orthogonality.
    pub fn pairing(&self, f: &TrigPolynomial, t: f64) -> f64 {
        self.at(t).inner(f)
    }

    /// Amplitude of every mode at time `t`.
    pub fn amplitudes(&self, t: f64) -> Vec<f64> {
        self.initial
            .modes
            .iter()
            .zip(&self.decay)
            .map(|(m, &l)| m.amp * (-l * t).exp())
            .collect()
    }
}

/// Exact heat-equation evaluator at time `t`.
pub fn solve_heat(
    profile: &TrigPolynomial,
    rho_star: f64,
    kernel: &JumpKernel,
    thermo: &Thermo,
    t: f64,
) -> Result<TrigPolynomial> {
    Ok(HeatSolution::new(profile, rho_star, kernel, thermo)?.at(t))
}

/// Uniform periodic grid with `points` nodes per axis, `h = 1/points`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Grid {
    pub dim: usize,
    pub points: usize,
}

impl Grid {
    pub fn spacing(&self) -> f64 {
        1.0 / self.points as f64
    }

    pub fn len(&self) -> usize {
        self.points.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn torus(&self) -> Result<Torus> {
        Torus::new(self.dim, self.points)
    }

    /// Samples `f` at the grid nodes.
    pub fn sample(&self, f: impl Fn(&[f64]) -> f64) -> Result<Vec<f64>> {
        let torus = self.torus()?;
        Ok((0..self.len()).map(|i| f(&torus.position(i))).collect())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ParabolicGridSolution {
    pub grid: Grid,
    pub dt: f64,
    pub steps: usize,
    pub time: f64,
    pub values: Vec<f64>,
    pub initial_mass: f64,
}

impl ParabolicGridSolution {
    /// `h^d Σ ϱ`.
    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.spacing().powi(self.grid.dim as i32)
    }
}

/// Explicit-Euler central-difference solver for `∂_t ϱ = ½ Σ σ_ij ∂²_ij Φ(ϱ)`.
///
/// With `dt = None` the step is chosen at 90% of the stability limit
/// `h² / (2d σ_max max Φ′)`, shrunk so that an integer number of steps lands
/// on `t`. `σ_max` is the largest absolute row sum of `σ`.
pub fn solve_parabolic_fd(
    initial: &[f64],
    grid: Grid,
    kernel: &JumpKernel,
    thermo: &Thermo,
    t: f64,
    dt: Option<f64>,
) -> Result<ParabolicGridSolution> {
    if grid.dim != kernel.dim() {
        return Err(Error::InvalidParameter("grid and kernel dimensions differ".into()));
    }
    if initial.len() != grid.len() {
        return Err(Error::InvalidParameter(format!(
            "{} values for a grid of {}",
            initial.len(),
            grid.len()
        )));
    }
    if let Some((index, &value)) = initial.iter().enumerate().find(|(_, &v)| !(v > 0.0)) {
        return Err(Error::BlowUp { index, value, steps: 0 });
    }
    if !(t >= 0.0) {
        return Err(Error::InvalidParameter(format!("time {t}")));
    }
    let torus = grid.torus()?;
    let h = grid.spacing();
    let d = grid.dim;
    let mut max_slope: f64 = 0.0;
    {
        let lo = initial.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = initial.iter().copied().fold(0.0, f64::max);
        for i in 0..=32 {
            let rho = lo + (hi - lo) * i as f64 / 32.0;
            max_slope = max_slope.max(thermo.phi_prime(rho)?);
        }
    }
    let sigma_max = kernel.sigma_bound();
    let limit = h * h / (2.0 * d as f64 * sigma_max * max_slope);
    let (dt, steps) = match dt {
        Some(dt) if dt > limit => return Err(Error::Cfl { dt, limit }),
        Some(dt) if !(dt > 0.0) => return Err(Error::InvalidParameter(format!("time step {dt}"))),
        Some(dt) => (dt, (t / dt).round() as usize),
        None => {
            let steps = (t / (0.9 * limit)).ceil().max(1.0) as usize;
            (t / steps as f64, steps)
        }
    };

    // stencil: (neighbour table, weight) pairs
    let unit = |i: usize, s: i64| {
        let mut v = vec![0i64; d];
        v[i] = s;
        v
    };
    let mut stencil: Vec<(Vec<usize>, f64)> = Vec::new();
    let table = |disp: &[i64]| -> Vec<usize> { (0..grid.len()).map(|x| torus.shift(x, disp)).collect() };
    let mut centre = 0.0;
    for i in 0..d {
        let s = 0.5 * kernel.sigma_entry(i, i) / (h * h);
        if s != 0.0 {
            stencil.push((table(&unit(i, 1)), s));
            stencil.push((table(&unit(i, -1)), s));
            centre -= 2.0 * s;
        }
        for j in (i + 1)..d {
            // ½(σ_ij + σ_ji) ∂²_ij with the four-point mixed difference
            let s = 0.5 * 2.0 * kernel.sigma_entry(i, j) / (4.0 * h * h);
            if s != 0.0 {
                for (a, b, sign) in [(1, 1, 1.0), (1, -1, -1.0), (-1, 1, -1.0), (-1, -1, 1.0)] {
                    let mut v = vec![0i64; d];
                    v[i] = a;
                    v[j] = b;
                    stencil.push((table(&v), sign * s));
                }
            }
        }
    }

    let flux = |values: &[f64], out: &mut Vec<f64>| -> Result<()> {
        out.clear();
        for &v in values {
            out.push(thermo.fugacity_of_density(v)?);
        }
        Ok(())
    };
    let mut values = initial.to_vec();
    let mut phi = Vec::with_capacity(values.len());
    let initial_mass = values.iter().sum::<f64>() * h.powi(d as i32);
    for step in 0..steps {
        flux(&values, &mut phi)?;
        for x in 0..values.len() {
            let mut lap = centre * phi[x];
            for (nb, w) in &stencil {
                lap += w * phi[nb[x]];
            }
            values[x] += dt * lap;
        }
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, &v)| !(v > 0.0)) {
            return Err(Error::BlowUp {
                index,
                value,
                steps: step + 1,
            });
        }
    }
    Ok(ParabolicGridSolution {
        grid,
        dt,
        steps,
        time: dt * steps as f64,
        values,
        initial_mass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::log_log_slope;
    use crate::thermo::RateFunction;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn kernel2() -> JumpKernel {
        JumpKernel::positive_axes(2)
    }

    #[test]
    fn heat_initial_and_decay() {
        let profile = TrigPolynomial::cosine(vec![1, -1], 1.0);
        let lin = Thermo::new(RateFunction::Linear);
        let heat = HeatSolution::new(&profile, 1.0, &kernel2(), &lin).unwrap();
        assert!((heat.diffusivity() - 1.0).abs() < 1e-12);
        assert!((heat.decay_rates()[0] - 2.0 * PI * PI).abs() < 1e-12);
        let u = [0.13, 0.71];
        assert!((heat.eval(0.0, &u) - profile.eval(&u)).abs() < 1e-15);
        let t = 0.05;
        assert!((heat.amplitudes(t)[0] - (-2.0 * PI * PI * t).exp()).abs() < 1e-15);
        let f = TrigPolynomial::cosine(vec![1, -1], 2.0);
        assert!((heat.pairing(&f, t) - (-2.0 * PI * PI * t).exp()).abs() < 1e-15);
    }

    #[test]
    fn heat_mass_constant() {
        let profile = TrigPolynomial::new(
            2,
            0.4,
            vec![Mode::new(vec![1, -1], 0.7, 0.2), Mode::new(vec![2, -2], -0.3, 1.0)],
        )
        .unwrap();
        let heat = HeatSolution::new(&profile, 2.0, &kernel2(), &Thermo::new(RateFunction::Indicator)).unwrap();
        for &t in &[0.0, 0.01, 0.3] {
            assert!((heat.at(t).integral() - 0.4).abs() < 1e-15);
        }
    }

    #[test]
    fn heat_residual_spot_check() {
        let kernel = JumpKernel::biased_nearest_neighbor(2, 0.8).unwrap();
        let profile = TrigPolynomial::new(
            2,
            0.0,
            vec![Mode::new(vec![1, 2], 0.5, 0.3), Mode::new(vec![3, -1], 0.2, 0.0)],
        )
        .unwrap();
        let thermo = Thermo::new(RateFunction::Indicator);
        let heat = HeatSolution::new(&profile, 0.7, &kernel, &thermo).unwrap();
        let c = 0.5 * heat.diffusivity();
        // fourth-order central first derivative
        fn d4(f: &dyn Fn(f64) -> f64, h: f64) -> f64 {
            (-f(2.0 * h) + 8.0 * f(h) - 8.0 * f(-h) + f(-2.0 * h)) / (12.0 * h)
        }
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let h = 1e-3;
        for _ in 0..20 {
            let t: f64 = rng.random_range(0.01..0.05);
            let u = [rng.random::<f64>(), rng.random::<f64>()];
            let dt = d4(&|s| heat.eval(t + s, &u), h);
            let mut rhs = 0.0;
            for i in 0..2 {
                for j in 0..2 {
                    let d2 = d4(
                        &|a| {
                            d4(
                                &|b| {
                                    let mut v = u;
                                    v[i] += a;
                                    v[j] += b;
                                    heat.eval(t, &v)
                                },
                                h,
                            )
                        },
                        h,
                    );
                    rhs += c * kernel.sigma_entry(i, j) * d2;
                }
            }
            assert!((dt - rhs).abs() < 1e-6, "{dt} vs {rhs}");
        }
    }

    #[test]
    fn fd_constant_is_stationary() {
        let grid = Grid { dim: 2, points: 8 };
        let init = vec![1.5; grid.len()];
        let sol = solve_parabolic_fd(
            &init,
            grid,
            &kernel2(),
            &Thermo::new(RateFunction::Indicator),
            0.05,
            None,
        )
        .unwrap();
        assert!(sol.values.iter().all(|v| (v - 1.5).abs() < 1e-12));
    }

    #[test]
    fn fd_errors() {
        let grid = Grid { dim: 2, points: 8 };
        let lin = Thermo::new(RateFunction::Linear);
        let init = vec![1.0; grid.len()];
        assert!(matches!(
            solve_parabolic_fd(&init, grid, &kernel2(), &lin, 0.1, Some(1.0)),
            Err(Error::Cfl { .. })
        ));
        let mut neg = init.clone();
        neg[3] = -0.1;
        assert!(matches!(
            solve_parabolic_fd(&neg, grid, &kernel2(), &lin, 0.1, None),
            Err(Error::BlowUp { .. })
        ));
    }

    fn fd_vs_heat_error(points: usize) -> f64 {
        let kernel = JumpKernel::biased_nearest_neighbor(2, 0.75).unwrap();
        let lin = Thermo::new(RateFunction::Linear);
        let profile = TrigPolynomial::new(2, 2.0, vec![Mode::new(vec![1, -1], 0.5, 0.4)]).unwrap();
        let grid = Grid { dim: 2, points };
        let init = grid.sample(|u| profile.eval(u)).unwrap();
        let t = 0.02;
        let sol = solve_parabolic_fd(&init, grid, &kernel, &lin, t, None).unwrap();
        assert!((sol.mass() - sol.initial_mass).abs() < 1e-12 * sol.initial_mass);
        let heat = HeatSolution::new(&profile, 2.0, &kernel, &lin).unwrap();
        let exact = grid.sample(|u| heat.eval(sol.time, u)).unwrap();
        sol.values
            .iter()
            .zip(&exact)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn fd_matches_heat_second_order() {
        let sizes = [8.0, 16.0, 32.0];
        let errs: Vec<f64> = sizes.iter().map(|&m| fd_vs_heat_error(m as usize)).collect();
        let hs: Vec<f64> = sizes.iter().map(|m| 1.0 / m).collect();
        let slope = log_log_slope(&hs, &errs).unwrap().slope;
        assert!((1.7..=2.3).contains(&slope), "order {slope}, errors {errs:?}");
        assert!(errs[2] < 1e-3);
    }

    #[test]
    fn linearization_gap_shrinks() {
        let kernel = kernel2();
        let thermo = Thermo::new(RateFunction::Indicator);
        let rho_star = 1.0;
        let alpha = 0.5;
        let profile = TrigPolynomial::cosine(vec![1, -1], 1.0);
        let heat = HeatSolution::new(&profile, rho_star, &kernel, &thermo).unwrap();
        let grid = Grid { dim: 2, points: 32 };
        let t = 0.05;
        let mut gaps = Vec::new();
        for &n in &[16.0f64, 64.0, 256.0] {
            let eps = n.powf(-alpha);
            let init = grid.sample(|u| rho_star + eps * profile.eval(u)).unwrap();
            let sol = solve_parabolic_fd(&init, grid, &kernel, &thermo, t, None).unwrap();
            let gap = sol
                .values
                .iter()
                .zip(grid.sample(|u| heat.eval(sol.time, u)).unwrap())
                .map(|(v, r)| ((v - rho_star) / eps - r).abs())
                .fold(0.0, f64::max);
            gaps.push(gap);
        }
        assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2], "{gaps:?}");
    }
}
