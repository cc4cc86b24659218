//! Exact event-driven simulation of the zero range process with generator
//! `N² 𝓛`.
//!
//! A site `x` fires at rate `N² g(η(x))`; the particle that leaves it jumps
//! by a displacement drawn from `p`. Site rates live in a prefix-sum tree so
//! that sampling and the two updates per event cost `O(log N^d)`. Clock
//! values are macroscopic times.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::fenwick::RateIndex;
use crate::initcond::{check_drift_orthogonal, InitialCondition, InitialSampler};
use crate::kernel::JumpKernel;
use crate::lattice::{Configuration, Torus};
use crate::observables::{empirical_pairing, PairingRecord, TestFunction};
use crate::pde::HeatSolution;
use crate::thermo::{RateFunction, Thermo};
use crate::trig::TrigPolynomial;
use crate::{Error, Result};

/// Events between exact recomputations of the total rate.
pub const RESYNC_INTERVAL: u64 = 1 << 20;

/// Everything that defines a batch of replica runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationSpec {
    pub dim: usize,
    pub side: usize,
    pub rate: RateFunction,
    pub kernel: JumpKernel,
    pub rho_star: f64,
    pub alpha: f64,
    pub profile: TrigPolynomial,
    /// Macroscopic snapshot times, sorted.
    pub snapshot_times: Vec<f64>,
    pub horizon: f64,
    pub replicas: usize,
    pub base_seed: u64,
}

impl SimulationSpec {
    pub fn torus(&self) -> Result<Torus> {
        Torus::new(self.dim, self.side)
    }

    pub fn initial_condition(&self) -> Result<InitialCondition> {
        InitialCondition::new(self.rho_star, self.alpha, self.profile.clone())
    }

    pub fn validate(&self) -> Result<()> {
        self.torus()?;
        let ic = self.initial_condition()?;
        if self.kernel.dim() != self.dim || self.profile.dim != self.dim {
            return Err(Error::InvalidParameter(format!(
                "dimension mismatch: torus {}, kernel {}, profile {}",
                self.dim,
                self.kernel.dim(),
                self.profile.dim
            )));
        }
        if self.replicas == 0 {
            return Err(Error::InvalidParameter("replica count must be at least 1".into()));
        }
        if !(self.horizon >= 0.0) {
            return Err(Error::InvalidParameter(format!("horizon {}", self.horizon)));
        }
        if self.snapshot_times.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidParameter("snapshot times must be sorted".into()));
        }
        if let Some(&bad) = self.snapshot_times.iter().find(|&&t| !(t >= 0.0) || t > self.horizon) {
            return Err(Error::InvalidParameter(format!(
                "snapshot time {bad} outside [0, {}]",
                self.horizon
            )));
        }
        let report = check_drift_orthogonal(&ic.profile, &self.kernel)?;
        if !report.orthogonal {
            return Err(Error::NotDriftOrthogonal(report.failing_modes()));
        }
        if let RateFunction::Table { values } = &self.rate {
            RateFunction::table(values.clone())?;
        }
        Ok(())
    }

    /// Seed of replica `id`.
    pub fn replica_seed(&self, id: usize) -> u64 {
        self.base_seed.wrapping_add(id as u64)
    }
}

/// One jump: the particle at `site` moved to `target` after waiting `dt`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Event {
    pub site: usize,
    pub target: usize,
    /// Index into the kernel support.
    pub jump: usize,
    pub dt: f64,
}

pub struct EventEngine {
    config: Configuration,
    rate: RateFunction,
    rate_table: Vec<f64>,
    index: RateIndex,
    total_rate: f64,
    clock: f64,
    cumulative: Vec<f64>,
    neighbors: Vec<u32>,
    jumps: usize,
    speedup: f64,
    rng: ChaCha8Rng,
    events: u64,
    pending: Option<f64>,
}

impl EventEngine {
    /// Builds an engine for `config` on the torus described by `spec`.
    pub fn build(config: Configuration, spec: &SimulationSpec, rng: ChaCha8Rng) -> Result<Self> {
        spec.torus()?.check_same(&config.torus())?;
        Self::new(config, spec.rate.clone(), &spec.kernel, rng)
    }

    pub fn new(config: Configuration, rate: RateFunction, kernel: &JumpKernel, rng: ChaCha8Rng) -> Result<Self> {
        let torus = config.torus();
        if kernel.dim() != torus.dim() {
            return Err(Error::TorusMismatch {
                expected: format!("d={}", kernel.dim()),
                found: format!("d={}", torus.dim()),
            });
        }
        let jumps = kernel.support().len();
        let mut neighbors = Vec::with_capacity(torus.sites() * jumps);
        for site in 0..torus.sites() {
            for j in kernel.support() {
                neighbors.push(torus.shift(site, &j.displacement) as u32);
            }
        }
        let mut acc = 0.0;
        let mut cumulative: Vec<f64> = kernel
            .support()
            .iter()
            .map(|j| {
                acc += j.prob;
                acc
            })
            .collect();
        *cumulative.last_mut().expect("kernel has support") = 1.0;
        let max_k = config.occupancy().iter().copied().max().unwrap_or(0);
        let rate_table: Vec<f64> = (0..=max_k + 1).map(|k| rate.rate(k)).collect();
        let rates: Vec<f64> = config.occupancy().iter().map(|&k| rate_table[k as usize]).collect();
        let index = RateIndex::new(&rates);
        let total_rate = index.recomputed_total();
        let side = torus.side() as f64;
        Ok(EventEngine {
            config,
            rate,
            rate_table,
            index,
            total_rate,
            clock: 0.0,
            cumulative,
            neighbors,
            jumps,
            speedup: side * side,
            rng,
            events: 0,
            pending: None,
        })
    }

    pub fn config(&self) -> &Configuration {
        &self.config
    }

    pub fn into_config(self) -> Configuration {
        self.config
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn total_rate(&self) -> f64 {
        self.total_rate
    }

    pub fn events(&self) -> u64 {
        self.events
    }

    fn g(&mut self, k: u32) -> f64 {
        let k = k as usize;
        while self.rate_table.len() <= k {
            let next = self.rate_table.len() as u32;
            self.rate_table.push(self.rate.rate(next));
        }
        self.rate_table[k]
    }

    fn draw_wait(&mut self) -> f64 {
        let u: f64 = self.rng.random();
        -(1.0 - u).ln() / (self.speedup * self.total_rate)
    }

    /// Fires the next event.
    pub fn step(&mut self) -> Result<Event> {
        if self.total_rate <= 0.0 {
            return Err(Error::Absorbing);
        }
        let at = match self.pending.take() {
            Some(t) => t,
            None => self.clock + self.draw_wait(),
        };
        let dt = at - self.clock;
        self.clock = at;
        Ok(self.fire(dt))
    }

    fn fire(&mut self, dt: f64) -> Event {
        let target_mass = self.rng.random::<f64>() * self.total_rate;
        let site = self.index.find(target_mass);
        let u: f64 = self.rng.random();
        let jump = self.cumulative.partition_point(|&c| c <= u).min(self.jumps - 1);
        let target = self.neighbors[site * self.jumps + jump] as usize;
        if target != site {
            self.config
                .move_particle_in_place(site, target)
                .expect("sampled site has positive rate");
            let a = self.g(self.config.get(site));
            let b = self.g(self.config.get(target));
            self.total_rate += (a - self.index.get(site)) + (b - self.index.get(target));
            self.index.set(site, a);
            self.index.set(target, b);
        }
        self.events += 1;
        if self.events.is_multiple_of(RESYNC_INTERVAL) {
            self.resync();
        }
        Event { site, target, jump, dt }
    }

    /// Rebuilds the rate tree and total rate exactly.
    pub fn resync(&mut self) {
        self.index.rebuild();
        self.total_rate = self.index.recomputed_total();
    }

    /// Relative drift between the incremental and recomputed total rate.
    pub fn rate_drift(&self) -> f64 {
        let exact = self.index.recomputed_total();
        if exact == 0.0 {
            return self.total_rate.abs();
        }
        (self.total_rate - exact).abs() / exact
    }

    /// Applies every event with time `≤ t_target`, then sets the clock to
    /// `t_target`. The next event time stays pending, so the trajectory does
    /// not depend on where snapshots are taken.
    pub fn run_until(&mut self, t_target: f64) -> Result<&Configuration> {
        if t_target < self.clock {
            return Err(Error::InvalidParameter(format!(
                "target time {t_target} is before the clock {}",
                self.clock
            )));
        }
        loop {
            if self.total_rate <= 0.0 {
                self.pending = None;
                break;
            }
            let at = match self.pending {
                Some(t) => t,
                None => {
                    let t = self.clock + self.draw_wait();
                    self.pending = Some(t);
                    t
                }
            };
            if at > t_target {
                break;
            }
            self.pending = None;
            let dt = at - self.clock;
            self.clock = at;
            self.fire(dt);
        }
        self.clock = t_target;
        Ok(&self.config)
    }
}

/// Runs every replica and applies `observe` at each snapshot time.
///
/// Returns `[replica][snapshot]`. Replica `i` uses the seed
/// `base_seed + i` for both its initial sample and its dynamics, so results
/// do not depend on thread scheduling.
pub fn replica_map<T, F>(spec: &SimulationSpec, observe: F) -> Result<Vec<Vec<T>>>
where
    T: Send,
    F: Fn(usize, usize, f64, &Configuration) -> T + Sync,
{
    spec.validate()?;
    let torus = spec.torus()?;
    let thermo = Thermo::new(spec.rate.clone());
    let sampler = InitialSampler::new(torus, &spec.initial_condition()?, &thermo)?;
    (0..spec.replicas)
        .into_par_iter()
        .map(|id| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.replica_seed(id));
            let eta0 = sampler.sample(&mut rng);
            let mut engine = EventEngine::build(eta0, spec, rng)?;
            let mut out = Vec::with_capacity(spec.snapshot_times.len());
            for (s, &t) in spec.snapshot_times.iter().enumerate() {
                let eta = engine.run_until(t)?;
                out.push(observe(id, s, t, eta));
            }
            Ok(out)
        })
        .collect()
}

/// Pairing records for every replica, snapshot and test function, with
/// reference values from the exact heat-equation solution.
pub fn replica_run(spec: &SimulationSpec, tests: &[TestFunction]) -> Result<Vec<PairingRecord>> {
    let thermo = Thermo::new(spec.rate.clone());
    let heat = HeatSolution::new(&spec.profile, spec.rho_star, &spec.kernel, &thermo)?;
    let references: Vec<Vec<f64>> = spec
        .snapshot_times
        .iter()
        .map(|&t| tests.iter().map(|f| heat.pairing(&f.poly, t)).collect())
        .collect();
    let per_replica = replica_map(spec, |id, s, t, eta| {
        tests
            .iter()
            .enumerate()
            .map(|(fi, f)| PairingRecord {
                replica: id,
                side: spec.side,
                alpha: spec.alpha,
                time: t,
                test_function: f.name.clone(),
                value: empirical_pairing(eta, spec.rho_star, spec.alpha, &f.poly),
                reference: references[s][fi],
            })
            .collect::<Vec<_>>()
    })?;
    Ok(per_replica.into_iter().flatten().flatten().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::Jump;

    fn ring_spec(side: usize) -> SimulationSpec {
        SimulationSpec {
            dim: 1,
            side,
            rate: RateFunction::Linear,
            kernel: JumpKernel::positive_axes(1),
            rho_star: 1.0,
            alpha: 0.5,
            profile: TrigPolynomial::zero(1),
            snapshot_times: vec![0.0, 0.01],
            horizon: 0.01,
            replicas: 2,
            base_seed: 3,
        }
    }

    #[test]
    fn build_examples() {
        let spec = ring_spec(4);
        let t = spec.torus().unwrap();
        let rng = ChaCha8Rng::seed_from_u64(0);
        let e = EventEngine::build(Configuration::empty(t), &spec, rng.clone()).unwrap();
        assert_eq!(e.total_rate(), 0.0);
        let e = EventEngine::build(Configuration::constant(t, 1), &spec, rng.clone()).unwrap();
        assert_eq!(e.total_rate(), 4.0);
        let mut single = Configuration::empty(t);
        single.add(0, 1);
        let e = EventEngine::build(single, &spec, rng.clone()).unwrap();
        assert_eq!(e.total_rate(), 1.0);
        let other = Torus::new(1, 5).unwrap();
        assert!(matches!(
            EventEngine::build(Configuration::empty(other), &spec, rng),
            Err(Error::TorusMismatch { .. })
        ));
    }

    #[test]
    fn deterministic_kernel_moves_right() {
        let spec = ring_spec(4);
        let t = spec.torus().unwrap();
        let eta = Configuration::from_occupancy(t, vec![1, 0, 0, 0]).unwrap();
        let mut e = EventEngine::build(eta, &spec, ChaCha8Rng::seed_from_u64(1)).unwrap();
        let ev = e.step().unwrap();
        assert_eq!((ev.site, ev.target), (0, 1));
        assert_eq!(e.config().occupancy(), &[0, 1, 0, 0]);
        assert!(ev.dt > 0.0);
    }

    #[test]
    fn empty_torus_is_absorbing() {
        let spec = ring_spec(4);
        let t = spec.torus().unwrap();
        let mut e = EventEngine::build(Configuration::empty(t), &spec, ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert!(matches!(e.step(), Err(Error::Absorbing)));
        e.run_until(2.5).unwrap();
        assert_eq!(e.clock(), 2.5);
    }

    #[test]
    fn run_until_now_is_identity() {
        let spec = ring_spec(6);
        let t = spec.torus().unwrap();
        let eta = Configuration::constant(t, 2);
        let mut e = EventEngine::build(eta.clone(), &spec, ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(e.run_until(0.0).unwrap(), &eta);
        assert_eq!(e.events(), 0);
        assert!(e.run_until(-1.0).is_err());
    }

    #[test]
    fn snapshots_do_not_perturb_trajectory() {
        let spec = ring_spec(8);
        let t = spec.torus().unwrap();
        let eta = Configuration::constant(t, 3);
        let mut a = EventEngine::build(eta.clone(), &spec, ChaCha8Rng::seed_from_u64(5)).unwrap();
        let mut b = EventEngine::build(eta, &spec, ChaCha8Rng::seed_from_u64(5)).unwrap();
        a.run_until(0.2).unwrap();
        for i in 1..=20 {
            b.run_until(0.01 * i as f64).unwrap();
        }
        assert_eq!(a.config(), b.config());
        assert_eq!(a.events(), b.events());
    }

    #[test]
    fn conservation_and_rate_sync() {
        let mut spec = ring_spec(16);
        spec.rate = RateFunction::Indicator;
        spec.dim = 2;
        spec.kernel = JumpKernel::new(
            2,
            vec![
                Jump {
                    displacement: vec![1, 0],
                    prob: 0.5,
                },
                Jump {
                    displacement: vec![-1, 1],
                    prob: 0.3,
                },
                Jump {
                    displacement: vec![0, -2],
                    prob: 0.2,
                },
            ],
        )
        .unwrap();
        let t = spec.torus().unwrap();
        let eta = Configuration::constant(t, 2);
        let total = eta.total();
        let mut e = EventEngine::build(eta, &spec, ChaCha8Rng::seed_from_u64(2)).unwrap();
        for _ in 0..50_000 {
            e.step().unwrap();
        }
        assert_eq!(e.config().recount(), total);
        assert!(e.rate_drift() < 1e-9);
    }

    #[test]
    fn replica_seeds_are_reproducible() {
        let spec = ring_spec(8);
        let tests = vec![TestFunction::new("one", TrigPolynomial::new(1, 1.0, vec![]).unwrap())];
        let a = replica_run(&spec, &tests).unwrap();
        let b = replica_run(&spec, &tests).unwrap();
        assert_eq!(a, b);
        let mut single = spec.clone();
        single.replicas = 1;
        let c = replica_run(&single, &tests).unwrap();
        assert_eq!(&a[..c.len()], &c[..]);
    }

    #[test]
    fn spec_validation() {
        let mut spec = ring_spec(8);
        spec.snapshot_times = vec![0.02, 0.01];
        assert!(spec.validate().is_err());
        let mut spec = ring_spec(8);
        spec.profile = TrigPolynomial::cosine(vec![1], 0.5);
        assert!(matches!(spec.validate(), Err(Error::NotDriftOrthogonal(_))));
        let mut spec = ring_spec(8);
        spec.alpha = 1.0;
        assert!(spec.validate().is_err());
        let mut spec = ring_spec(8);
        spec.snapshot_times = vec![0.5];
        assert!(spec.validate().is_err());
    }
}
