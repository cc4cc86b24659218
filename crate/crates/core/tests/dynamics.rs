use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use zrp_core::acceptance::{diagonal_profile, heat_spec, pairing_csv};
use zrp_core::dynamics::{replica_run, EventEngine};
use zrp_core::kernel::{Jump, JumpKernel};
use zrp_core::lattice::{Configuration, Torus};
use zrp_core::observables::TestFunction;
use zrp_core::stats::{mean, std_error};
use zrp_core::thermo::RateFunction;
use zrp_core::trig::TrigPolynomial;

fn skew_kernel() -> JumpKernel {
    let jump = |x: i64, y: i64, prob: f64| Jump {
        displacement: vec![x, y],
        prob,
    };
    JumpKernel::new(2, vec![jump(1, 0, 0.5), jump(0, 1, 0.3), jump(-1, 1, 0.2)]).unwrap()
}

#[test]
fn single_particle_displacement_moments() {
    let kernel = skew_kernel();
    let torus = Torus::new(2, 8).unwrap();
    let t = 0.05;
    let scale = 64.0 * t;
    let replicas = 4000;
    let mut disp = Vec::with_capacity(replicas);
    for r in 0..replicas {
        let mut eta = Configuration::empty(torus);
        eta.add(0, 1);
        let mut engine =
            EventEngine::new(eta, RateFunction::Linear, &kernel, ChaCha8Rng::seed_from_u64(r as u64)).unwrap();
        let mut d = [0.0f64; 2];
        loop {
            let ev = engine.step().unwrap();
            if engine.clock() > t {
                break;
            }
            let z = &kernel.support()[ev.jump].displacement;
            d[0] += z[0] as f64;
            d[1] += z[1] as f64;
        }
        disp.push(d);
    }
    for i in 0..2 {
        let xs: Vec<f64> = disp.iter().map(|d| d[i]).collect();
        let expected = scale * kernel.drift()[i];
        assert!(
            (mean(&xs) - expected).abs() < 3.0 * std_error(&xs),
            "mean[{i}] {} vs {expected}",
            mean(&xs)
        );
    }
    // centred second moments of a compound Poisson walk: N² t Σ z zᵀ p(z)
    let mu = [scale * kernel.drift()[0], scale * kernel.drift()[1]];
    for (a, b) in [(0, 0), (1, 1), (0, 1)] {
        let prods: Vec<f64> = disp.iter().map(|d| (d[a] - mu[a]) * (d[b] - mu[b])).collect();
        let expected = scale * kernel.sigma_entry(a, b);
        assert!(
            (mean(&prods) - expected).abs() < 3.0 * std_error(&prods),
            "cov[{a}{b}] {} vs {expected}",
            mean(&prods)
        );
    }
}

#[test]
fn initial_pairing_matches_profile() {
    let spec = heat_spec(32, vec![0.0], 400, 11);
    let f = TestFunction::new("F", TrigPolynomial::cosine(vec![1, -1], 2.0));
    let records = replica_run(&spec, std::slice::from_ref(&f)).unwrap();
    let xs: Vec<f64> = records.iter().map(|r| r.value).collect();
    let target = f.poly.inner(&diagonal_profile());
    assert!((target - 1.0).abs() < 1e-15);
    assert!((mean(&xs) - target).abs() < 3.0 * std_error(&xs));
}

#[test]
fn standard_error_scales_with_replicas() {
    let f = TestFunction::new("F", TrigPolynomial::cosine(vec![1, -1], 2.0));
    let se = |replicas: usize| {
        let spec = heat_spec(16, vec![0.0], replicas, 5);
        let xs: Vec<f64> = replica_run(&spec, std::slice::from_ref(&f))
            .unwrap()
            .iter()
            .map(|r| r.value)
            .collect();
        std_error(&xs)
    };
    let base = se(1000);
    let quad = se(4000);
    // quadrupling the replica count halves the standard error
    assert!((quad / base - 0.5).abs() < 0.1, "{}", quad / base);
}

#[test]
fn seed_determinism() {
    let spec = heat_spec(16, vec![0.0, 0.01], 1, 99);
    assert_eq!(pairing_csv(&spec).unwrap(), pairing_csv(&spec).unwrap());
    let mut other = spec.clone();
    other.base_seed = 100;
    assert_ne!(pairing_csv(&spec).unwrap(), pairing_csv(&other).unwrap());
    // a single-replica batch is replica 0 of a larger batch
    let mut many = spec.clone();
    many.replicas = 3;
    let single = pairing_csv(&spec).unwrap();
    let batch = pairing_csv(&many).unwrap();
    for line in single.lines() {
        assert!(batch.lines().any(|l| l == line));
    }
}

#[test]
fn drift_carrying_profile_rejected() {
    let mut spec = heat_spec(16, vec![0.0], 1, 0);
    spec.profile = TrigPolynomial::cosine(vec![1, 0], 1.0);
    assert!(replica_run(&spec, &[]).is_err());
}
