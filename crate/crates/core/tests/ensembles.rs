use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use zrp_core::ensembles::{enumerate_canonical, lsi_ratio_scan, spectral_gap, Block, GapSolver, SymGenerator};
use zrp_core::kernel::SymKernel;
use zrp_core::stats::log_log_slope;
use zrp_core::thermo::{RateFunction, Thermo};

#[test]
fn detailed_balance_exhaustive() {
    for rate in [
        RateFunction::Linear,
        RateFunction::Indicator,
        RateFunction::Power { exponent: 0.5 },
    ] {
        let th = Thermo::new(rate);
        for (block, j) in [(Block::line(5), 8u32), (Block::line(7), 7), (Block::cube(2, 1), 4)] {
            let space = enumerate_canonical(block, j, &th).unwrap();
            assert!(space.len() <= 10_000);
            let gen = SymGenerator::build(&space, &th, &SymKernel::nearest_neighbor(block.dim)).unwrap();
            assert!(gen.detailed_balance_defect(&space) < 1e-12);
            for a in 0..space.len() {
                let out: f64 = gen.transitions(a).iter().map(|&(_, r)| r).sum();
                assert!((out - gen.exit_rate(a)).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn square_block_gap_independent_walkers() {
    // for g(k)=k the gap is the single-walker gap on the 3×3 grid with
    // rate 1/4 per bond: (1/4)(2 − 2cos(π/3)) = 1/4
    let th = Thermo::new(RateFunction::Linear);
    let block = Block::cube(2, 1);
    for j in 1..=3 {
        let space = enumerate_canonical(block, j, &th).unwrap();
        let gen = SymGenerator::build(&space, &th, &SymKernel::nearest_neighbor(2)).unwrap();
        let gap = spectral_gap(&space, &gen, GapSolver::Dense).unwrap().value().unwrap();
        assert!((gap - 0.25).abs() < 1e-10, "j={j}: {gap}");
    }
}

#[test]
fn gap_uniform_in_particle_number() {
    // g(k) = k + 1 for k ≥ 1 on the occupations reached, increments bounded below
    let table: Vec<f64> = (0..=10).map(|k| if k == 0 { 0.0 } else { k as f64 + 1.0 }).collect();
    let th = Thermo::new(RateFunction::table(table).unwrap());
    let s = SymKernel::nearest_neighbor(1);
    let gaps: Vec<f64> = (1..=8)
        .map(|j| {
            let space = enumerate_canonical(Block::line(5), j, &th).unwrap();
            let gen = SymGenerator::build(&space, &th, &s).unwrap();
            spectral_gap(&space, &gen, GapSolver::Auto).unwrap().value().unwrap()
        })
        .collect();
    let lo = gaps.iter().copied().fold(f64::INFINITY, f64::min);
    assert!(lo > 0.09, "{gaps:?}");
}

#[test]
fn indicator_gap_is_exclusion_gap() {
    // constant rates map to exclusion on n + j − 1 sites, whose gap is the
    // single-particle one: 1 − cos(π / (n + j − 1))
    let th = Thermo::new(RateFunction::Indicator);
    let s = SymKernel::nearest_neighbor(1);
    for j in 1..=8u32 {
        let n = 5;
        let space = enumerate_canonical(Block::line(n), j, &th).unwrap();
        let gen = SymGenerator::build(&space, &th, &s).unwrap();
        let gap = spectral_gap(&space, &gen, GapSolver::Auto).unwrap().value().unwrap();
        let expected = 1.0 - (std::f64::consts::PI / (n + j as usize - 1) as f64).cos();
        assert!((gap - expected).abs() < 1e-9, "j={j}: {gap} vs {expected}");
    }
}

#[test]
fn lsi_lower_bound_growth() {
    let th = Thermo::new(RateFunction::Linear);
    let s = SymKernel::nearest_neighbor(1);
    let ns = [3usize, 5, 7];
    let mut bounds = Vec::new();
    for &n in &ns {
        let space = enumerate_canonical(Block::line(n), n as u32, &th).unwrap();
        let gen = SymGenerator::build(&space, &th, &s).unwrap();
        let gap = spectral_gap(&space, &gen, GapSolver::Auto).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
        let scan = lsi_ratio_scan(&space, &gen, &gap, 1000, &[], &mut rng);
        // the scan always reaches the linearised value 2/gap
        assert!(scan.lower_bound >= 2.0 / gap.value().unwrap() * 0.99);
        bounds.push(scan.lower_bound);
    }
    let xs: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
    let slope = log_log_slope(&xs, &bounds).unwrap().slope;
    assert!(slope <= 2.4, "slope {slope}, bounds {bounds:?}");
}

#[test]
fn lanczos_on_larger_space() {
    let th = Thermo::new(RateFunction::Indicator);
    let space = enumerate_canonical(Block::line(8), 8, &th).unwrap();
    assert_eq!(space.len(), 6435);
    let gen = SymGenerator::build(&space, &th, &SymKernel::nearest_neighbor(1)).unwrap();
    let gap = spectral_gap(&space, &gen, GapSolver::Lanczos).unwrap().value().unwrap();
    assert!(gap > 0.0 && gap < 1.0);
}
