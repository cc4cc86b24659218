//! Browser bindings: a thermodynamics table, a small heat-decay simulation
//! and a spectral-gap scan. Each returns a JSON string.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

use serde::Serialize;
use wasm_bindgen::prelude::*;

use zrp_core::acceptance::heat_spec;
use zrp_core::dynamics::replica_map;
use zrp_core::ensembles::{enumerate_canonical_capped, spectral_gap, Block, GapSolver, SymGenerator};
use zrp_core::kernel::SymKernel;
use zrp_core::observables::empirical_pairing;
use zrp_core::pde::HeatSolution;
use zrp_core::stats::{mean, std_error};
use zrp_core::thermo::{RateFunction, Thermo};
use zrp_core::trig::TrigPolynomial;

/// States enumerated per block before the scan stops.
const STATE_CAP: usize = 5_000;

pub fn parse_rate(name: &str) -> Result<RateFunction, String> {
    match name.split_once(':') {
        None if name == "linear" => Ok(RateFunction::Linear),
        None if name == "indicator" => Ok(RateFunction::Indicator),
        Some(("power", e)) => e
            .trim()
            .parse()
            .map(|exponent| RateFunction::Power { exponent })
            .map_err(|e| format!("power exponent: {e}")),
        _ => Err(format!("unknown rate {name:?}")),
    }
}

#[derive(Serialize)]
struct ThermoPoint {
    rho: f64,
    phi: f64,
    phi_prime: f64,
    z: f64,
}

pub fn thermo_json(rate: &str, rho_max: f64, points: usize) -> Result<String, String> {
    if !(rho_max > 0.0) || points < 2 {
        return Err("need rho_max > 0 and at least two points".into());
    }
    let thermo = Thermo::new(parse_rate(rate)?);
    let rows = (1..=points)
        .map(|i| {
            let rho = rho_max * i as f64 / points as f64;
            let phi = thermo.fugacity_of_density(rho)?;
            Ok(ThermoPoint {
                rho,
                phi,
                phi_prime: thermo.phi_prime(rho)?,
                z: thermo.partition_function(phi)?,
            })
        })
        .collect::<Result<Vec<_>, zrp_core::Error>>()
        .map_err(|e| e.to_string())?;
    serde_json::to_string(&rows).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct DecayPoint {
    t: f64,
    mean: f64,
    std_error: f64,
    reference: f64,
}

/// Mean pairing of `cos 2π(x−y)` against the heat solution on a 2-d torus.
pub fn heat_decay_json(rate: &str, side: usize, replicas: usize, t_max: f64, seed: u64) -> Result<String, String> {
    if !(4..=64).contains(&side) || !(2..=400).contains(&replicas) || !(t_max > 0.0 && t_max <= 0.2) {
        return Err("need 4 ≤ side ≤ 64, 2 ≤ replicas ≤ 400, 0 < t_max ≤ 0.2".into());
    }
    let times: Vec<f64> = (0..=8).map(|i| t_max * i as f64 / 8.0).collect();
    let mut spec = heat_spec(side, times.clone(), replicas, seed);
    spec.rate = parse_rate(rate)?;
    let f = TrigPolynomial::cosine(vec![1, -1], 2.0);
    let thermo = Thermo::new(spec.rate.clone());
    let heat = HeatSolution::new(&spec.profile, spec.rho_star, &spec.kernel, &thermo).map_err(|e| e.to_string())?;
    let values = replica_map(&spec, |_, _, _, eta| {
        empirical_pairing(eta, spec.rho_star, spec.alpha, &f)
    })
    .map_err(|e| e.to_string())?;
    let rows: Vec<DecayPoint> = times
        .iter()
        .enumerate()
        .map(|(s, &t)| {
            let xs: Vec<f64> = values.iter().map(|v| v[s]).collect();
            DecayPoint {
                t,
                mean: mean(&xs),
                std_error: std_error(&xs),
                reference: heat.pairing(&f, t),
            }
        })
        .collect();
    serde_json::to_string(&rows).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct GapPoint {
    n: usize,
    states: usize,
    gap: f64,
}

/// Spectral gap of the symmetric dynamics on `{1..n}` with `j = round(density·n)`.
pub fn gap_scan_json(rate: &str, n_max: usize, density: f64) -> Result<String, String> {
    if !(density > 0.0 && density <= 4.0) || !(2..=40).contains(&n_max) {
        return Err("need 0 < density ≤ 4 and 2 ≤ n_max ≤ 40".into());
    }
    let thermo = Thermo::new(parse_rate(rate)?);
    let s = SymKernel::nearest_neighbor(1);
    let mut rows = Vec::new();
    for n in 2..=n_max {
        let j = (density * n as f64).round() as u32;
        let Ok(space) = enumerate_canonical_capped(Block::line(n), j, &thermo, STATE_CAP) else {
            break;
        };
        let gen = SymGenerator::build(&space, &thermo, &s).map_err(|e| e.to_string())?;
        let gap = spectral_gap(&space, &gen, GapSolver::Auto).map_err(|e| e.to_string())?;
        if let Some(gap) = gap.value() {
            rows.push(GapPoint {
                n,
                states: space.len(),
                gap,
            });
        }
    }
    serde_json::to_string(&rows).map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn thermo_table(rate: &str, rho_max: f64, points: usize) -> Result<String, JsError> {
    thermo_json(rate, rho_max, points).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn heat_decay(rate: &str, side: usize, replicas: usize, t_max: f64, seed: u64) -> Result<String, JsError> {
    heat_decay_json(rate, side, replicas, t_max, seed).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn gap_scan(rate: &str, n_max: usize, density: f64) -> Result<String, JsError> {
    gap_scan_json(rate, n_max, density).map_err(|e| JsError::new(&e))
}
