//! Canonical block measures on non-periodic cubes: enumeration, the
//! symmetrised block generator, spectral gaps, equivalence of ensembles,
//! canonical variances, log-Sobolev ratio scans and exact tails.

mod lanczos;

use std::collections::VecDeque;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::kernel::SymKernel;
use crate::thermo::{Pmf, Thermo};
use crate::{Error, Result};

pub use lanczos::{lowest_eigenpair, LowestPair};

/// Default cap on the number of enumerated states.
pub const ENUMERATION_CAP: usize = 2_000_000;
/// Above this many states the gap is computed iteratively.
pub const DENSE_CAP: usize = 4_000;
/// Cap on `n_sites · k_cut` for exact convolution.
pub const CONVOLUTION_CAP: usize = 10_000_000;

/// A non-periodic box `{0, …, side−1}^dim`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub dim: usize,
    pub side: usize,
}

impl Block {
    /// The cube `Λ_ℓ^d` with `(2ℓ+1)^d` sites.
    pub fn cube(dim: usize, radius: usize) -> Self {
        Block {
            dim,
            side: 2 * radius + 1,
        }
    }

    /// A one-dimensional segment of `n` sites.
    pub fn line(n: usize) -> Self {
        Block { dim: 1, side: n }
    }

    pub fn sites(&self) -> usize {
        self.side.pow(self.dim as u32)
    }

    pub fn coords(&self, mut site: usize) -> Vec<i64> {
        let mut c = vec![0; self.dim];
        for slot in c.iter_mut().rev() {
            *slot = (site % self.side) as i64;
            site /= self.side;
        }
        c
    }

    fn index(&self, coords: &[i64]) -> Option<usize> {
        let mut idx = 0;
        for &c in coords {
            if c < 0 || c >= self.side as i64 {
                return None;
            }
            idx = idx * self.side + c as usize;
        }
        Some(idx)
    }

    /// The site playing the role of the origin in `Λ_ℓ^d`.
    pub fn center(&self) -> usize {
        let c = vec![(self.side / 2) as i64; self.dim];
        self.index(&c).expect("center lies in the block")
    }

    /// For each site, the in-block targets `y` with `s(y − x) > 0`.
    pub fn bonds(&self, s: &SymKernel) -> Result<Vec<Vec<(usize, f64)>>> {
        if s.dim != self.dim {
            return Err(Error::InvalidParameter(format!(
                "kernel dimension {} on a {}-dimensional block",
                s.dim, self.dim
            )));
        }
        Ok((0..self.sites())
            .map(|x| {
                let cx = self.coords(x);
                s.jumps
                    .iter()
                    .filter(|j| j.prob > 0.0)
                    .filter_map(|j| {
                        let cy: Vec<i64> = cx.iter().zip(&j.displacement).map(|(a, b)| a + b).collect();
                        self.index(&cy).map(|y| (y, j.prob))
                    })
                    .collect()
            })
            .collect())
    }
}

/// Number of compositions of `total` into `parts` nonnegative parts.
fn compositions(parts: usize, total: usize) -> u128 {
    if parts == 0 {
        return u128::from(total == 0);
    }
    // C(total + parts − 1, parts − 1) computed incrementally
    let k = (parts - 1).min(total) as u128;
    let n = (total + parts - 1) as u128;
    let mut c: u128 = 1;
    for i in 0..k {
        c = c * (n - i) / (i + 1);
    }
    c
}

/// `Ω_{ℓ,j}` with its canonical weights.
#[derive(Clone, Debug)]
pub struct CanonicalSpace {
    block: Block,
    particles: u32,
    states: Vec<u16>,
    weights: Vec<f64>,
    /// `count[p][s]`: compositions of `s` into `p` parts.
    count: Vec<Vec<usize>>,
}

/// Enumerates all compositions of `j` over the block sites in lexicographic
/// order with weights `∝ Π 1/g(η(x))!`.
pub fn enumerate_canonical(block: Block, j: u32, thermo: &Thermo) -> Result<CanonicalSpace> {
    enumerate_canonical_capped(block, j, thermo, ENUMERATION_CAP)
}

pub fn enumerate_canonical_capped(block: Block, j: u32, thermo: &Thermo, cap: usize) -> Result<CanonicalSpace> {
    let n = block.sites();
    if n == 0 {
        return Err(Error::InvalidParameter("block without sites".into()));
    }
    if j > u16::MAX as u32 {
        return Err(Error::InvalidParameter(format!("{j} particles")));
    }
    let total = compositions(n, j as usize);
    if total > cap as u128 {
        return Err(Error::TooLarge { count: total, cap });
    }
    let ju = j as usize;
    let count: Vec<Vec<usize>> = (0..=n)
        .map(|p| (0..=ju).map(|s| compositions(p, s) as usize).collect())
        .collect();
    let log_fact: Vec<f64> = (0..=j).map(|k| thermo.log_factorial(k)).collect();
    if log_fact.iter().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateRate(
            log_fact.iter().position(|v| !v.is_finite()).unwrap_or(0),
        ));
    }
    let size = total as usize;
    let mut states = Vec::with_capacity(size * n);
    let mut log_w = Vec::with_capacity(size);
    let mut eta = vec![0u16; n];
    fill(&mut eta, 0, j as u16, &log_fact, &mut states, &mut log_w);
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut weights: Vec<f64> = log_w.iter().map(|l| (l - max).exp()).collect();
    let z: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= z);
    Ok(CanonicalSpace {
        block,
        particles: j,
        states,
        weights,
        count,
    })
}

fn fill(eta: &mut [u16], pos: usize, remaining: u16, log_fact: &[f64], states: &mut Vec<u16>, log_w: &mut Vec<f64>) {
    if pos + 1 == eta.len() {
        eta[pos] = remaining;
        states.extend_from_slice(eta);
        log_w.push(-eta.iter().map(|&k| log_fact[k as usize]).sum::<f64>());
        return;
    }
    // lexicographically decreasing in the first coordinate
    for v in (0..=remaining).rev() {
        eta[pos] = v;
        fill(eta, pos + 1, remaining - v, log_fact, states, log_w);
    }
}

impl CanonicalSpace {
    pub fn block(&self) -> Block {
        self.block
    }

    pub fn n_sites(&self) -> usize {
        self.block.sites()
    }

    pub fn particles(&self) -> u32 {
        self.particles
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn state(&self, i: usize) -> &[u16] {
        let n = self.n_sites();
        &self.states[i * n..(i + 1) * n]
    }

    pub fn states(&self) -> impl Iterator<Item = &[u16]> {
        self.states.chunks_exact(self.n_sites())
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Position of `eta` in the enumeration order.
    pub fn rank(&self, eta: &[u16]) -> usize {
        let n = eta.len();
        let mut rank = 0;
        let mut remaining = self.particles as usize;
        for (i, &v) in eta.iter().enumerate().take(n - 1) {
            let v = v as usize;
            // states with a larger value here come first
            for bigger in v + 1..=remaining {
                rank += self.count[n - i - 1][remaining - bigger];
            }
            remaining -= v;
        }
        rank
    }

    /// Exact `E_{ν_{ℓ,j}}[f]`.
    pub fn expectation<F: Fn(&[u16]) -> f64>(&self, f: F) -> f64 {
        self.states().zip(&self.weights).map(|(s, w)| w * f(s)).sum()
    }

    /// Marginal law of the occupation at `site`, indexed by `k = 0..=j`.
    pub fn marginal(&self, site: usize) -> Vec<f64> {
        let mut m = vec![0.0; self.particles as usize + 1];
        for (s, w) in self.states().zip(&self.weights) {
            m[s[site] as usize] += w;
        }
        m
    }
}

/// `E_{ν_{ℓ,j}}[f]` for a per-state observable given as a vector.
pub fn canonical_expectation(space: &CanonicalSpace, observable: &[f64]) -> Result<f64> {
    if observable.len() != space.len() {
        return Err(Error::InvalidParameter(format!(
            "observable has {} values for {} states",
            observable.len(),
            space.len()
        )));
    }
    Ok(space.weights.iter().zip(observable).map(|(w, f)| w * f).sum())
}

/// `E_{ν_{ℓ,j}}[g(η(0))]` at the block center.
pub fn canonical_mean_rate(space: &CanonicalSpace, thermo: &Thermo) -> f64 {
    let c = space.block.center();
    space.expectation(|s| thermo.g(s[c] as u32))
}

/// `𝓛_ℓ^s` on `Ω_{ℓ,j}` as a sparse jump-rate table.
#[derive(Clone, Debug)]
pub struct SymGenerator {
    /// `rows[a]`: `(b, rate(a → b))` for `b ≠ a`.
    rows: Vec<Vec<(u32, f64)>>,
    exit: Vec<f64>,
}

impl SymGenerator {
    pub fn build(space: &CanonicalSpace, thermo: &Thermo, s: &SymKernel) -> Result<Self> {
        let bonds = space.block.bonds(s)?;
        let mut rows = Vec::with_capacity(space.len());
        let mut exit = Vec::with_capacity(space.len());
        let mut eta: Vec<u16> = vec![0; space.n_sites()];
        for a in 0..space.len() {
            eta.copy_from_slice(space.state(a));
            let mut row = Vec::new();
            let mut out = 0.0;
            for (x, targets) in bonds.iter().enumerate() {
                if eta[x] == 0 {
                    continue;
                }
                let gx = thermo.g(eta[x] as u32);
                for &(y, sw) in targets {
                    let rate = gx * sw;
                    if rate <= 0.0 {
                        continue;
                    }
                    eta[x] -= 1;
                    eta[y] += 1;
                    let b = space.rank(&eta);
                    eta[x] += 1;
                    eta[y] -= 1;
                    row.push((b as u32, rate));
                    out += rate;
                }
            }
            rows.push(row);
            exit.push(out);
        }
        Ok(SymGenerator { rows, exit })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn transitions(&self, a: usize) -> &[(u32, f64)] {
        &self.rows[a]
    }

    pub fn exit_rate(&self, a: usize) -> f64 {
        self.exit[a]
    }

    /// `(𝓛 f)(a) = Σ_b rate(a→b) (f(b) − f(a))`.
    pub fn apply(&self, f: &[f64], out: &mut [f64]) {
        for (a, row) in self.rows.iter().enumerate() {
            out[a] = row.iter().map(|&(b, r)| r * (f[b as usize] - f[a])).sum();
        }
    }

    /// Largest detailed-balance defect `|ν(a) r(a→b) − ν(b) r(b→a)|`
    /// relative to the flux.
    pub fn detailed_balance_defect(&self, space: &CanonicalSpace) -> f64 {
        let w = space.weights();
        let mut worst: f64 = 0.0;
        for (a, row) in self.rows.iter().enumerate() {
            for &(b, r) in row {
                let back = self.rows[b as usize]
                    .iter()
                    .find(|&&(c, _)| c as usize == a)
                    .map_or(0.0, |&(_, r)| r);
                let fwd = w[a] * r;
                let rev = w[b as usize] * back;
                worst = worst.max((fwd - rev).abs() / fwd.max(rev));
            }
        }
        worst
    }

    pub fn is_connected(&self) -> bool {
        if self.rows.is_empty() {
            return true;
        }
        let mut seen = vec![false; self.rows.len()];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut reached = 1;
        while let Some(a) = queue.pop_front() {
            for &(b, _) in &self.rows[a] {
                if !seen[b as usize] {
                    seen[b as usize] = true;
                    reached += 1;
                    queue.push_back(b as usize);
                }
            }
        }
        reached == self.rows.len()
    }

    /// Symmetrised entry `√(r(a→b) r(b→a))` summed into `−S`.
    fn symmetric_apply(&self, sym: &[Vec<(u32, f64)>], x: &[f64], y: &mut [f64]) {
        for a in 0..self.rows.len() {
            let mut v = self.exit[a] * x[a];
            for &(b, c) in &sym[a] {
                v -= c * x[b as usize];
            }
            y[a] = v;
        }
    }

    fn symmetric_entries(&self, space: &CanonicalSpace) -> Vec<Vec<(u32, f64)>> {
        let w = space.weights();
        self.rows
            .iter()
            .enumerate()
            .map(|(a, row)| {
                row.iter()
                    .map(|&(b, r)| (b, r * (w[a] / w[b as usize]).sqrt()))
                    .collect()
            })
            .collect()
    }

    /// Dirichlet form `½ Σ_a ν(a) Σ_b r(a→b) (f(b) − f(a))²`.
    pub fn dirichlet_form(&self, space: &CanonicalSpace, f: &[f64]) -> f64 {
        let w = space.weights();
        0.5 * self
            .rows
            .iter()
            .enumerate()
            .map(|(a, row)| {
                w[a] * row
                    .iter()
                    .map(|&(b, r)| r * (f[b as usize] - f[a]).powi(2))
                    .sum::<f64>()
            })
            .sum::<f64>()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapSolver {
    Auto,
    Dense,
    Lanczos,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Gap {
    /// One-point space: no nonzero eigenvalue.
    Degenerate,
    Value {
        gap: f64,
        /// `κ = 1/gap`.
        relaxation: f64,
        /// Gap eigenfunction of `𝓛` (not of the symmetrised operator).
        eigenfunction: Vec<f64>,
    },
}

impl Gap {
    pub fn value(&self) -> Option<f64> {
        match self {
            Gap::Degenerate => None,
            Gap::Value { gap, .. } => Some(*gap),
        }
    }
}

/// Smallest nonzero eigenvalue of `−𝓛_ℓ^s` in `L²(ν_{ℓ,j})`.
pub fn spectral_gap(space: &CanonicalSpace, generator: &SymGenerator, solver: GapSolver) -> Result<Gap> {
    let n = space.len();
    if n == 1 {
        return Ok(Gap::Degenerate);
    }
    if !generator.is_connected() {
        return Err(Error::Disconnected);
    }
    let sym = generator.symmetric_entries(space);
    let root: Vec<f64> = space.weights().iter().map(|w| w.sqrt()).collect();
    let dense = match solver {
        GapSolver::Auto => n <= DENSE_CAP,
        GapSolver::Dense => true,
        GapSolver::Lanczos => false,
    };
    let (gap, vector) = if dense {
        let mut m = DMatrix::<f64>::zeros(n, n);
        for a in 0..n {
            m[(a, a)] = generator.exit_rate(a);
            for &(b, c) in &sym[a] {
                m[(a, b as usize)] -= c;
            }
        }
        let eig = SymmetricEigen::new(m);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let idx = order[1];
        (
            eig.eigenvalues[idx],
            eig.eigenvectors.column(idx).iter().copied().collect::<Vec<_>>(),
        )
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
        let pair = lowest_eigenpair(
            n,
            |x, y| generator.symmetric_apply(&sym, x, y),
            std::slice::from_ref(&root),
            1e-10,
            &mut rng,
        )?;
        (pair.value, pair.vector)
    };
    if !(gap > 0.0) {
        return Err(Error::Invariant(format!("non-positive gap {gap}")));
    }
    let eigenfunction = vector.iter().zip(&root).map(|(u, r)| u / r).collect();
    Ok(Gap::Value {
        gap,
        relaxation: 1.0 / gap,
        eigenfunction,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceReport {
    pub variance: f64,
    /// `n_sites · Var`.
    pub scaled: f64,
    /// `E_{ν_{ℓ,j}}[g(η(0))]`.
    pub mean_rate: f64,
}

/// `Var(U^{ℓ,j}_{g,M}; ν_{ℓ,j})` with `U = ḡ·1{η̄ ≤ M} − E[g(η(0))]`.
pub fn canonical_variance(space: &CanonicalSpace, thermo: &Thermo, cutoff: f64) -> Result<VarianceReport> {
    let n = space.n_sites() as f64;
    let j = space.particles();
    if j as f64 > cutoff * n {
        return Err(Error::CutoffInconsistent {
            j: j as usize,
            limit: cutoff * n,
        });
    }
    let mean_rate = canonical_mean_rate(space, thermo);
    let density = j as f64 / n;
    let u = |s: &[u16]| {
        let gbar = s.iter().map(|&k| thermo.g(k as u32)).sum::<f64>() / n;
        let ind = if density <= cutoff { 1.0 } else { 0.0 };
        gbar * ind - mean_rate
    };
    // shifted by one state's value so a constant U gives exactly zero
    let c = u(space.state(0));
    let m = space.expectation(|s| u(s) - c);
    let variance = (space.expectation(|s| (u(s) - c).powi(2)) - m * m).max(0.0);
    Ok(VarianceReport {
        variance,
        scaled: n * variance,
        mean_rate,
    })
}

/// `Ent(f²) / D(f)` after normalising `E[f²] = 1`; zero when `f²` is
/// constant, infinite when `D(f) = 0` but `f²` is not.
pub fn lsi_ratio(space: &CanonicalSpace, generator: &SymGenerator, f: &[f64]) -> f64 {
    let w = space.weights();
    let norm: f64 = w.iter().zip(f).map(|(w, f)| w * f * f).sum();
    if !(norm > 0.0) {
        return 0.0;
    }
    let scale = norm.sqrt();
    let g: Vec<f64> = f.iter().map(|v| v / scale).collect();
    let ent: f64 = w
        .iter()
        .zip(&g)
        .map(|(w, v)| {
            let q = v * v;
            if q > 0.0 {
                w * q * q.ln()
            } else {
                0.0
            }
        })
        .sum::<f64>()
        .max(0.0);
    if ent <= 1e-14 {
        return 0.0;
    }
    let d = generator.dirichlet_form(space, &g);
    if d <= 0.0 {
        return f64::INFINITY;
    }
    ent / d
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LsiScan {
    /// Running maximum after each trial.
    pub running_max: Vec<f64>,
    pub lower_bound: f64,
    /// `ℓ²` for the scaling comparison (`(n−1)²/4` on a segment).
    pub ell_squared: f64,
}

/// Lower bound on the log-Sobolev constant: the maximum ratio over structured
/// trial functions (perturbations of the gap eigenfunction, localised bumps)
/// followed by random ones, together with any supplied trials.
pub fn lsi_ratio_scan<R: Rng + ?Sized>(
    space: &CanonicalSpace,
    generator: &SymGenerator,
    gap: &Gap,
    trials: usize,
    extra: &[Vec<f64>],
    rng: &mut R,
) -> LsiScan {
    let n = space.len();
    let mut best: f64 = 0.0;
    let mut running_max = Vec::with_capacity(trials + extra.len());
    let record = |f: &[f64], best: &mut f64, running: &mut Vec<f64>| {
        let r = lsi_ratio(space, generator, f);
        if r.is_finite() {
            *best = best.max(r);
        }
        running.push(*best);
    };
    for f in extra {
        record(f, &mut best, &mut running_max);
    }
    let eig = match gap {
        Gap::Value { eigenfunction, .. } => Some(eigenfunction.clone()),
        Gap::Degenerate => None,
    };
    let mut done = 0;
    while done < trials {
        let kind = done % 4;
        let f: Vec<f64> = match (&eig, kind) {
            (Some(v), 0 | 1) => {
                let vmax = v.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1e-300);
                let t = if kind == 0 {
                    10f64.powf(-2.0 + 3.0 * rng.random::<f64>()) / vmax
                } else {
                    -(10f64.powf(-2.0 + 3.0 * rng.random::<f64>())) / vmax
                };
                v.iter().map(|x| (t * x).exp()).collect()
            }
            (_, 2) => {
                let target = rng.random_range(0..n);
                let height = 10f64.powf(3.0 * rng.random::<f64>());
                (0..n).map(|a| if a == target { height } else { 1.0 }).collect()
            }
            _ => {
                let scale = 10f64.powf(-1.5 + 2.0 * rng.random::<f64>());
                (0..n).map(|_| (scale * (rng.random::<f64>() - 0.5)).exp()).collect()
            }
        };
        record(&f, &mut best, &mut running_max);
        done += 1;
    }
    let side = space.block.side as f64;
    LsiScan {
        running_max,
        lower_bound: best,
        ell_squared: ((side - 1.0) / 2.0).powi(2),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    pub n_sites: usize,
    pub threshold: f64,
    pub probability: f64,
    pub rate: f64,
    /// `−log P / (n_sites · I(M))`.
    pub ratio: f64,
}

fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Law of `Σ_x η(x)` over `n` independent sites with marginal `pmf`.
pub fn sum_distribution(pmf: &Pmf, n: usize) -> Result<Vec<f64>> {
    if n * pmf.probs.len() > CONVOLUTION_CAP {
        return Err(Error::TooLarge {
            count: (n * pmf.probs.len()) as u128,
            cap: CONVOLUTION_CAP,
        });
    }
    let mut acc = vec![1.0];
    let mut base = pmf.probs.clone();
    let mut k = n;
    while k > 0 {
        if k & 1 == 1 {
            acc = convolve(&acc, &base);
        }
        k >>= 1;
        if k > 0 {
            base = convolve(&base, &base);
        }
    }
    Ok(acc)
}

/// `P_{ν_φ}(η̄ > M)` over `n_sites` sites by exact convolution.
pub fn tail_probability_exact(thermo: &Thermo, n_sites: usize, phi: f64, threshold: f64) -> Result<TailReport> {
    if n_sites == 0 {
        return Err(Error::InvalidParameter("zero sites".into()));
    }
    let mean = thermo.density_of_fugacity(phi)?;
    if threshold <= mean {
        return Err(Error::NotATail { threshold, mean });
    }
    let pmf = thermo.marginal_distribution(phi, 1e-12)?;
    let law = sum_distribution(&pmf, n_sites)?;
    let limit = threshold * n_sites as f64;
    let first = if limit.fract() == 0.0 {
        limit as usize + 1
    } else {
        limit.ceil() as usize
    };
    let probability: f64 = law.iter().skip(first).sum();
    let rate = thermo.rate_function(phi, threshold)?;
    Ok(TailReport {
        n_sites,
        threshold,
        probability,
        rate,
        ratio: -probability.ln() / (n_sites as f64 * rate),
    })
}

/// Canonical single-site marginal via the grand-canonical product measure
/// conditioned on the total: `p(k) P_{n−1}(j−k) / P_n(j)`.
pub fn canonical_marginal_by_convolution(thermo: &Thermo, n_sites: usize, j: u32, phi: f64) -> Result<Vec<f64>> {
    if n_sites == 0 {
        return Err(Error::InvalidParameter("zero sites".into()));
    }
    // weights are exact up to j; larger occupations cannot contribute
    let log_z = thermo.log_partition(phi)?;
    let probs: Vec<f64> = (0..=j)
        .map(|k| (k as f64 * phi.ln() - thermo.log_factorial(k) - log_z).exp())
        .collect();
    let pmf = Pmf { probs };
    let rest = sum_distribution(&pmf, n_sites - 1)?;
    let full = sum_distribution(&pmf, n_sites)?;
    let ju = j as usize;
    Ok((0..=ju)
        .map(|k| pmf.probs[k] * rest.get(ju - k).copied().unwrap_or(0.0) / full[ju])
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::thermo::RateFunction;

    fn linear() -> Thermo {
        Thermo::new(RateFunction::Linear)
    }

    fn indicator() -> Thermo {
        Thermo::new(RateFunction::Indicator)
    }

    #[test]
    fn two_site_spaces() {
        let s = enumerate_canonical(Block::line(2), 1, &linear()).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.state(0), &[1, 0]);
        assert_eq!(s.state(1), &[0, 1]);
        assert!((s.weights()[0] - 0.5).abs() < 1e-15);
        let s = enumerate_canonical(Block::line(2), 2, &linear()).unwrap();
        let w = s.weights();
        assert_eq!(s.state(1), &[1, 1]);
        assert!((w[0] - 0.25).abs() < 1e-15 && (w[1] - 0.5).abs() < 1e-15);
        let empty = enumerate_canonical(Block::line(4), 0, &linear()).unwrap();
        assert_eq!(empty.len(), 1);
        assert_eq!(empty.weights(), &[1.0]);
        assert_eq!(canonical_mean_rate(&empty, &linear()), 0.0);
    }

    #[test]
    fn counts_and_ranks() {
        let s = enumerate_canonical(Block::line(5), 6, &indicator()).unwrap();
        assert_eq!(s.len(), 210);
        for (i, st) in s.states().enumerate() {
            assert_eq!(st.iter().map(|&v| v as u32).sum::<u32>(), 6);
            assert_eq!(s.rank(st), i);
        }
        assert!((s.weights().iter().sum::<f64>() - 1.0).abs() < 1e-13);
        let err = enumerate_canonical_capped(Block::line(30), 30, &linear(), 1000);
        assert!(matches!(err, Err(Error::TooLarge { .. })));
    }

    #[test]
    fn mean_rate_two_sites() {
        let s = enumerate_canonical(Block::line(2), 1, &linear()).unwrap();
        assert!((canonical_mean_rate(&s, &linear()) - 0.5).abs() < 1e-15);
        let obs = [1.0, 3.0];
        assert!((canonical_expectation(&s, &obs).unwrap() - 2.0).abs() < 1e-15);
        assert!(canonical_expectation(&s, &[1.0]).is_err());
    }

    #[test]
    fn generator_structure() {
        let th = indicator();
        let blocks = [Block::line(4), Block::cube(2, 1)];
        for b in blocks {
            let space = enumerate_canonical(b, 4, &th).unwrap();
            let s = SymKernel::nearest_neighbor(b.dim);
            let gen = SymGenerator::build(&space, &th, &s).unwrap();
            assert!(gen.detailed_balance_defect(&space) < 1e-12);
            assert!(gen.is_connected());
            let ones = vec![1.0; space.len()];
            let mut out = vec![0.0; space.len()];
            gen.apply(&ones, &mut out);
            assert!(out.iter().all(|v| v.abs() < 1e-15));
        }
    }

    #[test]
    fn two_state_gap_is_one() {
        let th = linear();
        let space = enumerate_canonical(Block::line(2), 1, &th).unwrap();
        let gen = SymGenerator::build(&space, &th, &SymKernel::nearest_neighbor(1)).unwrap();
        assert_eq!(gen.transitions(0), &[(1, 0.5)]);
        let gap = spectral_gap(&space, &gen, GapSolver::Dense).unwrap();
        assert!((gap.value().unwrap() - 1.0).abs() < 1e-14);
        let empty = enumerate_canonical(Block::line(3), 0, &th).unwrap();
        let gen = SymGenerator::build(&empty, &th, &SymKernel::nearest_neighbor(1)).unwrap();
        assert_eq!(spectral_gap(&empty, &gen, GapSolver::Auto).unwrap(), Gap::Degenerate);
    }

    #[test]
    fn linear_gap_matches_single_walker() {
        // independent walkers at rate 1/2 per bond: gap 1 − cos(π/n)
        let th = linear();
        for n in 2..=6 {
            let space = enumerate_canonical(Block::line(n), n as u32, &th).unwrap();
            let gen = SymGenerator::build(&space, &th, &SymKernel::nearest_neighbor(1)).unwrap();
            let gap = spectral_gap(&space, &gen, GapSolver::Dense).unwrap().value().unwrap();
            let expected = 1.0 - (std::f64::consts::PI / n as f64).cos();
            assert!((gap - expected).abs() < 1e-10, "n={n}: {gap} vs {expected}");
        }
    }

    #[test]
    fn dense_and_lanczos_agree() {
        let th = indicator();
        let space = enumerate_canonical(Block::line(6), 6, &th).unwrap();
        let gen = SymGenerator::build(&space, &th, &SymKernel::nearest_neighbor(1)).unwrap();
        let a = spectral_gap(&space, &gen, GapSolver::Dense).unwrap().value().unwrap();
        let b = spectral_gap(&space, &gen, GapSolver::Lanczos).unwrap().value().unwrap();
        assert!((a - b).abs() < 1e-8 * a.max(1.0), "{a} vs {b}");
    }

    #[test]
    fn disconnected_kernel_detected() {
        // jumps of length 2 only: parity classes never mix
        let th = linear();
        let s = SymKernel {
            dim: 1,
            jumps: vec![
                crate::kernel::Jump {
                    displacement: vec![2],
                    prob: 0.5,
                },
                crate::kernel::Jump {
                    displacement: vec![-2],
                    prob: 0.5,
                },
            ],
        };
        let space = enumerate_canonical(Block::line(3), 1, &th).unwrap();
        let gen = SymGenerator::build(&space, &th, &s).unwrap();
        assert!(matches!(
            spectral_gap(&space, &gen, GapSolver::Dense),
            Err(Error::Disconnected)
        ));
    }

    #[test]
    fn variance_linear_is_zero() {
        let th = linear();
        let space = enumerate_canonical(Block::line(2), 1, &th).unwrap();
        let v = canonical_variance(&space, &th, 1.0).unwrap();
        assert_eq!(v.variance, 0.0);
        assert!(matches!(
            canonical_variance(&space, &th, 0.1),
            Err(Error::CutoffInconsistent { .. })
        ));
    }

    #[test]
    fn variance_matches_brute_force() {
        let th = indicator();
        let n = 3usize;
        let j = 3u16;
        let space = enumerate_canonical(Block::line(n), j as u32, &th).unwrap();
        let v = canonical_variance(&space, &th, 1.0).unwrap();
        // raw loop over [0, j]^n with weights 1 for the geometric family
        let mut states = Vec::new();
        for a in 0..=j {
            for b in 0..=j {
                for c in 0..=j {
                    if a + b + c == j {
                        states.push([a, b, c]);
                    }
                }
            }
        }
        let w = 1.0 / states.len() as f64;
        let ind = |k: u16| if k > 0 { 1.0 } else { 0.0 };
        let centre = states.iter().map(|s| w * ind(s[1])).sum::<f64>();
        let gbar: Vec<f64> = states
            .iter()
            .map(|s| s.iter().map(|&k| ind(k)).sum::<f64>() / 3.0 - centre)
            .collect();
        let m: f64 = gbar.iter().map(|x| w * x).sum();
        let var: f64 = gbar.iter().map(|x| w * (x - m).powi(2)).sum();
        assert!((v.variance - var).abs() < 1e-15, "{} vs {var}", v.variance);
        assert!((v.mean_rate - 0.6).abs() < 1e-14);
    }

    #[test]
    fn lsi_scan_properties() {
        let th = linear();
        let space = enumerate_canonical(Block::line(2), 1, &th).unwrap();
        let gen = SymGenerator::build(&space, &th, &SymKernel::nearest_neighbor(1)).unwrap();
        assert_eq!(lsi_ratio(&space, &gen, &[1.0, -1.0]), 0.0);
        let gap = spectral_gap(&space, &gen, GapSolver::Dense).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let trial = vec![2.0, 0.5];
        let single = lsi_ratio(&space, &gen, &trial);
        let scan = lsi_ratio_scan(&space, &gen, &gap, 50, &[trial], &mut rng);
        assert!(scan.lower_bound >= single && scan.lower_bound >= 0.0);
        assert!(scan.running_max.windows(2).all(|w| w[1] >= w[0]));
        // near-constant trial: ratio → 2 / gap
        let eps = 1e-4;
        let f = [1.0 + eps, 1.0 - eps];
        assert!((lsi_ratio(&space, &gen, &f) - 2.0).abs() < 1e-3);
    }

    #[test]
    fn tail_single_site_matches_pmf() {
        let th = linear();
        let t = tail_probability_exact(&th, 1, 1.0, 2.0).unwrap();
        let direct = 1.0 - (-1.0f64).exp() * 2.5;
        assert!((t.probability - direct).abs() < 1e-12);
        assert!(matches!(
            tail_probability_exact(&th, 4, 1.0, 0.5),
            Err(Error::NotATail { .. })
        ));
        let lo = tail_probability_exact(&th, 8, 1.0, 1.5).unwrap().probability;
        let hi = tail_probability_exact(&th, 8, 1.0, 2.5).unwrap().probability;
        assert!(hi < lo);
    }

    #[test]
    fn tail_poisson_sum() {
        // Σ of n Poisson(1) is Poisson(n)
        let th = linear();
        let n = 8;
        let t = tail_probability_exact(&th, n, 1.0, 2.0).unwrap();
        let mut cdf = 0.0;
        let mut term = (-(n as f64)).exp();
        for k in 0..=16u32 {
            if k > 0 {
                term *= n as f64 / k as f64;
            }
            cdf += term;
        }
        let diff = (t.probability - (1.0 - cdf)).abs();
        assert!(diff < 1e-12 * n as f64, "{diff}");
        assert!((t.rate - (2.0 * 2f64.ln() - 1.0)).abs() < 1e-9);
    }

    #[test]
    fn convolution_reproduces_canonical_marginals() {
        for th in [linear(), indicator()] {
            for n in 2..=4usize {
                for j in [1u32, 3, 5] {
                    let space = enumerate_canonical(Block::line(n), j, &th).unwrap();
                    let direct = space.marginal(0);
                    let phi = th.fugacity_of_density(j as f64 / n as f64).unwrap();
                    let conv = canonical_marginal_by_convolution(&th, n, j, phi).unwrap();
                    for (a, b) in direct.iter().zip(&conv) {
                        assert!((a - b).abs() < 1e-12, "n={n} j={j}: {a} vs {b}");
                    }
                }
            }
        }
    }
}
