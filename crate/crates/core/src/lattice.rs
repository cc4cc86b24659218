//! Discrete torus `𝕋_N^d`, particle configurations and block averages.

use std::io::{BufRead, Read, Write};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// The torus `{0..N−1}^d`, sites indexed row-major (last coordinate fastest).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Torus {
    dim: usize,
    side: usize,
}

impl Torus {
    pub fn new(dim: usize, side: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("dimension must be at least 1".into()));
        }
        if side < 2 {
            return Err(Error::InvalidParameter(format!(
                "torus side must be at least 2, got {side}"
            )));
        }
        side.checked_pow(dim as u32)
            .filter(|&n| n <= u32::MAX as usize)
            .ok_or_else(|| Error::InvalidParameter("torus too large".into()))?;
        Ok(Torus { dim, side })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn sites(&self) -> usize {
        self.side.pow(self.dim as u32)
    }

    pub fn coords(&self, mut site: usize) -> Vec<usize> {
        let mut c = vec![0; self.dim];
        for slot in c.iter_mut().rev() {
            *slot = site % self.side;
            site /= self.side;
        }
        c
    }

    pub fn index(&self, coords: &[usize]) -> usize {
        coords.iter().fold(0, |acc, &c| acc * self.side + c % self.side)
    }

    /// `x + y` with periodic wrap.
    pub fn shift(&self, site: usize, displacement: &[i64]) -> usize {
        let n = self.side as i64;
        let mut c = self.coords(site);
        for (ci, &d) in c.iter_mut().zip(displacement) {
            *ci = (*ci as i64 + d).rem_euclid(n) as usize;
        }
        self.index(&c)
    }

    /// Macroscopic position `x / N ∈ [0, 1)^d`.
    pub fn position(&self, site: usize) -> Vec<f64> {
        self.coords(site)
            .into_iter()
            .map(|c| c as f64 / self.side as f64)
            .collect()
    }

    fn describe(&self) -> String {
        format!("d={} N={}", self.dim, self.side)
    }

    pub(crate) fn check_same(&self, other: &Torus) -> Result<()> {
        if self != other {
            return Err(Error::TorusMismatch {
                expected: self.describe(),
                found: other.describe(),
            });
        }
        Ok(())
    }
}

/// Occupation numbers `η(x)` with a cached particle count.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Configuration {
    torus: Torus,
    occupancy: Vec<u32>,
    total: u64,
}

impl Configuration {
    pub fn empty(torus: Torus) -> Self {
        Configuration {
            torus,
            occupancy: vec![0; torus.sites()],
            total: 0,
        }
    }

    pub fn from_occupancy(torus: Torus, occupancy: Vec<u32>) -> Result<Self> {
        if occupancy.len() != torus.sites() {
            return Err(Error::InvalidParameter(format!(
                "{} occupancies for {} sites",
                occupancy.len(),
                torus.sites()
            )));
        }
        let total = occupancy.iter().map(|&k| k as u64).sum();
        Ok(Configuration {
            torus,
            occupancy,
            total,
        })
    }

    pub fn constant(torus: Torus, k: u32) -> Self {
        Configuration::from_occupancy(torus, vec![k; torus.sites()]).expect("sizes match")
    }

    pub fn torus(&self) -> Torus {
        self.torus
    }

    pub fn occupancy(&self) -> &[u32] {
        &self.occupancy
    }

    pub fn get(&self, site: usize) -> u32 {
        self.occupancy[site]
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn add(&mut self, site: usize, k: u32) {
        self.occupancy[site] += k;
        self.total += k as u64;
    }

    /// `η ← η^{x,y}`.
    pub fn move_particle_in_place(&mut self, from: usize, to: usize) -> Result<()> {
        if self.occupancy[from] == 0 {
            return Err(Error::EmptySource(from));
        }
        self.occupancy[from] -= 1;
        self.occupancy[to] += 1;
        Ok(())
    }

    /// Returns `η^{x,y}`.
    pub fn move_particle(&self, from: usize, to: usize) -> Result<Self> {
        let mut next = self.clone();
        next.move_particle_in_place(from, to)?;
        Ok(next)
    }

    /// `(τ_y η)(x) = η(x + y)`.
    pub fn translate(&self, by: &[i64]) -> Self {
        let occupancy = (0..self.torus.sites())
            .map(|x| self.occupancy[self.torus.shift(x, by)])
            .collect();
        Configuration {
            torus: self.torus,
            occupancy,
            total: self.total,
        }
    }

    pub fn as_field(&self) -> Vec<f64> {
        self.occupancy.iter().map(|&k| k as f64).collect()
    }

    /// Recomputes the particle count from scratch.
    pub fn recount(&self) -> u64 {
        self.occupancy.iter().map(|&k| k as u64).sum()
    }
}

/// Mean of `field` over the periodic cube `{y : |y − x|_∞ ≤ ℓ}`.
pub fn block_average(torus: &Torus, field: &[f64], site: usize, radius: usize) -> Result<f64> {
    check_block(torus, radius)?;
    let offsets = block_offsets(torus.dim(), radius);
    let sum: f64 = offsets.iter().map(|off| field[torus.shift(site, off)]).sum();
    Ok(sum / offsets.len() as f64)
}

/// Block averages at every site, computed by separable running sums.
pub fn block_average_field(torus: &Torus, field: &[f64], radius: usize) -> Result<Vec<f64>> {
    check_block(torus, radius)?;
    let n = torus.side();
    let width = 2 * radius + 1;
    let mut current = field.to_vec();
    let mut next = vec![0.0; field.len()];
    // one periodic window sum per axis
    for axis in 0..torus.dim() {
        let stride = n.pow((torus.dim() - 1 - axis) as u32);
        for site in 0..field.len() {
            let c = (site / stride) % n;
            let base = site - c * stride;
            let mut s = 0.0;
            for o in 0..width {
                let cc = (c + n * width - radius + o) % n;
                s += current[base + cc * stride];
            }
            next[site] = s;
        }
        std::mem::swap(&mut current, &mut next);
    }
    let vol = width.pow(torus.dim() as u32) as f64;
    current.iter_mut().for_each(|v| *v /= vol);
    Ok(current)
}

fn check_block(torus: &Torus, radius: usize) -> Result<()> {
    if 2 * radius + 1 > torus.side() {
        return Err(Error::BlockExceedsTorus {
            radius,
            side: torus.side(),
        });
    }
    Ok(())
}

/// All offsets of the cube `{−ℓ..ℓ}^d`.
pub fn block_offsets(dim: usize, radius: usize) -> Vec<Vec<i64>> {
    let r = radius as i64;
    let mut out = vec![vec![]];
    for _ in 0..dim {
        out = out
            .into_iter()
            .flat_map(|prefix: Vec<i64>| {
                (-r..=r).map(move |v| {
                    let mut p = prefix.clone();
                    p.push(v);
                    p
                })
            })
            .collect();
    }
    out
}

/// Magic bytes of the binary snapshot format.
pub const SNAPSHOT_MAGIC: &[u8; 4] = b"ZRPS";
pub const SNAPSHOT_VERSION: u32 = 1;

/// A configuration stamped with its macroscopic time.
///
/// Binary layout, all little-endian: magic `ZRPS`, `u32` version, `u32` d,
/// `u32` N, `f64` time, then `N^d` `u32` occupancies in row-major site order.
/// The CSV form has a `# d=.. N=.. t=..` header line, a column header
/// `x0,..,x{d-1},eta` and one row per site in the same order.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub time: f64,
    pub config: Configuration,
}

impl Snapshot {
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        let torus = self.config.torus();
        w.write_all(SNAPSHOT_MAGIC)?;
        w.write_all(&SNAPSHOT_VERSION.to_le_bytes())?;
        w.write_all(&(torus.dim() as u32).to_le_bytes())?;
        w.write_all(&(torus.side() as u32).to_le_bytes())?;
        w.write_all(&self.time.to_le_bytes())?;
        for &k in self.config.occupancy() {
            w.write_all(&k.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != SNAPSHOT_MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let mut word = [0u8; 4];
        let mut read_u32 = |r: &mut R| -> Result<u32> {
            r.read_exact(&mut word)?;
            Ok(u32::from_le_bytes(word))
        };
        let version = read_u32(&mut r)?;
        if version != SNAPSHOT_VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let dim = read_u32(&mut r)? as usize;
        let side = read_u32(&mut r)? as usize;
        let mut t = [0u8; 8];
        r.read_exact(&mut t)?;
        let time = f64::from_le_bytes(t);
        let torus = Torus::new(dim, side)?;
        let mut occupancy = Vec::with_capacity(torus.sites());
        for _ in 0..torus.sites() {
            occupancy.push(read_u32(&mut r)?);
        }
        Ok(Snapshot {
            time,
            config: Configuration::from_occupancy(torus, occupancy)?,
        })
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let torus = self.config.torus();
        writeln!(w, "# d={} N={} t={}", torus.dim(), torus.side(), self.time)?;
        let cols: Vec<String> = (0..torus.dim()).map(|i| format!("x{i}")).collect();
        writeln!(w, "{},eta", cols.join(","))?;
        for (site, &k) in self.config.occupancy().iter().enumerate() {
            let c: Vec<String> = torus.coords(site).iter().map(|v| v.to_string()).collect();
            writeln!(w, "{},{k}", c.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| Error::Format("missing header".into()))??;
        let mut dim = None;
        let mut side = None;
        let mut time = None;
        for part in header.trim_start_matches('#').split_whitespace() {
            match part.split_once('=') {
                Some(("d", v)) => dim = v.parse::<usize>().ok(),
                Some(("N", v)) => side = v.parse::<usize>().ok(),
                Some(("t", v)) => time = v.parse::<f64>().ok(),
                _ => {}
            }
        }
        let (Some(dim), Some(side), Some(time)) = (dim, side, time) else {
            return Err(Error::Format(format!("bad header line: {header}")));
        };
        let torus = Torus::new(dim, side)?;
        lines.next();
        let mut occupancy = vec![0u32; torus.sites()];
        let mut seen = 0;
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != dim + 1 {
                return Err(Error::Format(format!("bad row: {line}")));
            }
            let coords: Vec<usize> = fields[..dim]
                .iter()
                .map(|f| f.trim().parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Format(e.to_string()))?;
            let k = fields[dim]
                .trim()
                .parse::<u32>()
                .map_err(|e| Error::Format(e.to_string()))?;
            occupancy[torus.index(&coords)] = k;
            seen += 1;
        }
        if seen != torus.sites() {
            return Err(Error::Format(format!("expected {} rows, found {seen}", torus.sites())));
        }
        Ok(Snapshot {
            time,
            config: Configuration::from_occupancy(torus, occupancy)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn move_examples() {
        let t = Torus::new(1, 4).unwrap();
        let eta = Configuration::from_occupancy(t, vec![2, 0, 0, 0]).unwrap();
        let next = eta.move_particle(0, 1).unwrap();
        assert_eq!(next.occupancy(), &[1, 1, 0, 0]);
        assert_eq!(next.total(), 2);
        assert_eq!(
            eta.move_particle(2, 2).err().map(|e| e.to_string()),
            Some(Error::EmptySource(2).to_string())
        );
        assert_eq!(eta.move_particle(0, 0).unwrap(), eta);

        let t2 = Torus::new(2, 2).unwrap();
        let from = t2.index(&[1, 1]);
        let to = t2.shift(from, &[1, 0]);
        assert_eq!(t2.coords(to), vec![0, 1]);
        let mut eta = Configuration::empty(t2);
        eta.add(from, 1);
        eta.move_particle_in_place(from, to).unwrap();
        assert_eq!(eta.get(to), 1);
    }

    #[test]
    fn block_examples() {
        let t = Torus::new(1, 5).unwrap();
        let field = [1.0, 2.0, 3.0, 4.0, 5.0];
        let v = block_average(&t, &field, 0, 1).unwrap();
        assert!((v - 8.0 / 3.0).abs() < 1e-15);
        assert_eq!(block_average(&t, &field, 3, 0).unwrap(), 4.0);
        let c = [2.5; 5];
        assert!((block_average(&t, &c, 2, 2).unwrap() - 2.5).abs() < 1e-15);
        assert!(matches!(
            block_average(&t, &field, 0, 3),
            Err(Error::BlockExceedsTorus { .. })
        ));
    }

    #[test]
    fn translate_example() {
        let t = Torus::new(1, 3).unwrap();
        let eta = Configuration::from_occupancy(t, vec![1, 2, 3]).unwrap();
        assert_eq!(eta.translate(&[1]).occupancy(), &[2, 3, 1]);
        assert_eq!(eta.translate(&[0]), eta);
    }

    #[test]
    fn snapshot_round_trips() {
        let t = Torus::new(2, 3).unwrap();
        let eta = Configuration::from_occupancy(t, (0..9).collect()).unwrap();
        let snap = Snapshot {
            time: 0.125,
            config: eta,
        };
        let mut buf = Vec::new();
        snap.write_binary(&mut buf).unwrap();
        assert_eq!(buf.len(), 4 + 4 * 3 + 8 + 4 * 9);
        assert_eq!(Snapshot::read_binary(&buf[..]).unwrap(), snap);
        let mut csv = Vec::new();
        snap.write_csv(&mut csv).unwrap();
        assert_eq!(Snapshot::read_csv(&csv[..]).unwrap(), snap);
        assert!(Snapshot::read_binary(&b"NOPE1234"[..]).is_err());
    }

    fn config_strategy() -> impl Strategy<Value = Configuration> {
        (1usize..=2, 3usize..=6).prop_flat_map(|(d, n)| {
            let t = Torus::new(d, n).unwrap();
            proptest::collection::vec(0u32..5, t.sites())
                .prop_map(move |occ| Configuration::from_occupancy(t, occ).unwrap())
        })
    }

    proptest! {
        #[test]
        fn translation_covariance(eta in config_strategy(), site_seed in 0usize..1000, shift in proptest::collection::vec(-7i64..7, 2), radius in 0usize..2) {
            let t = eta.torus();
            let shift = &shift[..t.dim()];
            let site = site_seed % t.sites();
            let moved = eta.translate(shift);
            prop_assert_eq!(moved.total(), eta.total());
            let mut a = moved.occupancy().to_vec();
            let mut b = eta.occupancy().to_vec();
            a.sort();
            b.sort();
            prop_assert_eq!(a, b);
            let lhs = block_average(&t, &moved.as_field(), site, radius).unwrap();
            let rhs = block_average(&t, &eta.as_field(), t.shift(site, shift), radius).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-12);
        }

        #[test]
        fn separable_block_matches_direct(eta in config_strategy(), radius in 0usize..2) {
            let t = eta.torus();
            let f = eta.as_field();
            let all = block_average_field(&t, &f, radius).unwrap();
            for site in 0..t.sites() {
                prop_assert!((all[site] - block_average(&t, &f, site, radius).unwrap()).abs() < 1e-12);
            }
        }

        #[test]
        fn moves_conserve(eta in config_strategy(), from in 0usize..1000, to in 0usize..1000) {
            let n = eta.torus().sites();
            let (from, to) = (from % n, to % n);
            match eta.move_particle(from, to) {
                Ok(next) => {
                    prop_assert_eq!(next.total(), eta.total());
                    prop_assert_eq!(next.recount(), eta.total());
                }
                Err(_) => prop_assert_eq!(eta.get(from), 0),
            }
        }
    }
}
