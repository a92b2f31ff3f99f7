//! The two input worlds: the attribute-value grid and the unit disk.
//!
//! Attribute values are 0-based, in `[0, n_v)`.

use std::f64::consts::TAU;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeding::{self, Stream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AttValInput {
    pub a1: usize,
    pub a2: usize,
}

impl AttValInput {
    pub fn new(a1: usize, a2: usize) -> Self {
        AttValInput { a1, a2 }
    }
}

/// A point with `x² + y² ≤ 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiskPoint {
    pub x: f64,
    pub y: f64,
}

impl DiskPoint {
    pub fn new(x: f64, y: f64) -> Result<Self> {
        if !(x.is_finite() && y.is_finite()) || x * x + y * y > 1.0 {
            return Err(Error::Input(format!("({x}, {y}) lies outside the unit disk")));
        }
        Ok(DiskPoint { x, y })
    }

    pub fn norm_sq(&self) -> f64 {
        self.x * self.x + self.y * self.y
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    pub n_values: usize,
    pub test_fraction: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
}

impl WorldConfig {
    pub fn attval() -> Self {
        WorldConfig { n_values: 31, test_fraction: 0.2, n_train: 0, n_test: 0, seed: 0 }
    }

    pub fn coordinates() -> Self {
        WorldConfig { n_values: 100, test_fraction: 0.5, n_train: 1000, n_test: 1000, seed: 0 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_values < 2 {
            return Err(Error::Config(format!("n_values must be at least 2, got {}", self.n_values)));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::Config(format!("test fraction must lie in (0, 1), got {}", self.test_fraction)));
        }
        Ok(())
    }
}

/// All `n_v²` attribute pairs in lexicographic order.
pub fn enumerate_attval(n_values: usize) -> Result<Vec<AttValInput>> {
    if n_values < 2 {
        return Err(Error::Config(format!("n_values must be at least 2, got {n_values}")));
    }
    Ok((0..n_values).flat_map(|a1| (0..n_values).map(move |a2| AttValInput { a1, a2 })).collect())
}

/// Seeded random split into `(train, test)`.
///
/// The test part has `round(test_fraction · len)` items, kept within
/// `1..len` so neither side is empty.
pub fn split_train_test<T: Clone>(items: &[T], test_fraction: f64, seed: u64) -> Result<(Vec<T>, Vec<T>)> {
    if items.len() < 2 {
        return Err(Error::Input(format!("need at least 2 items to split, got {}", items.len())));
    }
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Config(format!("test fraction must lie in (0, 1), got {test_fraction}")));
    }
    let n_test = ((test_fraction * items.len() as f64).round() as usize).clamp(1, items.len() - 1);
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.shuffle(&mut seeding::rng(seed, Stream::Split));
    let test = order[..n_test].iter().map(|&i| items[i].clone()).collect();
    let train = order[n_test..].iter().map(|&i| items[i].clone()).collect();
    Ok((train, test))
}

/// `n` points uniform over the unit disk: angle uniform, radius `sqrt(u)`.
pub fn sample_unit_disk(n: usize, seed: u64) -> Vec<DiskPoint> {
    let mut rng = seeding::rng(seed, Stream::Disk);
    (0..n)
        .map(|_| {
            let theta = rng.gen_range(0.0..TAU);
            let r = rng.gen::<f64>().sqrt();
            let (mut x, mut y) = (r * theta.cos(), r * theta.sin());
            let n2 = x * x + y * y;
            if n2 > 1.0 {
                let s = n2.sqrt();
                x /= s;
                y /= s;
            }
            DiskPoint { x, y }
        })
        .collect()
}

pub fn dump_attval<W: Write>(items: &[AttValInput], mut out: W) -> Result<()> {
    for i in items {
        writeln!(out, "{} {}", i.a1, i.a2)?;
    }
    Ok(())
}

pub fn dump_points<W: Write>(points: &[DiskPoint], mut out: W) -> Result<()> {
    for p in points {
        writeln!(out, "{} {}", p.x, p.y)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashSet;

    #[test]
    fn enumerate_small_grid() {
        let got = enumerate_attval(2).unwrap();
        let want: Vec<_> = [(0, 0), (0, 1), (1, 0), (1, 1)].iter().map(|&(a, b)| AttValInput::new(a, b)).collect();
        assert_eq!(got, want);
        let three = enumerate_attval(3).unwrap();
        assert_eq!(three.len(), 9);
        assert_eq!(three.iter().collect::<HashSet<_>>().len(), 9);
        assert_eq!(enumerate_attval(31).unwrap().len(), 961);
        assert!(matches!(enumerate_attval(1), Err(Error::Config(_))));
    }

    #[test]
    fn attval_split_sizes() {
        let items = enumerate_attval(31).unwrap();
        let (train, test) = split_train_test(&items, 0.2, 7).unwrap();
        assert_eq!(test.len(), 192);
        assert_eq!(train.len(), 769);
    }

    #[test]
    fn split_is_deterministic_and_seed_dependent() {
        let items = enumerate_attval(31).unwrap();
        let a = split_train_test(&items, 0.2, 3).unwrap();
        let b = split_train_test(&items, 0.2, 3).unwrap();
        let c = split_train_test(&items, 0.2, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.1, c.1);
    }

    #[test]
    fn split_rejects_tiny_input() {
        let empty: Vec<u8> = vec![];
        assert!(matches!(split_train_test(&empty, 0.2, 0), Err(Error::Input(_))));
        assert!(matches!(split_train_test(&[1], 0.2, 0), Err(Error::Input(_))));
        assert!(split_train_test(&[1, 2], 0.0, 0).is_err());
    }

    #[test]
    fn disk_moments() {
        let pts = sample_unit_disk(1000, 9);
        assert_eq!(pts.len(), 1000);
        assert!(pts.iter().all(|p| p.norm_sq() <= 1.0));
        let mx = pts.iter().map(|p| p.x).sum::<f64>() / 1000.0;
        let my = pts.iter().map(|p| p.y).sum::<f64>() / 1000.0;
        assert!(mx.abs() < 0.1 && my.abs() < 0.1);
        let inner = pts.iter().filter(|p| p.norm_sq() <= 0.25).count() as f64 / 1000.0;
        assert!((inner - 0.25).abs() < 0.05, "{inner}");
        assert_eq!(pts, sample_unit_disk(1000, 9));
    }

    #[test]
    fn disk_point_validation() {
        assert!(DiskPoint::new(0.6, 0.8).is_ok());
        assert!(DiskPoint::new(0.8, 0.8).is_err());
    }

    #[test]
    fn dump_format() {
        let mut buf = Vec::new();
        dump_attval(&[AttValInput::new(3, 5), AttValInput::new(0, 30)], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "3 5\n0 30\n");
        let mut buf = Vec::new();
        dump_points(&[DiskPoint { x: 0.5, y: -0.25 }], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "0.5 -0.25\n");
    }

    proptest! {
        #[test]
        fn split_partitions_items(n in 2usize..400, frac in 0.01f64..0.99, seed in any::<u64>()) {
            let items: Vec<usize> = (0..n).collect();
            let (train, test) = split_train_test(&items, frac, seed).unwrap();
            prop_assert_eq!(train.len() + test.len(), n);
            let mut all: Vec<usize> = train.iter().chain(&test).cloned().collect();
            all.sort_unstable();
            prop_assert_eq!(all, items);
        }

        #[test]
        fn disk_invariant_holds(seed in any::<u64>()) {
            prop_assert!(sample_unit_disk(200, seed).iter().all(|p| p.norm_sq() <= 1.0));
        }
    }
}
