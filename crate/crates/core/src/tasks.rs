//! Ground-truth targets for the attribute-value tasks and the coordinates task.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeding::{self, Stream};
use crate::worlds::{AttValInput, DiskPoint};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum TargetOutput {
    Discrete(usize, usize),
    Continuous(f64, f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Identity,
    Linear,
    Entangled,
    Coordinates,
}

impl TaskKind {
    pub const ATTVAL: [TaskKind; 3] = [TaskKind::Identity, TaskKind::Linear, TaskKind::Entangled];

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Identity => "identity",
            TaskKind::Linear => "linear",
            TaskKind::Entangled => "entangled",
            TaskKind::Coordinates => "coordinates",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().trim_start_matches("task-") {
            "identity" => Ok(TaskKind::Identity),
            "linear" => Ok(TaskKind::Linear),
            "entangled" => Ok(TaskKind::Entangled),
            "coordinates" => Ok(TaskKind::Coordinates),
            other => Err(Error::Config(format!("unknown task `{other}`"))),
        }
    }
}

/// `o = A·i + b mod n_v`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinearTaskParams {
    pub a: [[usize; 2]; 2],
    pub b: [usize; 2],
}

impl LinearTaskParams {
    pub fn det_mod(&self, n_values: usize) -> usize {
        let n = n_values as u64;
        let [[p, q], [r, s]] = self.a.map(|row| row.map(|v| v as u64 % n));
        (p * s % n + n * n - q * r % n) as usize % n_values
    }

    /// Invertible, and neither the identity nor the entangled matrix.
    pub fn is_admissible(&self, n_values: usize) -> bool {
        let a = self.a.map(|row| row.map(|v| v % n_values));
        let identity = [[1, 0], [0, 1]];
        let entangled = [[1, n_values - 1], [1, 1]];
        self.det_mod(n_values) != 0 && a != identity && a != entangled && self.b.iter().all(|&v| v < n_values)
    }

    /// Parses `a11,a12,a21,a22,b1,b2`.
    pub fn parse(s: &str, n_values: usize) -> Result<Self> {
        let v: Vec<usize> =
            s.split(',').map(|t| t.trim().parse::<usize>().map_err(|e| Error::Config(format!("bad linear parameter `{t}`: {e}")))).collect::<Result<_>>()?;
        if v.len() != 6 {
            return Err(Error::Config(format!("expected 6 comma-separated values, got {}", v.len())));
        }
        let p = LinearTaskParams { a: [[v[0], v[1]], [v[2], v[3]]], b: [v[4], v[5]] };
        if !p.is_admissible(n_values) {
            return Err(Error::Config(format!("linear parameters {s} are singular, excluded or out of range mod {n_values}")));
        }
        Ok(p)
    }
}

impl fmt::Display for LinearTaskParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [[a, b], [c, d]] = self.a;
        write!(f, "A=[[{a},{b}],[{c},{d}]] b=({},{})", self.b[0], self.b[1])
    }
}

fn is_prime(n: usize) -> bool {
    n >= 2 && (2..).take_while(|d| d * d <= n).all(|d| !n.is_multiple_of(d))
}

/// Rejection-samples admissible `(A, b)` from the seed's task stream.
pub fn gen_linear_params(n_values: usize, seed: u64) -> Result<LinearTaskParams> {
    if !is_prime(n_values) {
        return Err(Error::Config(format!("task-linear needs a prime n_values, got {n_values}")));
    }
    let mut rng = seeding::rng(seed, Stream::LinearTask);
    loop {
        let mut draw = || rng.gen_range(0..n_values);
        let p = LinearTaskParams { a: [[draw(), draw()], [draw(), draw()]], b: [draw(), draw()] };
        if p.is_admissible(n_values) {
            return Ok(p);
        }
    }
}

pub fn target_identity(i: AttValInput) -> TargetOutput {
    TargetOutput::Discrete(i.a1, i.a2)
}

pub fn target_linear(i: AttValInput, params: &LinearTaskParams, n_values: usize) -> TargetOutput {
    let n = n_values;
    let [[p, q], [r, s]] = params.a;
    let o1 = (p % n * (i.a1 % n) + q % n * (i.a2 % n) + params.b[0]) % n;
    let o2 = (r % n * (i.a1 % n) + s % n * (i.a2 % n) + params.b[1]) % n;
    TargetOutput::Discrete(o1, o2)
}

/// Same transform as the entangled language: `((a1 - a2) mod n, (a1 + a2) mod n)`.
pub fn target_entangled(i: AttValInput, n_values: usize) -> TargetOutput {
    let (a1, a2) = (i.a1 % n_values, i.a2 % n_values);
    TargetOutput::Discrete((a1 + n_values - a2) % n_values, (a1 + a2) % n_values)
}

/// The unrotated point, whatever language carried it.
pub fn target_coordinates(p: DiskPoint) -> TargetOutput {
    TargetOutput::Continuous(p.x, p.y)
}

/// A resolved attribute-value task.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AttValTask {
    Identity,
    Linear(LinearTaskParams),
    Entangled,
}

impl AttValTask {
    pub fn kind(&self) -> TaskKind {
        match self {
            AttValTask::Identity => TaskKind::Identity,
            AttValTask::Linear(_) => TaskKind::Linear,
            AttValTask::Entangled => TaskKind::Entangled,
        }
    }

    pub fn target(&self, i: AttValInput, n_values: usize) -> TargetOutput {
        match self {
            AttValTask::Identity => target_identity(i),
            AttValTask::Linear(p) => target_linear(i, p, n_values),
            AttValTask::Entangled => target_entangled(i, n_values),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::languages::encode_entangled;
    use crate::worlds::enumerate_attval;
    use std::collections::HashSet;

    fn av(a1: usize, a2: usize) -> AttValInput {
        AttValInput::new(a1, a2)
    }

    fn pair(t: TargetOutput) -> (usize, usize) {
        match t {
            TargetOutput::Discrete(a, b) => (a, b),
            TargetOutput::Continuous(..) => panic!("expected a discrete target"),
        }
    }

    #[test]
    fn identity_examples() {
        assert_eq!(target_identity(av(0, 0)), TargetOutput::Discrete(0, 0));
        assert_eq!(target_identity(av(3, 5)), TargetOutput::Discrete(3, 5));
        assert_eq!(target_identity(av(30, 30)), TargetOutput::Discrete(30, 30));
    }

    #[test]
    fn admissibility() {
        let ok = LinearTaskParams { a: [[2, 3], [1, 4]], b: [5, 6] };
        assert_eq!(ok.det_mod(31), 5);
        assert!(ok.is_admissible(31));
        let singular = LinearTaskParams { a: [[1, 2], [2, 4]], b: [0, 0] };
        assert_eq!(singular.det_mod(31), 0);
        assert!(!singular.is_admissible(31));
        assert!(!LinearTaskParams { a: [[1, 0], [0, 1]], b: [3, 3] }.is_admissible(31));
        assert!(!LinearTaskParams { a: [[1, 30], [1, 1]], b: [0, 0] }.is_admissible(31));
    }

    #[test]
    fn sampling_is_deterministic_and_admissible() {
        let a = gen_linear_params(31, 4).unwrap();
        assert_eq!(a, gen_linear_params(31, 4).unwrap());
        assert!(a.is_admissible(31));
        let distinct: HashSet<_> = (0..20).map(|s| gen_linear_params(31, s).unwrap()).map(|p| (p.a, p.b)).collect();
        assert!(distinct.len() > 15);
        assert!(matches!(gen_linear_params(30, 0), Err(Error::Config(_))));
    }

    #[test]
    fn linear_examples() {
        let p = LinearTaskParams { a: [[2, 3], [1, 4]], b: [5, 6] };
        assert_eq!(target_linear(av(3, 5), &p, 31), TargetOutput::Discrete(26, 29));
        assert_eq!(target_linear(av(0, 0), &p, 31), TargetOutput::Discrete(5, 6));
        let id = LinearTaskParams { a: [[1, 0], [0, 1]], b: [0, 0] };
        assert_eq!(target_linear(av(7, 9), &id, 31), TargetOutput::Discrete(7, 9));
    }

    #[test]
    fn parse_pinned_params() {
        let p = LinearTaskParams::parse("2,3,1,4,5,6", 31).unwrap();
        assert_eq!(p, LinearTaskParams { a: [[2, 3], [1, 4]], b: [5, 6] });
        assert!(LinearTaskParams::parse("1,2,2,4,0,0", 31).is_err());
        assert!(LinearTaskParams::parse("1,2,3", 31).is_err());
        assert!(LinearTaskParams::parse("2,3,1,4,5,x", 31).is_err());
    }

    #[test]
    fn sampled_linear_map_is_bijective() {
        let p = gen_linear_params(31, 0).unwrap();
        let grid = enumerate_attval(31).unwrap();
        let outs: HashSet<_> = grid.iter().map(|&i| pair(target_linear(i, &p, 31))).collect();
        assert_eq!(outs.len(), 961);
    }

    #[test]
    fn entangled_examples_and_equivalence() {
        assert_eq!(target_entangled(av(3, 5), 31), TargetOutput::Discrete(29, 8));
        assert_eq!(target_entangled(av(0, 0), 31), TargetOutput::Discrete(0, 0));
        for i in enumerate_attval(31).unwrap() {
            let m = encode_entangled(i, 31);
            assert_eq!(pair(target_entangled(i, 31)), (m.s1, m.s2));
        }
    }

    #[test]
    fn entangled_twice_scales_by_two() {
        let n = 31;
        for i in enumerate_attval(n).unwrap() {
            let (o1, o2) = pair(target_entangled(i, n));
            let twice = pair(target_entangled(av(o1, o2), n));
            assert_eq!(twice, ((2 * (n - i.a2)) % n, (2 * i.a1) % n));
        }
    }

    #[test]
    fn coordinates_target_is_the_point() {
        assert_eq!(target_coordinates(DiskPoint { x: 0.0, y: 0.0 }), TargetOutput::Continuous(0.0, 0.0));
        assert_eq!(target_coordinates(DiskPoint { x: 0.3, y: -0.4 }), TargetOutput::Continuous(0.3, -0.4));
    }
}
