//! Hard-coded Sender languages and the naive-compositionality analyzer.
//!
//! Every language emits exactly two symbols from `[0, n_v)`.
//!
//! * identity: `(m1, m2) = (a1, a2)`
//! * entangled: `m1 = (a1 - a2) mod n_v`, `m2 = (a1 + a2) mod n_v`
//! * coordinate: both coordinates bucketed on an `n_v × n_v` grid over `[-1, 1]²`
//! * rotated: the point is first rotated counterclockwise (default π/4),
//!   then bucketed like `coordinate`

use std::collections::{HashMap, HashSet};
use std::f64::consts::FRAC_PI_4;
use std::fmt;
use std::hash::Hash;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::worlds::{enumerate_attval, AttValInput, DiskPoint};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Message {
    pub s1: usize,
    pub s2: usize,
}

impl Message {
    pub fn new(s1: usize, s2: usize) -> Self {
        Message { s1, s2 }
    }

    pub fn symbols(&self) -> [usize; 2] {
        [self.s1, self.s2]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LanguageKind {
    Identity,
    Entangled,
    Coordinate,
    Rotated,
}

impl LanguageKind {
    pub fn name(self) -> &'static str {
        match self {
            LanguageKind::Identity => "identity",
            LanguageKind::Entangled => "entangled",
            LanguageKind::Coordinate => "coordinate",
            LanguageKind::Rotated => "rotated",
        }
    }

    /// Whether the language speaks about the attribute-value world.
    pub fn is_discrete(self) -> bool {
        matches!(self, LanguageKind::Identity | LanguageKind::Entangled)
    }
}

impl fmt::Display for LanguageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LanguageKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().trim_start_matches("lang-") {
            "identity" => Ok(LanguageKind::Identity),
            "entangled" => Ok(LanguageKind::Entangled),
            "coordinate" => Ok(LanguageKind::Coordinate),
            "rotated" => Ok(LanguageKind::Rotated),
            other => Err(Error::Config(format!("unknown language `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LanguageSpec {
    pub kind: LanguageKind,
    pub n_values: usize,
    /// Only used by [`LanguageKind::Rotated`].
    pub rotation_angle: f64,
}

impl LanguageSpec {
    pub fn new(kind: LanguageKind, n_values: usize) -> Result<Self> {
        let spec = LanguageSpec { kind, n_values, rotation_angle: FRAC_PI_4 };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_angle(mut self, angle: f64) -> Result<Self> {
        self.rotation_angle = angle;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_values < 2 {
            return Err(Error::Config(format!("vocabulary size must be at least 2, got {}", self.n_values)));
        }
        let a = self.rotation_angle;
        if self.kind == LanguageKind::Rotated && !(a > 0.0 && a < std::f64::consts::FRAC_PI_2) {
            return Err(Error::Config(format!("rotation angle must lie in (0, π/2), got {a}")));
        }
        Ok(())
    }

    pub fn encode_attval(&self, i: AttValInput) -> Result<Message> {
        if i.a1 >= self.n_values || i.a2 >= self.n_values {
            return Err(Error::Input(format!("attribute pair ({}, {}) out of range for n_v = {}", i.a1, i.a2, self.n_values)));
        }
        match self.kind {
            LanguageKind::Identity => Ok(encode_identity(i)),
            LanguageKind::Entangled => Ok(encode_entangled(i, self.n_values)),
            k => Err(Error::Usage(format!("language `{k}` does not encode attribute pairs"))),
        }
    }

    pub fn encode_point(&self, p: DiskPoint) -> Result<Message> {
        match self.kind {
            LanguageKind::Coordinate => encode_coordinate(p, self.n_values),
            LanguageKind::Rotated => encode_rotated(p, self.n_values, self.rotation_angle),
            k => Err(Error::Usage(format!("language `{k}` does not encode points"))),
        }
    }
}

pub fn encode_identity(i: AttValInput) -> Message {
    Message { s1: i.a1, s2: i.a2 }
}

/// Position 1 carries the difference, position 2 the sum, both mod `n_v`.
pub fn encode_entangled(i: AttValInput, n_values: usize) -> Message {
    let (a1, a2) = (i.a1 % n_values, i.a2 % n_values);
    Message { s1: (a1 + n_values - a2) % n_values, s2: (a1 + a2) % n_values }
}

/// Bucket of `v` on a uniform grid of `n_v` cells over `[-1, 1]`; the top edge
/// falls into the last bucket.
pub fn discretize(v: f64, n_values: usize) -> Result<usize> {
    if !(-1.0..=1.0).contains(&v) {
        return Err(Error::Input(format!("{v} lies outside [-1, 1]")));
    }
    let bucket = ((v + 1.0) / 2.0 * n_values as f64).floor() as usize;
    Ok(bucket.min(n_values - 1))
}

pub fn encode_coordinate(p: DiskPoint, n_values: usize) -> Result<Message> {
    Ok(Message { s1: discretize(p.x, n_values)?, s2: discretize(p.y, n_values)? })
}

/// Counterclockwise rotation by `angle`.
pub fn rotate(x: f64, y: f64, angle: f64) -> (f64, f64) {
    let (s, c) = angle.sin_cos();
    (x * c - y * s, x * s + y * c)
}

pub fn encode_rotated(p: DiskPoint, n_values: usize, angle: f64) -> Result<Message> {
    let (x, y) = rotate(p.x, p.y, angle);
    // Rotation preserves the norm up to rounding; keep the result on the grid.
    Ok(Message { s1: discretize(x.clamp(-1.0, 1.0), n_values)?, s2: discretize(y.clamp(-1.0, 1.0), n_values)? })
}

/// Centre of grid cell `(gx, gy)` on the `n_v × n_v` grid over `[-1, 1]²`.
pub fn cell_center(cell: AttValInput, n_values: usize) -> (f64, f64) {
    let w = 2.0 / n_values as f64;
    (-1.0 + (cell.a1 as f64 + 0.5) * w, -1.0 + (cell.a2 as f64 + 0.5) * w)
}

/// A finite world of two-attribute inputs paired with the messages a language
/// assigns to them.
#[derive(Clone, Debug)]
pub struct EncodedWorld {
    pub inputs: Vec<AttValInput>,
    pub messages: Vec<Message>,
}

impl EncodedWorld {
    pub fn new<F>(world: &[AttValInput], mut encode: F) -> Result<Self>
    where
        F: FnMut(AttValInput) -> Result<Message>,
    {
        if world.is_empty() {
            return Err(Error::Usage("cannot analyze an empty world".into()));
        }
        let messages = world.iter().map(|&i| encode(i)).collect::<Result<Vec<_>>>()?;
        Ok(EncodedWorld { inputs: world.to_vec(), messages })
    }

    /// The analyzer world for a language kind.
    ///
    /// Attribute languages use the full `n_v²` grid. Point languages use grid
    /// cells as inputs (their centres are encoded): `coordinate` over the whole
    /// grid, `rotated` over the cells whose centre lies in the unit disk.
    pub fn for_language(spec: &LanguageSpec) -> Result<Self> {
        let grid = enumerate_attval(spec.n_values)?;
        let n = spec.n_values;
        match spec.kind {
            LanguageKind::Identity | LanguageKind::Entangled => Self::new(&grid, |i| spec.encode_attval(i)),
            LanguageKind::Coordinate => Self::new(&grid, |c| {
                let (x, y) = cell_center(c, n);
                Ok(Message { s1: discretize(x, n)?, s2: discretize(y, n)? })
            }),
            LanguageKind::Rotated => {
                let inside: Vec<_> = grid
                    .into_iter()
                    .filter(|&c| {
                        let (x, y) = cell_center(c, n);
                        x * x + y * y <= 1.0
                    })
                    .collect();
                Self::new(&inside, |c| {
                    let (x, y) = cell_center(c, n);
                    encode_rotated(DiskPoint { x, y }, n, spec.rotation_angle)
                })
            }
        }
    }

    fn attribute(&self, idx: usize, a: usize) -> usize {
        let i = self.inputs[idx];
        if a == 0 {
            i.a1
        } else {
            i.a2
        }
    }

    fn symbol(&self, idx: usize, j: usize) -> usize {
        self.messages[idx].symbols()[j]
    }

    pub fn distinct_messages(&self) -> usize {
        self.messages.iter().collect::<HashSet<_>>().len()
    }

    /// Distinct inputs map to distinct messages.
    pub fn is_injective(&self) -> bool {
        self.distinct_messages() == self.inputs.iter().collect::<HashSet<_>>().len()
    }
}

fn entropy_bits<K: Eq + Hash>(keys: impl Iterator<Item = K>, n: f64) -> f64 {
    let mut counts: HashMap<K, usize> = HashMap::new();
    for k in keys {
        *counts.entry(k).or_default() += 1;
    }
    counts
        .values()
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum()
}

/// `I(m_j; i_a)` in bits under the uniform distribution over the world;
/// rows index message positions, columns attributes.
pub fn mi_matrix(world: &EncodedWorld) -> [[f64; 2]; 2] {
    let n = world.inputs.len() as f64;
    let idx = 0..world.inputs.len();
    let mut out = [[0.0; 2]; 2];
    for (j, row) in out.iter_mut().enumerate() {
        let h_m = entropy_bits(idx.clone().map(|k| world.symbol(k, j)), n);
        for (a, cell) in row.iter_mut().enumerate() {
            let h_a = entropy_bits(idx.clone().map(|k| world.attribute(k, a)), n);
            let h_joint = entropy_bits(idx.clone().map(|k| (world.symbol(k, j), world.attribute(k, a))), n);
            *cell = (h_m + h_a - h_joint).max(0.0);
        }
    }
    out
}

/// Entropy in bits of each attribute under the uniform world distribution.
pub fn attribute_entropies(world: &EncodedWorld) -> [f64; 2] {
    let n = world.inputs.len() as f64;
    [0, 1].map(|a| entropy_bits((0..world.inputs.len()).map(|k| world.attribute(k, a)), n))
}

/// Symbol at position `j` and attribute `a` determine each other on this world.
fn position_denotes_attribute(world: &EncodedWorld, j: usize, a: usize) -> bool {
    let mut sym_of_value: HashMap<usize, usize> = HashMap::new();
    let mut value_of_sym: HashMap<usize, usize> = HashMap::new();
    for k in 0..world.inputs.len() {
        let (s, v) = (world.symbol(k, j), world.attribute(k, a));
        if *sym_of_value.entry(v).or_insert(s) != s || *value_of_sym.entry(s).or_insert(v) != v {
            return false;
        }
    }
    true
}

/// Brute-force naive-compositionality test.
///
/// Returns the witness `assignment[j] = a` (0-based) of the first
/// position-to-attribute bijection under which every position is a function
/// of its attribute alone and determines it, or `None`.
pub fn is_naively_compositional(world: &EncodedWorld) -> Option<[usize; 2]> {
    [[0, 1], [1, 0]].into_iter().find(|assignment| (0..2).all(|j| position_denotes_attribute(world, j, assignment[j])))
}

#[derive(Clone, Debug, Serialize)]
pub struct CompositionalityReport {
    pub language: LanguageKind,
    pub n_values: usize,
    pub world_size: usize,
    pub distinct_messages: usize,
    pub injective: bool,
    pub mi_bits: [[f64; 2]; 2],
    pub witness: Option<[usize; 2]>,
}

impl CompositionalityReport {
    pub fn compositional(&self) -> bool {
        self.witness.is_some()
    }
}

pub fn analyze(spec: &LanguageSpec) -> Result<CompositionalityReport> {
    let world = EncodedWorld::for_language(spec)?;
    Ok(CompositionalityReport {
        language: spec.kind,
        n_values: spec.n_values,
        world_size: world.inputs.len(),
        distinct_messages: world.distinct_messages(),
        injective: world.is_injective(),
        mi_bits: mi_matrix(&world),
        witness: is_naively_compositional(&world),
    })
}

impl fmt::Display for CompositionalityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "language      {}", self.language)?;
        writeln!(f, "n_values      {}", self.n_values)?;
        writeln!(f, "world size    {}", self.world_size)?;
        writeln!(f, "messages      {} distinct", self.distinct_messages)?;
        writeln!(f)?;
        writeln!(f, "I(m_j; i_a) [bits]   attr 1    attr 2")?;
        for (j, row) in self.mi_bits.iter().enumerate() {
            writeln!(f, "  position {}        {:>7.4}   {:>7.4}", j + 1, row[0], row[1])?;
        }
        writeln!(f)?;
        match self.witness {
            Some(w) => {
                writeln!(f, "verdict       compositional")?;
                write!(f, "witness       position 1 -> attr {}, position 2 -> attr {}", w[0] + 1, w[1] + 1)?;
            }
            None => {
                writeln!(f, "verdict       not compositional")?;
                write!(f, "witness       none")?;
            }
        }
        if !self.injective {
            write!(f, "\nwarning       language is not a bijection: {} inputs share {} messages", self.world_size, self.distinct_messages)?;
        }
        Ok(())
    }
}
