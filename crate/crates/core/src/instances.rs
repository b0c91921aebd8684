//! Cutting stock instances: BPPLIB parsing, seeded generation and curricula.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::SplitMix64;

#[derive(Debug, Error, PartialEq)]
pub enum InstanceError {
    #[error("empty instance file")]
    Empty,
    #[error("line {line}: malformed integer {text:?}")]
    MalformedInteger { line: usize, text: String },
    #[error("declared {declared} items but found {found}")]
    CountMismatch { declared: usize, found: usize },
    #[error("item size {size} exceeds roll length {roll}")]
    SizeExceedsRoll { size: u64, roll: u64 },
    #[error("line {line}: value must be positive")]
    NonPositive { line: usize },
    #[error("empty size range [{lo}, {hi}] for roll length {roll}")]
    EmptySizeRange { lo: i64, hi: i64, roll: u64 },
    #[error("invalid fraction bounds {min} .. {max}")]
    InvalidFractions { min: f64, max: f64 },
    #[error("stage line {line}: {reason}")]
    InvalidStage { line: usize, reason: String },
    #[error("curriculum has no stages")]
    EmptyCurriculum,
    #[error("invalid instance: {0}")]
    Invalid(String),
    #[error("unknown preset {0:?}")]
    UnknownPreset(String),
}

/// One cutting stock instance with order types aggregated by size.
///
/// Sizes are strictly decreasing; `demands[i]` belongs to `sizes[i]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instance {
    pub name: String,
    pub roll_length: u64,
    pub sizes: Vec<u64>,
    pub demands: Vec<u64>,
}

impl Instance {
    /// Builds an instance from raw per-item sizes, aggregating equal sizes.
    pub fn from_items(
        name: impl Into<String>,
        roll_length: u64,
        items: &[u64],
    ) -> Result<Self, InstanceError> {
        if roll_length == 0 {
            return Err(InstanceError::Invalid("roll length must be positive".into()));
        }
        let mut counts: BTreeMap<u64, u64> = BTreeMap::new();
        for &s in items {
            if s == 0 {
                return Err(InstanceError::Invalid("item size must be positive".into()));
            }
            if s > roll_length {
                return Err(InstanceError::SizeExceedsRoll { size: s, roll: roll_length });
            }
            *counts.entry(s).or_default() += 1;
        }
        if counts.is_empty() {
            return Err(InstanceError::Invalid("instance has no items".into()));
        }
        let (sizes, demands) = counts.into_iter().rev().unzip();
        Ok(Self { name: name.into(), roll_length, sizes, demands })
    }

    /// Builds an instance from already aggregated order types, validating invariants.
    pub fn new(
        name: impl Into<String>,
        roll_length: u64,
        sizes: Vec<u64>,
        demands: Vec<u64>,
    ) -> Result<Self, InstanceError> {
        if sizes.len() != demands.len() {
            return Err(InstanceError::Invalid("sizes and demands differ in length".into()));
        }
        if sizes.is_empty() {
            return Err(InstanceError::Invalid("instance has no order types".into()));
        }
        let mut items = Vec::new();
        for (&s, &d) in sizes.iter().zip(&demands) {
            if d == 0 {
                return Err(InstanceError::Invalid("demand must be positive".into()));
            }
            items.extend(std::iter::repeat(s).take(d as usize));
        }
        let inst = Self::from_items(name, roll_length, &items)?;
        if inst.sizes.len() != sizes.len() {
            return Err(InstanceError::Invalid("sizes must be distinct".into()));
        }
        Ok(inst)
    }

    pub fn num_order_types(&self) -> usize {
        self.sizes.len()
    }

    pub fn num_items(&self) -> u64 {
        self.demands.iter().sum()
    }

    /// Demand-expanded BPPLIB text (one line per item, sizes descending).
    pub fn to_bpplib(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{}", self.num_items());
        let _ = writeln!(out, "{}", self.roll_length);
        for (&s, &d) in self.sizes.iter().zip(&self.demands) {
            for _ in 0..d {
                let _ = writeln!(out, "{s}");
            }
        }
        out
    }
}

fn parse_positive(line_no: usize, text: &str) -> Result<u64, InstanceError> {
    let v: u64 = text.parse().map_err(|_| InstanceError::MalformedInteger {
        line: line_no,
        text: text.to_string(),
    })?;
    if v == 0 {
        return Err(InstanceError::NonPositive { line: line_no });
    }
    Ok(v)
}

/// Parses BPPLIB text: item count, roll length, then one size per line.
pub fn parse_bpplib(text: &str) -> Result<Instance, InstanceError> {
    parse_bpplib_named(text, "unnamed")
}

pub fn parse_bpplib_named(text: &str, name: &str) -> Result<Instance, InstanceError> {
    // Blank lines are skipped, CRLF is handled by trim.
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    let (ln, first) = lines.next().ok_or(InstanceError::Empty)?;
    let declared = parse_positive(ln, first)? as usize;
    let (ln, second) = lines
        .next()
        .ok_or(InstanceError::CountMismatch { declared, found: 0 })?;
    let roll = parse_positive(ln, second)?;
    let mut items = Vec::with_capacity(declared);
    for (ln, l) in lines {
        items.push(parse_positive(ln, l)?);
    }
    if items.len() != declared {
        return Err(InstanceError::CountMismatch { declared, found: items.len() });
    }
    Instance::from_items(name, roll, &items)
}

pub fn load_bpplib(path: &Path) -> Result<Instance, Box<dyn std::error::Error + Send + Sync>> {
    let text = std::fs::read_to_string(path)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "unnamed".into());
    Ok(parse_bpplib_named(&text, &name)?)
}

/// Integer size bounds `[ceil(frac_min*L), floor(frac_max*L)]` clipped to `[1, L]`.
pub fn size_range(roll_length: u64, frac_min: f64, frac_max: f64) -> (i64, i64) {
    // The slack absorbs decimal fractions such as 0.7 that are not exact in binary.
    const SLACK: f64 = 1e-9;
    let l = roll_length as f64;
    let lo = ((frac_min * l) - SLACK).ceil().max(1.0) as i64;
    let hi = ((frac_max * l) + SLACK).floor().min(l) as i64;
    (lo, hi)
}

/// Draws `num_items` sizes uniformly from the fractional size range and aggregates them.
pub fn generate_instance(
    roll_length: u64,
    num_items: u64,
    frac_min: f64,
    frac_max: f64,
    seed: u64,
) -> Result<Instance, InstanceError> {
    if !(frac_min > 0.0 && frac_min < frac_max && frac_max <= 1.0) {
        return Err(InstanceError::InvalidFractions { min: frac_min, max: frac_max });
    }
    if num_items == 0 || roll_length == 0 {
        return Err(InstanceError::Invalid("roll length and item count must be positive".into()));
    }
    let (lo, hi) = size_range(roll_length, frac_min, frac_max);
    if lo > hi {
        return Err(InstanceError::EmptySizeRange { lo, hi, roll: roll_length });
    }
    let mut rng = SplitMix64::new(seed);
    let items: Vec<u64> = (0..num_items)
        .map(|_| rng.range_inclusive(lo as u64, hi as u64))
        .collect();
    let name = format!("BPP_{roll_length}_{num_items}_{frac_min}_{frac_max}_{seed}");
    Instance::from_items(name, roll_length, &items)
}

/// A block of same-shaped generated instances in a curriculum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurriculumStage {
    pub count: usize,
    pub roll_length: u64,
    pub num_orders: u64,
    pub frac_min: f64,
    pub frac_max: f64,
}

impl CurriculumStage {
    pub const fn new(count: usize, roll_length: u64, num_orders: u64, frac_min: f64, frac_max: f64) -> Self {
        Self { count, roll_length, num_orders, frac_min, frac_max }
    }

    fn validate(&self) -> Result<(), InstanceError> {
        if self.count == 0 {
            return Err(InstanceError::Invalid("stage count must be at least 1".into()));
        }
        if !(self.frac_min > 0.0 && self.frac_min < self.frac_max && self.frac_max <= 1.0) {
            return Err(InstanceError::InvalidFractions { min: self.frac_min, max: self.frac_max });
        }
        Ok(())
    }
}

/// Concatenates stages in order; instance `k` overall uses seed `base_seed + k`.
pub fn build_curriculum(
    stages: &[CurriculumStage],
    base_seed: u64,
) -> Result<Vec<Instance>, InstanceError> {
    if stages.is_empty() {
        return Err(InstanceError::EmptyCurriculum);
    }
    let mut out = Vec::with_capacity(stages.iter().map(|s| s.count).sum());
    for stage in stages {
        stage.validate()?;
        for _ in 0..stage.count {
            let seed = base_seed + out.len() as u64;
            out.push(generate_instance(
                stage.roll_length,
                stage.num_orders,
                stage.frac_min,
                stage.frac_max,
                seed,
            )?);
        }
    }
    Ok(out)
}

/// Stage index of every instance in a curriculum built from `stages`.
pub fn stage_of_episode(stages: &[CurriculumStage]) -> Vec<usize> {
    stages
        .iter()
        .enumerate()
        .flat_map(|(i, s)| std::iter::repeat(i).take(s.count))
        .collect()
}

const FRAC_MIN: f64 = 0.1;
const FRAC_MAX: f64 = 0.7;

/// The 400-instance training schedule: ten blocks of forty, easy to hard.
pub fn full_curriculum() -> Vec<CurriculumStage> {
    [(50, 50), (50, 75), (50, 100), (50, 120), (100, 75), (100, 100), (100, 120), (100, 150), (200, 125), (200, 150)]
        .into_iter()
        .map(|(l, m)| CurriculumStage::new(40, l, m, FRAC_MIN, FRAC_MAX))
        .collect()
}

/// Laptop-scale schedule: three stages of ten with roll lengths 20, 30 and 50.
pub fn desk_curriculum() -> Vec<CurriculumStage> {
    vec![
        CurriculumStage::new(10, 20, 15, FRAC_MIN, FRAC_MAX),
        CurriculumStage::new(10, 30, 25, FRAC_MIN, FRAC_MAX),
        CurriculumStage::new(10, 50, 40, FRAC_MIN, FRAC_MAX),
    ]
}

/// Validation split drawn from the training roll lengths.
pub fn desk_validation() -> Vec<CurriculumStage> {
    vec![
        CurriculumStage::new(3, 20, 15, FRAC_MIN, FRAC_MAX),
        CurriculumStage::new(3, 30, 25, FRAC_MIN, FRAC_MAX),
        CurriculumStage::new(3, 50, 40, FRAC_MIN, FRAC_MAX),
    ]
}

/// Held-out test split; every roll is longer than any training roll.
pub fn desk_test() -> Vec<CurriculumStage> {
    vec![
        CurriculumStage::new(10, 60, 50, FRAC_MIN, FRAC_MAX),
        CurriculumStage::new(10, 80, 60, FRAC_MIN, FRAC_MAX),
    ]
}

/// Base seeds keep the preset splits disjoint from one another.
pub const DESK_TRAIN_SEED: u64 = 0;
pub const DESK_VALIDATION_SEED: u64 = 10_000;
pub const DESK_TEST_SEED: u64 = 20_000;

/// Looks up a named preset and its default base seed.
pub fn preset(name: &str) -> Result<(Vec<CurriculumStage>, u64), InstanceError> {
    match name {
        "full" | "full-curriculum" => Ok((full_curriculum(), DESK_TRAIN_SEED)),
        "desk" | "desk-curriculum" | "desk-train" => Ok((desk_curriculum(), DESK_TRAIN_SEED)),
        "desk-val" | "desk-validation" => Ok((desk_validation(), DESK_VALIDATION_SEED)),
        "desk-test" => Ok((desk_test(), DESK_TEST_SEED)),
        other => Err(InstanceError::UnknownPreset(other.to_string())),
    }
}

/// Parses a stage file: one `count L m frac_min frac_max` per line, `#` comments.
pub fn parse_stages(text: &str) -> Result<Vec<CurriculumStage>, InstanceError> {
    let mut stages = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let bad = |reason: &str| InstanceError::InvalidStage { line: i + 1, reason: reason.into() };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(bad("expected 5 fields: count L m frac_min frac_max"));
        }
        let count = fields[0].parse().map_err(|_| bad("bad count"))?;
        let roll_length = fields[1].parse().map_err(|_| bad("bad roll length"))?;
        let num_orders = fields[2].parse().map_err(|_| bad("bad order count"))?;
        let frac_min = fields[3].parse().map_err(|_| bad("bad frac_min"))?;
        let frac_max = fields[4].parse().map_err(|_| bad("bad frac_max"))?;
        let stage = CurriculumStage { count, roll_length, num_orders, frac_min, frac_max };
        stage.validate().map_err(|e| bad(&e.to_string()))?;
        stages.push(stage);
    }
    if stages.is_empty() {
        return Err(InstanceError::EmptyCurriculum);
    }
    Ok(stages)
}

pub fn format_stages(stages: &[CurriculumStage]) -> String {
    let mut out = String::from("# count L m frac_min frac_max\n");
    for s in stages {
        let _ = writeln!(out, "{} {} {} {} {}", s.count, s.roll_length, s.num_orders, s.frac_min, s.frac_max);
    }
    out
}
