//! One-dimensional Kohonen string trained on-line over binary weekly profiles.
//!
//! Every step draws one profile, finds its best matching unit `u` and moves
//! each unit `j` toward the profile by `lr(t) * h(|j - u|, radius(t))`, where
//! `h` is a Gaussian kernel over string distance and both schedules decay
//! linearly over `epochs * N` steps. Because `lr * h <= 1` each move is a
//! convex combination with a point of `{0,1}^672`, so code vectors stay in
//! the unit hypercube and read as per-slot activity proportions.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::io::Write;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data_model::{Dataset, SLOTS};
use crate::error::{Error, Result};

/// Radius floor inside the kernel; a zero radius leaves only the winner.
const RADIUS_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Init {
    /// Distinct training profiles drawn without replacement.
    Sample,
    /// Components drawn uniformly on [0, 1].
    Uniform,
}

impl FromStr for Init {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sample" => Ok(Init::Sample),
            "uniform" => Ok(Init::Uniform),
            other => Err(Error::Config(format!("unknown init mode `{other}`"))),
        }
    }
}

impl std::fmt::Display for Init {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Init::Sample => "sample",
            Init::Uniform => "uniform",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SomConfig {
    pub units: usize,
    pub epochs: usize,
    pub lr_start: f64,
    pub lr_end: f64,
    pub radius_start: f64,
    pub radius_end: f64,
    pub seed: u64,
    pub init: Init,
}

impl Default for SomConfig {
    fn default() -> Self {
        Self {
            units: 10,
            epochs: 100,
            lr_start: 0.5,
            lr_end: 0.01,
            radius_start: 5.0,
            radius_end: 0.5,
            seed: 0,
            init: Init::Sample,
        }
    }
}

impl SomConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.units < 2 {
            return fail(format!("units must be at least 2, got {}", self.units));
        }
        if self.epochs == 0 {
            return fail("epochs must be positive".into());
        }
        if !(self.lr_end > 0.0 && self.lr_end <= self.lr_start && self.lr_start <= 1.0) {
            return fail(format!(
                "learning rates must satisfy 0 < end <= start <= 1, got {} -> {}",
                self.lr_start, self.lr_end
            ));
        }
        if !(self.radius_end >= 0.0 && self.radius_end <= self.radius_start) {
            return fail(format!(
                "radii must satisfy 0 <= end <= start, got {} -> {}",
                self.radius_start, self.radius_end
            ));
        }
        Ok(())
    }

    /// `key = value` lines recording every hyperparameter.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "units = {}", self.units);
        let _ = writeln!(s, "epochs = {}", self.epochs);
        let _ = writeln!(s, "lr_start = {}", self.lr_start);
        let _ = writeln!(s, "lr_end = {}", self.lr_end);
        let _ = writeln!(s, "radius_start = {}", self.radius_start);
        let _ = writeln!(s, "radius_end = {}", self.radius_end);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "init = {}", self.init);
        let _ = writeln!(s, "kernel = gaussian");
        let _ = writeln!(s, "schedule = linear");
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("bad config line `{line}`")))?;
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
        fn get<T: FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<T> {
            map.get(key)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::Config(format!("config echo lacks a valid `{key}`")))
        }
        let cfg = Self {
            units: get(&map, "units")?,
            epochs: get(&map, "epochs")?,
            lr_start: get(&map, "lr_start")?,
            lr_end: get(&map, "lr_end")?,
            radius_start: get(&map, "radius_start")?,
            radius_end: get(&map, "radius_end")?,
            seed: get(&map, "seed")?,
            init: map
                .get("init")
                .ok_or_else(|| Error::Config("config echo lacks `init`".into()))?
                .parse()?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SomModel {
    pub code_vectors: Vec<Vec<f64>>,
    pub config: SomConfig,
    pub final_quantization_error: f64,
}

impl SomModel {
    pub fn units(&self) -> usize {
        self.code_vectors.len()
    }

    /// Writes `unit,c0..c671` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let dim = self.code_vectors.first().map_or(0, Vec::len);
        let mut header = vec!["unit".to_string()];
        header.extend((0..dim).map(|i| format!("c{i}")));
        w.write_record(&header)?;
        for (u, cv) in self.code_vectors.iter().enumerate() {
            let mut row = vec![u.to_string()];
            row.extend(cv.iter().map(|x| x.to_string()));
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io("<model csv>", e))?;
        Ok(())
    }

    /// Reads code vectors written by [`SomModel::write_csv`].
    pub fn read_code_vectors<R: std::io::Read>(input: R) -> Result<Vec<Vec<f64>>> {
        let mut rdr = csv::Reader::from_reader(input);
        let mut out = Vec::new();
        for (i, row) in rdr.records().enumerate() {
            let row = row?;
            let line = row.position().map_or(0, |p| p.line());
            let bad = |m: String| Error::Parse {
                file: "model csv".into(),
                line,
                message: m,
            };
            if row.get(0).and_then(|u| u.parse::<usize>().ok()) != Some(i) {
                return Err(bad(format!("expected unit {i}")));
            }
            let cv = row
                .iter()
                .skip(1)
                .map(|c| c.parse::<f64>().map_err(|e| bad(format!("`{c}`: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            if cv.len() != SLOTS {
                return Err(bad(format!(
                    "expected {SLOTS} components, found {}",
                    cv.len()
                )));
            }
            out.push(cv);
        }
        Ok(out)
    }
}

/// Winner of every person plus per-unit counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    /// Unit of each person, in dataset order.
    pub units: Vec<usize>,
    pub person_ids: Vec<String>,
    pub class_sizes: Vec<usize>,
}

impl Assignment {
    pub fn unit_of(&self, person_id: &str) -> Option<usize> {
        self.person_ids
            .iter()
            .position(|p| p == person_id)
            .map(|i| self.units[i])
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest code vector by squared Euclidean distance; ties go to the lowest index.
pub fn best_matching_unit(code_vectors: &[Vec<f64>], profile: &[f64]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (u, cv) in code_vectors.iter().enumerate() {
        let d = squared_distance(cv, profile);
        if d < best_d {
            best = u;
            best_d = d;
        }
    }
    best
}

pub fn init_codebook(dataset: &Dataset, config: &SomConfig) -> Result<Vec<Vec<f64>>> {
    if dataset.is_empty() {
        return Err(Error::Degenerate(
            "cannot initialize from an empty dataset".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    match config.init {
        Init::Uniform => Ok((0..config.units)
            .map(|_| (0..SLOTS).map(|_| rng.gen::<f64>()).collect())
            .collect()),
        Init::Sample => {
            let mut seen = HashSet::new();
            let distinct: Vec<&[u8]> = dataset
                .profiles()
                .iter()
                .map(|p| p.slots())
                .filter(|s| seen.insert(*s))
                .collect();
            if distinct.len() < config.units {
                return Err(Error::Config(format!(
                    "sample init needs {} distinct profiles, dataset has {}",
                    config.units,
                    distinct.len()
                )));
            }
            Ok(distinct
                .choose_multiple(&mut rng, config.units)
                .map(|s| s.iter().map(|&b| f64::from(b)).collect())
                .collect())
        }
    }
}

/// Gaussian neighbourhood weight for string distance `d`.
pub fn neighbourhood(d: usize, radius: f64) -> f64 {
    if d == 0 {
        return 1.0;
    }
    let r = radius.max(RADIUS_EPS);
    let d = d as f64;
    (-(d * d) / (2.0 * r * r)).exp()
}

fn interpolate(start: f64, end: f64, step: usize, total: usize) -> f64 {
    if total <= 1 {
        return start;
    }
    start + (end - start) * step as f64 / (total - 1) as f64
}

pub fn train(dataset: &Dataset, config: &SomConfig) -> Result<SomModel> {
    config.validate()?;
    let mut code = init_codebook(dataset, config)?;
    let inputs: Vec<Vec<f64>> = dataset.profiles().iter().map(|p| p.as_f64()).collect();
    let n = inputs.len();
    let total = config.epochs * n;
    // Shuffle stream derived from the init seed.
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x9e37_79b9_7f4a_7c15));
    let mut order: Vec<usize> = (0..n).collect();
    let mut weights = vec![0.0; config.units];

    let mut step = 0;
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let x = &inputs[i];
            let lr = interpolate(config.lr_start, config.lr_end, step, total);
            let radius = interpolate(config.radius_start, config.radius_end, step, total);
            let winner = best_matching_unit(&code, x);
            for (j, w) in weights.iter_mut().enumerate() {
                *w = lr * neighbourhood(winner.abs_diff(j), radius);
            }
            for (cv, &a) in code.iter_mut().zip(&weights) {
                if a == 0.0 {
                    continue;
                }
                for (c, &xi) in cv.iter_mut().zip(x) {
                    *c = (*c + a * (xi - *c)).clamp(0.0, 1.0);
                }
            }
            step += 1;
        }
    }

    let mut model = SomModel {
        code_vectors: code,
        config: config.clone(),
        final_quantization_error: 0.0,
    };
    model.final_quantization_error = quantization_error(&model, dataset);
    Ok(model)
}

pub fn assign_all(model: &SomModel, dataset: &Dataset) -> Assignment {
    let mut class_sizes = vec![0; model.units()];
    let units: Vec<usize> = dataset
        .profiles()
        .iter()
        .map(|p| {
            let u = best_matching_unit(&model.code_vectors, &p.as_f64());
            class_sizes[u] += 1;
            u
        })
        .collect();
    Assignment {
        units,
        person_ids: dataset.person_ids().map(str::to_string).collect(),
        class_sizes,
    }
}

/// Mean squared distance from each profile to its winner.
pub fn quantization_error(model: &SomModel, dataset: &Dataset) -> f64 {
    if dataset.is_empty() {
        return 0.0;
    }
    let total: f64 = dataset
        .profiles()
        .iter()
        .map(|p| {
            let x = p.as_f64();
            let u = best_matching_unit(&model.code_vectors, &x);
            squared_distance(&model.code_vectors[u], &x)
        })
        .sum();
    total / dataset.len() as f64
}
