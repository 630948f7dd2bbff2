//! Agglomeration of the string's code vectors into superclasses.
//!
//! Each non-empty unit enters as a leaf weighted by its class size. Merge
//! costs are updated with the Lance–Williams recurrence; for Ward linkage the
//! cost of a merge is the increase in within-group inertia, so the costs of
//! all merges add up to the total inertia of the weighted leaves.

use std::io::{Read, Write};
use std::str::FromStr;

use crate::data_model::Dataset;
use crate::error::{Error, Result};
use crate::som::Assignment;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Linkage {
    #[default]
    Ward,
    Single,
    Complete,
}

impl FromStr for Linkage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ward" => Ok(Linkage::Ward),
            "single" => Ok(Linkage::Single),
            "complete" => Ok(Linkage::Complete),
            other => Err(Error::Config(format!("unknown linkage `{other}`"))),
        }
    }
}

/// Which points the explained-variance ratio is measured on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VarianceBasis {
    /// Code vectors weighted by class size.
    #[default]
    CodeVectors,
    /// The raw profiles of every person.
    Individuals,
}

impl FromStr for VarianceBasis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "codevectors" | "code-vectors" => Ok(VarianceBasis::CodeVectors),
            "individuals" => Ok(VarianceBasis::Individuals),
            other => Err(Error::Config(format!("unknown variance basis `{other}`"))),
        }
    }
}

/// One agglomeration step. Node ids below `units` are leaves (unit indices);
/// the node created by step `s` has id `units + s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MergeStep {
    pub left: usize,
    pub right: usize,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dendrogram {
    pub units: usize,
    pub linkage: Linkage,
    /// Non-empty units, ascending.
    pub leaves: Vec<usize>,
    /// Units dropped because no person was assigned to them.
    pub empty_units: Vec<usize>,
    pub steps: Vec<MergeStep>,
    code_vectors: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn ward_cluster_codebook(code_vectors: &[Vec<f64>], sizes: &[usize]) -> Result<Dendrogram> {
    cluster_codebook(code_vectors, sizes, Linkage::Ward)
}

pub fn cluster_codebook(
    code_vectors: &[Vec<f64>],
    sizes: &[usize],
    linkage: Linkage,
) -> Result<Dendrogram> {
    if code_vectors.len() != sizes.len() {
        return Err(Error::Config(format!(
            "{} code vectors but {} class sizes",
            code_vectors.len(),
            sizes.len()
        )));
    }
    let units = code_vectors.len();
    let (leaves, empty_units): (Vec<usize>, Vec<usize>) = (0..units).partition(|&u| sizes[u] > 0);
    if leaves.is_empty() {
        return Err(Error::Degenerate("every unit is empty".into()));
    }
    if !empty_units.is_empty() {
        log::info!("dropping empty units {empty_units:?} before clustering");
    }

    // Active clusters as (node id, weight); kept sorted by id.
    let mut active: Vec<(usize, f64)> = leaves.iter().map(|&u| (u, sizes[u] as f64)).collect();
    let n_nodes = units + leaves.len();
    let mut cost = vec![vec![f64::NAN; n_nodes]; n_nodes];
    for (a, &(i, wi)) in active.iter().enumerate() {
        for &(j, wj) in &active[a + 1..] {
            let d2 = squared_distance(&code_vectors[i], &code_vectors[j]);
            let c = match linkage {
                Linkage::Ward => wi * wj / (wi + wj) * d2,
                Linkage::Single | Linkage::Complete => d2.sqrt(),
            };
            cost[i][j] = c;
            cost[j][i] = c;
        }
    }

    let mut steps = Vec::with_capacity(leaves.len() - 1);
    while active.len() > 1 {
        let mut best = (f64::INFINITY, 0, 0);
        for a in 0..active.len() {
            for b in a + 1..active.len() {
                let c = cost[active[a].0][active[b].0];
                if c < best.0 {
                    best = (c, a, b);
                }
            }
        }
        let (c, a, b) = best;
        let (i, wi) = active[b];
        let (left, wl) = active[a];
        let new_id = units + steps.len();
        let w_new = wl + wi;
        for &(k, wk) in &active {
            if k == left || k == i {
                continue;
            }
            let (d_kl, d_ki) = (cost[k][left], cost[k][i]);
            let updated = match linkage {
                Linkage::Ward => ((wk + wl) * d_kl + (wk + wi) * d_ki - wk * c) / (wk + w_new),
                Linkage::Single => d_kl.min(d_ki),
                Linkage::Complete => d_kl.max(d_ki),
            };
            cost[k][new_id] = updated;
            cost[new_id][k] = updated;
        }
        steps.push(MergeStep {
            left,
            right: i,
            cost: c.max(0.0),
        });
        active.remove(b);
        active.remove(a);
        active.push((new_id, w_new));
    }

    Ok(Dendrogram {
        units,
        linkage,
        leaves,
        empty_units,
        steps,
        code_vectors: code_vectors.to_vec(),
        weights: sizes.iter().map(|&s| s as f64).collect(),
    })
}

impl Dendrogram {
    pub fn total_inertia(&self) -> f64 {
        weighted_inertia(&self.code_vectors, &self.weights, None)
    }

    /// Unit groups after undoing the last `k - 1` merges.
    fn groups(&self, k: usize) -> Vec<Vec<usize>> {
        let n_nodes = self.units + self.steps.len();
        let mut parent: Vec<usize> = (0..n_nodes).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for (s, step) in self.steps.iter().take(self.leaves.len() - k).enumerate() {
            let id = self.units + s;
            let l = find(&mut parent, step.left);
            let r = find(&mut parent, step.right);
            parent[l] = id;
            parent[r] = id;
        }
        let mut by_root: Vec<(usize, Vec<usize>)> = Vec::new();
        for &u in &self.leaves {
            let root = find(&mut parent, u);
            match by_root.iter_mut().find(|(r, _)| *r == root) {
                Some((_, g)) => g.push(u),
                None => by_root.push((root, vec![u])),
            }
        }
        let mut groups: Vec<Vec<usize>> = by_root.into_iter().map(|(_, g)| g).collect();
        groups.sort_by_key(|g| g[0]);
        groups
    }

    pub fn cut_to_k(&self, k: usize) -> Result<SuperclassPartition> {
        if k == 0 || k > self.leaves.len() {
            return Err(Error::Config(format!(
                "cannot cut {} non-empty units into {k} superclasses",
                self.leaves.len()
            )));
        }
        let mut partition = SuperclassPartition {
            units: self.units,
            groups: self.groups(k),
            explained_variance: 0.0,
        };
        partition.explained_variance =
            explained_variance(&partition, &self.code_vectors, &self.weights);
        Ok(partition)
    }

    /// Smallest cut whose explained variance reaches `threshold`.
    pub fn cut_by_variance(&self, threshold: f64) -> Result<SuperclassPartition> {
        if !(0.0..=1.0).contains(&threshold) {
            return Err(Error::Config(format!(
                "variance threshold {threshold} not in [0, 1]"
            )));
        }
        for k in 1..=self.leaves.len() {
            let p = self.cut_to_k(k)?;
            if p.explained_variance >= threshold {
                return Ok(p);
            }
        }
        self.cut_to_k(self.leaves.len())
    }

    /// Writes `step,left,right,cost`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["step", "left", "right", "cost"])?;
        for (s, m) in self.steps.iter().enumerate() {
            w.write_record([
                (s + 1).to_string(),
                m.left.to_string(),
                m.right.to_string(),
                m.cost.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<dendrogram csv>", e))?;
        Ok(())
    }
}

pub fn cut_to_k(dendrogram: &Dendrogram, k: usize) -> Result<SuperclassPartition> {
    dendrogram.cut_to_k(k)
}

/// Superclass label for group index `i`: `A`, `B`, … then `S27`, `S28`, ….
pub fn superclass_label(i: usize) -> String {
    if i < 26 {
        ((b'A' + i as u8) as char).to_string()
    } else {
        format!("S{}", i + 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuperclassPartition {
    pub units: usize,
    /// Groups of unit indices, each ascending, ordered by smallest unit.
    pub groups: Vec<Vec<usize>>,
    pub explained_variance: f64,
}

impl SuperclassPartition {
    pub fn k(&self) -> usize {
        self.groups.len()
    }

    pub fn labels(&self) -> Vec<String> {
        (0..self.k()).map(superclass_label).collect()
    }

    pub fn group_of_unit(&self, unit: usize) -> Option<usize> {
        self.groups.iter().position(|g| g.contains(&unit))
    }

    pub fn label_of_unit(&self, unit: usize) -> Option<String> {
        self.group_of_unit(unit).map(superclass_label)
    }

    /// Builds a partition from explicit groups, normalizing their order.
    pub fn from_groups(units: usize, mut groups: Vec<Vec<usize>>) -> Result<Self> {
        let mut seen = vec![false; units];
        for g in &mut groups {
            if g.is_empty() {
                return Err(Error::Config("empty superclass".into()));
            }
            g.sort_unstable();
            for &u in g.iter() {
                if u >= units || std::mem::replace(&mut seen[u], true) {
                    return Err(Error::Config(format!("unit {u} invalid or repeated")));
                }
            }
        }
        groups.sort_by_key(|g| g[0]);
        Ok(Self {
            units,
            groups,
            explained_variance: f64::NAN,
        })
    }

    /// Writes `unit,superclass`; empty units get an empty label.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["unit", "superclass"])?;
        for u in 0..self.units {
            w.write_record([u.to_string(), self.label_of_unit(u).unwrap_or_default()])?;
        }
        w.flush().map_err(|e| Error::io("<partition csv>", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(input);
        let mut rows: Vec<(usize, String)> = Vec::new();
        for row in rdr.records() {
            let row = row?;
            let line = row.position().map_or(0, |p| p.line());
            let unit = row
                .get(0)
                .and_then(|u| u.parse().ok())
                .ok_or_else(|| Error::Parse {
                    file: "partition csv".into(),
                    line,
                    message: "bad unit index".into(),
                })?;
            rows.push((unit, row.get(1).unwrap_or("").to_string()));
        }
        let units = rows.iter().map(|(u, _)| u + 1).max().unwrap_or(0);
        let mut labels: Vec<String> = rows
            .iter()
            .map(|(_, l)| l.clone())
            .filter(|l| !l.is_empty())
            .collect();
        labels.sort_by_key(|l| (l.len(), l.clone()));
        labels.dedup();
        let groups = labels
            .iter()
            .map(|l| {
                rows.iter()
                    .filter(|(_, x)| x == l)
                    .map(|(u, _)| *u)
                    .collect()
            })
            .collect();
        let p = Self::from_groups(units, groups)?;
        if p.labels() != labels {
            return Err(Error::Parse {
                file: "partition csv".into(),
                line: 0,
                message: "superclass labels are not in canonical order".into(),
            });
        }
        Ok(p)
    }
}

/// Σ w‖x − m‖² about the weighted mean, optionally within `groups` only.
fn weighted_inertia(points: &[Vec<f64>], weights: &[f64], groups: Option<&[Vec<usize>]>) -> f64 {
    let all: Vec<Vec<usize>> = vec![(0..points.len()).collect()];
    let groups = groups.unwrap_or(&all);
    let mut total = 0.0;
    for g in groups {
        let w: f64 = g.iter().map(|&i| weights[i]).sum();
        if w == 0.0 {
            continue;
        }
        let dim = points[g[0]].len();
        let mut mean = vec![0.0; dim];
        for &i in g {
            for (m, x) in mean.iter_mut().zip(&points[i]) {
                *m += weights[i] * x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= w);
        total += g
            .iter()
            .map(|&i| weights[i] * squared_distance(&points[i], &mean))
            .sum::<f64>();
    }
    total
}

/// Between-group over total inertia of the size-weighted code vectors.
pub fn explained_variance(
    partition: &SuperclassPartition,
    code_vectors: &[Vec<f64>],
    weights: &[f64],
) -> f64 {
    if partition.groups.len() == 1 {
        return 0.0;
    }
    if partition.groups.iter().all(|g| g.len() == 1)
        && weights
            .iter()
            .enumerate()
            .all(|(u, &w)| w == 0.0 || partition.group_of_unit(u).is_some())
    {
        return 1.0;
    }
    let total = weighted_inertia(code_vectors, weights, None);
    if total == 0.0 {
        return 1.0;
    }
    let within = weighted_inertia(code_vectors, weights, Some(&partition.groups));
    ((total - within) / total).clamp(0.0, 1.0)
}

/// The same ratio measured on every person's raw profile.
pub fn explained_variance_individuals(
    partition: &SuperclassPartition,
    dataset: &Dataset,
    assignment: &Assignment,
) -> f64 {
    let points: Vec<Vec<f64>> = dataset.profiles().iter().map(|p| p.as_f64()).collect();
    let weights = vec![1.0; points.len()];
    let groups: Vec<Vec<usize>> = partition
        .groups
        .iter()
        .map(|g| {
            (0..points.len())
                .filter(|&i| g.contains(&assignment.units[i]))
                .collect::<Vec<_>>()
        })
        .filter(|g| !g.is_empty())
        .collect();
    let total = weighted_inertia(&points, &weights, None);
    if total == 0.0 {
        return 1.0;
    }
    let within = weighted_inertia(&points, &weights, Some(&groups));
    ((total - within) / total).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContiguityReport {
    pub contiguous: bool,
    /// Labels of superclasses that are not runs of consecutive units.
    pub violations: Vec<String>,
}

/// Checks that every superclass is a run of consecutive units along the
/// string. Units outside every group (empty classes) do not break a run.
pub fn contiguity_check(partition: &SuperclassPartition) -> ContiguityReport {
    let violations: Vec<String> = partition
        .groups
        .iter()
        .enumerate()
        .filter(|(gi, g)| {
            let (lo, hi) = (g[0], *g.last().unwrap());
            partition
                .groups
                .iter()
                .enumerate()
                .any(|(oj, other)| oj != *gi && other.iter().any(|&u| u > lo && u < hi))
        })
        .map(|(gi, _)| superclass_label(gi))
        .collect();
    ContiguityReport {
        contiguous: violations.is_empty(),
        violations,
    }
}
