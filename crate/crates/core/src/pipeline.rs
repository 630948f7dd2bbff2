//! End-to-end run: data → string → superclasses → MDS check → profiling →
//! figures, with every intermediate written to the output directory.

use std::collections::HashMap;
use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};

use crate::data_model::{
    synth_generate, write_dataset, write_labels, Dataset, DatasetPaths, GeneratorConfig,
};
use crate::error::{Error, Result};
use crate::evaluation::adjusted_rand_index;
use crate::mds::{classical_mds, crossing_count, ordering_monotone, pairwise_distances};
use crate::plot;
use crate::profiling::{
    average_activity_profile, coherence_report, contingency, headcounts,
    select_discriminant_questions, test_values, write_coherence_csv, write_curves_csv, Membership,
    NamedCurve, Probe,
};
use crate::som::{assign_all, train, Assignment, SomConfig};
use crate::superclass::{
    cluster_codebook, contiguity_check, explained_variance_individuals, Linkage,
    SuperclassPartition, VarianceBasis,
};

/// Where the persons come from.
#[derive(Debug, Clone)]
pub enum Input {
    Files(DatasetPaths),
    Synth(GeneratorConfig),
}

/// How the dendrogram is cut.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cut {
    K(usize),
    /// Smallest k whose explained variance reaches the threshold.
    Variance(f64),
}

/// Settings of the questionnaire side of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileSettings {
    pub alpha: f64,
    pub tv_threshold: f64,
    pub probes: Vec<Probe>,
    /// Largest tolerated gap, in percentage points, in the coherence report.
    pub coherence_gap: f64,
}

impl Default for ProfileSettings {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            tv_threshold: 1.0,
            probes: Probe::default_set(),
            coherence_gap: 20.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub input: Input,
    /// `som.seed` is overwritten by `seed`.
    pub som: SomConfig,
    pub cut: Cut,
    pub linkage: Linkage,
    pub variance_basis: VarianceBasis,
    pub profile: ProfileSettings,
    pub out_dir: PathBuf,
    pub seed: u64,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let som = SomConfig {
            seed: self.seed,
            ..self.som.clone()
        };
        som.validate()?;
        match self.cut {
            Cut::K(k) if k == 0 || k > som.units => {
                return Err(Error::Config(format!(
                    "{k} superclasses requested from {} units",
                    som.units
                )))
            }
            Cut::Variance(t) if !(0.0..=1.0).contains(&t) => {
                return Err(Error::Config(format!(
                    "variance threshold {t} not in [0, 1]"
                )))
            }
            _ => {}
        }
        let p = &self.profile;
        if !(0.0..=1.0).contains(&p.alpha) {
            return Err(Error::Config(format!("alpha {} not in [0, 1]", p.alpha)));
        }
        if !p.tv_threshold.is_finite() || p.coherence_gap.is_nan() || p.coherence_gap < 0.0 {
            return Err(Error::Config(
                "thresholds must be finite and gaps non-negative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Config,
    Input,
    Train,
    Superclass,
    Mds,
    Profile,
    Plot,
    Report,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Stage::Config => "config",
            Stage::Input => "input",
            Stage::Train => "train",
            Stage::Superclass => "superclass",
            Stage::Mds => "mds",
            Stage::Profile => "profile",
            Stage::Plot => "plot",
            Stage::Report => "report",
        };
        f.write_str(name)
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{stage} stage failed")]
pub struct PipelineError {
    pub stage: Stage,
    #[source]
    pub source: Error,
}

trait AtStage<T> {
    fn at(self, stage: Stage) -> std::result::Result<T, PipelineError>;
}

impl<T> AtStage<T> for Result<T> {
    fn at(self, stage: Stage) -> std::result::Result<T, PipelineError> {
        self.map_err(|source| PipelineError { stage, source })
    }
}

/// Outcome of the profiling stage.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileSummary {
    pub kept: Vec<String>,
    pub dropped: Vec<String>,
    /// `label:question` of every flagged coherence row.
    pub coherence_flags: Vec<String>,
}

/// Everything `report.txt` records.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub persons: usize,
    pub dropped_profiles: usize,
    pub dropped_records: usize,
    pub units: usize,
    pub unit_sizes: Vec<usize>,
    pub quantization_error: f64,
    pub labels: Vec<String>,
    pub superclass_units: Vec<Vec<usize>>,
    pub superclass_sizes: Vec<usize>,
    pub explained_variance: f64,
    pub explained_variance_individuals: f64,
    pub contiguous: bool,
    pub eigenvalues: Vec<f64>,
    pub crossings: usize,
    pub spearman: f64,
    pub monotone: bool,
    pub profile: ProfileSummary,
    /// Agreement with the planted archetypes of a synthetic run.
    pub ari: Option<f64>,
}

fn join<T: ToString>(xs: &[T], sep: &str) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(sep)
}

impl RunReport {
    /// `key = value` lines.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("persons", self.persons.to_string());
        kv("dropped_profiles", self.dropped_profiles.to_string());
        kv("dropped_records", self.dropped_records.to_string());
        kv("units", self.units.to_string());
        kv("unit_sizes", join(&self.unit_sizes, ","));
        kv(
            "quantization_error",
            format!("{:.6}", self.quantization_error),
        );
        kv("superclasses", self.labels.len().to_string());
        kv("superclass_labels", join(&self.labels, ","));
        kv("superclass_sizes", join(&self.superclass_sizes, ","));
        for (l, units) in self.labels.iter().zip(&self.superclass_units) {
            kv(&format!("units_{l}"), join(units, ","));
        }
        kv(
            "explained_variance",
            format!("{:.6}", self.explained_variance),
        );
        kv(
            "explained_variance_individuals",
            format!("{:.6}", self.explained_variance_individuals),
        );
        kv("contiguous", self.contiguous.to_string());
        kv(
            "mds_eigenvalues",
            join(
                &self
                    .eigenvalues
                    .iter()
                    .map(|e| format!("{e:.6}"))
                    .collect::<Vec<_>>(),
                ",",
            ),
        );
        kv("crossings", self.crossings.to_string());
        kv("spearman", format!("{:.6}", self.spearman));
        kv("monotone", self.monotone.to_string());
        kv("kept_questions", join(&self.profile.kept, ","));
        kv("dropped_questions", join(&self.profile.dropped, ","));
        kv("coherence_flags", join(&self.profile.coherence_flags, ","));
        if let Some(ari) = self.ari {
            kv("ari", format!("{ari:.6}"));
        }
        s
    }
}

/// Parses `report.txt` back into its key/value pairs.
pub fn parse_report(text: &str) -> HashMap<String, String> {
    text.lines()
        .filter_map(|l| l.split_once(" = "))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

fn create(path: &Path) -> Result<fs::File> {
    fs::File::create(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes `person_id,unit,superclass`.
pub fn write_assignment_csv(
    path: &Path,
    assignment: &Assignment,
    partition: &SuperclassPartition,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["person_id", "unit", "superclass"])?;
    for (id, &u) in assignment.person_ids.iter().zip(&assignment.units) {
        w.write_record([
            id.clone(),
            u.to_string(),
            partition.label_of_unit(u).unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Rebuilds an assignment for `dataset` from `person_id,unit,...` rows.
pub fn read_assignment_csv(path: &Path, dataset: &Dataset, units: usize) -> Result<Assignment> {
    if !path.is_file() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    let mut rdr = csv::Reader::from_path(path)?;
    let mut unit_of = HashMap::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let bad = |m: String| Error::Parse {
            file: path.display().to_string(),
            line,
            message: m,
        };
        let id = row.get(0).unwrap_or_default().to_string();
        let unit: usize = row
            .get(1)
            .unwrap_or_default()
            .parse()
            .map_err(|e| bad(format!("unit: {e}")))?;
        if unit >= units {
            return Err(bad(format!(
                "unit {unit} but the partition has {units} units"
            )));
        }
        unit_of.insert(id, unit);
    }
    let mut class_sizes = vec![0; units];
    let mut assigned = Vec::with_capacity(dataset.len());
    for id in dataset.person_ids() {
        let u = *unit_of.get(id).ok_or_else(|| {
            Error::Config(format!("person `{id}` missing from {}", path.display()))
        })?;
        class_sizes[u] += 1;
        assigned.push(u);
    }
    Ok(Assignment {
        units: assigned,
        person_ids: dataset.person_ids().map(str::to_string).collect(),
        class_sizes,
    })
}

fn write_chi2(path: &Path, selection: &crate::profiling::QuestionSelection) -> Result<()> {
    let mut rows: Vec<(&crate::profiling::QuestionTest, bool)> = selection
        .kept
        .iter()
        .map(|t| (t, true))
        .chain(selection.dropped.iter().map(|t| (t, false)))
        .collect();
    rows.sort_by(|a, b| a.0.question.cmp(&b.0.question));
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["question", "statistic", "dof", "p_value", "kept"])?;
    for (t, kept) in rows {
        let (stat, dof) = match &t.result {
            Some(r) => (format!("{:.6}", r.statistic), r.dof.to_string()),
            None => (String::new(), String::new()),
        };
        w.write_record([
            t.question.clone(),
            stat,
            dof,
            format!("{:.6e}", t.p_value()),
            kept.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Questionnaire side: chi-square filtering, tables of the kept questions,
/// headcounts, activity curves and the coherence report.
pub fn run_profiling(
    dataset: &Dataset,
    membership: &Membership,
    settings: &ProfileSettings,
    out: &Path,
) -> Result<(ProfileSummary, Vec<NamedCurve>)> {
    let selection = select_discriminant_questions(dataset, membership, settings.alpha)?;
    write_chi2(&out.join("chi2.csv"), &selection)?;

    let tables = out.join("tables");
    fs::create_dir_all(&tables).map_err(|e| Error::io(&tables, e))?;
    for q in &selection.kept {
        let table = contingency(dataset, membership, &q.question)?;
        let tv = test_values(&table, settings.tv_threshold)?;
        tv.write_csv(create(&tables.join(format!("{}.csv", q.question)))?)?;
    }

    headcounts(dataset, membership, &settings.probes)?
        .write_csv(create(&out.join("headcounts.csv"))?)?;
    let curves = average_activity_profile(dataset, membership)?;
    write_curves_csv(create(&out.join("curves.csv"))?, &curves)?;
    let coherence = coherence_report(
        dataset,
        membership,
        &settings.probes,
        settings.coherence_gap,
    )?;
    write_coherence_csv(create(&out.join("coherence.csv"))?, &coherence)?;

    let summary = ProfileSummary {
        kept: selection.kept.iter().map(|t| t.question.clone()).collect(),
        dropped: selection
            .dropped
            .iter()
            .map(|t| t.question.clone())
            .collect(),
        coherence_flags: coherence
            .iter()
            .filter(|r| r.flagged)
            .map(|r| format!("{}:{}", r.label, r.question))
            .collect(),
    };
    let curves = curves.into_iter().map(|c| (c.label, c.mean)).collect();
    Ok((summary, curves))
}

fn cut(
    config: &RunConfig,
    dendrogram: &crate::superclass::Dendrogram,
    dataset: &Dataset,
    assignment: &Assignment,
) -> Result<SuperclassPartition> {
    match (config.cut, config.variance_basis) {
        (Cut::K(k), _) => dendrogram.cut_to_k(k),
        (Cut::Variance(t), VarianceBasis::CodeVectors) => dendrogram.cut_by_variance(t),
        (Cut::Variance(t), VarianceBasis::Individuals) => {
            for k in 1..=dendrogram.leaves.len() {
                let p = dendrogram.cut_to_k(k)?;
                if explained_variance_individuals(&p, dataset, assignment) >= t {
                    return Ok(p);
                }
            }
            dendrogram.cut_to_k(dendrogram.leaves.len())
        }
    }
}

/// Runs every stage, writing artifacts as they become available so a failure
/// leaves the earlier stages' outputs in place.
pub fn run_pipeline(config: &RunConfig) -> std::result::Result<RunReport, PipelineError> {
    config.validate().at(Stage::Config)?;
    let out = config.out_dir.as_path();
    fs::create_dir_all(out)
        .map_err(|e| Error::io(out, e))
        .at(Stage::Config)?;

    let (dataset, join, labels) = match &config.input {
        Input::Files(paths) => {
            let (ds, join) = paths.load().at(Stage::Input)?;
            (ds, join, None)
        }
        Input::Synth(spec) => {
            let synth = synth_generate(spec, config.seed).at(Stage::Input)?;
            write_dataset(&synth.dataset, &DatasetPaths::in_dir(out)).at(Stage::Input)?;
            create(&out.join("labels.csv"))
                .and_then(|f| write_labels(f, &synth.labels))
                .at(Stage::Input)?;
            write_text(&out.join("generator.toml"), &spec.to_toml()).at(Stage::Input)?;
            let labels = synth.label_indices();
            let n = synth.dataset.len();
            let join = crate::data_model::JoinReport {
                kept: n,
                profiles_dropped: 0,
                records_dropped: 0,
            };
            (synth.dataset, join, Some(labels))
        }
    };

    let som_config = SomConfig {
        seed: config.seed,
        ..config.som.clone()
    };
    let model = train(&dataset, &som_config).at(Stage::Train)?;
    let assignment = assign_all(&model, &dataset);
    model
        .write_csv(create(&out.join("model.csv")).at(Stage::Train)?)
        .at(Stage::Train)?;
    write_text(&out.join("model_config.txt"), &som_config.to_text()).at(Stage::Train)?;

    let dendrogram = cluster_codebook(&model.code_vectors, &assignment.class_sizes, config.linkage)
        .at(Stage::Superclass)?;
    dendrogram
        .write_csv(create(&out.join("dendrogram.csv")).at(Stage::Superclass)?)
        .at(Stage::Superclass)?;
    let partition = cut(config, &dendrogram, &dataset, &assignment).at(Stage::Superclass)?;
    partition
        .write_csv(create(&out.join("partition.csv")).at(Stage::Superclass)?)
        .at(Stage::Superclass)?;
    write_assignment_csv(&out.join("assignment.csv"), &assignment, &partition)
        .at(Stage::Superclass)?;
    let contiguity = contiguity_check(&partition);
    if !contiguity.contiguous {
        log::warn!(
            "superclasses {:?} are not runs of consecutive units",
            contiguity.violations
        );
    }
    let ev_individuals = explained_variance_individuals(&partition, &dataset, &assignment);

    let embedding = classical_mds(&pairwise_distances(&model.code_vectors), 2).at(Stage::Mds)?;
    embedding
        .write_csv(create(&out.join("mds.csv")).at(Stage::Mds)?)
        .at(Stage::Mds)?;
    let order: Vec<usize> = (0..model.units()).collect();
    let crossings = crossing_count(&embedding, &order);
    let monotonicity = ordering_monotone(&embedding, &order);

    let membership = Membership::from_assignment(&partition, &assignment).at(Stage::Profile)?;
    let (profile, curves) =
        run_profiling(&dataset, &membership, &config.profile, out).at(Stage::Profile)?;

    plot::write_figures(out, &model.code_vectors, &partition, &embedding, &curves)
        .at(Stage::Plot)?;

    let ari = labels.map(|planted| adjusted_rand_index(&membership.group_of, &planted));
    let report = RunReport {
        persons: dataset.len(),
        dropped_profiles: join.profiles_dropped,
        dropped_records: join.records_dropped,
        units: model.units(),
        unit_sizes: assignment.class_sizes.clone(),
        quantization_error: model.final_quantization_error,
        labels: partition.labels(),
        superclass_units: partition.groups.clone(),
        superclass_sizes: membership.sizes(),
        explained_variance: partition.explained_variance,
        explained_variance_individuals: ev_individuals,
        contiguous: contiguity.contiguous,
        eigenvalues: embedding.eigenvalues.clone(),
        crossings,
        spearman: monotonicity.spearman,
        monotone: monotonicity.monotone,
        profile,
        ari,
    };
    write_text(&out.join("report.txt"), &report.to_text()).at(Stage::Report)?;
    Ok(report)
}
