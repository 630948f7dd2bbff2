//! CSV encodings of the diary file, the questionnaire file and the label sidecar.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

use super::{Dataset, IndividualRecord, QuestionSchema, WeeklyProfile, SLOTS};

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<File> {
    File::create(path).map_err(|e| Error::io(path, e))
}

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(input)
}

fn line_of(record: &csv::StringRecord) -> u64 {
    record.position().map_or(0, |p| p.line())
}

pub fn parse_weekly_reports(path: impl AsRef<Path>) -> Result<Vec<WeeklyProfile>> {
    let path = path.as_ref();
    read_weekly_reports(open(path)?, &path.display().to_string())
}

/// Reads `person_id,s0,...,s671` rows; `source` names the input in errors.
pub fn read_weekly_reports<R: Read>(input: R, source: &str) -> Result<Vec<WeeklyProfile>> {
    let parse_err = |line, message: String| Error::Parse {
        file: source.to_string(),
        line,
        message,
    };
    let mut rdr = reader(input);
    let mut rows = rdr.records();
    let header = match rows.next() {
        Some(h) => h?,
        None => return Err(parse_err(1, "missing header".into())),
    };
    let expected_header =
        std::iter::once("person_id".to_string()).chain((0..SLOTS).map(|i| format!("s{i}")));
    if header.len() != SLOTS + 1 || !header.iter().map(str::trim).eq(expected_header) {
        return Err(parse_err(
            line_of(&header),
            format!("header must be person_id,s0,...,s{}", SLOTS - 1),
        ));
    }

    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for row in rows {
        let row = row?;
        let line = line_of(&row);
        if row.len() != SLOTS + 1 {
            return Err(parse_err(
                line,
                format!("expected {} columns, found {}", SLOTS + 1, row.len()),
            ));
        }
        let id = row[0].trim().to_string();
        if id.is_empty() {
            return Err(parse_err(line, "empty person_id".into()));
        }
        let mut slots = Vec::with_capacity(SLOTS);
        for (col, cell) in row.iter().enumerate().skip(1) {
            slots.push(match cell.trim() {
                "0" => 0,
                "1" => 1,
                other => {
                    return Err(parse_err(
                        line,
                        format!("column s{}: expected 0 or 1, found `{other}`", col - 1),
                    ))
                }
            });
        }
        if !seen.insert(id.clone()) {
            return Err(Error::DuplicateId {
                file: source.to_string(),
                id,
                line,
            });
        }
        out.push(WeeklyProfile {
            person_id: id,
            slots,
        });
    }
    Ok(out)
}

pub fn parse_individual_records(
    path: impl AsRef<Path>,
    schema: &QuestionSchema,
) -> Result<Vec<IndividualRecord>> {
    let path = path.as_ref();
    read_individual_records(open(path)?, schema, &path.display().to_string())
}

/// Reads `person_id,<question>...` rows and validates every answer.
/// Columns may appear in any order; every schema question must be present.
pub fn read_individual_records<R: Read>(
    input: R,
    schema: &QuestionSchema,
    source: &str,
) -> Result<Vec<IndividualRecord>> {
    let parse_err = |line, message: String| Error::Parse {
        file: source.to_string(),
        line,
        message,
    };
    let mut rdr = reader(input);
    let mut rows = rdr.records();
    let header = match rows.next() {
        Some(h) => h?,
        None => return Err(parse_err(1, "missing header".into())),
    };
    let columns: Vec<String> = header.iter().map(|c| c.trim().to_string()).collect();
    if columns.first().map(String::as_str) != Some("person_id") {
        return Err(parse_err(
            line_of(&header),
            "first column must be person_id".into(),
        ));
    }
    let mut column_of = Vec::with_capacity(schema.questions().len());
    for q in schema.questions() {
        let idx = columns.iter().position(|c| *c == q.name).ok_or_else(|| {
            Error::Schema(format!(
                "{source}: missing column for question `{}`",
                q.name
            ))
        })?;
        column_of.push((q, idx));
    }
    if let Some(extra) = columns[1..].iter().find(|c| schema.question(c).is_none()) {
        return Err(Error::Schema(format!(
            "{source}: column `{extra}` is not a schema question"
        )));
    }

    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for row in rows {
        let row = row?;
        let line = line_of(&row);
        if row.len() != columns.len() {
            return Err(parse_err(
                line,
                format!("expected {} columns, found {}", columns.len(), row.len()),
            ));
        }
        let id = row[0].trim().to_string();
        if id.is_empty() {
            return Err(parse_err(line, "empty person_id".into()));
        }
        let mut answers = BTreeMap::new();
        for &(q, idx) in &column_of {
            let value = row[idx].trim();
            if q.modality_index(value).is_none() {
                return Err(Error::UnknownModality {
                    question: q.name.clone(),
                    value: value.to_string(),
                });
            }
            answers.insert(q.name.clone(), value.to_string());
        }
        if !seen.insert(id.clone()) {
            return Err(Error::DuplicateId {
                file: source.to_string(),
                id,
                line,
            });
        }
        out.push(IndividualRecord {
            person_id: id,
            answers,
        });
    }
    Ok(out)
}

pub fn write_weekly_reports<W: Write>(out: W, profiles: &[WeeklyProfile]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["person_id".to_string()];
    header.extend((0..SLOTS).map(|i| format!("s{i}")));
    w.write_record(&header)?;
    for p in profiles {
        let mut row = Vec::with_capacity(SLOTS + 1);
        row.push(p.person_id.as_str());
        row.extend(p.slots.iter().map(|&s| if s == 1 { "1" } else { "0" }));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io("<weekly csv>", e))?;
    Ok(())
}

pub fn write_individual_records<W: Write>(
    out: W,
    schema: &QuestionSchema,
    records: &[IndividualRecord],
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["person_id"];
    header.extend(schema.questions().iter().map(|q| q.name.as_str()));
    w.write_record(&header)?;
    for r in records {
        let mut row = vec![r.person_id.as_str()];
        for q in schema.questions() {
            row.push(r.answer(&q.name).unwrap_or(""));
        }
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io("<individual csv>", e))?;
    Ok(())
}

/// Writes the `person_id,archetype` sidecar.
pub fn write_labels<W: Write>(out: W, labels: &[(String, String)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["person_id", "archetype"])?;
    for (id, label) in labels {
        w.write_record([id, label])?;
    }
    w.flush().map_err(|e| Error::io("<labels csv>", e))?;
    Ok(())
}

/// File locations for a dataset on disk.
#[derive(Debug, Clone)]
pub struct DatasetPaths {
    pub weekly: PathBuf,
    pub individual: PathBuf,
    pub schema: PathBuf,
}

impl DatasetPaths {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            weekly: dir.join("weekly.csv"),
            individual: dir.join("individual.csv"),
            schema: dir.join("schema.txt"),
        }
    }

    pub fn load(&self) -> Result<(Dataset, super::JoinReport)> {
        let text = std::fs::read_to_string(&self.schema).map_err(|e| Error::io(&self.schema, e))?;
        let schema = QuestionSchema::parse(&text)?;
        let profiles = parse_weekly_reports(&self.weekly)?;
        let records = parse_individual_records(&self.individual, &schema)?;
        super::join_datasets(profiles, records, schema)
    }
}

pub fn write_dataset(dataset: &Dataset, paths: &DatasetPaths) -> Result<()> {
    write_weekly_reports(create(&paths.weekly)?, dataset.profiles())?;
    write_individual_records(
        create(&paths.individual)?,
        dataset.schema(),
        dataset.records(),
    )?;
    std::fs::write(&paths.schema, dataset.schema().to_text())
        .map_err(|e| Error::io(&paths.schema, e))?;
    Ok(())
}
