//! Weekly diaries, questionnaire answers and the joined dataset.
//!
//! A weekly report covers Monday 00:00 through Sunday 24:00 in quarter-hour
//! slots, day-major: slot `day * 96 + quarter`, Monday is day 0.

mod io;
mod schema;
mod synth;

use std::collections::{BTreeMap, HashSet};

use crate::error::{Error, Result};

pub use io::{
    parse_individual_records, parse_weekly_reports, read_individual_records, read_weekly_reports,
    write_dataset, write_individual_records, write_labels, write_weekly_reports, DatasetPaths,
};
pub use schema::{Question, QuestionSchema};
pub use synth::{synth_generate, Archetype, GeneratorConfig, Shift, SynthOutput};

pub const DAYS: usize = 7;
pub const QUARTERS_PER_DAY: usize = 96;
/// 4 × 24 × 7.
pub const SLOTS: usize = DAYS * QUARTERS_PER_DAY;

pub const DAY_NAMES: [&str; DAYS] = ["Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun"];

/// Index of `(day, quarter)` in a weekly profile.
pub fn slot_index(day: usize, quarter: usize) -> Result<usize> {
    if day >= DAYS {
        return Err(Error::OutOfRange {
            what: "day",
            value: day,
            max: DAYS - 1,
        });
    }
    if quarter >= QUARTERS_PER_DAY {
        return Err(Error::OutOfRange {
            what: "quarter",
            value: quarter,
            max: QUARTERS_PER_DAY - 1,
        });
    }
    Ok(day * QUARTERS_PER_DAY + quarter)
}

/// Parses a three-letter English day name (`Mon` … `Sun`, case-insensitive).
pub fn day_from_name(name: &str) -> Option<usize> {
    DAY_NAMES
        .iter()
        .position(|d| d.eq_ignore_ascii_case(name.trim()))
}

/// One person's week of worked (1) / not worked (0) quarter-hours.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeeklyProfile {
    person_id: String,
    slots: Vec<u8>,
}

impl WeeklyProfile {
    pub fn new(person_id: impl Into<String>, slots: Vec<u8>) -> Result<Self> {
        if slots.len() != SLOTS {
            return Err(Error::Config(format!(
                "weekly profile needs {SLOTS} slots, got {}",
                slots.len()
            )));
        }
        if let Some(i) = slots.iter().position(|&s| s > 1) {
            return Err(Error::Config(format!(
                "slot {i} has non-binary value {}",
                slots[i]
            )));
        }
        Ok(Self {
            person_id: person_id.into(),
            slots,
        })
    }

    pub fn person_id(&self) -> &str {
        &self.person_id
    }

    pub fn slots(&self) -> &[u8] {
        &self.slots
    }

    pub fn worked_quarters(&self) -> usize {
        self.slots.iter().filter(|&&s| s == 1).count()
    }

    /// Hours worked during the week: one-slots divided by four.
    pub fn total_worked_hours(&self) -> f64 {
        self.worked_quarters() as f64 / 4.0
    }

    pub fn activity_at(&self, day: usize, quarter: usize) -> Result<u8> {
        Ok(self.slots[slot_index(day, quarter)?])
    }

    /// The slots as points of the unit hypercube.
    pub fn as_f64(&self) -> Vec<f64> {
        self.slots.iter().map(|&s| f64::from(s)).collect()
    }
}

/// Free-function form of [`WeeklyProfile::total_worked_hours`].
pub fn total_worked_hours(profile: &WeeklyProfile) -> f64 {
    profile.total_worked_hours()
}

/// Free-function form of [`WeeklyProfile::activity_at`].
pub fn activity_at(profile: &WeeklyProfile, day: usize, quarter: usize) -> Result<u8> {
    profile.activity_at(day, quarter)
}

/// One person's questionnaire answers, keyed by question name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndividualRecord {
    pub person_id: String,
    pub answers: BTreeMap<String, String>,
}

impl IndividualRecord {
    pub fn answer(&self, question: &str) -> Option<&str> {
        self.answers.get(question).map(String::as_str)
    }
}

/// Counts produced by [`join_datasets`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct JoinReport {
    pub kept: usize,
    pub profiles_dropped: usize,
    pub records_dropped: usize,
}

/// Inner join of diaries and questionnaires, in diary order.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    profiles: Vec<WeeklyProfile>,
    records: Vec<IndividualRecord>,
    schema: QuestionSchema,
}

impl Dataset {
    /// Builds a dataset whose profiles and records are already aligned.
    pub fn new(
        profiles: Vec<WeeklyProfile>,
        records: Vec<IndividualRecord>,
        schema: QuestionSchema,
    ) -> Result<Self> {
        if profiles.len() != records.len() {
            return Err(Error::Config(format!(
                "{} profiles but {} records",
                profiles.len(),
                records.len()
            )));
        }
        let mut seen = HashSet::new();
        for (p, r) in profiles.iter().zip(&records) {
            if p.person_id != r.person_id {
                return Err(Error::Config(format!(
                    "profile `{}` aligned with record `{}`",
                    p.person_id, r.person_id
                )));
            }
            if !seen.insert(p.person_id.as_str()) {
                return Err(Error::Config(format!(
                    "person_id `{}` appears twice",
                    p.person_id
                )));
            }
            schema.validate_record(r)?;
        }
        Ok(Self {
            profiles,
            records,
            schema,
        })
    }

    pub fn len(&self) -> usize {
        self.profiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profiles.is_empty()
    }

    pub fn profiles(&self) -> &[WeeklyProfile] {
        &self.profiles
    }

    pub fn records(&self) -> &[IndividualRecord] {
        &self.records
    }

    pub fn schema(&self) -> &QuestionSchema {
        &self.schema
    }

    pub fn person_ids(&self) -> impl Iterator<Item = &str> {
        self.profiles.iter().map(|p| p.person_id.as_str())
    }
}

/// Keeps the persons present in both files, ordered as in `profiles`.
pub fn join_datasets(
    profiles: Vec<WeeklyProfile>,
    records: Vec<IndividualRecord>,
    schema: QuestionSchema,
) -> Result<(Dataset, JoinReport)> {
    let n_profiles = profiles.len();
    let n_records = records.len();
    let mut by_id: BTreeMap<String, IndividualRecord> = records
        .into_iter()
        .map(|r| (r.person_id.clone(), r))
        .collect();

    let mut kept_profiles = Vec::new();
    let mut kept_records = Vec::new();
    for p in profiles {
        if let Some(r) = by_id.remove(&p.person_id) {
            kept_profiles.push(p);
            kept_records.push(r);
        }
    }
    if kept_profiles.is_empty() {
        return Err(Error::EmptyIntersection);
    }
    let kept = kept_profiles.len();
    let report = JoinReport {
        kept,
        profiles_dropped: n_profiles - kept,
        records_dropped: n_records - kept,
    };
    if report.profiles_dropped > 0 || report.records_dropped > 0 {
        log::warn!(
            "join dropped {} profiles and {} questionnaire records",
            report.profiles_dropped,
            report.records_dropped
        );
    }
    Ok((Dataset::new(kept_profiles, kept_records, schema)?, report))
}
