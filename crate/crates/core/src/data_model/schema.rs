use std::collections::HashSet;
use std::fmt::Write as _;

use crate::error::{Error, Result};

use super::IndividualRecord;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Question {
    pub name: String,
    pub modalities: Vec<String>,
}

impl Question {
    pub fn modality_index(&self, value: &str) -> Option<usize> {
        self.modalities.iter().position(|m| m == value)
    }
}

/// Ordered list of categorical questions and their admissible answers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuestionSchema {
    questions: Vec<Question>,
}

const SURVEY: [(&str, &[&str]); 14] = [
    ("Contract", &["Open-ended", "Fixed-term"]),
    ("Sex", &["Man", "Woman"]),
    ("Age", &["<25", "[25,40[", "[40,50[", ">=50"]),
    ("DaySch", &["Identical", "As-posted", "Variable"]),
    ("DayWk", &["Identical", "Variable"]),
    ("Night", &["Usually", "Sometimes", "Never"]),
    ("Sat", &["Usually", "Sometimes", "Never"]),
    ("Sun", &["Usually", "Sometimes", "Never"]),
    ("Wed", &["Usually", "Sometimes", "Never"]),
    ("Leave", &["Yes", "Yes-under-conditions", "No"]),
    ("Def", &["Company", "A-la-carte", "Employee", "Other"]),
    ("Volunt", &["Involuntary", "Voluntary"]),
    ("Next", &["Yes", "No"]),
    ("Carry", &["No-point", "Yes", "No"]),
];

impl QuestionSchema {
    pub fn new(questions: Vec<Question>) -> Result<Self> {
        let mut names = HashSet::new();
        for q in &questions {
            if q.name.is_empty() || q.name == "person_id" {
                return Err(Error::Schema(format!("invalid question name `{}`", q.name)));
            }
            if !names.insert(q.name.as_str()) {
                return Err(Error::Schema(format!("duplicate question `{}`", q.name)));
            }
            if q.modalities.len() < 2 {
                return Err(Error::Schema(format!(
                    "question `{}` needs at least two modalities",
                    q.name
                )));
            }
            let mut seen = HashSet::new();
            for m in &q.modalities {
                if m.is_empty() || !seen.insert(m.as_str()) {
                    return Err(Error::Schema(format!(
                        "question `{}`: empty or duplicate modality `{m}`",
                        q.name
                    )));
                }
            }
        }
        Ok(Self { questions })
    }

    /// The 14 questions (39 modalities) of the part-time employment survey.
    pub fn default_survey() -> Self {
        let questions = SURVEY
            .iter()
            .map(|(name, mods)| Question {
                name: name.to_string(),
                modalities: mods.iter().map(|m| m.to_string()).collect(),
            })
            .collect();
        Self::new(questions).expect("built-in schema is valid")
    }

    pub fn questions(&self) -> &[Question] {
        &self.questions
    }

    pub fn question(&self, name: &str) -> Option<&Question> {
        self.questions.iter().find(|q| q.name == name)
    }

    pub fn modality_count(&self) -> usize {
        self.questions.iter().map(|q| q.modalities.len()).sum()
    }

    pub fn validate_record(&self, record: &IndividualRecord) -> Result<()> {
        for q in &self.questions {
            let value = record.answers.get(&q.name).ok_or_else(|| {
                Error::Schema(format!(
                    "person `{}` has no answer to `{}`",
                    record.person_id, q.name
                ))
            })?;
            if q.modality_index(value).is_none() {
                return Err(Error::UnknownModality {
                    question: q.name.clone(),
                    value: value.clone(),
                });
            }
        }
        if let Some(extra) = record.answers.keys().find(|k| self.question(k).is_none()) {
            return Err(Error::UnknownQuestion(extra.clone()));
        }
        Ok(())
    }

    /// Parses `name: modality1|modality2|...` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut questions = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (name, mods) = line.split_once(':').ok_or_else(|| {
                Error::Schema(format!("line {}: expected `name: m1|m2|...`", i + 1))
            })?;
            questions.push(Question {
                name: name.trim().to_string(),
                modalities: mods.split('|').map(|m| m.trim().to_string()).collect(),
            });
        }
        Self::new(questions)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for q in &self.questions {
            let _ = writeln!(out, "{}: {}", q.name, q.modalities.join("|"));
        }
        out
    }
}

impl Default for QuestionSchema {
    fn default() -> Self {
        Self::default_survey()
    }
}
