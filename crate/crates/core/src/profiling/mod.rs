//! Superclasses crossed with the questionnaire and with the diaries.
//!
//! Questions are screened by chi-square independence tests against the
//! superclass partition. For the retained ones, each cell gets the share of
//! the superclass giving that answer and a test value: the cell count
//! standardized by the mean and variance it would have if the superclass
//! were a random draw without replacement from the whole population.

mod stats;

use std::fmt;
use std::io::Write;
use std::str::FromStr;

pub use stats::{chi_square_survival, ln_gamma, regularized_gamma_q};

use crate::data_model::{
    day_from_name, slot_index, Dataset, DAYS, DAY_NAMES, QUARTERS_PER_DAY, SLOTS,
};
use crate::error::{Error, Result};
use crate::som::Assignment;
use crate::superclass::SuperclassPartition;

/// Superclass of every person in dataset order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Membership {
    pub labels: Vec<String>,
    pub group_of: Vec<usize>,
}

impl Membership {
    pub fn new(labels: Vec<String>, group_of: Vec<usize>) -> Result<Self> {
        if let Some(&g) = group_of.iter().find(|&&g| g >= labels.len()) {
            return Err(Error::Config(format!("superclass index {g} out of range")));
        }
        Ok(Self { labels, group_of })
    }

    pub fn from_assignment(
        partition: &SuperclassPartition,
        assignment: &Assignment,
    ) -> Result<Self> {
        let group_of = assignment
            .units
            .iter()
            .zip(&assignment.person_ids)
            .map(|(&u, id)| {
                partition.group_of_unit(u).ok_or_else(|| {
                    Error::Config(format!(
                        "person `{id}` sits in unit {u}, which has no superclass"
                    ))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(partition.labels(), group_of)
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.labels.len()];
        for &g in &self.group_of {
            sizes[g] += 1;
        }
        sizes
    }

    fn members(&self, group: usize) -> impl Iterator<Item = usize> + '_ {
        self.group_of
            .iter()
            .enumerate()
            .filter(move |(_, &g)| g == group)
            .map(|(i, _)| i)
    }

    fn check(&self, dataset: &Dataset) -> Result<()> {
        if self.group_of.len() != dataset.len() {
            return Err(Error::Config(format!(
                "membership covers {} persons, dataset has {}",
                self.group_of.len(),
                dataset.len()
            )));
        }
        Ok(())
    }
}

/// Modality × superclass counts for one question.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContingencyTable {
    pub question: String,
    pub modalities: Vec<String>,
    pub labels: Vec<String>,
    /// `counts[m][c]`
    pub counts: Vec<Vec<u64>>,
}

impl ContingencyTable {
    pub fn row_totals(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn col_totals(&self) -> Vec<u64> {
        (0..self.labels.len())
            .map(|c| self.counts.iter().map(|r| r[c]).sum())
            .collect()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Labels of superclasses with no members.
    pub fn empty_columns(&self) -> Vec<&str> {
        self.col_totals()
            .iter()
            .zip(&self.labels)
            .filter(|(&t, _)| t == 0)
            .map(|(_, l)| l.as_str())
            .collect()
    }
}

pub fn contingency(
    dataset: &Dataset,
    membership: &Membership,
    question: &str,
) -> Result<ContingencyTable> {
    membership.check(dataset)?;
    let q = dataset
        .schema()
        .question(question)
        .ok_or_else(|| Error::UnknownQuestion(question.to_string()))?;
    let mut counts = vec![vec![0u64; membership.labels.len()]; q.modalities.len()];
    for (record, &g) in dataset.records().iter().zip(&membership.group_of) {
        let answer = record.answer(question).unwrap_or_default();
        let m = q
            .modality_index(answer)
            .ok_or_else(|| Error::UnknownModality {
                question: question.to_string(),
                value: answer.to_string(),
            })?;
        counts[m][g] += 1;
    }
    let table = ContingencyTable {
        question: question.to_string(),
        modalities: q.modalities.clone(),
        labels: membership.labels.clone(),
        counts,
    };
    let empty = table.empty_columns();
    if !empty.is_empty() {
        log::warn!("{question}: superclasses {empty:?} have no members");
    }
    Ok(table)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    /// Modalities nobody chose, left out of the test.
    pub dropped_rows: Vec<String>,
    /// Empty superclasses, left out of the test.
    pub dropped_cols: Vec<String>,
}

/// Pearson chi-square test of independence between modality and superclass.
pub fn chi_square_test(table: &ContingencyTable) -> Result<ChiSquareResult> {
    let rows = table.row_totals();
    let cols = table.col_totals();
    let keep_r: Vec<usize> = (0..rows.len()).filter(|&r| rows[r] > 0).collect();
    let keep_c: Vec<usize> = (0..cols.len()).filter(|&c| cols[c] > 0).collect();
    let dropped_rows: Vec<String> = (0..rows.len())
        .filter(|&r| rows[r] == 0)
        .map(|r| table.modalities[r].clone())
        .collect();
    let dropped_cols: Vec<String> = (0..cols.len())
        .filter(|&c| cols[c] == 0)
        .map(|c| table.labels[c].clone())
        .collect();
    if !dropped_rows.is_empty() || !dropped_cols.is_empty() {
        log::warn!(
            "{}: dropping zero-margin rows {dropped_rows:?} and columns {dropped_cols:?}",
            table.question
        );
    }
    if keep_r.len() < 2 || keep_c.len() < 2 {
        return Err(Error::Degenerate(format!(
            "{}: chi-square needs at least two non-empty rows and columns",
            table.question
        )));
    }
    let n = table.total() as f64;
    let mut statistic = 0.0;
    for &r in &keep_r {
        for &c in &keep_c {
            let expected = rows[r] as f64 * cols[c] as f64 / n;
            let diff = table.counts[r][c] as f64 - expected;
            statistic += diff * diff / expected;
        }
    }
    let dof = (keep_r.len() - 1) * (keep_c.len() - 1);
    Ok(ChiSquareResult {
        statistic,
        dof,
        p_value: chi_square_survival(statistic, dof),
        dropped_rows,
        dropped_cols,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuestionTest {
    pub question: String,
    /// `None` when the table was degenerate; treated as p = 1.
    pub result: Option<ChiSquareResult>,
}

impl QuestionTest {
    pub fn p_value(&self) -> f64 {
        self.result.as_ref().map_or(1.0, |r| r.p_value)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuestionSelection {
    pub kept: Vec<QuestionTest>,
    pub dropped: Vec<QuestionTest>,
}

/// Keeps the questions whose independence test rejects at level `alpha`
/// (`p <= alpha`); a level of 0 rejects nothing.
pub fn select_discriminant_questions(
    dataset: &Dataset,
    membership: &Membership,
    alpha: f64,
) -> Result<QuestionSelection> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Config(format!("alpha {alpha} not in [0, 1]")));
    }
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for q in dataset.schema().questions() {
        let table = contingency(dataset, membership, &q.name)?;
        let result = match chi_square_test(&table) {
            Ok(r) => Some(r),
            Err(Error::Degenerate(msg)) => {
                log::warn!("{msg}");
                None
            }
            Err(e) => return Err(e),
        };
        let test = QuestionTest {
            question: q.name.clone(),
            result,
        };
        if alpha > 0.0 && test.p_value() <= alpha {
            kept.push(test);
        } else {
            dropped.push(test);
        }
    }
    Ok(QuestionSelection { kept, dropped })
}

/// Standardized deviation of cell count `x` for a superclass of `n_c`
/// persons and a modality chosen by `n_m` of `n`. `None` when the
/// hypergeometric variance vanishes.
pub fn test_value(x: u64, n_c: u64, n_m: u64, n: u64) -> Option<f64> {
    if n < 2 || n_m == 0 || n_m >= n || n_c == 0 || n_c >= n {
        return None;
    }
    let (x, n_c, n_m, n) = (x as f64, n_c as f64, n_m as f64, n as f64);
    let share = n_m / n;
    let mean = n_c * share;
    let variance = n_c * (n - n_c) / (n - 1.0) * share * (1.0 - share);
    Some((x - mean) / variance.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestValueCell {
    pub count: u64,
    /// Share of the superclass, in percent.
    pub percentage: f64,
    pub test_value: f64,
    /// Variance was zero; `test_value` is 0 and carries no information.
    pub degenerate: bool,
    pub highlighted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestValueTable {
    pub question: String,
    pub modalities: Vec<String>,
    pub labels: Vec<String>,
    /// `cells[m][c]`
    pub cells: Vec<Vec<TestValueCell>>,
    /// Share of the whole population per modality, in percent.
    pub total_percentages: Vec<f64>,
    pub threshold: f64,
}

/// Percentages and test values of every cell; cells with a test value
/// strictly above `threshold` are highlighted.
pub fn test_values(table: &ContingencyTable, threshold: f64) -> Result<TestValueTable> {
    let rows = table.row_totals();
    let cols = table.col_totals();
    let n = table.total();
    if let Some(empty) = table.empty_columns().first() {
        return Err(Error::Degenerate(format!(
            "{}: superclass {empty} is empty",
            table.question
        )));
    }
    let cells = table
        .counts
        .iter()
        .enumerate()
        .map(|(m, row)| {
            row.iter()
                .enumerate()
                .map(|(c, &x)| {
                    let v = test_value(x, cols[c], rows[m], n);
                    let tv = v.unwrap_or(0.0);
                    TestValueCell {
                        count: x,
                        percentage: 100.0 * x as f64 / cols[c] as f64,
                        test_value: tv,
                        degenerate: v.is_none(),
                        highlighted: v.is_some() && tv > threshold,
                    }
                })
                .collect()
        })
        .collect();
    Ok(TestValueTable {
        question: table.question.clone(),
        modalities: table.modalities.clone(),
        labels: table.labels.clone(),
        cells,
        total_percentages: rows.iter().map(|&r| 100.0 * r as f64 / n as f64).collect(),
        threshold,
    })
}

impl TestValueTable {
    /// Writes `modality,A,...,Total,test_A,...,highlight_A,...` with integer
    /// display percentages.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["modality".to_string()];
        header.extend(self.labels.iter().cloned());
        header.push("Total".into());
        header.extend(self.labels.iter().map(|l| format!("test_{l}")));
        header.extend(self.labels.iter().map(|l| format!("highlight_{l}")));
        w.write_record(&header)?;
        for (m, modality) in self.modalities.iter().enumerate() {
            let cells = &self.cells[m];
            let mut row = vec![modality.clone()];
            row.extend(cells.iter().map(|c| format!("{:.0}", c.percentage)));
            row.push(format!("{:.0}", self.total_percentages[m]));
            row.extend(cells.iter().map(|c| format!("{:.4}", c.test_value)));
            row.extend(cells.iter().map(|c| c.highlighted.to_string()));
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io("<table csv>", e))?;
        Ok(())
    }
}

/// A (day, quarter-hour) slot at which active members are counted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Probe {
    pub day: usize,
    pub quarter: usize,
}

impl Probe {
    pub fn new(day: usize, quarter: usize) -> Result<Self> {
        slot_index(day, quarter)?;
        Ok(Self { day, quarter })
    }

    /// The quarter-hour starting at `hour:00`.
    pub fn at_hour(day: usize, hour: usize) -> Result<Self> {
        Self::new(day, hour * 4)
    }

    pub fn slot(&self) -> usize {
        self.day * QUARTERS_PER_DAY + self.quarter
    }

    /// Saturday, Sunday and Wednesday at 10:00, 16:00 and 21:00.
    pub fn default_set() -> Vec<Probe> {
        let mut out = Vec::new();
        for day in [5, 6, 2] {
            for hour in [10, 16, 21] {
                out.push(Probe::at_hour(day, hour).expect("valid default probe"));
            }
        }
        out
    }

    pub fn parse_list(s: &str) -> Result<Vec<Probe>> {
        s.split(',')
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .map(str::parse)
            .collect()
    }
}

impl fmt::Display for Probe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (h, m) = (self.quarter / 4, (self.quarter % 4) * 15);
        if m == 0 {
            write!(f, "{}_{}h", DAY_NAMES[self.day], h)
        } else {
            write!(f, "{}_{:02}:{:02}", DAY_NAMES[self.day], h, m)
        }
    }
}

impl FromStr for Probe {
    type Err = Error;

    /// Accepts `Sun_10h` or `Sun_10:15`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || {
            Error::Config(format!(
                "bad probe `{s}`; expected e.g. Sun_10h or Sun_10:15"
            ))
        };
        let (day, time) = s.split_once('_').ok_or_else(bad)?;
        let day = day_from_name(day).ok_or_else(bad)?;
        let quarter = if let Some(h) = time.strip_suffix('h') {
            h.parse::<usize>().map_err(|_| bad())? * 4
        } else {
            let (h, m) = time.split_once(':').ok_or_else(bad)?;
            let h: usize = h.parse().map_err(|_| bad())?;
            let m: usize = m.parse().map_err(|_| bad())?;
            if !m.is_multiple_of(15) || m >= 60 {
                return Err(bad());
            }
            h * 4 + m / 15
        };
        Probe::new(day, quarter)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadcountRow {
    pub label: String,
    pub probe: Probe,
    pub count: usize,
    pub size: usize,
    pub percentage: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadcountTable {
    pub rows: Vec<HeadcountRow>,
}

impl HeadcountTable {
    pub fn get(&self, label: &str, probe: Probe) -> Option<&HeadcountRow> {
        self.rows
            .iter()
            .find(|r| r.label == label && r.probe == probe)
    }

    /// Writes `superclass,probe,count,pct`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["superclass", "probe", "count", "pct"])?;
        for r in &self.rows {
            w.write_record([
                r.label.clone(),
                r.probe.to_string(),
                r.count.to_string(),
                format!("{:.2}", r.percentage),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<headcount csv>", e))?;
        Ok(())
    }
}

pub fn headcounts(
    dataset: &Dataset,
    membership: &Membership,
    probes: &[Probe],
) -> Result<HeadcountTable> {
    membership.check(dataset)?;
    let sizes = membership.sizes();
    let mut rows = Vec::new();
    for (g, label) in membership.labels.iter().enumerate() {
        for &probe in probes {
            let count = membership
                .members(g)
                .filter(|&i| dataset.profiles()[i].slots()[probe.slot()] == 1)
                .count();
            let size = sizes[g];
            rows.push(HeadcountRow {
                label: label.clone(),
                probe,
                count,
                size,
                percentage: if size == 0 {
                    0.0
                } else {
                    100.0 * count as f64 / size as f64
                },
            });
        }
    }
    Ok(HeadcountTable { rows })
}

/// Slot-wise mean activity of one superclass.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivityCurve {
    pub label: String,
    pub members: usize,
    pub mean: Vec<f64>,
}

/// Mean weekly profile of every non-empty superclass.
pub fn average_activity_profile(
    dataset: &Dataset,
    membership: &Membership,
) -> Result<Vec<ActivityCurve>> {
    membership.check(dataset)?;
    let mut curves = Vec::new();
    for (g, label) in membership.labels.iter().enumerate() {
        let mut counts = vec![0usize; SLOTS];
        let mut members = 0;
        for i in membership.members(g) {
            members += 1;
            for (c, &s) in counts.iter_mut().zip(dataset.profiles()[i].slots()) {
                *c += s as usize;
            }
        }
        if members == 0 {
            log::warn!("superclass {label} is empty; no activity curve");
            continue;
        }
        curves.push(ActivityCurve {
            label: label.clone(),
            members,
            mean: counts.iter().map(|&c| c as f64 / members as f64).collect(),
        });
    }
    Ok(curves)
}

/// Writes `superclass,s0..s671`.
pub fn write_curves_csv<W: Write>(out: W, curves: &[ActivityCurve]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["superclass".to_string()];
    header.extend((0..SLOTS).map(|i| format!("s{i}")));
    w.write_record(&header)?;
    for c in curves {
        let mut row = vec![c.label.clone()];
        row.extend(c.mean.iter().map(|x| x.to_string()));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io("<curves csv>", e))?;
    Ok(())
}

/// A superclass label with its 672 slot means.
pub type NamedCurve = (String, Vec<f64>);

pub fn read_curves_csv<R: std::io::Read>(input: R) -> Result<Vec<NamedCurve>> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let values = row
            .iter()
            .skip(1)
            .map(|c| {
                c.parse::<f64>().map_err(|e| Error::Parse {
                    file: "curves csv".into(),
                    line,
                    message: format!("`{c}`: {e}"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        out.push((row.get(0).unwrap_or_default().to_string(), values));
    }
    Ok(out)
}

/// Night hours used for the `Night` question: 22:00–05:00.
const NIGHT_QUARTERS: [std::ops::Range<usize>; 2] = [0..20, 88..96];

#[derive(Debug, Clone, PartialEq)]
pub struct CoherenceRow {
    pub label: String,
    pub question: String,
    pub never_pct: f64,
    pub sometimes_pct: f64,
    pub usually_pct: f64,
    /// Members not answering "Never".
    pub declared_pct: f64,
    /// Members seen working in the diary (see `observed_at`).
    pub observed_pct: f64,
    pub observed_at: String,
    /// `observed_pct - declared_pct`.
    pub gap: f64,
    pub flagged: bool,
}

/// Highest share of the group's members active at one of `slots`, with the
/// earliest slot reaching it.
fn peak(
    dataset: &Dataset,
    membership: &Membership,
    group: usize,
    slots: impl Iterator<Item = usize>,
) -> (f64, usize) {
    let members: Vec<usize> = membership.members(group).collect();
    let mut best = (0usize, 0usize);
    let mut first = true;
    for s in slots {
        let n = members
            .iter()
            .filter(|&&i| dataset.profiles()[i].slots()[s] == 1)
            .count();
        if first || n > best.0 {
            best = (n, s);
            first = false;
        }
    }
    (100.0 * best.0 as f64 / members.len().max(1) as f64, best.1)
}

fn slot_name(slot: usize) -> String {
    Probe {
        day: slot / QUARTERS_PER_DAY,
        quarter: slot % QUARTERS_PER_DAY,
    }
    .to_string()
}

/// Juxtaposes questionnaire answers to the Night/Sat/Sun/Wed questions with
/// what the diaries show for the same superclass, flagging gaps wider than
/// `max_gap` percentage points.
///
/// For a day question the diary side is the highest headcount percentage
/// among the probes on that day, or over every quarter-hour of that day when
/// no probe falls on it. For `Night` it is the highest headcount percentage
/// over the quarter-hours between 22:00 and 05:00 of the whole week.
pub fn coherence_report(
    dataset: &Dataset,
    membership: &Membership,
    probes: &[Probe],
    max_gap: f64,
) -> Result<Vec<CoherenceRow>> {
    membership.check(dataset)?;
    let heads = headcounts(dataset, membership, probes)?;
    let sizes = membership.sizes();
    let mut out = Vec::new();
    for (question, day) in [
        ("Night", None),
        ("Sat", Some(5)),
        ("Sun", Some(6)),
        ("Wed", Some(2)),
    ] {
        let Some(q) = dataset.schema().question(question) else {
            continue;
        };
        let find = |name: &str| {
            q.modalities
                .iter()
                .position(|m| m.eq_ignore_ascii_case(name))
        };
        let Some(never) = find("never") else {
            log::warn!("{question} has no `Never` modality; skipped in coherence report");
            continue;
        };
        let table = contingency(dataset, membership, question)?;
        for (g, label) in membership.labels.iter().enumerate() {
            let size = sizes[g];
            if size == 0 {
                continue;
            }
            let pct = |m: Option<usize>| {
                m.map_or(0.0, |m| 100.0 * table.counts[m][g] as f64 / size as f64)
            };
            let never_pct = pct(Some(never));
            let (observed_pct, observed_at) = match day {
                None => {
                    let night = (0..DAYS).flat_map(|d| {
                        NIGHT_QUARTERS
                            .iter()
                            .flat_map(move |r| r.clone().map(move |q| d * QUARTERS_PER_DAY + q))
                    });
                    let (pct, slot) = peak(dataset, membership, g, night);
                    (pct, format!("night_{}", slot_name(slot)))
                }
                Some(d) => {
                    let best = probes
                        .iter()
                        .filter(|p| p.day == d)
                        .filter_map(|&p| heads.get(label, p))
                        .fold(None::<&HeadcountRow>, |best, r| match best {
                            Some(b) if b.percentage >= r.percentage => Some(b),
                            _ => Some(r),
                        });
                    match best {
                        Some(r) => (r.percentage, r.probe.to_string()),
                        None => {
                            let day_slots = d * QUARTERS_PER_DAY..(d + 1) * QUARTERS_PER_DAY;
                            let (pct, slot) = peak(dataset, membership, g, day_slots);
                            (pct, slot_name(slot))
                        }
                    }
                }
            };
            let declared_pct = 100.0 - never_pct;
            let gap = observed_pct - declared_pct;
            out.push(CoherenceRow {
                label: label.clone(),
                question: question.to_string(),
                never_pct,
                sometimes_pct: pct(find("sometimes")),
                usually_pct: pct(find("usually")),
                declared_pct,
                observed_pct,
                observed_at,
                gap,
                flagged: gap.abs() > max_gap,
            });
        }
    }
    Ok(out)
}

/// Writes the coherence table as CSV.
pub fn write_coherence_csv<W: Write>(out: W, rows: &[CoherenceRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "superclass",
        "question",
        "never",
        "sometimes",
        "usually",
        "declared",
        "observed",
        "observed_at",
        "gap",
        "flagged",
    ])?;
    for r in rows {
        w.write_record([
            r.label.clone(),
            r.question.clone(),
            format!("{:.0}", r.never_pct),
            format!("{:.0}", r.sometimes_pct),
            format!("{:.0}", r.usually_pct),
            format!("{:.0}", r.declared_pct),
            format!("{:.0}", r.observed_pct),
            r.observed_at.clone(),
            format!("{:.1}", r.gap),
            r.flagged.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<coherence csv>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests;
