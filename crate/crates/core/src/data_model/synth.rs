//! Seeded generator of diary/questionnaire datasets with planted archetypes.
//!
//! Each archetype is a prototype week plus per-question answer
//! probabilities. A person drawn from an archetype copies the prototype with
//! every slot flipped independently with probability `flip`, and draws each
//! answer from the archetype's table. Questions without a table are answered
//! uniformly.
//!
//! With `drift > 0` a person first moves up to `drift` worked slots toward an
//! archetype adjacent in the configuration order: slots only the person's
//! archetype works are dropped and slots only the neighbour works are taken
//! up, earliest first. This gives every class a spread along the sequence of
//! archetypes rather than pure isotropic noise.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{
    day_from_name, Dataset, IndividualRecord, QuestionSchema, WeeklyProfile, DAY_NAMES,
    QUARTERS_PER_DAY, SLOTS,
};

/// A block of work on one or more days, e.g. `Mon-Fri 08:30-12:00`.
///
/// Times are on quarter-hour boundaries; `24:00` closes the day. Overnight
/// work is written as two shifts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Shift {
    pub days: Vec<usize>,
    pub start_quarter: usize,
    pub end_quarter: usize,
}

fn parse_time(s: &str) -> Option<usize> {
    let (h, m) = s.trim().split_once(':')?;
    let h: usize = h.parse().ok()?;
    let m: usize = m.parse().ok()?;
    if !m.is_multiple_of(15) || m >= 60 || h > 24 || (h == 24 && m != 0) {
        return None;
    }
    Some(h * 4 + m / 15)
}

impl FromStr for Shift {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |why: &str| Error::Config(format!("shift `{s}`: {why}"));
        let (days_part, times) = s
            .trim()
            .split_once(char::is_whitespace)
            .ok_or_else(|| bad("expected `<days> HH:MM-HH:MM`"))?;
        let mut days = Vec::new();
        for item in days_part.split(',') {
            match item.split_once('-') {
                Some((a, b)) => {
                    let a = day_from_name(a).ok_or_else(|| bad("unknown day"))?;
                    let b = day_from_name(b).ok_or_else(|| bad("unknown day"))?;
                    if a > b {
                        return Err(bad("day range runs backwards"));
                    }
                    days.extend(a..=b);
                }
                None => days.push(day_from_name(item).ok_or_else(|| bad("unknown day"))?),
            }
        }
        days.sort_unstable();
        days.dedup();
        let (start, end) = times
            .trim()
            .split_once('-')
            .ok_or_else(|| bad("expected HH:MM-HH:MM"))?;
        let start_quarter = parse_time(start).ok_or_else(|| bad("bad start time"))?;
        let end_quarter = parse_time(end).ok_or_else(|| bad("bad end time"))?;
        if start_quarter >= end_quarter {
            return Err(bad("end must be after start"));
        }
        Ok(Shift {
            days,
            start_quarter,
            end_quarter,
        })
    }
}

impl fmt::Display for Shift {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let days: Vec<&str> = self.days.iter().map(|&d| DAY_NAMES[d]).collect();
        let hm = |q: usize| format!("{:02}:{:02}", q / 4, (q % 4) * 15);
        write!(
            f,
            "{} {}-{}",
            days.join(","),
            hm(self.start_quarter),
            hm(self.end_quarter)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Archetype {
    pub name: String,
    pub count: i64,
    pub flip: f64,
    /// Largest number of slots a member moves toward a neighbouring archetype.
    #[serde(default)]
    pub drift: i64,
    /// Worked blocks making up the prototype week.
    #[serde(default)]
    pub shifts: Vec<String>,
    /// Alternative to `shifts`: 672 characters of `0`/`1`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prototype: Option<String>,
    /// Unnormalized modality weights per question, in schema modality order.
    #[serde(default)]
    pub answers: BTreeMap<String, Vec<f64>>,
}

impl Archetype {
    pub fn prototype_slots(&self) -> Result<Vec<u8>> {
        let mut slots = vec![0u8; SLOTS];
        if let Some(bits) = &self.prototype {
            let bits: Vec<char> = bits.chars().filter(|c| !c.is_whitespace()).collect();
            if bits.len() != SLOTS {
                return Err(Error::Config(format!(
                    "archetype `{}`: prototype has {} slots, expected {SLOTS}",
                    self.name,
                    bits.len()
                )));
            }
            for (slot, c) in slots.iter_mut().zip(bits) {
                *slot = match c {
                    '0' => 0,
                    '1' => 1,
                    _ => {
                        return Err(Error::Config(format!(
                            "archetype `{}`: prototype contains `{c}`",
                            self.name
                        )))
                    }
                };
            }
        }
        for s in &self.shifts {
            let shift: Shift = s.parse()?;
            for &day in &shift.days {
                let base = day * QUARTERS_PER_DAY;
                slots[base + shift.start_quarter..base + shift.end_quarter].fill(1);
            }
        }
        Ok(slots)
    }
}

/// Generator description, usually read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    /// Schema in `name: m1|m2` form; the built-in survey when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema: Option<String>,
    #[serde(rename = "archetype")]
    pub archetypes: Vec<Archetype>,
}

struct ResolvedArchetype {
    name: String,
    count: usize,
    flip: f64,
    drift: usize,
    prototype: Vec<u8>,
    /// For each adjacent archetype, paired (dropped, taken-up) slots.
    moves: Vec<Vec<(usize, usize)>>,
    answer_tables: Vec<WeightedIndex<f64>>,
}

impl GeneratorConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("generator spec: {e}")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("generator config serializes")
    }

    pub fn schema(&self) -> Result<QuestionSchema> {
        match &self.schema {
            Some(text) => QuestionSchema::parse(text),
            None => Ok(QuestionSchema::default_survey()),
        }
    }

    pub fn total_count(&self) -> i64 {
        self.archetypes.iter().map(|a| a.count).sum()
    }

    fn resolve(&self, schema: &QuestionSchema) -> Result<Vec<ResolvedArchetype>> {
        if self.archetypes.is_empty() {
            return Err(Error::Config(
                "generator needs at least one archetype".into(),
            ));
        }
        let mut out = Vec::with_capacity(self.archetypes.len());
        for a in &self.archetypes {
            if a.count <= 0 {
                return Err(Error::Config(format!(
                    "archetype `{}`: count must be positive, got {}",
                    a.name, a.count
                )));
            }
            if !(0.0..0.5).contains(&a.flip) {
                return Err(Error::Config(format!(
                    "archetype `{}`: flip probability {} not in [0, 0.5)",
                    a.name, a.flip
                )));
            }
            if a.drift < 0 {
                return Err(Error::Config(format!(
                    "archetype `{}`: drift must be non-negative, got {}",
                    a.name, a.drift
                )));
            }
            if let Some(q) = a.answers.keys().find(|q| schema.question(q).is_none()) {
                return Err(Error::UnknownQuestion(q.clone()));
            }
            let mut answer_tables = Vec::with_capacity(schema.questions().len());
            for q in schema.questions() {
                let weights = match a.answers.get(&q.name) {
                    Some(w) if w.len() != q.modalities.len() => {
                        return Err(Error::Config(format!(
                            "archetype `{}`: `{}` has {} weights for {} modalities",
                            a.name,
                            q.name,
                            w.len(),
                            q.modalities.len()
                        )))
                    }
                    Some(w) => w.clone(),
                    None => vec![1.0; q.modalities.len()],
                };
                let table = WeightedIndex::new(&weights).map_err(|e| {
                    Error::Config(format!("archetype `{}`: `{}` weights: {e}", a.name, q.name))
                })?;
                answer_tables.push(table);
            }
            out.push(ResolvedArchetype {
                name: a.name.clone(),
                count: a.count as usize,
                flip: a.flip,
                drift: a.drift as usize,
                prototype: a.prototype_slots()?,
                moves: Vec::new(),
                answer_tables,
            });
        }
        let protos: Vec<Vec<u8>> = out.iter().map(|a| a.prototype.clone()).collect();
        for (i, a) in out.iter_mut().enumerate() {
            if a.drift == 0 {
                continue;
            }
            let neighbours = [i.checked_sub(1), Some(i + 1).filter(|&j| j < protos.len())];
            for j in neighbours.into_iter().flatten() {
                let only = |p: &[u8], q: &[u8]| -> Vec<usize> {
                    (0..SLOTS).filter(|&s| p[s] == 1 && q[s] == 0).collect()
                };
                let dropped = only(&protos[i], &protos[j]);
                let taken = only(&protos[j], &protos[i]);
                a.moves.push(dropped.into_iter().zip(taken).collect());
            }
        }
        Ok(out)
    }

    /// Five chained schedules A–E with 141/100/108/110/107 persons, 5% flips
    /// and a drift of up to one hour toward the neighbouring schedules.
    ///
    /// Eight 32-quarter work blocks run from weekday mornings to weekday
    /// evenings via Wednesday, Saturday and Sunday; archetype `i` works blocks
    /// `i..i+4`, so prototypes that are further apart in the sequence share
    /// fewer blocks. Answer weights follow the per-class percentages of the
    /// reference survey tables; Sex, DayWk and Next do not depend on the class.
    pub fn builtin() -> Self {
        const BLOCKS: [&str; 8] = [
            "Mon,Tue,Thu,Fri 08:00-10:00",
            "Mon,Tue,Thu,Fri 10:00-12:00",
            "Wed 08:00-16:00",
            "Mon,Tue,Thu,Fri 14:00-16:00",
            "Sat 08:00-16:00",
            "Mon,Tue,Thu,Fri 16:00-18:00",
            "Sun 09:00-17:00",
            "Mon,Tue,Thu,Fri 21:00-23:00",
        ];
        const COUNTS: [i64; 5] = [141, 100, 108, 110, 107];
        // (question, per-class weights A..E in schema modality order)
        let tables: [(&str, [&[f64]; 5]); 14] = [
            (
                "Contract",
                [
                    &[89., 11.],
                    &[87., 13.],
                    &[81., 19.],
                    &[83., 17.],
                    &[77., 23.],
                ],
            ),
            ("Sex", [&[61., 505.]; 5]),
            (
                "Age",
                [
                    &[4., 40., 33., 23.],
                    &[4., 33., 35., 28.],
                    &[2., 42., 31., 25.],
                    &[9., 40., 29., 22.],
                    &[20., 39., 26., 15.],
                ],
            ),
            (
                "DaySch",
                [
                    &[52., 1., 46.],
                    &[61., 5., 34.],
                    &[59., 2., 39.],
                    &[47., 5., 47.],
                    &[36., 7., 57.],
                ],
            ),
            ("DayWk", [&[70., 30.]; 5]),
            (
                "Night",
                [
                    &[1., 7., 91.],
                    &[2., 4., 94.],
                    &[0., 6., 94.],
                    &[11., 10., 79.],
                    &[2., 5., 93.],
                ],
            ),
            (
                "Sat",
                [
                    &[6., 23., 72.],
                    &[19., 21., 60.],
                    &[40., 19., 41.],
                    &[46., 18., 35.],
                    &[49., 21., 30.],
                ],
            ),
            (
                "Sun",
                [
                    &[2., 15., 83.],
                    &[3., 20., 77.],
                    &[9., 13., 78.],
                    &[14., 19., 67.],
                    &[8., 16., 76.],
                ],
            ),
            (
                "Wed",
                [
                    &[51., 21., 28.],
                    &[68., 7., 25.],
                    &[68., 12., 20.],
                    &[63., 13., 25.],
                    &[64., 20., 16.],
                ],
            ),
            (
                "Leave",
                [
                    &[77., 15., 9.],
                    &[76., 16., 8.],
                    &[69., 18., 13.],
                    &[75., 13., 13.],
                    &[76., 7., 18.],
                ],
            ),
            (
                "Def",
                [
                    &[52., 9., 36., 3.],
                    &[64., 7., 21., 8.],
                    &[58., 17., 19., 6.],
                    &[65., 12., 14., 9.],
                    &[75., 6., 7., 12.],
                ],
            ),
            (
                "Volunt",
                [
                    &[35., 65.],
                    &[51., 49.],
                    &[47., 53.],
                    &[62., 38.],
                    &[65., 35.],
                ],
            ),
            ("Next", [&[80., 20.]; 5]),
            (
                "Carry",
                [
                    &[50., 27., 23.],
                    &[58., 27., 15.],
                    &[53., 28., 19.],
                    &[59., 26., 15.],
                    &[53., 26., 21.],
                ],
            ),
        ];
        let archetypes = (0..5)
            .map(|i| Archetype {
                name: ((b'A' + i as u8) as char).to_string(),
                count: COUNTS[i],
                flip: 0.05,
                drift: 4,
                shifts: BLOCKS[i..i + 4].iter().map(|s| s.to_string()).collect(),
                prototype: None,
                answers: tables
                    .iter()
                    .map(|(q, w)| (q.to_string(), w[i].to_vec()))
                    .collect(),
            })
            .collect();
        Self {
            schema: None,
            archetypes,
        }
    }
}

/// Generated dataset plus the planted `(person_id, archetype)` labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub dataset: Dataset,
    pub labels: Vec<(String, String)>,
}

impl SynthOutput {
    /// Archetype index of every person, in dataset order.
    pub fn label_indices(&self) -> Vec<usize> {
        let mut names: Vec<&str> = Vec::new();
        self.labels
            .iter()
            .map(|(_, l)| match names.iter().position(|n| n == l) {
                Some(i) => i,
                None => {
                    names.push(l);
                    names.len() - 1
                }
            })
            .collect()
    }
}

pub fn synth_generate(config: &GeneratorConfig, seed: u64) -> Result<SynthOutput> {
    let schema = config.schema()?;
    let archetypes = config.resolve(&schema)?;
    let total: usize = archetypes.iter().map(|a| a.count).sum();
    let width = total.to_string().len().max(4);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut profiles = Vec::with_capacity(total);
    let mut records = Vec::with_capacity(total);
    let mut labels = Vec::with_capacity(total);
    for a in &archetypes {
        for _ in 0..a.count {
            let id = format!("p{:0width$}", profiles.len() + 1);
            let mut base = a.prototype.clone();
            if !a.moves.is_empty() {
                let moves = &a.moves[rng.gen_range(0..a.moves.len())];
                let k = rng.gen_range(0..=a.drift).min(moves.len());
                for &(off, on) in &moves[..k] {
                    base[off] = 0;
                    base[on] = 1;
                }
            }
            let slots: Vec<u8> = base
                .iter()
                .map(|&s| {
                    if a.flip > 0.0 && rng.gen::<f64>() < a.flip {
                        1 - s
                    } else {
                        s
                    }
                })
                .collect();
            let answers = schema
                .questions()
                .iter()
                .zip(&a.answer_tables)
                .map(|(q, table)| (q.name.clone(), q.modalities[table.sample(&mut rng)].clone()))
                .collect();
            profiles.push(WeeklyProfile {
                person_id: id.clone(),
                slots,
            });
            records.push(IndividualRecord {
                person_id: id.clone(),
                answers,
            });
            labels.push((id, a.name.clone()));
        }
    }
    debug_assert!(profiles.iter().all(|p| p.slots.len() == SLOTS));
    let dataset = Dataset::new(profiles, records, schema)?;
    Ok(SynthOutput { dataset, labels })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(count: i64, flip: f64) -> GeneratorConfig {
        GeneratorConfig {
            schema: None,
            archetypes: vec![Archetype {
                name: "X".into(),
                count,
                flip,
                drift: 0,
                shifts: vec!["Mon-Fri 09:00-12:00".into()],
                prototype: None,
                answers: BTreeMap::new(),
            }],
        }
    }

    #[test]
    fn shift_parsing() {
        let s: Shift = "Mon-Wed,Sat 08:30-12:00".parse().unwrap();
        assert_eq!(s.days, vec![0, 1, 2, 5]);
        assert_eq!(s.start_quarter, 34);
        assert_eq!(s.end_quarter, 48);
        assert_eq!(s.to_string(), "Mon,Tue,Wed,Sat 08:30-12:00");
        let late: Shift = "Sun 21:00-24:00".parse().unwrap();
        assert_eq!(late.end_quarter, 96);
        assert!("Mon 08:10-09:00".parse::<Shift>().is_err());
        assert!("Mon 09:00-09:00".parse::<Shift>().is_err());
        assert!("Xyz 09:00-10:00".parse::<Shift>().is_err());
        assert!("Fri-Mon 09:00-10:00".parse::<Shift>().is_err());
    }

    #[test]
    fn noiseless_copies() {
        let out = synth_generate(&one(5, 0.0), 3).unwrap();
        let proto = one(5, 0.0).archetypes[0].prototype_slots().unwrap();
        assert_eq!(out.dataset.len(), 5);
        assert!(out.dataset.profiles().iter().all(|p| p.slots() == proto));
        assert_eq!(out.dataset.profiles()[0].total_worked_hours(), 15.0);
    }

    #[test]
    fn builtin_has_paper_sizes() {
        let cfg = GeneratorConfig::builtin();
        let counts: Vec<i64> = cfg.archetypes.iter().map(|a| a.count).collect();
        assert_eq!(counts, vec![141, 100, 108, 110, 107]);
        let out = synth_generate(&cfg, 1).unwrap();
        assert_eq!(out.dataset.len(), 566);
        assert_eq!(out.labels.len(), 566);
        for a in &cfg.archetypes {
            assert_eq!(
                a.prototype_slots()
                    .unwrap()
                    .iter()
                    .filter(|&&s| s == 1)
                    .count(),
                128
            );
        }
    }

    #[test]
    fn deterministic() {
        let cfg = GeneratorConfig::builtin();
        assert_eq!(
            synth_generate(&cfg, 9).unwrap(),
            synth_generate(&cfg, 9).unwrap()
        );
        assert_ne!(
            synth_generate(&cfg, 9).unwrap().dataset,
            synth_generate(&cfg, 10).unwrap().dataset
        );
    }

    #[test]
    fn config_errors() {
        assert!(synth_generate(&one(5, 0.5), 0).is_err());
        assert!(synth_generate(&one(0, 0.1), 0).is_err());
        assert!(synth_generate(&one(-2, 0.1), 0).is_err());
        let mut bad = one(2, 0.1);
        bad.archetypes[0]
            .answers
            .insert("Contract".into(), vec![1.0]);
        assert!(synth_generate(&bad, 0).is_err());
        let mut bad = one(2, 0.1);
        bad.archetypes[0]
            .answers
            .insert("Nope".into(), vec![1.0, 1.0]);
        assert!(synth_generate(&bad, 0).is_err());
        let empty = GeneratorConfig {
            schema: None,
            archetypes: vec![],
        };
        assert!(synth_generate(&empty, 0).is_err());
    }

    #[test]
    fn toml_round_trip() {
        let cfg = GeneratorConfig::builtin();
        assert_eq!(GeneratorConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn hamming_distance_matches_flip_rate() {
        let p = 0.05;
        let out = synth_generate(&one(1000, p), 42).unwrap();
        let proto = one(1, p).archetypes[0].prototype_slots().unwrap();
        let dists: Vec<f64> = out
            .dataset
            .profiles()
            .iter()
            .map(|pr| {
                pr.slots()
                    .iter()
                    .zip(&proto)
                    .filter(|(a, b)| a != b)
                    .count() as f64
            })
            .collect();
        let mean = dists.iter().sum::<f64>() / dists.len() as f64;
        let expected = SLOTS as f64 * p;
        let se = (SLOTS as f64 * p * (1.0 - p) / dists.len() as f64).sqrt();
        assert!(
            (mean - expected).abs() < 3.0 * se,
            "mean {mean} vs {expected} ± {se}"
        );
    }

    #[test]
    fn drift_moves_toward_neighbours_only() {
        let mut cfg = GeneratorConfig::builtin();
        for a in &mut cfg.archetypes {
            a.flip = 0.0;
            a.drift = 6;
        }
        let protos: Vec<Vec<u8>> = cfg
            .archetypes
            .iter()
            .map(|a| a.prototype_slots().unwrap())
            .collect();
        let out = synth_generate(&cfg, 5).unwrap();
        let mut moved = 0;
        for (p, label) in out.dataset.profiles().iter().zip(out.label_indices()) {
            let own = &protos[label];
            let d = p.slots().iter().zip(own).filter(|(a, b)| a != b).count();
            assert!(d % 2 == 0 && d <= 12, "distance {d}");
            assert_eq!(p.worked_quarters(), 128);
            moved += usize::from(d > 0);
            // taken-up slots all belong to an adjacent prototype
            for s in (0..SLOTS).filter(|&s| p.slots()[s] == 1 && own[s] == 0) {
                let near = [label.checked_sub(1), Some(label + 1)];
                assert!(near
                    .iter()
                    .flatten()
                    .any(|&j| j < protos.len() && protos[j][s] == 1));
            }
        }
        assert!(moved > 400);
        let mut bad = one(2, 0.0);
        bad.archetypes[0].drift = -1;
        assert!(synth_generate(&bad, 0).is_err());
    }
}
