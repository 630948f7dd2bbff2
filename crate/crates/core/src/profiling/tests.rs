use std::collections::BTreeMap;

use super::*;
use crate::data_model::{IndividualRecord, QuestionSchema, WeeklyProfile};

/// Persons described by (superclass, answer overrides, worked slots).
struct Person {
    group: usize,
    answers: Vec<(&'static str, &'static str)>,
    slots: Vec<usize>,
}

fn build(people: &[Person], n_groups: usize) -> (Dataset, Membership) {
    let schema = QuestionSchema::default_survey();
    let mut profiles = Vec::new();
    let mut records = Vec::new();
    for (i, p) in people.iter().enumerate() {
        let id = format!("p{i}");
        let mut slots = vec![0u8; SLOTS];
        for &s in &p.slots {
            slots[s] = 1;
        }
        profiles.push(WeeklyProfile::new(id.clone(), slots).unwrap());
        let mut answers: BTreeMap<String, String> = schema
            .questions()
            .iter()
            .map(|q| (q.name.clone(), q.modalities[0].clone()))
            .collect();
        for (q, a) in &p.answers {
            answers.insert(q.to_string(), a.to_string());
        }
        records.push(IndividualRecord {
            person_id: id,
            answers,
        });
    }
    let ds = Dataset::new(profiles, records, schema).unwrap();
    let labels = (0..n_groups)
        .map(crate::superclass::superclass_label)
        .collect();
    let m = Membership::new(labels, people.iter().map(|p| p.group).collect()).unwrap();
    (ds, m)
}

fn person(group: usize, answers: Vec<(&'static str, &'static str)>) -> Person {
    Person {
        group,
        answers,
        slots: vec![],
    }
}

fn table(counts: Vec<Vec<u64>>) -> ContingencyTable {
    ContingencyTable {
        question: "Q".into(),
        modalities: (0..counts.len()).map(|i| format!("m{i}")).collect(),
        labels: (0..counts[0].len()).map(|i| format!("c{i}")).collect(),
        counts,
    }
}

#[test]
fn contingency_single_superclass_is_marginal() {
    let people: Vec<Person> = ["<25", "[25,40[", "[25,40[", ">=50"]
        .iter()
        .map(|a| person(0, vec![("Age", a)]))
        .collect();
    let (ds, m) = build(&people, 1);
    let t = contingency(&ds, &m, "Age").unwrap();
    assert_eq!(t.counts, vec![vec![1], vec![2], vec![0], vec![1]]);
    assert_eq!(t.total(), 4);
    assert!(contingency(&ds, &m, "Shoe size").is_err());
}

#[test]
fn contract_marginal_rounds_to_reference_total() {
    let mut people: Vec<Person> = (0..473)
        .map(|_| person(0, vec![("Contract", "Open-ended")]))
        .collect();
    people.extend((0..93).map(|_| person(0, vec![("Contract", "Fixed-term")])));
    let (ds, m) = build(&people, 1);
    let t = contingency(&ds, &m, "Contract").unwrap();
    assert_eq!(t.row_totals(), vec![473, 93]);
    let tv = test_values(&t, 1.0).unwrap();
    let shown: Vec<String> = tv
        .total_percentages
        .iter()
        .map(|p| format!("{p:.0}"))
        .collect();
    assert_eq!(shown, vec!["84", "16"]);
}

#[test]
fn empty_superclass_column() {
    let (ds, m) = build(&[person(0, vec![]), person(2, vec![])], 3);
    let t = contingency(&ds, &m, "Sex").unwrap();
    assert_eq!(t.empty_columns(), vec!["B"]);
    assert!(test_values(&t, 1.0).is_err());
}

#[test]
fn chi_square_proportional_table() {
    let r = chi_square_test(&table(vec![vec![10, 20, 30], vec![20, 40, 60]])).unwrap();
    assert!(r.statistic.abs() < 1e-12);
    assert_eq!(r.dof, 2);
    assert!((r.p_value - 1.0).abs() < 1e-12);
}

#[test]
fn chi_square_two_by_two_by_hand() {
    // every expected count is 15 and every |O − E| is 5: 4 · 25/15 = 20/3
    let r = chi_square_test(&table(vec![vec![10, 20], vec![20, 10]])).unwrap();
    assert!((r.statistic - 20.0 / 3.0).abs() < 1e-9);
    assert_eq!(r.dof, 1);
}

#[test]
fn chi_square_drops_zero_margins() {
    let r = chi_square_test(&table(vec![vec![5, 0, 3], vec![0, 0, 0], vec![2, 0, 9]])).unwrap();
    assert_eq!(r.dof, 1);
    assert_eq!(r.dropped_rows, vec!["m1"]);
    assert_eq!(r.dropped_cols, vec!["c1"]);
    assert!(matches!(
        chi_square_test(&table(vec![vec![5, 6]])),
        Err(Error::Degenerate(_))
    ));
    assert!(chi_square_test(&table(vec![vec![5, 0], vec![3, 0]])).is_err());
}

#[test]
fn chi_square_invariant_under_permutation() {
    let a = chi_square_test(&table(vec![vec![3, 8, 1], vec![7, 2, 9], vec![4, 4, 5]])).unwrap();
    let b = chi_square_test(&table(vec![vec![9, 2, 7], vec![1, 8, 3], vec![5, 4, 4]])).unwrap();
    assert!((a.statistic - b.statistic).abs() < 1e-12);
}

#[test]
fn test_value_at_expectation_is_zero() {
    // n_c · n_m / n = 20 · 30 / 60 = 10
    assert_eq!(test_value(10, 20, 30, 60), Some(0.0));
    let t = table(vec![vec![10, 20], vec![10, 20]]);
    let tv = test_values(&t, 1.0).unwrap();
    assert!(tv
        .cells
        .iter()
        .flatten()
        .all(|c| c.test_value == 0.0 && !c.highlighted));
}

/// Mean and variance of the hypergeometric count by enumerating its support.
fn hypergeometric_moments(n_c: u64, n_m: u64, n: u64) -> (f64, f64) {
    fn ln_choose(n: u64, k: u64) -> f64 {
        (1..=k).map(|i| ((n - k + i) as f64 / i as f64).ln()).sum()
    }
    let lo = (n_c + n_m).saturating_sub(n);
    let hi = n_c.min(n_m);
    let denom = ln_choose(n, n_c);
    let probs: Vec<(f64, f64)> = (lo..=hi)
        .map(|x| {
            (
                x as f64,
                (ln_choose(n_m, x) + ln_choose(n - n_m, n_c - x) - denom).exp(),
            )
        })
        .collect();
    let mean: f64 = probs.iter().map(|(x, p)| x * p).sum();
    let var: f64 = probs.iter().map(|(x, p)| (x - mean).powi(2) * p).sum();
    (mean, var)
}

#[test]
fn test_value_small_case_against_enumeration() {
    let (mean, var) = hypergeometric_moments(4, 5, 10);
    let want = (4.0 - mean) / var.sqrt();
    assert!((test_value(4, 4, 5, 10).unwrap() - want).abs() < 1e-9);
}

#[test]
fn test_value_degenerate_cases() {
    assert_eq!(test_value(0, 3, 0, 10), None);
    assert_eq!(test_value(3, 3, 10, 10), None);
    assert_eq!(test_value(2, 10, 4, 10), None);
    let t = table(vec![vec![4, 6], vec![0, 0]]);
    let tv = test_values(&t, 1.0).unwrap();
    assert!(tv.cells[1]
        .iter()
        .all(|c| c.degenerate && c.test_value == 0.0));
}

#[test]
fn voluntary_cell_of_first_superclass_is_highlighted() {
    // superclass A: 141 of 566, 65% voluntary (92); population 49% (277)
    let n_c = 141;
    let x = 92;
    let n_m = 277;
    let v = test_value(x, n_c, n_m, 566).unwrap();
    assert!((100.0 * x as f64 / n_c as f64).round() == 65.0);
    assert!((100.0 * n_m as f64 / 566.0).round() == 49.0);
    assert!(v > 1.0, "v = {v}");
    let t = table(vec![vec![x, n_m - x], vec![n_c - x, 566 - n_c - (n_m - x)]]);
    assert!(test_values(&t, 1.0).unwrap().cells[0][0].highlighted);
}

#[test]
fn highlight_threshold_is_strict() {
    let t = table(vec![vec![10, 20], vec![10, 20]]);
    let tv = test_values(&t, 0.0).unwrap();
    assert!(tv.cells.iter().flatten().all(|c| !c.highlighted));
}

#[test]
fn percentages_sum_to_hundred() {
    let t = table(vec![vec![3, 8, 1], vec![7, 2, 9], vec![4, 4, 5]]);
    let tv = test_values(&t, 1.0).unwrap();
    for c in 0..3 {
        let s: f64 = tv.cells.iter().map(|r| r[c].percentage).sum();
        assert!((s - 100.0).abs() < 1e-9);
    }
}

#[test]
fn probes() {
    let names: Vec<String> = Probe::default_set().iter().map(|p| p.to_string()).collect();
    assert_eq!(
        names,
        vec![
            "Sat_10h", "Sat_16h", "Sat_21h", "Sun_10h", "Sun_16h", "Sun_21h", "Wed_10h", "Wed_16h",
            "Wed_21h"
        ]
    );
    let p: Probe = "Wed_10h".parse().unwrap();
    assert_eq!(p.slot(), 232);
    let q: Probe = "Mon_08:45".parse().unwrap();
    assert_eq!(q.quarter, 35);
    assert_eq!(q.to_string(), "Mon_08:45");
    assert!("Mon_24h".parse::<Probe>().is_err());
    assert!("Xyz_10h".parse::<Probe>().is_err());
    assert_eq!(Probe::parse_list("Sat_10h, Sun_21h").unwrap().len(), 2);
}

#[test]
fn headcounts_all_zero_profiles() {
    let (ds, m) = build(&[person(0, vec![]), person(1, vec![])], 2);
    let h = headcounts(&ds, &m, &Probe::default_set()).unwrap();
    assert_eq!(h.rows.len(), 18);
    assert!(h.rows.iter().all(|r| r.count == 0));
}

fn sunday_fixture() -> (Dataset, Membership) {
    let sun10 = Probe::at_hour(6, 10).unwrap().slot();
    let mut people = Vec::new();
    for i in 0..100 {
        let sun = match i {
            0..=76 => "Never",
            77..=96 => "Sometimes",
            _ => "Usually",
        };
        people.push(Person {
            group: 1,
            answers: vec![("Sun", sun)],
            slots: if i >= 40 { vec![sun10] } else { vec![] },
        });
    }
    people.push(person(0, vec![("Sun", "Never")]));
    build(&people, 2)
}

#[test]
fn headcount_fixture() {
    let (ds, m) = sunday_fixture();
    let probe = Probe::at_hour(6, 10).unwrap();
    let h = headcounts(&ds, &m, &[probe]).unwrap();
    let b = h.get("B", probe).unwrap();
    assert_eq!((b.count, b.size), (60, 100));
    assert_eq!(b.percentage, 60.0);
}

#[test]
fn coherence_flags_sunday_divergence() {
    let (ds, m) = sunday_fixture();
    let rows = coherence_report(&ds, &m, &Probe::default_set(), 20.0).unwrap();
    let b = rows
        .iter()
        .find(|r| r.label == "B" && r.question == "Sun")
        .unwrap();
    assert_eq!(b.never_pct, 77.0);
    assert_eq!(b.observed_pct, 60.0);
    assert_eq!(b.observed_at, "Sun_10h");
    assert!(b.flagged);
    let a = rows
        .iter()
        .find(|r| r.label == "A" && r.question == "Sun")
        .unwrap();
    assert!(!a.flagged);
    assert!(coherence_report(&ds, &m, &Probe::default_set(), 100.0)
        .unwrap()
        .iter()
        .all(|r| !r.flagged));
}

#[test]
fn coherence_consistent_class_unflagged() {
    let sat10 = Probe::at_hour(5, 10).unwrap().slot();
    let people: Vec<Person> = (0..10)
        .map(|i| Person {
            group: 0,
            answers: vec![
                ("Sat", if i < 5 { "Usually" } else { "Never" }),
                ("Sun", "Never"),
                ("Wed", "Never"),
                ("Night", "Never"),
            ],
            slots: if i < 5 { vec![sat10] } else { vec![] },
        })
        .collect();
    let (ds, m) = build(&people, 1);
    let rows = coherence_report(&ds, &m, &Probe::default_set(), 20.0).unwrap();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| !r.flagged), "{rows:?}");
}

#[test]
fn curves_and_identity() {
    let people = vec![
        Person {
            group: 0,
            answers: vec![],
            slots: vec![3, 5],
        },
        Person {
            group: 1,
            answers: vec![],
            slots: vec![3],
        },
        Person {
            group: 1,
            answers: vec![],
            slots: vec![3, 7],
        },
    ];
    let (ds, m) = build(&people, 3);
    let curves = average_activity_profile(&ds, &m).unwrap();
    assert_eq!(curves.len(), 2, "empty superclass C is omitted");
    assert_eq!(curves[0].mean[5], 1.0);
    assert!(curves[0].mean.iter().all(|&x| x == 0.0 || x == 1.0));
    assert_eq!(curves[1].mean[3], 1.0);
    assert_eq!(curves[1].mean[7], 0.5);

    let probes = [Probe::new(0, 3).unwrap(), Probe::new(0, 7).unwrap()];
    let h = headcounts(&ds, &m, &probes).unwrap();
    for c in &curves {
        for &p in &probes {
            let row = h.get(&c.label, p).unwrap();
            assert_eq!(
                (c.mean[p.slot()] * c.members as f64).round() as usize,
                row.count
            );
        }
    }
}

#[test]
fn selection_extremes() {
    let mut people = Vec::new();
    for i in 0..60 {
        let g = i % 3;
        let contract = if g == 0 { "Open-ended" } else { "Fixed-term" };
        let sex = if i % 2 == 0 { "Man" } else { "Woman" };
        people.push(person(g, vec![("Contract", contract), ("Sex", sex)]));
    }
    let (ds, m) = build(&people, 3);
    let all = select_discriminant_questions(&ds, &m, 1.0).unwrap();
    assert_eq!(all.kept.len(), 14);
    let none = select_discriminant_questions(&ds, &m, 0.0).unwrap();
    assert!(none.kept.is_empty());
    let sel = select_discriminant_questions(&ds, &m, 0.05).unwrap();
    assert!(sel.kept.iter().any(|q| q.question == "Contract"));
    assert!(sel.dropped.iter().any(|q| q.question == "Sex"));
    assert!(select_discriminant_questions(&ds, &m, 1.5).is_err());
}

#[test]
fn tables_write_csv() {
    let t = table(vec![vec![10, 20], vec![20, 10]]);
    let mut buf = Vec::new();
    test_values(&t, 1.0).unwrap().write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let header = text.lines().next().unwrap();
    assert_eq!(
        header,
        "modality,c0,c1,Total,test_c0,test_c1,highlight_c0,highlight_c1"
    );
    assert!(text.lines().nth(1).unwrap().starts_with("m0,33,67,50,"));
}

proptest::proptest! {
    #[test]
    fn test_value_increasing_in_count(n in 4u64..200, a in 0.05f64..0.95, b in 0.05f64..0.95) {
        let n_c = ((n as f64 * a) as u64).clamp(1, n - 1);
        let n_m = ((n as f64 * b) as u64).clamp(1, n - 1);
        let lo = (n_c + n_m).saturating_sub(n);
        let hi = n_c.min(n_m);
        let mut prev = f64::NEG_INFINITY;
        for x in lo..=hi {
            let v = test_value(x, n_c, n_m, n).unwrap();
            proptest::prop_assert!(v > prev);
            prev = v;
        }
    }

    #[test]
    fn contingency_cells_sum_to_population(groups in proptest::collection::vec(0usize..4, 1..50)) {
        let people: Vec<Person> = groups.iter().map(|&g| person(g, vec![])).collect();
        let (ds, m) = build(&people, 4);
        for q in ds.schema().questions() {
            let t = contingency(&ds, &m, &q.name).unwrap();
            proptest::prop_assert_eq!(t.total(), people.len() as u64);
            for (c, &size) in t.col_totals().iter().zip(&m.sizes()) {
                proptest::prop_assert_eq!(*c, size as u64);
            }
        }
    }
}

/// Pearson statistic in exact rational arithmetic.
fn chi_square_exact(counts: &[Vec<u64>]) -> f64 {
    use num_bigint::BigInt;
    use num_rational::BigRational;
    use num_traits::ToPrimitive;
    let rows: Vec<u64> = counts.iter().map(|r| r.iter().sum()).collect();
    let cols: Vec<u64> = (0..counts[0].len())
        .map(|c| counts.iter().map(|r| r[c]).sum())
        .collect();
    let n: u64 = rows.iter().sum();
    let mut stat = BigRational::from_integer(BigInt::from(0));
    for (i, r) in counts.iter().enumerate() {
        for (j, &o) in r.iter().enumerate() {
            if rows[i] == 0 || cols[j] == 0 {
                continue;
            }
            let e = BigRational::new(BigInt::from(rows[i] * cols[j]), BigInt::from(n));
            let diff = BigRational::from_integer(BigInt::from(o)) - &e;
            stat += &diff * &diff / e;
        }
    }
    stat.to_f64().unwrap()
}

/// Survival function by Simpson's rule on the density after t = u².
fn chi_square_survival_quadrature(x: f64, dof: usize) -> f64 {
    let k = dof as f64;
    // Γ(k/2) from Γ(1) = 1 and Γ(1/2) = √π
    let mut gamma = if dof.is_multiple_of(2) {
        1.0
    } else {
        std::f64::consts::PI.sqrt()
    };
    let mut a = if dof.is_multiple_of(2) { 1.0 } else { 0.5 };
    while a < k / 2.0 {
        gamma *= a;
        a += 1.0;
    }
    let norm = 2.0 / (2f64.powf(k / 2.0) * gamma);
    let g = |u: f64| norm * u.powf(k - 1.0) * (-u * u / 2.0).exp();
    let b = x.sqrt();
    let n = 20_000;
    let h = b / n as f64;
    let mut s = g(0.0) + g(b);
    for i in 1..n {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * g(i as f64 * h);
    }
    1.0 - s * h / 3.0
}

#[test]
fn p_value_against_quadrature() {
    for dof in 1..=8 {
        for &x in &[0.3, 1.0, 2.5, 3.841_459, 7.0, 12.0, 20.0] {
            let got = stats::chi_square_survival(x, dof);
            let want = chi_square_survival_quadrature(x, dof);
            assert!(
                (got - want).abs() < 1e-8,
                "dof {dof} x {x}: {got} vs {want}"
            );
        }
    }
    assert!((chi_square_survival_quadrature(3.841_459, 1) - 0.05).abs() < 1e-4);
}

#[test]
fn test_value_exhaustive_small_populations() {
    for n in 2..=30u64 {
        for n_c in 1..n {
            for n_m in 1..n {
                let (mean, var) = hypergeometric_moments(n_c, n_m, n);
                let lo = (n_c + n_m).saturating_sub(n);
                for x in lo..=n_c.min(n_m) {
                    let v = test_value(x, n_c, n_m, n).unwrap();
                    let want = (x as f64 - mean) / var.sqrt();
                    assert!(
                        (v - want).abs() < 1e-7 * want.abs().max(1.0),
                        "{x} {n_c} {n_m} {n}"
                    );
                }
            }
        }
    }
}

proptest::proptest! {
    #[test]
    fn chi_square_matches_exact_rational(
        counts in proptest::collection::vec(proptest::collection::vec(0u64..40, 3), 2..5)
    ) {
        let t = table(counts.clone());
        if let Ok(r) = chi_square_test(&t) {
            let want = chi_square_exact(&counts);
            proptest::prop_assert!((r.statistic - want).abs() < 1e-9 * want.max(1.0));
        }
    }
}

#[test]
fn coherence_night_and_unprobed_days_use_peak_headcount() {
    // 4 of 10 work Tuesday 23:00; 2 of them also Saturday 06:00, which no probe covers
    let tue23 = slot_index(1, 92).unwrap();
    let sat06 = slot_index(5, 24).unwrap();
    let people: Vec<Person> = (0..10)
        .map(|i| Person {
            group: 0,
            answers: vec![("Night", if i < 4 { "Usually" } else { "Never" })],
            slots: match i {
                0 | 1 => vec![tue23, sat06],
                2 | 3 => vec![tue23],
                _ => vec![],
            },
        })
        .collect();
    let (ds, m) = build(&people, 1);
    let probes = [Probe::at_hour(6, 10).unwrap()];
    let rows = coherence_report(&ds, &m, &probes, 20.0).unwrap();
    let night = rows.iter().find(|r| r.question == "Night").unwrap();
    assert_eq!((night.observed_pct, night.declared_pct), (40.0, 40.0));
    assert_eq!(night.observed_at, "night_Tue_23h");
    assert!(!night.flagged);
    let sat = rows.iter().find(|r| r.question == "Sat").unwrap();
    assert_eq!(sat.observed_pct, 20.0);
    assert_eq!(sat.observed_at, "Sat_6h");
}
