//! Hand-written SVG renderings of the code vectors, the MDS map and the
//! superclass activity curves.
//!
//! Coordinates are printed with two decimals so the output is stable across
//! runs and platforms.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::data_model::{DAYS, DAY_NAMES, QUARTERS_PER_DAY, SLOTS};
use crate::error::{Error, Result};
use crate::mds::MdsEmbedding;
use crate::profiling::read_curves_csv;
use crate::som::SomModel;
use crate::superclass::SuperclassPartition;

pub const FIG1: &str = "fig1_codevectors.svg";
pub const FIG2: &str = "fig2_mds.svg";
pub const FIG3: &str = "fig3_curves.svg";

const LEFT: f64 = 60.0;
const TOP: f64 = 30.0;
const PLOT_W: f64 = 672.0;
const PANEL_H: f64 = 50.0;
const GAP: f64 = 12.0;

fn header(out: &mut String, width: f64, height: f64, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(out, "<title>{}</title>", escape(title));
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// One framed panel showing a week-long curve with values in [0, 1].
fn week_panel(out: &mut String, id: &str, label: &str, top: f64, values: &[f64]) {
    let _ = writeln!(out, r#"<g class="panel" id="{}">"#, escape(id));
    let _ = writeln!(
        out,
        r##"<rect class="frame" x="{LEFT:.2}" y="{top:.2}" width="{PLOT_W:.2}" height="{PANEL_H:.2}" fill="none" stroke="#888"/>"##
    );
    for d in 1..DAYS {
        let x = LEFT + (d * QUARTERS_PER_DAY) as f64 * PLOT_W / SLOTS as f64;
        let _ = writeln!(
            out,
            r##"<line class="day-sep" x1="{x:.2}" y1="{top:.2}" x2="{x:.2}" y2="{:.2}" stroke="#bbb"/>"##,
            top + PANEL_H
        );
    }
    let points: Vec<String> = values
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let x = LEFT + (i as f64 + 0.5) * PLOT_W / values.len() as f64;
            let y = top + PANEL_H * (1.0 - v.clamp(0.0, 1.0));
            format!("{x:.2},{y:.2}")
        })
        .collect();
    let _ = writeln!(
        out,
        r##"<polyline class="curve" fill="none" stroke="#1f4e9c" stroke-width="1" points="{}"/>"##,
        points.join(" ")
    );
    let _ = writeln!(
        out,
        r#"<text class="label" x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
        LEFT - 8.0,
        top + PANEL_H / 2.0 + 4.0,
        escape(label)
    );
    let _ = writeln!(out, "</g>");
}

fn day_axis(out: &mut String, y: f64) {
    for (d, name) in DAY_NAMES.iter().enumerate() {
        let x = LEFT + ((d as f64 + 0.5) * QUARTERS_PER_DAY as f64) * PLOT_W / SLOTS as f64;
        let _ = writeln!(
            out,
            r#"<text class="day" x="{x:.2}" y="{y:.2}" text-anchor="middle">{name}</text>"#
        );
    }
}

/// Stacked code-vector panels, one per unit, labeled with the unit's superclass.
pub fn codevectors_svg(
    code_vectors: &[Vec<f64>],
    partition: Option<&SuperclassPartition>,
) -> String {
    let height = TOP + code_vectors.len() as f64 * (PANEL_H + GAP) + 10.0;
    let mut out = String::new();
    header(
        &mut out,
        LEFT + PLOT_W + 20.0,
        height,
        "Code vectors of the string units",
    );
    day_axis(&mut out, TOP - 10.0);
    for (u, cv) in code_vectors.iter().enumerate() {
        let label = match partition.and_then(|p| p.label_of_unit(u)) {
            Some(l) => format!("{} {l}", u + 1),
            None => format!("{}", u + 1),
        };
        week_panel(
            &mut out,
            &format!("unit-{u}"),
            &label,
            TOP + u as f64 * (PANEL_H + GAP),
            cv,
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Scatter of the embedded units joined in string order.
pub fn mds_svg(embedding: &MdsEmbedding, partition: Option<&SuperclassPartition>) -> String {
    const SIZE: f64 = 400.0;
    const MARGIN: f64 = 40.0;
    let n = embedding.coordinates.len();
    let pts: Vec<(f64, f64)> = (0..n).map(|i| embedding.point(i)).collect();
    let range = |f: fn(&(f64, f64)) -> f64| {
        let lo = pts.iter().map(f).fold(f64::INFINITY, f64::min);
        let hi = pts.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    };
    let (x0, x1) = range(|p| p.0);
    let (y0, y1) = range(|p| p.1);
    // one scale for both axes keeps distances undistorted
    let span = (x1 - x0).max(y1 - y0);
    let scale = if span > 0.0 {
        (SIZE - 2.0 * MARGIN) / span
    } else {
        1.0
    };
    let project = |(x, y): (f64, f64)| {
        let cx = (x0 + x1) / 2.0;
        let cy = (y0 + y1) / 2.0;
        (SIZE / 2.0 + (x - cx) * scale, SIZE / 2.0 - (y - cy) * scale)
    };

    let mut out = String::new();
    header(&mut out, SIZE, SIZE, "Classical MDS of the code vectors");
    let path: Vec<String> = pts
        .iter()
        .map(|&p| {
            let (x, y) = project(p);
            format!("{x:.2},{y:.2}")
        })
        .collect();
    let _ = writeln!(
        out,
        r##"<polyline class="string" fill="none" stroke="#888" points="{}"/>"##,
        path.join(" ")
    );
    for (i, &p) in pts.iter().enumerate() {
        let (x, y) = project(p);
        let label = match partition.and_then(|q| q.label_of_unit(i)) {
            Some(l) => format!("{} {l}", i + 1),
            None => format!("{}", i + 1),
        };
        let _ = writeln!(
            out,
            r##"<circle class="unit" cx="{x:.2}" cy="{y:.2}" r="4" fill="#1f4e9c"/>"##
        );
        let _ = writeln!(
            out,
            r#"<text class="label" x="{:.2}" y="{:.2}">{}</text>"#,
            x + 6.0,
            y - 6.0,
            escape(&label)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// One activity-curve panel per superclass.
pub fn curves_svg(curves: &[(String, Vec<f64>)]) -> String {
    let height = TOP + curves.len() as f64 * (PANEL_H + GAP) + 10.0;
    let mut out = String::new();
    header(
        &mut out,
        LEFT + PLOT_W + 20.0,
        height,
        "Average activity by superclass",
    );
    day_axis(&mut out, TOP - 10.0);
    for (i, (label, mean)) in curves.iter().enumerate() {
        week_panel(
            &mut out,
            &format!("superclass-{label}"),
            label,
            TOP + i as f64 * (PANEL_H + GAP),
            mean,
        );
    }
    out.push_str("</svg>\n");
    out
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn open(dir: &Path, name: &str) -> Result<fs::File> {
    let path = dir.join(name);
    if !path.is_file() {
        return Err(Error::MissingArtifact(path));
    }
    fs::File::open(&path).map_err(|e| Error::io(&path, e))
}

/// Reads `unit,x,y` rows written by [`MdsEmbedding::write_csv`].
pub fn read_mds_csv<R: std::io::Read>(input: R) -> Result<MdsEmbedding> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut coordinates = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let xy = row
            .iter()
            .skip(1)
            .map(|c| {
                c.parse::<f64>().map_err(|e| Error::Parse {
                    file: "mds csv".into(),
                    line,
                    message: format!("`{c}`: {e}"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        coordinates.push(xy);
    }
    Ok(MdsEmbedding {
        coordinates,
        eigenvalues: Vec::new(),
    })
}

/// Renders the three figures from the artifacts of a previous run.
pub fn plot_from_dir(artifacts: &Path, out: &Path) -> Result<()> {
    let code_vectors = SomModel::read_code_vectors(open(artifacts, "model.csv")?)?;
    let partition = SuperclassPartition::read_csv(open(artifacts, "partition.csv")?)?;
    let embedding = read_mds_csv(open(artifacts, "mds.csv")?)?;
    let curves = read_curves_csv(open(artifacts, "curves.csv")?)?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_figures(out, &code_vectors, &partition, &embedding, &curves)
}

pub fn write_figures(
    out: &Path,
    code_vectors: &[Vec<f64>],
    partition: &SuperclassPartition,
    embedding: &MdsEmbedding,
    curves: &[(String, Vec<f64>)],
) -> Result<()> {
    write_file(
        &out.join(FIG1),
        &codevectors_svg(code_vectors, Some(partition)),
    )?;
    write_file(&out.join(FIG2), &mds_svg(embedding, Some(partition)))?;
    write_file(&out.join(FIG3), &curves_svg(curves))
}
