use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use crate::output::{RunManifest, MANIFEST};

const REPORT_MD: &str = "report.md";
const REPORT_SVG: &str = "report.svg";
/// Rows shown per table in the text report.
const MAX_ROWS: usize = 40;

struct Csv {
    name: String,
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

fn load_manifest(dir: &Path) -> Result<RunManifest> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).with_context(|| format!("no readable {MANIFEST} in {}", dir.display()))?;
    serde_json::from_str(&text).with_context(|| format!("corrupt {}", path.display()))
}

fn load_csv(dir: &Path, file: &str, expected_rows: usize) -> Result<Csv> {
    let path = dir.join(file);
    let mut r = csv::Reader::from_path(&path).with_context(|| format!("opening {}", path.display()))?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|r| r.iter().map(str::to_string).collect()))
        .collect::<Result<Vec<Vec<String>>, _>>()
        .with_context(|| format!("parsing {}", path.display()))?;
    if rows.len() != expected_rows {
        bail!("{} has {} rows but the manifest records {expected_rows}", path.display(), rows.len());
    }
    Ok(Csv {
        name: file.trim_end_matches(".csv").to_string(),
        header,
        rows,
    })
}

/// Column pairs worth plotting, by table name.
fn plot_axes(table: &str) -> Option<(&'static str, &'static [&'static str])> {
    match table {
        "exponents" => Some(("n", &["lambda_plus", "lambda_minus"])),
        "entropy" => Some(("n", &["rate_lower", "rate_upper"])),
        "neutral" => Some(("n", &["residual", "window_lower", "window_upper"])),
        "curve_growth" => Some(("t", &["rate"])),
        "members" => Some(("k", &["h", "lambda_plus"])),
        "decomposition" => Some(("k", &["block_length", "closed_form"])),
        _ => None,
    }
}

fn column(csv: &Csv, name: &str) -> Option<usize> {
    csv.header.iter().position(|h| h == name)
}

fn series(csv: &Csv, x: &str, y: &str) -> Vec<(f64, f64)> {
    let (Some(i), Some(j)) = (column(csv, x), column(csv, y)) else {
        return Vec::new();
    };
    csv.rows
        .iter()
        .filter_map(|r| Some((r[i].parse().ok()?, r[j].parse().ok()?)))
        .filter(|(a, b): &(f64, f64)| a.is_finite() && b.is_finite())
        .collect()
}

const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

fn svg_panel(out: &mut String, csv: &Csv, top: f64, width: f64, height: f64) -> bool {
    let Some((x, ys)) = plot_axes(&csv.name) else {
        return false;
    };
    let all: Vec<(usize, Vec<(f64, f64)>)> = ys.iter().map(|y| series(csv, x, y)).enumerate().filter(|(_, s)| !s.is_empty()).collect();
    if all.is_empty() {
        return false;
    }
    let pts = all.iter().flat_map(|(_, s)| s.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(a, b) in pts {
        x0 = x0.min(a);
        x1 = x1.max(a);
        y0 = y0.min(b);
        y1 = y1.max(b);
    }
    if x1 == x0 {
        x1 = x0 + 1.0;
    }
    if y1 == y0 {
        y1 = y0 + 1.0;
    }
    let (left, plot_w, plot_h) = (60.0, width - 80.0, height - 50.0);
    let px = |a: f64| left + (a - x0) / (x1 - x0) * plot_w;
    let py = |b: f64| top + 20.0 + (1.0 - (b - y0) / (y1 - y0)) * plot_h;
    let _ = writeln!(out, r#"<text x="{left}" y="{:.1}" font-size="13">{}: {} vs {x}</text>"#, top + 12.0, csv.name, ys.join(", "));
    let _ = writeln!(
        out,
        r#"<rect x="{left}" y="{:.1}" width="{plot_w}" height="{plot_h}" fill="none" stroke="gray"/>"#,
        top + 20.0
    );
    let _ = writeln!(out, r#"<text x="4" y="{:.1}" font-size="10">{y1:.4}</text>"#, py(y1) + 4.0);
    let _ = writeln!(out, r#"<text x="4" y="{:.1}" font-size="10">{y0:.4}</text>"#, py(y0));
    let _ = writeln!(out, r#"<text x="{left}" y="{:.1}" font-size="10">{x0}</text>"#, py(y0) + 14.0);
    let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" font-size="10" text-anchor="end">{x1}</text>"#, left + plot_w, py(y0) + 14.0);
    for (k, s) in &all {
        let color = COLORS[k % COLORS.len()];
        for &(a, b) in s {
            let _ = writeln!(out, r#"<circle cx="{:.2}" cy="{:.2}" r="2" fill="{color}"/>"#, px(a), py(b));
        }
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-size="11" fill="{color}">{}</text>"#,
            left + plot_w - 150.0,
            top + 34.0 + 13.0 * *k as f64,
            ys[*k]
        );
    }
    true
}

fn render_svg(tables: &[Csv]) -> String {
    let (width, height) = (640.0, 260.0);
    let mut body = String::new();
    let mut panels = 0;
    for t in tables {
        if svg_panel(&mut body, t, panels as f64 * height, width, height) {
            panels += 1;
        }
    }
    if panels == 0 {
        body.push_str(r#"<text x="10" y="20" font-size="13">no plottable columns</text>"#);
        body.push('\n');
        panels = 1;
    }
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{}\" font-family=\"monospace\">\n{body}</svg>\n",
        panels as f64 * height
    )
}

fn render_table(out: &mut String, csv: &Csv) {
    let keep: Vec<usize> = (0..csv.header.len()).filter(|&i| csv.header[i] != "config_hash").collect();
    let _ = writeln!(out, "## {} ({} rows)\n", csv.name, csv.rows.len());
    let _ = writeln!(out, "| {} |", keep.iter().map(|&i| csv.header[i].as_str()).collect::<Vec<_>>().join(" | "));
    let _ = writeln!(out, "|{}", "---|".repeat(keep.len()));
    for row in csv.rows.iter().take(MAX_ROWS) {
        let cells: Vec<String> = keep.iter().map(|&i| short(&row[i])).collect();
        let _ = writeln!(out, "| {} |", cells.join(" | "));
    }
    if csv.rows.len() > MAX_ROWS {
        let _ = writeln!(out, "\n{} more rows in {}.csv", csv.rows.len() - MAX_ROWS, csv.name);
    }
    out.push('\n');
}

/// Full-precision floats are shortened for display only.
fn short(cell: &str) -> String {
    if cell.contains('e') {
        if let Ok(x) = cell.parse::<f64>() {
            return format!("{x:.6}");
        }
    }
    cell.to_string()
}

pub struct Rendered {
    pub markdown: PathBuf,
    pub svg: PathBuf,
    pub text: String,
}

pub fn render(dir: &Path) -> Result<Rendered> {
    let manifest = load_manifest(dir)?;
    let tables = manifest
        .row_counts
        .iter()
        .map(|(file, &n)| load_csv(dir, file, n))
        .collect::<Result<Vec<_>>>()?;
    let mut text = String::new();
    let _ = writeln!(text, "# {} run {}\n", manifest.experiment, manifest.config_hash);
    let _ = writeln!(text, "seed {}, workers {}, version {}\n", manifest.rng_seed, manifest.workers, manifest.tool_version);
    for t in &tables {
        render_table(&mut text, t);
    }
    for file in &manifest.json_files {
        let path = dir.join(file);
        let raw = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        let value: serde_json::Value = serde_json::from_str(&raw).with_context(|| format!("corrupt {}", path.display()))?;
        let _ = writeln!(text, "## {file}\n\n```json\n{}\n```\n", serde_json::to_string_pretty(&value)?);
    }
    if !manifest.timing.is_empty() {
        let _ = writeln!(text, "## timing\n");
        for (stage, secs) in &manifest.timing {
            let _ = writeln!(text, "- {stage}: {secs:.3} s");
        }
    }
    let markdown = dir.join(REPORT_MD);
    let svg = dir.join(REPORT_SVG);
    fs::write(&markdown, &text).with_context(|| format!("writing {}", markdown.display()))?;
    fs::write(&svg, render_svg(&tables)).with_context(|| format!("writing {}", svg.display()))?;
    Ok(Rendered { markdown, svg, text })
}
