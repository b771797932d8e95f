//! CSV, JSON and SVG renderings of experiment results.

use std::fmt::Write as _;

use qreuse::analysis::BoundCheck;
use qreuse::protocol::SweepStats;
use serde::Serialize;

/// Columns of `run` and `sweep` reports.
pub const SWEEP_COLUMNS: [&str; 11] = [
    "L",
    "xi0",
    "trials",
    "emp_P0",
    "se_P0",
    "emp_R",
    "analytic_R",
    "emp_success_rate",
    "mean_cycles",
    "mean_reuses",
    "qram_queries_per_success",
];

/// Columns of `verify-bounds` reports.
pub const BOUND_COLUMNS: [&str; 7] = ["L", "xi0", "samples", "bound", "optimal_R", "max_R_candidate", "violations"];

/// `printf("%g")`-style formatting with 6 significant digits.
pub fn fmt_g(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..6).contains(&exp) {
        trim_zeros(format!("{:.*}", (5 - exp) as usize, x))
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mantissa.to_string()), exp.abs())
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_g).unwrap_or_default()
}

/// One report row with full-precision values; missing values are null in
/// JSON and empty in CSV.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    #[serde(rename = "L")]
    pub reliability: f64,
    pub xi0: f64,
    pub trials: u64,
    #[serde(rename = "emp_P0")]
    pub emp_p0: f64,
    #[serde(rename = "se_P0")]
    pub se_p0: Option<f64>,
    #[serde(rename = "emp_R")]
    pub emp_r: f64,
    #[serde(rename = "se_R")]
    pub se_r: Option<f64>,
    #[serde(rename = "analytic_R")]
    pub analytic_r: f64,
    pub emp_success_rate: f64,
    pub mean_cycles: Option<f64>,
    pub mean_reuses: Option<f64>,
    pub qram_queries_per_success: Option<f64>,
}

impl From<&SweepStats> for SweepRow {
    fn from(s: &SweepStats) -> Self {
        SweepRow {
            reliability: s.reliability,
            xi0: s.xi0,
            trials: s.trials,
            emp_p0: s.emp_p0.value,
            se_p0: s.emp_p0.se,
            emp_r: s.emp_r.value,
            se_r: s.emp_r.se,
            analytic_r: s.analytic_r,
            emp_success_rate: s.emp_success_rate.value,
            mean_cycles: s.mean_cycles.map(|e| e.value),
            mean_reuses: s.mean_reuses.map(|e| e.value),
            qram_queries_per_success: s.qram_queries_per_success,
        }
    }
}

impl SweepRow {
    fn csv_record(&self) -> [String; 11] {
        [
            fmt_g(self.reliability),
            fmt_g(self.xi0),
            self.trials.to_string(),
            fmt_g(self.emp_p0),
            opt(self.se_p0),
            fmt_g(self.emp_r),
            fmt_g(self.analytic_r),
            fmt_g(self.emp_success_rate),
            opt(self.mean_cycles),
            opt(self.mean_reuses),
            opt(self.qram_queries_per_success),
        ]
    }
}

fn csv_bytes<const N: usize>(header: [&str; N], records: impl Iterator<Item = [String; N]>) -> csv::Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in records {
        w.write_record(&r)?;
    }
    w.into_inner().map_err(|e| e.into_error().into())
}

pub fn sweep_csv(rows: &[SweepRow]) -> csv::Result<Vec<u8>> {
    csv_bytes(SWEEP_COLUMNS, rows.iter().map(SweepRow::csv_record))
}

pub fn bounds_csv(checks: &[BoundCheck]) -> csv::Result<Vec<u8>> {
    csv_bytes(
        BOUND_COLUMNS,
        checks.iter().map(|c| {
            [
                fmt_g(c.reliability),
                fmt_g(c.xi0),
                c.samples.to_string(),
                fmt_g(c.bound),
                fmt_g(c.optimal_r),
                fmt_g(c.max_r_candidate),
                c.violations.to_string(),
            ]
        }),
    )
}

pub fn to_json<T: Serialize + ?Sized>(value: &T) -> serde_json::Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(value)?;
    out.push(b'\n');
    Ok(out)
}

#[derive(Debug, Serialize)]
pub struct BoundSummary<'a> {
    pub points: &'a [BoundCheck],
    /// Largest `R_candidate − (1 − L)` over every point.
    pub max_excess: f64,
    pub max_r_candidate: f64,
    pub violations: u64,
}

impl<'a> BoundSummary<'a> {
    pub fn new(points: &'a [BoundCheck]) -> Self {
        BoundSummary {
            points,
            max_excess: points.iter().map(|c| c.max_r_candidate - c.bound).fold(f64::NEG_INFINITY, f64::max),
            max_r_candidate: points.iter().map(|c| c.max_r_candidate).fold(0.0, f64::max),
            violations: points.iter().map(|c| c.violations).sum(),
        }
    }
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 60.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
/// Error bars span this many standard errors each way.
pub const ERROR_BAR_SE: f64 = 2.0;

fn px(l: f64) -> f64 {
    MARGIN + l * (WIDTH - 2.0 * MARGIN)
}

fn py(r: f64) -> f64 {
    HEIGHT - MARGIN - r.clamp(0.0, 1.0) * (HEIGHT - 2.0 * MARGIN)
}

/// Static chart of empirical R against L with the line `R = 1 − L`.
pub fn svg_plot(rows: &[SweepRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r##"<rect width="100%" height="100%" fill="#ffffff"/>"##);
    let (x0, x1, y0, y1) = (px(0.0), px(1.0), py(0.0), py(1.0));
    let _ = writeln!(s, r##"<path d="M{x0},{y1} V{y0} H{x1}" fill="none" stroke="#000000"/>"##);
    for i in 0..=5 {
        let v = f64::from(i) / 5.0;
        let label = format!("{v:.1}");
        let (x, y) = (px(v), py(v));
        let _ = writeln!(s, r##"<line x1="{x:.2}" y1="{y0}" x2="{x:.2}" y2="{:.2}" stroke="#000000"/>"##, y0 + 5.0);
        let _ = writeln!(s, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{label}</text>"#, y0 + 20.0);
        let _ = writeln!(s, r##"<line x1="{:.2}" y1="{y:.2}" x2="{x0}" y2="{y:.2}" stroke="#000000"/>"##, x0 - 5.0);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{label}</text>"#, x0 - 8.0, y + 4.0);
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">reliability L</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 15.0
    );
    let _ = writeln!(
        s,
        r#"<text x="15" y="{:.2}" text-anchor="middle" transform="rotate(-90 15 {:.2})">reusability R</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0
    );
    let _ = writeln!(s, r##"<line x1="{x0}" y1="{y1}" x2="{x1}" y2="{y0}" stroke="#555555" stroke-dasharray="6 4"/>"##);
    let _ = writeln!(s, r##"<text x="{:.2}" y="{:.2}" fill="#555555">R = 1 - L</text>"##, px(0.62), py(0.42));

    let mut series: Vec<f64> = Vec::new();
    for row in rows {
        if !series.contains(&row.xi0) {
            series.push(row.xi0);
        }
    }
    for (k, xi0) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        for row in rows.iter().filter(|r| r.xi0 == *xi0) {
            let (x, y) = (px(row.reliability), py(row.emp_r));
            if let Some(se) = row.se_r.filter(|se| *se > 0.0) {
                let (lo, hi) = (py(row.emp_r - ERROR_BAR_SE * se), py(row.emp_r + ERROR_BAR_SE * se));
                let _ = writeln!(s, r#"<line x1="{x:.2}" y1="{lo:.2}" x2="{x:.2}" y2="{hi:.2}" stroke="{color}"/>"#);
                for yy in [lo, hi] {
                    let _ = writeln!(
                        s,
                        r#"<line x1="{:.2}" y1="{yy:.2}" x2="{:.2}" y2="{yy:.2}" stroke="{color}"/>"#,
                        x - 3.0,
                        x + 3.0
                    );
                }
            }
            let _ = writeln!(s, r#"<circle cx="{x:.2}" cy="{y:.2}" r="3" fill="{color}"/>"#);
        }
        let ly = MARGIN + 16.0 * k as f64;
        let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, x1 - 90.0, ly - 4.0);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{ly:.2}">xi0 = {}</text>"#, x1 - 80.0, fmt_g(*xi0));
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">empirical R, bars at ±{ERROR_BAR_SE} SE</text>"#,
        (x0 + x1) / 2.0,
        MARGIN - 20.0
    );
    s.push_str("</svg>\n");
    s
}
