//! CSV and SVG writers. Output is a pure function of the input values, so
//! identical inputs give byte-identical files.

use std::fmt::Write as _;
use std::path::Path;

use super::SweepRow;
use crate::error::Result;
use crate::metrics::{EvalSummary, MetricsLog};

pub const TRAINING_HEADER: &str = "iteration,reward,avg_reward,loss,epsilon,served";
pub const SWEEP_HEADER: &str =
    "kind,value,d_min,d_max,users,policy,mean_reward,mean_reward_per_mu,served_fraction";
pub const EVAL_HEADER: &str = "policy,mean_reward,mean_reward_per_mu,served_fraction";

/// Formats with 9 significant digits, `%g`-style: plain notation for
/// moderate exponents, scientific otherwise, trailing zeros trimmed.
pub fn format_sig(v: f64) -> String {
    const SIG: i32 = 9;
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return if v.is_nan() { "NaN".into() } else if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let sci = format!("{:.*e}", (SIG - 1) as usize, v);
    let (mantissa, exp) = sci.split_once('e').unwrap();
    let exp: i32 = exp.parse().unwrap();
    if (-5..SIG).contains(&exp) {
        let decimals = (SIG - 1 - exp).max(0) as usize;
        trim_zeros(format!("{v:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa.to_string()))
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

pub fn training_csv(log: &MetricsLog) -> String {
    let mut out = String::with_capacity(48 * (log.rows.len() + 1));
    out.push_str(TRAINING_HEADER);
    out.push('\n');
    for r in &log.rows {
        let loss = r.loss.map(format_sig).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.iteration,
            format_sig(r.reward),
            format_sig(r.avg_reward),
            loss,
            format_sig(r.epsilon),
            r.served
        );
    }
    out
}

pub fn eval_csv(rows: &[EvalSummary]) -> String {
    let mut out = format!("{EVAL_HEADER}\n");
    for s in rows {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            s.policy,
            format_sig(s.mean_reward),
            format_sig(s.mean_reward_per_mu),
            format_sig(s.served_fraction)
        );
    }
    out
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = format!("{SWEEP_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.kind.label(),
            format_sig(r.value),
            format_sig(r.d_min),
            format_sig(r.d_max),
            r.users,
            r.summary.policy,
            format_sig(r.summary.mean_reward),
            format_sig(r.summary.mean_reward_per_mu),
            format_sig(r.summary.served_fraction)
        );
    }
    out
}

const W: f64 = 720.0;
const H: f64 = 400.0;
const PAD: f64 = 50.0;

fn svg_open(title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" font-family="sans-serif" font-size="16" text-anchor="middle">{title}</text>"#,
        W / 2.0
    );
    let _ = writeln!(
        s,
        r#"<path d="M{PAD} {PAD} L{PAD} {y} L{x} {y}" stroke="black" fill="none"/>"#,
        y = H - PAD,
        x = W - PAD
    );
    s
}

fn axis_labels(s: &mut String, x_label: &str, y_label: &str, y_max: f64) {
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle">{x_label}</text>"#,
        W / 2.0,
        H - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" font-family="sans-serif" font-size="12" transform="rotate(-90 14 {})" text-anchor="middle">{y_label}</text>"#,
        H / 2.0,
        H / 2.0
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="10" text-anchor="end">{}</text>"#,
        PAD - 4.0,
        PAD + 4.0,
        format_sig((y_max * 100.0).round() / 100.0)
    );
}

/// Reward and moving-average reward against iteration.
pub fn training_svg(log: &MetricsLog) -> String {
    let mut s = svg_open("Reward vs. iteration");
    let n = log.rows.len().max(2) as f64 - 1.0;
    let y_max = log.rows.iter().map(|r| r.reward).fold(0.0, f64::max).max(1e-12);
    let px = |i: usize| PAD + (W - 2.0 * PAD) * i as f64 / n;
    let py = |v: f64| H - PAD - (H - 2.0 * PAD) * v / y_max;
    // Thin the raw series to at most ~2000 points.
    let stride = (log.rows.len() / 2000).max(1);
    for (series, colour, width) in [("raw", "#c6dbef", 1.0), ("avg", "#08519c", 2.0)] {
        let mut d = String::new();
        for (k, (i, r)) in log.rows.iter().enumerate().step_by(stride).enumerate() {
            let v = if series == "raw" { r.reward } else { r.avg_reward };
            let _ = write!(d, "{}{:.2} {:.2} ", if k == 0 { "M" } else { "L" }, px(i), py(v));
        }
        if !d.is_empty() {
            let _ = writeln!(
                s,
                r#"<path d="{}" stroke="{colour}" stroke-width="{width}" fill="none"/>"#,
                d.trim_end()
            );
        }
    }
    axis_labels(&mut s, "iteration", "reward (bits/s/Hz)", y_max);
    s.push_str("</svg>\n");
    s
}

/// Grouped bars: one group per grid value, one bar per policy.
pub fn sweep_svg(rows: &[SweepRow]) -> String {
    let title = match rows.first() {
        Some(r) => format!("Mean reward by {}", r.kind.label()),
        None => "Mean reward".to_string(),
    };
    let mut s = svg_open(&title);
    let mut values: Vec<f64> = rows.iter().map(|r| r.value).collect();
    values.dedup();
    let mut policies: Vec<&str> = Vec::new();
    for r in rows {
        if !policies.contains(&r.summary.policy.as_str()) {
            policies.push(&r.summary.policy);
        }
    }
    let y_max = rows.iter().map(|r| r.summary.mean_reward).fold(0.0, f64::max).max(1e-12);
    let group_w = (W - 2.0 * PAD) / values.len().max(1) as f64;
    let bar_w = group_w * 0.8 / policies.len().max(1) as f64;
    let colours = ["#08519c", "#fd8d3c", "#74c476", "#756bb1"];
    for r in rows {
        let g = values.iter().position(|v| *v == r.value).unwrap_or(0);
        let p = policies.iter().position(|p| *p == r.summary.policy).unwrap_or(0);
        let h = (H - 2.0 * PAD) * r.summary.mean_reward / y_max;
        let x = PAD + g as f64 * group_w + group_w * 0.1 + p as f64 * bar_w;
        let _ = writeln!(
            s,
            r#"<rect x="{x:.2}" y="{:.2}" width="{bar_w:.2}" height="{h:.2}" fill="{}"/>"#,
            H - PAD - h,
            colours[p % colours.len()]
        );
    }
    for (g, v) in values.iter().enumerate() {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{}" font-family="sans-serif" font-size="10" text-anchor="middle">{}</text>"#,
            PAD + (g as f64 + 0.5) * group_w,
            H - PAD + 14.0,
            format_sig(*v)
        );
    }
    for (p, name) in policies.iter().enumerate() {
        let y = PAD + 14.0 * p as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{}" y="{}" width="10" height="10" fill="{}"/><text x="{}" y="{}" font-family="sans-serif" font-size="11">{name}</text>"#,
            W - PAD - 70.0,
            y,
            colours[p % colours.len()],
            W - PAD - 56.0,
            y + 9.0
        );
    }
    let x_label = rows.first().map_or("value", |r| r.kind.label());
    axis_labels(&mut s, x_label, "mean reward (bits/s/Hz)", y_max);
    s.push_str("</svg>\n");
    s
}

/// What to write.
pub enum Output<'a> {
    Training(&'a MetricsLog),
    Sweep(&'a [SweepRow]),
    Eval(&'a [EvalSummary]),
}

/// Writes `<dir>/<stem>.csv` and, when `svg` is set, `<dir>/<stem>.svg`.
pub fn write_outputs(out: Output<'_>, dir: &Path, stem: &str, svg: bool) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let (csv, chart) = match out {
        Output::Training(log) => (training_csv(log), svg.then(|| training_svg(log))),
        Output::Sweep(rows) => (sweep_csv(rows), svg.then(|| sweep_svg(rows))),
        Output::Eval(rows) => (eval_csv(rows), None),
    };
    std::fs::write(dir.join(format!("{stem}.csv")), csv)?;
    if let Some(chart) = chart {
        std::fs::write(dir.join(format!("{stem}.svg")), chart)?;
    }
    Ok(())
}

/// `training.csv` (and `training.svg` when requested).
pub fn write_training(log: &MetricsLog, dir: &Path, svg: bool) -> Result<()> {
    write_outputs(Output::Training(log), dir, "training", svg)
}
