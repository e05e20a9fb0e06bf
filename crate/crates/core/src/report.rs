//! Table and figure rendering for the `report` stage.
//!
//! CSV is the authoritative artifact; the SVG files are drawn from the
//! parsed CSV rows and carry no information the CSV lacks.

use std::fmt::Write as _;

use crate::evaluator::FoldMetrics;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

pub const TABLE_HEADER: &str =
    "horizon,model,auc_mean,auc_sd,sensitivity_mean,sensitivity_sd,precision_mean,precision_sd,f1_mean,f1_sd,n_folds";

fn num(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

/// One row per (horizon, model), horizons outermost.
pub fn table2_csv(metrics: &[FoldMetrics]) -> String {
    let mut s = format!("{TABLE_HEADER}\n");
    let Some(first) = metrics.first() else {
        return s;
    };
    for (h, name) in first.horizons.iter().enumerate() {
        for m in metrics {
            let mean = m.mean.get(h).copied().flatten();
            let sd = m.sd.get(h).copied().flatten();
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{}",
                crate::io::csv_field(name),
                crate::io::csv_field(&m.model),
                num(mean.map(|c| c.auc)),
                num(sd.map(|c| c.auc)),
                num(mean.map(|c| c.sensitivity)),
                num(sd.map(|c| c.sensitivity)),
                num(mean.map(|c| c.precision)),
                num(sd.map(|c| c.precision)),
                num(mean.map(|c| c.f1)),
                num(sd.map(|c| c.f1)),
                m.n_defined.get(h).copied().unwrap_or(0),
            );
        }
    }
    s
}

/// Fixed-width text rendering of [`table2_csv`] rows.
pub fn table2_text(rows: &[Vec<String>]) -> String {
    let cell = |r: &[String], i: usize| {
        let (m, sd) = (&r[i], &r[i + 1]);
        if m.is_empty() {
            "n/a".to_string()
        } else {
            let m: f64 = m.parse().unwrap_or(f64::NAN);
            let sd: f64 = sd.parse().unwrap_or(f64::NAN);
            format!("{m:.3} ± {sd:.3}")
        }
    };
    let mut s = format!(
        "{:<8} {:<12} {:<15} {:<15} {:<15} {:<15} {}\n",
        "horizon", "model", "AUC", "sensitivity", "precision", "F1", "folds"
    );
    let mut last = String::new();
    for r in rows {
        if r.len() < 11 {
            continue;
        }
        if !last.is_empty() && last != r[0] {
            s.push('\n');
        }
        last = r[0].clone();
        let _ = writeln!(
            s,
            "{:<8} {:<12} {:<15} {:<15} {:<15} {:<15} {}",
            r[0],
            r[1],
            cell(r, 2),
            cell(r, 4),
            cell(r, 6),
            cell(r, 8),
            r[10]
        );
    }
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// ROC curves on a unit square with the chance diagonal.
pub fn roc_svg(title: &str, curves: &[(String, Vec<(f64, f64)>)]) -> String {
    let (w, h, pad) = (420.0, 420.0, 50.0);
    let side = w - 2.0 * pad;
    let x = |v: f64| pad + v * side;
    let y = |v: f64| h - pad - v * side;
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{}\" font-family=\"sans-serif\" font-size=\"12\">\n",
        h + 20.0 * curves.len() as f64
    );
    let _ = writeln!(s, "<text x=\"{}\" y=\"20\" text-anchor=\"middle\">{}</text>", w / 2.0, escape(title));
    let _ = writeln!(
        s,
        "<rect x=\"{pad}\" y=\"{pad}\" width=\"{side}\" height=\"{side}\" fill=\"none\" stroke=\"#000\"/>"
    );
    let _ = writeln!(
        s,
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#aaa\" stroke-dasharray=\"4 4\"/>",
        x(0.0),
        y(0.0),
        x(1.0),
        y(1.0)
    );
    for t in [0.0, 0.5, 1.0] {
        let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{t}</text>", x(t), h - pad + 16.0);
        let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{t}</text>", pad - 6.0, y(t) + 4.0);
    }
    let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">false positive rate</text>", w / 2.0, h - 12.0);
    let _ = writeln!(
        s,
        "<text x=\"14\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 14 {})\">true positive rate</text>",
        h / 2.0,
        h / 2.0
    );
    for (i, (name, pts)) in curves.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let path: Vec<String> = pts.iter().map(|&(f, t)| format!("{:.2},{:.2}", x(f), y(t))).collect();
        let _ = writeln!(s, "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>", path.join(" "));
        let ly = h + 20.0 * i as f64;
        let _ = writeln!(s, "<rect x=\"{pad}\" y=\"{}\" width=\"12\" height=\"4\" fill=\"{color}\"/>", ly - 4.0);
        let _ = writeln!(s, "<text x=\"{}\" y=\"{ly}\">{}</text>", pad + 18.0, escape(name));
    }
    s.push_str("</svg>\n");
    s
}

pub struct ImportanceBar {
    pub feature: String,
    pub mean: f64,
    pub sd: f64,
    pub p_value: f64,
}

/// Horizontal ΔF1 bars with ±1 SD whiskers; `*` marks p < 0.05.
pub fn importance_svg(title: &str, bars: &[ImportanceBar]) -> String {
    let (label_w, plot_w, row_h, top) = (260.0, 320.0, 18.0, 40.0);
    let h = top + row_h * bars.len() as f64 + 40.0;
    let lo = bars.iter().map(|b| b.mean - b.sd).fold(0.0f64, f64::min);
    let hi = bars.iter().map(|b| b.mean + b.sd).fold(0.0f64, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let x = |v: f64| label_w + (v - lo) / span * plot_w;
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{h}\" font-family=\"sans-serif\" font-size=\"11\">\n",
        label_w + plot_w + 40.0
    );
    let _ = writeln!(s, "<text x=\"{}\" y=\"20\" text-anchor=\"middle\">{}</text>", label_w + plot_w / 2.0, escape(title));
    let _ = writeln!(
        s,
        "<line x1=\"{0}\" y1=\"{top}\" x2=\"{0}\" y2=\"{1}\" stroke=\"#000\"/>",
        x(0.0),
        h - 40.0
    );
    for (i, b) in bars.iter().enumerate() {
        let yy = top + row_h * i as f64;
        let (a, c) = (x(0.0).min(x(b.mean)), x(0.0).max(x(b.mean)));
        let color = if b.mean >= 0.0 { PALETTE[0] } else { PALETTE[1] };
        let star = if b.p_value < 0.05 { " *" } else { "" };
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}{star}</text>",
            label_w - 6.0,
            yy + 12.0,
            escape(&b.feature)
        );
        let _ = writeln!(
            s,
            "<rect x=\"{a:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{color}\"/>",
            yy + 3.0,
            c - a,
            row_h - 6.0
        );
        let _ = writeln!(
            s,
            "<line x1=\"{:.2}\" y1=\"{2:.2}\" x2=\"{:.2}\" y2=\"{2:.2}\" stroke=\"#000\"/>",
            x(b.mean - b.sd),
            x(b.mean + b.sd),
            yy + row_h / 2.0
        );
    }
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">mean ΔF1 (range {lo:.4} to {hi:.4})</text>",
        label_w + plot_w / 2.0,
        h - 16.0
    );
    s.push_str("</svg>\n");
    s
}

/// One strip per patient, one cell per observation day, shaded by weight.
pub fn attention_svg(title: &str, patients: &[(String, Vec<(i64, f64)>)]) -> String {
    let (label_w, cell, row_h, top) = (120.0, 10.0, 16.0, 40.0);
    let n_max = patients.iter().map(|p| p.1.len()).max().unwrap_or(1).max(1);
    let w = label_w + cell * n_max as f64 + 20.0;
    let h = top + row_h * patients.len() as f64 + 30.0;
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" font-family=\"sans-serif\" font-size=\"11\">\n"
    );
    let _ = writeln!(s, "<text x=\"{}\" y=\"20\" text-anchor=\"middle\">{}</text>", w / 2.0, escape(title));
    for (i, (id, days)) in patients.iter().enumerate() {
        let yy = top + row_h * i as f64;
        let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>", label_w - 6.0, yy + 11.0, escape(id));
        let max = days.iter().map(|d| d.1).fold(0.0f64, f64::max);
        // most recent day at the right edge
        let offset = n_max - days.len();
        for (j, &(day, weight)) in days.iter().enumerate() {
            let shade = if max > 0.0 { weight / max } else { 0.0 };
            let level = (255.0 * (1.0 - shade)).round() as u8;
            let _ = writeln!(
                s,
                "<rect x=\"{:.1}\" y=\"{yy:.1}\" width=\"{cell}\" height=\"{}\" fill=\"rgb({level},{level},255)\"><title>day {day}: {weight:.4}</title></rect>",
                label_w + cell * (offset + j) as f64,
                row_h - 3.0
            );
        }
    }
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">observation days (most recent right), darker = more attention</text>",
        w / 2.0,
        h - 10.0
    );
    s.push_str("</svg>\n");
    s
}
