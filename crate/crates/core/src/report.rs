//! Human-readable report and per-subject event timelines.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::detector::{DetectedEvent, Severity};
use crate::error::{Error, Result};
use crate::evaluation::Ratio;
use crate::loocv::EvalReport;
use crate::recording::{EventAnnotation, TimeSpan};

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |v| format!("{:.1}%", 100.0 * v))
}

fn ratio(r: Ratio) -> String {
    match r {
        Ratio::Finite(v) => format!("{v:.2}"),
        Ratio::Infinite => "inf".into(),
        Ratio::Undefined => "n/a".into(),
    }
}

pub fn render_markdown(report: &EvalReport) -> String {
    let mut s = String::new();
    let cfg = &report.config;
    let _ = writeln!(s, "# LOOCV report\n");
    let _ = writeln!(
        s,
        "{} subjects, K = {}, K' = {}.\n",
        report.subjects.len(),
        cfg.knn.k,
        cfg.knn.k_prime
    );

    let _ = writeln!(s, "## Event-by-event detection (median ± MAD)\n");
    let _ = writeln!(s, "| Stratum | n | PPV | Recall | F1 |");
    let _ = writeln!(s, "|---|---:|---:|---:|---:|");
    for (st, sum) in &report.strata {
        let _ = writeln!(
            s,
            "| {} | {} | {:.2} ± {:.2} | {:.2} ± {:.2} | {:.2} ± {:.2} |",
            st.label(),
            sum.subjects,
            sum.ppv.median,
            sum.ppv.mad,
            sum.recall.median,
            sum.recall.mad,
            sum.f1.median,
            sum.f1.mad
        );
    }

    let _ = writeln!(s, "\n## Severity confusion matrix (rows predicted, columns expert)\n");
    let _ = writeln!(s, "| | Normal | Mild | Moderate | Severe |");
    let _ = writeln!(s, "|---|---:|---:|---:|---:|");
    for sev in Severity::ALL {
        let row = &report.confusion.m[sev.index()];
        let _ = writeln!(
            s,
            "| {} | {} | {} | {} | {} |",
            sev.as_str(),
            row[0],
            row[1],
            row[2],
            row[3]
        );
    }
    let sm = &report.severity;
    let _ = writeln!(s, "\n4-class accuracy: {}\n", pct(Some(sm.accuracy)));
    let _ = writeln!(s, "| | Normal | Mild | Moderate | Severe |");
    let _ = writeln!(s, "|---|---:|---:|---:|---:|");
    let _ = writeln!(
        s,
        "| Sensitivity | {} |",
        sm.sensitivity.map(pct).join(" | ")
    );
    let _ = writeln!(s, "| PPV | {} |", sm.ppv.map(pct).join(" | "));

    let b = &report.binary;
    let _ = writeln!(s, "\n## Screening at REI ≥ 15\n");
    let _ = writeln!(s, "- TP {} / FP {} / TN {} / FN {}", b.tp, b.fp, b.tn, b.fn_);
    let _ = writeln!(s, "- Sensitivity {}", pct(b.sensitivity));
    let _ = writeln!(s, "- Specificity {}", pct(b.specificity));
    let _ = writeln!(s, "- Accuracy {}", pct(Some(b.accuracy)));
    let _ = writeln!(s, "- LR+ {}, LR- {}", ratio(b.lr_plus), ratio(b.lr_minus));
    if b.degenerate {
        let _ = writeln!(s, "- One expert group is empty; some statistics are undefined.");
    }

    let _ = writeln!(s, "\n## Subjects\n");
    let _ = writeln!(
        s,
        "| Subject | Expert | Predicted | Expert rate | REI | TP | FP | FN | PPV | Recall | F1 |"
    );
    let _ = writeln!(s, "|---|---|---|---:|---:|---:|---:|---:|---:|---:|---:|");
    for r in &report.subjects {
        let _ = writeln!(
            s,
            "| {} | {} | {} | {:.1} | {:.1} | {} | {} | {} | {:.2} | {:.2} | {:.2} |",
            r.id,
            r.expert_severity.as_str(),
            r.predicted_severity.as_str(),
            r.expert_rate,
            r.rei,
            r.tp,
            r.fp,
            r.fn_,
            r.ppv,
            r.recall,
            r.f1
        );
    }
    s
}

/// start, end, fill colour
type Bar<'a> = (f64, f64, &'a str);

/// SVG timeline with expert annotations above detections.
pub fn timeline_svg(
    id: &str,
    duration_s: f64,
    annotations: &[EventAnnotation],
    detected: &[DetectedEvent],
) -> String {
    const WIDTH: f64 = 1200.0;
    const LEFT: f64 = 90.0;
    const RIGHT: f64 = 20.0;
    let scale = (WIDTH - LEFT - RIGHT) / duration_s.max(1.0);
    let x = |t: f64| LEFT + t * scale;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="130" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<text x="{LEFT}" y="16">{id}</text>"#);
    let rows: [(&str, f64, Vec<Bar>); 2] = [
        (
            "expert",
            30.0,
            annotations
                .iter()
                .map(|a| (a.start_s(), a.end_s(), "#4a6fa5"))
                .collect(),
        ),
        (
            "detected",
            70.0,
            detected
                .iter()
                .map(|d| {
                    let c = match d.source {
                        crate::detector::EventSource::Svm => "#c0504d",
                        crate::detector::EventSource::DesatCorrection => "#e39a3b",
                    };
                    (d.start_s, d.end_s(), c)
                })
                .collect(),
        ),
    ];
    for (label, y, spans) in rows.iter() {
        let _ = writeln!(s, r#"<text x="4" y="{}">{label}</text>"#, y + 16.0);
        let _ = writeln!(
            s,
            r##"<rect x="{LEFT}" y="{y}" width="{:.1}" height="24" fill="#f2f2f2"/>"##,
            WIDTH - LEFT - RIGHT
        );
        for (a, b, color) in spans {
            let _ = writeln!(
                s,
                r#"<rect x="{:.2}" y="{y}" width="{:.2}" height="24" fill="{color}"/>"#,
                x(*a),
                ((b - a) * scale).max(0.5)
            );
        }
    }
    let step = if duration_s > 4.0 * 3600.0 { 3600.0 } else { 300.0 };
    let mut t = 0.0;
    while t <= duration_s {
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="120" text-anchor="middle">{}</text>"#,
            x(t),
            format_clock(t)
        );
        t += step;
    }
    s.push_str("</svg>\n");
    s
}

fn format_clock(t: f64) -> String {
    let m = (t / 60.0).round() as u64;
    format!("{}:{:02}", m / 60, m % 60)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
