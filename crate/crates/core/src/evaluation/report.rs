use std::fmt::Write;

use super::{EddCategory, EddReport, PrCurve};
use crate::dataset::class_name;

/// One row of the per-class table.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassSummary {
    pub class: usize,
    pub frames: usize,
    pub accuracy: Option<f64>,
    pub pr_auc: Option<f64>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

pub fn accuracy_csv(rows: &[ClassSummary]) -> String {
    let mut out = String::from("class,name,frames,accuracy,pr_auc\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.class,
            class_name(r.class),
            r.frames,
            opt(r.accuracy),
            opt(r.pr_auc)
        );
    }
    out
}

pub fn edd_csv(report: &EddReport) -> String {
    let total = report.total().max(1) as f64;
    let mut out = String::from("category,frames,fraction,serious\n");
    for c in std::iter::once(EddCategory::Correct).chain(EddCategory::ERRORS) {
        let n = report.count(c);
        let _ = writeln!(
            out,
            "{},{},{:.6},{}",
            c.name(),
            n,
            n as f64 / total,
            c.is_serious()
        );
    }
    let _ = writeln!(
        out,
        "serious_total,{},{:.6},true",
        report.serious(),
        report.serious_fraction()
    );
    out
}

pub fn pr_csv(curves: &[PrCurve]) -> String {
    let mut out = String::from("class,recall,precision\n");
    for c in curves {
        for &(r, p) in &c.points {
            let _ = writeln!(out, "{},{r:.6},{p:.6}", c.class);
        }
    }
    out
}

const PALETTE: [&str; 8] = [
    "#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948", "#b07aa1", "#9c755f",
];

/// Horizontal bar chart of error shares; boundary errors above the dashed
/// serious-error line, substantive errors below it.
pub fn edd_svg(report: &EddReport) -> String {
    let total = report.total().max(1) as f64;
    let (left, bar_w, row_h) = (190.0, 360.0, 26.0);
    let boundary: Vec<EddCategory> = EddCategory::ERRORS
        .iter()
        .copied()
        .filter(|c| !c.is_serious())
        .collect();
    let serious: Vec<EddCategory> = EddCategory::ERRORS
        .iter()
        .copied()
        .filter(|c| c.is_serious())
        .collect();
    let height = 60.0 + row_h * (EddCategory::ERRORS.len() as f64 + 1.0);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="640" height="{height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        s,
        r#"<text x="10" y="20" font-size="14">Error distribution ({} frames, serious {:.1}%)</text>"#,
        report.total(),
        100.0 * report.serious_fraction()
    );
    let mut y = 36.0;
    let draw = |s: &mut String, c: EddCategory, y: f64| {
        let frac = report.count(c) as f64 / total;
        let color = if c.is_serious() { "#e15759" } else { "#4e79a7" };
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end">{}</text><rect x="{left}" y="{y}" width="{:.2}" height="{}" fill="{color}"/><text x="{:.2}" y="{}">{:.1}%</text>"#,
            left - 8.0,
            y + 15.0,
            c.name(),
            bar_w * frac,
            row_h - 6.0,
            left + bar_w * frac + 6.0,
            y + 15.0,
            100.0 * frac
        );
    };
    for &c in &boundary {
        draw(&mut s, c, y);
        y += row_h;
    }
    let _ = writeln!(
        s,
        r##"<line x1="10" y1="{0}" x2="630" y2="{0}" stroke="#333" stroke-dasharray="6,4"/><text x="630" y="{1}" text-anchor="end" fill="#333">serious error line</text>"##,
        y + row_h / 2.0,
        y + row_h / 2.0 - 4.0
    );
    y += row_h;
    for &c in &serious {
        draw(&mut s, c, y);
        y += row_h;
    }
    s.push_str("</svg>\n");
    s
}

/// Precision-recall curves of all classes in one plot.
pub fn pr_svg(curves: &[PrCurve]) -> String {
    let (x0, y0, size) = (50.0, 30.0, 360.0);
    let px = |r: f64| x0 + r * size;
    let py = |p: f64| y0 + (1.0 - p) * size;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="640" height="440" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        s,
        r##"<rect x="{x0}" y="{y0}" width="{size}" height="{size}" fill="none" stroke="#333"/><text x="{}" y="{}" text-anchor="middle">recall</text><text x="14" y="{}" transform="rotate(-90 14 {})" text-anchor="middle">precision</text>"##,
        x0 + size / 2.0,
        y0 + size + 30.0,
        y0 + size / 2.0,
        y0 + size / 2.0
    );
    for (i, c) in curves.iter().enumerate() {
        let color = PALETTE[c.class % PALETTE.len()];
        let mut path = String::new();
        let mut prev_r = 0.0;
        for &(r, p) in &c.points {
            let _ = write!(
                path,
                "{:.2},{:.2} {:.2},{:.2} ",
                px(prev_r),
                py(p),
                px(r),
                py(p)
            );
            prev_r = r;
        }
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            path.trim_end()
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" fill="{color}">{} (AUC {:.3})</text>"#,
            x0 + size + 16.0,
            y0 + 14.0 + 18.0 * i as f64,
            class_name(c.class),
            c.auc
        );
    }
    s.push_str("</svg>\n");
    s
}
