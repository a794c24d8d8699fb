//! Minimal SVG line plots of raw instance segments.

use std::fmt::Write;

use crate::bags::{Bag, RAW_LEN};
use crate::dsp::SEGMENT_LEN;
use crate::mil::{AttentionReport, KeyInstance};

const WIDTH: f64 = 800.0;
const PANEL: f64 = 130.0;
const MARGIN: f64 = 24.0;
const COLORS: [&str; 3] = ["#1f77b4", "#d62728", "#2ca02c"];

fn panel(out: &mut String, bag: &Bag, k: &KeyInstance, title: &str, y0: f64) {
    let raw = &bag.instances[k.index].raw;
    let peak = raw.iter().fold(0.0f32, |m, v| m.max(v.abs())).max(1e-6) as f64;
    let mid = y0 + MARGIN + (PANEL - MARGIN) / 2.0;
    let half = (PANEL - MARGIN) / 2.0 - 4.0;
    let _ = writeln!(
        out,
        r#"<text x="4" y="{:.1}" font-family="monospace" font-size="12">{title} a={:.6} {} @{}</text>"#,
        y0 + 16.0,
        k.weight,
        xml_escape(&k.session_id),
        k.offset
    );
    for (axis, color) in COLORS.iter().enumerate() {
        let pts: Vec<String> = raw[axis * SEGMENT_LEN..(axis + 1) * SEGMENT_LEN]
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let x = i as f64 * WIDTH / (SEGMENT_LEN - 1) as f64;
                format!("{x:.1},{:.1}", mid - v as f64 / peak * half)
            })
            .collect();
        let _ =
            writeln!(out, r#"<polyline fill="none" stroke="{color}" stroke-width="0.8" points="{}"/>"#, pts.join(" "));
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// One panel per reported instance: the top ones first, then the bottom ones.
pub fn attention_svg(bag: &Bag, report: &AttentionReport) -> String {
    debug_assert_eq!(bag.instances.first().map_or(RAW_LEN, |i| i.raw.len()), RAW_LEN);
    let panels = report.top.len() + report.bottom.len();
    let height = panels as f64 * PANEL;
    let mut out = format!(
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}">"#
    );
    out.push('\n');
    let labelled = report
        .top
        .iter()
        .enumerate()
        .map(|(i, k)| (k, format!("top {}", i + 1)))
        .chain(report.bottom.iter().enumerate().map(|(i, k)| (k, format!("bottom {}", i + 1))));
    for (row, (k, title)) in labelled.enumerate() {
        out.push_str("<g>\n");
        panel(&mut out, bag, k, &title, row as f64 * PANEL);
        out.push_str("</g>\n");
    }
    out.push_str("</svg>\n");
    out
}
