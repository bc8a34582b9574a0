//! Minimal SVG line charts for training curves.

use std::fmt::Write as _;

use tumorscope::cnn::EpochLog;

const PANEL_W: f64 = 380.0;
const PANEL_H: f64 = 260.0;
const MARGIN: f64 = 45.0;

struct Series<'a> {
    label: &'a str,
    color: &'a str,
    values: Vec<f64>,
}

fn panel(out: &mut String, x0: f64, title: &str, series: &[Series], fixed_max: Option<f64>) {
    let n = series.iter().map(|s| s.values.len()).max().unwrap_or(0);
    let max = fixed_max.unwrap_or_else(|| {
        series
            .iter()
            .flat_map(|s| s.values.iter().copied())
            .filter(|v| v.is_finite())
            .fold(0.0, f64::max)
            .max(1e-9)
    });
    let (left, top) = (x0 + MARGIN, MARGIN);
    let (w, h) = (PANEL_W - MARGIN - 10.0, PANEL_H - 2.0 * MARGIN);
    let px = |i: usize| left + if n > 1 { w * i as f64 / (n - 1) as f64 } else { w / 2.0 };
    let py = |v: f64| top + h - h * (v / max).clamp(0.0, 1.0);

    let _ = writeln!(out, r#"<text x="{:.1}" y="20" font-size="14" text-anchor="middle">{title}</text>"#, left + w / 2.0);
    let _ = writeln!(
        out,
        r#"<polyline points="{left:.1},{top:.1} {left:.1},{:.1} {:.1},{:.1}" fill="none" stroke="black"/>"#,
        top + h,
        left + w,
        top + h
    );
    for t in 0..=4 {
        let v = max * t as f64 / 4.0;
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-size="10" text-anchor="end">{v:.2}</text>"#,
            left - 4.0,
            py(v) + 3.0
        );
    }
    for i in 0..n {
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-size="10" text-anchor="middle">{}</text>"#,
            px(i),
            top + h + 14.0,
            i + 1
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="middle">epoch</text>"#,
        left + w / 2.0,
        top + h + 30.0
    );
    for (k, s) in series.iter().enumerate() {
        let points: Vec<String> = s.values.iter().enumerate().map(|(i, &v)| format!("{:.1},{:.1}", px(i), py(v))).collect();
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="2"/>"#,
            points.join(" "),
            s.color
        );
        let ly = top + 12.0 + 14.0 * k as f64;
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{ly:.1}" font-size="11" fill="{}">{}</text>"#,
            left + w - 70.0,
            s.color,
            s.label
        );
    }
}

/// Accuracy and loss curves side by side.
pub fn curves_svg(logs: &[EpochLog]) -> String {
    let mut out = format!(
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" viewBox="0 0 {} {}">"#,
        2.0 * PANEL_W,
        PANEL_H,
        2.0 * PANEL_W,
        PANEL_H
    );
    out.push('\n');
    out.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    let pick = |f: fn(&EpochLog) -> f64| logs.iter().map(f).collect::<Vec<_>>();
    panel(
        &mut out,
        0.0,
        "Accuracy",
        &[
            Series { label: "train", color: "#1f77b4", values: pick(|l| l.train_acc) },
            Series { label: "val", color: "#d62728", values: pick(|l| l.val_acc) },
        ],
        Some(1.0),
    );
    panel(
        &mut out,
        PANEL_W,
        "Loss",
        &[
            Series { label: "train", color: "#1f77b4", values: pick(|l| l.train_loss) },
            Series { label: "val", color: "#d62728", values: pick(|l| l.val_loss) },
        ],
        None,
    );
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_polyline_per_series_plus_axes() {
        let logs: Vec<EpochLog> = (1..=3)
            .map(|e| EpochLog {
                epoch: e,
                train_loss: 1.0 / e as f64,
                train_acc: 0.5,
                val_loss: 0.9,
                val_acc: 0.6,
            })
            .collect();
        let svg = curves_svg(&logs);
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<polyline").count(), 6);
    }
}
