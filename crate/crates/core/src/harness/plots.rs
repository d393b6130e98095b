//! Static SVG bar and scatter charts. Output depends only on the inputs.

use std::fmt::Write;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 420.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 150.0;
const MARGIN_T: f64 = 50.0;
const MARGIN_B: f64 = 90.0;
const PALETTE: [&str; 6] = [
    "#4C72B0", "#DD8452", "#55A868", "#C44E52", "#8172B3", "#937860",
];

pub struct Series {
    pub name: String,
    pub values: Vec<f64>,
    /// Half-length of the error bar per category, if any.
    pub errors: Option<Vec<f64>>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
}

fn y_axis(out: &mut String, lo: f64, hi: f64, label: &str) -> impl Fn(f64) -> f64 {
    let plot_h = HEIGHT - MARGIN_T - MARGIN_B;
    let bottom = HEIGHT - MARGIN_B;
    let scale = move |v: f64| bottom - (v - lo) / (hi - lo) * plot_h;
    for k in 0..=5 {
        let v = lo + (hi - lo) * k as f64 / 5.0;
        let y = scale(v);
        let _ = writeln!(
            out,
            r##"<line x1="{MARGIN_L}" x2="{:.1}" y1="{y:.1}" y2="{y:.1}" stroke="#dddddd"/>"##,
            WIDTH - MARGIN_R
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{v:.2}</text>"#,
            MARGIN_L - 6.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        out,
        r#"<text transform="translate(18 {:.1}) rotate(-90)" text-anchor="middle">{}</text>"#,
        MARGIN_T + plot_h / 2.0,
        escape(label)
    );
    scale
}

fn legend(out: &mut String, names: &[&str]) {
    for (i, n) in names.iter().enumerate() {
        let y = MARGIN_T + 10.0 + 20.0 * i as f64;
        let x = WIDTH - MARGIN_R + 15.0;
        let _ = writeln!(
            out,
            r#"<rect x="{x:.1}" y="{:.1}" width="12" height="12" fill="{}"/>"#,
            y - 10.0,
            PALETTE[i % PALETTE.len()]
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{y:.1}">{}</text>"#,
            x + 18.0,
            escape(n)
        );
    }
}

/// Grouped bars over `categories`, values expected in [-1, 1].
pub fn bar_chart(title: &str, y_label: &str, categories: &[String], series: &[Series]) -> String {
    let mut out = String::new();
    header(&mut out, title);
    let lo = series
        .iter()
        .flat_map(|s| s.values.iter())
        .fold(0.0f64, |a, &v| a.min(v))
        .min(0.0)
        .floor();
    let y = y_axis(&mut out, lo, 1.0, y_label);
    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    let group_w = plot_w / categories.len().max(1) as f64;
    let bar_w = group_w * 0.8 / series.len().max(1) as f64;
    for (ci, cat) in categories.iter().enumerate() {
        let gx = MARGIN_L + group_w * ci as f64 + group_w * 0.1;
        for (si, s) in series.iter().enumerate() {
            let v = s.values.get(ci).copied().unwrap_or(0.0);
            let x = gx + bar_w * si as f64;
            let (top, bottom) = (y(v.max(0.0)), y(v.min(0.0)));
            let _ = writeln!(
                out,
                r#"<rect x="{x:.1}" y="{top:.1}" width="{bar_w:.1}" height="{:.1}" fill="{}"><title>{} {}: {v:.4}</title></rect>"#,
                bottom - top,
                PALETTE[si % PALETTE.len()],
                escape(cat),
                escape(&s.name)
            );
            if let Some(e) = s.errors.as_ref().and_then(|e| e.get(ci)) {
                let cx = x + bar_w / 2.0;
                let _ = writeln!(
                    out,
                    r##"<line x1="{cx:.1}" x2="{cx:.1}" y1="{:.1}" y2="{:.1}" stroke="#222222"/>"##,
                    y(v + e),
                    y(v - e)
                );
            }
        }
        let lx = gx + group_w * 0.4;
        let _ = writeln!(
            out,
            r#"<text transform="translate({lx:.1} {:.1}) rotate(-30)" text-anchor="end">{}</text>"#,
            HEIGHT - MARGIN_B + 16.0,
            escape(cat)
        );
    }
    let names: Vec<&str> = series.iter().map(|s| s.name.as_str()).collect();
    legend(&mut out, &names);
    out.push_str("</svg>\n");
    out
}

/// Labelled scatter plot with axes fitted to the data.
pub fn scatter(title: &str, x_label: &str, y_label: &str, points: &[(String, f64, f64)]) -> String {
    let mut out = String::new();
    header(&mut out, title);
    let span = |vals: Vec<f64>| {
        let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !lo.is_finite() {
            (0.0, 1.0)
        } else if hi - lo < 1e-12 {
            (lo - 0.5, hi + 0.5)
        } else {
            let pad = (hi - lo) * 0.08;
            (lo - pad, hi + pad)
        }
    };
    let (x0, x1) = span(points.iter().map(|p| p.1).collect());
    let (y0, y1) = span(points.iter().map(|p| p.2).collect());
    let y = y_axis(&mut out, y0, y1, y_label);
    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    let x = |v: f64| MARGIN_L + (v - x0) / (x1 - x0) * plot_w;
    for k in 0..=5 {
        let v = x0 + (x1 - x0) * k as f64 / 5.0;
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{v:.2}</text>"#,
            x(v),
            HEIGHT - MARGIN_B + 18.0
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        MARGIN_L + plot_w / 2.0,
        HEIGHT - MARGIN_B + 45.0,
        escape(x_label)
    );
    for (i, (label, px, py)) in points.iter().enumerate() {
        let (cx, cy) = (x(*px), y(*py));
        let _ = writeln!(
            out,
            r#"<circle cx="{cx:.1}" cy="{cy:.1}" r="5" fill="{}"><title>{}: ({px:.4}, {py:.4})</title></circle>"#,
            PALETTE[i % PALETTE.len()],
            escape(label)
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-size="10">{}</text>"#,
            cx + 7.0,
            cy - 7.0,
            escape(label)
        );
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bar_chart_is_deterministic_and_well_formed() {
        let cats = vec!["mscn".to_string(), "a<b".to_string()];
        let series = vec![Series {
            name: "accuracy".into(),
            values: vec![0.9, 0.5],
            errors: Some(vec![0.01, 0.0]),
        }];
        let a = bar_chart("t", "score", &cats, &series);
        let b = bar_chart("t", "score", &cats, &series);
        assert_eq!(a, b);
        assert!(a.starts_with("<svg") && a.ends_with("</svg>\n"));
        assert!(a.contains("a&lt;b"));
        assert_eq!(a.matches("<rect x=").count(), 2 + 1);
    }

    #[test]
    fn scatter_handles_single_point() {
        let s = scatter("t", "x", "y", &[("p".into(), 1.0, 1.0)]);
        assert!(s.contains("<circle"));
        assert!(!s.contains("NaN"));
    }
}
