//! Plain-text SVG rendering of a force plot.
//!
//! Bars are laid out left to right as a cumulative walk from the base value
//! to the prediction. Each `<rect>` carries `data-start`/`data-end` so the
//! walk can be recovered from the file without rendering it.

use std::fmt::Write as _;

use crate::shap::{force_plot_data, Attribution, Direction};

const WIDTH: f64 = 960.0;
const MARGIN: f64 = 40.0;
const BAR_Y: f64 = 50.0;
const BAR_H: f64 = 24.0;
const POSITIVE: &str = "#ff0051";
const NEGATIVE: &str = "#008bfb";

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

pub fn force_plot_svg(attr: &Attribution) -> String {
    let bars = force_plot_data(attr);
    let mut points = vec![attr.base_value];
    let mut at = attr.base_value;
    for b in &bars {
        at += b.phi;
        points.push(at);
    }
    let lo = points.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = points.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let x = |v: f64| MARGIN + (v - lo) / span * (WIDTH - 2.0 * MARGIN);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="160" viewBox="0 0 {WIDTH} 160" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(
        svg,
        r#"  <title>force plot for {}</title>"#,
        escape(&attr.instance_id)
    );
    let _ = writeln!(
        svg,
        r##"  <line x1="{MARGIN}" y1="{y}" x2="{x2}" y2="{y}" stroke="#999"/>"##,
        y = BAR_Y + BAR_H + 10.0,
        x2 = WIDTH - MARGIN
    );
    let mut start = attr.base_value;
    for (i, b) in bars.iter().enumerate() {
        let end = start + b.phi;
        let (color, sign) = match b.direction {
            Direction::Positive => (POSITIVE, "positive"),
            Direction::Negative => (NEGATIVE, "negative"),
        };
        let (x0, x1) = (x(start.min(end)), x(start.max(end)));
        let _ = writeln!(
            svg,
            r#"  <rect class="bar {sign}" x="{x0:.3}" y="{BAR_Y}" width="{w:.3}" height="{BAR_H}" fill="{color}" data-feature="{f}" data-value="{v}" data-phi="{phi}" data-start="{start}" data-end="{end}"/>"#,
            w = (x1 - x0).max(0.5),
            f = escape(&b.feature),
            v = b.value,
            phi = b.phi,
        );
        // label only the largest contributions to avoid clutter
        if i < 8 {
            let _ = writeln!(
                svg,
                r#"  <text x="{tx:.3}" y="{ty}" text-anchor="middle" fill="{color}">{f}</text>"#,
                tx = (x0 + x1) / 2.0,
                ty = BAR_Y + BAR_H + 26.0 + (i % 2) as f64 * 14.0,
                f = escape(&b.feature),
            );
        }
        start = end;
    }
    for (id, label, value, y) in [
        ("base", "base value", attr.base_value, 20.0),
        ("prediction", "f(x)", attr.prediction, 36.0),
    ] {
        let _ = writeln!(
            svg,
            r#"  <text id="{id}" x="{px:.3}" y="{y}" text-anchor="middle" data-value="{value}">{label} = {value:.4}</text>"#,
            px = x(value),
        );
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shap::{FeatureAttribution, ShapMethod};

    #[test]
    fn bars_chain_from_base_to_prediction() {
        let attr = Attribution {
            schema_version: 1,
            instance_id: "x<1>".into(),
            base_value: 0.5,
            prediction: 0.9,
            method: ShapMethod::Exact,
            n_samples: 4,
            efficiency_adjusted: false,
            phi: vec![
                FeatureAttribution {
                    feature: "a&b".into(),
                    value: 1.0,
                    phi: 0.5,
                    std_error: None,
                },
                FeatureAttribution {
                    feature: "c".into(),
                    value: 0.0,
                    phi: -0.1,
                    std_error: None,
                },
            ],
        };
        let svg = force_plot_svg(&attr);
        assert!(svg.contains(r#"data-feature="a&amp;b""#));
        assert!(svg.contains("x&lt;1&gt;"));
        assert_eq!(svg.matches("<rect").count(), 2);
        assert!(svg.contains(r#"data-start="0.5" data-end="1""#));
        assert!(svg.contains(r#"id="prediction""#));
    }
}
