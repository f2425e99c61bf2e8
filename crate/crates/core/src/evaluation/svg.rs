//! Self-contained SVG line chart of misclassification curves.

use crate::activity::{TimeAxis, HORIZON_MINUTES, N_UNITS};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 50.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#7f7f7f"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// x: minutes before departure (180 on the left), y: misclassification rate.
/// Each unit is plotted at the upper end of its span; absent units break
/// nothing since curves start at their first predicted unit.
pub fn render_curves(title: &str, series: &[(String, Vec<Option<f64>>)]) -> String {
    let axis = TimeAxis::STANDARD;
    let plot_w = WIDTH - 2.0 * MARGIN;
    let plot_h = HEIGHT - 2.0 * MARGIN;
    let x_of = |minutes: f64| MARGIN + (1.0 - minutes / f64::from(HORIZON_MINUTES)) * plot_w;
    let y_of = |rate: f64| HEIGHT - MARGIN - rate * plot_h;

    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    );
    out.push_str(&format!(
        "<text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">{}</text>\n",
        WIDTH / 2.0,
        escape(title)
    ));
    out.push_str(&format!(
        "<rect x=\"{MARGIN}\" y=\"{MARGIN}\" width=\"{plot_w}\" height=\"{plot_h}\" fill=\"none\" stroke=\"#000\"/>\n"
    ));
    for minutes in (0..=HORIZON_MINUTES).step_by(30) {
        let x = x_of(f64::from(minutes));
        out.push_str(&format!(
            "<text x=\"{x:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">{minutes}</text>\n",
            HEIGHT - MARGIN + 14.0
        ));
    }
    for tenth in 0..=10 {
        let rate = f64::from(tenth) / 10.0;
        out.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">{rate:.1}</text>\n",
            MARGIN - 4.0,
            y_of(rate) + 3.0
        ));
    }
    out.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">minutes before departure</text>\n",
        WIDTH / 2.0,
        HEIGHT - 12.0
    ));
    for (i, (name, curve)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let points: Vec<String> = (0..N_UNITS.min(curve.len()))
            .filter_map(|k| {
                curve[k].map(|r| {
                    format!("{:.1},{:.1}", x_of(f64::from(axis.minutes_before_hi(k))), y_of(r))
                })
            })
            .collect();
        out.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            points.join(" ")
        ));
        let ly = MARGIN + 14.0 + 14.0 * i as f64;
        out.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{ly:.1}\" font-family=\"sans-serif\" font-size=\"11\" fill=\"{color}\">{}</text>\n",
            MARGIN + 8.0,
            escape(name)
        ));
    }
    out.push_str("</svg>\n");
    out
}
