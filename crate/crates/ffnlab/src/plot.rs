//! Hand-rolled SVG charts: standardized importance bars with the mid-depth
//! marker, and RI-versus-ratio lines per placement position.

use ffnlab_core::analysis::ImportanceVector;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 56.0;

fn svg_open(title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         fill=\"white\"/>\n<text x=\"{}\" y=\"24\" text-anchor=\"middle\" \
         font-family=\"sans-serif\" font-size=\"15\">{title}</text>\n",
        WIDTH / 2.0
    )
}

fn y_scale(min: f64, max: f64) -> impl Fn(f64) -> f64 {
    let span = (max - min).max(1e-12);
    move |v: f64| HEIGHT - MARGIN - (v - min) / span * (HEIGHT - 2.0 * MARGIN)
}

/// Bar chart of standardized layer importance. Layers without a score are
/// drawn as gaps; a dashed vertical line marks the L/2 boundary.
pub fn importance_bars(iv: &ImportanceVector, title: &str) -> String {
    let n = iv.layers.len();
    let values: Vec<f64> = iv.layers.iter().filter_map(|l| l.standardized).collect();
    let lo = values.iter().cloned().fold(0.0f64, f64::min).min(-0.1) * 1.15;
    let hi = values.iter().cloned().fold(0.0f64, f64::max).max(0.1) * 1.15;
    let sy = y_scale(lo, hi);
    let plot_w = WIDTH - 2.0 * MARGIN;
    let slot = plot_w / n as f64;
    let bar_w = slot * 0.72;

    let mut svg = svg_open(title);
    let zero_y = sy(0.0);
    svg.push_str(&format!(
        "<line x1=\"{MARGIN}\" y1=\"{zero_y}\" x2=\"{}\" y2=\"{zero_y}\" stroke=\"#555\" \
         stroke-width=\"1\"/>\n",
        WIDTH - MARGIN
    ));
    for layer in &iv.layers {
        let Some(v) = layer.standardized else { continue };
        let x = MARGIN + (layer.layer as f64 - 1.0) * slot + (slot - bar_w) / 2.0;
        let (top, h) = if v >= 0.0 { (sy(v), zero_y - sy(v)) } else { (zero_y, sy(v) - zero_y) };
        let fill = if v >= 0.0 { "#3b6fd4" } else { "#d44a3b" };
        svg.push_str(&format!(
            "<rect x=\"{x:.2}\" y=\"{top:.2}\" width=\"{bar_w:.2}\" height=\"{h:.2}\" \
             fill=\"{fill}\"/>\n"
        ));
        svg.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" \
             font-size=\"10\">{}</text>\n",
            x + bar_w / 2.0,
            HEIGHT - MARGIN + 14.0,
            layer.layer
        ));
    }
    // Mid-depth marker between layers n/2 and n/2 + 1.
    let mid_x = MARGIN + (n as f64 / 2.0) * slot;
    svg.push_str(&format!(
        "<line x1=\"{mid_x:.2}\" y1=\"{}\" x2=\"{mid_x:.2}\" y2=\"{}\" stroke=\"black\" \
         stroke-dasharray=\"5,4\" stroke-width=\"1.5\"/>\n",
        MARGIN,
        HEIGHT - MARGIN
    ));
    svg.push_str("</svg>\n");
    svg
}

/// One line per placement position over the swept ratios.
pub fn ri_lines(task: &str, series: &[(String, Vec<(u32, f64)>)]) -> String {
    let mut lo = 0.0f64;
    let mut hi = 0.0f64;
    for (_, points) in series {
        for &(_, ri) in points {
            lo = lo.min(ri);
            hi = hi.max(ri);
        }
    }
    lo = lo * 1.15 - 0.5;
    hi = hi * 1.15 + 0.5;
    let sy = y_scale(lo, hi);
    let sx = |ratio: u32| MARGIN + (ratio as f64 - 10.0) / 90.0 * (WIDTH - 2.0 * MARGIN);
    let colors = ["#3b6fd4", "#2c9a4b", "#d44a3b", "#8a56c9"];

    let mut svg = svg_open(&format!("relative improvement vs ratio — {task}"));
    let zero_y = sy(0.0);
    svg.push_str(&format!(
        "<line x1=\"{MARGIN}\" y1=\"{zero_y:.2}\" x2=\"{}\" y2=\"{zero_y:.2}\" stroke=\"#c33\" \
         stroke-dasharray=\"3,3\"/>\n",
        WIDTH - MARGIN
    ));
    for ratio in [10u32, 30, 50, 70, 90, 100] {
        let x = sx(ratio);
        svg.push_str(&format!(
            "<text x=\"{x:.2}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" \
             font-size=\"10\">{ratio}%</text>\n",
            HEIGHT - MARGIN + 14.0
        ));
    }
    for (i, (name, points)) in series.iter().enumerate() {
        let color = colors[i % colors.len()];
        let path: Vec<String> =
            points.iter().map(|&(r, ri)| format!("{:.2},{:.2}", sx(r), sy(ri))).collect();
        if points.len() > 1 {
            svg.push_str(&format!(
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\"/>\n",
                path.join(" ")
            ));
        }
        for &(r, ri) in points {
            svg.push_str(&format!(
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{color}\"/>\n",
                sx(r),
                sy(ri)
            ));
        }
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" \
             fill=\"{color}\">{name}</text>\n",
            WIDTH - MARGIN + 6.0,
            MARGIN + 16.0 * i as f64
        ));
    }
    svg.push_str("</svg>\n");
    svg
}
