//! Minimal SVG line-chart writer. Output contains no timestamps or random
//! identifiers, so equal inputs render byte-identical files.

/// One polyline with a legend label.
#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

/// A single-panel line chart. When `y_min`/`y_max` are None the axis fits
/// the data with a small margin.
#[derive(Debug, Clone)]
pub struct LineChart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    pub y_min: Option<f64>,
    pub y_max: Option<f64>,
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN_LEFT: f64 = 62.0;
const MARGIN_RIGHT: f64 = 18.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 48.0;
const PALETTE: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

impl LineChart {
    pub fn render(&self) -> String {
        let (x_lo, x_hi) = self.x_range();
        let (y_lo, y_hi) = self.y_range();
        let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
        let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
        let to_px = |x: f64, y: f64| {
            let px = MARGIN_LEFT + (x - x_lo) / (x_hi - x_lo) * plot_w;
            let py = MARGIN_TOP + (y_hi - y) / (y_hi - y_lo) * plot_h;
            (px, py)
        };

        let mut out = String::new();
        out.push_str(&format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
             viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
        ));
        out.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
        out.push_str(&format!(
            "<text x=\"{:.1}\" y=\"22\" font-family=\"sans-serif\" font-size=\"15\" \
             text-anchor=\"middle\">{}</text>\n",
            WIDTH / 2.0,
            escape(&self.title)
        ));

        for y in ticks(y_lo, y_hi, 5) {
            let (_, py) = to_px(x_lo, y);
            out.push_str(&format!(
                "<line x1=\"{:.1}\" y1=\"{py:.1}\" x2=\"{:.1}\" y2=\"{py:.1}\" \
                 stroke=\"#dddddd\" stroke-width=\"1\"/>\n",
                MARGIN_LEFT,
                WIDTH - MARGIN_RIGHT
            ));
            out.push_str(&format!(
                "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\" \
                 text-anchor=\"end\">{}</text>\n",
                MARGIN_LEFT - 6.0,
                py + 4.0,
                fmt_tick(y)
            ));
        }
        for x in ticks(x_lo, x_hi, 8) {
            let (px, _) = to_px(x, y_lo);
            out.push_str(&format!(
                "<line x1=\"{px:.1}\" y1=\"{:.1}\" x2=\"{px:.1}\" y2=\"{:.1}\" \
                 stroke=\"#dddddd\" stroke-width=\"1\"/>\n",
                MARGIN_TOP,
                HEIGHT - MARGIN_BOTTOM
            ));
            out.push_str(&format!(
                "<text x=\"{px:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\" \
                 text-anchor=\"middle\">{}</text>\n",
                HEIGHT - MARGIN_BOTTOM + 16.0,
                fmt_tick(x)
            ));
        }

        out.push_str(&format!(
            "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"{plot_w:.1}\" height=\"{plot_h:.1}\" \
             fill=\"none\" stroke=\"#444444\" stroke-width=\"1\"/>\n",
            MARGIN_LEFT, MARGIN_TOP
        ));
        out.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\" \
             text-anchor=\"middle\">{}</text>\n",
            MARGIN_LEFT + plot_w / 2.0,
            HEIGHT - 10.0,
            escape(&self.x_label)
        ));
        out.push_str(&format!(
            "<text x=\"16\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\" \
             text-anchor=\"middle\" transform=\"rotate(-90 16 {:.1})\">{}</text>\n",
            MARGIN_TOP + plot_h / 2.0,
            MARGIN_TOP + plot_h / 2.0,
            escape(&self.y_label)
        ));

        for (i, series) in self.series.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            let points: Vec<String> = series
                .points
                .iter()
                .map(|&(x, y)| {
                    let (px, py) = to_px(x, y);
                    format!("{px:.2},{py:.2}")
                })
                .collect();
            out.push_str(&format!(
                "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.8\" \
                 points=\"{}\"/>\n",
                points.join(" ")
            ));
            let ly = MARGIN_TOP + 14.0 + 16.0 * i as f64;
            let lx = WIDTH - MARGIN_RIGHT - 150.0;
            out.push_str(&format!(
                "<line x1=\"{lx:.1}\" y1=\"{ly:.1}\" x2=\"{:.1}\" y2=\"{ly:.1}\" \
                 stroke=\"{color}\" stroke-width=\"1.8\"/>\n",
                lx + 22.0
            ));
            out.push_str(&format!(
                "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" \
                 font-size=\"11\">{}</text>\n",
                lx + 28.0,
                ly + 4.0,
                escape(&series.label)
            ));
        }

        out.push_str("</svg>\n");
        out
    }

    fn x_range(&self) -> (f64, f64) {
        let xs = self.series.iter().flat_map(|s| s.points.iter().map(|p| p.0));
        span(xs)
    }

    fn y_range(&self) -> (f64, f64) {
        if let (Some(lo), Some(hi)) = (self.y_min, self.y_max) {
            return (lo, hi);
        }
        let ys = self.series.iter().flat_map(|s| s.points.iter().map(|p| p.1));
        let (lo, hi) = span(ys);
        let pad = (hi - lo) * 0.05;
        (
            self.y_min.unwrap_or(lo - pad),
            self.y_max.unwrap_or(hi + pad),
        )
    }
}

fn span(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    if lo == hi {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

/// Round tick positions: a 1/2/5 step scaled to cover the range with at most
/// `max_ticks` marks.
fn ticks(lo: f64, hi: f64, max_ticks: usize) -> Vec<f64> {
    let raw_step = (hi - lo) / max_ticks as f64;
    let mag = 10f64.powf(raw_step.abs().log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| (hi - lo) / s <= max_ticks as f64)
        .unwrap_or(10.0 * mag);
    let mut out = Vec::new();
    let mut t = (lo / step).ceil() * step;
    while t <= hi + step * 1e-9 {
        // Snap to the grid so accumulated addition error never shifts labels.
        let snapped = (t / step).round() * step;
        out.push(if snapped == 0.0 { 0.0 } else { snapped });
        t += step;
    }
    out
}

fn fmt_tick(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s.is_empty() || s == "-" {
        "0".to_string()
    } else {
        s.to_string()
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_chart() -> LineChart {
        LineChart {
            title: "accuracy".into(),
            x_label: "epoch".into(),
            y_label: "percent".into(),
            series: vec![
                Series {
                    label: "train".into(),
                    points: vec![(0.0, 25.0), (1.0, 80.0), (2.0, 95.0)],
                },
                Series {
                    label: "test".into(),
                    points: vec![(0.0, 25.0), (1.0, 75.0), (2.0, 90.0)],
                },
            ],
            y_min: Some(0.0),
            y_max: Some(100.0),
        }
    }

    #[test]
    fn render_is_deterministic() {
        assert_eq!(sample_chart().render(), sample_chart().render());
    }

    #[test]
    fn render_contains_all_series_and_labels() {
        let svg = sample_chart().render();
        assert!(svg.starts_with("<svg "));
        assert!(svg.ends_with("</svg>\n"));
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains(">train</text>"));
        assert!(svg.contains(">test</text>"));
        assert!(svg.contains(">accuracy</text>"));
    }

    #[test]
    fn markup_characters_are_escaped() {
        let mut chart = sample_chart();
        chart.title = "a<b & c>d".into();
        let svg = chart.render();
        assert!(svg.contains("a&lt;b &amp; c&gt;d"));
        assert!(!svg.contains("a<b"));
    }

    #[test]
    fn ticks_cover_the_range_with_round_steps() {
        let t = ticks(0.0, 30.0, 8);
        assert_eq!(t, vec![0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0]);
        let t = ticks(0.0, 100.0, 5);
        assert_eq!(t, vec![0.0, 20.0, 40.0, 60.0, 80.0, 100.0]);
    }

    #[test]
    fn tick_labels_drop_trailing_zeros() {
        assert_eq!(fmt_tick(5.0), "5");
        assert_eq!(fmt_tick(0.5), "0.5");
        assert_eq!(fmt_tick(0.0), "0");
        assert_eq!(fmt_tick(12.25), "12.25");
    }

    #[test]
    fn single_point_series_still_renders() {
        let chart = LineChart {
            title: "t".into(),
            x_label: "x".into(),
            y_label: "y".into(),
            series: vec![Series {
                label: "only".into(),
                points: vec![(0.0, 50.0)],
            }],
            y_min: None,
            y_max: None,
        };
        let svg = chart.render();
        assert!(svg.contains("<polyline"));
    }
}
