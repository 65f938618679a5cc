//! Minimal deterministic SVG charts (bars and scatter) for the analyzer
//! reports. All geometry is integer math on micro-unit fixed-point values,
//! so a chart is a pure function of its inputs, byte for byte. Output is
//! self-contained: no external fonts, scripts, or stylesheets.

use alloc::format;
use alloc::string::String;

use crate::json;

const WIDTH: i64 = 880;
const HEIGHT: i64 = 520;
const MARGIN_LEFT: i64 = 90;
const MARGIN_RIGHT: i64 = 30;
const MARGIN_TOP: i64 = 50;
const MARGIN_BOTTOM: i64 = 110;
const TICKS: u64 = 5;
/// Bars lose their per-bar labels beyond this count.
const MAX_LABELED_BARS: usize = 24;

fn esc(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            _ => out.push(c),
        }
    }
    out
}

/// Micro-unit value rendered for tick/value labels with trailing zeros
/// trimmed ("12", "0.5", "24.600416").
fn label_micros(v: u64) -> String {
    let mut s = json::format_micros(v);
    while s.ends_with('0') {
        s.pop();
    }
    if s.ends_with('.') {
        s.pop();
    }
    s
}

/// Smallest "nice" step (1, 2, or 5 times a power of ten, in micro-units)
/// whose `TICKS` multiples cover `max`.
fn nice_step(max: u64) -> u64 {
    if max == 0 {
        return 1_000_000 / TICKS; // axis up to 1.0
    }
    let target = max.div_ceil(TICKS);
    let mut pow = 1u64;
    loop {
        for mult in [1u64, 2, 5] {
            let step = mult.saturating_mul(pow);
            if step >= target {
                return step;
            }
        }
        pow = pow.saturating_mul(10);
    }
}

struct Canvas {
    body: String,
}

impl Canvas {
    fn new(title: &str) -> Self {
        let mut body = String::new();
        body.push_str(&format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
             viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\">\n"
        ));
        body.push_str(&format!(
            "<rect x=\"0\" y=\"0\" width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"#ffffff\"/>\n"
        ));
        body.push_str(&format!(
            "<text x=\"{}\" y=\"28\" font-size=\"18\" text-anchor=\"middle\">{}</text>\n",
            WIDTH / 2,
            esc(title)
        ));
        Canvas { body }
    }

    fn finish(mut self) -> String {
        self.body.push_str("</svg>\n");
        self.body
    }

    fn no_data(mut self) -> String {
        self.body.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"16\" text-anchor=\"middle\" fill=\"#888888\">no data</text>\n",
            WIDTH / 2,
            HEIGHT / 2
        ));
        self.finish()
    }

    /// Draws the y axis with `TICKS` gridlines of `step` micro-units each.
    /// Returns the covered span in micro-units.
    fn y_axis(&mut self, y_label: &str, step: u64) -> u64 {
        let span = step * TICKS;
        let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
        for i in 0..=TICKS {
            let value = step * i;
            let y = HEIGHT - MARGIN_BOTTOM - (plot_h * i as i64) / TICKS as i64;
            self.body.push_str(&format!(
                "<line x1=\"{}\" y1=\"{y}\" x2=\"{}\" y2=\"{y}\" stroke=\"#dddddd\"/>\n",
                MARGIN_LEFT,
                WIDTH - MARGIN_RIGHT
            ));
            self.body.push_str(&format!(
                "<text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"end\">{}</text>\n",
                MARGIN_LEFT - 6,
                y + 4,
                label_micros(value)
            ));
        }
        self.body.push_str(&format!(
            "<text x=\"16\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\" \
             transform=\"rotate(-90 16 {})\">{}</text>\n",
            (MARGIN_TOP + HEIGHT - MARGIN_BOTTOM) / 2,
            (MARGIN_TOP + HEIGHT - MARGIN_BOTTOM) / 2,
            esc(y_label)
        ));
        self.body.push_str(&format!(
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#333333\"/>\n",
            MARGIN_LEFT,
            MARGIN_TOP,
            MARGIN_LEFT,
            HEIGHT - MARGIN_BOTTOM
        ));
        self.body.push_str(&format!(
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#333333\"/>\n",
            MARGIN_LEFT,
            HEIGHT - MARGIN_BOTTOM,
            WIDTH - MARGIN_RIGHT,
            HEIGHT - MARGIN_BOTTOM
        ));
        span
    }
}

/// Vertical bar chart over micro-unit values.
pub fn bar_chart(title: &str, y_label: &str, bars: &[(String, u64)]) -> String {
    let mut canvas = Canvas::new(title);
    if bars.is_empty() {
        return canvas.no_data();
    }
    let max = bars.iter().map(|(_, v)| *v).max().unwrap_or(0);
    let span = canvas.y_axis(y_label, nice_step(max));

    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let slot = (plot_w / bars.len() as i64).max(1);
    let bar_w = (slot * 7 / 10).max(1);
    let labeled = bars.len() <= MAX_LABELED_BARS;

    for (i, (label, value)) in bars.iter().enumerate() {
        let x = MARGIN_LEFT + slot * i as i64 + (slot - bar_w) / 2;
        let h = ((*value as u128 * plot_h as u128) / span as u128) as i64;
        let y = HEIGHT - MARGIN_BOTTOM - h;
        canvas.body.push_str(&format!(
            "<rect x=\"{x}\" y=\"{y}\" width=\"{bar_w}\" height=\"{h}\" fill=\"#4878a8\"/>\n"
        ));
        if labeled {
            let cx = x + bar_w / 2;
            canvas.body.push_str(&format!(
                "<text x=\"{cx}\" y=\"{}\" font-size=\"11\" text-anchor=\"middle\">{}</text>\n",
                y - 4,
                label_micros(*value)
            ));
            let ly = HEIGHT - MARGIN_BOTTOM + 14;
            canvas.body.push_str(&format!(
                "<text x=\"{cx}\" y=\"{ly}\" font-size=\"11\" text-anchor=\"end\" \
                 transform=\"rotate(-45 {cx} {ly})\">{}</text>\n",
                esc(label)
            ));
        }
    }
    canvas.finish()
}

/// Scatter plot over micro-unit (x, y) points.
pub fn scatter_chart(title: &str, x_label: &str, y_label: &str, points: &[(u64, u64)]) -> String {
    let mut canvas = Canvas::new(title);
    if points.is_empty() {
        return canvas.no_data();
    }
    let max_y = points.iter().map(|(_, y)| *y).max().unwrap_or(0);
    let y_span = canvas.y_axis(y_label, nice_step(max_y));
    let max_x = points.iter().map(|(x, _)| *x).max().unwrap_or(0);
    let x_step = nice_step(max_x);
    let x_span = x_step * TICKS;

    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    for i in 0..=TICKS {
        let x = MARGIN_LEFT + (plot_w * i as i64) / TICKS as i64;
        canvas.body.push_str(&format!(
            "<text x=\"{x}\" y=\"{}\" font-size=\"11\" text-anchor=\"middle\">{}</text>\n",
            HEIGHT - MARGIN_BOTTOM + 18,
            label_micros(x_step * i)
        ));
    }
    canvas.body.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\">{}</text>\n",
        MARGIN_LEFT + plot_w / 2,
        HEIGHT - MARGIN_BOTTOM + 42,
        esc(x_label)
    ));
    for (x, y) in points {
        let px = MARGIN_LEFT + ((*x as u128 * plot_w as u128) / x_span as u128) as i64;
        let py = HEIGHT - MARGIN_BOTTOM - ((*y as u128 * plot_h as u128) / y_span as u128) as i64;
        canvas.body.push_str(&format!(
            "<circle cx=\"{px}\" cy=\"{py}\" r=\"4\" fill=\"#a84848\" fill-opacity=\"0.7\"/>\n"
        ));
    }
    canvas.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    #[test]
    fn nice_step_covers_max() {
        for max in [1u64, 999_999, 1_000_000, 7_400_000, 123_456_789] {
            let step = nice_step(max);
            assert!(step * TICKS >= max, "step {step} for max {max}");
        }
    }

    #[test]
    fn empty_chart_carries_no_data_annotation() {
        let svg = bar_chart("t", "y", &[]);
        assert!(svg.contains("no data"));
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn charts_are_deterministic_and_escaped() {
        let bars = alloc::vec![
            ("a<b>".to_string(), 3_000_000u64),
            ("plain".to_string(), 1_500_000),
        ];
        let one = bar_chart("peers & more", "count", &bars);
        let two = bar_chart("peers & more", "count", &bars);
        assert_eq!(one, two);
        assert!(one.contains("peers &amp; more"));
        assert!(one.contains("a&lt;b&gt;"));
    }

    #[test]
    fn scatter_renders_points() {
        let pts = alloc::vec![(1_000_000u64, 2_000_000u64), (3_000_000, 500_000)];
        let svg = scatter_chart("msgs", "minutes", "messages", &pts);
        assert_eq!(svg.matches("<circle").count(), 2);
    }
}
