//! Standalone SVG charts.
//!
//! Plots are generated by the CLI itself so runs reproduce offline; output
//! depends only on the input data, never on clocks or locales. Three chart
//! shapes cover every report: multi-series lines (equity curves, metric vs
//! K), a mean +/- std band (seed sweeps) and bars (allocations).

use std::fmt::Write as _;

const WIDTH: f64 = 960.0;
const HEIGHT: f64 = 540.0;
const MARGIN_LEFT: f64 = 86.0;
const MARGIN_RIGHT: f64 = 24.0;
const MARGIN_TOP: f64 = 48.0;
const MARGIN_BOTTOM: f64 = 64.0;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f",
];

/// One polyline and its legend label.
#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

/// Tick positions in data space with their rendered labels; used to put
/// dates on an index-valued x axis.
pub type TickLabels = Vec<(f64, String)>;

fn esc(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Shortest clean decimal for axis labels.
fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    let s = if !(1e-3..1e6).contains(&a) {
        format!("{v:e}")
    } else {
        let mut s = format!("{v:.4}");
        while s.contains('.') && (s.ends_with('0') || s.ends_with('.')) {
            s.pop();
        }
        s
    };
    s
}

fn fmt_coord(v: f64) -> String {
    format!("{v:.2}")
}

/// Evenly spaced ticks rounded to a 1/2/5 step covering `[min, max]`.
fn nice_ticks(min: f64, max: f64, target: usize) -> Vec<f64> {
    let span = max - min;
    if !(span.is_finite()) || span <= 0.0 {
        return vec![min];
    }
    let raw_step = span / target.max(1) as f64;
    let magnitude = 10f64.powf(raw_step.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .into_iter()
        .map(|m| m * magnitude)
        .find(|&s| s >= raw_step)
        .unwrap_or(magnitude * 10.0);
    let first = (min / step).ceil() * step;
    let mut ticks = Vec::new();
    let mut v = first;
    while v <= max + step * 1e-9 {
        // snap values like 0.30000000000000004 back onto the grid
        ticks.push((v / step).round() * step);
        v += step;
    }
    ticks
}

struct Frame {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

impl Frame {
    fn from_ranges(x: (f64, f64), y: (f64, f64)) -> Self {
        let pad = |lo: f64, hi: f64| {
            if hi > lo {
                let p = (hi - lo) * 0.05;
                (lo - p, hi + p)
            } else {
                let p = lo.abs().max(1.0) * 0.05;
                (lo - p, hi + p)
            }
        };
        let (y_min, y_max) = pad(y.0, y.1);
        Frame {
            x_min: x.0,
            x_max: if x.1 > x.0 { x.1 } else { x.0 + 1.0 },
            y_min,
            y_max,
        }
    }

    fn sx(&self, x: f64) -> f64 {
        MARGIN_LEFT
            + (x - self.x_min) / (self.x_max - self.x_min) * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT)
    }

    fn sy(&self, y: f64) -> f64 {
        HEIGHT
            - MARGIN_BOTTOM
            - (y - self.y_min) / (self.y_max - self.y_min) * (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM)
    }
}

fn open_svg(out: &mut String, title: &str) {
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif">"#
    )
    .unwrap();
    writeln!(
        out,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    )
    .unwrap();
    writeln!(
        out,
        r#"<text x="{}" y="28" font-size="18" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        esc(title)
    )
    .unwrap();
}

fn draw_axes(out: &mut String, frame: &Frame, x_label: &str, y_label: &str, x_ticks: &TickLabels) {
    let x0 = MARGIN_LEFT;
    let x1 = WIDTH - MARGIN_RIGHT;
    let y0 = HEIGHT - MARGIN_BOTTOM;
    let y1 = MARGIN_TOP;

    for v in nice_ticks(frame.y_min, frame.y_max, 6) {
        let y = frame.sy(v);
        writeln!(
            out,
            r##"<line x1="{x0}" y1="{sy}" x2="{x1}" y2="{sy}" stroke="#dddddd"/>"##,
            sy = fmt_coord(y)
        )
        .unwrap();
        writeln!(
            out,
            r#"<text x="{}" y="{}" font-size="12" text-anchor="end">{}</text>"#,
            x0 - 8.0,
            fmt_coord(y + 4.0),
            fmt_tick(v)
        )
        .unwrap();
    }
    for (v, label) in x_ticks {
        let x = frame.sx(*v);
        writeln!(
            out,
            r##"<line x1="{sx}" y1="{y0}" x2="{sx}" y2="{}" stroke="#dddddd"/>"##,
            y1,
            sx = fmt_coord(x)
        )
        .unwrap();
        writeln!(
            out,
            r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">{}</text>"#,
            fmt_coord(x),
            y0 + 20.0,
            esc(label)
        )
        .unwrap();
    }

    writeln!(
        out,
        r#"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>"#
    )
    .unwrap();
    writeln!(
        out,
        r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>"#
    )
    .unwrap();
    writeln!(
        out,
        r#"<text x="{}" y="{}" font-size="14" text-anchor="middle">{}</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 16.0,
        esc(x_label)
    )
    .unwrap();
    writeln!(
        out,
        r#"<text x="20" y="{}" font-size="14" text-anchor="middle" transform="rotate(-90 20 {mid})">{}</text>"#,
        (y0 + y1) / 2.0,
        esc(y_label),
        mid = (y0 + y1) / 2.0
    )
    .unwrap();
}

fn polyline(out: &mut String, frame: &Frame, points: &[(f64, f64)], color: &str) {
    let coords: Vec<String> = points
        .iter()
        .map(|&(x, y)| format!("{},{}", fmt_coord(frame.sx(x)), fmt_coord(frame.sy(y))))
        .collect();
    writeln!(
        out,
        r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
        coords.join(" ")
    )
    .unwrap();
}

fn legend(out: &mut String, labels: &[&str]) {
    let x = MARGIN_LEFT + 12.0;
    for (i, label) in labels.iter().enumerate() {
        let y = MARGIN_TOP + 16.0 + 18.0 * i as f64;
        let color = PALETTE[i % PALETTE.len()];
        writeln!(
            out,
            r#"<line x1="{x}" y1="{}" x2="{}" y2="{y2}" stroke="{color}" stroke-width="3"/>"#,
            y - 4.0,
            x + 22.0,
            y2 = y - 4.0
        )
        .unwrap();
        writeln!(
            out,
            r#"<text x="{}" y="{y}" font-size="12">{}</text>"#,
            x + 28.0,
            esc(label)
        )
        .unwrap();
    }
}

fn numeric_x_ticks(frame: &Frame) -> TickLabels {
    nice_ticks(frame.x_min, frame.x_max, 8)
        .into_iter()
        .map(|v| (v, fmt_tick(v)))
        .collect()
}

fn data_ranges(series: &[Series]) -> ((f64, f64), (f64, f64)) {
    let mut x = (f64::INFINITY, f64::NEG_INFINITY);
    let mut y = (f64::INFINITY, f64::NEG_INFINITY);
    for s in series {
        for &(px, py) in &s.points {
            x = (x.0.min(px), x.1.max(px));
            y = (y.0.min(py), y.1.max(py));
        }
    }
    (x, y)
}

/// Multi-series line chart. `x_ticks` overrides the numeric x axis, e.g.
/// with dates.
pub fn line_chart(
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[Series],
    x_ticks: Option<TickLabels>,
) -> String {
    let (x, y) = data_ranges(series);
    let frame = Frame::from_ranges(x, y);
    let ticks = x_ticks.unwrap_or_else(|| numeric_x_ticks(&frame));
    let mut out = String::new();
    open_svg(&mut out, title);
    draw_axes(&mut out, &frame, x_label, y_label, &ticks);
    for (i, s) in series.iter().enumerate() {
        polyline(&mut out, &frame, &s.points, PALETTE[i % PALETTE.len()]);
    }
    let labels: Vec<&str> = series.iter().map(|s| s.label.as_str()).collect();
    legend(&mut out, &labels);
    out.push_str("</svg>\n");
    out
}

/// Mean line with a +/- one standard deviation band.
pub fn band_chart(
    title: &str,
    x_label: &str,
    y_label: &str,
    xs: &[f64],
    mean: &[f64],
    std: &[f64],
) -> String {
    let lo: Vec<(f64, f64)> = xs
        .iter()
        .zip(mean.iter().zip(std))
        .map(|(&x, (&m, &s))| (x, m - s))
        .collect();
    let hi: Vec<(f64, f64)> = xs
        .iter()
        .zip(mean.iter().zip(std))
        .map(|(&x, (&m, &s))| (x, m + s))
        .collect();
    let mean_series: Vec<(f64, f64)> = xs.iter().zip(mean).map(|(&x, &m)| (x, m)).collect();

    let all = [
        Series {
            label: String::new(),
            points: lo.clone(),
        },
        Series {
            label: String::new(),
            points: hi.clone(),
        },
    ];
    let (xr, yr) = data_ranges(&all);
    let frame = Frame::from_ranges(xr, yr);
    let mut out = String::new();
    open_svg(&mut out, title);
    draw_axes(&mut out, &frame, x_label, y_label, &numeric_x_ticks(&frame));

    let mut ring: Vec<String> = hi
        .iter()
        .map(|&(x, y)| format!("{},{}", fmt_coord(frame.sx(x)), fmt_coord(frame.sy(y))))
        .collect();
    ring.extend(
        lo.iter()
            .rev()
            .map(|&(x, y)| format!("{},{}", fmt_coord(frame.sx(x)), fmt_coord(frame.sy(y)))),
    );
    writeln!(
        out,
        r#"<polygon fill="{color}" fill-opacity="0.25" stroke="none" points="{}"/>"#,
        ring.join(" "),
        color = PALETTE[0]
    )
    .unwrap();
    polyline(&mut out, &frame, &mean_series, PALETTE[0]);
    legend(&mut out, &["mean", "+/- 1 std"]);
    out.push_str("</svg>\n");
    out
}

/// Vertical bar chart over labelled categories.
pub fn bar_chart(title: &str, y_label: &str, labels: &[String], values: &[f64]) -> String {
    let y_hi = values.iter().copied().fold(0.0f64, f64::max);
    let y_lo = values.iter().copied().fold(0.0f64, f64::min);
    let frame = Frame::from_ranges((0.0, labels.len() as f64), (y_lo.min(0.0), y_hi.max(0.0)));
    let mut out = String::new();
    open_svg(&mut out, title);
    draw_axes(&mut out, &frame, "", y_label, &Vec::new());

    let n = labels.len().max(1) as f64;
    let slot = (WIDTH - MARGIN_LEFT - MARGIN_RIGHT) / n;
    let bar_w = slot * 0.7;
    let y_zero = frame.sy(0.0);
    for (i, (&v, label)) in values.iter().zip(labels).enumerate() {
        let x = MARGIN_LEFT + slot * (i as f64 + 0.5);
        let y = frame.sy(v);
        let (top, height) = if y <= y_zero {
            (y, y_zero - y)
        } else {
            (y_zero, y - y_zero)
        };
        writeln!(
            out,
            r#"<rect x="{}" y="{}" width="{}" height="{}" fill="{}"/>"#,
            fmt_coord(x - bar_w / 2.0),
            fmt_coord(top),
            fmt_coord(bar_w),
            fmt_coord(height),
            PALETTE[0]
        )
        .unwrap();
        // rotate labels so dense universes stay legible
        writeln!(
            out,
            r#"<text x="{x2}" y="{y2}" font-size="11" text-anchor="end" transform="rotate(-45 {x2} {y2})">{}</text>"#,
            esc(label),
            x2 = fmt_coord(x),
            y2 = fmt_coord(HEIGHT - MARGIN_BOTTOM + 16.0)
        )
        .unwrap();
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nice_ticks_use_round_steps_inside_the_range() {
        let ticks = nice_ticks(0.0, 1.0, 6);
        assert_eq!(ticks, vec![0.0, 0.2, 0.4, 0.6000000000000001, 0.8, 1.0]);
        let ticks = nice_ticks(3.0, 97.0, 6);
        assert!(ticks.iter().all(|&t| (3.0..=97.0).contains(&t)));
        assert!(ticks.len() >= 4);
        assert_eq!(nice_ticks(2.0, 2.0, 5), vec![2.0]);
    }

    #[test]
    fn charts_are_valid_looking_svg_and_deterministic() {
        let series = [
            Series {
                label: "a & b".into(),
                points: vec![(0.0, 1.0), (1.0, 2.0), (2.0, 1.5)],
            },
            Series {
                label: "index".into(),
                points: vec![(0.0, 1.0), (1.0, 1.1), (2.0, 1.2)],
            },
        ];
        let svg = line_chart("title <x>", "t", "value", &series, None);
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("a &amp; b"));
        assert!(svg.contains("title &lt;x&gt;"));
        assert_eq!(svg, line_chart("title <x>", "t", "value", &series, None));

        let band = band_chart(
            "band",
            "iter",
            "loss",
            &[0.0, 1.0],
            &[1.0, 0.5],
            &[0.1, 0.05],
        );
        assert!(band.contains("polygon"));

        let bars = bar_chart("alloc", "weight", &["A".into(), "B".into()], &[0.6, 0.4]);
        assert_eq!(bars.matches("<rect").count(), 3); // background + 2 bars
    }

    #[test]
    fn flat_series_still_render() {
        let series = [Series {
            label: "flat".into(),
            points: vec![(0.0, 5.0), (1.0, 5.0)],
        }];
        let svg = line_chart("flat", "t", "v", &series, None);
        assert!(svg.contains("polyline"));
    }
}
