//! Self-contained SVG plots: learning curves and phase-diagram heatmaps.

use std::fmt::Write as _;

use crossnorm::linlab::SweepGrid;

use crate::output::AggregateRow;

/// Intervals averaged by the curve smoother.
pub const SMOOTHING_WINDOW: usize = 5;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 55.0;
const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];
/// Low, middle and high stops of the heatmap ramp.
pub const RAMP: [(u8, u8, u8); 3] = [(33, 102, 172), (247, 247, 247), (178, 24, 43)];

/// Centred moving average. Near the ends the window is cut to the points
/// that exist; non-finite points are skipped.
pub fn smooth(values: &[f64], window: usize) -> Vec<f64> {
    let half = window / 2;
    (0..values.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(values.len());
            let (sum, n) = values[lo..hi]
                .iter()
                .filter(|v| v.is_finite())
                .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
            if n == 0 {
                f64::NAN
            } else {
                sum / n as f64
            }
        })
        .collect()
}

/// One labelled mean curve with its ±half-std band.
#[derive(Clone, Debug, PartialEq)]
pub struct CurveSeries {
    pub label: String,
    pub steps: Vec<f64>,
    pub mean: Vec<f64>,
    pub half_std: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Metric {
    EvalReturn,
    CriticLoss,
    Log10MeanAbsQ,
}

impl Metric {
    pub fn label(self) -> &'static str {
        match self {
            Metric::EvalReturn => "evaluation return",
            Metric::CriticLoss => "critic loss",
            Metric::Log10MeanAbsQ => "log10 mean |Q|",
        }
    }
}

impl CurveSeries {
    pub fn from_aggregate(label: impl Into<String>, rows: &[AggregateRow], metric: Metric) -> Self {
        let pick = |r: &AggregateRow| match metric {
            Metric::EvalReturn => r.eval_return,
            Metric::CriticLoss => r.critic_loss,
            Metric::Log10MeanAbsQ => r.log10_mean_abs_q,
        };
        CurveSeries {
            label: label.into(),
            steps: rows.iter().map(|r| r.step as f64).collect(),
            mean: rows.iter().map(|r| pick(r).0).collect(),
            half_std: rows.iter().map(|r| pick(r).1).collect(),
        }
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn extent(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        });
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if lo == hi {
        (lo - 1.0, hi + 1.0)
    } else {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    }
}

fn tick_label(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e5 || v.abs() < 1e-2) {
        format!("{:.1e}", v)
    } else {
        let s = format!("{:.2}", v);
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

/// SVG with each series' smoothed mean and a shaded ±half-std band.
pub fn render_curves(series: &[CurveSeries], title: &str, y_label: &str) -> String {
    let smoothed: Vec<(Vec<f64>, Vec<f64>)> = series
        .iter()
        .map(|s| {
            (
                smooth(&s.mean, SMOOTHING_WINDOW),
                smooth(&s.half_std, SMOOTHING_WINDOW),
            )
        })
        .collect();
    let (x0, x1) = extent(series.iter().flat_map(|s| s.steps.iter().copied()));
    let (y0, y1) = extent(smoothed.iter().flat_map(|(m, h)| {
        m.iter()
            .zip(h)
            .flat_map(|(m, h)| [m - h, m + h])
            .collect::<Vec<_>>()
    }));
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let px = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let py = |y: f64| TOP + (1.0 - (y - y0) / (y1 - y0)) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#,
        w = WIDTH,
        h = HEIGHT
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    axes(&mut s, (x0, x1), (y0, y1), &px, &py);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">step</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text transform="translate(16 {}) rotate(-90)" text-anchor="middle">{}</text>"#,
        TOP + ph / 2.0,
        escape(y_label)
    );

    for (k, (series, (mean, half))) in series.iter().zip(&smoothed).enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let pts: Vec<(f64, f64, f64)> = series
            .steps
            .iter()
            .zip(mean.iter().zip(half))
            .filter(|(x, (m, h))| x.is_finite() && m.is_finite() && h.is_finite())
            .map(|(&x, (&m, &h))| (x, m, h))
            .collect();
        if pts.is_empty() {
            continue;
        }
        let upper = pts
            .iter()
            .map(|&(x, m, h)| format!("{:.2},{:.2}", px(x), py(m + h)));
        let lower = pts
            .iter()
            .rev()
            .map(|&(x, m, h)| format!("{:.2},{:.2}", px(x), py(m - h)));
        let band: Vec<String> = upper.chain(lower).collect();
        let _ = writeln!(
            s,
            r#"<polygon class="band" points="{}" fill="{}" fill-opacity="0.25" stroke="none"/>"#,
            band.join(" "),
            color
        );
        let line: Vec<String> = pts
            .iter()
            .map(|&(x, m, _)| format!("{:.2},{:.2}", px(x), py(m)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline class="mean" points="{}" fill="none" stroke="{}" stroke-width="1.8"/>"#,
            line.join(" "),
            color
        );
        let ly = TOP + 14.0 + 16.0 * k as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{x}" y1="{y}" x2="{x2}" y2="{y}" stroke="{c}" stroke-width="3"/><text x="{tx}" y="{ty}">{l}</text>"#,
            x = LEFT + 10.0,
            x2 = LEFT + 30.0,
            y = ly,
            c = color,
            tx = LEFT + 36.0,
            ty = ly + 4.0,
            l = escape(&series.label)
        );
    }
    let _ = writeln!(
        s,
        r#"<text class="smoothing" x="{}" y="{}" text-anchor="end" font-size="10">mean ± half std, centred moving average over {} intervals</text>"#,
        WIDTH - RIGHT,
        HEIGHT - 12.0,
        SMOOTHING_WINDOW
    );
    s.push_str("</svg>\n");
    s
}

fn axes(
    s: &mut String,
    xr: (f64, f64),
    yr: (f64, f64),
    px: &dyn Fn(f64) -> f64,
    py: &dyn Fn(f64) -> f64,
) {
    let _ = writeln!(
        s,
        r#"<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        LEFT,
        TOP,
        WIDTH - LEFT - RIGHT,
        HEIGHT - TOP - BOTTOM
    );
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let x = xr.0 + f * (xr.1 - xr.0);
        let y = yr.0 + f * (yr.1 - yr.0);
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{}" text-anchor="middle">{}</text>"#,
            px(x),
            HEIGHT - BOTTOM + 16.0,
            tick_label(x)
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.2}" text-anchor="end">{}</text>"#,
            LEFT - 6.0,
            py(y) + 4.0,
            tick_label(y)
        );
    }
}

/// Linear interpolation through [`RAMP`]; `t` is clamped to `[0, 1]`.
pub fn ramp(t: f64) -> (u8, u8, u8) {
    let t = if t.is_nan() { 1.0 } else { t.clamp(0.0, 1.0) };
    let (a, b, u) = if t <= 0.5 {
        (RAMP[0], RAMP[1], t / 0.5)
    } else {
        (RAMP[1], RAMP[2], (t - 0.5) / 0.5)
    };
    let mix = |p: u8, q: u8| (p as f64 + (q as f64 - p as f64) * u).round() as u8;
    (mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
}

/// Heatmap of final `log10 |V̄|` with α on the horizontal and β on the
/// vertical axis. Diverged cells carry a cross.
pub fn render_heatmap(grid: &SweepGrid, title: &str) -> String {
    let na = grid.alphas.len();
    let nb = grid.betas.len();
    let finite = grid.log10_vbar.iter().copied().filter(|v| v.is_finite());
    let lo = finite.clone().fold(f64::INFINITY, f64::min);
    let hi = finite.fold(f64::NEG_INFINITY, f64::max);
    let norm = |v: f64| if hi > lo { (v - lo) / (hi - lo) } else { 0.5 };
    let bar = 70.0;
    let pw = WIDTH - LEFT - RIGHT - bar;
    let ph = HEIGHT - TOP - BOTTOM;
    let cw = pw / na as f64;
    let ch = ph / nb as f64;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#,
        w = WIDTH,
        h = HEIGHT
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        LEFT + pw / 2.0,
        escape(title)
    );
    for i in 0..na {
        for j in 0..nb {
            let v = grid.value(i, j);
            let (r, g, b) = ramp(norm(v));
            let x = LEFT + i as f64 * cw;
            let y = TOP + (nb - 1 - j) as f64 * ch;
            let _ = writeln!(
                s,
                r#"<rect class="cell" x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="rgb({},{},{})"><title>alpha={} beta={} log10|V|={}</title></rect>"#,
                x, y, cw, ch, r, g, b, grid.alphas[i], grid.betas[j], v
            );
            if grid.is_diverged(i, j) {
                let _ = writeln!(
                    s,
                    r#"<path class="diverged" d="M{:.2} {:.2}L{:.2} {:.2}M{:.2} {:.2}L{:.2} {:.2}" stroke="black" stroke-width="0.8"/>"#,
                    x + 0.25 * cw,
                    y + 0.25 * ch,
                    x + 0.75 * cw,
                    y + 0.75 * ch,
                    x + 0.75 * cw,
                    y + 0.25 * ch,
                    x + 0.25 * cw,
                    y + 0.75 * ch
                );
            }
        }
    }
    let ticks = |n: usize| -> Vec<usize> {
        if n <= 6 {
            (0..n).collect()
        } else {
            (0..6).map(|k| k * (n - 1) / 5).collect()
        }
    };
    for i in ticks(na) {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{}" text-anchor="middle">{}</text>"#,
            LEFT + (i as f64 + 0.5) * cw,
            TOP + ph + 16.0,
            tick_label(grid.alphas[i])
        );
    }
    for j in ticks(nb) {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.2}" text-anchor="end">{}</text>"#,
            LEFT - 6.0,
            TOP + (nb - 1 - j) as f64 * ch + 0.5 * ch + 4.0,
            tick_label(grid.betas[j])
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">alpha</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text transform="translate(20 {}) rotate(-90)" text-anchor="middle">beta</text>"#,
        TOP + ph / 2.0
    );

    // colour bar, high values on top
    let bx = LEFT + pw + 20.0;
    let stop = |t: f64| {
        let (r, g, b) = ramp(t);
        format!("rgb({},{},{})", r, g, b)
    };
    let _ = writeln!(
        s,
        r#"<defs><linearGradient id="ramp" x1="0" y1="1" x2="0" y2="0"><stop offset="0" stop-color="{}"/><stop offset="0.5" stop-color="{}"/><stop offset="1" stop-color="{}"/></linearGradient></defs>"#,
        stop(0.0),
        stop(0.5),
        stop(1.0)
    );
    let _ = writeln!(
        s,
        r#"<rect x="{}" y="{}" width="14" height="{}" fill="url(#ramp)" stroke="black"/>"#,
        bx, TOP, ph
    );
    let (lo_l, hi_l) = if lo.is_finite() { (lo, hi) } else { (0.0, 0.0) };
    for (t, v) in [(0.0, lo_l), (0.5, 0.5 * (lo_l + hi_l)), (1.0, hi_l)] {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.2}">{}</text>"#,
            bx + 18.0,
            TOP + (1.0 - t) * ph + 4.0,
            tick_label(v)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">log10 |V|</text>"#,
        bx + 7.0,
        TOP - 8.0
    );
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smoother_centre_value() {
        let s = smooth(&[0.0, 0.0, 5.0, 0.0, 0.0], 5);
        assert_eq!(s[2], 1.0);
        // edges average what exists: (0 + 0 + 5) / 3
        assert!((s[0] - 5.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn smoother_keeps_constants() {
        assert_eq!(smooth(&[2.0; 7], 5), vec![2.0; 7]);
        assert!(smooth(&[f64::NAN], 5)[0].is_nan());
    }

    #[test]
    fn ramp_stops() {
        assert_eq!(ramp(0.0), RAMP[0]);
        assert_eq!(ramp(0.5), RAMP[1]);
        assert_eq!(ramp(1.0), RAMP[2]);
        assert_eq!(ramp(-3.0), RAMP[0]);
    }

    #[test]
    fn constant_trace_has_a_flat_line_and_empty_band() {
        let series = CurveSeries {
            label: "flat".into(),
            steps: vec![1.0, 2.0, 3.0],
            mean: vec![-4.0; 3],
            half_std: vec![0.0; 3],
        };
        let svg = render_curves(&[series], "t", "y");
        let line = svg.lines().find(|l| l.contains(r#"class="mean""#)).unwrap();
        let ys: Vec<&str> = line
            .split("points=\"")
            .nth(1)
            .unwrap()
            .split('"')
            .next()
            .unwrap()
            .split(' ')
            .map(|p| p.split(',').nth(1).unwrap())
            .collect();
        assert!(ys.windows(2).all(|w| w[0] == w[1]));
        let band = svg.lines().find(|l| l.contains(r#"class="band""#)).unwrap();
        let pts: Vec<&str> = band
            .split("points=\"")
            .nth(1)
            .unwrap()
            .split('"')
            .next()
            .unwrap()
            .split(' ')
            .collect();
        assert!(pts.iter().all(|p| p.split(',').nth(1) == Some(ys[0])));
        assert!(svg.contains("over 5 intervals"));
    }

    #[test]
    fn single_cell_heatmap() {
        let grid = SweepGrid {
            alphas: vec![0.5],
            betas: vec![0.5],
            log10_vbar: vec![-3.0],
            diverged: vec![false],
        };
        let svg = render_heatmap(&grid, "one");
        assert_eq!(svg.matches(r#"class="cell""#).count(), 1);
        assert!(svg.contains("rgb(247,247,247)"));
        assert!(!svg.contains(r#"class="diverged""#));
    }
}
