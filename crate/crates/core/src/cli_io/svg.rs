//! Line charts of test-split aggregates with one-standard-deviation error bars.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};

use crate::harness::{AggregateRecord, GroupKey, Metric, ModelVariant, Split};

const WIDTH: f64 = 760.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 200.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;

fn color(v: ModelVariant) -> &'static str {
    match v {
        ModelVariant::BayesAnalytic => "#7f7f7f",
        ModelVariant::BayesDataDriven => "#2ca02c",
        ModelVariant::Biased => "#d62728",
        ModelVariant::Intervened => "#1f77b4",
    }
}

fn dash(g: GroupKey) -> Option<&'static str> {
    match g {
        GroupKey::All => None,
        GroupKey::A => Some("6 3"),
        GroupKey::B => Some("2 3"),
    }
}

/// Variants drawn for a metric. Fidelity of the data-driven reference is
/// near 1 everywhere and would only crowd the chart.
pub fn plotted_variants(metric: Metric) -> &'static [ModelVariant] {
    match metric {
        Metric::FidelityAgreement => &[ModelVariant::Biased, ModelVariant::Intervened],
        Metric::Accuracy | Metric::EoDisparity => &[
            ModelVariant::BayesDataDriven,
            ModelVariant::Biased,
            ModelVariant::Intervened,
        ],
    }
}

fn title(metric: Metric) -> &'static str {
    match metric {
        Metric::FidelityAgreement => "Test fidelity to the Bayes optimal classifier",
        Metric::Accuracy => "Test accuracy",
        Metric::EoDisparity => "Test equalized-odds disparity",
    }
}

fn group_label(g: GroupKey) -> &'static str {
    match g {
        GroupKey::All => "all",
        GroupKey::A => "majority",
        GroupKey::B => "minority",
    }
}

type SeriesKey = (ModelVariant, GroupKey);

/// Points `(x, mean, std)` per drawn series, ordered by x.
pub fn series(aggs: &[AggregateRecord], metric: Metric) -> BTreeMap<SeriesKey, Vec<(f64, f64, f64)>> {
    let variants = plotted_variants(metric);
    let mut out: BTreeMap<SeriesKey, Vec<(f64, f64, f64)>> = BTreeMap::new();
    for a in aggs {
        if a.metric != metric || a.split != Split::Test || !variants.contains(&a.model_variant) {
            continue;
        }
        if a.mean.is_nan() {
            continue;
        }
        out.entry((a.model_variant, a.group)).or_default().push((a.bias_level, a.mean, a.std));
    }
    for pts in out.values_mut() {
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    out
}

fn nice_step(span: f64, target: usize) -> f64 {
    let raw = span / target as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let norm = raw / mag;
    let mult = if norm <= 1.0 {
        1.0
    } else if norm <= 2.0 {
        2.0
    } else if norm <= 2.5 {
        2.5
    } else if norm <= 5.0 {
        5.0
    } else {
        10.0
    };
    mult * mag
}

/// Expands `[lo, hi]` outward to multiples of a readable tick step.
fn nice_range(lo: f64, hi: f64, target: usize) -> (f64, f64, f64) {
    let (lo, hi) = if hi - lo < 1e-9 { (lo - 0.5, hi + 0.5) } else { (lo, hi) };
    let step = nice_step(hi - lo, target);
    let lo = (lo / step + 1e-9).floor() * step;
    let hi = (hi / step - 1e-9).ceil() * step;
    (lo, hi, step)
}

fn ticks(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step).round() as i64;
    (0..=n).map(|k| lo + k as f64 * step).collect()
}

fn tick_label(v: f64, step: f64) -> String {
    let decimals = if step >= 1.0 { 0 } else { (-step.log10()).ceil().max(0.0) as usize + 1 };
    let s = format!("{v:.decimals$}");
    // Trim "0.50" to "0.5" but keep at least one digit after the point.
    let s = if s.contains('.') {
        let t = s.trim_end_matches('0');
        if t.ends_with('.') { format!("{t}0") } else { t.to_string() }
    } else {
        s
    };
    if s.starts_with("-0") && s.trim_start_matches(['-', '0', '.']).is_empty() {
        s[1..].to_string()
    } else {
        s
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Renders the chart for `metric`. `x_label` names the sweep axis.
pub fn render_figure(aggs: &[AggregateRecord], metric: Metric, x_label: &str) -> Result<String> {
    let data = series(aggs, metric);
    if data.is_empty() {
        bail!("no test-split aggregates for metric `{metric}`");
    }
    let all_pts = data.values().flatten();
    let (mut x_lo, mut x_hi, mut y_lo, mut y_hi) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, m, s) in all_pts {
        let s = if s.is_nan() { 0.0 } else { s };
        x_lo = x_lo.min(x);
        x_hi = x_hi.max(x);
        y_lo = y_lo.min(m - s);
        y_hi = y_hi.max(m + s);
    }
    let (x_lo, x_hi, x_step) = nice_range(x_lo, x_hi, 10);
    let (y_lo, y_hi, y_step) = nice_range(y_lo, y_hi, 8);

    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let px = |x: f64| LEFT + (x - x_lo) / (x_hi - x_lo) * plot_w;
    let py = |y: f64| TOP + (y_hi - y) / (y_hi - y_lo) * plot_h;

    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    )?;
    writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#)?;
    writeln!(
        s,
        r#"<text x="{:.2}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        LEFT + plot_w / 2.0,
        title(metric)
    )?;

    writeln!(s, r#"<g class="axes" stroke="black" stroke-width="1">"#)?;
    writeln!(
        s,
        r#"<path d="M{:.2} {:.2} H{:.2} M{:.2} {:.2} V{:.2}" fill="none"/>"#,
        LEFT,
        TOP + plot_h,
        LEFT + plot_w,
        LEFT,
        TOP,
        TOP + plot_h
    )?;
    writeln!(s, "</g>")?;

    writeln!(s, r#"<g class="ticks">"#)?;
    for t in ticks(x_lo, x_hi, x_step) {
        let x = px(t);
        writeln!(
            s,
            r##"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"##,
            TOP + plot_h,
            TOP + plot_h + 5.0,
            TOP + plot_h + 19.0,
            tick_label(t, x_step)
        )?;
    }
    for t in ticks(y_lo, y_hi, y_step) {
        let y = py(t);
        writeln!(
            s,
            r##"<line x1="{:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#dddddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"##,
            LEFT,
            LEFT + plot_w,
            LEFT - 6.0,
            y + 4.0,
            tick_label(t, y_step)
        )?;
    }
    writeln!(s, "</g>")?;
    writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 18.0,
        xml_escape(x_label)
    )?;
    writeln!(
        s,
        r#"<text transform="translate(18 {:.2}) rotate(-90)" text-anchor="middle">{}</text>"#,
        TOP + plot_h / 2.0,
        metric
    )?;

    for (i, (&(variant, group), pts)) in data.iter().enumerate() {
        let c = color(variant);
        let dash_attr = dash(group).map_or(String::new(), |d| format!(r#" stroke-dasharray="{d}""#));
        writeln!(s, r#"<g class="series" data-variant="{variant}" data-group="{group}">"#)?;
        if pts.len() > 1 {
            let coords: Vec<String> = pts.iter().map(|&(x, m, _)| format!("{:.2},{:.2}", px(x), py(m))).collect();
            writeln!(
                s,
                r#"<polyline points="{}" fill="none" stroke="{c}" stroke-width="1.5"{dash_attr}/>"#,
                coords.join(" ")
            )?;
        }
        for &(x, m, sd) in pts {
            let (cx, cy) = (px(x), py(m));
            if sd.is_finite() && sd > 0.0 {
                let (y1, y2) = (py(m + sd), py(m - sd));
                writeln!(
                    s,
                    r#"<path class="errorbar" d="M{cx:.2} {y1:.2} V{y2:.2} M{:.2} {y1:.2} H{:.2} M{:.2} {y2:.2} H{:.2}" stroke="{c}" fill="none"/>"#,
                    cx - 3.0,
                    cx + 3.0,
                    cx - 3.0,
                    cx + 3.0
                )?;
            } else {
                writeln!(s, r#"<path class="errorbar" d="M{cx:.2} {cy:.2} V{cy:.2}" stroke="{c}" fill="none"/>"#)?;
            }
            writeln!(s, r#"<circle class="marker" cx="{cx:.2}" cy="{cy:.2}" r="2.5" fill="{c}"/>"#)?;
        }
        writeln!(s, "</g>")?;

        let ly = TOP + 10.0 + 18.0 * i as f64;
        let lx = WIDTH - RIGHT + 15.0;
        writeln!(
            s,
            r#"<g class="legend"><line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{c}" stroke-width="1.5"{dash_attr}/><text x="{:.2}" y="{:.2}">{variant} ({})</text></g>"#,
            lx + 28.0,
            lx + 34.0,
            ly + 4.0,
            group_label(group)
        )?;
    }
    writeln!(s, "</svg>")?;
    Ok(s)
}

pub fn emit_figure(aggs: &[AggregateRecord], metric: Metric, x_label: &str, path: &Path) -> Result<()> {
    let svg = render_figure(aggs, metric, x_label)?;
    std::fs::write(path, svg).with_context(|| format!("writing {}", path.display()))
}
