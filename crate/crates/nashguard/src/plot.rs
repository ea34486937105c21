//! Plain SVG charts: stacked belief bars per episode and pairwise distance
//! curves on a log axis.

use std::fmt::Write;

use nashguard_core::planner::SimulationLog;

use crate::metrics::{CRASH_THRESHOLD, RISKY_THRESHOLD};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 320.0;
const LEFT: f64 = 56.0;
const RIGHT: f64 = 120.0;
const TOP: f64 = 28.0;
const BOTTOM: f64 = 40.0;
const PALETTE: [&str; 6] = ["#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3", "#937860"];

fn header(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="18" text-anchor="middle" font-size="13">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn plot_w() -> f64 {
    WIDTH - LEFT - RIGHT
}

fn plot_h() -> f64 {
    HEIGHT - TOP - BOTTOM
}

fn axes(out: &mut String, x_label: &str, y_label: &str) {
    let (x0, y0, x1) = (LEFT, TOP + plot_h(), LEFT + plot_w());
    let _ = writeln!(out, r#"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>"#);
    let _ = writeln!(out, r#"<line x1="{x0}" y1="{TOP}" x2="{x0}" y2="{y0}" stroke="black"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{x_label}</text>"#,
        LEFT + plot_w() / 2.0,
        HEIGHT - 8.0
    );
    let _ = writeln!(
        out,
        r#"<text x="14" y="{:.2}" text-anchor="middle" transform="rotate(-90 14 {:.2})">{y_label}</text>"#,
        TOP + plot_h() / 2.0,
        TOP + plot_h() / 2.0
    );
}

fn legend(out: &mut String, row: usize, color: &str, label: &str) {
    let x = LEFT + plot_w() + 12.0;
    let y = TOP + 8.0 + 16.0 * row as f64;
    let _ = writeln!(out, r#"<rect x="{x:.2}" y="{:.2}" width="10" height="10" fill="{color}"/>"#, y - 9.0);
    let _ = writeln!(out, r#"<text x="{:.2}" y="{y:.2}">{}</text>"#, x + 14.0, escape(label));
}

/// Stacked bars of `observer`'s belief about `target`, one bar per episode.
/// Hypothesis 0 is the first candidate of the belief (the broadcast unless
/// only alternatives are considered).
pub fn lambda_bars(log: &SimulationLog, observer: usize, target: usize, title: &str) -> String {
    let trace = log.belief_trace(observer, target);
    let mut out = String::new();
    header(&mut out, title);
    axes(&mut out, "episode", "likelihood");
    let n = trace.len().max(1) as f64;
    let slot = plot_w() / n;
    let bar = (slot * 0.8).max(1.0);
    let n_hyp = trace.first().map_or(0, |b| b.lambdas.len());
    for (k, b) in trace.iter().enumerate() {
        let x = LEFT + slot * k as f64 + 0.5 * (slot - bar);
        let mut y = TOP + plot_h();
        for (h, l) in b.lambdas.iter().enumerate() {
            let height = l.clamp(0.0, 1.0) * plot_h();
            y -= height;
            let _ = writeln!(
                out,
                r#"<rect x="{x:.2}" y="{y:.2}" width="{bar:.2}" height="{height:.2}" fill="{}"/>"#,
                PALETTE[h % PALETTE.len()]
            );
        }
    }
    for tick in [0.0, 0.5, 1.0] {
        let y = TOP + plot_h() * (1.0 - tick);
        let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{tick:.1}</text>"#, LEFT - 4.0, y + 4.0);
    }
    let step = (trace.len() / 10).max(1);
    for k in (0..trace.len()).step_by(step) {
        let x = LEFT + slot * (k as f64 + 0.5);
        let _ = writeln!(
            out,
            r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            TOP + plot_h() + 14.0,
            trace[k].episode
        );
    }
    for h in 0..n_hyp {
        legend(&mut out, h, PALETTE[h % PALETTE.len()], &format!("hypothesis {h}"));
    }
    out.push_str("</svg>\n");
    out
}

/// Normalized distance `|p_i − p_j| / d_min` of every pair over time on a
/// log axis, with the risky and crash thresholds dashed.
pub fn distance_plot(log: &SimulationLog, d_min: f64, title: &str) -> String {
    let states = log.trajectory.states();
    let n_agents = log.trajectory.n_agents();
    let mut series = Vec::new();
    for i in 0..n_agents {
        for j in i + 1..n_agents {
            let d: Vec<f64> = states
                .iter()
                .map(|x| ((x.0[i].px - x.0[j].px).hypot(x.0[i].py - x.0[j].py) / d_min).max(1e-3))
                .collect();
            series.push(((i, j), d));
        }
    }
    let (lo, hi) = series
        .iter()
        .flat_map(|(_, d)| d.iter().copied())
        .chain([CRASH_THRESHOLD, RISKY_THRESHOLD])
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let (dec_lo, dec_hi) = (lo.log10().floor(), hi.log10().ceil().max(lo.log10().floor() + 1.0));
    let y_of = |v: f64| TOP + plot_h() * (1.0 - (v.log10() - dec_lo) / (dec_hi - dec_lo));
    let t_end = (states.len().saturating_sub(1)).max(1) as f64 * log.dt;
    let x_of = |k: usize| LEFT + plot_w() * (k as f64 * log.dt) / t_end;

    let mut out = String::new();
    header(&mut out, title);
    axes(&mut out, "time (s)", "distance / d_min");
    let mut dec = dec_lo;
    while dec <= dec_hi {
        let y = y_of(10f64.powf(dec));
        let _ = writeln!(
            out,
            r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#dddddd"/>"##,
            LEFT + plot_w()
        );
        let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">1e{dec}</text>"#, LEFT - 4.0, y + 4.0);
        dec += 1.0;
    }
    for (v, label) in [(CRASH_THRESHOLD, "crash"), (RISKY_THRESHOLD, "risky")] {
        let y = y_of(v);
        let _ = writeln!(
            out,
            r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#888888" stroke-dasharray="4 3"/>"##,
            LEFT + plot_w()
        );
        let _ = writeln!(out, r##"<text x="{:.2}" y="{:.2}" fill="#888888">{label}</text>"##, LEFT + 4.0, y - 3.0);
    }
    let ticks = 5;
    for k in 0..=ticks {
        let t = t_end * k as f64 / ticks as f64;
        let x = LEFT + plot_w() * k as f64 / ticks as f64;
        let _ =
            writeln!(out, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{t:.1}</text>"#, TOP + plot_h() + 14.0);
    }
    for (row, ((i, j), d)) in series.iter().enumerate() {
        let color = PALETTE[row % PALETTE.len()];
        let points: Vec<String> =
            d.iter().enumerate().map(|(k, v)| format!("{:.2},{:.2}", x_of(k), y_of(*v))).collect();
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            points.join(" ")
        );
        legend(&mut out, row, color, &format!("v{} - v{}", i + 1, j + 1));
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use nashguard_core::scenarios::{build, ScenarioKind, Variant};

    #[test]
    fn charts_are_well_formed() {
        let mut cfg = build(ScenarioKind::Overtake, Variant::Faulty);
        cfg.total_steps = 15;
        let log = nashguard_core::planner::run_simulation(&cfg).unwrap();
        let bars = lambda_bars(&log, 0, 1, "belief of v1 about v2");
        assert!(bars.starts_with("<svg") && bars.trim_end().ends_with("</svg>"));
        assert_eq!(bars.matches("<rect").count(), 1 + 4 * 2 + 2);
        let dist = distance_plot(&log, cfg.d_min(), "distances");
        assert_eq!(dist.matches("<polyline").count(), 1);
        assert!(dist.contains("risky") && dist.contains("crash"));
    }
}
