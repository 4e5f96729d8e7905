use std::fmt::Write as _;

use super::csv::TrajectoryTable;

const WIDTH: f64 = 760.0;
const FACET_HEIGHT: f64 = 280.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 34.0;
const BOTTOM: f64 = 40.0;
const MAX_POINTS: usize = 1200;
const LEADER_COLOR: &str = "#c0392b";
const PALETTE: [&str; 8] = [
    "#1f77b4", "#2ca02c", "#9467bd", "#8c564b", "#17becf", "#7f7f7f", "#bcbd22", "#e377c2",
];

/// Line chart of every entity's coordinates against time, one facet per
/// coordinate. Leaders are drawn thick, dashed and red.
pub fn render_svg(table: &TrajectoryTable) -> String {
    let facets = table.d;
    let height = facets as f64 * (FACET_HEIGHT + TOP + BOTTOM);
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);

    let stride = table.times.len().div_ceil(MAX_POINTS).max(1);
    let mut stamps: Vec<usize> = (0..table.times.len()).step_by(stride).collect();
    if stamps.last() != Some(&(table.times.len() - 1)) {
        stamps.push(table.times.len() - 1);
    }
    let t0 = table.times[0];
    let t1 = *table.times.last().unwrap();
    let t_span = if t1 > t0 { t1 - t0 } else { 1.0 };
    let plot_w = WIDTH - LEFT - RIGHT;

    for k in 0..facets {
        let top = k as f64 * (FACET_HEIGHT + TOP + BOTTOM) + TOP;
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for s in 0..table.times.len() {
            for e in 0..table.entity_count() {
                let x = table.entity_at(s, e)[k];
                lo = lo.min(x);
                hi = hi.max(x);
            }
        }
        if hi - lo < 1e-12 {
            lo -= 0.5;
            hi += 0.5;
        }
        let pad = 0.05 * (hi - lo);
        lo -= pad;
        hi += pad;
        let sx = |t: f64| LEFT + (t - t0) / t_span * plot_w;
        let sy = |x: f64| top + (hi - x) / (hi - lo) * FACET_HEIGHT;

        let _ = writeln!(
            svg,
            r#"<text x="{LEFT}" y="{:.2}" font-size="13">coordinate {k}</text>"#,
            top - 12.0
        );
        let _ = writeln!(
            svg,
            r##"<rect x="{LEFT}" y="{top:.2}" width="{plot_w:.2}" height="{FACET_HEIGHT}" fill="none" stroke="#333"/>"##
        );
        for i in 0..=4 {
            let frac = i as f64 / 4.0;
            let x_val = lo + frac * (hi - lo);
            let y = sy(x_val);
            let _ = writeln!(
                svg,
                r##"<line x1="{:.2}" y1="{y:.2}" x2="{LEFT}" y2="{y:.2}" stroke="#333"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"##,
                LEFT - 4.0,
                LEFT - 6.0,
                y + 4.0,
                tick(x_val)
            );
            let t_val = t0 + frac * t_span;
            let x = sx(t_val);
            let base = top + FACET_HEIGHT;
            let _ = writeln!(
                svg,
                r##"<line x1="{x:.2}" y1="{base:.2}" x2="{x:.2}" y2="{:.2}" stroke="#333"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"##,
                base + 4.0,
                base + 16.0,
                tick(t_val)
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">t</text>"#,
            LEFT + plot_w / 2.0,
            top + FACET_HEIGHT + 32.0
        );

        // leaders come last in the layout, so they are drawn on top
        for e in 0..table.entity_count() {
            let mut points = String::new();
            for &s in &stamps {
                let _ = write!(points, "{:.2},{:.2} ", sx(table.times[s]), sy(table.entity_at(s, e)[k]));
            }
            let style = if table.is_leader(e) {
                format!(r#"stroke="{LEADER_COLOR}" stroke-width="2.2" stroke-dasharray="7 4""#)
            } else {
                format!(r#"stroke="{}" stroke-width="1""#, PALETTE[e % PALETTE.len()])
            };
            let _ = writeln!(
                svg,
                r#"<polyline class="{}" data-entity="{e}" fill="none" {style} points="{}"/>"#,
                if table.is_leader(e) { "leader" } else { "follower" },
                points.trim_end()
            );
        }
    }
    svg.push_str("</svg>\n");
    svg
}

fn tick(v: f64) -> String {
    if v.abs() >= 1e4 || (v != 0.0 && v.abs() < 1e-2) {
        format!("{v:.2e}")
    } else {
        format!("{v:.2}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat() -> TrajectoryTable {
        TrajectoryTable {
            d: 1,
            n_followers: 2,
            n_leaders: 1,
            times: vec![0.0, 1.0, 2.0],
            states: vec![1.0, 2.0, 3.0, 1.0, 2.0, 3.0, 1.0, 2.0, 3.0],
        }
    }

    #[test]
    fn constant_trajectory_gives_horizontal_lines() {
        let svg = render_svg(&flat());
        let polylines: Vec<&str> = svg.lines().filter(|l| l.starts_with("<polyline")).collect();
        assert_eq!(polylines.len(), 3);
        for line in polylines {
            let pts = line.split("points=\"").nth(1).unwrap().trim_end_matches("\"/>");
            let ys: Vec<&str> = pts.split(' ').map(|p| p.split(',').nth(1).unwrap()).collect();
            assert!(ys.windows(2).all(|w| w[0] == w[1]));
        }
        assert_eq!(svg.matches("class=\"leader\"").count(), 1);
    }

    #[test]
    fn deterministic_and_faceted() {
        let mut t = flat();
        assert_eq!(render_svg(&t), render_svg(&t));
        t.d = 3;
        t.n_followers = 1;
        t.n_leaders = 0;
        assert_eq!(render_svg(&t).matches("coordinate ").count(), 3);
    }
}
