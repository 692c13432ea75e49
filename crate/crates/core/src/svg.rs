//! Minimal static SVG output for heatmaps and sweep curves.

use std::collections::BTreeSet;
use std::fmt::Write;

use crate::experiment::CellResult;

const W: f64 = 640.0;
const H: f64 = 480.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 60.0;

const PALETTE: [&str; 8] = ["#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02", "#a6761d", "#666666"];

fn header(out: &mut String, title: &str) {
    let _ = write!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = write!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = write!(out, r#"<text x="{}" y="18" text-anchor="middle">{}</text>"#, W / 2.0, escape(title));
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn grey(v: f64) -> String {
    let g = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    format!("#{g:02x}{g:02x}{g:02x}")
}

/// Piecewise-linear map from log10(T) to the centre of the matching column.
fn log_position(value: f64, grid: &[f64], centres: &[f64]) -> Option<f64> {
    let x = value.log10();
    let logs: Vec<f64> = grid.iter().map(|g| g.log10()).collect();
    if grid.len() == 1 {
        return (x == logs[0]).then_some(centres[0]);
    }
    if x < logs[0] || x > logs[logs.len() - 1] {
        return None;
    }
    let k = logs.windows(2).position(|w| x <= w[1]).unwrap_or(logs.len() - 2);
    let frac = (x - logs[k]) / (logs[k + 1] - logs[k]);
    Some(centres[k] + frac * (centres[k + 1] - centres[k]))
}

/// PER heatmap over (T, N), black = never recovered, white = always, with
/// the curve T = N² drawn in green.
pub fn heatmap(cells: &[CellResult]) -> String {
    let ts: Vec<usize> = cells.iter().map(|c| c.t).collect::<BTreeSet<_>>().into_iter().collect();
    let ns: Vec<usize> = cells.iter().map(|c| c.params.n()).collect::<BTreeSet<_>>().into_iter().collect();
    let mut out = String::new();
    header(&mut out, "Estimated PER");
    if ts.is_empty() || ns.is_empty() {
        out.push_str("</svg>\n");
        return out;
    }
    let cw = (W - LEFT - RIGHT) / ts.len() as f64;
    let ch = (H - TOP - BOTTOM) / ns.len() as f64;
    let col = |t: usize| ts.iter().position(|&x| x == t).unwrap();
    // N grows upwards
    let row = |n: usize| ns.len() - 1 - ns.iter().position(|&x| x == n).unwrap();

    for c in cells {
        let (x, y) = (LEFT + col(c.t) as f64 * cw, TOP + row(c.params.n()) as f64 * ch);
        let _ = write!(
            out,
            r#"<rect x="{x:.2}" y="{y:.2}" width="{cw:.2}" height="{ch:.2}" fill="{}"><title>N={} T={} PER={:.3}</title></rect>"#,
            grey(c.per_hat),
            c.params.n(),
            c.t,
            c.per_hat
        );
    }
    for (k, t) in ts.iter().enumerate() {
        let _ = write!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{t}</text>"#,
            LEFT + (k as f64 + 0.5) * cw,
            H - BOTTOM + 16.0
        );
    }
    for (k, n) in ns.iter().enumerate() {
        let _ = write!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{n}</text>"#,
            LEFT - 6.0,
            TOP + (ns.len() - 1 - k) as f64 * ch + ch / 2.0 + 4.0
        );
    }
    let _ =
        write!(out, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">T</text>"#, (LEFT + W - RIGHT) / 2.0, H - 20.0);
    let _ = write!(out, r#"<text x="20" y="{:.2}" text-anchor="middle">N</text>"#, (TOP + H - BOTTOM) / 2.0);

    let tf: Vec<f64> = ts.iter().map(|&t| t as f64).collect();
    let centres: Vec<f64> = (0..ts.len()).map(|k| LEFT + (k as f64 + 0.5) * cw).collect();
    let points: Vec<String> = ns
        .iter()
        .enumerate()
        .filter_map(|(k, &n)| {
            let x = log_position((n * n) as f64, &tf, &centres)?;
            Some(format!("{x:.2},{:.2}", TOP + (ns.len() - 1 - k) as f64 * ch + ch / 2.0))
        })
        .collect();
    if points.len() >= 2 {
        let _ =
            write!(out, r##"<polyline points="{}" fill="none" stroke="#00a000" stroke-width="2"/>"##, points.join(" "));
    }
    out.push_str("</svg>\n");
    out
}

/// PER (dashed, ±stderr ribbon) and MMP (solid, ±std ribbon) against T on a
/// log axis, one colour per value of the swept parameter.
pub fn sweep_curves(cells: &[CellResult], param: &str) -> String {
    let mut out = String::new();
    header(&mut out, &format!("PER and MMP, varying {param}"));
    let ts: Vec<usize> = cells.iter().map(|c| c.t).collect::<BTreeSet<_>>().into_iter().collect();
    if ts.is_empty() {
        out.push_str("</svg>\n");
        return out;
    }
    let (tmin, tmax) = ((ts[0] as f64).log10(), (ts[ts.len() - 1] as f64).log10());
    let span = if tmax > tmin { tmax - tmin } else { 1.0 };
    let px = |t: usize| LEFT + ((t as f64).log10() - tmin) / span * (W - LEFT - RIGHT);
    let py = |v: f64| TOP + (1.0 - v.clamp(0.0, 1.0)) * (H - TOP - BOTTOM);

    let _ = write!(
        out,
        r#"<rect x="{LEFT}" y="{TOP}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        W - LEFT - RIGHT,
        H - TOP - BOTTOM
    );
    for k in 0..=4 {
        let v = k as f64 / 4.0;
        let _ = write!(out, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{v}</text>"#, LEFT - 6.0, py(v) + 4.0);
    }
    for &t in &ts {
        let _ = write!(out, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{t}</text>"#, px(t), H - BOTTOM + 16.0);
    }

    let value_of = |c: &CellResult| match param {
        "n" | "N" => c.params.n() as f64,
        "r_plus" => c.params.r_plus(),
        "beta" => c.params.beta(),
        "lambda" => c.params.lambda(),
        _ => c.params.p(),
    };
    let mut groups: Vec<(f64, Vec<&CellResult>)> = Vec::new();
    for c in cells {
        let v = value_of(c);
        match groups.iter_mut().find(|(g, _)| *g == v) {
            Some((_, list)) => list.push(c),
            None => groups.push((v, vec![c])),
        }
    }
    for (k, (value, list)) in groups.iter_mut().enumerate() {
        list.sort_by_key(|c| c.t);
        let colour = PALETTE[k % PALETTE.len()];
        let ribbon = |centre: &dyn Fn(&CellResult) -> f64, half: &dyn Fn(&CellResult) -> f64| {
            let upper = list.iter().map(|c| format!("{:.2},{:.2}", px(c.t), py(centre(c) + half(c))));
            let lower = list.iter().rev().map(|c| format!("{:.2},{:.2}", px(c.t), py(centre(c) - half(c))));
            upper.chain(lower).collect::<Vec<_>>().join(" ")
        };
        let line = |centre: &dyn Fn(&CellResult) -> f64| {
            list.iter().map(|c| format!("{:.2},{:.2}", px(c.t), py(centre(c)))).collect::<Vec<_>>().join(" ")
        };
        let per = |c: &CellResult| c.per_hat;
        let per_se = |c: &CellResult| c.per_stderr;
        let mmp = |c: &CellResult| c.mmp_hat;
        let mmp_sd = |c: &CellResult| c.mmp_std;
        let _ = write!(out, r#"<polygon points="{}" fill="{colour}" fill-opacity="0.2"/>"#, ribbon(&per, &per_se));
        let _ = write!(out, r#"<polygon points="{}" fill="{colour}" fill-opacity="0.2"/>"#, ribbon(&mmp, &mmp_sd));
        let _ = write!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{colour}" stroke-width="2" stroke-dasharray="6 4"/>"#,
            line(&per)
        );
        let _ = write!(out, r#"<polyline points="{}" fill="none" stroke="{colour}" stroke-width="2"/>"#, line(&mmp));
        let _ = write!(
            out,
            r#"<text x="{:.2}" y="{:.2}" fill="{colour}">{param} = {value}</text>"#,
            LEFT + 10.0,
            TOP + 16.0 + 14.0 * k as f64
        );
    }
    let _ =
        write!(out, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">T</text>"#, (LEFT + W - RIGHT) / 2.0, H - 20.0);
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::RecoveryScore;
    use crate::params::ModelParams;

    fn cell(n: usize, t: usize, per: f64) -> CellResult {
        let ok = RecoveryScore { exact: true, misclassified_fraction: 0.0 };
        let mut c = CellResult::from_outcomes(ModelParams::defaults().with_n(n).unwrap(), t, 10, &[ok], 0.0);
        c.per_hat = per;
        c
    }

    #[test]
    fn heatmap_has_one_rect_per_cell_and_curve() {
        let cells: Vec<CellResult> = [10, 20, 40]
            .iter()
            .flat_map(|&n| [100, 1000, 10000].map(|t| cell(n, t, (t as f64 / 100.0).log10() / 2.0)))
            .collect();
        let svg = heatmap(&cells);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<title>").count(), 9);
        assert!(svg.contains("polyline"));
        assert!(svg.contains("#000000") && svg.contains("#ffffff"));
    }

    #[test]
    fn sweep_plot_has_curves_per_value() {
        let cells = vec![cell(10, 100, 0.1), cell(10, 1000, 0.8), cell(20, 100, 0.0), cell(20, 1000, 0.5)];
        let svg = sweep_curves(&cells, "n");
        assert_eq!(svg.matches("stroke-dasharray").count(), 2);
        assert!(svg.contains("n = 10") && svg.contains("n = 20"));
    }

    #[test]
    fn log_axis_mapping() {
        let grid = [100.0, 1000.0, 10000.0];
        let centres = [0.0, 10.0, 20.0];
        assert_eq!(log_position(1000.0, &grid, &centres), Some(10.0));
        assert!((log_position(3162.2776601683795, &grid, &centres).unwrap() - 15.0).abs() < 1e-9);
        assert_eq!(log_position(10.0, &grid, &centres), None);
    }
}
