//! SVG line charts of sweep results: per disease one chart each for TPR,
//! TNR and kappa against the positive training count, one line per feature
//! mode, points averaged over repetitions. Output is plain hand-emitted
//! SVG, byte-stable for a fixed input.

use std::path::{Path, PathBuf};

use crate::metrics::{aggregate, MetricsRecord};
use crate::tensor::Result;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN_L: f64 = 60.0;
const MARGIN_R: f64 = 150.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 50.0;

/// Fixed mode palette, in canonical mode order.
const PALETTE: [(&str, &str); 5] = [
    ("IMG", "#888888"),
    ("SEG", "#1f77b4"),
    ("IMG+SEG", "#17becf"),
    ("CONCAT", "#d62728"),
    ("IMG+CONCAT", "#ff7f0e"),
];

fn color_of(mode: &str) -> &'static str {
    PALETTE
        .iter()
        .find(|(m, _)| *m == mode)
        .map(|(_, c)| *c)
        .unwrap_or("#000000")
}

fn fmt(v: f64) -> String {
    format!("{v:.2}")
}

/// Render one metric chart for one disease.
fn render_chart(
    disease: &str,
    metric_name: &str,
    series: &[(String, Vec<(usize, f64)>)],
    y_min: f64,
) -> String {
    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    let plot_h = HEIGHT - MARGIN_T - MARGIN_B;

    let xs: Vec<usize> = {
        let mut v: Vec<usize> = series.iter().flat_map(|(_, pts)| pts.iter().map(|(x, _)| *x)).collect();
        v.sort_unstable();
        v.dedup();
        v
    };
    let (x_lo, x_hi) = match (xs.first(), xs.last()) {
        (Some(&a), Some(&b)) if a != b => (a as f64, b as f64),
        (Some(&a), _) => (a as f64 - 0.5, a as f64 + 0.5),
        _ => (0.0, 1.0),
    };
    let x_of = |x: f64| MARGIN_L + (x - x_lo) / (x_hi - x_lo) * plot_w;
    let y_of = |y: f64| MARGIN_T + (1.0 - (y - y_min) / (1.0 - y_min)) * plot_h;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\" text-anchor=\"middle\">{} — {}</text>\n",
        MARGIN_L + plot_w / 2.0,
        disease,
        metric_name
    ));

    // Axes.
    svg.push_str(&format!(
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        MARGIN_L,
        MARGIN_T + plot_h,
        MARGIN_L + plot_w,
        MARGIN_T + plot_h
    ));
    svg.push_str(&format!(
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        MARGIN_L, MARGIN_T, MARGIN_L, MARGIN_T + plot_h
    ));

    // Y ticks every 0.1 from y_min to 1.
    let mut tick = y_min;
    while tick <= 1.0 + 1e-9 {
        let y = y_of(tick);
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#dddddd\"/>\n",
            MARGIN_L,
            fmt(y),
            MARGIN_L + plot_w,
            fmt(y)
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">{}</text>\n",
            MARGIN_L - 6.0,
            fmt(y + 4.0),
            fmt(tick)
        ));
        tick += 0.1;
    }
    // X ticks at the swept points.
    for &x in &xs {
        let px = x_of(x as f64);
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
            fmt(px),
            MARGIN_T + plot_h,
            fmt(px),
            MARGIN_T + plot_h + 5.0
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">{x}</text>\n",
            fmt(px),
            MARGIN_T + plot_h + 18.0
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">positive training samples</text>\n",
        MARGIN_L + plot_w / 2.0,
        HEIGHT - 12.0
    ));

    // One polyline plus legend row per mode.
    for (si, (mode, points)) in series.iter().enumerate() {
        if points.is_empty() {
            continue;
        }
        let color = color_of(mode);
        let path: Vec<String> = points
            .iter()
            .map(|(x, y)| format!("{},{}", fmt(x_of(*x as f64)), fmt(y_of(*y))))
            .collect();
        svg.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\"/>\n",
            path.join(" ")
        ));
        for (x, y) in points {
            svg.push_str(&format!(
                "<circle cx=\"{}\" cy=\"{}\" r=\"3\" fill=\"{color}\"/>\n",
                fmt(x_of(*x as f64)),
                fmt(y_of(*y))
            ));
        }
        let ly = MARGIN_T + 14.0 + si as f64 * 18.0;
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{color}\" stroke-width=\"2\"/>\n",
            WIDTH - MARGIN_R + 10.0,
            fmt(ly - 4.0),
            WIDTH - MARGIN_R + 34.0,
            fmt(ly - 4.0)
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\">{mode}</text>\n",
            WIDTH - MARGIN_R + 40.0,
            fmt(ly)
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

/// Emit `<disease>_<metric>.svg` files under `out_dir`; returns the paths.
pub fn render_sweep_charts(records: &[MetricsRecord], out_dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir)?;
    let stats = aggregate(records)?;

    let mut diseases: Vec<String> = stats.iter().map(|g| g.disease.clone()).collect();
    diseases.sort();
    diseases.dedup();
    let mut modes: Vec<String> = stats.iter().map(|g| g.mode.clone()).collect();
    // Canonical palette order first, anything unknown after.
    modes.sort_by_key(|m| PALETTE.iter().position(|(p, _)| p == m).unwrap_or(PALETTE.len()));
    modes.dedup();

    let mut paths = Vec::new();
    for disease in &diseases {
        for (metric_name, getter, y_min) in [
            ("TPR", (|g: &crate::metrics::GroupStats| g.tpr.0) as fn(&crate::metrics::GroupStats) -> f64, 0.0),
            ("TNR", |g| g.tnr.0, 0.0),
            ("kappa", |g| g.kappa.0, -0.2),
        ] {
            let series: Vec<(String, Vec<(usize, f64)>)> = modes
                .iter()
                .map(|mode| {
                    let mut pts: Vec<(usize, f64)> = stats
                        .iter()
                        .filter(|g| &g.disease == disease && &g.mode == mode)
                        .map(|g| (g.n_pos_train, getter(g)))
                        .collect();
                    pts.sort_by_key(|(x, _)| *x);
                    (mode.clone(), pts)
                })
                .collect();
            let svg = render_chart(disease, metric_name, &series, y_min);
            let path = out_dir.join(format!("{disease}_{metric_name}.svg"));
            std::fs::write(&path, svg)?;
            paths.push(path);
        }
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(disease: &str, mode: &str, n_pos: usize, rep: usize, v: f64) -> MetricsRecord {
        MetricsRecord {
            disease: disease.into(),
            mode: mode.into(),
            n_pos_train: n_pos,
            repetition: rep,
            tpr: v,
            tnr: 0.5 + v / 2.0,
            kappa: v - 0.1,
        }
    }

    #[test]
    fn charts_are_valid_ish_svg_and_byte_stable() {
        let records = vec![
            rec("effusion", "IMG", 1, 0, 0.3),
            rec("effusion", "IMG", 2, 0, 0.5),
            rec("effusion", "CONCAT", 1, 0, 0.8),
            rec("effusion", "CONCAT", 2, 0, 0.9),
        ];
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let p1 = render_sweep_charts(&records, d1.path()).unwrap();
        let p2 = render_sweep_charts(&records, d2.path()).unwrap();
        assert_eq!(p1.len(), 3);
        for (a, b) in p1.iter().zip(&p2) {
            let ba = std::fs::read(a).unwrap();
            let bb = std::fs::read(b).unwrap();
            assert_eq!(ba, bb);
            let text = String::from_utf8(ba).unwrap();
            assert!(text.starts_with("<svg"));
            assert!(text.ends_with("</svg>\n"));
            // Angle brackets balance.
            assert_eq!(text.matches('<').count(), text.matches('>').count());
            assert!(text.contains("polyline"));
        }
    }

    #[test]
    fn plotted_points_are_aggregate_means() {
        let records = vec![
            rec("septal", "SEG", 3, 0, 0.4),
            rec("septal", "SEG", 3, 1, 0.6),
        ];
        let dir = tempfile::tempdir().unwrap();
        render_sweep_charts(&records, dir.path()).unwrap();
        let text = std::fs::read_to_string(dir.path().join("septal_TPR.svg")).unwrap();
        // Mean tpr 0.5 on a [0,1] axis of height 330 => y = 40 + 0.5*330 = 205.
        assert!(text.contains("cy=\"205.00\""), "{text}");
    }

    #[test]
    fn empty_mode_series_do_not_crash() {
        let records = vec![rec("effusion", "IMG", 1, 0, 0.2)];
        let dir = tempfile::tempdir().unwrap();
        let paths = render_sweep_charts(&records, dir.path()).unwrap();
        assert_eq!(paths.len(), 3);
    }
}
