//! Convergence plot: validation NDCG@20 and total loss versus epoch, emitted
//! as a self-contained SVG. Output bytes are a pure function of the log.

use std::fs;
use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};

use crate::report::LogLine;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 480.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 70.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 50.0;

struct Axis {
    lo: f64,
    hi: f64,
}

impl Axis {
    /// Range covering every sample, padded so flat series stay visible.
    fn covering(values: impl Iterator<Item = f64>) -> Axis {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for v in values {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !(lo.is_finite() && hi.is_finite()) {
            return Axis { lo: 0.0, hi: 1.0 };
        }
        if hi - lo < 1e-12 {
            let pad = lo.abs().max(1.0) * 0.05;
            return Axis {
                lo: lo - pad,
                hi: hi + pad,
            };
        }
        Axis { lo, hi }
    }

    fn to_y(&self, v: f64) -> f64 {
        let t = (v - self.lo) / (self.hi - self.lo);
        HEIGHT - MARGIN_B - t * (HEIGHT - MARGIN_T - MARGIN_B)
    }
}

fn x_of(epoch: usize, max_epoch: usize) -> f64 {
    let span = (WIDTH - MARGIN_L - MARGIN_R).max(1.0);
    if max_epoch == 0 {
        return MARGIN_L + span / 2.0;
    }
    MARGIN_L + epoch as f64 / max_epoch as f64 * span
}

fn polyline(points: &[(f64, f64)], color: &str) -> String {
    let mut p = String::new();
    for &(x, y) in points {
        let _ = write!(p, "{x:.3},{y:.3} ");
    }
    format!(
        "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
        p.trim_end()
    )
}

/// Render the convergence chart. Fails on an empty log.
pub fn render_convergence(log: &[LogLine]) -> Result<String> {
    if log.is_empty() {
        bail!("cannot plot an empty convergence log");
    }
    let max_epoch = log.iter().map(|l| l.epoch).max().unwrap();
    let loss_axis = Axis::covering(log.iter().map(|l| l.loss_total));
    let ndcg_axis = Axis::covering(log.iter().map(|l| l.ndcg20_valid));

    let loss_pts: Vec<(f64, f64)> = log
        .iter()
        .map(|l| (x_of(l.epoch, max_epoch), loss_axis.to_y(l.loss_total)))
        .collect();
    let ndcg_pts: Vec<(f64, f64)> = log
        .iter()
        .map(|l| (x_of(l.epoch, max_epoch), ndcg_axis.to_y(l.ndcg20_valid)))
        .collect();

    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">"
    );
    let _ = writeln!(
        s,
        "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>"
    );
    // plot frame
    let _ = writeln!(
        s,
        "<rect x=\"{MARGIN_L}\" y=\"{MARGIN_T}\" width=\"{:.3}\" height=\"{:.3}\" fill=\"none\" stroke=\"black\"/>",
        WIDTH - MARGIN_L - MARGIN_R,
        HEIGHT - MARGIN_T - MARGIN_B
    );
    s.push_str(&polyline(&loss_pts, "#d62728"));
    s.push_str(&polyline(&ndcg_pts, "#1f77b4"));
    // axis annotations: extrema of both series plus the epoch span
    let _ = writeln!(
        s,
        "<text x=\"8\" y=\"{:.3}\" font-size=\"11\" fill=\"#d62728\">{:.6}</text>",
        MARGIN_T + 10.0,
        loss_axis.hi
    );
    let _ = writeln!(
        s,
        "<text x=\"8\" y=\"{:.3}\" font-size=\"11\" fill=\"#d62728\">{:.6}</text>",
        HEIGHT - MARGIN_B,
        loss_axis.lo
    );
    let _ = writeln!(
        s,
        "<text x=\"{:.3}\" y=\"{:.3}\" font-size=\"11\" fill=\"#1f77b4\">{:.6}</text>",
        WIDTH - MARGIN_R + 4.0,
        MARGIN_T + 10.0,
        ndcg_axis.hi
    );
    let _ = writeln!(
        s,
        "<text x=\"{:.3}\" y=\"{:.3}\" font-size=\"11\" fill=\"#1f77b4\">{:.6}</text>",
        WIDTH - MARGIN_R + 4.0,
        HEIGHT - MARGIN_B,
        ndcg_axis.lo
    );
    let _ = writeln!(
        s,
        "<text x=\"{MARGIN_L}\" y=\"{:.3}\" font-size=\"11\">epoch 0</text>",
        HEIGHT - MARGIN_B + 16.0
    );
    let _ = writeln!(
        s,
        "<text x=\"{:.3}\" y=\"{:.3}\" font-size=\"11\" text-anchor=\"end\">epoch {max_epoch}</text>",
        WIDTH - MARGIN_R,
        HEIGHT - MARGIN_B + 16.0
    );
    let _ = writeln!(
        s,
        "<text x=\"{MARGIN_L}\" y=\"{:.3}\" font-size=\"12\"><tspan fill=\"#d62728\">loss_total</tspan> <tspan fill=\"#1f77b4\">ndcg20_valid</tspan></text>",
        MARGIN_T - 12.0
    );
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn write_convergence(path: &Path, log: &[LogLine]) -> Result<()> {
    let svg = render_convergence(log)?;
    fs::write(path, svg).with_context(|| format!("writing {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(epoch: usize, loss: f64, ndcg: f64) -> LogLine {
        LogLine {
            epoch,
            loss_total: loss,
            loss_bpr: loss * 0.8,
            loss_cl: loss * 0.2,
            recall20_valid: ndcg * 1.5,
            ndcg20_valid: ndcg,
            epoch_seconds: 0.1,
        }
    }

    #[test]
    fn empty_log_is_an_error() {
        assert!(render_convergence(&[]).is_err());
    }

    #[test]
    fn output_is_deterministic_and_well_formed() {
        let log = vec![line(0, 2.0, 0.01), line(1, 1.5, 0.02), line(2, 1.2, 0.05)];
        let a = render_convergence(&log).unwrap();
        let b = render_convergence(&log).unwrap();
        assert_eq!(a, b);
        assert!(a.starts_with("<svg"));
        assert!(a.trim_end().ends_with("</svg>"));
        assert_eq!(a.matches("<polyline").count(), 2);
    }

    #[test]
    fn axis_labels_cover_the_extrema() {
        let log = vec![line(0, 3.25, 0.015625), line(1, 1.125, 0.09375)];
        let svg = render_convergence(&log).unwrap();
        for needle in ["3.250000", "1.125000", "0.093750", "0.015625"] {
            assert!(svg.contains(needle), "missing {needle} in\n{svg}");
        }
    }

    #[test]
    fn single_epoch_and_flat_series_render() {
        let svg = render_convergence(&[line(0, 1.0, 0.5)]).unwrap();
        assert!(svg.contains("epoch 0"));
        // flat two-point series: padded axis keeps coordinates finite
        let svg2 = render_convergence(&[line(0, 1.0, 0.5), line(1, 1.0, 0.5)]).unwrap();
        assert!(!svg2.contains("NaN") && !svg2.contains("inf"));
    }
}
