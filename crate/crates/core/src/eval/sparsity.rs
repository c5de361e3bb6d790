//! Posterior weight concentration read back from training metrics.

use std::fs;
use std::path::Path;

use super::report::EvalReport;
use crate::error::{MvpError, Result};
use crate::training::{median, EpochMetrics, METRICS_HEADER};

fn parse_err(line: usize, detail: impl Into<String>) -> MvpError {
    MvpError::ParseLine {
        what: "metrics csv".into(),
        line,
        detail: detail.into(),
    }
}

pub fn parse_metrics_csv(text: &str) -> Result<Vec<EpochMetrics>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == METRICS_HEADER => {}
        _ => return Err(parse_err(1, format!("expected header `{METRICS_HEADER}`"))),
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let n = i + 2;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 6 {
            return Err(parse_err(n, format!("{} fields, expected 6", f.len())));
        }
        let num = |k: usize| -> Result<f64> {
            f[k].trim().parse().map_err(|_| parse_err(n, format!("bad number `{}`", f[k])))
        };
        out.push(EpochMetrics {
            epoch: f[0].trim().parse().map_err(|_| parse_err(n, format!("bad epoch `{}`", f[0])))?,
            mean_loss: num(1)?,
            elbo_estimate: num(2)?,
            max_weight_median: num(3)?,
            weight_sparsity_fraction: num(4)?,
            wall_seconds: num(5)?,
        });
    }
    Ok(out)
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<EpochMetrics>> {
    let text = fs::read_to_string(path).map_err(|e| MvpError::io(path, e))?;
    parse_metrics_csv(&text)
}

/// The last `ceil(n / 3)` epochs.
pub fn final_third(metrics: &[EpochMetrics]) -> &[EpochMetrics] {
    let k = metrics.len().div_ceil(3);
    &metrics[metrics.len() - k..]
}

/// Per-epoch weight statistics with late-training summaries.
///
/// With `comparison` (usually the weighted-average run next to a one-sample
/// run) the ratio of final losses is reported as `final_loss_ratio`.
pub fn weight_sparsity_stats(metrics: &[EpochMetrics], comparison: Option<&[EpochMetrics]>) -> Result<EvalReport> {
    if metrics.len() < 2 {
        return Err(MvpError::contract("sparsity statistics need at least 2 epochs"));
    }
    let mut report = EvalReport::new(
        "sparsity",
        ["mean_loss", "max_weight_median", "weight_sparsity_fraction"]
            .map(String::from)
            .to_vec(),
    );
    for m in metrics {
        report.push_row(
            format!("epoch{}", m.epoch),
            vec![m.mean_loss, m.max_weight_median, m.weight_sparsity_fraction],
        )?;
    }
    let late = final_third(metrics);
    let mut medians: Vec<f64> = late.iter().map(|m| m.max_weight_median).collect();
    report.push_scalar("late_max_weight_median", median(&mut medians));
    report.push_scalar(
        "late_sparsity_fraction",
        late.iter().map(|m| m.weight_sparsity_fraction).sum::<f64>() / late.len() as f64,
    );
    let first = metrics[0].mean_loss;
    let last = metrics[metrics.len() - 1].mean_loss;
    report.push_scalar("first_loss", first);
    report.push_scalar("final_loss", last);
    report.push_scalar("final_over_first", last / first);
    if let Some(other) = comparison {
        let o = other
            .last()
            .ok_or_else(|| MvpError::contract("comparison run has no epochs"))?;
        report.push_scalar("comparison_final_loss", o.mean_loss);
        report.push_scalar("final_loss_ratio", last / o.mean_loss);
    }
    report.push_meta("epochs", metrics.len());
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn epoch(e: usize, loss: f64, w: f64) -> EpochMetrics {
        EpochMetrics {
            epoch: e,
            mean_loss: loss,
            elbo_estimate: -loss,
            max_weight_median: w,
            weight_sparsity_fraction: if w > 0.9 { 1.0 } else { 0.0 },
            wall_seconds: 0.5,
        }
    }

    #[test]
    fn csv_roundtrip() {
        let ms = vec![epoch(1, 3.0, 0.05), epoch(2, 2.0, 1.0)];
        let mut text = format!("{METRICS_HEADER}\n");
        for m in &ms {
            text.push_str(&m.csv_row());
            text.push('\n');
        }
        let back = parse_metrics_csv(&text).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[1].max_weight_median, 1.0);
        assert_eq!(back[0].mean_loss, 3.0);
    }

    #[test]
    fn malformed_rows_report_lines() {
        let text = format!("{METRICS_HEADER}\n1,2,3\n");
        match parse_metrics_csv(&text) {
            Err(MvpError::ParseLine { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        assert!(parse_metrics_csv("epoch,loss\n").is_err());
    }

    #[test]
    fn uniform_weights_give_one_over_s() {
        let s = 20.0;
        let ms: Vec<_> = (1..=6).map(|e| epoch(e, 1.0, 1.0 / s)).collect();
        let r = weight_sparsity_stats(&ms, None).unwrap();
        assert_eq!(r.scalar("late_max_weight_median"), Some(0.05));
        assert_eq!(r.scalar("late_sparsity_fraction"), Some(0.0));
    }

    #[test]
    fn late_third_and_loss_ratio() {
        let ms: Vec<_> = (1..=7).map(|e| epoch(e, 8.0 / e as f64, e as f64 / 7.0)).collect();
        assert_eq!(final_third(&ms).len(), 3);
        let other = vec![epoch(1, 4.0, 0.1), epoch(2, 2.0, 0.1)];
        let r = weight_sparsity_stats(&ms, Some(&other)).unwrap();
        assert_eq!(r.scalar("late_max_weight_median"), Some(6.0 / 7.0));
        assert!((r.scalar("final_loss_ratio").unwrap() - (8.0 / 7.0) / 2.0).abs() < 1e-15);
        assert!(weight_sparsity_stats(&ms[..1], None).is_err());
    }
}
