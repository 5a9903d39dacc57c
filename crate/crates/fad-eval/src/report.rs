//! Corpus-level metric reports, computed separately on the expression and
//! rotation views and emitted as CSV or JSON.

use std::fmt;
use std::fs;
use std::path::Path;

use fad_core::{split_metric_views, Tensor32, EXPRESSION_DIM, ROTATION_DIM};
use serde::Serialize;

use crate::error::{EvalError, Result};
use crate::frechet::frechet_distance;
use crate::kmeans::{shannon_index, KMeansModel};
use crate::l2::l2_metric;
use crate::tlcc::tlcc;

/// The two coefficient views metrics are computed on; never mixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricView {
    Expression,
    Rotation,
}

impl MetricView {
    pub fn name(self) -> &'static str {
        match self {
            MetricView::Expression => "expression",
            MetricView::Rotation => "rotation",
        }
    }

    pub fn dim(self) -> usize {
        match self {
            MetricView::Expression => EXPRESSION_DIM,
            MetricView::Rotation => ROTATION_DIM,
        }
    }
}

impl fmt::Display for MetricView {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One view's metric values. TLCC fields are `None` when every sequence's
/// activity trace was constant (reported as `--` in CSV, `null` in JSON).
#[derive(Debug, Clone, Serialize)]
pub struct MetricReport {
    pub l2: f64,
    pub fd: f64,
    pub si: f64,
    pub tlcc_peak_corr: Option<f64>,
    pub tlcc_peak_lag: Option<f64>,
}

/// A labeled report line: one method evaluated on one view.
#[derive(Debug, Clone, Serialize)]
pub struct ReportRow {
    pub method: String,
    pub view: MetricView,
    #[serde(flatten)]
    pub report: MetricReport,
}

impl ReportRow {
    pub fn new(method: impl Into<String>, view: MetricView, report: MetricReport) -> Self {
        ReportRow {
            method: method.into(),
            view,
            report,
        }
    }
}

/// Concatenates `[T_i, D]` matrices along the frame axis.
pub fn pool_rows(seqs: &[Tensor32]) -> Result<Tensor32> {
    if seqs.is_empty() {
        return Err(EvalError::invalid("cannot pool an empty sequence list"));
    }
    let d = seqs[0].shape()[1];
    let mut data = Vec::new();
    let mut rows = 0;
    for s in seqs {
        if s.rank() != 2 || s.shape()[1] != d {
            return Err(EvalError::invalid(format!(
                "pooled sequences must share a column count: {:?} vs [_, {d}]",
                s.shape()
            )));
        }
        rows += s.shape()[0];
        data.extend_from_slice(s.data());
    }
    Ok(Tensor32::new(vec![rows, d], data)?)
}

/// Evaluates one view of a prediction corpus.
///
/// `preds`, `gts`, and `speakers` are parallel per-sequence `[T, D]` lists in
/// the view's dimension. L2 averages per-sequence values; FD compares pooled
/// prediction frames against pooled ground-truth frames; SI clusters pooled
/// predictions with the train-fitted `km`; TLCC correlates each prediction
/// with its speaker, averaging over sequences whose traces are non-constant.
pub fn evaluate_view(
    preds: &[Tensor32],
    gts: &[Tensor32],
    speakers: &[Tensor32],
    km: &KMeansModel,
    max_lag: usize,
) -> Result<MetricReport> {
    if preds.is_empty() || preds.len() != gts.len() || preds.len() != speakers.len() {
        return Err(EvalError::invalid(format!(
            "need equal non-empty sequence lists, got preds={}, gts={}, speakers={}",
            preds.len(),
            gts.len(),
            speakers.len()
        )));
    }
    let mut l2_sum = 0.0;
    for (p, g) in preds.iter().zip(gts) {
        l2_sum += l2_metric(p, g)?;
    }
    let l2 = l2_sum / preds.len() as f64;

    let pooled_pred = pool_rows(preds)?;
    let pooled_gt = pool_rows(gts)?;
    let fd = frechet_distance(&pooled_pred, &pooled_gt)?;
    let si = shannon_index(&pooled_pred, km)?;

    let mut corrs = Vec::new();
    let mut lags = Vec::new();
    for (p, s) in preds.iter().zip(speakers) {
        match tlcc(p, s, max_lag) {
            Ok((c, lag)) => {
                corrs.push(c);
                lags.push(lag as f64);
            }
            Err(EvalError::Degenerate(_)) => {}
            Err(e) => return Err(e),
        }
    }
    let (tlcc_peak_corr, tlcc_peak_lag) = if corrs.is_empty() {
        (None, None)
    } else {
        let n = corrs.len() as f64;
        (
            Some(corrs.iter().sum::<f64>() / n),
            Some(lags.iter().sum::<f64>() / n),
        )
    };

    Ok(MetricReport {
        l2,
        fd,
        si,
        tlcc_peak_corr,
        tlcc_peak_lag,
    })
}

/// Splits `[T, 56]` motion corpora into views and evaluates each with its own
/// clustering; returns `(expression, rotation)` reports.
pub fn evaluate_both_views(
    preds: &[Tensor32],
    gts: &[Tensor32],
    speakers: &[Tensor32],
    km_expr: &KMeansModel,
    km_rot: &KMeansModel,
    max_lag: usize,
) -> Result<(MetricReport, MetricReport)> {
    let split = |seqs: &[Tensor32]| -> Result<(Vec<Tensor32>, Vec<Tensor32>)> {
        let mut expr = Vec::with_capacity(seqs.len());
        let mut rot = Vec::with_capacity(seqs.len());
        for s in seqs {
            let (e, r) = split_metric_views(s)?;
            expr.push(e);
            rot.push(r);
        }
        Ok((expr, rot))
    };
    let (pe, pr) = split(preds)?;
    let (ge, gr) = split(gts)?;
    let (se, sr) = split(speakers)?;
    let expr = evaluate_view(&pe, &ge, &se, km_expr, max_lag)?;
    let rot = evaluate_view(&pr, &gr, &sr, km_rot, max_lag)?;
    Ok((expr, rot))
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:.6}"),
        None => "--".to_string(),
    }
}

/// Renders rows as CSV with the header
/// `method,view,l2,fd,si,tlcc_corr,tlcc_lag`; undefined TLCC prints `--`.
pub fn rows_to_csv(rows: &[ReportRow]) -> String {
    let mut out = String::from("method,view,l2,fd,si,tlcc_corr,tlcc_lag\n");
    for row in rows {
        out.push_str(&format!(
            "{},{},{:.6},{:.6},{:.6},{},{}\n",
            row.method,
            row.view,
            row.report.l2,
            row.report.fd,
            row.report.si,
            fmt_opt(row.report.tlcc_peak_corr),
            fmt_opt(row.report.tlcc_peak_lag),
        ));
    }
    out
}

pub fn write_csv(path: &Path, rows: &[ReportRow]) -> Result<()> {
    fs::write(path, rows_to_csv(rows))?;
    Ok(())
}

pub fn write_json(path: &Path, rows: &[ReportRow]) -> Result<()> {
    let mut text = serde_json::to_string_pretty(rows)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kmeans::kmeans_fit;
    use fad_core::derive_rng;

    fn wavy(seed: u64, t: usize, d: usize) -> Tensor32 {
        let mut rng = derive_rng(seed, "report-test", 0);
        let noise = Tensor32::randn(vec![t, d], &mut rng);
        let mut data = Vec::with_capacity(t * d);
        for f in 0..t {
            for c in 0..d {
                data.push(
                    (0.19 * f as f32 + 0.8 * c as f32).sin() + 0.3 * noise.data()[f * d + c],
                );
            }
        }
        Tensor32::new(vec![t, d], data).unwrap()
    }

    #[test]
    fn pooling_concatenates_frames_in_order() {
        let a = Tensor32::new(vec![2, 3], vec![1., 2., 3., 4., 5., 6.]).unwrap();
        let b = Tensor32::new(vec![1, 3], vec![7., 8., 9.]).unwrap();
        let pooled = pool_rows(&[a, b]).unwrap();
        assert_eq!(pooled.shape(), &[3, 3]);
        assert_eq!(pooled.data(), &[1., 2., 3., 4., 5., 6., 7., 8., 9.]);
        let c = Tensor32::zeros(vec![2, 4]);
        assert!(pool_rows(&[pooled, c]).is_err());
    }

    #[test]
    fn perfect_predictions_score_perfectly() {
        let seqs: Vec<Tensor32> = (0..4).map(|i| wavy(i, 90, 5)).collect();
        let train = pool_rows(&seqs).unwrap();
        let km = kmeans_fit(&train, 3, 0).unwrap();
        // Predictions equal ground truth, and the speaker view equals the
        // prediction, so TLCC must peak at lag 0 with correlation 1.
        let report = evaluate_view(&seqs, &seqs, &seqs, &km, 10).unwrap();
        assert_eq!(report.l2, 0.0);
        assert!(report.fd < 1e-8, "fd {}", report.fd);
        assert_eq!(report.tlcc_peak_lag, Some(0.0));
        assert!((report.tlcc_peak_corr.unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn constant_predictions_report_undefined_tlcc_and_zero_si() {
        let gts: Vec<Tensor32> = (0..3).map(|i| wavy(10 + i, 90, 4)).collect();
        let speakers: Vec<Tensor32> = (0..3).map(|i| wavy(20 + i, 90, 4)).collect();
        let preds: Vec<Tensor32> = (0..3).map(|_| Tensor32::filled(vec![90, 4], 0.2)).collect();
        let train = pool_rows(&gts).unwrap();
        let km = kmeans_fit(&train, 3, 0).unwrap();
        let report = evaluate_view(&preds, &gts, &speakers, &km, 10).unwrap();
        assert_eq!(report.tlcc_peak_corr, None);
        assert_eq!(report.tlcc_peak_lag, None);
        assert_eq!(report.si, 0.0);
        assert!(report.l2 > 0.0);
    }

    #[test]
    fn csv_layout_is_stable() {
        let rows = vec![
            ReportRow::new(
                "ours",
                MetricView::Expression,
                MetricReport {
                    l2: 1.25,
                    fd: 0.5,
                    si: 2.0,
                    tlcc_peak_corr: Some(0.75),
                    tlcc_peak_lag: Some(4.0),
                },
            ),
            ReportRow::new(
                "median",
                MetricView::Rotation,
                MetricReport {
                    l2: 2.0,
                    fd: 1.0,
                    si: 0.0,
                    tlcc_peak_corr: None,
                    tlcc_peak_lag: None,
                },
            ),
        ];
        let csv = rows_to_csv(&rows);
        let expected = "method,view,l2,fd,si,tlcc_corr,tlcc_lag\n\
             ours,expression,1.250000,0.500000,2.000000,0.750000,4.000000\n\
             median,rotation,2.000000,1.000000,0.000000,--,--\n";
        assert_eq!(csv, expected);
    }

    #[test]
    fn json_uses_null_for_undefined_tlcc() {
        let rows = vec![ReportRow::new(
            "median",
            MetricView::Expression,
            MetricReport {
                l2: 1.0,
                fd: 2.0,
                si: 0.0,
                tlcc_peak_corr: None,
                tlcc_peak_lag: None,
            },
        )];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.json");
        write_json(&path, &rows).unwrap();
        let value: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(value[0]["method"], "median");
        assert_eq!(value[0]["view"], "expression");
        assert_eq!(value[0]["l2"], 1.0);
        assert!(value[0]["tlcc_peak_corr"].is_null());
    }

    #[test]
    fn both_views_are_computed_independently() {
        use fad_core::MOTION_DIM;
        let motions: Vec<Tensor32> = (0..3).map(|i| wavy(30 + i, 80, MOTION_DIM)).collect();
        let expr_views: Vec<Tensor32> = motions
            .iter()
            .map(|m| split_metric_views(m).unwrap().0)
            .collect();
        let rot_views: Vec<Tensor32> = motions
            .iter()
            .map(|m| split_metric_views(m).unwrap().1)
            .collect();
        let km_e = kmeans_fit(&pool_rows(&expr_views).unwrap(), 4, 0).unwrap();
        let km_r = kmeans_fit(&pool_rows(&rot_views).unwrap(), 4, 0).unwrap();
        let (expr, rot) =
            evaluate_both_views(&motions, &motions, &motions, &km_e, &km_r, 10).unwrap();
        let direct_e = evaluate_view(&expr_views, &expr_views, &expr_views, &km_e, 10).unwrap();
        let direct_r = evaluate_view(&rot_views, &rot_views, &rot_views, &km_r, 10).unwrap();
        assert_eq!(expr.fd, direct_e.fd);
        assert_eq!(rot.fd, direct_r.fd);
        assert_eq!(expr.si, direct_e.si);
        assert_eq!(rot.si, direct_r.si);
    }

    #[test]
    fn mismatched_list_lengths_are_rejected() {
        let a = vec![wavy(1, 70, 3)];
        let b = vec![wavy(2, 70, 3), wavy(3, 70, 3)];
        let km = kmeans_fit(&a[0], 2, 0).unwrap();
        assert!(evaluate_view(&a, &b, &a, &km, 10).is_err());
    }
}
