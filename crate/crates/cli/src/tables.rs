//! Plain-text result tables. Reference scores print through `Display`
//! so the published constants appear digit for digit.

use neurosal::metrics::{MetricSummary, MetricsReport};
use neurosal::train::{Aggregate, FoldSplit};

const LABEL_W: usize = 30;
const CELL_W: usize = 17;

fn row(label: &str, cells: &[String]) -> String {
    let mut line = format!("{label:<LABEL_W$}");
    for cell in cells {
        line.push_str(&format!(" {cell:>CELL_W$}"));
    }
    line.push('\n');
    line
}

fn header() -> String {
    let mut out = row(
        "model",
        &[
            "AUC-Judd".into(),
            "NSS".into(),
            "CC".into(),
            "BCE".into(),
            "trials".into(),
        ],
    );
    out.push_str(&"-".repeat(LABEL_W + 5 * (CELL_W + 1)));
    out.push('\n');
    out
}

fn summary_cell(s: &MetricSummary) -> String {
    format!("{:.4} +- {:.4}", s.mean, s.std)
}

/// Side-by-side comparison of this run's reports and the published
/// reference rows. `reports` pairs a label with its metrics.
pub fn comparison(reports: &[(String, &MetricsReport)]) -> String {
    let mut out = header();
    for (label, report) in reports {
        out.push_str(&row(
            label,
            &[
                summary_cell(&report.auc_judd),
                summary_cell(&report.nss),
                summary_cell(&report.cc),
                summary_cell(&report.bce),
                report.n_trials.to_string(),
            ],
        ));
    }
    if let Some((_, first)) = reports.first() {
        for reference in &first.reference {
            out.push_str(&row(
                &reference.label,
                &[
                    format!("{}", reference.auc_judd),
                    format!("{}", reference.nss),
                    format!("{}", reference.cc),
                    "-".into(),
                    "-".into(),
                ],
            ));
        }
    }
    out
}

/// Per-trial breakdown appended below the comparison.
pub fn per_trial(report: &MetricsReport) -> String {
    let mut out = String::new();
    out.push_str(&row(
        "trial",
        &[
            "AUC-Judd".into(),
            "NSS".into(),
            "CC".into(),
            "BCE".into(),
            "flags".into(),
        ],
    ));
    for t in &report.per_trial {
        out.push_str(&row(
            &format!("{}/{}", t.participant_id, t.trial_id),
            &[
                format!("{:.4}", t.auc_judd),
                format!("{:.4}", t.nss),
                format!("{:.4}", t.cc),
                format!("{:.4}", t.bce),
                if t.flags.is_empty() {
                    "-".into()
                } else {
                    t.flags.join(",")
                },
            ],
        ));
    }
    out.push_str(&row(
        "mean",
        &[
            format!("{:.4}", report.auc_judd.mean),
            format!("{:.4}", report.nss.mean),
            format!("{:.4}", report.cc.mean),
            format!("{:.4}", report.bce.mean),
            format!("skipped {}", report.n_skipped),
        ],
    ));
    out
}

/// Cross-validation table: one row per fold plus the aggregate.
pub fn crossval(folds: &[(FoldSplit, &MetricsReport)], aggregate: &Aggregate) -> String {
    let mut out = row(
        "fold (test participants)",
        &[
            "AUC-Judd".into(),
            "NSS".into(),
            "CC".into(),
            "BCE".into(),
            "trials".into(),
        ],
    );
    out.push_str(&"-".repeat(LABEL_W + 5 * (CELL_W + 1)));
    out.push('\n');
    for (split, report) in folds {
        out.push_str(&row(
            &format!("{} ({})", split.fold_index, split.participants.join(",")),
            &[
                format!("{:.4}", report.auc_judd.mean),
                format!("{:.4}", report.nss.mean),
                format!("{:.4}", report.cc.mean),
                format!("{:.4}", report.bce.mean),
                report.n_trials.to_string(),
            ],
        ));
    }
    out.push_str(&row(
        &format!("aggregate ({} folds)", aggregate.n_folds),
        &[
            summary_cell(&aggregate.auc_judd),
            summary_cell(&aggregate.nss),
            summary_cell(&aggregate.cc),
            summary_cell(&aggregate.bce),
            "-".into(),
        ],
    ));
    out
}
