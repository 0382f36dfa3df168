//! Posterior summary tables: mean, standard deviation, and the
//! {2.5, 25, 50, 75, 97.5}% quantiles of each cube row.

use crate::math::{mean, quantile_sorted, sample_sd};

use super::EstimandCube;

pub const QUANTILES: [f64; 5] = [0.025, 0.25, 0.5, 0.75, 0.975];

#[derive(Debug, Clone)]
pub struct SummaryRow {
    pub label: String,
    pub mean: f64,
    pub sd: f64,
    pub quantiles: [f64; 5],
}

#[derive(Debug, Clone)]
pub struct SummaryTable {
    pub rows: Vec<SummaryRow>,
    /// Flagged (row, draw) entries excluded from the summaries.
    pub dropped_draws: usize,
}

/// Summarize every row of a cube. NaN draws (flagged degenerate weights)
/// are excluded, with the count carried on the table.
pub fn summarize(cube: &EstimandCube) -> SummaryTable {
    let mut rows = Vec::with_capacity(cube.n_rows());
    for r in 0..cube.n_rows() {
        let draws: Vec<f64> =
            cube.row_draws(r).iter().copied().filter(|v| !v.is_nan()).collect();
        assert!(draws.len() >= 2, "summaries need at least 2 draws");
        let mut sorted = draws.clone();
        sorted.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
        let mut quantiles = [0.0; 5];
        for (k, &q) in QUANTILES.iter().enumerate() {
            quantiles[k] = quantile_sorted(&sorted, q);
        }
        rows.push(SummaryRow {
            label: cube.row_label(r),
            mean: mean(&draws),
            sd: sample_sd(&draws),
            quantiles,
        });
    }
    SummaryTable { rows, dropped_draws: cube.dropped }
}

impl SummaryTable {
    /// Fixed-width rendering, quantile columns in the printed header order.
    pub fn render(&self) -> String {
        let label_width =
            self.rows.iter().map(|r| r.label.len()).max().unwrap_or(5).max(5);
        let mut out = format!(
            "{:label_width$} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9}\n",
            "", "mean", "sd", "2.5%", "25%", "50%", "75%", "97.5%"
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{:label_width$} {:>9.6} {:>9.6} {:>9.6} {:>9.6} {:>9.6} {:>9.6} {:>9.6}\n",
                r.label,
                r.mean,
                r.sd,
                r.quantiles[0],
                r.quantiles[1],
                r.quantiles[2],
                r.quantiles[3],
                r.quantiles[4]
            ));
        }
        if self.dropped_draws > 0 {
            out.push_str(&format!(
                "note: {} draw entries with degenerate weights excluded\n",
                self.dropped_draws
            ));
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("label,mean,sd,q2.5,q25,q50,q75,q97.5\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.label,
                r.mean,
                r.sd,
                r.quantiles[0],
                r.quantiles[1],
                r.quantiles[2],
                r.quantiles[3],
                r.quantiles[4]
            ));
        }
        out
    }

    pub fn row(&self, label: &str) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.label == label)
    }
}
