//! The estimand cube: posterior draws indexed by up to three axes
//! (stratum, arm, time), stored row-major with draws innermost.

use crate::error::{Error, Result};
use crate::strata::StrataSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AxisName {
    Stratum,
    Z,
    Time,
}

impl AxisName {
    pub fn name(self) -> &'static str {
        match self {
            AxisName::Stratum => "stratum",
            AxisName::Z => "Z",
            AxisName::Time => "time",
        }
    }

    /// Parse a contrast-axis request ("Z", "S", "T", case-insensitive,
    /// or the full names).
    pub fn parse(text: &str) -> Result<AxisName> {
        match text.trim().to_ascii_lowercase().as_str() {
            "z" | "arm" => Ok(AxisName::Z),
            "s" | "stratum" | "strata" => Ok(AxisName::Stratum),
            "t" | "time" => Ok(AxisName::Time),
            other => Err(Error::config(format!("unknown contrast axis '{other}'"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Axis {
    pub name: AxisName,
    pub labels: Vec<String>,
}

impl Axis {
    pub fn strata(spec: &StrataSpec) -> Axis {
        Axis { name: AxisName::Stratum, labels: spec.names().iter().map(|s| s.to_string()).collect() }
    }

    pub fn arms() -> Axis {
        Axis { name: AxisName::Z, labels: vec!["0".to_string(), "1".to_string()] }
    }

    pub fn time(points: &[f64]) -> Axis {
        Axis { name: AxisName::Time, labels: points.iter().map(|t| format!("{t}")).collect() }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Ordered list of axes to difference; each axis at most once.
#[derive(Debug, Clone, Default)]
pub struct ContrastSpec {
    pub axes: Vec<AxisName>,
}

impl ContrastSpec {
    pub fn over(axes: &[AxisName]) -> Result<ContrastSpec> {
        for (i, a) in axes.iter().enumerate() {
            if axes[..i].contains(a) {
                return Err(Error::config(format!(
                    "contrast axis '{}' requested more than once",
                    a.name()
                )));
            }
        }
        Ok(ContrastSpec { axes: axes.to_vec() })
    }

    /// Parse a CLI-style request like "Z" or "Z,S".
    pub fn parse(text: &str) -> Result<ContrastSpec> {
        let axes: Result<Vec<AxisName>> = text.split(',').map(AxisName::parse).collect();
        ContrastSpec::over(&axes?)
    }
}

#[derive(Debug, Clone)]
pub struct EstimandCube {
    pub axes: Vec<Axis>,
    /// Row-major over axes, draws innermost: `values[row * n_draws + b]`.
    values: Vec<f64>,
    pub n_draws: usize,
    /// Count of (row, draw) entries flagged NaN because the weighted
    /// denominator vanished.
    pub dropped: usize,
}

impl EstimandCube {
    pub fn new(axes: Vec<Axis>, n_draws: usize) -> EstimandCube {
        let rows: usize = axes.iter().map(Axis::len).product();
        EstimandCube { axes, values: vec![0.0; rows * n_draws], n_draws, dropped: 0 }
    }

    pub fn n_rows(&self) -> usize {
        self.axes.iter().map(Axis::len).product()
    }

    pub fn set(&mut self, row: usize, draw: usize, value: f64) {
        self.values[row * self.n_draws + draw] = value;
    }

    pub fn row_draws(&self, row: usize) -> &[f64] {
        &self.values[row * self.n_draws..(row + 1) * self.n_draws]
    }

    /// Mixed-radix decomposition of a row index into per-axis indices.
    pub fn row_indices(&self, row: usize) -> Vec<usize> {
        let mut idx = vec![0; self.axes.len()];
        let mut rem = row;
        for (k, axis) in self.axes.iter().enumerate().rev() {
            idx[k] = rem % axis.len();
            rem /= axis.len();
        }
        idx
    }

    fn row_from_indices(&self, idx: &[usize]) -> usize {
        let mut row = 0;
        for (axis, &i) in self.axes.iter().zip(idx) {
            row = row * axis.len() + i;
        }
        row
    }

    /// "n:0"-style display label of one row.
    pub fn row_label(&self, row: usize) -> String {
        let idx = self.row_indices(row);
        self.axes
            .iter()
            .zip(&idx)
            .map(|(axis, &i)| axis.labels[i].clone())
            .collect::<Vec<_>>()
            .join(":")
    }

    pub fn find_row(&self, label: &str) -> Option<usize> {
        (0..self.n_rows()).find(|&r| self.row_label(r) == label)
    }

    pub fn axis_position(&self, name: AxisName) -> Option<usize> {
        self.axes.iter().position(|a| a.name == name)
    }

    /// Pairwise differences along each requested axis, applied in order.
    pub fn contrast(&self, spec: &ContrastSpec) -> Result<EstimandCube> {
        let mut current = self.clone();
        for &axis in &spec.axes {
            current = current.contrast_one(axis)?;
        }
        Ok(current)
    }

    fn contrast_one(&self, name: AxisName) -> Result<EstimandCube> {
        let k = self.axis_position(name).ok_or_else(|| {
            Error::Estimand(format!("contrast axis '{}' is not in the cube", name.name()))
        })?;
        let axis = &self.axes[k];
        if axis.len() < 2 {
            return Err(Error::Estimand(format!(
                "cannot contrast axis '{}' of size {}",
                name.name(),
                axis.len()
            )));
        }

        // All ordered pairs (lo, hi) with lo < hi; the value is hi - lo and
        // the label "{hi}-{lo}".
        let mut pairs = Vec::new();
        let mut labels = Vec::new();
        for hi in 1..axis.len() {
            for lo in 0..hi {
                pairs.push((lo, hi));
                labels.push(format!("{{{}}}-{{{}}}", axis.labels[hi], axis.labels[lo]));
            }
        }

        let mut axes = self.axes.clone();
        axes[k] = Axis { name, labels };
        let mut out = EstimandCube::new(axes, self.n_draws);
        out.dropped = self.dropped;
        for row in 0..out.n_rows() {
            let mut idx = out.row_indices(row);
            let (lo, hi) = pairs[idx[k]];
            idx[k] = lo;
            let lo_row = self.row_from_indices(&idx);
            idx[k] = hi;
            let hi_row = self.row_from_indices(&idx);
            let lo_draws = self.row_draws(lo_row);
            let hi_draws = self.row_draws(hi_row);
            for b in 0..self.n_draws {
                out.set(row, b, hi_draws[b] - lo_draws[b]);
            }
        }
        Ok(out)
    }

    /// Long-format CSV export: one line per (row, draw).
    pub fn to_long_csv(&self) -> String {
        let mut out = String::new();
        for axis in &self.axes {
            out.push_str(axis.name.name());
            out.push(',');
        }
        out.push_str("draw,value\n");
        for row in 0..self.n_rows() {
            let idx = self.row_indices(row);
            let prefix: String = self
                .axes
                .iter()
                .zip(&idx)
                .map(|(axis, &i)| format!("{},", axis.labels[i]))
                .collect();
            for (b, v) in self.row_draws(row).iter().enumerate() {
                out.push_str(&prefix);
                out.push_str(&format!("{b},{v}\n"));
            }
        }
        out
    }
}
