//! Tabular data ingestion.
//!
//! Datasets come from CSV files with a header row. Columns are auto-typed:
//! numeric when every entry parses as a number, categorical otherwise.
//! Missing cells (empty or `NA`) are an error — the models assume complete
//! data.

use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    Numeric(Vec<f64>),
    /// Levels are sorted lexicographically; `codes[i]` indexes into `levels`.
    Categorical { levels: Vec<String>, codes: Vec<u32> },
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::Numeric(v) => v.len(),
            Column::Categorical { codes, .. } => codes.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Default)]
pub struct Dataset {
    columns: Vec<(String, Column)>,
    n_rows: usize,
}

impl Dataset {
    pub fn new() -> Self {
        Dataset::default()
    }

    /// Add a numeric column. All columns must have equal length.
    pub fn push_numeric(&mut self, name: impl Into<String>, values: Vec<f64>) -> Result<()> {
        self.push_column(name.into(), Column::Numeric(values))
    }

    /// Add a categorical column from raw string values.
    pub fn push_categorical<S: AsRef<str>>(
        &mut self,
        name: impl Into<String>,
        values: &[S],
    ) -> Result<()> {
        let mut levels: Vec<String> =
            values.iter().map(|v| v.as_ref().to_string()).collect::<Vec<_>>();
        levels.sort();
        levels.dedup();
        let codes = values
            .iter()
            .map(|v| levels.binary_search_by(|l| l.as_str().cmp(v.as_ref())).unwrap() as u32)
            .collect();
        self.push_column(name.into(), Column::Categorical { levels, codes })
    }

    fn push_column(&mut self, name: String, col: Column) -> Result<()> {
        if self.columns.iter().any(|(n, _)| *n == name) {
            return Err(Error::data(format!("duplicate column '{name}'")));
        }
        if self.columns.is_empty() {
            self.n_rows = col.len();
        } else if col.len() != self.n_rows {
            return Err(Error::data(format!(
                "column '{}' has {} rows, expected {}",
                name,
                col.len(),
                self.n_rows
            )));
        }
        self.columns.push((name, col));
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn column_names(&self) -> impl Iterator<Item = &str> {
        self.columns.iter().map(|(n, _)| n.as_str())
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|(n, _)| n == name).map(|(_, c)| c)
    }

    /// Numeric column accessor; errors when missing or categorical.
    pub fn numeric(&self, name: &str) -> Result<&[f64]> {
        match self.column(name) {
            Some(Column::Numeric(v)) => Ok(v),
            Some(Column::Categorical { .. }) => {
                Err(Error::data(format!("column '{name}' is categorical, expected numeric")))
            }
            None => Err(Error::data(format!("missing column '{name}'"))),
        }
    }

    /// Numeric column that must contain only 0/1 values.
    pub fn binary(&self, name: &str) -> Result<Vec<u8>> {
        let values = self.numeric(name)?;
        values
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                if v == 0.0 {
                    Ok(0u8)
                } else if v == 1.0 {
                    Ok(1u8)
                } else {
                    Err(Error::data(format!(
                        "column '{name}' must be binary 0/1; row {} has {v}",
                        i + 1
                    )))
                }
            })
            .collect()
    }

    /// Render as CSV with a header row. Numeric cells use the shortest
    /// round-trip representation, so write/read cycles are exact.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        out.push_str(
            &self.columns.iter().map(|(n, _)| n.as_str()).collect::<Vec<_>>().join(","),
        );
        out.push('\n');
        for i in 0..self.n_rows {
            let row: Vec<String> = self
                .columns
                .iter()
                .map(|(_, col)| match col {
                    Column::Numeric(v) => format!("{}", v[i]),
                    Column::Categorical { levels, codes } => levels[codes[i] as usize].clone(),
                })
                .collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path)
            .map_err(|e| Error::data(format!("cannot open '{}': {e}", path.display())))?;
        Self::from_csv_reader(file)
    }

    pub fn from_csv_reader(reader: impl Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers: Vec<String> = rdr
            .headers()
            .map_err(|e| Error::data(format!("bad CSV header: {e}")))?
            .iter()
            .map(|h| h.trim().to_string())
            .collect();
        if headers.is_empty() {
            return Err(Error::data("CSV has no columns"));
        }

        let mut cells: Vec<Vec<String>> = vec![Vec::new(); headers.len()];
        for (row_idx, record) in rdr.records().enumerate() {
            let record = record.map_err(|e| Error::data(format!("bad CSV row: {e}")))?;
            if record.len() != headers.len() {
                return Err(Error::data(format!(
                    "row {} has {} fields, expected {}",
                    row_idx + 2,
                    record.len(),
                    headers.len()
                )));
            }
            for (j, field) in record.iter().enumerate() {
                let field = field.trim();
                if field.is_empty() || field == "NA" {
                    return Err(Error::data(format!(
                        "missing value in column '{}' at row {} (complete data required)",
                        headers[j],
                        row_idx + 2
                    )));
                }
                cells[j].push(field.to_string());
            }
        }

        let mut data = Dataset::new();
        for (name, raw) in headers.into_iter().zip(cells) {
            let parsed: Option<Vec<f64>> = raw.iter().map(|s| s.parse::<f64>().ok()).collect();
            match parsed {
                Some(values) => {
                    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
                        return Err(Error::data(format!(
                            "non-finite value in numeric column '{}' at row {}",
                            name,
                            i + 2
                        )));
                    }
                    data.push_numeric(name, values)?;
                }
                None => data.push_categorical(name, &raw)?,
            }
        }
        Ok(data)
    }
}
