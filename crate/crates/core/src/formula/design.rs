//! Design-matrix construction and variable-role binding.

use std::ops::Range;

use crate::data::{Column, Dataset};
use crate::error::{Error, Result};
use crate::family::FamilySpec;

use super::{FormulaAst, Term, Transform};

/// Columns contributed by one random-effect term: the inner design
/// (intercept and/or slopes) plus the unit-to-cluster map.
#[derive(Debug, Clone)]
pub struct ReBlock {
    /// Column span within the design matrix.
    pub cols: Range<usize>,
    pub group_var: String,
    /// Cluster level names, sorted.
    pub levels: Vec<String>,
    /// Unit -> cluster ordinal.
    pub index: Vec<u32>,
}

impl ReBlock {
    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn width(&self) -> usize {
        self.cols.len()
    }
}

/// Dense design matrix (row-major), with fixed-effect columns first and one
/// column span per random-effect term after them.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    values: Vec<f64>,
    pub column_names: Vec<String>,
    pub n_rows: usize,
    pub n_cols: usize,
    /// Fixed-effect columns (including the intercept when present).
    pub n_fixed: usize,
    pub has_intercept: bool,
    pub re_blocks: Vec<ReBlock>,
}

impl DesignMatrix {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n_cols + j]
    }

    /// Cluster map of the first random-effect term, when one exists.
    pub fn group_index(&self) -> Option<&[u32]> {
        self.re_blocks.first().map(|b| b.index.as_slice())
    }

    /// x' b over the fixed-effect columns.
    pub fn fixed_dot(&self, i: usize, coef: &[f64]) -> f64 {
        debug_assert_eq!(coef.len(), self.n_fixed);
        let row = self.row(i);
        row[..self.n_fixed].iter().zip(coef).map(|(x, b)| x * b).sum()
    }
}

/// Expand one term into named columns.
fn expand_term(term: &Term, data: &Dataset) -> Result<Vec<(String, Vec<f64>)>> {
    match term {
        Term::Main { var } => expand_var(var, data),
        Term::Transform { tag, var } => {
            let raw = match data.column(var) {
                Some(Column::Numeric(v)) => v,
                Some(Column::Categorical { .. }) => {
                    return Err(Error::data(format!(
                        "cannot apply a transform to categorical variable '{var}'"
                    )))
                }
                None => return Err(Error::data(format!("missing column '{var}'"))),
            };
            let out: Vec<f64> = raw
                .iter()
                .map(|&v| match tag {
                    Transform::Square => v * v,
                    Transform::Log => v.ln(),
                    Transform::Exp => v.exp(),
                })
                .collect();
            if let Some(i) = out.iter().position(|v| !v.is_finite()) {
                return Err(Error::data(format!(
                    "non-finite value in column '{}' at row {}",
                    tag.render(var),
                    i + 1
                )));
            }
            Ok(vec![(tag.render(var), out)])
        }
        Term::Interaction { vars } => {
            let mut acc: Vec<(String, Vec<f64>)> = vec![];
            for (k, var) in vars.iter().enumerate() {
                let cols = expand_var(var, data)?;
                if k == 0 {
                    acc = cols;
                    continue;
                }
                let mut next = Vec::with_capacity(acc.len() * cols.len());
                for (aname, avals) in &acc {
                    for (bname, bvals) in &cols {
                        let prod: Vec<f64> =
                            avals.iter().zip(bvals).map(|(a, b)| a * b).collect();
                        next.push((format!("{aname}:{bname}"), prod));
                    }
                }
                acc = next;
            }
            Ok(acc)
        }
    }
}

/// A raw variable: one column when numeric, treatment-coded indicators with
/// the lexicographically first level as reference when categorical.
fn expand_var(var: &str, data: &Dataset) -> Result<Vec<(String, Vec<f64>)>> {
    match data.column(var) {
        Some(Column::Numeric(v)) => {
            if let Some(i) = v.iter().position(|x| !x.is_finite()) {
                return Err(Error::data(format!(
                    "non-finite value in column '{var}' at row {}",
                    i + 1
                )));
            }
            Ok(vec![(var.to_string(), v.clone())])
        }
        Some(Column::Categorical { levels, codes }) => {
            if levels.len() < 2 {
                return Err(Error::data(format!(
                    "categorical variable '{var}' has {} level(s); need at least 2",
                    levels.len()
                )));
            }
            Ok(levels
                .iter()
                .enumerate()
                .skip(1)
                .map(|(l, level)| {
                    let col: Vec<f64> =
                        codes.iter().map(|&c| if c as usize == l { 1.0 } else { 0.0 }).collect();
                    (format!("{var}[{level}]"), col)
                })
                .collect())
        }
        None => Err(Error::data(format!("missing column '{var}'"))),
    }
}

/// Cluster levels for a grouping variable; numeric columns are coerced to a
/// finite level set by exact value.
fn group_levels(var: &str, data: &Dataset) -> Result<(Vec<String>, Vec<u32>)> {
    match data.column(var) {
        Some(Column::Categorical { levels, codes }) => Ok((levels.clone(), codes.clone())),
        Some(Column::Numeric(v)) => {
            let mut distinct: Vec<f64> = v.clone();
            distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
            distinct.dedup();
            let index = v
                .iter()
                .map(|x| distinct.partition_point(|d| d < x) as u32)
                .collect();
            Ok((distinct.iter().map(|d| format!("{d}")).collect(), index))
        }
        None => Err(Error::data(format!("missing grouping column '{var}'"))),
    }
}

/// Realize a parsed formula against a dataset.
///
/// Columns are ordered intercept-first, then the fixed terms in declaration
/// order, then one span per random-effect term.
pub fn build_design(ast: &FormulaAst, data: &Dataset) -> Result<DesignMatrix> {
    let n = data.n_rows();
    let mut names: Vec<String> = Vec::new();
    let mut cols: Vec<Vec<f64>> = Vec::new();

    if ast.has_intercept {
        names.push("(Intercept)".to_string());
        cols.push(vec![1.0; n]);
    }
    for term in &ast.fixed_terms {
        for (name, col) in expand_term(term, data)? {
            names.push(name);
            cols.push(col);
        }
    }
    let n_fixed = cols.len();

    let mut re_blocks = Vec::new();
    for re in &ast.random_terms {
        let start = cols.len();
        if re.inner_intercept {
            names.push(format!("(Intercept)|{}", re.group_var));
            cols.push(vec![1.0; n]);
        }
        for term in &re.inner_terms {
            for (name, col) in expand_term(term, data)? {
                names.push(format!("{name}|{}", re.group_var));
                cols.push(col);
            }
        }
        let (levels, index) = group_levels(&re.group_var, data)?;
        re_blocks.push(ReBlock {
            cols: start..cols.len(),
            group_var: re.group_var.clone(),
            levels,
            index,
        });
    }

    let n_cols = cols.len();
    let mut values = vec![0.0; n * n_cols];
    for (j, col) in cols.iter().enumerate() {
        for (i, &v) in col.iter().enumerate() {
            values[i * n_cols + j] = v;
        }
    }

    Ok(DesignMatrix {
        values,
        column_names: names,
        n_rows: n,
        n_cols,
        n_fixed,
        has_intercept: ast.has_intercept,
        re_blocks,
    })
}

/// Names of the variables playing each model role.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoleBinding {
    pub treatment: String,
    /// Ordered post-treatment variables D_1..D_K.
    pub post_treatment: Vec<String>,
    pub outcome: String,
    /// Event indicator for survival outcomes.
    pub event_indicator: Option<String>,
}

/// Bind the S- and Y-formula left-hand sides to model roles and validate
/// them against the data (treatment and post-treatment variables must be
/// binary 0/1; survival families need an event-indicator column).
pub fn bind_roles(
    s_ast: &FormulaAst,
    y_ast: &FormulaAst,
    family: &FamilySpec,
    data: &Dataset,
) -> Result<RoleBinding> {
    bind_roles_with(s_ast, y_ast, family, data, 1)
}

/// As [`bind_roles`], with an explicit number of declared treatment
/// variables. Anything other than one treatment is rejected; multiple
/// treatments must be recoded into a single multi-arm variable.
pub fn bind_roles_with(
    s_ast: &FormulaAst,
    y_ast: &FormulaAst,
    family: &FamilySpec,
    data: &Dataset,
    n_treatments: usize,
) -> Result<RoleBinding> {
    if n_treatments != 1 {
        return Err(Error::config(format!(
            "multiple treatment variables are not supported (got {n_treatments}); \
             recode them into a single variable"
        )));
    }
    if s_ast.lhs_vars.len() < 2 {
        return Err(Error::config(
            "S-formula must name the treatment and at least one post-treatment variable \
             (e.g. 'Z + D ~ X')",
        ));
    }
    let treatment = s_ast.lhs_vars[0].clone();
    let post_treatment: Vec<String> = s_ast.lhs_vars[1..].to_vec();

    let (outcome, event_indicator) = if family.is_survival() {
        if y_ast.lhs_vars.len() != 2 {
            return Err(Error::config(
                "survival families require 'Y + delta ~ ...' on the Y-formula",
            ));
        }
        (y_ast.lhs_vars[0].clone(), Some(y_ast.lhs_vars[1].clone()))
    } else {
        if y_ast.lhs_vars.len() != 1 {
            return Err(Error::config("Y-formula must have exactly one response variable"));
        }
        (y_ast.lhs_vars[0].clone(), None)
    };

    data.binary(&treatment)?;
    for d in &post_treatment {
        data.binary(d)?;
    }
    if let Some(delta) = &event_indicator {
        data.binary(delta)?;
    }

    Ok(RoleBinding { treatment, post_treatment, outcome, event_indicator })
}
