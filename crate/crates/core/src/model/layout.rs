//! Flat parameter-vector layout.
//!
//! All parameters live in one real vector on the unconstrained scale;
//! positive parameters (sigma, alpha, lambda, random-effect scales) are
//! stored as logs and transformed back with the appropriate Jacobian term
//! in the posterior. Block order: S-model coefficients (one block per
//! non-reference stratum), Y-model coefficients (one block per outcome
//! cell), auxiliary family parameters (one slot per cell that needs one),
//! then random-effect blocks (effects followed by their scales).

use std::ops::Range;

use crate::prior::PriorClass;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamTransform {
    Identity,
    /// Constrained value is exp(unconstrained).
    LogPositive,
}

/// Random-effect parameters for one (model side, RE term) pair.
#[derive(Debug, Clone)]
pub struct ReParamBlock {
    /// One span per owner (non-reference stratum for the S-model, outcome
    /// cell for the Y-model). Span length = n_levels * n_cols, level-major
    /// (effects for level j at `j * n_cols + k`).
    pub effects: Vec<Range<usize>>,
    /// One span per owner; span length = n_cols (one scale per inner
    /// column).
    pub scales: Vec<Range<usize>>,
    pub n_levels: usize,
    pub n_cols: usize,
}

#[derive(Debug, Clone)]
pub struct Layout {
    pub width: usize,
    /// Constrained-scale display name per slot.
    pub names: Vec<String>,
    pub transforms: Vec<ParamTransform>,
    /// Prior class per slot; random effects carry `None` (their density is
    /// the hierarchical normal, not a Table-2 prior).
    pub classes: Vec<Option<PriorClass>>,
    /// Per non-reference stratum (in declaration order with the reference
    /// skipped): the S-model coefficient span.
    pub beta: Vec<Range<usize>>,
    /// Per outcome cell: the Y-model coefficient span.
    pub gamma: Vec<Range<usize>>,
    /// Per outcome cell: the auxiliary parameter slot, when the family has
    /// one.
    pub aux: Vec<Option<usize>>,
    /// Per S-model random-effect term.
    pub s_re: Vec<ReParamBlock>,
    /// Per Y-model random-effect term.
    pub y_re: Vec<ReParamBlock>,
}

impl Layout {
    pub(crate) fn builder() -> LayoutBuilder {
        LayoutBuilder::default()
    }

    /// Map an unconstrained vector to the constrained scale.
    pub fn constrain(&self, unc: &[f64]) -> Vec<f64> {
        assert_eq!(unc.len(), self.width);
        unc.iter()
            .zip(&self.transforms)
            .map(|(&q, t)| match t {
                ParamTransform::Identity => q,
                ParamTransform::LogPositive => q.exp(),
            })
            .collect()
    }

    /// Map a constrained vector back to the unconstrained scale.
    pub fn unconstrain(&self, con: &[f64]) -> Vec<f64> {
        assert_eq!(con.len(), self.width);
        con.iter()
            .zip(&self.transforms)
            .map(|(&c, t)| match t {
                ParamTransform::Identity => c,
                ParamTransform::LogPositive => c.ln(),
            })
            .collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

#[derive(Default)]
pub(crate) struct LayoutBuilder {
    names: Vec<String>,
    transforms: Vec<ParamTransform>,
    classes: Vec<Option<PriorClass>>,
}

impl LayoutBuilder {
    pub fn push(
        &mut self,
        name: String,
        transform: ParamTransform,
        class: Option<PriorClass>,
    ) -> usize {
        self.names.push(name);
        self.transforms.push(transform);
        self.classes.push(class);
        self.names.len() - 1
    }

    /// Push a coefficient block: intercept class for the leading intercept
    /// column, coefficient class for the rest.
    pub fn push_coef_block(
        &mut self,
        prefix: &str,
        owner: &str,
        col_names: &[String],
        has_intercept: bool,
    ) -> Range<usize> {
        let start = self.names.len();
        for (k, col) in col_names.iter().enumerate() {
            let class = if has_intercept && k == 0 {
                PriorClass::Intercept
            } else {
                PriorClass::Coefficient
            };
            self.push(format!("{prefix}[{owner},{col}]"), ParamTransform::Identity, Some(class));
        }
        start..self.names.len()
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn finish(
        self,
        beta: Vec<Range<usize>>,
        gamma: Vec<Range<usize>>,
        aux: Vec<Option<usize>>,
        s_re: Vec<ReParamBlock>,
        y_re: Vec<ReParamBlock>,
    ) -> Layout {
        Layout {
            width: self.names.len(),
            names: self.names,
            transforms: self.transforms,
            classes: self.classes,
            beta,
            gamma,
            aux,
            s_re,
            y_re,
        }
    }
}
