//! The joint principal-stratification model: multinomial S-model, per-cell
//! Y-model, priors, and the marginalized (finite-mixture) observed-data
//! likelihood with exact gradients.

mod layout;
mod loglik;

pub use layout::{Layout, ParamTransform, ReParamBlock};
pub use loglik::Workspace;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::family::{AuxParam, FamilySpec};
use crate::formula::{bind_roles, build_design, DesignMatrix, FormulaAst, RoleBinding};
use crate::prior::{PriorClass, PriorSpec};
use crate::strata::{CellMap, StrataSpec};

/// Fully assembled model, immutable after build.
#[derive(Debug, Clone)]
pub struct PsModel {
    pub roles: RoleBinding,
    pub s_design: DesignMatrix,
    pub y_design: DesignMatrix,
    pub strata: StrataSpec,
    pub cells: CellMap,
    pub family: FamilySpec,
    pub priors: PriorSpec,
    pub layout: Layout,
    /// Treatment assignment per unit.
    pub z: Vec<u8>,
    /// Observed post-treatment vector per unit, flattened n x K.
    pub d: Vec<u8>,
    pub y: Vec<f64>,
    pub delta: Option<Vec<u8>>,
    /// Compatible stratum ordinals per unit (CSR layout).
    compat_offsets: Vec<u32>,
    compat_strata: Vec<u8>,
    pub n_units: usize,
}

impl PsModel {
    /// Assemble and validate the model.
    pub fn build(
        s_formula: &FormulaAst,
        y_formula: &FormulaAst,
        family: FamilySpec,
        strata: StrataSpec,
        priors: PriorSpec,
        data: &Dataset,
    ) -> Result<PsModel> {
        let roles = bind_roles(s_formula, y_formula, &family, data)?;
        if roles.post_treatment.len() != strata.arity() {
            return Err(Error::config(format!(
                "S-formula names {} post-treatment variable(s), strata declare {}",
                roles.post_treatment.len(),
                strata.arity()
            )));
        }
        if family.is_survival() && !y_formula.random_terms.is_empty() {
            return Err(Error::config(
                "random effects (frailty) are not supported for survival outcomes",
            ));
        }

        let s_design = build_design(s_formula, data)?;
        let y_design = build_design(y_formula, data)?;

        let z = data.binary(&roles.treatment)?;
        let n = z.len();
        let arity = strata.arity();
        let mut d = vec![0u8; n * arity];
        for (k, dname) in roles.post_treatment.iter().enumerate() {
            let col = data.binary(dname)?;
            for i in 0..n {
                d[i * arity + k] = col[i];
            }
        }
        let y = data.numeric(&roles.outcome)?.to_vec();
        let delta = match &roles.event_indicator {
            Some(name) => Some(data.binary(name)?),
            None => None,
        };
        family.check_support(&y, delta.as_deref())?;

        let cells = strata.cell_map();

        // Compatibility sets, unit by unit.
        let mut compat_offsets = Vec::with_capacity(n + 1);
        let mut compat_strata = Vec::new();
        compat_offsets.push(0u32);
        for i in 0..n {
            let d_i = &d[i * arity..(i + 1) * arity];
            let set = strata.compatible(z[i], d_i).map_err(|e| {
                Error::data(format!("unit {}: {e}", i + 1))
            })?;
            for s in set {
                compat_strata.push(s as u8);
            }
            compat_offsets.push(compat_strata.len() as u32);
        }

        // Every outcome cell must be reachable from at least one unit
        // (prior-only runs on an empty dataset are allowed).
        if n > 0 {
            let mut reachable = vec![false; cells.n_cells()];
            for i in 0..n {
                let lo = compat_offsets[i] as usize;
                let hi = compat_offsets[i + 1] as usize;
                for &s in &compat_strata[lo..hi] {
                    reachable[cells.cell(s as usize, z[i])] = true;
                }
            }
            if let Some(c) = reachable.iter().position(|r| !r) {
                return Err(Error::data(format!(
                    "outcome cell '{}' has no supporting observations; its parameters would be \
                     unreachable from the likelihood",
                    cells.labels[c]
                )));
            }
        }

        let layout = build_layout(&strata, &cells, &family, &s_design, &y_design);

        Ok(PsModel {
            roles,
            s_design,
            y_design,
            strata,
            cells,
            family,
            priors,
            layout,
            z,
            d,
            y,
            delta,
            compat_offsets,
            compat_strata,
            n_units: n,
        })
    }

    /// Compatible stratum ordinals for one unit.
    pub fn compatible_strata(&self, i: usize) -> &[u8] {
        let lo = self.compat_offsets[i] as usize;
        let hi = self.compat_offsets[i + 1] as usize;
        &self.compat_strata[lo..hi]
    }

    pub fn dim(&self) -> usize {
        self.layout.width
    }
}

fn build_layout(
    strata: &StrataSpec,
    cells: &CellMap,
    family: &FamilySpec,
    s_design: &DesignMatrix,
    y_design: &DesignMatrix,
) -> Layout {
    let mut b = Layout::builder();

    let s_fixed_names = &s_design.column_names[..s_design.n_fixed];
    let mut beta = Vec::new();
    for (s, label) in strata.strata.iter().enumerate() {
        if s == strata.reference_index {
            continue;
        }
        beta.push(b.push_coef_block("beta", &label.name, s_fixed_names, s_design.has_intercept));
    }

    let y_fixed_names = &y_design.column_names[..y_design.n_fixed];
    let mut gamma = Vec::new();
    for label in &cells.labels {
        gamma.push(b.push_coef_block("gamma", label, y_fixed_names, y_design.has_intercept));
    }

    let aux_param = family.aux_param();
    let mut aux = Vec::new();
    for label in &cells.labels {
        aux.push(aux_param.map(|p| {
            let transform = if p.is_positive() {
                ParamTransform::LogPositive
            } else {
                ParamTransform::Identity
            };
            let class = match p {
                AuxParam::Sigma => PriorClass::Sigma,
                AuxParam::Alpha => PriorClass::Alpha,
                AuxParam::Lambda => PriorClass::Lambda,
                AuxParam::Theta => PriorClass::Theta,
            };
            b.push(format!("{}[{label}]", p.name()), transform, Some(class))
        }));
    }

    // Random-effect blocks: effects are hierarchical (no Table-2 prior),
    // their scales take the re_sd class.
    let push_re_blocks = |b: &mut layout::LayoutBuilder,
                              design: &DesignMatrix,
                              side: &str,
                              owners: &[String]|
     -> Vec<ReParamBlock> {
        design
            .re_blocks
            .iter()
            .map(|block| {
                let col_names: Vec<&str> = block
                    .cols
                    .clone()
                    .map(|c| design.column_names[c].as_str())
                    .collect();
                let mut effects = Vec::with_capacity(owners.len());
                let mut scales = Vec::with_capacity(owners.len());
                for owner in owners {
                    let start = b.len();
                    for level in &block.levels {
                        for col in &col_names {
                            b.push(
                                format!("{side}_re[{owner},{col},{level}]"),
                                ParamTransform::Identity,
                                None,
                            );
                        }
                    }
                    effects.push(start..b.len());
                    let sstart = b.len();
                    for col in &col_names {
                        b.push(
                            format!("{side}_re_sd[{owner},{col}]"),
                            ParamTransform::LogPositive,
                            Some(PriorClass::ReSd),
                        );
                    }
                    scales.push(sstart..b.len());
                }
                ReParamBlock {
                    effects,
                    scales,
                    n_levels: block.n_levels(),
                    n_cols: block.width(),
                }
            })
            .collect()
    };

    let s_owners: Vec<String> = strata
        .strata
        .iter()
        .enumerate()
        .filter(|(s, _)| *s != strata.reference_index)
        .map(|(_, l)| l.name.clone())
        .collect();
    let s_re = push_re_blocks(&mut b, s_design, "s", &s_owners);
    let y_re = push_re_blocks(&mut b, y_design, "y", &cells.labels);

    b.finish(beta, gamma, aux, s_re, y_re)
}
