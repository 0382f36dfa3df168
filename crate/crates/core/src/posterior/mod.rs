//! Posterior estimands: per-draw stratum probabilities, marginal strata
//! proportions, potential-outcome means, survival curves on a time grid,
//! nested contrasts, and summary tables.

mod cube;
mod summary;

pub use cube::{Axis, AxisName, ContrastSpec, EstimandCube};
pub use summary::{summarize, SummaryRow, SummaryTable};

use crate::error::{Error, Result};
use crate::math::quantile;
use crate::model::PsModel;
use crate::sampler::DrawMatrix;

/// Per-draw stratum-membership probabilities for every unit:
/// `values[(i * n_strata + s) * n_draws + b]`. This materializes the full
/// units x strata x draws array; prefer the aggregated estimand functions
/// on large problems.
pub struct UnitStratumProbs {
    pub n_units: usize,
    pub n_strata: usize,
    pub n_draws: usize,
    pub values: Vec<f64>,
}

impl UnitStratumProbs {
    pub fn get(&self, unit: usize, stratum: usize, draw: usize) -> f64 {
        self.values[(unit * self.n_strata + stratum) * self.n_draws + draw]
    }
}

fn check_layout(draws: &DrawMatrix, model: &PsModel) -> Result<()> {
    if draws.width != model.layout.width || draws.param_names != model.layout.names {
        return Err(Error::Estimand(
            "draws and model disagree on the parameter layout".to_string(),
        ));
    }
    Ok(())
}

/// Iterate pooled draws in deterministic chain-major order, handing each
/// draw's unconstrained parameter vector to `f`.
fn for_each_unconstrained(
    draws: &DrawMatrix,
    model: &PsModel,
    mut f: impl FnMut(usize, &[f64]),
) {
    let mut unc = vec![0.0; draws.width];
    draws.for_each_draw(|b, con| {
        unc.copy_from_slice(con);
        for (v, t) in unc.iter_mut().zip(&model.layout.transforms) {
            if matches!(t, crate::model::ParamTransform::LogPositive) {
                *v = v.ln();
            }
        }
        f(b, &unc);
    });
}

/// Softmax of precomputed scores for one unit into `probs`.
fn unit_softmax(scores: &[f64], probs: &mut [f64]) {
    let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (p, &s) in probs.iter_mut().zip(scores) {
        *p = (s - m).exp();
        total += *p;
    }
    for p in probs.iter_mut() {
        *p /= total;
    }
}

/// Eq.-style per-unit stratum probabilities, one entry per (unit, stratum,
/// draw).
pub fn unit_stratum_probs(draws: &DrawMatrix, model: &PsModel) -> Result<UnitStratumProbs> {
    check_layout(draws, model)?;
    let n = model.n_units;
    let n_strata = model.strata.n_strata();
    let n_draws = draws.total_draws();
    let mut values = vec![0.0; n * n_strata * n_draws];
    let mut scores = Vec::new();
    let mut probs = vec![0.0; n_strata];
    for_each_unconstrained(draws, model, |b, q| {
        model.forward_scores(q, &mut scores);
        for i in 0..n {
            unit_softmax(&scores[i * n_strata..(i + 1) * n_strata], &mut probs);
            for s in 0..n_strata {
                values[(i * n_strata + s) * n_draws + b] = probs[s];
            }
        }
    });
    Ok(UnitStratumProbs { n_units: n, n_strata, n_draws, values })
}

/// Marginal strata proportions: per draw, the empirical average of the
/// unit-level membership probabilities.
pub fn strata_proportions(draws: &DrawMatrix, model: &PsModel) -> Result<EstimandCube> {
    check_layout(draws, model)?;
    let n = model.n_units;
    let n_strata = model.strata.n_strata();
    let n_draws = draws.total_draws();
    let mut cube = EstimandCube::new(vec![Axis::strata(&model.strata)], n_draws);
    let mut scores = Vec::new();
    let mut probs = vec![0.0; n_strata];
    let mut totals = vec![0.0; n_strata];
    for_each_unconstrained(draws, model, |b, q| {
        model.forward_scores(q, &mut scores);
        totals.fill(0.0);
        for i in 0..n {
            unit_softmax(&scores[i * n_strata..(i + 1) * n_strata], &mut probs);
            for s in 0..n_strata {
                totals[s] += probs[s];
            }
        }
        for s in 0..n_strata {
            cube.set(s, b, totals[s] / n as f64);
        }
    });
    Ok(cube)
}

/// Average potential outcomes per (stratum, arm): the membership-weighted
/// average of the cell mean function over all units. ER strata share a
/// cell, so their two arms are identical by construction.
pub fn outcome_means(draws: &DrawMatrix, model: &PsModel) -> Result<EstimandCube> {
    check_layout(draws, model)?;
    if model.family.is_survival() {
        return Err(Error::Estimand(
            "outcome_means is for GLM families; use survival_outcome for survival models"
                .to_string(),
        ));
    }
    let n = model.n_units;
    let n_strata = model.strata.n_strata();
    let n_cells = model.cells.n_cells();
    let n_draws = draws.total_draws();
    let mut cube =
        EstimandCube::new(vec![Axis::strata(&model.strata), Axis::arms()], n_draws);
    let mut scores = Vec::new();
    let mut eta = Vec::new();
    let mut probs = vec![0.0; n_strata];
    let mut numer = vec![0.0; n_strata * 2];
    let mut denom = vec![0.0; n_strata];
    let mut dropped = 0usize;
    for_each_unconstrained(draws, model, |b, q| {
        model.forward_scores(q, &mut scores);
        model.forward_eta(q, &mut eta);
        numer.fill(0.0);
        denom.fill(0.0);
        for i in 0..n {
            unit_softmax(&scores[i * n_strata..(i + 1) * n_strata], &mut probs);
            for s in 0..n_strata {
                let p = probs[s];
                denom[s] += p;
                for z in 0..2u8 {
                    let cell = model.cells.cell(s, z);
                    let mu = model.family.mean(eta[i * n_cells + cell]);
                    numer[s * 2 + z as usize] += mu * p;
                }
            }
        }
        for s in 0..n_strata {
            for z in 0..2usize {
                let row = s * 2 + z;
                if denom[s] <= 0.0 || !numer[row].is_finite() {
                    cube.set(row, b, f64::NAN);
                    dropped += 1;
                } else {
                    cube.set(row, b, numer[row] / denom[s]);
                }
            }
        }
    });
    cube.dropped = dropped;
    Ok(cube)
}

/// Time grid for survival outcomes: explicit points, or `Count(m)` for a
/// uniform grid of m points from 0 (exclusive) to the 90% quantile of the
/// observed event times (inclusive).
#[derive(Debug, Clone)]
pub enum TimeSpec {
    Points(Vec<f64>),
    Count(usize),
}

impl TimeSpec {
    fn resolve(&self, model: &PsModel) -> Result<Vec<f64>> {
        match self {
            TimeSpec::Points(points) => {
                if points.is_empty() {
                    return Err(Error::Estimand("empty survival time grid".to_string()));
                }
                let increasing = points.windows(2).all(|w| w[0] < w[1]);
                if !increasing || points[0] <= 0.0 {
                    return Err(Error::Estimand(
                        "survival time points must be strictly increasing and positive"
                            .to_string(),
                    ));
                }
                Ok(points.clone())
            }
            TimeSpec::Count(m) => {
                if *m == 0 {
                    return Err(Error::Estimand("empty survival time grid".to_string()));
                }
                let q90 = quantile(&model.y, 0.9);
                Ok((1..=*m).map(|j| j as f64 * q90 / *m as f64).collect())
            }
        }
    }
}

/// Survival probability curves per (stratum, arm, time point).
pub fn survival_outcome(
    draws: &DrawMatrix,
    model: &PsModel,
    times: &TimeSpec,
) -> Result<EstimandCube> {
    check_layout(draws, model)?;
    if !model.family.is_survival() {
        return Err(Error::Estimand("survival_outcome requires a survival family".to_string()));
    }
    let grid = times.resolve(model)?;
    let n = model.n_units;
    let n_strata = model.strata.n_strata();
    let n_cells = model.cells.n_cells();
    let n_draws = draws.total_draws();
    let n_t = grid.len();
    let mut cube = EstimandCube::new(
        vec![Axis::strata(&model.strata), Axis::arms(), Axis::time(&grid)],
        n_draws,
    );
    let mut scores = Vec::new();
    let mut eta = Vec::new();
    let mut probs = vec![0.0; n_strata];
    let mut numer = vec![0.0; n_strata * 2 * n_t];
    let mut denom = vec![0.0; n_strata];
    let mut dropped = 0usize;
    for_each_unconstrained(draws, model, |b, q| {
        model.forward_scores(q, &mut scores);
        model.forward_eta(q, &mut eta);
        let aux: Vec<f64> = (0..n_cells).map(|c| model.cell_aux(q, c)).collect();
        numer.fill(0.0);
        denom.fill(0.0);
        for i in 0..n {
            unit_softmax(&scores[i * n_strata..(i + 1) * n_strata], &mut probs);
            for s in 0..n_strata {
                let p = probs[s];
                denom[s] += p;
                for z in 0..2u8 {
                    let cell = model.cells.cell(s, z);
                    let e = eta[i * n_cells + cell];
                    for (ti, &t) in grid.iter().enumerate() {
                        let surv = model.family.survival_prob(t, e, aux[cell]);
                        numer[(s * 2 + z as usize) * n_t + ti] += surv * p;
                    }
                }
            }
        }
        for s in 0..n_strata {
            for z in 0..2usize {
                for ti in 0..n_t {
                    let row = (s * 2 + z) * n_t + ti;
                    if denom[s] <= 0.0 {
                        cube.set(row, b, f64::NAN);
                        dropped += 1;
                    } else {
                        cube.set(row, b, numer[row] / denom[s]);
                    }
                }
            }
        }
    });
    cube.dropped = dropped;
    Ok(cube)
}

/// Pairwise differences along the requested axes, applied in order.
pub fn contrast(cube: &EstimandCube, spec: &ContrastSpec) -> Result<EstimandCube> {
    cube.contrast(spec)
}

#[cfg(test)]
mod tests;
