//! Log-posterior evaluation with exact gradients.
//!
//! The gradient is accumulated in reverse through the explicit computation
//! structure: linear predictors -> per-unit mixture terms -> total, then
//! adjoints flow back from the per-unit responsibilities into the design
//! blocks. Per-unit terms are totaled with a fixed-order pairwise reduction
//! so results are bit-stable regardless of threading.

use crate::family::DensityEval;
use crate::math::{pairwise_sum, LN_SQRT_2PI};
use crate::model::layout::ParamTransform;
use crate::model::PsModel;

/// Reusable evaluation buffers; one per evaluation thread.
#[derive(Debug, Default, Clone)]
pub struct Workspace {
    con: Vec<f64>,
    scores: Vec<f64>,
    lse: Vec<f64>,
    eta: Vec<f64>,
    aux_con: Vec<f64>,
    term: Vec<f64>,
    dens_deta: Vec<f64>,
    dens_daux: Vec<f64>,
    unit_ll: Vec<f64>,
    score_adj: Vec<f64>,
    eta_adj: Vec<f64>,
    aux_adj: Vec<f64>,
}

impl Workspace {
    pub fn for_model(model: &PsModel) -> Workspace {
        let mut ws = Workspace::default();
        ws.ensure(model);
        ws
    }

    fn ensure(&mut self, model: &PsModel) {
        let n = model.n_units;
        let s = model.strata.n_strata();
        let c = model.cells.n_cells();
        self.con.resize(model.layout.width, 0.0);
        self.scores.resize(n * s, 0.0);
        self.lse.resize(n, 0.0);
        self.eta.resize(n * c, 0.0);
        self.aux_con.resize(c, 0.0);
        self.term.resize(n * s, 0.0);
        self.dens_deta.resize(n * s, 0.0);
        self.dens_daux.resize(n * s, 0.0);
        self.unit_ll.resize(n, 0.0);
        self.score_adj.resize(n * s, 0.0);
        self.eta_adj.resize(n * c, 0.0);
        self.aux_adj.resize(c, 0.0);
    }
}

impl PsModel {
    /// Ordinals of the non-reference strata, in declaration order. The k-th
    /// entry owns `layout.beta[k]` and the k-th S-model RE spans.
    pub fn nonref_strata(&self) -> Vec<usize> {
        (0..self.strata.n_strata()).filter(|&s| s != self.strata.reference_index).collect()
    }

    /// Per-unit density of the outcome under one parameter cell (GLM or
    /// survival), on the unconstrained parameter vector.
    pub fn y_log_density(&self, q: &[f64], cell: usize, i: usize) -> f64 {
        self.unit_density(q, cell, i).logp
    }

    /// Censoring-aware survival log-likelihood for one unit and cell;
    /// identical to [`PsModel::y_log_density`] on survival families.
    pub fn survival_log_lik(&self, q: &[f64], cell: usize, i: usize) -> f64 {
        assert!(self.family.is_survival(), "survival_log_lik on a non-survival family");
        self.unit_density(q, cell, i).logp
    }

    fn unit_density(&self, q: &[f64], cell: usize, i: usize) -> DensityEval {
        let eta = self.unit_eta(q, cell, i);
        let aux = self.cell_aux(q, cell);
        if self.family.is_survival() {
            let event = self.delta.as_ref().map(|d| d[i] == 1).unwrap_or(true);
            self.family.survival_log_lik(self.y[i], event, eta, aux)
        } else {
            self.family.glm_log_density(self.y[i], eta, aux)
        }
    }

    /// Linear predictor x_i' gamma_cell plus any random-effect
    /// contributions, for one unit.
    pub fn unit_eta(&self, q: &[f64], cell: usize, i: usize) -> f64 {
        let block = &self.layout.gamma[cell];
        let mut eta = self.y_design.fixed_dot(i, &q[block.clone()]);
        for (t, re) in self.layout.y_re.iter().enumerate() {
            let dblock = &self.y_design.re_blocks[t];
            let g = dblock.index[i] as usize;
            let eff = &q[re.effects[cell].clone()];
            for (k, col) in dblock.cols.clone().enumerate() {
                eta += eff[g * re.n_cols + k] * self.y_design.value(i, col);
            }
        }
        eta
    }

    /// Constrained auxiliary parameter of one cell (sigma, alpha, lambda,
    /// or theta), or 0 when the family has none.
    pub fn cell_aux(&self, q: &[f64], cell: usize) -> f64 {
        match self.layout.aux[cell] {
            Some(slot) => match self.layout.transforms[slot] {
                ParamTransform::Identity => q[slot],
                ParamTransform::LogPositive => q[slot].exp(),
            },
            None => 0.0,
        }
    }

    /// Log of the stratum-membership probabilities for one unit: a
    /// log-softmax over linear scores with the reference stratum pinned at
    /// zero.
    pub fn s_log_probs(&self, q: &[f64], i: usize) -> Vec<f64> {
        let n_strata = self.strata.n_strata();
        let mut scores = vec![0.0; n_strata];
        for (k, &s) in self.nonref_strata().iter().enumerate() {
            let block = &self.layout.beta[k];
            let mut sc = self.s_design.fixed_dot(i, &q[block.clone()]);
            for (t, re) in self.layout.s_re.iter().enumerate() {
                let dblock = &self.s_design.re_blocks[t];
                let g = dblock.index[i] as usize;
                let eff = &q[re.effects[k].clone()];
                for (c, col) in dblock.cols.clone().enumerate() {
                    sc += eff[g * re.n_cols + c] * self.s_design.value(i, col);
                }
            }
            scores[s] = sc;
        }
        let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + scores.iter().map(|&v| (v - m).exp()).sum::<f64>().ln();
        scores.iter_mut().for_each(|v| *v -= lse);
        scores
    }

    /// Marginalized per-unit log-likelihood: log-sum-exp over the strata
    /// compatible with the observed (Z, D).
    pub fn mixture_log_lik(&self, q: &[f64], i: usize) -> f64 {
        let log_probs = self.s_log_probs(q, i);
        let z = self.z[i];
        let mut terms = Vec::with_capacity(self.compatible_strata(i).len());
        for &s in self.compatible_strata(i) {
            let cell = self.cells.cell(s as usize, z);
            terms.push(log_probs[s as usize] + self.unit_density(q, cell, i).logp);
        }
        crate::math::log_sum_exp(&terms)
    }

    /// S-model linear scores for every unit (n x n_strata, reference
    /// stratum pinned at 0), including random-effect contributions.
    pub(crate) fn forward_scores(&self, q: &[f64], scores: &mut Vec<f64>) {
        let n = self.n_units;
        let n_strata = self.strata.n_strata();
        scores.resize(n * n_strata, 0.0);
        scores.fill(0.0);
        let s_fixed = self.s_design.n_fixed;
        let nonref = self.nonref_strata();
        for (k, &s) in nonref.iter().enumerate() {
            let block = &q[self.layout.beta[k].clone()];
            for i in 0..n {
                let row = self.s_design.row(i);
                let mut acc = 0.0;
                for (x, b) in row[..s_fixed].iter().zip(block) {
                    acc += x * b;
                }
                scores[i * n_strata + s] = acc;
            }
        }
        for (t, re) in self.layout.s_re.iter().enumerate() {
            let dblock = &self.s_design.re_blocks[t];
            for (k, &s) in nonref.iter().enumerate() {
                let eff = &q[re.effects[k].clone()];
                for i in 0..n {
                    let g = dblock.index[i] as usize;
                    let mut acc = 0.0;
                    for (c, col) in dblock.cols.clone().enumerate() {
                        acc += eff[g * re.n_cols + c] * self.s_design.value(i, col);
                    }
                    scores[i * n_strata + s] += acc;
                }
            }
        }
    }

    /// Y-model linear predictors for every unit and cell (n x n_cells),
    /// including random-effect contributions.
    pub(crate) fn forward_eta(&self, q: &[f64], eta: &mut Vec<f64>) {
        let n = self.n_units;
        let n_cells = self.cells.n_cells();
        eta.resize(n * n_cells, 0.0);
        let y_fixed = self.y_design.n_fixed;
        for c in 0..n_cells {
            let block = &q[self.layout.gamma[c].clone()];
            for i in 0..n {
                let row = self.y_design.row(i);
                let mut acc = 0.0;
                for (x, b) in row[..y_fixed].iter().zip(block) {
                    acc += x * b;
                }
                eta[i * n_cells + c] = acc;
            }
        }
        for (t, re) in self.layout.y_re.iter().enumerate() {
            let dblock = &self.y_design.re_blocks[t];
            for c in 0..n_cells {
                let eff = &q[re.effects[c].clone()];
                for i in 0..n {
                    let g = dblock.index[i] as usize;
                    let mut acc = 0.0;
                    for (k, col) in dblock.cols.clone().enumerate() {
                        acc += eff[g * re.n_cols + k] * self.y_design.value(i, col);
                    }
                    eta[i * n_cells + c] += acc;
                }
            }
        }
    }

    /// Convenience value-only posterior (allocates scratch).
    pub fn log_posterior(&self, q: &[f64]) -> f64 {
        let mut ws = Workspace::for_model(self);
        let mut grad = vec![0.0; self.dim()];
        self.log_posterior_and_grad(q, &mut grad, &mut ws)
    }

    /// Joint log-posterior and its gradient on the unconstrained scale:
    /// mixture likelihood + Table-2 priors + Jacobians of the log
    /// transforms + the hierarchical normal terms of any random effects.
    ///
    /// Returns `-inf` for parameter values outside the model domain; the
    /// gradient contents are unspecified in that case.
    pub fn log_posterior_and_grad(
        &self,
        q: &[f64],
        grad: &mut [f64],
        ws: &mut Workspace,
    ) -> f64 {
        assert_eq!(q.len(), self.layout.width);
        assert_eq!(grad.len(), self.layout.width);
        ws.ensure(self);
        grad.fill(0.0);

        let n = self.n_units;
        let n_strata = self.strata.n_strata();
        let n_cells = self.cells.n_cells();
        let nonref = self.nonref_strata();
        let survival = self.family.is_survival();
        let s_fixed = self.s_design.n_fixed;
        let y_fixed = self.y_design.n_fixed;

        self.forward_scores(q, &mut ws.scores);
        self.forward_eta(q, &mut ws.eta);
        for c in 0..n_cells {
            ws.aux_con[c] = self.cell_aux(q, c);
        }

        // ---- forward: per-unit mixture terms ----
        for i in 0..n {
            let scores = &ws.scores[i * n_strata..(i + 1) * n_strata];
            let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + scores.iter().map(|&v| (v - m).exp()).sum::<f64>().ln();
            ws.lse[i] = lse;

            let mut mix_max = f64::NEG_INFINITY;
            for &s in self.compatible_strata(i) {
                let s = s as usize;
                let cell = self.cells.cell(s, self.z[i]);
                let eval = if survival {
                    let event = self.delta.as_ref().map(|d| d[i] == 1).unwrap_or(true);
                    self.family.survival_log_lik(
                        self.y[i],
                        event,
                        ws.eta[i * n_cells + cell],
                        ws.aux_con[cell],
                    )
                } else {
                    self.family.glm_log_density(
                        self.y[i],
                        ws.eta[i * n_cells + cell],
                        ws.aux_con[cell],
                    )
                };
                let t = scores[s] - lse + eval.logp;
                ws.term[i * n_strata + s] = t;
                ws.dens_deta[i * n_strata + s] = eval.d_eta;
                ws.dens_daux[i * n_strata + s] = eval.d_aux;
                if t > mix_max {
                    mix_max = t;
                }
            }
            if mix_max == f64::NEG_INFINITY || mix_max.is_nan() {
                return f64::NEG_INFINITY;
            }
            let mut acc = 0.0;
            for &s in self.compatible_strata(i) {
                acc += (ws.term[i * n_strata + s as usize] - mix_max).exp();
            }
            ws.unit_ll[i] = mix_max + acc.ln();
        }

        let mut logp = pairwise_sum(&ws.unit_ll);
        if !logp.is_finite() {
            return f64::NEG_INFINITY;
        }

        // ---- backward: responsibilities -> adjoints ----
        ws.aux_adj.fill(0.0);
        for i in 0..n {
            let mix = ws.unit_ll[i];
            let lse = ws.lse[i];
            let base = i * n_strata;

            // Total responsibility over compatible strata is 1, so the
            // softmax adjoint is r_j - p_j with r_j = 0 off the compatible
            // set.
            for j in 0..n_strata {
                let p = (ws.scores[base + j] - lse).exp();
                ws.score_adj[base + j] = -p;
            }
            for &s in self.compatible_strata(i) {
                let s = s as usize;
                let r = (ws.term[base + s] - mix).exp();
                ws.score_adj[base + s] += r;
                let cell = self.cells.cell(s, self.z[i]);
                ws.eta_adj[i * n_cells + cell] = r * ws.dens_deta[base + s];
                ws.aux_adj[cell] += r * ws.dens_daux[base + s];
            }
        }

        // ---- backward: design-block gradients ----
        for (k, &s) in nonref.iter().enumerate() {
            let block = self.layout.beta[k].clone();
            for i in 0..n {
                let a = ws.score_adj[i * n_strata + s];
                let row = self.s_design.row(i);
                for (slot, x) in block.clone().zip(&row[..s_fixed]) {
                    grad[slot] += a * x;
                }
            }
        }
        for (t, re) in self.layout.s_re.iter().enumerate() {
            let dblock = &self.s_design.re_blocks[t];
            for (k, &s) in nonref.iter().enumerate() {
                let estart = re.effects[k].start;
                for i in 0..n {
                    let a = ws.score_adj[i * n_strata + s];
                    let g = dblock.index[i] as usize;
                    for (c, col) in dblock.cols.clone().enumerate() {
                        grad[estart + g * re.n_cols + c] += a * self.s_design.value(i, col);
                    }
                }
            }
        }
        for c in 0..n_cells {
            let block = self.layout.gamma[c].clone();
            for i in 0..n {
                let a = ws.eta_adj[i * n_cells + c];
                if a == 0.0 {
                    continue;
                }
                let row = self.y_design.row(i);
                for (slot, x) in block.clone().zip(&row[..y_fixed]) {
                    grad[slot] += a * x;
                }
            }
        }
        for (t, re) in self.layout.y_re.iter().enumerate() {
            let dblock = &self.y_design.re_blocks[t];
            for c in 0..n_cells {
                let estart = re.effects[c].start;
                for i in 0..n {
                    let a = ws.eta_adj[i * n_cells + c];
                    if a == 0.0 {
                        continue;
                    }
                    let g = dblock.index[i] as usize;
                    for (k, col) in dblock.cols.clone().enumerate() {
                        grad[estart + g * re.n_cols + k] += a * self.y_design.value(i, col);
                    }
                }
            }
        }
        for c in 0..n_cells {
            if let Some(slot) = self.layout.aux[c] {
                grad[slot] += ws.aux_adj[c];
            }
        }

        // Reset eta adjoints for the next call (only compatible entries were
        // written, so clear them all).
        ws.eta_adj.fill(0.0);

        // ---- priors and transform Jacobians ----
        for (j, class) in self.layout.classes.iter().enumerate() {
            let Some(class) = class else { continue };
            let prior = self.priors.class(*class);
            match self.layout.transforms[j] {
                ParamTransform::Identity => {
                    let (lp, d) = prior.log_density_and_grad(q[j]);
                    logp += lp;
                    grad[j] += d;
                }
                ParamTransform::LogPositive => {
                    let x = q[j].exp();
                    let (lp, d) = prior.log_density_and_grad(x);
                    logp += lp + q[j];
                    grad[j] += d * x + 1.0;
                }
            }
        }

        // ---- hierarchical random-effect terms ----
        let mut re_normal = |re_blocks: &[crate::model::ReParamBlock]| {
            for re in re_blocks {
                for (effects, scales) in re.effects.iter().zip(&re.scales) {
                    for k in 0..re.n_cols {
                        let scale_slot = scales.start + k;
                        let tau = q[scale_slot].exp();
                        let inv_tau2 = 1.0 / (tau * tau);
                        let mut d_log_tau = 0.0;
                        for j in 0..re.n_levels {
                            let slot = effects.start + j * re.n_cols + k;
                            let xi = q[slot];
                            logp += -q[scale_slot] - LN_SQRT_2PI - 0.5 * xi * xi * inv_tau2;
                            grad[slot] += -xi * inv_tau2;
                            d_log_tau += xi * xi * inv_tau2 - 1.0;
                        }
                        grad[scale_slot] += d_log_tau;
                    }
                }
            }
        };
        re_normal(&self.layout.s_re);
        re_normal(&self.layout.y_re);

        if !logp.is_finite() {
            return f64::NEG_INFINITY;
        }
        logp
    }
}
