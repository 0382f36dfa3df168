//! Frequentist principal-score weighting.
//!
//! Three logistic working models — the propensity score Pr(Z=1|X) and the
//! arm-wise intermediate-variable probabilities p_z(X) = Pr(D=1|Z=z,X) —
//! identify the principal scores under monotonicity:
//! e_c(X) = p_1(X) - p_0(X), e_a(X) = p_0(X), e_n(X) = 1 - p_1(X)
//! (strata written in (D(0), D(1)) order: compliers "01", always-takers
//! "11", never-takers "00").
//!
//! The complier contrast uses Hajek-normalized assignment-balanced
//! weights kappa_1 = D (Z - pi(X)) / (pi(X)(1 - pi(X))) and
//! kappa_0 = -(1 - D)(Z - pi(X)) / (pi(X)(1 - pi(X))): the sign flip
//! cancels the always-takers (resp. never-takers) out of the mixed
//! observing cells, so it is consistent under monotonicity, exclusion
//! restriction for the non-complier strata, and randomization given X —
//! without assuming principal ignorability. The never-/always-taker
//! estimators weight their observing cells by
//! e_s(X) / (Pr(Z=z|X) Pr(D=D(s,z)|Z=z,X)); the mixed-cell arm of those
//! strata relies on principal ignorability. The Wald ratio provides the
//! classic CACE under ER. Uncertainty comes from a unit bootstrap.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::formula::{build_design, DesignMatrix, FormulaAst};
use crate::math::{quantile, sigmoid};

const PROB_CLIP: f64 = 1e-6;
const MONOTONICITY_TOL: f64 = -0.02;

/// One fitted logistic regression.
#[derive(Debug, Clone)]
pub struct LogisticFit {
    pub coef: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Set when separation forced the ridge fallback.
    pub ridged: bool,
}

impl LogisticFit {
    fn predict(&self, design: &DesignMatrix, i: usize) -> f64 {
        sigmoid(design.fixed_dot(i, &self.coef))
    }
}

/// Newton-Raphson logistic regression on a row subset, with a small ridge
/// fallback under separation.
fn fit_logistic(design: &DesignMatrix, y: &[f64], rows: &[usize]) -> Result<LogisticFit> {
    if rows.is_empty() {
        return Err(Error::data("logistic fit on an empty subset"));
    }
    match newton_logistic(design, y, rows, 0.0) {
        Ok(fit) => Ok(fit),
        Err(_) => {
            let mut fit = newton_logistic(design, y, rows, 1e-4)?;
            fit.ridged = true;
            eprintln!(
                "warning: separation detected in a score model; refit with ridge penalty 1e-4"
            );
            Ok(fit)
        }
    }
}

fn newton_logistic(
    design: &DesignMatrix,
    y: &[f64],
    rows: &[usize],
    ridge: f64,
) -> Result<LogisticFit> {
    let p = design.n_fixed;
    let mut coef = vec![0.0; p];
    for it in 0..50 {
        let mut score = vec![0.0; p];
        let mut hess = vec![0.0; p * p];
        for &i in rows {
            let row = &design.row(i)[..p];
            let eta: f64 = row.iter().zip(&coef).map(|(x, b)| x * b).sum();
            let mu = sigmoid(eta);
            let w = (mu * (1.0 - mu)).max(1e-12);
            let r = y[i] - mu;
            for a in 0..p {
                score[a] += row[a] * r;
                for b in a..p {
                    hess[a * p + b] += w * row[a] * row[b];
                }
            }
        }
        for a in 0..p {
            score[a] -= ridge * coef[a];
            hess[a * p + a] += ridge;
            for b in 0..a {
                hess[a * p + b] = hess[b * p + a];
            }
        }
        let max_score = score.iter().fold(0.0f64, |m, s| m.max(s.abs()));
        if max_score < 1e-8 {
            // A "converged" fit pushing probabilities to exactly 0/1 is
            // separation in disguise; hand it to the ridge fallback.
            if ridge == 0.0 {
                let max_eta = rows
                    .iter()
                    .map(|&i| {
                        design.row(i)[..p]
                            .iter()
                            .zip(&coef)
                            .map(|(x, b)| x * b)
                            .sum::<f64>()
                            .abs()
                    })
                    .fold(0.0f64, f64::max);
                if max_eta > 30.0 {
                    return Err(Error::data("separation in logistic fit"));
                }
            }
            return Ok(LogisticFit { coef, converged: true, iterations: it, ridged: false });
        }
        let step = solve_symmetric(&hess, &score, p)
            .ok_or_else(|| Error::data("singular Hessian in logistic fit"))?;
        for a in 0..p {
            coef[a] += step[a];
        }
        if coef.iter().any(|b| !b.is_finite() || b.abs() > 1e6) {
            return Err(Error::data("diverging coefficients in logistic fit (separation)"));
        }
    }
    Err(Error::data("logistic fit did not converge in 50 iterations"))
}

/// Gaussian elimination with partial pivoting on a dense symmetric system.
fn solve_symmetric(a: &[f64], b: &[f64], p: usize) -> Option<Vec<f64>> {
    let mut m = a.to_vec();
    let mut rhs = b.to_vec();
    for col in 0..p {
        let pivot_row = (col..p).max_by(|&r1, &r2| {
            m[r1 * p + col].abs().partial_cmp(&m[r2 * p + col].abs()).unwrap()
        })?;
        if m[pivot_row * p + col].abs() < 1e-12 {
            return None;
        }
        if pivot_row != col {
            for k in 0..p {
                m.swap(col * p + k, pivot_row * p + k);
            }
            rhs.swap(col, pivot_row);
        }
        for r in col + 1..p {
            let f = m[r * p + col] / m[col * p + col];
            for k in col..p {
                m[r * p + k] -= f * m[col * p + k];
            }
            rhs[r] -= f * rhs[col];
        }
    }
    let mut x = vec![0.0; p];
    for col in (0..p).rev() {
        let mut acc = rhs[col];
        for k in col + 1..p {
            acc -= m[col * p + k] * x[k];
        }
        x[col] = acc / m[col * p + col];
    }
    Some(x)
}

/// The three fitted score models.
#[derive(Debug, Clone)]
pub struct ScoreFits {
    pub propensity: LogisticFit,
    /// Pr(D=1 | Z=1, X).
    pub p1: LogisticFit,
    /// Pr(D=1 | Z=0, X).
    pub p0: LogisticFit,
    design: DesignMatrix,
    z: Vec<u8>,
    d: Vec<u8>,
}

impl ScoreFits {
    pub fn n_units(&self) -> usize {
        self.z.len()
    }

    /// Clipped fitted probabilities (propensity, p1, p0) for one unit.
    pub fn probabilities(&self, i: usize) -> (f64, f64, f64) {
        let clip = |v: f64| v.clamp(PROB_CLIP, 1.0 - PROB_CLIP);
        (
            clip(self.propensity.predict(&self.design, i)),
            clip(self.p1.predict(&self.design, i)),
            clip(self.p0.predict(&self.design, i)),
        )
    }
}

/// Fit the propensity and the two arm-wise intermediate models. The
/// S-formula supplies the variable roles (`Z + D ~ X...`) and the
/// covariate set; exactly one post-treatment variable is supported here.
pub fn fit_scores(data: &Dataset, s_formula: &FormulaAst) -> Result<ScoreFits> {
    if s_formula.lhs_vars.len() != 2 {
        return Err(Error::config(
            "principal-score weighting requires exactly one post-treatment variable \
             ('Z + D ~ X...')",
        ));
    }
    if !s_formula.random_terms.is_empty() {
        return Err(Error::config("random effects are not supported in score models"));
    }
    let z = data.binary(&s_formula.lhs_vars[0])?;
    let d = data.binary(&s_formula.lhs_vars[1])?;
    let design = build_design(s_formula, data)?;

    let z_f: Vec<f64> = z.iter().map(|&v| v as f64).collect();
    let d_f: Vec<f64> = d.iter().map(|&v| v as f64).collect();
    let all: Vec<usize> = (0..z.len()).collect();
    let arm1: Vec<usize> = all.iter().copied().filter(|&i| z[i] == 1).collect();
    let arm0: Vec<usize> = all.iter().copied().filter(|&i| z[i] == 0).collect();

    Ok(ScoreFits {
        propensity: fit_logistic(&design, &z_f, &all)?,
        p1: fit_logistic(&design, &d_f, &arm1)?,
        p0: fit_logistic(&design, &d_f, &arm0)?,
        design,
        z,
        d,
    })
}

/// Per-unit principal scores and their marginals, in (never-taker,
/// complier, always-taker) = ("00", "01", "11") order.
#[derive(Debug, Clone)]
pub struct PrincipalScores {
    pub e_never: Vec<f64>,
    pub e_complier: Vec<f64>,
    pub e_always: Vec<f64>,
    /// Sample means of the per-unit scores: (e_00, e_01, e_11).
    pub marginals: (f64, f64, f64),
}

/// Apply the monotonicity identities pointwise. Small negative complier
/// scores are clipped to zero (with renormalization); widespread negatives
/// are a monotonicity violation.
pub fn principal_scores(fits: &ScoreFits) -> Result<PrincipalScores> {
    let n = fits.n_units();
    let mut e_never = Vec::with_capacity(n);
    let mut e_complier = Vec::with_capacity(n);
    let mut e_always = Vec::with_capacity(n);
    let mut violations = 0usize;
    for i in 0..n {
        let (_, p1, p0) = fits.probabilities(i);
        let ec = p1 - p0;
        if ec < MONOTONICITY_TOL {
            violations += 1;
        }
        let ec = ec.max(0.0);
        let ea = p0;
        let en = 1.0 - p1;
        let total = ec + ea + en;
        e_complier.push(ec / total);
        e_always.push(ea / total);
        e_never.push(en / total);
    }
    if violations as f64 > 0.01 * n as f64 {
        return Err(Error::data(format!(
            "monotonicity violation: p1(X) < p0(X) - {} for {violations} of {n} units",
            -MONOTONICITY_TOL
        )));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / n as f64;
    let marginals = (mean(&e_never), mean(&e_complier), mean(&e_always));
    Ok(PrincipalScores { e_never, e_complier, e_always, marginals })
}

/// Weighting target, written in (D(0), D(1)) notation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetStratum {
    /// "00"
    NeverTaker,
    /// "01"
    Complier,
    /// "11"
    AlwaysTaker,
}

impl TargetStratum {
    pub fn parse(text: &str) -> Result<TargetStratum> {
        match text.trim() {
            "00" | "n" | "never" | "nt" => Ok(TargetStratum::NeverTaker),
            "01" | "c" | "complier" | "compliers" | "co" => Ok(TargetStratum::Complier),
            "11" | "a" | "always" | "at" => Ok(TargetStratum::AlwaysTaker),
            other => Err(Error::config(format!(
                "unknown stratum '{other}'; use one of 00, 01, 11"
            ))),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            TargetStratum::NeverTaker => "00",
            TargetStratum::Complier => "01",
            TargetStratum::AlwaysTaker => "11",
        }
    }

    /// D(s, z) for the two arms.
    fn d_of(self, z: u8) -> u8 {
        match (self, z) {
            (TargetStratum::NeverTaker, _) => 0,
            (TargetStratum::AlwaysTaker, _) => 1,
            (TargetStratum::Complier, z) => z,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TauEstimate {
    pub stratum: TargetStratum,
    pub estimate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Effective sample size of the weighted cells, per arm (z = 0, 1).
    pub ess: [f64; 2],
    pub bootstrap_replicates: usize,
    pub bootstrap_used: usize,
}

#[derive(Debug, Clone)]
pub struct BootstrapConfig {
    pub replicates: usize,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig { replicates: 500, seed: 1 }
    }
}

/// Point estimate: Hajek-normalized weighted arm means.
fn tau_point(
    fits: &ScoreFits,
    scores: &PrincipalScores,
    y: &[f64],
    stratum: TargetStratum,
) -> Result<(f64, [f64; 2])> {
    let n = fits.n_units();
    let mut arm_mean = [0.0f64; 2];
    let mut ess = [0.0f64; 2];
    for z in 0..2u8 {
        let mut num = 0.0;
        let mut den = 0.0;
        let mut sum_w2 = 0.0;
        for i in 0..n {
            let (pi, p1, p0) = fits.probabilities(i);
            let w = if stratum == TargetStratum::Complier {
                // Assignment-balanced weights covering both arms of the
                // mixed cells; always-/never-takers cancel under ER.
                let sign = fits.z[i] as f64 - pi;
                let base = sign / (pi * (1.0 - pi));
                match z {
                    1 if fits.d[i] == 1 => base,
                    0 if fits.d[i] == 0 => -base,
                    _ => continue,
                }
            } else {
                // Direct cell weighting toward the stratum's covariate
                // distribution.
                let d_target = stratum.d_of(z);
                if fits.z[i] != z || fits.d[i] != d_target {
                    continue;
                }
                let e_s = match stratum {
                    TargetStratum::NeverTaker => scores.e_never[i],
                    TargetStratum::AlwaysTaker => scores.e_always[i],
                    TargetStratum::Complier => unreachable!(),
                };
                let pz = if z == 1 { pi } else { 1.0 - pi };
                let p_obs = match (z, d_target) {
                    (1, 1) => p1,
                    (1, 0) => 1.0 - p1,
                    (0, 1) => p0,
                    _ => 1.0 - p0,
                };
                e_s / (pz * p_obs)
            };
            num += w * y[i];
            den += w;
            sum_w2 += w * w;
        }
        if den <= 0.0 {
            return Err(Error::Estimand(format!(
                "degenerate weights in arm Z={z} for stratum {}",
                stratum.label()
            )));
        }
        ess[z as usize] = den * den / sum_w2;
        if ess[z as usize] < 10.0 {
            return Err(Error::Estimand(format!(
                "unstable estimate: effective sample size {:.1} < 10 in arm Z={z} for \
                 stratum {}",
                ess[z as usize],
                stratum.label()
            )));
        }
        arm_mean[z as usize] = num / den;
    }
    Ok((arm_mean[1] - arm_mean[0], ess))
}

/// Principal-score weighting estimate of E[Y(1) - Y(0) | S = s] with a
/// percentile bootstrap CI (resampling units; replicate r draws from an
/// independent stream seeded `seed + r`).
pub fn tau_weighting(
    data: &Dataset,
    s_formula: &FormulaAst,
    y_var: &str,
    stratum: TargetStratum,
    cfg: &BootstrapConfig,
) -> Result<TauEstimate> {
    let y = data.numeric(y_var)?.to_vec();
    let fits = fit_scores(data, s_formula)?;
    let scores = principal_scores(&fits)?;
    let (estimate, ess) = tau_point(&fits, &scores, &y, stratum)?;

    let n = data.n_rows();
    let mut boot = Vec::with_capacity(cfg.replicates);
    for r in 0..cfg.replicates {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(r as u64));
        let take: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
        if let Ok(t) = tau_resample(data, s_formula, &y, stratum, &take) {
            boot.push(t);
        }
    }
    if boot.len() < cfg.replicates / 2 {
        return Err(Error::Estimand(format!(
            "bootstrap failed on {} of {} replicates",
            cfg.replicates - boot.len(),
            cfg.replicates
        )));
    }
    let (ci_low, ci_high) = if boot.is_empty() {
        (f64::NAN, f64::NAN)
    } else {
        (quantile(&boot, 0.025), quantile(&boot, 0.975))
    };
    Ok(TauEstimate {
        stratum,
        estimate,
        ci_low,
        ci_high,
        ess,
        bootstrap_replicates: cfg.replicates,
        bootstrap_used: boot.len(),
    })
}

fn tau_resample(
    data: &Dataset,
    s_formula: &FormulaAst,
    y: &[f64],
    stratum: TargetStratum,
    take: &[usize],
) -> Result<f64> {
    // Rebuild the dataset restricted to the resampled rows.
    let mut resampled = Dataset::new();
    for name in data.column_names().map(str::to_string).collect::<Vec<_>>() {
        match data.column(&name).unwrap() {
            crate::data::Column::Numeric(v) => {
                resampled.push_numeric(name, take.iter().map(|&i| v[i]).collect())?;
            }
            crate::data::Column::Categorical { levels, codes } => {
                let vals: Vec<&str> =
                    take.iter().map(|&i| levels[codes[i] as usize].as_str()).collect();
                resampled.push_categorical(name, &vals)?;
            }
        }
    }
    let y_res: Vec<f64> = take.iter().map(|&i| y[i]).collect();
    let fits = fit_scores(&resampled, s_formula)?;
    let scores = principal_scores(&fits)?;
    Ok(tau_point(&fits, &scores, &y_res, stratum)?.0)
}

/// The two-stage-least-squares probability limit:
/// (E[Y|Z=1] - E[Y|Z=0]) / (E[D|Z=1] - E[D|Z=0]).
pub fn wald_cace(data: &Dataset, z_var: &str, d_var: &str, y_var: &str) -> Result<f64> {
    let z = data.binary(z_var)?;
    let d = data.numeric(d_var)?;
    let y = data.numeric(y_var)?;
    let mut sums = [[0.0f64; 2]; 2]; // [arm][y, d]
    let mut counts = [0usize; 2];
    for i in 0..z.len() {
        let arm = z[i] as usize;
        sums[arm][0] += y[i];
        sums[arm][1] += d[i];
        counts[arm] += 1;
    }
    if counts[0] == 0 || counts[1] == 0 {
        return Err(Error::data("both treatment arms must be observed"));
    }
    let dy = sums[1][0] / counts[1] as f64 - sums[0][0] / counts[0] as f64;
    let dd = sums[1][1] / counts[1] as f64 - sums[0][1] / counts[0] as f64;
    if dd == 0.0 {
        return Err(Error::Estimand(
            "Wald denominator is zero: D does not respond to Z in this sample".to_string(),
        ));
    }
    Ok(dy / dd)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::parse_formula;
    use rand::Rng;

    /// Noncompliance data with known latent strata; returns (data, strata).
    fn synth(n: usize, seed: u64, effect: f64, confounded: bool) -> (Dataset, Vec<u8>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut cols: Vec<Vec<f64>> = vec![Vec::new(); 4];
        let mut strata = Vec::with_capacity(n);
        for _ in 0..n {
            let x: f64 = rng.random::<f64>() * 2.0 - 1.0;
            // Latent stratum: 0=never, 1=complier, 2=always; mildly
            // covariate-dependent when `confounded`.
            let shift = if confounded { 0.15 * x } else { 0.0 };
            let u: f64 = rng.random();
            let s = if u < 0.3 - shift {
                0
            } else if u < 0.8 {
                1
            } else {
                2
            };
            strata.push(s as u8);
            let z = rng.random::<bool>() as u8;
            let d = match (s, z) {
                (0, _) => 0,
                (1, z) => z,
                _ => 1,
            };
            // Outcome mean depends on X and D only, so principal
            // ignorability holds by construction.
            let noise: f64 = rng.random::<f64>() - 0.5;
            let y = 0.5 * x + effect * (d as f64) + noise;
            cols[0].push(z as f64);
            cols[1].push(d as f64);
            cols[2].push(y);
            cols[3].push(x);
        }
        let mut data = Dataset::new();
        for (name, col) in ["Z", "D", "Y", "X"].iter().zip(cols) {
            data.push_numeric(*name, col).unwrap();
        }
        (data, strata)
    }

    #[test]
    fn intercept_only_propensity_matches_sample_mean() {
        let (data, _) = synth(2000, 1, 1.0, false);
        let f = parse_formula("Z + D ~ 1").unwrap();
        let fits = fit_scores(&data, &f).unwrap();
        let z_mean =
            data.numeric("Z").unwrap().iter().sum::<f64>() / data.n_rows() as f64;
        let (pi, _, _) = fits.probabilities(0);
        assert!((pi - z_mean).abs() < 1e-6, "{pi} vs {z_mean}");
        assert!(fits.propensity.converged);
    }

    #[test]
    fn independent_d_gives_constant_arm_means() {
        let (data, _) = synth(3000, 2, 0.0, false);
        let f = parse_formula("Z + D ~ 1").unwrap();
        let fits = fit_scores(&data, &f).unwrap();
        let z = data.binary("Z").unwrap();
        let d = data.numeric("D").unwrap();
        let arm_mean = |arm: u8| {
            let (s, c) = z
                .iter()
                .zip(d)
                .filter(|(&zi, _)| zi == arm)
                .fold((0.0, 0usize), |(s, c), (_, &di)| (s + di, c + 1));
            s / c as f64
        };
        let (_, p1, p0) = fits.probabilities(0);
        assert!((p1 - arm_mean(1)).abs() < 1e-6);
        assert!((p0 - arm_mean(0)).abs() < 1e-6);
    }

    #[test]
    fn principal_score_identities() {
        // Constant p1 = 0.7, p0 = 0.2 -> e = (n 0.3, c 0.5, a 0.2).
        let mut data = Dataset::new();
        let n = 4000;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut z = Vec::new();
        let mut d = Vec::new();
        for _ in 0..n {
            let zi = rng.random::<bool>() as u8;
            let p = if zi == 1 { 0.7 } else { 0.2 };
            z.push(zi as f64);
            d.push((rng.random::<f64>() < p) as u8 as f64);
        }
        data.push_numeric("Z", z).unwrap();
        data.push_numeric("D", d).unwrap();
        let f = parse_formula("Z + D ~ 1").unwrap();
        let fits = fit_scores(&data, &f).unwrap();
        let scores = principal_scores(&fits).unwrap();
        let (en, ec, ea) = scores.marginals;
        assert!((ec - 0.5).abs() < 0.03, "complier {ec}");
        assert!((ea - 0.2).abs() < 0.03, "always {ea}");
        assert!((en - 0.3).abs() < 0.03, "never {en}");
        // The triple sums to one per unit.
        for i in 0..data.n_rows() {
            let total = scores.e_never[i] + scores.e_complier[i] + scores.e_always[i];
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn equal_arms_mean_no_compliers() {
        let mut data = Dataset::new();
        let n = 1000;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut z = Vec::new();
        let mut d = Vec::new();
        for _ in 0..n {
            z.push(rng.random::<bool>() as u8 as f64);
            d.push((rng.random::<f64>() < 0.4) as u8 as f64);
        }
        data.push_numeric("Z", z).unwrap();
        data.push_numeric("D", d).unwrap();
        let fits = fit_scores(&data, &parse_formula("Z + D ~ 1").unwrap()).unwrap();
        let scores = principal_scores(&fits).unwrap();
        // p1 ~= p0, so the complier score is approximately zero.
        assert!(scores.marginals.1 < 0.05, "complier {}", scores.marginals.1);
    }

    #[test]
    fn monotonicity_violation_is_detected() {
        // D strongly anti-monotone: treatment reduces uptake.
        let mut data = Dataset::new();
        let n = 1000;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut z = Vec::new();
        let mut d = Vec::new();
        for _ in 0..n {
            let zi = rng.random::<bool>() as u8;
            let p = if zi == 1 { 0.2 } else { 0.7 };
            z.push(zi as f64);
            d.push((rng.random::<f64>() < p) as u8 as f64);
        }
        data.push_numeric("Z", z).unwrap();
        data.push_numeric("D", d).unwrap();
        let fits = fit_scores(&data, &parse_formula("Z + D ~ 1").unwrap()).unwrap();
        let err = principal_scores(&fits).unwrap_err();
        assert!(err.to_string().contains("monotonicity"), "{err}");
    }

    #[test]
    fn weighting_matches_oracle_difference_in_means() {
        // No confounding, homogeneous effect: the weighting estimate must
        // sit near the oracle difference-in-means among true compliers.
        let (data, strata) = synth(4000, 6, 2.5, false);
        let z = data.binary("Z").unwrap();
        let y = data.numeric("Y").unwrap();
        let mut arm = [(0.0, 0usize); 2];
        for i in 0..data.n_rows() {
            if strata[i] == 1 {
                let a = z[i] as usize;
                arm[a].0 += y[i];
                arm[a].1 += 1;
            }
        }
        let oracle = arm[1].0 / arm[1].1 as f64 - arm[0].0 / arm[0].1 as f64;
        let est = tau_weighting(
            &data,
            &parse_formula("Z + D ~ X").unwrap(),
            "Y",
            TargetStratum::Complier,
            &BootstrapConfig { replicates: 60, seed: 7 },
        )
        .unwrap();
        assert!((est.estimate - oracle).abs() < 0.15, "{} vs {oracle}", est.estimate);
        assert!(est.ci_low < est.estimate && est.estimate < est.ci_high);
        assert!(est.ess[0] >= 10.0 && est.ess[1] >= 10.0);
    }

    #[test]
    fn weighting_is_shift_equivariant() {
        let (data, _) = synth(1500, 8, 1.0, true);
        let f = parse_formula("Z + D ~ X").unwrap();
        let cfg = BootstrapConfig { replicates: 10, seed: 9 };
        let t1 = tau_weighting(&data, &f, "Y", TargetStratum::Complier, &cfg).unwrap();
        // Shift Y by a constant.
        let mut shifted = Dataset::new();
        shifted.push_numeric("Z", data.numeric("Z").unwrap().to_vec()).unwrap();
        shifted.push_numeric("D", data.numeric("D").unwrap().to_vec()).unwrap();
        shifted
            .push_numeric("Y", data.numeric("Y").unwrap().iter().map(|v| v + 57.0).collect())
            .unwrap();
        shifted.push_numeric("X", data.numeric("X").unwrap().to_vec()).unwrap();
        let t2 = tau_weighting(&shifted, &f, "Y", TargetStratum::Complier, &cfg).unwrap();
        assert!((t1.estimate - t2.estimate).abs() < 1e-9);
    }

    #[test]
    fn zero_effect_ci_covers_zero() {
        let (data, _) = synth(2000, 10, 0.0, false);
        let est = tau_weighting(
            &data,
            &parse_formula("Z + D ~ X").unwrap(),
            "Y",
            TargetStratum::Complier,
            &BootstrapConfig { replicates: 80, seed: 11 },
        )
        .unwrap();
        assert!(est.ci_low <= 0.0 && 0.0 <= est.ci_high, "{est:?}");
    }

    #[test]
    fn wald_ratio_cases() {
        // Perfect compliance: reduces to the difference in means.
        let mut data = Dataset::new();
        let n = 1000;
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut z = Vec::new();
        let mut y = Vec::new();
        for _ in 0..n {
            let zi = rng.random::<bool>() as u8;
            z.push(zi as f64);
            y.push(3.0 * zi as f64 + rng.random::<f64>());
        }
        data.push_numeric("Z", z.clone()).unwrap();
        data.push_numeric("D", z.clone()).unwrap();
        data.push_numeric("Y", y.clone()).unwrap();
        let w = wald_cace(&data, "Z", "D", "Y").unwrap();
        let dm = {
            let (s1, n1) = y
                .iter()
                .zip(&z)
                .filter(|(_, &zi)| zi == 1.0)
                .fold((0.0, 0), |(s, c), (&yi, _)| (s + yi, c + 1));
            let (s0, n0) = y
                .iter()
                .zip(&z)
                .filter(|(_, &zi)| zi == 0.0)
                .fold((0.0, 0), |(s, c), (&yi, _)| (s + yi, c + 1));
            s1 / n1 as f64 - s0 / n0 as f64
        };
        assert!((w - dm).abs() < 1e-12);

        // Y independent of Z: ratio near zero.
        let (data, _) = synth(4000, 13, 0.0, false);
        let w = wald_cace(&data, "Z", "D", "Y").unwrap();
        assert!(w.abs() < 0.15, "null Wald {w}");

        // Zero denominator.
        let mut flat = Dataset::new();
        flat.push_numeric("Z", vec![0.0, 1.0, 0.0, 1.0]).unwrap();
        flat.push_numeric("D", vec![1.0, 1.0, 1.0, 1.0]).unwrap();
        flat.push_numeric("Y", vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!(wald_cace(&flat, "Z", "D", "Y").is_err());
    }

    #[test]
    fn separation_falls_back_to_ridge() {
        // X perfectly separates Z.
        let mut data = Dataset::new();
        let x: Vec<f64> = (0..40).map(|i| i as f64 - 19.5).collect();
        let z: Vec<f64> = x.iter().map(|&v| (v > 0.0) as u8 as f64).collect();
        data.push_numeric("Z", z.clone()).unwrap();
        data.push_numeric("D", z.clone()).unwrap();
        data.push_numeric("X", x).unwrap();
        let fits = fit_scores(&data, &parse_formula("Z + D ~ X").unwrap()).unwrap();
        assert!(fits.propensity.ridged);
    }
}
