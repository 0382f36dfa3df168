//! Convergence diagnostics: rank-normalized split R-hat and bulk effective
//! sample size (Vehtari et al. 2021 definitions), plus run-level summaries.

use crate::error::{Error, Result};
use crate::math::normal_inv_cdf;

use super::DrawMatrix;

#[derive(Debug, Clone)]
pub struct ParamDiagnostics {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    /// Absent for single-chain runs.
    pub rhat: Option<f64>,
    pub ess_bulk: f64,
}

#[derive(Debug, Clone)]
pub struct Diagnostics {
    pub params: Vec<ParamDiagnostics>,
    pub divergences: usize,
    pub mean_treedepth: f64,
    pub n_chains: usize,
    pub draws_per_chain: usize,
}

impl Diagnostics {
    pub fn max_rhat(&self) -> Option<f64> {
        self.params.iter().filter_map(|p| p.rhat).fold(None, |acc, r| {
            Some(match acc {
                None => r,
                Some(a) => a.max(r),
            })
        })
    }

    pub fn min_ess(&self) -> f64 {
        self.params.iter().map(|p| p.ess_bulk).fold(f64::INFINITY, f64::min)
    }

    /// True when any R-hat exceeds 1.05 or any transition diverged.
    pub fn flagged(&self) -> bool {
        self.max_rhat().map_or(false, |r| r > 1.05) || self.divergences > 0
    }

    pub fn report(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{} chains x {} draws, {} divergent transitions, mean tree depth {:.2}\n",
            self.n_chains, self.draws_per_chain, self.divergences, self.mean_treedepth
        ));
        out.push_str(&format!(
            "{:<28} {:>12} {:>12} {:>8} {:>10}\n",
            "parameter", "mean", "sd", "R-hat", "bulk-ESS"
        ));
        for p in &self.params {
            let rhat = p.rhat.map_or("--".to_string(), |r| format!("{r:.3}"));
            out.push_str(&format!(
                "{:<28} {:>12.6} {:>12.6} {:>8} {:>10.0}\n",
                p.name, p.mean, p.sd, rhat, p.ess_bulk
            ));
        }
        if self.flagged() {
            out.push_str("warning: R-hat above 1.05 or divergences present\n");
        }
        out
    }
}

/// Compute per-parameter split R-hat and bulk ESS for a sampler run.
pub fn diagnose(draws: &DrawMatrix) -> Result<Diagnostics> {
    if draws.draws_per_chain < 4 {
        return Err(Error::config("diagnostics need at least 4 draws per chain"));
    }
    let multi_chain = draws.n_chains() >= 2;
    let mut params = Vec::with_capacity(draws.width);
    for j in 0..draws.width {
        let chains: Vec<Vec<f64>> =
            (0..draws.n_chains()).map(|c| draws.param_chain(c, j)).collect();
        let pooled: Vec<f64> = chains.iter().flatten().copied().collect();
        let mean = crate::math::mean(&pooled);
        let sd = if pooled.len() > 1 { crate::math::sample_sd(&pooled) } else { 0.0 };
        let normalized = rank_normalize(&chains);
        let rhat = if multi_chain { Some(split_rhat(&normalized)) } else { None };
        let ess_bulk = ess(&normalized);
        params.push(ParamDiagnostics { name: draws.param_names[j].clone(), mean, sd, rhat, ess_bulk });
    }
    let total: usize = draws.chains.iter().map(|c| c.treedepth.len()).sum();
    let depth_sum: u64 =
        draws.chains.iter().flat_map(|c| c.treedepth.iter().map(|&d| d as u64)).sum();
    Ok(Diagnostics {
        params,
        divergences: draws.divergences(),
        mean_treedepth: if total > 0 { depth_sum as f64 / total as f64 } else { 0.0 },
        n_chains: draws.n_chains(),
        draws_per_chain: draws.draws_per_chain,
    })
}

/// Replace draws by normal scores of their pooled ranks (average ranks on
/// ties).
fn rank_normalize(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n_per = chains[0].len();
    let total = chains.len() * n_per;
    let mut indexed: Vec<(f64, usize)> = Vec::with_capacity(total);
    for (c, chain) in chains.iter().enumerate() {
        for (i, &v) in chain.iter().enumerate() {
            indexed.push((v, c * n_per + i));
        }
    }
    indexed.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));

    let mut ranks = vec![0.0; total];
    let mut i = 0;
    while i < total {
        let mut j = i;
        while j < total && indexed[j].0 == indexed[i].0 {
            j += 1;
        }
        let avg = (i + j + 1) as f64 / 2.0;
        for k in i..j {
            ranks[indexed[k].1] = avg;
        }
        i = j;
    }

    let n_f = total as f64;
    let mut out = vec![vec![0.0; n_per]; chains.len()];
    for (flat, &rank) in ranks.iter().enumerate() {
        let p = (rank - 0.375) / (n_f + 0.25);
        out[flat / n_per][flat % n_per] = normal_inv_cdf(p);
    }
    out
}

fn split(chains: &[Vec<f64>]) -> Vec<&[f64]> {
    let mut halves = Vec::with_capacity(chains.len() * 2);
    for c in chains {
        let mid = c.len() / 2;
        halves.push(&c[..mid]);
        halves.push(&c[mid..mid * 2]);
    }
    halves
}

/// Split R-hat on (already rank-normalized) chains. Degenerate chains with
/// no within variance return exactly 1.
fn split_rhat(chains: &[Vec<f64>]) -> f64 {
    let halves = split(chains);
    let m = halves.len() as f64;
    let n = halves[0].len() as f64;
    let means: Vec<f64> = halves.iter().map(|h| h.iter().sum::<f64>() / n).collect();
    let grand = means.iter().sum::<f64>() / m;
    let b = n / (m - 1.0) * means.iter().map(|&x| (x - grand) * (x - grand)).sum::<f64>();
    let w = halves
        .iter()
        .zip(&means)
        .map(|(h, &hm)| h.iter().map(|&x| (x - hm) * (x - hm)).sum::<f64>() / (n - 1.0))
        .sum::<f64>()
        / m;
    if w < 1e-300 {
        return 1.0;
    }
    let var_plus = (n - 1.0) / n * w + b / n;
    (var_plus / w).sqrt()
}

/// Multi-chain ESS with Geyer's initial monotone positive sequence.
fn ess(chains: &[Vec<f64>]) -> f64 {
    let halves = split(chains);
    let m = halves.len();
    let n = halves[0].len();
    if n < 2 {
        return f64::NAN;
    }
    let means: Vec<f64> = halves.iter().map(|h| h.iter().sum::<f64>() / n as f64).collect();

    // Autocovariances per half-chain at one lag (1/n normalization).
    let acov = |h: &[f64], hm: f64, t: usize| -> f64 {
        let mut acc = 0.0;
        for i in 0..n - t {
            acc += (h[i] - hm) * (h[i + t] - hm);
        }
        acc / n as f64
    };

    let acov0: Vec<f64> = halves.iter().zip(&means).map(|(h, &hm)| acov(h, hm, 0)).collect();
    let w: f64 =
        acov0.iter().map(|&a| a * n as f64 / (n as f64 - 1.0)).sum::<f64>() / m as f64;
    if w < 1e-300 {
        return f64::NAN;
    }
    let grand = means.iter().sum::<f64>() / m as f64;
    let b = if m > 1 {
        n as f64 / (m as f64 - 1.0)
            * means.iter().map(|&x| (x - grand) * (x - grand)).sum::<f64>()
    } else {
        0.0
    };
    let var_plus = (n as f64 - 1.0) / n as f64 * w + b / n as f64;

    let rho = |t: usize| -> f64 {
        let mean_acov: f64 =
            halves.iter().zip(&means).map(|(h, &hm)| acov(h, hm, t)).sum::<f64>() / m as f64;
        1.0 - (w - mean_acov) / var_plus
    };

    // Paired sums, truncated when a pair goes negative, forced monotone.
    let mut tau = -1.0;
    let mut prev_pair = f64::INFINITY;
    let mut t = 0;
    while t + 1 < n {
        let pair = if t == 0 { 1.0 + rho(1) } else { rho(t) + rho(t + 1) };
        if pair <= 0.0 {
            break;
        }
        tau += 2.0 * pair.min(prev_pair);
        prev_pair = pair.min(prev_pair);
        t += 2;
    }
    let total = (m * n) as f64;
    (total / tau.max(1.0 / total)).min(total * 10.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::ChainDraws;

    fn matrix_from(chains: Vec<Vec<f64>>) -> DrawMatrix {
        let n = chains[0].len();
        DrawMatrix {
            param_names: vec!["x".to_string()],
            width: 1,
            draws_per_chain: n,
            chains: chains
                .into_iter()
                .map(|c| ChainDraws {
                    draws: c,
                    logp: vec![0.0; n],
                    accept: vec![1.0; n],
                    divergent: vec![false; n],
                    treedepth: vec![1; n],
                    step_size: 0.5,
                })
                .collect(),
        }
    }

    #[test]
    fn constant_chains_have_unit_rhat() {
        let draws = matrix_from(vec![vec![2.5; 100], vec![2.5; 100]]);
        let d = diagnose(&draws).unwrap();
        assert_eq!(d.params[0].rhat, Some(1.0));
    }

    #[test]
    fn shifted_chains_have_large_rhat() {
        // Chains from N(0,1) and N(5,1): far from converged.
        let mut state = 123456789u64;
        let mut rand01 = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        let mut gauss = move || {
            let (u1, u2) = (rand01().max(1e-12), rand01());
            (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
        };
        let c1: Vec<f64> = (0..500).map(|_| gauss()).collect();
        let c2: Vec<f64> = (0..500).map(|_| gauss() + 5.0).collect();
        let d = diagnose(&matrix_from(vec![c1, c2])).unwrap();
        assert!(d.params[0].rhat.unwrap() > 1.1, "rhat {:?}", d.params[0].rhat);
        assert!(d.flagged());
    }

    #[test]
    fn iid_draws_have_near_total_ess() {
        let mut state = 42u64;
        let mut rand01 = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        let mut gauss = move || {
            let (u1, u2) = (rand01().max(1e-12), rand01());
            (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
        };
        let chains: Vec<Vec<f64>> =
            (0..4).map(|_| (0..1000).map(|_| gauss()).collect()).collect();
        let d = diagnose(&matrix_from(chains)).unwrap();
        let ess = d.params[0].ess_bulk;
        assert!((2000.0..=4400.0).contains(&ess), "ess {ess}");
        assert!(d.params[0].rhat.unwrap() < 1.01);
    }

    #[test]
    fn single_chain_reports_no_rhat() {
        let draws = matrix_from(vec![(0..100).map(|i| (i as f64).sin()).collect()]);
        let d = diagnose(&draws).unwrap();
        assert!(d.params[0].rhat.is_none());
        assert!(d.max_rhat().is_none());
    }
}
