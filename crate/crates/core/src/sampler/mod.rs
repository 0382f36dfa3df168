//! Gradient-based posterior sampling: multinomial NUTS with dual-averaging
//! step-size adaptation and windowed diagonal mass-matrix estimation,
//! multi-chain execution, and convergence diagnostics.

mod adapt;
mod diag;
mod nuts;

pub use diag::{diagnose, Diagnostics, ParamDiagnostics};

use crate::error::{Error, Result};
use crate::model::{PsModel, Workspace};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A differentiable log-density the sampler can draw from.
pub trait Target: Sync {
    fn dim(&self) -> usize;

    /// Log density and gradient at `q` (unconstrained scale). Returns
    /// `-inf` for invalid points; the gradient is then unspecified.
    fn logp_grad(&self, q: &[f64], grad: &mut [f64]) -> f64;

    fn param_names(&self) -> Vec<String> {
        (0..self.dim()).map(|i| format!("q{i}")).collect()
    }

    /// Map an unconstrained point to the constrained (reporting) scale.
    fn to_constrained(&self, q: &[f64], out: &mut [f64]) {
        out.copy_from_slice(q);
    }
}

impl Target for PsModel {
    fn dim(&self) -> usize {
        self.layout.width
    }

    fn logp_grad(&self, q: &[f64], grad: &mut [f64]) -> f64 {
        thread_local! {
            static WS: std::cell::RefCell<Workspace> =
                std::cell::RefCell::new(Workspace::default());
        }
        WS.with(|ws| self.log_posterior_and_grad(q, grad, &mut ws.borrow_mut()))
    }

    fn param_names(&self) -> Vec<String> {
        self.layout.names.clone()
    }

    fn to_constrained(&self, q: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.layout.constrain(q));
    }
}

#[derive(Debug, Clone)]
pub struct SamplerConfig {
    pub chains: usize,
    /// Warmup iterations per chain (discarded).
    pub warmup: usize,
    /// Total iterations per chain, including warmup.
    pub iter: usize,
    pub seed: u64,
    pub target_accept: f64,
    pub max_treedepth: usize,
    /// Number of chains run concurrently.
    pub cores: usize,
    /// Progress-line period on stderr; 0 silences progress.
    pub refresh: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            chains: 4,
            warmup: 1000,
            iter: 2000,
            seed: 1,
            target_accept: 0.8,
            max_treedepth: 10,
            cores: 1,
            refresh: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.chains == 0 {
            return Err(Error::config("chains must be >= 1"));
        }
        if self.iter <= self.warmup {
            return Err(Error::config(format!(
                "iter ({}) must exceed warmup ({})",
                self.iter, self.warmup
            )));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::config("target_accept must be in (0, 1)"));
        }
        Ok(())
    }

    pub fn draws_per_chain(&self) -> usize {
        self.iter - self.warmup
    }
}

/// Post-warmup draws of one chain, on the constrained scale, with per-draw
/// sampler statistics.
#[derive(Debug, Clone)]
pub struct ChainDraws {
    /// Row-major draws x width.
    pub draws: Vec<f64>,
    pub logp: Vec<f64>,
    pub accept: Vec<f64>,
    pub divergent: Vec<bool>,
    pub treedepth: Vec<u32>,
    pub step_size: f64,
}

#[derive(Debug, Clone)]
pub struct DrawMatrix {
    pub param_names: Vec<String>,
    pub width: usize,
    pub draws_per_chain: usize,
    pub chains: Vec<ChainDraws>,
}

impl DrawMatrix {
    pub fn n_chains(&self) -> usize {
        self.chains.len()
    }

    pub fn total_draws(&self) -> usize {
        self.draws_per_chain * self.chains.len()
    }

    pub fn divergences(&self) -> usize {
        self.chains.iter().map(|c| c.divergent.iter().filter(|&&d| d).count()).sum()
    }

    pub fn draw(&self, chain: usize, k: usize) -> &[f64] {
        &self.chains[chain].draws[k * self.width..(k + 1) * self.width]
    }

    /// One parameter's trace for one chain.
    pub fn param_chain(&self, chain: usize, j: usize) -> Vec<f64> {
        (0..self.draws_per_chain).map(|k| self.draw(chain, k)[j]).collect()
    }

    /// Pooled draws of one parameter across chains, chain-major.
    pub fn param_pooled(&self, j: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.total_draws());
        for c in 0..self.n_chains() {
            for k in 0..self.draws_per_chain {
                out.push(self.draw(c, k)[j]);
            }
        }
        out
    }

    /// Visit every pooled draw in deterministic chain-major order.
    pub fn for_each_draw(&self, mut f: impl FnMut(usize, &[f64])) {
        let mut idx = 0;
        for c in 0..self.n_chains() {
            for k in 0..self.draws_per_chain {
                f(idx, self.draw(c, k));
                idx += 1;
            }
        }
    }
}

/// Run the sampler. Chain `c` is seeded `seed + c` and chains merge by
/// index, so results are reproducible for a fixed config regardless of the
/// `cores` setting.
pub fn sample<T: Target>(target: &T, cfg: &SamplerConfig) -> Result<DrawMatrix> {
    cfg.validate()?;
    let mut chains: Vec<Option<Result<ChainDraws>>> = (0..cfg.chains).map(|_| None).collect();

    if cfg.cores <= 1 {
        for (c, slot) in chains.iter_mut().enumerate() {
            *slot = Some(run_chain(target, cfg, c));
        }
    } else {
        for wave in (0..cfg.chains).collect::<Vec<_>>().chunks(cfg.cores) {
            std::thread::scope(|scope| {
                let handles: Vec<_> = wave
                    .iter()
                    .map(|&c| scope.spawn(move || (c, run_chain(target, cfg, c))))
                    .collect();
                for h in handles {
                    let (c, result) = h.join().expect("chain thread panicked");
                    chains[c] = Some(result);
                }
            });
        }
    }

    let chains: Result<Vec<ChainDraws>> =
        chains.into_iter().map(|c| c.expect("chain not run")).collect();
    Ok(DrawMatrix {
        param_names: target.param_names(),
        width: target.dim(),
        draws_per_chain: cfg.draws_per_chain(),
        chains: chains?,
    })
}

/// Candidate starts examined per chain, and the ascent budget per
/// candidate. Finite-mixture posteriors carry "lumping" local modes; a
/// short deterministic climb from several random starts reliably puts the
/// chain in the dominant basin while keeping per-chain init streams
/// independent.
const INIT_CANDIDATES: usize = 8;
const INIT_ASCENT_ITERS: usize = 100;

fn init_chain<T: Target>(
    target: &T,
    chain: usize,
    rng: &mut ChaCha8Rng,
) -> Result<nuts::State> {
    let dim = target.dim();
    let mut grad = vec![0.0; dim];
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut found = 0usize;
    for _attempt in 0..100 {
        let q: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
        let logp = target.logp_grad(&q, &mut grad);
        if !logp.is_finite() {
            continue;
        }
        let (q, logp) = ascend(target, q, logp, &mut grad);
        if best.as_ref().map_or(true, |(b, _)| logp > *b) {
            best = Some((logp, q));
        }
        found += 1;
        if found >= INIT_CANDIDATES {
            break;
        }
    }
    let Some((_, q)) = best else {
        return Err(Error::Sampler(format!(
            "chain {}: no finite log-posterior found in 100 random starts on [-2, 2]^{}",
            chain + 1,
            dim
        )));
    };
    let logp = target.logp_grad(&q, &mut grad);
    Ok(nuts::State { q, logp, grad })
}

/// Backtracking gradient ascent; returns the improved point and its logp.
fn ascend<T: Target>(
    target: &T,
    mut q: Vec<f64>,
    mut logp: f64,
    grad: &mut [f64],
) -> (Vec<f64>, f64) {
    let dim = q.len();
    let mut g = grad.to_vec();
    let mut step = 1e-3;
    let mut trial = vec![0.0; dim];
    for _ in 0..INIT_ASCENT_ITERS {
        let gnorm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if gnorm < 1e-8 {
            break;
        }
        let mut improved = false;
        for _ in 0..40 {
            for j in 0..dim {
                trial[j] = q[j] + step * g[j] / gnorm.max(1.0);
            }
            let lp = target.logp_grad(&trial, grad);
            if lp.is_finite() && lp > logp {
                let gain = lp - logp;
                q.copy_from_slice(&trial);
                g.copy_from_slice(grad);
                logp = lp;
                step *= 2.0;
                improved = true;
                if gain < 1e-8 * (1.0 + logp.abs()) {
                    return (q, logp);
                }
                break;
            }
            step *= 0.5;
            if step < 1e-12 {
                return (q, logp);
            }
        }
        if !improved {
            break;
        }
    }
    (q, logp)
}

fn run_chain<T: Target>(target: &T, cfg: &SamplerConfig, chain: usize) -> Result<ChainDraws> {
    let dim = target.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed + chain as u64);

    let mut state = init_chain(target, chain, &mut rng)?;
    let mut inv_mass = vec![1.0; dim];
    let mut adapt = adapt::WarmupAdaptation::new(dim, cfg.warmup, cfg.target_accept);
    let mut eps = adapt::find_reasonable_step_size(target, &state, &inv_mass, &mut rng);
    adapt.init_step_size(eps);

    let n_draws = cfg.draws_per_chain();
    let mut out = ChainDraws {
        draws: Vec::with_capacity(n_draws * dim),
        logp: Vec::with_capacity(n_draws),
        accept: Vec::with_capacity(n_draws),
        divergent: Vec::with_capacity(n_draws),
        treedepth: Vec::with_capacity(n_draws),
        step_size: eps,
    };
    let mut constrained = vec![0.0; dim];

    for it in 0..cfg.iter {
        let warming = it < cfg.warmup;
        if cfg.refresh > 0 && (it % cfg.refresh == 0 || it + 1 == cfg.iter) {
            eprintln!(
                "chain {}: iteration {} / {}{}",
                chain + 1,
                it + 1,
                cfg.iter,
                if warming { " (warmup)" } else { "" }
            );
        }

        let trans =
            nuts::transition(target, &mut state, eps, &inv_mass, cfg.max_treedepth, &mut rng);

        if warming {
            if let Some(new_inv_mass) = adapt.update(it, &state.q, trans.accept_stat) {
                inv_mass = new_inv_mass;
                // Re-anchor the step size after each metric change.
                eps = adapt::find_reasonable_step_size(target, &state, &inv_mass, &mut rng);
                adapt.init_step_size(eps);
            } else {
                eps = adapt.current_step_size();
            }
            if it + 1 == cfg.warmup {
                eps = adapt.adapted_step_size();
                out.step_size = eps;
            }
        } else {
            target.to_constrained(&state.q, &mut constrained);
            out.draws.extend_from_slice(&constrained);
            out.logp.push(state.logp);
            out.accept.push(trans.accept_stat);
            out.divergent.push(trans.divergent);
            out.treedepth.push(trans.depth as u32);
        }
    }

    Ok(out)
}
