//! Prior distributions and the per-class prior sets.
//!
//! Real-line priors: flat (improper), normal, Student t, Cauchy, double
//! exponential ("lasso"), logistic. Positive-domain priors: chi-squared,
//! inverse chi-squared, exponential, gamma, inverse gamma, Weibull.
//!
//! Defaults: flat intercepts, standard-normal coefficients, inverse-gamma(1,1)
//! for the positive family parameters and random-effect scales, and a
//! standard-normal prior on the (real-valued) Weibull-hazard log-shape.

use crate::error::{Error, Result};
use crate::math::{log1p_exp, sigmoid, LN_SQRT_2PI};
use crate::rcall::parse_call;

use statrs::function::gamma::ln_gamma;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Prior {
    Flat,
    Normal { mean: f64, sigma: f64 },
    StudentT { mean: f64, sigma: f64, df: f64 },
    Cauchy { mean: f64, sigma: f64 },
    /// Double exponential (Laplace).
    Lasso { mean: f64, sigma: f64 },
    Logistic { mean: f64, sigma: f64 },
    ChiSquared { df: f64 },
    InvChiSquared { df: f64 },
    Exponential { rate: f64 },
    Gamma { shape: f64, rate: f64 },
    InvGamma { shape: f64, rate: f64 },
    Weibull { shape: f64, scale: f64 },
}

impl Prior {
    pub fn is_positive_domain(&self) -> bool {
        matches!(
            self,
            Prior::ChiSquared { .. }
                | Prior::InvChiSquared { .. }
                | Prior::Exponential { .. }
                | Prior::Gamma { .. }
                | Prior::InvGamma { .. }
                | Prior::Weibull { .. }
        )
    }

    /// log p(x) and d log p / dx. Positive-domain priors assume x > 0.
    pub fn log_density_and_grad(&self, x: f64) -> (f64, f64) {
        match *self {
            Prior::Flat => (0.0, 0.0),
            Prior::Normal { mean, sigma } => {
                let z = (x - mean) / sigma;
                (-sigma.ln() - LN_SQRT_2PI - 0.5 * z * z, -z / sigma)
            }
            Prior::StudentT { mean, sigma, df } => {
                let z = (x - mean) / sigma;
                let lp = ln_gamma((df + 1.0) / 2.0)
                    - ln_gamma(df / 2.0)
                    - 0.5 * (df * std::f64::consts::PI).ln()
                    - sigma.ln()
                    - 0.5 * (df + 1.0) * (1.0 + z * z / df).ln();
                (lp, -(df + 1.0) * z / (sigma * (df + z * z)))
            }
            Prior::Cauchy { mean, sigma } => {
                let z = (x - mean) / sigma;
                (
                    -(std::f64::consts::PI * sigma).ln() - (1.0 + z * z).ln(),
                    -2.0 * z / (sigma * (1.0 + z * z)),
                )
            }
            Prior::Lasso { mean, sigma } => {
                let z = (x - mean) / sigma;
                (-(2.0 * sigma).ln() - z.abs(), -z.signum() / sigma)
            }
            Prior::Logistic { mean, sigma } => {
                let z = (x - mean) / sigma;
                (-z - 2.0 * log1p_exp(-z) - sigma.ln(), (1.0 - 2.0 * sigmoid(z)) / sigma)
            }
            Prior::ChiSquared { df } => {
                let k2 = df / 2.0;
                (
                    (k2 - 1.0) * x.ln() - x / 2.0 - k2 * 2.0f64.ln() - ln_gamma(k2),
                    (k2 - 1.0) / x - 0.5,
                )
            }
            Prior::InvChiSquared { df } => {
                let k2 = df / 2.0;
                (
                    -k2 * 2.0f64.ln() - ln_gamma(k2) - (k2 + 1.0) * x.ln() - 1.0 / (2.0 * x),
                    -(k2 + 1.0) / x + 1.0 / (2.0 * x * x),
                )
            }
            Prior::Exponential { rate } => (rate.ln() - rate * x, -rate),
            Prior::Gamma { shape, rate } => (
                shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * x.ln() - rate * x,
                (shape - 1.0) / x - rate,
            ),
            Prior::InvGamma { shape, rate } => (
                shape * rate.ln() - ln_gamma(shape) - (shape + 1.0) * x.ln() - rate / x,
                -(shape + 1.0) / x + rate / (x * x),
            ),
            Prior::Weibull { shape, scale } => {
                let t = (x / scale).powf(shape);
                (
                    shape.ln() - shape * scale.ln() + (shape - 1.0) * x.ln() - t,
                    (shape - 1.0) / x - shape * t / x,
                )
            }
        }
    }

    /// Parse a Table-2 style specification string like `prior_normal(0, 1)`.
    pub fn parse(text: &str) -> Result<Prior> {
        let call = parse_call(text)?;
        let p = |key: &str, pos: usize, default: f64| call.number_arg(key, pos, default);
        let prior = match call.name.as_str() {
            "prior_flat" => Prior::Flat,
            "prior_normal" => {
                Prior::Normal { mean: p("mean", 0, 0.0)?, sigma: p("sigma", 1, 1.0)? }
            }
            "prior_t" => Prior::StudentT {
                mean: p("mean", 0, 0.0)?,
                sigma: p("sigma", 1, 1.0)?,
                df: p("df", 2, 1.0)?,
            },
            "prior_cauchy" => {
                Prior::Cauchy { mean: p("mean", 0, 0.0)?, sigma: p("sigma", 1, 1.0)? }
            }
            "prior_lasso" => {
                Prior::Lasso { mean: p("mean", 0, 0.0)?, sigma: p("sigma", 1, 1.0)? }
            }
            "prior_logistic" => {
                Prior::Logistic { mean: p("mean", 0, 0.0)?, sigma: p("sigma", 1, 1.0)? }
            }
            "prior_chisq" => Prior::ChiSquared { df: p("df", 0, 1.0)? },
            "prior_inv_chisq" => Prior::InvChiSquared { df: p("df", 0, 1.0)? },
            "prior_exponential" => Prior::Exponential { rate: p("beta", 0, 1.0)? },
            "prior_gamma" => {
                Prior::Gamma { shape: p("alpha", 0, 1.0)?, rate: p("beta", 1, 1.0)? }
            }
            "prior_inv_gamma" => {
                Prior::InvGamma { shape: p("alpha", 0, 1.0)?, rate: p("beta", 1, 1.0)? }
            }
            "prior_weibull" => {
                Prior::Weibull { shape: p("alpha", 0, 1.0)?, scale: p("sigma", 1, 1.0)? }
            }
            other => {
                return Err(Error::config(format!(
                    "unknown prior '{other}'; supported: prior_flat, prior_normal, prior_t, \
                     prior_cauchy, prior_lasso, prior_logistic, prior_chisq, prior_inv_chisq, \
                     prior_exponential, prior_gamma, prior_inv_gamma, prior_weibull"
                )))
            }
        };
        prior.validate()?;
        Ok(prior)
    }

    fn validate(&self) -> Result<()> {
        let positive = |v: f64, what: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(format!("prior hyperparameter {what} must be positive, got {v}")))
            }
        };
        match *self {
            Prior::Flat => Ok(()),
            Prior::Normal { sigma, .. }
            | Prior::Cauchy { sigma, .. }
            | Prior::Lasso { sigma, .. }
            | Prior::Logistic { sigma, .. } => positive(sigma, "sigma"),
            Prior::StudentT { sigma, df, .. } => {
                positive(sigma, "sigma")?;
                positive(df, "df")
            }
            Prior::ChiSquared { df } | Prior::InvChiSquared { df } => positive(df, "df"),
            Prior::Exponential { rate } => positive(rate, "beta"),
            Prior::Gamma { shape, rate } | Prior::InvGamma { shape, rate } => {
                positive(shape, "alpha")?;
                positive(rate, "beta")
            }
            Prior::Weibull { shape, scale } => {
                positive(shape, "alpha")?;
                positive(scale, "sigma")
            }
        }
    }
}

/// Parameter classes priors attach to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PriorClass {
    Intercept,
    Coefficient,
    Sigma,
    Alpha,
    Lambda,
    Theta,
    ReSd,
}

impl PriorClass {
    pub fn name(self) -> &'static str {
        match self {
            PriorClass::Intercept => "intercept",
            PriorClass::Coefficient => "coefficient",
            PriorClass::Sigma => "sigma",
            PriorClass::Alpha => "alpha",
            PriorClass::Lambda => "lambda",
            PriorClass::Theta => "theta",
            PriorClass::ReSd => "re_sd",
        }
    }

    /// Whether parameters of this class live on (0, inf).
    pub fn is_positive(self) -> bool {
        matches!(self, PriorClass::Sigma | PriorClass::Alpha | PriorClass::Lambda | PriorClass::ReSd)
    }
}

/// One prior per parameter class.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorSpec {
    pub intercept: Prior,
    pub coefficient: Prior,
    pub sigma: Prior,
    pub alpha: Prior,
    pub lambda: Prior,
    pub theta: Prior,
    pub re_sd: Prior,
}

impl Default for PriorSpec {
    fn default() -> Self {
        let inv_gamma_11 = Prior::InvGamma { shape: 1.0, rate: 1.0 };
        PriorSpec {
            intercept: Prior::Flat,
            coefficient: Prior::Normal { mean: 0.0, sigma: 1.0 },
            sigma: inv_gamma_11,
            alpha: inv_gamma_11,
            lambda: inv_gamma_11,
            theta: Prior::Normal { mean: 0.0, sigma: 1.0 },
            re_sd: inv_gamma_11,
        }
    }
}

impl PriorSpec {
    pub fn class(&self, class: PriorClass) -> &Prior {
        match class {
            PriorClass::Intercept => &self.intercept,
            PriorClass::Coefficient => &self.coefficient,
            PriorClass::Sigma => &self.sigma,
            PriorClass::Alpha => &self.alpha,
            PriorClass::Lambda => &self.lambda,
            PriorClass::Theta => &self.theta,
            PriorClass::ReSd => &self.re_sd,
        }
    }

    pub fn set_class(&mut self, class: PriorClass, prior: Prior) -> Result<()> {
        if class.is_positive() && !prior.is_positive_domain() {
            return Err(Error::config(format!(
                "prior class '{}' requires a positive-domain prior",
                class.name()
            )));
        }
        if !class.is_positive() && prior.is_positive_domain() {
            return Err(Error::config(format!(
                "prior class '{}' requires a real-line prior",
                class.name()
            )));
        }
        match class {
            PriorClass::Intercept => self.intercept = prior,
            PriorClass::Coefficient => self.coefficient = prior,
            PriorClass::Sigma => self.sigma = prior,
            PriorClass::Alpha => self.alpha = prior,
            PriorClass::Lambda => self.lambda = prior,
            PriorClass::Theta => self.theta = prior,
            PriorClass::ReSd => self.re_sd = prior,
        }
        Ok(())
    }
}
