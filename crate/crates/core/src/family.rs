//! Outcome families, link functions, and their log-densities.
//!
//! Each GLM family evaluates `log f(y; mu, aux)` together with the partials
//! needed by the posterior gradient: d/d eta (the linear predictor) and
//! d/d aux on the unconstrained scale (positive aux parameters are sampled
//! as logs). Domain violations (a link pushing `mu` out of the family's
//! mean space) yield `-inf`, which the sampler treats as a rejected point.

use crate::error::{Error, Result};
use crate::math::{log1p_exp, normal_log_cdf, normal_log_pdf, sigmoid, LN_SQRT_2PI};

use statrs::function::gamma::{digamma, ln_gamma};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Gaussian,
    Binomial,
    Gamma,
    Poisson,
    InverseGaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Link {
    Identity,
    Log,
    Inverse,
    Logit,
    Probit,
    Cauchit,
    Cloglog,
    Sqrt,
    /// `1/mu^2`, the inverse-Gaussian canonical link.
    InverseSquared,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SurvivalMethod {
    Cox,
    Aft,
}

/// The auxiliary (non-mean) parameter a family carries, if any.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AuxParam {
    /// Gaussian / AFT standard deviation; positive, sampled on log scale.
    Sigma,
    /// Gamma shape; positive, sampled on log scale.
    Alpha,
    /// Inverse-Gaussian shape; positive, sampled on log scale.
    Lambda,
    /// Weibull-hazard log-shape; real-valued.
    Theta,
}

impl AuxParam {
    pub fn name(self) -> &'static str {
        match self {
            AuxParam::Sigma => "sigma",
            AuxParam::Alpha => "alpha",
            AuxParam::Lambda => "lambda",
            AuxParam::Theta => "theta",
        }
    }

    /// Whether the constrained value lives on (0, inf).
    pub fn is_positive(self) -> bool {
        !matches!(self, AuxParam::Theta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FamilySpec {
    Glm { family: Family, link: Link },
    Survival { method: SurvivalMethod },
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Gaussian => "gaussian",
            Family::Binomial => "binomial",
            Family::Gamma => "Gamma",
            Family::Poisson => "poisson",
            Family::InverseGaussian => "inverse.gaussian",
        }
    }

    pub fn supported_links(self) -> &'static [Link] {
        match self {
            Family::Gaussian => &[Link::Identity, Link::Log, Link::Inverse],
            Family::Binomial => {
                &[Link::Logit, Link::Probit, Link::Cauchit, Link::Log, Link::Cloglog]
            }
            Family::Gamma => &[Link::Identity, Link::Log, Link::Inverse],
            Family::Poisson => &[Link::Identity, Link::Log, Link::Sqrt],
            Family::InverseGaussian => {
                &[Link::InverseSquared, Link::Inverse, Link::Identity, Link::Log]
            }
        }
    }

    pub fn default_link(self) -> Link {
        match self {
            Family::Gaussian => Link::Identity,
            Family::Binomial => Link::Logit,
            Family::Gamma => Link::Inverse,
            Family::Poisson => Link::Log,
            Family::InverseGaussian => Link::InverseSquared,
        }
    }
}

impl Link {
    pub fn name(self) -> &'static str {
        match self {
            Link::Identity => "identity",
            Link::Log => "log",
            Link::Inverse => "inverse",
            Link::Logit => "logit",
            Link::Probit => "probit",
            Link::Cauchit => "cauchit",
            Link::Cloglog => "cloglog",
            Link::Sqrt => "sqrt",
            Link::InverseSquared => "1/mu^2",
        }
    }

    pub fn from_name(name: &str) -> Option<Link> {
        Some(match name {
            "identity" => Link::Identity,
            "log" => Link::Log,
            "inverse" => Link::Inverse,
            "logit" => Link::Logit,
            "probit" => Link::Probit,
            "cauchit" => Link::Cauchit,
            "cloglog" => Link::Cloglog,
            "sqrt" => Link::Sqrt,
            "1/mu^2" => Link::InverseSquared,
            _ => return None,
        })
    }

    /// mu = g^{-1}(eta) and its derivative d mu / d eta. `None` when eta is
    /// outside the link domain.
    pub fn inverse(self, eta: f64) -> Option<(f64, f64)> {
        match self {
            Link::Identity => Some((eta, 1.0)),
            Link::Log => {
                let mu = eta.exp();
                Some((mu, mu))
            }
            Link::Inverse => {
                if eta == 0.0 {
                    return None;
                }
                let mu = 1.0 / eta;
                Some((mu, -mu * mu))
            }
            Link::Logit => {
                let mu = sigmoid(eta);
                Some((mu, mu * (1.0 - mu)))
            }
            Link::Probit => {
                let mu = crate::math::normal_cdf(eta);
                Some((mu, normal_log_pdf(eta).exp()))
            }
            Link::Cauchit => {
                let mu = eta.atan() / std::f64::consts::PI + 0.5;
                Some((mu, 1.0 / (std::f64::consts::PI * (1.0 + eta * eta))))
            }
            Link::Cloglog => {
                let t = eta.exp();
                Some((1.0 - (-t).exp(), (eta - t).exp()))
            }
            Link::Sqrt => Some((eta * eta, 2.0 * eta)),
            Link::InverseSquared => {
                if eta <= 0.0 {
                    return None;
                }
                let mu = 1.0 / eta.sqrt();
                Some((mu, -0.5 * eta.powf(-1.5)))
            }
        }
    }
}

/// Log-density evaluation with the partials the mixture gradient needs.
#[derive(Debug, Clone, Copy)]
pub struct DensityEval {
    pub logp: f64,
    /// d logp / d eta.
    pub d_eta: f64,
    /// d logp / d aux, on the unconstrained scale.
    pub d_aux: f64,
}

const INVALID: DensityEval = DensityEval { logp: f64::NEG_INFINITY, d_eta: 0.0, d_aux: 0.0 };

impl FamilySpec {
    pub fn glm(family: Family, link: Link) -> Result<FamilySpec> {
        if !family.supported_links().contains(&link) {
            return Err(Error::config(format!(
                "link '{}' is not supported for family '{}' (supported: {})",
                link.name(),
                family.name(),
                family
                    .supported_links()
                    .iter()
                    .map(|l| l.name())
                    .collect::<Vec<_>>()
                    .join(", ")
            )));
        }
        Ok(FamilySpec::Glm { family, link })
    }

    pub fn survival_cox() -> FamilySpec {
        FamilySpec::Survival { method: SurvivalMethod::Cox }
    }

    pub fn survival_aft() -> FamilySpec {
        FamilySpec::Survival { method: SurvivalMethod::Aft }
    }

    pub fn is_survival(&self) -> bool {
        matches!(self, FamilySpec::Survival { .. })
    }

    /// Parse a glm()-style declaration: `gaussian`, `binomial(link =
    /// "logit")`, `survival(method = "Cox")`, ...
    pub fn parse(text: &str) -> Result<FamilySpec> {
        let call = crate::rcall::parse_call(text)?;
        let family = match call.name.as_str() {
            "gaussian" => Family::Gaussian,
            "binomial" => Family::Binomial,
            "Gamma" => Family::Gamma,
            "poisson" => Family::Poisson,
            "inverse.gaussian" => Family::InverseGaussian,
            "survival" => {
                let method = call
                    .arg("method", 0)
                    .and_then(|v| v.as_str())
                    .unwrap_or("Cox")
                    .to_string();
                return match method.as_str() {
                    "Cox" => Ok(FamilySpec::survival_cox()),
                    "AFT" => Ok(FamilySpec::survival_aft()),
                    other => Err(Error::config(format!(
                        "unknown survival method '{other}'; expected \"Cox\" or \"AFT\""
                    ))),
                };
            }
            other => {
                return Err(Error::config(format!(
                    "unknown family '{other}'; supported families: gaussian, binomial, Gamma, \
                     poisson, inverse.gaussian, survival"
                )))
            }
        };
        let link = match call.arg("link", 0) {
            None => family.default_link(),
            Some(v) => {
                let name = v.as_str().ok_or_else(|| {
                    Error::config(format!("link of {} must be a string", call.name))
                })?;
                Link::from_name(name).ok_or_else(|| {
                    Error::config(format!("unknown link function '{name}'"))
                })?
            }
        };
        FamilySpec::glm(family, link)
    }

    pub fn aux_param(&self) -> Option<AuxParam> {
        match self {
            FamilySpec::Glm { family, .. } => match family {
                Family::Gaussian => Some(AuxParam::Sigma),
                Family::Binomial | Family::Poisson => None,
                Family::Gamma => Some(AuxParam::Alpha),
                Family::InverseGaussian => Some(AuxParam::Lambda),
            },
            FamilySpec::Survival { method } => match method {
                SurvivalMethod::Cox => Some(AuxParam::Theta),
                SurvivalMethod::Aft => Some(AuxParam::Sigma),
            },
        }
    }

    pub fn name(&self) -> String {
        match self {
            FamilySpec::Glm { family, link } => {
                format!("{}(link = \"{}\")", family.name(), link.name())
            }
            FamilySpec::Survival { method } => format!(
                "survival(method = \"{}\")",
                match method {
                    SurvivalMethod::Cox => "Cox",
                    SurvivalMethod::Aft => "AFT",
                }
            ),
        }
    }

    /// Validate every outcome value against the family support; reports the
    /// first offending unit.
    pub fn check_support(&self, y: &[f64], delta: Option<&[u8]>) -> Result<()> {
        let fail = |i: usize, what: &str| -> Error {
            Error::data(format!("unit {}: outcome {} ({})", i + 1, what, self.name()))
        };
        match self {
            FamilySpec::Glm { family, .. } => match family {
                Family::Gaussian => Ok(()),
                Family::Binomial => {
                    for (i, &v) in y.iter().enumerate() {
                        if v != 0.0 && v != 1.0 {
                            return Err(fail(i, "must be 0 or 1"));
                        }
                    }
                    Ok(())
                }
                Family::Gamma | Family::InverseGaussian => {
                    for (i, &v) in y.iter().enumerate() {
                        if v <= 0.0 {
                            return Err(fail(i, "must be positive"));
                        }
                    }
                    Ok(())
                }
                Family::Poisson => {
                    for (i, &v) in y.iter().enumerate() {
                        if v < 0.0 || v.fract() != 0.0 {
                            return Err(fail(i, "must be a non-negative integer"));
                        }
                    }
                    Ok(())
                }
            },
            FamilySpec::Survival { .. } => {
                for (i, &v) in y.iter().enumerate() {
                    if v <= 0.0 {
                        return Err(fail(i, "must be a positive event time"));
                    }
                }
                if delta.is_none() {
                    return Err(Error::config("survival family requires an event indicator"));
                }
                Ok(())
            }
        }
    }

    /// GLM log-density at `y` given linear predictor `eta` and constrained
    /// auxiliary value `aux`. Survival families must go through
    /// [`FamilySpec::survival_log_lik`] instead.
    pub fn glm_log_density(&self, y: f64, eta: f64, aux: f64) -> DensityEval {
        let (family, link) = match self {
            FamilySpec::Glm { family, link } => (*family, *link),
            FamilySpec::Survival { .. } => {
                unreachable!("survival outcomes use survival_log_lik")
            }
        };

        // Canonical/stable special cases for the Bernoulli likelihood.
        if family == Family::Binomial {
            match link {
                Link::Logit => {
                    let (logp, d_eta) = if y == 1.0 {
                        (-log1p_exp(-eta), 1.0 - sigmoid(eta))
                    } else {
                        (-log1p_exp(eta), -sigmoid(eta))
                    };
                    return DensityEval { logp, d_eta, d_aux: 0.0 };
                }
                Link::Probit => {
                    let s = if y == 1.0 { eta } else { -eta };
                    let logp = normal_log_cdf(s);
                    let mills = (normal_log_pdf(s) - logp).exp();
                    let d_eta = if y == 1.0 { mills } else { -mills };
                    return DensityEval { logp, d_eta, d_aux: 0.0 };
                }
                Link::Cloglog => {
                    let t = eta.exp();
                    return if y == 1.0 {
                        if t < 1e-300 {
                            return INVALID;
                        }
                        let logp = (-(-t).exp_m1()).ln();
                        let d_eta = t * (-t).exp() / (-(-t).exp_m1());
                        DensityEval { logp, d_eta, d_aux: 0.0 }
                    } else {
                        DensityEval { logp: -t, d_eta: -t, d_aux: 0.0 }
                    };
                }
                _ => {}
            }
        }

        let Some((mu, dmu)) = link.inverse(eta) else {
            return INVALID;
        };

        match family {
            Family::Gaussian => {
                let sigma = aux;
                let r = (y - mu) / sigma;
                let logp = -sigma.ln() - LN_SQRT_2PI - 0.5 * r * r;
                DensityEval { logp, d_eta: r / sigma * dmu, d_aux: r * r - 1.0 }
            }
            Family::Binomial => {
                if mu <= 0.0 || mu >= 1.0 {
                    return INVALID;
                }
                let (logp, d_mu) = if y == 1.0 {
                    (mu.ln(), 1.0 / mu)
                } else {
                    ((1.0 - mu).ln(), -1.0 / (1.0 - mu))
                };
                DensityEval { logp, d_eta: d_mu * dmu, d_aux: 0.0 }
            }
            Family::Gamma => {
                if mu <= 0.0 {
                    return INVALID;
                }
                let alpha = aux;
                let logp = alpha * (alpha.ln() - mu.ln()) - ln_gamma(alpha)
                    + (alpha - 1.0) * y.ln()
                    - alpha * y / mu;
                let d_mu = alpha * (y - mu) / (mu * mu);
                let d_alpha =
                    alpha.ln() + 1.0 - mu.ln() - digamma(alpha) + y.ln() - y / mu;
                DensityEval { logp, d_eta: d_mu * dmu, d_aux: alpha * d_alpha }
            }
            Family::Poisson => {
                if mu <= 0.0 {
                    return INVALID;
                }
                let logp = y * mu.ln() - mu - ln_gamma(y + 1.0);
                DensityEval { logp, d_eta: (y / mu - 1.0) * dmu, d_aux: 0.0 }
            }
            Family::InverseGaussian => {
                if mu <= 0.0 {
                    return INVALID;
                }
                let lambda = aux;
                let r = y - mu;
                let logp = 0.5 * (lambda.ln() - (2.0 * std::f64::consts::PI).ln() - 3.0 * y.ln())
                    - lambda * r * r / (2.0 * y * mu * mu);
                let d_mu = lambda * r / (mu * mu * mu);
                let d_lambda_log = 0.5 - lambda * r * r / (2.0 * y * mu * mu);
                DensityEval { logp, d_eta: d_mu * dmu, d_aux: d_lambda_log }
            }
        }
    }

    /// Right-censored survival log-likelihood for one unit: the event-time
    /// density when `event`, the survivor function when censored.
    pub fn survival_log_lik(&self, y: f64, event: bool, eta: f64, aux: f64) -> DensityEval {
        let method = match self {
            FamilySpec::Survival { method } => *method,
            FamilySpec::Glm { .. } => unreachable!("GLM outcomes use glm_log_density"),
        };
        match method {
            SurvivalMethod::Cox => {
                // Weibull-hazard proportional hazards:
                //   h(y) = y^(exp(theta) - 1) * exp(eta)
                //   log S(y) = -y^exp(theta) * exp(-theta + eta)
                let theta = aux;
                let w = theta.exp();
                let ln_y = y.ln();
                let cum = (w * ln_y - theta + eta).exp();
                if !cum.is_finite() {
                    return INVALID;
                }
                let d_cum_theta = cum * (w * ln_y - 1.0);
                if event {
                    DensityEval {
                        logp: (w - 1.0) * ln_y + eta - cum,
                        d_eta: 1.0 - cum,
                        d_aux: w * ln_y - d_cum_theta,
                    }
                } else {
                    DensityEval { logp: -cum, d_eta: -cum, d_aux: -d_cum_theta }
                }
            }
            SurvivalMethod::Aft => {
                // log T = eta + sigma * eps, eps ~ N(0, 1).
                let sigma = aux;
                let r = (y.ln() - eta) / sigma;
                if event {
                    DensityEval {
                        logp: normal_log_pdf(r) - sigma.ln() - y.ln(),
                        d_eta: r / sigma,
                        d_aux: r * r - 1.0,
                    }
                } else {
                    let logp = normal_log_cdf(-r);
                    let mills = (normal_log_pdf(r) - logp).exp();
                    DensityEval { logp, d_eta: mills / sigma, d_aux: mills * r }
                }
            }
        }
    }

    /// Survivor probability Pr(T > t) at time `t` for a survival cell.
    pub fn survival_prob(&self, t: f64, eta: f64, aux: f64) -> f64 {
        let method = match self {
            FamilySpec::Survival { method } => *method,
            FamilySpec::Glm { .. } => unreachable!("survival_prob on a GLM family"),
        };
        if t <= 0.0 {
            return 1.0;
        }
        match method {
            SurvivalMethod::Cox => {
                let w = aux.exp();
                (-(w * t.ln() - aux + eta).exp()).exp()
            }
            SurvivalMethod::Aft => crate::math::normal_cdf(-(t.ln() - eta) / aux),
        }
    }

    /// Posterior mean function g^{-1}(eta) for GLM outcome means.
    pub fn mean(&self, eta: f64) -> f64 {
        match self {
            FamilySpec::Glm { link, .. } => link.inverse(eta).map_or(f64::NAN, |(mu, _)| mu),
            FamilySpec::Survival { .. } => f64::NAN,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_identity_at_mode() {
        let fam = FamilySpec::glm(Family::Gaussian, Link::Identity).unwrap();
        let e = fam.glm_log_density(0.0, 0.0, 1.0);
        assert!((e.logp - (-LN_SQRT_2PI)).abs() < 1e-14);
        assert_eq!(e.d_eta, 0.0);
    }

    #[test]
    fn binomial_logit_at_zero() {
        let fam = FamilySpec::glm(Family::Binomial, Link::Logit).unwrap();
        let e = fam.glm_log_density(1.0, 0.0, 0.0);
        assert!((e.logp - 0.5f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn poisson_log_mass() {
        let fam = FamilySpec::glm(Family::Poisson, Link::Log).unwrap();
        // mu = 1, y = 2: log(1^2 e^{-1} / 2!) = -1 - log 2
        let e = fam.glm_log_density(2.0, 0.0, 0.0);
        assert!((e.logp - (-1.0 - 2.0f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn cox_exponential_special_case() {
        let fam = FamilySpec::survival_cox();
        // theta = 0 collapses the hazard to a unit-rate exponential.
        let censored = fam.survival_log_lik(2.0, false, 0.0, 0.0);
        assert!((censored.logp - (-2.0)).abs() < 1e-14);
        let event = fam.survival_log_lik(1.0, true, 0.0, 0.0);
        assert!((event.logp - (-1.0)).abs() < 1e-14);
    }

    #[test]
    fn aft_median_survivor() {
        let fam = FamilySpec::survival_aft();
        // eta = log y puts the standardized residual at 0.
        let y = 3.7;
        let e = fam.survival_log_lik(y, false, y.ln(), 1.3);
        assert!((e.logp - 0.5f64.ln()).abs() < 1e-12);
        assert!((fam.survival_prob(y, y.ln(), 1.3) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn illegal_link_is_rejected() {
        assert!(FamilySpec::glm(Family::Gaussian, Link::Logit).is_err());
        assert!(FamilySpec::glm(Family::Binomial, Link::Sqrt).is_err());
        assert!(FamilySpec::glm(Family::Poisson, Link::Sqrt).is_ok());
    }

    #[test]
    fn parse_family_declarations() {
        assert_eq!(
            FamilySpec::parse("binomial(link = \"logit\")").unwrap(),
            FamilySpec::glm(Family::Binomial, Link::Logit).unwrap()
        );
        assert_eq!(
            FamilySpec::parse("gaussian()").unwrap(),
            FamilySpec::glm(Family::Gaussian, Link::Identity).unwrap()
        );
        assert_eq!(
            FamilySpec::parse("inverse.gaussian(link = \"log\")").unwrap(),
            FamilySpec::glm(Family::InverseGaussian, Link::Log).unwrap()
        );
        assert_eq!(FamilySpec::parse("survival(method = \"Cox\")").unwrap(), FamilySpec::survival_cox());
        assert_eq!(FamilySpec::parse("survival(method = \"AFT\")").unwrap(), FamilySpec::survival_aft());
        let err = FamilySpec::parse("bernoulli()").unwrap_err();
        assert!(err.to_string().contains("gaussian, binomial, Gamma"), "{err}");
        assert!(FamilySpec::parse("gaussian(link = \"logit\")").is_err());
    }

    #[test]
    fn out_of_domain_mean_is_minus_inf() {
        let fam = FamilySpec::glm(Family::Binomial, Link::Log).unwrap();
        // eta > 0 means mu = e^eta > 1: not a probability.
        let e = fam.glm_log_density(0.0, 0.5, 0.0);
        assert_eq!(e.logp, f64::NEG_INFINITY);
    }

    #[test]
    fn support_checks() {
        let binom = FamilySpec::glm(Family::Binomial, Link::Logit).unwrap();
        assert!(binom.check_support(&[0.0, 1.0, 1.0], None).is_ok());
        let err = binom.check_support(&[0.0, 0.5], None).unwrap_err();
        assert!(err.to_string().contains("unit 2"));

        let gamma = FamilySpec::glm(Family::Gamma, Link::Log).unwrap();
        assert!(gamma.check_support(&[0.1, 2.0], None).is_ok());
        assert!(gamma.check_support(&[0.0], None).is_err());

        let pois = FamilySpec::glm(Family::Poisson, Link::Log).unwrap();
        assert!(pois.check_support(&[0.0, 3.0], None).is_ok());
        assert!(pois.check_support(&[1.5], None).is_err());
    }

    /// Finite-difference check of every density partial.
    #[test]
    fn density_partials_match_finite_differences() {
        let cases: Vec<(FamilySpec, f64, f64, f64)> = vec![
            (FamilySpec::glm(Family::Gaussian, Link::Identity).unwrap(), 0.7, 0.3, 1.4),
            (FamilySpec::glm(Family::Gaussian, Link::Log).unwrap(), 0.7, 0.3, 1.4),
            (FamilySpec::glm(Family::Binomial, Link::Logit).unwrap(), 1.0, 0.4, 0.0),
            (FamilySpec::glm(Family::Binomial, Link::Probit).unwrap(), 0.0, -0.8, 0.0),
            (FamilySpec::glm(Family::Binomial, Link::Cauchit).unwrap(), 1.0, 0.9, 0.0),
            (FamilySpec::glm(Family::Binomial, Link::Cloglog).unwrap(), 1.0, -0.4, 0.0),
            (FamilySpec::glm(Family::Binomial, Link::Log).unwrap(), 1.0, -0.9, 0.0),
            (FamilySpec::glm(Family::Gamma, Link::Log).unwrap(), 2.3, 0.5, 1.7),
            (FamilySpec::glm(Family::Gamma, Link::Inverse).unwrap(), 2.3, 0.5, 1.7),
            (FamilySpec::glm(Family::Poisson, Link::Log).unwrap(), 3.0, 0.8, 0.0),
            (FamilySpec::glm(Family::Poisson, Link::Sqrt).unwrap(), 3.0, 1.4, 0.0),
            (FamilySpec::glm(Family::InverseGaussian, Link::Log).unwrap(), 1.2, 0.4, 2.0),
            (FamilySpec::glm(Family::InverseGaussian, Link::InverseSquared).unwrap(), 1.2, 0.8, 2.0),
        ];
        let h = 1e-6;
        for (fam, y, eta, aux) in cases {
            let at = |eta: f64, aux_u: f64| {
                let aux_c = if fam.aux_param().map_or(false, |a| a.is_positive()) {
                    aux_u.exp()
                } else {
                    aux_u
                };
                fam.glm_log_density(y, eta, aux_c)
            };
            let aux_u = if fam.aux_param().map_or(false, |a| a.is_positive()) {
                aux.ln()
            } else {
                aux
            };
            let e = at(eta, aux_u);
            let fd_eta = (at(eta + h, aux_u).logp - at(eta - h, aux_u).logp) / (2.0 * h);
            assert!(
                (e.d_eta - fd_eta).abs() < 1e-6 * (1.0 + e.d_eta.abs()),
                "{}: d_eta {} vs fd {}",
                fam.name(),
                e.d_eta,
                fd_eta
            );
            if fam.aux_param().is_some() {
                let fd_aux = (at(eta, aux_u + h).logp - at(eta, aux_u - h).logp) / (2.0 * h);
                assert!(
                    (e.d_aux - fd_aux).abs() < 1e-6 * (1.0 + e.d_aux.abs()),
                    "{}: d_aux {} vs fd {}",
                    fam.name(),
                    e.d_aux,
                    fd_aux
                );
            }
        }
    }

    #[test]
    fn survival_partials_match_finite_differences() {
        let h = 1e-6;
        for (fam, theta_is_log) in
            [(FamilySpec::survival_cox(), false), (FamilySpec::survival_aft(), true)]
        {
            for event in [true, false] {
                let (y, eta, aux) = (1.7f64, 0.3f64, 0.4f64);
                let at = |eta: f64, aux_u: f64| {
                    let aux_c = if theta_is_log { aux_u.exp() } else { aux_u };
                    fam.survival_log_lik(y, event, eta, aux_c)
                };
                let aux_u = if theta_is_log { aux.ln() } else { aux };
                let e = at(eta, aux_u);
                let fd_eta = (at(eta + h, aux_u).logp - at(eta - h, aux_u).logp) / (2.0 * h);
                let fd_aux = (at(eta, aux_u + h).logp - at(eta, aux_u - h).logp) / (2.0 * h);
                assert!((e.d_eta - fd_eta).abs() < 1e-6 * (1.0 + e.d_eta.abs()), "{event}");
                assert!((e.d_aux - fd_aux).abs() < 1e-6 * (1.0 + e.d_aux.abs()), "{event}");
            }
        }
    }

    /// Every family density integrates (or sums) to 1 over its support,
    /// checked by quadrature/summation at random (mu, aux) settings.
    #[test]
    fn densities_normalize() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        for _ in 0..5 {
            let mu = 0.3 + rng.random::<f64>() * 2.0;
            let aux = 0.4 + rng.random::<f64>() * 1.5;

            // Continuous families by adaptive Simpson with a doubling
            // upper bound.
            let gaussian = FamilySpec::glm(Family::Gaussian, Link::Identity).unwrap();
            let total = simpson(
                &|y| gaussian.glm_log_density(y, mu, aux).logp.exp(),
                mu - 12.0 * aux,
                mu + 12.0 * aux,
                4001,
            );
            assert!((total - 1.0).abs() < 1e-6, "gaussian mu={mu} sigma={aux}: {total}");

            // Positive-support families in log space (y = e^t), which
            // absorbs the integrable singularity of Gamma shapes below 1.
            for family in [
                FamilySpec::glm(Family::Gamma, Link::Log).unwrap(),
                FamilySpec::glm(Family::InverseGaussian, Link::Log).unwrap(),
            ] {
                let g = |t: f64| {
                    let y = t.exp();
                    (family.glm_log_density(y, mu.ln(), aux).logp + t).exp()
                };
                let mut total = 0.0;
                let (mut lo, mut hi) = (-40.0, 1.0);
                loop {
                    total += simpson(&g, lo, hi, 4001);
                    if g(hi) < 1e-14 && hi.exp() > 60.0 * mu {
                        break;
                    }
                    lo = hi;
                    hi += 1.0;
                }
                assert!((total - 1.0).abs() < 1e-6, "{}: {total}", family.name());
            }

            // Discrete families by summation.
            let binom = FamilySpec::glm(Family::Binomial, Link::Logit).unwrap();
            let eta = rng.random::<f64>() * 4.0 - 2.0;
            let mass: f64 = [0.0, 1.0]
                .iter()
                .map(|&y| binom.glm_log_density(y, eta, 0.0).logp.exp())
                .sum();
            assert!((mass - 1.0).abs() < 1e-12);

            let pois = FamilySpec::glm(Family::Poisson, Link::Log).unwrap();
            let mass: f64 = (0..200)
                .map(|y| pois.glm_log_density(y as f64, mu.ln(), 0.0).logp.exp())
                .sum();
            assert!((mass - 1.0).abs() < 1e-6, "poisson mu={mu}: {mass}");
        }
    }

    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let n = if n % 2 == 0 { n + 1 } else { n };
        let h = (b - a) / (n - 1) as f64;
        let mut s = f(a) + f(b);
        for i in 1..n - 1 {
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(a + i as f64 * h);
        }
        s * h / 3.0
    }

    /// The Weibull-hazard survivor and hazard are consistent:
    /// -d/dy log S(y) = h(y).
    #[test]
    fn cox_hazard_survivor_consistency() {
        let fam = FamilySpec::survival_cox();
        for &(theta, eta) in &[(0.0, 0.0), (0.6, -0.5), (-0.4, 0.8), (0.3, 0.2)] {
            for &y in &[0.5, 1.0, 2.5] {
                let log_s = |t: f64| fam.survival_log_lik(t, false, eta, theta).logp;
                let h = 1e-5 * y;
                // Five-point stencil for the derivative of log S.
                let d = (-log_s(y + 2.0 * h) + 8.0 * log_s(y + h) - 8.0 * log_s(y - h)
                    + log_s(y - 2.0 * h))
                    / (12.0 * h);
                let hazard = ((theta.exp() - 1.0) * y.ln() + eta).exp();
                assert!(
                    (-d - hazard).abs() < 1e-8 * (1.0 + hazard),
                    "theta={theta} eta={eta} y={y}: fd {d}, hazard {hazard}"
                );
            }
        }
    }
}
