//! Python bindings: model fitting, estimands, simulation designs, and the
//! frequentist weighting path.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

use pstrat::data::{Column, Dataset};
use pstrat::family::FamilySpec;
use pstrat::formula::parse_formula;
use pstrat::model::PsModel;
use pstrat::mrweight::{tau_weighting, BootstrapConfig, TargetStratum};
use pstrat::posterior::{
    contrast, outcome_means, strata_proportions, summarize, survival_outcome, ContrastSpec,
    EstimandCube, SummaryTable, TimeSpec,
};
use pstrat::prior::{Prior, PriorClass, PriorSpec};
use pstrat::sampler::{diagnose, sample, DrawMatrix, SamplerConfig};
use pstrat::simgen::{generate, DesignId, SimDesign};

fn to_py_err(err: pstrat::Error) -> PyErr {
    PyValueError::new_err(err.to_string())
}

fn dataset_from_dict(data: &Bound<'_, PyDict>) -> PyResult<Dataset> {
    let mut out = Dataset::new();
    for (key, value) in data.iter() {
        let name: String = key.extract()?;
        if let Ok(values) = value.extract::<Vec<f64>>() {
            out.push_numeric(name, values).map_err(to_py_err)?;
        } else {
            let values: Vec<String> = value.extract().map_err(|_| {
                PyValueError::new_err(format!(
                    "column '{name}' must be a list of numbers or strings"
                ))
            })?;
            out.push_categorical(name, &values).map_err(to_py_err)?;
        }
    }
    Ok(out)
}

fn dataset_to_dict<'py>(py: Python<'py>, data: &Dataset) -> PyResult<Bound<'py, PyDict>> {
    let dict = PyDict::new(py);
    for name in data.column_names().map(str::to_string).collect::<Vec<_>>() {
        match data.column(&name).unwrap() {
            Column::Numeric(v) => dict.set_item(&name, v.clone())?,
            Column::Categorical { levels, codes } => {
                let values: Vec<&str> =
                    codes.iter().map(|&c| levels[c as usize].as_str()).collect();
                dict.set_item(&name, values)?
            }
        }
    }
    Ok(dict)
}

fn summary_rows<'py>(py: Python<'py>, table: &SummaryTable) -> PyResult<Bound<'py, PyList>> {
    let rows = PyList::empty(py);
    for r in &table.rows {
        let row = PyDict::new(py);
        row.set_item("label", &r.label)?;
        row.set_item("mean", r.mean)?;
        row.set_item("sd", r.sd)?;
        for (name, q) in ["q2.5", "q25", "q50", "q75", "q97.5"].iter().zip(r.quantiles) {
            row.set_item(name, q)?;
        }
        rows.append(row)?;
    }
    Ok(rows)
}

fn priors_from_dict(priors: Option<&Bound<'_, PyDict>>) -> PyResult<PriorSpec> {
    let mut spec = PriorSpec::default();
    let Some(priors) = priors else { return Ok(spec) };
    for (key, value) in priors.iter() {
        let key: String = key.extract()?;
        let text: String = value.extract()?;
        let class = match key.trim_start_matches("prior_") {
            "intercept" => PriorClass::Intercept,
            "coefficient" => PriorClass::Coefficient,
            "sigma" => PriorClass::Sigma,
            "alpha" => PriorClass::Alpha,
            "lambda" => PriorClass::Lambda,
            "theta" => PriorClass::Theta,
            "re_sd" => PriorClass::ReSd,
            other => {
                return Err(PyValueError::new_err(format!("unknown prior class '{other}'")))
            }
        };
        spec.set_class(class, Prior::parse(&text).map_err(to_py_err)?).map_err(to_py_err)?;
    }
    Ok(spec)
}

/// A fitted principal-stratification model holding the posterior draws.
#[pyclass]
struct PsFit {
    model: PsModel,
    draws: DrawMatrix,
}

impl PsFit {
    fn outcome_cube(&self, times: Option<Vec<f64>>, times_n: Option<usize>) -> PyResult<EstimandCube> {
        if self.model.family.is_survival() {
            let spec = if let Some(points) = times {
                TimeSpec::Points(points)
            } else {
                TimeSpec::Count(times_n.unwrap_or(10))
            };
            survival_outcome(&self.draws, &self.model, &spec).map_err(to_py_err)
        } else {
            outcome_means(&self.draws, &self.model).map_err(to_py_err)
        }
    }
}

#[pymethods]
impl PsFit {
    /// Parameter names in draw-column order.
    #[getter]
    fn param_names(&self) -> Vec<String> {
        self.draws.param_names.clone()
    }

    /// Posterior strata proportions as summary rows.
    fn summary<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyList>> {
        let table =
            summarize(&strata_proportions(&self.draws, &self.model).map_err(to_py_err)?);
        summary_rows(py, &table)
    }

    /// Potential-outcome means (strata x arms), or survival curves when the
    /// family is survival.
    #[pyo3(signature = (times=None, times_n=None))]
    fn outcome<'py>(
        &self,
        py: Python<'py>,
        times: Option<Vec<f64>>,
        times_n: Option<usize>,
    ) -> PyResult<Bound<'py, PyList>> {
        let cube = self.outcome_cube(times, times_n)?;
        summary_rows(py, &summarize(&cube))
    }

    /// Nested contrasts, e.g. axes="Z" or "Z,S".
    #[pyo3(signature = (axes, times=None, times_n=None))]
    fn contrast<'py>(
        &self,
        py: Python<'py>,
        axes: &str,
        times: Option<Vec<f64>>,
        times_n: Option<usize>,
    ) -> PyResult<Bound<'py, PyList>> {
        let cube = self.outcome_cube(times, times_n)?;
        let spec = ContrastSpec::parse(axes).map_err(to_py_err)?;
        let diffed = contrast(&cube, &spec).map_err(to_py_err)?;
        summary_rows(py, &summarize(&diffed))
    }

    /// Convergence diagnostics: split R-hat, bulk ESS, divergences.
    fn diagnostics<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let diag = diagnose(&self.draws).map_err(to_py_err)?;
        let out = PyDict::new(py);
        out.set_item("max_rhat", diag.max_rhat())?;
        out.set_item("min_ess", diag.min_ess())?;
        out.set_item("divergences", diag.divergences)?;
        out.set_item("mean_treedepth", diag.mean_treedepth)?;
        let params = PyList::empty(py);
        for p in &diag.params {
            let row = PyDict::new(py);
            row.set_item("name", &p.name)?;
            row.set_item("mean", p.mean)?;
            row.set_item("sd", p.sd)?;
            row.set_item("rhat", p.rhat)?;
            row.set_item("ess_bulk", p.ess_bulk)?;
            params.append(row)?;
        }
        out.set_item("params", params)?;
        Ok(out)
    }

    /// Pooled posterior draws per parameter, on the constrained scale.
    fn draws<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let out = PyDict::new(py);
        for (j, name) in self.draws.param_names.iter().enumerate() {
            out.set_item(name, self.draws.param_pooled(j))?;
        }
        Ok(out)
    }
}

/// Fit the joint principal-stratification model by NUTS.
#[pyfunction]
#[pyo3(signature = (data, s_formula, y_formula, family, strata, er=None, priors=None,
    chains=4, warmup=1000, iter=2000, seed=1, cores=1, target_accept=0.8, refresh=0))]
#[allow(clippy::too_many_arguments)]
fn fit(
    data: &Bound<'_, PyDict>,
    s_formula: &str,
    y_formula: &str,
    family: &str,
    strata: Vec<(String, String)>,
    er: Option<Vec<(String, bool)>>,
    priors: Option<&Bound<'_, PyDict>>,
    chains: usize,
    warmup: usize,
    iter: usize,
    seed: u64,
    cores: usize,
    target_accept: f64,
    refresh: usize,
) -> PyResult<PsFit> {
    let dataset = dataset_from_dict(data)?;
    let parsed = pstrat::strata::parse_strata(&strata, er.as_deref()).map_err(to_py_err)?;
    for w in &parsed.warnings {
        eprintln!("warning: {w}");
    }
    let model = PsModel::build(
        &parse_formula(s_formula).map_err(to_py_err)?,
        &parse_formula(y_formula).map_err(to_py_err)?,
        FamilySpec::parse(family).map_err(to_py_err)?,
        parsed.spec,
        priors_from_dict(priors)?,
        &dataset,
    )
    .map_err(to_py_err)?;
    let cfg = SamplerConfig {
        chains,
        warmup,
        iter,
        seed,
        cores,
        target_accept,
        max_treedepth: 10,
        refresh,
    };
    let draws = sample(&model, &cfg).map_err(to_py_err)?;
    Ok(PsFit { model, draws })
}

/// Parse a model formula and return its structure.
#[pyfunction]
#[pyo3(name = "parse_formula")]
fn parse_formula_py<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyDict>> {
    let ast = parse_formula(text).map_err(to_py_err)?;
    let out = PyDict::new(py);
    out.set_item("lhs", ast.lhs_vars.clone())?;
    out.set_item(
        "terms",
        ast.fixed_terms.iter().map(|t| t.render()).collect::<Vec<_>>(),
    )?;
    out.set_item("intercept", ast.has_intercept)?;
    out.set_item(
        "random",
        ast.random_terms.iter().map(|t| t.render()).collect::<Vec<_>>(),
    )?;
    out.set_item("rendered", ast.render())?;
    Ok(out)
}

/// Generate a built-in simulation design; returns (columns, truth).
#[pyfunction]
#[pyo3(signature = (design, n, seed, effect=None))]
fn simulate<'py>(
    py: Python<'py>,
    design: &str,
    n: usize,
    seed: u64,
    effect: Option<f64>,
) -> PyResult<(Bound<'py, PyDict>, Bound<'py, PyDict>)> {
    let id = DesignId::parse(design).map_err(to_py_err)?;
    let mut spec = SimDesign::new(id, n, seed);
    spec.complier_effect = effect;
    let (data, truth) = generate(&spec).map_err(to_py_err)?;

    let truth_dict = PyDict::new(py);
    truth_dict.set_item("design", truth.design)?;
    truth_dict.set_item("strata", truth.strata)?;
    truth_dict.set_item("pi_design", truth.pi_design)?;
    truth_dict.set_item("pi_realized", truth.pi_realized)?;
    truth_dict.set_item("latent_strata", truth.latent_strata)?;
    if let Some(means) = truth.potential_means {
        let m = PyDict::new(py);
        for (k, v) in means {
            m.set_item(k, v)?;
        }
        truth_dict.set_item("potential_means", m)?;
    }
    truth_dict.set_item("cace", truth.cace)?;
    Ok((dataset_to_dict(py, &data)?, truth_dict))
}

/// Two-stage-least-squares probability limit (the Wald ratio).
#[pyfunction]
#[pyo3(name = "wald_cace")]
fn wald_cace_py(data: &Bound<'_, PyDict>, z: &str, d: &str, y: &str) -> PyResult<f64> {
    let dataset = dataset_from_dict(data)?;
    pstrat::mrweight::wald_cace(&dataset, z, d, y).map_err(to_py_err)
}

/// Principal-score weighting estimate with a percentile bootstrap CI.
#[pyfunction]
#[pyo3(signature = (data, s_formula, y, stratum="01", replicates=500, seed=1))]
fn mr_weighting<'py>(
    py: Python<'py>,
    data: &Bound<'_, PyDict>,
    s_formula: &str,
    y: &str,
    stratum: &str,
    replicates: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let dataset = dataset_from_dict(data)?;
    let formula = parse_formula(s_formula).map_err(to_py_err)?;
    let est = tau_weighting(
        &dataset,
        &formula,
        y,
        TargetStratum::parse(stratum).map_err(to_py_err)?,
        &BootstrapConfig { replicates, seed },
    )
    .map_err(to_py_err)?;
    let out = PyDict::new(py);
    out.set_item("stratum", est.stratum.label())?;
    out.set_item("estimate", est.estimate)?;
    out.set_item("ci_low", est.ci_low)?;
    out.set_item("ci_high", est.ci_high)?;
    out.set_item("ess", est.ess.to_vec())?;
    Ok(out)
}

#[pymodule]
fn pstrat_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PsFit>()?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(parse_formula_py, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(wald_cace_py, m)?)?;
    m.add_function(wrap_pyfunction!(mr_weighting, m)?)?;
    Ok(())
}
