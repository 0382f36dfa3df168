//! Run configuration: a single TOML file whose keys mirror the model
//! declaration surface.
//!
//! ```toml
//! data = "data.csv"
//! "S.formula" = "Z + D ~ 1"
//! "Y.formula" = "Y ~ X1 * X2"
//! "Y.family" = "gaussian()"
//! prior_intercept = "prior_normal(0, 1)"
//! chains = 4
//! warmup = 500
//! iter = 1000
//! seed = 1
//! out = "fit"
//!
//! [strata]        # ordered; the first entry is the reference stratum
//! n = "00*"
//! c = "01"
//! a = "11*"
//! ```
//!
//! Optional keys: an `[ER]` table of explicit booleans, the remaining
//! `prior_*` classes, `"survival.time.points"` (an array of times or an
//! integer count), `cores`, `refresh`, `target_accept`, `max_treedepth`.

use std::path::{Path, PathBuf};

use toml::Value;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::family::FamilySpec;
use crate::formula::{parse_formula, FormulaAst};
use crate::model::PsModel;
use crate::posterior::TimeSpec;
use crate::prior::{Prior, PriorClass, PriorSpec};
use crate::sampler::SamplerConfig;
use crate::strata::{parse_strata, StrataSpec};

#[derive(Debug, Clone)]
pub struct RunConfig {
    /// Verbatim config text (hashed into the manifest).
    pub source: String,
    pub data_path: PathBuf,
    pub s_formula: FormulaAst,
    pub y_formula: FormulaAst,
    pub family: FamilySpec,
    pub strata: StrataSpec,
    pub strata_warnings: Vec<String>,
    pub priors: PriorSpec,
    pub sampler: SamplerConfig,
    pub survival_time_points: Option<TimeSpec>,
    pub out_dir: Option<PathBuf>,
}

const KNOWN_KEYS: &[&str] = &[
    "data",
    "S.formula",
    "Y.formula",
    "Y.family",
    "strata",
    "ER",
    "prior_intercept",
    "prior_coefficient",
    "prior_sigma",
    "prior_alpha",
    "prior_lambda",
    "prior_theta",
    "prior_re_sd",
    "survival.time.points",
    "chains",
    "warmup",
    "iter",
    "seed",
    "cores",
    "refresh",
    "target_accept",
    "max_treedepth",
    "out",
];

impl RunConfig {
    pub fn from_path(path: impl AsRef<Path>) -> Result<RunConfig> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config '{}': {e}", path.display())))?;
        Self::from_toml_str(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Parse config text; relative paths resolve against `base_dir`.
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<RunConfig> {
        let root: Value = text
            .parse()
            .map_err(|e| Error::config(format!("config is not valid TOML: {e}")))?;
        let table = root.as_table().ok_or_else(|| Error::config("config must be a table"))?;

        for key in table.keys() {
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(Error::config(format!(
                    "unknown config key '{key}' (known keys: {})",
                    KNOWN_KEYS.join(", ")
                )));
            }
        }

        let get_str = |key: &str| -> Result<String> {
            table
                .get(key)
                .ok_or_else(|| Error::config(format!("missing config key '{key}'")))?
                .as_str()
                .map(str::to_string)
                .ok_or_else(|| Error::config(format!("config key '{key}' must be a string")))
        };

        let data_rel = PathBuf::from(get_str("data")?);
        let data_path =
            if data_rel.is_absolute() { data_rel } else { base_dir.join(data_rel) };

        let s_formula = parse_formula(&get_str("S.formula")?)?;
        let y_formula = parse_formula(&get_str("Y.formula")?)?;
        let family = FamilySpec::parse(&get_str("Y.family")?)?;

        let strata_table = table
            .get("strata")
            .ok_or_else(|| Error::config("missing [strata] table"))?
            .as_table()
            .ok_or_else(|| Error::config("strata must be a table of name = \"label\""))?;
        let entries: Vec<(String, String)> = strata_table
            .iter()
            .map(|(k, v)| {
                v.as_str()
                    .map(|s| (k.clone(), s.to_string()))
                    .ok_or_else(|| Error::config(format!("stratum '{k}' must map to a string")))
            })
            .collect::<Result<_>>()?;
        let er = match table.get("ER") {
            None => None,
            Some(v) => {
                let er_table = v
                    .as_table()
                    .ok_or_else(|| Error::config("ER must be a table of name = bool"))?;
                Some(
                    er_table
                        .iter()
                        .map(|(k, v)| {
                            v.as_bool().map(|b| (k.clone(), b)).ok_or_else(|| {
                                Error::config(format!("ER entry '{k}' must be a boolean"))
                            })
                        })
                        .collect::<Result<Vec<_>>>()?,
                )
            }
        };
        let parsed = parse_strata(&entries, er.as_deref())?;

        let mut priors = PriorSpec::default();
        for (key, class) in [
            ("prior_intercept", PriorClass::Intercept),
            ("prior_coefficient", PriorClass::Coefficient),
            ("prior_sigma", PriorClass::Sigma),
            ("prior_alpha", PriorClass::Alpha),
            ("prior_lambda", PriorClass::Lambda),
            ("prior_theta", PriorClass::Theta),
            ("prior_re_sd", PriorClass::ReSd),
        ] {
            if table.contains_key(key) {
                priors.set_class(class, Prior::parse(&get_str(key)?)?)?;
            }
        }

        let get_usize = |key: &str, default: usize| -> Result<usize> {
            match table.get(key) {
                None => Ok(default),
                Some(v) => v
                    .as_integer()
                    .filter(|&i| i >= 0)
                    .map(|i| i as usize)
                    .ok_or_else(|| {
                        Error::config(format!("config key '{key}' must be a non-negative integer"))
                    }),
            }
        };
        let sampler = SamplerConfig {
            chains: get_usize("chains", 4)?,
            warmup: get_usize("warmup", 1000)?,
            iter: get_usize("iter", 2000)?,
            seed: get_usize("seed", 1)? as u64,
            target_accept: match table.get("target_accept") {
                None => 0.8,
                Some(v) => v.as_float().or(v.as_integer().map(|i| i as f64)).ok_or_else(
                    || Error::config("target_accept must be a number"),
                )?,
            },
            max_treedepth: get_usize("max_treedepth", 10)?,
            cores: get_usize("cores", 1)?,
            refresh: get_usize("refresh", 0)?,
        };
        sampler.validate()?;

        let survival_time_points = match table.get("survival.time.points") {
            None => None,
            Some(Value::Integer(m)) if *m > 0 => Some(TimeSpec::Count(*m as usize)),
            Some(Value::Array(items)) => {
                let points: Result<Vec<f64>> = items
                    .iter()
                    .map(|v| {
                        v.as_float().or(v.as_integer().map(|i| i as f64)).ok_or_else(|| {
                            Error::config("survival.time.points entries must be numbers")
                        })
                    })
                    .collect();
                Some(TimeSpec::Points(points?))
            }
            Some(_) => {
                return Err(Error::config(
                    "survival.time.points must be an array of times or a positive integer",
                ))
            }
        };

        let out_dir = table
            .get("out")
            .map(|v| {
                v.as_str().map(PathBuf::from).ok_or_else(|| {
                    Error::config("config key 'out' must be a string")
                })
            })
            .transpose()?
            .map(|p| if p.is_absolute() { p } else { base_dir.join(p) });

        Ok(RunConfig {
            source: text.to_string(),
            data_path,
            s_formula,
            y_formula,
            family,
            strata: parsed.spec,
            strata_warnings: parsed.warnings,
            priors,
            sampler,
            survival_time_points,
            out_dir,
        })
    }

    pub fn load_data(&self) -> Result<Dataset> {
        Dataset::from_csv_path(&self.data_path)
    }

    pub fn build_model(&self, data: &Dataset) -> Result<PsModel> {
        PsModel::build(
            &self.s_formula,
            &self.y_formula,
            self.family,
            self.strata.clone(),
            self.priors.clone(),
            data,
        )
    }
}
