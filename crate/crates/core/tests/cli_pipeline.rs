//! End-to-end CLI pipeline: simulate -> fit -> summary/outcome/contrast
//! -> mr, plus determinism and exit-code contracts.

use std::path::Path;

use pstrat::cli::bundle::Bundle;
use pstrat::cli::config::RunConfig;
use pstrat::cli::{
    cmd_contrast, cmd_fit, cmd_mr, cmd_outcome, cmd_simulate, cmd_summary, run, ContrastArgs,
    FitArgs, MrArgs, OutcomeArgs, SimulateArgs, SummaryArgs,
};
use pstrat::posterior::{contrast, outcome_means, strata_proportions, summarize, ContrastSpec};
use pstrat::sampler::diagnose;

fn fit_args(config: &Path, out: Option<&Path>) -> FitArgs {
    FitArgs {
        config: config.to_path_buf(),
        out: out.map(Path::to_path_buf),
        seed: None,
        refresh: None,
        csv: true,
        strict: false,
    }
}

const CONFIG: &str = r#"
data = "data.csv"
"S.formula" = "Z + D ~ 1"
"Y.formula" = "Y ~ X1 * X2"
"Y.family" = "gaussian()"
prior_intercept = "prior_normal(0, 1)"
chains = 2
warmup = 150
iter = 300
seed = 7
out = "fit"

[strata]
n = "00*"
c = "01"
a = "11*"
"#;

#[test]
fn full_pipeline_and_golden_library_equivalence() {
    let dir = tempfile::tempdir().unwrap();
    let base = dir.path();

    // simulate
    let sim_out = cmd_simulate(SimulateArgs {
        design: "sim1".to_string(),
        n: 400,
        seed: 5,
        out: base.join("data.csv"),
        truth: Some(base.join("truth.json")),
        effect: None,
    })
    .unwrap();
    assert!(sim_out.stdout.contains("400 rows"));
    assert!(base.join("truth.json").exists());

    std::fs::write(base.join("config.toml"), CONFIG).unwrap();

    // fit
    let fit_out = cmd_fit(fit_args(&base.join("config.toml"), None)).unwrap();
    assert_eq!(fit_out.exit_code, 0);
    let bundle_dir = base.join("fit");
    for file in ["manifest.json", "config.toml", "draws.bin", "diagnostics.txt", "draws.csv"] {
        assert!(bundle_dir.join(file).exists(), "missing {file}");
    }

    // draws shape: chains x (iter - warmup) rows in the CSV (plus header
    // and manifest lines).
    let csv = std::fs::read_to_string(bundle_dir.join("draws.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2 + 2 * 150);
    assert!(csv.starts_with("# manifest: "));

    // summary / outcome / contrast through the CLI
    let summary_out =
        cmd_summary(SummaryArgs { bundle: bundle_dir.clone(), csv: None }).unwrap();
    let outcome_out = cmd_outcome(OutcomeArgs {
        bundle: bundle_dir.clone(),
        times: None,
        times_n: None,
        csv: None,
        draws_csv: Some(base.join("cube.csv")),
    })
    .unwrap();
    let contrast_out = cmd_contrast(ContrastArgs {
        bundle: bundle_dir.clone(),
        contrast: "Z".to_string(),
        times: None,
        times_n: None,
        csv: None,
    })
    .unwrap();

    // Golden check: the same tables through the library path.
    let bundle = Bundle::open(&bundle_dir).unwrap();
    let cfg = RunConfig::from_toml_str(&bundle.config_text().unwrap(), base).unwrap();
    let data = bundle.load_data().unwrap();
    let model = cfg.build_model(&data).unwrap();
    let draws = bundle.draws().unwrap();
    assert_eq!(summarize(&strata_proportions(&draws, &model).unwrap()).render(), summary_out.stdout);
    let cube = outcome_means(&draws, &model).unwrap();
    assert_eq!(summarize(&cube).render(), outcome_out.stdout);
    let diffed =
        contrast(&cube, &ContrastSpec::parse("Z").unwrap()).unwrap();
    assert_eq!(summarize(&diffed).render(), contrast_out.stdout);

    // ER strata show exactly-zero contrasts in the rendered table.
    for line in contrast_out.stdout.lines() {
        if line.starts_with("n:") || line.starts_with("a:") {
            assert!(line.contains(" 0.000000"), "{line}");
        }
    }

    // The long-format export carries the manifest stamp and all rows.
    let long = std::fs::read_to_string(base.join("cube.csv")).unwrap();
    assert!(long.starts_with(&format!("# manifest: {}", bundle.manifest.manifest_hash)));
    assert_eq!(long.lines().count(), 2 + 6 * draws.total_draws());

    // Diagnostics are recomputable from the stored draws.
    let diag = diagnose(&draws).unwrap();
    assert!(diag.params.len() == model.layout.width);

    // mr on the same config
    let mr_out = cmd_mr(MrArgs {
        config: base.join("config.toml"),
        stratum: None,
        replicates: 30,
        seed: Some(2),
        out: Some(base.join("mr.csv")),
    })
    .unwrap();
    assert!(mr_out.stdout.contains("stratum,estimate,ci_low,ci_high,ess_z0,ess_z1"));
    assert!(mr_out.stdout.contains("wald_cace,"));
    let mr_csv = std::fs::read_to_string(base.join("mr.csv")).unwrap();
    assert_eq!(mr_csv.lines().count(), 1 + 1 + 3); // stamp + header + three strata
}

#[test]
fn refit_from_same_config_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let base = dir.path();
    cmd_simulate(SimulateArgs {
        design: "sim1".to_string(),
        n: 200,
        seed: 9,
        out: base.join("data.csv"),
        truth: None,
        effect: None,
    })
    .unwrap();
    let mini = CONFIG.replace("warmup = 150", "warmup = 60").replace("iter = 300", "iter = 120");
    std::fs::write(base.join("config.toml"), &mini).unwrap();

    cmd_fit(fit_args(&base.join("config.toml"), Some(&base.join("fit_a")))).unwrap();
    cmd_fit(fit_args(&base.join("config.toml"), Some(&base.join("fit_b")))).unwrap();
    let a = std::fs::read(base.join("fit_a/draws.bin")).unwrap();
    let b = std::fs::read(base.join("fit_b/draws.bin")).unwrap();
    assert_eq!(a, b, "rerun with the same manifest must reproduce the draws file exactly");

    // Re-running a table command is byte-identical too.
    let s1 = cmd_summary(SummaryArgs { bundle: base.join("fit_a"), csv: None }).unwrap();
    let s2 = cmd_summary(SummaryArgs { bundle: base.join("fit_a"), csv: None }).unwrap();
    assert_eq!(s1.stdout, s2.stdout);

    // Changing the data file behind the bundle is detected.
    let mut data = std::fs::read_to_string(base.join("data.csv")).unwrap();
    data.push_str("1,1,0.5,0.1,0.2\n");
    std::fs::write(base.join("data.csv"), data).unwrap();
    let err = cmd_summary(SummaryArgs { bundle: base.join("fit_a"), csv: None }).unwrap_err();
    assert!(err.to_string().contains("changed"), "{err}");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let base = dir.path();

    // 2: config error (unknown family).
    std::fs::write(base.join("data.csv"), "Z,D,Y\n0,0,1\n1,1,2\n").unwrap();
    let bad_family = CONFIG
        .replace("gaussian()", "bernoulli()")
        .replace("\"Y.formula\" = \"Y ~ X1 * X2\"", "\"Y.formula\" = \"Y ~ 1\"");
    std::fs::write(base.join("bad.toml"), bad_family).unwrap();
    let code = run([
        "pstrat",
        "fit",
        "--config",
        base.join("bad.toml").to_str().unwrap(),
    ]);
    assert_eq!(code, 2);

    // 3: data error (missing file).
    let gone = CONFIG.replace("data.csv", "nope.csv");
    std::fs::write(base.join("gone.toml"), gone).unwrap();
    let code = run([
        "pstrat",
        "fit",
        "--config",
        base.join("gone.toml").to_str().unwrap(),
    ]);
    assert_eq!(code, 3);

    // 0: simulate works end to end through the argv entry point.
    let code = run([
        "pstrat",
        "simulate",
        "--design",
        "sim2",
        "--n",
        "50",
        "--seed",
        "3",
        "--out",
        base.join("s2.csv").to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    assert!(base.join("s2.csv").exists());
}
