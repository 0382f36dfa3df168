//! Estimand tests against hand-computed and identity-based oracles.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::Dataset;
use crate::family::{Family, FamilySpec, Link};
use crate::formula::parse_formula;
use crate::model::PsModel;
use crate::prior::PriorSpec;
use crate::sampler::{ChainDraws, DrawMatrix};
use crate::strata::monotonicity_trio;

use super::*;

/// Wrap explicit constrained draws as a single-chain DrawMatrix.
fn draws_from(model: &PsModel, rows: Vec<Vec<f64>>) -> DrawMatrix {
    let width = model.layout.width;
    let n = rows.len();
    let mut flat = Vec::with_capacity(n * width);
    for r in &rows {
        assert_eq!(r.len(), width);
        flat.extend_from_slice(r);
    }
    DrawMatrix {
        param_names: model.layout.names.clone(),
        width,
        draws_per_chain: n,
        chains: vec![ChainDraws {
            draws: flat,
            logp: vec![0.0; n],
            accept: vec![1.0; n],
            divergent: vec![false; n],
            treedepth: vec![1; n],
            step_size: 0.1,
        }],
    }
}

fn random_constrained(model: &PsModel, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let unc: Vec<f64> = (0..model.dim()).map(|_| rng.random::<f64>() * 1.6 - 0.8).collect();
    model.layout.constrain(&unc)
}

fn trio_gaussian(n: usize, seed: u64, s_formula: &str, y_formula: &str) -> PsModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Dataset::new();
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); 4];
    for i in 0..n {
        let zi = (i % 2) as u8;
        let s = rng.random_range(0..3usize);
        let di = match (s, zi) {
            (0, _) => 0.0,
            (1, z) => z as f64,
            _ => 1.0,
        };
        cols[0].push(zi as f64);
        cols[1].push(di);
        cols[2].push(rng.random::<f64>() * 2.0 + s as f64);
        cols[3].push(rng.random::<f64>() * 2.0 - 1.0);
    }
    for (name, col) in ["Z", "D", "Y", "X"].iter().zip(cols) {
        data.push_numeric(*name, col).unwrap();
    }
    PsModel::build(
        &parse_formula(s_formula).unwrap(),
        &parse_formula(y_formula).unwrap(),
        FamilySpec::glm(Family::Gaussian, Link::Identity).unwrap(),
        monotonicity_trio(),
        PriorSpec::default(),
        &data,
    )
    .unwrap()
}

#[test]
fn unit_probs_symmetric_at_zero_and_hand_softmax() {
    let model = trio_gaussian(10, 1, "Z + D ~ 1", "Y ~ 1");
    let zero = model.layout.constrain(&vec![0.0; model.dim()]);
    let mut known = vec![0.0; model.dim()];
    known[model.layout.beta[0].start] = 0.5;
    known[model.layout.beta[1].start] = -0.3;
    let known = model.layout.constrain(&known);
    let draws = draws_from(&model, vec![zero, known]);

    let probs = unit_stratum_probs(&draws, &model).unwrap();
    for s in 0..3 {
        assert!((probs.get(0, s, 0) - 1.0 / 3.0).abs() < 1e-12);
    }
    let z = 1.0 + 0.5f64.exp() + (-0.3f64).exp();
    assert!((probs.get(4, 0, 1) - 1.0 / z).abs() < 1e-12);
    assert!((probs.get(4, 1, 1) - 0.5f64.exp() / z).abs() < 1e-12);
    assert!((probs.get(4, 2, 1) - (-0.3f64).exp() / z).abs() < 1e-12);

    // Rows sum to one for every unit and draw.
    for i in 0..probs.n_units {
        for b in 0..probs.n_draws {
            let total: f64 = (0..3).map(|s| probs.get(i, s, b)).sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn proportions_sum_to_one_and_degenerate_model_forces_stratum() {
    let model = trio_gaussian(40, 2, "Z + D ~ X", "Y ~ X");
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let rows: Vec<Vec<f64>> = (0..20).map(|_| random_constrained(&model, &mut rng)).collect();
    let draws = draws_from(&model, rows);
    let pi = strata_proportions(&draws, &model).unwrap();
    for b in 0..pi.n_draws {
        let total: f64 = (0..3).map(|s| pi.row_draws(s)[b]).sum();
        assert!((total - 1.0).abs() < 1e-10);
    }

    // A huge complier intercept pins the membership to c.
    let mut q = vec![0.0; model.dim()];
    q[model.layout.beta[0].start] = 40.0;
    let draws = draws_from(&model, vec![model.layout.constrain(&q); 2]);
    let pi = strata_proportions(&draws, &model).unwrap();
    assert!(pi.row_draws(1).iter().all(|&p| p > 0.999999));
}

#[test]
fn proportions_are_the_unit_average_of_membership_probabilities() {
    // With one unit the proportion IS that unit's probability; in general
    // it is the empirical average over units. Verified against the full
    // unit-level array.
    let model = trio_gaussian(9, 4, "Z + D ~ X", "Y ~ X");
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let draws = draws_from(&model, vec![random_constrained(&model, &mut rng)]);
    let pi = strata_proportions(&draws, &model).unwrap();
    let probs = unit_stratum_probs(&draws, &model).unwrap();
    for s in 0..3 {
        let avg: f64 =
            (0..model.n_units).map(|i| probs.get(i, s, 0)).sum::<f64>() / model.n_units as f64;
        assert!((pi.row_draws(s)[0] - avg).abs() < 1e-12);
    }
}

#[test]
fn er_strata_have_arm_identical_outcomes_and_zero_contrasts() {
    let model = trio_gaussian(60, 6, "Z + D ~ X", "Y ~ X");
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let rows: Vec<Vec<f64>> = (0..25).map(|_| random_constrained(&model, &mut rng)).collect();
    let draws = draws_from(&model, rows);
    let cube = outcome_means(&draws, &model).unwrap();

    let n0 = cube.find_row("n:0").unwrap();
    let n1 = cube.find_row("n:1").unwrap();
    assert_eq!(cube.row_draws(n0), cube.row_draws(n1));

    let tau = contrast(&cube, &ContrastSpec::over(&[AxisName::Z]).unwrap()).unwrap();
    let n_contrast = tau.find_row("n:{1}-{0}").unwrap();
    assert!(tau.row_draws(n_contrast).iter().all(|&v| v == 0.0));
    let a_contrast = tau.find_row("a:{1}-{0}").unwrap();
    assert!(tau.row_draws(a_contrast).iter().all(|&v| v == 0.0));
    // Compliers are not collapsed.
    let c_contrast = tau.find_row("c:{1}-{0}").unwrap();
    assert!(tau.row_draws(c_contrast).iter().any(|&v| v != 0.0));
}

#[test]
fn identity_link_intercept_only_outcomes_equal_gamma() {
    let model = trio_gaussian(30, 8, "Z + D ~ 1", "Y ~ 1");
    let mut q = vec![0.0; model.dim()];
    for (c, block) in model.layout.gamma.iter().enumerate() {
        q[block.start] = 1.0 + c as f64;
    }
    let draws = draws_from(&model, vec![model.layout.constrain(&q)]);
    let cube = outcome_means(&draws, &model).unwrap();
    // Weights cancel: mu equals the cell intercept regardless of p_is.
    for (s, z, label) in
        [(0usize, 0u8, "n:0"), (1, 0, "c:0"), (1, 1, "c:1"), (2, 1, "a:1")]
    {
        let cell = model.cells.cell(s, z);
        let row = cube.find_row(label).unwrap();
        assert!((cube.row_draws(row)[0] - (1.0 + cell as f64)).abs() < 1e-12);
    }
}

#[test]
fn itt_decomposition_identity() {
    let model = trio_gaussian(50, 9, "Z + D ~ X", "Y ~ X");
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let rows: Vec<Vec<f64>> = (0..15).map(|_| random_constrained(&model, &mut rng)).collect();
    let draws = draws_from(&model, rows);

    let pi = strata_proportions(&draws, &model).unwrap();
    let mu = outcome_means(&draws, &model).unwrap();
    let probs = unit_stratum_probs(&draws, &model).unwrap();

    for b in 0..draws.total_draws() {
        // Decomposed: sum_s pi_s (mu_s1 - mu_s0).
        let mut decomposed = 0.0;
        for s in 0..3 {
            let mu1 = mu.row_draws(s * 2 + 1)[b];
            let mu0 = mu.row_draws(s * 2)[b];
            decomposed += pi.row_draws(s)[b] * (mu1 - mu0);
        }
        // Direct: average over units of the per-unit mixture difference.
        let q_con = draws.draw(0, b).to_vec();
        let q = model.layout.unconstrain(&q_con);
        let mut direct = 0.0;
        for i in 0..model.n_units {
            for s in 0..3 {
                let m1 = model.unit_eta(&q, model.cells.cell(s, 1), i);
                let m0 = model.unit_eta(&q, model.cells.cell(s, 0), i);
                direct += probs.get(i, s, b) * (m1 - m0);
            }
        }
        direct /= model.n_units as f64;
        assert!((decomposed - direct).abs() < 1e-10, "draw {b}: {decomposed} vs {direct}");
    }
}

#[test]
fn contrast_nesting_order_is_invariant() {
    let model = trio_gaussian(40, 11, "Z + D ~ X", "Y ~ X");
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let rows: Vec<Vec<f64>> = (0..10).map(|_| random_constrained(&model, &mut rng)).collect();
    let draws = draws_from(&model, rows);
    let cube = outcome_means(&draws, &model).unwrap();

    let zs = contrast(&cube, &ContrastSpec::over(&[AxisName::Z, AxisName::Stratum]).unwrap())
        .unwrap();
    let sz = contrast(&cube, &ContrastSpec::over(&[AxisName::Stratum, AxisName::Z]).unwrap())
        .unwrap();
    assert_eq!(zs.n_rows(), sz.n_rows());
    for row in 0..zs.n_rows() {
        // Row orders coincide because both cubes keep the (stratum, Z) axis
        // order; only the label nesting differs in how it was built.
        let a = zs.row_draws(row);
        let b = sz.row_draws(row);
        for k in 0..a.len() {
            assert!((a[k] - b[k]).abs() < 1e-12);
        }
    }
}

#[test]
fn contrast_errors() {
    let model = trio_gaussian(20, 13, "Z + D ~ 1", "Y ~ 1");
    let draws = draws_from(&model, vec![model.layout.constrain(&vec![0.0; model.dim()]); 2]);
    let pi = strata_proportions(&draws, &model).unwrap();
    // No Z axis on the proportions cube.
    assert!(contrast(&pi, &ContrastSpec::over(&[AxisName::Z]).unwrap()).is_err());
    // Duplicate axis request.
    assert!(ContrastSpec::over(&[AxisName::Z, AxisName::Z]).is_err());
}

#[test]
fn survival_curves_start_at_one_and_match_exponential() {
    // Cox with theta = 0 and intercept alpha: S(t) = exp(-t e^alpha).
    let mut data = Dataset::new();
    let n = 16;
    data.push_numeric("Z", (0..n).map(|i| (i % 2) as f64).collect()).unwrap();
    data.push_numeric(
        "D",
        (0..n)
            .map(|i| match (i / 2) % 3 {
                0 => 0.0,
                1 => ((i % 2) == 1) as u8 as f64,
                _ => 1.0,
            })
            .collect(),
    )
    .unwrap();
    data.push_numeric("Y", (1..=n).map(|i| 0.2 * i as f64).collect()).unwrap();
    data.push_numeric("delta", (0..n).map(|i| (i % 3 == 0) as u8 as f64).collect()).unwrap();
    let model = PsModel::build(
        &parse_formula("Z + D ~ 1").unwrap(),
        &parse_formula("Y + delta ~ 1").unwrap(),
        FamilySpec::survival_cox(),
        monotonicity_trio(),
        PriorSpec::default(),
        &data,
    )
    .unwrap();

    let mut q = vec![0.0; model.dim()];
    let alphas: Vec<f64> = (0..model.cells.n_cells()).map(|c| -0.5 + 0.3 * c as f64).collect();
    for (c, block) in model.layout.gamma.iter().enumerate() {
        q[block.start] = alphas[c];
    }
    // theta slots stay at 0 (exp(theta) = 1: exponential hazard).
    let draws = draws_from(&model, vec![model.layout.constrain(&q)]);

    let tiny = survival_outcome(&draws, &model, &TimeSpec::Points(vec![1e-12])).unwrap();
    for row in 0..tiny.n_rows() {
        assert!((tiny.row_draws(row)[0] - 1.0).abs() < 1e-9);
    }

    let grid = vec![0.5, 1.0, 2.0];
    let cube = survival_outcome(&draws, &model, &TimeSpec::Points(grid.clone())).unwrap();
    for s in 0..3 {
        for z in 0..2u8 {
            let cell = model.cells.cell(s, z);
            for (ti, &t) in grid.iter().enumerate() {
                let row = (s * 2 + z as usize) * grid.len() + ti;
                let expected = (-t * alphas[cell].exp()).exp();
                assert!(
                    (cube.row_draws(row)[0] - expected).abs() < 1e-12,
                    "s={s} z={z} t={t}"
                );
            }
        }
    }

    // Curves are non-increasing in t for every draw and cell.
    for s in 0..3 {
        for z in 0..2usize {
            for ti in 1..grid.len() {
                let prev = cube.row_draws((s * 2 + z) * grid.len() + ti - 1)[0];
                let curr = cube.row_draws((s * 2 + z) * grid.len() + ti)[0];
                assert!(curr <= prev + 1e-15);
            }
        }
    }

    // Auto grid: m points ending at the 90% quantile of observed times.
    let auto = survival_outcome(&draws, &model, &TimeSpec::Count(4)).unwrap();
    let time_axis = &auto.axes[2];
    assert_eq!(time_axis.len(), 4);
    let q90 = crate::math::quantile(&model.y, 0.9);
    assert!((time_axis.labels[3].parse::<f64>().unwrap() - q90).abs() < 1e-12);
    assert!((time_axis.labels[0].parse::<f64>().unwrap() - q90 / 4.0).abs() < 1e-12);
}

#[test]
fn survival_time_axis_contrast() {
    // Contrasts along the time axis are supported for survival cubes.
    let mut data = Dataset::new();
    let n = 12;
    data.push_numeric("Z", (0..n).map(|i| (i % 2) as f64).collect()).unwrap();
    data.push_numeric(
        "D",
        (0..n)
            .map(|i| match (i / 2) % 3 {
                0 => 0.0,
                1 => ((i % 2) == 1) as u8 as f64,
                _ => 1.0,
            })
            .collect(),
    )
    .unwrap();
    data.push_numeric("Y", (1..=n).map(|i| 0.3 * i as f64).collect()).unwrap();
    data.push_numeric("delta", (0..n).map(|i| (i % 2 == 0) as u8 as f64).collect()).unwrap();
    let model = PsModel::build(
        &parse_formula("Z + D ~ 1").unwrap(),
        &parse_formula("Y + delta ~ 1").unwrap(),
        FamilySpec::survival_aft(),
        monotonicity_trio(),
        PriorSpec::default(),
        &data,
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let draws = draws_from(&model, vec![random_constrained(&model, &mut rng)]);
    let cube = survival_outcome(&draws, &model, &TimeSpec::Points(vec![1.0, 2.0])).unwrap();
    let diffed = contrast(&cube, &ContrastSpec::over(&[AxisName::Time]).unwrap()).unwrap();
    // S(2) - S(1) <= 0 by monotonicity, for every cell.
    assert_eq!(diffed.n_rows(), 6);
    for row in 0..diffed.n_rows() {
        assert!(diffed.row_label(row).ends_with("{2}-{1}"));
        assert!(diffed.row_draws(row)[0] <= 0.0);
    }
    // Nested over Z then time.
    let zt = contrast(&cube, &ContrastSpec::over(&[AxisName::Z, AxisName::Time]).unwrap())
        .unwrap();
    assert_eq!(zt.n_rows(), 3);
}

#[test]
fn summarize_constant_and_range() {
    let model = trio_gaussian(10, 14, "Z + D ~ 1", "Y ~ 1");
    let q = model.layout.constrain(&vec![0.0; model.dim()]);
    let draws = draws_from(&model, vec![q; 3]);
    let pi = strata_proportions(&draws, &model).unwrap();
    let table = summarize(&pi);
    for row in &table.rows {
        assert!((row.mean - 1.0 / 3.0).abs() < 1e-12);
        assert!(row.sd.abs() < 1e-12);
        for q in row.quantiles {
            assert!((q - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    // Type-7 quantiles on 1..100.
    let mut cube = EstimandCube::new(
        vec![Axis { name: AxisName::Stratum, labels: vec!["x".to_string()] }],
        100,
    );
    for b in 0..100 {
        cube.set(0, b, (b + 1) as f64);
    }
    let table = summarize(&cube);
    assert!((table.rows[0].quantiles[2] - 50.5).abs() < 1e-12);
    assert!((table.rows[0].quantiles[0] - 3.475).abs() < 1e-12);

    // Rendered layout puts the quantile columns in printed order.
    let text = table.render();
    let header = text.lines().next().unwrap();
    assert!(header.contains("mean") && header.contains("sd"));
    let pos: Vec<usize> = ["2.5%", "25%", "50%", "75%", "97.5%"]
        .iter()
        .map(|c| header.find(c).unwrap())
        .collect();
    assert!(pos.windows(2).all(|w| w[0] < w[1]));
}
