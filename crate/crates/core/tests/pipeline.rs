use std::fs;

use revshare_core::experiments::{sample_instance, BaseConfig, SweepParam, SweepSpec, SUMMARY_METRICS};
use revshare_core::optimizer::{theoretical_constants_with, with_power_strong_convexity};
use revshare_core::stability::rho_grid;
use revshare_core::*;

fn small_sweep(seed: u64) -> SweepSpec {
    let mut spec = SweepSpec::desk_scale(seed);
    spec.vary = SweepParam::N;
    spec.values = vec![3.0, 4.0];
    spec.instances_per_point = 4;
    spec.rho_grid = 11;
    spec.delta = 0.1;
    spec.bootstrap_resamples = 200;
    spec
}

fn data_rows(path: &std::path::Path) -> Vec<csv::StringRecord> {
    let text = fs::read_to_string(path).unwrap();
    let body = text.strip_prefix("# schema=1\n").expect("schema line");
    csv::Reader::from_reader(body.as_bytes())
        .records()
        .map(Result::unwrap)
        .collect()
}

fn headers(path: &std::path::Path) -> Vec<String> {
    let text = fs::read_to_string(path).unwrap();
    let body = text.strip_prefix("# schema=1\n").unwrap();
    csv::Reader::from_reader(body.as_bytes())
        .headers()
        .unwrap()
        .iter()
        .map(String::from)
        .collect()
}

#[test]
fn sweep_csvs_are_reproducible() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let spec = small_sweep(11);
    let first = revshare_core::experiments::run_sweep(&spec)
        .unwrap()
        .write_csvs(a.path())
        .unwrap();
    revshare_core::experiments::run_sweep(&spec)
        .unwrap()
        .write_csvs(b.path())
        .unwrap();
    for path in first {
        let name = path.file_name().unwrap();
        assert_eq!(
            fs::read(&path).unwrap(),
            fs::read(b.path().join(name)).unwrap(),
            "{name:?} differs"
        );
    }
}

#[test]
fn summary_means_match_raw() {
    let dir = tempfile::tempdir().unwrap();
    let output = revshare_core::experiments::run_sweep(&small_sweep(5)).unwrap();
    assert!(output.records.iter().all(|r| r.converged));
    output.write_csvs(dir.path()).unwrap();

    let raw_header = headers(&dir.path().join("raw.csv"));
    let summary_header = headers(&dir.path().join("summary.csv"));
    let raw = data_rows(&dir.path().join("raw.csv"));
    let summary = data_rows(&dir.path().join("summary.csv"));
    assert_eq!(summary.len(), 2);
    let col = |h: &[String], name: &str| h.iter().position(|c| c == name).unwrap();

    for row in &summary {
        let value = &row[col(&summary_header, "varied_value")];
        assert_eq!(row[col(&summary_header, "n_converged")].parse::<usize>().unwrap(), 4);
        for m in SUMMARY_METRICS {
            let values: Vec<f64> = raw
                .iter()
                .filter(|r| &r[col(&raw_header, "varied_value")] == value)
                .filter_map(|r| r[col(&raw_header, m)].parse::<f64>().ok())
                .collect();
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            let reported: f64 = row[col(&summary_header, &format!("{m}_mean"))].parse().unwrap();
            assert!(
                (mean - reported).abs() <= 1e-9 * (1.0 + mean.abs()),
                "{m}: {mean} vs {reported}"
            );
            let lo: f64 = row[col(&summary_header, &format!("{m}_ci_low"))].parse().unwrap();
            let hi: f64 = row[col(&summary_header, &format!("{m}_ci_high"))].parse().unwrap();
            assert!(lo <= reported + 1e-12 && reported <= hi + 1e-12);
        }
    }
}

fn default_instance(n: usize, seed: u64) -> GameInstance {
    sample_instance(
        &BaseConfig {
            n,
            ..Default::default()
        },
        seed,
    )
    .unwrap()
}

#[test]
fn optimizer_result_is_consistent_with_its_trace() {
    let g = default_instance(6, 3);
    let config = OptimizerConfig {
        delta: 0.05,
        ..Default::default()
    };
    let result = optimize_rho(&g, &config).unwrap();
    assert!(result.feasible);
    let rho = result.rho_hat.unwrap();
    let ese = result.ese_at_rho_hat.as_ref().unwrap();
    let again = evaluate_objective(&g, &ese.x_star, rho, Objective::PlatformRevenue).unwrap();
    assert!((again - result.objective_value.unwrap()).abs() <= 1e-12 * again.abs().max(1.0));

    let grid: Vec<f64> = result.scan_trace.iter().map(|r| r.rho).collect();
    assert_eq!(grid.len(), 20);
    assert_eq!(grid[0], 0.05);
    assert!(grid.windows(2).all(|w| w[1] > w[0]));
    assert_eq!(*grid.last().unwrap(), 1.0);
    for record in &result.scan_trace {
        let x = solve_ese_foc(&g, record.rho, &EseOptions::default()).unwrap().x_star;
        let rule = AllocationRule::proportional(record.rho).unwrap();
        let report = check_fse(&g, &x, &rule, config.eta, &SearchOptions::default()).unwrap();
        assert_eq!(report.is_fse, record.feasible, "rho {}", record.rho);
    }
    let best = result
        .scan_trace
        .iter()
        .filter(|r| r.feasible)
        .map(|r| r.objective)
        .fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(best, result.objective_value.unwrap());
}

#[test]
fn finer_grids_lose_at_most_one_step_of_slope() {
    let g = default_instance(5, 8);
    let mut results = Vec::new();
    for delta in [0.02, 0.01, 0.005] {
        let r = optimize_rho(
            &g,
            &OptimizerConfig {
                delta,
                ..Default::default()
            },
        )
        .unwrap();
        results.push((delta, r));
    }
    for pair in results.windows(2) {
        let ((coarse_delta, coarse), (_, fine)) = (&pair[0], &pair[1]);
        let slope = coarse
            .scan_trace
            .windows(2)
            .filter(|w| w[0].objective.is_finite() && w[1].objective.is_finite())
            .map(|w| ((w[1].objective - w[0].objective) / (w[1].rho - w[0].rho)).abs())
            .fold(0.0, f64::max);
        let (c, f) = (coarse.objective_value.unwrap(), fine.objective_value.unwrap());
        assert!(
            c - f <= coarse_delta * slope + 1e-9,
            "coarse {c} fine {f} slope {slope}"
        );
    }
}

#[test]
fn refinement_never_lowers_the_objective() {
    for seed in 0..3 {
        let g = default_instance(5, seed);
        let plain = optimize_rho(&g, &OptimizerConfig::default()).unwrap();
        let refined = optimize_rho(
            &g,
            &OptimizerConfig {
                refine: true,
                ..Default::default()
            },
        )
        .unwrap();
        let (p, r) = (plain.objective_value.unwrap(), refined.objective_value.unwrap());
        assert!(r >= p, "seed {seed}: refined {r} < grid {p}");
        assert!(refined.fse_report.as_ref().unwrap().is_fse);
        let rho = refined.rho_hat.unwrap();
        let x = &refined.ese_at_rho_hat.as_ref().unwrap().x_star;
        assert_eq!(evaluate_objective(&g, x, rho, Objective::PlatformRevenue).unwrap(), r);
    }
}

#[test]
fn total_quality_objective_picks_full_redistribution_when_homogeneous() {
    let g = GameInstance::power(ModelParams::new(100.0, 0.8, 0.5).unwrap(), &[3.0; 4], 1.5).unwrap();
    let r = optimize_rho(
        &g,
        &OptimizerConfig {
            objective: Objective::TotalQuality,
            delta: 0.05,
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(r.rho_hat, Some(1.0));
}

fn log_slope(ns: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = ns.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let (mx, my) = (lx.iter().sum::<f64>() / 4.0, ly.iter().sum::<f64>() / 4.0);
    let cov: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    cov / var
}

// The quadratic and linear rates are upper bounds; with gamma = 1 the
// equilibrium qualities are flat in n and the rates are attained. Below
// n = 80 the n/(n-1) factors in the ledger still pull the slopes down.
#[test]
fn accuracy_constants_scale_with_n() {
    let ns = [80.0, 160.0, 320.0, 640.0];
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for &n in &ns {
        let g = GameInstance::power(ModelParams::new(100.0, 1.0, 0.5).unwrap(), &vec![2.0; n as usize], 1.5).unwrap();
        let g = with_power_strong_convexity(&g).unwrap();
        let xs: Vec<Vec<f64>> = rho_grid(11)
            .into_iter()
            .map(|rho| solve_ese_foc(&g, rho, &EseOptions::default()).unwrap().x_star)
            .collect();
        let views: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
        let ledger = BoundsLedger::compute(&g).unwrap().refined_by_profiles(&views);
        let c = theoretical_constants_with(&g, &ledger).unwrap();
        a.push(c.a);
        b.push(c.b);
    }
    let (sa, sb) = (log_slope(&ns, &a), log_slope(&ns, &b));
    println!("A slope {sa}, B slope {sb}");
    assert!((sa - 2.0).abs() <= 0.3, "A slope {sa}");
    assert!((sb - 1.0).abs() <= 0.3, "B slope {sb}");
}

#[test]
fn ledger_function_basics() {
    let g = default_instance(5, 1);
    let ledger = BoundsLedger::compute(&g).unwrap();
    assert!((ledger.b(0.0, 3.0, 0.0, 0.0, 0.0) - ledger.mu * 3.0).abs() <= 1e-12 * ledger.mu);
    let mut wider = ledger.clone();
    wider.y_lb *= 2.0;
    assert!(wider.b(1.0, 2.0, 0.5, 1.0, 1.5) < ledger.b(1.0, 2.0, 0.5, 1.0, 1.5));
}

#[test]
fn instance_json_round_trip_through_files() {
    let g = default_instance(4, 2);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("instance.json");
    fs::write(&path, g.to_json().unwrap()).unwrap();
    let back = GameInstance::from_json(&fs::read_to_string(&path).unwrap()).unwrap();
    let (x, y) = (
        solve_ese_foc(&g, 0.5, &EseOptions::default()).unwrap().x_star,
        solve_ese_foc(&back, 0.5, &EseOptions::default()).unwrap().x_star,
    );
    assert_eq!(x, y);
}
