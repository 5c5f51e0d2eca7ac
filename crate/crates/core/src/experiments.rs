//! Random instance sampling, one-parameter sweeps with bootstrap summaries,
//! and the counterexample runner for the alternative allocation rules.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::distributions::{Distribution, Uniform};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::equilibrium::{solve_ese_btes, solve_ese_foc, EseOptions};
use crate::error::{Error, Result};
use crate::model::{
    creator_utility, AllocationRule, CostModel, GameInstance, ModelParams, Profile, Rivals, RuleKind, TrafficMode,
};
use crate::optimizer::{optimize_rho, with_power_strong_convexity, OptimizerConfig};
use crate::search::SearchOptions;
use crate::stability::{check_fse, fmt_f64, min_stable_rho, FseReport, ScanOptions};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaseConfig {
    pub n: usize,
    pub gamma: f64,
    pub mu: f64,
    pub theta: f64,
    pub alpha: f64,
    pub a_lo: f64,
    pub a_hi: f64,
    pub beta_ai: f64,
    pub x0: f64,
    pub traffic_mode: TrafficMode,
}

impl Default for BaseConfig {
    fn default() -> Self {
        Self {
            n: 20,
            gamma: 0.8,
            mu: 100.0,
            theta: 1.5,
            alpha: 0.5,
            a_lo: 1.0,
            a_hi: 10.0,
            beta_ai: 1.0,
            x0: 0.0,
            traffic_mode: TrafficMode::HumanOnly,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepParam {
    N,
    Alpha,
    Mu,
    Theta,
    Gamma,
    BetaAi,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::N => "n",
            SweepParam::Alpha => "alpha",
            SweepParam::Mu => "mu",
            SweepParam::Theta => "theta",
            SweepParam::Gamma => "gamma",
            SweepParam::BetaAi => "beta_ai",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Ok(match name {
            "n" => SweepParam::N,
            "alpha" => SweepParam::Alpha,
            "mu" => SweepParam::Mu,
            "theta" => SweepParam::Theta,
            "gamma" => SweepParam::Gamma,
            "beta_ai" | "beta-ai" => SweepParam::BetaAi,
            other => return Err(Error::invalid("vary", format!("unknown parameter `{other}`"))),
        })
    }
}

impl BaseConfig {
    /// Copy with one parameter replaced.
    pub fn with(&self, param: SweepParam, value: f64) -> Result<Self> {
        let mut out = *self;
        match param {
            SweepParam::N => {
                if !(value >= 2.0 && value.fract() == 0.0) {
                    return Err(Error::invalid("n", format!("must be an integer >= 2, got {value}")));
                }
                out.n = value as usize;
            }
            SweepParam::Alpha => out.alpha = value,
            SweepParam::Mu => out.mu = value,
            SweepParam::Theta => out.theta = value,
            SweepParam::Gamma => out.gamma = value,
            SweepParam::BetaAi => out.beta_ai = value,
        }
        Ok(out)
    }

    pub fn params(&self) -> Result<ModelParams> {
        Ok(ModelParams::new(self.mu, self.gamma, self.alpha)?
            .with_data_returns_exponent(self.beta_ai)?
            .with_prior_data(self.x0)?
            .with_traffic_mode(self.traffic_mode))
    }
}

/// Draws `a_i ~ Uniform[a_lo, a_hi]` from a ChaCha stream keyed by `seed`.
/// Costs carry their curvature on `(0, x_max]` as strong-convexity modulus.
pub fn sample_instance(base: &BaseConfig, seed: u64) -> Result<GameInstance> {
    if !(base.a_lo > 0.0 && base.a_lo <= base.a_hi) {
        return Err(Error::invalid(
            "a_lo",
            format!("need 0 < a_lo <= a_hi, got [{}, {}]", base.a_lo, base.a_hi),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = Uniform::new_inclusive(base.a_lo, base.a_hi);
    let costs = (0..base.n)
        .map(|_| CostModel::power(dist.sample(&mut rng), base.theta))
        .collect::<Result<Vec<_>>>()?;
    with_power_strong_convexity(&GameInstance::new(base.params()?, costs)?)
}

/// Seed of the `k`-th instance of a sweep: stream `k` of the sweep seed.
pub fn instance_seed(sweep_seed: u64, k: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(sweep_seed);
    rng.set_stream(k);
    rng.next_u64()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub base: BaseConfig,
    pub vary: SweepParam,
    pub values: Vec<f64>,
    pub instances_per_point: usize,
    pub rho_grid: usize,
    pub epsilon: f64,
    pub seed: u64,
    pub bootstrap_resamples: usize,
    /// Grid resolution of the revenue optimizer.
    pub delta: f64,
}

impl SweepSpec {
    /// Vary `n` over {5, 10, 20} with 30 instances per point.
    pub fn desk_scale(seed: u64) -> Self {
        Self {
            base: BaseConfig::default(),
            vary: SweepParam::N,
            values: vec![5.0, 10.0, 20.0],
            instances_per_point: 30,
            rho_grid: 100,
            epsilon: 1e-4,
            seed,
            bootstrap_resamples: 1000,
            delta: 0.01,
        }
    }

    /// Vary `n` over {5, 10, ..., 50} with 150 instances per point.
    pub fn full_scale(seed: u64) -> Self {
        Self {
            values: (1..=10).map(|k| 5.0 * k as f64).collect(),
            instances_per_point: 150,
            ..Self::desk_scale(seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.instances_per_point == 0 {
            return Err(Error::invalid("instances_per_point", "must be at least 1"));
        }
        if self.values.is_empty() {
            return Err(Error::invalid("values", "need at least one value"));
        }
        if self.rho_grid < 2 {
            return Err(Error::invalid("rho_grid", "need at least 2 points"));
        }
        for &v in &self.values {
            self.base.with(self.vary, v)?.params()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub varied_value: f64,
    pub instance_index: usize,
    pub instance_seed: u64,
    /// Every equilibrium solve of this instance converged.
    pub converged: bool,
    pub min_stable_rho: Option<f64>,
    pub optimal_rho: Option<f64>,
    pub platform_revenue_at_opt: Option<f64>,
    pub mean_creator_utility_at_opt: Option<f64>,
    pub total_quality_at_opt: Option<f64>,
    /// `(rho, total quality)` on the stable grid points.
    pub quality_vs_rho_curve: Vec<(f64, f64)>,
    pub error: Option<String>,
}

fn run_instance(spec: &SweepSpec, value: f64, k: usize) -> SweepRecord {
    let seed = instance_seed(spec.seed, k as u64);
    let mut record = SweepRecord {
        varied_value: value,
        instance_index: k,
        instance_seed: seed,
        converged: false,
        min_stable_rho: None,
        optimal_rho: None,
        platform_revenue_at_opt: None,
        mean_creator_utility_at_opt: None,
        total_quality_at_opt: None,
        quality_vs_rho_curve: Vec::new(),
        error: None,
    };
    let outcome = (|| -> Result<()> {
        let base = spec.base.with(spec.vary, value)?;
        let instance = sample_instance(&base, seed)?;
        let scan = min_stable_rho(&instance, spec.rho_grid, spec.epsilon, &ScanOptions::default())?;
        let config = OptimizerConfig {
            delta: spec.delta,
            eta: spec.epsilon / 4.0,
            ..Default::default()
        };
        let opt = optimize_rho(&instance, &config)?;
        let failures = scan.rows.iter().filter(|r| r.error.is_some()).count()
            + opt.scan_trace.iter().filter(|r| r.objective.is_nan()).count();
        record.converged = failures == 0;
        record.min_stable_rho = scan.min_stable_rho;
        record.quality_vs_rho_curve = scan
            .rows
            .iter()
            .filter(|r| r.is_fse)
            .map(|r| (r.rho, r.ese_total_quality))
            .collect();
        if let (Some(rho), Some(ese)) = (opt.rho_hat, opt.ese_at_rho_hat.as_ref()) {
            let profile = Profile::full_sharing(ese.x_star.clone())?;
            let rule = AllocationRule::proportional(rho)?;
            let mut utility = 0.0;
            for i in 0..instance.n() {
                utility += creator_utility(&instance, &profile, &rule, i)?;
            }
            record.optimal_rho = Some(rho);
            record.platform_revenue_at_opt = opt.objective_value;
            record.mean_creator_utility_at_opt = Some(utility / instance.n() as f64);
            record.total_quality_at_opt = Some(ese.total_quality());
        }
        Ok(())
    })();
    if let Err(e) = outcome {
        log::warn!("{}={value} instance {k}: {e}", spec.vary.name());
        record.error = Some(e.to_string());
        record.converged = false;
    }
    record
}

/// Mean and percentile bootstrap interval of the mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub count: usize,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Percentile-method 95% bootstrap interval of the mean of `values`.
pub fn bootstrap_mean(values: &[f64], resamples: usize, seed: u64) -> Estimate {
    let count = values.len();
    if count == 0 {
        return Estimate {
            mean: f64::NAN,
            ci_low: f64::NAN,
            ci_high: f64::NAN,
            count,
        };
    }
    let mean = values.iter().sum::<f64>() / count as f64;
    if resamples == 0 {
        return Estimate {
            mean,
            ci_low: mean,
            ci_high: mean,
            count,
        };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pick = Uniform::new(0, count);
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..count).map(|_| values[pick.sample(&mut rng)]).sum::<f64>() / count as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    Estimate {
        mean,
        ci_low: quantile(&means, 0.025).min(mean),
        ci_high: quantile(&means, 0.975).max(mean),
        count,
    }
}

pub const SUMMARY_METRICS: [&str; 5] = [
    "min_stable_rho",
    "optimal_rho",
    "platform_revenue_at_opt",
    "mean_creator_utility_at_opt",
    "total_quality_at_opt",
];

fn metric(record: &SweepRecord, k: usize) -> Option<f64> {
    match k {
        0 => record.min_stable_rho,
        1 => record.optimal_rho,
        2 => record.platform_revenue_at_opt,
        3 => record.mean_creator_utility_at_opt,
        _ => record.total_quality_at_opt,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub varied_value: f64,
    pub n_instances: usize,
    pub n_converged: usize,
    /// One estimate per entry of [`SUMMARY_METRICS`], over converged instances.
    pub metrics: Vec<Estimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualitySummaryRow {
    pub varied_value: f64,
    pub rho: f64,
    pub total_quality: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOutput {
    pub spec: SweepSpec,
    pub records: Vec<SweepRecord>,
    pub summary: Vec<SummaryRow>,
    pub quality_summary: Vec<QualitySummaryRow>,
}

fn sub_seed(seed: u64, a: u64, b: u64) -> u64 {
    instance_seed(seed ^ 0x5eed_b007_57a9_0000, (a << 32) | b)
}

/// Runs every (value, instance) pair in parallel and summarizes the results.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepOutput> {
    spec.validate()?;
    let jobs: Vec<(usize, usize)> = (0..spec.values.len())
        .flat_map(|v| (0..spec.instances_per_point).map(move |k| (v, k)))
        .collect();
    let records: Vec<SweepRecord> = jobs
        .into_par_iter()
        .map(|(v, k)| run_instance(spec, spec.values[v], k))
        .collect();

    let mut summary = Vec::new();
    let mut quality_summary = Vec::new();
    for (v, &value) in spec.values.iter().enumerate() {
        let group: Vec<&SweepRecord> = records.iter().filter(|r| r.varied_value == value).collect();
        let ok: Vec<&SweepRecord> = group.iter().copied().filter(|r| r.converged).collect();
        let metrics = (0..SUMMARY_METRICS.len())
            .map(|m| {
                let values: Vec<f64> = ok.iter().filter_map(|r| metric(r, m)).collect();
                bootstrap_mean(
                    &values,
                    spec.bootstrap_resamples,
                    sub_seed(spec.seed, v as u64, m as u64),
                )
            })
            .collect();
        summary.push(SummaryRow {
            varied_value: value,
            n_instances: group.len(),
            n_converged: ok.len(),
            metrics,
        });
        for (j, rho) in crate::stability::rho_grid(spec.rho_grid).into_iter().enumerate() {
            let values: Vec<f64> = ok
                .iter()
                .filter_map(|r| r.quality_vs_rho_curve.iter().find(|(p, _)| *p == rho).map(|(_, q)| *q))
                .collect();
            if values.is_empty() {
                continue;
            }
            let seed = sub_seed(spec.seed, v as u64, (SUMMARY_METRICS.len() + j) as u64);
            quality_summary.push(QualitySummaryRow {
                varied_value: value,
                rho,
                total_quality: bootstrap_mean(&values, spec.bootstrap_resamples, seed),
            });
        }
    }
    Ok(SweepOutput {
        spec: spec.clone(),
        records,
        summary,
        quality_summary,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn csv_file(path: &Path) -> Result<csv::Writer<fs::File>> {
    let mut file = fs::File::create(path)?;
    writeln!(file, "# schema=1")?;
    Ok(csv::Writer::from_writer(file))
}

impl SweepOutput {
    /// Writes `raw.csv`, `summary.csv`, `quality_curve.csv` and
    /// `quality_summary.csv` into `dir`.
    pub fn write_csvs(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let param = self.spec.vary.name();
        let paths: Vec<PathBuf> = ["raw.csv", "summary.csv", "quality_curve.csv", "quality_summary.csv"]
            .iter()
            .map(|f| dir.join(f))
            .collect();

        let mut w = csv_file(&paths[0])?;
        let mut header = vec![
            "varied_param",
            "varied_value",
            "instance_index",
            "instance_seed",
            "converged",
        ];
        header.extend(SUMMARY_METRICS);
        w.write_record(&header)?;
        for r in &self.records {
            let mut row = vec![
                param.to_string(),
                fmt_f64(r.varied_value),
                r.instance_index.to_string(),
                r.instance_seed.to_string(),
                r.converged.to_string(),
            ];
            row.extend((0..SUMMARY_METRICS.len()).map(|m| fmt_opt(metric(r, m))));
            w.write_record(&row)?;
        }
        w.flush()?;

        let mut w = csv_file(&paths[1])?;
        let mut header: Vec<String> = ["varied_param", "varied_value", "n_instances", "n_converged"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        for m in SUMMARY_METRICS {
            for suffix in ["mean", "ci_low", "ci_high", "count"] {
                header.push(format!("{m}_{suffix}"));
            }
        }
        w.write_record(&header)?;
        for s in &self.summary {
            let mut row = vec![
                param.to_string(),
                fmt_f64(s.varied_value),
                s.n_instances.to_string(),
                s.n_converged.to_string(),
            ];
            for e in &s.metrics {
                row.extend([
                    fmt_f64(e.mean),
                    fmt_f64(e.ci_low),
                    fmt_f64(e.ci_high),
                    e.count.to_string(),
                ]);
            }
            w.write_record(&row)?;
        }
        w.flush()?;

        let mut w = csv_file(&paths[2])?;
        w.write_record(["varied_param", "varied_value", "instance_index", "rho", "total_quality"])?;
        for r in self.records.iter().filter(|r| r.converged) {
            for (rho, q) in &r.quality_vs_rho_curve {
                w.write_record([
                    param.to_string(),
                    fmt_f64(r.varied_value),
                    r.instance_index.to_string(),
                    fmt_f64(*rho),
                    fmt_f64(*q),
                ])?;
            }
        }
        w.flush()?;

        let mut w = csv_file(&paths[3])?;
        w.write_record([
            "varied_param",
            "varied_value",
            "rho",
            "total_quality_mean",
            "total_quality_ci_low",
            "total_quality_ci_high",
            "total_quality_count",
        ])?;
        for q in &self.quality_summary {
            let e = q.total_quality;
            w.write_record([
                param.to_string(),
                fmt_f64(q.varied_value),
                fmt_f64(q.rho),
                fmt_f64(e.mean),
                fmt_f64(e.ci_low),
                fmt_f64(e.ci_high),
                e.count.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(paths)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub expected: Option<f64>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleReport {
    pub btes_x_star: Vec<f64>,
    pub btes_utility: f64,
    pub btes_deviation_utility: f64,
    pub btes_fse: FseReport,
    pub proportional_fse: FseReport,
    pub wta_profile: Vec<f64>,
    pub wta_deviator: usize,
    pub wta_gain: f64,
    pub wta_tie_gain: f64,
    pub checks: Vec<Check>,
    pub all_passed: bool,
}

/// Two-creator instance on which the equal-shares rule has no FSE.
pub fn btes_counterexample_instance() -> GameInstance {
    let params = ModelParams {
        mu: 10.0,
        gamma: 1.0,
        alpha: 1.0,
        ..ModelParams::default()
    };
    GameInstance::power(params, &[0.1, 0.4], 2.0).expect("valid constants")
}

pub const COUNTEREXAMPLE_TOL: f64 = 1e-6;

/// Reproduces the instability of the equal-shares and winner-takes-all rules
/// and contrasts them with the proportional rule.
pub fn run_counterexamples() -> Result<CounterexampleReport> {
    let tol = COUNTEREXAMPLE_TOL;
    let search = SearchOptions::default();
    let mut checks = Vec::new();
    let mut expect = |name: &str, value: f64, expected: f64| {
        checks.push(Check {
            name: name.into(),
            value,
            expected: Some(expected),
            passed: (value - expected).abs() <= tol,
        })
    };

    let g = btes_counterexample_instance();
    let btes = AllocationRule::new(RuleKind::Btes, 1.0)?;
    let ese = solve_ese_btes(&g, 1.0, &EseOptions::default())?.require_converged()?;
    let x = ese.x_star.clone();
    let u1 = creator_utility(&g, &Profile::full_sharing(x.clone())?, &btes, 0)?;
    let u1_dev = creator_utility(&g, &Profile::new(x.clone(), vec![0.0, 1.0])?, &btes, 0)?;
    expect("btes_x1", x[0], 37.5);
    expect("btes_x2", x[1], 9.375);
    expect("btes_u1", u1, 164.0625);
    expect("btes_u1_deviation", u1_dev, 171.875);
    let btes_fse = check_fse(&g, &x, &btes, 1e-4, &search)?;

    let proportional = AllocationRule::proportional(1.0)?;
    let ese = solve_ese_foc(&g, 1.0, &EseOptions::default())?.require_converged()?;
    let proportional_fse = check_fse(&g, &ese.x_star, &proportional, 1e-4, &search)?;

    // winner-takes-all with distinct qualities: a non-winner withholds
    let wta = AllocationRule::new(RuleKind::Wta, 1.0)?;
    let g3 = GameInstance::power(g.params, &[0.1, 0.2, 0.4], 2.0)?;
    let wta_profile = solve_ese_foc(&g3, 1.0, &EseOptions::default())?
        .require_converged()?
        .x_star;
    let full = Profile::full_sharing(wta_profile.clone())?;
    let winner = (0..3).fold(0, |b, j| if wta_profile[j] > wta_profile[b] { j } else { b });
    let (mut wta_deviator, mut wta_gain) = (usize::MAX, f64::NEG_INFINITY);
    for j in (0..3).filter(|&j| j != winner) {
        let rivals = Rivals::of(&full, j);
        let gain = rivals.utility(&g3, &wta, wta_profile[j], 0.0) - rivals.utility(&g3, &wta, wta_profile[j], 1.0);
        if gain > wta_gain {
            wta_gain = gain;
            wta_deviator = j;
        }
    }

    // winner-takes-all with tied qualities: a small quality increase wins the pot
    let tied = Profile::full_sharing(vec![10.0; 3])?;
    let rivals = Rivals::of(&tied, 0);
    let wta_tie_gain = rivals.utility(&g3, &wta, 10.0 + 1e-6, 1.0) - rivals.utility(&g3, &wta, 10.0, 1.0);

    let mut flag = |name: &str, value: f64, passed: bool| {
        checks.push(Check {
            name: name.into(),
            value,
            expected: None,
            passed,
        })
    };
    flag("btes_not_fse", btes_fse.max_gain(), !btes_fse.is_fse);
    flag(
        "btes_gain_at_least_fixed_quality_gain",
        btes_fse.per_creator_gain[0],
        btes_fse.per_creator_gain[0] >= u1_dev - u1 - tol,
    );
    flag(
        "proportional_is_fse",
        proportional_fse.max_gain(),
        proportional_fse.is_fse,
    );
    flag("wta_non_winner_gains", wta_gain, wta_gain > 0.0);
    flag("wta_tie_perturbation_gains", wta_tie_gain, wta_tie_gain > 0.0);

    let all_passed = checks.iter().all(|c| c.passed);
    Ok(CounterexampleReport {
        btes_x_star: x,
        btes_utility: u1,
        btes_deviation_utility: u1_dev,
        btes_fse,
        proportional_fse,
        wta_profile,
        wta_deviator,
        wta_gain,
        wta_tie_gain,
        checks,
        all_passed,
    })
}
