//! The platform's choice of `rho`: grid search subject to full-sharing
//! stability, the theoretical accuracy constants, and the closed-form ratio
//! for power costs.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::equilibrium::{creator_x_max, BoundsLedger, DynamicsOptions, EseOptions, EseResult};
use crate::error::{Error, Result};
use crate::model::{creator_utility, platform_revenue, AllocationRule, CostModel, GameInstance, Profile, RuleKind};
use crate::search::SearchOptions;
use crate::stability::{check_fse, fmt_f64, rule_equilibrium, FseReport};

/// Largest grid accepted by [`optimize_rho`].
pub const MAX_GRID_POINTS: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Objective {
    #[default]
    PlatformRevenue,
    TotalQuality,
    CreatorWelfare,
    /// `(1 - lambda) U_P + lambda ||x||_1`
    Regularized {
        lambda: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    /// Grid resolution in `rho`.
    pub delta: f64,
    /// Stability tolerance passed to the FSE check.
    pub eta: f64,
    pub objective: Objective,
    /// Derive `delta = epsilon / A` and `eta = epsilon / 4` from the
    /// theoretical constants instead of using `delta` and `eta`.
    pub use_theoretical_constants: bool,
    pub epsilon: f64,
    /// After the grid scan, bisect the stability boundary next to the best
    /// grid point and run a golden-section search on the stable side.
    pub refine: bool,
    pub refine_tol: f64,
    pub search: SearchOptions,
    pub ese: EseOptions,
    pub dynamics: DynamicsOptions,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            delta: 0.01,
            eta: 1e-4 / 4.0,
            objective: Objective::PlatformRevenue,
            use_theoretical_constants: false,
            epsilon: 1e-4,
            refine: false,
            refine_tol: 1e-7,
            search: SearchOptions::default(),
            ese: EseOptions::default(),
            dynamics: DynamicsOptions::default(),
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(Error::invalid(
                "delta",
                format!("must lie in (0,1], got {}", self.delta),
            ));
        }
        if !(self.eta > 0.0) {
            return Err(Error::invalid("eta", format!("must be positive, got {}", self.eta)));
        }
        if !(self.refine_tol > 0.0) {
            return Err(Error::invalid(
                "refine_tol",
                format!("must be positive, got {}", self.refine_tol),
            ));
        }
        if let Objective::Regularized { lambda } = self.objective {
            if !(0.0..=1.0).contains(&lambda) {
                return Err(Error::invalid("lambda", format!("must lie in [0,1], got {lambda}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRecord {
    pub rho: f64,
    pub feasible: bool,
    /// `NaN` when the equilibrium solve failed.
    pub objective: f64,
    pub total_quality: f64,
    pub max_deviation_gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerResult {
    /// `false` when no grid point passed the stability check.
    pub feasible: bool,
    pub rho_hat: Option<f64>,
    pub objective_value: Option<f64>,
    pub ese_at_rho_hat: Option<EseResult>,
    pub fse_report: Option<FseReport>,
    /// `rho_hat` came from the refinement step rather than the grid.
    pub refined: bool,
    pub delta: f64,
    pub eta: f64,
    pub scan_trace: Vec<ScanRecord>,
}

impl OptimizerResult {
    pub fn write_trace_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# schema=1")?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["rho", "feasible", "objective", "total_quality", "max_deviation_gain"])?;
        for r in &self.scan_trace {
            w.write_record([
                fmt_f64(r.rho),
                r.feasible.to_string(),
                fmt_f64(r.objective),
                fmt_f64(r.total_quality),
                fmt_f64(r.max_deviation_gain),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Objective value at full sharing with qualities `x` and ratio `rho`.
pub fn evaluate_objective(instance: &GameInstance, x: &[f64], rho: f64, objective: Objective) -> Result<f64> {
    let profile = Profile::full_sharing(x.to_vec())?;
    let rule = AllocationRule::proportional(rho)?;
    let revenue = || platform_revenue(instance, &profile, &rule);
    Ok(match objective {
        Objective::PlatformRevenue => revenue()?,
        Objective::TotalQuality => profile.total_quality(),
        Objective::CreatorWelfare => {
            let mut total = 0.0;
            for i in 0..instance.n() {
                total += creator_utility(instance, &profile, &rule, i)?;
            }
            total
        }
        Objective::Regularized { lambda } => (1.0 - lambda) * revenue()? + lambda * profile.total_quality(),
    })
}

struct GridPoint {
    record: ScanRecord,
    ese: Option<EseResult>,
    report: Option<FseReport>,
}

fn evaluate_point(instance: &GameInstance, rho: f64, eta: f64, config: &OptimizerConfig) -> GridPoint {
    let outcome =
        rule_equilibrium(instance, RuleKind::Proportional, rho, &config.ese, &config.dynamics).and_then(|ese| {
            let rule = AllocationRule::proportional(rho)?;
            let report = check_fse(instance, &ese.x_star, &rule, eta, &config.search)?;
            let value = evaluate_objective(instance, &ese.x_star, rho, config.objective)?;
            Ok((ese, report, value))
        });
    match outcome {
        Ok((ese, report, value)) => GridPoint {
            record: ScanRecord {
                rho,
                feasible: report.is_fse,
                objective: value,
                total_quality: ese.total_quality(),
                max_deviation_gain: report.max_gain(),
            },
            ese: Some(ese),
            report: Some(report),
        },
        Err(e) => {
            log::warn!("rho = {rho}: {e}");
            GridPoint {
                record: ScanRecord {
                    rho,
                    feasible: false,
                    objective: f64::NAN,
                    total_quality: f64::NAN,
                    max_deviation_gain: f64::NAN,
                },
                ese: None,
                report: None,
            }
        }
    }
}

/// Scans `rho = t / ceil(1/delta)` for `t = 1..=ceil(1/delta)`, keeping the
/// best objective among stable points. Ties go to the smaller `rho`.
pub fn optimize_rho(instance: &GameInstance, config: &OptimizerConfig) -> Result<OptimizerResult> {
    config.validate()?;
    let (delta, eta) = if config.use_theoretical_constants {
        let constants = theoretical_constants(instance)?;
        (config.epsilon / constants.a, config.epsilon / 4.0)
    } else {
        (config.delta, config.eta)
    };
    let steps = (1.0 / delta).ceil();
    if steps > MAX_GRID_POINTS as f64 {
        return Err(Error::Unsupported(format!(
            "grid of {steps:e} points exceeds the limit of {MAX_GRID_POINTS}"
        )));
    }
    let steps = steps as usize;
    let points: Vec<GridPoint> = (1..=steps)
        .into_par_iter()
        .map(|t| evaluate_point(instance, (t as f64 / steps as f64).min(1.0), eta, config))
        .collect();

    let mut best: Option<usize> = None;
    for (k, p) in points.iter().enumerate() {
        if p.record.feasible && best.is_none_or(|b| p.record.objective > points[b].record.objective) {
            best = Some(k);
        }
    }
    let scan_trace: Vec<ScanRecord> = points.iter().map(|p| p.record.clone()).collect();
    let Some(k) = best else {
        return Ok(OptimizerResult {
            feasible: false,
            rho_hat: None,
            objective_value: None,
            ese_at_rho_hat: None,
            fse_report: None,
            refined: false,
            delta,
            eta,
            scan_trace,
        });
    };
    let mut chosen = points.into_iter().nth(k).expect("index from the same vector");
    let mut refined = false;
    if config.refine {
        let left = if k == 0 {
            (0.0, false)
        } else {
            (scan_trace[k - 1].rho, scan_trace[k - 1].feasible)
        };
        let right = scan_trace.get(k + 1).map_or(chosen.record.rho, |r| r.rho);
        if let Some(better) = refine_around(instance, eta, config, left, right, &chosen) {
            chosen = better;
            refined = true;
        }
    }
    Ok(OptimizerResult {
        feasible: true,
        rho_hat: Some(chosen.record.rho),
        objective_value: Some(chosen.record.objective),
        ese_at_rho_hat: chosen.ese,
        fse_report: chosen.report,
        refined,
        delta,
        eta,
        scan_trace,
    })
}

/// Local search around the best grid point `best`. `left` is the previous grid
/// point and whether it was stable; `right` the next grid point.
fn refine_around(
    instance: &GameInstance,
    eta: f64,
    config: &OptimizerConfig,
    left: (f64, bool),
    right: f64,
    best: &GridPoint,
) -> Option<GridPoint> {
    let eval = |rho: f64| evaluate_point(instance, rho, eta, config);
    let score = |p: &GridPoint| {
        if p.record.feasible {
            p.record.objective
        } else {
            f64::NEG_INFINITY
        }
    };
    let mut incumbent: Option<GridPoint> = None;
    let consider = |p: GridPoint, incumbent: &mut Option<GridPoint>| {
        let current = incumbent.as_ref().map_or(best.record.objective, score);
        if score(&p) > current {
            *incumbent = Some(p);
        }
    };

    let mut lo = left.0;
    if !left.1 {
        // smallest stable rho between the unstable neighbour and the best point
        let mut hi = best.record.rho;
        while hi - lo > config.refine_tol {
            let mid = 0.5 * (lo + hi);
            let p = eval(mid);
            if p.record.feasible {
                hi = mid;
                consider(p, &mut incumbent);
            } else {
                lo = mid;
            }
        }
        lo = hi;
    }

    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let (mut a, mut b) = (lo, right);
    let mut c = eval(b - INV_PHI * (b - a));
    let mut d = eval(a + INV_PHI * (b - a));
    while b - a > config.refine_tol {
        if score(&c) >= score(&d) {
            b = d.record.rho;
            let next = eval(b - INV_PHI * (b - a));
            consider(
                std::mem::replace(&mut d, std::mem::replace(&mut c, next)),
                &mut incumbent,
            );
        } else {
            a = c.record.rho;
            let next = eval(a + INV_PHI * (b - a));
            consider(
                std::mem::replace(&mut c, std::mem::replace(&mut d, next)),
                &mut incumbent,
            );
        }
    }
    consider(c, &mut incumbent);
    consider(d, &mut incumbent);
    incumbent
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoreticalConstants {
    pub a: f64,
    pub b: f64,
    /// Lipschitz constant of the equilibrium map in `rho`.
    pub l: f64,
    /// Lipschitz constant of a single creator's deviation utility.
    pub l0: f64,
    pub strong_convexity: f64,
    pub ledger: BoundsLedger,
}

/// Accuracy constants `(A, B)` from the generic quality bounds.
pub fn theoretical_constants(instance: &GameInstance) -> Result<TheoreticalConstants> {
    theoretical_constants_with(instance, &BoundsLedger::compute(instance)?)
}

/// Accuracy constants evaluated with a caller-supplied bounds ledger, for
/// instance one tightened with [`BoundsLedger::refined_by_profiles`].
pub fn theoretical_constants_with(instance: &GameInstance, ledger: &BoundsLedger) -> Result<TheoreticalConstants> {
    let mut modulus = f64::INFINITY;
    for (i, c) in instance.costs.iter().enumerate() {
        let m = c.strong_convexity_modulus();
        if !(m > 0.0) {
            return Err(Error::ZeroStrongConvexity(i));
        }
        modulus = modulus.min(m);
    }
    let p = &instance.params;
    let g = p.gamma;
    let l = ledger.b(0.0, 1.0 / modulus, 0.5, 1.0, 2.0 - g);
    let a = 4.0 * ledger.b(1.0, (5.0 + p.alpha) * 2f64.powf(6.0 - g), 0.5, 3.0, 3.0 - g) * (1.0 + l);
    let l0 = ledger.b(1.0, 5.0 * 2f64.powf(5.0 - g), 0.0, 2.0, 3.0 - g);
    let b = ledger.n as f64 * (1.0 + l0 * ledger.x_max_overall());
    Ok(TheoreticalConstants {
        a,
        b,
        l,
        l0,
        strong_convexity: modulus,
        ledger: ledger.clone(),
    })
}

/// Sets the strong-convexity modulus of every power cost that has none to the
/// smallest curvature on `(0, x_max_i]`.
pub fn with_power_strong_convexity(instance: &GameInstance) -> Result<GameInstance> {
    let mut out = instance.clone();
    for i in 0..out.n() {
        if out.costs[i].strong_convexity_modulus() > 0.0 {
            continue;
        }
        if let Some((a, theta)) = out.costs[i].power_params() {
            let x_max = creator_x_max(instance, i)?;
            let curvature = out.costs[i].second_derivative(x_max);
            out.costs[i] = CostModel::power(a, theta)?.with_strong_convexity(curvature);
        }
    }
    Ok(out)
}

/// `(alpha gamma + gamma - theta) / (alpha theta)` when `(alpha + 1) gamma > theta`.
pub fn closed_form_rho(instance: &GameInstance) -> Result<Option<f64>> {
    let theta = instance
        .common_power_exponent()
        .ok_or_else(|| Error::Unsupported("closed-form ratio needs power costs with one exponent".into()))?;
    let p = &instance.params;
    Ok(((p.alpha + 1.0) * p.gamma > theta).then(|| (p.alpha * p.gamma + p.gamma - theta) / (p.alpha * theta)))
}

/// `(2 alpha + 2)^(-gamma / (theta - gamma))`
pub fn approximation_factor(instance: &GameInstance) -> Result<f64> {
    let theta = instance
        .common_power_exponent()
        .ok_or_else(|| Error::Unsupported("approximation factor needs power costs with one exponent".into()))?;
    let p = &instance.params;
    Ok((2.0 * p.alpha + 2.0).powf(-p.gamma / (theta - p.gamma)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApproxReport {
    pub rho_fixed: f64,
    pub revenue: f64,
    pub is_fse: bool,
    pub max_gain: f64,
    pub opt_revenue: Option<f64>,
    pub opt_rho: Option<f64>,
    pub ratio: Option<f64>,
    pub required_factor: f64,
    pub holds: bool,
}

/// Compares the revenue at `rho_fixed` with the scanned optimum.
pub fn verify_approx_guarantee(
    instance: &GameInstance,
    rho_fixed: f64,
    config: &OptimizerConfig,
) -> Result<ApproxReport> {
    let required_factor = approximation_factor(instance)?;
    let config = OptimizerConfig {
        objective: Objective::PlatformRevenue,
        ..*config
    };
    let ese = rule_equilibrium(
        instance,
        RuleKind::Proportional,
        rho_fixed,
        &config.ese,
        &config.dynamics,
    )?;
    let rule = AllocationRule::proportional(rho_fixed)?;
    let report = check_fse(instance, &ese.x_star, &rule, config.eta, &config.search)?;
    let revenue = evaluate_objective(instance, &ese.x_star, rho_fixed, Objective::PlatformRevenue)?;
    let opt = optimize_rho(instance, &config)?;
    let ratio = opt.objective_value.map(|o| revenue / o);
    Ok(ApproxReport {
        rho_fixed,
        revenue,
        is_fse: report.is_fse,
        max_gain: report.max_gain(),
        opt_revenue: opt.objective_value,
        opt_rho: opt.rho_hat,
        ratio,
        required_factor,
        holds: report.is_fse && ratio.is_some_and(|r| r >= required_factor),
    })
}
