//! Full-sharing stability: the epsilon-FSE check, the sufficient threshold
//! condition, and the scan for the smallest stabilizing `rho`.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::best_response::{deviation_gain, DeviationResult};
use crate::equilibrium::{
    creator_x_max, solve_ese_btes, solve_ese_dynamics_beta, solve_ese_foc, DynamicsOptions, EseOptions, EseResult,
};
use crate::error::{Error, Result};
use crate::model::{AllocationRule, GameInstance, RuleKind};
use crate::search::SearchOptions;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FseReport {
    pub is_fse: bool,
    pub epsilon: f64,
    pub per_creator_gain: Vec<f64>,
    pub worst_creator: usize,
    pub worst_deviation: DeviationResult,
}

impl FseReport {
    pub fn max_gain(&self) -> f64 {
        self.per_creator_gain[self.worst_creator]
    }
}

/// Decides whether full sharing at qualities `x` is an `epsilon`-FSE under
/// `rule`. Both the withholding (`s = 0`) and the sharing (`s = 1`) deviation
/// branches are searched for every creator.
pub fn check_fse(
    instance: &GameInstance,
    x: &[f64],
    rule: &AllocationRule,
    epsilon: f64,
    opts: &SearchOptions,
) -> Result<FseReport> {
    if !(epsilon >= 0.0) {
        return Err(Error::invalid(
            "epsilon",
            format!("must be non-negative, got {epsilon}"),
        ));
    }
    let deviations = (0..instance.n())
        .into_par_iter()
        .map(|i| deviation_gain(instance, x, rule, i, opts))
        .collect::<Result<Vec<_>>>()?;
    let mut worst = 0;
    for (i, d) in deviations.iter().enumerate() {
        if d.gain > deviations[worst].gain {
            worst = i;
        }
    }
    let per_creator_gain: Vec<f64> = deviations.iter().map(|d| d.gain).collect();
    Ok(FseReport {
        is_fse: per_creator_gain[worst] <= epsilon,
        epsilon,
        per_creator_gain,
        worst_creator: worst,
        worst_deviation: deviations[worst],
    })
}

/// `rho > max_i x_max_i / (x_max_i + (1 + alpha)(x0 + sum_{j != i} x_j))`.
/// A `true` result guarantees stability; `false` is inconclusive.
pub fn check_fse_sufficient_condition(instance: &GameInstance, rho: f64, ese: &EseResult) -> Result<bool> {
    if !instance.params.is_linear_ai() {
        return Err(Error::Unsupported("sufficient condition needs beta_ai = 1".into()));
    }
    if ese.x_star.len() != instance.n() {
        return Err(Error::DimensionMismatch {
            expected: instance.n(),
            got: ese.x_star.len(),
        });
    }
    let p = &instance.params;
    let total = p.prior_data + ese.total_quality();
    let mut worst: f64 = 0.0;
    for i in 0..instance.n() {
        let x_max = creator_x_max(instance, i)?;
        let others = total - ese.x_star[i];
        worst = worst.max(x_max / (x_max + (1.0 + p.alpha) * others));
    }
    Ok(rho > worst)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanOptions {
    pub rule: RuleKind,
    /// Bisect between the last unstable and first stable grid point.
    pub refine: bool,
    pub refine_tol: f64,
    pub search: SearchOptions,
    pub ese: EseOptions,
    pub dynamics: DynamicsOptions,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self {
            rule: RuleKind::Proportional,
            refine: false,
            refine_tol: 1e-4,
            search: SearchOptions::default(),
            ese: EseOptions::default(),
            dynamics: DynamicsOptions::default(),
        }
    }
}

/// Full-sharing equilibrium used as the stability candidate for `kind`.
pub fn rule_equilibrium(
    instance: &GameInstance,
    kind: RuleKind,
    rho: f64,
    ese: &EseOptions,
    dynamics: &DynamicsOptions,
) -> Result<EseResult> {
    let result = match kind {
        RuleKind::Proportional if instance.params.is_linear_ai() => solve_ese_foc(instance, rho, ese)?,
        RuleKind::Proportional => solve_ese_dynamics_beta(instance, rho, dynamics)?,
        RuleKind::Btes => solve_ese_btes(instance, rho, ese)?,
        RuleKind::Wta => return Err(Error::Unsupported("no equilibrium solver for the WTA rule".into())),
    };
    result.require_converged()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhoScanRow {
    pub rho: f64,
    pub is_fse: bool,
    /// `NaN` when the equilibrium solve failed.
    pub max_gain: f64,
    pub ese_total_quality: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhoScan {
    pub min_stable_rho: Option<f64>,
    pub rows: Vec<RhoScanRow>,
}

impl RhoScan {
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# schema=1")?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["rho", "is_fse", "max_gain", "ese_total_quality"])?;
        for r in &self.rows {
            w.write_record([
                fmt_f64(r.rho),
                r.is_fse.to_string(),
                fmt_f64(r.max_gain),
                fmt_f64(r.ese_total_quality),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Shortest round-trip decimal form; empty for non-finite values.
pub(crate) fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        String::new()
    }
}

fn evaluate_rho(instance: &GameInstance, rho: f64, epsilon: f64, opts: &ScanOptions) -> RhoScanRow {
    let outcome = rule_equilibrium(instance, opts.rule, rho, &opts.ese, &opts.dynamics).and_then(|ese| {
        let rule = AllocationRule::new(opts.rule, rho)?;
        let report = check_fse(instance, &ese.x_star, &rule, epsilon, &opts.search)?;
        Ok((ese, report))
    });
    match outcome {
        Ok((ese, report)) => RhoScanRow {
            rho,
            is_fse: report.is_fse,
            max_gain: report.max_gain(),
            ese_total_quality: ese.total_quality(),
            error: None,
        },
        Err(e) => {
            log::warn!("rho = {rho}: {e}");
            RhoScanRow {
                rho,
                is_fse: false,
                max_gain: f64::NAN,
                ese_total_quality: f64::NAN,
                error: Some(e.to_string()),
            }
        }
    }
}

/// Inclusive grid `{0, 1/(k-1), ..., 1}`.
pub fn rho_grid(k: usize) -> Vec<f64> {
    (0..k).map(|j| j as f64 / (k - 1) as f64).collect()
}

/// Smallest grid `rho` whose full-sharing equilibrium is an `epsilon`-FSE.
pub fn min_stable_rho(instance: &GameInstance, grid_size: usize, epsilon: f64, opts: &ScanOptions) -> Result<RhoScan> {
    if grid_size < 2 {
        return Err(Error::invalid(
            "rho_grid",
            format!("need at least 2 points, got {grid_size}"),
        ));
    }
    let rows: Vec<RhoScanRow> = rho_grid(grid_size)
        .into_par_iter()
        .map(|rho| evaluate_rho(instance, rho, epsilon, opts))
        .collect();
    let first = rows.iter().position(|r| r.is_fse);
    let mut min_stable_rho = first.map(|k| rows[k].rho);
    if let (true, Some(k)) = (opts.refine, first) {
        if k > 0 {
            let (mut lo, mut hi) = (rows[k - 1].rho, rows[k].rho);
            while hi - lo > opts.refine_tol {
                let mid = 0.5 * (lo + hi);
                if evaluate_rho(instance, mid, epsilon, opts).is_fse {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            min_stable_rho = Some(hi);
        }
    }
    Ok(RhoScan { min_stable_rho, rows })
}
