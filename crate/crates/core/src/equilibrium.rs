//! Enforced-sharing equilibrium (every creator shares fully, only qualities are
//! chosen): FOC root finding, mirror descent, best-response dynamics, the
//! homogeneous closed form and the rational quality bounds.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CostModel, CostShape, GameInstance, Profile, Rivals};
use crate::search::{bisect, maximize_on_interval, SearchOptions};

/// Doublings allowed when bracketing the root of `c(z) = mu z^gamma`.
pub const BRACKET_DOUBLINGS: usize = 200;

/// Floor applied to `gamma` in the ESE lower bound.
pub const GAMMA_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EseMethod {
    FocRoot,
    Mamd,
    BestResponseDynamics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EseResult {
    pub x_star: Vec<f64>,
    pub residual: f64,
    pub method: EseMethod,
    pub iterations: usize,
    pub converged: bool,
}

impl EseResult {
    pub fn total_quality(&self) -> f64 {
        self.x_star.iter().sum()
    }

    /// Errors unless the solver reported convergence.
    pub fn require_converged(self) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::NonConvergence {
                method: match self.method {
                    EseMethod::FocRoot => "foc-root",
                    EseMethod::Mamd => "mamd",
                    EseMethod::BestResponseDynamics => "best-response-dynamics",
                },
                iterations: self.iterations,
                residual: self.residual,
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EseOptions {
    /// Maximum absolute FOC residual.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for EseOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 10_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MamdOptions {
    pub steps: usize,
    /// Initial step. Defaults to half the inverse of the largest cost curvature
    /// on the rational quality range.
    pub eta0: Option<f64>,
    /// Steps after which the step size has halved. Defaults to `steps`.
    pub tau_half: Option<f64>,
    pub tol: f64,
    pub max_restarts: usize,
}

impl Default for MamdOptions {
    fn default() -> Self {
        Self {
            steps: 100_000,
            eta0: None,
            tau_half: None,
            tol: 1e-6,
            max_restarts: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DynamicsOptions {
    pub damping: f64,
    /// Stop once no coordinate moves by more than this in a sweep.
    pub tol: f64,
    pub max_sweeps: usize,
    pub search: SearchOptions,
}

impl Default for DynamicsOptions {
    fn default() -> Self {
        Self {
            damping: 0.5,
            tol: 1e-8,
            max_sweeps: 10_000,
            search: SearchOptions::default(),
        }
    }
}

/// Root of `c(z) = mu z^gamma`, the largest quality any rational creator plays.
pub fn compute_x_max(cost: &CostModel, mu: f64, gamma: f64) -> Result<f64> {
    match cost.shape() {
        CostShape::Power { coefficient, exponent } => Ok((mu / coefficient).powf(1.0 / (exponent - gamma))),
        CostShape::Custom(_) => x_max_by_bisection(cost, mu, gamma),
    }
}

/// Bisection on `c(z) - mu z^gamma` with an expanding bracket.
pub fn x_max_by_bisection(cost: &CostModel, mu: f64, gamma: f64) -> Result<f64> {
    let g = |z: f64| cost.value(z) - mu * z.powf(gamma);
    let (mut lo, mut hi) = (0.5, 1.0);
    let mut steps = 0;
    while g(hi) <= 0.0 {
        if steps == BRACKET_DOUBLINGS || !hi.is_finite() {
            return Err(Error::BracketExpansion(BRACKET_DOUBLINGS));
        }
        lo = hi;
        hi *= 2.0;
        steps += 1;
    }
    steps = 0;
    while g(lo) > 0.0 {
        if steps == BRACKET_DOUBLINGS {
            return Err(Error::BracketExpansion(BRACKET_DOUBLINGS));
        }
        hi = lo;
        lo *= 0.5;
        steps += 1;
    }
    Ok(bisect(g, lo, hi, 1e-12 * hi, 2000))
}

/// Rational quality bound of creator `i` at the effective baseline traffic.
pub fn creator_x_max(instance: &GameInstance, i: usize) -> Result<f64> {
    instance.check_index(i)?;
    let p = &instance.params;
    compute_x_max(&instance.costs[i], p.effective_mu(), p.gamma)
}

fn all_x_max(instance: &GameInstance) -> Result<Vec<f64>> {
    (0..instance.n()).map(|i| creator_x_max(instance, i)).collect()
}

/// Lower bound on creator `i`'s ESE quality valid for every `rho`.
pub fn compute_x_min(instance: &GameInstance, i: usize) -> Result<f64> {
    instance.check_index(i)?;
    let x_ub: f64 = all_x_max(instance)?.iter().sum::<f64>() + instance.params.prior_data;
    Ok(x_min_from(instance, i, x_ub))
}

fn x_min_from(instance: &GameInstance, i: usize, x_ub: f64) -> f64 {
    let p = &instance.params;
    let gamma = p.gamma.max(GAMMA_FLOOR);
    let target = p.effective_mu() / (1.0 + p.alpha) * x_ub.powf(p.gamma - 1.0) * gamma;
    instance.costs[i].inverse_derivative(target)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsLedger {
    pub n: usize,
    /// Effective baseline traffic used by the bounds.
    pub mu: f64,
    pub x_max: Vec<f64>,
    pub x_min: Vec<f64>,
    pub x_lb: f64,
    pub x_ub: f64,
    pub y_lb: f64,
    pub y_ub: f64,
    /// `max_i c_i'(x_max_i)`
    pub m_cprime: f64,
}

impl BoundsLedger {
    pub fn compute(instance: &GameInstance) -> Result<Self> {
        let x_max = all_x_max(instance)?;
        let x_ub_pool = x_max.iter().sum::<f64>() + instance.params.prior_data;
        let x_min: Vec<f64> = (0..instance.n()).map(|i| x_min_from(instance, i, x_ub_pool)).collect();
        let x_lb: f64 = x_min.iter().sum();
        let x_ub: f64 = x_max.iter().sum();
        let y_lb = x_lb - x_min.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let y_ub = x_ub - x_max.iter().cloned().fold(f64::INFINITY, f64::min);
        let m_cprime = instance
            .costs
            .iter()
            .zip(&x_max)
            .map(|(c, &x)| c.derivative(x))
            .fold(0.0, f64::max);
        Ok(Self {
            n: instance.n(),
            mu: instance.params.effective_mu(),
            x_max,
            x_min,
            x_lb,
            x_ub,
            y_lb,
            y_ub,
            m_cprime,
        })
    }

    /// Replaces the aggregate bounds with the range spanned by the given
    /// equilibrium profiles, which is much tighter than the generic bounds.
    pub fn refined_by_profiles(&self, profiles: &[&[f64]]) -> Self {
        let mut out = self.clone();
        if profiles.is_empty() {
            return out;
        }
        let (mut x_lb, mut x_ub) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut y_lb, mut y_ub) = (f64::INFINITY, f64::NEG_INFINITY);
        for x in profiles {
            let total: f64 = x.iter().sum();
            x_lb = x_lb.min(total);
            x_ub = x_ub.max(total);
            for &xi in x.iter() {
                y_lb = y_lb.min(total - xi);
                y_ub = y_ub.max(total - xi);
            }
        }
        out.x_lb = x_lb;
        out.x_ub = x_ub;
        out.y_lb = y_lb;
        out.y_ub = y_ub;
        out
    }

    pub fn x_max_overall(&self) -> f64 {
        self.x_max.iter().cloned().fold(0.0, f64::max)
    }

    /// `q M_c' + mu u n^v (1 + x_max + Y_UB)^w / Y_LB^t`
    pub fn b(&self, q: f64, u: f64, v: f64, w: f64, t: f64) -> f64 {
        q * self.m_cprime
            + self.mu * u * (self.n as f64).powf(v) * (1.0 + self.x_max_overall() + self.y_ub).powf(w)
                / self.y_lb.powf(t)
    }
}

/// FOC system of the full-sharing game:
/// `F_i = m H^(g-2) (H (1 + pot) - (1-g) x_i) - c_i'(x_i)` with `H = x0 + sum x`.
/// The proportional rule has `pot = 0`; the equal-shares rule adds a pot term.
struct FocSystem<'a> {
    instance: &'a GameInstance,
    m: f64,
    pot: f64,
}

impl<'a> FocSystem<'a> {
    fn proportional(instance: &'a GameInstance, rho: f64) -> Self {
        let p = &instance.params;
        Self {
            instance,
            m: p.effective_mu() * (1.0 + p.alpha * rho) / (1.0 + p.alpha),
            pot: 0.0,
        }
    }

    fn equal_shares(instance: &'a GameInstance, rho: f64) -> Self {
        let p = &instance.params;
        Self {
            instance,
            m: p.effective_mu() / (1.0 + p.alpha),
            pot: rho * p.alpha * p.gamma / instance.n() as f64,
        }
    }

    fn gamma(&self) -> f64 {
        self.instance.params.gamma
    }

    fn pool(&self, x: &[f64]) -> f64 {
        self.instance.params.prior_data + x.iter().sum::<f64>()
    }

    fn component(&self, h: f64, xi: f64, i: usize) -> f64 {
        let g = self.gamma();
        self.m * h.powf(g - 2.0) * (h * (1.0 + self.pot) - (1.0 - g) * xi) - self.instance.costs[i].derivative(xi)
    }

    /// Fills `out` with `F(x)` and returns its max norm.
    fn residual(&self, x: &[f64], out: &mut [f64]) -> f64 {
        let h = self.pool(x);
        let mut worst: f64 = 0.0;
        for (i, (o, &xi)) in out.iter_mut().zip(x).enumerate() {
            *o = self.component(h, xi, i);
            worst = worst.max(o.abs());
        }
        if worst.is_nan() {
            f64::INFINITY
        } else {
            worst
        }
    }

    /// Newton direction from `J = diag(d) + u 1^T` via Sherman-Morrison.
    fn newton_direction(&self, x: &[f64], f: &[f64]) -> Vec<f64> {
        let g = self.gamma();
        let h = self.pool(x);
        let h2 = h.powf(g - 2.0);
        let h3 = h.powf(g - 3.0);
        let n = x.len();
        let mut a = vec![0.0; n];
        let mut b = vec![0.0; n];
        for i in 0..n {
            let gi = h * (1.0 + self.pot) - (1.0 - g) * x[i];
            let u = self.m * ((g - 2.0) * h3 * gi + h2 * (1.0 + self.pot));
            let d = -self.m * (1.0 - g) * h2 - self.instance.costs[i].second_derivative(x[i]);
            a[i] = -f[i] / d;
            b[i] = u / d;
        }
        let sa: f64 = a.iter().sum();
        let sb: f64 = b.iter().sum();
        let scale = sa / (1.0 + sb);
        a.iter().zip(&b).map(|(ai, bi)| ai - bi * scale).collect()
    }

    /// Exact coordinate solve of `F_i = 0` in `x_i`, others fixed. `F_i` is
    /// strictly decreasing in `x_i`.
    fn coordinate_root(&self, x: &[f64], i: usize, upper: f64) -> f64 {
        let others = self.pool(x) - x[i];
        let f = |z: f64| self.component(others + z, z, i);
        let mut hi = upper.max(x[i]).max(f64::MIN_POSITIVE);
        let mut k = 0;
        while f(hi) > 0.0 && k < BRACKET_DOUBLINGS {
            hi *= 2.0;
            k += 1;
        }
        let mut lo = 0.5 * hi;
        k = 0;
        while f(lo) < 0.0 && k < 1100 {
            hi = lo;
            lo *= 0.5;
            k += 1;
        }
        bisect(f, lo, hi, 0.0, 200)
    }
}

fn newton_solve(sys: &FocSystem, start: Vec<f64>, x_max: &[f64], opts: &EseOptions) -> EseResult {
    let n = start.len();
    let mut x = start;
    let mut f = vec![0.0; n];
    let mut trial_f = vec![0.0; n];
    let mut res = sys.residual(&x, &mut f);
    let mut iterations = 0;
    let l2 = |v: &[f64]| v.iter().map(|t| t * t).sum::<f64>().sqrt();

    while iterations < opts.max_iter && res > opts.tol {
        iterations += 1;
        let dir = sys.newton_direction(&x, &f);
        let mut t: f64 = 1.0;
        for (xi, di) in x.iter().zip(&dir) {
            if *di < 0.0 {
                t = t.min(0.9 * xi / -di);
            }
        }
        let base = l2(&f);
        let mut accepted = false;
        if dir.iter().all(|d| d.is_finite()) {
            for _ in 0..60 {
                let trial: Vec<f64> = x.iter().zip(&dir).map(|(xi, di)| xi + t * di).collect();
                let trial_res = sys.residual(&trial, &mut trial_f);
                if trial_res.is_finite() && l2(&trial_f) <= (1.0 - 1e-4 * t) * base {
                    x = trial;
                    std::mem::swap(&mut f, &mut trial_f);
                    res = trial_res;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
        }
        if !accepted {
            // Gauss-Seidel sweep of exact coordinate solves.
            for i in 0..n {
                x[i] = sys.coordinate_root(&x, i, x_max[i]);
            }
            let new_res = sys.residual(&x, &mut f);
            if new_res >= res && res <= opts.tol * 1e3 {
                res = new_res;
                break;
            }
            res = new_res;
        }
    }
    log::debug!("foc solve: {iterations} iterations, residual {res:e}");
    EseResult {
        x_star: x,
        residual: res,
        method: EseMethod::FocRoot,
        iterations,
        converged: res <= opts.tol,
    }
}

fn require_linear(instance: &GameInstance) -> Result<()> {
    if instance.params.is_linear_ai() {
        Ok(())
    } else {
        Err(Error::Unsupported(
            "FOC and mirror-descent solvers need beta_ai = 1; use solve_ese_dynamics_beta".into(),
        ))
    }
}

fn check_rho(rho: f64) -> Result<()> {
    if (0.0..=1.0).contains(&rho) {
        Ok(())
    } else {
        Err(Error::invalid("rho", format!("must lie in [0,1], got {rho}")))
    }
}

fn half_x_max(instance: &GameInstance) -> Result<(Vec<f64>, Vec<f64>)> {
    let x_max = all_x_max(instance)?;
    let start = x_max.iter().map(|v| 0.5 * v).collect();
    Ok((x_max, start))
}

/// ESE under the proportional rule by damped Newton on the FOC system,
/// started at `x_max / 2`, with Gauss-Seidel sweeps when a Newton step fails.
pub fn solve_ese_foc(instance: &GameInstance, rho: f64, opts: &EseOptions) -> Result<EseResult> {
    require_linear(instance)?;
    check_rho(rho)?;
    let (x_max, start) = half_x_max(instance)?;
    Ok(newton_solve(
        &FocSystem::proportional(instance, rho),
        start,
        &x_max,
        opts,
    ))
}

/// Full-sharing equilibrium under the binary-threshold equal-shares rule.
pub fn solve_ese_btes(instance: &GameInstance, rho: f64, opts: &EseOptions) -> Result<EseResult> {
    require_linear(instance)?;
    check_rho(rho)?;
    let (x_max, start) = half_x_max(instance)?;
    Ok(newton_solve(
        &FocSystem::equal_shares(instance, rho),
        start,
        &x_max,
        opts,
    ))
}

/// Pseudo-gradient `v_i = dU_i/dx_i` of the full-sharing game under the
/// proportional rule.
pub fn mamd_gradient(instance: &GameInstance, rho: f64, x: &[f64]) -> Result<Vec<f64>> {
    require_linear(instance)?;
    if x.len() != instance.n() {
        return Err(Error::DimensionMismatch {
            expected: instance.n(),
            got: x.len(),
        });
    }
    let sys = FocSystem::proportional(instance, rho);
    let mut v = vec![0.0; x.len()];
    sys.residual(x, &mut v);
    Ok(v)
}

fn default_eta0(instance: &GameInstance) -> Result<f64> {
    let ledger = BoundsLedger::compute(instance)?;
    let curvature = instance
        .costs
        .iter()
        .enumerate()
        .map(|(i, c)| {
            c.second_derivative(ledger.x_min[i])
                .max(c.second_derivative(ledger.x_max[i]))
        })
        .fold(0.0, f64::max);
    Ok(0.5 / curvature)
}

/// Multi-agent mirror descent (projected gradient ascent in the Euclidean
/// geometry) with harmonic step decay. Returns the last iterate.
pub fn solve_ese_mamd(instance: &GameInstance, rho: f64, opts: &MamdOptions) -> Result<EseResult> {
    require_linear(instance)?;
    check_rho(rho)?;
    let (_, start) = half_x_max(instance)?;
    let sys = FocSystem::proportional(instance, rho);
    let mut eta0 = match opts.eta0 {
        Some(e) => e,
        None => default_eta0(instance)?,
    };
    let tau = opts.tau_half.unwrap_or(opts.steps as f64).max(1.0);
    let n = instance.n();
    let mut v = vec![0.0; n];
    let mut total_steps = 0;
    // smallest initial step seen to collapse or blow up
    let mut unstable_eta = f64::INFINITY;
    let mut best: Option<EseResult> = None;

    for restart in 0..=opts.max_restarts {
        let mut x = start.clone();
        let mut failed = false;
        for t in 0..opts.steps {
            sys.residual(&x, &mut v);
            let eta = eta0 / (1.0 + t as f64 / tau);
            for (xi, vi) in x.iter_mut().zip(&v) {
                *xi = (*xi + eta * vi).max(0.0);
            }
            total_steps += 1;
            let collapsed = x.iter().all(|&xi| xi == 0.0);
            if collapsed || x.iter().any(|xi| !xi.is_finite()) {
                failed = true;
                break;
            }
        }
        let next = if failed {
            unstable_eta = unstable_eta.min(eta0);
            eta0 * 0.5
        } else {
            let residual = sys.residual(&x, &mut v);
            if residual <= opts.tol {
                return Ok(EseResult {
                    x_star: x,
                    residual,
                    method: EseMethod::Mamd,
                    iterations: total_steps,
                    converged: true,
                });
            }
            if best.as_ref().is_none_or(|b| residual < b.residual) {
                best = Some(EseResult {
                    x_star: x,
                    residual,
                    method: EseMethod::Mamd,
                    iterations: 0,
                    converged: false,
                });
            }
            // too slow: take larger steps, staying below any step known to fail
            if eta0 * 4.0 < unstable_eta {
                eta0 * 4.0
            } else {
                (eta0 * unstable_eta).sqrt()
            }
        };
        log::debug!("mirror descent restart {} with eta0 {:e}", restart + 1, next);
        eta0 = next;
    }
    let mut result = best.unwrap_or(EseResult {
        x_star: start,
        residual: f64::INFINITY,
        method: EseMethod::Mamd,
        iterations: 0,
        converged: false,
    });
    result.iterations = total_steps;
    Ok(result)
}

/// Best response at `s = 1` under the proportional rule: global search, then
/// bisection on the analytic marginal utility to remove the flat-top error of
/// the golden-section step.
fn sharing_best_response(
    instance: &GameInstance,
    rivals: &Rivals,
    rho: f64,
    upper: f64,
    search: &SearchOptions,
) -> f64 {
    let rule = crate::model::AllocationRule {
        kind: crate::model::RuleKind::Proportional,
        rho,
    };
    let m = maximize_on_interval(|z| rivals.utility(instance, &rule, z, 1.0), 0.0, upper, search);
    if m.x <= 0.0 {
        return m.x;
    }
    let lo = m.x * (1.0 - 1e-4);
    let hi = (m.x * (1.0 + 1e-4)).min(upper);
    let du = |z: f64| rivals.marginal_utility_sharing(instance, rho, z);
    if du(lo) > 0.0 && du(hi) < 0.0 {
        bisect(du, lo, hi, 0.0, 200)
    } else {
        m.x
    }
}

/// Damped sequential best-response dynamics of the full-sharing game. Works
/// for any data-returns exponent; the result is an approximate ESE.
pub fn solve_ese_dynamics_beta(instance: &GameInstance, rho: f64, opts: &DynamicsOptions) -> Result<EseResult> {
    check_rho(rho)?;
    if !(opts.damping > 0.0 && opts.damping <= 1.0) {
        return Err(Error::invalid(
            "damping",
            format!("must lie in (0,1], got {}", opts.damping),
        ));
    }
    let (x_max, start) = half_x_max(instance)?;
    let mut profile = Profile::full_sharing(start)?;
    let lambda = opts.damping;
    let mut change = f64::INFINITY;
    let mut sweeps = 0;
    while sweeps < opts.max_sweeps {
        sweeps += 1;
        change = 0.0;
        for (i, &upper) in x_max.iter().enumerate() {
            let rivals = Rivals::of(&profile, i);
            let br = sharing_best_response(instance, &rivals, rho, upper, &opts.search);
            let next = (1.0 - lambda) * profile.x[i] + lambda * br;
            change = f64::max(change, (next - profile.x[i]).abs());
            profile.x[i] = next;
        }
        if change < opts.tol {
            break;
        }
    }
    Ok(EseResult {
        x_star: profile.x,
        residual: change,
        method: EseMethod::BestResponseDynamics,
        iterations: sweeps,
        converged: change < opts.tol,
    })
}

/// Per-creator ESE quality of a homogeneous power-cost instance:
/// `[mu (1 + alpha rho)(n - 1 + gamma) n^(gamma-2) / ((1 + alpha) a theta)]^(1/(theta-gamma))`.
pub fn homogeneous_closed_form(instance: &GameInstance, rho: f64) -> Result<f64> {
    let (a, theta) = instance.homogeneous_power().ok_or(Error::Heterogeneous)?;
    require_linear(instance)?;
    check_rho(rho)?;
    if instance.params.prior_data != 0.0 {
        return Err(Error::Unsupported("closed form assumes no prior data".into()));
    }
    let p = &instance.params;
    let n = instance.n() as f64;
    let rhs = p.effective_mu() * (1.0 + p.alpha * rho) * (n - 1.0 + p.gamma) * n.powf(p.gamma - 2.0)
        / ((1.0 + p.alpha) * a * theta);
    Ok(rhs.powf(1.0 / (theta - p.gamma)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelParams, TrafficMode};
    use approx::assert_relative_eq;

    fn inst(mu: f64, gamma: f64, alpha: f64, a: &[f64], theta: f64) -> GameInstance {
        GameInstance::power(ModelParams::new(mu, gamma, alpha).unwrap(), a, theta).unwrap()
    }

    #[test]
    fn x_max_examples() {
        let c = CostModel::power(0.1, 2.0).unwrap();
        assert_relative_eq!(compute_x_max(&c, 10.0, 1.0).unwrap(), 100.0, max_relative = 1e-14);
        let c = CostModel::power(7.0, 2.0).unwrap();
        assert_relative_eq!(compute_x_max(&c, 7.0, 1.0).unwrap(), 1.0);
        let c = CostModel::power(0.1, 2.0).unwrap();
        assert_relative_eq!(x_max_by_bisection(&c, 10.0, 1.0).unwrap(), 100.0, max_relative = 1e-10);
    }

    #[test]
    fn x_min_closed_form_matches_bisection() {
        let g = inst(100.0, 0.8, 0.5, &[1.0, 4.0, 9.0], 1.5);
        let x_ub: f64 = (0..3).map(|i| creator_x_max(&g, i).unwrap()).sum();
        for i in 0..3 {
            let target = 100.0 / 1.5 * x_ub.powf(-0.2) * 0.8;
            let by_bisect = bisect(|z| g.costs[i].derivative(z) - target, 0.0, 1e6, 0.0, 400);
            assert_relative_eq!(compute_x_min(&g, i).unwrap(), by_bisect, max_relative = 1e-10);
        }
    }

    #[test]
    fn hand_foc_example() {
        let g = inst(1.0, 1.0, 1.0, &[1.0, 1.0], 2.0);
        let r = solve_ese_foc(&g, 1.0, &EseOptions::default()).unwrap();
        assert!(r.converged);
        assert_relative_eq!(r.x_star[0], 0.5, epsilon = 1e-12);
        assert_relative_eq!(r.x_star[1], 0.5, epsilon = 1e-12);
        assert_relative_eq!(homogeneous_closed_form(&g, 1.0).unwrap(), 0.5, epsilon = 1e-14);
    }

    #[test]
    fn btes_equilibrium() {
        let g = inst(10.0, 1.0, 1.0, &[0.1, 0.4], 2.0);
        let r = solve_ese_btes(&g, 1.0, &EseOptions::default()).unwrap();
        assert!(r.converged);
        assert_relative_eq!(r.x_star[0], 37.5, epsilon = 1e-9);
        assert_relative_eq!(r.x_star[1], 9.375, epsilon = 1e-9);
    }

    #[test]
    fn newton_handles_wide_scale_gap() {
        // x_max is around 1e10 while the equilibrium sits near 1e6
        let a: Vec<f64> = (0..100).map(|k| 1.0 + 9.0 * k as f64 / 99.0).collect();
        let g = inst(1000.0, 0.9, 1.0, &a, 1.2);
        let r = solve_ese_foc(&g, 0.5, &EseOptions::default()).unwrap();
        assert!(r.converged, "{r:?}");
        assert!(r.x_star.iter().all(|&x| x > 0.0));
    }

    #[test]
    fn zero_elasticity_and_prior_data() {
        let g = inst(10.0, 0.0, 1.0, &[1.0, 2.0, 3.0], 1.7);
        let r = solve_ese_foc(&g, 0.3, &EseOptions::default()).unwrap();
        assert!(r.converged);
        let mut with_prior = inst(10.0, 0.6, 1.0, &[1.0, 2.0, 3.0], 1.7);
        with_prior.params.prior_data = 2.0;
        let r = solve_ese_foc(&with_prior, 0.3, &EseOptions::default()).unwrap();
        assert!(r.converged);
    }

    #[test]
    fn human_plus_ai_rescales_mu() {
        let mut g = inst(10.0, 0.7, 0.5, &[1.0, 2.0, 3.0], 1.5);
        g.params.traffic_mode = TrafficMode::HumanPlusAi;
        let mut h = g.clone();
        h.params.traffic_mode = TrafficMode::HumanOnly;
        h.params.mu = 10.0 * 1.5f64.powf(0.7);
        let a = solve_ese_foc(&g, 0.4, &EseOptions::default()).unwrap();
        let b = solve_ese_foc(&h, 0.4, &EseOptions::default()).unwrap();
        for (x, y) in a.x_star.iter().zip(&b.x_star) {
            assert_relative_eq!(x, y, max_relative = 1e-10);
        }
    }

    #[test]
    fn mamd_hand_example() {
        let g = inst(1.0, 1.0, 1.0, &[1.0, 1.0], 2.0);
        let r = solve_ese_mamd(&g, 1.0, &MamdOptions::default()).unwrap();
        assert!((r.x_star[0] - 0.5).abs() < 1e-6);
        assert!((r.x_star[1] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn mamd_restarts_after_collapse() {
        let g = inst(1.0, 1.0, 1.0, &[1.0, 1.0], 2.0);
        let opts = MamdOptions {
            eta0: Some(64.0),
            steps: 20_000,
            ..Default::default()
        };
        let r = solve_ese_mamd(&g, 1.0, &opts).unwrap();
        assert!((r.x_star[0] - 0.5).abs() < 1e-6, "{r:?}");
    }

    #[test]
    fn mamd_grows_a_step_that_is_too_small() {
        let g = inst(1.0, 0.1, 0.1, &[1.0, 1.0], 1.2);
        let foc = solve_ese_foc(&g, 0.0, &EseOptions::default()).unwrap();
        let r = solve_ese_mamd(&g, 0.0, &MamdOptions::default()).unwrap();
        assert!(r.converged, "{r:?}");
        assert!((r.x_star[0] - foc.x_star[0]).abs() < 1e-6);
    }

    #[test]
    fn dynamics_matches_foc_at_linear_returns() {
        let g = inst(100.0, 0.8, 0.5, &[2.0, 5.0, 9.0, 1.5], 1.5);
        let foc = solve_ese_foc(&g, 0.7, &EseOptions::default()).unwrap();
        let dyn_ = solve_ese_dynamics_beta(&g, 0.7, &DynamicsOptions::default()).unwrap();
        assert!(dyn_.converged, "{dyn_:?}");
        for (a, b) in foc.x_star.iter().zip(&dyn_.x_star) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn dynamics_keeps_symmetry() {
        let p = ModelParams::new(50.0, 0.8, 0.5)
            .unwrap()
            .with_data_returns_exponent(0.6)
            .unwrap();
        let g = GameInstance::power(p, &[3.0; 4], 1.5).unwrap();
        // sequential updates break symmetry by at most a few multiples of tol
        let opts = DynamicsOptions {
            tol: 1e-10,
            ..Default::default()
        };
        let r = solve_ese_dynamics_beta(&g, 1.0, &opts).unwrap();
        assert!(r.converged);
        let lo = r.x_star.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = r.x_star.iter().cloned().fold(0.0, f64::max);
        assert!(hi - lo < 1e-8, "{} {r:?}", hi - lo);
    }

    #[test]
    fn closed_form_rejects_heterogeneous() {
        let g = inst(1.0, 1.0, 1.0, &[1.0, 2.0], 2.0);
        assert!(matches!(homogeneous_closed_form(&g, 0.5), Err(Error::Heterogeneous)));
    }

    #[test]
    fn foc_rejects_concave_returns() {
        let p = ModelParams::default().with_data_returns_exponent(0.5).unwrap();
        let g = GameInstance::power(p, &[1.0, 2.0], 1.5).unwrap();
        assert!(matches!(
            solve_ese_foc(&g, 0.5, &EseOptions::default()),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn ledger_function_basics() {
        let g = inst(100.0, 0.8, 0.5, &[1.0, 4.0, 9.0], 1.5);
        let ledger = BoundsLedger::compute(&g).unwrap();
        assert_relative_eq!(ledger.b(0.0, 3.0, 0.0, 0.0, 0.0), 300.0);
        let mut doubled = ledger.clone();
        doubled.y_lb *= 2.0;
        assert!(doubled.b(1.0, 2.0, 0.5, 3.0, 1.0) < ledger.b(1.0, 2.0, 0.5, 3.0, 1.0));
        for i in 0..3 {
            assert!(0.0 < ledger.x_min[i] && ledger.x_min[i] < ledger.x_max[i]);
        }
    }
}
