//! Game primitives: parameters, cost models, profiles, allocation rules and the
//! closed-form payoff evaluation shared by every solver.
//!
//! Prior GenAI data `x0` is modelled as a non-strategic contributor that always
//! shares: it counts toward the content pool (traffic and attention), toward the
//! GenAI training base, and toward the denominator of the proportional rule. Its
//! allocation share is retained by the platform. With `x0 = 0` every formula
//! reduces to the plain model.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute band on `x_j s_j` that defines the winner set of the WTA rule.
pub const WTA_TIE_TOL: f64 = 1e-12;

/// `base^exp` with the convention `0^0 = 1` and `0^p = 0` for `p > 0`.
#[inline]
pub(crate) fn pow0(base: f64, exp: f64) -> f64 {
    if exp == 0.0 {
        1.0
    } else if base <= 0.0 {
        0.0
    } else {
        base.powf(exp)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TrafficMode {
    /// `T = mu * (pool)^gamma`
    #[default]
    HumanOnly,
    /// `T = mu * (pool + Q_AI)^gamma`
    HumanPlusAi,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    /// Baseline traffic.
    pub mu: f64,
    /// Traffic elasticity in `[0, 1]`.
    pub gamma: f64,
    /// GenAI data-usage efficiency.
    pub alpha: f64,
    /// Exponent of the GenAI quality in the shared data, in `(0, 1]`.
    pub data_returns_exponent: f64,
    /// Prior GenAI data held by the platform.
    pub prior_data: f64,
    pub traffic_mode: TrafficMode,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            mu: 100.0,
            gamma: 0.8,
            alpha: 0.5,
            data_returns_exponent: 1.0,
            prior_data: 0.0,
            traffic_mode: TrafficMode::HumanOnly,
        }
    }
}

impl ModelParams {
    pub fn new(mu: f64, gamma: f64, alpha: f64) -> Result<Self> {
        let params = Self {
            mu,
            gamma,
            alpha,
            ..Self::default()
        };
        params.validate()?;
        Ok(params)
    }

    pub fn with_data_returns_exponent(mut self, beta: f64) -> Result<Self> {
        self.data_returns_exponent = beta;
        self.validate()?;
        Ok(self)
    }

    pub fn with_prior_data(mut self, x0: f64) -> Result<Self> {
        self.prior_data = x0;
        self.validate()?;
        Ok(self)
    }

    pub fn with_traffic_mode(mut self, mode: TrafficMode) -> Self {
        self.traffic_mode = mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(Error::invalid("mu", format!("must be positive, got {}", self.mu)));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::invalid(
                "gamma",
                format!("must lie in [0,1], got {}", self.gamma),
            ));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::invalid("alpha", format!("must be positive, got {}", self.alpha)));
        }
        let beta = self.data_returns_exponent;
        if !(beta > 0.0 && beta <= 1.0) {
            return Err(Error::invalid("beta_ai", format!("must lie in (0,1], got {beta}")));
        }
        if !(self.prior_data >= 0.0 && self.prior_data.is_finite()) {
            return Err(Error::invalid(
                "x0",
                format!("must be non-negative, got {}", self.prior_data),
            ));
        }
        Ok(())
    }

    /// Baseline traffic as seen by the enforced-sharing game. Under
    /// GenAI-dependent traffic full sharing rescales `mu` by `(1+alpha)^gamma`.
    pub fn effective_mu(&self) -> f64 {
        match self.traffic_mode {
            TrafficMode::HumanOnly => self.mu,
            TrafficMode::HumanPlusAi => self.mu * (1.0 + self.alpha).powf(self.gamma),
        }
    }

    /// `true` when the GenAI quality is linear in the shared data.
    pub fn is_linear_ai(&self) -> bool {
        self.data_returns_exponent == 1.0
    }
}

/// Evaluation contract for a user-supplied cost function. Derivatives must be
/// analytic; the solvers never differentiate numerically.
pub trait CustomCost: Send + Sync + fmt::Debug {
    fn value(&self, x: f64) -> f64;
    fn derivative(&self, x: f64) -> f64;
    fn second_derivative(&self, x: f64) -> f64;
}

#[derive(Debug, Clone)]
pub enum CostShape {
    /// `c(x) = coefficient * x^exponent`
    Power {
        coefficient: f64,
        exponent: f64,
    },
    Custom(Arc<dyn CustomCost>),
}

#[derive(Debug, Clone)]
pub struct CostModel {
    shape: CostShape,
    strong_convexity_modulus: f64,
}

impl CostModel {
    pub fn power(coefficient: f64, exponent: f64) -> Result<Self> {
        if !(coefficient > 0.0 && coefficient.is_finite()) {
            return Err(Error::invalid("a", format!("must be positive, got {coefficient}")));
        }
        if !(exponent > 1.0 && exponent <= 2.0) {
            return Err(Error::invalid("theta", format!("must lie in (1,2], got {exponent}")));
        }
        Ok(Self {
            shape: CostShape::Power { coefficient, exponent },
            strong_convexity_modulus: 0.0,
        })
    }

    /// Wraps a custom cost after checking `c(0) = 0`, `c' >= 0` and `c'' > 0`
    /// on a log-spaced grid over `[1e-6, 1e6]`.
    pub fn custom(cost: Arc<dyn CustomCost>) -> Result<Self> {
        if cost.value(0.0).abs() > 1e-12 {
            return Err(Error::invalid("cost", "c(0) must be 0"));
        }
        for k in 0..=120 {
            let x = 10f64.powf(-6.0 + 0.1 * k as f64);
            if !(cost.derivative(x) >= 0.0) {
                return Err(Error::invalid("cost", format!("c'({x:e}) < 0")));
            }
            if !(cost.second_derivative(x) > 0.0) {
                return Err(Error::invalid("cost", format!("c''({x:e}) <= 0, not strictly convex")));
            }
        }
        Ok(Self::custom_unchecked(cost))
    }

    /// Skips the convexity checks. Only meant for degenerate test models.
    pub fn custom_unchecked(cost: Arc<dyn CustomCost>) -> Self {
        Self {
            shape: CostShape::Custom(cost),
            strong_convexity_modulus: 0.0,
        }
    }

    pub fn with_strong_convexity(mut self, modulus: f64) -> Self {
        self.strong_convexity_modulus = modulus.max(0.0);
        self
    }

    pub fn shape(&self) -> &CostShape {
        &self.shape
    }

    pub fn strong_convexity_modulus(&self) -> f64 {
        self.strong_convexity_modulus
    }

    /// `(a, theta)` for power costs.
    pub fn power_params(&self) -> Option<(f64, f64)> {
        match self.shape {
            CostShape::Power { coefficient, exponent } => Some((coefficient, exponent)),
            CostShape::Custom(_) => None,
        }
    }

    #[inline]
    pub fn value(&self, x: f64) -> f64 {
        match &self.shape {
            CostShape::Power { coefficient, exponent } => coefficient * pow0(x, *exponent),
            CostShape::Custom(c) => c.value(x),
        }
    }

    #[inline]
    pub fn derivative(&self, x: f64) -> f64 {
        match &self.shape {
            CostShape::Power { coefficient, exponent } => coefficient * exponent * pow0(x, exponent - 1.0),
            CostShape::Custom(c) => c.derivative(x),
        }
    }

    #[inline]
    pub fn second_derivative(&self, x: f64) -> f64 {
        match &self.shape {
            CostShape::Power { coefficient, exponent } => {
                if *exponent == 2.0 {
                    2.0 * coefficient
                } else if x <= 0.0 {
                    f64::INFINITY
                } else {
                    coefficient * exponent * (exponent - 1.0) * x.powf(exponent - 2.0)
                }
            }
            CostShape::Custom(c) => c.second_derivative(x),
        }
    }

    /// Inverse of the (strictly increasing) marginal cost.
    pub fn inverse_derivative(&self, y: f64) -> f64 {
        if y <= 0.0 {
            return 0.0;
        }
        match &self.shape {
            CostShape::Power { coefficient, exponent } => (y / (coefficient * exponent)).powf(1.0 / (exponent - 1.0)),
            CostShape::Custom(_) => {
                let mut hi = 1.0;
                let mut doublings = 0;
                while self.derivative(hi) < y && doublings < 400 {
                    hi *= 2.0;
                    doublings += 1;
                }
                crate::search::bisect(|x| self.derivative(x) - y, 0.0, hi, 1e-15 * hi, 300)
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct GameInstance {
    pub params: ModelParams,
    pub costs: Vec<CostModel>,
}

impl GameInstance {
    pub fn new(params: ModelParams, costs: Vec<CostModel>) -> Result<Self> {
        params.validate()?;
        if costs.len() < 2 {
            return Err(Error::invalid(
                "n",
                format!("need at least 2 creators, got {}", costs.len()),
            ));
        }
        Ok(Self { params, costs })
    }

    /// Power-cost instance with a common exponent.
    pub fn power(params: ModelParams, coefficients: &[f64], theta: f64) -> Result<Self> {
        let costs = coefficients
            .iter()
            .map(|&a| CostModel::power(a, theta))
            .collect::<Result<Vec<_>>>()?;
        Self::new(params, costs)
    }

    pub fn n(&self) -> usize {
        self.costs.len()
    }

    /// Common `(a, theta)` when every creator has the same power cost.
    pub fn homogeneous_power(&self) -> Option<(f64, f64)> {
        let first = self.costs[0].power_params()?;
        self.costs
            .iter()
            .all(|c| c.power_params() == Some(first))
            .then_some(first)
    }

    /// Common exponent when all costs are power costs sharing one `theta`.
    pub fn common_power_exponent(&self) -> Option<f64> {
        let theta = self.costs[0].power_params()?.1;
        self.costs
            .iter()
            .all(|c| matches!(c.power_params(), Some((_, t)) if t == theta))
            .then_some(theta)
    }

    pub(crate) fn check_profile(&self, profile: &Profile) -> Result<()> {
        if profile.len() != self.n() {
            return Err(Error::DimensionMismatch {
                expected: self.n(),
                got: profile.len(),
            });
        }
        Ok(())
    }

    pub(crate) fn check_index(&self, i: usize) -> Result<()> {
        if i >= self.n() {
            return Err(Error::IndexOutOfRange { index: i, n: self.n() });
        }
        Ok(())
    }

    /// `alpha * (x0 + shared)^beta`
    #[inline]
    pub(crate) fn ai_quality_from_shared(&self, shared: f64) -> f64 {
        let base = self.params.prior_data + shared;
        if base <= 0.0 {
            0.0
        } else {
            self.params.alpha * pow0(base, self.params.data_returns_exponent)
        }
    }

    /// Traffic for a given content pool (`x0 + sum x`) and GenAI quality.
    #[inline]
    pub(crate) fn traffic_from(&self, pool: f64, q_ai: f64) -> f64 {
        let base = match self.params.traffic_mode {
            TrafficMode::HumanOnly => pool,
            TrafficMode::HumanPlusAi => pool + q_ai,
        };
        self.params.mu * pow0(base, self.params.gamma)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub x: Vec<f64>,
    pub s: Vec<f64>,
}

impl Profile {
    pub fn new(x: Vec<f64>, s: Vec<f64>) -> Result<Self> {
        if x.len() != s.len() {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                got: s.len(),
            });
        }
        if let Some(v) = x.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
            return Err(Error::invalid(
                "x",
                format!("qualities must be finite and non-negative, got {v}"),
            ));
        }
        if let Some(v) = s.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid(
                "s",
                format!("sharing levels must lie in [0,1], got {v}"),
            ));
        }
        Ok(Self { x, s })
    }

    pub fn full_sharing(x: Vec<f64>) -> Result<Self> {
        let s = vec![1.0; x.len()];
        Self::new(x, s)
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn total_quality(&self) -> f64 {
        self.x.iter().sum()
    }

    pub fn shared_quality(&self) -> f64 {
        self.x.iter().zip(&self.s).map(|(x, s)| x * s).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum RuleKind {
    #[default]
    Proportional,
    Wta,
    Btes,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AllocationRule {
    pub kind: RuleKind,
    pub rho: f64,
}

impl AllocationRule {
    pub fn new(kind: RuleKind, rho: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&rho) {
            return Err(Error::invalid("rho", format!("must lie in [0,1], got {rho}")));
        }
        Ok(Self { kind, rho })
    }

    pub fn proportional(rho: f64) -> Result<Self> {
        Self::new(RuleKind::Proportional, rho)
    }
}

/// `alpha * (x0 + sum_i x_i s_i)^beta`
pub fn genai_quality(instance: &GameInstance, profile: &Profile) -> Result<f64> {
    instance.check_profile(profile)?;
    Ok(instance.ai_quality_from_shared(profile.shared_quality()))
}

pub fn traffic(instance: &GameInstance, profile: &Profile) -> Result<f64> {
    let q = genai_quality(instance, profile)?;
    let pool = instance.params.prior_data + profile.total_quality();
    Ok(instance.traffic_from(pool, q))
}

/// Creator fractions followed by the platform fraction; always sums to one.
pub fn allocation_shares(instance: &GameInstance, profile: &Profile, rule: &AllocationRule) -> Result<Vec<f64>> {
    instance.check_profile(profile)?;
    let n = instance.n();
    let mut shares = vec![0.0; n + 1];
    let contributions: Vec<f64> = profile.x.iter().zip(&profile.s).map(|(x, s)| x * s).collect();
    match rule.kind {
        RuleKind::Proportional => {
            let denom = instance.params.prior_data + contributions.iter().sum::<f64>();
            if denom > 0.0 {
                for (f, c) in shares.iter_mut().zip(&contributions) {
                    *f = rule.rho * c / denom;
                }
            }
        }
        RuleKind::Wta => {
            let best = contributions.iter().cloned().fold(0.0, f64::max);
            if best > 0.0 {
                let winners: Vec<usize> = (0..n).filter(|&j| contributions[j] >= best - WTA_TIE_TOL).collect();
                let each = rule.rho / winners.len() as f64;
                for j in winners {
                    shares[j] = each;
                }
            }
        }
        RuleKind::Btes => {
            let sharers: Vec<usize> = (0..n).filter(|&j| profile.s[j] == 1.0).collect();
            if !sharers.is_empty() {
                let each = rule.rho / sharers.len() as f64;
                for j in sharers {
                    shares[j] = each;
                }
            }
        }
    }
    let creators: f64 = shares[..n].iter().sum();
    shares[n] = 1.0 - creators;
    Ok(shares)
}

/// Direct-traffic revenue plus allocated GenAI revenue minus cost.
pub fn creator_utility(instance: &GameInstance, profile: &Profile, rule: &AllocationRule, i: usize) -> Result<f64> {
    instance.check_profile(profile)?;
    instance.check_index(i)?;
    let cost = instance.costs[i].value(profile.x[i]);
    let pool = instance.params.prior_data + profile.total_quality();
    let q = instance.ai_quality_from_shared(profile.shared_quality());
    let denom = pool + q;
    if denom <= 0.0 {
        return Ok(-cost);
    }
    let t = instance.traffic_from(pool, q);
    let f = allocation_shares(instance, profile, rule)?;
    Ok(t * profile.x[i] / denom + t * q / denom * f[i] - cost)
}

/// Utility under full sharing and the proportional rule in its reduced form
/// `mu (1 + alpha rho)/(1 + alpha) * pool^(gamma-1) * x_i - c_i(x_i)`.
pub fn full_sharing_creator_utility(instance: &GameInstance, x: &[f64], rho: f64, i: usize) -> Result<f64> {
    if x.len() != instance.n() {
        return Err(Error::DimensionMismatch {
            expected: instance.n(),
            got: x.len(),
        });
    }
    instance.check_index(i)?;
    if !instance.params.is_linear_ai() {
        return Err(Error::Unsupported(
            "reduced full-sharing utility needs beta_ai = 1".into(),
        ));
    }
    let pool = instance.params.prior_data + x.iter().sum::<f64>();
    if pool <= 0.0 {
        return Err(Error::ZeroTotalQuality);
    }
    let p = &instance.params;
    let k = p.effective_mu() * (1.0 + p.alpha * rho) / (1.0 + p.alpha);
    Ok(k * pool.powf(p.gamma - 1.0) * x[i] - instance.costs[i].value(x[i]))
}

/// GenAI revenue retained by the platform.
pub fn platform_revenue(instance: &GameInstance, profile: &Profile, rule: &AllocationRule) -> Result<f64> {
    instance.check_profile(profile)?;
    let pool = instance.params.prior_data + profile.total_quality();
    let q = instance.ai_quality_from_shared(profile.shared_quality());
    let denom = pool + q;
    if denom <= 0.0 || q <= 0.0 {
        return Ok(0.0);
    }
    let t = instance.traffic_from(pool, q);
    let f = allocation_shares(instance, profile, rule)?;
    Ok(t * q / denom * f[instance.n()])
}

/// Aggregates of every creator other than `i`, so that creator `i`'s utility
/// for a candidate `(x, s)` is evaluated without touching the full profile.
#[derive(Debug, Clone)]
pub struct Rivals {
    index: usize,
    total: f64,
    shared: f64,
    full_sharers: usize,
    contributions: Vec<f64>,
}

impl Rivals {
    pub fn of(profile: &Profile, i: usize) -> Self {
        let mut total = 0.0;
        let mut shared = 0.0;
        let mut full_sharers = 0;
        let mut contributions = Vec::with_capacity(profile.len().saturating_sub(1));
        for j in (0..profile.len()).filter(|&j| j != i) {
            total += profile.x[j];
            let c = profile.x[j] * profile.s[j];
            shared += c;
            contributions.push(c);
            if profile.s[j] == 1.0 {
                full_sharers += 1;
            }
        }
        Self {
            index: i,
            total,
            shared,
            full_sharers,
            contributions,
        }
    }

    pub fn index(&self) -> usize {
        self.index
    }

    /// Sum of the other creators' qualities.
    pub fn total(&self) -> f64 {
        self.total
    }

    /// Sum of the other creators' shared qualities.
    pub fn shared(&self) -> f64 {
        self.shared
    }

    fn allocation(&self, instance: &GameInstance, rule: &AllocationRule, x: f64, s: f64) -> f64 {
        let mine = x * s;
        match rule.kind {
            RuleKind::Proportional => {
                let denom = instance.params.prior_data + self.shared + mine;
                if denom > 0.0 {
                    rule.rho * mine / denom
                } else {
                    0.0
                }
            }
            RuleKind::Wta => {
                let best = self.contributions.iter().cloned().fold(mine, f64::max);
                if best <= 0.0 || mine < best - WTA_TIE_TOL {
                    return 0.0;
                }
                let ties = self.contributions.iter().filter(|&&c| c >= best - WTA_TIE_TOL).count();
                rule.rho / (ties + 1) as f64
            }
            RuleKind::Btes => {
                if s == 1.0 {
                    rule.rho / (self.full_sharers + 1) as f64
                } else {
                    0.0
                }
            }
        }
    }

    /// Creator utility when this creator plays `(x, s)` against the rivals.
    #[inline]
    pub fn utility(&self, instance: &GameInstance, rule: &AllocationRule, x: f64, s: f64) -> f64 {
        let cost = instance.costs[self.index].value(x);
        let pool = instance.params.prior_data + self.total + x;
        let q = instance.ai_quality_from_shared(self.shared + x * s);
        let denom = pool + q;
        if denom <= 0.0 {
            return -cost;
        }
        let t = instance.traffic_from(pool, q);
        let f = self.allocation(instance, rule, x, s);
        t * (x + q * f) / denom - cost
    }

    /// Derivative in `x` of the utility for `s = 1` under the proportional rule
    /// with ratio `rho`. Valid for any data-returns exponent.
    pub fn marginal_utility_sharing(&self, instance: &GameInstance, rho: f64, x: f64) -> f64 {
        let p = &instance.params;
        let beta = p.data_returns_exponent;
        let pool = p.prior_data + self.total + x;
        let base = p.prior_data + self.shared + x;
        if pool <= 0.0 || base <= 0.0 {
            return f64::INFINITY;
        }
        let q = p.alpha * base.powf(beta);
        let dq = p.alpha * beta * base.powf(beta - 1.0);
        let (t, dt) = match p.traffic_mode {
            TrafficMode::HumanOnly => (p.mu * pow0(pool, p.gamma), p.mu * p.gamma * pool.powf(p.gamma - 1.0)),
            TrafficMode::HumanPlusAi => {
                let b = pool + q;
                (
                    p.mu * b.powf(p.gamma),
                    p.mu * p.gamma * b.powf(p.gamma - 1.0) * (1.0 + dq),
                )
            }
        };
        let f = rho * x / base;
        let df = rho * (base - x) / (base * base);
        let num = x + q * f;
        let dnum = 1.0 + dq * f + q * df;
        let denom = pool + q;
        let ddenom = 1.0 + dq;
        (dt * num + t * dnum) / denom - t * num * ddenom / (denom * denom) - instance.costs[self.index].derivative(x)
    }
}
