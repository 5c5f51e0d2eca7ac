//! JSON form of a game instance:
//!
//! ```json
//! {"n": 2,
//!  "params": {"mu": 10, "gamma": 1, "alpha": 1, "beta_ai": 1, "x0": 0, "traffic_mode": "human-only"},
//!  "costs": [{"kind": "power", "a": 0.1, "theta": 2}, {"kind": "power", "a": 0.4, "theta": 2}]}
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CostModel, GameInstance, ModelParams, TrafficMode};

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsDoc {
    pub mu: f64,
    pub gamma: f64,
    pub alpha: f64,
    #[serde(default = "one")]
    pub beta_ai: f64,
    #[serde(default)]
    pub x0: f64,
    #[serde(default)]
    pub traffic_mode: TrafficMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CostKind {
    Power,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostDoc {
    pub kind: CostKind,
    pub a: f64,
    pub theta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strong_convexity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceDoc {
    pub n: usize,
    pub params: ParamsDoc,
    pub costs: Vec<CostDoc>,
}

impl TryFrom<InstanceDoc> for GameInstance {
    type Error = Error;

    fn try_from(doc: InstanceDoc) -> Result<Self> {
        if doc.n != doc.costs.len() {
            return Err(Error::invalid(
                "n",
                format!("declares {} creators but {} costs are given", doc.n, doc.costs.len()),
            ));
        }
        let p = doc.params;
        let params = ModelParams::new(p.mu, p.gamma, p.alpha)?
            .with_data_returns_exponent(p.beta_ai)?
            .with_prior_data(p.x0)?
            .with_traffic_mode(p.traffic_mode);
        let costs = doc
            .costs
            .iter()
            .map(|c| {
                let model = CostModel::power(c.a, c.theta)?;
                Ok(match c.strong_convexity {
                    Some(m) => model.with_strong_convexity(m),
                    None => model,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        GameInstance::new(params, costs)
    }
}

impl GameInstance {
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: InstanceDoc = serde_json::from_str(text)?;
        doc.try_into()
    }

    pub fn to_doc(&self) -> Result<InstanceDoc> {
        let p = &self.params;
        let costs = self
            .costs
            .iter()
            .map(|c| {
                let (a, theta) = c
                    .power_params()
                    .ok_or_else(|| Error::Unsupported("only power costs serialize to JSON".into()))?;
                let m = c.strong_convexity_modulus();
                Ok(CostDoc {
                    kind: CostKind::Power,
                    a,
                    theta,
                    strong_convexity: (m > 0.0).then_some(m),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(InstanceDoc {
            n: self.n(),
            params: ParamsDoc {
                mu: p.mu,
                gamma: p.gamma,
                alpha: p.alpha,
                beta_ai: p.data_returns_exponent,
                x0: p.prior_data,
                traffic_mode: p.traffic_mode,
            },
            costs,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_doc()?)?)
    }
}
