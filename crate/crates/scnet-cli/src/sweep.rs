//! Parameter sweep targets and grids.
//!
//! A target is a dotted path resolving to exactly one scalar of the model,
//! e.g. `U[1]`, `owner_policy[1].base_rate`,
//! `producer_policy[2].bracket[1].threshold`, or `market[1,2].intercept`.
//! A grid is either an explicit list `10,20,30` or a range `lo:hi:steps`.

use scnet::model::NetworkModel;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("cannot parse sweep target `{0}`")]
    BadTarget(String),
    #[error("target index out of range in `{0}`")]
    IndexOutOfRange(String),
    #[error("cannot parse grid `{0}`: {1}")]
    BadGrid(String, String),
}

/// A resolved scalar slot of the model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Target {
    Capacity { i: usize },
    OwnerBaseRate { i: usize },
    OwnerBaseLump { i: usize },
    OwnerBracketThreshold { i: usize, g: usize },
    OwnerBracketRate { i: usize, g: usize },
    ProducerBaseRate { j: usize },
    ProducerBaseLump { j: usize },
    ProducerBracketThreshold { j: usize, g: usize },
    ProducerBracketRate { j: usize, g: usize },
    MarketIntercept { j: usize, k: usize },
    MarketSlope { j: usize, k: usize },
}

impl Target {
    /// Parse the 1-based dotted path syntax.
    pub fn parse(text: &str) -> Result<Target, SweepError> {
        let t = text.trim();
        let err = || SweepError::BadTarget(text.to_string());
        let index1 = |s: &str| -> Result<usize, SweepError> {
            let v: usize = s.trim().parse().map_err(|_| err())?;
            if v == 0 {
                return Err(err());
            }
            Ok(v - 1)
        };
        // head[indices] (.field (…))*
        let open = t.find('[').ok_or_else(err)?;
        let close = t.find(']').ok_or_else(err)?;
        if close < open {
            return Err(err());
        }
        let head = &t[..open];
        let idxs: Vec<&str> = t[open + 1..close].split(',').collect();
        let rest = &t[close + 1..];
        match (head, idxs.as_slice(), rest) {
            ("U" | "capacity", [i], "") => Ok(Target::Capacity { i: index1(i)? }),
            ("market", [j, k], ".intercept") => Ok(Target::MarketIntercept {
                j: index1(j)?,
                k: index1(k)?,
            }),
            ("market", [j, k], ".slope") => Ok(Target::MarketSlope {
                j: index1(j)?,
                k: index1(k)?,
            }),
            ("owner_policy", [i], rest) => parse_policy_rest(rest, index1(i)?, true, err),
            ("producer_policy", [j], rest) => parse_policy_rest(rest, index1(j)?, false, err),
            _ => Err(err()),
        }
    }

    /// Set the slot on a model; fails when the index does not exist.
    pub fn apply(&self, model: &mut NetworkModel, value: f64) -> Result<(), SweepError> {
        let oob = || SweepError::IndexOutOfRange(format!("{self:?}"));
        match *self {
            Target::Capacity { i } => {
                *model.capacities.get_mut(i).ok_or_else(oob)? = value;
            }
            Target::OwnerBaseRate { i } => {
                model.owner_policies.get_mut(i).ok_or_else(oob)?.base_rate = value;
            }
            Target::OwnerBaseLump { i } => {
                model.owner_policies.get_mut(i).ok_or_else(oob)?.base_lump = value;
            }
            Target::OwnerBracketThreshold { i, g } => {
                model
                    .owner_policies
                    .get_mut(i)
                    .ok_or_else(oob)?
                    .brackets
                    .get_mut(g)
                    .ok_or_else(oob)?
                    .threshold = value;
            }
            Target::OwnerBracketRate { i, g } => {
                model
                    .owner_policies
                    .get_mut(i)
                    .ok_or_else(oob)?
                    .brackets
                    .get_mut(g)
                    .ok_or_else(oob)?
                    .rate = value;
            }
            Target::ProducerBaseRate { j } => {
                model
                    .producer_policies
                    .get_mut(j)
                    .ok_or_else(oob)?
                    .base_rate = value;
            }
            Target::ProducerBaseLump { j } => {
                model
                    .producer_policies
                    .get_mut(j)
                    .ok_or_else(oob)?
                    .base_lump = value;
            }
            Target::ProducerBracketThreshold { j, g } => {
                model
                    .producer_policies
                    .get_mut(j)
                    .ok_or_else(oob)?
                    .brackets
                    .get_mut(g)
                    .ok_or_else(oob)?
                    .threshold = value;
            }
            Target::ProducerBracketRate { j, g } => {
                model
                    .producer_policies
                    .get_mut(j)
                    .ok_or_else(oob)?
                    .brackets
                    .get_mut(g)
                    .ok_or_else(oob)?
                    .rate = value;
            }
            Target::MarketIntercept { j, k } => {
                let kk = model.topology.markets;
                if j >= model.topology.resources || k >= kk {
                    return Err(oob());
                }
                model.markets[j * kk + k].intercept = value;
            }
            Target::MarketSlope { j, k } => {
                let kk = model.topology.markets;
                if j >= model.topology.resources || k >= kk {
                    return Err(oob());
                }
                model.markets[j * kk + k].slope = value;
            }
        }
        Ok(())
    }
}

fn parse_policy_rest(
    rest: &str,
    agent: usize,
    owner: bool,
    err: impl Fn() -> SweepError,
) -> Result<Target, SweepError> {
    if rest == ".base_rate" {
        return Ok(if owner {
            Target::OwnerBaseRate { i: agent }
        } else {
            Target::ProducerBaseRate { j: agent }
        });
    }
    if rest == ".base_lump" {
        return Ok(if owner {
            Target::OwnerBaseLump { i: agent }
        } else {
            Target::ProducerBaseLump { j: agent }
        });
    }
    let rest = rest.strip_prefix(".bracket[").ok_or_else(&err)?;
    let close = rest.find(']').ok_or_else(&err)?;
    let g: usize = rest[..close].trim().parse().map_err(|_| err())?;
    if g == 0 {
        return Err(err());
    }
    let g = g - 1;
    match &rest[close + 1..] {
        ".threshold" => Ok(if owner {
            Target::OwnerBracketThreshold { i: agent, g }
        } else {
            Target::ProducerBracketThreshold { j: agent, g }
        }),
        ".rate" => Ok(if owner {
            Target::OwnerBracketRate { i: agent, g }
        } else {
            Target::ProducerBracketRate { j: agent, g }
        }),
        _ => Err(err()),
    }
}

/// Parse a grid specification: `v1,v2,...` or `lo:hi:steps`.
pub fn parse_grid(text: &str) -> Result<Vec<f64>, SweepError> {
    let t = text.trim();
    let err = |m: &str| SweepError::BadGrid(text.to_string(), m.to_string());
    if t.contains(':') {
        let parts: Vec<&str> = t.split(':').collect();
        if parts.len() != 3 {
            return Err(err("expected lo:hi:steps"));
        }
        let lo: f64 = parts[0]
            .trim()
            .parse()
            .map_err(|_| err("bad lower bound"))?;
        let hi: f64 = parts[1]
            .trim()
            .parse()
            .map_err(|_| err("bad upper bound"))?;
        let steps: usize = parts[2].trim().parse().map_err(|_| err("bad step count"))?;
        if steps == 0 {
            return Err(err("steps must be at least 1"));
        }
        if steps == 1 {
            return Ok(vec![lo]);
        }
        let h = (hi - lo) / (steps - 1) as f64;
        return Ok((0..steps).map(|q| lo + h * q as f64).collect());
    }
    let vals: Result<Vec<f64>, _> = t.split(',').map(|p| p.trim().parse::<f64>()).collect();
    let vals = vals.map_err(|_| err("bad number"))?;
    if vals.is_empty() {
        return Err(err("empty grid"));
    }
    Ok(vals)
}
