//! JSON market and claim files, and the report structure printed by the CLI.
//!
//! Numbers are written as strings (`"37/30"`, `"0.1"`) so rationals survive
//! a round trip exactly; plain JSON numbers are accepted on input and read
//! through their decimal text.

use std::fmt;
use std::path::Path;

use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::cones::{tighten_costs, ConeError, ConeProcess, MarketSpec, SolvencyCone};
use crate::dual::{DualResult, GapReport, NaCertificate, ThetaResult};
use crate::lp::LpOptions;
use crate::primal::{extract_exchanges, Claim, HedgeResult};
use crate::randomization::{NodeMeasure, RandomizedStop};
use crate::scalar::{Mode, Scalar};
use crate::tree::{EventTree, NodeRecord};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("schema error at {pointer}: {message}")]
    Schema { pointer: String, message: String },
    #[error("invalid input: {0}")]
    Validation(String),
    #[error("claim has no value for node {0:?}")]
    MissingNode(String),
    #[error("claim refers to unknown node {0:?}")]
    UnknownNode(String),
    #[error("exchange rates at node {node:?} admit a profitable cycle")]
    CycleArbitrage { node: String },
}

/// A number kept as its text form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Num(pub String);

impl Num {
    pub fn from_scalar<S: Scalar>(v: &S) -> Self {
        Num(v.to_text())
    }

    pub fn parse<S: Scalar>(&self) -> Result<S, IoError> {
        S::parse_scalar(&self.0).map_err(|e| IoError::Validation(e.to_string()))
    }
}

impl Serialize for Num {
    fn serialize<Ser: Serializer>(&self, s: Ser) -> Result<Ser::Ok, Ser::Error> {
        s.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for Num {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct NumVisitor;

        impl Visitor<'_> for NumVisitor {
            type Value = Num;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a number or a numeric string such as \"3/10\"")
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<Num, E> {
                Ok(Num(v.trim().to_string()))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Num, E> {
                Ok(Num(v.to_string()))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Num, E> {
                Ok(Num(v.to_string()))
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Num, E> {
                Ok(Num(v.to_string()))
            }
        }

        d.deserialize_any(NumVisitor)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeEntry {
    pub id: String,
    pub time: usize,
    #[serde(default)]
    pub parent: Option<String>,
    pub prob: Num,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prices: Option<Vec<Num>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub costs: Option<Vec<Vec<Num>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generators: Option<Vec<Vec<Num>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketFile {
    pub version: u32,
    pub assets: usize,
    pub horizon: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
    pub nodes: Vec<NodeEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClaimEntry {
    pub id: String,
    pub value: Vec<Num>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClaimFile {
    pub version: u32,
    pub claim: Vec<ClaimEntry>,
}

/// A validated market: event tree plus one solvency cone per node.
#[derive(Debug, Clone, PartialEq)]
pub struct Market<S> {
    pub tree: EventTree<S>,
    pub cones: ConeProcess<S>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LoadOptions {
    /// Replace cost matrices by their cheapest indirect routes.
    pub tighten: bool,
    pub lp: LpOptions,
}

fn pointer(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        out.push('/');
        match seg {
            Segment::Seq { index } => out.push_str(&index.to_string()),
            Segment::Map { key } => out.push_str(&key.replace('~', "~0").replace('/', "~1")),
            Segment::Enum { variant } => out.push_str(variant),
            Segment::Unknown => out.push('?'),
        }
    }
    if out.is_empty() {
        out.push('/');
    }
    out
}

fn parse_json<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T, IoError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| IoError::Schema {
        pointer: pointer(e.path()),
        message: e.inner().to_string(),
    })
}

fn read(path: &Path) -> Result<String, IoError> {
    std::fs::read_to_string(path).map_err(|source| IoError::Io {
        path: path.display().to_string(),
        source,
    })
}

impl MarketFile {
    pub fn parse(text: &str) -> Result<Self, IoError> {
        parse_json(text)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, IoError> {
        Self::parse(&read(path.as_ref())?)
    }

    /// Scalar mode requested by the file, if any.
    pub fn mode(&self) -> Result<Option<Mode>, IoError> {
        self.mode
            .as_deref()
            .map(|m| m.parse().map_err(|_| IoError::Validation(format!("unknown mode {m:?}"))))
            .transpose()
    }

    pub fn from_market<S: Scalar>(market: &Market<S>) -> Self {
        let tree = &market.tree;
        let nums = |v: &[S]| v.iter().map(Num::from_scalar).collect::<Vec<_>>();
        let nodes = tree
            .indices()
            .map(|n| {
                let node = tree.node(n);
                let cone = market.cones.cone(n);
                let mut entry = NodeEntry {
                    id: node.id.clone(),
                    time: node.time,
                    parent: node.parent.map(|p| tree.node(p).id.clone()),
                    prob: Num::from_scalar(&node.prob),
                    prices: None,
                    costs: None,
                    generators: None,
                };
                match cone.market() {
                    Some(spec) => {
                        entry.prices = Some(nums(&spec.prices));
                        entry.costs = Some(spec.costs.iter().map(|r| nums(r)).collect());
                    }
                    None => entry.generators = Some(cone.generators().iter().map(|g| nums(g)).collect()),
                }
                entry
            })
            .collect();
        MarketFile {
            version: FORMAT_VERSION,
            assets: market.cones.dim(),
            horizon: tree.horizon(),
            mode: Some(S::MODE.to_string()),
            nodes,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("market files serialize")
    }

    pub fn build<S: Scalar>(&self, opts: &LoadOptions) -> Result<Market<S>, IoError> {
        if self.version != FORMAT_VERSION {
            return Err(IoError::Validation(format!("unsupported version {}", self.version)));
        }
        let d = self.assets;
        let records = self
            .nodes
            .iter()
            .map(|e| {
                Ok(NodeRecord {
                    id: e.id.clone(),
                    time: e.time,
                    parent: e.parent.clone(),
                    prob: e.prob.parse()?,
                })
            })
            .collect::<Result<Vec<_>, IoError>>()?;
        let tree = EventTree::build(self.horizon, records).map_err(|e| IoError::Validation(e.to_string()))?;
        let parse_vec = |v: &[Num], what: &str, id: &str| -> Result<Vec<S>, IoError> {
            if v.len() != d {
                return Err(IoError::Validation(format!(
                    "node {id:?}: {what} has {} entries, expected {d}",
                    v.len()
                )));
            }
            v.iter().map(Num::parse).collect()
        };
        let mut cones = Vec::with_capacity(tree.len());
        for n in tree.indices() {
            let id = &tree.node(n).id;
            let e = self
                .nodes
                .iter()
                .find(|e| &e.id == id)
                .expect("tree nodes come from the file");
            let invalid = |err: ConeError| IoError::Validation(format!("node {id:?}: {err}"));
            let cone = match (&e.prices, &e.costs, &e.generators) {
                (Some(prices), Some(costs), None) => {
                    let prices = parse_vec(prices, "prices", id)?;
                    if costs.len() != d {
                        return Err(IoError::Validation(format!("node {id:?}: costs must have {d} rows")));
                    }
                    let mut costs = costs
                        .iter()
                        .map(|r| parse_vec(r, "cost row", id))
                        .collect::<Result<Vec<_>, _>>()?;
                    MarketSpec::new(prices.clone(), costs.clone()).map_err(invalid)?;
                    if opts.tighten {
                        let tight = tighten_costs(&costs, &prices).map_err(|err| match err {
                            ConeError::CycleArbitrage { .. } => IoError::CycleArbitrage { node: id.clone() },
                            other => invalid(other),
                        })?;
                        if tight != costs {
                            log::warn!("node {id:?}: cost matrix tightened to cheapest indirect routes");
                            costs = tight;
                        }
                    }
                    SolvencyCone::from_market(MarketSpec::new(prices, costs).map_err(invalid)?)
                }
                (None, None, Some(gens)) => {
                    let gens = gens
                        .iter()
                        .map(|g| parse_vec(g, "generator", id))
                        .collect::<Result<Vec<_>, _>>()?;
                    SolvencyCone::from_generators(gens, &opts.lp).map_err(invalid)?
                }
                _ => {
                    return Err(IoError::Validation(format!(
                        "node {id:?}: give either prices and costs, or generators"
                    )))
                }
            };
            cones.push(cone);
        }
        let cones = ConeProcess::new(&tree, cones).map_err(|e| IoError::Validation(e.to_string()))?;
        Ok(Market { tree, cones })
    }
}

impl ClaimFile {
    pub fn parse(text: &str) -> Result<Self, IoError> {
        parse_json(text)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, IoError> {
        Self::parse(&read(path.as_ref())?)
    }

    pub fn from_claim<S: Scalar>(tree: &EventTree<S>, claim: &Claim<S>) -> Self {
        ClaimFile {
            version: FORMAT_VERSION,
            claim: tree
                .indices()
                .map(|n| ClaimEntry {
                    id: tree.node(n).id.clone(),
                    value: claim.value(n).iter().map(Num::from_scalar).collect(),
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("claim files serialize")
    }

    /// Every tree node must appear exactly once; there is no default payoff.
    pub fn build<S: Scalar>(&self, tree: &EventTree<S>, assets: usize) -> Result<Claim<S>, IoError> {
        if self.version != FORMAT_VERSION {
            return Err(IoError::Validation(format!("unsupported version {}", self.version)));
        }
        let mut values: Vec<Option<Vec<S>>> = vec![None; tree.len()];
        for entry in &self.claim {
            let n = tree
                .index_of(&entry.id)
                .map_err(|_| IoError::UnknownNode(entry.id.clone()))?;
            if values[n].is_some() {
                return Err(IoError::Validation(format!("node {:?} listed twice", entry.id)));
            }
            if entry.value.len() != assets {
                return Err(IoError::Validation(format!(
                    "node {:?}: claim has {} entries, expected {assets}",
                    entry.id,
                    entry.value.len()
                )));
            }
            values[n] = Some(entry.value.iter().map(Num::parse).collect::<Result<_, _>>()?);
        }
        let values = values
            .into_iter()
            .enumerate()
            .map(|(n, v)| v.ok_or_else(|| IoError::MissingNode(tree.node(n).id.clone())))
            .collect::<Result<Vec<_>, _>>()?;
        Claim::new(tree, values).map_err(|e| IoError::Validation(e.to_string()))
    }
}

pub fn load_market<S: Scalar>(path: impl AsRef<Path>, opts: &LoadOptions) -> Result<Market<S>, IoError> {
    MarketFile::read(path)?.build(opts)
}

pub fn load_claim<S: Scalar>(path: impl AsRef<Path>, market: &Market<S>) -> Result<Claim<S>, IoError> {
    ClaimFile::read(path)?.build(&market.tree, market.cones.dim())
}

/// A per-node vector in a report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeVector {
    pub id: String,
    pub value: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrategyNode {
    pub id: String,
    pub transfer: Vec<String>,
    pub portfolio: Vec<String>,
    /// Present for market cones: `eta[i][j]` units of `j` bought with `i`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exchanges: Option<Vec<Vec<String>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DualNode {
    pub id: String,
    pub z: Vec<String>,
    pub aggregate: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NaSummary {
    pub epsilon: String,
    pub arbitrage_free: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeMeasureNode {
    pub id: String,
    pub chi: String,
    pub q: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RandomizedNode {
    pub id: String,
    pub x: String,
    pub h: String,
    pub chi: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThetaSummary {
    pub value: String,
    pub stopping_times: usize,
    pub stop_nodes: Vec<String>,
}

/// Everything a CLI run reports; absent parts are skipped in JSON.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct PriceReport {
    pub mode: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h_primal: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h_dual: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h_theta: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gap: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta: Option<ThetaSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub na: Option<NaSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub strategy: Option<Vec<StrategyNode>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dual_process: Option<Vec<DualNode>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub node_measure: Option<Vec<NodeMeasureNode>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub randomized: Option<Vec<RandomizedNode>>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<String>,
}

fn texts<S: Scalar>(v: &[S]) -> Vec<String> {
    v.iter().map(Scalar::to_text).collect()
}

impl PriceReport {
    pub fn new(mode: Mode) -> Self {
        PriceReport {
            mode: mode.to_string(),
            ..Default::default()
        }
    }

    pub fn set_primal<S: Scalar>(&mut self, market: &Market<S>, res: &HedgeResult<S>) {
        self.h_primal = Some(res.value.to_text());
        let exchanges = extract_exchanges(&res.plan, &market.cones).ok();
        let tree = &market.tree;
        self.strategy = Some(
            tree.indices()
                .map(|n| StrategyNode {
                    id: tree.node(n).id.clone(),
                    transfer: texts(&res.plan.transfers[n]),
                    portfolio: texts(&res.plan.portfolios[n]),
                    exchanges: exchanges
                        .as_ref()
                        .map(|e| e.eta[n].iter().map(|r| texts(r)).collect()),
                })
                .collect(),
        );
    }

    pub fn set_dual<S: Scalar>(&mut self, tree: &EventTree<S>, res: &DualResult<S>) {
        self.h_dual = Some(res.value.to_text());
        self.dual_process = Some(
            tree.indices()
                .map(|n| DualNode {
                    id: tree.node(n).id.clone(),
                    z: texts(res.process.z(n)),
                    aggregate: texts(res.process.aggregate(n)),
                })
                .collect(),
        );
    }

    pub fn set_theta<S: Scalar>(&mut self, tree: &EventTree<S>, res: &ThetaResult<S>) {
        self.h_theta = Some(res.value.to_text());
        self.theta = Some(ThetaSummary {
            value: res.value.to_text(),
            stopping_times: res.stopping_times,
            stop_nodes: res
                .stopping_time
                .stop_nodes()
                .map(|n| tree.node(n).id.clone())
                .collect(),
        });
    }

    pub fn set_gap<S: Scalar>(&mut self, market: &Market<S>, report: &GapReport<S>) {
        self.set_primal(market, &report.primal);
        self.set_dual(&market.tree, &report.dual);
        match &report.theta {
            Some(t) => self.set_theta(&market.tree, t),
            None => self
                .diagnostics
                .push("stopping-time price skipped: too many stopping times".into()),
        }
        self.gap = report.gap.as_ref().map(Scalar::to_text);
    }

    pub fn set_na<S: Scalar>(&mut self, tree: &EventTree<S>, cert: &NaCertificate<S>) {
        self.na = Some(NaSummary {
            epsilon: cert.epsilon.to_text(),
            arbitrage_free: cert.process.is_some(),
        });
        match &cert.process {
            Some(z) => {
                self.dual_process = Some(
                    tree.indices()
                        .map(|n| DualNode {
                            id: tree.node(n).id.clone(),
                            z: texts(z.z(n)),
                            aggregate: texts(z.aggregate(n)),
                        })
                        .collect(),
                )
            }
            None => self.diagnostics.push("arbitrage detected: no strictly positive consistent dual process".into()),
        }
    }

    pub fn set_conversion<S: Scalar>(&mut self, tree: &EventTree<S>, nm: &NodeMeasure<S>, rs: &RandomizedStop<S>) {
        self.node_measure = Some(
            tree.indices()
                .map(|n| NodeMeasureNode {
                    id: tree.node(n).id.clone(),
                    chi: nm.chi[n].to_text(),
                    q: nm.q[n].to_text(),
                })
                .collect(),
        );
        self.randomized = Some(
            tree.indices()
                .map(|n| RandomizedNode {
                    id: tree.node(n).id.clone(),
                    x: rs.x[n].to_text(),
                    h: rs.h[n].to_text(),
                    chi: rs.chi[n].to_text(),
                })
                .collect(),
        );
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }
}
