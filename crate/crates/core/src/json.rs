//! File schemas for operators, separable operations and protocol trees.
//!
//! Operators are `{"dim", "re", "im"}` with row-major nested arrays. Values
//! survive a round trip to within `1e-15`.

use serde::{Deserialize, Serialize};

use crate::operator::CMatrix;
use crate::sep::{ProductOperator, SeparableOperation};
use crate::tree::{LoccTree, NodeSpec};
use crate::{Error, HermitianOperator, Result, Tolerances};

pub const SCHEMA: &str = "locc-cert/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatorJson {
    pub dim: usize,
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutcomeJson {
    pub weight: f64,
    pub locals: Vec<OperatorJson>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SepJson {
    pub dims: Vec<usize>,
    pub outcomes: Vec<OutcomeJson>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeJson {
    pub party: Option<usize>,
    pub kraus: Option<OperatorJson>,
    #[serde(default)]
    pub children: Vec<NodeJson>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeJson {
    pub dims: Vec<usize>,
    pub root: NodeJson,
}

impl From<&CMatrix> for OperatorJson {
    fn from(m: &CMatrix) -> Self {
        let rows = |f: fn(&num_complex::Complex64) -> f64| {
            (0..m.nrows())
                .map(|i| (0..m.ncols()).map(|j| f(&m[(i, j)])).collect())
                .collect()
        };
        Self {
            dim: m.nrows(),
            re: rows(|z| z.re),
            im: rows(|z| z.im),
        }
    }
}

impl OperatorJson {
    pub fn to_matrix(&self) -> Result<CMatrix> {
        let d = self.dim;
        let square = |rows: &[Vec<f64>], part: &str| {
            if rows.len() != d || rows.iter().any(|r| r.len() != d) {
                return Err(Error::Parse(format!("\"{part}\" is not {d}×{d}")));
            }
            if rows.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::Parse(format!("\"{part}\" has a non-finite entry")));
            }
            Ok(())
        };
        square(&self.re, "re")?;
        square(&self.im, "im")?;
        Ok(CMatrix::from_fn(d, d, |i, j| {
            num_complex::Complex64::new(self.re[i][j], self.im[i][j])
        }))
    }
}

impl From<&SeparableOperation> for SepJson {
    fn from(sep: &SeparableOperation) -> Self {
        Self {
            dims: sep.dims().to_vec(),
            outcomes: sep
                .outcomes()
                .iter()
                .map(|o| OutcomeJson {
                    weight: o.weight(),
                    locals: o
                        .locals()
                        .iter()
                        .map(|l| OperatorJson::from(l.matrix()))
                        .collect(),
                })
                .collect(),
        }
    }
}

impl SepJson {
    /// Locals need not have unit trace; their traces are folded into the weight.
    /// Closure is not checked here.
    pub fn to_sep(&self, tol: &Tolerances) -> Result<SeparableOperation> {
        let outcomes = self
            .outcomes
            .iter()
            .enumerate()
            .map(|(j, o)| outcome(o, tol).map_err(|e| Error::Parse(format!("outcomes[{j}]: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        SeparableOperation::new(self.dims.clone(), outcomes, tol)
    }
}

fn outcome(o: &OutcomeJson, tol: &Tolerances) -> Result<ProductOperator> {
    let mut weight = o.weight;
    let mut locals = Vec::with_capacity(o.locals.len());
    for (a, l) in o.locals.iter().enumerate() {
        let h = HermitianOperator::new_psd(l.to_matrix()?, tol.herm, tol.psd)
            .map_err(|e| Error::Parse(format!("locals[{a}]: {e}")))?;
        let t = h.trace();
        if (t - 1.0).abs() <= tol.trace {
            locals.push(h);
        } else {
            weight *= t;
            locals.push(h.normalized()?);
        }
    }
    ProductOperator::new(locals, weight, tol)
}

impl From<&NodeSpec> for NodeJson {
    fn from(s: &NodeSpec) -> Self {
        Self {
            party: s.party,
            kraus: s.kraus.as_ref().map(OperatorJson::from),
            children: s.children.iter().map(NodeJson::from).collect(),
        }
    }
}

impl NodeJson {
    fn to_spec(&self, path: &str) -> Result<NodeSpec> {
        let kraus = self
            .kraus
            .as_ref()
            .map(|k| {
                k.to_matrix()
                    .map_err(|e| Error::Parse(format!("{path}.kraus: {e}")))
            })
            .transpose()?;
        let children = self
            .children
            .iter()
            .enumerate()
            .map(|(i, c)| c.to_spec(&format!("{path}.children[{i}]")))
            .collect::<Result<_>>()?;
        Ok(NodeSpec {
            party: self.party,
            kraus,
            children,
        })
    }
}

impl From<&LoccTree> for TreeJson {
    fn from(t: &LoccTree) -> Self {
        Self {
            dims: t.dims().to_vec(),
            root: NodeJson::from(&t.root_spec()),
        }
    }
}

impl TreeJson {
    pub fn to_tree(&self) -> Result<LoccTree> {
        LoccTree::new(self.dims.clone(), self.root.to_spec("root")?)
    }
}

fn parse<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
}

fn render<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("schema types always serialize")
}

pub fn sep_from_str(text: &str, tol: &Tolerances) -> Result<SeparableOperation> {
    parse::<SepJson>(text)?.to_sep(tol)
}

pub fn sep_to_string(sep: &SeparableOperation) -> String {
    render(&SepJson::from(sep))
}

pub fn tree_from_str(text: &str) -> Result<LoccTree> {
    parse::<TreeJson>(text)?.to_tree()
}

pub fn tree_to_string(tree: &LoccTree) -> String {
    render(&TreeJson::from(tree))
}
