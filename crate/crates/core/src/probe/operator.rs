//! Least-squares linear operators on message vectors.
//!
//! A unary operator `N` minimizes `sum ||N f - f'||^2 + ridge ||N||_F^2`,
//! with closed form `N = (sum f' f^T)(sum f f^T + ridge I)^-1`. A binary
//! operator `M` is shared by both arguments, so `M f + M f' = M (f + f')`
//! and it is the unary fit on summed inputs.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::theory::{literal_table, random_table};
use super::{AgreementReport, AlignedPair, BinaryTriple, ProbeError, ReportRow, Result};
use crate::logic::{BinaryOp, LogicalForm};
use crate::meaning::{agreement, table_of_form, table_of_message, Agreement, MeaningTable, WorldSample};
use crate::net::{MessageVector, ModelParams};
use crate::scene::AttributeSchema;
use crate::seeds::mix;

pub const DEFAULT_RIDGE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OperatorRole {
    Negation,
    Conjunction,
    Disjunction,
}

impl OperatorRole {
    pub fn name(self) -> &'static str {
        match self {
            OperatorRole::Negation => "negation",
            OperatorRole::Conjunction => "conjunction",
            OperatorRole::Disjunction => "disjunction",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "negation" | "not" => Some(OperatorRole::Negation),
            "conjunction" | "and" => Some(OperatorRole::Conjunction),
            "disjunction" | "or" => Some(OperatorRole::Disjunction),
            _ => None,
        }
    }

    pub fn binary_op(self) -> Option<BinaryOp> {
        match self {
            OperatorRole::Negation => None,
            OperatorRole::Conjunction => Some(BinaryOp::And),
            OperatorRole::Disjunction => Some(BinaryOp::Or),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearOperator {
    pub matrix: DMatrix<f64>,
    pub ridge: f64,
    pub role: OperatorRole,
}

impl LinearOperator {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn apply(&self, f: &[f64]) -> MessageVector {
        let d = self.dim();
        MessageVector::new((0..d).map(|i| (0..d).map(|j| self.matrix[(i, j)] * f[j]).sum()).collect())
    }

    /// `M f + M f'`.
    pub fn apply_pair(&self, f: &[f64], g: &[f64]) -> MessageVector {
        let sum: Vec<f64> = f.iter().zip(g).map(|(a, b)| a + b).collect();
        self.apply(&sum)
    }
}

/// Solves `A X = B` for symmetric positive definite `A` by an `L D L^T`
/// factorization, overwriting `b` with `X`. With `relative_tol > 0`, a
/// pivot below `relative_tol * max(diag A)` is reported as singular.
fn solve_ldlt(a: &DMatrix<f64>, b: &mut DMatrix<f64>, relative_tol: f64) -> Result<()> {
    let n = a.nrows();
    let max_diag = (0..n).map(|i| a[(i, i)]).fold(0.0f64, f64::max);
    let tol = relative_tol * max_diag;
    let mut l = DMatrix::<f64>::identity(n, n);
    let mut d = vec![0.0; n];
    for j in 0..n {
        let mut dj = a[(j, j)];
        for k in 0..j {
            dj -= l[(j, k)] * l[(j, k)] * d[k];
        }
        if !(dj > tol) || !dj.is_finite() || dj <= 0.0 {
            return Err(ProbeError::Singular(format!(
                "pivot {j} is {dj:e}; add a ridge term or provide spanning inputs"
            )));
        }
        d[j] = dj;
        for i in j + 1..n {
            let mut v = a[(i, j)];
            for k in 0..j {
                v -= l[(i, k)] * l[(j, k)] * d[k];
            }
            l[(i, j)] = v / dj;
        }
    }
    for c in 0..b.ncols() {
        for i in 0..n {
            let mut v = b[(i, c)];
            for k in 0..i {
                v -= l[(i, k)] * b[(k, c)];
            }
            b[(i, c)] = v;
        }
        for i in 0..n {
            b[(i, c)] /= d[i];
        }
        for i in (0..n).rev() {
            let mut v = b[(i, c)];
            for k in i + 1..n {
                v -= l[(k, i)] * b[(k, c)];
            }
            b[(i, c)] = v;
        }
    }
    Ok(())
}

const SINGULAR_TOL: f64 = 1e-12;

fn fit(pairs: impl IntoIterator<Item = (Vec<f64>, Vec<f64>)>, ridge: f64, role: OperatorRole) -> Result<LinearOperator> {
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(ProbeError::Argument(format!("ridge must be non-negative, got {ridge}")));
    }
    // Column-major accumulators: the lower triangle of sum f f^T, and
    // sum f f'^T, which is the transposed right-hand side.
    let mut d = None;
    let mut gram = Vec::new();
    let mut rhs = Vec::new();
    for (input, output) in pairs {
        let n = *d.get_or_insert(input.len());
        if input.len() != n || output.len() != n {
            return Err(ProbeError::Argument("inconsistent vector dimensions".into()));
        }
        if gram.is_empty() {
            gram = vec![0.0; n * n];
            rhs = vec![0.0; n * n];
        }
        for j in 0..n {
            let (xj, yj) = (input[j], output[j]);
            for (g, x) in gram[j * n + j..(j + 1) * n].iter_mut().zip(&input[j..]) {
                *g += x * xj;
            }
            for (c, x) in rhs[j * n..(j + 1) * n].iter_mut().zip(&input) {
                *c += x * yj;
            }
        }
    }
    let Some(d) = d else {
        return Err(ProbeError::Argument("no training pairs".into()));
    };
    let mut gram = DMatrix::from_vec(d, d, gram);
    let mut rhs = DMatrix::from_vec(d, d, rhs);
    for i in 0..d {
        gram[(i, i)] += ridge;
    }
    let tol = if ridge == 0.0 { SINGULAR_TOL } else { 0.0 };
    solve_ldlt(&gram, &mut rhs, tol)?;
    Ok(LinearOperator {
        matrix: rhs.transpose(),
        ridge,
        role,
    })
}

/// Least-squares `N` with `N f ~ f'` over all pairs.
pub fn fit_unary_operator<'a>(pairs: impl IntoIterator<Item = (&'a [f64], &'a [f64])>, ridge: f64) -> Result<LinearOperator> {
    fit(pairs.into_iter().map(|(f, g)| (f.to_vec(), g.to_vec())), ridge, OperatorRole::Negation)
}

/// Least-squares `M` with `M f + M f' ~ f''` over all triples.
pub fn fit_binary_operator<'a>(
    triples: impl IntoIterator<Item = (&'a [f64], &'a [f64], &'a [f64])>,
    ridge: f64,
    role: OperatorRole,
) -> Result<LinearOperator> {
    if role == OperatorRole::Negation {
        return Err(ProbeError::Argument("binary operators are conjunction or disjunction".into()));
    }
    fit(
        triples
            .into_iter()
            .map(|(f, g, h)| (f.iter().zip(g).map(|(a, b)| a + b).collect(), h.to_vec())),
        ridge,
        role,
    )
}

/// Held-out items for [`evaluate_operator`].
pub enum TestItems<'a> {
    /// Each aligned pair `(e, f)`: compare `rep(N f)` with `rep(not e)`.
    Unary(&'a [AlignedPair]),
    /// Each distinct argument pair of the triples: compare
    /// `rep(M f + M f')` with `rep(op(e, e'))`.
    Binary(&'a [AlignedPair], &'a [BinaryTriple]),
}

/// Agreement of transformed messages with the logical prediction, next to
/// the random and literal theories on the same transformed messages. The
/// literal table is the source scene's (the union of both source scenes'
/// for disjunction, their intersection for conjunction).
pub fn evaluate_operator(
    params: &ModelParams,
    op: &LinearOperator,
    items: TestItems<'_>,
    sample: &WorldSample,
    schema: &AttributeSchema,
    random_seed: u64,
) -> Result<AgreementReport> {
    if op.dim() != params.hidden_dim {
        return Err(ProbeError::Argument(format!(
            "operator has dimension {}, model has {}",
            op.dim(),
            params.hidden_dim
        )));
    }
    // (transformed message, predicted form, literal table)
    let cases: Vec<(MessageVector, LogicalForm, MeaningTable)> = match (items, op.role.binary_op()) {
        (TestItems::Unary(aligned), None) => aligned
            .iter()
            .map(|a| {
                (
                    op.apply(&a.message.values),
                    LogicalForm::not(a.form.clone()),
                    literal_table(&a.scene, sample),
                )
            })
            .collect(),
        (TestItems::Binary(aligned, triples), Some(bop)) => {
            let mut args: Vec<(usize, usize)> = triples
                .iter()
                .map(|t| (t.left.min(t.right), t.left.max(t.right)))
                .collect();
            args.sort_unstable();
            args.dedup();
            args.into_iter()
                .map(|(i, j)| {
                    let (a, b) = (&aligned[i], &aligned[j]);
                    let (la, lb) = (literal_table(&a.scene, sample), literal_table(&b.scene, sample));
                    let literal = MeaningTable {
                        rows: la
                            .rows
                            .iter()
                            .zip(&lb.rows)
                            .map(|(x, y)| {
                                x.iter()
                                    .zip(y)
                                    .map(|(&p, &q)| match bop {
                                        BinaryOp::And => p && q,
                                        BinaryOp::Or => p || q,
                                    })
                                    .collect()
                            })
                            .collect(),
                    };
                    (
                        op.apply_pair(&a.message.values, &b.message.values),
                        bop.apply(a.form.clone(), b.form.clone()),
                        literal,
                    )
                })
                .collect()
        }
        _ => return Err(ProbeError::Argument("test items do not match the operator's arity".into())),
    };
    if cases.is_empty() {
        return Err(ProbeError::Argument("empty test set".into()));
    }

    let results = cases
        .par_iter()
        .enumerate()
        .map(|(i, (message, form, literal))| {
            let observed = table_of_message(params, message, sample, schema)?;
            let random = random_table(mix(random_seed, i as u64), sample);
            Ok([
                agreement(&random, &observed)?,
                agreement(literal, &observed)?,
                agreement(&table_of_form(form, sample, schema)?, &observed)?,
            ])
        })
        .collect::<Result<Vec<_>>>()?;

    let mut report = AgreementReport::new(op.role.name(), sample.seed, sample.len());
    report.push_meta("random_seed", random_seed);
    report.push_meta("ridge", op.ridge);
    report.notes.push(match op.role {
        OperatorRole::Negation => "literal row: the source scene's literal table".into(),
        OperatorRole::Conjunction => "literal row: intersection of the two source scenes' literal tables".into(),
        OperatorRole::Disjunction => "literal row: union of the two source scenes' literal tables".into(),
    });
    for (slot, label) in ["random", "literal", op.role.name()].into_iter().enumerate() {
        let values: Vec<Agreement> = results.iter().map(|r| r[slot]).collect();
        report.rows.push(ReportRow {
            label: label.into(),
            agreement: Agreement::mean(&values).expect("non-empty"),
            count: values.len(),
        });
    }
    Ok(report)
}

/// Plain-text operator file: a header then one matrix row per line. Values
/// use the shortest representation that parses back to the same bits.
pub fn write_operator(op: &LinearOperator, path: &Path) -> Result<()> {
    fs::write(path, operator_text(op))?;
    Ok(())
}

pub(crate) fn operator_text(op: &LinearOperator) -> String {
    let mut out = String::new();
    writeln!(out, "msgsem-operator 1").unwrap();
    writeln!(out, "role {}", op.role.name()).unwrap();
    writeln!(out, "dim {}", op.dim()).unwrap();
    writeln!(out, "ridge {:?}", op.ridge).unwrap();
    for i in 0..op.dim() {
        let row: Vec<String> = (0..op.dim()).map(|j| format!("{:?}", op.matrix[(i, j)])).collect();
        writeln!(out, "{}", row.join(" ")).unwrap();
    }
    out
}

pub fn read_operator(path: &Path) -> Result<LinearOperator> {
    parse_operator(&fs::read_to_string(path)?)
}

pub(crate) fn parse_operator(text: &str) -> Result<LinearOperator> {
    let bad = |m: &str| ProbeError::Format {
        what: "operator file",
        message: m.to_string(),
    };
    let mut lines = text.lines();
    if lines.next() != Some("msgsem-operator 1") {
        return Err(bad("missing header"));
    }
    let mut field = |key: &str| -> Result<String> {
        lines
            .next()
            .and_then(|l| l.strip_prefix(key))
            .and_then(|l| l.strip_prefix(' '))
            .map(str::to_string)
            .ok_or_else(|| bad(&format!("missing {key}")))
    };
    let role = OperatorRole::from_name(&field("role")?).ok_or_else(|| bad("unknown role"))?;
    let dim: usize = field("dim")?.parse().map_err(|_| bad("bad dim"))?;
    let ridge: f64 = field("ridge")?.parse().map_err(|_| bad("bad ridge"))?;
    let mut matrix = DMatrix::zeros(dim, dim);
    for i in 0..dim {
        let line = lines.next().ok_or_else(|| bad("truncated matrix"))?;
        let values: Vec<f64> = line
            .split(' ')
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| bad("bad matrix entry"))?;
        if values.len() != dim {
            return Err(bad("wrong row length"));
        }
        for (j, v) in values.into_iter().enumerate() {
            matrix[(i, j)] = v;
        }
    }
    if lines.any(|l| !l.trim().is_empty()) {
        return Err(bad("trailing content"));
    }
    Ok(LinearOperator { matrix, ridge, role })
}
