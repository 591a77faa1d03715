//! Analyses over a trained model: theory agreement, denotational
//! alignment, linear operator fitting and PCA export.

mod align;
mod operator;
mod pca;
mod report;
mod theory;

pub use align::{
    collect_alignments, collect_binary_triples, collect_negation_pairs, AlignedPair, BinaryTriple, NegationPair,
};
pub use operator::{
    evaluate_operator, fit_binary_operator, fit_unary_operator, read_operator, write_operator, LinearOperator,
    OperatorRole, TestItems, DEFAULT_RIDGE,
};
pub use pca::{pca_project, Projection};
pub use report::{AgreementReport, ReportRow};
pub use theory::{evaluate_theories, literal_table, theory_table, Theory};

use thiserror::Error;

use crate::logic::LogicError;
use crate::meaning::MeaningError;
use crate::net::NetError;

#[derive(Debug, Error)]
pub enum ProbeError {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("singular system: {0}")]
    Singular(String),
    #[error("malformed {what}: {message}")]
    Format { what: &'static str, message: String },
    #[error(transparent)]
    Logic(#[from] LogicError),
    #[error(transparent)]
    Meaning(#[from] MeaningError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, ProbeError>;
