//! Topic modeling with graph-based word-correlation regularization.
//!
//! The engine fits standard LDA by variational EM and a regularized
//! variant whose topic-word M-step penalizes probability differences
//! between words connected in a similarity graph. It also ships corpus
//! preprocessing, bilingual-dictionary graph construction and the
//! evaluation metrics used to compare the two models.

pub mod corpus;
pub mod error;
pub mod eval;
pub mod graph;
pub mod lda;
pub mod math;
pub mod model_io;
pub mod wr;

pub use error::{Error, Result};
