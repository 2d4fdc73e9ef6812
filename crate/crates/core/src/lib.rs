//! Diverse top-k selection over pools of unit-norm embeddings.
//!
//! The core solver maximizes a tight continuous relaxation of a
//! cardinality-constrained binary quadratic program with Frank-Wolfe and an
//! exact line search ([`fw::solve_fw`]). Greedy MMR, fast greedy DPP and
//! plain top-k live in [`baselines`]; [`oracle`] holds exhaustive references
//! for tiny instances. [`metrics`], [`bench`] and [`synth`] drive
//! evaluation, and [`io`] reads and writes the on-disk formats.
//!
//! ```
//! use dksel::{EmbeddingMatrix, Method, SelectParams};
//!
//! let pool = EmbeddingMatrix::from_rows(vec![
//!     vec![1.0, 0.0],
//!     vec![0.99, 0.141],
//!     vec![0.0, 1.0],
//! ])?;
//! let c = [0.9, 0.1, 0.5];
//! let report = Method::Fw.select(&pool, &c, &SelectParams::new(2, 0.5))?;
//! assert_eq!(report.selected, vec![0, 2]);
//! assert!(report.integral && report.local_max_certified);
//! # Ok::<(), dksel::Error>(())
//! ```

pub mod baselines;
pub mod bench;
pub mod error;
pub mod fw;
pub mod instances;
pub mod io;
pub mod linalg;
pub mod method;
pub mod metrics;
pub mod model;
pub mod objective;
pub mod oracle;
pub mod synth;

pub use error::{Error, Result};
pub use fw::{certify_vertex, solve_fw, VertexCertificate};
pub use method::Method;
pub use model::{
    EmbeddingMatrix, InitStrategy, QueryContext, SelectParams, SelectionVector, SolveReport,
    StopReason,
};
