//! Minimal dense and CSR matrix types used by the model and the analysis code.

mod dense;
mod sparse;

pub use dense::Matrix;
pub use sparse::CsrMatrix;
