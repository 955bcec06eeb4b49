mod cholesky;

pub use cholesky::{expand_blocks, grid_nested_dissection, NumericCholesky, SymbolicCholesky};
