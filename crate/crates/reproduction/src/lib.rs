//! Holds the `acceptance` test target, which runs the replicated
//! benchmark comparisons and correctness checks end to end:
//!
//! ```text
//! cargo test -p adacee-reproduction --test acceptance
//! ```
