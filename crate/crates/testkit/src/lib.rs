//! Slow, direct reference implementations used as test oracles, and a
//! generator of synthetic annotated corpora.
//!
//! Nothing here calls the algorithms it checks; only plain data types from
//! `spel-core` are shared.

pub mod cases;
pub mod http;
pub mod oracle;
pub mod synth;
