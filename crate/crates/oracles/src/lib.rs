//! Reference implementations written without reusing graphwright's own
//! logic: arbitrary-precision numerics, brute-force scans, a from-scratch
//! executability check and random graph generators.

pub mod brute;
pub mod criteria;
pub mod exec;
pub mod gen;
pub mod hp;
