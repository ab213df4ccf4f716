//! Evolving mixed-membership role models for dynamic networks.

pub mod analysis;
pub mod anomaly;
pub mod error;
pub mod features;
pub mod linalg;
pub mod par;
pub mod pipeline;
pub mod prediction;
pub mod roles;
pub mod synthetic;
pub mod temporal_graph;
pub mod transitions;

pub use error::{Error, Result};

/// Shortest round-tripping text for `v`, in exponent form when very small
/// or very large.
pub fn fmt_num(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && a.is_finite() && !(1e-4..1e15).contains(&a) {
        format!("{v:e}")
    } else {
        v.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::fmt_num;

    #[test]
    fn numbers_round_trip() {
        for v in [0.0, 1.5, -2.25e-30, 3.0e20, 1e-4, 0.1 + 0.2, f64::MIN_POSITIVE] {
            assert_eq!(fmt_num(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(fmt_num(3.2e-33), "3.2e-33");
        assert_eq!(fmt_num(0.25), "0.25");
    }
}
