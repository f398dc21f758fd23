//! Degree selection for the completion phase.
//!
//! A degree-`m` coded symbol is immediately useful when it has exactly one
//! (Case-1) or exactly two (Case-2) unrecovered constituents. With a fraction
//! `beta` of the source recovered, the binomial approximations are
//!
//! ```text
//! p1(m, beta) = m * beta^(m-1) * (1 - beta)
//! p2(m, beta) = C(m, 2) * beta^(m-2) * (1 - beta)^2
//! ```
//!
//! and the encoder picks the `m` maximizing `p1 + p2`.

use serde::Serialize;

use crate::error::{invalid, Result};

/// Ties in `p1 + p2` go to the larger degree. This makes the degree at
/// `beta = 0` equal to 2 and the degree at `beta = 0.5` equal to 3.
pub const PREFER_LARGER_ON_TIE: bool = true;

/// Scan cap used when no block size bounds the degree.
pub const DEFAULT_MAX_DEGREE: usize = 1 << 20;

/// Consecutive non-improving degrees after which the scan stops.
const SCAN_PATIENCE: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DegreeEval {
    pub m: usize,
    pub p1: f64,
    pub p2: f64,
    pub total: f64,
}

impl DegreeEval {
    pub fn at(m: usize, beta: f64) -> Self {
        let (a, b) = (p1(m, beta), p2(m, beta));
        DegreeEval { m, p1: a, p2: b, total: a + b }
    }
}

/// Probability that a degree-`m` symbol is Case-1.
pub fn p1(m: usize, beta: f64) -> f64 {
    if m == 0 {
        return 0.0;
    }
    m as f64 * beta.powi(m as i32 - 1) * (1.0 - beta)
}

/// Probability that a degree-`m` symbol is Case-2.
pub fn p2(m: usize, beta: f64) -> f64 {
    if m < 2 {
        return 0.0;
    }
    let pairs = (m * (m - 1)) as f64 / 2.0;
    pairs * beta.powi(m as i32 - 2) * (1.0 - beta).powi(2)
}

/// `p1 + p2`.
pub fn useful_probability(m: usize, beta: f64) -> f64 {
    p1(m, beta) + p2(m, beta)
}

/// Degree maximizing `p1 + p2` at `beta`, capped at [`DEFAULT_MAX_DEGREE`].
pub fn optimal_degree(beta: f64) -> Result<usize> {
    optimal_degree_capped(beta, DEFAULT_MAX_DEGREE)
}

/// Degree maximizing `p1 + p2` at `beta`, never exceeding `cap` (normally k).
///
/// Scans `m = 1, 2, ...` and stops once three consecutive degrees fall below
/// the best value seen; the objective is unimodal in `m`.
pub fn optimal_degree_capped(beta: f64, cap: usize) -> Result<usize> {
    if !(0.0..1.0).contains(&beta) {
        return invalid(format!("optimal degree needs 0 <= beta < 1, got {beta}"));
    }
    if cap == 0 {
        return invalid("degree cap must be positive");
    }
    let mut best_m = 1;
    let mut best = useful_probability(1, beta);
    let mut misses = 0;
    for m in 2..=cap {
        let total = useful_probability(m, beta);
        let better = if PREFER_LARGER_ON_TIE { total >= best } else { total > best };
        if better {
            best = total;
            best_m = m;
        }
        if total < best {
            misses += 1;
            if misses >= SCAN_PATIENCE {
                break;
            }
        } else {
            misses = 0;
        }
    }
    Ok(best_m)
}

/// Probability that a completion symbol sent with `n` of `k` recovered is
/// Case-1 or Case-2, using the optimal (k-capped) degree.
pub fn p_m(n: usize, k: usize) -> Result<f64> {
    if n >= k {
        return invalid(format!("p_M needs n < k, got n = {n}, k = {k}"));
    }
    let beta = n as f64 / k as f64;
    let m = optimal_degree_capped(beta, k)?;
    Ok(useful_probability(m, beta))
}

/// Exact Case-1/Case-2 probabilities when the `m` indices are drawn without
/// replacement from `k` symbols of which `r` are recovered (hypergeometric).
pub fn exact_case_probs(k: usize, r: usize, m: usize) -> Result<(f64, f64)> {
    if m == 0 || m > k || r > k {
        return invalid(format!("exact_case_probs needs 1 <= m <= k and r <= k (k={k}, r={r}, m={m})"));
    }
    let (kf, rf, uf) = (k as f64, r as f64, (k - r) as f64);
    // m * (k-r)/k * prod_{i<m-1} (r-i)/(k-1-i)
    let mut q1 = m as f64 * uf / kf;
    for i in 0..m - 1 {
        q1 *= (rf - i as f64) / (kf - 1.0 - i as f64);
        if q1 == 0.0 {
            break;
        }
    }
    let q2 = if m >= 2 && k >= 2 {
        let mut q = (m * (m - 1)) as f64 / 2.0 * uf * (uf - 1.0) / (kf * (kf - 1.0));
        for i in 0..m - 2 {
            q *= (rf - i as f64) / (kf - 2.0 - i as f64);
            if q == 0.0 {
                break;
            }
        }
        q.max(0.0)
    } else {
        0.0
    };
    Ok((q1.max(0.0), q2))
}

/// Optimal degree and `p_M` for every recovered count `0..k` of one block
/// size. Shared read-only across trials.
#[derive(Debug, Clone)]
pub struct DegreeTable {
    k: usize,
    degree: Vec<usize>,
    useful: Vec<f64>,
}

impl DegreeTable {
    pub fn new(k: usize) -> Result<Self> {
        if k < 2 {
            return invalid(format!("degree table needs k >= 2, got {k}"));
        }
        let mut degree = Vec::with_capacity(k);
        let mut useful = Vec::with_capacity(k);
        for n in 0..k {
            let beta = n as f64 / k as f64;
            let m = optimal_degree_capped(beta, k)?;
            degree.push(m);
            useful.push(useful_probability(m, beta));
        }
        Ok(Self { k, degree, useful })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Optimal degree with `n` symbols recovered (`n < k`).
    pub fn degree(&self, n: usize) -> usize {
        self.degree[n]
    }

    /// `p_M(n)` for `n < k`.
    pub fn p_m(&self, n: usize) -> f64 {
        self.useful[n]
    }

    /// `sum_{i=from}^{to-1} 1 / p_M(i)`; empty when `to <= from`.
    pub fn inverse_sum(&self, from: usize, to: usize) -> f64 {
        let to = to.min(self.k);
        if to <= from {
            return 0.0;
        }
        self.useful[from..to].iter().map(|p| 1.0 / p).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn p1_values() {
        assert_eq!(p1(1, 0.0), 1.0);
        assert_eq!(p1(2, 0.5), 0.5);
        for m in 1..20 {
            assert_eq!(p1(m, 1.0), 0.0);
        }
    }

    #[test]
    fn p2_values() {
        assert_eq!(p2(1, 0.3), 0.0);
        assert_eq!(p2(2, 0.5), 0.25);
        assert_eq!(p2(2, 0.0), 1.0);
    }

    #[test]
    fn optimal_degree_values() {
        assert_eq!(optimal_degree(0.3).unwrap(), 2);
        assert_eq!(optimal_degree(0.6).unwrap(), 3);
        assert_eq!(optimal_degree(0.0).unwrap(), 2);
        assert_eq!(optimal_degree(0.01).unwrap(), 2);
        assert_eq!(optimal_degree(0.49).unwrap(), 2);
        assert_eq!(optimal_degree(0.51).unwrap(), 3);
        assert!(optimal_degree(1.0).is_err());
    }

    #[test]
    fn optimal_degree_matches_brute_force_scan() {
        for i in 0..200 {
            let beta = i as f64 / 200.0;
            let mut best = (1, useful_probability(1, beta));
            for m in 2..=400 {
                let t = useful_probability(m, beta);
                if t >= best.1 {
                    best = (m, t);
                }
            }
            assert_eq!(optimal_degree(beta).unwrap(), best.0, "beta = {beta}");
        }
    }

    #[test]
    fn cap_is_respected() {
        assert_eq!(optimal_degree_capped(0.999, 10).unwrap(), 10);
    }

    #[test]
    fn p_m_values() {
        assert_eq!(p_m(0, 1000).unwrap(), 1.0);
        assert_eq!(p_m(500, 1000).unwrap(), 0.75);
        assert!(p_m(1000, 1000).is_err());
        for n in 0..1000 {
            let v = p_m(n, 1000).unwrap();
            assert!(v > 0.0 && v <= 1.0);
        }
    }

    #[test]
    fn exact_probs_small_cases() {
        let (a, b) = exact_case_probs(4, 2, 2).unwrap();
        assert!((a - 4.0 / 6.0).abs() < 1e-12);
        assert!((b - 1.0 / 6.0).abs() < 1e-12);
        let (a, _) = exact_case_probs(10, 9, 10).unwrap();
        assert!((a - 1.0).abs() < 1e-12);
    }

    #[test]
    fn exact_probs_converge_at_large_k() {
        let (a, b) = exact_case_probs(10_000, 5_000, 2).unwrap();
        assert!((a - p1(2, 0.5)).abs() < 1e-3);
        assert!((b - p2(2, 0.5)).abs() < 1e-3);
    }

    #[test]
    fn table_agrees_with_direct_evaluation() {
        let t = DegreeTable::new(300).unwrap();
        for n in (0..300).step_by(7) {
            assert_eq!(t.p_m(n), p_m(n, 300).unwrap());
        }
        assert_eq!(t.inverse_sum(10, 10), 0.0);
    }
}
