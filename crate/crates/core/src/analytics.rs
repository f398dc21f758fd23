//! Closed-form expected number of transmitted symbols needed to recover `s`
//! of `k` source symbols.
//!
//! Every curve is piecewise in `s`. Sums of `1 / p_M(i)` are evaluated
//! exactly from a prefix table; non-integer breakpoints (`gamma0 * k`,
//! `(1 - eps) * k`, `k / 2`) are rounded to the nearest integer when used as
//! summation limits. All curves other than SOFC are for a lossless channel;
//! [`lossy_adjust`] scales them to erasure rate `eps`.

use std::f64::consts::LN_2;
use std::sync::Arc;

use serde::Serialize;

use crate::degree::DegreeTable;
use crate::error::{invalid, Error, Result};
use crate::scheme::{SchemeConfig, SchemeKind};

/// Largest `gamma0` accepted by the small-`gamma0` curve.
pub const SMALL_GAMMA0_MAX: f64 = 0.05;

/// Erasure rates at or above this use the `eps -> 1` SOFC curve.
pub const SOFC_HIGH_LOSS: f64 = 0.99;

/// Average degree of the giant component of relative size `beta0 = 0.5`.
pub fn c0() -> f64 {
    let beta0: f64 = 0.5;
    -(1.0 - beta0).ln() / beta0
}

/// Erasure rate below which SOFC needs fewer symbols than OFC for full
/// recovery: `1/2 - c0/8`.
pub fn epsilon_threshold() -> f64 {
    0.5 - c0() / 8.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AnalyticConstants {
    pub c0: f64,
    pub epsilon0: f64,
}

pub fn constants() -> AnalyticConstants {
    AnalyticConstants { c0: c0(), epsilon0: epsilon_threshold() }
}

/// Degree-2 symbols needed (lossless) for the giant component of a random
/// graph on `k` nodes to reach relative size `alpha`: `k * c / 2` with
/// `c = -ln(1 - alpha) / alpha`.
pub fn giant_component_cost(alpha: f64, k: usize) -> f64 {
    -(k as f64) * (1.0 - alpha).ln() / (2.0 * alpha)
}

/// Divides a lossless expectation by `1 - eps`. Only meaningful for the
/// random-selection schemes; SOFC curves already include the erasure rate.
pub fn lossy_adjust(expected_lossless: f64, epsilon: f64, scheme: SchemeKind) -> Result<f64> {
    if scheme == SchemeKind::Sofc {
        return Err(Error::ContractViolation(
            "SOFC expectations already account for the erasure rate".into(),
        ));
    }
    if !(0.0..1.0).contains(&epsilon) {
        return invalid(format!("erasure rate must be in [0, 1), got {epsilon}"));
    }
    Ok(expected_lossless / (1.0 - epsilon))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AnalyticPoint {
    pub s: usize,
    pub expected_n: f64,
}

/// One of the piecewise expectation curves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Curve {
    /// Original scheme with `beta0 = 0.5`.
    Ofc,
    /// `gamma0 -> 0` (accepted for `0 <= gamma0 <= 0.05`).
    OfcnbSmall { gamma0: f64 },
    /// `0 < gamma0 < 0.5`.
    OfcnbGeneral { gamma0: f64 },
    /// `0.5 <= gamma0 <= 1`.
    OfcnbLarge { gamma0: f64 },
    Sofc { epsilon: f64 },
}

impl Curve {
    /// The curve the analysis pairs with a scheme configuration.
    pub fn for_scheme(scheme: &SchemeConfig, epsilon: f64) -> Result<Curve> {
        Ok(match *scheme {
            SchemeConfig::Ofc { beta0 } => {
                if (beta0 - 0.5).abs() > 1e-12 {
                    return invalid("the OFC expectation is only available for beta0 = 0.5");
                }
                Curve::Ofc
            }
            SchemeConfig::Ofcnb { gamma0 } if gamma0 <= SMALL_GAMMA0_MAX => Curve::OfcnbSmall { gamma0 },
            SchemeConfig::Ofcnb { gamma0 } if gamma0 < 0.5 => Curve::OfcnbGeneral { gamma0 },
            SchemeConfig::Ofcnb { gamma0 } => Curve::OfcnbLarge { gamma0 },
            SchemeConfig::Sofc => Curve::Sofc { epsilon },
        })
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Curve::OfcnbSmall { gamma0 } if !(0.0..=SMALL_GAMMA0_MAX).contains(&gamma0) => {
                invalid(format!("small-gamma0 curve needs 0 <= gamma0 <= {SMALL_GAMMA0_MAX}"))
            }
            Curve::OfcnbGeneral { gamma0 } if !(gamma0 > 0.0 && gamma0 < 0.5) => {
                invalid(format!("general curve needs 0 < gamma0 < 0.5, got {gamma0}"))
            }
            Curve::OfcnbLarge { gamma0 } if !(0.5..=1.0).contains(&gamma0) => {
                invalid(format!("large-gamma0 curve needs 0.5 <= gamma0 <= 1, got {gamma0}"))
            }
            Curve::Sofc { epsilon } if !(0.0..1.0).contains(&epsilon) => {
                invalid(format!("erasure rate must be in [0, 1), got {epsilon}"))
            }
            _ => Ok(()),
        }
    }
}

/// Expectation curves for one block size, with `p_M` memoized.
#[derive(Debug, Clone)]
pub struct Analytics {
    k: usize,
    table: Arc<DegreeTable>,
    // prefix[i] = sum_{j < i} 1 / p_M(j)
    prefix: Vec<f64>,
}

impl Analytics {
    pub fn new(k: usize) -> Result<Self> {
        Ok(Self::with_table(Arc::new(DegreeTable::new(k)?)))
    }

    pub fn with_table(table: Arc<DegreeTable>) -> Self {
        let k = table.k();
        let mut prefix = Vec::with_capacity(k + 1);
        let mut acc = 0.0;
        prefix.push(acc);
        for n in 0..k {
            acc += 1.0 / table.p_m(n);
            prefix.push(acc);
        }
        Self { k, table, prefix }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn table(&self) -> &Arc<DegreeTable> {
        &self.table
    }

    fn kf(&self) -> f64 {
        self.k as f64
    }

    fn idx(&self, x: f64) -> usize {
        (x.round().max(0.0) as usize).min(self.k)
    }

    /// `sum_{i=from}^{to-1} 1 / p_M(i)` with real limits rounded.
    fn inv_sum(&self, from: f64, to: f64) -> f64 {
        let (a, b) = (self.idx(from), self.idx(to));
        if b <= a {
            0.0
        } else {
            self.prefix[b] - self.prefix[a]
        }
    }

    fn p_m_at(&self, x: f64) -> f64 {
        self.table.p_m(self.idx(x).min(self.k - 1))
    }

    /// Build-up edges left over when the degree-2 stage starts at
    /// `start * k` recovered symbols and ends at `k / 2`.
    fn build_up_edges(&self, start: f64) -> f64 {
        let k = self.kf();
        let p_u = (self.p_m_at(start * k) + self.p_m_at(k / 2.0)) / 2.0;
        (2.0 - 2.0 * start).ln() * k * p_u - (0.5 - start) * k
    }

    /// Breakpoints of `curve` in increasing order; piece `i` covers
    /// `(breaks[i-1], breaks[i]]`.
    pub fn breakpoints(&self, curve: Curve) -> Vec<f64> {
        let k = self.kf();
        match curve {
            Curve::Ofc => vec![k / 2.0],
            Curve::OfcnbSmall { gamma0 } | Curve::OfcnbGeneral { gamma0 } => {
                vec![gamma0 * k, k / 2.0]
            }
            Curve::OfcnbLarge { gamma0 } => vec![gamma0 * k],
            Curve::Sofc { epsilon } if epsilon <= 0.5 => vec![(1.0 - epsilon) * k],
            Curve::Sofc { epsilon } => vec![(1.0 - epsilon) * k, k / 2.0],
        }
    }

    /// Formula of piece `piece` evaluated at `s`, regardless of whether `s`
    /// lies in that piece's range.
    pub fn piece(&self, curve: Curve, piece: usize, s: f64) -> f64 {
        let k = self.kf();
        let half = k / 2.0;
        let thinning = 1.0 - c0() / 4.0;
        match (curve, piece) {
            (Curve::Ofc, 0) => k * LN_2,
            (Curve::Ofc, _) => k * LN_2 + thinning * self.inv_sum(half, s),

            (Curve::OfcnbSmall { .. }, 0) => s,
            (Curve::OfcnbSmall { gamma0 }, 1) => {
                let d = s - gamma0 * k;
                if d <= 0.0 {
                    // limit of the giant-component cost as the recovered count vanishes
                    k / 2.0
                } else {
                    -k * k * (1.0 - d / k).ln() / (2.0 * d)
                }
            }
            (Curve::OfcnbSmall { gamma0 }, _) => {
                thinning * self.inv_sum(half, s) - k * (0.5 + gamma0).ln() / (1.0 - 2.0 * gamma0)
            }

            (Curve::OfcnbGeneral { .. }, 0) | (Curve::OfcnbLarge { .. }, 0) => {
                if s >= k {
                    f64::INFINITY
                } else {
                    k * (k / (k - s)).ln()
                }
            }
            (Curve::OfcnbGeneral { gamma0 }, 1) => {
                (s - gamma0 * k) * (2.0 - 2.0 * gamma0).ln() / (0.5 - gamma0) - k * (1.0 - gamma0).ln()
            }
            (Curve::OfcnbGeneral { gamma0 }, _) => {
                let nb = self.build_up_edges(gamma0);
                k * LN_2 + (1.0 - 2.0 * nb / k) * self.inv_sum(half, s)
            }
            (Curve::OfcnbLarge { gamma0 }, _) => {
                self.inv_sum(gamma0 * k, s) - k * (1.0 - gamma0).ln()
            }

            (Curve::Sofc { epsilon }, 0) => s / (1.0 - epsilon),
            (Curve::Sofc { epsilon }, 1) if epsilon <= 0.5 => {
                k + self.inv_sum((1.0 - epsilon) * k, s) / (1.0 - epsilon)
            }
            (Curve::Sofc { epsilon }, 1) if epsilon < SOFC_HIGH_LOSS => {
                k + (s - (1.0 - epsilon) * k) * (2.0 * epsilon).ln()
                    / ((epsilon - 0.5) * (1.0 - epsilon))
            }
            (Curve::Sofc { epsilon }, 1) => {
                k - k * k * (1.0 - s / k).ln() / (2.0 * s * (1.0 - epsilon))
            }
            (Curve::Sofc { epsilon }, _) if epsilon < SOFC_HIGH_LOSS => {
                let nb = self.build_up_edges(1.0 - epsilon);
                k + k * (2.0 * epsilon).ln() / (1.0 - epsilon)
                    + (k - 2.0 * nb) / (k * (1.0 - epsilon)) * self.inv_sum(half, s)
            }
            (Curve::Sofc { epsilon }, _) => {
                k + k * LN_2 / (1.0 - epsilon) + thinning / (1.0 - epsilon) * self.inv_sum(half, s)
            }
        }
    }

    /// Expected transmitted symbols to recover `s` symbols along `curve`
    /// (lossless except for SOFC).
    pub fn eval(&self, curve: Curve, s: usize) -> Result<f64> {
        curve.validate()?;
        if s == 0 || s > self.k {
            return invalid(format!("s must be in 1..={}, got {s}", self.k));
        }
        let sf = s as f64;
        let piece = self.breakpoints(curve).iter().take_while(|&&b| sf > b).count();
        Ok(self.piece(curve, piece, sf))
    }

    pub fn expected_ofc(&self, s: usize) -> Result<f64> {
        self.eval(Curve::Ofc, s)
    }

    pub fn expected_ofcnb_small(&self, s: usize, gamma0: f64) -> Result<f64> {
        self.eval(Curve::OfcnbSmall { gamma0 }, s)
    }

    pub fn expected_ofcnb_general(&self, s: usize, gamma0: f64) -> Result<f64> {
        self.eval(Curve::OfcnbGeneral { gamma0 }, s)
    }

    pub fn expected_ofcnb_large(&self, s: usize, gamma0: f64) -> Result<f64> {
        self.eval(Curve::OfcnbLarge { gamma0 }, s)
    }

    pub fn expected_sofc(&self, s: usize, epsilon: f64) -> Result<f64> {
        self.eval(Curve::Sofc { epsilon }, s)
    }

    /// Expectation for a scheme on a channel with erasure rate `epsilon`,
    /// including the lossy scaling where it applies.
    pub fn expected_for(&self, scheme: &SchemeConfig, epsilon: f64, s: usize) -> Result<f64> {
        let curve = Curve::for_scheme(scheme, epsilon)?;
        let raw = self.eval(curve, s)?;
        match scheme.kind() {
            SchemeKind::Sofc => Ok(raw),
            kind => lossy_adjust(raw, epsilon, kind),
        }
    }

    /// Full curve over `s = 1..=k`.
    pub fn curve_points(&self, scheme: &SchemeConfig, epsilon: f64) -> Result<Vec<AnalyticPoint>> {
        (1..=self.k)
            .map(|s| Ok(AnalyticPoint { s, expected_n: self.expected_for(scheme, epsilon, s)? }))
            .collect()
    }
}

pub fn expected_ofc(s: usize, k: usize) -> Result<f64> {
    Analytics::new(k)?.expected_ofc(s)
}

pub fn expected_ofcnb_small(s: usize, k: usize, gamma0: f64) -> Result<f64> {
    Analytics::new(k)?.expected_ofcnb_small(s, gamma0)
}

pub fn expected_ofcnb_general(s: usize, k: usize, gamma0: f64) -> Result<f64> {
    Analytics::new(k)?.expected_ofcnb_general(s, gamma0)
}

pub fn expected_ofcnb_large(s: usize, k: usize, gamma0: f64) -> Result<f64> {
    Analytics::new(k)?.expected_ofcnb_large(s, gamma0)
}

pub fn expected_sofc(s: usize, k: usize, epsilon: f64) -> Result<f64> {
    Analytics::new(k)?.expected_sofc(s, epsilon)
}
