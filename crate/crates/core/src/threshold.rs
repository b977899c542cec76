//! Exact binomial tails for choosing the bit-accuracy threshold `tau` and the
//! frame-count threshold `k`.
//!
//! Under the null hypothesis each decoded bit matches a random ground-truth
//! watermark with probability 1/2, so the number of matching bits is
//! `Binomial(n, 1/2)`. `tau` is kept as an unreduced fraction `m / n` so the
//! detector can compare match counts exactly.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Default false-positive bound.
pub const DEFAULT_ETA: f64 = 1e-4;

/// Detection threshold as an exact fraction in `(1/2, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Tau {
    num: u64,
    den: u64,
}

impl Tau {
    pub fn new(num: u64, den: u64) -> Result<Self> {
        if den == 0 || 2 * num <= den || num > den {
            return Err(Error::param(format!(
                "tau must lie in (1/2, 1], got {num}/{den}"
            )));
        }
        Ok(Self { num, den })
    }

    pub fn numerator(self) -> u64 {
        self.num
    }

    pub fn denominator(self) -> u64 {
        self.den
    }

    pub fn value(self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// Exact test of `hits / total >= tau`.
    pub fn accepts(self, hits: u64, total: u64) -> bool {
        u128::from(hits) * u128::from(self.den) >= u128::from(self.num) * u128::from(total)
    }

    /// `ceil(n * tau)`, the smallest match count that passes for `n` bits.
    pub fn min_matches(self, n: u64) -> u64 {
        let prod = u128::from(n) * u128::from(self.num);
        prod.div_ceil(u128::from(self.den)) as u64
    }
}

impl fmt::Display for Tau {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

impl FromStr for Tau {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (a, b) = s
            .split_once('/')
            .ok_or_else(|| Error::param(format!("tau must be a fraction like 27/32, got {s:?}")))?;
        let parse = |t: &str| {
            t.trim()
                .parse::<u64>()
                .map_err(|e| Error::param(format!("bad tau component {t:?}: {e}")))
        };
        Tau::new(parse(a)?, parse(b)?)
    }
}

impl Serialize for Tau {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Tau {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// `Pr(B >= m)` for `B ~ Binomial(n, p)`.
///
/// Terms are generated by the multiplicative recurrence in log space and
/// summed upward from `m` with Kahan compensation.
pub fn binomial_tail(n: u64, p: f64, m: u64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::param(format!("probability must lie in [0, 1], got {p}")));
    }
    if m == 0 {
        return Ok(1.0);
    }
    if m > n {
        return Ok(0.0);
    }
    if p == 0.0 {
        return Ok(0.0);
    }
    if p == 1.0 {
        return Ok(1.0);
    }

    let ln_p = p.ln();
    let ln_q = (-p).ln_1p();
    // ln C(n, m) built from the recurrence C(n, k+1) = C(n, k) (n-k)/(k+1).
    let mut ln_choose = 0.0;
    for k in 0..m {
        ln_choose += ((n - k) as f64).ln() - ((k + 1) as f64).ln();
    }
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    let mut k = m;
    loop {
        let term = (ln_choose + k as f64 * ln_p + (n - k) as f64 * ln_q).exp();
        let y = term - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
        if k == n {
            break;
        }
        ln_choose += ((n - k) as f64).ln() - ((k + 1) as f64).ln();
        k += 1;
    }
    Ok(sum.min(1.0))
}

/// Theoretical per-frame false-positive rate of threshold `tau` for `n` bits.
pub fn fpr_of_tau(n: u64, tau: Tau) -> Result<f64> {
    binomial_tail(n, 0.5, tau.min_matches(n))
}

/// Smallest `tau = m / n` with `Pr(B >= m) < eta`, `B ~ Binomial(n, 1/2)`.
pub fn select_tau(n: u64, eta: f64) -> Result<Tau> {
    if n == 0 {
        return Err(Error::param("watermark length must be at least 1"));
    }
    check_eta(eta)?;
    // m must exceed n/2 for tau to lie in (1/2, 1].
    for m in (n / 2 + 1)..=n {
        if binomial_tail(n, 0.5, m)? < eta {
            return Tau::new(m, n);
        }
    }
    Err(Error::Infeasible(format!(
        "no threshold over {n} bits reaches a false-positive rate below {eta}"
    )))
}

/// Smallest frame count `k` with `Pr(B >= k) <= eta`, `B ~ Binomial(frames, p)`.
pub fn select_k(frames: u64, p: f64, eta: f64) -> Result<u64> {
    check_eta(eta)?;
    for m in 0..=frames {
        if binomial_tail(frames, p, m)? <= eta {
            return Ok(m);
        }
    }
    Err(Error::Infeasible(format!(
        "Pr(B >= {frames}) for B ~ Binomial({frames}, {p}) exceeds {eta}"
    )))
}

fn check_eta(eta: f64) -> Result<()> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::param(format!("eta must lie in (0, 1), got {eta}")));
    }
    Ok(())
}

/// Everything the CLI reports for a threshold query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub n: u64,
    pub eta: f64,
    pub tau: Tau,
    pub m: u64,
    pub fpr: f64,
    pub frames: Option<u64>,
    pub k: Option<u64>,
}

pub fn threshold_report(n: u64, eta: f64, frames: Option<u64>) -> Result<ThresholdReport> {
    let tau = select_tau(n, eta)?;
    let fpr = fpr_of_tau(n, tau)?;
    let k = frames.map(|f| select_k(f, fpr, eta)).transpose()?;
    Ok(ThresholdReport {
        n,
        eta,
        tau,
        m: tau.numerator(),
        fpr,
        frames,
        k,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_tails() {
        assert!((binomial_tail(2, 0.5, 1).unwrap() - 0.75).abs() < 1e-15);
        assert_eq!(binomial_tail(10, 0.0, 1).unwrap(), 0.0);
        assert_eq!(binomial_tail(10, 0.3, 0).unwrap(), 1.0);
        assert_eq!(binomial_tail(10, 0.3, 11).unwrap(), 0.0);
        assert!(binomial_tail(3, 1.2, 1).is_err());
        assert!(binomial_tail(3, -0.1, 1).is_err());
    }

    #[test]
    fn published_thresholds() {
        assert_eq!(select_tau(96, 1e-4).unwrap(), Tau::new(67, 96).unwrap());
        assert_eq!(select_tau(32, 1e-4).unwrap(), Tau::new(27, 32).unwrap());
        assert!(fpr_of_tau(96, Tau::new(67, 96).unwrap()).unwrap() < 1e-4);
        assert!(fpr_of_tau(32, Tau::new(27, 32).unwrap()).unwrap() < 1e-4);
        assert!(fpr_of_tau(32, Tau::new(26, 32).unwrap()).unwrap() >= 1e-4);
    }

    #[test]
    fn single_bit_threshold() {
        assert_eq!(select_tau(1, 0.6).unwrap(), Tau::new(1, 1).unwrap());
        assert!(matches!(select_tau(4, 1e-4), Err(Error::Infeasible(_))));
    }

    #[test]
    fn frame_threshold() {
        assert_eq!(select_k(14, 0.0, 1e-4).unwrap(), 1);
        assert!(matches!(select_k(5, 0.9, 1e-4), Err(Error::Infeasible(_))));
    }

    #[test]
    fn tau_parsing_and_exact_comparison() {
        let t: Tau = "27/32".parse().unwrap();
        assert_eq!(t.to_string(), "27/32");
        assert!(t.accepts(27, 32));
        assert!(!t.accepts(26, 32));
        // Averages: 27/32 over 3 frames is 81/96.
        assert!(t.accepts(81, 96));
        assert!(!t.accepts(80, 96));
        assert_eq!(t.min_matches(32), 27);
        assert_eq!(t.min_matches(64), 54);
        assert!("1/2".parse::<Tau>().is_err());
        assert!("3/2".parse::<Tau>().is_err());
        assert!("0.8".parse::<Tau>().is_err());
    }

    #[test]
    fn report_contains_k() {
        let r = threshold_report(32, 1e-4, Some(14)).unwrap();
        assert_eq!(r.tau.to_string(), "27/32");
        assert_eq!(r.m, 27);
        assert_eq!(r.k, Some(2));
    }
}
