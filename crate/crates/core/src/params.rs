//! Closed-form thresholds, feasibility, and deposit/reward arithmetic.
//!
//! Everything here is exact: integers for counts, [`Rational`] for currency
//! and coefficients. No floating point enters a comparison.

use num_integer::Integer;
use num_rational::Ratio;
use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Rational = Ratio<i128>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParamsError {
    #[error("player count must be at least 1")]
    NoPlayers,
    #[error("configuration n={n}, k={k}, t={t} is not feasible")]
    Infeasible { n: u32, k: u32, t: u32 },
    #[error("the rational bound k must be at least 1")]
    NoRationals,
    #[error("no deposit satisfies the bound: t0 - m + 1 = {0} is not positive")]
    NoValidDeposit(i64),
    #[error("baiter count must be at least 1")]
    NoBaiters,
    #[error("{0} must be non-negative")]
    Negative(&'static str),
    #[error("cannot parse rational {0:?}")]
    BadRational(String),
}

pub fn compute_t0(n: u32) -> Result<u32, ParamsError> {
    if n == 0 {
        return Err(ParamsError::NoPlayers);
    }
    Ok(n.div_ceil(3) - 1)
}

fn t0_of(n: u32) -> u32 {
    n.div_ceil(3).saturating_sub(1)
}

/// `n > max(3k/2 + 3t, 2(k+t))`, doubled to stay in integers.
pub fn feasible(n: u32, k: u32, t: u32) -> bool {
    let (n, k, t) = (n as u64, k as u64, t as u64);
    2 * n > 3 * k + 6 * t && n > 2 * (k + t)
}

/// `floor((k+t-n)/2 + t0) + 1`. Can be zero or negative for small coalitions.
pub fn compute_m(n: u32, k: u32, t: u32) -> i64 {
    let numer = k as i64 + t as i64 - n as i64 + 2 * t0_of(n) as i64;
    Integer::div_floor(&numer, &2) + 1
}

pub fn effective_m(n: u32, k: u32, t: u32) -> u32 {
    compute_m(n, k, t).max(0) as u32
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum DepositBound {
    /// Any coefficient strictly above this value makes baiting dominant.
    Above(Rational),
    /// The coalition is too small to split the correct players; no baiter is needed.
    NoBaitNeeded,
}

fn bait_bound(k: u32, t0: u32, m: i64) -> Result<Rational, ParamsError> {
    if k == 0 {
        return Err(ParamsError::NoRationals);
    }
    let slack = t0 as i64 - m + 1;
    if slack <= 0 {
        return Err(ParamsError::NoValidDeposit(slack));
    }
    Ok(Rational::new(m as i128, k as i128 * slack as i128))
}

pub fn min_deposit_coeff(n: u32, k: u32, t: u32) -> Result<DepositBound, ParamsError> {
    if k == 0 {
        return Err(ParamsError::NoRationals);
    }
    if !feasible(n, k, t) {
        return Err(ParamsError::Infeasible { n, k, t });
    }
    let m = compute_m(n, k, t);
    if m <= 0 {
        return Ok(DepositBound::NoBaitNeeded);
    }
    bait_bound(k, compute_t0(n)?, m).map(DepositBound::Above)
}

/// Largest deposit bound over every feasible coalition with at least one
/// rational member.
///
/// The maximization charges at least one baiter even where `m(k,t)` is not
/// positive: exposing a coalition always takes a player willing to bait, and
/// without this the coalition `k=1, t=t0` would drop out of the domain.
/// Returns `None` when no coalition qualifies.
pub fn worst_case_deposit_coeff(n: u32) -> Option<Rational> {
    let t0 = t0_of(n);
    let mut best: Option<Rational> = None;
    for k in 1..n {
        for t in 0..n {
            if !feasible(n, k, t) {
                continue;
            }
            let m = compute_m(n, k, t).max(1);
            if let Ok(b) = bait_bound(k, t0, m) {
                if best.is_none_or(|cur| b > cur) {
                    best = Some(b);
                }
            }
        }
    }
    best
}

/// Largest integer `t` strictly below `t0 + 1 - 1/(t0 d)`, floored at zero.
pub fn max_tolerated_byzantine(n: u32, d: Rational) -> u32 {
    let t0 = t0_of(n);
    if t0 == 0 || !d.is_positive() {
        return 0;
    }
    let bound = Rational::from_integer(t0 as i128 + 1) - (Rational::from_integer(t0 as i128) * d).recip();
    if !bound.is_positive() {
        return 0;
    }
    // Strictly below: for an integral bound the answer is bound - 1.
    let fl = bound.floor().to_integer();
    let t = if bound.is_integer() { fl - 1 } else { fl };
    t.max(0) as u32
}

pub fn win_prob(m: u32) -> Rational {
    Rational::new(1, m.max(1) as i128)
}

pub fn lose_prob(m: u32) -> Rational {
    Rational::new(m.max(1) as i128 - 1, m.max(1) as i128)
}

pub fn utility_bait(m: u32, reward: Rational, deposit: Rational) -> Result<Rational, ParamsError> {
    if m == 0 {
        return Err(ParamsError::NoBaiters);
    }
    Ok(win_prob(m) * reward - lose_prob(m) * deposit)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtocolParams {
    pub n: u32,
    pub k: u32,
    pub t: u32,
    pub t0: u32,
    pub gain_total: Rational,
    pub deposit_coeff: Rational,
    pub delta: Rational,
}

impl ProtocolParams {
    pub fn new(n: u32, k: u32, t: u32, gain_total: Rational, deposit_coeff: Rational) -> Result<Self, ParamsError> {
        let delta = gain_total / Rational::from_integer(1_000_000);
        Self::with_delta(n, k, t, gain_total, deposit_coeff, delta)
    }

    pub fn with_delta(
        n: u32,
        k: u32,
        t: u32,
        gain_total: Rational,
        deposit_coeff: Rational,
        delta: Rational,
    ) -> Result<Self, ParamsError> {
        let t0 = compute_t0(n)?;
        if gain_total.is_negative() {
            return Err(ParamsError::Negative("gain"));
        }
        if deposit_coeff.is_negative() {
            return Err(ParamsError::Negative("deposit coefficient"));
        }
        if delta.is_negative() {
            return Err(ParamsError::Negative("delta"));
        }
        Ok(Self { n, k, t, t0, gain_total, deposit_coeff, delta })
    }

    /// Parameters with the deposit set to the worst-case coefficient, as used
    /// by corollary mode. Falls back to zero when no coalition qualifies.
    pub fn corollary(n: u32, k: u32, t: u32, gain_total: Rational, delta: Rational) -> Result<Self, ParamsError> {
        let d = worst_case_deposit_coeff(n).unwrap_or_else(Rational::zero);
        Self::with_delta(n, k, t, gain_total, d, delta)
    }

    pub fn feasible(&self) -> bool {
        feasible(self.n, self.k, self.t)
    }

    pub fn m(&self) -> i64 {
        compute_m(self.n, self.k, self.t)
    }

    pub fn effective_m(&self) -> u32 {
        effective_m(self.n, self.k, self.t)
    }

    /// Votes or deliveries needed for a quorum.
    pub fn quorum(&self) -> usize {
        (self.n - self.t0) as usize
    }

    /// Smallest set guaranteed to contain a correct player when at most t0 are faulty.
    pub fn small_quorum(&self) -> usize {
        self.t0 as usize + 1
    }

    pub fn gain_share(&self) -> Rational {
        if self.k == 0 {
            Rational::zero()
        } else {
            self.gain_total / Rational::from_integer(self.k as i128)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[serde(rename_all = "kebab-case")]
pub enum DepositMode {
    /// `L = d * G`.
    Plain,
    /// `L = d * G + delta`.
    Corollary,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FinancialParams {
    pub deposit: Rational,
    pub reward: Rational,
}

impl FinancialParams {
    pub fn derive(params: &ProtocolParams, mode: DepositMode) -> Self {
        let mut deposit = params.deposit_coeff * params.gain_total;
        if mode == DepositMode::Corollary {
            deposit += params.delta;
        }
        let reward = deposit * Rational::from_integer(params.t0 as i128);
        Self { deposit, reward }
    }
}

pub fn dominance_check(params: &ProtocolParams, fin: &FinancialParams) -> bool {
    let m = params.effective_m();
    if m == 0 || params.k == 0 {
        return false;
    }
    let Ok(bait) = utility_bait(m, fin.reward, fin.deposit) else {
        return false;
    };
    bait > params.gain_share() && Rational::from_integer(params.t0 as i128) * fin.deposit >= fin.reward
}

/// Parses `3`, `-2`, `1/300`, or a decimal such as `0.01`.
pub fn parse_rational(s: &str) -> Result<Rational, ParamsError> {
    let bad = || ParamsError::BadRational(s.to_string());
    let s = s.trim();
    if let Some((num, den)) = s.split_once('/') {
        let num: i128 = num.trim().parse().map_err(|_| bad())?;
        let den: i128 = den.trim().parse().map_err(|_| bad())?;
        if den == 0 {
            return Err(bad());
        }
        return Ok(Rational::new(num, den));
    }
    if let Some((whole, frac)) = s.split_once('.') {
        if frac.is_empty() || !frac.bytes().all(|b| b.is_ascii_digit()) || frac.len() > 30 {
            return Err(bad());
        }
        let negative = whole.starts_with('-');
        let whole: i128 = if whole.is_empty() || whole == "-" { 0 } else { whole.parse().map_err(|_| bad())? };
        let scale = 10i128.pow(frac.len() as u32);
        let frac: i128 = frac.parse().map_err(|_| bad())?;
        let magnitude = whole.abs() * scale + frac;
        return Ok(Rational::new(if negative { -magnitude } else { magnitude }, scale));
    }
    s.parse::<i128>().map(Rational::from_integer).map_err(|_| bad())
}

pub fn format_rational(r: &Rational) -> String {
    if r.is_integer() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(n: i128, d: i128) -> Rational {
        Rational::new(n, d)
    }

    #[test]
    fn t0_values() {
        assert_eq!(compute_t0(7), Ok(2));
        assert_eq!(compute_t0(3), Ok(0));
        assert_eq!(compute_t0(100), Ok(33));
        assert_eq!(compute_t0(0), Err(ParamsError::NoPlayers));
    }

    #[test]
    fn feasibility_examples() {
        assert!(feasible(10, 2, 2));
        assert!(!feasible(7, 1, 2));
        assert!(feasible(4, 0, 0));
    }

    #[test]
    fn m_examples() {
        assert_eq!(compute_m(10, 2, 2), 1);
        assert_eq!(compute_m(13, 3, 2), 1);
        assert_eq!(compute_m(100, 20, 10), -1);
        assert_eq!(effective_m(100, 20, 10), 0);
    }

    #[test]
    fn deposit_bounds() {
        assert_eq!(min_deposit_coeff(10, 2, 2), Ok(DepositBound::Above(r(1, 6))));
        assert_eq!(min_deposit_coeff(13, 3, 2), Ok(DepositBound::Above(r(1, 12))));
        assert_eq!(min_deposit_coeff(10, 2, 0), Ok(DepositBound::NoBaitNeeded));
        assert_eq!(min_deposit_coeff(10, 0, 2), Err(ParamsError::NoRationals));
        assert!(matches!(min_deposit_coeff(7, 1, 2), Err(ParamsError::Infeasible { .. })));
    }

    #[test]
    fn worst_case_examples() {
        assert_eq!(worst_case_deposit_coeff(10), Some(r(1, 3)));
        assert_eq!(worst_case_deposit_coeff(100), Some(r(1, 33)));
        assert_eq!(worst_case_deposit_coeff(9), Some(r(1, 2)));
        assert_eq!(worst_case_deposit_coeff(2), None);
    }

    #[test]
    fn tolerated_byzantine() {
        assert_eq!(max_tolerated_byzantine(100, r(1, 100)), 30);
        assert_eq!(max_tolerated_byzantine(100, r(1, 300)), 24);
        assert_eq!(max_tolerated_byzantine(100, r(1_000_000, 1)), 33);
        assert_eq!(max_tolerated_byzantine(4, r(1, 1000)), 0);
    }

    #[test]
    fn bait_utility() {
        let i = |v| Rational::from_integer(v);
        assert_eq!(utility_bait(1, i(10), i(2)), Ok(i(10)));
        assert_eq!(utility_bait(2, i(10), i(2)), Ok(i(4)));
        assert_eq!(utility_bait(5, i(10), i(10)), Ok(i(-6)));
        assert_eq!(utility_bait(0, i(10), i(2)), Err(ParamsError::NoBaiters));
    }

    #[test]
    fn dominance_examples() {
        let i = |v| Rational::from_integer(v);
        let p = ProtocolParams::corollary(10, 2, 2, i(60), i(1)).unwrap();
        let fin = FinancialParams::derive(&p, DepositMode::Corollary);
        assert_eq!(fin.deposit, i(21));
        assert_eq!(fin.reward, i(63));
        assert!(dominance_check(&p, &fin));

        let weak = FinancialParams { deposit: i(1), reward: i(3) };
        assert!(!dominance_check(&p, &weak));

        let free = ProtocolParams::new(10, 2, 2, i(0), r(1, 3)).unwrap();
        assert!(dominance_check(&free, &FinancialParams { deposit: i(2), reward: i(6) }));
    }

    #[test]
    fn parse_forms() {
        assert_eq!(parse_rational("0.01"), Ok(r(1, 100)));
        assert_eq!(parse_rational("1/300"), Ok(r(1, 300)));
        assert_eq!(parse_rational("-1.5"), Ok(r(-3, 2)));
        assert_eq!(parse_rational("7"), Ok(r(7, 1)));
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("x").is_err());
        assert_eq!(format_rational(&r(2, 6)), "1/3");
    }
}
