//! The `params` report: closed-form thresholds for one network size and,
//! optionally, one coalition.

use std::fmt;

use anyhow::Result;
use serde::Serialize;

use trap_core::params::{
    compute_m, compute_t0, effective_m, feasible, format_rational, max_tolerated_byzantine, min_deposit_coeff,
    worst_case_deposit_coeff, DepositBound, Rational,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CoalitionFigures {
    pub k: u32,
    pub t: u32,
    pub feasible: bool,
    pub m: i64,
    pub effective_m: u32,
    /// `None` when infeasible or when no baiter is needed.
    pub min_deposit_coeff: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ParamsReport {
    pub n: u32,
    pub t0: u32,
    pub worst_case_deposit_coeff: Option<String>,
    pub deposit_coeff: Option<String>,
    pub gain: String,
    pub deposit: Option<String>,
    pub reward: Option<String>,
    pub max_tolerated_byzantine: Option<u32>,
    pub coalition: Option<CoalitionFigures>,
}

pub fn params_report(n: u32, coalition: Option<(u32, u32)>, gain: Rational, d: Option<Rational>) -> Result<ParamsReport> {
    let t0 = compute_t0(n)?;
    let worst = worst_case_deposit_coeff(n);
    let d_eff = d.or(worst);
    let coalition = coalition.map(|(k, t)| {
        let min = match min_deposit_coeff(n, k, t) {
            Ok(DepositBound::Above(r)) => Some(format_rational(&r)),
            _ => None,
        };
        CoalitionFigures { k, t, feasible: feasible(n, k, t), m: compute_m(n, k, t), effective_m: effective_m(n, k, t), min_deposit_coeff: min }
    });
    let deposit = d_eff.map(|d| d * gain);
    Ok(ParamsReport {
        n,
        t0,
        worst_case_deposit_coeff: worst.as_ref().map(format_rational),
        deposit_coeff: d_eff.as_ref().map(format_rational),
        gain: format_rational(&gain),
        deposit: deposit.as_ref().map(format_rational),
        reward: deposit.map(|l| format_rational(&(l * Rational::from_integer(t0 as i128)))),
        max_tolerated_byzantine: d_eff.map(|d| max_tolerated_byzantine(n, d)),
        coalition,
    })
}

impl fmt::Display for ParamsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let or_dash = |v: &Option<String>| v.clone().unwrap_or_else(|| "-".into());
        writeln!(f, "n                         {}", self.n)?;
        writeln!(f, "t0                        {}", self.t0)?;
        if let Some(c) = &self.coalition {
            writeln!(f, "k, t                      {}, {}", c.k, c.t)?;
            writeln!(f, "feasible                  {}", if c.feasible { "yes" } else { "no (infeasible)" })?;
            writeln!(f, "m                         {} (effective {})", c.m, c.effective_m)?;
            writeln!(f, "min deposit coeff         {}", or_dash(&c.min_deposit_coeff))?;
        }
        writeln!(f, "worst-case deposit coeff  {}", or_dash(&self.worst_case_deposit_coeff))?;
        writeln!(f, "deposit coeff d           {}", or_dash(&self.deposit_coeff))?;
        writeln!(f, "gain G                    {}", self.gain)?;
        writeln!(f, "deposit L = dG            {}", or_dash(&self.deposit))?;
        writeln!(f, "reward R = t0 L           {}", or_dash(&self.reward))?;
        write!(f, "max tolerated t           {}", self.max_tolerated_byzantine.map_or("-".into(), |t| t.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use trap_core::params::parse_rational;

    #[test]
    fn examples() {
        let g = Rational::from_integer(60);
        let r = params_report(100, None, g, Some(parse_rational("0.01").unwrap())).unwrap();
        assert_eq!(r.max_tolerated_byzantine, Some(30));
        let r = params_report(100, None, g, Some(parse_rational("1/300").unwrap())).unwrap();
        assert_eq!(r.max_tolerated_byzantine, Some(24));
        let r = params_report(10, Some((2, 2)), g, None).unwrap();
        let c = r.coalition.as_ref().unwrap();
        assert_eq!((c.m, c.min_deposit_coeff.as_deref()), (1, Some("1/6")));
        assert_eq!(r.worst_case_deposit_coeff.as_deref(), Some("1/3"));
        let r = params_report(7, Some((1, 2)), g, None).unwrap();
        assert!(!r.coalition.unwrap().feasible);
    }
}
