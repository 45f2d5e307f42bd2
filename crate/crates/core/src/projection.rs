//! Sensitivity budget: signal-side (linear) gains and background-reduction
//! factors combined into an overall improvement of a counting limit.
//!
//! The combination rule is the counting-statistics figure of merit
//! `gain = linear · sqrt(background reduction)`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// A positive factor kept as numerator/denominator so products like
/// `12 · 2 · 1/3` come out exact.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ratio {
    num: f64,
    den: f64,
}

impl Ratio {
    pub fn new(num: f64, den: f64) -> Result<Self> {
        if !(num > 0.0) || !(den > 0.0) || !num.is_finite() || !den.is_finite() {
            return Err(Error::domain(format!("factors must be positive, got {num}/{den}")));
        }
        Ok(Self { num, den })
    }

    pub fn value(&self) -> f64 {
        self.num / self.den
    }

    fn product<'a>(items: impl Iterator<Item = &'a Ratio>) -> Ratio {
        let (num, den) = items.fold((1.0, 1.0), |(n, d), r| (n * r.num, d * r.den));
        Ratio { num, den }
    }
}

impl FromStr for Ratio {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parse = |t: &str| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("cannot parse factor {s:?}")))
        };
        match s.split_once('/') {
            Some((n, d)) => Ratio::new(parse(n)?, parse(d)?),
            None => Ratio::new(parse(s)?, 1.0),
        }
    }
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den == 1.0 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

impl Serialize for Ratio {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.den == 1.0 {
            s.serialize_f64(self.num)
        } else {
            s.serialize_str(&self.to_string())
        }
    }
}

impl<'de> Deserialize<'de> for Ratio {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(x) => Ratio::new(x, 1.0),
            Raw::Text(t) => t.parse(),
        }
        .map_err(serde::de::Error::custom)
    }
}

/// Closed interval of positive reals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub low: f64,
    pub high: f64,
}

impl Interval {
    pub fn point(x: f64) -> Self {
        Self { low: x, high: x }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.low <= x && x <= self.high
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetFactor {
    pub name: String,
    pub low: Ratio,
    pub high: Ratio,
}

impl BudgetFactor {
    pub fn scalar(name: impl Into<String>, factor: Ratio) -> Self {
        Self {
            name: name.into(),
            low: factor,
            high: factor,
        }
    }

    pub fn range(name: impl Into<String>, low: Ratio, high: Ratio) -> Result<Self> {
        if low.value() > high.value() {
            return Err(Error::domain(format!("factor range {low}..{high} is reversed")));
        }
        Ok(Self {
            name: name.into(),
            low,
            high,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImprovementBudget {
    pub linear: Vec<BudgetFactor>,
    pub background: Vec<BudgetFactor>,
}

fn r(x: f64) -> Ratio {
    Ratio::new(x, 1.0).expect("positive literal")
}

impl ImprovementBudget {
    /// The copper-strip upgrade budget: SDD readout, higher current, shorter
    /// conductor, and the background-side improvements.
    pub fn vip2_over_vip() -> Self {
        Self {
            linear: vec![
                BudgetFactor::scalar("acceptance", r(12.0)),
                BudgetFactor::scalar("increase current", r(2.0)),
                BudgetFactor::scalar("reduced length", Ratio::new(1.0, 3.0).unwrap()),
            ],
            background: vec![
                BudgetFactor::scalar("energy resolution", r(4.0)),
                BudgetFactor::scalar("reduced active area", r(20.0)),
                BudgetFactor::range("better shielding and veto", r(5.0), r(10.0)).unwrap(),
                BudgetFactor::scalar("higher SDD efficiency", Ratio::new(1.0, 2.0).unwrap()),
            ],
        }
    }

    pub fn validate(&self) -> Result<()> {
        for f in self.linear.iter().chain(&self.background) {
            if f.low.value() > f.high.value() {
                return Err(Error::domain(format!("factor {} has low > high", f.name)));
            }
        }
        Ok(())
    }
}

fn interval_product(factors: &[BudgetFactor]) -> Interval {
    Interval {
        low: Ratio::product(factors.iter().map(|f| &f.low)).value(),
        high: Ratio::product(factors.iter().map(|f| &f.high)).value(),
    }
}

/// Product of the signal-side factors. Ranged entries contribute their low end.
pub fn total_linear_factor(budget: &ImprovementBudget) -> Result<f64> {
    if budget.linear.is_empty() {
        return Err(Error::domain("budget has no linear factors"));
    }
    budget.validate()?;
    Ok(interval_product(&budget.linear).low)
}

pub fn background_reduction(budget: &ImprovementBudget) -> Result<Interval> {
    if budget.background.is_empty() {
        return Err(Error::domain("budget has no background factors"));
    }
    budget.validate()?;
    Ok(interval_product(&budget.background))
}

/// `linear · sqrt(background reduction)` as an interval.
pub fn overall_improvement(budget: &ImprovementBudget) -> Result<Interval> {
    let linear = total_linear_factor(budget)?;
    let bg = background_reduction(budget)?;
    Ok(Interval {
        low: linear * bg.low.sqrt(),
        high: linear * bg.high.sqrt(),
    })
}

pub(crate) fn fmt_factor(x: f64) -> String {
    if (x - x.round()).abs() <= 1e-9 * x.abs().max(1.0) {
        format!("{}", x.round())
    } else {
        format!("{x:.3}")
    }
}

/// The three summary rows of a budget report.
pub fn summary_rows(budget: &ImprovementBudget) -> Result<Vec<String>> {
    let lin = total_linear_factor(budget)?;
    let bg = background_reduction(budget)?;
    let all = overall_improvement(budget)?;
    Ok(vec![
        format!("total linear factor {}", fmt_factor(lin)),
        format!("background reduction {} - {}", fmt_factor(bg.low), fmt_factor(bg.high)),
        format!("overall improvement {:.0} - {:.0}", all.low, all.high),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear_only(factors: &[f64]) -> ImprovementBudget {
        ImprovementBudget {
            linear: factors.iter().map(|&f| BudgetFactor::scalar("f", r(f))).collect(),
            background: vec![BudgetFactor::scalar("unit", r(1.0))],
        }
    }

    #[test]
    fn upgrade_budget_rows() {
        let b = ImprovementBudget::vip2_over_vip();
        assert_eq!(total_linear_factor(&b).unwrap(), 8.0);
        assert_eq!(background_reduction(&b).unwrap(), Interval { low: 200.0, high: 400.0 });
        let o = overall_improvement(&b).unwrap();
        assert!((o.low - 8.0 * 200f64.sqrt()).abs() < 1e-12);
        assert_eq!(o.high, 160.0);
        assert!(o.contains(120.0));
        assert_eq!(o.low.round(), 113.0);
        let rows = summary_rows(&b).unwrap();
        assert_eq!(rows[0], "total linear factor 8");
        assert_eq!(rows[1], "background reduction 200 - 400");
        assert_eq!(rows[2], "overall improvement 113 - 160");
    }

    #[test]
    fn trivial_products() {
        assert_eq!(total_linear_factor(&linear_only(&[5.0])).unwrap(), 5.0);
        assert_eq!(total_linear_factor(&linear_only(&[1.0, 1.0, 1.0])).unwrap(), 1.0);
        let b = linear_only(&[3.0]);
        assert_eq!(background_reduction(&b).unwrap(), Interval::point(1.0));
        assert_eq!(overall_improvement(&b).unwrap(), Interval::point(3.0));
        let mixed = ImprovementBudget {
            linear: vec![BudgetFactor::scalar("x", r(1.0))],
            background: vec![
                BudgetFactor::range("r", r(2.0), r(3.0)).unwrap(),
                BudgetFactor::scalar("s", r(10.0)),
            ],
        };
        assert_eq!(background_reduction(&mixed).unwrap(), Interval { low: 20.0, high: 30.0 });
    }

    #[test]
    fn quadrupled_background_doubles_overall() {
        let mut b = ImprovementBudget::vip2_over_vip();
        let before = overall_improvement(&b).unwrap();
        b.background.push(BudgetFactor::scalar("x4", r(4.0)));
        let after = overall_improvement(&b).unwrap();
        assert!((after.low - 2.0 * before.low).abs() < 1e-9);
        assert!((after.high - 2.0 * before.high).abs() < 1e-9);
    }

    #[test]
    fn errors() {
        let empty = ImprovementBudget { linear: vec![], background: vec![] };
        assert!(total_linear_factor(&empty).is_err());
        assert!(background_reduction(&empty).is_err());
        assert!(BudgetFactor::range("r", r(3.0), r(2.0)).is_err());
        assert!(Ratio::new(0.0, 1.0).is_err());
        assert!("abc".parse::<Ratio>().is_err());
    }

    #[test]
    fn ratio_parsing() {
        let x: Ratio = "1/3".parse().unwrap();
        assert_eq!(x.value(), 1.0 / 3.0);
        let y: Ratio = " 12 ".parse().unwrap();
        assert_eq!(y.value(), 12.0);
        let json = serde_json::to_string(&x).unwrap();
        assert_eq!(json, "\"1/3\"");
        let back: Ratio = serde_json::from_str(&json).unwrap();
        assert_eq!(back, x);
    }

    proptest::proptest! {
        #[test]
        fn order_independent(mut fs in proptest::collection::vec(0.1f64..50.0, 1..7), seed in 0u64..1000) {
            let a = total_linear_factor(&linear_only(&fs)).unwrap();
            let n = fs.len();
            fs.rotate_left((seed as usize) % n);
            fs.reverse();
            let b = total_linear_factor(&linear_only(&fs)).unwrap();
            proptest::prop_assert!(((a - b) / a).abs() < 1e-12);
        }

        #[test]
        fn monotone_in_each_factor(fs in proptest::collection::vec(0.1f64..50.0, 1..5), idx in 0usize..4, bump in 1.0f64..5.0) {
            let base = ImprovementBudget {
                linear: fs.iter().map(|&f| BudgetFactor::scalar("l", r(f))).collect(),
                background: fs.iter().map(|&f| BudgetFactor::scalar("b", r(f))).collect(),
            };
            let i = idx % fs.len();
            let o0 = overall_improvement(&base).unwrap();
            let mut up_l = base.clone();
            up_l.linear[i] = BudgetFactor::scalar("l", r(fs[i] * bump));
            let mut up_b = base.clone();
            up_b.background[i] = BudgetFactor::scalar("b", r(fs[i] * bump));
            for up in [up_l, up_b] {
                let o1 = overall_improvement(&up).unwrap();
                proptest::prop_assert!(o1.low >= o0.low * (1.0 - 1e-12));
                proptest::prop_assert!(o1.high >= o0.high * (1.0 - 1e-12));
            }
        }
    }
}
