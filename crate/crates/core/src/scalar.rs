//! Weight arithmetic.
//!
//! Every quantity the engine multiplies or sums (prior weights, outcome
//! likelihoods, sensor likelihoods, belief masses) is a [`Scalar`]. The
//! floating point instances are the default; [`Rational`] gives exact
//! arithmetic for domains whose models are all discrete tables.

use std::fmt::{Debug, Display};
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Num, Signed, ToPrimitive, Zero};

/// Arbitrary precision rational used by the exact instantiation.
pub type Rational = BigRational;

/// Numeric type used for weights and likelihoods.
pub trait Scalar: Num + Clone + PartialOrd + Debug + Display + Send + Sync + 'static {
    /// Parses a decimal literal (`0.1`, `1e-3`) or, for exact types, a
    /// fraction (`1/3`). Exact types parse decimals without rounding.
    fn from_decimal(text: &str) -> Option<Self>;

    /// Converts a float. Exact types go through the shortest round-trip
    /// decimal representation, so `0.1_f64` becomes exactly `1/10`.
    fn from_f64(value: f64) -> Option<Self>;

    fn to_f64(&self) -> f64;

    /// Density of `N(z; mean, variance)`. `None` when the type cannot
    /// represent transcendental values.
    fn gaussian_density(z: f64, mean: f64, variance: f64) -> Option<Self>;

    /// Slack used when comparing a computed degree of belief with a
    /// threshold. Zero for exact types.
    fn tolerance() -> f64;

    fn is_exact() -> bool {
        Self::tolerance() == 0.0
    }

    fn is_positive(&self) -> bool {
        *self > Self::zero()
    }
}

fn gaussian_f64(z: f64, mean: f64, variance: f64) -> f64 {
    let diff = z - mean;
    (-(diff * diff) / (2.0 * variance)).exp() / (2.0 * std::f64::consts::PI * variance).sqrt()
}

impl Scalar for f64 {
    fn from_decimal(text: &str) -> Option<Self> {
        match text.split_once('/') {
            Some((num, den)) => {
                let den = den.trim().parse::<f64>().ok()?;
                (den != 0.0).then(|| num.trim().parse::<f64>().ok().map(|n| n / den))?
            }
            None => text.trim().parse().ok(),
        }
        .filter(|v: &f64| v.is_finite())
    }

    fn from_f64(value: f64) -> Option<Self> {
        value.is_finite().then_some(value)
    }

    fn to_f64(&self) -> f64 {
        *self
    }

    fn gaussian_density(z: f64, mean: f64, variance: f64) -> Option<Self> {
        Some(gaussian_f64(z, mean, variance))
    }

    fn tolerance() -> f64 {
        1e-12
    }
}

impl Scalar for f32 {
    fn from_decimal(text: &str) -> Option<Self> {
        f64::from_decimal(text).map(|v| v as f32)
    }

    fn from_f64(value: f64) -> Option<Self> {
        value.is_finite().then_some(value as f32)
    }

    fn to_f64(&self) -> f64 {
        f64::from(*self)
    }

    fn gaussian_density(z: f64, mean: f64, variance: f64) -> Option<Self> {
        Some(gaussian_f64(z, mean, variance) as f32)
    }

    fn tolerance() -> f64 {
        1e-6
    }
}

/// Exact parse of `[-]digits[.digits][e[-]digits]`.
fn parse_decimal_exact(text: &str) -> Option<Rational> {
    let text = text.trim();
    let (mantissa, exponent) = match text.find(['e', 'E']) {
        Some(i) => (&text[..i], text[i + 1..].parse::<i32>().ok()?),
        None => (text, 0),
    };
    let (negative, mantissa) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = mantissa.split_once('.').unwrap_or((mantissa, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let digits = format!("{int_part}{frac_part}");
    let numer = BigInt::from_str(if digits.is_empty() { "0" } else { &digits }).ok()?;
    let scale = exponent - frac_part.len() as i32;
    let ten = BigInt::from(10u32);
    let mut value = if scale >= 0 {
        Rational::from_integer(numer * num_traits::pow(ten, scale as usize))
    } else {
        Rational::new(numer, num_traits::pow(ten, (-scale) as usize))
    };
    if negative {
        value = -value;
    }
    Some(value)
}

impl Scalar for Rational {
    fn from_decimal(text: &str) -> Option<Self> {
        match text.split_once('/') {
            Some((num, den)) => {
                let num = parse_decimal_exact(num)?;
                let den = parse_decimal_exact(den)?;
                (!den.is_zero()).then(|| num / den)
            }
            None => parse_decimal_exact(text),
        }
    }

    fn from_f64(value: f64) -> Option<Self> {
        if !value.is_finite() {
            return None;
        }
        parse_decimal_exact(&format!("{value:e}"))
    }

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or_else(|| {
            if self.is_negative() {
                f64::NEG_INFINITY
            } else {
                f64::INFINITY
            }
        })
    }

    fn gaussian_density(_z: f64, _mean: f64, _variance: f64) -> Option<Self> {
        None
    }

    fn tolerance() -> f64 {
        0.0
    }
}

/// `a / b` rendered as f64, or 0 when `b` is zero.
pub fn ratio<W: Scalar>(a: &W, b: &W) -> f64 {
    if b.is_zero() {
        0.0
    } else if W::is_exact() {
        (a.clone() / b.clone()).to_f64()
    } else {
        a.to_f64() / b.to_f64()
    }
}

pub(crate) fn sum<'a, W: Scalar>(items: impl IntoIterator<Item = &'a W>) -> W {
    items.into_iter().fold(W::zero(), |acc, w| acc + w.clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_decimal_parse() {
        let tenth = Rational::from_decimal("0.1").unwrap();
        assert_eq!(tenth, Rational::new(1.into(), 10.into()));
        assert_eq!(
            Rational::from_decimal("1/3").unwrap(),
            Rational::new(1.into(), 3.into())
        );
        assert_eq!(
            Rational::from_decimal("2.5e-2").unwrap(),
            Rational::new(1.into(), 40.into())
        );
        assert_eq!(
            Rational::from_decimal("-4").unwrap(),
            Rational::from_integer((-4).into())
        );
        assert!(Rational::from_decimal("abc").is_none());
        assert!(Rational::from_decimal("1/0").is_none());
    }

    #[test]
    fn float_to_rational_uses_shortest_repr() {
        assert_eq!(
            <Rational as Scalar>::from_f64(0.4).unwrap(),
            Rational::new(2.into(), 5.into())
        );
    }

    #[test]
    fn gaussian_peak() {
        let peak = f64::gaussian_density(0.0, 0.0, 1.0).unwrap();
        assert!((peak - 0.398_942_280_401_432_7).abs() < 1e-15);
        assert!(Rational::gaussian_density(0.0, 0.0, 1.0).is_none());
    }

    #[test]
    fn ratio_handles_zero_denominator() {
        assert_eq!(ratio(&1.0_f64, &0.0), 0.0);
        assert_eq!(ratio(&1.0_f64, &4.0), 0.25);
    }
}
