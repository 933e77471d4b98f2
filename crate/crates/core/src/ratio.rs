//! Exact ratios for supports, confidences and percentages.
//!
//! Everything that is compared against a threshold stays a `Ratio`; decimal
//! strings only appear at the rendering boundary.

use std::cmp::Ordering;

use num_traits::{One, Zero};

use crate::error::{Error, Result};

pub type Ratio = num_rational::Ratio<u64>;

/// Parses `0.2`, `1`, `1.0` or `3/4` into an exact ratio.
pub fn parse_ratio(text: &str) -> Option<Ratio> {
    let text = text.trim();
    if let Some((num, den)) = text.split_once('/') {
        let num: u64 = num.trim().parse().ok()?;
        let den: u64 = den.trim().parse().ok()?;
        return (den != 0).then(|| Ratio::new(num, den));
    }
    let (int, frac) = text.split_once('.').unwrap_or((text, ""));
    if int.is_empty() && frac.is_empty() {
        return None;
    }
    if !int.chars().all(|c| c.is_ascii_digit()) || !frac.chars().all(|c| c.is_ascii_digit()) {
        return None;
    }
    if frac.len() > 18 {
        return None;
    }
    let den = 10u64.checked_pow(frac.len() as u32)?;
    let int: u64 = if int.is_empty() { 0 } else { int.parse().ok()? };
    let frac_val: u64 = if frac.is_empty() { 0 } else { frac.parse().ok()? };
    let num = int.checked_mul(den)?.checked_add(frac_val)?;
    Some(Ratio::new(num, den))
}

/// Parses a threshold that must lie in `(0, 1]`.
pub fn parse_threshold(text: &str) -> Result<Ratio> {
    let r = parse_ratio(text).ok_or_else(|| Error::Threshold(text.to_string()))?;
    check_threshold(r)?;
    Ok(r)
}

pub fn check_threshold(r: Ratio) -> Result<()> {
    if r.is_zero() || r > Ratio::one() {
        return Err(Error::Threshold(render(r, 3)));
    }
    Ok(())
}

/// Renders `r` with exactly `places` decimals, rounding half to even.
pub fn render(r: Ratio, places: u32) -> String {
    let scale = 10u128.pow(places);
    let num = *r.numer() as u128 * scale;
    let den = *r.denom() as u128;
    let mut q = num / den;
    let rem = num % den;
    match (2 * rem).cmp(&den) {
        Ordering::Greater => q += 1,
        Ordering::Equal if q % 2 == 1 => q += 1,
        _ => {}
    }
    let int = q / scale;
    if places == 0 {
        return int.to_string();
    }
    let frac = q % scale;
    format!("{int}.{frac:0width$}", width = places as usize)
}

/// Percentage with one decimal, e.g. `19.0%`.
pub fn render_percent(r: Ratio) -> String {
    format!("{}%", render(r * Ratio::from_integer(100), 1))
}

/// `num/den` without reduction side effects in the output.
pub fn render_exact(r: Ratio) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

/// Serde adapter writing a ratio as an exact `num/den` string.
pub mod exact {
    use serde::{Deserialize, Deserializer, Serializer};

    use super::{parse_ratio, render_exact, Ratio};

    pub fn serialize<S: Serializer>(r: &Ratio, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&render_exact(*r))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Ratio, D::Error> {
        let text = String::deserialize(d)?;
        parse_ratio(&text).ok_or_else(|| serde::de::Error::custom(format!("bad ratio {text:?}")))
    }
}
