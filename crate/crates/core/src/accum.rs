//! Extended-precision accumulation for depletion mass.
//!
//! Depletion contributions can be sixty orders of magnitude below the mass
//! already accumulated, so a plain `f64` sum silently drops them. [`ExtSum`]
//! stores the running total as a floating-point expansion: a list of
//! non-overlapping doubles whose exact sum is the represented value.
//! Additions and scalings are error-free; the expansion is trimmed only
//! below `2^-PRECISION_BITS` relative to its leading component.

use std::cmp::Ordering;
use std::fmt;

use num_bigint::{BigInt, BigUint};
use num_traits::{Signed, Zero};

/// Relative precision retained when trimming an expansion.
pub const PRECISION_BITS: i32 = 400;

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let err = (a - (s - bb)) + (b - bb);
    (s, err)
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

/// Floating-point expansion accumulator.
#[derive(Clone, Default, PartialEq)]
pub struct ExtSum {
    // non-overlapping, increasing magnitude, no zeros
    parts: Vec<f64>,
}

impl ExtSum {
    pub fn new() -> Self {
        Self { parts: Vec::new() }
    }

    pub fn from_f64(x: f64) -> Self {
        let mut s = Self::new();
        s.add(x);
        s
    }

    pub fn is_zero(&self) -> bool {
        self.parts.is_empty()
    }

    pub fn components(&self) -> &[f64] {
        &self.parts
    }

    /// Adds `x` exactly.
    pub fn add(&mut self, x: f64) {
        if x == 0.0 {
            return;
        }
        debug_assert!(x.is_finite());
        let mut q = x;
        let mut out = Vec::with_capacity(self.parts.len() + 1);
        for &e in &self.parts {
            let (s, h) = two_sum(q, e);
            if h != 0.0 {
                out.push(h);
            }
            q = s;
        }
        if q != 0.0 {
            out.push(q);
        }
        self.parts = out;
        self.trim();
    }

    pub fn add_sum(&mut self, other: &ExtSum) {
        for &x in &other.parts {
            self.add(x);
        }
    }

    /// Multiplies by `factor` exactly (up to underflow of the error terms).
    pub fn scale(&mut self, factor: f64) {
        if factor == 1.0 || self.parts.is_empty() {
            return;
        }
        if factor == 0.0 {
            self.parts.clear();
            return;
        }
        let old = std::mem::take(&mut self.parts);
        for x in old {
            let (p, e) = two_prod(x, factor);
            self.add(e);
            self.add(p);
        }
    }

    pub fn scaled(&self, factor: f64) -> ExtSum {
        let mut s = self.clone();
        s.scale(factor);
        s
    }

    /// Nearest double to the represented value (summing smallest first).
    pub fn value(&self) -> f64 {
        self.parts.iter().fold(0.0, |acc, &x| acc + x)
    }

    /// `1 - self` as an expansion, e.g. a survival probability.
    pub fn one_minus(&self) -> ExtSum {
        let mut s = ExtSum::from_f64(1.0);
        for &x in &self.parts {
            s.add(-x);
        }
        s
    }

    fn trim(&mut self) {
        let Some(&lead) = self.parts.last() else {
            return;
        };
        let cutoff = lead.abs() * 2f64.powi(-PRECISION_BITS);
        if self.parts[0].abs() < cutoff {
            self.parts.retain(|x| x.abs() >= cutoff);
        }
    }

    /// Exact value as `mantissa * 2^exponent`.
    fn to_dyadic(&self) -> (BigInt, i64) {
        if self.parts.is_empty() {
            return (BigInt::zero(), 0);
        }
        let decoded: Vec<(i64, i64)> = self
            .parts
            .iter()
            .map(|&x| {
                let bits = x.to_bits();
                let sign = if bits >> 63 == 0 { 1i64 } else { -1 };
                let exp = ((bits >> 52) & 0x7ff) as i64;
                let frac = (bits & 0xf_ffff_ffff_ffff) as i64;
                if exp == 0 {
                    (sign * frac, -1074)
                } else {
                    (sign * (frac | (1 << 52)), exp - 1075)
                }
            })
            .collect();
        let emin = decoded.iter().map(|&(_, e)| e).min().unwrap_or(0);
        let mut n = BigInt::zero();
        for (m, e) in decoded {
            n += BigInt::from(m) << ((e - emin) as usize);
        }
        (n, emin)
    }

    /// Exact decimal digits: returns (negative, digits, point) with the value
    /// equal to `0.digits * 10^point` when `digits` is non-empty.
    fn decimal_digits(&self) -> (bool, String, i64) {
        let (n, e) = self.to_dyadic();
        if n.is_zero() {
            return (false, String::new(), 0);
        }
        let negative = n.is_negative();
        let mag: BigUint = n.abs().to_biguint().unwrap_or_default();
        let (int, frac_places) = if e >= 0 {
            (mag << (e as usize), 0i64)
        } else {
            let five = BigUint::from(5u32).pow((-e) as u32);
            (mag * five, -e)
        };
        let digits = int.to_str_radix(10);
        let point = digits.len() as i64 - frac_places;
        let trimmed = digits.trim_end_matches('0').to_string();
        (negative, trimmed, point)
    }

    /// Full exact decimal expansion in plain positional notation.
    pub fn to_exact_decimal(&self) -> String {
        let (neg, digits, point) = self.decimal_digits();
        if digits.is_empty() {
            return "0".to_string();
        }
        let sign = if neg { "-" } else { "" };
        if point <= 0 {
            format!("{sign}0.{}{}", "0".repeat((-point) as usize), digits)
        } else if point as usize >= digits.len() {
            format!(
                "{sign}{}{}",
                digits,
                "0".repeat(point as usize - digits.len())
            )
        } else {
            let (i, f) = digits.split_at(point as usize);
            format!("{sign}{i}.{f}")
        }
    }

    /// Scientific notation with `sig` significant digits, rounded half-up
    /// on the exact decimal expansion.
    pub fn to_sci_string(&self, sig: usize) -> String {
        let sig = sig.max(1);
        let (neg, digits, point) = self.decimal_digits();
        if digits.is_empty() {
            return "0".to_string();
        }
        let mut d: Vec<u8> = digits.bytes().map(|b| b - b'0').collect();
        let mut exp10 = point - 1;
        if d.len() > sig {
            let round_up = d[sig] >= 5;
            d.truncate(sig);
            if round_up {
                let mut i = sig;
                loop {
                    if i == 0 {
                        d.insert(0, 1);
                        d.truncate(sig);
                        exp10 += 1;
                        break;
                    }
                    i -= 1;
                    if d[i] == 9 {
                        d[i] = 0;
                    } else {
                        d[i] += 1;
                        break;
                    }
                }
            }
        }
        while d.len() > 1 && *d.last().unwrap() == 0 {
            d.pop();
        }
        let mut s = String::new();
        if neg {
            s.push('-');
        }
        s.push((b'0' + d[0]) as char);
        if d.len() > 1 {
            s.push('.');
            for &x in &d[1..] {
                s.push((b'0' + x) as char);
            }
        }
        s.push_str(&format!("e{exp10}"));
        s
    }

    /// Exact comparison of the represented values.
    pub fn cmp_exact(&self, other: &ExtSum) -> Ordering {
        let mut diff = self.clone();
        for &x in &other.parts {
            diff.add(-x);
        }
        match diff.parts.last() {
            None => Ordering::Equal,
            Some(&x) if x > 0.0 => Ordering::Greater,
            Some(_) => Ordering::Less,
        }
    }
}

impl fmt::Debug for ExtSum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ExtSum({})", self.to_sci_string(25))
    }
}

impl fmt::Display for ExtSum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sig = f.precision().unwrap_or(20);
        f.write_str(&self.to_sci_string(sig))
    }
}

impl From<f64> for ExtSum {
    fn from(x: f64) -> Self {
        ExtSum::from_f64(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tiny_values_survive_next_to_large_ones() {
        let mut s = ExtSum::from_f64(0.5);
        s.add(1e-70);
        s.add(1e-70);
        assert_eq!(s.value(), 0.5);
        let mut back = s.clone();
        back.add(-0.5);
        assert_eq!(back.value(), 2e-70);
    }

    #[test]
    fn scaling_is_exact() {
        let mut s = ExtSum::from_f64(0.1);
        s.scale(3.0);
        // 0.1 * 3 in exact dyadic arithmetic is not the double 0.3
        let mut d = s.clone();
        d.add(-0.30000000000000004);
        let exact = 3.0 * 0.1f64;
        let err = 0.1f64.mul_add(3.0, -exact);
        assert_eq!(d.value(), err + (exact - 0.30000000000000004));
    }

    #[test]
    fn decimal_output() {
        assert_eq!(ExtSum::from_f64(0.5).to_exact_decimal(), "0.5");
        assert_eq!(ExtSum::from_f64(0.0).to_exact_decimal(), "0");
        assert_eq!(ExtSum::from_f64(12.0).to_exact_decimal(), "12");
        assert_eq!(ExtSum::from_f64(-0.25).to_sci_string(3), "-2.5e-1");
        assert_eq!(ExtSum::from_f64(0.0365).to_sci_string(3), "3.65e-2");
        assert_eq!(ExtSum::from_f64(9.996).to_sci_string(3), "1e1");
        let mut s = ExtSum::from_f64(0.5);
        s.add(1.7e-63);
        assert_eq!(s.to_sci_string(5), "5e-1");
        s.add(-0.5);
        assert_eq!(s.to_sci_string(5), "1.7e-63");
    }

    #[test]
    fn exact_comparison() {
        let mut a = ExtSum::from_f64(1.0);
        a.add(1e-100);
        let b = ExtSum::from_f64(1.0);
        assert_eq!(a.cmp_exact(&b), Ordering::Greater);
        assert_eq!(b.cmp_exact(&a), Ordering::Less);
        assert_eq!(a.cmp_exact(&a.clone()), Ordering::Equal);
    }

    #[test]
    fn one_minus_keeps_small_complement() {
        let mut d = ExtSum::from_f64(1e-80);
        d.add(0.25);
        let s = d.one_minus();
        let mut back = s.one_minus();
        back.add(-0.25);
        assert_eq!(back.value(), 1e-80);
    }
}
