//! Number formatting for CSV output.

/// Significant digits in every emitted number.
pub const SIGNIFICANT_DIGITS: usize = 12;

/// Formats like C's `%.12g`: 12 significant digits, trailing zeros trimmed,
/// scientific notation outside `1e-4 <= |x| < 1e12`.
pub fn sig(x: f64) -> String {
    sig_digits(x, SIGNIFICANT_DIGITS)
}

pub fn sig_digits(x: f64, digits: usize) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let digits = digits.max(1);
    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent marker");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= digits as i32 {
        let mantissa = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{:.*}", decimals, x)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_printf_g() {
        assert_eq!(sig(2.0), "2");
        assert_eq!(sig(0.1), "0.1");
        assert_eq!(sig(1.0 / 3.0), "0.333333333333");
        assert_eq!(sig(-2.0 / 3.0), "-0.666666666667");
        assert_eq!(sig(123456.789), "123456.789");
        assert_eq!(sig(1.5e-7), "1.5e-07");
        assert_eq!(sig(0.0001), "0.0001");
        assert_eq!(sig(1e12), "1e+12");
        assert_eq!(sig(9.9999999999996), "10");
        assert_eq!(sig(0.0), "0");
        assert_eq!(sig(-0.0), "0");
    }

    #[test]
    fn round_trips_to_twelve_digits() {
        for x in [std::f64::consts::PI, 1.23456789012345e-9, -7.0e15, 0.70121] {
            let back: f64 = sig(x).parse().unwrap();
            assert!(((back - x) / x).abs() < 1e-11);
        }
    }
}
