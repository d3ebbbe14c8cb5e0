//! Fixed numeric formatting for the text outputs.

/// Formats like C's `%.9g`: nine significant digits, trailing zeros
/// removed, exponent form outside `[1e-4, 1e9)`.
pub fn sig9(x: f64) -> String {
    const P: i32 = 9;
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    // The exponent after rounding to P digits decides the style.
    let sci = format!("{:.*e}", (P - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= P {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (P - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
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
    use super::sig9;

    #[test]
    fn matches_printf_g() {
        assert_eq!(sig9(80.0), "80");
        assert_eq!(sig9(0.06), "0.06");
        assert_eq!(sig9(0.1), "0.1");
        assert_eq!(sig9(993.99), "993.99");
        assert_eq!(sig9(1.0 / 3.0), "0.333333333");
        assert_eq!(sig9(2.0 / 3.0 * 1e-5), "6.66666667e-06");
        assert_eq!(sig9(123456789.0), "123456789");
        assert_eq!(sig9(1234567891.0), "1.23456789e+09");
        assert_eq!(sig9(-0.00012), "-0.00012");
        assert_eq!(sig9(0.0), "0");
        assert_eq!(sig9(9.9999999999), "10");
    }
}
