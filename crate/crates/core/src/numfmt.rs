//! Decimal formatting shared by the CSV writers.

/// Formats `v` with 9 significant digits, `%.9g` style.
pub fn sig9(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    let sci = format!("{:.8e}", v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent marker");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        trim_zeros(format!("{:.*}", decimals, v))
    } else {
        format!("{}e{}", trim_zeros(mantissa.to_string()), exp)
    }
}

fn trim_zeros(s: String) -> String {
    if !s.contains('.') {
        return s;
    }
    let t = s.trim_end_matches('0').trim_end_matches('.');
    t.to_string()
}

#[cfg(test)]
mod tests {
    use super::sig9;

    #[test]
    fn matches_printf_g9() {
        assert_eq!(sig9(0.0), "0");
        assert_eq!(sig9(0.25), "0.25");
        assert_eq!(sig9(1.0), "1");
        assert_eq!(sig9(-1.2345678912), "-1.23456789");
        assert_eq!(sig9(123456789.4), "123456789");
        assert_eq!(sig9(1234567894.0), "1.23456789e9");
        assert_eq!(sig9(0.000012345678912), "1.23456789e-5");
        assert_eq!(sig9(0.00012345678912), "0.000123456789");
        assert_eq!(sig9(9.9999999999), "10");
        assert_eq!(sig9(60.0), "60");
    }
}
