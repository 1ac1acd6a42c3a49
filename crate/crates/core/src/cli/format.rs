//! Fixed significant-digit number formatting (`%g` style).

/// `v` rounded to `digits` significant digits, trailing zeros removed.
/// Plain notation for exponents in `[-5, digits)`, scientific otherwise.
pub fn sig(v: f64, digits: usize) -> String {
    assert!(digits >= 1);
    if v == 0.0 {
        return "0".to_string();
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    let sci = format!("{:.*e}", digits - 1, v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -5 || exp >= digits as i32 {
        format!("{}e{exp}", trim_zeros(mantissa))
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{v:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn sig6(v: f64) -> String {
    sig(v, 6)
}

pub fn sig9(v: f64) -> String {
    sig(v, 9)
}

pub fn sig17(v: f64) -> String {
    sig(v, 17)
}
