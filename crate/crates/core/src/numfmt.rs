//! Fixed-precision float text used by every exported table and checkpoint.

/// Formats `x` with 9 significant digits, `%.9g` style: plain notation for
/// decimal exponents in `[-5, 9)`, scientific otherwise, trailing zeros
/// trimmed.
pub fn sig9(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{:.8e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        trim_zeros(format!("{:.*}", decimals, x))
    } else {
        format!("{}e{}", trim_zeros(mantissa.to_string()), exp)
    }
}

/// Rounds `x` to the value `sig9` would print.
pub fn round9(x: f64) -> f64 {
    sig9(x).parse().unwrap_or(x)
}

fn trim_zeros(s: String) -> String {
    if !s.contains('.') {
        return s;
    }
    let t = s.trim_end_matches('0').trim_end_matches('.');
    t.to_string()
}
