//! printf-style number formatting (`%.Ne`, `%.Ng`) for byte-stable output.

fn split_exp(s: &str) -> (&str, i32) {
    let (mantissa, exp) = s.split_once('e').expect("scientific format");
    (mantissa, exp.parse().expect("integer exponent"))
}

fn c_exponent(exp: i32) -> String {
    let sign = if exp < 0 { '-' } else { '+' };
    format!("e{sign}{:02}", exp.abs())
}

/// `%.{prec}e`, e.g. `1.2500000000e-03`.
pub fn fmt_e(x: f64, prec: usize) -> String {
    if !x.is_finite() {
        return non_finite(x);
    }
    let s = format!("{x:.prec$e}");
    let (mantissa, exp) = split_exp(&s);
    format!("{mantissa}{}", c_exponent(exp))
}

/// `%.{prec}g`: `prec` significant digits, trailing zeros removed.
pub fn fmt_g(x: f64, prec: usize) -> String {
    if !x.is_finite() {
        return non_finite(x);
    }
    let prec = prec.max(1);
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let s = format!("{:.*e}", prec - 1, x);
    let (mantissa, exp) = split_exp(&s);
    if exp < -4 || exp >= prec as i32 {
        format!("{}{}", strip_zeros(mantissa), c_exponent(exp))
    } else {
        let decimals = (prec as i32 - 1 - exp) as usize;
        strip_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn non_finite(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}
