//! Number formatting that matches what the prompt templates expect:
//! `%g`-style short values for losses and `repr`-style floats for
//! optimized parameters.

fn non_finite(v: f64) -> Option<String> {
    if v.is_nan() {
        Some("nan".into())
    } else if v.is_infinite() {
        Some(if v > 0.0 { "inf" } else { "-inf" }.into())
    } else {
        None
    }
}

/// Splits Rust's scientific rendering into (sign, significant digits, exponent).
fn decompose(sci: &str) -> (bool, String, i32) {
    let (mantissa, exp) = sci.split_once('e').expect("scientific notation");
    let neg = mantissa.starts_with('-');
    let digits: String = mantissa.chars().filter(|c| c.is_ascii_digit()).collect();
    (neg, digits, exp.parse().expect("integer exponent"))
}

fn exponent_suffix(exp: i32) -> String {
    format!("e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs())
}

/// Places `digits` (d.ddd × 10^exp) in positional notation.
fn positional(digits: &str, exp: i32) -> String {
    if exp < 0 {
        format!("0.{}{}", "0".repeat((-exp - 1) as usize), digits)
    } else {
        let int_len = exp as usize + 1;
        if digits.len() <= int_len {
            format!("{}{}", digits, "0".repeat(int_len - digits.len()))
        } else {
            format!("{}.{}", &digits[..int_len], &digits[int_len..])
        }
    }
}

fn mantissa(digits: &str) -> String {
    if digits.len() == 1 {
        digits.to_string()
    } else {
        format!("{}.{}", &digits[..1], &digits[1..])
    }
}

/// C `%.{precision}g`.
pub fn format_g(v: f64, precision: usize) -> String {
    if let Some(s) = non_finite(v) {
        return s;
    }
    let p = precision.max(1);
    if v == 0.0 {
        return if v.is_sign_negative() { "-0" } else { "0" }.into();
    }
    let (neg, digits, exp) = decompose(&format!("{:.*e}", p - 1, v));
    let digits = digits.trim_end_matches('0');
    let digits = if digits.is_empty() { "0" } else { digits };
    let body = if exp < -4 || exp >= p as i32 {
        format!("{}{}", mantissa(digits), exponent_suffix(exp))
    } else {
        positional(digits, exp)
    };
    if neg {
        format!("-{body}")
    } else {
        body
    }
}

/// Shortest round-trip float text in the style of Python's `repr`.
pub fn format_repr(v: f64) -> String {
    if let Some(s) = non_finite(v) {
        return s;
    }
    if v == 0.0 {
        return if v.is_sign_negative() { "-0.0" } else { "0.0" }.into();
    }
    let (neg, digits, exp) = decompose(&format!("{v:e}"));
    let body = if !(-4..16).contains(&exp) {
        format!("{}{}", mantissa(&digits), exponent_suffix(exp))
    } else {
        let s = positional(&digits, exp);
        if s.contains('.') {
            s
        } else {
            format!("{s}.0")
        }
    };
    if neg {
        format!("-{body}")
    } else {
        body
    }
}
