//! Number formatting shared by every CSV writer.
//!
//! All exported floating point values use the C `printf` conversion
//! `%.17g`, which round-trips every finite `f64`.

/// Formats `x` exactly as C's `printf("%.17g", x)` would.
pub fn g17(x: f64) -> String {
    format_g(x, 17)
}

/// `%.<precision>g` for finite and non-finite doubles.
pub fn format_g(x: f64, precision: usize) -> String {
    if x.is_nan() {
        return if x.is_sign_negative() { "-nan".into() } else { "nan".into() };
    }
    if x.is_infinite() {
        return if x < 0.0 { "-inf".into() } else { "inf".into() };
    }
    let p = precision.max(1);
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }

    // Round to `p` significant digits once; the exponent of the rounded
    // value decides between fixed and scientific notation.
    let sci = format!("{:.*e}", p - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("rust exponent format");
    let exp: i32 = exp.parse().expect("rust exponent is an integer");

    if exp < -4 || exp >= p as i32 {
        let mantissa = strip_trailing_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{}{:02}", mantissa, sign, exp.abs())
    } else {
        let decimals = (p as i32 - 1 - exp).max(0) as usize;
        strip_trailing_zeros(&format!("{:.*}", decimals, x)).to_string()
    }
}

fn strip_trailing_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Parses a value written by [`g17`] (also accepts the non-finite spellings).
pub fn parse_g(s: &str) -> Option<f64> {
    match s.trim() {
        "nan" | "-nan" => Some(f64::NAN),
        "inf" => Some(f64::INFINITY),
        "-inf" => Some(f64::NEG_INFINITY),
        other => other.parse().ok(),
    }
}
