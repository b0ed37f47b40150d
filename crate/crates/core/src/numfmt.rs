//! Numeric formatting for CSV output.
//!
//! CSV cells use C's `%.12g`: 12 significant digits, fixed or scientific
//! notation by printf's rule, trailing zeros trimmed. Enough digits that a
//! regression diff is meaningful, few enough that the files stay readable.

/// Format `x` like printf `%.<prec>g`.
pub fn fmt_g(x: f64, prec: usize) -> String {
    let prec = prec.max(1);
    if x.is_nan() {
        return "nan".to_string();
    }
    if x.is_infinite() {
        return if x < 0.0 { "-inf" } else { "inf" }.to_string();
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0" } else { "0" }.to_string();
    }

    // Exponent of x after rounding to `prec` significant digits.
    let sci = format!("{:.*e}", prec - 1, x);
    let (mantissa, exp_str) = sci.split_once('e').expect("exponential form");
    let exp: i32 = exp_str.parse().expect("exponent");

    if exp >= -4 && exp < prec as i32 {
        let decimals = (prec as i32 - 1 - exp).max(0) as usize;
        let fixed = format!("{:.*}", decimals, x);
        trim_trailing_zeros(&fixed)
    } else {
        let mantissa = trim_trailing_zeros(mantissa);
        // printf pads the exponent to at least two digits and always signs it.
        format!("{}e{}{:02}", mantissa, if exp < 0 { '-' } else { '+' }, exp.abs())
    }
}

/// `%.12g`, the trajectory and ensemble CSV convention.
pub fn fmt_g12(x: f64) -> String {
    fmt_g(x, 12)
}

fn trim_trailing_zeros(s: &str) -> String {
    if !s.contains('.') {
        return s.to_string();
    }
    let s = s.trim_end_matches('0');
    s.trim_end_matches('.').to_string()
}
