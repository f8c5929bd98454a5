//! Number formatting shared by the OBJ and CSV writers.

/// Formats like C's `%.17g`: 17 significant digits, trailing zeros trimmed,
/// scientific notation outside `1e-5 ..= 1e17`. Round-trips every `f64`.
pub fn g17(x: f64) -> String {
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{x:.16e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if (-5..17).contains(&exp) {
        let decimals = (16 - exp) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        format!("{}e{}{:02}", trim_zeros(mantissa.to_string()), if exp < 0 { '-' } else { '+' }, exp.abs())
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}
