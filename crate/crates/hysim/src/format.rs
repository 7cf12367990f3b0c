/// Nine significant digits, fixed notation for moderate magnitudes and
/// exponent notation otherwise, trailing zeros dropped. Non-finite values
/// become an empty cell.
pub fn sig9(v: f64) -> String {
    if !v.is_finite() {
        return String::new();
    }
    if v == 0.0 {
        return "0".into();
    }
    let sci = format!("{v:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..9).contains(&exp) {
        trim(&format!("{:.*}", (8 - exp) as usize, v)).to_string()
    } else {
        format!("{}e{}", trim(mantissa), exp)
    }
}

pub fn cell(v: Option<f64>) -> String {
    v.map(sig9).unwrap_or_default()
}

fn trim(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}
