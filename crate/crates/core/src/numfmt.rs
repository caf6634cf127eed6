//! Number formatting shared by the human-readable reports.

/// `%g`-style rendering with six significant digits and trailing zeros
/// removed.
pub fn g6(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    if x == 0.0 {
        return "0".into();
    }
    // The decimal exponent after rounding, so 999999.7 moves to the next decade.
    let sci = format!("{x:.5e}");
    let (m, exp) = sci.split_once('e').expect("exponent form");
    let e: i32 = exp.parse().expect("integer exponent");
    if (-4..6).contains(&e) {
        let rounded: f64 = sci.parse().unwrap_or(x);
        let s = format!("{:.*}", (5 - e) as usize, rounded);
        trim_zeros(&s).to_string()
    } else {
        format!("{}e{}", trim_zeros(m), e)
    }
}

/// Full-precision rendering (17 significant digits) for machine-readable
/// files.
pub fn g17(x: f64) -> String {
    format!("{x:.16e}")
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Comma-separated [`g6`] values in parentheses.
pub fn g6_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| g6(*x)).collect();
    format!("({})", parts.join(", "))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits() {
        assert_eq!(g6(std::f64::consts::FRAC_PI_2), "1.5708");
        assert_eq!(g6(4.71238898), "4.71239");
        assert_eq!(g6(-1.25e-7), "-1.25e-7");
        assert_eq!(g6(123456789.0), "1.23457e8");
        assert_eq!(g6(999999.7), "1e6");
        assert_eq!(g6(0.5), "0.5");
        assert_eq!(g6(7.890944e-5), "7.89094e-5");
        assert_eq!(g6(1.5e-4), "0.00015");
        assert_eq!(g6(1000.0), "1000");
        assert_eq!(g6(0.0), "0");
        assert_eq!(g17(0.1), "1.0000000000000001e-1");
    }
}
