//! Decimal formatting for numeric text output.

pub const MIN_SIGNIFICANT_DIGITS: usize = 12;

/// Plain decimal text for `x` that parses back to the same `f64` and carries
/// at least [`MIN_SIGNIFICANT_DIGITS`] significant digits, zero-padded when
/// the shortest round-trip form is shorter.
pub fn decimal(x: f64) -> String {
    let mut s = format!("{x}");
    if x == 0.0 || !x.is_finite() {
        return s;
    }
    let digits: String = s.chars().filter(char::is_ascii_digit).collect();
    let significant = digits.trim_start_matches('0').len();
    if significant < MIN_SIGNIFICANT_DIGITS {
        if !s.contains('.') {
            s.push('.');
        }
        s.extend(std::iter::repeat_n('0', MIN_SIGNIFICANT_DIGITS - significant));
    }
    s
}
