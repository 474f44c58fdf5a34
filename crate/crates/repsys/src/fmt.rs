//! Numeric formatting helpers for deterministic text output.

/// Format a finite value rounded to 9 significant digits, using the shortest
/// decimal representation of the rounded value (no exponent for the
/// magnitudes this tool emits; integral values keep a trailing `.0`-free
/// form only when they had none, i.e. `2` prints as `2`).
pub fn fmt_sig9(value: f64) -> String {
    if value == 0.0 {
        return "0".to_string();
    }
    if !value.is_finite() {
        return value.to_string();
    }
    let magnitude = value.abs().log10().floor() as i32;
    let decimals = (8 - magnitude).clamp(0, 17) as usize;
    let fixed = format!("{value:.decimals$}");
    // Re-parse so Display gives the shortest round-trip form of the rounded
    // value (strips trailing zeros deterministically).
    let rounded: f64 = fixed.parse().expect("fixed-point format is parseable");
    let mut s = rounded.to_string();
    if s.contains('e') {
        // Sub-1e-9 magnitudes round-trip through Display in exponent form;
        // keep the fixed form instead.
        s = fixed;
        while s.contains('.') && (s.ends_with('0') || s.ends_with('.')) {
            s.pop();
        }
        if s.is_empty() || s == "-" {
            s = "0".to_string();
        }
    }
    s
}
