//! Fixed-point rendering for CSV outputs.

/// Renders `value` with exactly `decimals` fractional digits, rounding
/// half-to-even on the value's shortest round-trip decimal form.
///
/// Working from the shortest decimal form means `0.12345` is treated as the
/// tie it looks like (`0.1234`), rather than as its slightly-off binary value.
pub fn format_fixed(value: f64, decimals: usize) -> String {
    assert!(value.is_finite(), "cannot render non-finite value {value}");
    let shortest = format!("{}", value.abs());
    let (int_part, frac_part) = match shortest.split_once('.') {
        Some((i, f)) => (i, f),
        None => (shortest.as_str(), ""),
    };

    let mut digits: Vec<u8> = int_part.bytes().map(|b| b - b'0').collect();
    let int_len = digits.len();
    let frac: Vec<u8> = frac_part.bytes().map(|b| b - b'0').collect();
    digits.extend(frac.iter().take(decimals));
    digits.resize(int_len + decimals, 0);

    let round_up = match frac.get(decimals) {
        None => false,
        Some(&d) if d > 5 => true,
        Some(&d) if d < 5 => false,
        Some(_) => {
            let beyond_nonzero = frac[decimals + 1..].iter().any(|&d| d != 0);
            beyond_nonzero || digits.last().is_some_and(|d| d % 2 == 1)
        }
    };
    if round_up {
        let mut i = digits.len();
        loop {
            if i == 0 {
                digits.insert(0, 1);
                break;
            }
            i -= 1;
            if digits[i] == 9 {
                digits[i] = 0;
            } else {
                digits[i] += 1;
                break;
            }
        }
    }

    let split = digits.len() - decimals;
    let mut out = String::with_capacity(digits.len() + 2);
    if value.is_sign_negative() && digits.iter().any(|&d| d != 0) {
        out.push('-');
    }
    out.extend(digits[..split].iter().map(|d| char::from(b'0' + d)));
    if decimals > 0 {
        out.push('.');
        out.extend(digits[split..].iter().map(|d| char::from(b'0' + d)));
    }
    out
}
