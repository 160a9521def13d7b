//! Exact rationals, binomials, seed derivation and the fixed-precision float
//! formatting shared by every emitter.

use num_rational::Ratio;
use num_traits::{ToPrimitive, Zero};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Exact rational used for every load figure.
pub type Rational = Ratio<i128>;

/// Seed used when neither `--seed` nor `CODEDFOG_SEED` is given.
pub const DEFAULT_SEED: u64 = 0xC0DE_DF06;

pub fn ratio(numer: i128, denom: i128) -> Rational {
    Rational::new(numer, denom)
}

pub fn rational_to_f64(value: &Rational) -> f64 {
    value.to_f64().unwrap_or(f64::NAN)
}

/// `"0"`, `"3"` or `"1/6"`.
pub fn fmt_fraction(value: &Rational) -> String {
    if value.is_zero() {
        "0".to_string()
    } else if *value.denom() == 1 {
        value.numer().to_string()
    } else {
        format!("{}/{}", value.numer(), value.denom())
    }
}

/// Parses `"1/3"`, `"2"` or a terminating decimal such as `"0.5"`.
pub fn parse_rational(text: &str) -> Option<Rational> {
    let text = text.trim();
    if let Some((n, d)) = text.split_once('/') {
        let n: i128 = n.trim().parse().ok()?;
        let d: i128 = d.trim().parse().ok()?;
        if d == 0 {
            return None;
        }
        return Some(ratio(n, d));
    }
    if let Some((int, frac)) = text.split_once('.') {
        if frac.is_empty() || !frac.bytes().all(|b| b.is_ascii_digit()) || frac.len() > 18 {
            return None;
        }
        let negative = int.starts_with('-');
        let int: i128 = if int.is_empty() || int == "-" { 0 } else { int.parse().ok()? };
        let scale = 10i128.pow(frac.len() as u32);
        let frac: i128 = frac.parse().ok()?;
        let magnitude = int.abs() * scale + frac;
        return Some(ratio(if negative { -magnitude } else { magnitude }, scale));
    }
    text.parse::<i128>().ok().map(Rational::from_integer)
}

/// Binomial coefficient C(n, k); zero when k > n.
pub fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    u64::try_from(acc).expect("binomial coefficient overflows u64")
}

/// SplitMix64 finalizer; used to derive independent per-trial and per-task seeds.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(base: u64, stream: u64, index: u64) -> u64 {
    mix64(mix64(base ^ mix64(stream)) ^ index)
}

pub fn stream_rng(base: u64, stream: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, stream, index))
}

/// Formats with 12 significant digits in plain decimal notation.
pub fn fmt_sig(value: f64) -> String {
    if !value.is_finite() {
        return value.to_string();
    }
    if value == 0.0 {
        return "0".to_string();
    }
    let magnitude = value.abs().log10().floor() as i32;
    if !(-6..=15).contains(&magnitude) {
        return format!("{value:.11e}");
    }
    let decimals = (11 - magnitude).max(0) as usize;
    let text = format!("{value:.decimals$}");
    if text.contains('.') {
        text.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        text
    }
}
