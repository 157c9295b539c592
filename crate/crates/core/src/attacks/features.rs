use crate::entropy::Challenge;

/// Parity features of the additive delay model.
///
/// With `s_j = 1 - 2 c_j` (bit 0 maps to +1, bit 1 to -1), entry `i` is
/// `s_i * s_{i+1} * ... * s_{n-1}` for `i < n`, and entry `n` is the constant +1.
pub fn parity_transform(c: &Challenge) -> Vec<f64> {
    let n = c.len();
    let mut phi = vec![1.0; n + 1];
    let mut acc = 1.0;
    for i in (0..n).rev() {
        if c.bit(i) {
            acc = -acc;
        }
        phi[i] = acc;
    }
    phi
}

/// Plain ±1 encoding of the challenge bits (`0 -> +1`, `1 -> -1`).
pub fn sign_encoding(c: &Challenge) -> Vec<f64> {
    c.signs().collect()
}
