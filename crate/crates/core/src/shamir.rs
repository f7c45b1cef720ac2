//! Threshold splitting and reconstruction of the content key, byte-wise over
//! GF(2^8).
//!
//! Each octet of the secret becomes the constant term of its own random
//! degree-(t-1) polynomial; share `i` holds the evaluations at `x = i`. Any
//! `t` shares reconstruct the secret exactly via Lagrange interpolation at
//! `x = 0`; fewer than `t` determine nothing. Reconstruction does not attempt
//! to authenticate shares — a corrupted share simply yields a wrong key, which
//! the authenticated cipher rejects downstream.

use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ShamirError {
    #[error("invalid threshold: t={t}, n={n}")]
    InvalidThreshold { t: u8, n: u8 },
    #[error("cannot split an empty secret")]
    EmptySecret,
    #[error("division by zero in GF(256)")]
    DivisionByZero,
    #[error("insufficient shares: have {have}, need {need}")]
    InsufficientShares { have: usize, need: usize },
    #[error("mismatched shares: {0}")]
    MismatchedShares(&'static str),
}

/// Arithmetic in GF(2^8) with reduction polynomial x^8 + x^4 + x^3 + x + 1
/// (0x11b). Addition is XOR; multiplication is carry-less, reduced on the fly.
pub mod gf256 {
    use super::ShamirError;

    pub fn add(a: u8, b: u8) -> u8 {
        a ^ b
    }

    pub fn mul(a: u8, b: u8) -> u8 {
        let mut a = a as u16;
        let mut b = b;
        let mut acc = 0u16;
        while b != 0 {
            if b & 1 != 0 {
                acc ^= a;
            }
            a <<= 1;
            if a & 0x100 != 0 {
                a ^= 0x11b;
            }
            b >>= 1;
        }
        acc as u8
    }

    /// Multiplicative inverse via a^254 (the group has order 255).
    pub fn inv(a: u8) -> Result<u8, ShamirError> {
        if a == 0 {
            return Err(ShamirError::DivisionByZero);
        }
        let mut result = 1u8;
        let mut base = a;
        let mut exp = 254u8;
        while exp != 0 {
            if exp & 1 != 0 {
                result = mul(result, base);
            }
            base = mul(base, base);
            exp >>= 1;
        }
        Ok(result)
    }
}

/// One threshold fragment of a secret: the polynomial evaluations at `x`,
/// one octet of `y` per octet of the secret, plus the sharing parameters it
/// was created under.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyShare {
    pub content_id: String,
    pub x: u8,
    #[serde(rename = "t")]
    pub threshold: u8,
    #[serde(rename = "n")]
    pub share_count: u8,
    #[serde(with = "hex")]
    pub y: Vec<u8>,
}

/// Evaluate the polynomial with the given coefficients (constant term first)
/// at `x`, using Horner's rule.
fn eval_poly(coeffs: &[u8], x: u8) -> u8 {
    let mut acc = 0u8;
    for &c in coeffs.iter().rev() {
        acc = gf256::add(gf256::mul(acc, x), c);
    }
    acc
}

/// Split `secret` into `n` shares with reconstruction threshold `t`.
///
/// For every secret octet a fresh degree-(t-1) polynomial is drawn: constant
/// term = the octet, higher coefficients from `rng` (position-major order, so
/// tests can script exact polynomials). Share `i` evaluates every polynomial
/// at `x = i`; x = 0 is never used — it would be the secret itself.
pub fn split(
    secret: &[u8],
    n: u8,
    t: u8,
    content_id: &str,
    rng: &mut impl RngCore,
) -> Result<Vec<KeyShare>, ShamirError> {
    if t == 0 || t > n {
        return Err(ShamirError::InvalidThreshold { t, n });
    }
    if secret.is_empty() {
        return Err(ShamirError::EmptySecret);
    }

    let mut shares: Vec<KeyShare> = (1..=n)
        .map(|x| KeyShare {
            content_id: content_id.to_string(),
            x,
            threshold: t,
            share_count: n,
            y: vec![0u8; secret.len()],
        })
        .collect();

    let mut coeffs = vec![0u8; t as usize];
    for (j, &s) in secret.iter().enumerate() {
        coeffs[0] = s;
        rng.fill_bytes(&mut coeffs[1..]);
        for share in &mut shares {
            share.y[j] = eval_poly(&coeffs, share.x);
        }
    }
    Ok(shares)
}

/// Recover the secret from at least `t` shares of one split.
///
/// Interpolates the unique polynomial through all supplied points and returns
/// its value at `x = 0`, per octet position. Shares must agree on threshold,
/// share count, content id, and secret length, and carry distinct nonzero `x`.
pub fn reconstruct(shares: &[KeyShare]) -> Result<Vec<u8>, ShamirError> {
    let Some(first) = shares.first() else {
        return Err(ShamirError::InsufficientShares { have: 0, need: 1 });
    };
    for share in shares {
        if share.threshold != first.threshold
            || share.share_count != first.share_count
            || share.content_id != first.content_id
        {
            return Err(ShamirError::MismatchedShares("inconsistent parameters"));
        }
        if share.y.len() != first.y.len() {
            return Err(ShamirError::MismatchedShares("unequal secret lengths"));
        }
        if share.x == 0 {
            return Err(ShamirError::MismatchedShares("share index zero"));
        }
    }
    let mut xs: Vec<u8> = shares.iter().map(|s| s.x).collect();
    xs.sort_unstable();
    if xs.windows(2).any(|w| w[0] == w[1]) {
        return Err(ShamirError::MismatchedShares("duplicate share index"));
    }
    if shares.len() < first.threshold as usize {
        return Err(ShamirError::InsufficientShares {
            have: shares.len(),
            need: first.threshold as usize,
        });
    }

    let mut secret = vec![0u8; first.y.len()];
    for (i, share) in shares.iter().enumerate() {
        // Lagrange basis coefficient for this share, evaluated at x = 0.
        let mut num = 1u8;
        let mut den = 1u8;
        for (j, other) in shares.iter().enumerate() {
            if i == j {
                continue;
            }
            num = gf256::mul(num, other.x);
            den = gf256::mul(den, gf256::add(share.x, other.x));
        }
        let basis = gf256::mul(num, gf256::inv(den)?);
        for (out, &y) in secret.iter_mut().zip(&share.y) {
            *out = gf256::add(*out, gf256::mul(basis, y));
        }
    }
    Ok(secret)
}
