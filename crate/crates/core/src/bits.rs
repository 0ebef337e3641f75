//! Helpers for bit sequences stored as `u8` values of 0 or 1.

use rand::Rng;

/// Renders bits as a compact `"0101..."` string.
pub fn to_string(bits: &[u8]) -> String {
    bits.iter().map(|&b| if b != 0 { '1' } else { '0' }).collect()
}

/// Parses a `"0101..."` string. Whitespace is ignored; any other character is an error.
pub fn parse(text: &str) -> Result<Vec<u8>, char> {
    text.chars()
        .filter(|c| !c.is_whitespace())
        .map(|c| match c {
            '0' => Ok(0),
            '1' => Ok(1),
            other => Err(other),
        })
        .collect()
}

pub fn random<R: Rng>(rng: &mut R, len: usize) -> Vec<u8> {
    (0..len).map(|_| rng.random_range(0..2u8)).collect()
}

/// Maps 1 to +1 and 0 to -1.
#[inline]
pub fn bipolar(bit: u8) -> i32 {
    if bit != 0 {
        1
    } else {
        -1
    }
}

pub fn complement(bits: &[u8]) -> Vec<u8> {
    bits.iter().map(|&b| 1 - (b & 1)).collect()
}

/// SplitMix64 finaliser, used to derive independent sub-seeds from one scenario seed.
pub fn mix_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
