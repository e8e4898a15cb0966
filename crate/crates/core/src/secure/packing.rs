use crate::error::{Error, Result};

/// Packs booleans 64 per word, least significant bit first.
pub fn pack_bools(bits: &[bool]) -> Vec<u64> {
    bits.chunks(64)
        .map(|chunk| {
            chunk
                .iter()
                .enumerate()
                .fold(0u64, |w, (i, &b)| w | ((b as u64) << i))
        })
        .collect()
}

/// Inverse of [`pack_bools`]; `n` may not exceed the packed capacity.
pub fn unpack_bools(words: &[u64], n: usize) -> Result<Vec<bool>> {
    if n > words.len() * 64 {
        return Err(Error::Bounds(format!(
            "{n} bits requested from {} words",
            words.len()
        )));
    }
    Ok((0..n)
        .map(|i| (words[i / 64] >> (i % 64)) & 1 == 1)
        .collect())
}
