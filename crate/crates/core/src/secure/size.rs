use serde::{Deserialize, Serialize};

/// Wire-size model for a packed-slot homomorphic ciphertext.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SizeModel {
    pub ciphertext_bytes: u64,
    /// Plaintext slots per ciphertext.
    pub slots: u64,
    /// Bytes per unencrypted element.
    pub plaintext_element_bytes: u64,
}

impl SizeModel {
    /// Integer scheme, ring dimension 4096, 398 kB per ciphertext.
    pub const BGV: SizeModel = SizeModel {
        ciphertext_bytes: 398_000,
        slots: 4096,
        plaintext_element_bytes: 8,
    };

    /// Approximate-real scheme, ring dimension 4096, 266 kB per ciphertext.
    pub const CKKS: SizeModel = SizeModel {
        ciphertext_bytes: 266_000,
        slots: 4096,
        plaintext_element_bytes: 8,
    };

    pub fn plaintext_bytes(&self, n: u64) -> u64 {
        n * self.plaintext_element_bytes
    }
}

/// `ceil(n_eff / slots) * ciphertext_bytes`, where `n_eff = ceil(n / 64)` for
/// packed boolean arrays and `n` otherwise.
pub fn estimate_ciphertext_bytes(n: u64, model: &SizeModel, packed: bool) -> u64 {
    let effective = if packed { n.div_ceil(64) } else { n };
    effective.div_ceil(model.slots) * model.ciphertext_bytes
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_ciphertext_for_small_arrays() {
        assert_eq!(
            estimate_ciphertext_bytes(1000, &SizeModel::BGV, false),
            398_000
        );
        assert_eq!(
            estimate_ciphertext_bytes(1000, &SizeModel::CKKS, false),
            266_000
        );
        assert_eq!(estimate_ciphertext_bytes(0, &SizeModel::BGV, false), 0);
    }

    #[test]
    fn ceiling_arithmetic() {
        assert_eq!(
            estimate_ciphertext_bytes(10_000, &SizeModel::BGV, false),
            3 * 398_000
        );
        assert_eq!(
            estimate_ciphertext_bytes(1_000_000, &SizeModel::BGV, true),
            4 * 398_000
        );
    }
}
