use std::collections::BTreeMap;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Shared secrets for every client pair in one aggregation round.
#[derive(Clone, Debug)]
pub struct PairwiseKeys {
    num_clients: usize,
    seeds: BTreeMap<(usize, usize), [u8; 32]>,
}

impl PairwiseKeys {
    /// Derives one seed per unordered pair from a master secret and round.
    /// Stands in for a pairwise key agreement.
    pub fn establish(master: u64, round: u64, num_clients: usize) -> Self {
        let mut seeds = BTreeMap::new();
        for a in 0..num_clients {
            for b in a + 1..num_clients {
                let mut h = Sha256::new();
                h.update(b"pairwise-mask");
                for v in [master, round, a as u64, b as u64] {
                    h.update(v.to_le_bytes());
                }
                seeds.insert((a, b), h.finalize().into());
            }
        }
        Self { num_clients, seeds }
    }

    pub fn num_clients(&self) -> usize {
        self.num_clients
    }

    /// Forgets the seed of one pair, e.g. to model a failed key exchange.
    pub fn revoke(&mut self, a: usize, b: usize) {
        self.seeds.remove(&(a.min(b), a.max(b)));
    }

    fn seed(&self, a: usize, b: usize) -> Result<&[u8; 32]> {
        self.seeds
            .get(&(a.min(b), a.max(b)))
            .ok_or_else(|| Error::Key(format!("no shared seed for clients {a} and {b}")))
    }

    /// The pair mask for `stream`; identical for `(a, b)` and `(b, a)`.
    pub fn pair_mask(&self, a: usize, b: usize, stream: u64, len: usize) -> Result<Vec<u64>> {
        let mut rng = ChaCha20Rng::from_seed(*self.seed(a, b)?);
        rng.set_stream(stream);
        Ok((0..len).map(|_| rng.next_u64()).collect())
    }
}

/// One client's masked contribution.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MaskedVector {
    pub client: usize,
    pub residues: Vec<u64>,
}

/// Adds the mask shared with every other participant: the lower id of each
/// pair adds it, the higher id subtracts it, so the masks cancel in the sum
/// over all `participants`.
pub fn mask_encrypt(
    values: &[u64],
    client: usize,
    participants: &[usize],
    keys: &PairwiseKeys,
    stream: u64,
) -> Result<MaskedVector> {
    if !participants.contains(&client) {
        return Err(Error::Protocol(format!(
            "client {client} is not a participant of stream {stream}"
        )));
    }
    let mut residues = values.to_vec();
    for &peer in participants {
        if peer == client {
            continue;
        }
        let mask = keys.pair_mask(client, peer, stream, values.len())?;
        if client < peer {
            for (r, m) in residues.iter_mut().zip(&mask) {
                *r = r.wrapping_add(*m);
            }
        } else {
            for (r, m) in residues.iter_mut().zip(&mask) {
                *r = r.wrapping_sub(*m);
            }
        }
    }
    Ok(MaskedVector { client, residues })
}

/// Coordinate-wise sum in the ring.
pub fn secure_sum(masked: &[MaskedVector]) -> Result<Vec<u64>> {
    let Some(first) = masked.first() else {
        return Ok(Vec::new());
    };
    let len = first.residues.len();
    let mut out = vec![0u64; len];
    for m in masked {
        if m.residues.len() != len {
            return Err(Error::Protocol(format!(
                "client {} sent {} residues, expected {len}",
                m.client,
                m.residues.len()
            )));
        }
        for (o, r) in out.iter_mut().zip(&m.residues) {
            *o = o.wrapping_add(*r);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_client_is_unmasked() {
        let keys = PairwiseKeys::establish(1, 0, 1);
        let m = mask_encrypt(&[5, 6, 7], 0, &[0], &keys, 3).unwrap();
        assert_eq!(m.residues, vec![5, 6, 7]);
    }

    #[test]
    fn masks_cancel_over_participants() {
        let keys = PairwiseKeys::establish(9, 2, 5);
        let all: Vec<usize> = (0..5).collect();
        let zeros = vec![0u64; 16];
        let masked: Vec<_> = all
            .iter()
            .map(|&k| mask_encrypt(&zeros, k, &all, &keys, 7).unwrap())
            .collect();
        assert!(masked[0].residues.iter().any(|&r| r != 0));
        assert_eq!(secure_sum(&masked).unwrap(), zeros);
    }

    #[test]
    fn known_mask_is_removed_by_subtraction() {
        let keys = PairwiseKeys::establish(4, 1, 2);
        let m = mask_encrypt(&[42], 0, &[0, 1], &keys, 0).unwrap();
        let mask = keys.pair_mask(0, 1, 0, 1).unwrap();
        assert_eq!(m.residues[0].wrapping_sub(mask[0]), 42);
    }

    #[test]
    fn missing_seed_and_length_mismatch() {
        let mut keys = PairwiseKeys::establish(4, 1, 3);
        keys.revoke(2, 0);
        assert!(matches!(
            mask_encrypt(&[1], 0, &[0, 2], &keys, 0),
            Err(Error::Key(_))
        ));
        let a = MaskedVector {
            client: 0,
            residues: vec![1, 2],
        };
        let b = MaskedVector {
            client: 1,
            residues: vec![1],
        };
        assert!(matches!(secure_sum(&[a, b]), Err(Error::Protocol(_))));
    }
}
