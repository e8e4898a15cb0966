//! Secure aggregation: the server learns per-slot sums of client vectors and
//! nothing else.
//!
//! Homomorphic encryption is replaced by pairwise additive masking over a
//! fixed-point ring, which has the same algebraic contract (the sum of
//! ciphertexts decodes to the sum of plaintexts). [`SizeModel`] accounts for
//! what real ciphertexts would cost on the wire.

mod channel;
mod codec;
mod mask;
mod packing;
mod size;

pub use channel::{
    build_channel, Body, ChannelKind, MaskedChannel, PlainChannel, Purpose, Sealed, SealedRecord,
    SecureChannel, Session,
};
pub use codec::FixedPointCodec;
pub use mask::{mask_encrypt, secure_sum, MaskedVector, PairwiseKeys};
pub use packing::{pack_bools, unpack_bools};
pub use size::{estimate_ciphertext_bytes, SizeModel};
