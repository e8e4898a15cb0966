use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{estimate_ciphertext_bytes, mask_encrypt, FixedPointCodec, PairwiseKeys, SizeModel};
use crate::error::{Error, Result};
use crate::wire::{encoded_len, Record, HEADER_BYTES};

/// Channel implementations selectable from configuration.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ChannelKind {
    #[default]
    #[serde(rename = "plain")]
    Plain,
    #[serde(rename = "masked")]
    Masked,
    #[serde(rename = "masked+sizemodel")]
    MaskedSizeModel,
}

impl ChannelKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ChannelKind::Plain => "plain",
            ChannelKind::Masked => "masked",
            ChannelKind::MaskedSizeModel => "masked+sizemodel",
        }
    }
}

impl fmt::Display for ChannelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ChannelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plain" => Ok(ChannelKind::Plain),
            "masked" => Ok(ChannelKind::Masked),
            "masked+sizemodel" => Ok(ChannelKind::MaskedSizeModel),
            other => Err(Error::Config(format!("unknown channel {other:?}"))),
        }
    }
}

/// What an aggregation carries; selects codec precision and size constants.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Purpose {
    /// Integer-valued neighbor feature sums and degrees.
    NeighborFeatures,
    /// Real-valued model parameters.
    Model,
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::NeighborFeatures => 1,
            Purpose::Model => 2,
        }
    }

    pub fn size_model(self) -> SizeModel {
        match self {
            Purpose::NeighborFeatures => SizeModel::BGV,
            Purpose::Model => SizeModel::CKKS,
        }
    }
}

/// One aggregation: which clients contribute to each `(node_id, hop)` slot.
#[derive(Clone, Debug)]
pub struct Session {
    pub round: u64,
    pub purpose: Purpose,
    participants: BTreeMap<(u32, u32), Vec<usize>>,
    keys: PairwiseKeys,
}

impl Session {
    pub fn participants(&self, node_id: u32, hop: u32) -> Result<&[usize]> {
        self.participants
            .get(&(node_id, hop))
            .map(Vec::as_slice)
            .ok_or_else(|| {
                Error::Protocol(format!(
                    "slot ({node_id}, {hop}) is not part of the session"
                ))
            })
    }

    pub fn keys_mut(&mut self) -> &mut PairwiseKeys {
        &mut self.keys
    }

    fn stream(&self, node_id: u32, hop: u32) -> u64 {
        (self.purpose.tag() << 48) ^ ((hop as u64) << 32) ^ node_id as u64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Body {
    Plain(Vec<f64>),
    Ring(Vec<u64>),
}

impl Body {
    fn len(&self) -> usize {
        match self {
            Body::Plain(v) => v.len(),
            Body::Ring(v) => v.len(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SealedRecord {
    pub node_id: u32,
    pub hop: u32,
    /// Clients whose contributions are folded into `body`, ascending.
    pub contributors: Vec<usize>,
    pub body: Body,
}

/// An encrypted batch of records from one client, or an aggregate.
#[derive(Clone, Debug, PartialEq)]
pub struct Sealed {
    pub records: Vec<SealedRecord>,
}

impl Sealed {
    pub fn num_elements(&self) -> usize {
        self.records.iter().map(|r| r.body.len()).sum()
    }
}

/// Additively homomorphic transport between clients and the server.
pub trait SecureChannel: Send + Sync {
    fn kind(&self) -> ChannelKind;

    /// Starts an aggregation among `num_clients` clients.
    fn open_session(
        &self,
        round: u64,
        purpose: Purpose,
        num_clients: usize,
        participants: BTreeMap<(u32, u32), Vec<usize>>,
    ) -> Session;

    fn encrypt(&self, session: &Session, client: usize, records: &[Record]) -> Result<Sealed>;

    /// Sums batches slot by slot. Every slot must have received exactly its
    /// participants' contributions.
    fn aggregate(&self, session: &Session, batches: &[Sealed]) -> Result<Sealed> {
        let mut slots: BTreeMap<(u32, u32), SealedRecord> = BTreeMap::new();
        for batch in batches {
            for rec in &batch.records {
                match slots.get_mut(&(rec.node_id, rec.hop)) {
                    None => {
                        slots.insert((rec.node_id, rec.hop), rec.clone());
                    }
                    Some(acc) => {
                        add_body(&mut acc.body, &rec.body, rec.node_id)?;
                        acc.contributors.extend_from_slice(&rec.contributors);
                    }
                }
            }
        }
        for ((node_id, hop), rec) in slots.iter_mut() {
            rec.contributors.sort_unstable();
            let expected = session.participants(*node_id, *hop)?;
            if rec.contributors != expected {
                return Err(Error::IncompleteRound(format!(
                    "slot ({node_id}, {hop}) has contributions from {:?}, expected {:?}",
                    rec.contributors, expected
                )));
            }
        }
        if slots.len() != session.participants.len() {
            let missing = session
                .participants
                .keys()
                .find(|k| !slots.contains_key(k))
                .expect("some slot missing");
            return Err(Error::IncompleteRound(format!(
                "no contribution for slot {missing:?}"
            )));
        }
        Ok(Sealed {
            records: slots.into_values().collect(),
        })
    }

    fn decrypt(&self, sealed: &Sealed) -> Result<Vec<Record>>;

    /// Bytes a sealed batch occupies on the wire.
    fn wire_bytes(&self, session: &Session, sealed: &Sealed) -> u64;

    /// Bytes for sending already-aggregated records back to a client.
    fn result_bytes(&self, purpose: Purpose, records: &[Record]) -> u64 {
        let _ = purpose;
        encoded_len(records) as u64
    }
}

fn add_body(acc: &mut Body, other: &Body, node_id: u32) -> Result<()> {
    match (acc, other) {
        (Body::Plain(a), Body::Plain(b)) if a.len() == b.len() => {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        (Body::Ring(a), Body::Ring(b)) if a.len() == b.len() => {
            for (x, y) in a.iter_mut().zip(b) {
                *x = x.wrapping_add(*y);
            }
        }
        _ => {
            return Err(Error::Protocol(format!(
                "incompatible contributions for node {node_id}"
            )))
        }
    }
    Ok(())
}

fn check_participant(session: &Session, client: usize, rec: &Record) -> Result<()> {
    if session
        .participants(rec.node_id, rec.hop)?
        .contains(&client)
    {
        Ok(())
    } else {
        Err(Error::Protocol(format!(
            "client {client} is not registered for slot ({}, {})",
            rec.node_id, rec.hop
        )))
    }
}

fn wire_len(sealed: &Sealed) -> u64 {
    sealed
        .records
        .iter()
        .map(|r| (HEADER_BYTES + 8 * r.body.len()) as u64)
        .sum()
}

/// Cleartext transport.
#[derive(Clone, Debug, Default)]
pub struct PlainChannel;

impl SecureChannel for PlainChannel {
    fn kind(&self) -> ChannelKind {
        ChannelKind::Plain
    }

    fn open_session(
        &self,
        round: u64,
        purpose: Purpose,
        _num_clients: usize,
        participants: BTreeMap<(u32, u32), Vec<usize>>,
    ) -> Session {
        Session {
            round,
            purpose,
            participants,
            keys: PairwiseKeys::establish(0, round, 0),
        }
    }

    fn encrypt(&self, session: &Session, client: usize, records: &[Record]) -> Result<Sealed> {
        let records = records
            .iter()
            .map(|r| {
                check_participant(session, client, r)?;
                Ok(SealedRecord {
                    node_id: r.node_id,
                    hop: r.hop,
                    contributors: vec![client],
                    body: Body::Plain(r.payload.clone()),
                })
            })
            .collect::<Result<_>>()?;
        Ok(Sealed { records })
    }

    fn decrypt(&self, sealed: &Sealed) -> Result<Vec<Record>> {
        sealed
            .records
            .iter()
            .map(|r| match &r.body {
                Body::Plain(v) => Ok(Record {
                    node_id: r.node_id,
                    hop: r.hop,
                    payload: v.clone(),
                }),
                Body::Ring(_) => Err(Error::Protocol("ring body on plain channel".into())),
            })
            .collect()
    }

    fn wire_bytes(&self, _session: &Session, sealed: &Sealed) -> u64 {
        wire_len(sealed)
    }
}

/// Pairwise additive masking over fixed-point encodings. The server learns
/// only per-slot sums.
#[derive(Clone, Debug)]
pub struct MaskedChannel {
    master_seed: u64,
    feature_codec: FixedPointCodec,
    model_codec: FixedPointCodec,
    size_model: bool,
}

impl MaskedChannel {
    /// Features use 20 fractional bits, model parameters 40.
    pub fn new(master_seed: u64, size_model: bool) -> Self {
        Self {
            master_seed,
            feature_codec: FixedPointCodec::default(),
            model_codec: FixedPointCodec::new(40).expect("40 < 63"),
            size_model,
        }
    }

    pub fn with_codecs(mut self, features: FixedPointCodec, model: FixedPointCodec) -> Self {
        self.feature_codec = features;
        self.model_codec = model;
        self
    }

    fn codec(&self, purpose: Purpose) -> &FixedPointCodec {
        match purpose {
            Purpose::NeighborFeatures => &self.feature_codec,
            Purpose::Model => &self.model_codec,
        }
    }
}

impl SecureChannel for MaskedChannel {
    fn kind(&self) -> ChannelKind {
        if self.size_model {
            ChannelKind::MaskedSizeModel
        } else {
            ChannelKind::Masked
        }
    }

    fn open_session(
        &self,
        round: u64,
        purpose: Purpose,
        num_clients: usize,
        participants: BTreeMap<(u32, u32), Vec<usize>>,
    ) -> Session {
        Session {
            round,
            purpose,
            participants,
            keys: PairwiseKeys::establish(self.master_seed ^ purpose.tag(), round, num_clients),
        }
    }

    fn encrypt(&self, session: &Session, client: usize, records: &[Record]) -> Result<Sealed> {
        let codec = self.codec(session.purpose);
        let records = records
            .iter()
            .map(|r| {
                check_participant(session, client, r)?;
                let plain = codec.encode_all(&r.payload)?;
                let masked = mask_encrypt(
                    &plain,
                    client,
                    session.participants(r.node_id, r.hop)?,
                    &session.keys,
                    session.stream(r.node_id, r.hop),
                )?;
                Ok(SealedRecord {
                    node_id: r.node_id,
                    hop: r.hop,
                    contributors: vec![client],
                    body: Body::Ring(masked.residues),
                })
            })
            .collect::<Result<_>>()?;
        Ok(Sealed { records })
    }

    fn decrypt(&self, sealed: &Sealed) -> Result<Vec<Record>> {
        // Purpose is not stored per record; the hop tag identifies it.
        sealed
            .records
            .iter()
            .map(|r| match &r.body {
                Body::Ring(v) => {
                    let codec = if r.hop == crate::wire::HOP_MODEL {
                        &self.model_codec
                    } else {
                        &self.feature_codec
                    };
                    Ok(Record {
                        node_id: r.node_id,
                        hop: r.hop,
                        payload: codec.decode_all(v),
                    })
                }
                Body::Plain(_) => Err(Error::Protocol("plain body on masked channel".into())),
            })
            .collect()
    }

    fn wire_bytes(&self, session: &Session, sealed: &Sealed) -> u64 {
        if self.size_model {
            estimate_ciphertext_bytes(
                sealed.num_elements() as u64,
                &session.purpose.size_model(),
                false,
            )
        } else {
            wire_len(sealed)
        }
    }

    fn result_bytes(&self, purpose: Purpose, records: &[Record]) -> u64 {
        if self.size_model {
            let n: usize = records.iter().map(|r| r.payload.len()).sum();
            estimate_ciphertext_bytes(n as u64, &purpose.size_model(), false)
        } else {
            encoded_len(records) as u64
        }
    }
}

pub fn build_channel(kind: ChannelKind, master_seed: u64) -> Box<dyn SecureChannel> {
    match kind {
        ChannelKind::Plain => Box::new(PlainChannel),
        ChannelKind::Masked => Box::new(MaskedChannel::new(master_seed, false)),
        ChannelKind::MaskedSizeModel => Box::new(MaskedChannel::new(master_seed, true)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn session_for(ch: &dyn SecureChannel, k: usize) -> Session {
        let all: Vec<usize> = (0..k).collect();
        let participants = [((0, 1), all.clone()), ((5, 1), vec![0, k - 1])]
            .into_iter()
            .collect();
        ch.open_session(3, Purpose::NeighborFeatures, k, participants)
    }

    fn contributions(k: usize) -> Vec<Vec<Record>> {
        (0..k)
            .map(|c| {
                let mut recs = vec![Record::new(0, 1, vec![c as f64, 2.0]).unwrap()];
                if c == 0 || c == k - 1 {
                    recs.push(Record::new(5, 1, vec![10.0 + c as f64]).unwrap());
                }
                recs
            })
            .collect()
    }

    #[test]
    fn all_channels_agree_on_sums() {
        for kind in [
            ChannelKind::Plain,
            ChannelKind::Masked,
            ChannelKind::MaskedSizeModel,
        ] {
            let ch = build_channel(kind, 77);
            let s = session_for(ch.as_ref(), 4);
            let sealed: Vec<_> = contributions(4)
                .iter()
                .enumerate()
                .map(|(c, r)| ch.encrypt(&s, c, r).unwrap())
                .collect();
            let total = ch.decrypt(&ch.aggregate(&s, &sealed).unwrap()).unwrap();
            assert_eq!(total[0].payload, vec![6.0, 8.0], "{kind}");
            assert_eq!(total[1].payload, vec![23.0], "{kind}");
        }
    }

    #[test]
    fn missing_contributor_is_incomplete() {
        let ch = build_channel(ChannelKind::Masked, 1);
        let s = session_for(ch.as_ref(), 3);
        let sealed: Vec<_> = contributions(3)
            .iter()
            .enumerate()
            .take(2)
            .map(|(c, r)| ch.encrypt(&s, c, r).unwrap())
            .collect();
        assert!(matches!(
            ch.aggregate(&s, &sealed),
            Err(Error::IncompleteRound(_))
        ));
    }

    #[test]
    fn size_model_charges_whole_ciphertexts() {
        let ch = build_channel(ChannelKind::MaskedSizeModel, 1);
        let s = session_for(ch.as_ref(), 2);
        let sealed = ch.encrypt(&s, 0, &contributions(2)[0]).unwrap();
        assert_eq!(ch.wire_bytes(&s, &sealed), 398_000);
        assert_eq!(
            "masked+sizemodel".parse::<ChannelKind>().unwrap(),
            ChannelKind::MaskedSizeModel
        );
        assert!("fhe".parse::<ChannelKind>().is_err());
    }
}
