//! Fixed-length packets with Barker-coded transmitter IDs as headers, and the
//! bit-level correlator that finds them in a decoded stream.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Total packet length in bits.
pub const PACKET_BITS: usize = 2096;
/// Header (transmitter ID) length in bits.
pub const ID_BITS: usize = 13;
pub const PAYLOAD_BITS: usize = PACKET_BITS - ID_BITS;
/// Default minimum header correlation; tolerates one header bit error.
pub const DEFAULT_CORR_THRESHOLD: i32 = 11;

pub const BARKER_13: [i8; 13] = [1, 1, 1, 1, 1, -1, -1, 1, 1, -1, 1, -1, 1];
pub const BARKER_11: [i8; 11] = [1, 1, 1, -1, -1, -1, 1, -1, -1, 1, -1];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FramingError {
    #[error("payload must be {expected} bits, got {got}")]
    WrongPayloadLength { expected: usize, got: usize },
    #[error("packet must be {expected} bits, got {got}")]
    WrongPacketLength { expected: usize, got: usize },
    #[error("transmitter ID must be {ID_BITS} bits of 0/1")]
    MalformedId,
    #[error("ID lookup table is empty")]
    EmptyTable,
    #[error("ID {0} is already registered")]
    DuplicateId(TransmitterId),
    #[error("correlation threshold {0} outside [1, {ID_BITS}]")]
    ThresholdOutOfRange(i32),
}

/// Which Barker-derived header a transmitter uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdKind {
    /// The 13-chip Barker code.
    Barker13,
    /// The 11-chip Barker code followed by the padding bits `11`.
    Barker11Padded,
}

/// A 13-bit transmitter header.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct TransmitterId([u8; ID_BITS]);

impl TransmitterId {
    pub fn from_bits(bits: &[u8]) -> Result<Self, FramingError> {
        if bits.len() != ID_BITS || bits.iter().any(|&b| b > 1) {
            return Err(FramingError::MalformedId);
        }
        let mut id = [0u8; ID_BITS];
        id.copy_from_slice(bits);
        Ok(TransmitterId(id))
    }

    pub fn bits(&self) -> &[u8; ID_BITS] {
        &self.0
    }

    /// Bipolar correlation against a 13-bit window: agreements minus disagreements.
    pub fn correlate(&self, window: &[u8]) -> i32 {
        self.0.iter().zip(window).map(|(&a, &b)| if a == b { 1 } else { -1 }).sum()
    }
}

impl std::fmt::Display for TransmitterId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&crate::bits::to_string(&self.0))
    }
}

impl TryFrom<String> for TransmitterId {
    type Error = FramingError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        let bits = crate::bits::parse(&s).map_err(|_| FramingError::MalformedId)?;
        TransmitterId::from_bits(&bits)
    }
}

impl From<TransmitterId> for String {
    fn from(id: TransmitterId) -> String {
        id.to_string()
    }
}

fn chips_to_bits(chips: &[i8]) -> impl Iterator<Item = u8> + '_ {
    chips.iter().map(|&c| u8::from(c > 0))
}

pub fn make_id(kind: IdKind) -> TransmitterId {
    let bits: Vec<u8> = match kind {
        IdKind::Barker13 => chips_to_bits(&BARKER_13).collect(),
        IdKind::Barker11Padded => chips_to_bits(&BARKER_11).chain([1, 1]).collect(),
    };
    TransmitterId::from_bits(&bits).expect("Barker IDs are 13 bits")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Packet {
    pub header: TransmitterId,
    pub payload: Vec<u8>,
}

impl Packet {
    pub fn to_bits(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(PACKET_BITS);
        out.extend_from_slice(self.header.bits());
        out.extend_from_slice(&self.payload);
        out
    }
}

/// Prepends the header to a payload of exactly [`PAYLOAD_BITS`] bits.
pub fn frame(payload: &[u8], id: TransmitterId) -> Result<Packet, FramingError> {
    if payload.len() != PAYLOAD_BITS {
        return Err(FramingError::WrongPayloadLength { expected: PAYLOAD_BITS, got: payload.len() });
    }
    Ok(Packet { header: id, payload: payload.to_vec() })
}

/// Splits a received packet into header and payload.
pub fn deframe(bits: &[u8]) -> Result<Packet, FramingError> {
    if bits.len() != PACKET_BITS {
        return Err(FramingError::WrongPacketLength { expected: PACKET_BITS, got: bits.len() });
    }
    Ok(Packet { header: TransmitterId::from_bits(&bits[..ID_BITS])?, payload: bits[ID_BITS..].to_vec() })
}

/// Transmitter IDs registered at the receiver ahead of time, each with the
/// emitter label it identifies.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IdLookupTable {
    entries: Vec<IdEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdEntry {
    pub id: TransmitterId,
    pub label: usize,
}

impl IdLookupTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, id: TransmitterId, label: usize) -> Result<(), FramingError> {
        if self.lookup(&id).is_some() {
            return Err(FramingError::DuplicateId(id));
        }
        self.entries.push(IdEntry { id, label });
        Ok(())
    }

    pub fn lookup(&self, id: &TransmitterId) -> Option<usize> {
        self.entries.iter().find(|e| e.id == *id).map(|e| e.label)
    }

    pub fn id_of(&self, label: usize) -> Option<TransmitterId> {
        self.entries.iter().find(|e| e.label == label).map(|e| e.id)
    }

    pub fn entries(&self) -> &[IdEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// A header match in a decoded stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    /// Bit offset of the header.
    pub offset: usize,
    pub label: usize,
    /// Header correlation score.
    pub score: i32,
    /// Up to [`PAYLOAD_BITS`] bits following the header; shorter at the end of the stream.
    #[serde(skip)]
    pub payload: Vec<u8>,
}

impl Detection {
    pub fn is_complete(&self) -> bool {
        self.payload.len() == PAYLOAD_BITS
    }
}

/// Scans a decoded bit stream for registered headers.
///
/// At each offset the best-scoring registered ID is taken (ties go to the
/// earlier registration). A score at or above `corr_threshold` yields a
/// detection and the scan jumps a full packet ahead; otherwise it advances
/// by one bit.
pub fn detect_packets(bits: &[u8], table: &IdLookupTable, corr_threshold: i32) -> Result<Vec<Detection>, FramingError> {
    if table.is_empty() {
        return Err(FramingError::EmptyTable);
    }
    if !(1..=ID_BITS as i32).contains(&corr_threshold) {
        return Err(FramingError::ThresholdOutOfRange(corr_threshold));
    }
    let mut found = Vec::new();
    let mut pos = 0;
    while pos + ID_BITS <= bits.len() {
        let window = &bits[pos..pos + ID_BITS];
        let best = table
            .entries
            .iter()
            .map(|e| (e.id.correlate(window), e.label))
            .reduce(|best, cand| if cand.0 > best.0 { cand } else { best })
            .expect("table is nonempty");
        if best.0 >= corr_threshold {
            let start = pos + ID_BITS;
            let end = (pos + PACKET_BITS).min(bits.len());
            found.push(Detection { offset: pos, label: best.1, score: best.0, payload: bits[start..end].to_vec() });
            pos += PACKET_BITS;
        } else {
            pos += 1;
        }
    }
    Ok(found)
}

/// Registered IDs whose header appears `repeats` times in a row at exact
/// packet spacing, each copy scoring at least `corr_threshold`.
///
/// Unlike [`detect_packets`], a single chance match inside a payload is not
/// enough. IDs are returned in order of their first confirmed header.
pub fn confirmed_ids(
    bits: &[u8],
    table: &IdLookupTable,
    corr_threshold: i32,
    repeats: usize,
) -> Result<Vec<TransmitterId>, FramingError> {
    if table.is_empty() {
        return Err(FramingError::EmptyTable);
    }
    if !(1..=ID_BITS as i32).contains(&corr_threshold) {
        return Err(FramingError::ThresholdOutOfRange(corr_threshold));
    }
    let span = (repeats.max(1) - 1) * PACKET_BITS + ID_BITS;
    let mut found: Vec<TransmitterId> = Vec::new();
    for start in 0..(bits.len() + 1).saturating_sub(span) {
        for entry in &table.entries {
            if !found.contains(&entry.id) && periodic(bits, &entry.id, start, repeats.max(1), corr_threshold) {
                found.push(entry.id);
            }
        }
    }
    Ok(found)
}

fn periodic(bits: &[u8], id: &TransmitterId, start: usize, copies: usize, corr_threshold: i32) -> bool {
    (0..copies).all(|k| {
        let at = start + k * PACKET_BITS;
        id.correlate(&bits[at..at + ID_BITS]) >= corr_threshold
    })
}

/// Offset of the first header of `id` that is followed by further copies at
/// exact packet spacing.
///
/// The number of copies checked is `repeats`, capped at the number that fit
/// after any header starting within the first packet of the block, and at
/// least one. Returns `None` when no offset qualifies.
pub fn frame_sync(bits: &[u8], id: &TransmitterId, corr_threshold: i32, repeats: usize) -> Option<usize> {
    let fit = bits.len().saturating_sub(ID_BITS + PACKET_BITS - 1) / PACKET_BITS + 1;
    let copies = fit.min(repeats.max(1));
    let span = (copies - 1) * PACKET_BITS + ID_BITS;
    (0..(bits.len() + 1).saturating_sub(span)).find(|&start| periodic(bits, id, start, copies, corr_threshold))
}

/// Aperiodic autocorrelation of a bipolar code at lags `0..len`.
pub fn autocorrelation(code: &[i8]) -> Vec<i32> {
    (0..code.len()).map(|lag| code.iter().zip(&code[lag..]).map(|(&a, &b)| a as i32 * b as i32).sum()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn confirmation_needs_periodic_headers() {
        let table = two_id_table();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut stream = Vec::new();
        for _ in 0..4 {
            let payload = crate::bits::random(&mut rng, PAYLOAD_BITS);
            stream.extend(frame(&payload, make_id(IdKind::Barker11Padded)).unwrap().to_bits());
        }
        let window = &stream[700..700 + 3 * PACKET_BITS + 2 * ID_BITS];
        let ids = confirmed_ids(window, &table, DEFAULT_CORR_THRESHOLD, 3).unwrap();
        assert_eq!(ids, vec![make_id(IdKind::Barker11Padded)]);
        // one packet is not enough for three confirmations
        assert!(confirmed_ids(&stream[700..700 + PACKET_BITS + 13], &table, 11, 3).unwrap().is_empty());
        // a single in-payload match is enough for the greedy scan but not here
        let noise = crate::bits::random(&mut rng, 20_000);
        assert!(!detect_packets(&noise, &table, 11).unwrap().is_empty());
        assert!(confirmed_ids(&noise, &table, 11, 3).unwrap().is_empty());
    }

    #[test]
    fn frame_sync_skips_chance_matches() {
        let mut rng = ChaCha8Rng::seed_from_u64(78);
        let id = make_id(IdKind::Barker13);
        let mut stream = crate::bits::random(&mut rng, 900);
        for _ in 0..4 {
            let payload = crate::bits::random(&mut rng, PAYLOAD_BITS);
            stream.extend(frame(&payload, id).unwrap().to_bits());
        }
        let first_chance = (0..900).find(|&i| id.correlate(&stream[i..i + ID_BITS]) >= 11);
        assert!(first_chance.is_some(), "seed should plant a chance match before the first header");
        assert_eq!(frame_sync(&stream, &id, 11, 3), Some(900));
        // near the end only the copies that still fit are checked
        let tail = &stream[900 + 3 * PACKET_BITS - 5..];
        assert_eq!(frame_sync(tail, &id, 13, 3), Some(5));
        assert_eq!(frame_sync(&stream[..10], &id, 11, 3), None);
    }

    fn two_id_table() -> IdLookupTable {
        let mut t = IdLookupTable::new();
        t.register(make_id(IdKind::Barker13), 1).unwrap();
        t.register(make_id(IdKind::Barker11Padded), 2).unwrap();
        t
    }

    #[test]
    fn barker_ids_are_bit_exact() {
        assert_eq!(make_id(IdKind::Barker13).to_string(), "1111100110101");
        assert_eq!(make_id(IdKind::Barker11Padded).to_string(), "1110001001011");
        assert_ne!(make_id(IdKind::Barker13), make_id(IdKind::Barker11Padded));
    }

    /// Brute force over every lag, written without the library helper.
    fn brute_autocorrelation(code: &[i8], lag: usize) -> i32 {
        let mut acc = 0;
        for i in 0..code.len() {
            if i + lag < code.len() {
                acc += (code[i] * code[i + lag]) as i32;
            }
        }
        acc
    }

    #[test]
    fn barker_sidelobes() {
        for code in [&BARKER_13[..], &BARKER_11[..]] {
            let ac = autocorrelation(code);
            assert_eq!(ac[0], code.len() as i32);
            for (lag, &value) in ac.iter().enumerate().skip(1) {
                assert_eq!(value, brute_autocorrelation(code, lag));
                assert!(value.abs() <= 1, "lag {lag}: {value}");
            }
        }
    }

    #[test]
    fn framing_concatenates() {
        let id = make_id(IdKind::Barker13);
        let packet = frame(&vec![0; PAYLOAD_BITS], id).unwrap();
        let bits = packet.to_bits();
        assert_eq!(bits.len(), PACKET_BITS);
        assert_eq!(crate::bits::to_string(&bits[..ID_BITS]), "1111100110101");
        assert_eq!(deframe(&bits).unwrap(), packet);
        assert_eq!(frame(&vec![0; 2084], id), Err(FramingError::WrongPayloadLength { expected: 2083, got: 2084 }));
    }

    #[test]
    fn table_rejects_duplicates() {
        let mut t = two_id_table();
        assert!(matches!(t.register(make_id(IdKind::Barker13), 9), Err(FramingError::DuplicateId(_))));
        assert_eq!(t.lookup(&make_id(IdKind::Barker11Padded)), Some(2));
    }

    #[test]
    fn detection_errors() {
        assert_eq!(detect_packets(&[0; 20], &IdLookupTable::new(), 11), Err(FramingError::EmptyTable));
        assert!(detect_packets(&[0; 20], &two_id_table(), 0).is_err());
        assert!(detect_packets(&[0; 20], &two_id_table(), 14).is_err());
    }

    #[test]
    fn two_back_to_back_packets() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let id = make_id(IdKind::Barker13);
        let p = crate::bits::random(&mut rng, PAYLOAD_BITS);
        let q = crate::bits::random(&mut rng, PAYLOAD_BITS);
        let mut stream = frame(&p, id).unwrap().to_bits();
        stream.extend(frame(&q, id).unwrap().to_bits());
        let found = detect_packets(&stream, &two_id_table(), 13).unwrap();
        assert_eq!(found.len(), 2);
        assert_eq!((found[0].offset, found[0].label, found[0].score), (0, 1, 13));
        assert_eq!((found[1].offset, found[1].label), (PACKET_BITS, 1));
        assert_eq!(found[0].payload, p);
        assert_eq!(found[1].payload, q);
    }

    #[test]
    fn three_flipped_header_bits_score_seven() {
        let id = make_id(IdKind::Barker13);
        let mut stream = frame(&vec![0; PAYLOAD_BITS], id).unwrap().to_bits();
        for i in [0, 5, 9] {
            stream[i] ^= 1;
        }
        let found = detect_packets(&stream, &two_id_table(), 7).unwrap();
        assert_eq!(found[0].offset, 0);
        assert_eq!(found[0].score, 7);
        assert!(detect_packets(&stream, &two_id_table(), 8).unwrap().iter().all(|d| d.offset != 0));
    }

    #[test]
    fn random_noise_rarely_matches_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let noise = crate::bits::random(&mut rng, 100_000);
        let found = detect_packets(&noise, &two_id_table(), 13).unwrap();
        // Per-offset exact-match probability is 2 * 2^-13; with the packet-length
        // skip after each hit, roughly one hit per 4096 + 2096 bits is expected.
        assert!(found.len() <= 30, "{} phantom detections", found.len());
        assert!(found.iter().all(|d| d.score == 13));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn clean_streams_are_fully_detected(labels in proptest::collection::vec(any::<bool>(), 1..=50), seed in any::<u64>()) {
            let table = two_id_table();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut stream = Vec::new();
            let mut payloads = Vec::new();
            for &second in &labels {
                let kind = if second { IdKind::Barker11Padded } else { IdKind::Barker13 };
                let payload = crate::bits::random(&mut rng, PAYLOAD_BITS);
                stream.extend(frame(&payload, make_id(kind)).unwrap().to_bits());
                payloads.push(payload);
            }
            let found = detect_packets(&stream, &table, DEFAULT_CORR_THRESHOLD).unwrap();
            prop_assert_eq!(found.len(), labels.len());
            for (k, det) in found.iter().enumerate() {
                prop_assert_eq!(det.offset, k * PACKET_BITS);
                prop_assert_eq!(det.label, if labels[k] { 2 } else { 1 });
                prop_assert_eq!(&det.payload, &payloads[k]);
            }
        }
    }
}
