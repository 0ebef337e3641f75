use super::scenario::{BitSource, EmitterSpec};
use super::HarnessError;
use crate::framing::{make_id, TransmitterId, PACKET_BITS, PAYLOAD_BITS};
use crate::modem::{gmsk::PULSE_SPAN, modulate_window, SampleBlock};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::f64::consts::FRAC_PI_2;

#[derive(Debug, Clone)]
enum Payload {
    Random(u64),
    Pattern(Vec<u8>),
}

/// An emitter's endless back-to-back packet stream, generated on demand.
///
/// Bit `i` of the stream is sent during symbol `i`, starting at time zero.
#[derive(Debug, Clone)]
pub struct TxStream {
    id: TransmitterId,
    payload: Payload,
    packets: Vec<Vec<u8>>,
    /// `net[k]`: sum of bipolar symbols over packets `0..k`.
    net: Vec<i64>,
}

impl TxStream {
    /// `default_seed` seeds random payloads that carry no seed of their own.
    pub fn new(spec: &EmitterSpec, default_seed: u64) -> Result<Self, HarnessError> {
        let payload = match &spec.bits {
            BitSource::Random { seed } => Payload::Random(seed.unwrap_or(default_seed)),
            BitSource::Pattern { bits } => Payload::Pattern(parse_bits(bits)?),
            BitSource::File { path } => {
                let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
                Payload::Pattern(parse_bits(&text)?)
            }
        };
        Ok(TxStream { id: make_id(spec.id_kind), payload, packets: Vec::new(), net: vec![0] })
    }

    pub fn id(&self) -> TransmitterId {
        self.id
    }

    fn ensure(&mut self, packet: usize) {
        while self.packets.len() <= packet {
            let k = self.packets.len();
            let payload = match &self.payload {
                Payload::Random(seed) => {
                    let mut rng = ChaCha8Rng::seed_from_u64(crate::bits::mix_seed(*seed, k as u64));
                    crate::bits::random(&mut rng, PAYLOAD_BITS)
                }
                Payload::Pattern(p) => (0..PAYLOAD_BITS).map(|j| p[(k * PAYLOAD_BITS + j) % p.len()]).collect(),
            };
            let mut bits = self.id.bits().to_vec();
            bits.extend(payload);
            let sum: i64 = bits.iter().map(|&b| crate::bits::bipolar(b) as i64).sum();
            self.net.push(self.net[k] + sum);
            self.packets.push(bits);
        }
    }

    /// Stream bits `start..end`.
    pub fn bits(&mut self, start: u64, end: u64) -> Vec<u8> {
        if end <= start {
            return Vec::new();
        }
        self.ensure(((end - 1) / PACKET_BITS as u64) as usize);
        (start..end)
            .map(|i| self.packets[(i / PACKET_BITS as u64) as usize][(i % PACKET_BITS as u64) as usize])
            .collect()
    }

    /// Sum of bipolar symbols over bits `0..index`.
    fn net_before(&mut self, index: u64) -> i64 {
        let packet = (index / PACKET_BITS as u64) as usize;
        let within = (index % PACKET_BITS as u64) as usize;
        self.ensure(packet);
        self.net[packet] + self.packets[packet][..within].iter().map(|&b| crate::bits::bipolar(b) as i64).sum::<i64>()
    }

    /// Intensity samples for symbols `first..last`, identical to the
    /// corresponding slice of the modulated infinite stream.
    pub fn render(&mut self, spec: &EmitterSpec, first: u64, last: u64) -> Result<SampleBlock, HarnessError> {
        let guard = (PULSE_SPAN / 2 + 1) as u64;
        let lo = first.saturating_sub(guard);
        let bits = self.bits(lo, last + guard);
        let base_phase = FRAC_PI_2 * self.net_before(lo).rem_euclid(4) as f64;
        let sps = spec.modem.samples_per_symbol as u64;
        Ok(modulate_window(
            &bits,
            (first - lo) as usize,
            (last - first) as usize,
            base_phase,
            first * sps,
            &spec.modem,
            spec.phase_offset,
        )?)
    }
}

fn parse_bits(text: &str) -> Result<Vec<u8>, HarnessError> {
    let cleaned: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    let bits = crate::bits::parse(&cleaned).map_err(|c| HarnessError::Invalid(format!("bit source contains {c:?}")))?;
    if bits.is_empty() {
        return Err(HarnessError::Invalid("bit source holds no bits".into()));
    }
    Ok(bits)
}
