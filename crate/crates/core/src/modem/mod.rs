//! Intensity modulation: bits to nonnegative LED drive samples and back.
//!
//! Two schemes are supported. OOK holds one of two intensity levels per
//! symbol. GMSK frequency-modulates a subcarrier at a quarter of the sample
//! rate with Gaussian-filtered MSK phase, then biases the result so the drive
//! stays nonnegative.

pub mod gmsk;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModemError {
    #[error("invalid modem config: {0}")]
    ConfigInvalid(String),
    #[error("nothing to modulate")]
    EmptyBits,
    #[error("block holds {samples} samples, fewer than one symbol of {samples_per_symbol}")]
    BlockTooShort { samples: usize, samples_per_symbol: usize },
    #[error("block sample rate {block} Hz does not match the configured {expected} Hz")]
    SampleRateMismatch { block: f64, expected: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Ook,
    Gmsk,
}

/// Drive polarity of an emitter relative to a reference emitter sending the same bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseOffset {
    #[default]
    InPhase,
    Inverted,
}

impl PhaseOffset {
    fn sign(self) -> f64 {
        match self {
            PhaseOffset::InPhase => 1.0,
            PhaseOffset::Inverted => -1.0,
        }
    }
}

/// OOK decision threshold.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdMode {
    /// Absolute intensity level, calibrated once on a clean link.
    Fixed(f64),
    /// Mean of the block being demodulated.
    #[default]
    Adaptive,
}

fn default_bt() -> f64 {
    gmsk::DEFAULT_BT
}

fn default_bits_per_symbol() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModemConfig {
    pub scheme: Scheme,
    /// Symbols per second.
    pub symbol_rate: f64,
    pub samples_per_symbol: usize,
    #[serde(default = "default_bits_per_symbol")]
    pub bits_per_symbol: usize,
    /// Gaussian filter bandwidth-time product (GMSK only).
    #[serde(default = "default_bt")]
    pub gmsk_bt: f64,
    pub dc_bias: f64,
    pub modulation_depth: f64,
}

impl ModemConfig {
    pub fn ook(symbol_rate: f64, samples_per_symbol: usize) -> Self {
        ModemConfig {
            scheme: Scheme::Ook,
            symbol_rate,
            samples_per_symbol,
            bits_per_symbol: 1,
            gmsk_bt: gmsk::DEFAULT_BT,
            dc_bias: 1.0,
            modulation_depth: 0.5,
        }
    }

    pub fn gmsk(symbol_rate: f64, samples_per_symbol: usize) -> Self {
        ModemConfig { scheme: Scheme::Gmsk, ..Self::ook(symbol_rate, samples_per_symbol) }
    }

    pub fn sample_rate(&self) -> f64 {
        self.symbol_rate * self.samples_per_symbol as f64
    }

    pub fn validate(&self) -> Result<(), ModemError> {
        let bad = |msg: &str| Err(ModemError::ConfigInvalid(msg.to_string()));
        if !(self.symbol_rate > 0.0 && self.symbol_rate.is_finite()) {
            return bad("symbol rate must be positive");
        }
        if self.samples_per_symbol < 2 {
            return bad("need at least 2 samples per symbol");
        }
        if self.bits_per_symbol != 1 {
            return bad("only 1 bit per symbol is supported");
        }
        if !(self.modulation_depth > 0.0 && self.modulation_depth <= 1.0) {
            return bad("modulation depth must lie in (0, 1]");
        }
        if self.dc_bias.is_nan() || self.dc_bias < self.modulation_depth {
            return bad("dc bias must be at least the modulation depth");
        }
        if self.scheme == Scheme::Gmsk && !(self.gmsk_bt > 0.0 && self.gmsk_bt.is_finite()) {
            return bad("GMSK bandwidth-time product must be positive");
        }
        Ok(())
    }
}

/// Real intensity samples at a fixed rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleBlock {
    pub samples: Vec<f64>,
    pub sample_rate: f64,
}

impl SampleBlock {
    pub fn new(samples: Vec<f64>, sample_rate: f64) -> Self {
        SampleBlock { samples, sample_rate }
    }

    pub fn zeros(len: usize, sample_rate: f64) -> Self {
        SampleBlock { samples: vec![0.0; len], sample_rate }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate
    }

    pub fn mean(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().sum::<f64>() / self.samples.len() as f64
    }
}

/// Modulates a complete bit sequence starting from sample 0.
pub fn modulate(bits: &[u8], cfg: &ModemConfig, offset: PhaseOffset) -> Result<SampleBlock, ModemError> {
    if bits.is_empty() {
        return Err(ModemError::EmptyBits);
    }
    modulate_window(bits, 0, bits.len(), 0.0, 0, cfg, offset)
}

/// Modulates `count` symbols of a longer stream.
///
/// `bits[lead..lead + count]` are the symbols to render; bits before and
/// after them only contribute GMSK filter tails. `base_phase` is the GMSK
/// phase accumulated by every symbol preceding `bits[0]`, and
/// `first_sample` the absolute index of the first output sample (it fixes
/// the subcarrier phase). Rendering consecutive windows this way yields the
/// same samples as one long call to [`modulate`].
pub fn modulate_window(
    bits: &[u8],
    lead: usize,
    count: usize,
    base_phase: f64,
    first_sample: u64,
    cfg: &ModemConfig,
    offset: PhaseOffset,
) -> Result<SampleBlock, ModemError> {
    cfg.validate()?;
    if lead + count > bits.len() {
        return Err(ModemError::ConfigInvalid("window exceeds the bit buffer".into()));
    }
    let sps = cfg.samples_per_symbol;
    let sign = offset.sign();
    let samples = match cfg.scheme {
        Scheme::Ook => {
            let mut out = Vec::with_capacity(count * sps);
            for &b in &bits[lead..lead + count] {
                let m = if b != 0 { 1.0 } else { -1.0 };
                let level = cfg.dc_bias + cfg.modulation_depth * sign * m;
                out.extend(std::iter::repeat_n(level, sps));
            }
            out
        }
        Scheme::Gmsk => {
            let shaper = gmsk::Shaper::new(cfg.gmsk_bt, sps);
            shaper
                .waveform(bits, lead, count, base_phase, first_sample)
                .into_iter()
                .map(|m| cfg.dc_bias + cfg.modulation_depth * sign * m)
                .collect()
        }
    };
    Ok(SampleBlock::new(samples, cfg.sample_rate()))
}

/// Recovers one bit per whole symbol in the block.
///
/// GMSK estimates the received DC level from the block itself, so blocks
/// shorter than [`gmsk::MIN_BLOCK_SYMBOLS`] symbols may misdecode edge symbols.
pub fn demodulate(block: &SampleBlock, cfg: &ModemConfig, threshold: ThresholdMode) -> Result<Vec<u8>, ModemError> {
    cfg.validate()?;
    let sps = cfg.samples_per_symbol;
    if block.len() < sps {
        return Err(ModemError::BlockTooShort { samples: block.len(), samples_per_symbol: sps });
    }
    let expected = cfg.sample_rate();
    if (block.sample_rate - expected).abs() > 1e-9 * expected {
        return Err(ModemError::SampleRateMismatch { block: block.sample_rate, expected });
    }
    let n_symbols = block.len() / sps;
    let bits = match cfg.scheme {
        Scheme::Ook => {
            let level = match threshold {
                ThresholdMode::Fixed(level) => level,
                ThresholdMode::Adaptive => block.mean(),
            };
            block.samples[..n_symbols * sps]
                .chunks_exact(sps)
                .map(|chunk| {
                    let avg = chunk.iter().sum::<f64>() / sps as f64;
                    u8::from(avg > level)
                })
                .collect()
        }
        Scheme::Gmsk => {
            let freq = gmsk::discriminate(&block.samples);
            freq[..n_symbols * sps].chunks_exact(sps).map(|chunk| u8::from(chunk.iter().sum::<f64>() > 0.0)).collect()
        }
    };
    Ok(bits)
}

/// Analytic bit error probability of two-level integrate-and-dump detection
/// with a midpoint threshold: `Q(depth * sqrt(sps) / sigma)`.
pub fn ook_theoretical_ber(cfg: &ModemConfig, gain: f64, noise_sigma: f64) -> f64 {
    if noise_sigma <= 0.0 {
        return 0.0;
    }
    let distance = gain * cfg.modulation_depth * (cfg.samples_per_symbol as f64).sqrt() / noise_sigma;
    q_function(distance)
}

/// Gaussian tail probability `Q(x) = P(N(0,1) > x)`.
pub fn q_function(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(x / std::f64::consts::SQRT_2)
}
