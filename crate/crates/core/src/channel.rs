//! The single-photodiode optical channel.
//!
//! Light from every emitter, and any ambient light imaged onto the shutter,
//! passes through its pixel's LCD cell and is summed by the photodiode:
//!
//! ```text
//! y[t] = clip( sum_e gain_e * gate(pixel_e) * x_e[t] + sum_p gate(p) * ambient_p + n[t], 0, saturation )
//! ```
//!
//! where `gate` is 1 for an open pixel and `closed_leakage` for a closed one.

use crate::modem::SampleBlock;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("emitter blocks differ in length or sample rate")]
    LengthMismatch,
    #[error("no emitter blocks supplied")]
    NoEmitters,
    #[error("emitter {emitter} maps to pixel {pixel}, but the shutter has {pixels} pixels")]
    InvalidPixel { emitter: usize, pixel: usize, pixels: usize },
    #[error("invalid channel config: {0}")]
    ConfigInvalid(String),
    #[error("cannot estimate SNR from an empty block")]
    EmptyBlock,
}

/// Per-pixel shutter state; `true` is OPEN.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PixelMask {
    pub open: Vec<bool>,
}

impl PixelMask {
    pub fn all_closed(pixels: usize) -> Self {
        PixelMask { open: vec![false; pixels] }
    }

    pub fn all_open(pixels: usize) -> Self {
        PixelMask { open: vec![true; pixels] }
    }

    /// Exactly one pixel open.
    pub fn single(pixels: usize, pixel: usize) -> Self {
        Self::from_open_set(pixels, &[pixel])
    }

    pub fn from_open_set(pixels: usize, open: &[usize]) -> Self {
        let mut mask = Self::all_closed(pixels);
        for &p in open {
            mask.open[p] = true;
        }
        mask
    }

    pub fn len(&self) -> usize {
        self.open.len()
    }

    pub fn is_empty(&self) -> bool {
        self.open.is_empty()
    }

    pub fn is_open(&self, pixel: usize) -> bool {
        self.open[pixel]
    }

    pub fn open_pixels(&self) -> Vec<usize> {
        self.open.iter().enumerate().filter(|(_, &o)| o).map(|(i, _)| i).collect()
    }

    pub fn open_count(&self) -> usize {
        self.open.iter().filter(|&&o| o).count()
    }
}

/// Renders as a `"10"` style string, pixel 0 first.
impl std::fmt::Display for PixelMask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for &o in &self.open {
            f.write_str(if o { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl Serialize for PixelMask {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for PixelMask {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        let bits =
            crate::bits::parse(&text).map_err(|c| serde::de::Error::custom(format!("invalid mask character {c:?}")))?;
        Ok(PixelMask { open: bits.into_iter().map(|b| b == 1).collect() })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelConfig {
    pub emitter_gain: Vec<f64>,
    pub emitter_pixel: Vec<usize>,
    /// Transmittance of a CLOSED pixel, in `[0, 1)`.
    pub closed_leakage: f64,
    /// Constant ambient intensity imaged onto each pixel.
    pub ambient_dc: Vec<f64>,
    pub noise_sigma: f64,
    /// Photodiode amplifier ceiling; `f64::INFINITY` disables clipping.
    pub saturation_level: f64,
    pub rng_seed: u64,
}

impl ChannelConfig {
    /// Ideal shutter, no ambient light, no noise, no clipping.
    pub fn ideal(emitter_gain: Vec<f64>, emitter_pixel: Vec<usize>, pixels: usize) -> Self {
        ChannelConfig {
            emitter_gain,
            emitter_pixel,
            closed_leakage: 0.0,
            ambient_dc: vec![0.0; pixels],
            noise_sigma: 0.0,
            saturation_level: f64::INFINITY,
            rng_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        let bad = |msg: &str| Err(ChannelError::ConfigInvalid(msg.to_string()));
        if self.emitter_gain.len() != self.emitter_pixel.len() {
            return bad("one gain and one pixel per emitter");
        }
        if self.emitter_gain.iter().any(|&g| !(g >= 0.0 && g.is_finite())) {
            return bad("gains must be finite and nonnegative");
        }
        if !(0.0..1.0).contains(&self.closed_leakage) {
            return bad("closed leakage must lie in [0, 1)");
        }
        if self.ambient_dc.iter().any(|&a| !(a >= 0.0 && a.is_finite())) {
            return bad("ambient levels must be finite and nonnegative");
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad("noise sigma must be finite and nonnegative");
        }
        if self.saturation_level.is_nan() || self.saturation_level <= 0.0 {
            return bad("saturation level must be positive");
        }
        Ok(())
    }

    fn gate(&self, mask: &PixelMask, pixel: usize) -> f64 {
        if mask.is_open(pixel) {
            1.0
        } else {
            self.closed_leakage
        }
    }
}

/// Photodiode output for one mask held over the whole block.
pub fn receive(
    emitter_blocks: &[SampleBlock],
    mask: &PixelMask,
    cfg: &ChannelConfig,
) -> Result<SampleBlock, ChannelError> {
    cfg.validate()?;
    let first = emitter_blocks.first().ok_or(ChannelError::NoEmitters)?;
    let (len, rate) = (first.len(), first.sample_rate);
    if emitter_blocks.iter().any(|b| b.len() != len || b.sample_rate != rate) {
        return Err(ChannelError::LengthMismatch);
    }
    if emitter_blocks.len() != cfg.emitter_gain.len() {
        return Err(ChannelError::ConfigInvalid(format!(
            "{} emitter blocks but {} configured emitters",
            emitter_blocks.len(),
            cfg.emitter_gain.len()
        )));
    }
    if cfg.ambient_dc.len() != mask.len() {
        return Err(ChannelError::ConfigInvalid("ambient levels must cover every pixel".into()));
    }
    for (emitter, &pixel) in cfg.emitter_pixel.iter().enumerate() {
        if pixel >= mask.len() {
            return Err(ChannelError::InvalidPixel { emitter, pixel, pixels: mask.len() });
        }
    }

    let ambient: f64 = cfg.ambient_dc.iter().enumerate().map(|(p, &a)| a * cfg.gate(mask, p)).sum();
    let mut out = vec![ambient; len];
    for (e, block) in emitter_blocks.iter().enumerate() {
        let weight = cfg.emitter_gain[e] * cfg.gate(mask, cfg.emitter_pixel[e]);
        if weight == 0.0 {
            continue;
        }
        for (y, x) in out.iter_mut().zip(&block.samples) {
            *y += weight * x;
        }
    }
    if cfg.noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
        let normal = Normal::new(0.0, cfg.noise_sigma).expect("sigma validated");
        for y in out.iter_mut() {
            *y += normal.sample(&mut rng);
        }
    }
    for y in out.iter_mut() {
        *y = y.clamp(0.0, cfg.saturation_level);
    }
    Ok(SampleBlock::new(out, rate))
}

/// AC-coupled SNR estimate. Infinite ratios are kept distinct from finite ones.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SnrEstimate {
    Db(f64),
    /// Noise reference has zero power while the signal does not (+inf dB).
    NoiseFree,
    /// Signal dwell has zero AC power (-inf dB).
    NoSignal,
}

impl SnrEstimate {
    pub fn db(self) -> f64 {
        match self {
            SnrEstimate::Db(v) => v,
            SnrEstimate::NoiseFree => f64::INFINITY,
            SnrEstimate::NoSignal => f64::NEG_INFINITY,
        }
    }
}

impl std::fmt::Display for SnrEstimate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SnrEstimate::Db(v) => write!(f, "{v:.2} dB"),
            SnrEstimate::NoiseFree => f.write_str("+inf dB"),
            SnrEstimate::NoSignal => f.write_str("-inf dB"),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum SnrRepr {
    Num(f64),
    Text(String),
}

impl Serialize for SnrEstimate {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            SnrEstimate::Db(v) => SnrRepr::Num(*v),
            SnrEstimate::NoiseFree => SnrRepr::Text("+inf".into()),
            SnrEstimate::NoSignal => SnrRepr::Text("-inf".into()),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for SnrEstimate {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match SnrRepr::deserialize(d)? {
            SnrRepr::Num(v) => Ok(SnrEstimate::Db(v)),
            SnrRepr::Text(t) if t == "+inf" => Ok(SnrEstimate::NoiseFree),
            SnrRepr::Text(t) if t == "-inf" => Ok(SnrEstimate::NoSignal),
            SnrRepr::Text(t) => Err(serde::de::Error::custom(format!("invalid SNR {t:?}"))),
        }
    }
}

/// Mean power after removing the block mean.
pub fn ac_power(samples: &[f64]) -> f64 {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n
}

/// `10 log10(P_signal / P_noise)` with both powers AC-coupled.
pub fn received_snr_db(signal_only: &SampleBlock, noise_only: &SampleBlock) -> Result<SnrEstimate, ChannelError> {
    if signal_only.is_empty() || noise_only.is_empty() {
        return Err(ChannelError::EmptyBlock);
    }
    let ps = ac_power(&signal_only.samples);
    let pn = ac_power(&noise_only.samples);
    Ok(if ps <= 0.0 {
        SnrEstimate::NoSignal
    } else if pn <= 0.0 {
        SnrEstimate::NoiseFree
    } else {
        SnrEstimate::Db(10.0 * (ps / pn).log10())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modem::{modulate, ModemConfig, PhaseOffset};
    use proptest::prelude::*;
    use rand::SeedableRng;

    fn bits(seed: u64, n: usize) -> Vec<u8> {
        crate::bits::random(&mut ChaCha8Rng::seed_from_u64(seed), n)
    }

    fn ook_block(seed: u64, offset: PhaseOffset) -> SampleBlock {
        modulate(&bits(seed, 200), &ModemConfig::ook(1e3, 4), offset).unwrap()
    }

    #[test]
    fn single_open_emitter_is_scaled() {
        let x = ook_block(1, PhaseOffset::InPhase);
        let cfg = ChannelConfig::ideal(vec![0.7], vec![0], 2);
        let y = receive(std::slice::from_ref(&x), &PixelMask::single(2, 0), &cfg).unwrap();
        for (a, b) in y.samples.iter().zip(&x.samples) {
            assert!((a - 0.7 * b).abs() < 1e-12);
        }
    }

    #[test]
    fn identical_in_phase_emitters_double() {
        let x = ook_block(2, PhaseOffset::InPhase);
        let one =
            receive(std::slice::from_ref(&x), &PixelMask::all_open(1), &ChannelConfig::ideal(vec![1.0], vec![0], 1))
                .unwrap();
        let cfg = ChannelConfig::ideal(vec![1.0, 1.0], vec![0, 1], 2);
        let two = receive(&[x.clone(), x], &PixelMask::all_open(2), &cfg).unwrap();
        for (a, b) in two.samples.iter().zip(&one.samples) {
            assert!((a - 2.0 * b).abs() < 1e-12);
        }
    }

    #[test]
    fn inverted_ook_cancels_to_constant() {
        let modem = ModemConfig::ook(1e3, 4);
        let a = ook_block(3, PhaseOffset::InPhase);
        let b = ook_block(3, PhaseOffset::Inverted);
        let gain = 0.8;
        let cfg = ChannelConfig::ideal(vec![gain, gain], vec![0, 1], 2);
        let y = receive(&[a, b], &PixelMask::all_open(2), &cfg).unwrap();
        for s in &y.samples {
            assert!((s - 2.0 * gain * modem.dc_bias).abs() < 1e-12);
        }
    }

    #[test]
    fn closed_interferer_is_removed() {
        let desired = ook_block(4, PhaseOffset::InPhase);
        let interferer = ook_block(5, PhaseOffset::InPhase);
        let cfg = ChannelConfig::ideal(vec![1.0, 1.0], vec![0, 1], 2);
        let y = receive(&[desired.clone(), interferer], &PixelMask::single(2, 0), &cfg).unwrap();
        assert_eq!(y.samples, desired.samples);
    }

    #[test]
    fn ambient_over_saturation_swamps() {
        let x = ook_block(6, PhaseOffset::InPhase);
        let cfg = ChannelConfig {
            ambient_dc: vec![0.0, 12.0],
            saturation_level: 10.0,
            noise_sigma: 0.3,
            ..ChannelConfig::ideal(vec![1.0, 0.0], vec![0, 1], 2)
        };
        let swamped = receive(&[x.clone(), x.clone()], &PixelMask::all_open(2), &cfg).unwrap();
        assert!(swamped.samples.iter().all(|&s| s == 10.0));
        let clean = receive(&[x.clone(), x], &PixelMask::single(2, 0), &cfg).unwrap();
        assert!(clean.samples.iter().any(|&s| s < 10.0));
    }

    #[test]
    fn input_errors() {
        let x = ook_block(7, PhaseOffset::InPhase);
        let mut short = x.clone();
        short.samples.pop();
        let cfg = ChannelConfig::ideal(vec![1.0, 1.0], vec![0, 1], 2);
        assert_eq!(receive(&[x.clone(), short], &PixelMask::all_open(2), &cfg), Err(ChannelError::LengthMismatch));
        let bad_pixel = ChannelConfig::ideal(vec![1.0], vec![5], 2);
        assert!(matches!(
            receive(std::slice::from_ref(&x), &PixelMask::all_open(2), &bad_pixel),
            Err(ChannelError::InvalidPixel { pixel: 5, .. })
        ));
        let leaky = ChannelConfig { closed_leakage: 1.0, ..ChannelConfig::ideal(vec![1.0], vec![0], 1) };
        assert!(matches!(receive(&[x], &PixelMask::all_open(1), &leaky), Err(ChannelError::ConfigInvalid(_))));
        assert_eq!(
            receive(&[], &PixelMask::all_open(1), &ChannelConfig::ideal(vec![], vec![], 1)),
            Err(ChannelError::NoEmitters)
        );
    }

    #[test]
    fn seeded_noise_is_deterministic() {
        let x = ook_block(8, PhaseOffset::InPhase);
        let cfg = ChannelConfig { noise_sigma: 0.2, rng_seed: 99, ..ChannelConfig::ideal(vec![1.0], vec![0], 1) };
        let a = receive(std::slice::from_ref(&x), &PixelMask::all_open(1), &cfg).unwrap();
        let b = receive(std::slice::from_ref(&x), &PixelMask::all_open(1), &cfg).unwrap();
        assert_eq!(a, b);
        let c = receive(&[x], &PixelMask::all_open(1), &ChannelConfig { rng_seed: 100, ..cfg }).unwrap();
        assert_ne!(a, c);
    }

    fn noise_block(seed: u64, sigma: f64, n: usize, offset: f64) -> SampleBlock {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, sigma).unwrap();
        SampleBlock::new((0..n).map(|_| offset + normal.sample(&mut rng)).collect(), 1.0)
    }

    #[test]
    fn snr_definition() {
        let signal = noise_block(1, 10.0, 100_000, 0.0);
        let noise = noise_block(2, 1.0, 100_000, 0.0);
        let snr = received_snr_db(&signal, &noise).unwrap().db();
        assert!((snr - 20.0).abs() < 0.2, "{snr}");
        assert_eq!(received_snr_db(&noise, &noise).unwrap(), SnrEstimate::Db(0.0));
    }

    #[test]
    fn independent_noise_reads_zero_db() {
        let a = noise_block(3, 0.5, 100_000, 0.0);
        let b = noise_block(4, 0.5, 100_000, 3.0);
        let snr = received_snr_db(&a, &b).unwrap().db();
        assert!(snr.abs() < 0.5, "{snr}");
    }

    #[test]
    fn degenerate_snr() {
        let flat = SampleBlock::new(vec![2.0; 10], 1.0);
        let wiggle = SampleBlock::new(vec![1.0, 2.0, 1.0, 2.0], 1.0);
        assert_eq!(received_snr_db(&wiggle, &flat).unwrap(), SnrEstimate::NoiseFree);
        assert_eq!(received_snr_db(&flat, &wiggle).unwrap(), SnrEstimate::NoSignal);
        assert_eq!(received_snr_db(&SampleBlock::new(vec![], 1.0), &flat), Err(ChannelError::EmptyBlock));
        let json =
            serde_json::to_string(&[SnrEstimate::Db(1.5), SnrEstimate::NoiseFree, SnrEstimate::NoSignal]).unwrap();
        assert_eq!(json, r#"[1.5,"+inf","-inf"]"#);
        let back: Vec<SnrEstimate> = serde_json::from_str(&json).unwrap();
        assert_eq!(back[1], SnrEstimate::NoiseFree);
    }

    #[test]
    fn mask_string_form() {
        let m = PixelMask::from_open_set(4, &[0, 2]);
        assert_eq!(m.to_string(), "1010");
        assert_eq!(m.open_pixels(), vec![0, 2]);
        let back: PixelMask = serde_json::from_str("\"1010\"").unwrap();
        assert_eq!(back, m);
    }

    proptest! {
        #[test]
        fn linear_without_noise_or_clipping(
            s1 in any::<u64>(), s2 in any::<u64>(), g1 in 0.0f64..3.0, g2 in 0.0f64..3.0, k in 0.0f64..4.0
        ) {
            let a = ook_block(s1, PhaseOffset::InPhase);
            let b = ook_block(s2, PhaseOffset::Inverted);
            let mask = PixelMask::all_open(2);
            let both = receive(&[a.clone(), b.clone()], &mask, &ChannelConfig::ideal(vec![g1, g2], vec![0, 1], 2)).unwrap();
            let only_a = receive(&[a.clone(), b.clone()], &mask, &ChannelConfig::ideal(vec![g1, 0.0], vec![0, 1], 2)).unwrap();
            let only_b = receive(&[a.clone(), b.clone()], &mask, &ChannelConfig::ideal(vec![0.0, g2], vec![0, 1], 2)).unwrap();
            let scaled = receive(&[a, b], &mask, &ChannelConfig::ideal(vec![k * g1, k * g2], vec![0, 1], 2)).unwrap();
            for i in 0..both.len() {
                prop_assert!((both.samples[i] - only_a.samples[i] - only_b.samples[i]).abs() < 1e-9);
                prop_assert!((scaled.samples[i] - k * both.samples[i]).abs() < 1e-9);
            }
        }

        #[test]
        fn closing_never_adds_light(seed in any::<u64>(), leak in 0.0f64..0.99, gain in 0.0f64..3.0) {
            let x = ook_block(seed, PhaseOffset::InPhase);
            let cfg = ChannelConfig { closed_leakage: leak, ..ChannelConfig::ideal(vec![gain], vec![0], 1) };
            let open = receive(std::slice::from_ref(&x), &PixelMask::all_open(1), &cfg).unwrap();
            let closed = receive(&[x], &PixelMask::all_closed(1), &cfg).unwrap();
            for (c, o) in closed.samples.iter().zip(&open.samples) {
                prop_assert!(c <= o);
            }
        }
    }
}
