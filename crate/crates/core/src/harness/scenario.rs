use super::HarnessError;
use crate::framing::{make_id, IdKind, IdLookupTable, TransmitterId, DEFAULT_CORR_THRESHOLD, ID_BITS};
use crate::modem::{ModemConfig, PhaseOffset, ThresholdMode};
use crate::optics::{map_emitters_to_pixels, EmitterPlacement, OpticalSetup};
use crate::protocol::{DEFAULT_RETRY_BUDGET, DEFAULT_SNR_THRESHOLD_DB};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const SCHEMA_VERSION: u32 = 1;

fn one() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

fn default_snr_threshold() -> f64 {
    DEFAULT_SNR_THRESHOLD_DB
}

fn default_corr_threshold() -> i32 {
    DEFAULT_CORR_THRESHOLD
}

fn default_retry_budget() -> usize {
    DEFAULT_RETRY_BUDGET
}

/// Complete description of one simulated experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    #[serde(default)]
    pub name: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    pub optics: OpticalSetup,
    /// Emitter positions in the emitter plane, meters; one per emitter.
    pub placement: EmitterPlacement,
    pub emitters: Vec<EmitterSpec>,
    #[serde(default)]
    pub channel: ChannelSpec,
    pub protocol: ProtocolSpec,
    #[serde(default)]
    pub receiver: ReceiverSpec,
    /// Holds one mask for the whole run instead of running the controller.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_mask: Option<FixedMask>,
    /// Simulated reception time after the controller finishes, seconds.
    pub duration_s: f64,
    pub rng_seed: u64,
    #[serde(default = "one")]
    pub code_rate: f64,
    /// Checks applied to the reports by `pixvlc run`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub expect: Vec<Expectation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmitterSpec {
    pub id_kind: IdKind,
    pub modem: ModemConfig,
    #[serde(default)]
    pub phase_offset: PhaseOffset,
    /// Optical path gain from this emitter to its pixel.
    #[serde(default = "one")]
    pub gain: f64,
    /// A disabled emitter is dark for the whole run.
    #[serde(default = "yes")]
    pub enabled: bool,
    pub bits: BitSource,
}

/// Payload bits carried by an emitter's packets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BitSource {
    /// Fresh random payload per packet. Without a seed, one is derived from
    /// the scenario seed and the emitter index.
    Random {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    /// A `0`/`1` string repeated across payloads.
    Pattern { bits: String },
    /// A text file of `0`/`1` characters (whitespace ignored), repeated across payloads.
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSpec {
    #[serde(default)]
    pub closed_leakage: f64,
    /// Ambient intensity per pixel; empty means none.
    #[serde(default)]
    pub ambient_dc: Vec<f64>,
    #[serde(default)]
    pub noise_sigma: f64,
    /// Photodiode ceiling; absent means no clipping.
    #[serde(default)]
    pub saturation_level: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolSpec {
    /// Switching slot, seconds.
    pub t_s: f64,
    #[serde(default = "default_snr_threshold")]
    pub snr_threshold_db: f64,
    #[serde(default = "default_corr_threshold")]
    pub corr_threshold: i32,
    #[serde(default = "default_retry_budget")]
    pub retry_budget: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub select_target: Option<TransmitterId>,
    /// Samples are discarded for this long after every mask change.
    #[serde(default)]
    pub dead_time_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReceiverSpec {
    #[serde(default)]
    pub threshold: ThresholdMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedMask {
    pub open: Vec<usize>,
    /// Emitter whose stream is decoded.
    pub target: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Ber,
    PerPercent,
    SnrDb,
}

/// An inclusive range a report figure must fall in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expectation {
    pub label: usize,
    pub metric: Metric,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
}

impl Expectation {
    pub fn holds(&self, value: Option<f64>) -> bool {
        match value {
            Some(v) if !v.is_nan() => self.min.is_none_or(|lo| v >= lo) && self.max.is_none_or(|hi| v <= hi),
            _ => false,
        }
    }
}

impl Scenario {
    /// Reads and validates a scenario file. Relative bit-file paths are
    /// resolved against the scenario's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Scenario, HarnessError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let mut scenario = Scenario::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for e in &mut scenario.emitters {
            if let BitSource::File { path } = &mut e.bits {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        }
        scenario.validate()?;
        Ok(scenario)
    }

    /// Parses a scenario without validating it.
    pub fn from_json(text: &str) -> Result<Scenario, HarnessError> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let found = value.get("schema_version").and_then(|v| v.as_u64()).unwrap_or(0);
        if found != SCHEMA_VERSION as u64 {
            return Err(HarnessError::SchemaVersionMismatch { found, expected: SCHEMA_VERSION });
        }
        Ok(serde_json::from_value(value)?)
    }

    pub fn grid_pixels(&self) -> usize {
        self.optics.grid_pixels()
    }

    /// Pixel each emitter images onto.
    pub fn emitter_pixels(&self) -> Result<Vec<usize>, HarnessError> {
        map_emitters_to_pixels(&self.optics, &self.placement)?.map_err(HarnessError::Infeasible)
    }

    /// Registered IDs; label = index of the first emitter using the ID.
    pub fn id_table(&self) -> IdLookupTable {
        let mut table = IdLookupTable::new();
        for (label, e) in self.emitters.iter().enumerate() {
            let id = make_id(e.id_kind);
            if table.lookup(&id).is_none() {
                table.register(id, label).expect("fresh ID");
            }
        }
        table
    }

    pub fn sample_rate(&self) -> f64 {
        self.emitters[0].modem.sample_rate()
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |msg: String| Err(HarnessError::Invalid(msg));
        self.optics.validate()?;
        if self.emitters.is_empty() {
            return bad("at least one emitter is required".into());
        }
        if self.placement.positions.len() != self.emitters.len() {
            return bad(format!("{} positions for {} emitters", self.placement.positions.len(), self.emitters.len()));
        }
        self.emitter_pixels()?;

        let first = &self.emitters[0].modem;
        for (i, e) in self.emitters.iter().enumerate() {
            e.modem.validate()?;
            if e.modem.symbol_rate != first.symbol_rate || e.modem.samples_per_symbol != first.samples_per_symbol {
                return bad(format!("emitter {i} does not share the symbol clock of emitter 0"));
            }
            if !(e.gain >= 0.0 && e.gain.is_finite()) {
                return bad(format!("emitter {i} gain must be finite and nonnegative"));
            }
            match &e.bits {
                BitSource::Random { .. } => {}
                BitSource::Pattern { bits } => check_bits(bits, &format!("emitter {i} pattern"))?,
                BitSource::File { path } => {
                    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
                    check_bits(&text, &path.display().to_string())?;
                }
            }
        }

        let pixels = self.grid_pixels();
        let c = &self.channel;
        if !c.ambient_dc.is_empty() && c.ambient_dc.len() != pixels {
            return bad(format!("ambient_dc needs {pixels} entries"));
        }
        self.channel_config(0)?.validate()?;

        let p = &self.protocol;
        let fs = self.sample_rate();
        if !(p.t_s > 0.0 && p.t_s.is_finite()) {
            return bad("t_s must be positive".into());
        }
        if !(p.dead_time_s >= 0.0 && p.dead_time_s < p.t_s) {
            return bad("dead_time_s must lie in [0, t_s)".into());
        }
        let usable_symbols = ((p.t_s - p.dead_time_s) * first.symbol_rate).floor();
        if usable_symbols < 2.0 {
            return bad("t_s leaves fewer than two symbols after the dead time".into());
        }
        if !(1..=ID_BITS as i32).contains(&p.corr_threshold) {
            return bad(format!("corr_threshold must lie in 1..={ID_BITS}"));
        }
        if p.retry_budget == 0 {
            return bad("retry_budget must be at least 1".into());
        }
        if !(self.duration_s >= 0.0 && self.duration_s.is_finite()) {
            return bad("duration_s must be finite and nonnegative".into());
        }
        if !(self.code_rate > 0.0 && self.code_rate <= 1.0) {
            return bad("code_rate must lie in (0, 1]".into());
        }
        if (p.t_s * fs).round() < 1.0 {
            return bad("t_s is shorter than one sample".into());
        }

        match &self.fixed_mask {
            Some(fixed) => {
                if let Some(&px) = fixed.open.iter().find(|&&px| px >= pixels) {
                    return bad(format!("fixed mask opens pixel {px} of {pixels}"));
                }
                if fixed.target >= self.emitters.len() {
                    return bad(format!("fixed mask target {} is not an emitter", fixed.target));
                }
            }
            None => {
                if self.emitters.iter().any(|e| e.modem != *first) {
                    return bad("the controller needs every emitter on the same modem settings".into());
                }
                let table = self.id_table();
                if table.len() != self.emitters.len() {
                    return bad("the controller needs a distinct ID per emitter".into());
                }
                if let Some(target) = &p.select_target {
                    if table.lookup(target).is_none() {
                        return bad(format!("select_target {target} is not registered"));
                    }
                }
            }
        }
        Ok(())
    }

    /// Channel parameters for one dwell.
    pub(crate) fn channel_config(&self, rng_seed: u64) -> Result<crate::channel::ChannelConfig, HarnessError> {
        let pixels = self.grid_pixels();
        let c = &self.channel;
        Ok(crate::channel::ChannelConfig {
            emitter_gain: self.emitters.iter().map(|e| if e.enabled { e.gain } else { 0.0 }).collect(),
            emitter_pixel: self.emitter_pixels()?,
            closed_leakage: c.closed_leakage,
            ambient_dc: if c.ambient_dc.is_empty() { vec![0.0; pixels] } else { c.ambient_dc.clone() },
            noise_sigma: c.noise_sigma,
            saturation_level: c.saturation_level.unwrap_or(f64::INFINITY),
            rng_seed,
        })
    }
}

fn check_bits(text: &str, what: &str) -> Result<(), HarnessError> {
    let cleaned: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    match crate::bits::parse(&cleaned) {
        Ok(bits) if !bits.is_empty() => Ok(()),
        Ok(_) => Err(HarnessError::Invalid(format!("{what} holds no bits"))),
        Err(c) => Err(HarnessError::Invalid(format!("{what} contains {c:?}"))),
    }
}
