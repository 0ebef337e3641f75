use super::scenario::Scenario;
use super::stream::TxStream;
use super::trace::{compute_reports, detect, DwellRecord, Outcome, TraceRecord};
use super::HarnessError;
use crate::channel::{receive, received_snr_db, PixelMask, SnrEstimate};
use crate::framing::{confirmed_ids, IdLookupTable, TransmitterId, ID_BITS, PACKET_BITS};
use crate::modem::{demodulate, SampleBlock};
use crate::protocol::{run_controller, ControllerOptions, ShutterLink};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;

/// Consecutive headers that must agree before an ID counts as identified.
pub const ID_CONFIRMATIONS: usize = 3;
/// Symbols in an Identification window: enough for [`ID_CONFIRMATIONS`]
/// complete headers whatever the packet phase.
const ID_WINDOW_SYMBOLS: u64 = (ID_CONFIRMATIONS * PACKET_BITS + 2 * ID_BITS) as u64;
const NOISE_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Keep every photodiode sample as `(sim time s, intensity)`.
    pub dump_samples: bool,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trace: TraceRecord,
    pub samples: Option<Vec<(f64, f64)>>,
}

struct Capture {
    block: SampleBlock,
    first_symbol: u64,
    start_time_s: f64,
}

/// Simulated receiver front end: emitters, channel and shutter sharing one sample clock.
struct Link<'a> {
    scenario: &'a Scenario,
    streams: Vec<TxStream>,
    emitter_pixels: Vec<usize>,
    pixels: usize,
    sps: u64,
    fs: f64,
    slot_samples: u64,
    dead_samples: u64,
    cursor: u64,
    dwell_count: u64,
    prev_mask: Option<PixelMask>,
    table: IdLookupTable,
    samples: Option<Vec<(f64, f64)>>,
}

impl<'a> Link<'a> {
    fn new(scenario: &'a Scenario, dump_samples: bool) -> Result<Self, HarnessError> {
        let streams = scenario
            .emitters
            .iter()
            .enumerate()
            .map(|(i, e)| TxStream::new(e, crate::bits::mix_seed(scenario.rng_seed, i as u64)))
            .collect::<Result<Vec<_>, _>>()?;
        let fs = scenario.sample_rate();
        Ok(Link {
            scenario,
            streams,
            emitter_pixels: scenario.emitter_pixels()?,
            pixels: scenario.grid_pixels(),
            sps: scenario.emitters[0].modem.samples_per_symbol as u64,
            fs,
            slot_samples: (scenario.protocol.t_s * fs).round() as u64,
            dead_samples: (scenario.protocol.dead_time_s * fs).round() as u64,
            cursor: 0,
            dwell_count: 0,
            prev_mask: None,
            table: scenario.id_table(),
            samples: dump_samples.then(Vec::new),
        })
    }

    fn time_of(&self, sample: u64) -> f64 {
        sample as f64 / self.fs
    }

    /// Holds `mask` for `len` samples and returns the whole symbols received
    /// after any switching dead time.
    fn capture(&mut self, mask: &PixelMask, len: u64) -> Result<Capture, HarnessError> {
        let start = self.cursor;
        let dead = if self.prev_mask.as_ref() == Some(mask) { 0 } else { self.dead_samples.min(len) };
        let first = (start + dead).div_ceil(self.sps);
        let last = ((start + len) / self.sps).max(first);
        self.cursor += len;
        self.prev_mask = Some(mask.clone());
        self.dwell_count += 1;

        let cfg = self.scenario.channel_config(crate::bits::mix_seed(
            crate::bits::mix_seed(self.scenario.rng_seed, NOISE_STREAM),
            self.dwell_count,
        ))?;
        let n = ((last - first) * self.sps) as usize;
        let mut blocks = Vec::with_capacity(self.streams.len());
        for (e, spec) in self.scenario.emitters.iter().enumerate() {
            let gate = if mask.is_open(self.emitter_pixels[e]) { 1.0 } else { cfg.closed_leakage };
            if cfg.emitter_gain[e] * gate == 0.0 || n == 0 {
                blocks.push(SampleBlock::zeros(n, self.fs));
            } else {
                blocks.push(self.streams[e].render(spec, first, last)?);
            }
        }
        let block = if n == 0 { SampleBlock::zeros(0, self.fs) } else { receive(&blocks, mask, &cfg)? };
        let (s0, fs) = (first * self.sps, self.fs);
        if let Some(out) = &mut self.samples {
            out.extend(block.samples.iter().enumerate().map(|(i, &y)| ((s0 + i as u64) as f64 / fs, y)));
        }
        Ok(Capture { block, first_symbol: first, start_time_s: self.time_of(start) })
    }

    fn decode(&self, block: &SampleBlock, label: usize) -> Result<Vec<u8>, HarnessError> {
        if block.len() < self.sps as usize {
            return Ok(Vec::new());
        }
        let modem = &self.scenario.emitters[label].modem;
        Ok(demodulate(block, modem, self.scenario.receiver.threshold)?)
    }

    fn reception(
        &mut self,
        mask: &PixelMask,
        label: usize,
        len: u64,
        index: usize,
    ) -> Result<(DwellRecord, SampleBlock), HarnessError> {
        let cap = self.capture(mask, len)?;
        let rx = self.decode(&cap.block, label)?;
        let tx = self.streams[label].bits(cap.first_symbol, cap.first_symbol + rx.len() as u64);
        let detections = detect(&rx, &self.table, self.scenario.protocol.corr_threshold)?;
        let record = DwellRecord {
            index,
            start_time_s: cap.start_time_s,
            mask: mask.clone(),
            label,
            start_bit: cap.first_symbol,
            decoded_bits: crate::bits::to_string(&rx),
            tx_bits: crate::bits::to_string(&tx),
            detections,
        };
        Ok((record, cap.block))
    }
}

impl ShutterLink for Link<'_> {
    type Error = HarnessError;

    fn grid_pixels(&self) -> usize {
        self.pixels
    }

    fn sim_time_s(&self) -> f64 {
        self.time_of(self.cursor)
    }

    fn dwell(&mut self, mask: &PixelMask) -> Result<SampleBlock, HarnessError> {
        Ok(self.capture(mask, self.slot_samples)?.block)
    }

    fn identify(&mut self, mask: &PixelMask) -> Result<Vec<TransmitterId>, HarnessError> {
        let len = self.dead_samples + (ID_WINDOW_SYMBOLS + 1) * self.sps;
        let cap = self.capture(mask, len)?;
        let rx = self.decode(&cap.block, 0)?;
        Ok(confirmed_ids(&rx, &self.table, self.scenario.protocol.corr_threshold, ID_CONFIRMATIONS)?)
    }

    fn snr(&self, signal: &SampleBlock, noise: &SampleBlock) -> Result<SnrEstimate, HarnessError> {
        Ok(received_snr_db(signal, noise)?)
    }
}

fn scenario_hash(scenario: &Scenario) -> Result<String, HarnessError> {
    let canonical = serde_json::to_string(scenario)?;
    Ok(hex::encode(Sha256::digest(canonical.as_bytes())))
}

pub fn run_scenario(scenario: &Scenario) -> Result<TraceRecord, HarnessError> {
    Ok(run_scenario_with(scenario, RunOptions::default())?.trace)
}

/// Runs the controller (or holds the fixed mask), then receives for
/// `duration_s` in slots of `T_s`, round-robin over the locked pixels.
pub fn run_scenario_with(scenario: &Scenario, options: RunOptions) -> Result<RunOutput, HarnessError> {
    scenario.validate()?;
    let mut link = Link::new(scenario, options.dump_samples)?;
    let pixels = link.pixels;
    let total = (scenario.duration_s * link.fs).round() as u64;
    let mut events = Vec::new();
    let mut snr = BTreeMap::new();
    let mut dwells = Vec::new();

    let slots =
        |link: &mut Link, plan: &[(PixelMask, usize)]| -> Result<Vec<(DwellRecord, SampleBlock)>, HarnessError> {
            let mut out = Vec::new();
            let mut remaining = total;
            while remaining > 0 {
                let len = remaining.min(link.slot_samples);
                let (mask, label) = &plan[out.len() % plan.len()];
                out.push(link.reception(mask, *label, len, out.len())?);
                remaining -= len;
            }
            Ok(out)
        };

    let outcome = match &scenario.fixed_mask {
        Some(fixed) => {
            let reference = link.capture(&PixelMask::all_closed(pixels), link.slot_samples)?.block;
            let mask = PixelMask::from_open_set(pixels, &fixed.open);
            let received = slots(&mut link, &[(mask, fixed.target)])?;
            if let Some((_, block)) = received.first() {
                if !block.is_empty() && !reference.is_empty() {
                    snr.insert(fixed.target, received_snr_db(block, &reference)?);
                }
            }
            dwells.extend(received.into_iter().map(|(r, _)| r));
            Outcome::FixedMask
        }
        None => {
            let p = &scenario.protocol;
            let options =
                ControllerOptions { t_s: p.t_s, snr_threshold_db: p.snr_threshold_db, retry_budget: p.retry_budget };
            let run = run_controller(&mut link, scenario.id_table(), options, p.select_target)?;
            events = run.events;
            if run.converged {
                let locked: Vec<(usize, usize)> = run.state.locked_pixels.iter().map(|(&px, &l)| (px, l)).collect();
                for &(px, label) in &locked {
                    if let Some(estimate) = run.state.pixel_snr_db[px] {
                        snr.insert(label, estimate);
                    }
                }
                let plan: Vec<(PixelMask, usize)> =
                    locked.iter().map(|&(px, label)| (PixelMask::single(pixels, px), label)).collect();
                dwells.extend(slots(&mut link, &plan)?.into_iter().map(|(r, _)| r));
                Outcome::Locked {
                    pixels: locked.iter().map(|&(px, _)| px).collect(),
                    labels: locked.iter().map(|&(_, l)| l).collect(),
                    cycles: run.cycles,
                    dwells: run.dwells,
                    lock_time_s: run.finished_at_s,
                }
            } else {
                Outcome::NonConvergence { cycles: run.cycles, dwells: run.dwells }
            }
        }
    };

    let table = scenario.id_table();
    let corr_threshold = scenario.protocol.corr_threshold;
    let reports = compute_reports(&dwells, &table, corr_threshold, &snr, scenario)?;
    let trace = TraceRecord {
        schema_version: super::SCHEMA_VERSION,
        scenario_hash: scenario_hash(scenario)?,
        seed: scenario.rng_seed,
        scenario: scenario.clone(),
        id_table: table,
        corr_threshold,
        packet_bits: PACKET_BITS,
        outcome,
        events,
        snr,
        dwells,
        reports,
    };
    Ok(RunOutput { trace, samples: link.samples })
}

/// Per-pixel SNR measured as in Discovery, for each switching time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnrSweepRow {
    pub switching_time_s: f64,
    pub pixel_snr_db: Vec<SnrEstimate>,
}

/// Measures every pixel against an all-closed reference of the same length,
/// once per switching time.
pub fn snr_sweep(scenario: &Scenario, switching_times_s: &[f64]) -> Result<Vec<SnrSweepRow>, HarnessError> {
    let mut rows = Vec::with_capacity(switching_times_s.len());
    for &t_s in switching_times_s {
        let mut s = scenario.clone();
        s.protocol.t_s = t_s;
        s.validate()?;
        let mut link = Link::new(&s, false)?;
        let reference = link.dwell(&PixelMask::all_closed(link.pixels))?;
        let mut pixel_snr_db = Vec::with_capacity(link.pixels);
        for p in 0..link.pixels {
            let block = link.dwell(&PixelMask::single(link.pixels, p))?;
            pixel_snr_db.push(link.snr(&block, &reference)?);
        }
        rows.push(SnrSweepRow { switching_time_s: t_s, pixel_snr_db });
    }
    Ok(rows)
}
