//! Binary primary-user traffic traces.
//!
//! A [`Trace`] is the occupancy of one channel, one 0/1 value per time slot
//! (1 = the licensed user is transmitting). Traces come from three places:
//! the synthetic block generator, thresholded energy measurements, and plain
//! text files (one token per line).

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default slot duration used when a source does not say otherwise.
pub const DEFAULT_SLOT_MS: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    states: Vec<u8>,
    slot_duration_ms: f64,
    name: String,
}

impl Trace {
    pub fn new(states: Vec<u8>, name: impl Into<String>) -> Result<Self> {
        Self::with_slot_duration(states, name, DEFAULT_SLOT_MS)
    }

    pub fn with_slot_duration(
        states: Vec<u8>,
        name: impl Into<String>,
        slot_duration_ms: f64,
    ) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::invalid("a trace needs at least one slot"));
        }
        if let Some(pos) = states.iter().position(|&q| q > 1) {
            return Err(Error::invalid(format!(
                "slot {pos} holds {}, expected 0 or 1",
                states[pos]
            )));
        }
        if !(slot_duration_ms.is_finite() && slot_duration_ms > 0.0) {
            return Err(Error::invalid("slot duration must be positive"));
        }
        Ok(Trace {
            states,
            slot_duration_ms,
            name: name.into(),
        })
    }

    pub fn states(&self) -> &[u8] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn slot_duration_ms(&self) -> f64 {
        self.slot_duration_ms
    }

    /// Fraction of slots in which the channel is occupied.
    pub fn activation_fraction(&self) -> f64 {
        let active = self.states.iter().filter(|&&q| q == 1).count();
        active as f64 / self.states.len() as f64
    }

    /// The `width` most recent states ending at slot `t`, most recent first.
    ///
    /// Panics if `t + 1 < width` or `t` is out of range.
    pub fn window(&self, t: usize, width: usize) -> Vec<u8> {
        self.states[t + 1 - width..=t].iter().rev().copied().collect()
    }

    /// Sub-trace `[start, end)` with a derived name.
    pub fn slice(&self, start: usize, end: usize) -> Result<Trace> {
        if start >= end || end > self.len() {
            return Err(Error::invalid(format!(
                "slice [{start}, {end}) out of range for a trace of {} slots",
                self.len()
            )));
        }
        Trace::with_slot_duration(
            self.states[start..end].to_vec(),
            format!("{}[{start}..{end}]", self.name),
            self.slot_duration_ms,
        )
    }

    /// Write in binary-lines format.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::with_capacity(self.states.len() * 2);
        for &q in &self.states {
            out.push(if q == 1 { '1' } else { '0' });
            out.push('\n');
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// Parameters of the periodic block generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub block_size: usize,
    pub n_slots: usize,
    #[serde(default = "default_start_state")]
    pub start_state: u8,
    #[serde(default)]
    pub outlier_rate: f64,
    #[serde(default)]
    pub rng_seed: u64,
}

fn default_start_state() -> u8 {
    1
}

impl SyntheticSpec {
    pub fn periodic(block_size: usize, n_slots: usize, start_state: u8) -> Self {
        SyntheticSpec {
            block_size,
            n_slots,
            start_state,
            outlier_rate: 0.0,
            rng_seed: 0,
        }
    }
}

/// Blocks of `block_size` identical states alternating between active and
/// idle, each slot then flipped independently with probability `outlier_rate`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Trace> {
    if spec.block_size == 0 {
        return Err(Error::invalid("block size must be positive"));
    }
    if spec.n_slots == 0 {
        return Err(Error::invalid("slot count must be positive"));
    }
    if spec.start_state > 1 {
        return Err(Error::invalid("start state must be 0 or 1"));
    }
    if !(0.0..=1.0).contains(&spec.outlier_rate) {
        return Err(Error::invalid("outlier rate must lie in [0, 1]"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let states = (0..spec.n_slots)
        .map(|t| {
            let q = if (t / spec.block_size) % 2 == 0 {
                spec.start_state
            } else {
                1 - spec.start_state
            };
            if spec.outlier_rate > 0.0 && rng.random_bool(spec.outlier_rate) {
                1 - q
            } else {
                q
            }
        })
        .collect();

    let name = if spec.outlier_rate > 0.0 {
        format!(
            "synthetic-b{}-o{}-s{}",
            spec.block_size, spec.outlier_rate, spec.rng_seed
        )
    } else {
        format!("synthetic-b{}", spec.block_size)
    };
    Trace::new(states, name)
}

/// Per-slot received energy together with the detection threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyTrace {
    pub levels: Vec<f64>,
    pub threshold: f64,
}

/// A slot is active iff its energy is strictly above the threshold.
pub fn threshold_energy(energy: &EnergyTrace) -> Result<Trace> {
    if energy.levels.is_empty() {
        return Err(Error::invalid("energy trace is empty"));
    }
    if !energy.threshold.is_finite() {
        return Err(Error::invalid("threshold must be finite"));
    }
    if let Some(pos) = energy.levels.iter().position(|l| !l.is_finite()) {
        return Err(Error::invalid(format!("energy level at slot {pos} is not finite")));
    }
    let states = energy
        .levels
        .iter()
        .map(|&l| u8::from(l > energy.threshold))
        .collect();
    Trace::new(states, "thresholded")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TraceFormat {
    /// One `0` / `1` token per line.
    BinaryLines,
    /// One decimal energy value per line (comma-separated cells are also
    /// accepted), thresholded on load.
    CsvEnergy { threshold: f64 },
}

pub fn load_trace(path: impl AsRef<Path>, format: TraceFormat) -> Result<Trace> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let display = path.display().to_string();
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| display.clone());

    let mut trace = match format {
        TraceFormat::BinaryLines => {
            let states = parse_binary_lines(&text, &display)?;
            Trace::new(states, name.clone())
                .map_err(|_| Error::Format(format!("{display}: no states found")))?
        }
        TraceFormat::CsvEnergy { threshold } => {
            let levels = parse_energy_lines(&text, &display)?;
            let energy = EnergyTrace { levels, threshold };
            threshold_energy(&energy)?
        }
    };
    trace.name = name;
    Ok(trace)
}

fn parse_binary_lines(text: &str, path: &str) -> Result<Vec<u8>> {
    let mut states = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let token = raw.trim();
        match token {
            "" => continue,
            "0" => states.push(0),
            "1" => states.push(1),
            other => {
                return Err(Error::Parse {
                    path: path.to_string(),
                    line: i + 1,
                    token: other.to_string(),
                    reason: "expected 0 or 1".into(),
                })
            }
        }
    }
    Ok(states)
}

fn parse_energy_lines(text: &str, path: &str) -> Result<Vec<f64>> {
    let mut levels = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        for cell in raw.split(',').map(str::trim).filter(|c| !c.is_empty()) {
            let value: f64 = cell.parse().map_err(|_| Error::Parse {
                path: path.to_string(),
                line: i + 1,
                token: cell.to_string(),
                reason: "expected a decimal number".into(),
            })?;
            if !value.is_finite() {
                return Err(Error::Parse {
                    path: path.to_string(),
                    line: i + 1,
                    token: cell.to_string(),
                    reason: "energy level is not finite".into(),
                });
            }
            levels.push(value);
        }
    }
    Ok(levels)
}

/// Parse a bit pattern written as `"110"` or `"1,1,0"` (most recent first).
pub fn parse_bits(s: &str) -> Result<Vec<u8>> {
    let bits: Vec<u8> = s
        .chars()
        .filter(|c| !matches!(c, ',' | ' ' | '[' | ']'))
        .map(|c| match c {
            '0' => Ok(0),
            '1' => Ok(1),
            other => Err(Error::invalid(format!("{other:?} is not a bit in {s:?}"))),
        })
        .collect::<Result<_>>()?;
    if bits.is_empty() {
        return Err(Error::invalid("empty bit pattern"));
    }
    Ok(bits)
}
