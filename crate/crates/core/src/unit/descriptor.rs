use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::UnitError;

/// One 32-bit control register.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegisterSpec {
    pub offset: u32,
    pub name: String,
    pub min: u32,
    pub max: u32,
    pub default: u32,
}

impl RegisterSpec {
    pub fn new(offset: u32, name: &str, min: u32, max: u32, default: u32) -> Self {
        Self {
            offset,
            name: name.to_string(),
            min,
            max,
            default,
        }
    }

    pub fn accepts(&self, value: u32) -> bool {
        (self.min..=self.max).contains(&value)
    }
}

/// Catalog entry for a processing-unit kind. Step sizes are those of the
/// default register values; blocks whose window depends on registers report
/// the live shape through [`BlockKind::io_shape`](super::BlockKind::io_shape).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitDescriptor {
    pub kind: String,
    pub n_inputs: usize,
    pub n_outputs: usize,
    pub samples_in_per_step: usize,
    pub samples_out_per_step: usize,
    /// Modeled peak throughput in samples per second.
    pub throughput_sps: f64,
    pub latency_cycles: u64,
    /// Fabric cycles needed per step (initiation interval).
    pub cycles_per_step: u64,
    pub cost_logic_cells: u64,
    pub cost_dsp_slices: u64,
    pub register_map: Vec<RegisterSpec>,
}

impl UnitDescriptor {
    pub fn validate(&self) -> Result<(), UnitError> {
        let bad = |why: String| Err(UnitError::InvalidDescriptor(format!("{}: {why}", self.kind)));
        if self.kind.is_empty() {
            return bad("empty kind name".into());
        }
        if !(self.throughput_sps.is_finite() && self.throughput_sps > 0.0) {
            return bad(format!("throughput_sps must be > 0, got {}", self.throughput_sps));
        }
        if self.cycles_per_step == 0 {
            return bad("cycles_per_step must be > 0".into());
        }
        let mut offsets = BTreeSet::new();
        let mut names = BTreeSet::new();
        for r in &self.register_map {
            if r.offset % 4 != 0 {
                return bad(format!("register {} offset {:#x} not 4-byte aligned", r.name, r.offset));
            }
            if !offsets.insert(r.offset) {
                return bad(format!("duplicate register offset {:#x}", r.offset));
            }
            if !names.insert(r.name.as_str()) {
                return bad(format!("duplicate register name {}", r.name));
            }
            if r.min > r.max || !r.accepts(r.default) {
                return bad(format!("register {} default outside [min,max]", r.name));
            }
        }
        Ok(())
    }

    pub fn register(&self, name: &str) -> Option<&RegisterSpec> {
        self.register_map.iter().find(|r| r.name == name)
    }

    pub fn register_at(&self, offset: u32) -> Option<&RegisterSpec> {
        self.register_map.iter().find(|r| r.offset == offset)
    }

    /// Throughput bound implied by the step window and initiation interval.
    pub fn pipeline_throughput(&self, clock_hz: f64) -> f64 {
        self.samples_out_per_step as f64 * clock_hz / self.cycles_per_step as f64
    }

    /// Effective modeled throughput at a given fabric clock.
    pub fn effective_throughput(&self, clock_hz: f64) -> f64 {
        self.throughput_sps.min(self.pipeline_throughput(clock_hz))
    }

    /// One `key = value` record, used by the catalog dump.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "[kind.{}]", self.kind);
        let _ = writeln!(s, "n_inputs = {}", self.n_inputs);
        let _ = writeln!(s, "n_outputs = {}", self.n_outputs);
        let _ = writeln!(s, "samples_in_per_step = {}", self.samples_in_per_step);
        let _ = writeln!(s, "samples_out_per_step = {}", self.samples_out_per_step);
        let _ = writeln!(s, "throughput_sps = {:e}", self.throughput_sps);
        let _ = writeln!(s, "latency_cycles = {}", self.latency_cycles);
        let _ = writeln!(s, "cycles_per_step = {}", self.cycles_per_step);
        let _ = writeln!(s, "cost_logic_cells = {}", self.cost_logic_cells);
        let _ = writeln!(s, "cost_dsp_slices = {}", self.cost_dsp_slices);
        for r in &self.register_map {
            let _ = writeln!(
                s,
                "register = {{ offset = {:#06x}, name = \"{}\", min = {}, max = {}, default = {} }}",
                r.offset, r.name, r.min, r.max, r.default
            );
        }
        s
    }
}
