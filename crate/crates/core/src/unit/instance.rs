use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::catalog::{Behavior, KindEntry};
use super::registers::RegisterFile;
use super::{IoShape, Link, Sample, UnitDescriptor, UnitError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct UnitId(pub u64);

impl std::fmt::Display for UnitId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "u{}", self.0)
    }
}

/// Named clock domain with its modeled frequency. Used only by the
/// throughput/latency analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClockDomain {
    pub name: String,
    pub hz: f64,
}

impl Default for ClockDomain {
    fn default() -> Self {
        Self {
            name: "fabric".into(),
            hz: 3.0e8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepReport {
    Progressed { consumed: usize, produced: usize },
    BlockedOnInput { port: usize, available: usize, needed: usize },
    BlockedOnOutput { port: usize, free: usize, needed: usize },
}

/// A live processing unit.
pub struct UnitInstance {
    id: UnitId,
    kind: Arc<KindEntry>,
    registers: Arc<RegisterFile>,
    behavior: Box<dyn Behavior>,
    clock_domain: ClockDomain,
    shape: IoShape,
    seen_generation: u64,
    scratch_in: Vec<Vec<Sample>>,
    scratch_out: Vec<Vec<Sample>>,
    steps: u64,
}

impl std::fmt::Debug for UnitInstance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("UnitInstance")
            .field("id", &self.id)
            .field("kind", &self.kind.descriptor.kind)
            .field("shape", &self.shape)
            .field("clock_domain", &self.clock_domain)
            .finish()
    }
}

impl UnitInstance {
    pub(crate) fn new(
        id: UnitId,
        kind: Arc<KindEntry>,
        registers: Arc<RegisterFile>,
        clock_domain: ClockDomain,
    ) -> Self {
        let (generation, regs) = registers.snapshot();
        let shape = kind.block.io_shape(&regs).expect("validated at creation");
        let behavior = kind.block.build(&regs);
        let n_in = kind.descriptor.n_inputs;
        let n_out = kind.descriptor.n_outputs;
        Self {
            id,
            kind,
            registers,
            behavior,
            clock_domain,
            shape,
            seen_generation: generation,
            scratch_in: vec![Vec::new(); n_in],
            scratch_out: vec![Vec::new(); n_out],
            steps: 0,
        }
    }

    pub fn id(&self) -> UnitId {
        self.id
    }

    pub fn kind(&self) -> &str {
        &self.kind.descriptor.kind
    }

    pub fn descriptor(&self) -> &UnitDescriptor {
        &self.kind.descriptor
    }

    pub fn clock_domain(&self) -> &ClockDomain {
        &self.clock_domain
    }

    pub fn registers(&self) -> Arc<RegisterFile> {
        Arc::clone(&self.registers)
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn write_reg(&self, offset: u32, value: u32) -> Result<(), UnitError> {
        self.registers.write_reg(offset, value)
    }

    pub fn read_reg(&self, offset: u32) -> Result<u32, UnitError> {
        self.registers.read_reg(offset)
    }

    /// Step shape in effect for the next step.
    pub fn shape(&mut self) -> IoShape {
        self.refresh();
        self.shape
    }

    fn refresh(&mut self) {
        if self.registers.generation() == self.seen_generation {
            return;
        }
        let (generation, regs) = self.registers.snapshot();
        self.shape = self
            .kind
            .block
            .io_shape(&regs)
            .expect("register file only commits valid sets");
        self.behavior.reconfigure(&regs);
        self.seen_generation = generation;
    }

    pub fn reset(&mut self) {
        self.behavior.reset();
    }

    /// Runs one step against the given links. Either consumes and produces a
    /// full window on every port, or does nothing and reports why.
    pub fn step(&mut self, inputs: &[Link], outputs: &[Link]) -> StepReport {
        debug_assert_eq!(inputs.len(), self.kind.descriptor.n_inputs);
        debug_assert_eq!(outputs.len(), self.kind.descriptor.n_outputs);
        self.refresh();
        let IoShape { consume, produce } = self.shape;
        for (port, link) in inputs.iter().enumerate() {
            let available = link.len();
            if available < consume {
                return StepReport::BlockedOnInput {
                    port,
                    available,
                    needed: consume,
                };
            }
        }
        for (port, link) in outputs.iter().enumerate() {
            let free = link.free();
            if free < produce {
                return StepReport::BlockedOnOutput {
                    port,
                    free,
                    needed: produce,
                };
            }
        }
        for (link, buf) in inputs.iter().zip(self.scratch_in.iter_mut()) {
            buf.clear();
            let ok = link.try_pop_exact(consume, buf);
            debug_assert!(ok, "single consumer saw enough items");
        }
        self.run_window();
        for (link, buf) in outputs.iter().zip(self.scratch_out.iter()) {
            // Closed downstream: nothing to deliver to.
            let _ = link.try_push_slice(buf);
        }
        StepReport::Progressed {
            consumed: consume,
            produced: produce,
        }
    }

    fn run_window(&mut self) {
        let produce = self.shape.produce;
        for buf in &mut self.scratch_out {
            buf.clear();
            buf.resize(produce, Sample::ZERO);
        }
        let ins: Vec<&[Sample]> = self.scratch_in.iter().map(Vec::as_slice).collect();
        let mut outs: Vec<&mut [Sample]> =
            self.scratch_out.iter_mut().map(Vec::as_mut_slice).collect();
        self.behavior.process(&ins, &mut outs);
        self.steps += 1;
    }

    /// Processes a whole burst on a single-input, single-output unit, one
    /// window at a time. The burst length must be a multiple of the window.
    pub fn process_burst(&mut self, burst: &[Sample]) -> Result<Vec<Sample>, UnitError> {
        if self.kind.descriptor.n_inputs != 1 || self.kind.descriptor.n_outputs != 1 {
            return Err(UnitError::NoSuchPort);
        }
        self.refresh();
        let IoShape { consume, produce } = self.shape;
        if consume == 0 || !burst.len().is_multiple_of(consume) {
            return Err(UnitError::BurstMisaligned {
                len: burst.len(),
                window: consume,
            });
        }
        let mut out = Vec::with_capacity(burst.len() / consume * produce);
        for window in burst.chunks_exact(consume) {
            self.scratch_in[0].clear();
            self.scratch_in[0].extend_from_slice(window);
            self.run_window();
            out.extend_from_slice(&self.scratch_out[0]);
        }
        Ok(out)
    }
}
