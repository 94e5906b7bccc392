use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};

use super::instance::{ClockDomain, UnitId, UnitInstance};
use super::registers::{RegisterFile, Registers};
use super::{Sample, UnitDescriptor, UnitError};

/// Items consumed per input and produced per output in one step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct IoShape {
    pub consume: usize,
    pub produce: usize,
}

impl IoShape {
    pub const fn new(consume: usize, produce: usize) -> Self {
        Self { consume, produce }
    }
}

/// Static side of a unit kind: validates register sets and builds behaviors.
pub trait BlockKind: Send + Sync {
    /// Step shape under `regs`, or the reason `regs` is unusable.
    fn io_shape(&self, regs: &Registers) -> Result<IoShape, UnitError>;

    fn build(&self, regs: &Registers) -> Box<dyn Behavior>;
}

/// Per-instance processing state.
pub trait Behavior: Send {
    /// Called at a step boundary after the registers changed.
    fn reconfigure(&mut self, regs: &Registers);

    /// Processes one window. Every input slice holds exactly `consume` items
    /// and every output slice must be filled with exactly `produce` items.
    fn process(&mut self, inputs: &[&[Sample]], outputs: &mut [&mut [Sample]]);

    /// Drops any history carried between steps.
    fn reset(&mut self) {}
}

pub struct KindEntry {
    pub descriptor: UnitDescriptor,
    pub(crate) block: Arc<dyn BlockKind>,
}

impl KindEntry {
    pub fn io_shape(&self, regs: &Registers) -> Result<IoShape, UnitError> {
        self.block.io_shape(regs)
    }
}

/// Registry of instantiable unit kinds.
#[derive(Default)]
pub struct Catalog {
    kinds: RwLock<BTreeMap<String, Arc<KindEntry>>>,
    next_id: AtomicU64,
}

impl std::fmt::Debug for Catalog {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_list().entries(self.kind_names()).finish()
    }
}

impl Catalog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register_kind(
        &self,
        descriptor: UnitDescriptor,
        block: Arc<dyn BlockKind>,
    ) -> Result<(), UnitError> {
        descriptor.validate()?;
        let defaults = Registers::defaults(&descriptor.register_map);
        let shape = block.io_shape(&defaults)?;
        if shape != IoShape::new(descriptor.samples_in_per_step, descriptor.samples_out_per_step) {
            return Err(UnitError::InvalidDescriptor(format!(
                "{}: declared step {}:{} but defaults give {}:{}",
                descriptor.kind,
                descriptor.samples_in_per_step,
                descriptor.samples_out_per_step,
                shape.consume,
                shape.produce
            )));
        }
        let mut kinds = self.kinds.write().unwrap_or_else(|e| e.into_inner());
        if kinds.contains_key(&descriptor.kind) {
            return Err(UnitError::DuplicateKind(descriptor.kind));
        }
        kinds.insert(
            descriptor.kind.clone(),
            Arc::new(KindEntry { descriptor, block }),
        );
        Ok(())
    }

    pub fn get(&self, kind: &str) -> Option<Arc<KindEntry>> {
        self.kinds
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .get(kind)
            .cloned()
    }

    pub fn contains(&self, kind: &str) -> bool {
        self.get(kind).is_some()
    }

    pub fn kind_names(&self) -> Vec<String> {
        self.kinds
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .keys()
            .cloned()
            .collect()
    }

    /// All descriptors, ordered by kind name.
    pub fn descriptors(&self) -> Vec<UnitDescriptor> {
        self.kinds
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .values()
            .map(|e| e.descriptor.clone())
            .collect()
    }

    pub fn descriptor(&self, kind: &str) -> Option<UnitDescriptor> {
        self.get(kind).map(|e| e.descriptor.clone())
    }

    /// Structured-text dump, one record per kind.
    pub fn dump(&self) -> String {
        self.descriptors()
            .iter()
            .map(UnitDescriptor::render)
            .collect::<Vec<_>>()
            .join("\n")
    }

    /// Resolves `params` against a kind's register map without instantiating.
    pub fn resolve_params<'a, I>(&self, kind: &str, params: I) -> Result<Registers, UnitError>
    where
        I: IntoIterator<Item = (&'a String, &'a u32)>,
    {
        let entry = self
            .get(kind)
            .ok_or_else(|| UnitError::UnknownKind(kind.to_string()))?;
        let mut regs = Registers::defaults(&entry.descriptor.register_map);
        for (name, &value) in params {
            regs.set_named(name, value)?;
        }
        entry.block.io_shape(&regs).map_err(|e| match e {
            UnitError::UnsupportedValue { register, value, .. } => UnitError::ParamOutOfRange {
                name: register,
                value,
            },
            other => other,
        })?;
        Ok(regs)
    }

    pub fn create_unit(
        &self,
        kind: &str,
        params: &BTreeMap<String, u32>,
    ) -> Result<UnitInstance, UnitError> {
        self.create_unit_in(kind, params, ClockDomain::default())
    }

    pub fn create_unit_in(
        &self,
        kind: &str,
        params: &BTreeMap<String, u32>,
        clock_domain: ClockDomain,
    ) -> Result<UnitInstance, UnitError> {
        let regs = self.resolve_params(kind, params)?;
        let entry = self.get(kind).expect("resolved above");
        let id = UnitId(self.next_id.fetch_add(1, Ordering::Relaxed) + 1);
        let file = Arc::new(RegisterFile::new(Arc::clone(&entry), regs));
        Ok(UnitInstance::new(id, entry, file, clock_domain))
    }
}
