use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use super::catalog::KindEntry;
use super::{IoShape, RegisterSpec, UnitError};

/// Immutable view of a unit's register values.
#[derive(Debug, Clone)]
pub struct Registers {
    map: Arc<[RegisterSpec]>,
    values: Vec<u32>,
}

impl Registers {
    pub fn defaults(map: &[RegisterSpec]) -> Self {
        Self {
            values: map.iter().map(|r| r.default).collect(),
            map: map.into(),
        }
    }

    fn index_of(&self, name: &str) -> Option<usize> {
        self.map.iter().position(|r| r.name == name)
    }

    fn index_at(&self, offset: u32) -> Option<usize> {
        self.map.iter().position(|r| r.offset == offset)
    }

    /// Value of a named register. Panics on a name outside the map, which is a
    /// bug in the block implementation rather than a runtime condition.
    pub fn get(&self, name: &str) -> u32 {
        self.try_get(name)
            .unwrap_or_else(|| panic!("register {name} not in map"))
    }

    pub fn try_get(&self, name: &str) -> Option<u32> {
        self.index_of(name).map(|i| self.values[i])
    }

    /// Signed view of a register (two's complement).
    pub fn get_i32(&self, name: &str) -> i32 {
        self.get(name) as i32
    }

    pub fn at(&self, offset: u32) -> Option<u32> {
        self.index_at(offset).map(|i| self.values[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&RegisterSpec, u32)> {
        self.map.iter().zip(self.values.iter().copied())
    }

    pub(crate) fn set_at(&mut self, offset: u32, value: u32) -> Result<(), UnitError> {
        let i = self.index_at(offset).ok_or(UnitError::UnknownOffset(offset))?;
        if !self.map[i].accepts(value) {
            return Err(UnitError::ValueOutOfRange { offset, value });
        }
        self.values[i] = value;
        Ok(())
    }

    pub(crate) fn set_named(&mut self, name: &str, value: u32) -> Result<(), UnitError> {
        let i = self
            .index_of(name)
            .ok_or_else(|| UnitError::UnknownParam(name.to_string()))?;
        if !self.map[i].accepts(value) {
            return Err(UnitError::ParamOutOfRange {
                name: name.to_string(),
                value,
            });
        }
        self.values[i] = value;
        Ok(())
    }
}

/// Shared control-plane view of a unit's registers.
///
/// A write is validated against the register map and the block's own
/// constraints, then stored. The processing side picks the new values up at
/// its next step boundary, so one output window is always produced under a
/// single snapshot.
pub struct RegisterFile {
    kind: Arc<KindEntry>,
    values: Mutex<Registers>,
    generation: AtomicU64,
}

impl std::fmt::Debug for RegisterFile {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RegisterFile")
            .field("kind", &self.kind.descriptor.kind)
            .field("generation", &self.generation())
            .finish()
    }
}

impl RegisterFile {
    pub(crate) fn new(kind: Arc<KindEntry>, initial: Registers) -> Self {
        Self {
            kind,
            values: Mutex::new(initial),
            generation: AtomicU64::new(1),
        }
    }

    pub fn kind(&self) -> &str {
        &self.kind.descriptor.kind
    }

    pub fn generation(&self) -> u64 {
        self.generation.load(Ordering::Acquire)
    }

    pub fn snapshot(&self) -> (u64, Registers) {
        let regs = self.values.lock().unwrap_or_else(|e| e.into_inner());
        (self.generation(), regs.clone())
    }

    pub fn read_reg(&self, offset: u32) -> Result<u32, UnitError> {
        let regs = self.values.lock().unwrap_or_else(|e| e.into_inner());
        regs.at(offset).ok_or(UnitError::UnknownOffset(offset))
    }

    pub fn read_named(&self, name: &str) -> Result<u32, UnitError> {
        let regs = self.values.lock().unwrap_or_else(|e| e.into_inner());
        regs.try_get(name)
            .ok_or_else(|| UnitError::UnknownParam(name.to_string()))
    }

    pub fn offset_of(&self, name: &str) -> Result<u32, UnitError> {
        self.kind
            .descriptor
            .register(name)
            .map(|r| r.offset)
            .ok_or_else(|| UnitError::UnknownParam(name.to_string()))
    }

    /// Shape the unit would have after writing `value` at `offset`.
    pub fn preview(&self, offset: u32, value: u32) -> Result<IoShape, UnitError> {
        let mut tentative = self.values.lock().unwrap_or_else(|e| e.into_inner()).clone();
        tentative.set_at(offset, value)?;
        self.kind.block.io_shape(&tentative)
    }

    pub fn current_shape(&self) -> IoShape {
        let regs = self.values.lock().unwrap_or_else(|e| e.into_inner());
        self.kind
            .block
            .io_shape(&regs)
            .expect("committed registers always validate")
    }

    pub fn write_reg(&self, offset: u32, value: u32) -> Result<(), UnitError> {
        let mut regs = self.values.lock().unwrap_or_else(|e| e.into_inner());
        let mut tentative = regs.clone();
        tentative.set_at(offset, value)?;
        self.kind.block.io_shape(&tentative)?;
        *regs = tentative;
        self.generation.fetch_add(1, Ordering::AcqRel);
        Ok(())
    }

    pub fn write_named(&self, name: &str, value: u32) -> Result<(), UnitError> {
        let offset = self.offset_of(name)?;
        self.write_reg(offset, value)
    }
}
