//! Unit kinds wrapping the DSP primitives, and the default catalog.
//!
//! Costs, latencies and throughputs below are modeled constants, not synthesis
//! results.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::conv::{self, CodeRate};
use super::crc::{Crc32, CrcConfig};
use super::fft::{self, FftPlan};
use super::fir::FirState;
use super::qam::{self, Order};
use crate::rf::{awgn_noise_std, gaussian_pair};
use crate::unit::{
    bits_to_bytes, bytes_to_bits, Behavior, BlockKind, Catalog, IoShape, RegisterSpec, Registers,
    Sample, UnitDescriptor, UnitError,
};

pub const FABRIC_CLOCK_HZ: f64 = 3.0e8;
pub const FIR_MAX_TAPS: usize = 16;
/// Fixed-point scale of FIR tap registers (signed Q8.24).
pub const FIR_TAP_ONE: f64 = (1u32 << 24) as f64;

fn unsupported(register: &str, value: u32, reason: &str) -> UnitError {
    UnitError::UnsupportedValue {
        register: register.to_string(),
        value,
        reason: reason.to_string(),
    }
}

#[allow(clippy::too_many_arguments)]
fn descriptor(
    kind: &str,
    shape: (usize, usize),
    throughput_sps: f64,
    latency_cycles: u64,
    cycles_per_step: u64,
    cells: u64,
    dsp: u64,
    register_map: Vec<RegisterSpec>,
) -> UnitDescriptor {
    UnitDescriptor {
        kind: kind.to_string(),
        n_inputs: 1,
        n_outputs: 1,
        samples_in_per_step: shape.0,
        samples_out_per_step: shape.1,
        throughput_sps,
        latency_cycles,
        cycles_per_step,
        cost_logic_cells: cells,
        cost_dsp_slices: dsp,
        register_map,
    }
}

// ---------------------------------------------------------------- passthrough

pub struct PassThroughKind;

struct PassThrough;

impl BlockKind for PassThroughKind {
    fn io_shape(&self, regs: &Registers) -> Result<IoShape, UnitError> {
        let w = regs.get("window") as usize;
        Ok(IoShape::new(w, w))
    }

    fn build(&self, _: &Registers) -> Box<dyn Behavior> {
        Box::new(PassThrough)
    }
}

impl Behavior for PassThrough {
    fn reconfigure(&mut self, _: &Registers) {}

    fn process(&mut self, inputs: &[&[Sample]], outputs: &mut [&mut [Sample]]) {
        outputs[0].copy_from_slice(inputs[0]);
    }
}

pub fn passthrough_descriptor() -> UnitDescriptor {
    descriptor(
        "passthrough",
        (1024, 1024),
        FABRIC_CLOCK_HZ,
        1,
        1024,
        50,
        0,
        vec![RegisterSpec::new(0x00, "window", 1, 65536, 1024)],
    )
}

// ------------------------------------------------------------------------ fft

pub struct FftKind {
    pub inverse: bool,
}

struct FftBlock {
    plan: FftPlan,
    inverse: bool,
}

impl BlockKind for FftKind {
    fn io_shape(&self, regs: &Registers) -> Result<IoShape, UnitError> {
        let n = regs.get("length");
        if !fft::is_supported(n as usize) {
            return Err(unsupported("length", n, "UnsupportedLength"));
        }
        Ok(IoShape::new(n as usize, n as usize))
    }

    fn build(&self, regs: &Registers) -> Box<dyn Behavior> {
        Box::new(FftBlock {
            plan: FftPlan::new(regs.get("length") as usize).expect("validated length"),
            inverse: self.inverse,
        })
    }
}

impl Behavior for FftBlock {
    fn reconfigure(&mut self, regs: &Registers) {
        let n = regs.get("length") as usize;
        if n != self.plan.len() {
            self.plan = FftPlan::new(n).expect("validated length");
        }
    }

    fn process(&mut self, inputs: &[&[Sample]], outputs: &mut [&mut [Sample]]) {
        outputs[0].copy_from_slice(inputs[0]);
        if self.inverse {
            self.plan.inverse(outputs[0]);
        } else {
            self.plan.forward(outputs[0]);
        }
    }
}

pub fn fft_descriptor(inverse: bool) -> UnitDescriptor {
    descriptor(
        if inverse { "ifft" } else { "fft" },
        (64, 64),
        FABRIC_CLOCK_HZ,
        200,
        64,
        4000,
        24,
        vec![RegisterSpec::new(0x00, "length", 16, 2048, 64)],
    )
}

// ------------------------------------------------------------------------ crc

fn crc_config(regs: &Registers) -> CrcConfig {
    CrcConfig {
        poly: regs.get("poly"),
        init: regs.get("init"),
        xorout: regs.get("xorout"),
        reflect: regs.get("reflect") != 0,
    }
}

fn crc_geometry(regs: &Registers) -> Result<(usize, usize), UnitError> {
    let block = regs.get("block_bits");
    let frame = regs.get("frame_bits");
    if !block.is_multiple_of(8) {
        return Err(unsupported("block_bits", block, "block must be whole bytes"));
    }
    if frame < block + 32 {
        return Err(unsupported("frame_bits", frame, "frame must hold block plus CRC"));
    }
    Ok((block as usize, frame as usize))
}

fn crc_registers() -> Vec<RegisterSpec> {
    vec![
        RegisterSpec::new(0x00, "poly", 1, u32::MAX, 0x04C1_1DB7),
        RegisterSpec::new(0x04, "init", 0, u32::MAX, 0xFFFF_FFFF),
        RegisterSpec::new(0x08, "xorout", 0, u32::MAX, 0xFFFF_FFFF),
        RegisterSpec::new(0x0C, "reflect", 0, 1, 1),
        RegisterSpec::new(0x10, "block_bits", 8, 32768, 1496),
        RegisterSpec::new(0x14, "frame_bits", 40, 65536, 1530),
    ]
}

/// Appends a CRC to each block and zero-pads it to `frame_bits`.
pub struct CrcKind;
/// Checks `frame_bits` frames; emits the block followed by one ok/fail bit.
pub struct CrcCheckKind;

struct CrcBlock {
    crc: Crc32,
    block_bits: usize,
    check: bool,
}

impl CrcBlock {
    fn new(regs: &Registers, check: bool) -> Self {
        Self {
            crc: Crc32::new(crc_config(regs)),
            block_bits: regs.get("block_bits") as usize,
            check,
        }
    }
}

impl BlockKind for CrcKind {
    fn io_shape(&self, regs: &Registers) -> Result<IoShape, UnitError> {
        let (block, frame) = crc_geometry(regs)?;
        Ok(IoShape::new(block, frame))
    }

    fn build(&self, regs: &Registers) -> Box<dyn Behavior> {
        Box::new(CrcBlock::new(regs, false))
    }
}

impl BlockKind for CrcCheckKind {
    fn io_shape(&self, regs: &Registers) -> Result<IoShape, UnitError> {
        let (block, frame) = crc_geometry(regs)?;
        Ok(IoShape::new(frame, block + 1))
    }

    fn build(&self, regs: &Registers) -> Box<dyn Behavior> {
        Box::new(CrcBlock::new(regs, true))
    }
}

impl Behavior for CrcBlock {
    fn reconfigure(&mut self, regs: &Registers) {
        *self = CrcBlock::new(regs, self.check);
    }

    fn process(&mut self, inputs: &[&[Sample]], outputs: &mut [&mut [Sample]]) {
        let input = inputs[0];
        let out = &mut *outputs[0];
        let data_bits: Vec<u8> = input[..self.block_bits].iter().map(Sample::bit).collect();
        let data = bits_to_bytes(&data_bits);
        if self.check {
            let tail: Vec<u8> = input[self.block_bits..self.block_bits + 32]
                .iter()
                .map(Sample::bit)
                .collect();
            let ok = self.crc.crc_bytes(&data)[..] == bits_to_bytes(&tail)[..];
            out[..self.block_bits].copy_from_slice(&input[..self.block_bits]);
            out[self.block_bits] = Sample::from_bit(ok as u8);
        } else {
            out[..self.block_bits].copy_from_slice(&input[..self.block_bits]);
            let crc_bits = bytes_to_bits(&self.crc.crc_bytes(&data));
            for (dst, b) in out[self.block_bits..].iter_mut().zip(crc_bits) {
                *dst = Sample::from_bit(b);
            }
            out[self.block_bits + 32..].fill(Sample::ZERO);
        }
    }
}

pub fn crc_descriptor(check: bool) -> UnitDescriptor {
    descriptor(
        if check { "crc_check" } else { "crc" },
        if check { (1530, 1497) } else { (1496, 1530) },
        FABRIC_CLOCK_HZ,
        40,
        1530,
        300,
        0,
        crc_registers(),
    )
}

// -------------------------------------------------------------- coder/viterbi

fn code_rate(regs: &Registers) -> CodeRate {
    CodeRate::from_register(regs.get("rate")).expect("rate register bounded to 0..=2")
}

pub struct CoderKind;
pub struct ViterbiKind;

struct CoderBlock {
    rate: CodeRate,
    decode: bool,
}

impl BlockKind for CoderKind {
    fn io_shape(&self, regs: &Registers) -> Result<IoShape, UnitError> {
        let block = regs.get("block_bits") as usize;
        Ok(IoShape::new(block, conv::coded_len(block, code_rate(regs))))
    }

    fn build(&self, regs: &Registers) -> Box<dyn Behavior> {
        Box::new(CoderBlock {
            rate: code_rate(regs),
            decode: false,
        })
    }
}

impl BlockKind for ViterbiKind {
    fn io_shape(&self, regs: &Registers) -> Result<IoShape, UnitError> {
        let block = regs.get("block_bits") as usize;
        Ok(IoShape::new(conv::coded_len(block, code_rate(regs)), block))
    }

    fn build(&self, regs: &Registers) -> Box<dyn Behavior> {
        Box::new(CoderBlock {
            rate: code_rate(regs),
            decode: true,
        })
    }
}

impl Behavior for CoderBlock {
    fn reconfigure(&mut self, regs: &Registers) {
        self.rate = code_rate(regs);
    }

    fn process(&mut self, inputs: &[&[Sample]], outputs: &mut [&mut [Sample]]) {
        let bits: Vec<u8> = inputs[0].iter().map(Sample::bit).collect();
        let result = if self.decode {
            conv::viterbi_decode(&bits, self.rate).expect("window sized by io_shape")
        } else {
            conv::conv_encode(&bits, self.rate)
        };
        for (dst, b) in outputs[0].iter_mut().zip(result) {
            *dst = Sample::from_bit(b);
        }
    }
}

fn coder_registers() -> Vec<RegisterSpec> {
    vec![
        RegisterSpec::new(0x00, "rate", 0, 2, 0),
        RegisterSpec::new(0x04, "block_bits", 1, 65536, 1530),
    ]
}

pub fn coder_descriptor(decode: bool) -> UnitDescriptor {
    let coded = conv::coded_len(1530, CodeRate::Half);
    if decode {
        descriptor(
            "viterbi",
            (coded, 1530),
            FABRIC_CLOCK_HZ,
            220,
            1530,
            6000,
            0,
            coder_registers(),
        )
    } else {
        descriptor(
            "coder",
            (1530, coded),
            FABRIC_CLOCK_HZ,
            10,
            1530,
            500,
            0,
            coder_registers(),
        )
    }
}

// ------------------------------------------------------------------------ qam

fn qam_order(regs: &Registers) -> Result<Order, UnitError> {
    let order = regs.get("order");
    Order::from_points(order).map_err(|_| unsupported("order", order, "UnsupportedOrder"))
}

pub struct QamKind;
pub struct QamDemapKind;

struct QamBlock {
    order: Order,
    demap: bool,
}

impl BlockKind for QamKind {
    fn io_shape(&self, regs: &Registers) -> Result<IoShape, UnitError> {
        let order = qam_order(regs)?;
        let symbols = regs.get("symbols") as usize;
        Ok(IoShape::new(symbols * order.bits_per_symbol(), symbols))
    }

    fn build(&self, regs: &Registers) -> Box<dyn Behavior> {
        Box::new(QamBlock {
            order: qam_order(regs).expect("validated"),
            demap: false,
        })
    }
}

impl BlockKind for QamDemapKind {
    fn io_shape(&self, regs: &Registers) -> Result<IoShape, UnitError> {
        let order = qam_order(regs)?;
        let symbols = regs.get("symbols") as usize;
        Ok(IoShape::new(symbols, symbols * order.bits_per_symbol()))
    }

    fn build(&self, regs: &Registers) -> Box<dyn Behavior> {
        Box::new(QamBlock {
            order: qam_order(regs).expect("validated"),
            demap: true,
        })
    }
}

impl Behavior for QamBlock {
    fn reconfigure(&mut self, regs: &Registers) {
        self.order = qam_order(regs).expect("validated");
    }

    fn process(&mut self, inputs: &[&[Sample]], outputs: &mut [&mut [Sample]]) {
        let bps = self.order.bits_per_symbol();
        if self.demap {
            let mut bits = Vec::with_capacity(inputs[0].len() * bps);
            for &s in inputs[0] {
                qam::demap_symbol(s, self.order, &mut bits);
            }
            for (dst, b) in outputs[0].iter_mut().zip(bits) {
                *dst = Sample::from_bit(b);
            }
        } else {
            let bits: Vec<u8> = inputs[0].iter().map(Sample::bit).collect();
            for (dst, chunk) in outputs[0].iter_mut().zip(bits.chunks_exact(bps)) {
                *dst = qam::map_symbol(chunk, self.order);
            }
        }
    }
}

fn qam_registers() -> Vec<RegisterSpec> {
    vec![
        RegisterSpec::new(0x00, "order", 2, 64, 4),
        RegisterSpec::new(0x04, "symbols", 1, 4096, 64),
    ]
}

pub fn qam_descriptor(demap: bool) -> UnitDescriptor {
    if demap {
        descriptor(
            "qam_demap",
            (64, 128),
            FABRIC_CLOCK_HZ,
            6,
            64,
            1200,
            8,
            qam_registers(),
        )
    } else {
        descriptor("qam", (128, 64), FABRIC_CLOCK_HZ, 4, 64, 800, 4, qam_registers())
    }
}

// ------------------------------------------------------------------------ fir

pub struct FirKind;

struct FirBlock {
    state: FirState,
}

fn fir_taps(regs: &Registers) -> Vec<f64> {
    let n = regs.get("ntaps") as usize;
    (0..n)
        .map(|k| regs.get_i32(&format!("tap{k}")) as f64 / FIR_TAP_ONE)
        .collect()
}

impl BlockKind for FirKind {
    fn io_shape(&self, regs: &Registers) -> Result<IoShape, UnitError> {
        let w = regs.get("window") as usize;
        Ok(IoShape::new(w, w))
    }

    fn build(&self, regs: &Registers) -> Box<dyn Behavior> {
        Box::new(FirBlock {
            state: FirState::new(fir_taps(regs)),
        })
    }
}

impl Behavior for FirBlock {
    fn reconfigure(&mut self, regs: &Registers) {
        let taps = fir_taps(regs);
        if taps != self.state.taps() {
            self.state = FirState::new(taps);
        }
    }

    fn process(&mut self, inputs: &[&[Sample]], outputs: &mut [&mut [Sample]]) {
        self.state.run(inputs[0], outputs[0]);
    }

    fn reset(&mut self) {
        self.state.reset();
    }
}

pub fn fir_descriptor() -> UnitDescriptor {
    let mut regs = vec![
        RegisterSpec::new(0x00, "window", 1, 65536, 256),
        RegisterSpec::new(0x04, "ntaps", 1, FIR_MAX_TAPS as u32, 1),
    ];
    for k in 0..FIR_MAX_TAPS {
        let default = if k == 0 { 1 << 24 } else { 0 };
        regs.push(RegisterSpec::new(
            0x08 + 4 * k as u32,
            &format!("tap{k}"),
            0,
            u32::MAX,
            default,
        ));
    }
    descriptor("fir", (256, 256), FABRIC_CLOCK_HZ, 20, 256, 2000, 16, regs)
}

/// Encodes a tap value for the FIR tap registers.
pub fn fir_tap_register(value: f64) -> u32 {
    ((value * FIR_TAP_ONE).round() as i32) as u32
}

// -------------------------------------------------------------------- channel

/// Mocked RF loopback as a unit: identity or AWGN.
pub struct ChannelKind;

struct ChannelBlock {
    awgn: bool,
    snr_db: f64,
    rng: ChaCha8Rng,
}

fn channel_params(regs: &Registers) -> (bool, f64, u64) {
    (
        regs.get("mode") == 1,
        regs.get_i32("snr_mdb") as f64 / 1000.0,
        regs.get("seed") as u64,
    )
}

impl BlockKind for ChannelKind {
    fn io_shape(&self, regs: &Registers) -> Result<IoShape, UnitError> {
        let w = regs.get("window") as usize;
        Ok(IoShape::new(w, w))
    }

    fn build(&self, regs: &Registers) -> Box<dyn Behavior> {
        let (awgn, snr_db, seed) = channel_params(regs);
        Box::new(ChannelBlock {
            awgn,
            snr_db,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }
}

impl Behavior for ChannelBlock {
    fn reconfigure(&mut self, regs: &Registers) {
        let (awgn, snr_db, seed) = channel_params(regs);
        self.awgn = awgn;
        self.snr_db = snr_db;
        self.rng = ChaCha8Rng::seed_from_u64(seed);
    }

    fn process(&mut self, inputs: &[&[Sample]], outputs: &mut [&mut [Sample]]) {
        let x = inputs[0];
        if !self.awgn {
            outputs[0].copy_from_slice(x);
            return;
        }
        let sigma = awgn_noise_std(x, self.snr_db);
        for (dst, s) in outputs[0].iter_mut().zip(x) {
            let (a, b) = gaussian_pair(&mut self.rng);
            *dst = Sample::new(s.i + sigma * a, s.q + sigma * b);
        }
    }
}

pub fn channel_descriptor() -> UnitDescriptor {
    descriptor(
        "channel",
        (1024, 1024),
        FABRIC_CLOCK_HZ,
        0,
        1024,
        0,
        0,
        vec![
            RegisterSpec::new(0x00, "window", 1, 65536, 1024),
            RegisterSpec::new(0x04, "mode", 0, 1, 0),
            RegisterSpec::new(0x08, "snr_mdb", 0, u32::MAX, 30_000),
            RegisterSpec::new(0x0C, "seed", 0, u32::MAX, 1),
        ],
    )
}

// -------------------------------------------------------------------- catalog

/// Registers every built-in kind.
pub fn register_defaults(catalog: &Catalog) -> Result<(), UnitError> {
    let kinds: Vec<(UnitDescriptor, Arc<dyn BlockKind>)> = vec![
        (passthrough_descriptor(), Arc::new(PassThroughKind)),
        (fft_descriptor(false), Arc::new(FftKind { inverse: false })),
        (fft_descriptor(true), Arc::new(FftKind { inverse: true })),
        (crc_descriptor(false), Arc::new(CrcKind)),
        (crc_descriptor(true), Arc::new(CrcCheckKind)),
        (coder_descriptor(false), Arc::new(CoderKind)),
        (coder_descriptor(true), Arc::new(ViterbiKind)),
        (qam_descriptor(false), Arc::new(QamKind)),
        (qam_descriptor(true), Arc::new(QamDemapKind)),
        (fir_descriptor(), Arc::new(FirKind)),
        (channel_descriptor(), Arc::new(ChannelKind)),
    ];
    for (d, k) in kinds {
        catalog.register_kind(d, k)?;
    }
    Ok(())
}

pub fn default_catalog() -> Arc<Catalog> {
    let catalog = Catalog::new();
    register_defaults(&catalog).expect("built-in descriptors are valid");
    Arc::new(catalog)
}
