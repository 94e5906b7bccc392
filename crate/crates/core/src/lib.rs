//! Software radio data plane: streaming processing units, a CHDR crossbar,
//! chain admission and reconfiguration, a DMA-style MAC boundary, a mocked RF
//! plane, inter-node transport and a control service.

pub mod chain;
pub mod cluster;
pub mod control;
pub mod crossbar;
pub mod dsp;
pub mod events;
pub mod framing;
pub mod mac;
pub mod rf;
pub mod unit;
