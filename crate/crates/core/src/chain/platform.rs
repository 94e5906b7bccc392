use serde::{Deserialize, Serialize};

/// Fixed-size partially reconfigurable region. Its size is reserved out of
/// the fabric budget from platform start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrrSpec {
    pub id: String,
    pub size_logic_cells: u64,
    pub size_dsp_slices: u64,
}

/// Modeled hybrid-FPGA capacities (Zynq-7000 class).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlatformModel {
    pub logic_cells_total: u64,
    pub dsp_slices_total: u64,
    /// Highest clock any unit may run at.
    pub fabric_clock_hz: f64,
    /// Configuration port throughput, bytes per second.
    pub pcap_throughput_bps: f64,
    /// Total PS–PL high-performance port bandwidth, bytes per second.
    pub hp_total_bps: f64,
    /// Added to the latency path for every crossbar traversal.
    pub crossbar_hop_latency_s: f64,
    pub prrs: Vec<PrrSpec>,
}

impl Default for PlatformModel {
    fn default() -> Self {
        Self {
            logic_cells_total: 350_000,
            dsp_slices_total: 900,
            fabric_clock_hz: 3.0e8,
            pcap_throughput_bps: 128e6,
            hp_total_bps: 9.6e9,
            crossbar_hop_latency_s: 1e-6,
            prrs: Vec::new(),
        }
    }
}

impl PlatformModel {
    pub fn with_prr(mut self, id: &str, cells: u64, dsp: u64) -> Self {
        self.prrs.push(PrrSpec {
            id: id.to_string(),
            size_logic_cells: cells,
            size_dsp_slices: dsp,
        });
        self
    }

    pub fn prr(&self, id: &str) -> Option<&PrrSpec> {
        self.prrs.iter().find(|p| p.id == id)
    }

    pub fn reserved_cells(&self) -> u64 {
        self.prrs.iter().map(|p| p.size_logic_cells).sum()
    }

    pub fn reserved_dsp(&self) -> u64 {
        self.prrs.iter().map(|p| p.size_dsp_slices).sum()
    }

    /// Modeled configuration time for `bytes` of bitstream.
    pub fn reconfig_seconds(&self, bytes: u64) -> f64 {
        bytes as f64 / self.pcap_throughput_bps
    }

    pub fn check(&self) -> Result<(), String> {
        let positive = [
            ("logic_cells_total", self.logic_cells_total as f64),
            ("dsp_slices_total", self.dsp_slices_total as f64),
            ("fabric_clock_hz", self.fabric_clock_hz),
            ("pcap_throughput_bps", self.pcap_throughput_bps),
            ("hp_total_bps", self.hp_total_bps),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("{name} must be positive"));
            }
        }
        if self.reserved_cells() > self.logic_cells_total || self.reserved_dsp() > self.dsp_slices_total {
            return Err("PRR reservations exceed the fabric".into());
        }
        Ok(())
    }
}

/// Allocation snapshot. `allocated + free == total` for both resources.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceBudget {
    pub cells_total: u64,
    pub cells_allocated: u64,
    pub cells_free: u64,
    pub dsp_total: u64,
    pub dsp_allocated: u64,
    pub dsp_free: u64,
}

impl ResourceBudget {
    pub fn new(platform: &PlatformModel, cells: u64, dsp: u64) -> Self {
        Self {
            cells_total: platform.logic_cells_total,
            cells_allocated: cells,
            cells_free: platform.logic_cells_total.saturating_sub(cells),
            dsp_total: platform.dsp_slices_total,
            dsp_allocated: dsp,
            dsp_free: platform.dsp_slices_total.saturating_sub(dsp),
        }
    }
}
