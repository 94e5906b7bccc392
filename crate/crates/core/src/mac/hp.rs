//! PS–PL high-performance port bandwidth budget.

use serde::{Deserialize, Serialize};

use super::MacError;

pub const HP_PORTS: usize = 4;
pub const HP_TOTAL_BPS: f64 = 9.6e9;
/// 16-bit I plus 16-bit Q.
pub const BYTES_PER_SAMPLE: f64 = 4.0;

/// Byte rate of one I/Q stream on the HP path.
pub fn stream_demand_bps(sample_rate_sps: f64) -> f64 {
    sample_rate_sps * BYTES_PER_SAMPLE
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HpBudget {
    pub per_port_bps: [f64; HP_PORTS],
    pub total_bps: f64,
}

impl Default for HpBudget {
    fn default() -> Self {
        Self {
            per_port_bps: [HP_TOTAL_BPS / HP_PORTS as f64; HP_PORTS],
            total_bps: HP_TOTAL_BPS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HpPortCheck {
    pub port: usize,
    pub demand_bps: f64,
    pub budget_bps: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HpVerdict {
    pub ok: bool,
    pub ports: Vec<HpPortCheck>,
}

impl HpBudget {
    pub fn set_hp_budget(&mut self, per_port_bps: [f64; HP_PORTS]) -> Result<(), MacError> {
        if per_port_bps.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(MacError::InvalidBudget(format!("{per_port_bps:?}")));
        }
        let sum: f64 = per_port_bps.iter().sum();
        if sum > self.total_bps {
            return Err(MacError::BudgetExceeded {
                requested: sum,
                total: self.total_bps,
            });
        }
        self.per_port_bps = per_port_bps;
        Ok(())
    }

    pub fn check_hp(&self, demand_bps: [f64; HP_PORTS]) -> HpVerdict {
        let ports: Vec<HpPortCheck> = (0..HP_PORTS)
            .map(|p| HpPortCheck {
                port: p,
                demand_bps: demand_bps[p],
                budget_bps: self.per_port_bps[p],
                ok: demand_bps[p] >= 0.0 && demand_bps[p] <= self.per_port_bps[p],
            })
            .collect();
        HpVerdict {
            ok: ports.iter().all(|p| p.ok),
            ports,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_split_fits() {
        let mut b = HpBudget::default();
        b.set_hp_budget([2.4e9; 4]).unwrap();
        assert!(matches!(
            b.set_hp_budget([9.6e9, 1.0, 0.0, 0.0]),
            Err(MacError::BudgetExceeded { .. })
        ));
        assert_eq!(b.per_port_bps, [2.4e9; 4]);
        assert!(b.set_hp_budget([-1.0, 0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn eighty_msps_stream() {
        let b = HpBudget::default();
        let d = stream_demand_bps(80e6);
        assert_eq!(d, 3.2e8);
        assert!(b.check_hp([d, d, 0.0, 0.0]).ok);
        assert!(!b.check_hp([2.5e9, 0.0, 0.0, 0.0]).ok);
    }
}
