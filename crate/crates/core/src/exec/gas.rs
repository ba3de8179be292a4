use serde::{Deserialize, Serialize};

/// Gas prices per abstract operation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct GasSchedule {
    pub per_compute_step: u64,
    pub per_state_read: u64,
    pub per_state_write: u64,
    pub per_byte_written: u64,
    pub base_tx: u64,
}

impl Default for GasSchedule {
    fn default() -> Self {
        GasSchedule {
            per_compute_step: 1,
            per_state_read: 200,
            per_state_write: 5000,
            per_byte_written: 8,
            base_tx: 21_000,
        }
    }
}

impl GasSchedule {
    /// A cheap-compute profile, closer to natively executed chaincode.
    pub fn native_like() -> Self {
        GasSchedule {
            per_compute_step: 0,
            ..Self::default()
        }
    }

    /// Unmetered schedule for read-only queries.
    pub fn free() -> Self {
        GasSchedule {
            per_compute_step: 0,
            per_state_read: 0,
            per_state_write: 0,
            per_byte_written: 0,
            base_tx: 0,
        }
    }
}
