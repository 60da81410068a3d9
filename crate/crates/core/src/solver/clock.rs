use core::cell::Cell;

/// Time source for the solver budget. Budget checks happen only between
/// nodes, so a deterministic clock yields deterministic searches.
pub trait Clock {
    /// Seconds since an arbitrary origin.
    fn elapsed(&self) -> f64;

    /// Report `units` of arithmetic work done since the last call.
    fn charge(&self, _units: u64) {}
}

/// Virtual clock advanced by the work the solver reports. Runs with the
/// same inputs see identical times regardless of machine load.
#[derive(Debug)]
pub struct WorkClock {
    units: Cell<u64>,
    seconds_per_unit: f64,
}

impl WorkClock {
    /// Calibrated so that virtual time tracks wall time of an optimized
    /// build on a single desktop core (memory-bound sparse loops run at
    /// roughly a third of peak multiply-add throughput).
    pub const DEFAULT_SECONDS_PER_UNIT: f64 = 3e-9;

    pub fn new() -> Self {
        Self::with_rate(Self::DEFAULT_SECONDS_PER_UNIT)
    }

    pub fn with_rate(seconds_per_unit: f64) -> Self {
        WorkClock {
            units: Cell::new(0),
            seconds_per_unit,
        }
    }

    pub fn units(&self) -> u64 {
        self.units.get()
    }
}

impl Default for WorkClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for WorkClock {
    fn elapsed(&self) -> f64 {
        self.units.get() as f64 * self.seconds_per_unit
    }

    fn charge(&self, units: u64) {
        self.units.set(self.units.get().saturating_add(units));
    }
}
