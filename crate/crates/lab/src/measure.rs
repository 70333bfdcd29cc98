//! Real-world measurement backings: a wall clock and a file-backed energy
//! meter. No acceptance behaviour depends on these; the hermetic tests all
//! run on the simulated clock.

use std::path::PathBuf;
use std::time::Instant;

use sponge_core::measure::{Clock, Meter, MeterError};

/// Monotonic wall clock anchored at construction.
pub struct WallClock {
    start: Instant,
}

impl WallClock {
    pub fn new() -> Self {
        WallClock {
            start: Instant::now(),
        }
    }
}

impl Default for WallClock {
    fn default() -> Self {
        WallClock::new()
    }
}

impl Clock for WallClock {
    fn now(&self) -> f64 {
        self.start.elapsed().as_secs_f64()
    }
}

/// Energy meter backed by an OS counter file holding a cumulative
/// microjoule reading as ASCII (the RAPL energy_uj convention). Absent or
/// unreadable files surface as [`MeterError::Unavailable`], letting the
/// harness degrade to latency-only mode.
pub struct FileMeter {
    path: PathBuf,
    name: String,
}

impl FileMeter {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        let path = path.into();
        let name = format!("file:{}", path.display());
        FileMeter { path, name }
    }

    /// Probe availability without consuming a reading.
    pub fn available(&self) -> bool {
        std::fs::read_to_string(&self.path)
            .ok()
            .map(|s| s.trim().parse::<u64>().is_ok())
            .unwrap_or(false)
    }
}

impl Meter for FileMeter {
    fn read_microjoules(&mut self) -> Result<u64, MeterError> {
        let text = std::fs::read_to_string(&self.path).map_err(|_| MeterError::Unavailable)?;
        text.trim().parse::<u64>().map_err(|_| MeterError::Parse)
    }

    fn name(&self) -> &str {
        &self.name
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use sponge_core::measure::MeterSession;
    use std::io::Write;

    #[test]
    fn wall_clock_advances() {
        let clock = WallClock::new();
        let a = clock.now();
        std::thread::sleep(std::time::Duration::from_millis(2));
        assert!(clock.now() > a);
    }

    #[test]
    fn file_meter_reads_cumulative_microjoules() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("energy_uj");
        std::fs::write(&path, "123456\n").unwrap();
        let mut meter = FileMeter::new(&path);
        assert!(meter.available());
        let mut session = MeterSession::new(meter);
        assert_eq!(session.read_microjoules().unwrap(), 123_456);

        let mut f = std::fs::File::create(&path).unwrap();
        write!(f, "200456").unwrap();
        drop(f);
        let delta = session.delta_joules().unwrap();
        assert!((delta - 0.077).abs() < 1e-12);
    }

    #[test]
    fn missing_meter_degrades_to_unavailable() {
        let mut meter = FileMeter::new("/nonexistent/energy_uj");
        assert!(!meter.available());
        assert!(matches!(
            meter.read_microjoules(),
            Err(MeterError::Unavailable)
        ));
    }
}
