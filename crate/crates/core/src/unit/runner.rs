//! Runs a unit on its own thread, stepping whenever its windows are ready.

use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use super::{Link, StepReport, UnitInstance};

const POLL: Duration = Duration::from_millis(5);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    Run,
    Pause,
    Stop,
}

struct ControlState {
    command: Command,
    paused: bool,
    replacement: Option<UnitInstance>,
}

struct Control {
    state: Mutex<ControlState>,
    cv: Condvar,
    pending: AtomicBool,
    busy: AtomicBool,
    finished: AtomicBool,
    steps: AtomicU64,
}

impl Control {
    fn lock(&self) -> std::sync::MutexGuard<'_, ControlState> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("unit did not reach a step boundary within {0:?}")]
pub struct QuiesceTimeout(pub Duration);

/// Handle to a unit running on its own thread.
pub struct UnitRunner {
    name: String,
    control: Arc<Control>,
    handle: Option<JoinHandle<()>>,
}

impl std::fmt::Debug for UnitRunner {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("UnitRunner")
            .field("name", &self.name)
            .field("steps", &self.steps())
            .field("finished", &self.is_finished())
            .finish()
    }
}

impl UnitRunner {
    /// Starts stepping `unit`. When an input closes with less than a window
    /// left, the unit stops and closes its outputs.
    pub fn spawn(name: &str, unit: UnitInstance, inputs: Vec<Link>, outputs: Vec<Link>) -> Self {
        let control = Arc::new(Control {
            state: Mutex::new(ControlState {
                command: Command::Run,
                paused: false,
                replacement: None,
            }),
            cv: Condvar::new(),
            pending: AtomicBool::new(false),
            busy: AtomicBool::new(false),
            finished: AtomicBool::new(false),
            steps: AtomicU64::new(0),
        });
        let ctl = Arc::clone(&control);
        let handle = std::thread::Builder::new()
            .name(format!("unit-{name}"))
            .spawn(move || run(unit, inputs, outputs, ctl))
            .expect("spawn unit thread");
        Self {
            name: name.to_string(),
            control,
            handle: Some(handle),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn steps(&self) -> u64 {
        self.control.steps.load(Ordering::Relaxed)
    }

    pub fn is_busy(&self) -> bool {
        self.control.busy.load(Ordering::Acquire)
    }

    pub fn is_finished(&self) -> bool {
        self.control.finished.load(Ordering::Acquire)
    }

    /// Parks the unit at its next step boundary. Upstream back-pressures while
    /// it is parked.
    pub fn pause(&self, timeout: Duration) -> Result<(), QuiesceTimeout> {
        let deadline = Instant::now() + timeout;
        let mut st = self.control.lock();
        st.command = Command::Pause;
        self.control.pending.store(true, Ordering::Release);
        while !st.paused && !self.is_finished() {
            let now = Instant::now();
            if now >= deadline {
                st.command = Command::Run;
                self.control.cv.notify_all();
                return Err(QuiesceTimeout(timeout));
            }
            st = self
                .control
                .cv
                .wait_timeout(st, (deadline - now).min(POLL))
                .unwrap_or_else(|e| e.into_inner())
                .0;
        }
        Ok(())
    }

    /// Installs a new unit; takes effect when the runner resumes.
    pub fn replace(&self, unit: UnitInstance) {
        let mut st = self.control.lock();
        st.replacement = Some(unit);
        self.control.pending.store(true, Ordering::Release);
        self.control.cv.notify_all();
    }

    pub fn resume(&self) {
        let mut st = self.control.lock();
        st.command = Command::Run;
        self.control.pending.store(true, Ordering::Release);
        self.control.cv.notify_all();
    }

    /// Stops the thread at its next boundary and joins it.
    pub fn stop(&mut self) {
        {
            let mut st = self.control.lock();
            st.command = Command::Stop;
            self.control.pending.store(true, Ordering::Release);
            self.control.cv.notify_all();
        }
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }

    /// Waits for the thread to end on its own (inputs closed and drained).
    pub fn join_timeout(&mut self, timeout: Duration) -> bool {
        let deadline = Instant::now() + timeout;
        while !self.is_finished() {
            if Instant::now() >= deadline {
                return false;
            }
            std::thread::sleep(Duration::from_millis(1));
        }
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
        true
    }
}

impl Drop for UnitRunner {
    fn drop(&mut self) {
        self.stop();
    }
}

/// Returns false when the runner should exit.
fn handle_control(unit: &mut UnitInstance, ctl: &Control) -> bool {
    let mut st = ctl.lock();
    loop {
        if let Some(next) = st.replacement.take() {
            *unit = next;
        }
        match st.command {
            Command::Stop => return false,
            Command::Run => {
                st.paused = false;
                ctl.pending.store(st.replacement.is_some(), Ordering::Release);
                return true;
            }
            Command::Pause => {
                if !st.paused {
                    st.paused = true;
                    ctl.cv.notify_all();
                }
                st = ctl.cv.wait(st).unwrap_or_else(|e| e.into_inner());
            }
        }
    }
}

fn run(mut unit: UnitInstance, inputs: Vec<Link>, outputs: Vec<Link>, ctl: Arc<Control>) {
    loop {
        if ctl.pending.load(Ordering::Acquire) && !handle_control(&mut unit, &ctl) {
            break;
        }
        ctl.busy.store(true, Ordering::Release);
        let report = unit.step(&inputs, &outputs);
        ctl.busy.store(false, Ordering::Release);
        match report {
            StepReport::Progressed { .. } => {
                ctl.steps.fetch_add(1, Ordering::Relaxed);
            }
            StepReport::BlockedOnInput { port, needed, .. } => {
                let link = &inputs[port];
                if !link.wait_readable(needed, POLL) && link.is_closed() && link.len() < needed {
                    break;
                }
            }
            StepReport::BlockedOnOutput { port, needed, .. } => {
                let link = &outputs[port];
                if !link.wait_writable(needed, POLL) && link.is_closed() {
                    break;
                }
            }
        }
    }
    for out in &outputs {
        out.close();
    }
    ctl.finished.store(true, Ordering::Release);
    ctl.cv.notify_all();
}
