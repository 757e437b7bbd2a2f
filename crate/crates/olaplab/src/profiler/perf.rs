//! Minimal `perf_event_open` wrapper for self-profiling counter reads.
//!
//! Each event is opened as its own counter (no hardware groups), so the
//! kernel is free to multiplex; the per-counter enabled/running times give
//! the multiplexing scale factor. Counters measure this process on any
//! CPU, user space only.

use std::io;
use std::os::fd::{AsRawFd, FromRawFd, OwnedFd};

use crate::error::{Error, Result};

/// Stable kernel ABI for `perf_event_open` (flags subset we use).
#[repr(C)]
#[derive(Clone, Copy, Default)]
struct PerfEventAttr {
    type_: u32,
    size: u32,
    config: u64,
    sample_period_or_freq: u64,
    sample_type: u64,
    read_format: u64,
    flags: u64,
    wakeup: u32,
    bp_type: u32,
    config1: u64,
    config2: u64,
    branch_sample_type: u64,
    sample_regs_user: u64,
    sample_stack_user: u32,
    clockid: i32,
    sample_regs_intr: u64,
    aux_watermark: u32,
    sample_max_stack: u16,
    reserved_2: u16,
}

const FLAG_DISABLED: u64 = 1 << 0;
const FLAG_EXCLUDE_KERNEL: u64 = 1 << 5;
const FLAG_EXCLUDE_HV: u64 = 1 << 6;

const READ_FORMAT_TOTAL_TIME_ENABLED: u64 = 1 << 0;
const READ_FORMAT_TOTAL_TIME_RUNNING: u64 = 1 << 1;

const PERF_EVENT_IOC_ENABLE: libc::c_ulong = 0x2400;
const PERF_EVENT_IOC_DISABLE: libc::c_ulong = 0x2401;
const PERF_EVENT_IOC_RESET: libc::c_ulong = 0x2403;

const PERF_FLAG_FD_CLOEXEC: libc::c_ulong = 1 << 3;

/// Event selector types (perf_type_id).
pub const TYPE_HARDWARE: u32 = 0;
pub const TYPE_SOFTWARE: u32 = 1;
pub const TYPE_HW_CACHE: u32 = 3;
pub const TYPE_RAW: u32 = 4;

/// A `(type, config)` pair identifying one countable event.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EventCode {
    pub type_: u32,
    pub config: u64,
}

/// One open counter.
pub struct Counter {
    fd: OwnedFd,
}

/// A scaled counter reading.
#[derive(Debug, Clone, Copy)]
pub struct Reading {
    /// Raw count scaled by enabled/running time.
    pub value: u64,
    /// Multiplexing scale factor (1.0 = counted the whole time).
    pub scale: f64,
    /// True when the counter never got scheduled (value unusable).
    pub flagged: bool,
}

impl Counter {
    /// Opens a disabled counter for this process on any CPU.
    pub fn open(code: EventCode) -> Result<Counter> {
        let mut attr = PerfEventAttr {
            type_: code.type_,
            size: std::mem::size_of::<PerfEventAttr>() as u32,
            config: code.config,
            read_format: READ_FORMAT_TOTAL_TIME_ENABLED | READ_FORMAT_TOTAL_TIME_RUNNING,
            flags: FLAG_DISABLED | FLAG_EXCLUDE_KERNEL | FLAG_EXCLUDE_HV,
            ..Default::default()
        };
        let fd = unsafe {
            libc::syscall(
                libc::SYS_perf_event_open,
                &mut attr as *mut PerfEventAttr,
                0 as libc::pid_t,
                -1 as libc::c_int,
                -1 as libc::c_int,
                PERF_FLAG_FD_CLOEXEC,
            )
        };
        if fd < 0 {
            let err = io::Error::last_os_error();
            return Err(Error::capability(format!(
                "perf_event_open(type={}, config={:#x}) failed: {err}",
                code.type_, code.config
            )));
        }
        Ok(Counter {
            fd: unsafe { OwnedFd::from_raw_fd(fd as i32) },
        })
    }

    fn ioctl(&self, request: libc::c_ulong) -> Result<()> {
        let rc = unsafe { libc::ioctl(self.fd.as_raw_fd(), request, 0) };
        if rc < 0 {
            return Err(Error::capability(format!(
                "perf ioctl {request:#x} failed: {}",
                io::Error::last_os_error()
            )));
        }
        Ok(())
    }

    pub fn reset(&self) -> Result<()> {
        self.ioctl(PERF_EVENT_IOC_RESET)
    }

    pub fn enable(&self) -> Result<()> {
        self.ioctl(PERF_EVENT_IOC_ENABLE)
    }

    pub fn disable(&self) -> Result<()> {
        self.ioctl(PERF_EVENT_IOC_DISABLE)
    }

    /// Reads and scales the count.
    pub fn read(&self) -> Result<Reading> {
        let mut buf = [0u64; 3]; // value, time_enabled, time_running
        let n = unsafe {
            libc::read(
                self.fd.as_raw_fd(),
                buf.as_mut_ptr() as *mut libc::c_void,
                std::mem::size_of_val(&buf),
            )
        };
        if n < 24 {
            return Err(Error::capability(format!(
                "perf counter read returned {n}: {}",
                io::Error::last_os_error()
            )));
        }
        let (value, enabled, running) = (buf[0], buf[1], buf[2]);
        if running == 0 {
            return Ok(Reading {
                value: 0,
                scale: 0.0,
                flagged: enabled > 0,
            });
        }
        let scale = enabled as f64 / running as f64;
        Ok(Reading {
            value: (value as f64 * scale).round() as u64,
            scale,
            flagged: false,
        })
    }
}

/// Probes whether performance counters are usable in this environment;
/// returns the capability error if not (containerized or locked-down
/// kernels typically refuse the syscall).
pub fn counters_available() -> Result<()> {
    static PROBE: std::sync::OnceLock<std::result::Result<(), String>> = std::sync::OnceLock::new();
    fn message(e: Error) -> String {
        match e {
            Error::Capability(m) => m,
            other => other.to_string(),
        }
    }
    PROBE
        .get_or_init(|| {
            let code = EventCode {
                type_: TYPE_HARDWARE,
                config: 0, // cpu-cycles
            };
            match Counter::open(code) {
                Ok(c) => {
                    let ok = c.enable().and_then(|_| c.disable()).and_then(|_| c.read());
                    ok.map(|_| ()).map_err(message)
                }
                Err(e) => Err(message(e)),
            }
        })
        .clone()
        .map_err(Error::capability)
}
