//! Hardware-prefetcher control via MSR 0x1A4 (Intel "Misc Feature
//! Control").
//!
//! Bit semantics (1 = disable): bit 0 the L2 streamer, bit 1 the L2
//! adjacent/next-line prefetcher, bit 2 the L1 (DCU) next-line prefetcher,
//! bit 3 the L1 (DCU) IP/stride streamer. Writing requires root and the
//! `msr` kernel module (`/dev/cpu/N/msr`); callers must additionally pass
//! an explicit privilege acknowledgment. Without access, configuration
//! requests return a capability error and runs proceed annotated with
//! "default prefetchers".

use std::fs::OpenOptions;
use std::os::unix::fs::FileExt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// MSR address of the prefetcher control register.
pub const PREFETCH_MSR: u64 = 0x1a4;

const BIT_L2_STREAMER: u64 = 1 << 0;
const BIT_L2_NEXT_LINE: u64 = 1 << 1;
const BIT_L1_NEXT_LINE: u64 = 1 << 2;
const BIT_L1_STREAMER: u64 = 1 << 3;
const ALL_BITS: u64 = 0b1111;

/// The six studied on/off combinations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PrefetcherConfig {
    AllOff,
    L1NextLineOnly,
    L1StreamerOnly,
    L2NextLineOnly,
    L2StreamerOnly,
    AllOn,
}

impl PrefetcherConfig {
    pub const ALL: [PrefetcherConfig; 6] = [
        PrefetcherConfig::AllOff,
        PrefetcherConfig::L1NextLineOnly,
        PrefetcherConfig::L1StreamerOnly,
        PrefetcherConfig::L2NextLineOnly,
        PrefetcherConfig::L2StreamerOnly,
        PrefetcherConfig::AllOn,
    ];

    pub fn parse(s: &str) -> Result<PrefetcherConfig> {
        Ok(match s {
            "all-off" => PrefetcherConfig::AllOff,
            "l1-nl" => PrefetcherConfig::L1NextLineOnly,
            "l1-str" => PrefetcherConfig::L1StreamerOnly,
            "l2-nl" => PrefetcherConfig::L2NextLineOnly,
            "l2-str" => PrefetcherConfig::L2StreamerOnly,
            "all-on" => PrefetcherConfig::AllOn,
            other => {
                return Err(Error::spec(format!(
                    "unknown prefetcher config `{other}` \
                     (all-off|l1-nl|l1-str|l2-nl|l2-str|all-on)"
                )))
            }
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PrefetcherConfig::AllOff => "all-off",
            PrefetcherConfig::L1NextLineOnly => "l1-nl",
            PrefetcherConfig::L1StreamerOnly => "l1-str",
            PrefetcherConfig::L2NextLineOnly => "l2-nl",
            PrefetcherConfig::L2StreamerOnly => "l2-str",
            PrefetcherConfig::AllOn => "all-on",
        }
    }

    /// Disable-mask for MSR 0x1A4 (set bit = prefetcher off).
    pub fn disable_mask(self) -> u64 {
        match self {
            PrefetcherConfig::AllOff => ALL_BITS,
            PrefetcherConfig::L1NextLineOnly => ALL_BITS & !BIT_L1_NEXT_LINE,
            PrefetcherConfig::L1StreamerOnly => ALL_BITS & !BIT_L1_STREAMER,
            PrefetcherConfig::L2NextLineOnly => ALL_BITS & !BIT_L2_NEXT_LINE,
            PrefetcherConfig::L2StreamerOnly => ALL_BITS & !BIT_L2_STREAMER,
            PrefetcherConfig::AllOn => 0,
        }
    }

    /// Inverse of `disable_mask` over the four prefetcher bits.
    pub fn from_disable_mask(mask: u64) -> Option<PrefetcherConfig> {
        PrefetcherConfig::ALL
            .iter()
            .copied()
            .find(|c| c.disable_mask() == mask & ALL_BITS)
    }
}

fn msr_paths() -> Result<Vec<PathBuf>> {
    let mut paths = Vec::new();
    let dir = std::fs::read_dir("/dev/cpu")
        .map_err(|e| Error::capability(format!("no /dev/cpu (msr module not loaded?): {e}")))?;
    for entry in dir {
        let entry = entry?;
        let p = entry.path().join("msr");
        if p.exists() {
            paths.push(p);
        }
    }
    if paths.is_empty() {
        return Err(Error::capability("no /dev/cpu/*/msr device present"));
    }
    paths.sort();
    Ok(paths)
}

fn read_msr(path: &PathBuf) -> Result<u64> {
    let f = OpenOptions::new()
        .read(true)
        .open(path)
        .map_err(|e| Error::capability(format!("open {} for read: {e}", path.display())))?;
    let mut buf = [0u8; 8];
    f.read_exact_at(&mut buf, PREFETCH_MSR)
        .map_err(|e| Error::capability(format!("read msr {PREFETCH_MSR:#x}: {e}")))?;
    Ok(u64::from_le_bytes(buf))
}

fn write_msr(path: &PathBuf, value: u64) -> Result<()> {
    let f = OpenOptions::new()
        .write(true)
        .open(path)
        .map_err(|e| Error::capability(format!("open {} for write: {e}", path.display())))?;
    f.write_all_at(&value.to_le_bytes(), PREFETCH_MSR)
        .map_err(|e| Error::capability(format!("write msr {PREFETCH_MSR:#x}: {e}")))?;
    Ok(())
}

/// True when prefetcher control looks possible (device nodes present).
pub fn msr_available() -> bool {
    msr_paths().is_ok()
}

/// Restores the previous prefetcher mask when dropped.
#[derive(Debug)]
pub struct PrefetcherGuard {
    paths: Vec<PathBuf>,
    previous: u64,
    /// Mask that was applied, echoed into run metadata.
    pub applied: PrefetcherConfig,
    pub previous_config: Option<PrefetcherConfig>,
}

impl Drop for PrefetcherGuard {
    fn drop(&mut self) {
        for p in &self.paths {
            let _ = read_msr(p).and_then(|cur| {
                write_msr(p, (cur & !ALL_BITS) | (self.previous & ALL_BITS))
            });
        }
    }
}

/// Applies a prefetcher configuration to every CPU, returning a guard
/// that restores the previous mask. `privilege_acknowledged` must be set
/// explicitly (the CLI's `--i-have-privilege`); this writes model-specific
/// registers and is refused otherwise.
pub fn set_prefetchers(
    config: PrefetcherConfig,
    privilege_acknowledged: bool,
) -> Result<PrefetcherGuard> {
    if !privilege_acknowledged {
        return Err(Error::capability(
            "prefetcher control needs --i-have-privilege (writes MSRs)",
        ));
    }
    let paths = msr_paths()?;
    let previous = read_msr(&paths[0])? & ALL_BITS;
    for p in &paths {
        let cur = read_msr(p)?;
        write_msr(p, (cur & !ALL_BITS) | config.disable_mask())?;
    }
    Ok(PrefetcherGuard {
        paths,
        previous,
        applied: config,
        previous_config: PrefetcherConfig::from_disable_mask(previous),
    })
}
