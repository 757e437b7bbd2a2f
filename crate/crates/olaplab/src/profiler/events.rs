//! Counter-to-component event mapping files.
//!
//! The exact counters behind a cycles breakdown are micro-architecture
//! specific, so the mapping is configuration, not code: a key-value text
//! file assigns each sample field an event selector and sets the breakdown
//! parameters. `--events <file>` swaps the mapping per CPU family; the
//! built-in default uses only portable generalized events.
//!
//! Event selector grammar:
//!
//! ```text
//! hw:<cpu-cycles|instructions|branches|branch-misses|cache-references|
//!     cache-misses|stalled-cycles-frontend|stalled-cycles-backend|ref-cycles>
//! sw:<cpu-clock|task-clock|page-faults|context-switches>
//! cache:<l1d|l1i|ll|dtlb|itlb|bpu|node>:<read|write|prefetch>:<access|miss>
//! raw:<event-hex>[:<umask-hex>[:<cmask-int>]]     (x86 PMU encoding)
//! none                                            (field not collected)
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use super::perf::{EventCode, TYPE_HARDWARE, TYPE_HW_CACHE, TYPE_RAW, TYPE_SOFTWARE};
use crate::error::{Error, Result};

/// The nine collectable sample fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CounterField {
    CoreCycles,
    InstructionsRetired,
    BranchesRetired,
    BranchMispredictions,
    IcacheMissEvents,
    DecodeStallEvents,
    DcacheStallEvents,
    ExecutionStallEvents,
    OffcoreDataBytes,
}

impl CounterField {
    pub const ALL: [CounterField; 9] = [
        CounterField::CoreCycles,
        CounterField::InstructionsRetired,
        CounterField::BranchesRetired,
        CounterField::BranchMispredictions,
        CounterField::IcacheMissEvents,
        CounterField::DecodeStallEvents,
        CounterField::DcacheStallEvents,
        CounterField::ExecutionStallEvents,
        CounterField::OffcoreDataBytes,
    ];

    pub fn key(self) -> &'static str {
        match self {
            CounterField::CoreCycles => "core_cycles",
            CounterField::InstructionsRetired => "instructions_retired",
            CounterField::BranchesRetired => "branches_retired",
            CounterField::BranchMispredictions => "branch_mispredictions",
            CounterField::IcacheMissEvents => "icache_miss_events",
            CounterField::DecodeStallEvents => "decode_stall_events",
            CounterField::DcacheStallEvents => "dcache_stall_events",
            CounterField::ExecutionStallEvents => "execution_stall_events",
            CounterField::OffcoreDataBytes => "offcore_data_bytes",
        }
    }

    fn from_key(key: &str) -> Option<CounterField> {
        CounterField::ALL.iter().copied().find(|f| f.key() == key)
    }
}

/// Numeric knobs of the breakdown formulas (see `profiler::breakdown`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BreakdownParams {
    /// Issue slots per cycle; retiring = instructions / (slots * cycles).
    pub slots_per_cycle: f64,
    /// Stall cycles charged per branch misprediction.
    pub branch_miss_penalty_cycles: f64,
    /// Stall cycles charged per icache/decode/dcache/execution event.
    /// 1.0 when the mapped event already counts stall cycles.
    pub icache_penalty: f64,
    pub decode_penalty: f64,
    pub dcache_penalty: f64,
    pub execution_penalty: f64,
    /// Bytes of memory traffic per offcore event (cacheline size for
    /// miss-count events).
    pub offcore_bytes_per_event: f64,
}

impl Default for BreakdownParams {
    fn default() -> Self {
        BreakdownParams {
            slots_per_cycle: 4.0,
            branch_miss_penalty_cycles: 15.0,
            icache_penalty: 1.0,
            decode_penalty: 1.0,
            dcache_penalty: 1.0,
            execution_penalty: 1.0,
            offcore_bytes_per_event: 64.0,
        }
    }
}

/// A parsed mapping: per-field event selectors plus breakdown parameters.
#[derive(Debug, Clone)]
pub struct EventMapping {
    pub name: String,
    events: BTreeMap<CounterField, EventCode>,
    pub params: BreakdownParams,
}

/// Built-in portable mapping. The icache field counts L1I read misses
/// (hence the default penalty), the decode and dcache fields lean on the
/// generalized frontend/backend stall events where the kernel supports
/// them, and execution stalls are left uncollected. Best-effort by
/// construction; supply a per-family file for faithful breakdowns.
pub const GENERIC_EVENTS: &str = "\
# Portable generalized-event mapping (approximate; see module docs).
core_cycles            = hw:cpu-cycles
instructions_retired   = hw:instructions
branches_retired       = hw:branches
branch_mispredictions  = hw:branch-misses
icache_miss_events     = cache:l1i:read:miss
decode_stall_events    = hw:stalled-cycles-frontend
dcache_stall_events    = hw:stalled-cycles-backend
execution_stall_events = none
offcore_data_bytes     = cache:ll:read:miss

slots_per_cycle             = 4
branch_miss_penalty_cycles  = 15
icache_penalty              = 20
offcore_bytes_per_event     = 64
";

fn parse_hw(name: &str) -> Option<u64> {
    Some(match name {
        "cpu-cycles" => 0,
        "instructions" => 1,
        "cache-references" => 2,
        "cache-misses" => 3,
        "branches" | "branch-instructions" => 4,
        "branch-misses" => 5,
        "bus-cycles" => 6,
        "stalled-cycles-frontend" => 7,
        "stalled-cycles-backend" => 8,
        "ref-cycles" => 9,
        _ => return None,
    })
}

fn parse_sw(name: &str) -> Option<u64> {
    Some(match name {
        "cpu-clock" => 0,
        "task-clock" => 1,
        "page-faults" => 2,
        "context-switches" => 3,
        "cpu-migrations" => 4,
        _ => return None,
    })
}

fn parse_cache(spec: &str) -> Option<u64> {
    let mut it = spec.split(':');
    let cache = match it.next()? {
        "l1d" => 0u64,
        "l1i" => 1,
        "ll" => 2,
        "dtlb" => 3,
        "itlb" => 4,
        "bpu" => 5,
        "node" => 6,
        _ => return None,
    };
    let op = match it.next()? {
        "read" => 0u64,
        "write" => 1,
        "prefetch" => 2,
        _ => return None,
    };
    let result = match it.next()? {
        "access" => 0u64,
        "miss" => 1,
        _ => return None,
    };
    if it.next().is_some() {
        return None;
    }
    Some(cache | (op << 8) | (result << 16))
}

fn parse_raw(spec: &str) -> Option<u64> {
    let mut it = spec.split(':');
    let event = u64::from_str_radix(it.next()?.trim_start_matches("0x"), 16).ok()?;
    let umask = match it.next() {
        Some(s) => u64::from_str_radix(s.trim_start_matches("0x"), 16).ok()?,
        None => 0,
    };
    let cmask: u64 = match it.next() {
        Some(s) => s.parse().ok()?,
        None => 0,
    };
    if it.next().is_some() {
        return None;
    }
    Some(event | (umask << 8) | (cmask << 24))
}

/// Parses one event selector.
pub fn parse_event(text: &str) -> Result<Option<EventCode>> {
    let text = text.trim();
    if text == "none" {
        return Ok(None);
    }
    let (kind, rest) = text
        .split_once(':')
        .ok_or_else(|| Error::Config(format!("bad event selector `{text}`")))?;
    let code = match kind {
        "hw" => parse_hw(rest).map(|config| EventCode {
            type_: TYPE_HARDWARE,
            config,
        }),
        "sw" => parse_sw(rest).map(|config| EventCode {
            type_: TYPE_SOFTWARE,
            config,
        }),
        "cache" => parse_cache(rest).map(|config| EventCode {
            type_: TYPE_HW_CACHE,
            config,
        }),
        "raw" => parse_raw(rest).map(|config| EventCode {
            type_: TYPE_RAW,
            config,
        }),
        _ => None,
    };
    code.map(Some)
        .ok_or_else(|| Error::Config(format!("bad event selector `{text}`")))
}

impl EventMapping {
    /// Parses mapping text; unknown keys and malformed lines are errors
    /// with their line number.
    pub fn parse(name: &str, text: &str) -> Result<EventMapping> {
        let mut events = BTreeMap::new();
        let mut params = BreakdownParams::default();
        for (lineno, raw_line) in text.lines().enumerate() {
            let line = raw_line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("{name}:{}: expected `key = value`", lineno + 1))
            })?;
            let (key, value) = (key.trim(), value.trim());
            if let Some(field) = CounterField::from_key(key) {
                if let Some(code) = parse_event(value)
                    .map_err(|e| Error::Config(format!("{name}:{}: {e}", lineno + 1)))?
                {
                    events.insert(field, code);
                }
                continue;
            }
            let number: f64 = value.parse().map_err(|_| {
                Error::Config(format!("{name}:{}: `{key}` needs a number", lineno + 1))
            })?;
            match key {
                "slots_per_cycle" => params.slots_per_cycle = number,
                "branch_miss_penalty_cycles" => params.branch_miss_penalty_cycles = number,
                "icache_penalty" => params.icache_penalty = number,
                "decode_penalty" => params.decode_penalty = number,
                "dcache_penalty" => params.dcache_penalty = number,
                "execution_penalty" => params.execution_penalty = number,
                "offcore_bytes_per_event" => params.offcore_bytes_per_event = number,
                _ => {
                    return Err(Error::Config(format!(
                        "{name}:{}: unknown key `{key}`",
                        lineno + 1
                    )))
                }
            }
        }
        Ok(EventMapping {
            name: name.to_string(),
            events,
            params,
        })
    }

    pub fn generic() -> EventMapping {
        EventMapping::parse("generic", GENERIC_EVENTS).expect("built-in mapping parses")
    }

    pub fn load(path: &Path) -> Result<EventMapping> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        EventMapping::parse(&path.display().to_string(), &text)
    }

    pub fn event(&self, field: CounterField) -> Option<EventCode> {
        self.events.get(&field).copied()
    }

    pub fn mapped_fields(&self) -> impl Iterator<Item = (CounterField, EventCode)> + '_ {
        self.events.iter().map(|(&f, &c)| (f, c))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_mapping_parses() {
        let m = EventMapping::generic();
        assert_eq!(
            m.event(CounterField::CoreCycles),
            Some(EventCode {
                type_: TYPE_HARDWARE,
                config: 0
            })
        );
        assert_eq!(m.event(CounterField::ExecutionStallEvents), None);
        assert_eq!(m.params.icache_penalty, 20.0);
    }

    #[test]
    fn cache_and_raw_selectors() {
        assert_eq!(
            parse_event("cache:ll:read:miss").unwrap(),
            Some(EventCode {
                type_: TYPE_HW_CACHE,
                config: 2 | (1 << 16)
            })
        );
        assert_eq!(
            parse_event("raw:0xa3:0x14:20").unwrap(),
            Some(EventCode {
                type_: TYPE_RAW,
                config: 0xa3 | (0x14 << 8) | (20 << 24)
            })
        );
        assert_eq!(parse_event("none").unwrap(), None);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = EventMapping::parse("t", "core_cycles = hw:nope").unwrap_err();
        assert!(err.to_string().contains("t:1"), "{err}");
        let err = EventMapping::parse("t", "\nfoo = 1").unwrap_err();
        assert!(err.to_string().contains("t:2"), "{err}");
        let err = EventMapping::parse("t", "slots_per_cycle = x").unwrap_err();
        assert!(err.to_string().contains("needs a number"), "{err}");
    }

    #[test]
    fn comments_and_blanks_ignored() {
        let m = EventMapping::parse("t", "# comment\n\ncore_cycles = hw:cpu-cycles # eol\n")
            .unwrap();
        assert!(m.event(CounterField::CoreCycles).is_some());
    }
}
