//! Run configuration as TOML.
//!
//! A config names a scenario and carries one section per scenario plus the shared
//! `[run]`, `[net]`, `[xpass]` and `[dctcp]` sections; every key has a default, so
//! a file only lists what it changes. Times are strings with a unit (`"100us"`,
//! `"1.5ms"`), rates are strings like `"10G"` or `"400M"`.
//!
//! ```toml
//! protocol = "expresspass"
//! scenario = "parking-lot"
//!
//! [parking_lot]
//! bottlenecks = 6
//!
//! [run]
//! duration = "20ms"
//! ```

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::dctcp::DctcpConfig;
use crate::error::{Error, Result};
use crate::sim::SimTime;
use crate::world::{PortSampling, Protocol, SimConfig};
use crate::xpass::XpassConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    Dumbbell,
    ParkingLot,
    MultiBottleneck,
    Convergence,
    JoinLeave,
    Shuffle,
    Macro,
    AppLimited,
}

impl ScenarioKind {
    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::Dumbbell => "dumbbell",
            ScenarioKind::ParkingLot => "parking-lot",
            ScenarioKind::MultiBottleneck => "multi-bottleneck",
            ScenarioKind::Convergence => "convergence",
            ScenarioKind::JoinLeave => "join-leave",
            ScenarioKind::Shuffle => "shuffle",
            ScenarioKind::Macro => "macro",
            ScenarioKind::AppLimited => "app-limited",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub protocol: Protocol,
    pub scenario: ScenarioKind,
    pub run: RunSection,
    pub net: NetSection,
    pub xpass: XpassSection,
    pub dctcp: DctcpSection,
    pub dumbbell: DumbbellSection,
    pub parking_lot: ParkingLotSection,
    pub multi_bottleneck: MultiBottleneckSection,
    pub convergence: ConvergenceSection,
    pub join_leave: JoinLeaveSection,
    pub shuffle: ShuffleSection,
    #[serde(rename = "macro")]
    pub macro_: MacroSection,
    pub app_limited: AppLimitedSection,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            seed: 1,
            protocol: Protocol::ExpressPass,
            scenario: ScenarioKind::Dumbbell,
            run: RunSection::default(),
            net: NetSection::default(),
            xpass: XpassSection::default(),
            dctcp: DctcpSection::default(),
            dumbbell: DumbbellSection::default(),
            parking_lot: ParkingLotSection::default(),
            multi_bottleneck: MultiBottleneckSection::default(),
            convergence: ConvergenceSection::default(),
            join_leave: JoinLeaveSection::default(),
            shuffle: ShuffleSection::default(),
            macro_: MacroSection::default(),
            app_limited: AppLimitedSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    /// Simulated horizon. FCT scenarios stop earlier once every flow is done.
    #[serde(with = "time_str")]
    pub duration: SimTime,
    /// Start of the measurement window for rate and utilization figures.
    #[serde(with = "time_str")]
    pub warmup: SimTime,
    #[serde(with = "time_str")]
    pub sample: SimTime,
    /// Overrides the scenario's choice of sampled ports.
    pub port_sampling: Option<PortSampling>,
    pub check_bound: bool,
    pub check_symmetry: bool,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            duration: SimTime::from_millis(10),
            warmup: SimTime::from_millis(2),
            sample: SimTime::from_micros(100),
            port_sampling: None,
            check_bound: true,
            check_symmetry: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetSection {
    #[serde(with = "rate_str")]
    pub rate: u64,
    /// Base round-trip time of the dumbbell-style topologies.
    #[serde(with = "time_str")]
    pub rtt: SimTime,
    pub credit_queue_pkts: usize,
    /// Per-port data buffer; unset picks the protocol default.
    pub data_queue_bytes: Option<u64>,
}

impl Default for NetSection {
    fn default() -> Self {
        NetSection {
            rate: 10_000_000_000,
            rtt: SimTime::from_micros(100),
            credit_queue_pkts: 16,
            data_queue_bytes: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct XpassSection {
    pub jitter: f64,
    pub initial_rate_fraction: f64,
    #[serde(with = "time_str")]
    pub min_rto: SimTime,
    pub rtt_gain: f64,
    #[serde(with = "time_str")]
    pub fallback_period: SimTime,
    pub fresh_loss_only: bool,
    pub nic_clocked: bool,
}

impl Default for XpassSection {
    fn default() -> Self {
        let d = XpassConfig::default();
        XpassSection {
            jitter: d.jitter,
            initial_rate_fraction: d.initial_rate_fraction,
            min_rto: d.min_rto,
            rtt_gain: d.rtt_gain,
            fallback_period: d.fallback_period,
            fresh_loss_only: d.fresh_loss_only,
            nic_clocked: d.nic_clocked,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DctcpSection {
    /// Unset scales with the port rate.
    pub k_pkts: Option<u32>,
    /// Unset scales with the access rate.
    pub g: Option<f64>,
    pub init_cwnd: f64,
    pub init_alpha: f64,
    #[serde(with = "time_str")]
    pub min_rto: SimTime,
    pub dupack_threshold: u32,
}

impl Default for DctcpSection {
    fn default() -> Self {
        let d = DctcpConfig::default();
        DctcpSection {
            k_pkts: d.k_pkts,
            g: d.g,
            init_cwnd: d.init_cwnd,
            init_alpha: d.init_alpha,
            min_rto: d.min_rto,
            dupack_threshold: d.dupack_threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DumbbellSection {
    pub flows: usize,
    #[serde(with = "time_str")]
    pub stagger: SimTime,
}

impl Default for DumbbellSection {
    fn default() -> Self {
        DumbbellSection { flows: 1, stagger: SimTime::ZERO }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParkingLotSection {
    pub bottlenecks: usize,
}

impl Default for ParkingLotSection {
    fn default() -> Self {
        ParkingLotSection { bottlenecks: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MultiBottleneckSection {
    /// Flows crossing both links, next to the one flow that crosses only the second.
    pub left_flows: usize,
}

impl Default for MultiBottleneckSection {
    fn default() -> Self {
        MultiBottleneckSection { left_flows: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergenceSection {
    #[serde(with = "time_str")]
    pub join: SimTime,
    pub smooth: usize,
    pub tolerance: f64,
}

impl Default for ConvergenceSection {
    fn default() -> Self {
        ConvergenceSection { join: SimTime::from_millis(1), smooth: 1, tolerance: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JoinLeaveSection {
    pub flows: usize,
    #[serde(with = "time_str")]
    pub step: SimTime,
}

impl Default for JoinLeaveSection {
    fn default() -> Self {
        JoinLeaveSection { flows: 5, step: SimTime::from_millis(1) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShuffleSection {
    pub hosts: usize,
    pub tasks: usize,
    pub bytes: u64,
    #[serde(with = "time_str")]
    pub link_delay: SimTime,
}

impl Default for ShuffleSection {
    fn default() -> Self {
        ShuffleSection { hosts: 8, tasks: 2, bytes: 1_000_000, link_delay: SimTime::from_micros(5) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MacroSection {
    pub cores: usize,
    pub aggs: usize,
    pub tors: usize,
    pub hosts: usize,
    #[serde(with = "time_str")]
    pub link_delay: SimTime,
    #[serde(with = "time_str")]
    pub host_delay: SimTime,
    /// `web-search`, `data-mining`, or a path to a `size,cdf` file.
    pub cdf: String,
    pub load: f64,
    /// Arrivals stop here; the run continues until `run.duration`.
    #[serde(with = "time_str")]
    pub arrivals: SimTime,
    pub max_flows: Option<usize>,
}

impl Default for MacroSection {
    fn default() -> Self {
        MacroSection {
            cores: 4,
            aggs: 8,
            tors: 8,
            hosts: 16,
            link_delay: SimTime::from_micros(4),
            host_delay: SimTime::from_micros(1),
            cdf: "data-mining".into(),
            load: 0.6,
            arrivals: SimTime::from_millis(10),
            max_flows: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppLimitedSection {
    /// Offered load as a fraction of the fair share.
    pub fraction: f64,
    /// Relative distance from the offered rate that counts as tracking it.
    pub tolerance: f64,
}

impl Default for AppLimitedSection {
    fn default() -> Self {
        AppLimitedSection { fraction: 0.1, tolerance: 0.2 }
    }
}

impl Config {
    /// Parses a complete config; errors carry the line and column.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn to_table(&self) -> Table {
        match Value::try_from(self).expect("config serializes") {
            Value::Table(t) => t,
            _ => unreachable!("a struct serializes to a table"),
        }
    }

    pub fn from_table(table: Table) -> Result<Self> {
        let cfg: Config = Value::Table(table).try_into().map_err(|e: toml::de::Error| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Layers a TOML file over `self`. The file is first checked on its own so
    /// type errors and unknown keys point at its lines.
    pub fn merge_toml(&self, text: &str, origin: &str) -> Result<Self> {
        let overlay: Table = toml::from_str(text).map_err(|e| Error::config(format!("{origin}: {e}")))?;
        toml::from_str::<Config>(text).map_err(|e| Error::config(format!("{origin}: {e}")))?;
        let mut table = self.to_table();
        merge(&mut table, overlay);
        Self::from_table(table).map_err(|e| Error::config(format!("{origin}: {}", bare(e))))
    }

    /// Applies `key=value` assignments with dotted keys, e.g. `xpass.jitter=0.02`.
    /// Values are read as TOML and fall back to a bare string.
    pub fn with_overrides<S: AsRef<str>>(&self, sets: &[S]) -> Result<Self> {
        if sets.is_empty() {
            return Ok(self.clone());
        }
        let mut table = self.to_table();
        for s in sets {
            let (key, value) = parse_assignment(s.as_ref())?;
            set_dotted(&mut table, &key, value)?;
        }
        let shown: Vec<&str> = sets.iter().map(|s| s.as_ref()).collect();
        Self::from_table(table).map_err(|e| Error::config(format!("--set {}: {}", shown.join(" "), bare(e))))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, why: &str| Err(Error::config(format!("`{key}` {why}")));
        if self.net.rate == 0 {
            return bad("net.rate", "must be positive");
        }
        if self.net.credit_queue_pkts == 0 {
            return bad("net.credit_queue_pkts", "must be at least 1");
        }
        if !(0.0..1.0).contains(&self.xpass.jitter) {
            return bad("xpass.jitter", "must be in [0, 1)");
        }
        if !(self.xpass.initial_rate_fraction > 0.0 && self.xpass.initial_rate_fraction <= 1.0) {
            return bad("xpass.initial_rate_fraction", "must be in (0, 1]");
        }
        if !(self.xpass.rtt_gain > 0.0 && self.xpass.rtt_gain <= 1.0) {
            return bad("xpass.rtt_gain", "must be in (0, 1]");
        }
        if self.run.duration == SimTime::ZERO {
            return bad("run.duration", "must be positive");
        }
        if self.run.sample == SimTime::ZERO {
            return bad("run.sample", "must be positive");
        }
        let windowed = matches!(
            self.scenario,
            ScenarioKind::Dumbbell | ScenarioKind::ParkingLot | ScenarioKind::MultiBottleneck
        );
        if windowed && self.run.warmup >= self.run.duration {
            return bad("run.warmup", "must be shorter than run.duration");
        }
        match self.scenario {
            ScenarioKind::Dumbbell if self.dumbbell.flows == 0 => bad("dumbbell.flows", "must be at least 1"),
            ScenarioKind::ParkingLot if self.parking_lot.bottlenecks == 0 => {
                bad("parking_lot.bottlenecks", "must be at least 1")
            }
            ScenarioKind::MultiBottleneck if self.multi_bottleneck.left_flows == 0 => {
                bad("multi_bottleneck.left_flows", "must be at least 1")
            }
            ScenarioKind::Convergence if self.convergence.join >= self.run.duration => {
                bad("convergence.join", "must be before run.duration")
            }
            ScenarioKind::Convergence if self.convergence.smooth == 0 => bad("convergence.smooth", "must be at least 1"),
            ScenarioKind::JoinLeave if self.join_leave.flows == 0 => bad("join_leave.flows", "must be at least 1"),
            ScenarioKind::Shuffle if self.shuffle.hosts < 2 => bad("shuffle.hosts", "must be at least 2"),
            ScenarioKind::Shuffle if self.shuffle.tasks == 0 || self.shuffle.bytes == 0 => {
                bad("shuffle.tasks/bytes", "must be positive")
            }
            ScenarioKind::Macro if !(self.macro_.load > 0.0 && self.macro_.load <= 1.0) => {
                bad("macro.load", "must be in (0, 1]")
            }
            ScenarioKind::AppLimited if !(self.app_limited.fraction > 0.0 && self.app_limited.fraction <= 1.0) => {
                bad("app_limited.fraction", "must be in (0, 1]")
            }
            _ => Ok(()),
        }
    }

    /// Engine settings shared by every scenario; scenario builders adjust the rest.
    pub fn sim_config(&self) -> SimConfig {
        let x = &self.xpass;
        let d = &self.dctcp;
        let mut sim = SimConfig {
            protocol: self.protocol,
            xpass: XpassConfig {
                jitter: x.jitter,
                initial_rate_fraction: x.initial_rate_fraction,
                min_rto: x.min_rto,
                rtt_gain: x.rtt_gain,
                fallback_period: x.fallback_period,
                fresh_loss_only: x.fresh_loss_only,
                nic_clocked: x.nic_clocked,
                ..XpassConfig::default()
            },
            dctcp: DctcpConfig {
                k_pkts: d.k_pkts,
                g: d.g,
                init_cwnd: d.init_cwnd,
                init_alpha: d.init_alpha,
                min_rto: d.min_rto,
                dupack_threshold: d.dupack_threshold,
            },
            credit_queue_pkts: self.net.credit_queue_pkts,
            data_queue_bytes: self.net.data_queue_bytes,
            duration: self.run.duration,
            sample_period: self.run.sample,
            seed: self.seed,
            check_bound: self.run.check_bound,
            check_symmetry: self.run.check_symmetry,
            ..SimConfig::default()
        };
        if let Some(p) = self.run.port_sampling {
            sim.port_sampling = p;
        }
        sim
    }
}

fn merge(base: &mut Table, overlay: Table) {
    for (k, v) in overlay {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn parse_assignment(s: &str) -> Result<(String, Value)> {
    let Some((key, raw)) = s.split_once('=') else {
        return Err(Error::config(format!("--set `{s}`: expected key=value")));
    };
    let key = key.trim();
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(Error::config(format!("--set `{s}`: empty key segment")));
    }
    let raw = raw.trim();
    let value = toml::from_str::<Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()));
    Ok((key.to_string(), value))
}

fn set_dotted(table: &mut Table, key: &str, value: Value) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    let (last, path) = parts.split_last().expect("non-empty key");
    let mut t = table;
    for (i, p) in path.iter().enumerate() {
        let entry = t.entry(p.to_string()).or_insert_with(|| Value::Table(Table::new()));
        t = match entry {
            Value::Table(inner) => inner,
            _ => {
                return Err(Error::config(format!(
                    "--set {key}: `{}` is a value, not a section",
                    parts[..=i].join(".")
                )))
            }
        };
    }
    t.insert(last.to_string(), value);
    Ok(())
}

/// Parses `"250ns"`, `"1.5ms"`, `"2s"`, `"800ps"` or `"100us"` (`µs` also accepted).
pub fn parse_time(s: &str) -> Result<SimTime> {
    let s = s.trim();
    let split = s.find(|c: char| !(c.is_ascii_digit() || c == '.')).unwrap_or(s.len());
    let (num, unit) = s.split_at(split);
    let scale: u64 = match unit.trim() {
        "ps" => 1,
        "ns" => 1_000,
        "us" | "µs" => 1_000_000,
        "ms" => 1_000_000_000,
        "s" => 1_000_000_000_000,
        "" => return Err(Error::config(format!("time `{s}` needs a unit (ps, ns, us, ms, s)"))),
        u => return Err(Error::config(format!("time `{s}`: unknown unit `{u}`"))),
    };
    let ps = parse_scaled(num, scale).ok_or_else(|| Error::config(format!("time `{s}` is not a valid number")))?;
    Ok(SimTime(ps))
}

/// Parses `"10G"`, `"10Gbps"`, `"400M"`, `"1.5G"` or a plain bits-per-second count.
pub fn parse_rate(s: &str) -> Result<u64> {
    let t = s.trim();
    let t = t.strip_suffix("bps").unwrap_or(t);
    let (num, scale) = match t.chars().last() {
        Some('G' | 'g') => (&t[..t.len() - 1], 1_000_000_000),
        Some('M' | 'm') => (&t[..t.len() - 1], 1_000_000),
        Some('K' | 'k') => (&t[..t.len() - 1], 1_000),
        _ => (t, 1),
    };
    match parse_scaled(num.trim(), scale) {
        Some(r) if r > 0 => Ok(r),
        _ => Err(Error::config(format!("rate `{s}` is not a positive rate like 10G"))),
    }
}

/// Exact decimal times a power-of-ten scale; `None` on junk or a fraction finer than the unit.
fn parse_scaled(num: &str, scale: u64) -> Option<u64> {
    let (int, frac) = num.split_once('.').unwrap_or((num, ""));
    if int.is_empty() && frac.is_empty() {
        return None;
    }
    if !int.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let whole: u64 = if int.is_empty() { 0 } else { int.parse().ok()? };
    let mut value = whole.checked_mul(scale)?;
    let mut place = scale;
    for d in frac.chars() {
        if !place.is_multiple_of(10) {
            return None;
        }
        place /= 10;
        value = value.checked_add(u64::from(d.to_digit(10)?) * place)?;
    }
    Some(value)
}

pub fn format_time(t: SimTime) -> String {
    for (unit, scale) in [("s", 1_000_000_000_000u64), ("ms", 1_000_000_000), ("us", 1_000_000), ("ns", 1_000)] {
        if t.0 != 0 && t.0.is_multiple_of(scale) {
            return format!("{}{unit}", t.0 / scale);
        }
    }
    format!("{}ps", t.0)
}

pub fn format_rate(bps: u64) -> String {
    for (unit, scale) in [("G", 1_000_000_000u64), ("M", 1_000_000), ("K", 1_000)] {
        if bps.is_multiple_of(scale) {
            return format!("{}{unit}", bps / scale);
        }
    }
    bps.to_string()
}

fn bare(e: Error) -> String {
    match e {
        Error::Config(m) => m,
        other => other.to_string(),
    }
}

mod time_str {
    use serde::{de::Error as _, Deserialize, Deserializer, Serializer};

    use crate::sim::SimTime;

    pub fn serialize<S: Serializer>(t: &SimTime, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&super::format_time(*t))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<SimTime, D::Error> {
        let s = String::deserialize(d)?;
        super::parse_time(&s).map_err(|e| D::Error::custom(super::bare(e)))
    }
}

mod rate_str {
    use serde::{de::Error as _, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(r: &u64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&super::format_rate(*r))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
        let s = String::deserialize(d)?;
        super::parse_rate(&s).map_err(|e| D::Error::custom(super::bare(e)))
    }
}
