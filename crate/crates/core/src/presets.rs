//! Named scenario presets, each with a desk-sized default and a full-sized
//! variant.

use crate::config::{Config, ScenarioKind};
use crate::error::{Error, Result};
use crate::sim::SimTime;
use crate::world::Protocol;

pub const PRESETS: &[(&str, &str)] = &[
    ("fig2-naive", "naive credits on the two-link multi-bottleneck topology"),
    ("fig3-parkinglot", "minimum link utilization on an N-link parking lot"),
    ("fig4-creditq", "dumbbell utilization for one credit queue size"),
    ("fig5-jitter", "1 ms fairness of many flows on a dumbbell for one jitter level"),
    ("fig6-mbfairness", "share of the single-link flow with N flows on the second link"),
    ("fig7-convergence", "a second flow joins a saturated dumbbell"),
    ("fig8-shuffle", "all-to-all shuffle under one switch"),
    ("fig9-manyflows", "many concurrent backlogged flows on a dumbbell"),
    ("fig10-joinleave", "flows join and leave one at a time"),
    ("table1-macro", "Poisson data-mining workload on a three-tier fat-tree"),
];

pub fn names() -> Vec<&'static str> {
    PRESETS.iter().map(|(n, _)| *n).collect()
}

/// How large to make a preset. `Factor(f)` multiplies the desk counts and
/// durations by `f`, capped at the full size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scale {
    Desk,
    Full,
    Factor(f64),
}

impl Scale {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Scale::Desk),
            "full" => Ok(Scale::Full),
            _ => match s.parse::<f64>() {
                Ok(f) if f > 0.0 && f.is_finite() => Ok(Scale::Factor(f)),
                _ => Err(Error::config(format!("scale `{s}`: expected desk, full or a positive factor"))),
            },
        }
    }

    fn count(self, desk: usize, full: usize) -> usize {
        match self {
            Scale::Desk => desk,
            Scale::Full => full,
            Scale::Factor(f) => ((desk as f64 * f).round() as usize).clamp(1, full.max(desk)),
        }
    }

    fn time(self, desk: SimTime, full: SimTime) -> SimTime {
        match self {
            Scale::Desk => desk,
            Scale::Full => full,
            Scale::Factor(f) => SimTime::from_secs_f64(desk.as_secs_f64() * f).min(full.max(desk)),
        }
    }
}

impl std::fmt::Display for Scale {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Scale::Desk => f.write_str("desk"),
            Scale::Full => f.write_str("full"),
            Scale::Factor(x) => write!(f, "{x}"),
        }
    }
}

fn ms(v: u64) -> SimTime {
    SimTime::from_millis(v)
}

pub fn preset(name: &str, scale: Scale) -> Result<Config> {
    let mut c = Config::default();
    match name {
        "fig2-naive" => {
            c.protocol = Protocol::ExpressPassNaive;
            c.scenario = ScenarioKind::MultiBottleneck;
            c.multi_bottleneck.left_flows = 2;
            c.run.duration = scale.time(ms(10), ms(50));
        }
        "fig3-parkinglot" => {
            c.scenario = ScenarioKind::ParkingLot;
            c.parking_lot.bottlenecks = scale.count(2, 6);
            c.run.duration = scale.time(ms(10), ms(50));
        }
        "fig4-creditq" => {
            c.scenario = ScenarioKind::Dumbbell;
            c.dumbbell.flows = 8;
            c.run.duration = scale.time(ms(10), ms(50));
        }
        "fig5-jitter" => {
            c.scenario = ScenarioKind::Dumbbell;
            c.dumbbell.flows = scale.count(64, 1024);
            c.run.duration = scale.time(ms(10), ms(100));
            c.run.sample = ms(1);
        }
        "fig6-mbfairness" => {
            c.scenario = ScenarioKind::MultiBottleneck;
            c.multi_bottleneck.left_flows = scale.count(3, 7);
            c.run.duration = scale.time(ms(10), ms(50));
        }
        "fig7-convergence" => {
            c.scenario = ScenarioKind::Convergence;
            c.convergence.join = ms(1);
            c.run.duration = scale.time(ms(4), ms(10));
        }
        "fig8-shuffle" => {
            c.scenario = ScenarioKind::Shuffle;
            c.shuffle.hosts = scale.count(8, 40);
            c.shuffle.tasks = scale.count(2, 8);
            c.shuffle.bytes = 1_000_000;
            c.run.duration = scale.time(ms(200), ms(20_000));
        }
        "fig9-manyflows" => {
            c.scenario = ScenarioKind::Dumbbell;
            c.dumbbell.flows = scale.count(64, 2048);
            c.run.duration = scale.time(ms(10), ms(1000));
            c.run.sample = scale.time(ms(1), ms(100));
        }
        "fig10-joinleave" => {
            c.scenario = ScenarioKind::JoinLeave;
            c.join_leave.flows = 5;
            c.join_leave.step = scale.time(ms(1), ms(1000));
            c.run.sample = scale.time(SimTime::from_micros(100), ms(10));
        }
        "table1-macro" => {
            c.scenario = ScenarioKind::Macro;
            let full = matches!(scale, Scale::Full);
            (c.macro_.cores, c.macro_.aggs, c.macro_.tors, c.macro_.hosts) =
                if full { (8, 16, 32, 192) } else { (4, 8, 8, 16) };
            c.macro_.cdf = "data-mining".into();
            c.macro_.load = 0.6;
            c.macro_.arrivals = scale.time(ms(10), ms(1000));
            c.run.duration = scale.time(ms(20), ms(2000));
        }
        _ => {
            return Err(Error::config(format!("unknown preset `{name}`; available: {}", names().join(", "))));
        }
    }
    Ok(c)
}

/// Sets the scenario's main count (`--n`).
pub fn set_count(c: &mut Config, n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::config("--n must be at least 1"));
    }
    match c.scenario {
        ScenarioKind::Dumbbell => c.dumbbell.flows = n,
        ScenarioKind::ParkingLot => c.parking_lot.bottlenecks = n,
        // N counts every flow on the shared link
        ScenarioKind::MultiBottleneck if n >= 2 => c.multi_bottleneck.left_flows = n - 1,
        ScenarioKind::MultiBottleneck => return Err(Error::config("--n for multi-bottleneck counts all flows; use 2 or more")),
        ScenarioKind::JoinLeave => c.join_leave.flows = n,
        ScenarioKind::Shuffle => c.shuffle.hosts = n,
        other => return Err(Error::config(format!("--n has no meaning for the {} scenario", other.name()))),
    }
    Ok(())
}
