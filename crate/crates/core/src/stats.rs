//! Spike counting and the energy proxy.
//!
//! Only '1' spikes trigger synaptic accumulates, so the fraction of fired
//! slots is the dynamic-energy proxy.

use std::fmt::Write as _;

use crate::spike::SpikeTrain;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerStats {
    pub name: String,
    pub fired: u64,
    pub slots: u64,
}

impl LayerStats {
    pub fn of(name: impl Into<String>, train: &SpikeTrain) -> Self {
        Self {
            name: name.into(),
            fired: train.fired(),
            slots: train.slots(),
        }
    }

    pub fn ratio(&self) -> f64 {
        ratio(self.fired, self.slots)
    }
}

fn ratio(fired: u64, slots: u64) -> f64 {
    if slots == 0 {
        0.0
    } else {
        fired as f64 / slots as f64
    }
}

/// Per-layer fired/slot counts for one or more runs.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SpikeStats {
    pub layers: Vec<LayerStats>,
}

impl SpikeStats {
    pub fn push(&mut self, name: impl Into<String>, train: &SpikeTrain) {
        self.layers.push(LayerStats::of(name, train));
    }

    pub fn fired(&self) -> u64 {
        self.layers.iter().map(|l| l.fired).sum()
    }

    pub fn slots(&self) -> u64 {
        self.layers.iter().map(|l| l.slots).sum()
    }

    pub fn ratio(&self) -> f64 {
        ratio(self.fired(), self.slots())
    }

    /// Adds another run's counts layer by layer (names must line up).
    pub fn merge(&mut self, other: &SpikeStats) {
        if self.layers.is_empty() {
            self.layers = other.layers.clone();
            return;
        }
        assert_eq!(
            self.layers.len(),
            other.layers.len(),
            "mismatched stats layers"
        );
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            debug_assert_eq!(a.name, b.name);
            a.fired += b.fired;
            a.slots += b.slots;
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReportLine {
    pub name: String,
    pub fired: u64,
    pub slots: u64,
    pub ratio: f64,
    pub energy: f64,
}

/// Per-layer and whole-network spike accounting.
#[derive(Clone, Debug, PartialEq)]
pub struct SpikeReport {
    pub layers: Vec<ReportLine>,
    pub total: ReportLine,
    pub unit_cost: f64,
}

impl SpikeReport {
    /// Line-oriented `key=value` rendering.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let line = |out: &mut String, prefix: &str, l: &ReportLine| {
            let _ = writeln!(
                out,
                "{prefix} name={} fired={} slots={} ratio={:.6} ratio_pct={:.2} energy={:.6}",
                l.name,
                l.fired,
                l.slots,
                l.ratio,
                l.ratio * 100.0,
                l.energy
            );
        };
        for l in &self.layers {
            line(&mut out, "layer", l);
        }
        line(&mut out, "total", &self.total);
        let _ = writeln!(out, "unit_cost={}", self.unit_cost);
        out
    }
}

/// Builds the report; `energy = fired * unit_cost`.
pub fn spike_report(stats: &SpikeStats, unit_cost: f64) -> SpikeReport {
    let mk = |name: &str, fired: u64, slots: u64| ReportLine {
        name: name.to_string(),
        fired,
        slots,
        ratio: ratio(fired, slots),
        energy: fired as f64 * unit_cost,
    };
    SpikeReport {
        layers: stats
            .layers
            .iter()
            .map(|l| mk(&l.name, l.fired, l.slots))
            .collect(),
        total: mk("all", stats.fired(), stats.slots()),
        unit_cost,
    }
}
