//! Programming, read and projected MAC energy.

use serde::{Deserialize, Serialize};

use crate::crossbar::{PulseReport, ReadEvent};
use crate::device::DeviceTechParams;

/// Program-and-verify cost per weight update (J), from the HfOx baseline.
pub const PV_ENERGY_PER_UPDATE: f64 = 387e-12;

/// 22 nm in-memory-computing macro efficiency (operations per joule).
pub const DEFAULT_OPS_PER_JOULE: f64 = 57.5e12;

/// Event log of a training run. Pulse events keep the conductance read
/// just before each reset pulse, which is all re-costing needs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyLedger {
    /// Name of the technology the pulses were delivered with.
    pub tech_name: String,
    pulse_g_pre: Vec<f64>,
    reinit_energy: f64,
    reinit_count: u64,
    read_events: Vec<ReadEvent>,
    mac_count: u64,
    #[serde(skip)]
    totals: LedgerTotals,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LedgerTotals {
    pub pulse_count: u64,
    pub sum_g_pre: f64,
    pub read_energy: f64,
    pub mac_count: u64,
}

impl EnergyLedger {
    pub fn new(tech_name: impl Into<String>) -> Self {
        Self {
            tech_name: tech_name.into(),
            ..Default::default()
        }
    }

    pub fn record_pulse(&mut self, g_pre: f64) {
        self.pulse_g_pre.push(g_pre);
        self.totals.pulse_count += 1;
        self.totals.sum_g_pre += g_pre;
    }

    pub fn record_report(&mut self, report: &PulseReport) {
        for g in report.pulsed_conductances() {
            self.record_pulse(g);
        }
        for (_, o) in &report.outcomes {
            if let crate::crossbar::ActionOutcome::ReinitThenApplied { reinit_energy, .. } = o {
                self.reinit_energy += reinit_energy;
                self.reinit_count += 1;
            }
        }
    }

    pub fn record_read(&mut self, ev: ReadEvent) {
        self.totals.read_energy += ev.energy();
        self.read_events.push(ev);
    }

    /// Each MAC counts as two operations in the projection.
    pub fn record_macs(&mut self, n: u64) {
        self.mac_count += n;
        self.totals.mac_count += n;
    }

    pub fn pulse_events(&self) -> &[f64] {
        &self.pulse_g_pre
    }

    pub fn read_events(&self) -> &[ReadEvent] {
        &self.read_events
    }

    pub fn pulse_count(&self) -> u64 {
        self.totals.pulse_count
    }

    pub fn mac_count(&self) -> u64 {
        self.mac_count
    }

    pub fn reinit_energy(&self) -> f64 {
        self.reinit_energy
    }

    pub fn reinit_count(&self) -> u64 {
        self.reinit_count
    }

    pub fn totals(&self) -> LedgerTotals {
        self.totals
    }

    /// Totals recomputed from the raw events.
    pub fn recompute_totals(&self) -> LedgerTotals {
        LedgerTotals {
            pulse_count: self.pulse_g_pre.len() as u64,
            sum_g_pre: self.pulse_g_pre.iter().sum(),
            read_energy: self.read_events.iter().map(ReadEvent::energy).sum(),
            mac_count: self.mac_count,
        }
    }

    /// Rebuilds the totals cache, e.g. after deserialization.
    pub fn refresh_totals(&mut self) {
        self.totals = self.recompute_totals();
    }

    pub fn mean_pre_pulse_conductance(&self) -> f64 {
        if self.pulse_g_pre.is_empty() {
            0.0
        } else {
            self.totals.sum_g_pre / self.pulse_g_pre.len() as f64
        }
    }

    pub fn read_energy(&self) -> f64 {
        self.totals.read_energy
    }

    /// Appends another ledger's events.
    pub fn extend(&mut self, other: &EnergyLedger) {
        for &g in &other.pulse_g_pre {
            self.record_pulse(g);
        }
        for &r in &other.read_events {
            self.record_read(r);
        }
        self.record_macs(other.mac_count);
        self.reinit_energy += other.reinit_energy;
        self.reinit_count += other.reinit_count;
    }

    /// Compact form for run directories: sufficient for re-costing since
    /// pulse energy is linear in conductance.
    pub fn summary(&self) -> LedgerSummary {
        LedgerSummary {
            tech_name: self.tech_name.clone(),
            pulse_count: self.totals.pulse_count,
            sum_g_pre: self.totals.sum_g_pre,
            read_event_count: self.read_events.len() as u64,
            read_energy: self.totals.read_energy,
            mac_count: self.mac_count,
            reinit_count: self.reinit_count,
            reinit_energy: self.reinit_energy,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LedgerSummary {
    pub tech_name: String,
    pub pulse_count: u64,
    /// Sum of pre-pulse conductances (S).
    pub sum_g_pre: f64,
    pub read_event_count: u64,
    pub read_energy: f64,
    pub mac_count: u64,
    pub reinit_count: u64,
    pub reinit_energy: f64,
}

impl LedgerSummary {
    pub fn programming_energy(&self, tech: &DeviceTechParams) -> f64 {
        self.sum_g_pre * tech.v_reset * tech.v_reset * tech.t_reset
    }

    pub fn mean_pulse_energy(&self, tech: &DeviceTechParams) -> f64 {
        if self.pulse_count == 0 {
            0.0
        } else {
            self.programming_energy(tech) / self.pulse_count as f64
        }
    }
}

/// Sum of `G_pre V^2 t` over every pulse event, costed under `tech`.
pub fn programming_energy(ledger: &EnergyLedger, tech: &DeviceTechParams) -> f64 {
    let k = tech.v_reset * tech.v_reset * tech.t_reset;
    ledger.pulse_events().iter().map(|g| g * k).sum()
}

pub fn pv_baseline_energy(update_count: u64, per_update_energy: f64) -> f64 {
    update_count as f64 * per_update_energy
}

/// Energy of `mac_count` MACs (two operations each) at `ops_per_joule`
/// (numerically equal to the TOPS/W figure times 1e12).
pub fn mac_energy_projection(mac_count: u64, ops_per_joule: f64) -> crate::Result<f64> {
    if !(ops_per_joule > 0.0) {
        return Err(crate::Error::param("efficiency must be positive"));
    }
    Ok(2.0 * mac_count as f64 / ops_per_joule)
}

/// Energy report of one run, re-costed under several technologies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub recorded_tech: String,
    pub pulse_count: u64,
    pub mean_pre_pulse_conductance_us: f64,
    pub programming: Vec<TechCost>,
    pub read_energy_j: f64,
    pub mac_count: u64,
    pub mac_projection_j: f64,
    pub ops_per_joule: f64,
    pub pv_baseline_j: f64,
    pub pv_per_update_j: f64,
    pub reinit_energy_j: f64,
    pub ratios: Ratios,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TechCost {
    pub tech: String,
    pub v_reset: f64,
    pub t_reset: f64,
    pub total_j: f64,
    pub mean_per_pulse_j: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ratios {
    /// First tech's programming energy over each other tech's.
    pub recost: Vec<(String, f64)>,
    /// P&V per-update energy over the cheapest mean pulse energy.
    pub pv_over_cheapest_pulse: f64,
    /// Projected MAC energy over the cheapest programming total.
    pub mac_over_cheapest_programming: f64,
}

fn ratio(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        0.0
    } else {
        a / b
    }
}

pub fn energy_report(
    summary: &LedgerSummary,
    techs: &[DeviceTechParams],
    ops_per_joule: f64,
    pv_per_update: f64,
) -> crate::Result<EnergyReport> {
    let programming: Vec<TechCost> = techs
        .iter()
        .map(|t| TechCost {
            tech: t.name.clone(),
            v_reset: t.v_reset,
            t_reset: t.t_reset,
            total_j: summary.programming_energy(t),
            mean_per_pulse_j: summary.mean_pulse_energy(t),
        })
        .collect();
    let mac = mac_energy_projection(summary.mac_count, ops_per_joule)?;
    let pv = pv_baseline_energy(summary.pulse_count, pv_per_update);
    let cheapest = programming.iter().min_by(|a, b| a.total_j.total_cmp(&b.total_j));
    let recost = programming
        .iter()
        .skip(1)
        .map(|c| (c.tech.clone(), ratio(programming[0].total_j, c.total_j)))
        .collect();
    Ok(EnergyReport {
        recorded_tech: summary.tech_name.clone(),
        pulse_count: summary.pulse_count,
        mean_pre_pulse_conductance_us: if summary.pulse_count == 0 {
            0.0
        } else {
            summary.sum_g_pre / summary.pulse_count as f64 / crate::MICRO_SIEMENS
        },
        ratios: Ratios {
            recost,
            pv_over_cheapest_pulse: cheapest.map_or(0.0, |c| ratio(pv_per_update, c.mean_per_pulse_j)),
            mac_over_cheapest_programming: cheapest.map_or(0.0, |c| ratio(mac, c.total_j)),
        },
        programming,
        read_energy_j: summary.read_energy,
        mac_count: summary.mac_count,
        mac_projection_j: mac,
        ops_per_joule,
        pv_baseline_j: pv,
        pv_per_update_j: pv_per_update,
        reinit_energy_j: summary.reinit_energy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_ledger_costs_nothing() {
        let l = EnergyLedger::new("large-array");
        assert_eq!(programming_energy(&l, &DeviceTechParams::large_array()), 0.0);
        assert_eq!(pv_baseline_energy(0, PV_ENERGY_PER_UPDATE), 0.0);
        assert_eq!(mac_energy_projection(0, DEFAULT_OPS_PER_JOULE).unwrap(), 0.0);
    }

    #[test]
    fn single_event_hand_value() {
        let mut l = EnergyLedger::new("large-array");
        l.record_pulse(50e-6);
        let e = programming_energy(&l, &DeviceTechParams::large_array());
        assert!((e - 24.3e-12).abs() / 24.3e-12 < 1e-15);
    }

    #[test]
    fn recost_ratio_is_parameter_forced() {
        let mut l = EnergyLedger::new("large-array");
        for k in 0..100 {
            l.record_pulse((40.0 + k as f64 * 0.3) * 1e-6);
        }
        let r = programming_energy(&l, &DeviceTechParams::large_array())
            / programming_energy(&l, &DeviceTechParams::mac_array());
        let want = (0.9f64 * 0.9 * 600.0) / (0.62 * 0.62 * 30.0);
        assert!((r - want).abs() < 1e-9);
        assert!((r - 42.1).abs() < 0.1);
    }

    #[test]
    fn pv_arithmetic() {
        assert!((pv_baseline_energy(1_000_000, PV_ENERGY_PER_UPDATE) - 387e-6).abs() < 1e-15);
        assert!((PV_ENERGY_PER_UPDATE / 0.84e-12 - 460.7).abs() < 0.5);
    }

    #[test]
    fn mac_projection_arithmetic() {
        let e = mac_energy_projection(1_000_000_000_000, DEFAULT_OPS_PER_JOULE).unwrap();
        assert!((e - 2.0 / 57.5).abs() < 1e-15);
        assert!(mac_energy_projection(1, 0.0).is_err());
    }

    #[test]
    fn totals_cache_matches_events() {
        let mut l = EnergyLedger::new("x");
        for k in 0..50 {
            l.record_pulse(k as f64 * 1e-6);
            l.record_read(ReadEvent {
                weighted_conductance: k as f64 * 1e-5,
                v_read: 0.2,
                t_read: 15e-6,
            });
        }
        l.record_macs(1234);
        assert_eq!(l.totals(), l.recompute_totals());
        let json = serde_json::to_string(&l).unwrap();
        let mut back: EnergyLedger = serde_json::from_str(&json).unwrap();
        back.refresh_totals();
        assert_eq!(back.totals(), l.totals());
    }

    #[test]
    fn programming_energy_is_additive() {
        let tech = DeviceTechParams::large_array();
        let mut a = EnergyLedger::new("x");
        let mut b = EnergyLedger::new("x");
        for k in 0..10 {
            a.record_pulse((30.0 + k as f64) * 1e-6);
            b.record_pulse((60.0 - k as f64) * 1e-6);
        }
        let (ea, eb) = (programming_energy(&a, &tech), programming_energy(&b, &tech));
        a.extend(&b);
        assert!((programming_energy(&a, &tech) - (ea + eb)).abs() < 1e-24);
    }

    #[test]
    fn report_of_empty_summary_is_zero() {
        let r = energy_report(
            &LedgerSummary::default(),
            &[DeviceTechParams::large_array(), DeviceTechParams::mac_array()],
            DEFAULT_OPS_PER_JOULE,
            PV_ENERGY_PER_UPDATE,
        )
        .unwrap();
        assert!(r.programming.iter().all(|c| c.total_j == 0.0));
        assert_eq!(r.mac_projection_j, 0.0);
        assert_eq!(r.pv_baseline_j, 0.0);
    }
}
