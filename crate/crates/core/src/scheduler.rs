//! Device selection, received index sets, masks and recency markers.

use crate::channel::CoherenceProfile;
use crate::error::{invalid, Error, Result};
use crate::grid::{PlacementMap, SlotCensus, SlotKind};
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RosterEntry {
    pub profile: CoherenceProfile,
    /// Local dataset size `B_k`.
    pub shard_size: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Roster {
    pub devices: Vec<RosterEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduledDevice {
    pub profile: CoherenceProfile,
    /// Aggregation weight `a_k = B_k / Σ B`.
    pub weight: f64,
}

/// Statics always; then the `k_d` dynamics with the largest `L_t·L_f`
/// (lower id first on ties). Statics come first in the output, by id.
pub fn schedule_round(roster: &Roster, k_d: usize) -> Result<Vec<ScheduledDevice>> {
    let mut statics: Vec<&RosterEntry> = roster.devices.iter().filter(|e| e.profile.is_static()).collect();
    let mut dynamics: Vec<&RosterEntry> = roster.devices.iter().filter(|e| !e.profile.is_static()).collect();
    if k_d > dynamics.len() {
        return Err(Error::TooManyDynamics { requested: k_d, available: dynamics.len() });
    }
    statics.sort_by_key(|e| e.profile.device_id);
    dynamics.sort_by(|a, b| {
        b.profile.block_area().cmp(&a.profile.block_area()).then(a.profile.device_id.cmp(&b.profile.device_id))
    });
    let chosen: Vec<&RosterEntry> = statics.into_iter().chain(dynamics.into_iter().take(k_d)).collect();
    let total: usize = chosen.iter().map(|e| e.shard_size).sum();
    if total == 0 {
        return Err(invalid("shard_size", "scheduled devices hold no data"));
    }
    Ok(chosen
        .into_iter()
        .map(|e| ScheduledDevice { profile: e.profile, weight: e.shard_size as f64 / total as f64 })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageRecord {
    pub device_id: u32,
    /// `I_k(t)`, ascending.
    pub received: Vec<usize>,
    /// Diagonal of `D_k(t)`.
    pub mask: Vec<bool>,
    /// `ζ_k(t)`: last round each coordinate was received.
    pub recency: Vec<u32>,
    /// `q_k = |I_k| / s`.
    pub fraction: f64,
}

impl CoverageRecord {
    pub fn from_received(device_id: u32, d: usize, mut received: Vec<usize>, round: u32, prior: &[u32]) -> Result<Self> {
        if prior.len() != d {
            return Err(Error::DimensionMismatch { expected: d, found: prior.len() });
        }
        received.sort_unstable();
        received.dedup();
        let mut mask = vec![false; d];
        for &i in &received {
            if i >= d {
                return Err(Error::DimensionMismatch { expected: d, found: i + 1 });
            }
            mask[i] = true;
        }
        let recency = prior.iter().zip(&mask).map(|(&z, &m)| if m { round } else { z }).collect();
        let fraction = received.len() as f64 / d.max(1) as f64;
        Ok(Self { device_id, received, mask, recency, fraction })
    }
}

/// Received index set under product superposition. Statics get everything;
/// dynamics get the data-phase symbols of strips lying inside one of their
/// coherence tiles.
pub fn derive_coverage(
    map: &PlacementMap,
    profile: &CoherenceProfile,
    round: u32,
    prior: &[u32],
) -> Result<CoverageRecord> {
    let d = map.len();
    let received = if profile.is_static() {
        (0..d).collect()
    } else {
        let mut out = Vec::new();
        for strip in &map.strips {
            if strip.pilot_column
                || !profile.covers(strip.time_start..strip.time_start + strip.len, strip.subcarrier..strip.subcarrier + 1)
            {
                continue;
            }
            out.extend(strip.symbols.clone().filter(|&i| map.entries[i].kind == SlotKind::DataSlot));
        }
        out
    };
    CoverageRecord::from_received(profile.device_id, d, received, round, prior)
}

/// Total slots over slots that carry model symbols.
pub fn normalized_comm_cost(census: &SlotCensus) -> Result<f64> {
    if census.payload == 0 {
        return Err(Error::NoPayload);
    }
    Ok(census.total() as f64 / census.payload as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{DeviceClass, GridDims};
    use crate::grid::build_superblock;

    fn entry(id: u32, lt: usize, lf: usize, class: DeviceClass) -> RosterEntry {
        RosterEntry { profile: CoherenceProfile::new(id, lt, lf, class).unwrap(), shard_size: 10 }
    }

    #[test]
    fn top_k_by_area_with_id_ties() {
        let roster = Roster {
            devices: alloc::vec![
                entry(0, 10, 10, DeviceClass::Dynamic),
                entry(1, 10, 5, DeviceClass::Dynamic),
                entry(2, 5, 4, DeviceClass::Dynamic),
                entry(3, 5, 10, DeviceClass::Dynamic),
                entry(9, 100, 100, DeviceClass::Static),
            ],
        };
        let s = schedule_round(&roster, 2).unwrap();
        let ids: Vec<u32> = s.iter().map(|d| d.profile.device_id).collect();
        assert_eq!(ids, alloc::vec![9, 0, 1]);
        let s = schedule_round(&roster, 3).unwrap();
        assert_eq!(s[3].profile.device_id, 3);
        assert_eq!(schedule_round(&roster, 0).unwrap().len(), 1);
        assert!(schedule_round(&roster, 5).is_err());
        let total: f64 = s.iter().map(|d| d.weight).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn static_sees_everything_dynamic_sees_data_phase() {
        let dynp = CoherenceProfile::new(1, 8, 1, DeviceClass::Dynamic).unwrap();
        let (_, map) = build_superblock(&[dynp], 16, GridDims::new(16, 1, 1).unwrap(), None).unwrap();
        let stat = CoherenceProfile::new(0, 16, 1, DeviceClass::Static).unwrap();
        let prior = alloc::vec![0; 16];
        let c = derive_coverage(&map, &stat, 1, &prior).unwrap();
        assert_eq!(c.fraction, 1.0);
        let c = derive_coverage(&map, &dynp, 1, &prior).unwrap();
        assert_eq!(c.received.len(), 14);
        assert!(!c.mask[0] && !c.mask[8]);
        assert_eq!(c.recency[0], 0);
        assert_eq!(c.recency[1], 1);
    }

    #[test]
    fn bisected_strip_is_excluded() {
        let fast = CoherenceProfile::new(1, 4, 1, DeviceClass::Dynamic).unwrap();
        let (_, map) = build_superblock(&[fast], 12, GridDims::new(12, 1, 1).unwrap(), None).unwrap();
        let shifted = CoherenceProfile::new(2, 8, 1, DeviceClass::Dynamic).unwrap().with_offsets(2, 0).unwrap();
        // Tiles of the shifted device: [0,2), [2,10), [10,18): only strip [4,8) fits.
        let c = derive_coverage(&map, &shifted, 1, &alloc::vec![0; 12]).unwrap();
        assert_eq!(c.received, alloc::vec![5, 6, 7]);
    }

    #[test]
    fn comm_cost_examples() {
        let baseline = SlotCensus { pilot: 2, data: 8, superposed: 0, payload: 8 };
        assert!((normalized_comm_cost(&baseline).unwrap() - 1.25).abs() < 1e-15);
        let sup = SlotCensus { pilot: 0, data: 8, superposed: 2, payload: 10 };
        assert_eq!(normalized_comm_cost(&sup).unwrap(), 1.0);
        assert_eq!(normalized_comm_cost(&SlotCensus::default()), Err(Error::NoPayload));
    }
}
