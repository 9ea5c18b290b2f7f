//! The per-round OFDM super-block: pilot lattice, sub-block partition sized by
//! the shortest scheduled coherence, and the placement map of model symbols.

use crate::channel::{CoherenceProfile, GridDims};
use crate::error::{Error, Result};
use crate::math;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

/// Overall pilot fraction of a separable lattice.
pub fn pilot_fraction(lambda_t: f64, lambda_f: f64) -> Result<f64> {
    for l in [lambda_t, lambda_f] {
        if !(0.0..=1.0).contains(&l) {
            return Err(Error::InvalidDensity(l));
        }
    }
    Ok(1.0 - (1.0 - lambda_t) * (1.0 - lambda_f))
}

/// Pilots falling inside one `L_t × L_f` coherence block.
pub fn pilots_per_block(lambda_t: f64, lambda_f: f64, lt: usize, lf: usize) -> Result<usize> {
    for l in [lambda_t, lambda_f] {
        if !(0.0..=1.0).contains(&l) {
            return Err(Error::InvalidDensity(l));
        }
    }
    if lt == 0 || lf == 0 {
        return Err(crate::error::invalid("block", "lengths must be at least 1"));
    }
    let a = math::floor(lambda_t * lt as f64 + 1e-12) as usize;
    let b = math::floor(lambda_f * lf as f64 + 1e-12) as usize;
    Ok(a * b)
}

/// Separable pilot lattice: the first `phase_len` symbols of every
/// `time_period`, plus every `freq_period`-th subcarrier.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PilotLattice {
    pub time_period: Option<usize>,
    pub phase_len: usize,
    pub freq_period: Option<usize>,
}

impl PilotLattice {
    /// Lattice with periods `round(1/λ_t)` and `round(1/λ_f)` (a zero density disables the axis).
    pub fn from_densities(lambda_t: f64, lambda_f: f64) -> Result<Self> {
        pilot_fraction(lambda_t, lambda_f)?;
        let period = |l: f64| (l > 0.0).then(|| (math::round(1.0 / l) as usize).max(1));
        Ok(Self { time_period: period(lambda_t), phase_len: 1, freq_period: period(lambda_f) })
    }

    pub fn is_pilot(&self, n: usize, m: usize) -> bool {
        self.time_period.is_some_and(|p| n % p < self.phase_len)
            || self.is_pilot_column(m)
    }

    pub fn is_pilot_column(&self, m: usize) -> bool {
        self.freq_period.is_some_and(|p| m.is_multiple_of(p))
    }

    /// Pilot positions in time-major order.
    pub fn positions(&self, dims: GridDims) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for n in 0..dims.symbols {
            for m in 0..dims.subcarriers {
                if self.is_pilot(n, m) {
                    out.push((n, m));
                }
            }
        }
        out
    }

    /// Data positions (complement of the pilots) in time-major order.
    pub fn data_positions(&self, dims: GridDims) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for n in 0..dims.symbols {
            for m in 0..dims.subcarriers {
                if !self.is_pilot(n, m) {
                    out.push((n, m));
                }
            }
        }
        out
    }
}

/// `|P|` by the floor rule on `λ·N_s·N`.
pub fn pilot_count(lambda: f64, dims: GridDims) -> usize {
    math::floor(lambda * dims.slots() as f64 + 1e-9) as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuperBlockGeometry {
    #[serde(rename = "N_s")]
    pub symbols: usize,
    #[serde(rename = "N")]
    pub subcarriers: usize,
    #[serde(rename = "M")]
    pub antennas: usize,
    pub lambda_t: f64,
    pub lambda_f: f64,
    #[serde(rename = "L_ts")]
    pub subblock_len: usize,
    #[serde(rename = "L_fs")]
    pub subblock_width: usize,
    #[serde(rename = "q")]
    pub subblocks: usize,
    #[serde(rename = "s")]
    pub model_symbols: usize,
}

impl SuperBlockGeometry {
    pub fn dims(&self) -> GridDims {
        GridDims { symbols: self.symbols, subcarriers: self.subcarriers, antennas: self.antennas }
    }

    pub fn lambda(&self) -> f64 {
        1.0 - (1.0 - self.lambda_t) * (1.0 - self.lambda_f)
    }

    /// Pilot-phase length inside a sub-block (0 when nothing needs training).
    pub fn pilot_phase(&self) -> usize {
        if self.lambda_t > 0.0 {
            self.antennas
        } else {
            0
        }
    }

    pub fn lattice(&self) -> PilotLattice {
        let freq_period = (self.lambda_f > 0.0).then(|| math::round(1.0 / self.lambda_f) as usize);
        PilotLattice {
            time_period: (self.pilot_phase() > 0).then_some(self.subblock_len),
            phase_len: self.pilot_phase(),
            freq_period,
        }
    }

    pub fn subblocks_in_time(&self) -> usize {
        self.symbols / self.subblock_len
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SlotKind {
    PilotSlotEmbedded,
    DataSlot,
}

/// Where one model symbol lives: resource element `(n, m)`, antenna layer, and strip.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Placement {
    pub n: usize,
    pub m: usize,
    pub layer: usize,
    pub kind: SlotKind,
    pub strip: usize,
}

/// A `(sub-block, subcarrier)` pair: `L_ts` consecutive symbols on one subcarrier.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Strip {
    pub time_start: usize,
    pub len: usize,
    pub subcarrier: usize,
    pub subblock: usize,
    /// Strip on a pilot subcarrier: every slot carries a pilot-embedded symbol.
    pub pilot_column: bool,
    /// Model-symbol indices carried, in slot order.
    pub symbols: core::ops::Range<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlacementMap {
    pub entries: Vec<Placement>,
    pub strips: Vec<Strip>,
}

impl PlacementMap {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn strip_capacity(geo: &SuperBlockGeometry, pilot_column: bool) -> usize {
    let (m, l, p) = (geo.antennas, geo.subblock_len, geo.pilot_phase());
    if pilot_column {
        m * l
    } else {
        p + m * (l - p)
    }
}

/// Build the geometry and placement for the scheduled devices.
///
/// `L_ts`, `L_fs` are the minima over the scheduled dynamic devices (capped by
/// the grid); `freq_pilot_period` adds pilot subcarriers every that many tones.
pub fn build_superblock(
    profiles: &[CoherenceProfile],
    model_symbols: usize,
    dims: GridDims,
    freq_pilot_period: Option<usize>,
) -> Result<(SuperBlockGeometry, PlacementMap)> {
    let dims = GridDims::new(dims.symbols, dims.subcarriers, dims.antennas)?;
    let dynamics: Vec<&CoherenceProfile> = profiles.iter().filter(|p| !p.is_static()).collect();
    if dynamics.is_empty() {
        return Err(Error::NoDynamicDevices);
    }
    let lts = dynamics.iter().map(|p| p.coherence_time).min().unwrap_or(1).min(dims.symbols);
    let lfs = dynamics.iter().map(|p| p.coherence_bandwidth).min().unwrap_or(1).min(dims.subcarriers);
    if lts <= dims.antennas {
        return Err(Error::InfeasibleGeometry { subblock_len: lts, antennas: dims.antennas });
    }
    let lambda_f = match freq_pilot_period {
        Some(0) => return Err(crate::error::invalid("freq_pilot_period", "must be positive")),
        Some(p) => 1.0 / p as f64,
        None => 0.0,
    };
    let geo = SuperBlockGeometry {
        symbols: dims.symbols,
        subcarriers: dims.subcarriers,
        antennas: dims.antennas,
        lambda_t: dims.antennas as f64 / lts as f64,
        lambda_f,
        subblock_len: lts,
        subblock_width: lfs,
        subblocks: 0,
        model_symbols,
    };
    place(geo)
}

/// Geometry for a round with no dynamic devices: no pilots, one strip per subcarrier.
pub fn static_superblock(model_symbols: usize, dims: GridDims) -> Result<(SuperBlockGeometry, PlacementMap)> {
    let dims = GridDims::new(dims.symbols, dims.subcarriers, dims.antennas)?;
    let geo = SuperBlockGeometry {
        symbols: dims.symbols,
        subcarriers: dims.subcarriers,
        antennas: dims.antennas,
        lambda_t: 0.0,
        lambda_f: 0.0,
        subblock_len: dims.symbols,
        subblock_width: dims.subcarriers,
        subblocks: 0,
        model_symbols,
    };
    place(geo)
}

fn place(mut geo: SuperBlockGeometry) -> Result<(SuperBlockGeometry, PlacementMap)> {
    let lattice = geo.lattice();
    let (m_ant, l, p) = (geo.antennas, geo.subblock_len, geo.pilot_phase());
    let capacity: usize = (0..geo.subcarriers)
        .map(|m| strip_capacity(&geo, lattice.is_pilot_column(m)))
        .sum::<usize>()
        * geo.subblocks_in_time();
    if geo.model_symbols > capacity {
        return Err(Error::CapacityExceeded { required: geo.model_symbols, available: capacity });
    }
    let s = geo.model_symbols;
    let mut entries = Vec::with_capacity(s);
    let mut strips = Vec::new();
    let blocks_f = geo.subcarriers.div_ceil(geo.subblock_width);
    'outer: for j in 0..geo.subblocks_in_time() {
        for m in 0..geo.subcarriers {
            if entries.len() >= s {
                break 'outer;
            }
            let pilot_column = lattice.is_pilot_column(m);
            let start = entries.len();
            let strip = strips.len();
            let t0 = j * l;
            let mut push = |n: usize, layer: usize, kind: SlotKind| {
                if entries.len() < s {
                    entries.push(Placement { n, m, layer, kind, strip });
                }
            };
            if pilot_column {
                for u in 0..l {
                    for layer in 0..m_ant {
                        push(t0 + u, layer, SlotKind::PilotSlotEmbedded);
                    }
                }
            } else {
                for r in 0..p {
                    push(t0 + r, r, SlotKind::PilotSlotEmbedded);
                }
                for c in 0..l - p {
                    for r in 0..m_ant {
                        push(t0 + p + c, r, SlotKind::DataSlot);
                    }
                }
            }
            strips.push(Strip {
                time_start: t0,
                len: l,
                subcarrier: m,
                subblock: j * blocks_f + m / geo.subblock_width,
                pilot_column,
                symbols: start..entries.len(),
            });
        }
    }
    geo.subblocks = strips.len();
    Ok((geo, PlacementMap { entries, strips }))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerCheck {
    pub holds: bool,
    pub slack: f64,
}

/// Per-round average power constraint for product superposition:
/// `q·M·(ρ_p + ρ_d(L_ts − M)) ≤ ρ·q·L_ts`.
pub fn power_split_check(rho_p: f64, rho_d: f64, rho: f64, geo: &SuperBlockGeometry) -> PowerCheck {
    let (q, m, l) = (geo.subblocks as f64, geo.antennas as f64, geo.subblock_len as f64);
    let budget = rho * q * l;
    let used = q * m * (rho_p + rho_d * (l - m));
    let slack = budget - used;
    PowerCheck { holds: slack >= -1e-12 * budget.max(1.0), slack }
}

/// Orthogonal-lattice constraint `ρ_p|P| + ρ_d|D| ≤ ρ·N_s·N`.
pub fn baseline_power_check(rho_p: f64, rho_d: f64, rho: f64, pilots: usize, data: usize) -> PowerCheck {
    let budget = rho * (pilots + data) as f64;
    let slack = budget - rho_p * pilots as f64 - rho_d * data as f64;
    PowerCheck { holds: slack >= -1e-12 * budget.max(1.0), slack }
}

/// Slot accounting for one round.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotCensus {
    /// Orthogonal pilot slots carrying no model symbol.
    pub pilot: usize,
    /// Data slots (including padding).
    pub data: usize,
    /// Pilot slots that simultaneously carry model symbols.
    pub superposed: usize,
    /// Slots that carry at least one model symbol.
    pub payload: usize,
}

impl SlotCensus {
    pub fn total(&self) -> usize {
        self.pilot + self.data + self.superposed
    }
}
