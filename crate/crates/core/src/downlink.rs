//! Downlink signaling: orthogonal pilots, product superposition, additive
//! superposition; equivalent-channel MMSE, decoding, rates and the
//! closed-form pilot/data power split.
//!
//! Model symbols are real. Data-phase symbols are sent as-is (unit average
//! energy after [`SymbolCodec`] scaling); pilot-embedded symbols are lifted off
//! zero by a unit imaginary offset so the diagonal embedding stays invertible.

use crate::channel::{awgn, ChannelRealization, GridDims};
use crate::error::{invalid, Error, Result};
use crate::grid::{baseline_power_check, PilotLattice, PlacementMap, SlotKind, Strip};
use crate::linalg::{least_squares, CMat};
use crate::math;
use crate::rng::SimRng;
use crate::stats::Running;
use crate::C64;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

const ZERO: C64 = C64::new(0.0, 0.0);
const DECODE_FLOOR: f64 = 1e-12;
const RIDGE: f64 = 1e-12;

/// Unitary `M×M` pilot matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotMatrix(CMat);

impl PilotMatrix {
    pub fn new(x: CMat) -> Result<Self> {
        if x.rows != x.cols || x.rows == 0 {
            return Err(invalid("pilot_matrix", "must be square and non-empty"));
        }
        if x.unitarity_defect() > 1e-12 {
            return Err(invalid("pilot_matrix", "not unitary"));
        }
        Ok(Self(x))
    }

    pub fn dft(m: usize) -> Self {
        Self(CMat::dft(m))
    }

    pub fn antennas(&self) -> usize {
        self.0.rows
    }

    pub fn matrix(&self) -> &CMat {
        &self.0
    }
}

/// Real model vector ↔ unit-energy transmit symbols, plus the round metadata.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymbolCodec {
    /// RMS of the model vector (1 when the model is all zeros).
    pub scale: f64,
}

impl SymbolCodec {
    pub fn for_model(theta: &[f64]) -> Self {
        let rms = math::sqrt(math::norm_sq(theta) / theta.len().max(1) as f64);
        Self { scale: if rms > 0.0 && rms.is_finite() { rms } else { 1.0 } }
    }

    /// Data-phase symbol for a parameter.
    pub fn data(&self, x: f64) -> C64 {
        C64::new(x / self.scale, 0.0)
    }

    /// Pilot-embedded symbol `(u + j)/√2`; never zero.
    pub fn embedded(&self, x: f64) -> C64 {
        C64::new(x / self.scale, 1.0) * core::f64::consts::FRAC_1_SQRT_2
    }

    pub fn decode_data(&self, z: C64) -> f64 {
        z.re * self.scale
    }

    pub fn decode_embedded(&self, z: C64) -> f64 {
        z.re * core::f64::consts::SQRT_2 * self.scale
    }
}

/// One `(sub-block, subcarrier)` transmission `[√ρ_p X_pθ X_p, √ρ_d X_pθ X_dθ]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubBlockSignal {
    pub embedding: Vec<C64>,
    pub data: CMat,
    pub rho_p: f64,
    pub rho_d: f64,
    pub matrix: CMat,
}

/// Product-superposition sub-block. `embedded` are the `M` diagonal entries of
/// `X_pθ`; `data` the `M·(L_ts − M)` data-phase symbols, column-wise.
pub fn transmit_superposed(
    embedded: &[C64],
    data: &[C64],
    x_p: &PilotMatrix,
    rho_p: f64,
    rho_d: f64,
) -> Result<SubBlockSignal> {
    let m = x_p.antennas();
    if embedded.len() != m {
        return Err(Error::DimensionMismatch { expected: m, found: embedded.len() });
    }
    if data.is_empty() || !data.len().is_multiple_of(m) {
        return Err(invalid("data", "need a positive multiple of M data-phase symbols"));
    }
    if rho_p < 0.0 || rho_d < 0.0 {
        return Err(invalid("power", "must be non-negative"));
    }
    if embedded.iter().any(|e| e.norm() == 0.0) {
        return Err(Error::SingularEmbedding);
    }
    let cols = data.len() / m;
    let mut xd = CMat::zeros(m, cols);
    for (k, &v) in data.iter().enumerate() {
        xd[(k % m, k / m)] = v;
    }
    let xpt = CMat::diag(embedded);
    let pilot = xpt.matmul(x_p.matrix()).scale(math::sqrt(rho_p));
    let payload = xpt.matmul(&xd).scale(math::sqrt(rho_d));
    let mut matrix = CMat::zeros(m, m + cols);
    for r in 0..m {
        for c in 0..m {
            matrix[(r, c)] = pilot[(r, c)];
        }
        for c in 0..cols {
            matrix[(r, m + c)] = payload[(r, c)];
        }
    }
    Ok(SubBlockSignal { embedding: embedded.to_vec(), data: xd, rho_p, rho_d, matrix })
}

/// Transmit vectors (length `M`) for every resource element of the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TxGrid {
    pub dims: GridDims,
    values: Vec<C64>,
}

impl TxGrid {
    pub fn zeros(dims: GridDims) -> Self {
        Self { dims, values: vec![ZERO; dims.slots() * dims.antennas] }
    }

    fn offset(&self, n: usize, m: usize) -> usize {
        (n * self.dims.subcarriers + m) * self.dims.antennas
    }

    pub fn at(&self, n: usize, m: usize) -> &[C64] {
        let o = self.offset(n, m);
        &self.values[o..o + self.dims.antennas]
    }

    pub fn at_mut(&mut self, n: usize, m: usize) -> &mut [C64] {
        let o = self.offset(n, m);
        let a = self.dims.antennas;
        &mut self.values[o..o + a]
    }

    /// Average transmit energy per resource element.
    pub fn mean_energy(&self) -> f64 {
        self.values.iter().map(|z| z.norm_sqr()).sum::<f64>() / self.dims.slots() as f64
    }
}

/// Unit-norm beam used for single-stream symbols and lattice pilots.
fn unit_beam(x_p: &PilotMatrix, column: usize) -> Vec<C64> {
    let m = x_p.antennas();
    (0..m).map(|r| x_p.matrix()[(r, column % m)]).collect()
}

/// Orthogonal baseline: pilots `√ρ_p x_p` on the lattice, `√ρ_d x_d` on the
/// first `symbols.len()` data positions (time-major).
pub fn transmit_baseline(
    symbols: &[C64],
    lattice: &PilotLattice,
    dims: GridDims,
    x_p: &PilotMatrix,
    rho_p: f64,
    rho_d: f64,
    rho: f64,
) -> Result<TxGrid> {
    lattice_grid(symbols, lattice, dims, x_p, rho_p, rho_d, rho, false)
}

/// Additive superposition: like the baseline, but pilot slots also carry a
/// model symbol, `√ρ_p x_p + √ρ_d x_d`. Symbols fill pilot and data slots in
/// time-major order.
pub fn transmit_additive(
    symbols: &[C64],
    lattice: &PilotLattice,
    dims: GridDims,
    x_p: &PilotMatrix,
    rho_p: f64,
    rho_d: f64,
    rho: f64,
) -> Result<TxGrid> {
    lattice_grid(symbols, lattice, dims, x_p, rho_p, rho_d, rho, true)
}

#[allow(clippy::too_many_arguments)]
fn lattice_grid(
    symbols: &[C64],
    lattice: &PilotLattice,
    dims: GridDims,
    x_p: &PilotMatrix,
    rho_p: f64,
    rho_d: f64,
    rho: f64,
    additive: bool,
) -> Result<TxGrid> {
    if x_p.antennas() != dims.antennas {
        return Err(Error::DimensionMismatch { expected: dims.antennas, found: x_p.antennas() });
    }
    let pilots = lattice.positions(dims);
    let data_slots = dims.slots() - pilots.len();
    let carrying = if additive { dims.slots() } else { data_slots };
    if symbols.len() > carrying {
        return Err(Error::CapacityExceeded { required: symbols.len(), available: carrying });
    }
    let check = if additive {
        // Data power is spent on every slot, pilot power on pilot slots only.
        baseline_power_check(rho_p + rho_d, rho_d, rho, pilots.len(), data_slots)
    } else {
        baseline_power_check(rho_p, rho_d, rho, pilots.len(), data_slots)
    };
    if !check.holds {
        return Err(Error::PowerConstraintViolated { used: rho * dims.slots() as f64 - check.slack, budget: rho * dims.slots() as f64 });
    }
    let mut grid = TxGrid::zeros(dims);
    let (sp, sd) = (math::sqrt(rho_p), math::sqrt(rho_d));
    let data_beam = unit_beam(x_p, 0);
    let mut next = 0;
    let mut pilot_index = 0;
    for n in 0..dims.symbols {
        for m in 0..dims.subcarriers {
            let is_pilot = lattice.is_pilot(n, m);
            let slot = grid.at_mut(n, m);
            if is_pilot {
                let beam = unit_beam(x_p, pilot_index);
                pilot_index += 1;
                for (s, b) in slot.iter_mut().zip(&beam) {
                    *s = b * sp;
                }
                if !additive {
                    continue;
                }
            }
            if let Some(&x) = symbols.get(next) {
                for (s, b) in slot.iter_mut().zip(&data_beam) {
                    *s += b * x * sd;
                }
                next += 1;
            }
        }
    }
    Ok(grid)
}

/// Product-superposition super-block on the whole grid.
///
/// Regular strips follow the sub-block layout; on pilot subcarriers every slot
/// carries its own pilot-embedded symbol (pilot-phase power on the first `M`
/// slots, data power on the rest). Slots outside the placement stay silent.
pub fn superposed_grid(
    embedded: &[C64],
    data: &[C64],
    map: &PlacementMap,
    dims: GridDims,
    x_p: &PilotMatrix,
    rho_p: f64,
    rho_d: f64,
) -> Result<TxGrid> {
    let m_ant = dims.antennas;
    if x_p.antennas() != m_ant {
        return Err(Error::DimensionMismatch { expected: m_ant, found: x_p.antennas() });
    }
    if embedded.len() != map.len() || data.len() != map.len() {
        return Err(Error::DimensionMismatch { expected: map.len(), found: embedded.len().min(data.len()) });
    }
    let mut grid = TxGrid::zeros(dims);
    for strip in &map.strips {
        let idx = strip.symbols.clone();
        let entries = &map.entries[idx.clone()];
        if strip.pilot_column {
            for (k, e) in entries.iter().enumerate() {
                let u = e.n - strip.time_start;
                let power = if u < m_ant { rho_p } else { rho_d };
                let beam = unit_beam(x_p, u);
                let sym = embedded[idx.start + k];
                for (s, b) in grid.at_mut(e.n, e.m).iter_mut().zip(&beam) {
                    *s += b * sym * math::sqrt(power);
                }
            }
            continue;
        }
        let phase = entries.iter().filter(|e| e.kind == SlotKind::PilotSlotEmbedded).count();
        if phase == 0 {
            // Training-free strip: plain data symbols.
            for (k, e) in entries.iter().enumerate() {
                let beam = unit_beam(x_p, e.layer);
                let sym = data[idx.start + k];
                for (s, b) in grid.at_mut(e.n, e.m).iter_mut().zip(&beam) {
                    *s += b * sym * math::sqrt(rho_d);
                }
            }
            continue;
        }
        let mut diag = vec![C64::new(1.0, 0.0); m_ant];
        let mut xd = Vec::new();
        for (k, e) in entries.iter().enumerate() {
            match e.kind {
                SlotKind::PilotSlotEmbedded => diag[e.layer] = embedded[idx.start + k],
                SlotKind::DataSlot => xd.push(data[idx.start + k]),
            }
        }
        // Pad the data phase of a partially filled strip with zeros.
        xd.resize(m_ant * (strip.len - m_ant), ZERO);
        let sig = transmit_superposed(&diag, &xd, x_p, rho_p, rho_d)?;
        for c in 0..strip.len {
            let slot = grid.at_mut(strip.time_start + c, strip.subcarrier);
            for (r, s) in slot.iter_mut().enumerate().take(m_ant) {
                *s = sig.matrix[(r, c)];
            }
        }
    }
    Ok(grid)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReceptionStatus {
    Received,
    Unreceivable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reception {
    pub y: Vec<C64>,
    pub status: ReceptionStatus,
}

/// `y = hᴴ x + w` over one strip; flagged unreceivable when the device's
/// coherence tile does not contain the whole strip.
pub fn receive(tx: &TxGrid, strip: &Strip, realization: &ChannelRealization, seed: u64) -> Result<Reception> {
    let times = strip.time_start..strip.time_start + strip.len;
    let status = if realization.profile.covers(times.clone(), strip.subcarrier..strip.subcarrier + 1) {
        ReceptionStatus::Received
    } else {
        ReceptionStatus::Unreceivable
    };
    let noise = awgn(strip.len, realization.noise_variance, seed)?;
    let mut y = Vec::with_capacity(strip.len);
    for (k, n) in times.enumerate() {
        y.push(project(realization.channel_at(n, strip.subcarrier)?, tx.at(n, strip.subcarrier)) + noise[k]);
    }
    Ok(Reception { y, status })
}

/// Received samples for every resource element, time-major.
pub fn receive_grid(tx: &TxGrid, realization: &ChannelRealization, seed: u64) -> Result<Vec<C64>> {
    let dims = tx.dims;
    let noise = awgn(dims.slots(), realization.noise_variance, seed)?;
    let mut y = Vec::with_capacity(dims.slots());
    for n in 0..dims.symbols {
        for m in 0..dims.subcarriers {
            y.push(project(realization.channel_at(n, m)?, tx.at(n, m)) + noise[n * dims.subcarriers + m]);
        }
    }
    Ok(y)
}

/// `hᴴ x`.
fn project(h: &[C64], x: &[C64]) -> C64 {
    h.iter().zip(x).map(|(a, b)| a.conj() * b).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquivalentChannelEstimate {
    pub f_bar: Vec<C64>,
    pub error_variance: f64,
    pub shrinkage: f64,
}

/// MMSE estimate of `f = hᴴ X_pθ` from the pilot phase: de-rotate by `X_pᴴ/√ρ_p`,
/// then shrink by `Mρ_p/(Mρ_p + σ²)`. Error variance `Mσ²/(Mρ_p + σ²)` per entry.
pub fn estimate_equivalent_channel(
    y_pilot: &[C64],
    x_p: &PilotMatrix,
    rho_p: f64,
    noise_var: f64,
) -> Result<EquivalentChannelEstimate> {
    let m = x_p.antennas();
    if y_pilot.len() != m {
        return Err(Error::DimensionMismatch { expected: m, found: y_pilot.len() });
    }
    if noise_var < 0.0 {
        return Err(Error::NegativeVariance(noise_var));
    }
    if rho_p <= 0.0 {
        return Err(Error::UndefinedEstimator);
    }
    let mf = m as f64;
    let shrinkage = mf * rho_p / (mf * rho_p + noise_var);
    let error_variance = mf * noise_var / (mf * rho_p + noise_var);
    let derot = x_p.matrix().adjoint().left_mul(y_pilot);
    let f_bar = derot.iter().map(|z| z * (shrinkage / math::sqrt(rho_p))).collect();
    Ok(EquivalentChannelEstimate { f_bar, error_variance, shrinkage })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StaticDecode {
    /// Diagonal of `X_pθ`.
    pub embedded: Vec<C64>,
    /// Data-phase symbols, column-wise.
    pub data: Vec<C64>,
}

/// Static-device decode of one strip `y` (length `L_ts`) with known `h`.
pub fn decode_static(y: &[C64], x_p: &PilotMatrix, h: &[C64], rho_p: f64, rho_d: f64) -> Result<StaticDecode> {
    let m = x_p.antennas();
    if h.len() != m {
        return Err(Error::DimensionMismatch { expected: m, found: h.len() });
    }
    if y.len() <= m {
        return Err(Error::InfeasibleGeometry { subblock_len: y.len(), antennas: m });
    }
    let sp = math::sqrt(rho_p);
    let sd = math::sqrt(rho_d);
    // y_p X_pᴴ = √ρ_p hᴴ X_pθ, entry-wise conj(h_i)·e_i.
    let z = x_p.matrix().adjoint().left_mul(&y[..m]);
    let mut embedded = Vec::with_capacity(m);
    for (zi, hi) in z.iter().zip(h) {
        let g = hi.conj() * sp;
        if g.norm() < DECODE_FLOOR {
            return Err(Error::DecodeSingular);
        }
        embedded.push(zi / g);
    }
    // Data columns: y_c = √ρ_d f x_c with f = hᴴ X_pθ.
    let f: Vec<C64> = h.iter().zip(&embedded).map(|(hi, e)| hi.conj() * e * sd).collect();
    let mut data = Vec::with_capacity(m * (y.len() - m));
    if m == 1 {
        if f[0].norm() < DECODE_FLOOR {
            return Err(Error::DecodeSingular);
        }
        data.extend(y[m..].iter().map(|yc| yc / f[0]));
    } else {
        let a = CMat { rows: 1, cols: m, data: f };
        if a.frobenius() < DECODE_FLOOR {
            return Err(Error::DecodeSingular);
        }
        for yc in &y[m..] {
            data.extend(least_squares(&a, &[*yc], RIDGE)?);
        }
    }
    Ok(StaticDecode { embedded, data })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DynamicDecode {
    pub symbols: Vec<C64>,
    pub distortion: f64,
}

/// `c = ρ_d/(ρ_d σ_e² + σ²)`.
pub fn effective_gain(rho_d: f64, sigma_e2: f64, noise_var: f64) -> f64 {
    rho_d / (rho_d * sigma_e2 + noise_var)
}

/// Linear-MMSE equalisation of data-phase samples with the estimated `f̄`.
/// Reported distortion `v = 1/(1 + c‖f̄‖²)`.
pub fn decode_dynamic(y_data: &[C64], f_bar: &[C64], rho_d: f64, sigma_e2: f64, noise_var: f64) -> DynamicDecode {
    let m = f_bar.len();
    let c = effective_gain(rho_d, sigma_e2, noise_var);
    let fn2: f64 = f_bar.iter().map(|z| z.norm_sqr()).sum();
    let sd = math::sqrt(rho_d);
    let denom = rho_d * fn2 + rho_d * m as f64 * sigma_e2 + noise_var;
    let mut symbols = Vec::with_capacity(m * y_data.len());
    for y in y_data {
        for f in f_bar {
            symbols.push(if denom > 0.0 { f.conj() * y * (sd / denom) } else { ZERO });
        }
    }
    DynamicDecode { symbols, distortion: 1.0 / (1.0 + c * fn2) }
}

/// Scalar LMMSE estimate of `g` from `n` pilot observations `y_j = √ρ_p g + n_j`,
/// `g ~ CN(0,1)`, `Var n_j = noise` (noise plus any data interference).
pub fn estimate_from_pilots(ys: &[C64], rho_p: f64, noise: f64) -> Result<(C64, f64)> {
    if ys.is_empty() {
        return Err(invalid("pilots", "need at least one observation"));
    }
    if rho_p <= 0.0 && noise <= 0.0 {
        return Err(Error::UndefinedEstimator);
    }
    let n = ys.len() as f64;
    let sum: C64 = ys.iter().sum();
    let denom = n * rho_p + noise;
    Ok((sum * (math::sqrt(rho_p) / denom), noise / denom))
}

/// Scalar LMMSE symbol estimate for `y = amp·g·x + noise`, with `g` replaced by
/// its estimate `ĝ` whose error variance is `err`. Returns `(x̂, distortion)`.
pub fn equalize(y: C64, g_hat: C64, amp: f64, err: f64, noise: f64) -> (C64, f64) {
    let n_eff = amp * amp * err + noise;
    let s = amp * amp * g_hat.norm_sqr();
    let denom = s + n_eff;
    if denom <= 0.0 {
        return (ZERO, 1.0);
    }
    (g_hat.conj() * y * (amp / denom), n_eff / denom)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
}

fn chi2_complex(rng: &mut SimRng, m: usize, var: f64) -> f64 {
    (0..m).map(|_| rng.complex_normal(var).norm_sqr()).sum()
}

/// Monte-Carlo `E[1/(1 + c‖f̄‖²)]` with `f̄ ~ CN(0, (M − σ_e²) I_M)`.
pub fn expected_distortion(
    rho_d: f64,
    sigma_e2: f64,
    noise_var: f64,
    m: usize,
    n_mc: usize,
    seed: u64,
) -> Result<McEstimate> {
    if n_mc == 0 {
        return Err(Error::TooFewTrials { n: 0, min: 1 });
    }
    let c = effective_gain(rho_d, sigma_e2, noise_var);
    let var = (m as f64 - sigma_e2).max(0.0);
    let mut rng = SimRng::new(seed);
    let mut acc = Running::default();
    for _ in 0..n_mc {
        let f2 = chi2_complex(&mut rng, m, var);
        acc.push(if c.is_infinite() { if f2 > 0.0 { 0.0 } else { 1.0 } } else { 1.0 / (1.0 + c * f2) });
    }
    Ok(McEstimate { mean: acc.mean(), std_error: acc.std_error() })
}

/// Static-device rate per channel use, Monte Carlo over `‖h‖² ~ Gamma(M, 1)`.
pub fn rate_static(rho_p: f64, rho_d: f64, m: usize, lts: usize, noise_var: f64, n_mc: usize, seed: u64) -> Result<McEstimate> {
    if lts <= m {
        return Err(Error::InfeasibleGeometry { subblock_len: lts, antennas: m });
    }
    if n_mc == 0 {
        return Err(Error::TooFewTrials { n: 0, min: 1 });
    }
    let (mf, lf) = (m as f64, lts as f64);
    let mut rng = SimRng::new(seed);
    let mut acc = Running::default();
    for _ in 0..n_mc {
        let h2 = chi2_complex(&mut rng, m, 1.0);
        let r = mf / lf * math::log2(1.0 + rho_p * h2 / (mf * noise_var))
            + (lf - mf) / lf * math::log2(1.0 + rho_d * h2 / (mf * noise_var));
        acc.push(r);
    }
    Ok(McEstimate { mean: acc.mean(), std_error: acc.std_error() })
}

/// `γ_eff = ρ_d(σ² + Mρ_p) / (σ²(σ² + Mρ_p + Mρ_d))`, equal to `c` with the MMSE `σ_e²`.
pub fn gamma_eff(rho_p: f64, rho_d: f64, m: usize, noise_var: f64) -> f64 {
    let mf = m as f64;
    rho_d * (noise_var + mf * rho_p) / (noise_var * (noise_var + mf * rho_p + mf * rho_d))
}

/// Dynamic-device rate: `(L_ts − M)/L_ts · E[log2(1 + c‖f̄‖²)]`.
pub fn rate_dynamic(rho_p: f64, rho_d: f64, m: usize, lts: usize, noise_var: f64, n_mc: usize, seed: u64) -> Result<McEstimate> {
    if lts <= m {
        return Ok(McEstimate { mean: 0.0, std_error: 0.0 });
    }
    if n_mc == 0 {
        return Err(Error::TooFewTrials { n: 0, min: 1 });
    }
    let mf = m as f64;
    let sigma_e2 = mf * noise_var / (mf * rho_p + noise_var);
    let c = effective_gain(rho_d, sigma_e2, noise_var);
    let var = (mf - sigma_e2).max(0.0);
    let pre = (lts - m) as f64 / lts as f64;
    let mut rng = SimRng::new(seed);
    let mut acc = Running::default();
    for _ in 0..n_mc {
        acc.push(pre * math::log2(1.0 + c * chi2_complex(&mut rng, m, var)));
    }
    Ok(McEstimate { mean: acc.mean(), std_error: acc.std_error() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerSplit {
    pub rho_p: f64,
    pub rho_d: f64,
}

/// Closed-form pilot/data split maximising the dynamic-device effective SNR
/// under `M(ρ_p + ρ_d(L_ts − M)) = ρ L_ts`.
pub fn optimal_power_split(rho: f64, m: usize, lts: usize, noise_var: f64) -> Result<PowerSplit> {
    if lts <= m {
        return Err(Error::InfeasibleGeometry { subblock_len: lts, antennas: m });
    }
    if !(rho > 0.0) {
        return Err(invalid("rho", "must be positive"));
    }
    if noise_var < 0.0 {
        return Err(Error::NegativeVariance(noise_var));
    }
    let (mf, lf) = (m as f64, lts as f64);
    let r = math::sqrt(lf - mf);
    let rho_d = (noise_var + rho * lf) / (mf * r * (1.0 + r));
    let rho_p = rho * lf / mf - rho_d * (lf - mf);
    if !(rho_p > 0.0) {
        return Err(Error::NegativePilotPower { rho_p });
    }
    Ok(PowerSplit { rho_p, rho_d })
}

/// Reciprocal effective SNR `σ²/ρ_d + σ²M/(σ² + Mρ_p)` on the binding constraint.
pub fn split_objective(rho_d: f64, rho: f64, m: usize, lts: usize, noise_var: f64) -> f64 {
    let (mf, lf) = (m as f64, lts as f64);
    let rho_p = rho * lf / mf - rho_d * (lf - mf);
    noise_var / rho_d + noise_var * mf / (noise_var + mf * rho_p)
}
