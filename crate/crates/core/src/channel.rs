//! Block-fading channels with per-device coherence tiles, and AWGN.

use crate::error::{invalid, Error, Result};
use crate::rng::SimRng;
use crate::C64;
use alloc::vec::Vec;
use core::ops::Range;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeviceClass {
    Static,
    Dynamic,
}

/// A device's coherence geometry: tiles of `coherence_time × coherence_bandwidth`
/// resource elements, shifted by the offsets relative to the super-block origin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoherenceProfile {
    pub device_id: u32,
    pub coherence_time: usize,
    pub coherence_bandwidth: usize,
    pub class: DeviceClass,
    #[serde(default)]
    pub offset_time: usize,
    #[serde(default)]
    pub offset_freq: usize,
}

impl CoherenceProfile {
    pub fn new(
        device_id: u32,
        coherence_time: usize,
        coherence_bandwidth: usize,
        class: DeviceClass,
    ) -> Result<Self> {
        Self { device_id, coherence_time, coherence_bandwidth, class, offset_time: 0, offset_freq: 0 }
            .validated()
    }

    pub fn with_offsets(mut self, offset_time: usize, offset_freq: usize) -> Result<Self> {
        self.offset_time = offset_time;
        self.offset_freq = offset_freq;
        self.validated()
    }

    pub fn validated(self) -> Result<Self> {
        if self.coherence_time == 0 || self.coherence_bandwidth == 0 {
            return Err(invalid("coherence", "block lengths must be at least 1"));
        }
        if self.offset_time >= self.coherence_time || self.offset_freq >= self.coherence_bandwidth {
            return Err(invalid("offset", "offsets must be smaller than the block lengths"));
        }
        Ok(self)
    }

    pub fn is_static(&self) -> bool {
        self.class == DeviceClass::Static
    }

    /// `L_t · L_f`, the scheduling priority.
    pub fn block_area(&self) -> usize {
        self.coherence_time * self.coherence_bandwidth
    }

    fn shift_t(&self) -> usize {
        (self.coherence_time - self.offset_time) % self.coherence_time
    }

    fn shift_f(&self) -> usize {
        (self.coherence_bandwidth - self.offset_freq) % self.coherence_bandwidth
    }

    /// Tile coordinates of resource element `(n, m)`.
    pub fn tile_of(&self, n: usize, m: usize) -> (usize, usize) {
        ((n + self.shift_t()) / self.coherence_time, (m + self.shift_f()) / self.coherence_bandwidth)
    }

    /// Whether the rectangle `times × freqs` lies inside a single tile.
    pub fn covers(&self, times: Range<usize>, freqs: Range<usize>) -> bool {
        if times.is_empty() || freqs.is_empty() {
            return true;
        }
        self.tile_of(times.start, freqs.start) == self.tile_of(times.end - 1, freqs.end - 1)
    }
}

/// Grid dimensions seen by the channel: `symbols × subcarriers` with `antennas` at the PS.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridDims {
    pub symbols: usize,
    pub subcarriers: usize,
    pub antennas: usize,
}

impl GridDims {
    pub fn new(symbols: usize, subcarriers: usize, antennas: usize) -> Result<Self> {
        if symbols == 0 || subcarriers == 0 || antennas == 0 {
            return Err(Error::EmptyGrid);
        }
        Ok(Self { symbols, subcarriers, antennas })
    }

    pub fn slots(&self) -> usize {
        self.symbols * self.subcarriers
    }
}

/// One `h ∈ C^M` per coherence tile intersecting the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub profile: CoherenceProfile,
    pub dims: GridDims,
    pub noise_variance: f64,
    pub seed: u64,
    tiles_t: usize,
    tiles_f: usize,
    gains: Vec<C64>,
}

impl ChannelRealization {
    pub fn num_blocks(&self) -> usize {
        self.tiles_t * self.tiles_f
    }

    pub fn tile_grid(&self) -> (usize, usize) {
        (self.tiles_t, self.tiles_f)
    }

    pub fn block_index(&self, n: usize, m: usize) -> Result<usize> {
        self.check(n, m)?;
        let (a, b) = self.profile.tile_of(n, m);
        Ok(a * self.tiles_f + b)
    }

    /// `h` for the tile containing `(n, m)`.
    pub fn channel_at(&self, n: usize, m: usize) -> Result<&[C64]> {
        let b = self.block_index(n, m)?;
        let ant = self.dims.antennas;
        Ok(&self.gains[b * ant..(b + 1) * ant])
    }

    pub fn block(&self, index: usize) -> &[C64] {
        let ant = self.dims.antennas;
        &self.gains[index * ant..(index + 1) * ant]
    }

    fn check(&self, n: usize, m: usize) -> Result<()> {
        if n >= self.dims.symbols || m >= self.dims.subcarriers {
            return Err(Error::OutOfRange { n, m, rows: self.dims.symbols, cols: self.dims.subcarriers });
        }
        Ok(())
    }
}

/// Draw an i.i.d. CN(0, I_M) vector for every tile of `profile` that meets the grid.
pub fn sample_channel(
    profile: &CoherenceProfile,
    dims: GridDims,
    noise_variance: f64,
    seed: u64,
) -> Result<ChannelRealization> {
    let dims = GridDims::new(dims.symbols, dims.subcarriers, dims.antennas)?;
    if noise_variance < 0.0 {
        return Err(Error::NegativeVariance(noise_variance));
    }
    let profile = profile.validated()?;
    let (lt, lf) = profile.tile_of(dims.symbols - 1, dims.subcarriers - 1);
    let (tiles_t, tiles_f) = (lt + 1, lf + 1);
    let mut rng = SimRng::new(seed);
    let gains = (0..tiles_t * tiles_f * dims.antennas).map(|_| rng.complex_normal(1.0)).collect();
    Ok(ChannelRealization { profile, dims, noise_variance, seed, tiles_t, tiles_f, gains })
}

/// `len` samples of CN(0, variance). Zero variance yields exact zeros.
pub fn awgn(len: usize, variance: f64, seed: u64) -> Result<Vec<C64>> {
    if variance < 0.0 {
        return Err(Error::NegativeVariance(variance));
    }
    if variance == 0.0 {
        return Ok(alloc::vec![C64::new(0.0, 0.0); len]);
    }
    let mut rng = SimRng::new(seed);
    Ok((0..len).map(|_| rng.complex_normal(variance)).collect())
}
