use std::collections::{BTreeMap, HashMap, VecDeque};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{FlashError, Geometry, VariationParams};

/// Scratch pages programmed per duration during calibration.
pub const CALIBRATION_PAGES: u32 = 8;
/// Targets for the programmed (zero-bit) fraction of the two interrupt levels.
pub const LOW_PROGRAMMED_TARGET: f64 = 0.20;
pub const HIGH_PROGRAMMED_TARGET: f64 = 0.80;
/// Largest accepted distance from a target on the tick grid.
pub const CALIBRATION_TOLERANCE: f64 = 0.10;

const LATENT_CACHE_PAGES: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProgramLevel {
    Low,
    High,
}

/// Interrupt durations chosen on the tick grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterruptCalibration {
    pub d_low: u32,
    pub d_high: u32,
    pub q_threshold: f64,
}

/// The data area of one page as read back from the array.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PageData {
    bytes: Vec<u8>,
}

impl PageData {
    pub fn new(bytes: Vec<u8>) -> Self {
        Self { bytes }
    }

    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn len(&self) -> usize {
        self.bytes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bytes.is_empty()
    }

    pub fn bit(&self, i: usize) -> bool {
        self.bytes[i >> 3] & (0x80 >> (i & 7)) != 0
    }

    pub fn ones_fraction(&self) -> f64 {
        let ones: u64 = self.bytes.iter().map(|b| u64::from(b.count_ones())).sum();
        ones as f64 / (self.bytes.len() * 8) as f64
    }
}

/// Per-cell fabrication state of one page.
#[derive(Debug, Clone, PartialEq)]
pub struct PageLatent {
    /// Program rate of each bit cell, charge units per tick.
    pub rates: Vec<f64>,
    /// Sorted bit positions of weak (read-unstable) cells.
    pub weak: Vec<u32>,
}

/// Command counters, used by the latency bench as a timing-free fingerprint.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCounters {
    pub programs: u64,
    pub reads: u64,
    pub erases: u64,
}

/// A simulated MLC NAND chip.
///
/// Latent per-cell state is a pure function of the fabrication seed and is
/// materialised page by page on demand. Every random draw made after
/// fabrication comes from the chip's noise stream, so replaying the same
/// command sequence reproduces every read.
pub struct FlashChip {
    pub(super) geometry: Geometry,
    pub(super) params: VariationParams,
    pub(super) fabrication_seed: u64,
    pub(super) noise_seed: u64,
    pub(super) calibration: InterruptCalibration,
    pub(super) erase_counts: Vec<u32>,
    /// Charges of pages programmed since their last erase, keyed by linear page.
    pub(super) charges: BTreeMap<u64, Vec<f64>>,
    pub(super) spare: BTreeMap<u64, Vec<u8>>,
    pub(super) noise: ChaCha8Rng,
    pub(super) counters: OpCounters,
    latent_cache: HashMap<u64, Arc<PageLatent>>,
    latent_order: VecDeque<u64>,
}

/// SplitMix64 finaliser, used to derive the default noise seed.
pub(crate) fn mix_seed(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl FlashChip {
    /// Fabricates and calibrates a chip; the noise seed is derived from `seed`.
    pub fn fabricate(
        geometry: Geometry,
        params: VariationParams,
        seed: u64,
    ) -> Result<Self, FlashError> {
        Self::fabricate_with_noise_seed(geometry, params, seed, mix_seed(seed ^ 0x6e6f_6973_6500))
    }

    pub fn fabricate_with_noise_seed(
        geometry: Geometry,
        params: VariationParams,
        fabrication_seed: u64,
        noise_seed: u64,
    ) -> Result<Self, FlashError> {
        let mut chip = Self::uncalibrated(geometry, params, fabrication_seed, noise_seed)?;
        chip.calibration = chip.calibrate_interrupts()?;
        Ok(chip)
    }

    pub(super) fn uncalibrated(
        geometry: Geometry,
        params: VariationParams,
        fabrication_seed: u64,
        noise_seed: u64,
    ) -> Result<Self, FlashError> {
        geometry.validate()?;
        params.validate()?;
        Ok(Self {
            geometry,
            params,
            fabrication_seed,
            noise_seed,
            calibration: InterruptCalibration {
                d_low: 0,
                d_high: 0,
                q_threshold: params.charge_threshold,
            },
            erase_counts: vec![0; geometry.blocks_per_chip as usize],
            charges: BTreeMap::new(),
            spare: BTreeMap::new(),
            noise: ChaCha8Rng::seed_from_u64(noise_seed),
            counters: OpCounters::default(),
            latent_cache: HashMap::new(),
            latent_order: VecDeque::new(),
        })
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn params(&self) -> &VariationParams {
        &self.params
    }

    pub fn fabrication_seed(&self) -> u64 {
        self.fabrication_seed
    }

    pub fn noise_seed(&self) -> u64 {
        self.noise_seed
    }

    pub fn calibration(&self) -> &InterruptCalibration {
        &self.calibration
    }

    pub fn counters(&self) -> OpCounters {
        self.counters
    }

    /// Scans the tick grid on the scratch block and picks the durations whose
    /// programmed fraction is nearest 20% (low) and 80% (high).
    ///
    /// The scratch block is left erased. On success the result is also stored
    /// as the chip's calibration.
    pub fn calibrate_interrupts(&mut self) -> Result<InterruptCalibration, FlashError> {
        let scratch = self.geometry.scratch_block();
        let pages = CALIBRATION_PAGES.min(self.geometry.pages_per_block);
        let mut fractions = Vec::with_capacity(self.params.ticks_per_program as usize);
        for ticks in 1..=self.params.ticks_per_program {
            self.erase_block(scratch)?;
            let mut zeros = 0.0;
            for page in 0..pages {
                self.program_page_ticks(scratch, page, ticks)?;
                zeros += 1.0 - self.read_page(scratch, page)?.ones_fraction();
            }
            fractions.push((ticks, zeros / f64::from(pages)));
        }
        self.erase_block(scratch)?;

        let nearest = |target: f64| {
            fractions
                .iter()
                .copied()
                .min_by(|a, b| (a.1 - target).abs().total_cmp(&(b.1 - target).abs()))
                .expect("tick grid is non-empty")
        };
        let (d_low, f_low) = nearest(LOW_PROGRAMMED_TARGET);
        let (d_high, f_high) = nearest(HIGH_PROGRAMMED_TARGET);
        if (f_low - LOW_PROGRAMMED_TARGET).abs() > CALIBRATION_TOLERANCE
            || (f_high - HIGH_PROGRAMMED_TARGET).abs() > CALIBRATION_TOLERANCE
        {
            return Err(FlashError::Calibration(format!(
                "no grid duration within {CALIBRATION_TOLERANCE} of targets: \
                 best low {f_low:.3} at {d_low} ticks, best high {f_high:.3} at {d_high} ticks"
            )));
        }
        if d_low >= d_high {
            return Err(FlashError::Calibration(format!(
                "low duration {d_low} is not shorter than high duration {d_high}"
            )));
        }
        let cal = InterruptCalibration {
            d_low,
            d_high,
            q_threshold: self.params.charge_threshold,
        };
        self.calibration = cal;
        Ok(cal)
    }

    pub fn erase_block(&mut self, block: u32) -> Result<(), FlashError> {
        self.geometry.check_block(block)?;
        let first = self.geometry.linear_page(block, 0);
        let range = first..first + u64::from(self.geometry.pages_per_block);
        let programmed: Vec<u64> = self.charges.range(range.clone()).map(|(k, _)| *k).collect();
        for lp in programmed {
            self.charges.remove(&lp);
        }
        let spare: Vec<u64> = self.spare.range(range).map(|(k, _)| *k).collect();
        for lp in spare {
            self.spare.remove(&lp);
        }
        let count = &mut self.erase_counts[block as usize];
        *count = count.saturating_add(1);
        self.counters.erases += 1;
        Ok(())
    }

    pub fn program_page_interrupted(
        &mut self,
        block: u32,
        page: u32,
        level: ProgramLevel,
    ) -> Result<(), FlashError> {
        let ticks = match level {
            ProgramLevel::Low => self.calibration.d_low,
            ProgramLevel::High => self.calibration.d_high,
        };
        if ticks == 0 {
            return Err(FlashError::State(
                "chip has no interrupt calibration".into(),
            ));
        }
        self.program_page_ticks(block, page, ticks)
    }

    /// Programs an erased page for `ticks` interrupt ticks.
    pub fn program_page_ticks(
        &mut self,
        block: u32,
        page: u32,
        ticks: u32,
    ) -> Result<(), FlashError> {
        self.geometry.check_page(block, page)?;
        let lp = self.geometry.linear_page(block, page);
        if self.charges.contains_key(&lp) {
            return Err(FlashError::State(format!(
                "page {block}/{page} programmed again without an erase"
            )));
        }
        let life = self.life_used(block)?;
        let duration = f64::from(ticks) * (1.0 + self.params.age_rate_alpha * life);
        let sigma = self.params.op_noise_sigma * (1.0 + self.params.age_noise_beta * life);
        let latent = self.latent(lp);
        let charges: Vec<f64> = if sigma > 0.0 {
            latent
                .rates
                .iter()
                .map(|r| {
                    let z: f64 = self.noise.sample(StandardNormal);
                    (r * duration + sigma * z).max(0.0)
                })
                .collect()
        } else {
            latent.rates.iter().map(|r| r * duration).collect()
        };
        self.charges.insert(lp, charges);
        self.counters.programs += 1;
        Ok(())
    }

    pub fn read_page(&mut self, block: u32, page: u32) -> Result<PageData, FlashError> {
        self.geometry.check_page(block, page)?;
        let lp = self.geometry.linear_page(block, page);
        let threshold = self.calibration.q_threshold;
        let band = self.params.weak_band;
        let flip = self.params.read_flip_prob;
        let mut bytes = self.digitize(lp);
        // Erased cells sit at zero charge, inside the band only for a degenerate threshold.
        if self.charges.contains_key(&lp) || threshold < band {
            let latent = self.latent(lp);
            let charges = self.charges.get(&lp);
            for &pos in &latent.weak {
                let q = charges.map_or(0.0, |c| c[pos as usize]);
                if (q - threshold).abs() < band && self.noise.random::<f64>() < flip {
                    bytes[(pos >> 3) as usize] ^= 0x80 >> (pos & 7);
                }
            }
        }
        self.counters.reads += 1;
        Ok(PageData::new(bytes))
    }

    /// Digitises the current charges without read noise.
    pub fn nominal_page(&self, block: u32, page: u32) -> Result<PageData, FlashError> {
        self.geometry.check_page(block, page)?;
        Ok(PageData::new(
            self.digitize(self.geometry.linear_page(block, page)),
        ))
    }

    fn digitize(&self, lp: u64) -> Vec<u8> {
        let n = self.geometry.data_bytes_per_page as usize;
        let threshold = self.calibration.q_threshold;
        match self.charges.get(&lp) {
            None => vec![0xFF; n],
            Some(charges) => charges
                .chunks_exact(8)
                .map(|cells| {
                    cells
                        .iter()
                        .fold(0u8, |acc, &q| (acc << 1) | u8::from(q < threshold))
                })
                .collect(),
        }
    }

    /// Charges of a page, `None` when erased.
    pub fn page_charges(&self, block: u32, page: u32) -> Result<Option<&[f64]>, FlashError> {
        self.geometry.check_page(block, page)?;
        Ok(self
            .charges
            .get(&self.geometry.linear_page(block, page))
            .map(Vec::as_slice))
    }

    pub fn is_page_erased(&self, block: u32, page: u32) -> Result<bool, FlashError> {
        Ok(self.page_charges(block, page)?.is_none())
    }

    pub fn erase_count(&self, block: u32) -> Result<u32, FlashError> {
        self.geometry.check_block(block)?;
        Ok(self.erase_counts[block as usize])
    }

    pub fn life_used(&self, block: u32) -> Result<f64, FlashError> {
        let count = self.erase_count(block)?;
        Ok((f64::from(count) / f64::from(self.params.pec_rating)).min(1.0))
    }

    /// Applies `cycles` full-program/erase pairs. A full program followed by
    /// an erase leaves no charge behind, so only the wear is recorded.
    pub fn age_block(&mut self, block: u32, cycles: u32) -> Result<(), FlashError> {
        self.geometry.check_block(block)?;
        if cycles == 0 {
            return Ok(());
        }
        self.erase_block(block)?;
        let count = &mut self.erase_counts[block as usize];
        *count = count.saturating_add(cycles - 1);
        self.counters.programs += u64::from(cycles);
        self.counters.erases += u64::from(cycles - 1);
        Ok(())
    }

    pub fn write_spare(&mut self, block: u32, page: u32, bytes: &[u8]) -> Result<(), FlashError> {
        self.geometry.check_page(block, page)?;
        let n = self.geometry.spare_bytes_per_page as usize;
        if bytes.len() > n {
            return Err(FlashError::Config(format!(
                "spare write of {} bytes exceeds {n}",
                bytes.len()
            )));
        }
        let lp = self.geometry.linear_page(block, page);
        let area = self.spare.entry(lp).or_insert_with(|| vec![0xFF; n]);
        // Programming only clears bits.
        for (cell, b) in area.iter_mut().zip(bytes) {
            *cell &= b;
        }
        Ok(())
    }

    pub fn read_spare(&self, block: u32, page: u32) -> Result<Vec<u8>, FlashError> {
        self.geometry.check_page(block, page)?;
        let n = self.geometry.spare_bytes_per_page as usize;
        Ok(self
            .spare
            .get(&self.geometry.linear_page(block, page))
            .cloned()
            .unwrap_or_else(|| vec![0xFF; n]))
    }

    /// Latent state of a page, regenerated from the fabrication stream.
    pub fn page_latent(&self, block: u32, page: u32) -> Result<PageLatent, FlashError> {
        self.geometry.check_page(block, page)?;
        Ok(self.generate_latent(self.geometry.linear_page(block, page)))
    }

    fn latent(&mut self, lp: u64) -> Arc<PageLatent> {
        if let Some(l) = self.latent_cache.get(&lp) {
            return Arc::clone(l);
        }
        let l = Arc::new(self.generate_latent(lp));
        if self.latent_order.len() >= LATENT_CACHE_PAGES {
            if let Some(old) = self.latent_order.pop_front() {
                self.latent_cache.remove(&old);
            }
        }
        self.latent_order.push_back(lp);
        self.latent_cache.insert(lp, Arc::clone(&l));
        l
    }

    fn generate_latent(&self, lp: u64) -> PageLatent {
        let p = &self.params;
        let bits = self.geometry.bits_per_page();
        let mut rng = ChaCha8Rng::seed_from_u64(self.fabrication_seed);
        rng.set_stream(lp);

        let mut rates = Vec::with_capacity(bits);
        for _ in 0..self.geometry.data_bytes_per_page {
            let coherent = rng.random::<f64>() < p.coherent_byte_fraction;
            let sigma = if coherent {
                p.coherent_byte_sigma
            } else {
                p.rate_sigma
            };
            for _ in 0..8 {
                let z: f64 = rng.sample(StandardNormal);
                rates.push((p.rate_mu + sigma * z).exp());
            }
        }

        let gaps = Exp::new(p.weak_gap_lambda).expect("lambda validated > 0");
        let mut weak = Vec::new();
        let mut pos = -1i64;
        loop {
            let gap: f64 = rng.sample(gaps);
            pos += (gap.ceil() as i64).max(1);
            if pos >= bits as i64 {
                break;
            }
            weak.push(pos as u32);
        }
        PageLatent { rates, weak }
    }
}

impl Clone for FlashChip {
    fn clone(&self) -> Self {
        Self {
            geometry: self.geometry,
            params: self.params,
            fabrication_seed: self.fabrication_seed,
            noise_seed: self.noise_seed,
            calibration: self.calibration,
            erase_counts: self.erase_counts.clone(),
            charges: self.charges.clone(),
            spare: self.spare.clone(),
            noise: self.noise.clone(),
            counters: self.counters,
            latent_cache: HashMap::new(),
            latent_order: VecDeque::new(),
        }
    }
}

impl std::fmt::Debug for FlashChip {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FlashChip")
            .field("geometry", &self.geometry)
            .field("fabrication_seed", &self.fabrication_seed)
            .field("calibration", &self.calibration)
            .field("programmed_pages", &self.charges.len())
            .finish_non_exhaustive()
    }
}
