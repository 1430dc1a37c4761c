//! Versioned binary chip snapshots.
//!
//! Layout (all integers little-endian, floats as their IEEE-754 bit pattern):
//!
//! ```text
//! "HSIM" | version u16
//! geometry: blocks u32, pages u32, data bytes u32, spare bytes u32
//! params: 11 x f64, pec_rating u32, ticks_per_program u32, charge_threshold f64
//! seeds: fabrication u64, noise u64
//! calibration: d_low u32, d_high u32, q_threshold f64
//! erase counts: blocks x u32
//! noise stream: seed [u8; 32], stream u64, word position u128
//! counters: programs u64, reads u64, erases u64
//! programmed pages: count u32, then per page: linear index u64, bits x f64
//! spare areas: count u32, then per page: linear index u64, spare bytes
//! ```
//!
//! Latent cell state is not stored: it is regenerated from the fabrication
//! seed, which is part of the header.

use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{FlashChip, FlashError, Geometry, InterruptCalibration, OpCounters, VariationParams};

pub const SNAPSHOT_MAGIC: &[u8; 4] = b"HSIM";
pub const SNAPSHOT_VERSION: u16 = 1;

struct Writer(Vec<u8>);

impl Writer {
    fn u16(&mut self, v: u16) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u128(&mut self, v: u128) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.u64(v.to_bits());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], FlashError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| FlashError::Snapshot("truncated snapshot".into()))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }
    fn array<const N: usize>(&mut self) -> Result<[u8; N], FlashError> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }
    fn u16(&mut self) -> Result<u16, FlashError> {
        self.array().map(u16::from_le_bytes)
    }
    fn u32(&mut self) -> Result<u32, FlashError> {
        self.array().map(u32::from_le_bytes)
    }
    fn u64(&mut self) -> Result<u64, FlashError> {
        self.array().map(u64::from_le_bytes)
    }
    fn u128(&mut self) -> Result<u128, FlashError> {
        self.array().map(u128::from_le_bytes)
    }
    fn f64(&mut self) -> Result<f64, FlashError> {
        self.u64().map(f64::from_bits)
    }
}

impl FlashChip {
    pub fn to_snapshot_bytes(&self) -> Vec<u8> {
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(SNAPSHOT_MAGIC);
        w.u16(SNAPSHOT_VERSION);

        let g = &self.geometry;
        for v in [
            g.blocks_per_chip,
            g.pages_per_block,
            g.data_bytes_per_page,
            g.spare_bytes_per_page,
        ] {
            w.u32(v);
        }

        let p = &self.params;
        for v in [
            p.rate_mu,
            p.rate_sigma,
            p.coherent_byte_fraction,
            p.coherent_byte_sigma,
            p.op_noise_sigma,
            p.weak_band,
            p.weak_gap_lambda,
            p.read_flip_prob,
            p.age_rate_alpha,
            p.age_noise_beta,
        ] {
            w.f64(v);
        }
        w.u32(p.pec_rating);
        w.u32(p.ticks_per_program);
        w.f64(p.charge_threshold);

        w.u64(self.fabrication_seed);
        w.u64(self.noise_seed);

        w.u32(self.calibration.d_low);
        w.u32(self.calibration.d_high);
        w.f64(self.calibration.q_threshold);

        for &c in &self.erase_counts {
            w.u32(c);
        }

        w.0.extend_from_slice(&self.noise.get_seed());
        w.u64(self.noise.get_stream());
        w.u128(self.noise.get_word_pos());

        w.u64(self.counters.programs);
        w.u64(self.counters.reads);
        w.u64(self.counters.erases);

        w.u32(self.charges.len() as u32);
        for (&lp, charges) in &self.charges {
            w.u64(lp);
            for &q in charges {
                w.f64(q);
            }
        }

        w.u32(self.spare.len() as u32);
        for (&lp, bytes) in &self.spare {
            w.u64(lp);
            w.0.extend_from_slice(bytes);
        }
        w.0
    }

    pub fn from_snapshot_bytes(buf: &[u8]) -> Result<Self, FlashError> {
        let mut r = Reader { buf, pos: 0 };
        if r.take(4)? != SNAPSHOT_MAGIC {
            return Err(FlashError::Snapshot("bad magic".into()));
        }
        let version = r.u16()?;
        if version != SNAPSHOT_VERSION {
            return Err(FlashError::Snapshot(format!(
                "unsupported snapshot version {version}"
            )));
        }
        let geometry = Geometry {
            blocks_per_chip: r.u32()?,
            pages_per_block: r.u32()?,
            data_bytes_per_page: r.u32()?,
            spare_bytes_per_page: r.u32()?,
        };
        let params = VariationParams {
            rate_mu: r.f64()?,
            rate_sigma: r.f64()?,
            coherent_byte_fraction: r.f64()?,
            coherent_byte_sigma: r.f64()?,
            op_noise_sigma: r.f64()?,
            weak_band: r.f64()?,
            weak_gap_lambda: r.f64()?,
            read_flip_prob: r.f64()?,
            age_rate_alpha: r.f64()?,
            age_noise_beta: r.f64()?,
            pec_rating: r.u32()?,
            ticks_per_program: r.u32()?,
            charge_threshold: r.f64()?,
        };
        let fabrication_seed = r.u64()?;
        let noise_seed = r.u64()?;
        let mut chip = FlashChip::uncalibrated(geometry, params, fabrication_seed, noise_seed)?;
        chip.calibration = InterruptCalibration {
            d_low: r.u32()?,
            d_high: r.u32()?,
            q_threshold: r.f64()?,
        };
        for c in chip.erase_counts.iter_mut() {
            *c = r.u32()?;
        }
        let seed: [u8; 32] = r.array()?;
        let mut noise = ChaCha8Rng::from_seed(seed);
        noise.set_stream(r.u64()?);
        noise.set_word_pos(r.u128()?);
        chip.noise = noise;
        chip.counters = OpCounters {
            programs: r.u64()?,
            reads: r.u64()?,
            erases: r.u64()?,
        };

        let bits = geometry.bits_per_page();
        let pages = r.u32()?;
        for _ in 0..pages {
            let lp = r.u64()?;
            if lp >= geometry.total_pages() {
                return Err(FlashError::Snapshot(format!(
                    "page index {lp} out of range"
                )));
            }
            let charges = (0..bits).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?;
            chip.charges.insert(lp, charges);
        }
        let spare_pages = r.u32()?;
        for _ in 0..spare_pages {
            let lp = r.u64()?;
            if lp >= geometry.total_pages() {
                return Err(FlashError::Snapshot(format!(
                    "page index {lp} out of range"
                )));
            }
            let bytes = r.take(geometry.spare_bytes_per_page as usize)?.to_vec();
            chip.spare.insert(lp, bytes);
        }
        if r.pos != buf.len() {
            return Err(FlashError::Snapshot("trailing bytes after snapshot".into()));
        }
        Ok(chip)
    }

    pub fn write_snapshot<W: Write>(&self, mut out: W) -> Result<(), FlashError> {
        out.write_all(&self.to_snapshot_bytes())?;
        Ok(())
    }

    pub fn read_snapshot<R: Read>(mut input: R) -> Result<Self, FlashError> {
        let mut buf = Vec::new();
        input.read_to_end(&mut buf)?;
        Self::from_snapshot_bytes(&buf)
    }
}
