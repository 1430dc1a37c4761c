use serde::{Deserialize, Serialize};

use super::{HaloError, PageMap};
use crate::flash::{FlashChip, Geometry, PageData, ProgramLevel};

pub const PROGRAMS_PER_SIDE: usize = 5;
pub const READS_PER_PROGRAM: usize = 5;
pub const SIGNATURES_PER_SIDE: usize = PROGRAMS_PER_SIDE * READS_PER_PROGRAM;
/// Minimum stable bytes per side for a page to be accepted.
pub const DEFAULT_MIN_QUOTA: usize = 256;

/// The raw page reads collected for one enrollment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignatureSet {
    pub low: Vec<PageData>,
    pub high: Vec<PageData>,
}

impl SignatureSet {
    pub fn new(low: Vec<PageData>, high: Vec<PageData>) -> Result<Self, HaloError> {
        if low.len() != SIGNATURES_PER_SIDE || high.len() != SIGNATURES_PER_SIDE {
            return Err(HaloError::Config(format!(
                "signature set needs {SIGNATURES_PER_SIDE} reads per side, got {} and {}",
                low.len(),
                high.len()
            )));
        }
        let len = low[0].len();
        if low.iter().chain(&high).any(|s| s.len() != len) {
            return Err(HaloError::Config("signatures differ in length".into()));
        }
        Ok(Self { low, high })
    }

    pub fn page_len(&self) -> usize {
        self.low[0].len()
    }
}

/// Programs one level, reads the page `READS_PER_PROGRAM` times and erases
/// the block again. A leading erase is issued only if the page holds charge.
pub(super) fn program_and_read(
    chip: &mut FlashChip,
    block: u32,
    page: u32,
    level: ProgramLevel,
) -> Result<Vec<PageData>, HaloError> {
    if !chip.is_page_erased(block, page)? {
        chip.erase_block(block)?;
    }
    chip.program_page_interrupted(block, page, level)?;
    let reads = (0..READS_PER_PROGRAM)
        .map(|_| chip.read_page(block, page))
        .collect::<Result<Vec<_>, _>>()?;
    chip.erase_block(block)?;
    Ok(reads)
}

/// Runs five programs per interrupt level with five reads each.
///
/// Costs ten erases on a block whose target page starts erased and leaves the
/// block erased.
pub fn collect_signatures(
    chip: &mut FlashChip,
    block: u32,
    page: u32,
) -> Result<SignatureSet, HaloError> {
    check_not_scratch(chip, block)?;
    let mut low = Vec::with_capacity(SIGNATURES_PER_SIDE);
    for _ in 0..PROGRAMS_PER_SIDE {
        low.extend(program_and_read(chip, block, page, ProgramLevel::Low)?);
    }
    let mut high = Vec::with_capacity(SIGNATURES_PER_SIDE);
    for _ in 0..PROGRAMS_PER_SIDE {
        high.extend(program_and_read(chip, block, page, ProgramLevel::High)?);
    }
    SignatureSet::new(low, high)
}

fn check_not_scratch(chip: &FlashChip, block: u32) -> Result<(), HaloError> {
    if block == chip.geometry().scratch_block() {
        return Err(HaloError::Config(format!(
            "block {block} is reserved for interrupt calibration"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnrollStats {
    /// Bytes reading 0xFF in every low signature.
    pub candidates_low: usize,
    /// Bytes reading 0x00 in every high signature.
    pub candidates_high: usize,
    /// Bytes stable on both sides, dropped from the map.
    pub dual_stable: usize,
}

impl EnrollStats {
    pub fn candidates(&self) -> usize {
        self.candidates_low + self.candidates_high
    }

    pub fn usable(&self) -> usize {
        self.candidates() - 2 * self.dual_stable
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Enrollment {
    pub map: PageMap,
    pub stats: EnrollStats,
}

/// Builds the stable-byte map from a signature set.
///
/// Fails with [`HaloError::InsufficientStableBytes`] if either side ends with
/// fewer than `quota` bytes.
pub fn enroll_page(
    sigs: &SignatureSet,
    chip_id: &str,
    block: u32,
    page: u32,
    enrolled_at_life: f64,
    quota: usize,
) -> Result<Enrollment, HaloError> {
    let n = sigs.page_len();
    let stable = |set: &[PageData], value: u8| -> Vec<bool> {
        (0..n)
            .map(|j| set.iter().all(|s| s.bytes()[j] == value))
            .collect()
    };
    let s_low = stable(&sigs.low, 0xFF);
    let s_high = stable(&sigs.high, 0x00);

    let mut low_bytes = Vec::new();
    let mut high_bytes = Vec::new();
    let mut stats = EnrollStats {
        candidates_low: 0,
        candidates_high: 0,
        dual_stable: 0,
    };
    for j in 0..n {
        stats.candidates_low += usize::from(s_low[j]);
        stats.candidates_high += usize::from(s_high[j]);
        match (s_low[j], s_high[j]) {
            (true, true) => stats.dual_stable += 1,
            (true, false) => low_bytes.push(j as u16),
            (false, true) => high_bytes.push(j as u16),
            (false, false) => {}
        }
    }
    if low_bytes.len() < quota || high_bytes.len() < quota {
        return Err(HaloError::InsufficientStableBytes {
            block,
            page,
            low: low_bytes.len(),
            high: high_bytes.len(),
            quota,
        });
    }
    Ok(Enrollment {
        map: PageMap {
            chip_id: chip_id.to_string(),
            block,
            page,
            low_bytes,
            high_bytes,
            consumed: Vec::new(),
            enrolled_at_life,
        },
        stats,
    })
}

/// Enrolls the first acceptable page of `block`, trying pages in order from
/// `start_page`.
pub fn enroll_block(
    chip: &mut FlashChip,
    chip_id: &str,
    block: u32,
    start_page: u32,
    quota: usize,
) -> Result<Enrollment, HaloError> {
    check_not_scratch(chip, block)?;
    let pages = chip.geometry().pages_per_block;
    let mut last_err = None;
    for page in start_page..pages {
        let life = chip.life_used(block)?;
        let sigs = collect_signatures(chip, block, page)?;
        match enroll_page(&sigs, chip_id, block, page, life, quota) {
            Ok(e) => return Ok(e),
            Err(e @ HaloError::InsufficientStableBytes { .. }) => last_err = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last_err.unwrap_or(HaloError::Config(format!(
        "start page {start_page} is past the end of block {block}"
    ))))
}

/// Page visiting order that spreads enrollment wear: page 0 of every data
/// block, then page 1, and so on.
pub fn enrollment_order(geometry: &Geometry) -> impl Iterator<Item = (u32, u32)> {
    let data_blocks = geometry.blocks_per_chip - 1;
    (0..geometry.pages_per_block)
        .flat_map(move |page| (0..data_blocks).map(move |block| (block, page)))
}

/// Enrolls up to `count` pages taken from `addrs`, skipping rejected pages.
/// Stops pulling addresses once `count` maps are accepted, so an iterator
/// passed `by_ref` resumes where the previous call left off.
pub fn enroll_pages(
    chip: &mut FlashChip,
    chip_id: &str,
    addrs: impl IntoIterator<Item = (u32, u32)>,
    count: usize,
    quota: usize,
) -> Result<Vec<Enrollment>, HaloError> {
    let mut out = Vec::with_capacity(count);
    if count == 0 {
        return Ok(out);
    }
    for (block, page) in addrs {
        let life = chip.life_used(block)?;
        let sigs = collect_signatures(chip, block, page)?;
        match enroll_page(&sigs, chip_id, block, page, life, quota) {
            Ok(e) => out.push(e),
            Err(HaloError::InsufficientStableBytes { .. }) => {}
            Err(e) => return Err(e),
        }
        if out.len() == count {
            break;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flash::{Geometry, VariationParams};

    fn geometry() -> Geometry {
        Geometry {
            blocks_per_chip: 3,
            pages_per_block: 4,
            data_bytes_per_page: 4096,
            spare_bytes_per_page: 224,
        }
    }

    fn page(fill: &[(usize, u8)], base: u8) -> PageData {
        let mut bytes = vec![base; 8];
        for &(j, v) in fill {
            bytes[j] = v;
        }
        PageData::new(bytes)
    }

    #[test]
    fn collects_twenty_five_per_side_and_ten_erases() {
        let mut chip = FlashChip::fabricate(geometry(), VariationParams::default(), 1).unwrap();
        let before = chip.erase_count(0).unwrap();
        let sigs = collect_signatures(&mut chip, 0, 1).unwrap();
        assert_eq!((sigs.low.len(), sigs.high.len()), (25, 25));
        assert_eq!(chip.erase_count(0).unwrap() - before, 10);
        assert!(chip.is_page_erased(0, 1).unwrap());
    }

    #[test]
    fn noise_free_signatures_are_identical() {
        // Wear still moves charge between programs, so it is switched off too.
        let params = VariationParams {
            op_noise_sigma: 0.0,
            read_flip_prob: 0.0,
            age_rate_alpha: 0.0,
            ..Default::default()
        };
        let mut chip = FlashChip::fabricate(geometry(), params, 2).unwrap();
        let sigs = collect_signatures(&mut chip, 1, 0).unwrap();
        assert!(sigs.low.iter().all(|s| s == &sigs.low[0]));
        assert!(sigs.high.iter().all(|s| s == &sigs.high[0]));
    }

    #[test]
    fn enroll_pages_spreads_over_blocks() {
        let mut chip = FlashChip::fabricate(geometry(), VariationParams::default(), 3).unwrap();
        let mut order = enrollment_order(chip.geometry());
        let got = enroll_pages(&mut chip, "c", order.by_ref(), 3, DEFAULT_MIN_QUOTA).unwrap();
        let addrs: Vec<_> = got.iter().map(|e| (e.map.block, e.map.page)).collect();
        assert_eq!(addrs, vec![(0, 0), (1, 0), (0, 1)]);
        assert_eq!(chip.erase_count(0).unwrap(), 20);
        let next = enroll_pages(&mut chip, "c", order, 1, DEFAULT_MIN_QUOTA).unwrap();
        assert_eq!((next[0].map.block, next[0].map.page), (1, 1));
    }

    #[test]
    fn scratch_block_is_refused() {
        let mut chip = FlashChip::fabricate(geometry(), VariationParams::default(), 1).unwrap();
        assert!(matches!(
            collect_signatures(&mut chip, 2, 0),
            Err(HaloError::Config(_))
        ));
    }

    #[test]
    fn stability_rules() {
        // byte 0: stable low; 1: stable high; 2: dual stable; 3: low in 24/25.
        let low: Vec<PageData> = (0..25)
            .map(|i| {
                page(
                    &[(0, 0xFF), (2, 0xFF), (3, if i == 7 { 0xFE } else { 0xFF })],
                    0x5A,
                )
            })
            .collect();
        let high: Vec<PageData> = (0..25)
            .map(|_| page(&[(1, 0x00), (2, 0x00)], 0x5A))
            .collect();
        let sigs = SignatureSet::new(low, high).unwrap();
        let e = enroll_page(&sigs, "c", 0, 0, 0.0, 1).unwrap();
        assert_eq!(e.map.low_bytes, vec![0]);
        assert_eq!(e.map.high_bytes, vec![1]);
        assert_eq!(
            e.stats,
            EnrollStats {
                candidates_low: 2,
                candidates_high: 2,
                dual_stable: 1
            }
        );
        assert_eq!(e.stats.usable(), 2);
        assert!(matches!(
            enroll_page(&sigs, "c", 0, 0, 0.0, 2),
            Err(HaloError::InsufficientStableBytes {
                low: 1,
                high: 1,
                ..
            })
        ));
    }

    #[test]
    fn signature_set_shape_is_checked() {
        let one = vec![PageData::new(vec![0; 4]); 24];
        let full = vec![PageData::new(vec![0; 4]); 25];
        assert!(SignatureSet::new(one, full.clone()).is_err());
        let mut mixed = full.clone();
        mixed[3] = PageData::new(vec![0; 5]);
        assert!(SignatureSet::new(full, mixed).is_err());
    }

    #[test]
    fn yield_on_default_chip() {
        let mut chip = FlashChip::fabricate(geometry(), VariationParams::default(), 3).unwrap();
        let e = enroll_block(&mut chip, "c", 0, 0, DEFAULT_MIN_QUOTA).unwrap();
        let usable = e.map.low_bytes.len() + e.map.high_bytes.len();
        assert_eq!(usable, e.stats.usable());
        assert!((500..=900).contains(&usable), "{usable}");
        assert!(
            (1200..=1800).contains(&e.stats.candidates()),
            "{:?}",
            e.stats
        );
        assert!(e
            .map
            .low_bytes
            .iter()
            .all(|j| !e.map.high_bytes.contains(j)));
    }

    #[test]
    fn rejected_page_moves_to_next() {
        let mut chip = FlashChip::fabricate(geometry(), VariationParams::default(), 3).unwrap();
        let err = enroll_block(&mut chip, "c", 0, 0, 4000).unwrap_err();
        assert!(
            matches!(err, HaloError::InsufficientStableBytes { page: 3, .. }),
            "{err}"
        );
        // 4 pages tried.
        assert_eq!(chip.erase_count(0).unwrap(), 40);
    }
}
