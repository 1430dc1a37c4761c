use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    inter_hd, min_entropy, reliability, shannon_entropy, CorpusEntry, MetricsError, ResponseCorpus,
    Summary,
};
use crate::bits::BitString;
use crate::flash::{mix_seed, FlashChip, Geometry, VariationParams};
use crate::halo::{
    adaptive_threshold, enroll_block, generate_response, generate_response_with, plan_challenge,
    verify_response, EnrollStats, PageMap, Threshold,
};

/// Fabricates the chips of an experiment from one base seed.
#[derive(Debug, Clone, PartialEq)]
pub struct ChipFactory {
    pub geometry: Geometry,
    pub params: VariationParams,
    pub base_seed: u64,
    pub noise_seed: Option<u64>,
}

impl ChipFactory {
    pub fn from_config(config: &crate::config::RunConfig) -> Result<Self, MetricsError> {
        Ok(Self {
            geometry: config
                .geometry()
                .map_err(|e| MetricsError::Settings(e.to_string()))?,
            params: config.params,
            base_seed: config.seeds.fabrication,
            noise_seed: config.seeds.noise,
        })
    }

    pub fn seed(&self, index: u64) -> u64 {
        self.base_seed.wrapping_add(index)
    }

    pub fn chip_id(&self, index: u64) -> String {
        format!("chip-{}", self.seed(index))
    }

    pub fn chip(&self, index: u64) -> Result<FlashChip, MetricsError> {
        let seed = self.seed(index);
        let chip = match self.noise_seed {
            Some(n) => FlashChip::fabricate_with_noise_seed(
                self.geometry,
                self.params,
                seed,
                mix_seed(n.wrapping_add(index)),
            ),
            None => FlashChip::fabricate(self.geometry, self.params, seed),
        };
        Ok(chip?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySettings {
    pub chips: usize,
    pub trials: usize,
    pub response_bits: usize,
    pub layout_seed: u64,
    /// Block enrolled on every chip.
    pub block: u32,
    pub min_quota: usize,
    pub threshold: Threshold,
    /// Pages of the first chip used for the cross-page population.
    pub cross_pages: usize,
}

/// Response populations for the uniqueness, entropy and reliability report.
#[derive(Debug, Clone)]
pub struct PopulationStudy {
    pub enrollment: Vec<EnrollStats>,
    /// One response per chip, each to a challenge drawn from its own map
    /// with the shared layout seed.
    pub cross_chip: ResponseCorpus,
    /// One chip, one response per enrolled page.
    pub cross_page: ResponseCorpus,
    /// Every chip answering the first chip's challenge.
    pub foreign_challenge: ResponseCorpus,
    /// Repeated answers of the first chip to its own challenge.
    pub trials: ResponseCorpus,
    pub reference: BitString,
}

impl PopulationStudy {
    pub fn cross_chip_hd(&self) -> Result<Summary, MetricsError> {
        inter_hd(&self.cross_chip.bits())
    }

    pub fn entropy(&self) -> Result<(f64, f64), MetricsError> {
        let bits = self.cross_chip.bits();
        Ok((shannon_entropy(&bits)?, min_entropy(&bits)?))
    }

    /// Per-bit error summary and exact-response rate, `None` below 2 trials.
    pub fn reliability(&self) -> Result<Option<(Summary, f64)>, MetricsError> {
        let trials = self.trials.bits();
        if trials.len() < 2 {
            return Ok(None);
        }
        let summary = reliability(&self.reference, &trials)?;
        let exact = trials.iter().filter(|t| **t == self.reference).count();
        Ok(Some((summary, exact as f64 / trials.len() as f64)))
    }
}

fn entry(chip_id: String, challenge_id: u64, trial: usize, bits: BitString) -> CorpusEntry {
    CorpusEntry {
        chip_id,
        challenge_id,
        trial,
        bits,
    }
}

pub fn run_study(
    factory: &ChipFactory,
    s: &StudySettings,
) -> Result<PopulationStudy, MetricsError> {
    if s.chips < 2 {
        return Err(MetricsError::Settings(format!(
            "need at least 2 chips, got {}",
            s.chips
        )));
    }
    let enrolled: Vec<(FlashChip, PageMap, EnrollStats, CorpusEntry)> = (0..s.chips as u64)
        .into_par_iter()
        .map(|i| {
            let mut chip = factory.chip(i)?;
            let id = factory.chip_id(i);
            let e = enroll_block(&mut chip, &id, s.block, 0, s.min_quota)?;
            let (c, _) = plan_challenge(&e.map, s.layout_seed, s.response_bits, s.threshold)?;
            let r = generate_response(&mut chip, &c)?;
            Ok((chip, e.map, e.stats, entry(id, c.challenge_id, 0, r.bits)))
        })
        .collect::<Result<_, MetricsError>>()?;

    let mut cross_chip = ResponseCorpus::new();
    let mut enrollment = Vec::new();
    let mut chips = Vec::new();
    let mut first_map = None;
    for (chip, map, stats, e) in enrolled {
        enrollment.push(stats);
        cross_chip.push(e)?;
        first_map.get_or_insert(map);
        chips.push(chip);
    }
    let first_map = first_map.expect("at least two chips");
    let (c0, e0) = plan_challenge(&first_map, s.layout_seed, s.response_bits, s.threshold)?;

    let foreign: Vec<CorpusEntry> = chips
        .par_iter_mut()
        .enumerate()
        .map(|(i, chip)| {
            let r = generate_response(chip, &c0)?;
            Ok(entry(factory.chip_id(i as u64), c0.challenge_id, 0, r.bits))
        })
        .collect::<Result<_, MetricsError>>()?;
    let mut foreign_challenge = ResponseCorpus::new();
    for e in foreign {
        foreign_challenge.push(e)?;
    }

    let mut first = chips.swap_remove(0);
    drop(chips);
    let id0 = factory.chip_id(0);
    let mut trials = ResponseCorpus::new();
    for k in 0..s.trials {
        let r = generate_response(&mut first, &c0)?;
        trials.push(entry(id0.clone(), c0.challenge_id, k, r.bits))?;
    }

    let mut cross_page = ResponseCorpus::new();
    let g = *first.geometry();
    let blocks = (0..g.scratch_block()).filter(|&b| b != s.block);
    for (k, block) in blocks.take(s.cross_pages).enumerate() {
        let e = enroll_block(&mut first, &id0, block, 0, s.min_quota)?;
        let (c, _) = plan_challenge(&e.map, s.layout_seed, s.response_bits, s.threshold)?;
        let r = generate_response(&mut first, &c)?;
        cross_page.push(entry(
            format!("{id0}/{block}/{}", e.map.page),
            c.challenge_id,
            k,
            r.bits,
        ))?;
    }

    Ok(PopulationStudy {
        enrollment,
        cross_chip,
        cross_page,
        foreign_challenge,
        trials,
        reference: e0.bits,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdPolicy {
    Fixed(Threshold),
    Adaptive,
}

impl ThresholdPolicy {
    pub fn label(&self) -> String {
        match self {
            ThresholdPolicy::Fixed(t) => format!("fixed-{t}"),
            ThresholdPolicy::Adaptive => "adaptive".into(),
        }
    }

    fn threshold(&self, life: f64) -> Threshold {
        match self {
            ThresholdPolicy::Fixed(t) => *t,
            ThresholdPolicy::Adaptive => adaptive_threshold(life),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgingSettings {
    pub checkpoints: Vec<f64>,
    pub responses_per_point: usize,
    /// Blocks enrolled per chip; responses rotate over them to spread wear.
    pub blocks: u32,
    pub response_bits: usize,
    pub layout_seed: u64,
    pub min_quota: usize,
    /// Index of the chip taken from the factory.
    pub chip_index: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgingPoint {
    pub life: f64,
    pub responses: usize,
    pub mean_error: f64,
    pub error: Summary,
    pub exact_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgingCurve {
    pub policy: ThresholdPolicy,
    pub points: Vec<AgingPoint>,
}

/// Per-response bit error rates with the chip aged to `life`.
fn aging_point(
    factory: &ChipFactory,
    s: &AgingSettings,
    policy: ThresholdPolicy,
    life: f64,
) -> Result<Vec<f64>, MetricsError> {
    let mut chip = factory.chip(s.chip_index)?;
    let id = factory.chip_id(s.chip_index);
    let maps = (0..s.blocks)
        .map(|b| Ok(enroll_block(&mut chip, &id, b, 0, s.min_quota)?.map))
        .collect::<Result<Vec<_>, MetricsError>>()?;
    let target = (life * f64::from(chip.params().pec_rating)).round() as u32;
    for b in 0..s.blocks {
        let count = chip.erase_count(b)?;
        if target > count {
            chip.age_block(b, target - count)?;
        }
    }
    let mut rates = Vec::with_capacity(s.responses_per_point);
    for k in 0..s.responses_per_point {
        let map = &maps[k % maps.len()];
        let seed = mix_seed(s.layout_seed ^ k as u64);
        let (c, e) = plan_challenge(map, seed, s.response_bits, Threshold::FRESH)?;
        let block_life = chip.life_used(map.block)?;
        let r = generate_response_with(&mut chip, &c, policy.threshold(block_life))?;
        let v = verify_response(&e, &r)?;
        rates.push(v.hamming_distance as f64 / s.response_bits as f64);
    }
    Ok(rates)
}

/// Error-rate curve over life checkpoints for one threshold policy.
///
/// Each checkpoint starts from a freshly fabricated copy of the same chip, so
/// two policies evaluated with the same factory see identical cells and
/// noise streams.
pub fn aging_sweep(
    factory: &ChipFactory,
    s: &AgingSettings,
    policy: ThresholdPolicy,
) -> Result<AgingCurve, MetricsError> {
    if s.checkpoints.iter().any(|c| !(0.0..=1.0).contains(c))
        || s.checkpoints.windows(2).any(|w| w[0] > w[1])
    {
        return Err(MetricsError::Settings(
            "checkpoints must be sorted within [0, 1]".into(),
        ));
    }
    if s.responses_per_point == 0 || s.blocks == 0 {
        return Err(MetricsError::Settings(
            "need at least one response and one block".into(),
        ));
    }
    if s.blocks >= factory.geometry.blocks_per_chip {
        return Err(MetricsError::Settings(format!(
            "{} blocks requested, the chip has {} usable",
            s.blocks,
            factory.geometry.blocks_per_chip - 1
        )));
    }
    let points = s
        .checkpoints
        .par_iter()
        .map(|&life| {
            let rates = aging_point(factory, s, policy, life)?;
            let error = Summary::of(&rates).expect("non-empty");
            Ok(AgingPoint {
                life,
                responses: rates.len(),
                mean_error: error.mean,
                error,
                exact_rate: rates.iter().filter(|&&r| r == 0.0).count() as f64 / rates.len() as f64,
            })
        })
        .collect::<Result<Vec<_>, MetricsError>>()?;
    Ok(AgingCurve { policy, points })
}
