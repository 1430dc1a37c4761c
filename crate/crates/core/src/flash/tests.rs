use proptest::prelude::*;

use super::*;

fn small() -> Geometry {
    Geometry {
        blocks_per_chip: 4,
        pages_per_block: 16,
        data_bytes_per_page: 4096,
        spare_bytes_per_page: 224,
    }
}

fn chip(seed: u64) -> FlashChip {
    FlashChip::fabricate(small(), VariationParams::default(), seed).unwrap()
}

#[test]
fn equal_seeds_give_identical_latent_state() {
    let a = chip(1);
    let b = chip(1);
    for (block, page) in [(0, 0), (2, 7)] {
        assert_eq!(
            a.page_latent(block, page).unwrap(),
            b.page_latent(block, page).unwrap()
        );
    }
    assert_eq!(a.calibration(), b.calibration());
}

#[test]
fn different_seeds_differ_in_weak_flags() {
    let a = chip(1).page_latent(0, 0).unwrap();
    let b = chip(2).page_latent(0, 0).unwrap();
    let bits = small().bits_per_page();
    let mut fa = vec![false; bits];
    let mut fb = vec![false; bits];
    a.weak.iter().for_each(|&p| fa[p as usize] = true);
    b.weak.iter().for_each(|&p| fb[p as usize] = true);
    let differing = fa.iter().zip(&fb).filter(|(x, y)| x != y).count();
    assert!(differing > 0);
}

#[test]
fn weak_gaps_fit_exponential() {
    let c = FlashChip::fabricate(Geometry::DESK_SCALE, VariationParams::default(), 7).unwrap();
    let lambda = c.params().weak_gap_lambda;
    let mut gaps = Vec::new();
    'outer: for block in 0..8 {
        for page in 0..64 {
            let weak = c.page_latent(block, page).unwrap().weak;
            gaps.extend(weak.windows(2).map(|w| f64::from(w[1] - w[0])));
            if gaps.len() >= 100_000 {
                break 'outer;
            }
        }
    }
    assert!(gaps.len() >= 100_000, "{}", gaps.len());
    gaps.sort_by(f64::total_cmp);
    let n = gaps.len() as f64;
    let mut ks: f64 = 0.0;
    for (i, &g) in gaps.iter().enumerate() {
        let cdf = 1.0 - (-lambda * g).exp();
        ks = ks
            .max((cdf - i as f64 / n).abs())
            .max(((i + 1) as f64 / n - cdf).abs());
    }
    assert!(ks < 0.05, "KS = {ks}");
}

#[test]
fn calibration_lands_on_eighty_twenty() {
    let mut c = chip(3);
    let cal = *c.calibration();
    assert!(0 < cal.d_low && cal.d_low < cal.d_high, "{cal:?}");
    let (mut low, mut high) = (0.0, 0.0);
    for page in 0..16 {
        c.program_page_interrupted(0, page, ProgramLevel::Low)
            .unwrap();
        low += c.read_page(0, page).unwrap().ones_fraction();
        c.program_page_interrupted(1, page, ProgramLevel::High)
            .unwrap();
        high += c.read_page(1, page).unwrap().ones_fraction();
    }
    let (low, high) = (low / 16.0, high / 16.0);
    assert!((0.75..=0.85).contains(&low), "low {low}");
    assert!((0.15..=0.25).contains(&high), "high {high}");
    assert!(high < low);
}

#[test]
fn degenerate_variation_fails_calibration() {
    let params = VariationParams {
        rate_sigma: 1e-12,
        coherent_byte_sigma: 0.0,
        op_noise_sigma: 0.0,
        ..Default::default()
    };
    let err = FlashChip::fabricate(small(), params, 1).unwrap_err();
    assert!(matches!(err, FlashError::Calibration(_)), "{err}");
}

#[test]
fn invalid_config_is_rejected() {
    let bad = Geometry {
        blocks_per_chip: 0,
        ..small()
    };
    assert!(matches!(
        FlashChip::fabricate(bad, VariationParams::default(), 1),
        Err(FlashError::Config(_))
    ));
}

#[test]
fn erase_program_discipline() {
    let mut c = chip(4);
    let before = c.erase_count(0).unwrap();
    c.erase_block(0).unwrap();
    assert_eq!(c.erase_count(0).unwrap(), before + 1);
    assert!(c
        .read_page(0, 3)
        .unwrap()
        .bytes()
        .iter()
        .all(|&b| b == 0xFF));

    c.program_page_interrupted(0, 3, ProgramLevel::Low).unwrap();
    assert!(matches!(
        c.program_page_interrupted(0, 3, ProgramLevel::High),
        Err(FlashError::State(_))
    ));

    c.program_page_interrupted(1, 0, ProgramLevel::High)
        .unwrap();
    let block1 = c.page_charges(1, 0).unwrap().unwrap().to_vec();
    c.erase_block(0).unwrap();
    assert_eq!(c.page_charges(1, 0).unwrap().unwrap(), block1.as_slice());
    assert!(c.is_page_erased(0, 3).unwrap());
}

#[test]
fn address_errors() {
    let mut c = chip(4);
    assert!(matches!(c.erase_block(4), Err(FlashError::Address { .. })));
    assert!(matches!(
        c.read_page(0, 16),
        Err(FlashError::Address { .. })
    ));
    assert!(matches!(
        c.program_page_interrupted(9, 0, ProgramLevel::Low),
        Err(FlashError::Address { .. })
    ));
}

#[test]
fn life_used_and_aging() {
    let mut c = chip(5);
    assert_eq!(c.life_used(0).unwrap(), 0.0);
    c.age_block(0, 1500).unwrap();
    assert_eq!(c.life_used(0).unwrap(), 0.5);
    c.age_block(0, 4500).unwrap();
    assert_eq!(c.erase_count(0).unwrap(), 6000);
    assert_eq!(c.life_used(0).unwrap(), 1.0);

    let before = c.to_snapshot_bytes();
    c.age_block(1, 0).unwrap();
    assert_eq!(c.to_snapshot_bytes(), before);
}

#[test]
fn aging_leaves_block_erased() {
    let mut c = chip(5);
    c.program_page_interrupted(0, 0, ProgramLevel::Low).unwrap();
    c.age_block(0, 10).unwrap();
    assert!(c.is_page_erased(0, 0).unwrap());
}

#[test]
fn reads_are_stable_away_from_threshold() {
    let mut c = chip(6);
    c.program_page_interrupted(0, 0, ProgramLevel::Low).unwrap();
    let charges = c.page_charges(0, 0).unwrap().unwrap().to_vec();
    let band = c.params().weak_band;
    let q = c.calibration().q_threshold;
    let first = c.read_page(0, 0).unwrap();
    let mut changed = vec![false; charges.len()];
    for _ in 0..100 {
        let page = c.read_page(0, 0).unwrap();
        for (i, flag) in changed.iter_mut().enumerate() {
            if page.bit(i) != first.bit(i) {
                *flag = true;
            }
        }
    }
    for (i, &flag) in changed.iter().enumerate() {
        if (charges[i] - q).abs() >= band {
            assert!(!flag, "bit {i} at charge {} flipped", charges[i]);
        }
    }
}

#[test]
fn weak_band_flips_within_five_reads() {
    let params = VariationParams {
        // Make the band wide enough to populate it densely.
        weak_band: 0.05,
        ..Default::default()
    };
    let mut c = FlashChip::fabricate(small(), params, 8).unwrap();
    let (mut in_band, mut flipped) = (0u64, 0u64);
    for page in 0..8 {
        c.program_page_interrupted(0, page, ProgramLevel::Low)
            .unwrap();
        let nominal = c.nominal_page(0, page).unwrap();
        let charges = c.page_charges(0, page).unwrap().unwrap().to_vec();
        let weak = c.page_latent(0, page).unwrap().weak;
        let reads: Vec<PageData> = (0..5).map(|_| c.read_page(0, page).unwrap()).collect();
        for &pos in &weak {
            let pos = pos as usize;
            if (charges[pos] - 1.0).abs() < 0.05 {
                in_band += 1;
                if reads.iter().any(|r| r.bit(pos) != nominal.bit(pos)) {
                    flipped += 1;
                }
            }
        }
    }
    let rate = flipped as f64 / in_band as f64;
    let expected = 1.0 - 0.55f64.powi(5);
    assert!(in_band > 1000, "{in_band}");
    assert!((rate - expected).abs() < 0.03, "{rate} vs {expected}");
}

#[test]
fn replay_reproduces_reads() {
    let run = || {
        let mut c = chip(9);
        c.program_page_interrupted(2, 5, ProgramLevel::High)
            .unwrap();
        (0..5)
            .map(|_| c.read_page(2, 5).unwrap())
            .collect::<Vec<_>>()
    };
    assert_eq!(run(), run());
}

#[test]
fn snapshot_round_trip_is_exact() {
    let mut c = chip(10);
    c.program_page_interrupted(0, 1, ProgramLevel::Low).unwrap();
    c.read_page(0, 1).unwrap();
    c.write_spare(1, 2, &[0x0F, 0xF0]).unwrap();
    c.age_block(2, 33).unwrap();
    let bytes = c.to_snapshot_bytes();
    assert_eq!(&bytes[..4], SNAPSHOT_MAGIC);
    let mut d = FlashChip::from_snapshot_bytes(&bytes).unwrap();
    assert_eq!(d.to_snapshot_bytes(), bytes);
    assert_eq!(d.read_page(0, 1).unwrap(), c.read_page(0, 1).unwrap());
    assert_eq!(d.read_spare(1, 2).unwrap()[..3], [0x0F, 0xF0, 0xFF]);
}

#[test]
fn snapshot_rejects_corruption() {
    let bytes = chip(11).to_snapshot_bytes();
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(matches!(
        FlashChip::from_snapshot_bytes(&bad),
        Err(FlashError::Snapshot(_))
    ));
    assert!(FlashChip::from_snapshot_bytes(&bytes[..bytes.len() - 1]).is_err());
    let mut long = bytes;
    long.push(0);
    assert!(FlashChip::from_snapshot_bytes(&long).is_err());
}

#[test]
fn spare_writes_only_clear_bits() {
    let mut c = chip(12);
    c.write_spare(0, 0, &[0xF0]).unwrap();
    c.write_spare(0, 0, &[0x3C]).unwrap();
    assert_eq!(c.read_spare(0, 0).unwrap()[0], 0x30);
    assert!(c.write_spare(0, 0, &[0; 225]).is_err());
    c.erase_block(0).unwrap();
    assert_eq!(c.read_spare(0, 0).unwrap()[0], 0xFF);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn charge_is_monotone_in_rate(seed in any::<u64>(), ticks in 1u32..64) {
        let g = Geometry { blocks_per_chip: 2, pages_per_block: 1, data_bytes_per_page: 64, spare_bytes_per_page: 8 };
        let params = VariationParams { op_noise_sigma: 0.0, ..Default::default() };
        let mut c = FlashChip::uncalibrated(g, params, seed, seed).unwrap();
        c.program_page_ticks(0, 0, ticks).unwrap();
        let rates = c.page_latent(0, 0).unwrap().rates;
        let charges = c.page_charges(0, 0).unwrap().unwrap().to_vec();
        let mut order: Vec<usize> = (0..rates.len()).collect();
        order.sort_by(|&a, &b| rates[a].total_cmp(&rates[b]));
        for w in order.windows(2) {
            prop_assert!(charges[w[0]] <= charges[w[1]]);
        }
    }

    #[test]
    fn life_used_never_decreases(ops in proptest::collection::vec((0u8..3, 0u32..2, 0u32..50), 1..30)) {
        let g = Geometry { blocks_per_chip: 2, pages_per_block: 2, data_bytes_per_page: 16, spare_bytes_per_page: 4 };
        let mut c = FlashChip::uncalibrated(g, VariationParams::default(), 1, 1).unwrap();
        let mut last = [0.0f64; 2];
        for (op, block, n) in ops {
            match op {
                0 => c.erase_block(block).unwrap(),
                1 => c.age_block(block, n).unwrap(),
                _ => {
                    let _ = c.program_page_ticks(block, n % 2, 20);
                }
            }
            for b in 0..2 {
                let life = c.life_used(b).unwrap();
                prop_assert!(life >= last[b as usize] && (0.0..=1.0).contains(&life));
                last[b as usize] = life;
            }
        }
    }
}
