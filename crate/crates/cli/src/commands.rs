//! Offline pipeline, experiment and maintenance commands.

use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::time::Instant;

use halo_puf::config::RunConfig;
use halo_puf::flash::FlashChip;
use halo_puf::halo::{
    adaptive_threshold, build_challenge, enroll_pages, enrollment_order, generate_response,
    generate_response_with, plan_challenge, verify_response, Challenge, ExpectedResponse, MapStore,
    ResponseBits, Verdict,
};
use halo_puf::metrics::{MetricsReport, ReportFormat};
use serde::{Deserialize, Serialize};

use crate::envelope::{self, ensure_parent};
use crate::error::CliError;

pub const CHALLENGE_FORMAT: &str = "halo-puf.challenge";
pub const EXPECTED_FORMAT: &str = "halo-puf.expected";
pub const RESPONSE_FORMAT: &str = "halo-puf.response";
pub const BENCH_FORMAT: &str = "halo-puf.bench";
pub const BENCH_LABEL: &str = "simulation latency; not comparable to the 34.8 ms hardware figure";

pub fn load_chip(path: &Path) -> Result<FlashChip, CliError> {
    let file = File::open(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    FlashChip::read_snapshot(BufReader::new(file))
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Writes the snapshot through a temporary file so a crash never leaves a
/// truncated chip behind.
pub fn save_chip(chip: &FlashChip, path: &Path) -> Result<(), CliError> {
    ensure_parent(path)?;
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, chip.to_snapshot_bytes())?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn default_chip_id(chip: &FlashChip) -> String {
    format!("chip-{}", chip.fabrication_seed())
}

pub fn open_store(path: &Path) -> Result<MapStore, CliError> {
    ensure_parent(path)?;
    Ok(MapStore::open(path)?)
}

pub fn fabricate_from(cfg: &RunConfig) -> Result<FlashChip, CliError> {
    let (g, p, seed) = (cfg.geometry()?, cfg.params, cfg.seeds.fabrication);
    Ok(match cfg.seeds.noise {
        Some(n) => FlashChip::fabricate_with_noise_seed(g, p, seed, n)?,
        None => FlashChip::fabricate(g, p, seed)?,
    })
}

pub fn fabricate(cfg: &RunConfig, out: Option<PathBuf>) -> Result<(), CliError> {
    let out = out.unwrap_or_else(|| cfg.paths.chip.clone());
    let chip = fabricate_from(cfg)?;
    save_chip(&chip, &out)?;
    let cal = chip.calibration();
    println!(
        "fabricated {} ({} blocks x {} pages); interrupts at {} / {} ticks; wrote {}",
        default_chip_id(&chip),
        chip.geometry().blocks_per_chip,
        chip.geometry().pages_per_block,
        cal.d_low,
        cal.d_high,
        out.display()
    );
    Ok(())
}

pub fn enroll(
    cfg: &RunConfig,
    chip_path: Option<PathBuf>,
    store_path: Option<PathBuf>,
    chip_id: Option<String>,
    pages: usize,
) -> Result<(), CliError> {
    if pages == 0 {
        return Err(CliError::Usage("--pages must be at least 1".into()));
    }
    let chip_path = chip_path.unwrap_or_else(|| cfg.paths.chip.clone());
    let store_path = store_path.unwrap_or_else(|| cfg.paths.store.clone());
    let mut chip = load_chip(&chip_path)?;
    let chip_id = chip_id.unwrap_or_else(|| default_chip_id(&chip));
    let mut store = open_store(&store_path)?;
    let taken: std::collections::HashSet<(u32, u32)> = store
        .maps_for(&chip_id)
        .map(|m| (m.block, m.page))
        .collect();
    let order: Vec<_> = enrollment_order(chip.geometry())
        .filter(|a| !taken.contains(a))
        .collect();
    let enrolled = enroll_pages(&mut chip, &chip_id, order, pages, cfg.experiment.min_quota)?;
    for e in &enrolled {
        println!(
            "{chip_id} block {} page {}: {} usable bytes ({} low, {} high) of {} candidates",
            e.map.block,
            e.map.page,
            e.map.usable(),
            e.map.low_bytes.len(),
            e.map.high_bytes.len(),
            e.stats.candidates()
        );
    }
    let n = enrolled.len();
    store.put_all(enrolled.into_iter().map(|e| e.map))?;
    save_chip(&chip, &chip_path)?;
    if n < pages {
        return Err(CliError::Failed(format!(
            "only {n} of {pages} pages could be enrolled"
        )));
    }
    Ok(())
}

pub fn challenge(
    cfg: &RunConfig,
    store_path: Option<PathBuf>,
    chip_id: &str,
    bits: Option<usize>,
    seed: Option<u64>,
    out: &Path,
    expected_out: &Path,
) -> Result<(), CliError> {
    let bits = bits.unwrap_or(cfg.experiment.response_bits);
    let store_path = store_path.unwrap_or_else(|| cfg.paths.store.clone());
    let mut store = open_store(&store_path)?;
    if bits == 0 || !bits.is_multiple_of(2) {
        return Err(CliError::Usage(format!(
            "--bits must be a positive even count, got {bits}"
        )));
    }
    let Some(mut map) = store
        .maps_for(chip_id)
        .find(|m| m.capacity() >= bits)
        .cloned()
    else {
        return Err(CliError::Failed(format!(
            "no map for {chip_id} can supply {bits} more locations"
        )));
    };
    let seed = seed.unwrap_or(cfg.seeds.layout ^ map.consumed.len() as u64);
    let t = adaptive_threshold(map.enrolled_at_life);
    let (c, e) = build_challenge(&mut map, seed, bits, t)?;
    store.put(map)?;
    envelope::write(out, CHALLENGE_FORMAT, cfg, &c)?;
    envelope::write(expected_out, EXPECTED_FORMAT, cfg, &e)?;
    println!(
        "challenge {:016x}: {} locations on block {} page {}, {} bytes on the wire",
        c.challenge_id,
        c.locations.len(),
        c.block,
        c.page,
        c.encoded_len()
    );
    Ok(())
}

pub fn respond(
    cfg: &RunConfig,
    chip_path: Option<PathBuf>,
    challenge: &Path,
    out: &Path,
) -> Result<(), CliError> {
    let chip_path = chip_path.unwrap_or_else(|| cfg.paths.chip.clone());
    let c: Challenge = envelope::read(challenge, CHALLENGE_FORMAT)?.body;
    let mut chip = load_chip(&chip_path)?;
    let life = chip.life_used(c.block)?;
    let t = c.decode_threshold.max(adaptive_threshold(life));
    let r = generate_response_with(&mut chip, &c, t)?;
    save_chip(&chip, &chip_path)?;
    envelope::write(out, RESPONSE_FORMAT, cfg, &r)?;
    println!(
        "response {:016x}: {} bits, decode threshold {t}",
        r.challenge_id,
        r.bits.len()
    );
    Ok(())
}

pub fn verify(expected: &Path, response: &Path) -> Result<(), CliError> {
    let e: ExpectedResponse = envelope::read(expected, EXPECTED_FORMAT)?.body;
    let r: ResponseBits = envelope::read(response, RESPONSE_FORMAT)?.body;
    if e.challenge_id != r.challenge_id {
        return Err(CliError::Failed(format!(
            "response is for challenge {:016x}, expected {:016x}",
            r.challenge_id, e.challenge_id
        )));
    }
    let Verdict {
        exact,
        hamming_distance,
    } = verify_response(&e, &r)?;
    println!(
        "challenge {:016x}: {hamming_distance} of {} bits differ",
        e.challenge_id,
        e.bits.len()
    );
    if exact {
        println!("match");
        Ok(())
    } else {
        Err(CliError::Failed("response does not match".into()))
    }
}

pub fn age(
    cfg: &RunConfig,
    chip_path: Option<PathBuf>,
    block: u32,
    cycles: Option<u32>,
    life: Option<f64>,
) -> Result<(), CliError> {
    let chip_path = chip_path.unwrap_or_else(|| cfg.paths.chip.clone());
    let mut chip = load_chip(&chip_path)?;
    let cycles = match (cycles, life) {
        (Some(c), _) => c,
        (None, Some(l)) if (0.0..=1.0).contains(&l) => {
            let target = (l * f64::from(chip.params().pec_rating)).round() as u32;
            target.saturating_sub(chip.erase_count(block)?)
        }
        (None, Some(l)) => {
            return Err(CliError::Usage(format!(
                "--life must be in [0, 1], got {l}"
            )))
        }
        (None, None) => return Err(CliError::Usage("give --cycles or --life".into())),
    };
    chip.age_block(block, cycles)?;
    save_chip(&chip, &chip_path)?;
    println!(
        "block {block}: {} erases, life used {:.4}",
        chip.erase_count(block)?,
        chip.life_used(block)?
    );
    Ok(())
}

pub fn metrics(
    cfg: &RunConfig,
    format: ReportFormat,
    out: Option<PathBuf>,
) -> Result<(), CliError> {
    let report = MetricsReport::run(cfg)?;
    let ext = match format {
        ReportFormat::Json => "json",
        ReportFormat::Csv => "csv",
    };
    let out = out.unwrap_or_else(|| cfg.paths.reports.join(format!("metrics.{ext}")));
    ensure_parent(&out)?;
    report.write(&out, format)?;
    for p in &report.inter_hd {
        println!(
            "inter-HD {}{}: min {:.4} mean {:.4} max {:.4} over {} responses",
            p.population,
            if p.gated { "" } else { " (informational)" },
            p.summary.min,
            p.summary.mean,
            p.summary.max,
            p.responses
        );
    }
    if let Some(e) = &report.entropy {
        println!(
            "entropy: Shannon {:.4} / min-entropy {:.4} per bit",
            e.shannon_per_bit, e.min_entropy_per_bit
        );
    }
    for c in &report.aging.curves {
        let points: Vec<String> = c
            .points
            .iter()
            .map(|p| format!("{:.2}:{:.3e}", p.life, p.mean_error))
            .collect();
        println!("aging {}: {}", c.policy.label(), points.join(" "));
    }
    println!("wrote {}", out.display());
    match &report.reliability {
        Some(r) if r.is_ok() => {
            if let (Some(s), Some(x)) = (&r.summary, r.exact_rate) {
                println!(
                    "reliability: mean per-bit error {:.3e}, exact {:.4} over {} trials",
                    s.mean, x, r.trials
                );
            }
            Ok(())
        }
        Some(r) => {
            println!("reliability: {}", r.status);
            Err(CliError::Config(format!(
                "reliability needs at least 2 trials, got {}",
                r.trials
            )))
        }
        None => Ok(()),
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct OpsPerResponse {
    programs: f64,
    reads: f64,
    erases: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct BenchReport {
    label: String,
    iterations: usize,
    response_bits: usize,
    mean_ms: f64,
    p95_ms: f64,
    min_ms: f64,
    max_ms: f64,
    programs: u64,
    reads: u64,
    erases: u64,
    ops_per_response: OpsPerResponse,
}

pub fn bench(cfg: &RunConfig, out: Option<PathBuf>) -> Result<(), CliError> {
    let n = cfg.experiment.bench_iterations;
    if n == 0 {
        return Err(CliError::Usage("--iterations must be at least 1".into()));
    }
    let mut chip = fabricate_from(cfg)?;
    let g = *chip.geometry();
    let id = default_chip_id(&chip);
    let e = enroll_pages(
        &mut chip,
        &id,
        enrollment_order(&g),
        1,
        cfg.experiment.min_quota,
    )?;
    let map = &e
        .first()
        .ok_or_else(|| CliError::Failed("no page could be enrolled".into()))?
        .map;
    let (c, _) = plan_challenge(
        map,
        cfg.seeds.layout,
        cfg.experiment.response_bits,
        adaptive_threshold(0.0),
    )?;

    let before = chip.counters();
    let mut ms = Vec::with_capacity(n);
    for _ in 0..n {
        let t0 = Instant::now();
        generate_response(&mut chip, &c)?;
        ms.push(t0.elapsed().as_secs_f64() * 1e3);
    }
    let after = chip.counters();
    let mut sorted = ms.clone();
    sorted.sort_by(f64::total_cmp);
    let p95 = sorted[((0.95 * n as f64).ceil() as usize).clamp(1, n) - 1];
    let (programs, reads, erases) = (
        after.programs - before.programs,
        after.reads - before.reads,
        after.erases - before.erases,
    );
    let per = |x: u64| x as f64 / n as f64;
    let report = BenchReport {
        label: BENCH_LABEL.to_string(),
        iterations: n,
        response_bits: c.locations.len(),
        mean_ms: ms.iter().sum::<f64>() / n as f64,
        p95_ms: p95,
        min_ms: sorted[0],
        max_ms: sorted[n - 1],
        programs,
        reads,
        erases,
        ops_per_response: OpsPerResponse {
            programs: per(programs),
            reads: per(reads),
            erases: per(erases),
        },
    };
    println!("{BENCH_LABEL}");
    println!(
        "{} iterations of a {}-bit response: mean {:.3} ms, p95 {:.3} ms",
        n, report.response_bits, report.mean_ms, report.p95_ms
    );
    println!("operations: {programs} programs, {reads} reads, {erases} erases");
    let out = out.unwrap_or_else(|| cfg.paths.reports.join("bench.json"));
    envelope::write(&out, BENCH_FORMAT, cfg, &report)?;
    println!("wrote {}", out.display());
    Ok(())
}

pub fn compact(cfg: &RunConfig, store_path: Option<PathBuf>) -> Result<(), CliError> {
    let store_path = store_path.unwrap_or_else(|| cfg.paths.store.clone());
    let mut store = open_store(&store_path)?;
    let before = store.line_count();
    store.compact()?;
    println!(
        "{}: {before} records compacted to {}",
        store_path.display(),
        store.line_count()
    );
    Ok(())
}
