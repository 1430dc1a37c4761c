use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    aging_sweep, inter_hd, min_entropy, run_study, shannon_entropy, AgingCurve, AgingSettings,
    ChipFactory, MetricsError, PopulationStudy, StudySettings, Summary, ThresholdPolicy,
};
use crate::config::RunConfig;
use crate::halo::Threshold;

pub const REPORT_SCHEMA: &str = "halo-puf.metrics";
pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Json,
    Csv,
}

impl std::str::FromStr for ReportFormat {
    type Err = MetricsError;

    fn from_str(s: &str) -> Result<Self, MetricsError> {
        match s {
            "json" => Ok(Self::Json),
            "csv" => Ok(Self::Csv),
            _ => Err(MetricsError::Format(format!("unknown report format {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HdPopulation {
    pub population: String,
    /// Whether the population is the one the uniqueness target applies to.
    pub gated: bool,
    pub responses: usize,
    pub summary: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilitySection {
    pub status: String,
    pub trials: usize,
    pub summary: Option<Summary>,
    pub exact_rate: Option<f64>,
}

impl ReliabilitySection {
    pub const OK: &'static str = "ok";
    pub const INSUFFICIENT: &'static str = "insufficient trials";

    pub fn is_ok(&self) -> bool {
        self.status == Self::OK
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropySection {
    pub population: String,
    pub responses: usize,
    pub shannon_per_bit: f64,
    pub min_entropy_per_bit: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AgingSection {
    pub curves: Vec<AgingCurve>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnrollmentSection {
    pub pages: usize,
    pub usable: Summary,
    pub candidates: Summary,
}

/// Machine-readable metrics report. Serialisation is deterministic: the same
/// report always produces the same bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub schema: String,
    pub schema_version: u32,
    pub config: RunConfig,
    pub response_bits: usize,
    pub chips: usize,
    pub enrollment: Option<EnrollmentSection>,
    pub inter_hd: Vec<HdPopulation>,
    pub reliability: Option<ReliabilitySection>,
    pub entropy: Option<EntropySection>,
    pub aging: AgingSection,
}

impl MetricsReport {
    pub fn empty(config: RunConfig) -> Self {
        Self {
            schema: REPORT_SCHEMA.into(),
            schema_version: REPORT_SCHEMA_VERSION,
            response_bits: config.experiment.response_bits,
            chips: 0,
            config,
            enrollment: None,
            inter_hd: Vec::new(),
            reliability: None,
            entropy: None,
            aging: AgingSection::default(),
        }
    }

    pub fn from_study(
        config: RunConfig,
        t: &PopulationStudy,
        aging: Vec<AgingCurve>,
    ) -> Result<Self, MetricsError> {
        let mut r = Self::empty(config);
        r.chips = t.cross_chip.len();
        r.response_bits = t.cross_chip.response_bits().unwrap_or(r.response_bits);

        let usable: Vec<f64> = t.enrollment.iter().map(|s| s.usable() as f64).collect();
        let candidates: Vec<f64> = t.enrollment.iter().map(|s| s.candidates() as f64).collect();
        if let (Some(usable), Some(candidates)) = (Summary::of(&usable), Summary::of(&candidates)) {
            r.enrollment = Some(EnrollmentSection {
                pages: t.enrollment.len(),
                usable,
                candidates,
            });
        }

        for (name, gated, corpus) in [
            ("cross_chip", true, &t.cross_chip),
            ("cross_page", false, &t.cross_page),
            ("foreign_challenge", false, &t.foreign_challenge),
        ] {
            if corpus.len() >= 2 {
                r.inter_hd.push(HdPopulation {
                    population: name.into(),
                    gated,
                    responses: corpus.len(),
                    summary: inter_hd(&corpus.bits())?,
                });
            }
        }

        r.reliability = Some(match t.reliability()? {
            Some((summary, exact)) => ReliabilitySection {
                status: ReliabilitySection::OK.into(),
                trials: t.trials.len(),
                summary: Some(summary),
                exact_rate: Some(exact),
            },
            None => ReliabilitySection {
                status: ReliabilitySection::INSUFFICIENT.into(),
                trials: t.trials.len(),
                summary: None,
                exact_rate: None,
            },
        });

        let bits = t.cross_chip.bits();
        if let Ok(h) = shannon_entropy(&bits) {
            r.entropy = Some(EntropySection {
                population: "cross_chip".into(),
                responses: bits.len(),
                shannon_per_bit: h,
                min_entropy_per_bit: min_entropy(&bits)?,
            });
        }
        r.aging.curves = aging;
        Ok(r)
    }

    /// Runs the full experiment described by `config`: the response
    /// populations plus fixed-threshold and adaptive aging curves.
    pub fn run(config: &RunConfig) -> Result<Self, MetricsError> {
        let factory = ChipFactory::from_config(config)?;
        let e = &config.experiment;
        let study = run_study(
            &factory,
            &StudySettings {
                chips: e.chips,
                trials: e.trials,
                response_bits: e.response_bits,
                layout_seed: config.seeds.layout,
                block: 0,
                min_quota: e.min_quota,
                threshold: Threshold::FRESH,
                cross_pages: e.chips,
            },
        )?;
        let mut curves = Vec::new();
        if !e.aging_checkpoints.is_empty() {
            let settings = AgingSettings {
                checkpoints: e.aging_checkpoints.clone(),
                responses_per_point: e.aging_responses,
                blocks: e.aging_blocks,
                response_bits: e.response_bits,
                layout_seed: config.seeds.layout,
                min_quota: e.min_quota,
                chip_index: 0,
            };
            for policy in [
                ThresholdPolicy::Fixed(Threshold::FRESH),
                ThresholdPolicy::Adaptive,
            ] {
                curves.push(aging_sweep(&factory, &settings, policy)?);
            }
        }
        Self::from_study(config.clone(), &study, curves)
    }

    pub fn hd(&self, population: &str) -> Option<&HdPopulation> {
        self.inter_hd.iter().find(|p| p.population == population)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report is serializable");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, MetricsError> {
        let r: Self =
            serde_json::from_str(text).map_err(|e| MetricsError::Format(e.to_string()))?;
        if r.schema != REPORT_SCHEMA || r.schema_version != REPORT_SCHEMA_VERSION {
            return Err(MetricsError::Format(format!(
                "unsupported report schema {} v{}",
                r.schema, r.schema_version
            )));
        }
        Ok(r)
    }

    /// Flat `(section, population, metric, value)` rows of the CSV form.
    pub fn csv_rows(&self) -> Vec<[String; 4]> {
        let mut rows = Vec::new();
        let mut row =
            |a: &str, b: &str, c: &str, d: String| rows.push([a.into(), b.into(), c.into(), d]);
        row("meta", "", "schema", self.schema.clone());
        row(
            "meta",
            "",
            "schema_version",
            self.schema_version.to_string(),
        );
        row(
            "meta",
            "",
            "config",
            serde_json::to_string(&self.config).expect("serializable"),
        );
        row("meta", "", "response_bits", self.response_bits.to_string());
        row("meta", "", "chips", self.chips.to_string());
        let summary =
            |row: &mut dyn FnMut(&str, &str, &str, String), sec: &str, pop: &str, s: &Summary| {
                row(sec, pop, "min", s.min.to_string());
                row(sec, pop, "mean", s.mean.to_string());
                row(sec, pop, "max", s.max.to_string());
            };
        if let Some(e) = &self.enrollment {
            row("enrollment", "", "pages", e.pages.to_string());
            summary(&mut row, "enrollment", "usable", &e.usable);
            summary(&mut row, "enrollment", "candidates", &e.candidates);
        }
        for p in &self.inter_hd {
            row("inter_hd", &p.population, "gated", p.gated.to_string());
            row(
                "inter_hd",
                &p.population,
                "responses",
                p.responses.to_string(),
            );
            summary(&mut row, "inter_hd", &p.population, &p.summary);
        }
        if let Some(r) = &self.reliability {
            row("reliability", "", "status", r.status.clone());
            row("reliability", "", "trials", r.trials.to_string());
            if let Some(s) = &r.summary {
                summary(&mut row, "reliability", "", s);
            }
            if let Some(x) = r.exact_rate {
                row("reliability", "", "exact_rate", x.to_string());
            }
        }
        if let Some(e) = &self.entropy {
            row(
                "entropy",
                &e.population,
                "responses",
                e.responses.to_string(),
            );
            row(
                "entropy",
                &e.population,
                "shannon_per_bit",
                e.shannon_per_bit.to_string(),
            );
            row(
                "entropy",
                &e.population,
                "min_entropy_per_bit",
                e.min_entropy_per_bit.to_string(),
            );
        }
        for c in &self.aging.curves {
            let label = c.policy.label();
            for p in &c.points {
                let at = |m: &str| format!("{m}@{}", p.life);
                row("aging", &label, &at("responses"), p.responses.to_string());
                row("aging", &label, &at("mean_error"), p.mean_error.to_string());
                row("aging", &label, &at("max_error"), p.error.max.to_string());
                row("aging", &label, &at("exact_rate"), p.exact_rate.to_string());
            }
        }
        rows
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["section", "population", "metric", "value"])
            .expect("in-memory write");
        for r in self.csv_rows() {
            w.write_record(&r).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
    }

    pub fn parse_csv(text: &str) -> Result<Vec<[String; 4]>, MetricsError> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let header = r
            .headers()
            .map_err(|e| MetricsError::Format(e.to_string()))?;
        if header != vec!["section", "population", "metric", "value"] {
            return Err(MetricsError::Format("unexpected CSV header".into()));
        }
        r.records()
            .map(|rec| {
                let rec = rec.map_err(|e| MetricsError::Format(e.to_string()))?;
                Ok([0, 1, 2, 3].map(|i| rec[i].to_string()))
            })
            .collect()
    }

    pub fn render(&self, format: ReportFormat) -> String {
        match format {
            ReportFormat::Json => self.to_json(),
            ReportFormat::Csv => self.to_csv(),
        }
    }

    pub fn write(&self, path: &Path, format: ReportFormat) -> Result<(), MetricsError> {
        fs::write(path, self.render(format))?;
        Ok(())
    }
}
