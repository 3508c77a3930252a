//! Replication orchestration, pooling and CSV/JSON emission.

use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::config::{ConfigError, Derived, RunConfig};
use crate::dwba::Scheme;
use crate::metrics::{ChannelUsage, DelayClass, DelayStats, DelaySummary};
use crate::pon::{LineRate, OnuId, OnuKind};
use crate::sim::{self, OnuParams, RunOutput, SimError, SimParams, Source};
use crate::traffic::{conventional_stream, mfh_stream, stream_rng, ConventionalSource, MfhSource};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("replication {replication}: {source}")]
    Sim {
        replication: u32,
        #[source]
        source: SimError,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl HarnessError {
    /// 1 for configuration and I/O problems, 2 for a broken model invariant.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Sim { source, .. } => match source {
                SimError::Setup(_) | SimError::Trace(_) => 1,
                _ => 2,
            },
            _ => 1,
        }
    }
}

/// Fixed CSV column order.
pub const CSV_COLUMNS: [&str; 20] = [
    "scenario",
    "scheme",
    "b_factor",
    "class",
    "area",
    "offered_load_bps",
    "guaranteed_bps",
    "samples",
    "min_ps",
    "p1_ps",
    "p25_ps",
    "p50_ps",
    "p75_ps",
    "p99_ps",
    "p99_999_ps",
    "max_ps",
    "mean_ps",
    "channel_utilization",
    "grant_waste_ratio",
    "status",
];

/// One CSV row: a delay class of one (scenario, scheme, b_factor) cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub scenario: String,
    pub scheme: String,
    pub b_factor: f64,
    pub class: String,
    pub area: String,
    /// Per ONU; for the conventional class, the load of each conventional ONU.
    pub offered_load_bps: u64,
    pub guaranteed_bps: u64,
    pub summary: Option<DelaySummary>,
    pub channel_utilization: Vec<f64>,
    pub grant_waste_ratio: f64,
    pub status: String,
}

impl SummaryRow {
    fn record(&self) -> Vec<String> {
        let t = |f: fn(&DelaySummary) -> u64| self.summary.as_ref().map_or(String::new(), |s| f(s).to_string());
        vec![
            self.scenario.clone(),
            self.scheme.clone(),
            format!("{:.2}", self.b_factor),
            self.class.clone(),
            self.area.clone(),
            self.offered_load_bps.to_string(),
            self.guaranteed_bps.to_string(),
            self.summary.as_ref().map_or("0".into(), |s| s.count.to_string()),
            t(|s| s.min.as_ps()),
            t(|s| s.p1.as_ps()),
            t(|s| s.p25.as_ps()),
            t(|s| s.p50.as_ps()),
            t(|s| s.p75.as_ps()),
            t(|s| s.p99.as_ps()),
            t(|s| s.p99_999.as_ps()),
            t(|s| s.max.as_ps()),
            self.summary.as_ref().map_or(String::new(), |s| format!("{:.3}", s.mean_ps)),
            self.channel_utilization
                .iter()
                .map(|u| format!("{u:.6}"))
                .collect::<Vec<_>>()
                .join("|"),
            format!("{:.6}", self.grant_waste_ratio),
            self.status.clone(),
        ]
    }
}

/// Pooled outcome of all replications of one configuration.
#[derive(Debug, Clone)]
pub struct ScenarioResult {
    pub config: RunConfig,
    pub derived: Derived,
    pub stats: DelayStats,
    pub channels: Vec<ChannelUsage>,
    pub rows: Vec<SummaryRow>,
    pub generated_bytes: Vec<u64>,
    pub delivered_bytes: Vec<u64>,
    /// Customer cycles closed across all replications.
    pub customer_cycles: u64,
}

impl ScenarioResult {
    pub fn row(&self, class: DelayClass) -> Option<&SummaryRow> {
        let name = class.to_string();
        self.rows.iter().find(|r| r.class == name)
    }

    pub fn mfh_summaries(&self) -> Vec<(OnuId, Option<DelaySummary>)> {
        (0..self.config.n_mfh_onus)
            .map(|i| (OnuId(i), self.row(DelayClass::Mfh(OnuId(i))).and_then(|r| r.summary)))
            .collect()
    }
}

/// Model parameters and seeded sources for replication `rep`.
pub fn build_replication(cfg: &RunConfig, derived: &Derived, rep: u32, timeline: bool) -> Result<(SimParams, Vec<Source>), HarnessError> {
    let seed = cfg.base_seed.wrapping_add(rep as u64);
    let sim_err = |e: crate::traffic::TrafficError| HarnessError::Sim {
        replication: rep,
        source: SimError::Setup(e.to_string()),
    };
    let mut onus = Vec::with_capacity(cfg.n_onus);
    let mut sources = Vec::with_capacity(cfg.n_onus);
    for i in 0..cfg.n_onus {
        let onu = OnuId(i);
        let mfh = i < cfg.n_mfh_onus;
        onus.push(OnuParams {
            kind: if mfh { OnuKind::Mfh } else { OnuKind::Conventional },
            propagation: derived.propagation[i],
            w_max: derived.w_max_bytes[i],
        });
        sources.push(if mfh {
            Source::Mfh(
                MfhSource::poisson(
                    onu,
                    derived.mfh_load_bps[i],
                    cfg.burst_period,
                    LineRate(cfg.ingress_rate_bps),
                    stream_rng(seed, mfh_stream(onu)),
                )
                .map_err(sim_err)?,
            )
        } else {
            Source::Conventional(
                ConventionalSource::poisson(
                    onu,
                    derived.conventional_load_bps,
                    cfg.frame_mix.clone(),
                    stream_rng(seed, conventional_stream(onu)),
                )
                .map_err(sim_err)?,
            )
        });
    }
    let params = SimParams {
        scheme: cfg.scheme_config(),
        onus,
        n_wavelengths: cfg.n_wavelengths,
        line_rate: LineRate(cfg.line_rate_bps),
        guard: cfg.guard_time,
        report_bytes: cfg.report_bytes,
        duration: cfg.sim_duration,
        warmup: derived.effective_warmup,
        customer: (0..cfg.n_mfh_onus).map(OnuId).collect(),
        timeline,
    };
    Ok((params, sources))
}

pub fn run_replication(cfg: &RunConfig, rep: u32, trace: Option<Box<dyn Write + Send>>) -> Result<RunOutput, HarnessError> {
    let derived = cfg.derive()?;
    let (params, sources) = build_replication(cfg, &derived, rep, false)?;
    sim::run(params, sources, trace).map_err(|source| HarnessError::Sim { replication: rep, source })
}

/// All replications (in parallel), pooled in replication order.
pub fn run_scenario(cfg: &RunConfig) -> Result<ScenarioResult, HarnessError> {
    let derived = cfg.derive()?;
    let outputs: Vec<Result<RunOutput, HarnessError>> = (0..cfg.replications)
        .into_par_iter()
        .map(|rep| {
            let (params, sources) = build_replication(cfg, &derived, rep, false)?;
            sim::run(params, sources, None).map_err(|source| HarnessError::Sim { replication: rep, source })
        })
        .collect();

    let mut stats = DelayStats::new(derived.effective_warmup);
    let mut channels = vec![ChannelUsage::default(); cfg.n_wavelengths];
    let mut generated_bytes = vec![0u64; cfg.n_onus];
    let mut delivered_bytes = vec![0u64; cfg.n_onus];
    let mut customer_cycles = 0;
    for out in outputs {
        let out = out?;
        customer_cycles += out.customer_cycles;
        for (acc, c) in channels.iter_mut().zip(&out.channels) {
            acc.merge(c);
        }
        for (acc, b) in generated_bytes.iter_mut().zip(&out.generated_bytes) {
            *acc += b;
        }
        for (acc, b) in delivered_bytes.iter_mut().zip(&out.delivered_bytes) {
            *acc += b;
        }
        stats.merge(out.stats);
    }

    let summaries = stats.summarize();
    let utilization: Vec<f64> = channels.iter().map(ChannelUsage::utilization).collect();
    let waste = stats.grant_waste_ratio();
    let rows = summaries
        .into_iter()
        .map(|(class, summary)| {
            let (area, load, guaranteed) = match class {
                DelayClass::Mfh(onu) => (
                    cfg.mfh_areas[onu.0].to_string(),
                    derived.mfh_load_bps[onu.0],
                    derived.mfh_guaranteed_bps[onu.0],
                ),
                DelayClass::Conventional => (
                    String::new(),
                    derived.conventional_load_bps,
                    derived.conventional_guaranteed_bps,
                ),
            };
            SummaryRow {
                scenario: cfg.scenario.to_string(),
                scheme: cfg.scheme.to_string(),
                b_factor: cfg.b_factor,
                class: class.to_string(),
                area,
                offered_load_bps: load,
                guaranteed_bps: guaranteed,
                status: if summary.is_some() { "ok" } else { "absent" }.to_string(),
                summary,
                channel_utilization: utilization.clone(),
                grant_waste_ratio: waste,
            }
        })
        .collect();
    Ok(ScenarioResult {
        config: cfg.clone(),
        derived,
        stats,
        channels,
        rows,
        generated_bytes,
        delivered_bytes,
        customer_cycles,
    })
}

/// One grid cell of a sweep.
#[derive(Debug)]
pub struct SweepCell {
    pub scheme: Scheme,
    pub b_factor: f64,
    pub outcome: Result<Vec<SummaryRow>, String>,
}

impl SweepCell {
    fn rows(&self, cfg: &RunConfig) -> Vec<SummaryRow> {
        match &self.outcome {
            Ok(rows) => rows.clone(),
            Err(reason) => vec![SummaryRow {
                scenario: cfg.scenario.to_string(),
                scheme: self.scheme.to_string(),
                b_factor: self.b_factor,
                class: String::new(),
                area: String::new(),
                offered_load_bps: 0,
                guaranteed_bps: 0,
                summary: None,
                channel_utilization: Vec::new(),
                grant_waste_ratio: 0.0,
                status: format!("failed: {reason}"),
            }],
        }
    }
}

/// Every `b_factor x scheme` cell of the config's sweep grid. A failing
/// cell is recorded and the rest still run.
pub fn sweep(cfg: &RunConfig) -> Vec<SweepCell> {
    let mut cells = Vec::new();
    for &scheme in &cfg.sweep_schemes {
        for &b_factor in &cfg.sweep_b_factors {
            let mut c = cfg.clone();
            c.scheme = scheme;
            c.b_factor = b_factor;
            let outcome = run_scenario(&c).map(|r| r.rows).map_err(|e| e.to_string());
            cells.push(SweepCell {
                scheme,
                b_factor,
                outcome,
            });
        }
    }
    cells
}

pub fn sweep_rows(cfg: &RunConfig, cells: &[SweepCell]) -> Vec<SummaryRow> {
    cells.iter().flat_map(|c| c.rows(cfg)).collect()
}

pub fn write_csv<W: Write>(out: W, rows: &[SummaryRow]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_COLUMNS)?;
    for r in rows {
        w.write_record(r.record())?;
    }
    w.flush().map_err(|source| HarnessError::Io {
        path: PathBuf::from("<csv>"),
        source,
    })?;
    Ok(())
}

pub fn csv_string(rows: &[SummaryRow]) -> Result<String, HarnessError> {
    let mut buf = Vec::new();
    write_csv(&mut buf, rows)?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}

/// Sidecar path for a results file: same stem, `.json`.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

/// Writes `rows` to `csv_path` and the resolved config next to it.
pub fn write_outputs(cfg: &RunConfig, rows: &[SummaryRow], csv_path: &Path) -> Result<PathBuf, HarnessError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| HarnessError::Io { path, source }
    };
    let file = std::fs::File::create(csv_path).map_err(io(csv_path))?;
    write_csv(std::io::BufWriter::new(file), rows)?;
    let side = sidecar_path(csv_path);
    let mut json = cfg.to_json()?;
    json.push('\n');
    std::fs::write(&side, json).map_err(io(&side))?;
    Ok(side)
}
