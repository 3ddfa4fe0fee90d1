//! Run reports and their on-disk forms: `report.json`, a flat
//! `metrics.csv` row per run, the training curve and the per-step action
//! log.

use std::fs::OpenOptions;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::erl::GenStats;
use crate::error::Result;
use crate::scaling::StepKind;
use crate::sim::{StepMetrics, TransientConfig};

/// Nearest-rank response-time percentiles, milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Percentiles {
    pub p50: f64,
    pub p90: f64,
    pub p95: f64,
    pub p99: f64,
    pub max: f64,
}

/// Nearest-rank percentiles; `None` when there are no responses.
pub fn percentiles(responses_ms: &[f64]) -> Option<Percentiles> {
    if responses_ms.is_empty() {
        return None;
    }
    let mut v = responses_ms.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let at = |p: f64| v[((p / 100.0 * n as f64).ceil() as usize).clamp(1, n) - 1];
    Some(Percentiles {
        p50: at(50.0),
        p90: at(90.0),
        p95: at(95.0),
        p99: at(99.0),
        max: v[n - 1],
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionBreakdown {
    pub vertical: u64,
    pub horizontal: u64,
    pub noop: u64,
}

impl ActionBreakdown {
    pub fn total(&self) -> u64 {
        self.vertical + self.horizontal + self.noop
    }
}

/// One decision step as recorded in a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub kind: StepKind,
    pub ind: Option<usize>,
    pub scale: Option<i32>,
    pub invalid: bool,
    pub placement_failures: u32,
    pub admitted: u64,
    pub completed: u64,
    pub step_art_ms: Option<f64>,
    pub cost_usd: f64,
    pub replicas: Vec<u32>,
}

impl From<&StepMetrics> for StepRecord {
    fn from(m: &StepMetrics) -> Self {
        Self {
            step: m.step,
            kind: m.kind,
            ind: m.action.map(|a| a.ind),
            scale: m.action.map(|a| a.scale),
            invalid: m.invalid_action,
            placement_failures: m.placement_failures,
            admitted: m.admitted,
            completed: m.completed,
            step_art_ms: m.step_art_ms,
            cost_usd: m.cumulative_cost,
            replicas: m.replicas.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: String,
    pub policy: String,
    pub seed: u64,
    pub variant: String,
    pub transient: TransientConfig,
    pub steps: usize,
    pub admitted: u64,
    pub completed: u64,
    pub rejected: u64,
    /// `None` when no request completed.
    pub art_ms: Option<f64>,
    pub percentiles: Option<Percentiles>,
    pub cost_usd: f64,
    pub budget_usd: f64,
    pub rho: f64,
    pub violation_pct: f64,
    pub objective: f64,
    pub breakdown: ActionBreakdown,
    pub timeline: Vec<StepRecord>,
    pub curve: Vec<GenStats>,
}

impl RunReport {
    /// Replica counts per microservice at the end of each step.
    pub fn replicas_over_time(&self) -> Vec<Vec<u32>> {
        self.timeline.iter().map(|s| s.replicas.clone()).collect()
    }
}

const METRICS_HEADER: [&str; 21] = [
    "scenario",
    "policy",
    "variant",
    "seed",
    "steps",
    "admitted",
    "completed",
    "rejected",
    "art_ms",
    "p50_ms",
    "p90_ms",
    "p95_ms",
    "p99_ms",
    "max_ms",
    "cost_usd",
    "budget_usd",
    "violation_pct",
    "objective",
    "vertical",
    "horizontal",
    "noop",
];

const NO_REQUESTS: &str = "no-requests";

fn ms(v: Option<f64>) -> String {
    v.map_or_else(|| NO_REQUESTS.to_string(), |x| format!("{x:.2}"))
}

/// The flat metrics row of a report, in header order.
pub fn metrics_row(r: &RunReport) -> Vec<String> {
    let p = r.percentiles;
    vec![
        r.scenario.clone(),
        r.policy.clone(),
        r.variant.clone(),
        r.seed.to_string(),
        r.steps.to_string(),
        r.admitted.to_string(),
        r.completed.to_string(),
        r.rejected.to_string(),
        ms(r.art_ms),
        ms(p.map(|p| p.p50)),
        ms(p.map(|p| p.p90)),
        ms(p.map(|p| p.p95)),
        ms(p.map(|p| p.p99)),
        ms(p.map(|p| p.max)),
        format!("{:.4}", r.cost_usd),
        format!("{:.2}", r.budget_usd),
        format!("{:.2}", r.violation_pct),
        format!("{:.3}", r.objective),
        r.breakdown.vertical.to_string(),
        r.breakdown.horizontal.to_string(),
        r.breakdown.noop.to_string(),
    ]
}

/// Append one row to `path`, writing the header first if the file is new.
pub fn append_metrics(r: &RunReport, path: &Path) -> Result<()> {
    let fresh = !path.exists() || std::fs::metadata(path)?.len() == 0;
    let file = OpenOptions::new().create(true).append(true).open(path)?;
    let mut w = csv::Writer::from_writer(file);
    if fresh {
        w.write_record(METRICS_HEADER)?;
    }
    w.write_record(metrics_row(r))?;
    w.flush()?;
    Ok(())
}

pub fn write_curve(curve: &[GenStats], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["gen", "best_F", "mean_F", "best_ART", "best_cost", "discarded"])?;
    for g in curve {
        w.write_record([
            g.gen.to_string(),
            format!("{:.6}", g.best_fitness),
            format!("{:.6}", g.mean_fitness),
            ms(g.best_art_ms),
            format!("{:.4}", g.best_cost_usd),
            g.discarded.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_actions(r: &RunReport, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "step",
        "kind",
        "ind",
        "scale",
        "invalid",
        "placement_failures",
        "replicas",
        "cost_usd",
    ])?;
    let opt = |v: Option<String>| v.unwrap_or_default();
    for s in &r.timeline {
        w.write_record([
            s.step.to_string(),
            s.kind.as_str().to_string(),
            opt(s.ind.map(|v| v.to_string())),
            opt(s.scale.map(|v| v.to_string())),
            s.invalid.to_string(),
            s.placement_failures.to_string(),
            s.replicas.iter().sum::<u32>().to_string(),
            format!("{:.4}", s.cost_usd),
        ])?;
    }
    let b = r.breakdown;
    for (kind, n) in [("vertical", b.vertical), ("horizontal", b.horizontal), ("noop", b.noop)] {
        w.write_record(["total", kind, "", "", "", "", &n.to_string(), ""])?;
    }
    w.flush()?;
    Ok(())
}

/// Write `report.json`, `curve.csv` and `actions.csv` into `dir` and append
/// the run to `dir/metrics.csv`.
pub fn emit_report(r: &RunReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("report.json"), serde_json::to_string_pretty(r)? + "\n")?;
    write_curve(&r.curve, &dir.join("curve.csv"))?;
    write_actions(r, &dir.join("actions.csv"))?;
    append_metrics(r, &dir.join("metrics.csv"))
}

/// Read back `dir/report.json`.
pub fn load_report(dir: &Path) -> Result<RunReport> {
    let text = std::fs::read_to_string(dir.join("report.json"))?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::{prop, prop_assert, prop_assert_eq, proptest};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn sample_report() -> RunReport {
        RunReport {
            scenario: "toy".into(),
            policy: "aws".into(),
            seed: 1,
            variant: "full".into(),
            transient: TransientConfig::NORMAL,
            steps: 2,
            admitted: 3,
            completed: 3,
            rejected: 0,
            art_ms: Some(123.456789),
            percentiles: percentiles(&[100.0, 120.0, 150.37]),
            cost_usd: 226.78,
            budget_usd: 200.0,
            rho: 100.0,
            violation_pct: crate::model::violation_degree(226.78, 200.0),
            objective: -0.1 / 3.0,
            breakdown: ActionBreakdown {
                vertical: 0,
                horizontal: 1,
                noop: 1,
            },
            timeline: vec![StepRecord {
                step: 0,
                kind: StepKind::Horizontal,
                ind: Some(0),
                scale: Some(2),
                invalid: false,
                placement_failures: 0,
                admitted: 3,
                completed: 3,
                step_art_ms: Some(1.0 / 7.0),
                cost_usd: 0.1,
                replicas: vec![2, 1],
            }],
            curve: vec![GenStats {
                gen: 0,
                best_fitness: -1.5,
                mean_fitness: -2.25,
                best_art_ms: None,
                best_cost_usd: 3.0,
                discarded: 0,
            }],
        }
    }

    #[test]
    fn percentile_examples() {
        let p = percentiles(&[100.0]).unwrap();
        assert_eq!([p.p50, p.p90, p.p95, p.p99, p.max], [100.0; 5]);
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        let p = percentiles(&v).unwrap();
        assert_eq!((p.p50, p.p90, p.p95, p.p99, p.max), (50.0, 90.0, 95.0, 99.0, 100.0));
        assert!(percentiles(&[]).is_none());
    }

    #[test]
    fn percentiles_match_sort_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let v: Vec<f64> = (0..10_000).map(|_| rng.random_range(0.0..5000.0)).collect();
        let mut s = v.clone();
        s.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let p = percentiles(&v).unwrap();
        // Rank ceil(p n / 100) with n = 10^4.
        assert_eq!(p.p50, s[4999]);
        assert_eq!(p.p90, s[8999]);
        assert_eq!(p.p95, s[9499]);
        assert_eq!(p.p99, s[9899]);
        assert_eq!(p.max, s[9999]);
    }

    #[test]
    fn violation_column_format() {
        let row = metrics_row(&sample_report());
        let col = METRICS_HEADER.iter().position(|h| *h == "violation_pct").unwrap();
        assert_eq!(row[col], "13.39");
        assert_eq!(row.len(), METRICS_HEADER.len());
    }

    #[test]
    fn missing_art_is_marked() {
        let mut r = sample_report();
        r.art_ms = None;
        r.percentiles = None;
        let row = metrics_row(&r);
        assert_eq!(row[8], NO_REQUESTS);
        assert_eq!(row[13], NO_REQUESTS);
    }

    #[test]
    fn emit_and_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let r = sample_report();
        emit_report(&r, dir.path()).unwrap();
        assert_eq!(load_report(dir.path()).unwrap(), r);
        for f in ["report.json", "curve.csv", "actions.csv", "metrics.csv"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
    }

    #[test]
    fn metrics_rows_append_under_one_header() {
        let dir = tempfile::tempdir().unwrap();
        let mut r = sample_report();
        emit_report(&r, dir.path()).unwrap();
        r.policy = "proscale".into();
        emit_report(&r, dir.path()).unwrap();
        let mut rd = csv::Reader::from_path(dir.path().join("metrics.csv")).unwrap();
        let header: Vec<String> = rd.headers().unwrap().iter().map(String::from).collect();
        assert_eq!(header, METRICS_HEADER);
        let rows: Vec<_> = rd.records().map(|r| r.unwrap()).collect();
        assert_eq!(rows.len(), 2);
        assert_eq!(&rows[0][1], "aws");
        assert_eq!(&rows[1][1], "proscale");
    }

    proptest! {
        #[test]
        fn percentiles_are_ordered(v in prop::collection::vec(0.0f64..1e6, 1..300)) {
            let p = percentiles(&v).unwrap();
            prop_assert!(p.p50 <= p.p90 && p.p90 <= p.p95 && p.p95 <= p.p99 && p.p99 <= p.max);
            prop_assert_eq!(p.max, v.iter().copied().fold(f64::MIN, f64::max));
        }
    }
}
