//! Request traces, train/test splitting, arrival generation and the simple
//! moving-average workload predictor.

use std::collections::VecDeque;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Length of one trace time unit in seconds.
pub const TIME_UNIT_S: f64 = 180.0;

/// Number of leading time units used for training on full-length traces.
pub const TRAIN_UNITS: usize = 480;

/// Request counts, one per time unit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace {
    pub name: String,
    counts: Vec<u64>,
}

impl Trace {
    pub fn new(name: impl Into<String>, counts: Vec<u64>) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::Empty("trace has no time units".into()));
        }
        Ok(Self {
            name: name.into(),
            counts,
        })
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Parse a single-column CSV. A non-numeric first line is taken as a
    /// header; blank lines are skipped.
    pub fn parse(name: &str, text: &str, path: &Path) -> Result<Self> {
        let mut counts = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            let field = line.split(',').next().unwrap_or("").trim();
            match field.parse::<u64>() {
                Ok(v) => counts.push(v),
                Err(_) if i == 0 && field.parse::<f64>().is_err() && !field.starts_with('-') => {}
                Err(e) => {
                    return Err(Error::TraceParse {
                        path: path.to_path_buf(),
                        line: i + 1,
                        msg: format!("{field:?}: {e}"),
                    })
                }
            }
        }
        if counts.is_empty() {
            return Err(Error::Empty(format!("trace {} has no counts", path.display())));
        }
        Ok(Self {
            name: name.to_string(),
            counts,
        })
    }

    pub fn slice(&self, range: std::ops::Range<usize>) -> Result<Self> {
        Self::new(self.name.clone(), self.counts[range].to_vec())
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = String::from("count\n");
        for c in &self.counts {
            out.push_str(&c.to_string());
            out.push('\n');
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}

/// Load a trace file. The trace is named after the file stem.
pub fn load_trace(path: impl AsRef<Path>) -> Result<Trace> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "trace".into());
    Trace::parse(&name, &text, path)
}

/// Split into training and test parts: the first 480 units when the trace
/// covers two full days or more, otherwise the first half.
pub fn split_train_test(trace: &Trace) -> Result<(Trace, Trace)> {
    let n = trace.len();
    if n < 2 {
        return Err(Error::Domain(format!("cannot split a trace of length {n}")));
    }
    let at = if n >= 2 * TRAIN_UNITS { TRAIN_UNITS } else { n / 2 };
    split_at(trace, at)
}

/// Split at an explicit unit index; both sides must be non-empty.
pub fn split_at(trace: &Trace, at: usize) -> Result<(Trace, Trace)> {
    if at == 0 || at >= trace.len() {
        return Err(Error::Domain(format!(
            "split point {at} leaves an empty side of a length-{} trace",
            trace.len()
        )));
    }
    Ok((trace.slice(0..at)?, trace.slice(at..trace.len())?))
}

/// Arrival timestamps, in seconds, of the requests of time unit `step`.
///
/// Without jitter the arrivals are evenly spaced from the start of the unit.
/// With a jitter seed they are uniform over the unit, sorted, and depend only
/// on `(seed, step)`.
pub fn arrivals_in_step(count: u64, step: usize, unit_s: f64, jitter_seed: Option<u64>) -> Vec<f64> {
    let start = step as f64 * unit_s;
    match jitter_seed {
        None => (0..count).map(|k| start + k as f64 * unit_s / count as f64).collect(),
        Some(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(step as u64);
            let mut ts: Vec<f64> = (0..count).map(|_| start + rng.random::<f64>() * unit_s).collect();
            ts.sort_by(f64::total_cmp);
            ts
        }
    }
}

/// Bounded history of per-step request counts.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkloadHistory {
    window: usize,
    buf: VecDeque<f64>,
}

impl WorkloadHistory {
    pub fn new(window: usize) -> Result<Self> {
        if window == 0 {
            return Err(Error::Config("SMA window must be at least 1".into()));
        }
        Ok(Self {
            window,
            buf: VecDeque::with_capacity(window),
        })
    }

    pub fn push(&mut self, count: f64) {
        if self.buf.len() == self.window {
            self.buf.pop_front();
        }
        self.buf.push_back(count);
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.buf.iter().copied()
    }
}

/// Simple moving average over the buffered counts.
pub fn sma_predict(history: &WorkloadHistory) -> Result<f64> {
    if history.is_empty() {
        return Err(Error::Empty("workload history".into()));
    }
    Ok(history.buf.iter().sum::<f64>() / history.buf.len() as f64)
}

/// Shape of a synthetic diurnal trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceShape {
    /// Mean requests per unit.
    pub base: f64,
    /// Relative amplitude of the daily cycle, in `[0, 1]`.
    pub amplitude: f64,
    /// Units per cycle.
    pub period: usize,
    /// Standard deviation of the multiplicative noise.
    pub noise: f64,
    /// Probability that a unit starts a burst.
    pub burst_prob: f64,
    pub burst_factor: f64,
    pub burst_len: usize,
}

impl Default for TraceShape {
    fn default() -> Self {
        Self {
            base: 300.0,
            amplitude: 0.5,
            period: TRAIN_UNITS,
            noise: 0.1,
            burst_prob: 0.01,
            burst_factor: 2.5,
            burst_len: 4,
        }
    }
}

/// Seeded synthetic trace following `shape`.
pub fn synthetic_trace(name: &str, len: usize, shape: &TraceShape, seed: u64) -> Result<Trace> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let period = shape.period.max(1) as f64;
    let mut burst_left = 0;
    let counts = (0..len)
        .map(|t| {
            let phase = 2.0 * std::f64::consts::PI * t as f64 / period;
            let mut rate = shape.base * (1.0 - shape.amplitude * phase.cos());
            let z: f64 = rng.sample(rand_distr::StandardNormal);
            rate *= (1.0 + shape.noise * z).max(0.0);
            if burst_left == 0 && rng.random_bool(shape.burst_prob.clamp(0.0, 1.0)) {
                burst_left = shape.burst_len;
            }
            if burst_left > 0 {
                burst_left -= 1;
                rate *= shape.burst_factor;
            }
            rate.round().max(0.0) as u64
        })
        .collect();
    Trace::new(name, counts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{any, prop, prop_assert, prop_assert_eq, proptest};

    fn parse(text: &str) -> Result<Trace> {
        Trace::parse("t", text, Path::new("t.csv"))
    }

    #[test]
    fn synthetic_traces_are_seeded() {
        let shape = TraceShape::default();
        let a = synthetic_trace("a", 960, &shape, 3).unwrap();
        assert_eq!(a, synthetic_trace("a", 960, &shape, 3).unwrap());
        assert_ne!(a, synthetic_trace("a", 960, &shape, 4).unwrap());
        let mean = a.total() as f64 / 960.0;
        assert!((mean - 300.0).abs() < 60.0, "{mean}");
        // The cycle starts at its trough.
        let first: u64 = a.counts()[..40].iter().sum();
        let mid: u64 = a.counts()[220..260].iter().sum();
        assert!(first < mid);
    }

    #[test]
    fn parses_plain_and_header() {
        assert_eq!(parse("5\n7\n0\n").unwrap().counts(), &[5, 7, 0]);
        assert_eq!(parse("count\n3\n").unwrap().counts(), &[3]);
    }

    #[test]
    fn parse_errors_name_the_line() {
        match parse("1\n2\nx\n") {
            Err(Error::TraceParse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse("1\n-4\n"), Err(Error::TraceParse { line: 2, .. })));
        assert!(matches!(parse(""), Err(Error::Empty(_))));
        assert!(matches!(parse("count\n"), Err(Error::Empty(_))));
    }

    #[test]
    fn loads_two_day_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nasa.csv");
        let body: String = (0..960).map(|i| format!("{}\n", i % 17)).collect();
        std::fs::write(&path, body).unwrap();
        let t = load_trace(&path).unwrap();
        assert_eq!(t.len(), 960);
        assert_eq!(t.name, "nasa");
    }

    #[test]
    fn split_examples() {
        let t = Trace::new("t", vec![1; 960]).unwrap();
        let (a, b) = split_train_test(&t).unwrap();
        assert_eq!((a.len(), b.len()), (480, 480));
        let t = Trace::new("t", vec![1; 10]).unwrap();
        let (a, b) = split_train_test(&t).unwrap();
        assert_eq!((a.len(), b.len()), (5, 5));
        let t = Trace::new("t", vec![1, 2]).unwrap();
        let (a, b) = split_train_test(&t).unwrap();
        assert_eq!((a.counts(), b.counts()), (&[1][..], &[2][..]));
        assert!(split_train_test(&Trace::new("t", vec![1]).unwrap()).is_err());
    }

    #[test]
    fn even_arrivals() {
        assert_eq!(arrivals_in_step(3, 0, 180.0, None), vec![0.0, 60.0, 120.0]);
        assert!(arrivals_in_step(0, 4, 180.0, None).is_empty());
        assert_eq!(arrivals_in_step(2, 1, 180.0, None), vec![180.0, 270.0]);
    }

    #[test]
    fn jitter_is_reproducible() {
        let a = arrivals_in_step(4, 3, 180.0, Some(42));
        let b = arrivals_in_step(4, 3, 180.0, Some(42));
        assert_eq!(a, b);
        assert!(a.iter().all(|&t| (540.0..720.0).contains(&t)));
        assert_ne!(
            a,
            arrivals_in_step(4, 4, 180.0, Some(42))
                .iter()
                .map(|t| t - 180.0)
                .collect::<Vec<_>>()
        );
    }

    #[test]
    fn sma_examples() {
        let mut h = WorkloadHistory::new(3).unwrap();
        assert!(sma_predict(&h).is_err());
        for v in [10.0, 20.0, 30.0] {
            h.push(v);
        }
        assert_eq!(sma_predict(&h).unwrap(), 20.0);
        let mut h = WorkloadHistory::new(5).unwrap();
        h.push(7.0);
        assert_eq!(sma_predict(&h).unwrap(), 7.0);
        assert!(WorkloadHistory::new(0).is_err());
    }

    #[test]
    fn sma_matches_sliding_window_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let series: Vec<f64> = (0..100).map(|_| rng.random_range(0..1000) as f64).collect();
        let mut h = WorkloadHistory::new(5).unwrap();
        for (i, &v) in series.iter().enumerate() {
            h.push(v);
            let lo = i.saturating_sub(4);
            let window = &series[lo..=i];
            let oracle = window.iter().sum::<f64>() / window.len() as f64;
            assert_eq!(sma_predict(&h).unwrap(), oracle);
        }
    }

    proptest! {
        #[test]
        fn arrivals_conserve_counts(counts in prop::collection::vec(0u64..50, 1..30), jitter in any::<bool>()) {
            let seed = jitter.then_some(9);
            let total: usize = counts
                .iter()
                .enumerate()
                .map(|(s, &c)| {
                    let ts = arrivals_in_step(c, s, 180.0, seed);
                    for t in &ts {
                        assert!(*t >= s as f64 * 180.0 && *t < (s + 1) as f64 * 180.0);
                    }
                    ts.len()
                })
                .sum();
            prop_assert_eq!(total as u64, counts.iter().sum::<u64>());
        }

        #[test]
        fn sma_is_bounded(values in prop::collection::vec(0.0f64..1e6, 1..40), w in 1usize..8) {
            let mut h = WorkloadHistory::new(w).unwrap();
            for v in &values {
                h.push(*v);
            }
            let p = sma_predict(&h).unwrap();
            let lo = h.values().fold(f64::INFINITY, f64::min);
            let hi = h.values().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(p >= lo - 1e-9 && p <= hi + 1e-9);
            prop_assert!(h.len() <= w);
        }

        #[test]
        fn split_concatenates(counts in prop::collection::vec(0u64..100, 2..1200)) {
            let t = Trace::new("t", counts.clone()).unwrap();
            let (a, b) = split_train_test(&t).unwrap();
            prop_assert!(!a.is_empty() && !b.is_empty());
            let joined: Vec<u64> = a.counts().iter().chain(b.counts()).copied().collect();
            prop_assert_eq!(joined, counts);
        }
    }
}
