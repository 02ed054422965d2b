//! Monitor step: an in-memory time-series store with cleaning and
//! sliding-window aggregation.
//!
//! Samples are kept per `(service, metric)` series in `(timestamp, value)`
//! order; out-of-order samples are inserted at their sorted position. Windows
//! are half-open, `(now - window_length, now]`.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const RESPONSE_TIME: &str = "response_time";
pub const FAILURE: &str = "failure";
pub const CPU_USAGE: &str = "cpu_usage";
pub const MEM_USAGE: &str = "mem_usage";

pub const BUILTIN_METRICS: [&str; 4] = [RESPONSE_TIME, FAILURE, CPU_USAGE, MEM_USAGE];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSample {
    pub timestamp: f64,
    pub service: String,
    pub metric: String,
    pub value: f64,
}

impl MetricSample {
    pub fn new(timestamp: f64, service: &str, metric: &str, value: f64) -> Self {
        Self { timestamp, service: service.to_string(), metric: metric.to_string(), value }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum Aggregation {
    FractionWithinDeadline { deadline: f64 },
    FractionTrue,
    Mean,
    P95,
    Max,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct MetricWindow {
    pub metric: String,
    pub window_length: f64,
    pub aggregation: Aggregation,
}

type SeriesKey = (String, String);

#[derive(Debug, Clone, PartialEq)]
pub struct MetricStore {
    metrics: BTreeSet<String>,
    series: BTreeMap<SeriesKey, Vec<(f64, f64)>>,
}

impl Default for MetricStore {
    fn default() -> Self {
        Self::new()
    }
}

impl MetricStore {
    pub fn new() -> Self {
        Self { metrics: BUILTIN_METRICS.iter().map(|m| m.to_string()).collect(), series: BTreeMap::new() }
    }

    /// Makes a custom metric name known to the store.
    pub fn register_metric(&mut self, name: &str) {
        self.metrics.insert(name.to_string());
    }

    pub fn is_registered(&self, name: &str) -> bool {
        self.metrics.contains(name)
    }

    pub fn record(&mut self, sample: MetricSample) -> Result<()> {
        if !self.metrics.contains(&sample.metric) {
            return Err(Error::config(format!("unknown metric `{}`", sample.metric)));
        }
        if !sample.value.is_finite() || !sample.timestamp.is_finite() {
            return Err(Error::Schema(format!("non-finite sample for {}/{}", sample.service, sample.metric)));
        }
        if sample.metric == RESPONSE_TIME && sample.value < 0.0 {
            return Err(Error::Schema(format!("negative response time {}", sample.value)));
        }
        let points = self.series.entry((sample.service, sample.metric)).or_default();
        let point = (sample.timestamp, sample.value);
        // Appends are the common case; fall back to a sorted insert.
        if points.last().is_none_or(|last| cmp_point(last, &point).is_le()) {
            points.push(point);
        } else {
            let at = points.partition_point(|p| cmp_point(p, &point).is_le());
            points.insert(at, point);
        }
        Ok(())
    }

    /// Removes duplicate samples. Series are already kept sorted, so the
    /// result is the same for any insertion order of the same multiset.
    pub fn clean(&mut self) {
        for points in self.series.values_mut() {
            points.dedup_by(|a, b| cmp_point(a, b).is_eq());
        }
    }

    pub fn len(&self) -> usize {
        self.series.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All samples ordered by `(timestamp, service, metric, value)`.
    pub fn samples(&self) -> Vec<MetricSample> {
        let mut out: Vec<MetricSample> = self
            .series
            .iter()
            .flat_map(|((service, metric), points)| {
                points.iter().map(move |&(t, v)| MetricSample::new(t, service, metric, v))
            })
            .collect();
        out.sort_by(|a, b| {
            a.timestamp
                .total_cmp(&b.timestamp)
                .then_with(|| a.service.cmp(&b.service))
                .then_with(|| a.metric.cmp(&b.metric))
                .then_with(|| a.value.total_cmp(&b.value))
        });
        out
    }

    /// Values of one series with timestamps in `(from, to]`.
    pub fn range(&self, service: &str, metric: &str, from: f64, to: f64) -> &[(f64, f64)] {
        let Some(points) = self.series.get(&(service.to_string(), metric.to_string())) else {
            return &[];
        };
        let lo = points.partition_point(|&(t, _)| t <= from);
        let hi = points.partition_point(|&(t, _)| t <= to);
        &points[lo..hi.max(lo)]
    }

    /// Aggregates one series over `(now - window_length, now]`; `None` when the
    /// window holds no samples.
    pub fn aggregate(&self, service: &str, window: &MetricWindow, now: f64) -> Result<Option<f64>> {
        if !self.metrics.contains(&window.metric) {
            return Err(Error::config(format!("unknown metric `{}`", window.metric)));
        }
        if !(window.window_length > 0.0) {
            return Err(Error::config("window_length must be positive"));
        }
        let points = self.range(service, &window.metric, now - window.window_length, now);
        Ok(aggregate_values(points.iter().map(|&(_, v)| v), window.aggregation))
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "timestamp,service,metric,value")?;
        for s in self.samples() {
            writeln!(out, "{},{},{},{}", s.timestamp, s.service, s.metric, s.value)?;
        }
        Ok(())
    }
}

fn cmp_point(a: &(f64, f64), b: &(f64, f64)) -> std::cmp::Ordering {
    a.0.total_cmp(&b.0).then_with(|| a.1.total_cmp(&b.1))
}

pub fn aggregate_values(values: impl Iterator<Item = f64>, aggregation: Aggregation) -> Option<f64> {
    let values: Vec<f64> = values.collect();
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    Some(match aggregation {
        Aggregation::FractionWithinDeadline { deadline } => {
            values.iter().filter(|&&v| v <= deadline).count() as f64 / n
        }
        Aggregation::FractionTrue => values.iter().filter(|&&v| v == 1.0).count() as f64 / n,
        Aggregation::Mean => values.iter().sum::<f64>() / n,
        Aggregation::Max => values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        Aggregation::P95 => {
            // nearest-rank
            let mut sorted = values;
            sorted.sort_by(f64::total_cmp);
            let rank = (0.95 * n).ceil() as usize;
            sorted[rank.clamp(1, sorted.len()) - 1]
        }
    })
}
