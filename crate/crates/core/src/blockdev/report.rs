//! Metric reports and before/after comparison.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::disk::CounterSnapshot;
use super::workload::WorkloadConfig;
use crate::features::FeatureConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub workload: WorkloadConfig,
    pub features: FeatureConfig,
    pub seed: u64,
    pub counters: CounterSnapshot,
    /// uncontiguous_ops / classified_ops, 0 when nothing was classified.
    pub uncontiguous_ratio: f64,
    pub pool_visits: u64,
    pub allocated_blocks: u64,
    /// Blocks owned by files of at most 128 bytes (small_file only).
    pub small_file_blocks: u64,
    /// Whole-file passes (large_file only).
    pub passes: u64,
    pub io_ops_per_pass: f64,
    /// SHA-256 over every file's extents; equal layouts give equal digests.
    pub layout_digest: String,
    /// Every read-back matched what was written.
    pub verified: bool,
    pub disk_full: bool,
    /// This run over a baseline run, per metric; set by [`MetricsReport::with_baseline`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ratios: Option<BTreeMap<String, Ratio>>,
}

impl MetricsReport {
    /// Attaches the ratios of `self` over `baseline`.
    pub fn with_baseline(mut self, baseline: &MetricsReport) -> Result<Self, ReportError> {
        self.ratios = Some(compare(baseline, &self)?.ratios);
        Ok(self)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn new(
        workload: WorkloadConfig,
        features: FeatureConfig,
        seed: u64,
        counters: CounterSnapshot,
        pool_visits: u64,
        allocated_blocks: u64,
        small_file_blocks: u64,
        passes: u64,
        layout_digest: String,
        verified: bool,
        disk_full: bool,
    ) -> Self {
        let uncontiguous_ratio = if counters.classified_ops == 0 {
            0.0
        } else {
            counters.uncontiguous_ops as f64 / counters.classified_ops as f64
        };
        let io_ops_per_pass = if passes == 0 { 0.0 } else { counters.io_ops as f64 / passes as f64 };
        MetricsReport {
            workload,
            features,
            seed,
            counters,
            uncontiguous_ratio,
            pool_visits,
            allocated_blocks,
            small_file_blocks,
            passes,
            io_ops_per_pass,
            layout_digest,
            verified,
            disk_full,
            ratios: None,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Named numeric metrics, in a fixed order.
    pub fn metrics(&self) -> BTreeMap<&'static str, f64> {
        let c = &self.counters;
        BTreeMap::from([
            ("data_reads", c.data_reads as f64),
            ("data_writes", c.data_writes as f64),
            ("meta_reads", c.meta_reads as f64),
            ("meta_writes", c.meta_writes as f64),
            ("io_ops", c.io_ops as f64),
            ("uncontiguous_ops", c.uncontiguous_ops as f64),
            ("data_blocks_read", c.data_blocks_read as f64),
            ("data_blocks_written", c.data_blocks_written as f64),
            ("uncontiguous_ratio", self.uncontiguous_ratio),
            ("pool_visits", self.pool_visits as f64),
            ("allocated_blocks", self.allocated_blocks as f64),
        ])
    }
}

/// after / before, or `n/a` when before is zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Ratio {
    Value(f64),
    NotAvailable,
}

impl Ratio {
    pub fn of(after: f64, before: f64) -> Self {
        if before == 0.0 {
            Ratio::NotAvailable
        } else {
            Ratio::Value(after / before)
        }
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            Ratio::Value(v) => Some(*v),
            Ratio::NotAvailable => None,
        }
    }
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ratio::Value(v) => write!(f, "{v:.4}"),
            Ratio::NotAvailable => f.write_str("n/a"),
        }
    }
}

impl Serialize for Ratio {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Ratio::Value(v) => s.serialize_f64(*v),
            Ratio::NotAvailable => s.serialize_str("n/a"),
        }
    }
}

impl<'de> Deserialize<'de> for Ratio {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Ratio::Value(v)),
            Raw::Text(t) if t == "n/a" => Ok(Ratio::NotAvailable),
            Raw::Text(t) => Err(serde::de::Error::custom(format!("expected a number or \"n/a\", found {t:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub workload: WorkloadConfig,
    pub seed: u64,
    pub before: FeatureConfig,
    pub after: FeatureConfig,
    pub ratios: BTreeMap<String, Ratio>,
    pub uncontiguous_before: f64,
    pub uncontiguous_after: f64,
}

impl Comparison {
    pub fn ratio(&self, metric: &str) -> Ratio {
        self.ratios.get(metric).copied().unwrap_or(Ratio::NotAvailable)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("comparison serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ReportError {
    #[error("reports come from different workloads or seeds")]
    ConfigMismatch,
}

pub fn compare(before: &MetricsReport, after: &MetricsReport) -> Result<Comparison, ReportError> {
    if before.workload != after.workload || before.seed != after.seed {
        return Err(ReportError::ConfigMismatch);
    }
    let (b, a) = (before.metrics(), after.metrics());
    let ratios = b.iter().map(|(k, bv)| (k.to_string(), Ratio::of(a[k], *bv))).collect();
    Ok(Comparison {
        workload: before.workload.clone(),
        seed: before.seed,
        before: before.features,
        after: after.features,
        ratios,
        uncontiguous_before: before.uncontiguous_ratio,
        uncontiguous_after: after.uncontiguous_ratio,
    })
}
