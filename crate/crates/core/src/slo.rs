//! Service-level objectives, compliance normalization and error budgets.
//!
//! Both objective kinds are normalized to a higher-is-better compliance rate
//! in percent, so strategy margins (percentage points) apply uniformly:
//!
//! ```text
//! latency_compliance:  compliance = 100 * fraction_within_deadline,  threshold = X
//! failure_rate_below:  compliance = 100 - 100 * failure_rate,        threshold = 100 - Y
//! ```

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::telemetry::{Aggregation, MetricWindow, FAILURE, RESPONSE_TIME};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum SloKind {
    /// `threshold` percent of requests answered within `deadline` seconds.
    LatencyCompliance { deadline: f64 },
    /// Failure rate kept below `threshold` percent.
    FailureRateBelow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct SloSpec {
    pub id: String,
    pub kind: SloKind,
    /// Percent. X for latency objectives, Y for failure-rate objectives.
    pub threshold: f64,
    /// Evaluation window in seconds.
    pub window_length: f64,
    pub service: String,
}

impl SloSpec {
    pub fn latency(id: &str, service: &str, threshold: f64, deadline: f64, window_length: f64) -> Self {
        Self {
            id: id.to_string(),
            kind: SloKind::LatencyCompliance { deadline },
            threshold,
            window_length,
            service: service.to_string(),
        }
    }

    pub fn failure_rate(id: &str, service: &str, threshold: f64, window_length: f64) -> Self {
        Self {
            id: id.to_string(),
            kind: SloKind::FailureRateBelow,
            threshold,
            window_length,
            service: service.to_string(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0 && self.threshold < 100.0) {
            return Err(Error::config(format!(
                "slo `{}`: threshold {} must lie strictly between 0 and 100",
                self.id, self.threshold
            )));
        }
        if let SloKind::LatencyCompliance { deadline } = self.kind {
            if !(deadline > 0.0) {
                return Err(Error::config(format!("slo `{}`: deadline must be positive", self.id)));
            }
        }
        if !(self.window_length > 0.0) {
            return Err(Error::config(format!("slo `{}`: window_length must be positive", self.id)));
        }
        Ok(())
    }

    /// Threshold expressed on the normalized compliance scale.
    pub fn compliance_threshold(&self) -> f64 {
        match self.kind {
            SloKind::LatencyCompliance { .. } => self.threshold,
            SloKind::FailureRateBelow => 100.0 - self.threshold,
        }
    }

    /// The telemetry window whose aggregate feeds [`compliance`].
    pub fn metric_window(&self) -> MetricWindow {
        match self.kind {
            SloKind::LatencyCompliance { deadline } => MetricWindow {
                metric: RESPONSE_TIME.to_string(),
                window_length: self.window_length,
                aggregation: Aggregation::FractionWithinDeadline { deadline },
            },
            SloKind::FailureRateBelow => MetricWindow {
                metric: FAILURE.to_string(),
                window_length: self.window_length,
                aggregation: Aggregation::FractionTrue,
            },
        }
    }
}

/// Maps a raw aggregate (a fraction in `[0, 1]`) to compliance percent.
pub fn compliance(slo: &SloSpec, aggregate_value: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&aggregate_value) {
        return Err(Error::input(format!("aggregate value {aggregate_value} for slo `{}` is outside [0, 1]", slo.id)));
    }
    Ok(match slo.kind {
        SloKind::LatencyCompliance { .. } => aggregate_value * 100.0,
        SloKind::FailureRateBelow => 100.0 - 100.0 * aggregate_value,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Conservative,
    Normal,
    BestEffort,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Conservative, Strategy::Normal, Strategy::BestEffort];

    /// Percentage points kept above the compliance threshold.
    pub fn margin(self) -> f64 {
        match self {
            Strategy::Conservative => 10.0,
            Strategy::Normal => 5.0,
            Strategy::BestEffort => 0.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Conservative => "conservative",
            Strategy::Normal => "normal",
            Strategy::BestEffort => "best_effort",
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

pub fn target_for(strategy: Strategy, compliance_threshold: f64) -> f64 {
    (compliance_threshold + strategy.margin()).min(100.0)
}

/// Signed gap between measured compliance and the threshold; negative means violation.
pub fn error_budget(measured: f64, compliance_threshold: f64) -> f64 {
    measured - compliance_threshold
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SloStatus {
    pub slo_id: String,
    pub service: String,
    pub measured_compliance: f64,
    pub compliance_threshold: f64,
    pub target: f64,
    pub error_budget: f64,
    pub violated: bool,
    /// No samples were in the window; the status is a stand-in reading "met".
    pub absent: bool,
}

impl SloStatus {
    pub fn new(slo: &SloSpec, measured_compliance: f64, strategy: Strategy) -> Self {
        let threshold = slo.compliance_threshold();
        Self::from_parts(&slo.id, &slo.service, measured_compliance, threshold, strategy)
    }

    pub fn from_parts(
        slo_id: &str,
        service: &str,
        measured_compliance: f64,
        compliance_threshold: f64,
        strategy: Strategy,
    ) -> Self {
        Self {
            slo_id: slo_id.to_string(),
            service: service.to_string(),
            measured_compliance,
            compliance_threshold,
            target: target_for(strategy, compliance_threshold),
            error_budget: error_budget(measured_compliance, compliance_threshold),
            violated: measured_compliance < compliance_threshold,
            absent: false,
        }
    }

    /// Status for a window without data: pinned to its target so it reads as met.
    pub fn absent(slo: &SloSpec, strategy: Strategy) -> Self {
        let threshold = slo.compliance_threshold();
        let mut status = Self::new(slo, target_for(strategy, threshold), strategy);
        status.absent = true;
        status
    }

    pub fn retarget(&mut self, strategy: Strategy) {
        self.target = target_for(strategy, self.compliance_threshold);
        if self.absent {
            self.measured_compliance = self.target;
            self.error_budget = error_budget(self.measured_compliance, self.compliance_threshold);
        }
    }

    pub fn below_target(&self) -> bool {
        self.measured_compliance < self.target
    }
}
