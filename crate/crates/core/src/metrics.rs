//! Allocation quality measures.
//!
//! The indicator is the inflow-weighted mean height `(w . z) / sum(w)`: the
//! expected load met by a newly arriving patient, lower being better. It is
//! kept as an exact fraction and only rendered to one decimal for display.

use std::cmp::Ordering;
use std::fmt;
use std::ops::Add;

use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::engine::{StepReport, Strategy};
use crate::network::{Network, NodeId};
use crate::sandpile::{Configuration, Perturbation};

/// Default width of the near-saturation band used for critical points.
pub const DEFAULT_CRITICAL_MARGIN: u64 = 2;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("inflow is zero everywhere, so the indicator is undefined")]
    ZeroInflow,
    #[error("length mismatch: inflow has {inflow} entries, configuration {config}")]
    LengthMismatch { inflow: usize, config: usize },
    #[error("reports are not comparable: {0}")]
    MismatchedScenario(&'static str),
}

/// Exact indicator value. The fraction is stored unreduced, so the
/// denominator is the total inflow; equality and ordering compare values.
#[derive(Debug, Clone, Copy)]
pub struct IndicatorValue {
    numerator: u128,
    denominator: u128,
}

impl IndicatorValue {
    pub fn new(numerator: u128, denominator: u128) -> Option<Self> {
        (denominator > 0).then_some(IndicatorValue { numerator, denominator })
    }

    pub fn numerator(&self) -> u128 {
        self.numerator
    }

    pub fn denominator(&self) -> u128 {
        self.denominator
    }

    pub fn as_f64(&self) -> f64 {
        self.numerator as f64 / self.denominator as f64
    }

    /// Decimal rendering rounded half-up to `digits` fractional digits.
    pub fn to_decimal(&self, digits: u32) -> String {
        let scale = 10u128.pow(digits);
        let scaled = (self.numerator * scale * 2 + self.denominator) / (self.denominator * 2);
        if digits == 0 {
            return scaled.to_string();
        }
        format!("{}.{:0width$}", scaled / scale, scaled % scale, width = digits as usize)
    }

    /// Adds a whole number `k` to the value.
    pub fn plus(&self, k: u64) -> Self {
        IndicatorValue {
            numerator: self.numerator + k as u128 * self.denominator,
            denominator: self.denominator,
        }
    }
}

impl PartialEq for IndicatorValue {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for IndicatorValue {}

impl PartialOrd for IndicatorValue {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for IndicatorValue {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.numerator * other.denominator).cmp(&(other.numerator * self.denominator))
    }
}

impl Add for IndicatorValue {
    type Output = IndicatorValue;

    fn add(self, rhs: Self) -> Self {
        if self.denominator == rhs.denominator {
            return IndicatorValue {
                numerator: self.numerator + rhs.numerator,
                denominator: self.denominator,
            };
        }
        IndicatorValue {
            numerator: self.numerator * rhs.denominator + rhs.numerator * self.denominator,
            denominator: self.denominator * rhs.denominator,
        }
    }
}

impl fmt::Display for IndicatorValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_decimal(1))
    }
}

impl Serialize for IndicatorValue {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Repr {
            numerator: u128,
            denominator: u128,
            decimal: String,
        }
        Repr { numerator: self.numerator, denominator: self.denominator, decimal: self.to_decimal(1) }
            .serialize(serializer)
    }
}

pub fn indicator(w: &Perturbation, z: &Configuration) -> Result<IndicatorValue, MetricsError> {
    if w.len() != z.len() {
        return Err(MetricsError::LengthMismatch { inflow: w.len(), config: z.len() });
    }
    let denominator: u128 = w.values().iter().map(|&x| x as u128).sum();
    let numerator: u128 = w
        .values()
        .iter()
        .zip(z.values())
        .map(|(&a, &b)| a as u128 * b as u128)
        .sum();
    IndicatorValue::new(numerator, denominator).ok_or(MetricsError::ZeroInflow)
}

/// Nodes close to saturation (`theta - margin <= z < theta`) and nodes at or
/// over their threshold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CriticalReport {
    pub margin: u64,
    pub nodes: Vec<NodeId>,
    pub overflow_nodes: Vec<NodeId>,
    pub count: usize,
}

pub fn critical_points(net: &Network, z: &Configuration, margin: u64) -> CriticalReport {
    let mut nodes = Vec::new();
    let mut overflow_nodes = Vec::new();
    for (v, (&h, &theta)) in net.nodes().zip(z.values().iter().zip(net.thresholds())) {
        if h >= theta {
            overflow_nodes.push(v);
        } else if h >= theta.saturating_sub(margin) {
            nodes.push(v);
        }
    }
    CriticalReport { margin, count: nodes.len(), nodes, overflow_nodes }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OccupancySummary {
    pub total: u64,
    pub max: u64,
    pub mean_fraction: f64,
    pub fractions: Vec<f64>,
}

pub fn occupancy_summary(net: &Network, z: &Configuration) -> OccupancySummary {
    let fractions: Vec<f64> = z
        .values()
        .iter()
        .zip(net.thresholds())
        .map(|(&h, &t)| h as f64 / t as f64)
        .collect();
    let mean_fraction = if fractions.is_empty() {
        0.0
    } else {
        fractions.iter().sum::<f64>() / fractions.len() as f64
    };
    OccupancySummary {
        total: z.total(),
        max: z.values().iter().copied().max().unwrap_or(0),
        mean_fraction,
        fractions,
    }
}

/// Summary of one strategy's outcome, measured on the final configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StrategyOutcome {
    pub strategy: Strategy,
    pub indicator: Option<IndicatorValue>,
    pub critical_count: usize,
    pub hub_load: Option<u64>,
    pub total_mass: u64,
}

impl StrategyOutcome {
    pub fn from_report(report: &StepReport) -> Self {
        StrategyOutcome {
            strategy: report.strategy,
            indicator: report.indicator_final,
            critical_count: report.critical.count,
            hub_load: report.hub_load,
            total_mass: report.final_state.total(),
        }
    }
}

/// Differences `second - first`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutcomeDelta {
    pub indicator: Option<f64>,
    pub critical_count: i64,
    pub hub_load: Option<i64>,
    pub total_mass: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub first: StrategyOutcome,
    pub second: StrategyOutcome,
    pub delta: OutcomeDelta,
    /// Strategy with the strictly smaller indicator, if any.
    pub preferred: Option<Strategy>,
}

/// One CSV line of a comparison or run report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CsvRow {
    pub scenario: String,
    pub strategy: Strategy,
    #[serde(rename = "F_num")]
    pub f_num: u128,
    #[serde(rename = "F_den")]
    pub f_den: u128,
    #[serde(rename = "F_decimal")]
    pub f_decimal: String,
    pub critical_count: usize,
    pub hub_load: Option<u64>,
    pub total_mass: u64,
}

impl CsvRow {
    pub fn new(scenario: &str, outcome: &StrategyOutcome) -> Self {
        let (f_num, f_den, f_decimal) = match outcome.indicator {
            Some(f) => (f.numerator(), f.denominator(), f.to_decimal(1)),
            None => (0, 0, String::new()),
        };
        CsvRow {
            scenario: scenario.to_owned(),
            strategy: outcome.strategy,
            f_num,
            f_den,
            f_decimal,
            critical_count: outcome.critical_count,
            hub_load: outcome.hub_load,
            total_mass: outcome.total_mass,
        }
    }
}

impl ComparisonReport {
    pub fn csv_rows(&self, scenario: &str) -> Vec<CsvRow> {
        vec![CsvRow::new(scenario, &self.first), CsvRow::new(scenario, &self.second)]
    }
}

/// Compares two step reports produced from the same ground state and inflow.
pub fn compare(first: &StepReport, second: &StepReport) -> Result<ComparisonReport, MetricsError> {
    if first.ground.len() != second.ground.len() {
        return Err(MetricsError::MismatchedScenario("different network sizes"));
    }
    if first.inflow != second.inflow {
        return Err(MetricsError::MismatchedScenario("different inflow"));
    }
    if first.ground != second.ground {
        return Err(MetricsError::MismatchedScenario("different ground states"));
    }
    let a = StrategyOutcome::from_report(first);
    let b = StrategyOutcome::from_report(second);
    let delta = OutcomeDelta {
        indicator: a.indicator.zip(b.indicator).map(|(x, y)| y.as_f64() - x.as_f64()),
        critical_count: b.critical_count as i64 - a.critical_count as i64,
        hub_load: a.hub_load.zip(b.hub_load).map(|(x, y)| y as i64 - x as i64),
        total_mass: b.total_mass as i64 - a.total_mass as i64,
    };
    let preferred = match a.indicator.zip(b.indicator).map(|(x, y)| x.cmp(&y)) {
        Some(Ordering::Less) => Some(a.strategy),
        Some(Ordering::Greater) => Some(b.strategy),
        _ => None,
    };
    Ok(ComparisonReport { first: a, second: b, delta, preferred })
}
