//! Multi-step scenario execution.
//!
//! Each step perturbs the current ground state, settles it with the chosen
//! strategy, optionally removes recovered patients, and hands the result to
//! the next step. Every step keeps an exact mass ledger, and the run reports
//! whether total inflow matched total outflow.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{critical_points, indicator, CriticalReport, IndicatorValue, DEFAULT_CRITICAL_MARGIN};
use crate::network::{Network, NodeId};
use crate::sandpile::{
    self, add_inflow, dissipate, is_almost_stable, unstable_nodes, CascadeTrace, Configuration,
    Perturbation, SandpileError, DEFAULT_TOPPLING_CAP,
};
use crate::standard::{self, Chooser, MoveTrace, TieBreak};

pub const DEFAULT_MOVE_CAP: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Sandpile with redistribution of boundary overflow to the hub.
    Srh,
    /// Excess-only transfers to the least crowded neighbors.
    Standard,
    /// Plain sandpile with open, dissipative boundaries.
    AsmOpen,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::Srh => "srh",
            Strategy::Standard => "standard",
            Strategy::AsmOpen => "asm_open",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepOptions {
    pub margin: u64,
    pub max_topplings: usize,
    pub max_moves: usize,
}

impl Default for StepOptions {
    fn default() -> Self {
        StepOptions {
            margin: DEFAULT_CRITICAL_MARGIN,
            max_topplings: DEFAULT_TOPPLING_CAP,
            max_moves: DEFAULT_MOVE_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum StepTrace {
    Cascade(CascadeTrace),
    Moves(MoveTrace),
}

impl StepTrace {
    pub fn peak_hub_load(&self) -> Option<u64> {
        match self {
            StepTrace::Cascade(t) => t.peak_hub_load,
            StepTrace::Moves(t) => t.peak_hub_load,
        }
    }

    /// Particles discarded past an open boundary.
    pub fn lost(&self) -> u64 {
        match self {
            StepTrace::Cascade(t) => t.lost,
            StepTrace::Moves(_) => 0,
        }
    }
}

/// `after = before + inflow - outflow - lost`, checked exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MassLedger {
    pub before: u64,
    pub inflow: u64,
    pub outflow: u64,
    pub lost: u64,
    pub after: u64,
}

impl MassLedger {
    pub fn balances(&self) -> bool {
        self.before + self.inflow == self.after + self.outflow + self.lost
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct CollapseStatus {
    /// The hub is at or over its threshold.
    pub hub_saturated: bool,
    /// More particles than the network can hold stably.
    pub system_saturated: bool,
    /// Cumulative inflow exceeds cumulative dissipation.
    pub imbalance_warning: bool,
}

impl CollapseStatus {
    pub fn is_clear(&self) -> bool {
        !(self.hub_saturated || self.system_saturated || self.imbalance_warning)
    }
}

/// Flags saturation of `z`. The imbalance flag is only meaningful when a
/// dissipation policy is active.
pub fn detect_collapse(
    net: &Network,
    z: &Configuration,
    total_inflow: u64,
    total_outflow: u64,
    dissipation_active: bool,
) -> CollapseStatus {
    CollapseStatus {
        hub_saturated: net
            .hub()
            .is_some_and(|hub| z.get(hub) >= net.threshold(hub).unwrap_or(u64::MAX)),
        system_saturated: z.total() > net.total_capability(),
        imbalance_warning: dissipation_active && total_inflow > total_outflow,
    }
}

/// Full record of one workflow iteration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StepReport {
    pub step: usize,
    pub strategy: Strategy,
    pub inflow: Perturbation,
    /// Ground state before the inflow.
    pub ground: Configuration,
    /// Ground state plus inflow.
    pub initial: Configuration,
    /// Result of the cascade or transfer phase, before dissipation.
    pub settled: Configuration,
    pub dissipation: Perturbation,
    pub final_state: Configuration,
    pub trace: StepTrace,
    pub indicator_initial: Option<IndicatorValue>,
    pub indicator_settled: Option<IndicatorValue>,
    pub indicator_final: Option<IndicatorValue>,
    pub critical: CriticalReport,
    pub hub_load: Option<u64>,
    pub peak_hub_load: Option<u64>,
    pub ledger: MassLedger,
    pub collapse: CollapseStatus,
}

pub(crate) fn check_ground(net: &Network, ground: &Configuration) -> Result<(), SandpileError> {
    if ground.len() != net.len() {
        return Err(SandpileError::LengthMismatch { expected: net.len(), got: ground.len() });
    }
    if !is_almost_stable(net, ground) {
        let v = unstable_nodes(net, ground)
            .into_iter()
            .find(|&v| Some(v) != net.hub())
            .expect("an unstable non-hub node exists");
        return Err(SandpileError::GroundStateUnstable(v));
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn finish_step(
    net: &Network,
    strategy: Strategy,
    ground: &Configuration,
    inflow: &Perturbation,
    initial: Configuration,
    settled: Configuration,
    trace: StepTrace,
    dissipation: Option<&Perturbation>,
    opts: &StepOptions,
) -> Result<StepReport, SandpileError> {
    let zeta = dissipation.cloned().unwrap_or_else(|| Perturbation::zeros(net.len()));
    let final_state = dissipate(&settled, &zeta)?;
    let ledger = MassLedger {
        before: ground.total(),
        inflow: inflow.total(),
        outflow: zeta.total(),
        lost: trace.lost(),
        after: final_state.total(),
    };
    debug_assert!(ledger.balances());
    let collapse = detect_collapse(net, &final_state, ledger.inflow, ledger.outflow, dissipation.is_some());
    Ok(StepReport {
        step: 0,
        strategy,
        indicator_initial: indicator(inflow, &initial).ok(),
        indicator_settled: indicator(inflow, &settled).ok(),
        indicator_final: indicator(inflow, &final_state).ok(),
        critical: critical_points(net, &final_state, opts.margin),
        hub_load: net.hub().map(|h| final_state.get(h)),
        peak_hub_load: trace.peak_hub_load(),
        inflow: inflow.clone(),
        ground: ground.clone(),
        initial,
        settled,
        dissipation: zeta,
        final_state,
        trace,
        ledger,
        collapse,
    })
}

fn settle(
    net: &Network,
    strategy: Strategy,
    initial: &Configuration,
    tiebreak: TieBreak,
    step: usize,
    opts: &StepOptions,
) -> Result<(Configuration, StepTrace), SandpileError> {
    Ok(match strategy {
        Strategy::Srh => {
            let (z, t) = sandpile::stabilize_srh_capped(net, initial, opts.max_topplings)?;
            (z, StepTrace::Cascade(t))
        }
        Strategy::AsmOpen => {
            let (z, t) = sandpile::stabilize_open_capped(net, initial, opts.max_topplings)?;
            (z, StepTrace::Cascade(t))
        }
        Strategy::Standard => {
            let mut chooser = Chooser::new(tiebreak, step as u64);
            let (z, t) = standard::settle(net, initial, &mut chooser, opts.max_moves)?;
            (z, StepTrace::Moves(t))
        }
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SiteDistribution {
    /// Every node equally likely.
    Uniform,
    Hub,
    /// Uniform over the listed nodes.
    Nodes(Vec<NodeId>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InflowSchedule {
    /// One perturbation per step.
    Explicit(Vec<Perturbation>),
    /// The same perturbation at every step.
    Repeat(Perturbation),
    /// `per_step` particles dropped independently on sites drawn from
    /// `sites`.
    Generator { sites: SiteDistribution, per_step: u64, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DissipationPolicy {
    None,
    Explicit(Vec<Perturbation>),
    /// Removes `budget` particles per step, one at a time, each from a node
    /// drawn uniformly among those still occupied.
    RandomAdmissible { seed: u64, budget: u64 },
}

impl DissipationPolicy {
    pub fn is_active(&self) -> bool {
        !matches!(self, DissipationPolicy::None)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("step {step}: {source}")]
    Step { step: usize, source: SandpileError },
    #[error("schedule has {len} entries but step {step} was requested")]
    ScheduleExhausted { step: usize, len: usize },
    #[error("dissipation budget {budget} exceeds the {available} particles present")]
    BudgetInfeasible { budget: u64, available: u64 },
    #[error("inflow generator has no sites to draw from")]
    NoSites,
    #[error(transparent)]
    Sandpile(#[from] SandpileError),
}

fn stream_rng(seed: u64, step: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(step as u64);
    rng
}

impl InflowSchedule {
    pub fn for_step(&self, net: &Network, step: usize) -> Result<Perturbation, EngineError> {
        match self {
            InflowSchedule::Explicit(list) => list
                .get(step)
                .cloned()
                .ok_or(EngineError::ScheduleExhausted { step, len: list.len() }),
            InflowSchedule::Repeat(w) => Ok(w.clone()),
            InflowSchedule::Generator { sites, per_step, seed } => {
                let candidates: Vec<NodeId> = match sites {
                    SiteDistribution::Uniform => net.nodes().collect(),
                    SiteDistribution::Hub => net.hub().into_iter().collect(),
                    SiteDistribution::Nodes(list) => list.clone(),
                };
                if candidates.is_empty() {
                    return Err(EngineError::NoSites);
                }
                let mut rng = stream_rng(*seed, step);
                let mut w = vec![0; net.len()];
                for _ in 0..*per_step {
                    let v = candidates[rng.gen_range(0..candidates.len())];
                    w[v.index()] += 1;
                }
                Ok(Perturbation::new(w))
            }
        }
    }
}

/// Draws the dissipation for `step` given the post-cascade configuration.
/// The result never exceeds `settled` at any node.
pub fn generate_dissipation(
    policy: &DissipationPolicy,
    settled: &Configuration,
    step: usize,
) -> Result<Perturbation, EngineError> {
    match policy {
        DissipationPolicy::None => Ok(Perturbation::zeros(settled.len())),
        DissipationPolicy::Explicit(list) => list
            .get(step)
            .cloned()
            .ok_or(EngineError::ScheduleExhausted { step, len: list.len() }),
        DissipationPolicy::RandomAdmissible { seed, budget } => {
            let available = settled.total();
            if *budget > available {
                return Err(EngineError::BudgetInfeasible { budget: *budget, available });
            }
            let mut remaining = settled.values().to_vec();
            let mut zeta = vec![0; remaining.len()];
            let mut rng = stream_rng(*seed, step);
            let mut occupied: Vec<usize> = (0..remaining.len()).filter(|&i| remaining[i] > 0).collect();
            for _ in 0..*budget {
                let k = rng.gen_range(0..occupied.len());
                let i = occupied[k];
                remaining[i] -= 1;
                zeta[i] += 1;
                if remaining[i] == 0 {
                    occupied.remove(k);
                }
            }
            Ok(Perturbation::new(zeta))
        }
    }
}

/// Declarative multi-step experiment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioSpec {
    pub name: String,
    pub network: Network,
    pub ground_state: Configuration,
    pub strategy: Strategy,
    pub steps: usize,
    pub inflow: InflowSchedule,
    pub dissipation: DissipationPolicy,
    pub tiebreak: TieBreak,
    pub options: StepOptions,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    /// Right after the inflow, before any redistribution.
    Transient,
    Final,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CollapseKind {
    HubSaturated,
    SystemSaturated,
    ImbalanceWarning,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CollapseEvent {
    pub step: usize,
    pub phase: Phase,
    pub kind: CollapseKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RunReport {
    pub scenario: String,
    pub strategy: Strategy,
    pub initial: Configuration,
    pub steps: Vec<StepReport>,
    pub final_state: Configuration,
    pub cumulative_inflow: u64,
    pub cumulative_outflow: u64,
    pub cumulative_lost: u64,
    /// Total inflow equals total dissipation over the run.
    pub balanced: bool,
    pub collapse_events: Vec<CollapseEvent>,
}

fn push_events(events: &mut Vec<CollapseEvent>, step: usize, phase: Phase, status: CollapseStatus) {
    let flags = [
        (status.hub_saturated, CollapseKind::HubSaturated),
        (status.system_saturated, CollapseKind::SystemSaturated),
        (status.imbalance_warning, CollapseKind::ImbalanceWarning),
    ];
    events.extend(
        flags
            .into_iter()
            .filter(|f| f.0)
            .map(|(_, kind)| CollapseEvent { step, phase, kind }),
    );
}

/// Executes one step of `spec` from `ground`.
pub fn run_step(
    spec: &ScenarioSpec,
    ground: &Configuration,
    step: usize,
) -> Result<StepReport, EngineError> {
    let net = &spec.network;
    let at = |source| EngineError::Step { step, source };
    let w = spec.inflow.for_step(net, step)?;
    check_ground(net, ground).map_err(at)?;
    let initial = add_inflow(ground, &w).map_err(at)?;
    let (settled, trace) =
        settle(net, spec.strategy, &initial, spec.tiebreak, step, &spec.options).map_err(at)?;
    let zeta = match spec.dissipation {
        DissipationPolicy::None => None,
        ref policy => Some(generate_dissipation(policy, &settled, step)?),
    };
    let mut report = finish_step(
        net,
        spec.strategy,
        ground,
        &w,
        initial,
        settled,
        trace,
        zeta.as_ref(),
        &spec.options,
    )
    .map_err(at)?;
    report.step = step;
    Ok(report)
}

pub fn run_scenario(spec: &ScenarioSpec) -> Result<RunReport, EngineError> {
    let net = &spec.network;
    let mut ground = spec.ground_state.clone();
    let mut steps = Vec::with_capacity(spec.steps);
    let mut events = Vec::new();
    let (mut total_in, mut total_out, mut total_lost) = (0u64, 0u64, 0u64);
    for n in 0..spec.steps {
        let mut report = run_step(spec, &ground, n)?;
        total_in += report.ledger.inflow;
        total_out += report.ledger.outflow;
        total_lost += report.ledger.lost;

        let peak = CollapseStatus {
            hub_saturated: match (report.peak_hub_load, net.hub()) {
                (Some(peak), Some(hub)) => peak >= net.threshold(hub).unwrap_or(u64::MAX),
                _ => false,
            },
            system_saturated: report.initial.total() > net.total_capability(),
            imbalance_warning: false,
        };
        push_events(&mut events, n, Phase::Transient, peak);
        report.collapse = detect_collapse(
            net,
            &report.final_state,
            total_in,
            total_out,
            spec.dissipation.is_active(),
        );
        push_events(&mut events, n, Phase::Final, report.collapse);

        ground = report.final_state.clone();
        steps.push(report);
    }
    Ok(RunReport {
        scenario: spec.name.clone(),
        strategy: spec.strategy,
        initial: spec.ground_state.clone(),
        steps,
        final_state: ground,
        cumulative_inflow: total_in,
        cumulative_outflow: total_out,
        cumulative_lost: total_lost,
        balanced: total_in == total_out,
        collapse_events: events,
    })
}
