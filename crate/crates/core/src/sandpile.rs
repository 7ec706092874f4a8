//! Configurations, toppling and cascade stabilisation.
//!
//! Two boundary policies are supported. `Open` discards particles that a
//! toppling pushes past the edge of the network. `RedistributeToHub` credits
//! them to the hub instead, and lets the hub topple at most once per cascade,
//! at the first moment it is unstable.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{self, StepOptions, StepReport, StepTrace, Strategy};
use crate::network::{Network, NetworkError, NodeId};

/// Default bound on the number of topplings in one cascade.
pub const DEFAULT_TOPPLING_CAP: usize = 1_000_000;

macro_rules! height_vector {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(Vec<u64>);

        impl $name {
            pub fn new(values: Vec<u64>) -> Self {
                $name(values)
            }

            pub fn zeros(p: usize) -> Self {
                $name(vec![0; p])
            }

            pub fn len(&self) -> usize {
                self.0.len()
            }

            pub fn is_empty(&self) -> bool {
                self.0.is_empty()
            }

            pub fn values(&self) -> &[u64] {
                &self.0
            }

            pub fn into_values(self) -> Vec<u64> {
                self.0
            }

            /// Value at `v`; 0 for ids outside the vector.
            pub fn get(&self, v: NodeId) -> u64 {
                self.0.get(v.index()).copied().unwrap_or(0)
            }

            pub fn total(&self) -> u64 {
                self.0.iter().sum()
            }
        }

        impl From<Vec<u64>> for $name {
            fn from(values: Vec<u64>) -> Self {
                $name(values)
            }
        }
    };
}

height_vector!(
    /// Particle count per node, indexed by `NodeId::index`.
    Configuration
);

height_vector!(
    /// Per-node amounts added (inflow) or removed (dissipation).
    Perturbation
);

impl Perturbation {
    /// `amount` particles at `v`, zero elsewhere.
    pub fn at(p: usize, v: NodeId, amount: u64) -> Self {
        let mut values = vec![0; p];
        if let Some(slot) = values.get_mut(v.index()) {
            *slot = amount;
        }
        Perturbation(values)
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&x| x == 0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryPolicy {
    Open,
    RedistributeToHub,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SandpileError {
    #[error("length mismatch: expected {expected} entries, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("node {0} is below its threshold and cannot topple")]
    NotUnstable(NodeId),
    #[error("network has no hub")]
    NoHub,
    #[error("no stable configuration reached within {cap} operations")]
    NonTermination { cap: usize },
    #[error("cannot remove {requested} particles from node {node} holding {available}")]
    Oversubtraction { node: NodeId, available: u64, requested: u64 },
    #[error("ground state is not almost stable: node {0} is at or above its threshold")]
    GroundStateUnstable(NodeId),
    #[error("height at node {0} exceeds the integer range")]
    HeightOverflow(NodeId),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

/// One application of the toppling rule.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToppleEvent {
    /// Position of this event in its cascade.
    pub step: usize,
    pub node: NodeId,
    pub removed: u64,
    pub deliveries: Vec<(NodeId, u64)>,
    pub to_hub: u64,
    pub lost: u64,
}

impl ToppleEvent {
    pub fn is_balanced(&self) -> bool {
        self.deliveries.iter().map(|d| d.1).sum::<u64>() + self.to_hub + self.lost == self.removed
    }
}

/// Ordered record of a cascade.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CascadeTrace {
    pub events: Vec<ToppleEvent>,
    pub topplings: usize,
    pub lost: u64,
    pub hub_receipts: u64,
    /// Highest hub height seen while the cascade ran, starting from its input.
    pub peak_hub_load: Option<u64>,
}

impl CascadeTrace {
    fn push(&mut self, event: ToppleEvent) {
        self.topplings += 1;
        self.lost += event.lost;
        self.hub_receipts += event.to_hub;
        self.events.push(event);
    }

    /// Number of topplings per node.
    pub fn toppling_counts(&self, p: usize) -> Vec<u64> {
        let mut counts = vec![0; p];
        for e in &self.events {
            counts[e.node.index()] += 1;
        }
        counts
    }

    pub fn hub_topplings(&self, net: &Network) -> usize {
        net.hub()
            .map_or(0, |hub| self.events.iter().filter(|e| e.node == hub).count())
    }

    /// Replays the first `count` events on top of `start`.
    pub fn replay_prefix(
        &self,
        net: &Network,
        start: &Configuration,
        count: usize,
    ) -> Result<Configuration, SandpileError> {
        check_len(net, start.len())?;
        let mut h = start.values().to_vec();
        for e in self.events.iter().take(count) {
            let slot = &mut h[e.node.index()];
            *slot = slot
                .checked_sub(e.removed)
                .ok_or(SandpileError::NotUnstable(e.node))?;
            for &(u, k) in &e.deliveries {
                h[u.index()] += k;
            }
            if e.to_hub > 0 {
                let hub = net.hub().ok_or(SandpileError::NoHub)?;
                h[hub.index()] += e.to_hub;
            }
        }
        Ok(Configuration(h))
    }

    pub fn replay(&self, net: &Network, start: &Configuration) -> Result<Configuration, SandpileError> {
        self.replay_prefix(net, start, self.events.len())
    }
}

fn check_len(net: &Network, got: usize) -> Result<(), SandpileError> {
    if got == net.len() {
        Ok(())
    } else {
        Err(SandpileError::LengthMismatch { expected: net.len(), got })
    }
}

fn check_node(net: &Network, v: NodeId) -> Result<usize, SandpileError> {
    if net.contains(v) {
        Ok(v.index())
    } else {
        Err(NetworkError::UnknownNode(v.get()).into())
    }
}

/// `z + w`, leaving both inputs untouched.
pub fn add_inflow(z: &Configuration, w: &Perturbation) -> Result<Configuration, SandpileError> {
    if z.len() != w.len() {
        return Err(SandpileError::LengthMismatch { expected: z.len(), got: w.len() });
    }
    z.0.iter()
        .zip(&w.0)
        .enumerate()
        .map(|(i, (a, b))| a.checked_add(*b).ok_or(SandpileError::HeightOverflow(NodeId::from_index(i))))
        .collect::<Result<Vec<_>, _>>()
        .map(Configuration)
}

/// `z - zeta`; every entry of `zeta` must fit under `z`.
pub fn dissipate(z: &Configuration, zeta: &Perturbation) -> Result<Configuration, SandpileError> {
    if z.len() != zeta.len() {
        return Err(SandpileError::LengthMismatch { expected: z.len(), got: zeta.len() });
    }
    z.0.iter()
        .zip(&zeta.0)
        .enumerate()
        .map(|(i, (&have, &take))| {
            have.checked_sub(take).ok_or(SandpileError::Oversubtraction {
                node: NodeId::from_index(i),
                available: have,
                requested: take,
            })
        })
        .collect::<Result<Vec<_>, _>>()
        .map(Configuration)
}

/// Nodes with `z_v >= theta_v`, ascending.
pub fn unstable_nodes(net: &Network, z: &Configuration) -> Vec<NodeId> {
    z.0.iter()
        .enumerate()
        .take(net.len())
        .filter(|&(i, &h)| h >= net.threshold_at(i))
        .map(|(i, _)| NodeId::from_index(i))
        .collect()
}

pub fn is_stable(net: &Network, z: &Configuration) -> bool {
    unstable_nodes(net, z).is_empty()
}

/// Every node other than the hub is below threshold.
pub fn is_almost_stable(net: &Network, z: &Configuration) -> bool {
    unstable_nodes(net, z).into_iter().all(|v| Some(v) == net.hub())
}

/// Applies the toppling rule at index `i`. `theta_i` particles leave the
/// node: the in-network share is dealt round-robin over the sorted
/// neighbors (one each when the share equals the degree) and the off-network
/// share goes to the hub or is lost.
fn topple_at(net: &Network, h: &mut [u64], i: usize, policy: BoundaryPolicy, step: usize) -> ToppleEvent {
    let theta = net.threshold_at(i);
    let neighbors = net.neighbors_at(i);
    h[i] -= theta;

    let mut off = net.off_slots_at(i);
    let mut share = theta - off;
    if neighbors.is_empty() {
        off += share;
        share = 0;
    }
    let mut deliveries = Vec::with_capacity(neighbors.len());
    if share > 0 {
        let deg = neighbors.len() as u64;
        let (base, extra) = (share / deg, share % deg);
        for (k, &u) in neighbors.iter().enumerate() {
            let amount = base + u64::from((k as u64) < extra);
            if amount > 0 {
                h[u.index()] += amount;
                deliveries.push((u, amount));
            }
        }
    }

    let (to_hub, lost) = match (policy, net.hub()) {
        (BoundaryPolicy::RedistributeToHub, Some(hub)) => {
            h[hub.index()] += off;
            (off, 0)
        }
        _ => (0, off),
    };
    ToppleEvent { step, node: NodeId::from_index(i), removed: theta, deliveries, to_hub, lost }
}

/// Topples `v` once. Returns the new configuration together with the number
/// of particles routed to the hub and the number lost off the network.
pub fn topple_once(
    net: &Network,
    z: &Configuration,
    v: NodeId,
    policy: BoundaryPolicy,
) -> Result<(Configuration, u64, u64), SandpileError> {
    check_len(net, z.len())?;
    let i = check_node(net, v)?;
    if policy == BoundaryPolicy::RedistributeToHub && net.hub().is_none() {
        return Err(SandpileError::NoHub);
    }
    if z.0[i] < net.threshold_at(i) {
        return Err(SandpileError::NotUnstable(v));
    }
    let mut h = z.0.clone();
    let event = topple_at(net, &mut h, i, policy, 0);
    Ok((Configuration(h), event.to_hub, event.lost))
}

/// Tracks the set of unstable nodes so the lowest one can be taken in
/// `O(log p)` after each toppling.
struct Unstable {
    set: BTreeSet<usize>,
    skip: Option<usize>,
}

impl Unstable {
    fn new(net: &Network, h: &[u64], skip: Option<usize>) -> Self {
        let set = (0..h.len())
            .filter(|&i| Some(i) != skip && h[i] >= net.threshold_at(i))
            .collect();
        Unstable { set, skip }
    }

    fn refresh(&mut self, net: &Network, h: &[u64], i: usize) {
        if Some(i) == self.skip {
            return;
        }
        if h[i] >= net.threshold_at(i) {
            self.set.insert(i);
        } else {
            self.set.remove(&i);
        }
    }

    fn refresh_after(&mut self, net: &Network, h: &[u64], event: &ToppleEvent) {
        self.refresh(net, h, event.node.index());
        for &(u, _) in &event.deliveries {
            self.refresh(net, h, u.index());
        }
    }

    fn lowest(&self) -> Option<usize> {
        self.set.first().copied()
    }
}

/// Stabilises under open boundary conditions, always toppling the lowest-id
/// unstable node. The result does not depend on that schedule.
pub fn stabilize_open(net: &Network, z: &Configuration) -> Result<(Configuration, CascadeTrace), SandpileError> {
    stabilize_open_capped(net, z, DEFAULT_TOPPLING_CAP)
}

pub fn stabilize_open_capped(
    net: &Network,
    z: &Configuration,
    cap: usize,
) -> Result<(Configuration, CascadeTrace), SandpileError> {
    check_len(net, z.len())?;
    let mut h = z.0.clone();
    let hub = net.hub().map(NodeId::index);
    let mut trace = CascadeTrace { peak_hub_load: hub.map(|i| h[i]), ..Default::default() };
    let mut unstable = Unstable::new(net, &h, None);
    while let Some(i) = unstable.lowest() {
        if trace.topplings >= cap {
            return Err(SandpileError::NonTermination { cap });
        }
        let event = topple_at(net, &mut h, i, BoundaryPolicy::Open, trace.topplings);
        unstable.refresh_after(net, &h, &event);
        if let (Some(hi), Some(peak)) = (hub, trace.peak_hub_load.as_mut()) {
            *peak = (*peak).max(h[hi]);
        }
        trace.push(event);
    }
    Ok((Configuration(h), trace))
}

/// Stabilises with redistribution to the hub. The hub topples first if it is
/// unstable, or as soon as it becomes unstable, and never again in the same
/// cascade; remaining unstable nodes topple lowest-id first. The output is
/// almost stable, and the hub may be left over its threshold.
pub fn stabilize_srh(net: &Network, z: &Configuration) -> Result<(Configuration, CascadeTrace), SandpileError> {
    stabilize_srh_capped(net, z, DEFAULT_TOPPLING_CAP)
}

pub fn stabilize_srh_capped(
    net: &Network,
    z: &Configuration,
    cap: usize,
) -> Result<(Configuration, CascadeTrace), SandpileError> {
    check_len(net, z.len())?;
    let hub = net.hub().ok_or(SandpileError::NoHub)?.index();
    let mut h = z.0.clone();
    let mut trace = CascadeTrace { peak_hub_load: Some(h[hub]), ..Default::default() };
    let mut unstable = Unstable::new(net, &h, Some(hub));
    let mut hub_toppled = false;
    loop {
        let next = if !hub_toppled && h[hub] >= net.threshold_at(hub) {
            hub_toppled = true;
            hub
        } else if let Some(i) = unstable.lowest() {
            i
        } else {
            break;
        };
        if trace.topplings >= cap {
            return Err(SandpileError::NonTermination { cap });
        }
        let event = topple_at(net, &mut h, next, BoundaryPolicy::RedistributeToHub, trace.topplings);
        unstable.refresh_after(net, &h, &event);
        if let Some(peak) = trace.peak_hub_load.as_mut() {
            *peak = (*peak).max(h[hub]);
        }
        trace.push(event);
    }
    Ok((Configuration(h), trace))
}

/// One SRH workflow iteration: inflow, cascade, then optional dissipation
/// checked against the post-cascade configuration.
pub fn srh_step(
    net: &Network,
    ground: &Configuration,
    inflow: &Perturbation,
    dissipation: Option<&Perturbation>,
) -> Result<StepReport, SandpileError> {
    srh_step_with(net, ground, inflow, dissipation, &StepOptions::default())
}

pub fn srh_step_with(
    net: &Network,
    ground: &Configuration,
    inflow: &Perturbation,
    dissipation: Option<&Perturbation>,
    opts: &StepOptions,
) -> Result<StepReport, SandpileError> {
    engine::check_ground(net, ground)?;
    let initial = add_inflow(ground, inflow)?;
    let (settled, trace) = stabilize_srh_capped(net, &initial, opts.max_topplings)?;
    engine::finish_step(
        net,
        Strategy::Srh,
        ground,
        inflow,
        initial,
        settled,
        StepTrace::Cascade(trace),
        dissipation,
        opts,
    )
}

/// Same workflow with open boundaries.
pub fn open_step_with(
    net: &Network,
    ground: &Configuration,
    inflow: &Perturbation,
    dissipation: Option<&Perturbation>,
    opts: &StepOptions,
) -> Result<StepReport, SandpileError> {
    engine::check_ground(net, ground)?;
    let initial = add_inflow(ground, inflow)?;
    let (settled, trace) = stabilize_open_capped(net, &initial, opts.max_topplings)?;
    engine::finish_step(
        net,
        Strategy::AsmOpen,
        ground,
        inflow,
        initial,
        settled,
        StepTrace::Cascade(trace),
        dissipation,
        opts,
    )
}
