//! The baseline "current practice" workflow: an overflowing facility moves
//! only its excess patients, one at a time, to the least crowded adjacent
//! facility that still has room.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::engine::{self, StepOptions, StepReport, StepTrace, Strategy};
use crate::network::{Network, NetworkError, NodeId};
use crate::sandpile::{add_inflow, Configuration, Perturbation, SandpileError};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub enum TieBreak {
    #[default]
    LowestId,
    SeededRandom(u64),
}

/// One patient transfer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Move {
    pub source: NodeId,
    pub target: NodeId,
    /// No neighbor had room, so the patient was routed to the hub.
    pub hub_fallback: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct MoveTrace {
    pub moves: Vec<Move>,
    pub peak_hub_load: Option<u64>,
}

pub(crate) enum Chooser {
    LowestId,
    Random(Box<ChaCha8Rng>),
}

impl Chooser {
    /// `stream` separates the draws of different workflow steps sharing a seed.
    pub(crate) fn new(tiebreak: TieBreak, stream: u64) -> Self {
        match tiebreak {
            TieBreak::LowestId => Chooser::LowestId,
            TieBreak::SeededRandom(seed) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(stream);
                Chooser::Random(Box::new(rng))
            }
        }
    }

    fn pick(&mut self, tied: &[NodeId]) -> NodeId {
        match self {
            Chooser::LowestId => tied[0],
            Chooser::Random(rng) => tied[rng.gen_range(0..tied.len())],
        }
    }
}

/// Least crowded neighbors of `i` that can take one more patient without
/// reaching their own threshold, compared by occupancy fraction.
fn least_crowded(net: &Network, h: &[u64], i: usize, tied: &mut Vec<NodeId>) {
    tied.clear();
    let mut best: Option<(u64, u64)> = None;
    for &u in net.neighbors_at(i) {
        let (load, theta) = (h[u.index()], net.threshold_at(u.index()));
        if load + 1 >= theta {
            continue;
        }
        match best {
            Some((bl, bt)) if load as u128 * bt as u128 > bl as u128 * theta as u128 => {}
            Some((bl, bt)) if load as u128 * bt as u128 == bl as u128 * theta as u128 => tied.push(u),
            _ => {
                best = Some((load, theta));
                tied.clear();
                tied.push(u);
            }
        }
    }
}

/// Moves the excess of node `i` one patient at a time. Returns `false` if the
/// node is the hub and ran out of neighbors with room before shedding all of
/// its excess.
fn redistribute_at(
    net: &Network,
    h: &mut [u64],
    i: usize,
    chooser: &mut Chooser,
    trace: &mut MoveTrace,
) -> Result<bool, SandpileError> {
    let source = NodeId::from_index(i);
    let hub = net.hub();
    let keep = net.threshold_at(i) - 1;
    let mut tied = Vec::new();
    while h[i] > keep {
        least_crowded(net, h, i, &mut tied);
        let (target, hub_fallback) = if !tied.is_empty() {
            (chooser.pick(&tied), false)
        } else {
            match hub {
                Some(hub) if hub != source => (hub, true),
                Some(_) => return Ok(false),
                None => return Err(SandpileError::NoHub),
            }
        };
        h[i] -= 1;
        h[target.index()] += 1;
        trace.moves.push(Move { source, target, hub_fallback });
        if let (Some(hub), Some(peak)) = (hub, trace.peak_hub_load.as_mut()) {
            *peak = (*peak).max(h[hub.index()]);
        }
    }
    Ok(true)
}

/// Sheds the excess `z_v - (theta_v - 1)` of an unstable node.
pub fn redistribute_node(
    net: &Network,
    z: &Configuration,
    v: NodeId,
    tiebreak: TieBreak,
) -> Result<(Configuration, Vec<Move>), SandpileError> {
    if z.len() != net.len() {
        return Err(SandpileError::LengthMismatch { expected: net.len(), got: z.len() });
    }
    if !net.contains(v) {
        return Err(NetworkError::UnknownNode(v.get()).into());
    }
    let mut h = z.values().to_vec();
    if h[v.index()] < net.threshold_at(v.index()) {
        return Err(SandpileError::NotUnstable(v));
    }
    let mut trace = MoveTrace::default();
    redistribute_at(net, &mut h, v.index(), &mut Chooser::new(tiebreak, 0), &mut trace)?;
    Ok((Configuration::new(h), trace.moves))
}

/// Runs the standard workflow on an already-perturbed configuration: the hub
/// first when it overflows, then the lowest-id overflowing node, until the
/// configuration is almost stable.
pub(crate) fn settle(
    net: &Network,
    initial: &Configuration,
    chooser: &mut Chooser,
    max_moves: usize,
) -> Result<(Configuration, MoveTrace), SandpileError> {
    let mut h = initial.values().to_vec();
    let hub = net.hub().map(NodeId::index);
    let mut trace = MoveTrace { peak_hub_load: hub.map(|i| h[i]), ..Default::default() };
    let mut hub_stuck = false;
    loop {
        let next = match hub {
            Some(hi) if !hub_stuck && h[hi] >= net.threshold_at(hi) => hi,
            _ => match (0..h.len()).find(|&i| Some(i) != hub && h[i] >= net.threshold_at(i)) {
                Some(i) => i,
                None => break,
            },
        };
        let done = redistribute_at(net, &mut h, next, chooser, &mut trace)?;
        if Some(next) == hub && !done {
            hub_stuck = true;
        }
        if trace.moves.len() > max_moves {
            return Err(SandpileError::NonTermination { cap: max_moves });
        }
    }
    Ok((Configuration::new(h), trace))
}

/// One iteration of the standard workflow with optional dissipation.
pub fn standard_step(
    net: &Network,
    ground: &Configuration,
    inflow: &Perturbation,
    tiebreak: TieBreak,
    dissipation: Option<&Perturbation>,
) -> Result<StepReport, SandpileError> {
    standard_step_with(net, ground, inflow, tiebreak, dissipation, &StepOptions::default())
}

pub fn standard_step_with(
    net: &Network,
    ground: &Configuration,
    inflow: &Perturbation,
    tiebreak: TieBreak,
    dissipation: Option<&Perturbation>,
    opts: &StepOptions,
) -> Result<StepReport, SandpileError> {
    engine::check_ground(net, ground)?;
    let initial = add_inflow(ground, inflow)?;
    let (settled, trace) = settle(net, &initial, &mut Chooser::new(tiebreak, 0), opts.max_moves)?;
    engine::finish_step(
        net,
        Strategy::Standard,
        ground,
        inflow,
        initial,
        settled,
        StepTrace::Moves(trace),
        dissipation,
        opts,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{build_graph, build_grid, GridSpec, Neighborhood};
    use crate::sandpile::is_almost_stable;

    fn id(i: usize) -> NodeId {
        NodeId::new(i).unwrap()
    }

    fn conf(v: &[u64]) -> Configuration {
        Configuration::new(v.to_vec())
    }

    #[test]
    fn single_excess_goes_to_emptiest_neighbor() {
        let net = build_grid(GridSpec::new(3, Neighborhood::VonNeumann)).unwrap();
        let z = conf(&[2, 1, 3, 1, 4, 1, 1, 0, 2]);
        let (out, moves) = redistribute_node(&net, &z, id(5), TieBreak::LowestId).unwrap();
        assert_eq!(out, conf(&[2, 1, 3, 1, 3, 1, 1, 1, 2]));
        assert_eq!(moves, vec![Move { source: id(5), target: id(8), hub_fallback: false }]);
    }

    #[test]
    fn hub_sheds_exactly_its_excess() {
        let net = build_grid(GridSpec::new(3, Neighborhood::Moore)).unwrap();
        let z = conf(&[2, 3, 1, 5, 11, 2, 4, 3, 3]);
        let (out, moves) = redistribute_node(&net, &z, id(5), TieBreak::LowestId).unwrap();
        assert_eq!(moves.len(), 4);
        assert_eq!(out.get(id(5)), 7);
        assert_eq!(out.total(), z.total());
        assert_eq!(out, conf(&[3, 3, 3, 5, 7, 3, 4, 3, 3]));
    }

    #[test]
    fn forced_destination() {
        let net = build_graph(2, &[(1, 2)], Some(1), Some(&[1, 9])).unwrap();
        let (out, moves) = redistribute_node(&net, &conf(&[4, 0]), id(1), TieBreak::LowestId).unwrap();
        assert_eq!(out, conf(&[0, 4]));
        assert!(moves.iter().all(|m| m.target == id(2)));
    }

    #[test]
    fn stable_node_is_rejected() {
        let net = build_grid(GridSpec::new(3, Neighborhood::Moore)).unwrap();
        assert_eq!(
            redistribute_node(&net, &Configuration::zeros(9), id(5), TieBreak::LowestId),
            Err(SandpileError::NotUnstable(id(5)))
        );
    }

    #[test]
    fn full_neighbors_route_to_hub() {
        // corner 1 of a 3x3 von Neumann grid with both neighbors full
        let net = build_grid(GridSpec::new(3, Neighborhood::VonNeumann)).unwrap();
        let z = conf(&[5, 3, 0, 3, 0, 0, 0, 0, 0]);
        let (out, moves) = redistribute_node(&net, &z, id(1), TieBreak::LowestId).unwrap();
        assert_eq!(out, conf(&[3, 3, 0, 3, 2, 0, 0, 0, 0]));
        assert!(moves.iter().all(|m| m.hub_fallback && m.target == id(5)));
    }

    #[test]
    fn saturated_hub_stays_over_threshold() {
        let net = build_grid(GridSpec::new(3, Neighborhood::VonNeumann)).unwrap();
        let z = conf(&[3, 3, 3, 3, 6, 3, 3, 3, 3]);
        let report = standard_step(&net, &z, &Perturbation::zeros(9), TieBreak::LowestId, None);
        // ground is almost stable; nothing can move
        let report = report.unwrap();
        assert_eq!(report.final_state, z);
        assert!(report.collapse.hub_saturated);
        assert!(report.collapse.system_saturated);
    }

    #[test]
    fn seeded_tiebreak_is_reproducible() {
        let net = build_grid(GridSpec::new(5, Neighborhood::Moore)).unwrap();
        let mut z = vec![0; 25];
        z[12] = 30;
        let z = Configuration::new(z);
        let a = redistribute_node(&net, &z, id(13), TieBreak::SeededRandom(7)).unwrap();
        let b = redistribute_node(&net, &z, id(13), TieBreak::SeededRandom(7)).unwrap();
        assert_eq!(a, b);
        assert!(is_almost_stable(&net, &a.0));
        let others: Vec<_> = (0..20u64)
            .map(|s| redistribute_node(&net, &z, id(13), TieBreak::SeededRandom(s)).unwrap().1)
            .collect();
        assert!(others.iter().any(|m| *m != a.1), "seed should matter when ties exist");
    }

    #[test]
    fn standard_step_identity_without_inflow() {
        let net = build_grid(GridSpec::new(3, Neighborhood::Moore)).unwrap();
        let z = conf(&[2, 3, 1, 5, 7, 2, 4, 3, 3]);
        let r = standard_step(&net, &z, &Perturbation::zeros(9), TieBreak::LowestId, None).unwrap();
        assert_eq!(r.final_state, z);
    }

    #[test]
    fn lowest_id_reproduces_listed_moore_outcomes() {
        // 5x5 multi-site inflow
        let net = build_grid(GridSpec::new(5, Neighborhood::Moore)).unwrap();
        let z0 = conf(&[
            1, 2, 4, 2, 5, 2, 4, 2, 3, 1, 3, 2, 7, 2, 3, 2, 1, 4, 2, 2, 4, 2, 1, 5, 4,
        ]);
        let mut w = vec![0; 25];
        for (i, k) in [(9, 1), (12, 1), (13, 4), (14, 2), (18, 1), (19, 1)] {
            w[i - 1] = k;
        }
        let r = standard_step(&net, &z0, &Perturbation::new(w), TieBreak::LowestId, None).unwrap();
        assert_eq!(
            r.final_state,
            conf(&[1, 2, 4, 2, 5, 2, 4, 4, 4, 1, 3, 3, 7, 4, 3, 2, 3, 5, 3, 2, 4, 2, 1, 5, 4])
        );

        // 5x5 hub overflow with a near-critical neighbor
        let z0 = conf(&[
            4, 1, 0, 1, 3, 5, 0, 5, 1, 1, 1, 2, 7, 7, 4, 5, 5, 2, 4, 5, 3, 5, 4, 5, 3,
        ]);
        let r = standard_step(&net, &z0, &Perturbation::at(25, id(13), 4), TieBreak::LowestId, None)
            .unwrap();
        assert_eq!(
            r.final_state,
            conf(&[4, 1, 0, 1, 3, 5, 3, 5, 2, 1, 1, 2, 7, 7, 4, 5, 5, 2, 4, 5, 3, 5, 4, 5, 3])
        );
    }
}
