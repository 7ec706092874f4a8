//! Replays the reference cases and reports one row per check.
//!
//! Every fixture is embedded, so a run touches no file, clock, or ambient RNG.
//! SRH and open-boundary results are compared bit-exactly; listed
//! standard-strategy outcomes are only checked for admissibility, since tie
//! resolution among equally crowded neighbors is free.

use std::fmt;

use crate::engine::{run_scenario, DissipationPolicy, InflowSchedule, ScenarioSpec, StepOptions, Strategy};
use crate::metrics::{critical_points, indicator, IndicatorValue};
use crate::network::{build_grid, GridSpec, Neighborhood, Network};
use crate::sandpile::{
    add_inflow, is_almost_stable, stabilize_open, stabilize_srh, unstable_nodes, Configuration, Perturbation,
};
use crate::standard::{standard_step, TieBreak};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReferenceCase {
    pub name: &'static str,
    pub grid: GridSpec,
    pub ground: Vec<u64>,
    pub inflow: Vec<u64>,
    pub expected_initial: Option<Vec<u64>>,
    pub expected_open: Option<Vec<u64>>,
    pub expected_srh: Option<Vec<u64>>,
    /// Configuration after the given number of SRH topplings.
    pub srh_intermediate: Option<(usize, Vec<u64>)>,
    /// A listed standard-strategy outcome, checked for admissibility.
    pub listed_standard: Option<Vec<u64>>,
    /// Expected indicator on the initial, listed standard and SRH
    /// configurations, as `(numerator, denominator)`.
    pub indicators: Option<[(u128, u128); 3]>,
    /// `(margin, count on listed standard, count on SRH)`.
    pub critical: Option<(u64, usize, usize)>,
    /// Standard strategy repeated with the same inflow for this many steps
    /// from the ground state.
    pub standard_run: Option<(usize, Vec<u64>)>,
    /// Same inflow steps the SRH result absorbs without any toppling.
    pub srh_absorbs: Option<u64>,
    pub note: Option<&'static str>,
}

impl ReferenceCase {
    fn base(name: &'static str, grid: GridSpec, ground: Vec<u64>, inflow: Vec<u64>) -> Self {
        ReferenceCase {
            name,
            grid,
            ground,
            inflow,
            expected_initial: None,
            expected_open: None,
            expected_srh: None,
            srh_intermediate: None,
            listed_standard: None,
            indicators: None,
            critical: None,
            standard_run: None,
            srh_absorbs: None,
            note: None,
        }
    }
}

fn sparse(p: usize, entries: &[(usize, u64)]) -> Vec<u64> {
    let mut v = vec![0; p];
    for &(id, k) in entries {
        v[id - 1] += k;
    }
    v
}

#[rustfmt::skip]
const OUTBREAK_GROUND: [u64; 81] = [
    1, 2, 1, 4, 6, 2, 3, 6, 2,
    3, 2, 5, 2, 1, 3, 2, 4, 3,
    3, 3, 1, 5, 6, 2, 3, 1, 3,
    6, 1, 5, 3, 2, 5, 2, 3, 4,
    1, 3, 2, 1, 6, 3, 4, 5, 6,
    1, 4, 1, 2, 2, 5, 1, 2, 3,
    4, 1, 3, 4, 5, 6, 2, 5, 3,
    4, 2, 3, 5, 2, 2, 6, 3, 1,
    1, 6, 5, 2, 4, 4, 2, 1, 2,
];

fn with_rows(base: &[u64], n: usize, rows: &[(usize, [u64; 9])]) -> Vec<u64> {
    let mut v = base.to_vec();
    for (r, row) in rows {
        v[(r - 1) * n..r * n].copy_from_slice(row);
    }
    v
}

/// The built-in reference cases.
#[rustfmt::skip]
pub fn reference_cases() -> Vec<ReferenceCase> {
    let vn3 = GridSpec::new(3, Neighborhood::VonNeumann);
    let moore3 = GridSpec::new(3, Neighborhood::Moore);
    let moore5 = GridSpec::new(5, Neighborhood::Moore);
    let moore9 = GridSpec::new(9, Neighborhood::Moore);

    let single_drop = ReferenceCase {
        expected_open: Some(vec![0, 1, 0, 1, 0, 1, 0, 1, 0]),
        expected_initial: Some(vec![0, 0, 0, 0, 4, 0, 0, 0, 0]),
        ..ReferenceCase::base("von-neumann-single-drop", vn3, vec![0; 9], sparse(9, &[(5, 4)]))
    };

    let repeated_hub = ReferenceCase {
        expected_srh: Some(vec![2, 2, 3, 2, 0, 2, 1, 1, 2]),
        listed_standard: Some(vec![2, 1, 3, 1, 3, 1, 1, 1, 2]),
        standard_run: Some((4, vec![2, 2, 3, 2, 3, 2, 1, 1, 2])),
        srh_absorbs: Some(3),
        ..ReferenceCase::base(
            "von-neumann-repeated-hub-inflow",
            vn3,
            vec![2, 1, 3, 1, 3, 1, 1, 0, 2],
            sparse(9, &[(5, 1)]),
        )
    };

    let hub_overflow = ReferenceCase {
        expected_initial: Some(vec![2, 3, 1, 5, 11, 2, 4, 3, 3]),
        expected_srh: Some(vec![3, 4, 2, 6, 3, 3, 5, 4, 4]),
        listed_standard: Some(vec![2, 4, 1, 5, 7, 4, 4, 4, 3]),
        indicators: Some([(11, 1), (7, 1), (3, 1)]),
        srh_absorbs: Some(1),
        ..ReferenceCase::base("moore-3x3-hub-overflow", moore3, vec![2, 3, 1, 5, 7, 2, 4, 3, 3], sparse(9, &[(5, 4)]))
    };

    let multi_site = ReferenceCase {
        expected_initial: Some(vec![
            1, 2, 4, 2, 5,
            2, 4, 2, 4, 1,
            3, 3, 11, 4, 3,
            2, 1, 5, 3, 2,
            4, 2, 1, 5, 4,
        ]),
        listed_standard: Some(vec![
            1, 2, 4, 2, 5,
            2, 4, 4, 4, 1,
            3, 3, 7, 4, 3,
            2, 3, 5, 3, 2,
            4, 2, 1, 5, 4,
        ]),
        expected_srh: Some(vec![
            1, 2, 4, 2, 5,
            2, 5, 3, 5, 1,
            3, 4, 3, 5, 3,
            2, 2, 6, 4, 2,
            4, 2, 1, 5, 4,
        ]),
        indicators: Some([(67, 10), (51, 10), (41, 10)]),
        ..ReferenceCase::base(
            "moore-5x5-multi-site",
            moore5,
            vec![
                1, 2, 4, 2, 5,
                2, 4, 2, 3, 1,
                3, 2, 7, 2, 3,
                2, 1, 4, 2, 2,
                4, 2, 1, 5, 4,
            ],
            sparse(25, &[(9, 1), (12, 1), (13, 4), (14, 2), (18, 1), (19, 1)]),
        )
    };

    let two_toppling = ReferenceCase {
        listed_standard: Some(vec![
            4, 1, 0, 1, 3,
            5, 3, 5, 2, 1,
            1, 2, 7, 7, 4,
            5, 5, 2, 4, 5,
            3, 5, 4, 5, 3,
        ]),
        srh_intermediate: Some((1, vec![
            4, 1, 0, 1, 3,
            5, 1, 6, 2, 1,
            1, 3, 3, 8, 4,
            5, 6, 3, 5, 5,
            3, 5, 4, 5, 3,
        ])),
        expected_srh: Some(vec![
            4, 1, 0, 1, 3,
            5, 1, 7, 3, 2,
            1, 3, 4, 0, 5,
            5, 6, 4, 6, 6,
            3, 5, 4, 5, 3,
        ]),
        indicators: Some([(44, 4), (28, 4), (16, 4)]),
        critical: Some((2, 2, 4)),
        ..ReferenceCase::base(
            "moore-5x5-two-toppling",
            moore5,
            vec![
                4, 1, 0, 1, 3,
                5, 0, 5, 1, 1,
                1, 2, 7, 7, 4,
                5, 5, 2, 4, 5,
                3, 5, 4, 5, 3,
            ],
            sparse(25, &[(13, 4)]),
        )
    };

    let central_inflow = sparse(81, &[(32, 2), (33, 1), (41, 5), (42, 2)]);
    let central = ReferenceCase {
        expected_initial: Some(with_rows(&OUTBREAK_GROUND, 9, &[
            (4, [6, 1, 5, 3, 4, 6, 2, 3, 4]),
            (5, [1, 3, 2, 1, 11, 5, 4, 5, 6]),
        ])),
        listed_standard: Some(with_rows(&OUTBREAK_GROUND, 9, &[
            (4, [6, 1, 5, 3, 4, 6, 2, 3, 4]),
            (5, [1, 3, 2, 3, 7, 5, 4, 5, 6]),
            (6, [1, 4, 1, 3, 3, 5, 1, 2, 3]),
        ])),
        expected_srh: Some(with_rows(&OUTBREAK_GROUND, 9, &[
            (4, [6, 1, 5, 4, 5, 7, 2, 3, 4]),
            (5, [1, 3, 2, 2, 3, 6, 4, 5, 6]),
            (6, [1, 4, 1, 3, 3, 6, 1, 2, 3]),
        ])),
        indicators: Some([(79, 10), (59, 10), (44, 10)]),
        note: Some("SRH indicator is exactly 44/10 = 4.4; a reported value of 4.5 for this case is a misprint"),
        ..ReferenceCase::base("central-outbreak-9x9", moore9, OUTBREAK_GROUND.to_vec(), central_inflow)
    };

    let peripheral_inflow = sparse(81, &[(8, 5), (9, 2), (17, 2), (18, 1)]);
    let peripheral_top = [
        (1, [1, 2, 1, 4, 6, 2, 4, 3, 5]),
        (2, [3, 2, 5, 2, 1, 3, 3, 7, 5]),
    ];
    let peripheral = ReferenceCase {
        expected_initial: Some(with_rows(&OUTBREAK_GROUND, 9, &[
            (1, [1, 2, 1, 4, 6, 2, 3, 11, 4]),
            (2, [3, 2, 5, 2, 1, 3, 2, 6, 4]),
        ])),
        listed_standard: Some(with_rows(&OUTBREAK_GROUND, 9, &[
            (1, [1, 2, 1, 4, 6, 2, 5, 7, 4]),
            (2, [3, 2, 5, 2, 1, 3, 4, 6, 4]),
        ])),
        srh_intermediate: Some((1, with_rows(&OUTBREAK_GROUND, 9, &[
            peripheral_top[0],
            peripheral_top[1],
            (5, [1, 3, 2, 1, 9, 3, 4, 5, 6]),
        ]))),
        expected_srh: Some(with_rows(&OUTBREAK_GROUND, 9, &[
            peripheral_top[0],
            peripheral_top[1],
            (4, [6, 1, 5, 4, 3, 6, 2, 3, 4]),
            (5, [1, 3, 2, 2, 1, 4, 4, 5, 6]),
            (6, [1, 4, 1, 3, 3, 6, 1, 2, 3]),
        ])),
        indicators: Some([(79, 10), (59, 10), (44, 10)]),
        ..ReferenceCase::base("peripheral-outbreak-9x9", moore9, OUTBREAK_GROUND.to_vec(), peripheral_inflow)
    };

    vec![single_drop, repeated_hub, hub_overflow, multi_site, two_toppling, central, peripheral]
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckRow {
    pub case: String,
    pub check: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerifyReport {
    pub rows: Vec<CheckRow>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.rows.iter().all(|r| r.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckRow> {
        self.rows.iter().filter(|r| !r.passed)
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self.rows.iter().map(|r| r.case.len()).max().unwrap_or(0);
        for r in &self.rows {
            writeln!(
                f,
                "{} {:width$}  {:22}  {}",
                if r.passed { "PASS" } else { "FAIL" },
                r.case,
                r.check,
                r.detail
            )?;
        }
        let failed = self.failures().count();
        write!(f, "{} checks, {} failed", self.rows.len(), failed)
    }
}

struct Rows<'a> {
    case: &'a str,
    rows: Vec<CheckRow>,
}

impl Rows<'_> {
    fn push(&mut self, check: &'static str, passed: bool, detail: impl Into<String>) {
        self.rows.push(CheckRow { case: self.case.to_owned(), check, passed, detail: detail.into() });
    }

    fn matrix(&mut self, check: &'static str, got: &Configuration, expected: &[u64]) {
        if got.values() == expected {
            self.push(check, true, "bit-exact");
        } else {
            let diff: Vec<String> = got
                .values()
                .iter()
                .zip(expected)
                .enumerate()
                .filter(|(_, (a, b))| a != b)
                .map(|(i, (a, b))| format!("node {}: got {a}, expected {b}", i + 1))
                .collect();
            let detail = if got.len() != expected.len() {
                format!("length {} vs {}", got.len(), expected.len())
            } else {
                diff.join("; ")
            };
            self.push(check, false, detail);
        }
    }

    fn value(&mut self, check: &'static str, got: Option<IndicatorValue>, expected: (u128, u128), note: Option<&str>) {
        let want = IndicatorValue::new(expected.0, expected.1);
        let passed = got.is_some() && got == want;
        let mut detail = match got {
            Some(v) => format!("{}/{} = {}", v.numerator(), v.denominator(), v),
            None => "undefined".to_owned(),
        };
        if !passed {
            detail.push_str(&format!(", expected {}/{}", expected.0, expected.1));
        }
        if let Some(note) = note {
            detail.push_str(&format!(" ({note})"));
        }
        self.push(check, passed, detail);
    }
}

/// Checks that `outcome` is a possible result of the standard strategy from
/// `initial`: mass is conserved, each overflowing non-hub node keeps exactly
/// `theta - 1`, only neighbors of overflowing nodes or of the hub (which
/// relays fallback units) gained, nothing else lost load, and the result is
/// almost stable.
pub fn standard_admissible(net: &Network, initial: &Configuration, outcome: &Configuration) -> Result<(), String> {
    if outcome.len() != initial.len() {
        return Err("length mismatch".into());
    }
    if outcome.total() != initial.total() {
        return Err(format!("mass {} vs {}", outcome.total(), initial.total()));
    }
    let hub = net.hub();
    let sources = unstable_nodes(net, initial);
    for &s in sources.iter().filter(|&&s| Some(s) != hub) {
        let keep = net.threshold(s).map_err(|e| e.to_string())? - 1;
        if outcome.get(s) != keep {
            return Err(format!("node {s} holds {} instead of {keep}", outcome.get(s)));
        }
    }
    let mut relays = sources.clone();
    if let Some(h) = hub {
        let keep = net.threshold(h).map_err(|e| e.to_string())? - 1;
        // the hub may only stay above theta - 1 when no neighbor has room
        let room = net
            .neighbors(h)
            .map_err(|e| e.to_string())?
            .iter()
            .any(|&u| outcome.get(u) + 1 < net.threshold(u).unwrap_or(0));
        if outcome.get(h) > keep && room {
            return Err(format!("hub {h} holds {} with room left nearby", outcome.get(h)));
        }
        if outcome.get(h) < initial.get(h).min(keep) {
            return Err(format!("hub {h} dropped below {}", initial.get(h).min(keep)));
        }
        if !relays.contains(&h) {
            relays.push(h);
        }
    }
    for v in net.nodes() {
        if relays.contains(&v) {
            continue;
        }
        let (before, after) = (initial.get(v), outcome.get(v));
        if after < before {
            return Err(format!("node {v} lost load"));
        }
        if after > before && !relays.iter().any(|&s| net.neighbors(s).is_ok_and(|l| l.contains(&v))) {
            return Err(format!("node {v} gained load but is not adjacent to an overflowing node or the hub"));
        }
    }
    if !is_almost_stable(net, outcome) {
        return Err("not almost stable".into());
    }
    Ok(())
}

fn check_case(case: &ReferenceCase) -> Vec<CheckRow> {
    let mut rows = Rows { case: case.name, rows: Vec::new() };
    let net = match build_grid(case.grid) {
        Ok(net) => net,
        Err(e) => {
            rows.push("network", false, e.to_string());
            return rows.rows;
        }
    };
    let ground = Configuration::new(case.ground.clone());
    let w = Perturbation::new(case.inflow.clone());
    let initial = match add_inflow(&ground, &w) {
        Ok(z) => z,
        Err(e) => {
            rows.push("inflow", false, e.to_string());
            return rows.rows;
        }
    };
    if let Some(expected) = &case.expected_initial {
        rows.matrix("inflow", &initial, expected);
    }

    if let Some(expected) = &case.expected_open {
        match stabilize_open(&net, &initial) {
            Ok((z, _)) => rows.matrix("open-final", &z, expected),
            Err(e) => rows.push("open-final", false, e.to_string()),
        }
    }

    let srh = stabilize_srh(&net, &initial).ok();
    if let Some(expected) = &case.expected_srh {
        match &srh {
            Some((z, _)) => rows.matrix("srh-final", z, expected),
            None => rows.push("srh-final", false, "cascade failed"),
        }
    }
    if let Some((k, expected)) = &case.srh_intermediate {
        match srh.as_ref().map(|(_, t)| t.replay_prefix(&net, &initial, *k)) {
            Some(Ok(z)) => rows.matrix("srh-intermediate", &z, expected),
            _ => rows.push("srh-intermediate", false, "replay failed"),
        }
    }

    let simulated = standard_step(&net, &ground, &w, TieBreak::LowestId, None).ok();
    if let Some(listed) = &case.listed_standard {
        let listed = Configuration::new(listed.clone());
        match standard_admissible(&net, &initial, &listed) {
            Ok(()) => rows.push("standard-admissible", true, "conserves mass, local, excess only"),
            Err(e) => rows.push("standard-admissible", false, e),
        }
        match &simulated {
            Some(r) => match standard_admissible(&net, &initial, &r.final_state) {
                Ok(()) => rows.push("standard-simulated", true, "lowest-id run is admissible"),
                Err(e) => rows.push("standard-simulated", false, e),
            },
            None => rows.push("standard-simulated", false, "standard step failed"),
        }
        if let (Some(r), Some((z, _)), Some(hub)) = (&simulated, &srh, net.hub()) {
            let (sh, ph) = (r.final_state.get(hub), z.get(hub));
            rows.push("hub-load-order", sh >= ph, format!("standard hub {sh}, srh hub {ph}"));
        }

        if let Some([f0, f1, f2]) = case.indicators {
            rows.value("indicator-initial", indicator(&w, &initial).ok(), f0, None);
            rows.value("indicator-standard", indicator(&w, &listed).ok(), f1, None);
            let fs = srh.as_ref().and_then(|(z, _)| indicator(&w, z).ok());
            rows.value("indicator-srh", fs, f2, case.note);
            let fl = indicator(&w, &listed).ok();
            rows.push(
                "indicator-order",
                matches!((fl, fs), (Some(a), Some(b)) if a > b),
                "standard indicator exceeds srh indicator",
            );
        }
        if let Some((margin, on_standard, on_srh)) = case.critical {
            let got = critical_points(&net, &listed, margin).count;
            rows.push("critical-standard", got == on_standard, format!("{got} (expected {on_standard})"));
            if let Some((z, _)) = &srh {
                let got = critical_points(&net, z, margin).count;
                rows.push("critical-srh", got == on_srh, format!("{got} (expected {on_srh})"));
            }
        }
    }

    if let Some((steps, expected)) = &case.standard_run {
        let spec = ScenarioSpec {
            name: case.name.to_owned(),
            network: net.clone(),
            ground_state: ground.clone(),
            strategy: Strategy::Standard,
            steps: *steps,
            inflow: InflowSchedule::Repeat(w.clone()),
            dissipation: DissipationPolicy::None,
            tiebreak: TieBreak::LowestId,
            options: StepOptions::default(),
        };
        match run_scenario(&spec) {
            Ok(r) => rows.matrix("standard-run", &r.final_state, expected),
            Err(e) => rows.push("standard-run", false, e.to_string()),
        }
    }

    if let (Some(k), Some((z, _))) = (case.srh_absorbs, &srh) {
        // k more inflows cause no toppling, the next one does
        let mut current = z.clone();
        let mut quiet = 0;
        for _ in 0..=k {
            let next = add_inflow(&current, &w).expect("same length");
            match stabilize_srh(&net, &next) {
                Ok((out, trace)) if trace.topplings == 0 => {
                    quiet += 1;
                    current = out;
                }
                _ => break,
            }
        }
        rows.push("srh-absorbs", quiet == k, format!("{quiet} quiet inflow steps (expected {k})"));
    }

    rows.rows
}

pub fn verify_cases(cases: &[ReferenceCase]) -> VerifyReport {
    VerifyReport { rows: cases.iter().flat_map(check_case).collect() }
}

/// Replays every built-in reference case.
pub fn verify_reference_cases() -> VerifyReport {
    verify_cases(&reference_cases())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clean_build_passes() {
        let report = verify_reference_cases();
        let failures: Vec<_> = report.failures().collect();
        assert!(failures.is_empty(), "{report}");
    }

    #[test]
    fn corrupted_fixture_names_failing_row() {
        let mut cases = reference_cases();
        let central = cases.iter_mut().find(|c| c.name == "central-outbreak-9x9").unwrap();
        central.expected_srh.as_mut().unwrap()[40] = 4;
        let report = verify_cases(&cases);
        let failed: Vec<_> = report.failures().collect();
        assert_eq!(failed.len(), 1);
        assert_eq!(failed[0].case, "central-outbreak-9x9");
        assert_eq!(failed[0].check, "srh-final");
        assert!(failed[0].detail.contains("node 41"));
    }

    #[test]
    fn misprint_note_is_attached() {
        let report = verify_reference_cases();
        let row = report
            .rows
            .iter()
            .find(|r| r.case == "central-outbreak-9x9" && r.check == "indicator-srh")
            .unwrap();
        assert!(row.passed);
        assert!(row.detail.starts_with("44/10 = 4.4"));
        assert!(row.detail.contains("4.5"));
    }
}
