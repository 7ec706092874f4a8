#![no_main]

use libfuzzer_sys::fuzz_target;
use sandnet::engine::{run_scenario, DissipationPolicy, InflowSchedule};
use sandnet::scenario::parse_scenario;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(mut spec) = parse_scenario(text) else { return };
    if spec.network.len() > 400 {
        return;
    }
    // keep each run short; unit-by-unit generators and budgets are linear
    spec.steps = spec.steps.min(8);
    spec.options.max_topplings = spec.options.max_topplings.min(20_000);
    spec.options.max_moves = spec.options.max_moves.min(20_000);
    if let InflowSchedule::Generator { per_step, .. } = &mut spec.inflow {
        *per_step = (*per_step).min(1_000);
    }
    if let DissipationPolicy::RandomAdmissible { budget, .. } = &mut spec.dissipation {
        *budget = (*budget).min(1_000);
    }
    if let Ok(report) = run_scenario(&spec) {
        assert!(report.steps.iter().all(|s| s.ledger.balances()));
        let again = run_scenario(&spec).expect("rerun succeeds");
        assert_eq!(report, again);
    }
});
