use proptest::prelude::*;

use sandnet::metrics::{indicator, IndicatorValue};
use sandnet::network::{build_grid, GridSpec, Neighborhood, Network};
use sandnet::sandpile::{add_inflow, is_almost_stable, is_stable, stabilize_open, stabilize_srh, Configuration, Perturbation};
use sandnet::standard::{standard_step, TieBreak};
use sandnet::verify::standard_admissible;

fn net_and_state() -> impl Strategy<Value = (Network, Vec<u64>, Vec<u64>)> {
    (prop::sample::select(vec![3usize, 5, 7]), prop::bool::ANY).prop_flat_map(|(n, moore)| {
        let nb = if moore { Neighborhood::Moore } else { Neighborhood::VonNeumann };
        let theta = nb.nominal_size();
        let net = build_grid(GridSpec::new(n, nb)).unwrap();
        (
            Just(net),
            prop::collection::vec(0..theta, n * n),
            prop::collection::vec(prop_oneof![4 => Just(0u64), 1 => 1u64..10], n * n),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn srh_conserves_and_is_almost_stable((net, z, w) in net_and_state()) {
        let zbar = add_inflow(&Configuration::new(z), &Perturbation::new(w)).unwrap();
        let (out, trace) = stabilize_srh(&net, &zbar).unwrap();
        prop_assert_eq!(out.total(), zbar.total());
        prop_assert!(is_almost_stable(&net, &out));
        prop_assert!(trace.hub_topplings(&net) <= 1);
        prop_assert!(trace.events.iter().all(|e| e.is_balanced() && e.lost == 0));
        prop_assert_eq!(trace.replay(&net, &zbar).unwrap(), out);
    }

    #[test]
    fn open_is_stable_and_accounts_losses((net, z, w) in net_and_state()) {
        let zbar = add_inflow(&Configuration::new(z), &Perturbation::new(w)).unwrap();
        let (out, trace) = stabilize_open(&net, &zbar).unwrap();
        prop_assert!(is_stable(&net, &out));
        prop_assert_eq!(out.total() + trace.lost, zbar.total());
    }

    #[test]
    fn standard_is_admissible((net, z, w) in net_and_state(), seed in any::<u64>()) {
        let ground = Configuration::new(z);
        let w = Perturbation::new(w);
        let zbar = add_inflow(&ground, &w).unwrap();
        for tb in [TieBreak::LowestId, TieBreak::SeededRandom(seed)] {
            let r = standard_step(&net, &ground, &w, tb, None).unwrap();
            prop_assert_eq!(r.final_state.total(), zbar.total());
            if !net.hub().is_some_and(|h| zbar.get(h) >= net.threshold(h).unwrap()) {
                let verdict = standard_admissible(&net, &zbar, &r.final_state);
                prop_assert!(verdict.is_ok(), "{:?} from {:?} to {:?}", verdict, zbar.values(), r.final_state.values());
            }
        }
    }

    #[test]
    fn indicator_bounded_after_srh((net, z, w) in net_and_state()) {
        let w = Perturbation::new(w);
        let hub = net.hub().unwrap();
        prop_assume!(!w.is_zero() && w.get(hub) == 0);
        let zbar = add_inflow(&Configuration::new(z), &w).unwrap();
        let (out, _) = stabilize_srh(&net, &zbar).unwrap();
        // every inflow site is a non-hub node and ends below its threshold
        let theta = net.threshold(hub).unwrap();
        let f = indicator(&w, &out).unwrap();
        prop_assert!(f <= IndicatorValue::new(theta as u128 - 1, 1).unwrap());
    }
}
