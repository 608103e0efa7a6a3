use std::sync::Arc;

use proptest::prelude::*;
use qsynth::circuit::{parse_json, parse_qasm, to_json, to_qasm, Circuit, DynamicCircuit};
use qsynth::cli::{format_matrix, parse_matrix};
use qsynth::env::Environment;
use qsynth::gates::{clifford_t, h_t_cnot, ActionTable, Architecture, GateKind};
use qsynth::linalg::{fidelity, C64, EPSILON};
use qsynth::oracles;
use qsynth::synth::{simplify, synthesize, SynthOptions};

fn table2() -> ActionTable {
    ActionTable::build(&clifford_t(), &Architecture::all_to_all(2)).unwrap()
}

fn table3() -> ActionTable {
    ActionTable::build(&clifford_t(), &Architecture::all_to_all(3)).unwrap()
}

/// Arbitrary action indices, legal or not.
fn history(n_actions: usize, max_len: usize) -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(0..n_actions, 0..=max_len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn fidelity_ignores_global_phase(h1 in prop::collection::vec(0usize..12, 0..15),
                                     h2 in prop::collection::vec(0usize..12, 0..15),
                                     theta in 0.0..std::f64::consts::TAU) {
        let t = table2();
        let u = Circuit::from_history(&t, &h1).unitary().unwrap();
        let v = Circuit::from_history(&t, &h2).unitary().unwrap();
        let a = fidelity(&u, &v).unwrap();
        let b = fidelity(&u.scale(C64::from_polar(1.0, theta)), &v).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
        prop_assert!(a <= 1.0 + 1e-12);
    }

    #[test]
    fn fast_simulation_matches_oracle(h in history(21, 20)) {
        let c = Circuit::from_history(&table3(), &h);
        let fast = oracles::to_matrix(&c.unitary().unwrap());
        prop_assert!(oracles::matrices_equal(&fast, &oracles::simulate(&c), 1e-10));
    }

    #[test]
    fn legal_mask_matches_naive(h in prop::collection::vec(0usize..12, 0..12)) {
        let t = table2();
        let rel = oracles::relations(&t);
        let mask = t.legal_mask(&h);
        for (a, &m) in mask.iter().enumerate() {
            prop_assert_eq!(m, oracles::naive_legal(&h, a, &rel));
        }
    }

    #[test]
    fn simplify_is_safe(h in history(12, 25)) {
        let c = Circuit::from_history(&table2(), &h);
        let out = simplify(&c, &clifford_t());
        prop_assert!(out.len() <= c.len());
        prop_assert!(out.t_count() <= c.t_count());
        let f = oracles::fidelity(&oracles::simulate(&out), &oracles::simulate(&c));
        prop_assert!((f - 1.0).abs() < 1e-10);
        // a second pass has nothing left to do
        prop_assert_eq!(simplify(&out, &clifford_t()), out);
    }

    #[test]
    fn success_predicate_matches_oracle(h in prop::collection::vec(0usize..12, 1..=3),
                                        g in prop::collection::vec(0usize..12, 0..=3)) {
        // the game's success test on U·V† agrees with the oracle's fidelity
        let t = table2();
        let env = Environment::new(Arc::new(t.clone()));
        let v = Circuit::from_history(&t, &h).unitary().unwrap();
        let cand = Circuit::from_history(&t, &g);
        let u = cand.unitary().unwrap();
        let expect = oracles::fidelity(&oracles::simulate(&cand), &oracles::to_matrix(&v)) >= 1.0 - EPSILON;
        prop_assert_eq!(env.is_success(&(&u * &v.adjoint())), expect);
    }

    #[test]
    fn text_formats_round_trip(h in history(12, 15)) {
        let d = DynamicCircuit::plain(Circuit::from_history(&table2(), &h));
        prop_assert_eq!(parse_qasm(&to_qasm(&d)).unwrap(), d.clone());
        prop_assert_eq!(parse_json(&to_json(&d)).unwrap(), d.clone());
        let u = d.main.unitary().unwrap();
        prop_assert_eq!(parse_matrix(&format_matrix(&u)).unwrap(), u);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn search_never_beats_exhaustive_minimum(h in prop::collection::vec(0usize..2, 1..=4), seed in 0u64..1000) {
        let gates = [GateKind::H, GateKind::T];
        let table = ActionTable::build(&gates, &Architecture::all_to_all(1)).unwrap();
        let target = Circuit::from_history(&table, &h).unitary().unwrap();
        let best = oracles::enumerate_min_depth(&target, &table, 6).unwrap().min_depth.unwrap();
        let env = Environment::new(Arc::new(table));
        let opts = SynthOptions { max_steps: 6, budget: 50, retries: 2, seed, ..Default::default() };
        let r = synthesize(&env, None, &target, &opts).unwrap();
        if r.success {
            prop_assert!(r.depth >= best);
            prop_assert!(r.depth <= opts.max_steps);
        }
    }

    #[test]
    fn ancilla_masks_match_naive(h in prop::collection::vec(0usize..10, 0..10)) {
        let t = ActionTable::build(&h_t_cnot(), &Architecture::ancilla_star(2)).unwrap();
        let rel = oracles::relations(&t);
        let h: Vec<usize> = h.into_iter().map(|a| a % t.len()).collect();
        for (a, &m) in t.legal_mask(&h).iter().enumerate() {
            prop_assert_eq!(m, oracles::naive_legal(&h, a, &rel));
        }
    }
}
