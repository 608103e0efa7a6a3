//! Synthesis attempts against a target, correction synthesis for dynamic
//! circuits, and peephole simplification.

mod simplify;

use std::time::Instant;

use serde::Serialize;

use crate::alphazero::{play_game, PlayOptions, TemperatureSchedule};
use crate::circuit::{verify, Circuit, DynamicCircuit};
use crate::env::Environment;
use crate::error::{Error, Result};
use crate::linalg::{is_proportional_unitary, project_unchecked, Operator, UNITARY_TOL};
use crate::mcts::{Evaluator, SearchConfig};
use crate::rng::{derive, stream};

pub use simplify::{simplify, PREFIX_WINDOW};

#[derive(Clone, Debug, PartialEq)]
pub struct SynthOptions {
    pub max_steps: usize,
    pub budget: usize,
    /// Stochastic attempts after the first greedy one.
    pub retries: usize,
    pub retry_temperature: f64,
    pub c_uct: f64,
    pub c_puct: f64,
    pub seed: u64,
    /// Keep the chosen subtree between steps of an attempt.
    pub reuse_tree: bool,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            max_steps: 30,
            budget: 400,
            retries: 10,
            retry_temperature: 1.0,
            c_uct: 0.5,
            c_puct: 1.25,
            seed: 0,
            reuse_tree: true,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SynthesisReport {
    pub success: bool,
    pub circuit: Option<Circuit>,
    pub attempts: usize,
    /// Temperature used by each attempt, in order.
    pub temperatures: Vec<f64>,
    pub wall_time: f64,
    pub t_count: usize,
    pub depth: usize,
    /// Re-simulated fidelity of the returned circuit.
    pub fidelity: f64,
}

/// One greedy attempt, then up to `retries` tempered attempts with fresh
/// seeds; the first circuit that re-verifies against `target` wins.
pub fn synthesize(
    env: &Environment,
    evaluator: Option<&dyn Evaluator>,
    target: &Operator,
    opts: &SynthOptions,
) -> Result<SynthesisReport> {
    let start = Instant::now();
    let search = SearchConfig { budget: opts.budget, c_uct: opts.c_uct, c_puct: opts.c_puct, root_noise: None };
    let mut temperatures = Vec::new();
    for attempt in 0..=opts.retries {
        let t = if attempt == 0 { 0.0 } else { opts.retry_temperature };
        temperatures.push(t);
        let schedule = TemperatureSchedule::constant(t);
        let play = PlayOptions {
            search: &search,
            evaluator,
            temperature: &schedule,
            record: false,
            reuse_tree: opts.reuse_tree,
        };
        let mut rng = stream(derive(opts.seed, &[attempt as u64]), &[]);
        let game = play_game(env, target, opts.max_steps, play, &mut rng)?;
        if !game.won {
            continue;
        }
        let check = verify(&DynamicCircuit::plain(game.circuit.clone()), target)?;
        if !check.pass {
            continue;
        }
        return Ok(SynthesisReport {
            success: true,
            t_count: game.circuit.t_count(),
            depth: game.circuit.depth(),
            circuit: Some(game.circuit),
            attempts: attempt + 1,
            temperatures,
            wall_time: start.elapsed().as_secs_f64(),
            fidelity: check.fidelity,
        });
    }
    Ok(SynthesisReport {
        success: false,
        circuit: None,
        attempts: opts.retries + 1,
        temperatures,
        wall_time: start.elapsed().as_secs_f64(),
        t_count: 0,
        depth: 0,
        fidelity: 0.0,
    })
}

#[derive(Clone, Debug)]
pub struct CorrectionReport {
    /// The normalized outcome-1 block, absent when that outcome never occurs.
    pub outcome_one: Option<Operator>,
    /// `U₁† · target`, the unitary the correction must implement.
    pub correction_target: Option<Operator>,
    pub synthesis: Option<SynthesisReport>,
    /// Main circuit plus correction when synthesis succeeded (or when no
    /// correction is needed).
    pub dynamic: Option<DynamicCircuit>,
    /// `min_θ ‖C·U₁ − e^{iθ}·target‖_max` for the found correction.
    pub composition_error: Option<f64>,
}

impl CorrectionReport {
    pub fn needed(&self) -> bool {
        self.outcome_one.is_some()
    }
}

/// Synthesizes the data-qubit correction applied when the ancilla of
/// `ancilla_circuit` reads 1. `data_env` is the data-qubit game (its gate set
/// may differ from the ancilla circuit's).
pub fn synthesize_correction(
    ancilla_circuit: &Circuit,
    target: &Operator,
    data_env: &Environment,
    evaluator: Option<&dyn Evaluator>,
    opts: &SynthOptions,
) -> Result<CorrectionReport> {
    if !ancilla_circuit.has_ancilla {
        return Err(Error::InvalidArgument("correction needs an ancilla circuit".into()));
    }
    if data_env.table.arch.has_ancilla || data_env.table.arch.n_data != ancilla_circuit.n_data {
        return Err(Error::InvalidArgument("correction game must act on the data qubits only".into()));
    }
    let b1 = project_unchecked(&ancilla_circuit.unitary()?, 1);
    if b1.weight <= UNITARY_TOL {
        return Ok(CorrectionReport {
            outcome_one: None,
            correction_target: None,
            synthesis: None,
            dynamic: Some(DynamicCircuit::plain(ancilla_circuit.clone())),
            composition_error: None,
        });
    }
    if !is_proportional_unitary(&b1, UNITARY_TOL) {
        return Err(Error::NoCorrectionExists);
    }
    let u1 = b1.normalized().expect("positive weight");
    let correction_target = &u1.adjoint() * target;
    let report = synthesize(data_env, evaluator, &correction_target, opts)?;
    let (dynamic, composition_error) = match &report.circuit {
        Some(c) => {
            let composed = &c.unitary()? * &u1;
            (
                Some(DynamicCircuit { main: ancilla_circuit.clone(), correction: Some(c.clone()) }),
                Some(composed.phase_distance(target)),
            )
        }
        None => (None, None),
    };
    Ok(CorrectionReport {
        outcome_one: Some(u1),
        correction_target: Some(correction_target),
        synthesis: Some(report),
        dynamic,
        composition_error,
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::gates::{clifford_t, Action, ActionTable, Architecture, GateKind::*};
    use crate::targets::named_target;

    fn env(gates: &[crate::gates::GateKind], n: usize) -> Environment {
        Environment::new(Arc::new(ActionTable::build(gates, &Architecture::all_to_all(n)).unwrap()))
    }

    #[test]
    fn identity_target_gives_empty_circuit() {
        let e = env(&clifford_t(), 2);
        let r = synthesize(&e, None, &Operator::identity(4), &SynthOptions::default()).unwrap();
        assert!(r.success);
        assert_eq!(r.depth, 0);
        assert_eq!(r.attempts, 1);
    }

    #[test]
    fn one_gate_target() {
        let e = env(&[H, T], 1);
        let opts = SynthOptions { max_steps: 3, budget: 50, ..Default::default() };
        let r = synthesize(&e, None, &H.matrix(), &opts).unwrap();
        assert!(r.success);
        assert_eq!(r.circuit.unwrap().gates, vec![Action::single(H, 0)]);
    }

    #[test]
    fn unreachable_target_reports_failure() {
        let e = env(&[H], 1);
        let opts = SynthOptions { max_steps: 2, budget: 10, retries: 2, ..Default::default() };
        let r = synthesize(&e, None, &T.matrix(), &opts).unwrap();
        assert!(!r.success && r.circuit.is_none());
        assert_eq!(r.attempts, 3);
        assert_eq!(r.temperatures, vec![0.0, 1.0, 1.0]);
    }

    #[test]
    fn synthesis_is_deterministic() {
        let e = env(&clifford_t(), 2);
        let target = named_target("CS").unwrap();
        let opts = SynthOptions { max_steps: 5, budget: 100, retries: 3, seed: 7, ..Default::default() };
        let a = synthesize(&e, None, &target, &opts).unwrap();
        let b = synthesize(&e, None, &target, &opts).unwrap();
        assert_eq!(a.circuit, b.circuit);
        assert_eq!(a.attempts, b.attempts);
    }

    fn toy_dynamic() -> Circuit {
        // data qubit 0, ancilla 1
        Circuit {
            n_data: 1,
            has_ancilla: true,
            gates: vec![Action::single(H, 1), Action::pair(Cnot, 1, 0), Action::single(S, 1), Action::single(H, 1)],
        }
    }

    #[test]
    fn toy_correction_composes() {
        let main = toy_dynamic();
        let v = main.data_unitary().unwrap().unwrap();
        let data = env(&[X, Z, H, S, T], 1);
        let opts = SynthOptions { max_steps: 3, budget: 100, ..Default::default() };
        let r = synthesize_correction(&main, &v, &data, None, &opts).unwrap();
        assert!(r.needed());
        assert!(r.synthesis.as_ref().unwrap().success);
        assert!(r.composition_error.unwrap() < 1e-9);
        let check = verify(r.dynamic.as_ref().unwrap(), &v).unwrap();
        assert!(check.pass);
        assert!((check.weight0 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn deterministic_circuit_needs_no_correction() {
        let main = Circuit { n_data: 1, has_ancilla: true, gates: vec![Action::single(H, 0)] };
        let data = env(&[H, T], 1);
        let r = synthesize_correction(&main, &H.matrix(), &data, None, &SynthOptions::default()).unwrap();
        assert!(!r.needed());
        assert!(r.synthesis.is_none());
    }

    #[test]
    fn non_unitary_outcome_one_has_no_correction() {
        // ancilla entangled with data: outcome-1 block is a projector
        let main =
            Circuit { n_data: 1, has_ancilla: true, gates: vec![Action::single(H, 0), Action::pair(Cnot, 0, 1)] };
        let data = env(&[H, T], 1);
        let r = synthesize_correction(&main, &H.matrix(), &data, None, &SynthOptions::default());
        assert!(matches!(r, Err(Error::NoCorrectionExists)));
    }
}
