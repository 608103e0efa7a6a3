//! The synthesis game.
//!
//! The state is `M_t = U_t · V_full†` where `V_full` is the target (tensored
//! with the identity on the ancilla when there is one). Applying an action is
//! a single left multiplication, and the game is won once `M_t` is the
//! identity up to phase (or, with an ancilla, once its outcome-0 block is).

use std::sync::Arc;

use crate::error::{invalid, Error, Result};
use crate::gates::ActionTable;
use crate::linalg::{fidelity, project_unchecked, Operator, EPSILON, UNITARY_TOL};

#[derive(Clone, Debug)]
pub struct GameState {
    pub m: Operator,
    pub step: usize,
    pub max_steps: usize,
    pub history: Vec<usize>,
    pub done: bool,
    pub won: bool,
    /// Legality of each action after `history`.
    pub mask: Vec<bool>,
}

impl GameState {
    pub fn legal_actions(&self) -> impl Iterator<Item = usize> + '_ {
        self.mask.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i)
    }
}

/// Real and imaginary planes of the state matrix, each `dim × dim` row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub dim: usize,
    pub real: Vec<f64>,
    pub imag: Vec<f64>,
}

impl Observation {
    pub fn to_operator(&self) -> Operator {
        let data = self.real.iter().zip(&self.imag).map(|(&r, &i)| crate::linalg::C64::new(r, i)).collect();
        Operator::from_vec(self.dim, data).expect("observation shape")
    }

    /// Planes stacked channel-first: `[real..., imag...]`.
    pub fn planes(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(2 * self.real.len());
        v.extend_from_slice(&self.real);
        v.extend_from_slice(&self.imag);
        v
    }
}

#[derive(Clone, Debug)]
pub struct Environment {
    pub table: Arc<ActionTable>,
    pub epsilon: f64,
}

impl Environment {
    pub fn new(table: Arc<ActionTable>) -> Self {
        Self { table, epsilon: EPSILON }
    }

    pub fn n_actions(&self) -> usize {
        self.table.len()
    }

    /// `V ⊗ I_anc` when the architecture has an ancilla, else `V`.
    pub fn full_target(&self, target: &Operator) -> Result<Operator> {
        let arch = &self.table.arch;
        if target.dim() != arch.data_dim() {
            return Err(invalid(format!(
                "target dimension {} does not match {} data qubit(s)",
                target.dim(),
                arch.n_data
            )));
        }
        Ok(if arch.has_ancilla { target.kron(&Operator::identity(2)) } else { target.clone() })
    }

    pub fn is_success(&self, m: &Operator) -> bool {
        let threshold = 1.0 - self.epsilon;
        if self.table.arch.has_ancilla {
            let block = project_unchecked(m, 0);
            block.weight > UNITARY_TOL && block.identity_fidelity() >= threshold
        } else {
            fidelity(m, &Operator::identity(m.dim())).map(|f| f >= threshold).unwrap_or(false)
        }
    }

    pub fn reset(&self, target: &Operator, max_steps: usize) -> Result<GameState> {
        if max_steps == 0 {
            return Err(invalid("max_steps must be at least 1"));
        }
        if !target.is_unitary(UNITARY_TOL) {
            return Err(invalid("target is not unitary"));
        }
        let m = self.full_target(target)?.adjoint();
        let won = self.is_success(&m);
        Ok(GameState { m, step: 0, max_steps, history: Vec::new(), done: won, won, mask: self.table.legal_mask(&[]) })
    }

    /// Applies `action`, returning the next state and the binary reward.
    pub fn step(&self, state: &GameState, action: usize) -> Result<(GameState, f64)> {
        if state.done {
            return Err(Error::InvalidState("cannot step a finished game".into()));
        }
        if action >= self.table.len() || !state.mask[action] {
            return Err(Error::IllegalAction { action, step: state.step });
        }
        let m = &self.table.embedded[action] * &state.m;
        let mut history = Vec::with_capacity(state.history.len() + 1);
        history.extend_from_slice(&state.history);
        history.push(action);
        let step = state.step + 1;
        let won = self.is_success(&m);
        let mask = self.table.legal_mask(&history);
        // a position without legal moves is a loss
        let done = won || step >= state.max_steps || !mask.contains(&true);
        let reward = if won { 1.0 } else { 0.0 };
        Ok((GameState { m, step, max_steps: state.max_steps, history, done, won, mask }, reward))
    }

    pub fn observe(&self, state: &GameState) -> Observation {
        let entries = state.m.entries();
        Observation {
            dim: state.m.dim(),
            real: entries.iter().map(|z| z.re).collect(),
            imag: entries.iter().map(|z| z.im).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gates::{clifford_t, h_t_cnot, Action, Architecture, GateKind::*};
    use crate::linalg::embed;
    use crate::targets::named_target;

    fn env(gates: &[crate::gates::GateKind], arch: Architecture) -> Environment {
        Environment::new(Arc::new(ActionTable::build(gates, &arch).unwrap()))
    }

    #[test]
    fn identity_target_is_won_immediately() {
        let e = env(&clifford_t(), Architecture::all_to_all(2));
        let s = e.reset(&Operator::identity(4), 10).unwrap();
        assert!(s.done && s.won && s.step == 0);
        assert!(e.step(&s, 0).is_err());
    }

    #[test]
    fn reset_state_is_target_adjoint() {
        let e = env(&clifford_t(), Architecture::all_to_all(2));
        let v = named_target("CH").unwrap();
        let s = e.reset(&v, 10).unwrap();
        assert!(s.m.max_abs_diff(&v.adjoint()) < 1e-15);
        assert!(!s.done);
    }

    #[test]
    fn reset_with_ancilla_embeds_target() {
        let e = env(&h_t_cnot(), Architecture::ancilla_star(2));
        let cs = named_target("CS").unwrap();
        let s = e.reset(&cs, 40).unwrap();
        assert_eq!(s.m.dim(), 8);
        let expect = cs.kron(&Operator::identity(2)).adjoint();
        assert!(s.m.max_abs_diff(&expect) < 1e-15);
        assert!(e.reset(&Operator::identity(8), 5).is_err());
        let bad = Operator::from_real(4, &[1.0; 16]).unwrap();
        assert!(e.reset(&bad, 5).is_err());
        assert!(e.reset(&cs, 0).is_err());
    }

    #[test]
    fn one_gate_target() {
        let e = env(&[H, T, Cnot], Architecture::all_to_all(2));
        let h1 = e.table.index_of(&Action::single(H, 1)).unwrap();
        let target = e.table.embedded[h1].clone();
        let s = e.reset(&target, 3).unwrap();
        let (s2, r) = e.step(&s, h1).unwrap();
        assert_eq!(r, 1.0);
        assert!(s2.won && s2.done);
        assert!(e.step(&s2, h1).is_err());
    }

    #[test]
    fn non_winning_step() {
        let e = env(&clifford_t(), Architecture::all_to_all(2));
        let cs = named_target("CS").unwrap();
        let s = e.reset(&cs, 5).unwrap();
        let (s2, r) = e.step(&s, 0).unwrap();
        assert_eq!(r, 0.0);
        assert!(!s2.done);
        assert_eq!(s2.step, 1);
    }

    #[test]
    fn cs_circuit_wins_at_step_five() {
        let e = env(&clifford_t(), Architecture::all_to_all(2));
        let t = &e.table;
        let seq = [
            Action::single(T, 0),
            Action::pair(Cnot, 0, 1),
            Action::single(Tdg, 1),
            Action::pair(Cnot, 0, 1),
            Action::single(T, 1),
        ];
        let mut s = e.reset(&named_target("CS").unwrap(), 5).unwrap();
        for (k, a) in seq.iter().enumerate() {
            let (next, r) = e.step(&s, t.index_of(a).unwrap()).unwrap();
            assert_eq!(r, if k == 4 { 1.0 } else { 0.0 });
            s = next;
        }
        assert!(s.won && s.step == 5);
    }

    #[test]
    fn illegal_action_is_rejected() {
        let e = env(&clifford_t(), Architecture::all_to_all(2));
        let s = e.reset(&named_target("CS").unwrap(), 5).unwrap();
        let (s, _) = e.step(&s, 0).unwrap();
        assert!(matches!(e.step(&s, 0), Err(Error::IllegalAction { action: 0, step: 1 })));
        assert!(e.step(&s, 999).is_err());
    }

    #[test]
    fn timeout_ends_game_without_reward() {
        let e = env(&clifford_t(), Architecture::all_to_all(2));
        let s = e.reset(&named_target("CS").unwrap(), 1).unwrap();
        let (s, r) = e.step(&s, 0).unwrap();
        assert!(s.done && !s.won && r == 0.0);
    }

    #[test]
    fn observation_planes() {
        let e = env(&[H, T], Architecture::all_to_all(1));
        let s = e.reset(&Operator::identity(2), 3).unwrap();
        let o = e.observe(&s);
        assert_eq!(o.real, vec![1.0, 0.0, 0.0, 1.0]);
        assert!(o.imag.iter().all(|&x| x == 0.0));
        assert_eq!(o.to_operator(), s.m);

        let t_gate = embed(&T.matrix(), &[0], 1).unwrap();
        let target = Operator::identity(2);
        let mut s = e.reset(&target, 3).unwrap();
        s.done = false;
        s.won = false;
        let (s2, _) = e.step(&s, 1).unwrap();
        let o = e.observe(&s2);
        assert!((o.imag[3] - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert_eq!(o.to_operator(), t_gate);
        assert!(o.real.iter().chain(&o.imag).all(|x| x.abs() <= 1.0));
    }

    #[test]
    fn ancilla_success_uses_outcome_zero_block() {
        let e = env(&h_t_cnot(), Architecture::ancilla_star(2));
        let t = &e.table;
        // H T CX(0,a) T† CX(1,a) T CX(0,a) on the ancilla: post-selected CS
        let seq = [
            Action::single(H, 2),
            Action::single(T, 2),
            Action::pair(Cnot, 0, 2),
            Action::single(Tdg, 2),
            Action::pair(Cnot, 1, 2),
            Action::single(T, 2),
            Action::pair(Cnot, 0, 2),
        ];
        let mut s = e.reset(&named_target("CS").unwrap(), 10).unwrap();
        let mut last = 0.0;
        for a in &seq {
            let (next, r) = e.step(&s, t.index_of(a).unwrap()).unwrap();
            s = next;
            last = r;
        }
        assert_eq!(last, 1.0);
        let b = project_unchecked(&s.m, 0);
        assert!((b.weight - 0.5).abs() < 1e-12);
        assert!(crate::linalg::is_proportional_unitary(&b, 1e-9));
    }
}
