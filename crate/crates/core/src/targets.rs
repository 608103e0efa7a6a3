//! Target generation: random mask-clean circuits, clean-ancilla targets,
//! the depth curriculum, and named benchmark unitaries.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_4};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::circuit::Circuit;
use crate::error::{invalid, Error, Result};
use crate::gates::ActionTable;
use crate::linalg::{is_proportional_unitary, project_unchecked, Operator, C64, ONE, UNITARY_TOL, ZERO};

pub const DEFAULT_REJECTION_BUDGET: usize = 10_000;

/// A sampled target together with the circuit that produced it.
#[derive(Clone, Debug)]
pub struct Target {
    pub circuit: Circuit,
    /// The target on the data qubits.
    pub unitary: Operator,
}

impl Target {
    pub fn depth(&self) -> usize {
        self.circuit.depth()
    }
}

/// Draws `depth` gates, each uniform over the actions that pass the
/// redundancy walk against the gates drawn so far.
pub fn sample_random_circuit<R: Rng + ?Sized>(depth: usize, table: &ActionTable, rng: &mut R) -> Result<Circuit> {
    if depth == 0 {
        return Err(invalid("depth must be at least 1"));
    }
    let mut history = Vec::with_capacity(depth);
    for _ in 0..depth {
        let legal: Vec<usize> = (0..table.len()).filter(|&a| table.is_legal_after(&history, a)).collect();
        if legal.is_empty() {
            return Err(Error::SamplingFailure { tries: 1 });
        }
        history.push(legal[rng.random_range(0..legal.len())]);
    }
    Ok(Circuit::from_history(table, &history))
}

/// Samples a target for the table's architecture: the circuit unitary, or the
/// post-selected block for ancilla tables.
pub fn sample_target<R: Rng + ?Sized>(depth: usize, table: &ActionTable, rng: &mut R) -> Result<Target> {
    if table.arch.has_ancilla {
        return sample_clean_ancilla_target(depth, table, rng, DEFAULT_REJECTION_BUDGET);
    }
    let circuit = sample_random_circuit(depth, table, rng)?;
    let unitary = circuit.unitary()?;
    Ok(Target { circuit, unitary })
}

/// Rejection-samples ancilla circuits until the outcome-0 block is
/// proportional to a unitary; the normalized block is the target.
pub fn sample_clean_ancilla_target<R: Rng + ?Sized>(
    depth: usize,
    table: &ActionTable,
    rng: &mut R,
    max_tries: usize,
) -> Result<Target> {
    if !table.arch.has_ancilla {
        return Err(invalid("clean-ancilla sampling needs an ancilla architecture"));
    }
    for _ in 0..max_tries {
        let circuit = sample_random_circuit(depth, table, rng)?;
        if let Some(unitary) = accept_ancilla_circuit(&circuit)? {
            return Ok(Target { circuit, unitary });
        }
    }
    Err(Error::SamplingFailure { tries: max_tries })
}

/// The normalized outcome-0 block when it passes the unitarity check.
pub fn accept_ancilla_circuit(circuit: &Circuit) -> Result<Option<Operator>> {
    let block = project_unchecked(&circuit.unitary()?, 0);
    if !is_proportional_unitary(&block, UNITARY_TOL) {
        return Ok(None);
    }
    Ok(block.normalized())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurriculumState {
    pub mu: usize,
    pub sigma: f64,
    /// Games played at the current `mu`.
    pub games_at_level: usize,
    pub n_games_per_level: usize,
    pub epochs_per_depth: usize,
    pub d_min: usize,
    pub d_max: usize,
}

impl Default for CurriculumState {
    fn default() -> Self {
        Self { mu: 5, sigma: 5.0, games_at_level: 0, n_games_per_level: 2048, epochs_per_depth: 5, d_min: 5, d_max: 40 }
    }
}

impl CurriculumState {
    /// Games after which `mu` increments.
    pub fn games_per_depth(&self) -> usize {
        self.n_games_per_level * self.epochs_per_depth
    }

    /// Draws a depth from the current level without advancing the counter.
    pub fn sample_depth<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let lo = self.d_min.max(1);
        let hi = self.d_max.max(lo);
        let d = if self.sigma > 0.0 {
            let normal = Normal::new(self.mu as f64, self.sigma).expect("finite sigma");
            normal.sample(rng).round()
        } else {
            self.mu as f64
        };
        (d.max(lo as f64) as usize).clamp(lo, hi)
    }
}

/// Draws the next game's depth (which is also its step limit) and advances
/// the curriculum.
pub fn curriculum_next<R: Rng + ?Sized>(cs: &CurriculumState, rng: &mut R) -> (usize, CurriculumState) {
    let d = cs.sample_depth(rng);
    let mut next = cs.clone();
    next.games_at_level += 1;
    if next.games_at_level >= next.games_per_depth() {
        next.mu += 1;
        next.games_at_level = 0;
    }
    (d, next)
}

pub const NAMED_TARGETS: [&str; 8] = ["CS", "CT", "CH", "CV", "iSWAP", "Toffoli", "CCZ", "Fredkin"];

fn controlled(u: &Operator) -> Operator {
    let n = u.dim();
    let d = 2 * n;
    let mut data = vec![ZERO; d * d];
    for i in 0..n {
        data[i * d + i] = ONE;
    }
    for r in 0..n {
        for c in 0..n {
            data[(n + r) * d + n + c] = u.get(r, c);
        }
    }
    Operator::from_vec(d, data).unwrap()
}

fn permutation(dim: usize, map: impl Fn(usize) -> usize) -> Operator {
    let mut data = vec![ZERO; dim * dim];
    for col in 0..dim {
        data[map(col) * dim + col] = ONE;
    }
    Operator::from_vec(dim, data).unwrap()
}

/// Standard matrices for the benchmark gates; controls are the leading
/// qubits.
pub fn named_target(name: &str) -> Result<Operator> {
    let i = C64::new(0.0, 1.0);
    let h = Operator::from_real(2, &[FRAC_1_SQRT_2, FRAC_1_SQRT_2, FRAC_1_SQRT_2, -FRAC_1_SQRT_2])?;
    let x = Operator::from_real(2, &[0.0, 1.0, 1.0, 0.0])?;
    let op = match name.to_ascii_lowercase().as_str() {
        "cs" => Operator::diagonal(&[ONE, ONE, ONE, i])?,
        "ct" => Operator::diagonal(&[ONE, ONE, ONE, C64::from_polar(1.0, FRAC_PI_4)])?,
        "ch" => controlled(&h),
        "cv" => {
            let p = C64::new(0.5, 0.5);
            let m = C64::new(0.5, -0.5);
            controlled(&Operator::from_vec(2, vec![p, m, m, p])?)
        }
        "iswap" => Operator::from_rows(&[
            vec![ONE, ZERO, ZERO, ZERO],
            vec![ZERO, ZERO, i, ZERO],
            vec![ZERO, i, ZERO, ZERO],
            vec![ZERO, ZERO, ZERO, ONE],
        ])?,
        "toffoli" | "ccx" => controlled(&controlled(&x)),
        "ccz" => {
            let mut d = vec![ONE; 8];
            d[7] = -ONE;
            Operator::diagonal(&d)?
        }
        "fredkin" | "cswap" => permutation(8, |b| match b {
            5 => 6,
            6 => 5,
            b => b,
        }),
        _ => return Err(invalid(format!("unknown target `{name}`"))),
    };
    Ok(op)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gates::{clifford_t, h_t_cnot, Action, Architecture, GateKind};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn table() -> ActionTable {
        ActionTable::build(&clifford_t(), &Architecture::all_to_all(2)).unwrap()
    }

    #[test]
    fn depth_one_and_determinism() {
        let t = table();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(sample_random_circuit(1, &t, &mut rng).unwrap().depth(), 1);
        let a = sample_random_circuit(20, &t, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = sample_random_circuit(20, &t, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
        assert!(sample_random_circuit(0, &t, &mut rng).is_err());
    }

    #[test]
    fn sampled_circuits_follow_the_mask() {
        let t = table();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let c = sample_random_circuit(20, &t, &mut rng).unwrap();
            let hist: Vec<usize> = c.gates.iter().map(|a| t.index_of(a).unwrap()).collect();
            for k in 0..hist.len() {
                assert!(t.is_legal_after(&hist[..k], hist[k]));
            }
        }
    }

    #[test]
    fn ancilla_flip_is_rejected_and_trivial_circuit_accepted() {
        let flip = Circuit { n_data: 2, has_ancilla: true, gates: vec![Action::single(GateKind::X, 2)] };
        assert!(accept_ancilla_circuit(&flip).unwrap().is_none());
        let trivial = Circuit { n_data: 2, has_ancilla: true, gates: vec![Action::single(GateKind::T, 2)] };
        let u = accept_ancilla_circuit(&trivial).unwrap().unwrap();
        assert!(u.is_identity_up_to_phase(1e-12));
    }

    #[test]
    fn accepted_ancilla_targets_are_unitary() {
        let t = ActionTable::build(&h_t_cnot(), &Architecture::ancilla_star(2)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..30 {
            let tg = sample_clean_ancilla_target(8, &t, &mut rng, DEFAULT_REJECTION_BUDGET).unwrap();
            assert!(tg.unitary.is_unitary(1e-9));
            assert_eq!(tg.depth(), 8);
        }
        assert!(sample_clean_ancilla_target(3, &table(), &mut rng, 10).is_err());
    }

    #[test]
    fn rejection_budget_is_enforced() {
        // only X on the ancilla: the block is always zero
        let arch = Architecture { n_data: 1, has_ancilla: true, connectivity: vec![], single_qubit_sites: vec![1] };
        let t = ActionTable::build(&[GateKind::X], &arch).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = sample_clean_ancilla_target(1, &t, &mut rng, 25).unwrap_err();
        assert!(matches!(err, Error::SamplingFailure { tries: 25 }));
    }

    #[test]
    fn curriculum_clamps_and_advances() {
        let cs = CurriculumState::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut state = cs.clone();
        for _ in 0..cs.games_per_depth() {
            let (d, next) = curriculum_next(&state, &mut rng);
            assert!((5..=40).contains(&d));
            state = next;
        }
        assert_eq!(state.mu, 6);
        assert_eq!(state.games_at_level, 0);
        // still at 6 after one more game
        let (_, next) = curriculum_next(&state, &mut rng);
        assert_eq!(next.mu, 6);
        assert_eq!(next.games_at_level, 1);
    }

    #[test]
    fn named_targets() {
        let cs = named_target("CS").unwrap();
        assert_eq!(cs.get(3, 3), C64::new(0.0, 1.0));
        let ccz = named_target("CCZ").unwrap();
        assert_eq!(ccz.get(7, 7), -ONE);
        assert_eq!(ccz.get(6, 6), ONE);
        for name in NAMED_TARGETS {
            assert!(named_target(name).unwrap().is_unitary(1e-12), "{name}");
        }
        assert!(named_target("QFT").is_err());
        let f = named_target("Fredkin").unwrap();
        // |101> <-> |110>
        assert_eq!(f.get(6, 5), ONE);
    }
}
