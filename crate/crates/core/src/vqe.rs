//! Variational optimization of the ansatz against the penalized cost
//! `⟨H⟩ + λN⟨(N - N_target)²⟩ + λS⟨Sz²⟩`.
//!
//! The penalties are diagonal in the computational basis and are evaluated
//! from a precomputed table. BFGS consumes adjoint-mode gradients (one
//! operator application per gradient); the two-point parameter-shift rule
//! is available as [`VqeProblem::gradient`] and agrees with it to rounding.

use std::collections::{BTreeMap, VecDeque};
use std::f64::consts::FRAC_PI_2;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonian::Spin;
use crate::optimize::{minimize, BfgsOptions, Termination};
use crate::qubit::{Determinant, QubitHamiltonian};
use crate::statevector::{
    apply_gate, build_ansatz, real_inner, rotate_y, simulate, AnsatzSpec, Circuit,
    CompiledOperator, Gate, StateVector,
};
use crate::C64;

/// Half-width of the default uniform initialization interval.
pub const DEFAULT_INIT_SPREAD: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialParams {
    Explicit(Vec<f64>),
    /// Uniform in `[-spread, spread]` from a ChaCha8 stream.
    Seeded { seed: u64, spread: f64 },
}

impl InitialParams {
    pub fn resolve(&self, n_params: usize) -> Result<Vec<f64>> {
        match self {
            InitialParams::Explicit(v) if v.len() == n_params => Ok(v.clone()),
            InitialParams::Explicit(v) => Err(Error::Argument(format!(
                "expected {n_params} initial parameters, got {}",
                v.len()
            ))),
            InitialParams::Seeded { seed, spread } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                Ok((0..n_params)
                    .map(|_| rng.random_range(-*spread..=*spread))
                    .collect())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VqeConfig {
    pub ansatz: AnsatzSpec,
    pub lambda_n: f64,
    pub n_target: usize,
    pub lambda_s: f64,
    pub max_iterations: usize,
    pub snapshot_iterations: Vec<usize>,
    pub initial_params: InitialParams,
    pub gradient_tolerance: f64,
}

impl VqeConfig {
    /// Penalty weights 0.5 and 0.2, 400 iterations with a snapshot at the
    /// start and at the end, small random initial angles.
    pub fn standard(ansatz: AnsatzSpec, n_target: usize, seed: u64) -> Self {
        Self {
            ansatz,
            lambda_n: 0.5,
            n_target,
            lambda_s: 0.2,
            max_iterations: 400,
            snapshot_iterations: vec![0, 400],
            initial_params: InitialParams::Seeded {
                seed,
                spread: DEFAULT_INIT_SPREAD,
            },
            gradient_tolerance: 1e-8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.ansatz.validate()?;
        if !(self.lambda_n >= 0.0 && self.lambda_s >= 0.0) {
            return Err(Error::Configuration(
                "penalty weights must be non-negative".into(),
            ));
        }
        if let Some(&s) = self.snapshot_iterations.iter().find(|&&s| s > self.max_iterations) {
            return Err(Error::Configuration(format!(
                "snapshot iteration {s} exceeds max_iterations {}",
                self.max_iterations
            )));
        }
        if !(self.gradient_tolerance >= 0.0) {
            return Err(Error::Configuration("gradient tolerance must be non-negative".into()));
        }
        Ok(())
    }
}

/// Everything needed to evaluate the cost of one parameter vector.
#[derive(Debug, Clone)]
pub struct VqeProblem {
    circuit: Circuit,
    hamiltonian: CompiledOperator,
    penalty: Vec<f64>,
}

/// Value of the cost and its bare-Hamiltonian part at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostValue {
    pub cost: f64,
    pub energy: f64,
}

impl VqeProblem {
    pub fn new(
        ham: &QubitHamiltonian,
        qubit_spins: &[Spin],
        hf: Determinant,
        config: &VqeConfig,
    ) -> Result<Self> {
        config.validate()?;
        let n = ham.n_qubits();
        if config.ansatz.n_qubits != n || qubit_spins.len() != n {
            return Err(Error::Configuration(format!(
                "ansatz has {} qubits, Hamiltonian {n}, spin metadata {}",
                config.ansatz.n_qubits,
                qubit_spins.len()
            )));
        }
        let circuit = build_ansatz(&config.ansatz, hf)?;
        let alpha: u64 = qubit_spins
            .iter()
            .enumerate()
            .filter(|(_, &s)| s == Spin::Alpha)
            .map(|(q, _)| 1u64 << q)
            .sum();
        let penalty = (0..1u64 << n)
            .map(|b| {
                let total = b.count_ones() as f64;
                let sz = (b & alpha).count_ones() as f64 - 0.5 * total;
                let dn = total - config.n_target as f64;
                config.lambda_n * dn * dn + config.lambda_s * sz * sz
            })
            .collect();
        Ok(Self {
            circuit,
            hamiltonian: CompiledOperator::new(ham),
            penalty,
        })
    }

    pub fn circuit(&self) -> &Circuit {
        &self.circuit
    }

    pub fn n_params(&self) -> usize {
        self.circuit.n_params()
    }

    pub fn state(&self, params: &[f64]) -> Result<StateVector> {
        simulate(&self.circuit, params)
    }

    fn penalty_expectation(&self, amps: &[C64]) -> f64 {
        amps.iter().zip(&self.penalty).map(|(a, p)| a.norm_sqr() * p).sum()
    }

    pub fn evaluate(&self, params: &[f64]) -> Result<CostValue> {
        let state = self.state(params)?;
        let energy = self.hamiltonian.expectation(&state)?;
        Ok(CostValue {
            cost: energy + self.penalty_expectation(state.amplitudes()),
            energy,
        })
    }

    pub fn cost(&self, params: &[f64]) -> Result<f64> {
        Ok(self.evaluate(params)?.cost)
    }

    /// Parameter-shift gradient `[C(θ + π/2) - C(θ - π/2)] / 2` per component.
    pub fn gradient(&self, params: &[f64]) -> Result<Vec<f64>> {
        let mut shifted = params.to_vec();
        (0..params.len())
            .map(|k| {
                shifted[k] = params[k] + FRAC_PI_2;
                let plus = self.cost(&shifted)?;
                shifted[k] = params[k] - FRAC_PI_2;
                let minus = self.cost(&shifted)?;
                shifted[k] = params[k];
                Ok(0.5 * (plus - minus))
            })
            .collect()
    }

    /// Cost, bare energy and the exact gradient from a single backward sweep
    /// through the circuit.
    pub fn adjoint_gradient(&self, params: &[f64]) -> Result<(CostValue, Vec<f64>)> {
        let state = self.state(params)?;
        let mut phi = state.amplitudes().to_vec();
        let mut lam = vec![C64::default(); phi.len()];
        self.hamiltonian.apply(&phi, &mut lam);
        let energy = real_inner(&phi, &lam)?;
        let mut cost = energy;
        for ((l, p), pen) in lam.iter_mut().zip(&phi).zip(&self.penalty) {
            *l += p * pen;
            cost += p.norm_sqr() * pen;
        }
        let mut grad = vec![0.0; params.len()];
        let mut scratch = vec![C64::default(); phi.len()];
        for &gate in self.circuit.gates().iter().rev() {
            match gate {
                Gate::Ry { qubit, param } => {
                    let (s, c) = (params[param] / 2.0).sin_cos();
                    rotate_y(&mut phi, qubit, c, -s);
                    scratch.copy_from_slice(&phi);
                    // d/dθ of [[c, -s], [s, c]] is [[-s, -c], [c, -s]] / 2.
                    rotate_y(&mut scratch, qubit, -0.5 * s, 0.5 * c);
                    grad[param] += 2.0
                        * lam
                            .iter()
                            .zip(&scratch)
                            .map(|(a, b)| (a.conj() * b).re)
                            .sum::<f64>();
                    rotate_y(&mut lam, qubit, c, -s);
                }
                other => {
                    apply_gate(&mut phi, other, params);
                    apply_gate(&mut lam, other, params);
                }
            }
        }
        Ok((CostValue { cost, energy }, grad))
    }
}

/// Per-iteration record of an optimization run. Entry `i` of `costs` and
/// `energies` belongs to iteration `i`; iteration 0 is the initial point.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationTrace {
    pub costs: Vec<f64>,
    pub energies: Vec<f64>,
    /// Parameters at each requested iteration. A run that stops early
    /// records its final parameters for the later requests.
    pub snapshots: BTreeMap<usize, Vec<f64>>,
    pub final_params: Vec<f64>,
    pub converged: bool,
    pub termination: Termination,
    pub evaluations: usize,
}

#[derive(Serialize, Deserialize)]
struct SnapshotEntry {
    iteration: usize,
    params: Vec<f64>,
}

impl OptimizationTrace {
    pub fn iterations(&self) -> usize {
        self.costs.len().saturating_sub(1)
    }

    /// `iteration,cost,bare_energy` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,cost,bare_energy\n");
        for (i, (c, e)) in self.costs.iter().zip(&self.energies).enumerate() {
            writeln!(out, "{i},{c},{e}").expect("writing to a string");
        }
        out
    }

    pub fn snapshots_json(&self) -> String {
        let entries: Vec<SnapshotEntry> = self
            .snapshots
            .iter()
            .map(|(&iteration, params)| SnapshotEntry {
                iteration,
                params: params.clone(),
            })
            .collect();
        serde_json::to_string_pretty(&entries).expect("serializable snapshots")
    }

    pub fn parse_snapshots(text: &str) -> Result<BTreeMap<usize, Vec<f64>>> {
        let entries: Vec<SnapshotEntry> = serde_json::from_str(text).map_err(|e| Error::Schema {
            location: format!("snapshots line {} column {}", e.line(), e.column()),
            message: e.to_string(),
        })?;
        Ok(entries.into_iter().map(|e| (e.iteration, e.params)).collect())
    }
}

/// Remembers recent evaluations so the trace can report the bare energy of
/// an accepted point without recomputing it.
struct Recorder<'a> {
    problem: &'a VqeProblem,
    recent: VecDeque<(Vec<f64>, CostValue)>,
    evaluations: usize,
}

impl Recorder<'_> {
    const CAPACITY: usize = 64;

    fn lookup(&self, x: &[f64]) -> Option<CostValue> {
        self.recent.iter().rev().find(|(p, _)| p == x).map(|(_, v)| *v)
    }
}

/// Runs BFGS from the configured initial parameters.
pub fn optimize(problem: &VqeProblem, config: &VqeConfig) -> Result<OptimizationTrace> {
    config.validate()?;
    let x0 = config.initial_params.resolve(problem.n_params())?;
    let opts = BfgsOptions {
        max_iterations: config.max_iterations,
        gradient_tolerance: config.gradient_tolerance,
        ..Default::default()
    };
    let mut recorder = Recorder {
        problem,
        recent: VecDeque::new(),
        evaluations: 0,
    };
    let mut costs = Vec::new();
    let mut energies = Vec::new();
    let mut snapshots = BTreeMap::new();
    let wanted: Vec<usize> = config.snapshot_iterations.clone();

    // The objective and the iteration callback both need the evaluation
    // cache; a RefCell keeps the borrow checker out of the way.
    let cell = std::cell::RefCell::new(&mut recorder);
    let mut objective = |x: &[f64]| -> Result<(f64, Vec<f64>)> {
        let mut r = cell.borrow_mut();
        let (value, grad) = r.problem.adjoint_gradient(x)?;
        r.evaluations += 1;
        if r.recent.len() == Recorder::CAPACITY {
            r.recent.pop_front();
        }
        r.recent.push_back((x.to_vec(), value));
        Ok((value.cost, grad))
    };
    let outcome = minimize(&mut objective, &x0, &opts, |iteration, x, value| {
        let cached = cell.borrow().lookup(x);
        let energy = match cached {
            Some(v) => v.energy,
            None => problem.evaluate(x)?.energy,
        };
        costs.push(value);
        energies.push(energy);
        if wanted.contains(&iteration) {
            snapshots.insert(iteration, x.to_vec());
        }
        Ok(())
    })?;
    let evaluations = cell.borrow().evaluations;
    for &s in &wanted {
        snapshots.entry(s).or_insert_with(|| outcome.x.clone());
    }
    Ok(OptimizationTrace {
        costs,
        energies,
        snapshots,
        final_params: outcome.x,
        converged: outcome.termination == Termination::GradientTolerance,
        termination: outcome.termination,
        evaluations,
    })
}
