//! Dense state-vector simulation of the hardware-efficient ansatz, plus
//! computational-basis sampling and ideal top-R selection.
//!
//! The ansatz prepares the HF determinant with X gates and then alternates
//! `d + 1` layers of `Ry(θ)` on every qubit with `d` layers of CZ gates. Each
//! CZ couples an even (HF-occupied) qubit with an odd (HF-virtual) one.

use std::collections::BTreeMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qubit::{Determinant, GroupedOperator, QubitHamiltonian, SectorFilter};
use crate::C64;

/// Largest register the dense simulator accepts.
pub const MAX_QUBITS: usize = 24;

const NORM_TOLERANCE: f64 = 1e-12;
const IMAGINARY_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnsatzSpec {
    pub n_qubits: usize,
    pub depth: usize,
    /// One list of CZ pairs per entangling layer.
    pub entanglers: Vec<Vec<(usize, usize)>>,
}

impl AnsatzSpec {
    /// Ladder wiring: even layers pair `(2m, 2m+1)`, odd layers pair
    /// `(2m+1, 2m+2)` along the qubit line.
    pub fn ladder(n_qubits: usize, depth: usize) -> Self {
        let entanglers = (0..depth)
            .map(|layer| {
                let offset = layer % 2;
                (offset..n_qubits.saturating_sub(1))
                    .step_by(2)
                    .map(|q| (q, q + 1))
                    .collect()
            })
            .collect();
        Self {
            n_qubits,
            depth,
            entanglers,
        }
    }

    pub fn n_params(&self) -> usize {
        self.n_qubits * (self.depth + 1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_qubits == 0 || self.n_qubits > MAX_QUBITS {
            return Err(Error::Argument(format!(
                "ansatz needs 1..={MAX_QUBITS} qubits, got {}",
                self.n_qubits
            )));
        }
        if self.entanglers.len() != self.depth {
            return Err(Error::Argument(format!(
                "depth {} but {} entangler layers",
                self.depth,
                self.entanglers.len()
            )));
        }
        for (layer, pairs) in self.entanglers.iter().enumerate() {
            for &(a, b) in pairs {
                if a >= self.n_qubits || b >= self.n_qubits {
                    return Err(Error::Argument(format!(
                        "entangler ({a}, {b}) in layer {layer} is outside the register"
                    )));
                }
                if a % 2 == b % 2 {
                    return Err(Error::Argument(format!(
                        "entangler ({a}, {b}) in layer {layer} must join an even and an odd qubit"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gate {
    X(usize),
    /// `exp(-iθY/2)` with θ taken from the parameter vector.
    Ry { qubit: usize, param: usize },
    Cz(usize, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Circuit {
    n_qubits: usize,
    n_params: usize,
    gates: Vec<Gate>,
}

impl Circuit {
    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }
}

/// Lays out the ansatz on top of the reference determinant `hf`.
/// Parameter `ℓ·n + q` drives the `Ry` on qubit `q` in rotation layer `ℓ`.
pub fn build_ansatz(spec: &AnsatzSpec, hf: Determinant) -> Result<Circuit> {
    spec.validate()?;
    let n = spec.n_qubits;
    let mut gates: Vec<Gate> = (0..n).filter(|&q| hf.is_set(q)).map(Gate::X).collect();
    for layer in 0..=spec.depth {
        gates.extend((0..n).map(|q| Gate::Ry {
            qubit: q,
            param: layer * n + q,
        }));
        if layer < spec.depth {
            gates.extend(spec.entanglers[layer].iter().map(|&(a, b)| Gate::Cz(a, b)));
        }
    }
    Ok(Circuit {
        n_qubits: n,
        n_params: spec.n_params(),
        gates,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amplitudes: Vec<C64>,
}

impl StateVector {
    pub fn basis(n_qubits: usize, det: Determinant) -> Self {
        let mut amplitudes = vec![C64::default(); 1 << n_qubits];
        amplitudes[det.0 as usize] = C64::new(1.0, 0.0);
        Self {
            n_qubits,
            amplitudes,
        }
    }

    /// Normalizes and wraps raw amplitudes; the length must be a power of two.
    pub fn from_amplitudes(amplitudes: Vec<C64>) -> Result<Self> {
        let len = amplitudes.len();
        if len == 0 || !len.is_power_of_two() {
            return Err(Error::Argument(format!("{len} amplitudes is not a power of two")));
        }
        let norm = amplitudes.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::Numeric("state has zero or non-finite norm".into()));
        }
        Ok(Self {
            n_qubits: len.trailing_zeros() as usize,
            amplitudes: amplitudes.into_iter().map(|z| z / norm).collect(),
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn amplitude(&self, det: Determinant) -> C64 {
        self.amplitudes[det.0 as usize]
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|z| z.norm_sqr()).collect()
    }
}

pub(crate) fn apply_gate(amps: &mut [C64], gate: Gate, params: &[f64]) {
    match gate {
        Gate::X(q) => {
            let bit = 1usize << q;
            for b in 0..amps.len() {
                if b & bit == 0 {
                    amps.swap(b, b | bit);
                }
            }
        }
        Gate::Ry { qubit, param } => {
            let (s, c) = (params[param] / 2.0).sin_cos();
            rotate_y(amps, qubit, c, s);
        }
        Gate::Cz(a, b) => {
            let mask = (1usize << a) | (1usize << b);
            for (i, amp) in amps.iter_mut().enumerate() {
                if i & mask == mask {
                    *amp = -*amp;
                }
            }
        }
    }
}

/// Applies `[[c, -s], [s, c]]` on `qubit`.
pub(crate) fn rotate_y(amps: &mut [C64], qubit: usize, c: f64, s: f64) {
    let bit = 1usize << qubit;
    for b in 0..amps.len() {
        if b & bit == 0 {
            let a0 = amps[b];
            let a1 = amps[b | bit];
            amps[b] = a0 * c - a1 * s;
            amps[b | bit] = a0 * s + a1 * c;
        }
    }
}

pub fn simulate(circuit: &Circuit, params: &[f64]) -> Result<StateVector> {
    if params.len() != circuit.n_params {
        return Err(Error::Argument(format!(
            "expected {} parameters, got {}",
            circuit.n_params,
            params.len()
        )));
    }
    let mut state = StateVector::basis(circuit.n_qubits, Determinant(0));
    for &gate in &circuit.gates {
        apply_gate(&mut state.amplitudes, gate, params);
    }
    let norm = state.norm();
    if (norm - 1.0).abs() > NORM_TOLERANCE {
        return Err(Error::Numeric(format!("simulated state has norm {norm}")));
    }
    Ok(state)
}

/// `<ψ|op|ψ>` for an operator already grouped by flip mask.
pub fn expectation_grouped(state: &StateVector, op: &GroupedOperator) -> Result<f64> {
    if op.n_qubits() != state.n_qubits {
        return Err(Error::Argument(format!(
            "operator on {} qubits, state on {}",
            op.n_qubits(),
            state.n_qubits
        )));
    }
    let mut h_psi = vec![C64::default(); state.amplitudes.len()];
    op.apply_dense(&state.amplitudes, &mut h_psi);
    real_inner(&state.amplitudes, &h_psi)
}

pub fn expectation(state: &StateVector, op: &QubitHamiltonian) -> Result<f64> {
    expectation_grouped(state, &op.grouped())
}

pub(crate) fn real_inner(bra: &[C64], ket: &[C64]) -> Result<f64> {
    let value: C64 = bra.iter().zip(ket).map(|(a, b)| a.conj() * b).sum();
    if value.im.abs() > IMAGINARY_TOLERANCE {
        return Err(Error::Hermiticity {
            indices: "expectation value".into(),
            residual: value.im.abs(),
        });
    }
    Ok(value.re)
}

/// An operator prepared for repeated action on full state vectors. When the
/// memory budget allows, each flip group's phase is tabulated over the whole
/// register so an application costs one multiply-add per group and amplitude.
#[derive(Debug, Clone)]
pub struct CompiledOperator {
    grouped: GroupedOperator,
    tables: Option<Vec<Vec<C64>>>,
}

/// Upper bound on tabulated phases (16 bytes each).
pub const TABLE_BUDGET: usize = 1 << 25;

impl CompiledOperator {
    pub fn new(op: &QubitHamiltonian) -> Self {
        let grouped = op.grouped();
        let dim = 1usize << grouped.n_qubits();
        let tables = (grouped.groups().len().saturating_mul(dim) <= TABLE_BUDGET).then(|| {
            grouped
                .groups()
                .iter()
                .map(|g| (0..dim as u64).map(|b| g.phase(b)).collect())
                .collect()
        });
        Self { grouped, tables }
    }

    pub fn n_qubits(&self) -> usize {
        self.grouped.n_qubits()
    }

    pub fn apply(&self, psi: &[C64], out: &mut [C64]) {
        let Some(tables) = &self.tables else {
            self.grouped.apply_dense(psi, out);
            return;
        };
        out.iter_mut().for_each(|v| *v = C64::default());
        for (g, table) in self.grouped.groups().iter().zip(tables) {
            let x = g.x_mask as usize;
            for (b, (&amp, &phase)) in psi.iter().zip(table).enumerate() {
                out[b ^ x] += phase * amp;
            }
        }
    }

    pub fn expectation(&self, state: &StateVector) -> Result<f64> {
        if self.n_qubits() != state.n_qubits {
            return Err(Error::Argument(format!(
                "operator on {} qubits, state on {}",
                self.n_qubits(),
                state.n_qubits
            )));
        }
        let mut h_psi = vec![C64::default(); state.amplitudes.len()];
        self.apply(&state.amplitudes, &mut h_psi);
        real_inner(&state.amplitudes, &h_psi)
    }
}

/// Shot counts over computational-basis outcomes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleDistribution {
    pub n_qubits: usize,
    pub counts: BTreeMap<Determinant, u64>,
    pub total_shots: u64,
    pub seed: u64,
}

#[derive(Serialize, Deserialize)]
struct SampleFile {
    n_qubits: usize,
    total_shots: u64,
    seed: u64,
    counts: BTreeMap<String, u64>,
}

impl SampleDistribution {
    pub fn frequencies(&self) -> BTreeMap<Determinant, f64> {
        let total = self.total_shots.max(1) as f64;
        self.counts
            .iter()
            .map(|(&d, &c)| (d, c as f64 / total))
            .collect()
    }

    pub fn to_json(&self) -> String {
        let file = SampleFile {
            n_qubits: self.n_qubits,
            total_shots: self.total_shots,
            seed: self.seed,
            counts: self
                .counts
                .iter()
                .map(|(d, &c)| (d.to_bitstring(self.n_qubits), c))
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("serializable samples")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: SampleFile = serde_json::from_str(text).map_err(|e| Error::Schema {
            location: format!("samples line {} column {}", e.line(), e.column()),
            message: e.to_string(),
        })?;
        let mut counts = BTreeMap::new();
        for (bits, c) in file.counts {
            if bits.len() != file.n_qubits {
                return Err(Error::Schema {
                    location: "samples counts".into(),
                    message: format!("bitstring `{bits}` is not {} wide", file.n_qubits),
                });
            }
            counts.insert(Determinant::parse_bitstring(&bits)?, c);
        }
        let sum: u64 = counts.values().sum();
        if sum != file.total_shots {
            return Err(Error::Validation(format!(
                "counts sum to {sum} but total_shots = {}",
                file.total_shots
            )));
        }
        Ok(Self {
            n_qubits: file.n_qubits,
            counts,
            total_shots: file.total_shots,
            seed: file.seed,
        })
    }
}

/// Draws `n_shots` outcomes from `(1 - p)|ψ|² + p · uniform`.
pub fn sample(
    state: &StateVector,
    n_shots: u64,
    seed: u64,
    depolarize_p: f64,
) -> Result<SampleDistribution> {
    if n_shots == 0 {
        return Err(Error::Argument("n_shots must be positive".into()));
    }
    if !(0.0..=1.0).contains(&depolarize_p) {
        return Err(Error::Argument(format!(
            "depolarizing probability {depolarize_p} is outside [0, 1]"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = state.amplitudes.len();
    let ideal = if depolarize_p < 1.0 {
        Some(
            WeightedIndex::new(state.probabilities())
                .map_err(|e| Error::Numeric(format!("invalid sampling weights: {e}")))?,
        )
    } else {
        None
    };
    let mut counts = BTreeMap::new();
    for _ in 0..n_shots {
        let outcome = match &ideal {
            Some(w) if depolarize_p == 0.0 || rng.random::<f64>() >= depolarize_p => {
                w.sample(&mut rng)
            }
            _ => rng.random_range(0..dim),
        };
        *counts.entry(Determinant(outcome as u64)).or_insert(0) += 1;
    }
    Ok(SampleDistribution {
        n_qubits: state.n_qubits,
        counts,
        total_shots: n_shots,
        seed,
    })
}

/// The `r` determinants with the largest `|amplitude|²`, optionally inside a
/// sector. Ties go to the smaller bit value. Zero-amplitude determinants are
/// eligible and rank last, so asking for the whole sector returns it.
pub fn top_r_amplitudes(
    state: &StateVector,
    r: usize,
    sector: Option<SectorFilter>,
) -> Vec<Determinant> {
    let mut ranked: Vec<(f64, u64)> = state
        .amplitudes
        .iter()
        .enumerate()
        .filter(|(b, _)| sector.is_none_or(|f| f.contains(Determinant(*b as u64))))
        .map(|(b, z)| (z.norm_sqr(), b as u64))
        .collect();
    let order = |a: &(f64, u64), b: &(f64, u64)| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1));
    if r < ranked.len() {
        ranked.select_nth_unstable_by(r, order);
        ranked.truncate(r);
    }
    ranked.sort_by(order);
    ranked.into_iter().map(|(_, b)| Determinant(b)).collect()
}
