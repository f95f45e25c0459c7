//! Quantum-selected configuration interaction: pick the most frequent
//! configurations, project the Hamiltonian onto them and diagonalize.
//! The exact full-sector solver lives here too and doubles as the oracle.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonian::FermionHamiltonian;
use crate::linalg::{lowest_eigenpair, SparseHermitian};
use crate::qubit::{
    jordan_wigner, Determinant, GroupedOperator, QubitLayout, QubitOrdering, Sector, SectorFilter,
};
use crate::statevector::{top_r_amplitudes, SampleDistribution, StateVector};
use crate::C64;

/// Residual allowed before a subspace matrix is declared non-Hermitian.
pub const SUBSPACE_HERMITICITY_TOLERANCE: f64 = 1e-10;

/// Lowest eigenvalues closer than this are reported as degenerate.
pub const DEGENERACY_TOLERANCE: f64 = 1e-10;

/// Default cap on the FCI sector dimension.
pub const DEFAULT_FCI_BUDGET: usize = 250_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    /// Most frequent outcomes of finite-shot sampling.
    Shots,
    /// Largest amplitudes of the simulated state.
    Ideal,
    /// Every determinant of the sector.
    Exhaustive,
}

/// The configuration set `S_R`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceSelection {
    pub determinants: Vec<Determinant>,
    pub r: usize,
    pub post_selected: bool,
    pub provenance: Provenance,
    /// Set when the available support was smaller than `r`.
    pub support_exhausted: bool,
}

impl SubspaceSelection {
    pub fn len(&self) -> usize {
        self.determinants.len()
    }

    pub fn is_empty(&self) -> bool {
        self.determinants.is_empty()
    }
}

/// Keeps only outcomes in the target sector; `total_shots` becomes the
/// retained count.
pub fn post_select(dist: &SampleDistribution, filter: SectorFilter) -> SampleDistribution {
    let counts: std::collections::BTreeMap<_, _> = dist
        .counts
        .iter()
        .filter(|(&d, _)| filter.contains(d))
        .map(|(&d, &c)| (d, c))
        .collect();
    SampleDistribution {
        n_qubits: dist.n_qubits,
        total_shots: counts.values().sum(),
        counts,
        seed: dist.seed,
    }
}

/// The `r` most frequent outcomes, ties broken by ascending bit value.
pub fn select_subspace(
    dist: &SampleDistribution,
    r: usize,
    post_selected: bool,
) -> Result<SubspaceSelection> {
    if r == 0 {
        return Err(Error::Argument("R must be at least 1".into()));
    }
    let mut ranked: Vec<(u64, Determinant)> = dist
        .counts
        .iter()
        .filter(|(_, &c)| c > 0)
        .map(|(&d, &c)| (c, d))
        .collect();
    if ranked.is_empty() {
        return Err(Error::Selection(
            "the sample distribution has no outcomes to select from".into(),
        ));
    }
    ranked.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let support_exhausted = ranked.len() < r;
    ranked.truncate(r);
    Ok(SubspaceSelection {
        determinants: ranked.into_iter().map(|(_, d)| d).collect(),
        r,
        post_selected,
        provenance: Provenance::Shots,
        support_exhausted,
    })
}

/// Selection from the `r` largest amplitudes of `state`.
pub fn select_ideal(
    state: &StateVector,
    r: usize,
    filter: Option<SectorFilter>,
) -> Result<SubspaceSelection> {
    if r == 0 {
        return Err(Error::Argument("R must be at least 1".into()));
    }
    let determinants = top_r_amplitudes(state, r, filter);
    if determinants.is_empty() {
        return Err(Error::Selection("no determinant passes the sector filter".into()));
    }
    Ok(SubspaceSelection {
        support_exhausted: determinants.len() < r,
        determinants,
        r,
        post_selected: filter.is_some(),
        provenance: Provenance::Ideal,
    })
}

/// `⟨x|H|y⟩` over the given determinants, built from the Pauli action of
/// every flip group on every `|y⟩`.
pub fn subspace_hamiltonian(dets: &[Determinant], op: &GroupedOperator) -> Result<SparseHermitian> {
    let index: HashMap<Determinant, usize> = dets.iter().enumerate().map(|(i, &d)| (d, i)).collect();
    if index.len() != dets.len() {
        return Err(Error::Argument("subspace determinants contain duplicates".into()));
    }
    let width_mask = if op.n_qubits() >= 64 {
        u64::MAX
    } else {
        (1u64 << op.n_qubits()) - 1
    };
    if let Some(d) = dets.iter().find(|d| d.0 & !width_mask != 0) {
        return Err(Error::Argument(format!(
            "determinant {:#b} is wider than {} qubits",
            d.0,
            op.n_qubits()
        )));
    }
    // Row x collects ⟨x|H|y⟩ for every column y.
    let mut rows: Vec<Vec<(usize, C64)>> = vec![Vec::new(); dets.len()];
    for (col, &y) in dets.iter().enumerate() {
        op.for_each_image(y, |x, amp| {
            if let Some(&row) = index.get(&x) {
                rows[row].push((col, amp));
            }
        });
    }
    let mut m = SparseHermitian::from_rows(rows);
    let residual = m.hermiticity_residual();
    if residual > SUBSPACE_HERMITICITY_TOLERANCE {
        return Err(Error::Inconsistency(format!(
            "subspace Hamiltonian has Hermiticity residual {residual:e}"
        )));
    }
    m.symmetrize();
    Ok(m)
}

/// Ground state of a selected subspace.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceWavefunction {
    pub selection: SubspaceSelection,
    pub coefficients: Vec<C64>,
    pub energy: f64,
    /// The lowest eigenvalue was (numerically) degenerate.
    pub degenerate: bool,
}

#[derive(Serialize, Deserialize)]
struct WavefunctionFile {
    energy: f64,
    dets: Vec<String>,
    coeffs: Vec<[f64; 2]>,
}

impl SubspaceWavefunction {
    pub fn determinants(&self) -> &[Determinant] {
        &self.selection.determinants
    }

    pub fn amplitudes(&self) -> impl Iterator<Item = (Determinant, C64)> + '_ {
        self.selection
            .determinants
            .iter()
            .copied()
            .zip(self.coefficients.iter().copied())
    }

    pub fn to_json(&self, n_qubits: usize) -> String {
        let file = WavefunctionFile {
            energy: self.energy,
            dets: self
                .determinants()
                .iter()
                .map(|d| d.to_bitstring(n_qubits))
                .collect(),
            coeffs: self.coefficients.iter().map(|z| [z.re, z.im]).collect(),
        };
        serde_json::to_string_pretty(&file).expect("serializable wavefunction")
    }

    /// Reads the `{energy, dets, coeffs}` contract. Selection metadata is not
    /// part of the file, so the result is tagged as an ideal selection of its
    /// own size.
    pub fn from_json(text: &str) -> Result<(Self, usize)> {
        let file: WavefunctionFile = serde_json::from_str(text).map_err(|e| Error::Schema {
            location: format!("wavefunction line {} column {}", e.line(), e.column()),
            message: e.to_string(),
        })?;
        if file.dets.len() != file.coeffs.len() || file.dets.is_empty() {
            return Err(Error::Validation(format!(
                "wavefunction has {} determinants and {} coefficients",
                file.dets.len(),
                file.coeffs.len()
            )));
        }
        let n_qubits = file.dets[0].len();
        let mut determinants = Vec::with_capacity(file.dets.len());
        for bits in &file.dets {
            if bits.len() != n_qubits {
                return Err(Error::Validation(format!(
                    "bitstring `{bits}` is not {n_qubits} wide"
                )));
            }
            determinants.push(Determinant::parse_bitstring(bits)?);
        }
        let coefficients: Vec<C64> = file.coeffs.iter().map(|c| C64::new(c[0], c[1])).collect();
        let norm: f64 = coefficients.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(Error::Validation(format!(
                "wavefunction norm is {norm}, expected 1"
            )));
        }
        let r = determinants.len();
        Ok((
            Self {
                selection: SubspaceSelection {
                    determinants,
                    r,
                    post_selected: false,
                    provenance: Provenance::Ideal,
                    support_exhausted: false,
                },
                coefficients,
                energy: file.energy,
                degenerate: false,
            },
            n_qubits,
        ))
    }
}

/// Lowest eigenpair of a subspace matrix built over `selection`.
pub fn diagonalize_subspace(
    selection: SubspaceSelection,
    h: &SparseHermitian,
) -> Result<SubspaceWavefunction> {
    if h.dim() != selection.len() {
        return Err(Error::Argument(format!(
            "matrix dimension {} does not match {} determinants",
            h.dim(),
            selection.len()
        )));
    }
    let pair = lowest_eigenpair(h)?;
    let norm: f64 = pair.vector.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let coefficients = pair.vector.iter().map(|z| z / norm).collect();
    Ok(SubspaceWavefunction {
        selection,
        coefficients,
        energy: pair.value,
        degenerate: pair
            .next_value
            .is_some_and(|next| next - pair.value < DEGENERACY_TOLERANCE),
    })
}

/// Builds and diagonalizes the subspace Hamiltonian in one step.
pub fn qsci(selection: SubspaceSelection, op: &GroupedOperator) -> Result<SubspaceWavefunction> {
    let h = subspace_hamiltonian(&selection.determinants, op)?;
    diagonalize_subspace(selection, &h)
}

/// Exact ground state over every determinant of `sector`.
pub fn fci_ground_in(
    op: &GroupedOperator,
    layout: &QubitLayout,
    sector: Sector,
    budget: usize,
) -> Result<SubspaceWavefunction> {
    let dets = layout.sector_determinants(sector);
    if dets.len() > budget {
        return Err(Error::Capacity {
            dimension: dets.len(),
            budget,
        });
    }
    if dets.is_empty() {
        return Err(Error::Selection(format!(
            "sector with {} electrons and 2Sz = {} is empty",
            sector.n_electrons, sector.two_sz
        )));
    }
    let r = dets.len();
    qsci(
        SubspaceSelection {
            determinants: dets,
            r,
            post_selected: true,
            provenance: Provenance::Exhaustive,
            support_exhausted: false,
        },
        op,
    )
}

/// FCI in the given sector (the HF sector when `None`) using the default
/// interleaved qubit layout.
pub fn fci_ground(ham: &FermionHamiltonian, sector: Option<Sector>) -> Result<SubspaceWavefunction> {
    let layout = QubitLayout::new(ham, &QubitOrdering::default())?;
    let op = jordan_wigner(ham, &layout).grouped();
    let sector = sector.unwrap_or_else(|| layout.hf_sector());
    fci_ground_in(&op, &layout, sector, DEFAULT_FCI_BUDGET)
}
