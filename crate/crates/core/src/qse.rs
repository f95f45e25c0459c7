//! Quantum subspace expansion on a compact ground-state wave function.
//!
//! Valence bands come from single annihilations `c_l |ψ⟩` on HF-occupied
//! spin orbitals, conduction bands from single creations `c†_l |ψ⟩` on
//! HF-virtual ones. The two blocks are separate generalized eigenvalue
//! problems `H C = S C E`, solved by canonical orthogonalization.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonian::KPoint;
use crate::linalg::eigh;
use crate::qsci::{subspace_hamiltonian, SubspaceWavefunction};
use crate::qubit::{Determinant, GroupedOperator, QubitLayout};
use crate::C64;

/// Default overlap threshold for canonical orthogonalization.
pub const DEFAULT_OVERLAP_THRESHOLD: f64 = 1e-8;

/// Overlap eigenvalues below `-PSD_TOLERANCE` are treated as a bug.
pub const PSD_TOLERANCE: f64 = 1e-8;

const MATRIX_HERMITICITY_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BandKind {
    /// Electron removal.
    Valence,
    /// Electron addition.
    Conduction,
}

impl BandKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BandKind::Valence => "valence",
            BandKind::Conduction => "conduction",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExcitationOperator {
    pub kind: BandKind,
    pub spin_orbital: usize,
    pub qubit: usize,
    pub k_label: String,
}

/// `c_l` for every HF-occupied spin orbital `l`, in spin-orbital order.
pub fn valence_operators(layout: &QubitLayout, k: &KPoint) -> Vec<ExcitationOperator> {
    operators(layout, k, BandKind::Valence)
}

/// `c†_l` for every HF-virtual spin orbital `l`, in spin-orbital order.
pub fn conduction_operators(layout: &QubitLayout, k: &KPoint) -> Vec<ExcitationOperator> {
    operators(layout, k, BandKind::Conduction)
}

fn operators(layout: &QubitLayout, k: &KPoint, kind: BandKind) -> Vec<ExcitationOperator> {
    let hf = layout.hf_determinant();
    (0..layout.n_qubits())
        .map(|p| (p, layout.qubit_of(p)))
        .filter(|&(_, q)| hf.is_set(q) == (kind == BandKind::Valence))
        .map(|(spin_orbital, qubit)| ExcitationOperator {
            kind,
            spin_orbital,
            qubit,
            k_label: k.label.clone(),
        })
        .collect()
}

/// `O |ψ⟩` as a determinant expansion, ascending by determinant. Signs are
/// the parity of the occupied qubits below the target, matching the
/// Jordan–Wigner strings of the qubit mapping.
pub fn apply_excitation(
    op: &ExcitationOperator,
    amplitudes: impl IntoIterator<Item = (Determinant, C64)>,
) -> Vec<(Determinant, C64)> {
    let mut out: BTreeMap<Determinant, C64> = BTreeMap::new();
    for (det, c) in amplitudes {
        let image = match op.kind {
            BandKind::Valence => det.annihilate(op.qubit),
            BandKind::Conduction => det.create(op.qubit),
        };
        if let Some((target, sign)) = image {
            *out.entry(target).or_default() += c * sign;
        }
    }
    out.into_iter().filter(|(_, c)| *c != C64::default()).collect()
}

/// Subspace matrices for one block.
#[derive(Debug, Clone)]
pub struct QseMatrices {
    pub kind: BandKind,
    pub operators: Vec<ExcitationOperator>,
    pub h: DMatrix<C64>,
    pub s: DMatrix<C64>,
}

/// `H_ij = ⟨ψ|O_i† H O_j|ψ⟩` and `S_ij = ⟨ψ|O_i† O_j|ψ⟩`, evaluated exactly
/// over the union of the excited determinant supports.
pub fn qse_matrices(
    psi: &SubspaceWavefunction,
    op: &GroupedOperator,
    operators: &[ExcitationOperator],
) -> Result<QseMatrices> {
    let Some(first) = operators.first() else {
        return Err(Error::Argument("QSE needs at least one excitation operator".into()));
    };
    if operators.iter().any(|o| o.kind != first.kind) {
        return Err(Error::Argument(
            "valence and conduction operators must be solved as separate blocks".into(),
        ));
    }
    let excited: Vec<Vec<(Determinant, C64)>> = operators
        .iter()
        .map(|o| apply_excitation(o, psi.amplitudes()))
        .collect();

    let mut support: Vec<Determinant> = excited.iter().flatten().map(|&(d, _)| d).collect();
    support.sort_unstable();
    support.dedup();
    let index: HashMap<Determinant, usize> =
        support.iter().enumerate().map(|(i, &d)| (d, i)).collect();
    let dense = |expansion: &[(Determinant, C64)]| {
        let mut v = vec![C64::default(); support.len()];
        for &(d, c) in expansion {
            v[index[&d]] = c;
        }
        v
    };
    let vectors: Vec<Vec<C64>> = excited.iter().map(|e| dense(e)).collect();

    let n = operators.len();
    let mut s = DMatrix::<C64>::zeros(n, n);
    let mut h = DMatrix::<C64>::zeros(n, n);
    if !support.is_empty() {
        let h_support = subspace_hamiltonian(&support, op)?;
        let mut h_vectors = vec![vec![C64::default(); support.len()]; n];
        for (v, hv) in vectors.iter().zip(&mut h_vectors) {
            h_support.matvec(v, hv);
        }
        for i in 0..n {
            for j in 0..n {
                s[(i, j)] = inner(&vectors[i], &vectors[j]);
                h[(i, j)] = inner(&vectors[i], &h_vectors[j]);
            }
        }
    }
    for (name, m) in [("H", &mut h), ("S", &mut s)] {
        let residual = hermiticity_residual(m);
        if residual > MATRIX_HERMITICITY_TOLERANCE {
            return Err(Error::Inconsistency(format!(
                "QSE {name} matrix has Hermiticity residual {residual:e}"
            )));
        }
        symmetrize(m);
    }
    let (overlaps, _) = eigh(&s)?;
    if let Some(&lowest) = overlaps.first() {
        if lowest < -PSD_TOLERANCE {
            return Err(Error::Numeric(format!(
                "QSE overlap matrix has negative eigenvalue {lowest:e}"
            )));
        }
    }
    Ok(QseMatrices {
        kind: first.kind,
        operators: operators.to_vec(),
        h,
        s,
    })
}

fn inner(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn hermiticity_residual(m: &DMatrix<C64>) -> f64 {
    (m - m.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn symmetrize(m: &mut DMatrix<C64>) {
    let sym = (&*m + m.adjoint()) * C64::new(0.5, 0.0);
    *m = sym;
}

/// Eigenvalues of a generalized problem after discarding overlap modes.
#[derive(Debug, Clone, PartialEq)]
pub struct GevpSolution {
    pub eigenvalues: Vec<f64>,
    pub discarded: usize,
}

/// Canonical orthogonalization: keep overlap eigenvectors with eigenvalue at
/// least `threshold`, rescale them to unit norm and diagonalize `H` in that
/// basis.
pub fn solve_gevp(h: &DMatrix<C64>, s: &DMatrix<C64>, threshold: f64) -> Result<GevpSolution> {
    if h.shape() != s.shape() || h.nrows() != h.ncols() {
        return Err(Error::Argument(format!(
            "H is {:?} and S is {:?}; both must be the same square shape",
            h.shape(),
            s.shape()
        )));
    }
    let (values, vectors) = eigh(s)?;
    let kept: Vec<usize> = (0..values.len()).filter(|&i| values[i] >= threshold).collect();
    if kept.is_empty() {
        return Err(Error::DegenerateOverlap { threshold });
    }
    let mut x = DMatrix::<C64>::zeros(s.nrows(), kept.len());
    for (col, &i) in kept.iter().enumerate() {
        let scale = 1.0 / values[i].sqrt();
        x.set_column(col, &(vectors.column(i) * C64::new(scale, 0.0)));
    }
    let reduced = x.adjoint() * h * &x;
    let reduced = (&reduced + reduced.adjoint()) * C64::new(0.5, 0.0);
    let (eigenvalues, _) = eigh(&reduced)?;
    Ok(GevpSolution {
        eigenvalues,
        discarded: values.len() - kept.len(),
    })
}

/// Quasiparticle energies from `(N ∓ 1)`-electron eigenvalues: valence
/// `E_ref - E(N-1)`, conduction `E(N+1) - E_ref`. Sorted ascending.
pub fn band_energies(e_ref: f64, eigenvalues: &[f64], kind: BandKind) -> Vec<f64> {
    let mut out: Vec<f64> = eigenvalues
        .iter()
        .map(|&e| match kind {
            BandKind::Valence => e_ref - e,
            BandKind::Conduction => e - e_ref,
        })
        .collect();
    out.sort_by(f64::total_cmp);
    out
}

/// Valence and conduction energies at one k-point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KBands {
    pub k_point: KPoint,
    pub reference_energy: f64,
    pub valence: Vec<f64>,
    pub conduction: Vec<f64>,
    pub discarded_modes: usize,
}

/// Runs both QSE blocks on `psi` and converts to band energies.
pub fn qse_bands(
    psi: &SubspaceWavefunction,
    op: &GroupedOperator,
    layout: &QubitLayout,
    k: &KPoint,
    threshold: f64,
) -> Result<KBands> {
    let mut discarded = 0;
    let mut block = |ops: Vec<ExcitationOperator>, kind| -> Result<Vec<f64>> {
        if ops.is_empty() {
            return Ok(Vec::new());
        }
        let m = qse_matrices(psi, op, &ops)?;
        let sol = solve_gevp(&m.h, &m.s, threshold)?;
        discarded += sol.discarded;
        Ok(band_energies(psi.energy, &sol.eigenvalues, kind))
    };
    let valence = block(valence_operators(layout, k), BandKind::Valence)?;
    let conduction = block(conduction_operators(layout, k), BandKind::Conduction)?;
    Ok(KBands {
        k_point: k.clone(),
        reference_energy: psi.energy,
        valence,
        conduction,
        discarded_modes: discarded,
    })
}

/// Bands along a path, ordered by path distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandStructure {
    pub k_points: Vec<KBands>,
    /// Lowest conduction energy minus highest valence energy over the path.
    pub gap: Option<f64>,
    pub gap_negative: bool,
    pub warnings: Vec<String>,
}

/// Orders the per-k results, computes the gap and notes any label in
/// `declared_path` without a result.
pub fn assemble_band_structure(
    mut per_k: Vec<KBands>,
    declared_path: &[String],
) -> Result<BandStructure> {
    if per_k.is_empty() {
        return Err(Error::Argument("a band structure needs at least one k-point".into()));
    }
    per_k.sort_by(|a, b| {
        a.k_point
            .path_distance
            .total_cmp(&b.k_point.path_distance)
            .then_with(|| a.k_point.label.cmp(&b.k_point.label))
    });
    for k in &mut per_k {
        k.valence.sort_by(f64::total_cmp);
        k.conduction.sort_by(f64::total_cmp);
    }
    let warnings = declared_path
        .iter()
        .filter(|label| !per_k.iter().any(|k| &k.k_point.label == *label))
        .map(|label| format!("no band energies for declared k-point {label}"))
        .collect();
    let vbm = per_k
        .iter()
        .flat_map(|k| k.valence.iter().copied())
        .max_by(f64::total_cmp);
    let cbm = per_k
        .iter()
        .flat_map(|k| k.conduction.iter().copied())
        .min_by(f64::total_cmp);
    let gap = vbm.zip(cbm).map(|(v, c)| c - v);
    Ok(BandStructure {
        gap_negative: gap.is_some_and(|g| g < 0.0),
        k_points: per_k,
        gap,
        warnings,
    })
}

impl BandStructure {
    /// Rows of `k_label,path_distance,band_type,band_index,energy_hartree`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k_label,path_distance,band_type,band_index,energy_hartree\n");
        for k in &self.k_points {
            for (kind, values) in [
                (BandKind::Valence, &k.valence),
                (BandKind::Conduction, &k.conduction),
            ] {
                for (i, e) in values.iter().enumerate() {
                    writeln!(
                        out,
                        "{},{},{},{},{}",
                        k.k_point.label,
                        k.k_point.path_distance,
                        kind.as_str(),
                        i,
                        e
                    )
                    .expect("writing to a string");
                }
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable band structure")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Schema {
            location: format!("band structure line {} column {}", e.line(), e.column()),
            message: e.to_string(),
        })
    }
}
