//! Jordan–Wigner mapping, Pauli-term algebra and the determinant-level Pauli
//! action behind every QSCI and QSE matrix element.
//!
//! Pauli strings are stored as a pair of bit masks `(x, z)`; a qubit with both
//! bits set carries `Y`. During the algebra we work in the "XZ form"
//! `X^x Z^z`, whose product rule is a single popcount:
//!
//! ```text
//! (X^a Z^b)(X^c Z^d) = (-1)^{|b & c|} X^{a^c} Z^{b^d}
//! ```
//!
//! and convert to Hermitian Pauli labels with `XZ = -iY` at the end.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonian::{FermionHamiltonian, Spin};
use crate::C64;

/// Summed coefficients below this magnitude are dropped.
pub const TERM_CUTOFF: f64 = 1e-12;

/// A computational-basis state. Bit `i` is the occupation of qubit `i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Determinant(pub u64);

impl Determinant {
    pub fn from_occupied(qubits: impl IntoIterator<Item = usize>) -> Self {
        Determinant(qubits.into_iter().fold(0, |acc, q| acc | (1 << q)))
    }

    pub fn bits(self) -> u64 {
        self.0
    }

    pub fn is_set(self, qubit: usize) -> bool {
        self.0 >> qubit & 1 == 1
    }

    pub fn count(self) -> u32 {
        self.0.count_ones()
    }

    /// Zero-padded bitstring with qubit 0 as the rightmost character.
    pub fn to_bitstring(self, n_qubits: usize) -> String {
        format!("{:0width$b}", self.0, width = n_qubits)
    }

    pub fn parse_bitstring(text: &str) -> Result<Self> {
        if text.is_empty() || text.len() > 64 || !text.bytes().all(|b| b == b'0' || b == b'1') {
            return Err(Error::Schema {
                location: "bitstring".into(),
                message: format!("`{text}` is not a bitstring of at most 64 characters"),
            });
        }
        Ok(Determinant(u64::from_str_radix(text, 2).expect("checked digits")))
    }

    /// Removes the fermion on `qubit`, returning the new determinant and the
    /// Jordan–Wigner sign (parity of occupied qubits below `qubit`).
    pub fn annihilate(self, qubit: usize) -> Option<(Determinant, f64)> {
        if !self.is_set(qubit) {
            return None;
        }
        Some((Determinant(self.0 & !(1 << qubit)), self.parity_below(qubit)))
    }

    pub fn create(self, qubit: usize) -> Option<(Determinant, f64)> {
        if self.is_set(qubit) {
            return None;
        }
        Some((Determinant(self.0 | (1 << qubit)), self.parity_below(qubit)))
    }

    fn parity_below(self, qubit: usize) -> f64 {
        let below = self.0 & ((1u64 << qubit) - 1);
        if below.count_ones().is_multiple_of(2) {
            1.0
        } else {
            -1.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PauliAxis {
    X,
    Y,
    Z,
}

impl fmt::Display for PauliAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = match self {
            PauliAxis::X => 'X',
            PauliAxis::Y => 'Y',
            PauliAxis::Z => 'Z',
        };
        write!(f, "{c}")
    }
}

/// A complex-weighted Pauli string; identity on qubits it does not name.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PauliTerm {
    pub coefficient: C64,
    x_mask: u64,
    z_mask: u64,
}

impl PauliTerm {
    pub fn identity(coefficient: C64) -> Self {
        Self {
            coefficient,
            x_mask: 0,
            z_mask: 0,
        }
    }

    pub fn from_axes(coefficient: C64, axes: &[(usize, PauliAxis)]) -> Result<Self> {
        let (mut x, mut z) = (0u64, 0u64);
        for &(q, axis) in axes {
            if q >= 64 {
                return Err(Error::Argument(format!("qubit index {q} exceeds 63")));
            }
            let bit = 1u64 << q;
            if (x | z) & bit != 0 {
                return Err(Error::Argument(format!("qubit {q} appears twice in a Pauli term")));
            }
            match axis {
                PauliAxis::X => x |= bit,
                PauliAxis::Z => z |= bit,
                PauliAxis::Y => {
                    x |= bit;
                    z |= bit;
                }
            }
        }
        Ok(Self {
            coefficient,
            x_mask: x,
            z_mask: z,
        })
    }

    pub fn x_mask(&self) -> u64 {
        self.x_mask
    }

    pub fn z_mask(&self) -> u64 {
        self.z_mask
    }

    /// Non-identity factors in ascending qubit order.
    pub fn axes(&self) -> Vec<(usize, PauliAxis)> {
        let support = self.x_mask | self.z_mask;
        (0..64)
            .filter(|q| support >> q & 1 == 1)
            .map(|q| {
                let axis = match (self.x_mask >> q & 1, self.z_mask >> q & 1) {
                    (1, 1) => PauliAxis::Y,
                    (1, 0) => PauliAxis::X,
                    _ => PauliAxis::Z,
                };
                (q, axis)
            })
            .collect()
    }

    pub fn is_identity(&self) -> bool {
        self.x_mask == 0 && self.z_mask == 0
    }

    pub fn conj(&self) -> Self {
        Self {
            coefficient: self.coefficient.conj(),
            ..*self
        }
    }

    /// Coefficient of the same operator written as `X^x Z^z`.
    fn xz_coefficient(&self) -> C64 {
        self.coefficient * i_pow((self.x_mask & self.z_mask).count_ones())
    }
}

fn i_pow(n: u32) -> C64 {
    match n % 4 {
        0 => C64::new(1.0, 0.0),
        1 => C64::new(0.0, 1.0),
        2 => C64::new(-1.0, 0.0),
        _ => C64::new(0.0, -1.0),
    }
}

fn z_sign(bits: u64, z: u64) -> f64 {
    if (bits & z).count_ones().is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

/// `term |det>`: the unique basis state it maps to, and the complex phase.
pub fn apply_pauli_term(term: &PauliTerm, det: Determinant) -> (Determinant, C64) {
    let phase = term.xz_coefficient() * z_sign(det.0, term.z_mask);
    (Determinant(det.0 ^ term.x_mask), phase)
}

/// Sum of Pauli strings in XZ form, used while building operators.
#[derive(Debug, Clone, Default)]
struct PauliSum {
    terms: HashMap<(u64, u64), C64>,
}

impl PauliSum {
    fn add(&mut self, x: u64, z: u64, c: C64) {
        *self.terms.entry((x, z)).or_default() += c;
    }

    fn mul(&self, other: &PauliSum) -> PauliSum {
        let mut out = PauliSum::default();
        // sorted iteration keeps accumulation order reproducible
        let mut left: Vec<_> = self.terms.iter().collect();
        left.sort_by_key(|(k, _)| **k);
        let mut right: Vec<_> = other.terms.iter().collect();
        right.sort_by_key(|(k, _)| **k);
        for (&(x1, z1), &c1) in &left {
            for (&(x2, z2), &c2) in &right {
                out.add(x1 ^ x2, z1 ^ z2, c1 * c2 * z_sign(z1, x2));
            }
        }
        out
    }

    fn into_terms(self) -> Vec<PauliTerm> {
        let mut terms: Vec<PauliTerm> = self
            .terms
            .into_iter()
            .filter(|(_, c)| c.norm() >= TERM_CUTOFF)
            .map(|((x, z), c)| PauliTerm {
                coefficient: c * i_pow(3 * (x & z).count_ones()),
                x_mask: x,
                z_mask: z,
            })
            .collect();
        terms.sort_by_cached_key(|t| t.axes());
        terms
    }
}

/// A Hermitian operator on `n_qubits` qubits as deduplicated Pauli terms.
#[derive(Debug, Clone, PartialEq)]
pub struct QubitHamiltonian {
    n_qubits: usize,
    terms: Vec<PauliTerm>,
}

impl QubitHamiltonian {
    /// Sums duplicate strings and drops negligible coefficients.
    pub fn from_terms(n_qubits: usize, terms: impl IntoIterator<Item = PauliTerm>) -> Result<Self> {
        let limit = if n_qubits >= 64 { u64::MAX } else { (1u64 << n_qubits) - 1 };
        let mut sum = PauliSum::default();
        for t in terms {
            if (t.x_mask | t.z_mask) & !limit != 0 {
                return Err(Error::Argument(format!(
                    "Pauli term touches a qubit outside 0..{n_qubits}"
                )));
            }
            sum.add(t.x_mask, t.z_mask, t.xz_coefficient());
        }
        Ok(Self::from_sum(n_qubits, sum))
    }

    fn from_sum(n_qubits: usize, sum: PauliSum) -> Self {
        Self {
            n_qubits,
            terms: sum.into_terms(),
        }
    }

    fn to_sum(&self) -> PauliSum {
        let mut sum = PauliSum::default();
        for t in &self.terms {
            sum.add(t.x_mask, t.z_mask, t.xz_coefficient());
        }
        sum
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn terms(&self) -> &[PauliTerm] {
        &self.terms
    }

    /// Coefficient of the identity string.
    pub fn constant(&self) -> C64 {
        self.terms
            .iter()
            .find(|t| t.is_identity())
            .map(|t| t.coefficient)
            .unwrap_or_default()
    }

    /// Largest imaginary part among the coefficients. Pauli strings are
    /// Hermitian, so a Hermitian sum has real coefficients.
    pub fn max_imaginary(&self) -> f64 {
        self.terms.iter().map(|t| t.coefficient.im.abs()).fold(0.0, f64::max)
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.max_imaginary() <= tol
    }

    pub fn plus(&self, other: &QubitHamiltonian) -> QubitHamiltonian {
        let mut sum = self.to_sum();
        for t in &other.terms {
            sum.add(t.x_mask, t.z_mask, t.xz_coefficient());
        }
        Self::from_sum(self.n_qubits.max(other.n_qubits), sum)
    }

    pub fn times(&self, other: &QubitHamiltonian) -> QubitHamiltonian {
        Self::from_sum(
            self.n_qubits.max(other.n_qubits),
            self.to_sum().mul(&other.to_sum()),
        )
    }

    pub fn scaled(&self, factor: f64) -> QubitHamiltonian {
        Self {
            n_qubits: self.n_qubits,
            terms: self
                .terms
                .iter()
                .map(|t| PauliTerm {
                    coefficient: t.coefficient * factor,
                    ..*t
                })
                .filter(|t| t.coefficient.norm() >= TERM_CUTOFF)
                .collect(),
        }
    }

    /// Debug dump, one `re im : X0 Z3 Y7` line per term.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for t in &self.terms {
            out.push_str(&format!("{:.16e} {:.16e} :", t.coefficient.re, t.coefficient.im));
            for (q, axis) in t.axes() {
                out.push_str(&format!(" {axis}{q}"));
            }
            out.push('\n');
        }
        out
    }

    /// Dense matrix, row-major, for small registers.
    pub fn to_dense(&self) -> Result<Vec<Vec<C64>>> {
        if self.n_qubits > 14 {
            return Err(Error::Capacity {
                dimension: 1 << self.n_qubits,
                budget: 1 << 14,
            });
        }
        let dim = 1usize << self.n_qubits;
        let mut m = vec![vec![C64::default(); dim]; dim];
        for col in 0..dim {
            for t in &self.terms {
                let (row, phase) = apply_pauli_term(t, Determinant(col as u64));
                m[row.0 as usize][col] += phase;
            }
        }
        Ok(m)
    }

    pub fn grouped(&self) -> GroupedOperator {
        GroupedOperator::new(self)
    }
}

/// Pauli terms bucketed by their bit-flip mask. Every term in a bucket sends
/// `|b>` to the same `|b ^ x>`, so one lookup serves the whole bucket.
#[derive(Debug, Clone)]
pub struct GroupedOperator {
    n_qubits: usize,
    groups: Vec<FlipGroup>,
}

#[derive(Debug, Clone)]
pub struct FlipGroup {
    pub x_mask: u64,
    /// `(z mask, XZ-form coefficient)` pairs.
    pub diagonal: Vec<(u64, C64)>,
}

impl FlipGroup {
    #[inline]
    pub fn phase(&self, bits: u64) -> C64 {
        self.diagonal
            .iter()
            .map(|&(z, c)| c * z_sign(bits, z))
            .sum()
    }
}

impl GroupedOperator {
    pub fn new(op: &QubitHamiltonian) -> Self {
        let mut map: BTreeMap<u64, Vec<(u64, C64)>> = BTreeMap::new();
        for t in op.terms() {
            map.entry(t.x_mask).or_default().push((t.z_mask, t.xz_coefficient()));
        }
        Self {
            n_qubits: op.n_qubits(),
            groups: map
                .into_iter()
                .map(|(x_mask, diagonal)| FlipGroup { x_mask, diagonal })
                .collect(),
        }
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn groups(&self) -> &[FlipGroup] {
        &self.groups
    }

    /// Calls `sink(target, amplitude)` for every basis state reached from
    /// `det`, one call per flip group with a nonzero phase.
    #[inline]
    pub fn for_each_image(&self, det: Determinant, mut sink: impl FnMut(Determinant, C64)) {
        for g in &self.groups {
            let phase = g.phase(det.0);
            if phase != C64::default() {
                sink(Determinant(det.0 ^ g.x_mask), phase);
            }
        }
    }

    /// `out = op * psi` over the full register.
    pub fn apply_dense(&self, psi: &[C64], out: &mut [C64]) {
        assert_eq!(psi.len(), 1 << self.n_qubits);
        assert_eq!(out.len(), psi.len());
        out.iter_mut().for_each(|v| *v = C64::default());
        for g in &self.groups {
            for (b, &amp) in psi.iter().enumerate() {
                if amp == C64::default() {
                    continue;
                }
                out[b ^ g.x_mask as usize] += g.phase(b as u64) * amp;
            }
        }
    }
}

/// Electron number and twice the spin projection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Sector {
    pub n_electrons: usize,
    pub two_sz: i32,
}

/// Membership test for a sector, detached from the layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SectorFilter {
    pub sector: Sector,
    pub alpha_mask: u64,
}

impl SectorFilter {
    pub fn contains(&self, det: Determinant) -> bool {
        let alpha = (det.0 & self.alpha_mask).count_ones() as i32;
        let total = det.count() as i32;
        total as usize == self.sector.n_electrons && 2 * alpha - total == self.sector.two_sz
    }
}

/// Where each spin orbital lives on the register, plus per-qubit metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct QubitLayout {
    n_qubits: usize,
    qubit_of_orbital: Vec<usize>,
    orbital_of_qubit: Vec<usize>,
    qubit_spin: Vec<Spin>,
    hf: Determinant,
}

/// How spin orbitals are assigned to qubits.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QubitOrdering {
    /// Qubit `2m` holds the m-th HF-occupied spin orbital and qubit `2m + 1`
    /// the m-th HF-virtual one, so the HF determinant alternates 1010...
    /// Leftover orbitals of the longer list follow in order.
    #[default]
    Interleaved,
    /// Qubit `i` holds spin orbital `i`.
    Identity,
    /// `explicit[p]` is the qubit of spin orbital `p`.
    Explicit(Vec<usize>),
}

impl QubitLayout {
    pub fn new(ham: &FermionHamiltonian, ordering: &QubitOrdering) -> Result<Self> {
        let n = ham.n_spin_orbitals();
        if n > 64 {
            return Err(Error::Configuration(format!("{n} spin orbitals exceed 64 qubits")));
        }
        let qubit_of_orbital = match ordering {
            QubitOrdering::Identity => (0..n).collect(),
            QubitOrdering::Explicit(map) => map.clone(),
            QubitOrdering::Interleaved => {
                let occ: Vec<usize> = ham
                    .orbitals()
                    .iter()
                    .filter(|o| o.hf_occupied)
                    .map(|o| o.index)
                    .collect();
                let virt: Vec<usize> = ham
                    .orbitals()
                    .iter()
                    .filter(|o| !o.hf_occupied)
                    .map(|o| o.index)
                    .collect();
                let mut order = Vec::with_capacity(n);
                let paired = occ.len().min(virt.len());
                for m in 0..paired {
                    order.push(occ[m]);
                    order.push(virt[m]);
                }
                order.extend_from_slice(&occ[paired..]);
                order.extend_from_slice(&virt[paired..]);
                let mut map = vec![0; n];
                for (q, &p) in order.iter().enumerate() {
                    map[p] = q;
                }
                map
            }
        };
        if qubit_of_orbital.len() != n {
            return Err(Error::Configuration(format!(
                "qubit ordering lists {} orbitals, expected {n}",
                qubit_of_orbital.len()
            )));
        }
        let mut orbital_of_qubit = vec![usize::MAX; n];
        for (p, &q) in qubit_of_orbital.iter().enumerate() {
            if q >= n || orbital_of_qubit[q] != usize::MAX {
                return Err(Error::Configuration(format!(
                    "qubit ordering is not a bijection: qubit {q} repeated or out of range"
                )));
            }
            orbital_of_qubit[q] = p;
        }
        let orbitals = ham.orbitals();
        let qubit_spin = orbital_of_qubit.iter().map(|&p| orbitals[p].spin).collect();
        let hf = Determinant::from_occupied(
            orbitals
                .iter()
                .filter(|o| o.hf_occupied)
                .map(|o| qubit_of_orbital[o.index]),
        );
        Ok(Self {
            n_qubits: n,
            qubit_of_orbital,
            orbital_of_qubit,
            qubit_spin,
            hf,
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn qubit_of(&self, spin_orbital: usize) -> usize {
        self.qubit_of_orbital[spin_orbital]
    }

    pub fn orbital_of(&self, qubit: usize) -> usize {
        self.orbital_of_qubit[qubit]
    }

    pub fn qubit_spins(&self) -> &[Spin] {
        &self.qubit_spin
    }

    pub fn hf_determinant(&self) -> Determinant {
        self.hf
    }

    pub fn alpha_mask(&self) -> u64 {
        self.qubit_spin
            .iter()
            .enumerate()
            .filter(|(_, s)| **s == Spin::Alpha)
            .fold(0, |m, (q, _)| m | 1 << q)
    }

    pub fn full_mask(&self) -> u64 {
        if self.n_qubits == 64 {
            u64::MAX
        } else {
            (1u64 << self.n_qubits) - 1
        }
    }

    pub fn hf_sector(&self) -> Sector {
        self.sector_of(self.hf)
    }

    pub fn sector_of(&self, det: Determinant) -> Sector {
        let alpha = (det.0 & self.alpha_mask()).count_ones() as i32;
        let total = det.count() as i32;
        Sector {
            n_electrons: total as usize,
            two_sz: 2 * alpha - total,
        }
    }

    pub fn in_sector(&self, det: Determinant, sector: Sector) -> bool {
        self.sector_of(det) == sector
    }

    pub fn sector_filter(&self, sector: Sector) -> SectorFilter {
        SectorFilter {
            sector,
            alpha_mask: self.alpha_mask(),
        }
    }

    /// Every determinant of `sector`, ascending.
    pub fn sector_determinants(&self, sector: Sector) -> Vec<Determinant> {
        let alpha_qubits: Vec<usize> =
            (0..self.n_qubits).filter(|&q| self.qubit_spin[q] == Spin::Alpha).collect();
        let beta_qubits: Vec<usize> =
            (0..self.n_qubits).filter(|&q| self.qubit_spin[q] == Spin::Beta).collect();
        let twice_alpha = sector.n_electrons as i32 + sector.two_sz;
        if twice_alpha < 0 || twice_alpha % 2 != 0 {
            return Vec::new();
        }
        let n_alpha = (twice_alpha / 2) as usize;
        if n_alpha > sector.n_electrons {
            return Vec::new();
        }
        let n_beta = sector.n_electrons - n_alpha;
        let alphas = combinations(&alpha_qubits, n_alpha);
        let betas = combinations(&beta_qubits, n_beta);
        let mut dets: Vec<Determinant> = alphas
            .iter()
            .flat_map(|&a| betas.iter().map(move |&b| Determinant(a | b)))
            .collect();
        dets.sort_unstable();
        dets
    }
}

fn combinations(qubits: &[usize], k: usize) -> Vec<u64> {
    fn rec(qubits: &[usize], k: usize, start: usize, acc: u64, out: &mut Vec<u64>) {
        if k == 0 {
            out.push(acc);
            return;
        }
        for i in start..qubits.len() {
            if qubits.len() - i < k {
                break;
            }
            rec(qubits, k - 1, i + 1, acc | 1 << qubits[i], out);
        }
    }
    let mut out = Vec::new();
    if k <= qubits.len() {
        rec(qubits, k, 0, 0, &mut out);
    }
    out
}

/// `c_q` in XZ form: `Z_{<q} X_q (I - Z_q) / 2`; `c†_q` flips the sign of
/// the second term.
fn ladder(qubit: usize, create: bool) -> PauliSum {
    let below = (1u64 << qubit) - 1;
    let bit = 1u64 << qubit;
    let mut s = PauliSum::default();
    s.add(bit, below, C64::new(0.5, 0.0));
    s.add(bit, below | bit, C64::new(if create { 0.5 } else { -0.5 }, 0.0));
    s
}

/// Maps the fermionic Hamiltonian onto qubits. The identity coefficient
/// includes the Hamiltonian constant.
pub fn jordan_wigner(ham: &FermionHamiltonian, layout: &QubitLayout) -> QubitHamiltonian {
    let n = layout.n_qubits();
    let creators: Vec<PauliSum> = (0..n).map(|p| ladder(layout.qubit_of(p), true)).collect();
    let annihilators: Vec<PauliSum> = (0..n).map(|p| ladder(layout.qubit_of(p), false)).collect();
    let mut total = PauliSum::default();
    total.add(0, 0, C64::new(ham.constant(), 0.0));
    let mut accumulate = |product: PauliSum, coefficient: C64| {
        let mut entries: Vec<_> = product.terms.into_iter().collect();
        entries.sort_by_key(|(k, _)| *k);
        for ((x, z), c) in entries {
            total.add(x, z, c * coefficient);
        }
    };
    for (&(p, q), &t) in ham.one_body() {
        accumulate(creators[p].mul(&annihilators[q]), t);
    }
    for (&(p, q, r, s), &v) in ham.two_body() {
        let product = creators[p]
            .mul(&creators[q])
            .mul(&annihilators[r])
            .mul(&annihilators[s]);
        accumulate(product, v);
    }
    QubitHamiltonian::from_sum(n, total)
}

/// `N = Σ_i (I - Z_i) / 2`.
pub fn number_operator(n_qubits: usize) -> QubitHamiltonian {
    let mut sum = PauliSum::default();
    sum.add(0, 0, C64::new(n_qubits as f64 / 2.0, 0.0));
    for q in 0..n_qubits {
        sum.add(0, 1 << q, C64::new(-0.5, 0.0));
    }
    QubitHamiltonian::from_sum(n_qubits, sum)
}

/// `Sz = ½ Σ_i s_i (I - Z_i) / 2` with `s_i = ±1` for alpha/beta qubits.
pub fn sz_operator(qubit_spins: &[Spin]) -> QubitHamiltonian {
    let mut sum = PauliSum::default();
    for (q, spin) in qubit_spins.iter().enumerate() {
        let s = spin.two_sz() as f64;
        sum.add(0, 0, C64::new(s / 4.0, 0.0));
        sum.add(0, 1 << q, C64::new(-s / 4.0, 0.0));
    }
    QubitHamiltonian::from_sum(qubit_spins.len(), sum)
}

/// `H + λN (N - N_target)² + λS Sz²`.
pub fn build_cost_operator(
    ham: &QubitHamiltonian,
    qubit_spins: &[Spin],
    lambda_n: f64,
    n_target: usize,
    lambda_s: f64,
) -> Result<QubitHamiltonian> {
    if !(lambda_n >= 0.0 && lambda_s >= 0.0) {
        return Err(Error::Argument(format!(
            "penalty weights must be non-negative, got {lambda_n} and {lambda_s}"
        )));
    }
    let n = ham.n_qubits();
    if qubit_spins.len() != n {
        return Err(Error::Configuration(format!(
            "spin metadata covers {} qubits, operator has {n}",
            qubit_spins.len()
        )));
    }
    let mut cost = ham.clone();
    if lambda_n > 0.0 {
        let shifted = number_operator(n).plus(&QubitHamiltonian::from_sum(n, {
            let mut s = PauliSum::default();
            s.add(0, 0, C64::new(-(n_target as f64), 0.0));
            s
        }));
        cost = cost.plus(&shifted.times(&shifted).scaled(lambda_n));
    }
    if lambda_s > 0.0 {
        let sz = sz_operator(qubit_spins);
        cost = cost.plus(&sz.times(&sz).scaled(lambda_s));
    }
    Ok(cost)
}
