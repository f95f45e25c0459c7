//! Second-quantized periodic Hamiltonians at a single crystal momentum.
//!
//! The operator is
//!
//! ```text
//! H = constant + Σ_pq t_pq c†_p c_q + Σ_pqrs v_pqrs c†_p c†_q c_r c_s
//! ```
//!
//! with the two-body coefficients stored in exactly this physicist operator
//! order. Indices run over spin orbitals. Both coefficient maps hold the full
//! redundant list of entries; nothing is unpacked from permutational symmetry.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::C64;

/// Coefficients with a smaller magnitude are never stored.
pub const COEFFICIENT_CUTOFF: f64 = 1e-12;

/// Absolute tolerance for the hermiticity checks at ingestion.
pub const HERMITICITY_TOLERANCE: f64 = 1e-10;

/// Imaginary residual tolerated on energies that must be real.
const REALITY_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KPoint {
    pub label: String,
    /// Fractional coordinates in reciprocal-lattice units.
    #[serde(rename = "frac")]
    pub fractional_coords: [f64; 3],
    /// Position along the band path.
    pub path_distance: f64,
}

impl KPoint {
    pub fn new(label: impl Into<String>, fractional_coords: [f64; 3], path_distance: f64) -> Self {
        Self {
            label: label.into(),
            fractional_coords,
            path_distance,
        }
    }

    pub fn gamma() -> Self {
        Self::new("Gamma", [0.0; 3], 0.0)
    }

    fn validate(&self) -> Result<()> {
        if !self.fractional_coords.iter().all(|c| c.is_finite()) {
            return Err(Error::Validation(format!(
                "k-point {} has non-finite fractional coordinates",
                self.label
            )));
        }
        if !(self.path_distance.is_finite() && self.path_distance >= 0.0) {
            return Err(Error::Validation(format!(
                "k-point {} has invalid path distance {}",
                self.label, self.path_distance
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Spin {
    #[serde(rename = "a")]
    Alpha,
    #[serde(rename = "b")]
    Beta,
}

impl Spin {
    /// Twice the z-projection: +1 for alpha, -1 for beta.
    pub fn two_sz(self) -> i32 {
        match self {
            Spin::Alpha => 1,
            Spin::Beta => -1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpinOrbital {
    pub index: usize,
    #[serde(rename = "spatial")]
    pub spatial_orbital: usize,
    pub spin: Spin,
    pub hf_occupied: bool,
    /// Index into a k-point grid. Absent for single-k Hamiltonians, in which
    /// case the orbital carries the Hamiltonian's own k-point.
    #[serde(rename = "k", default, skip_serializing_if = "Option::is_none")]
    pub k_index: Option<usize>,
}

impl SpinOrbital {
    pub fn new(index: usize, spatial_orbital: usize, spin: Spin, hf_occupied: bool) -> Self {
        Self {
            index,
            spatial_orbital,
            spin,
            hf_occupied,
            k_index: None,
        }
    }
}

pub type OneBodyMap = BTreeMap<(usize, usize), C64>;
pub type TwoBodyMap = BTreeMap<(usize, usize, usize, usize), C64>;

/// A validated Hamiltonian. Immutable once constructed.
#[derive(Debug, Clone, PartialEq)]
pub struct FermionHamiltonian {
    n_spin_orbitals: usize,
    n_electrons: usize,
    k_point: KPoint,
    constant: f64,
    orbitals: Vec<SpinOrbital>,
    one_body: OneBodyMap,
    two_body: TwoBodyMap,
}

impl FermionHamiltonian {
    /// Assembles and validates a Hamiltonian. Repeated index tuples are
    /// summed; sums below [`COEFFICIENT_CUTOFF`] are dropped.
    pub fn new(
        n_electrons: usize,
        k_point: KPoint,
        constant: f64,
        mut orbitals: Vec<SpinOrbital>,
        one_body: impl IntoIterator<Item = ((usize, usize), C64)>,
        two_body: impl IntoIterator<Item = ((usize, usize, usize, usize), C64)>,
    ) -> Result<Self> {
        orbitals.sort_by_key(|o| o.index);
        let mut ob = OneBodyMap::new();
        for (key, value) in one_body {
            *ob.entry(key).or_default() += value;
        }
        let mut tb = TwoBodyMap::new();
        for (key, value) in two_body {
            *tb.entry(key).or_default() += value;
        }
        ob.retain(|_, v| v.norm() >= COEFFICIENT_CUTOFF);
        tb.retain(|_, v| v.norm() >= COEFFICIENT_CUTOFF);
        let ham = Self {
            n_spin_orbitals: orbitals.len(),
            n_electrons,
            k_point,
            constant,
            orbitals,
            one_body: ob,
            two_body: tb,
        };
        ham.validate()?;
        Ok(ham)
    }

    /// Orbital list with alternating spins: index `2m` is spatial orbital `m`
    /// alpha, `2m + 1` the same orbital beta. The lowest `n_electrons` spin
    /// orbitals are marked HF-occupied.
    pub fn interleaved_orbitals(n_spatial: usize, n_electrons: usize) -> Vec<SpinOrbital> {
        (0..2 * n_spatial)
            .map(|p| {
                let spin = if p % 2 == 0 { Spin::Alpha } else { Spin::Beta };
                SpinOrbital::new(p, p / 2, spin, p < n_electrons)
            })
            .collect()
    }

    pub fn n_spin_orbitals(&self) -> usize {
        self.n_spin_orbitals
    }

    pub fn n_electrons(&self) -> usize {
        self.n_electrons
    }

    pub fn k_point(&self) -> &KPoint {
        &self.k_point
    }

    pub fn constant(&self) -> f64 {
        self.constant
    }

    pub fn orbitals(&self) -> &[SpinOrbital] {
        &self.orbitals
    }

    pub fn one_body(&self) -> &OneBodyMap {
        &self.one_body
    }

    pub fn two_body(&self) -> &TwoBodyMap {
        &self.two_body
    }

    /// Twice the Sz of the HF determinant.
    pub fn hf_two_sz(&self) -> i32 {
        self.orbitals
            .iter()
            .filter(|o| o.hf_occupied)
            .map(|o| o.spin.two_sz())
            .sum()
    }

    fn validate(&self) -> Result<()> {
        self.k_point.validate()?;
        if !self.constant.is_finite() {
            return Err(Error::Validation("constant is not finite".into()));
        }
        let n = self.n_spin_orbitals;
        for (pos, orb) in self.orbitals.iter().enumerate() {
            if orb.index != pos {
                return Err(Error::Validation(format!(
                    "orbital indices are not a bijection onto [0, {n}): missing index {pos}"
                )));
            }
        }
        let occupied = self.orbitals.iter().filter(|o| o.hf_occupied).count();
        if occupied != self.n_electrons {
            return Err(Error::Validation(format!(
                "{occupied} spin orbitals are marked hf_occupied but n_electrons = {}",
                self.n_electrons
            )));
        }
        for (&(p, q), v) in &self.one_body {
            if p >= n || q >= n {
                return Err(Error::Validation(format!(
                    "one-body index ({p}, {q}) out of range for {n} spin orbitals"
                )));
            }
            if !(v.re.is_finite() && v.im.is_finite()) {
                return Err(Error::Validation(format!("one-body ({p}, {q}) is not finite")));
            }
            let partner = self.one_body.get(&(q, p)).copied().unwrap_or_default();
            let residual = (v - partner.conj()).norm();
            if residual > HERMITICITY_TOLERANCE {
                return Err(Error::Hermiticity {
                    indices: format!("one_body ({p}, {q})"),
                    residual,
                });
            }
        }
        for (&(p, q, r, s), v) in &self.two_body {
            if [p, q, r, s].iter().any(|&i| i >= n) {
                return Err(Error::Validation(format!(
                    "two-body index ({p}, {q}, {r}, {s}) out of range for {n} spin orbitals"
                )));
            }
            if !(v.re.is_finite() && v.im.is_finite()) {
                return Err(Error::Validation(format!(
                    "two-body ({p}, {q}, {r}, {s}) is not finite"
                )));
            }
            let partner = self.two_body.get(&(s, r, q, p)).copied().unwrap_or_default();
            let residual = (v - partner.conj()).norm();
            if residual > HERMITICITY_TOLERANCE {
                return Err(Error::Hermiticity {
                    indices: format!("two_body ({p}, {q}, {r}, {s})"),
                    residual,
                });
            }
        }
        Ok(())
    }

    /// `<HF|H|HF>` by Slater–Condon rules on the `hf_occupied` determinant.
    pub fn hf_reference_energy(&self) -> Result<f64> {
        let occ: Vec<usize> = self
            .orbitals
            .iter()
            .filter(|o| o.hf_occupied)
            .map(|o| o.index)
            .collect();
        let mut energy = C64::new(self.constant, 0.0);
        for &p in &occ {
            if let Some(t) = self.one_body.get(&(p, p)) {
                energy += t;
            }
        }
        // c†_p c†_q c_q c_p = n_p n_q and c†_p c†_q c_p c_q = -n_p n_q for p != q
        for &p in &occ {
            for &q in &occ {
                if p == q {
                    continue;
                }
                if let Some(v) = self.two_body.get(&(p, q, q, p)) {
                    energy += v;
                }
                if let Some(v) = self.two_body.get(&(p, q, p, q)) {
                    energy -= v;
                }
            }
        }
        if energy.im.abs() > REALITY_TOLERANCE {
            return Err(Error::Inconsistency(format!(
                "HF energy has imaginary part {:.3e}",
                energy.im
            )));
        }
        Ok(energy.re)
    }

    /// Canonical JSON text: header fields first, then one integral entry per
    /// line, sorted by index tuple.
    pub fn to_json_string(&self) -> String {
        let num = |x: f64| serde_json::to_string(&x).expect("finite float");
        let mut out = String::new();
        out.push_str("{\n");
        let _ = writeln!(out, "  \"n_spin_orbitals\": {},", self.n_spin_orbitals);
        let _ = writeln!(out, "  \"n_electrons\": {},", self.n_electrons);
        let _ = writeln!(
            out,
            "  \"k_point\": {},",
            serde_json::to_string(&self.k_point).expect("serializable k-point")
        );
        let _ = writeln!(out, "  \"constant\": {},", num(self.constant));
        out.push_str("  \"orbitals\": [\n");
        for (i, orb) in self.orbitals.iter().enumerate() {
            let sep = if i + 1 < self.orbitals.len() { "," } else { "" };
            let _ = writeln!(
                out,
                "    {}{sep}",
                serde_json::to_string(orb).expect("serializable orbital")
            );
        }
        out.push_str("  ],\n  \"one_body\": [\n");
        for (i, (&(p, q), v)) in self.one_body.iter().enumerate() {
            let sep = if i + 1 < self.one_body.len() { "," } else { "" };
            let _ = writeln!(out, "    [{p}, {q}, {}, {}]{sep}", num(v.re), num(v.im));
        }
        out.push_str("  ],\n  \"two_body\": [\n");
        for (i, (&(p, q, r, s), v)) in self.two_body.iter().enumerate() {
            let sep = if i + 1 < self.two_body.len() { "," } else { "" };
            let _ = writeln!(
                out,
                "    [{p}, {q}, {r}, {s}, {}, {}]{sep}",
                num(v.re),
                num(v.im)
            );
        }
        out.push_str("  ]\n}\n");
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json_string()).map_err(|e| Error::io(path, e))
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct HamiltonianFile {
    n_spin_orbitals: usize,
    n_electrons: usize,
    k_point: KPoint,
    constant: f64,
    orbitals: Vec<SpinOrbital>,
    one_body: Vec<(usize, usize, f64, f64)>,
    two_body: Vec<(usize, usize, usize, usize, f64, f64)>,
}

/// Parses Hamiltonian JSON text. `origin` names the source in error messages.
pub fn parse_hamiltonian(text: &str, origin: &str) -> Result<FermionHamiltonian> {
    let mut de = serde_json::Deserializer::from_str(text);
    let file: HamiltonianFile = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let inner = e.inner();
        Error::Schema {
            location: format!(
                "{origin} line {} column {} field `{}`",
                inner.line(),
                inner.column(),
                e.path()
            ),
            message: inner.to_string(),
        }
    })?;
    if file.orbitals.len() != file.n_spin_orbitals {
        return Err(Error::Validation(format!(
            "orbital-count mismatch: n_spin_orbitals = {} but {} orbitals listed",
            file.n_spin_orbitals,
            file.orbitals.len()
        )));
    }
    let mut seen = vec![false; file.n_spin_orbitals];
    for orb in &file.orbitals {
        match seen.get_mut(orb.index) {
            Some(slot) if !*slot => *slot = true,
            _ => {
                return Err(Error::Validation(format!(
                    "orbital index {} is duplicated or out of range",
                    orb.index
                )))
            }
        }
    }
    FermionHamiltonian::new(
        file.n_electrons,
        file.k_point,
        file.constant,
        file.orbitals,
        file.one_body
            .into_iter()
            .map(|(p, q, re, im)| ((p, q), C64::new(re, im))),
        file.two_body
            .into_iter()
            .map(|(p, q, r, s, re, im)| ((p, q, r, s), C64::new(re, im))),
    )
}

pub fn load_hamiltonian(path: impl AsRef<Path>) -> Result<FermionHamiltonian> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_hamiltonian(&text, &path.display().to_string())
}

/// Two-body index tuples whose crystal momenta do not balance up to a
/// reciprocal-lattice vector.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct MomentumReport {
    pub violations: Vec<(usize, usize, usize, usize)>,
    /// Orbitals whose grid index does not exist in the supplied grid.
    pub unresolved_orbitals: Vec<usize>,
}

impl MomentumReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty() && self.unresolved_orbitals.is_empty()
    }
}

pub fn check_momentum_conservation(ham: &FermionHamiltonian, grid: &[KPoint]) -> MomentumReport {
    const TOL: f64 = 1e-8;
    let mut report = MomentumReport::default();
    let ks: Vec<Option<[f64; 3]>> = ham
        .orbitals()
        .iter()
        .map(|o| match o.k_index {
            None => Some(ham.k_point().fractional_coords),
            Some(i) => grid.get(i).map(|k| k.fractional_coords),
        })
        .collect();
    for (i, k) in ks.iter().enumerate() {
        if k.is_none() {
            report.unresolved_orbitals.push(i);
        }
    }
    for &(p, q, r, s) in ham.two_body().keys() {
        let (Some(kp), Some(kq), Some(kr), Some(ks_)) = (ks[p], ks[q], ks[r], ks[s]) else {
            continue;
        };
        let balanced = (0..3).all(|d| {
            let g = kp[d] + kq[d] - kr[d] - ks_[d];
            (g - g.round()).abs() < TOL
        });
        if !balanced {
            report.violations.push((p, q, r, s));
        }
    }
    report
}
