//! Test-only oracles that share no code with the library's operator kernels.
#![allow(dead_code)]

use nalgebra::DMatrix;
use qsebands::hamiltonian::{load_hamiltonian, FermionHamiltonian, KPoint, Spin, SpinOrbital};
use qsebands::C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn fixture(name: &str) -> String {
    format!("{}/../../fixtures/{name}", env!("CARGO_MANIFEST_DIR"))
}

pub fn load(name: &str) -> FermionHamiltonian {
    load_hamiltonian(fixture(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

/// Fixtures small enough for a full Fock-space matrix.
pub const SMALL_FIXTURES: [&str; 4] = [
    "hubbard_dimer.json",
    "free_fermion.json",
    "constant_only.json",
    "random_10q.json",
];

/// `c_p |n⟩` on an occupation bitmask in spin-orbital order, with the sign
/// `(-1)^{number of occupied orbitals with index < p}`.
pub fn annihilate(state: u64, p: usize) -> Option<(u64, f64)> {
    if state >> p & 1 == 0 {
        return None;
    }
    let sign = if (state & ((1u64 << p) - 1)).count_ones().is_multiple_of(2) { 1.0 } else { -1.0 };
    Some((state ^ (1 << p), sign))
}

pub fn create(state: u64, p: usize) -> Option<(u64, f64)> {
    if state >> p & 1 == 1 {
        return None;
    }
    let sign = if (state & ((1u64 << p) - 1)).count_ones().is_multiple_of(2) { 1.0 } else { -1.0 };
    Some((state ^ (1 << p), sign))
}

/// Applies a product of ladder operators, rightmost first. `true` marks a
/// creation operator.
pub fn apply_string(state: u64, ops: &[(usize, bool)]) -> Option<(u64, f64)> {
    let mut s = state;
    let mut sign = 1.0;
    for &(p, dagger) in ops.iter().rev() {
        let (next, sg) = if dagger { create(s, p)? } else { annihilate(s, p)? };
        s = next;
        sign *= sg;
    }
    Some((s, sign))
}

/// The Hamiltonian over the whole Fock space, basis states indexed by their
/// spin-orbital occupation bitmask.
pub fn fock_matrix(ham: &FermionHamiltonian) -> DMatrix<C64> {
    let n = ham.n_spin_orbitals();
    let dim = 1usize << n;
    let mut m = DMatrix::<C64>::zeros(dim, dim);
    for col in 0..dim as u64 {
        m[(col as usize, col as usize)] += C64::new(ham.constant(), 0.0);
        for (&(p, q), &t) in ham.one_body() {
            if let Some((row, sign)) = apply_string(col, &[(p, true), (q, false)]) {
                m[(row as usize, col as usize)] += t * sign;
            }
        }
        for (&(p, q, r, s), &v) in ham.two_body() {
            if let Some((row, sign)) =
                apply_string(col, &[(p, true), (q, true), (r, false), (s, false)])
            {
                m[(row as usize, col as usize)] += v * sign;
            }
        }
    }
    m
}

pub fn spin_orbital_sector(ham: &FermionHamiltonian, state: u64) -> (usize, i32) {
    let mut two_sz = 0;
    for o in ham.orbitals() {
        if state >> o.index & 1 == 1 {
            two_sz += if o.spin == Spin::Alpha { 1 } else { -1 };
        }
    }
    (state.count_ones() as usize, two_sz)
}

/// Occupation bitmasks of the HF sector, ascending.
pub fn hf_sector_states(ham: &FermionHamiltonian) -> Vec<u64> {
    let hf: u64 = ham.orbitals().iter().filter(|o| o.hf_occupied).map(|o| 1u64 << o.index).sum();
    let target = spin_orbital_sector(ham, hf);
    (0..1u64 << ham.n_spin_orbitals())
        .filter(|&s| spin_orbital_sector(ham, s) == target)
        .collect()
}

pub fn restrict(m: &DMatrix<C64>, states: &[u64]) -> DMatrix<C64> {
    DMatrix::from_fn(states.len(), states.len(), |i, j| {
        m[(states[i] as usize, states[j] as usize)]
    })
}

/// Ascending eigenvalues and the matching eigenvectors, independent of the
/// library's eigensolver wrapper.
pub fn eigensystem(m: &DMatrix<C64>) -> (Vec<f64>, DMatrix<C64>) {
    let eig = m.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..m.nrows()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(m.nrows(), m.ncols(), |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

pub fn sector_ground_energy(ham: &FermionHamiltonian) -> f64 {
    let states = hf_sector_states(ham);
    eigensystem(&restrict(&fock_matrix(ham), &states)).0[0]
}

pub fn max_abs_diff(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

pub fn to_matrix(rows: Vec<Vec<C64>>) -> DMatrix<C64> {
    let n = rows.len();
    DMatrix::from_fn(n, n, |i, j| rows[i][j])
}

/// A random number- and Sz-conserving Hermitian Hamiltonian with complex
/// coefficients on `n_spatial` spatial orbitals.
pub fn random_hamiltonian(n_spatial: usize, n_electrons: usize, seed: u64) -> FermionHamiltonian {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let orbitals: Vec<SpinOrbital> = FermionHamiltonian::interleaved_orbitals(n_spatial, n_electrons);
    let n = orbitals.len();
    let spin = |p: usize| orbitals[p].spin;
    let mut cplx = |scale: f64| C64::new(rng.random_range(-scale..scale), rng.random_range(-scale..scale));

    let mut one_body = Vec::new();
    for p in 0..n {
        one_body.push(((p, p), C64::new(-1.0 + 0.5 * (p / 2) as f64, 0.0) + C64::new(cplx(0.2).re, 0.0)));
        for q in p + 1..n {
            if spin(p) == spin(q) {
                let t = cplx(0.3);
                one_body.push(((p, q), t));
                one_body.push(((q, p), t.conj()));
            }
        }
    }
    let mut two_body = Vec::new();
    for p in 0..n {
        for q in 0..n {
            for r in 0..n {
                for s in 0..n {
                    if p == q || r == s {
                        continue;
                    }
                    let conserves = [spin(p), spin(q)]
                        .iter()
                        .map(|&x| if x == Spin::Alpha { 1 } else { -1 })
                        .sum::<i32>()
                        == [spin(r), spin(s)]
                            .iter()
                            .map(|&x| if x == Spin::Alpha { 1 } else { -1 })
                            .sum::<i32>();
                    if !conserves || (p, q, r, s) > (s, r, q, p) {
                        continue;
                    }
                    let v = cplx(0.15);
                    if (p, q, r, s) == (s, r, q, p) {
                        two_body.push(((p, q, r, s), C64::new(v.re, 0.0)));
                    } else {
                        two_body.push(((p, q, r, s), v));
                        two_body.push(((s, r, q, p), v.conj()));
                    }
                }
            }
        }
    }
    FermionHamiltonian::new(
        n_electrons,
        KPoint::new("R", [0.0; 3], 0.0),
        rng.random_range(-1.0..1.0),
        orbitals,
        one_body,
        two_body,
    )
    .expect("random Hamiltonian is valid")
}
