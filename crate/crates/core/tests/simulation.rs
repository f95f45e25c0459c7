mod common;

use common::*;
use nalgebra::{DMatrix, DVector};
use qsebands::qubit::{
    jordan_wigner, Determinant, PauliAxis, PauliTerm, QubitHamiltonian, QubitLayout, QubitOrdering,
    Sector,
};
use qsebands::statevector::{
    build_ansatz, expectation, sample, simulate, top_r_amplitudes, AnsatzSpec, CompiledOperator,
    Gate, StateVector,
};
use qsebands::vqe::{optimize, InitialParams, VqeConfig, VqeProblem};
use qsebands::C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Full-register matrix of one gate, built from its definition.
fn gate_matrix(n: usize, gate: Gate, params: &[f64]) -> DMatrix<C64> {
    let dim = 1usize << n;
    let mut m = DMatrix::<C64>::zeros(dim, dim);
    for col in 0..dim {
        match gate {
            Gate::X(q) => m[(col ^ (1 << q), col)] = C64::new(1.0, 0.0),
            Gate::Cz(a, b) => {
                let both = (col >> a & 1) == 1 && (col >> b & 1) == 1;
                m[(col, col)] = C64::new(if both { -1.0 } else { 1.0 }, 0.0);
            }
            Gate::Ry { qubit, param } => {
                let (s, c) = (params[param] / 2.0).sin_cos();
                let bit = col >> qubit & 1;
                let flipped = col ^ (1 << qubit);
                // Columns of [[c, -s], [s, c]] in the {|0⟩, |1⟩} basis.
                if bit == 0 {
                    m[(col, col)] += C64::new(c, 0.0);
                    m[(flipped, col)] += C64::new(s, 0.0);
                } else {
                    m[(col, col)] += C64::new(c, 0.0);
                    m[(flipped, col)] += C64::new(-s, 0.0);
                }
            }
        }
    }
    m
}

fn oracle_state(n: usize, gates: &[Gate], params: &[f64]) -> DVector<C64> {
    let mut v = DVector::<C64>::zeros(1 << n);
    v[0] = C64::new(1.0, 0.0);
    for &g in gates {
        v = gate_matrix(n, g, params) * v;
    }
    v
}

fn random_params(n: usize, seed: u64, spread: f64) -> Vec<f64> {
    InitialParams::Seeded { seed, spread }.resolve(n).unwrap()
}

fn hubbard_problem(config: &VqeConfig) -> (VqeProblem, QubitLayout) {
    let ham = load("hubbard_dimer.json");
    let layout = QubitLayout::new(&ham, &QubitOrdering::default()).unwrap();
    let problem = VqeProblem::new(
        &jordan_wigner(&ham, &layout),
        layout.qubit_spins(),
        layout.hf_determinant(),
        config,
    )
    .unwrap();
    (problem, layout)
}

fn random_10q() -> (QubitHamiltonian, QubitLayout) {
    let ham = load("random_10q.json");
    let layout = QubitLayout::new(&ham, &QubitOrdering::default()).unwrap();
    (jordan_wigner(&ham, &layout), layout)
}

#[test]
fn simulator_matches_matrix_chain() {
    let n = 4;
    for depth in 0..4 {
        let spec = AnsatzSpec::ladder(n, depth);
        let hf = Determinant::parse_bitstring("0101").unwrap();
        let circuit = build_ansatz(&spec, hf).unwrap();
        for seed in 0..5 {
            let params = random_params(spec.n_params(), seed, 3.0);
            let state = simulate(&circuit, &params).unwrap();
            let oracle = oracle_state(n, circuit.gates(), &params);
            for (a, b) in state.amplitudes().iter().zip(oracle.iter()) {
                assert!((a - b).norm() < 1e-12, "depth {depth} seed {seed}");
            }
        }
    }
}

#[test]
fn ladder_wiring_and_parameter_layout() {
    let spec = AnsatzSpec::ladder(6, 2);
    assert_eq!(spec.entanglers[0], vec![(0, 1), (2, 3), (4, 5)]);
    assert_eq!(spec.entanglers[1], vec![(1, 2), (3, 4)]);
    let circuit = build_ansatz(&spec, Determinant::parse_bitstring("010101").unwrap()).unwrap();
    assert_eq!(circuit.n_params(), 18);
    let rys: Vec<(usize, usize)> = circuit
        .gates()
        .iter()
        .filter_map(|g| match *g {
            Gate::Ry { qubit, param } => Some((qubit, param)),
            _ => None,
        })
        .collect();
    assert_eq!(rys.len(), 18);
    assert!(rys.iter().enumerate().all(|(i, &(q, p))| p == i && q == i % 6));
}

#[test]
fn zero_angles_leave_the_reference_determinant() {
    let spec = AnsatzSpec::ladder(8, 3);
    let hf = Determinant::parse_bitstring("01010101").unwrap();
    let state = simulate(&build_ansatz(&spec, hf).unwrap(), &vec![0.0; spec.n_params()]).unwrap();
    assert!((state.amplitude(hf) - C64::new(1.0, 0.0)).norm() < 1e-15);
}

#[test]
fn simulation_preserves_the_norm() {
    let spec = AnsatzSpec::ladder(10, 3);
    let circuit = build_ansatz(&spec, Determinant(0b0101010101)).unwrap();
    for seed in 0..10 {
        let state = simulate(&circuit, &random_params(spec.n_params(), seed, 6.0)).unwrap();
        assert!((state.norm() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn compiled_operator_matches_dense_expectation() {
    let (op, layout) = random_10q();
    let dense = to_matrix(op.to_dense().unwrap());
    let compiled = CompiledOperator::new(&op);
    let spec = AnsatzSpec::ladder(10, 2);
    let circuit = build_ansatz(&spec, layout.hf_determinant()).unwrap();
    for seed in 0..3 {
        let state = simulate(&circuit, &random_params(spec.n_params(), seed, 2.0)).unwrap();
        let v = DVector::from_column_slice(state.amplitudes());
        let oracle = (v.adjoint() * &dense * &v)[(0, 0)].re;
        assert!((expectation(&state, &op).unwrap() - oracle).abs() < 1e-12);
        assert!((compiled.expectation(&state).unwrap() - oracle).abs() < 1e-12);
    }
}

#[test]
fn fully_depolarized_sampling_is_uniform() {
    let state = StateVector::basis(3, Determinant(0b101));
    let dist = sample(&state, 80_000, 3, 1.0).unwrap();
    assert_eq!(dist.counts.len(), 8);
    for &c in dist.counts.values() {
        // Binomial(80000, 1/8): σ ≈ 93.5.
        assert!((c as f64 - 10_000.0).abs() < 5.0 * 93.6, "count {c}");
    }
}

#[test]
fn noiseless_sampling_converges_to_born_probabilities() {
    let spec = AnsatzSpec::ladder(6, 2);
    let circuit = build_ansatz(&spec, Determinant(0b010101)).unwrap();
    let state = simulate(&circuit, &random_params(spec.n_params(), 9, 1.2)).unwrap();
    let dist = sample(&state, 1_000_000, 42, 0.0).unwrap();
    let freq = dist.frequencies();
    let probs = state.probabilities();
    let tv: f64 = 0.5
        * probs
            .iter()
            .enumerate()
            .map(|(b, p)| (p - freq.get(&Determinant(b as u64)).copied().unwrap_or(0.0)).abs())
            .sum::<f64>();
    assert!(tv < 0.01, "total variation {tv}");
    let outside: u64 = dist
        .counts
        .iter()
        .filter(|(d, _)| probs[d.0 as usize] == 0.0)
        .map(|(_, &c)| c)
        .sum();
    assert_eq!(outside, 0);
}

#[test]
fn sampling_is_reproducible_per_seed() {
    let state = StateVector::from_amplitudes(vec![C64::new(0.6, 0.0), C64::new(0.0, 0.8)]).unwrap();
    let a = sample(&state, 5000, 17, 0.3).unwrap();
    let b = sample(&state, 5000, 17, 0.3).unwrap();
    let c = sample(&state, 5000, 18, 0.3).unwrap();
    assert_eq!(a.to_json(), b.to_json());
    assert_ne!(a.counts, c.counts);
}

#[test]
fn top_r_respects_the_sector_and_order() {
    let (_, layout) = random_10q();
    let spec = AnsatzSpec::ladder(10, 2);
    let circuit = build_ansatz(&spec, layout.hf_determinant()).unwrap();
    let state = simulate(&circuit, &random_params(spec.n_params(), 4, 1.0)).unwrap();
    let sector = layout.hf_sector();
    let filter = layout.sector_filter(sector);
    let top = top_r_amplitudes(&state, 20, Some(filter));
    assert_eq!(top.len(), 20);
    assert!(top.iter().all(|&d| layout.in_sector(d, sector)));
    let weights: Vec<f64> = top.iter().map(|&d| state.amplitude(d).norm_sqr()).collect();
    assert!(weights.windows(2).all(|w| w[0] >= w[1]));
    let cutoff = weights[19];
    let better_outside = layout
        .sector_determinants(sector)
        .iter()
        .filter(|d| !top.contains(d))
        .any(|&d| state.amplitude(d).norm_sqr() > cutoff);
    assert!(!better_outside);
    let all = top_r_amplitudes(&state, 1_000_000, Some(filter));
    assert_eq!(all.len(), layout.sector_determinants(sector).len());
}

#[test]
fn cost_matches_dense_oracle() {
    let (op, layout) = random_10q();
    let mut config = VqeConfig::standard(AnsatzSpec::ladder(10, 2), 4, 0);
    config.lambda_n = 0.7;
    config.lambda_s = 0.3;
    let problem = VqeProblem::new(&op, layout.qubit_spins(), layout.hf_determinant(), &config).unwrap();
    let h = to_matrix(op.to_dense().unwrap());
    let alpha = layout.alpha_mask();
    for seed in 0..3 {
        let params = random_params(problem.n_params(), seed, 2.0);
        let v = DVector::from_column_slice(problem.state(&params).unwrap().amplitudes());
        let energy = (v.adjoint() * &h * &v)[(0, 0)].re;
        let penalty: f64 = v
            .iter()
            .enumerate()
            .map(|(b, a)| {
                let n = (b as u64).count_ones() as f64;
                let na = (b as u64 & alpha).count_ones() as f64;
                let sz = na - (n - na);
                a.norm_sqr() * (0.7 * (n - 4.0).powi(2) + 0.3 * (0.5 * sz).powi(2))
            })
            .sum();
        let value = problem.evaluate(&params).unwrap();
        assert!((value.energy - energy).abs() < 1e-12);
        assert!((value.cost - energy - penalty).abs() < 1e-12);
    }
}

#[test]
fn identity_hamiltonian_has_zero_gradient() {
    let op = QubitHamiltonian::from_terms(6, [PauliTerm::identity(C64::new(-1.7, 0.0))]).unwrap();
    let mut config = VqeConfig::standard(AnsatzSpec::ladder(6, 2), 3, 0);
    config.lambda_n = 0.0;
    config.lambda_s = 0.0;
    let spins = vec![qsebands::hamiltonian::Spin::Alpha; 6];
    let problem = VqeProblem::new(&op, &spins, Determinant(0b010101), &config).unwrap();
    let params = random_params(problem.n_params(), 1, 3.0);
    assert!((problem.cost(&params).unwrap() + 1.7).abs() < 1e-12);
    assert!(problem.gradient(&params).unwrap().iter().all(|g| g.abs() < 1e-12));
    assert!(problem.adjoint_gradient(&params).unwrap().1.iter().all(|g| g.abs() < 1e-12));
}

fn six_qubit_problem() -> VqeProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut terms = vec![PauliTerm::identity(C64::new(0.1, 0.0))];
    let axes = [PauliAxis::X, PauliAxis::Y, PauliAxis::Z];
    for _ in 0..30 {
        let a = rng.random_range(0..6);
        let b = (a + rng.random_range(1..6)) % 6;
        let term = PauliTerm::from_axes(
            C64::new(rng.random_range(-1.0..1.0), 0.0),
            &[(a, axes[rng.random_range(0..3)]), (b, axes[rng.random_range(0..3)])],
        )
        .unwrap();
        terms.push(term);
    }
    let op = QubitHamiltonian::from_terms(6, terms).unwrap();
    let config = VqeConfig::standard(AnsatzSpec::ladder(6, 2), 3, 0);
    let spins: Vec<_> = (0..6)
        .map(|q| if q % 2 == 0 { qsebands::hamiltonian::Spin::Alpha } else { qsebands::hamiltonian::Spin::Beta })
        .collect();
    VqeProblem::new(&op, &spins, Determinant(0b010101), &config).unwrap()
}

#[test]
fn parameter_shift_matches_central_differences() {
    let problem = six_qubit_problem();
    let h = 1e-5;
    for seed in 0..20 {
        let params = random_params(problem.n_params(), 100 + seed, std::f64::consts::PI);
        let shift = problem.gradient(&params).unwrap();
        let (_, adjoint) = problem.adjoint_gradient(&params).unwrap();
        let mut p = params.clone();
        for k in 0..params.len() {
            p[k] = params[k] + h;
            let plus = problem.cost(&p).unwrap();
            p[k] = params[k] - h;
            let minus = problem.cost(&p).unwrap();
            p[k] = params[k];
            let fd = (plus - minus) / (2.0 * h);
            assert!((shift[k] - fd).abs() < 1e-6, "seed {seed} component {k}");
            assert!((shift[k] - adjoint[k]).abs() < 1e-12);
        }
    }
}

fn hubbard_config(seed: u64) -> VqeConfig {
    let mut config = VqeConfig::standard(AnsatzSpec::ladder(4, 3), 2, seed);
    config.lambda_n = 2.0;
    config.lambda_s = 0.5;
    config.max_iterations = 200;
    config.snapshot_iterations = vec![0, 200];
    config
}

#[test]
fn vqe_reaches_the_hubbard_ground_state() {
    let exact = 2.0 - 8f64.sqrt();
    for seed in [1, 2, 3] {
        let config = hubbard_config(seed);
        let (problem, _) = hubbard_problem(&config);
        let trace = optimize(&problem, &config).unwrap();
        let last = *trace.energies.last().unwrap();
        assert!((last - exact).abs() < 1e-6, "seed {seed}: {last}");
        assert!(trace.iterations() <= 200);
        assert!(trace.costs.windows(2).all(|w| w[1] <= w[0] + 1e-12), "cost must not increase");
    }
}

#[test]
fn zero_iterations_returns_the_initial_point() {
    let mut config = hubbard_config(5);
    config.max_iterations = 0;
    config.snapshot_iterations = vec![0];
    let (problem, _) = hubbard_problem(&config);
    let trace = optimize(&problem, &config).unwrap();
    let x0 = config.initial_params.resolve(problem.n_params()).unwrap();
    assert_eq!(trace.final_params, x0);
    assert_eq!(trace.snapshots[&0], x0);
    assert_eq!(trace.costs.len(), 1);
    assert_eq!(trace.iterations(), 0);
}

#[test]
fn optimization_is_deterministic() {
    let config = hubbard_config(7);
    let (problem, _) = hubbard_problem(&config);
    let a = optimize(&problem, &config).unwrap();
    let b = optimize(&problem, &config).unwrap();
    assert_eq!(a.to_csv(), b.to_csv());
    assert_eq!(a.snapshots_json(), b.snapshots_json());
}

#[test]
fn snapshots_round_trip_exactly() {
    let config = hubbard_config(8);
    let (problem, _) = hubbard_problem(&config);
    let trace = optimize(&problem, &config).unwrap();
    let back = qsebands::vqe::OptimizationTrace::parse_snapshots(&trace.snapshots_json()).unwrap();
    assert_eq!(back, trace.snapshots);
}

#[test]
fn bare_energy_never_falls_below_the_sector_ground_state() {
    // The ansatz keeps N and Sz only approximately, so the bound is the
    // global ground energy of the qubit Hamiltonian.
    let ham = load("hubbard_dimer.json");
    let layout = QubitLayout::new(&ham, &QubitOrdering::default()).unwrap();
    let (global, _) = eigensystem(&to_matrix(jordan_wigner(&ham, &layout).to_dense().unwrap()));
    for seed in 0..4 {
        let config = hubbard_config(seed);
        let (problem, _) = hubbard_problem(&config);
        let trace = optimize(&problem, &config).unwrap();
        assert!(trace.energies.iter().all(|&e| e >= global[0] - 1e-12));
        let sector = Sector { n_electrons: 2, two_sz: 0 };
        let state = problem.state(&trace.final_params).unwrap();
        let weight: f64 = layout
            .sector_determinants(sector)
            .iter()
            .map(|&d| state.amplitude(d).norm_sqr())
            .sum();
        assert!(weight > 0.999, "seed {seed}: sector weight {weight}");
    }
}

#[test]
fn bell_state_counts_stay_within_binomial_bounds() {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let bell = StateVector::from_amplitudes(vec![
        C64::new(h, 0.0),
        C64::default(),
        C64::default(),
        C64::new(h, 0.0),
    ])
    .unwrap();
    let dist = sample(&bell, 10_000, 99, 0.0).unwrap();
    // Binomial(10⁴, ½): σ = 50.
    for det in [0b00, 0b11] {
        let c = dist.counts[&Determinant(det)] as f64;
        assert!((c - 5000.0).abs() <= 250.0, "{det:02b}: {c}");
    }
    assert_eq!(dist.counts.len(), 2);
}
