//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits with a
//! non-zero status if any criterion fails.
//!
//! Run with `cargo test --release -p qsebands --test acceptance`.

mod common;

use common::*;
use qsebands::diagnostics::{
    bucketed_divergence, histogram, js_divergence, kl_divergence, ExcitationClassifier,
};
use qsebands::hamiltonian::FermionHamiltonian;
use qsebands::pipeline::{compare_runs, run_pipeline, KSummary, RunConfig, RunReport};
use qsebands::qse::qse_bands;
use qsebands::qsci::{fci_ground, post_select, qsci, select_ideal, select_subspace};
use qsebands::qubit::{jordan_wigner, Determinant, QubitLayout, QubitOrdering};
use qsebands::statevector::{build_ansatz, sample, simulate, AnsatzSpec, StateVector};
use qsebands::vqe::{InitialParams, VqeConfig, VqeProblem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

type Check = Result<String, String>;

struct Suite {
    failures: usize,
}

impl Suite {
    fn run(&mut self, id: usize, name: &str, limit: Option<Duration>, f: impl FnOnce() -> Check) {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        let (mut pass, mut detail) = match outcome {
            Ok(d) => (true, d),
            Err(d) => (false, d),
        };
        let timing = match limit {
            Some(l) if elapsed > l => {
                pass = false;
                detail.push_str(&format!("; runtime exceeded {:.0} s", l.as_secs_f64()));
                format!("{:.2} s, limit {:.0} s", elapsed.as_secs_f64(), l.as_secs_f64())
            }
            Some(l) => format!("{:.2} s, limit {:.0} s", elapsed.as_secs_f64(), l.as_secs_f64()),
            None => format!("{:.2} s", elapsed.as_secs_f64()),
        };
        if !pass {
            self.failures += 1;
        }
        println!("{} [{id:>2}] {name} ({timing}): {detail}", if pass { "PASS" } else { "FAIL" });
    }
}

fn check(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn setup(ham: &FermionHamiltonian) -> (QubitLayout, qsebands::qubit::GroupedOperator) {
    let layout = QubitLayout::new(ham, &QubitOrdering::default()).unwrap();
    let op = jordan_wigner(ham, &layout).grouped();
    (layout, op)
}

fn ansatz_state(layout: &QubitLayout, depth: usize, seed: u64, spread: f64) -> StateVector {
    let spec = AnsatzSpec::ladder(layout.n_qubits(), depth);
    let circuit = build_ansatz(&spec, layout.hf_determinant()).unwrap();
    let params = InitialParams::Seeded { seed, spread }.resolve(spec.n_params()).unwrap();
    simulate(&circuit, &params).unwrap()
}

fn exact_oracle() -> Check {
    let mut worst = 0.0f64;
    for name in SMALL_FIXTURES {
        let ham = load(name);
        assert!(ham.n_spin_orbitals() <= 12);
        let diff = (fci_ground(&ham, None).unwrap().energy - sector_ground_energy(&ham)).abs();
        worst = worst.max(diff);
    }
    let hubbard = fci_ground(&load("hubbard_dimer.json"), None).unwrap().energy;
    let analytic = 2.0 - 8f64.sqrt();
    let dh = (hubbard - analytic).abs();
    check(
        worst < 1e-10 && dh < 1e-9,
        format!("max |FCI - dense| = {worst:.2e} over {} fixtures; Hubbard {hubbard:.12} vs {analytic:.12}", SMALL_FIXTURES.len()),
    )
}

fn full_r_equals_fci() -> Check {
    let ham = load("si_l.json");
    let (layout, op) = setup(&ham);
    let sector = layout.hf_sector();
    let state = ansatz_state(&layout, 3, 0, 0.1);
    let sel = select_ideal(&state, 4900, Some(layout.sector_filter(sector))).unwrap();
    let n = sel.len();
    let e = qsci(sel, &op).unwrap().energy;
    let fci = fci_ground(&ham, None).unwrap().energy;
    check(
        n == 4900 && (e - fci).abs() < 1e-10,
        format!("|S_R| = {n}, QSCI {e:.12}, FCI {fci:.12}, diff {:.2e}", (e - fci).abs()),
    )
}

fn variational_ladders() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0x1adde5);
    let mut violations = Vec::new();
    let mut energies = 0;
    for case in 0..50 {
        let (n_spatial, n_e) = [(2, 2), (3, 2), (3, 4), (4, 4)][case % 4];
        let ham = random_hamiltonian(n_spatial, n_e, rng.random());
        let (layout, op) = setup(&ham);
        let e_fci = sector_ground_energy(&ham);
        let state = ansatz_state(&layout, 2, rng.random(), 1.5);
        let filter = layout.sector_filter(layout.hf_sector());
        let full = layout.sector_determinants(layout.hf_sector()).len();
        let mut previous: Option<(Vec<Determinant>, f64)> = None;
        for r in 1..=full {
            let sel = select_ideal(&state, r, Some(filter)).unwrap();
            let dets = sel.determinants.clone();
            let e = qsci(sel, &op).unwrap().energy;
            energies += 1;
            if e < e_fci - 1e-12 {
                violations.push(format!("case {case} R={r}: {e} below FCI {e_fci}"));
            }
            if let Some((prev_dets, prev_e)) = &previous {
                if !prev_dets.iter().all(|d| dets.contains(d)) {
                    violations.push(format!("case {case} R={r}: subspaces not nested"));
                }
                if e > prev_e + 1e-12 {
                    violations.push(format!("case {case} R={r}: {e} above {prev_e}"));
                }
            }
            previous = Some((dets, e));
        }
    }
    check(
        violations.is_empty(),
        format!("{} violations over 50 Hamiltonians, {energies} subspace energies{}", violations.len(),
            violations.first().map(|v| format!("; first: {v}")).unwrap_or_default()),
    )
}

fn koopmans() -> Check {
    let ham = load("free_fermion.json");
    let (layout, op) = setup(&ham);
    let psi = fci_ground(&ham, None).unwrap();
    let bands = qse_bands(&psi, &op, &layout, ham.k_point(), 1e-8).unwrap();
    let orbital_energy = |p: usize| ham.one_body()[&(p, p)].re;
    let mut occ: Vec<f64> = ham.orbitals().iter().filter(|o| o.hf_occupied).map(|o| orbital_energy(o.index)).collect();
    let mut virt: Vec<f64> = ham.orbitals().iter().filter(|o| !o.hf_occupied).map(|o| orbital_energy(o.index)).collect();
    occ.sort_by(f64::total_cmp);
    virt.sort_by(f64::total_cmp);
    let worst = bands
        .valence
        .iter()
        .zip(&occ)
        .chain(bands.conduction.iter().zip(&virt))
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    check(
        bands.valence.len() == occ.len() && bands.conduction.len() == virt.len() && worst < 1e-10,
        format!("valence {:?}, conduction {:?}, max deviation {worst:.2e}", bands.valence, bands.conduction),
    )
}

/// QSCI runs on the three silicon k-points with the standard VQE settings.
struct SiliconRuns {
    qsci: RunReport,
    qsci_dir: PathBuf,
    fci_dir: PathBuf,
}

fn silicon_inputs() -> Vec<String> {
    ["si_l.json", "si_gamma.json", "si_x.json"].iter().map(|f| fixture(f)).collect()
}

fn run_config(base: &Path, inputs: &[String], body: &str) -> (RunConfig, String) {
    let list: Vec<String> = inputs.iter().map(|p| format!("{p:?}")).collect();
    let text = format!("hamiltonians = [{}]\noutput_dir = \"out\"\n{body}", list.join(", "));
    (RunConfig::from_toml(&text, base).unwrap(), text)
}

fn silicon_runs(root: &Path) -> SiliconRuns {
    let qsci_base = root.join("qsci");
    let fci_base = root.join("fci");
    let body = r#"
mode = "qsci"
workers = 3
declared_path = ["L", "Gamma", "X"]
sampling = { kind = "ideal", r = 50 }
[vqe]
depth = 3
max_iterations = 400
use_iteration = 400
snapshot_iterations = [0, 400]
seed = 0
[history]
iterations = [0, 400]
r_values = [10, 30, 50]
"#;
    fs::create_dir_all(&qsci_base).unwrap();
    let (cfg, text) = run_config(&qsci_base, &silicon_inputs(), body);
    let qsci = run_pipeline(&cfg, &text).unwrap();
    fs::create_dir_all(&fci_base).unwrap();
    let (cfg, text) = run_config(
        &fci_base,
        &silicon_inputs(),
        "mode = \"fci-reference\"\nworkers = 3\nsampling = { kind = \"ideal\", r = 50 }\n",
    );
    assert!(run_pipeline(&cfg, &text).unwrap().all_ok());
    SiliconRuns {
        qsci,
        qsci_dir: qsci_base.join("out"),
        fci_dir: fci_base.join("out"),
    }
}

fn history_energy(csv: &str, iteration: usize, r: usize) -> f64 {
    csv.lines()
        .skip(1)
        .map(|l| l.split(',').collect::<Vec<_>>())
        .find(|f| f[0] == iteration.to_string() && f[1] == r.to_string() && f[2] == "true")
        .map(|f| f[3].parse().unwrap())
        .unwrap_or_else(|| panic!("no history row for iteration {iteration}, R = {r}"))
}

fn optimization_history(runs: &SiliconRuns) -> Check {
    let summary: &KSummary = runs
        .qsci
        .summaries
        .iter()
        .find(|s| s.k_point.label == "L")
        .ok_or("the L k-point failed")?;
    let csv = fs::read_to_string(runs.qsci_dir.join("L/qsci_history.csv")).unwrap();
    let e0 = history_energy(&csv, 0, 50);
    let e400 = history_energy(&csv, 400, 50);
    let hf = summary.hf_energy;
    let fci = summary.fci_energy.unwrap();
    let ladder: Vec<String> = [10, 30, 50]
        .iter()
        .map(|&r| format!("R={r}: {:.6}/{:.6}", history_energy(&csv, 0, r), history_energy(&csv, 400, r)))
        .collect();
    check(
        e400 < hf && e400 > fci && e400 <= e0,
        format!(
            "HF {hf:.6}, QSCI(0) {e0:.6}, QSCI(400) {e400:.6}, FCI {fci:.6} [iteration 0/400 {}]",
            ladder.join(", ")
        ),
    )
}

fn band_agreement(runs: &SiliconRuns) -> Check {
    let report = compare_runs(&runs.qsci_dir, &runs.fci_dir).unwrap();
    let tolerance = runs.qsci.manifest.band_agreement_tolerance;
    let per_k: Vec<String> = report
        .k_points
        .iter()
        .map(|k| format!("{} max {:.2} mHa (E - E_FCI {:.2} mHa)", k.label, 1e3 * k.max_band_delta, 1e3 * k.a_minus_fci.unwrap_or(f64::NAN)))
        .collect();
    let worst = report.k_points.iter().map(|k| k.max_band_delta).fold(0.0, f64::max);
    check(
        report.k_points.len() == 3 && report.warnings.is_empty() && worst <= tolerance,
        format!("tolerance {:.0} mHa; {}", tolerance * 1e3, per_k.join("; ")),
    )
}

fn gradient_check() -> Check {
    let ham = random_hamiltonian(3, 2, 606);
    let layout = QubitLayout::new(&ham, &QubitOrdering::default()).unwrap();
    assert_eq!(layout.n_qubits(), 6);
    let config = VqeConfig::standard(AnsatzSpec::ladder(6, 3), 2, 0);
    let problem = VqeProblem::new(
        &jordan_wigner(&ham, &layout),
        layout.qubit_spins(),
        layout.hf_determinant(),
        &config,
    )
    .unwrap();
    let step = 1e-5;
    let mut worst = 0.0f64;
    for seed in 0..20 {
        let params = InitialParams::Seeded { seed: 1000 + seed, spread: std::f64::consts::PI }
            .resolve(problem.n_params())
            .unwrap();
        let shift = problem.gradient(&params).unwrap();
        let mut p = params.clone();
        for k in 0..params.len() {
            p[k] = params[k] + step;
            let plus = problem.cost(&p).unwrap();
            p[k] = params[k] - step;
            let minus = problem.cost(&p).unwrap();
            p[k] = params[k];
            worst = worst.max((shift[k] - (plus - minus) / (2.0 * step)).abs());
        }
    }
    check(
        worst < 1e-6,
        format!("20 vectors x {} components, max |shift - FD| = {worst:.2e}", problem.n_params()),
    )
}

fn divergence_suite() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut problems = Vec::new();
    for _ in 0..100 {
        let n = rng.random_range(2..64);
        let mut draw = || {
            let mut v: Vec<f64> = (0..n).map(|_| if rng.random_bool(0.25) { 0.0 } else { rng.random() }).collect();
            v[0] += 1e-3;
            let t: f64 = v.iter().sum();
            v.into_iter().map(|x| x / t).collect::<Vec<f64>>()
        };
        let (p, q) = (draw(), draw());
        let (pq, qp) = (js_divergence(&p, &q), js_divergence(&q, &p));
        if pq.to_bits() != qp.to_bits() {
            problems.push("asymmetric".to_string());
        }
        if !(0.0..=1.0).contains(&pq) {
            problems.push(format!("out of bounds {pq}"));
        }
        if js_divergence(&p, &p) > 1e-12 || pq <= 1e-12 {
            problems.push("identity of indiscernibles".to_string());
        }
    }
    let js = js_divergence(&[0.5, 0.5], &[1.0, 0.0]);
    let kl = kl_divergence(&[0.75, 0.25], &[0.25, 0.75]);
    if (js - 0.31128).abs() > 1e-5 {
        problems.push(format!("JS reference {js:.6} != 0.31128"));
    }
    if (kl - 0.68872).abs() > 1e-5 {
        problems.push(format!(
            "KL((0.75,0.25)||(0.25,0.75)) = {kl:.6} != 0.68872 (the listed value 0.75*log2(3) - 0.5 is not this divergence; the sum evaluates to 0.5*log2(3))"
        ));
    }

    let ham = load("si_l.json");
    let layout = QubitLayout::new(&ham, &QubitOrdering::default()).unwrap();
    let classifier = ExcitationClassifier::new(&layout);
    let state = ansatz_state(&layout, 3, 4, 0.3);
    let clean = histogram(&sample(&state, 100_000, 1, 0.0).unwrap(), &classifier);
    let mild = histogram(&sample(&state, 100_000, 2, 0.1).unwrap(), &classifier);
    let full = histogram(&sample(&state, 100_000, 3, 1.0).unwrap(), &classifier);
    let js_mild = bucketed_divergence(&clean, &mild).d_js;
    let js_full = bucketed_divergence(&clean, &full).d_js;
    if js_full <= js_mild {
        problems.push(format!("noise ordering {js_full} <= {js_mild}"));
    }
    check(
        problems.is_empty(),
        format!(
            "100 random pairs checked; JS {js:.6}, KL {kl:.6}; js(clean, p=1) {js_full:.4} > js(clean, p=0.1) {js_mild:.4}{}",
            if problems.is_empty() { String::new() } else { format!("; problems: {}", problems.join(", ")) }
        ),
    )
}

fn post_selection() -> Check {
    let ham = load("si_l.json");
    let layout = QubitLayout::new(&ham, &QubitOrdering::default()).unwrap();
    let sector = layout.hf_sector();
    let state = StateVector::basis(16, layout.hf_determinant());
    let shots = 10_000u64;
    let dist = sample(&state, shots, 2718, 1.0).unwrap();
    let kept = post_select(&dist, layout.sector_filter(sector));
    let p0 = 4900.0 / 65536.0;
    let sigma = (p0 * (1.0 - p0) / shots as f64).sqrt();
    let fraction = kept.total_shots as f64 / shots as f64;
    let z = (fraction - p0) / sigma;
    let sel = select_subspace(&kept, 50, true).unwrap();
    let all_in_sector = kept.counts.keys().chain(&sel.determinants).all(|&d| {
        let s = layout.sector_of(d);
        s.n_electrons == 8 && s.two_sz == 0
    });
    check(
        z.abs() <= 5.0 && all_in_sector && sel.len() == 50,
        format!("retained {fraction:.4} vs {p0:.4} ({z:+.2} sigma); all {} retained outcomes in (8, 0): {all_in_sector}", kept.counts.len()),
    )
}

fn tree(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(path.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn determinism(root: &Path) -> Check {
    let body = r#"
mode = "qsci"
[sampling]
kind = "shots"
r = 50
n_shots = 10000
seed = 11
depolarize_p = 0.1
[vqe]
max_iterations = 25
use_iteration = 25
seed = 5
[history]
iterations = [0, 25]
r_values = [10, 50]
"#;
    let inputs = [fixture("si_l.json"), fixture("hubbard_dimer.json")];
    let mut trees = Vec::new();
    for run in ["a", "b"] {
        let base = root.join(run);
        fs::create_dir_all(&base).unwrap();
        let (cfg, text) = run_config(&base, &inputs, body);
        assert!(run_pipeline(&cfg, &text).unwrap().all_ok());
        trees.push(tree(&base.join("out")));
    }
    let differing: Vec<String> = trees[0]
        .iter()
        .filter(|(p, b)| trees[1].get(*p) != Some(*b))
        .map(|(p, _)| p.display().to_string())
        .collect();
    let same_keys = trees[0].keys().eq(trees[1].keys());
    check(
        differing.is_empty() && same_keys,
        format!("{} artifacts compared, {} differ{}", trees[0].len(), differing.len(),
            if differing.is_empty() { String::new() } else { format!(": {}", differing.join(", ")) }),
    )
}

fn main() {
    let scratch = tempfile::tempdir().expect("scratch directory");
    let mut suite = Suite { failures: 0 };
    let minutes = |m: u64| Some(Duration::from_secs(60 * m));

    suite.run(1, "exact-oracle equivalence", Some(Duration::from_secs(5)), exact_oracle);
    suite.run(2, "QSCI equals FCI at full R on Si", minutes(2), full_r_equals_fci);
    suite.run(3, "variational and monotonic subspace energies", None, variational_ladders);
    suite.run(4, "Koopmans limit", None, koopmans);

    let mut runs = None;
    suite.run(5, "optimization-history ordering on Si-L", minutes(30), || {
        let r = silicon_runs(scratch.path());
        let out = optimization_history(&r);
        runs = Some(r);
        out
    });
    suite.run(6, "QSE-QSCI(R=50) bands within 10 mHa of QSE-FCI", None, || match &runs {
        Some(r) => band_agreement(r),
        None => Err("silicon runs did not complete".into()),
    });
    suite.run(7, "parameter-shift gradients", None, gradient_check);
    suite.run(8, "divergence suite", None, divergence_suite);
    suite.run(9, "post-selection under full depolarization", None, post_selection);
    suite.run(10, "byte-identical reruns", None, || determinism(&scratch.path().join("determinism")));

    println!("{} of 10 criteria failed", suite.failures);
    if suite.failures > 0 {
        std::process::exit(1);
    }
}
