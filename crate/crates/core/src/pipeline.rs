//! End-to-end band-structure runs driven by a TOML configuration.
//!
//! Each k-point is processed independently: ingest, map to qubits, prepare
//! the VQE state (or skip straight to FCI), select configurations, solve the
//! subspace problem, run both QSE blocks and classify the samples. Artifacts
//! land in `{output_dir}/{k_label}/`; the per-k directory is assembled under
//! a temporary name and renamed into place once complete. A manifest records
//! seeds, thresholds, input hashes and the outcome for every k-point.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diagnostics::{
    bucketed_divergence, histogram, raw_divergence, state_histogram, uniform_histogram,
    weighted_histogram, DivergenceReport, ExcitationClassifier, ExcitationHistogram,
};
use crate::error::{Error, Result};
use crate::hamiltonian::{load_hamiltonian, FermionHamiltonian, KPoint};
use crate::qse::{
    assemble_band_structure, band_energies, conduction_operators, qse_matrices, solve_gevp,
    valence_operators, BandKind, BandStructure, ExcitationOperator, KBands,
};
use crate::qsci::{
    fci_ground_in, post_select, qsci, select_ideal, select_subspace, SubspaceWavefunction,
    DEFAULT_FCI_BUDGET,
};
use crate::qubit::{jordan_wigner, Determinant, GroupedOperator, QubitLayout, QubitOrdering};
use crate::statevector::{sample, AnsatzSpec, SampleDistribution, StateVector};
use crate::vqe::{optimize, InitialParams, OptimizationTrace, VqeConfig, VqeProblem};
use crate::C64;

/// Declared agreement tolerance between QSE-QSCI and QSE-FCI bands.
pub const BAND_AGREEMENT_TOLERANCE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// VQE state, configuration selection, QSCI, QSE.
    Qsci,
    /// Exact sector ground state fed to QSE.
    FciReference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SamplingConfig {
    /// The `r` largest amplitudes of the simulated state.
    Ideal { r: usize },
    /// The `r` most frequent outcomes of `n_shots` draws.
    Shots {
        r: usize,
        n_shots: u64,
        seed: u64,
        #[serde(default)]
        depolarize_p: f64,
    },
}

impl SamplingConfig {
    pub fn r(&self) -> usize {
        match *self {
            SamplingConfig::Ideal { r } | SamplingConfig::Shots { r, .. } => r,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VqeSettings {
    #[serde(default = "defaults::depth")]
    pub depth: usize,
    #[serde(default = "defaults::lambda_n")]
    pub lambda_n: f64,
    #[serde(default = "defaults::lambda_s")]
    pub lambda_s: f64,
    #[serde(default = "defaults::max_iterations")]
    pub max_iterations: usize,
    /// Iteration whose parameters feed the sampler.
    #[serde(default = "defaults::max_iterations")]
    pub use_iteration: usize,
    #[serde(default)]
    pub snapshot_iterations: Vec<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "defaults::spread")]
    pub init_spread: f64,
    #[serde(default = "defaults::gradient_tolerance")]
    pub gradient_tolerance: f64,
}

impl Default for VqeSettings {
    fn default() -> Self {
        Self {
            depth: defaults::depth(),
            lambda_n: defaults::lambda_n(),
            lambda_s: defaults::lambda_s(),
            max_iterations: defaults::max_iterations(),
            use_iteration: defaults::max_iterations(),
            snapshot_iterations: Vec::new(),
            seed: 0,
            init_spread: defaults::spread(),
            gradient_tolerance: defaults::gradient_tolerance(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QseSettings {
    #[serde(default = "defaults::epsilon")]
    pub epsilon: f64,
    /// Plot reference recorded in the manifest; band files always hold raw
    /// energies.
    #[serde(default)]
    pub reference: EnergyReference,
}

impl Default for QseSettings {
    fn default() -> Self {
        Self {
            epsilon: defaults::epsilon(),
            reference: EnergyReference::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnergyReference {
    #[default]
    Absolute,
    ValenceBandMaximum,
}

/// QSCI energies over a grid of snapshot iterations and subspace sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistorySettings {
    pub iterations: Vec<usize>,
    pub r_values: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub hamiltonians: Vec<PathBuf>,
    pub mode: Mode,
    pub output_dir: PathBuf,
    pub sampling: SamplingConfig,
    #[serde(default = "defaults::yes")]
    pub post_select: bool,
    #[serde(default)]
    pub ordering: QubitOrdering,
    #[serde(default)]
    pub vqe: VqeSettings,
    #[serde(default)]
    pub qse: QseSettings,
    #[serde(default)]
    pub history: Option<HistorySettings>,
    /// Labels expected on the band path; missing ones produce warnings.
    #[serde(default)]
    pub declared_path: Vec<String>,
    #[serde(default = "defaults::fci_budget")]
    pub fci_budget: usize,
    /// Threads used to process k-points concurrently.
    #[serde(default = "defaults::workers")]
    pub workers: usize,
}

mod defaults {
    pub fn depth() -> usize {
        3
    }
    pub fn lambda_n() -> f64 {
        0.5
    }
    pub fn lambda_s() -> f64 {
        0.2
    }
    pub fn max_iterations() -> usize {
        400
    }
    pub fn spread() -> f64 {
        crate::vqe::DEFAULT_INIT_SPREAD
    }
    pub fn gradient_tolerance() -> f64 {
        1e-8
    }
    pub fn epsilon() -> f64 {
        crate::qse::DEFAULT_OVERLAP_THRESHOLD
    }
    pub fn yes() -> bool {
        true
    }
    pub fn fci_budget() -> usize {
        crate::qsci::DEFAULT_FCI_BUDGET
    }
    pub fn workers() -> usize {
        1
    }
}

impl RunConfig {
    /// Parses a configuration; relative paths resolve against `base_dir`.
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Schema {
            location: match e.span() {
                Some(span) => format!("run configuration bytes {}..{}", span.start, span.end),
                None => "run configuration".into(),
            },
            message: e.message().to_string(),
        })?;
        for p in &mut cfg.hamiltonians {
            if p.is_relative() {
                *p = base_dir.join(&*p);
            }
        }
        if cfg.output_dir.is_relative() {
            cfg.output_dir = base_dir.join(&cfg.output_dir);
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("serializable configuration")
    }

    pub fn validate(&self) -> Result<()> {
        if self.hamiltonians.is_empty() {
            return Err(Error::Configuration("no Hamiltonian files listed".into()));
        }
        if let Some(missing) = self.hamiltonians.iter().find(|p| !p.is_file()) {
            return Err(Error::Configuration(format!(
                "Hamiltonian file {} does not exist",
                missing.display()
            )));
        }
        if self.sampling.r() == 0 {
            return Err(Error::Configuration("R must be at least 1".into()));
        }
        if let SamplingConfig::Shots {
            n_shots,
            depolarize_p,
            ..
        } = self.sampling
        {
            if n_shots == 0 {
                return Err(Error::Configuration("n_shots must be positive".into()));
            }
            if !(0.0..=1.0).contains(&depolarize_p) {
                return Err(Error::Configuration(format!(
                    "depolarize_p {depolarize_p} is outside [0, 1]"
                )));
            }
        }
        if self.vqe.use_iteration > self.vqe.max_iterations {
            return Err(Error::Configuration(format!(
                "use_iteration {} exceeds max_iterations {}",
                self.vqe.use_iteration, self.vqe.max_iterations
            )));
        }
        if let Some(h) = &self.history {
            if h.iterations.iter().any(|&i| i > self.vqe.max_iterations) {
                return Err(Error::Configuration(
                    "history iterations must not exceed max_iterations".into(),
                ));
            }
            if h.r_values.contains(&0) {
                return Err(Error::Configuration("history R values must be positive".into()));
            }
        }
        if !(self.qse.epsilon > 0.0) {
            return Err(Error::Configuration("QSE epsilon must be positive".into()));
        }
        if self.workers == 0 {
            return Err(Error::Configuration("workers must be at least 1".into()));
        }
        Ok(())
    }

    fn vqe_config(&self, n_qubits: usize, n_target: usize) -> VqeConfig {
        let mut snapshots: BTreeSet<usize> = self.vqe.snapshot_iterations.iter().copied().collect();
        snapshots.insert(self.vqe.use_iteration);
        if let Some(h) = &self.history {
            snapshots.extend(h.iterations.iter().copied());
        }
        VqeConfig {
            ansatz: AnsatzSpec::ladder(n_qubits, self.vqe.depth),
            lambda_n: self.vqe.lambda_n,
            n_target,
            lambda_s: self.vqe.lambda_s,
            max_iterations: self.vqe.max_iterations,
            snapshot_iterations: snapshots.into_iter().collect(),
            initial_params: InitialParams::Seeded {
                seed: self.vqe.seed,
                spread: self.vqe.init_spread,
            },
            gradient_tolerance: self.vqe.gradient_tolerance,
        }
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Per-k record written to `summary.json` and read back by [`compare_runs`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSummary {
    pub k_point: KPoint,
    pub mode: Mode,
    pub hf_energy: f64,
    pub ground_energy: f64,
    pub fci_energy: Option<f64>,
    pub subspace_size: usize,
    pub degenerate_ground: bool,
    pub valence: Vec<f64>,
    pub conduction: Vec<f64>,
    pub discarded_modes: usize,
    pub histogram: Vec<f64>,
    pub divergences: BTreeMap<String, DivergenceReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KStatus {
    pub label: String,
    pub input: PathBuf,
    pub input_sha256: String,
    pub ok: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_sha256: String,
    pub mode: Mode,
    pub sampling: SamplingConfig,
    pub post_select: bool,
    pub vqe: VqeSettings,
    pub qse: QseSettings,
    pub fci_budget: usize,
    pub band_agreement_tolerance: f64,
    pub k_points: Vec<KStatus>,
    pub band_gap: Option<f64>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub manifest: Manifest,
    pub summaries: Vec<KSummary>,
    pub bands: Option<BandStructure>,
}

impl RunReport {
    pub fn all_ok(&self) -> bool {
        self.manifest.k_points.iter().all(|k| k.ok)
    }
}

fn write(dir: &Path, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| Error::io(path, e))
}

/// Writes `contents` next to `path` and renames it over the target.
fn write_atomic(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    let tmp = path.with_extension("partial");
    fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn matrix_json(m: &DMatrix<C64>) -> Vec<Vec<[f64; 2]>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
        .collect()
}

#[derive(Serialize)]
struct QseFile<'a> {
    kind: BandKind,
    operators: Vec<OperatorEntry<'a>>,
    h: Vec<Vec<[f64; 2]>>,
    s: Vec<Vec<[f64; 2]>>,
    eigenvalues: Vec<f64>,
    discarded: usize,
    band_energies: Vec<f64>,
}

#[derive(Serialize)]
struct OperatorEntry<'a> {
    spin_orbital: usize,
    qubit: usize,
    k_label: &'a str,
}

struct Stage<'a> {
    cfg: &'a RunConfig,
    ham: FermionHamiltonian,
    layout: QubitLayout,
    op: GroupedOperator,
    dir: PathBuf,
}

/// Runs one k-point into `dir` (which must exist).
fn run_k_point(cfg: &RunConfig, ham: FermionHamiltonian, dir: &Path) -> Result<KSummary> {
    let layout = QubitLayout::new(&ham, &cfg.ordering)?;
    let qubit_ham = jordan_wigner(&ham, &layout);
    let stage = Stage {
        cfg,
        op: qubit_ham.grouped(),
        layout,
        ham,
        dir: dir.to_path_buf(),
    };
    let sector = stage.layout.hf_sector();
    let classifier = ExcitationClassifier::new(&stage.layout);
    let hf_energy = stage.ham.hf_reference_energy()?;
    let n_qubits = stage.layout.n_qubits();

    let fci = match fci_ground_in(&stage.op, &stage.layout, sector, cfg.fci_budget) {
        Ok(wf) => Some(wf),
        Err(Error::Capacity { .. }) if cfg.mode == Mode::Qsci => None,
        Err(e) => return Err(e),
    };
    if let Some(f) = &fci {
        write(dir, "fci_wavefunction.json", f.to_json(n_qubits))?;
    }
    let fci_histogram = fci.as_ref().map(|f| {
        weighted_histogram(f.amplitudes().map(|(d, c)| (d, c.norm_sqr())), &classifier)
    });

    let (psi, sampled_histogram, raw_sampled): (
        SubspaceWavefunction,
        ExcitationHistogram,
        BTreeMap<Determinant, f64>,
    ) = match cfg.mode {
        Mode::FciReference => {
            let f = fci.clone().expect("FCI is required in reference mode");
            let raw = f.amplitudes().map(|(d, c)| (d, c.norm_sqr())).collect();
            (f, fci_histogram.clone().expect("FCI histogram"), raw)
        }
        Mode::Qsci => {
            let vqe_cfg = cfg.vqe_config(n_qubits, stage.ham.n_electrons());
            let problem = VqeProblem::new(
                &qubit_ham,
                stage.layout.qubit_spins(),
                stage.layout.hf_determinant(),
                &vqe_cfg,
            )?;
            let trace = optimize(&problem, &vqe_cfg)?;
            write(dir, "vqe_trace.csv", trace.to_csv())?;
            write(dir, "vqe_snapshots.json", trace.snapshots_json())?;
            let state = problem.state(&trace.snapshots[&cfg.vqe.use_iteration])?;
            if let Some(h) = &cfg.history {
                write(dir, "qsci_history.csv", qsci_history(&stage, &problem, &trace, h, fci.as_ref())?)?;
            }
            let (psi, hist, raw) = select_and_solve(&stage, &state)?;
            (psi, hist, raw)
        }
    };
    write(dir, "wavefunction.json", psi.to_json(n_qubits))?;

    let k = stage.ham.k_point().clone();
    let mut discarded = 0;
    let mut bands = BTreeMap::new();
    for (kind, ops) in [
        (BandKind::Valence, valence_operators(&stage.layout, &k)),
        (BandKind::Conduction, conduction_operators(&stage.layout, &k)),
    ] {
        let energies = if ops.is_empty() {
            Vec::new()
        } else {
            let (energies, n_discarded) = qse_block(&stage, &psi, &ops, kind)?;
            discarded += n_discarded;
            energies
        };
        bands.insert(kind, energies);
    }
    let kbands = KBands {
        k_point: k.clone(),
        reference_energy: psi.energy,
        valence: bands[&BandKind::Valence].clone(),
        conduction: bands[&BandKind::Conduction].clone(),
        discarded_modes: discarded,
    };
    let single = assemble_band_structure(vec![kbands.clone()], &[])?;
    write(dir, "bands.csv", single.to_csv())?;
    write(dir, "bands.json", single.to_json())?;

    let uniform = uniform_histogram(n_qubits, &classifier);
    let mut divergences = BTreeMap::new();
    divergences.insert(
        "bucketed_vs_uniform".to_string(),
        bucketed_divergence(&sampled_histogram, &uniform),
    );
    if let (Some(f), Some(fh)) = (&fci, &fci_histogram) {
        divergences.insert("bucketed_vs_fci".into(), bucketed_divergence(&sampled_histogram, fh));
        let raw_fci: BTreeMap<Determinant, f64> =
            f.amplitudes().map(|(d, c)| (d, c.norm_sqr())).collect();
        divergences.insert("raw_vs_fci".into(), raw_divergence(&raw_sampled, &raw_fci));
    }
    let mut diag = String::from("{\n  \"sampled\": ");
    diag.push_str(&indent(&sampled_histogram.to_json()));
    diag.push_str(",\n  \"uniform\": ");
    diag.push_str(&indent(&uniform.to_json()));
    if let Some(fh) = &fci_histogram {
        diag.push_str(",\n  \"fci\": ");
        diag.push_str(&indent(&fh.to_json()));
    }
    diag.push_str(",\n  \"divergences\": ");
    diag.push_str(&indent(
        &serde_json::to_string_pretty(&divergences).expect("serializable divergences"),
    ));
    diag.push_str("\n}\n");
    write(dir, "diagnostics.json", diag)?;

    let summary = KSummary {
        k_point: k,
        mode: cfg.mode,
        hf_energy,
        ground_energy: psi.energy,
        fci_energy: fci.as_ref().map(|f| f.energy),
        subspace_size: psi.selection.len(),
        degenerate_ground: psi.degenerate,
        valence: kbands.valence,
        conduction: kbands.conduction,
        discarded_modes: discarded,
        histogram: sampled_histogram.frequencies(),
        divergences,
    };
    write(
        dir,
        "summary.json",
        serde_json::to_string_pretty(&summary).expect("serializable summary"),
    )?;
    Ok(summary)
}

fn indent(json: &str) -> String {
    json.replace('\n', "\n  ")
}

fn select_and_solve(
    stage: &Stage,
    state: &StateVector,
) -> Result<(SubspaceWavefunction, ExcitationHistogram, BTreeMap<Determinant, f64>)> {
    let cfg = stage.cfg;
    let filter = stage.layout.sector_filter(stage.layout.hf_sector());
    let classifier = ExcitationClassifier::new(&stage.layout);
    match cfg.sampling {
        SamplingConfig::Ideal { r } => {
            let selection = select_ideal(state, r, cfg.post_select.then_some(filter))?;
            let psi = qsci(selection, &stage.op)?;
            let raw = state
                .amplitudes()
                .iter()
                .enumerate()
                .filter(|(_, z)| z.norm_sqr() > 0.0)
                .map(|(b, z)| (Determinant(b as u64), z.norm_sqr()))
                .collect();
            Ok((psi, state_histogram(state, &classifier), raw))
        }
        SamplingConfig::Shots {
            r,
            n_shots,
            seed,
            depolarize_p,
        } => {
            let dist = sample(state, n_shots, seed, depolarize_p)?;
            write(&stage.dir, "samples.json", dist.to_json())?;
            let kept: SampleDistribution = if cfg.post_select {
                post_select(&dist, filter)
            } else {
                dist.clone()
            };
            let selection = select_subspace(&kept, r, cfg.post_select)?;
            let psi = qsci(selection, &stage.op)?;
            let raw = dist.frequencies();
            Ok((psi, histogram(&dist, &classifier), raw))
        }
    }
}

fn qse_block(
    stage: &Stage,
    psi: &SubspaceWavefunction,
    ops: &[ExcitationOperator],
    kind: BandKind,
) -> Result<(Vec<f64>, usize)> {
    let m = qse_matrices(psi, &stage.op, ops)?;
    let sol = solve_gevp(&m.h, &m.s, stage.cfg.qse.epsilon)?;
    let energies = band_energies(psi.energy, &sol.eigenvalues, kind);
    let file = QseFile {
        kind,
        operators: ops
            .iter()
            .map(|o| OperatorEntry {
                spin_orbital: o.spin_orbital,
                qubit: o.qubit,
                k_label: &o.k_label,
            })
            .collect(),
        h: matrix_json(&m.h),
        s: matrix_json(&m.s),
        eigenvalues: sol.eigenvalues.clone(),
        discarded: sol.discarded,
        band_energies: energies.clone(),
    };
    write(
        &stage.dir,
        &format!("qse_{}.json", kind.as_str()),
        serde_json::to_string_pretty(&file).expect("serializable QSE matrices"),
    )?;
    Ok((energies, sol.discarded))
}

/// `iteration,R,post_selected,energy,delta_fci` over every requested pair.
fn qsci_history(
    stage: &Stage,
    problem: &VqeProblem,
    trace: &OptimizationTrace,
    settings: &HistorySettings,
    fci: Option<&SubspaceWavefunction>,
) -> Result<String> {
    let filter = stage.layout.sector_filter(stage.layout.hf_sector());
    let mut out = String::from("iteration,R,post_selected,energy,delta_fci\n");
    for &iteration in &settings.iterations {
        let state = problem.state(&trace.snapshots[&iteration])?;
        for &r in &settings.r_values {
            for post in [true, false] {
                let selection = select_ideal(&state, r, post.then_some(filter))?;
                let energy = qsci(selection, &stage.op)?.energy;
                let delta = fci.map(|f| (energy - f.energy).to_string()).unwrap_or_default();
                writeln!(out, "{iteration},{r},{post},{energy},{delta}").expect("writing to a string");
            }
        }
    }
    Ok(out)
}

/// Runs every k-point and writes the manifest plus the assembled bands.
/// Configuration problems are returned as errors before anything runs;
/// failures inside a k-point are recorded and do not stop the others.
pub fn run_pipeline(cfg: &RunConfig, config_text: &str) -> Result<RunReport> {
    cfg.validate()?;
    let mut inputs = Vec::new();
    for path in &cfg.hamiltonians {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let loaded = load_hamiltonian(path);
        let label = match &loaded {
            Ok(h) => h.k_point().label.clone(),
            Err(_) => path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "unknown".into()),
        };
        inputs.push((path.clone(), sha256_hex(&bytes), label, loaded.map_err(|e| e.to_string())));
    }
    // Each k-point owns the output directory named after its label.
    let mut labels = BTreeSet::new();
    for (path, _, label, _) in &inputs {
        if !labels.insert(label.as_str()) {
            return Err(Error::Configuration(format!(
                "k-point label {label} of {} is used by another input",
                path.display()
            )));
        }
    }
    fs::create_dir_all(&cfg.output_dir).map_err(|e| Error::io(&cfg.output_dir, e))?;

    let process = |(path, digest, label, loaded): &(
        PathBuf,
        String,
        String,
        std::result::Result<FermionHamiltonian, String>,
    )|
     -> (KStatus, Option<KSummary>) {
        let run = |ham: FermionHamiltonian| -> Result<KSummary> {
            let final_dir = cfg.output_dir.join(label);
            let work_dir = cfg.output_dir.join(format!(".{label}.partial"));
            if work_dir.exists() {
                fs::remove_dir_all(&work_dir).map_err(|e| Error::io(&work_dir, e))?;
            }
            fs::create_dir_all(&work_dir).map_err(|e| Error::io(&work_dir, e))?;
            let summary = run_k_point(cfg, ham, &work_dir)?;
            if final_dir.exists() {
                fs::remove_dir_all(&final_dir).map_err(|e| Error::io(&final_dir, e))?;
            }
            fs::rename(&work_dir, &final_dir).map_err(|e| Error::io(&final_dir, e))?;
            Ok(summary)
        };
        let outcome = match loaded {
            Ok(ham) => run(ham.clone()).map_err(|e| e.to_string()),
            Err(message) => Err(message.clone()),
        };
        let status = KStatus {
            label: label.clone(),
            input: path.clone(),
            input_sha256: digest.clone(),
            ok: outcome.is_ok(),
            error: outcome.as_ref().err().cloned(),
        };
        (status, outcome.ok())
    };

    let results: Vec<(KStatus, Option<KSummary>)> = if cfg.workers > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .map_err(|e| Error::Configuration(format!("cannot start worker pool: {e}")))?;
        pool.install(|| {
            use rayon::prelude::*;
            inputs.par_iter().map(process).collect()
        })
    } else {
        inputs.iter().map(process).collect()
    };

    let mut warnings = Vec::new();
    let summaries: Vec<KSummary> = results.iter().filter_map(|(_, s)| s.clone()).collect();
    let bands = if summaries.is_empty() {
        None
    } else {
        let per_k = summaries
            .iter()
            .map(|s| KBands {
                k_point: s.k_point.clone(),
                reference_energy: s.ground_energy,
                valence: s.valence.clone(),
                conduction: s.conduction.clone(),
                discarded_modes: s.discarded_modes,
            })
            .collect();
        let b = assemble_band_structure(per_k, &cfg.declared_path)?;
        write_atomic(&cfg.output_dir.join("bands.csv"), b.to_csv())?;
        write_atomic(&cfg.output_dir.join("bands.json"), b.to_json())?;
        warnings.extend(b.warnings.iter().cloned());
        if b.gap_negative {
            warnings.push("band gap is negative".into());
        }
        Some(b)
    };
    let manifest = Manifest {
        config_sha256: sha256_hex(config_text.as_bytes()),
        mode: cfg.mode,
        sampling: cfg.sampling.clone(),
        post_select: cfg.post_select,
        vqe: cfg.vqe.clone(),
        qse: cfg.qse.clone(),
        fci_budget: cfg.fci_budget,
        band_agreement_tolerance: BAND_AGREEMENT_TOLERANCE,
        k_points: results.into_iter().map(|(s, _)| s).collect(),
        band_gap: bands.as_ref().and_then(|b| b.gap),
        warnings,
    };
    write_atomic(
        &cfg.output_dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest).expect("serializable manifest"),
    )?;
    Ok(RunReport {
        manifest,
        summaries,
        bands,
    })
}

/// Loads the manifest and per-k summaries of a finished run.
pub fn load_run(dir: impl AsRef<Path>) -> Result<(Manifest, Vec<KSummary>)> {
    let dir = dir.as_ref();
    let read = |p: PathBuf| fs::read_to_string(&p).map_err(|e| Error::io(p, e));
    let parse_err = |what: &str, e: serde_json::Error| Error::Schema {
        location: format!("{what} line {} column {}", e.line(), e.column()),
        message: e.to_string(),
    };
    let manifest: Manifest = serde_json::from_str(&read(dir.join("manifest.json"))?)
        .map_err(|e| parse_err("manifest", e))?;
    let mut summaries = Vec::new();
    for k in manifest.k_points.iter().filter(|k| k.ok) {
        let text = read(dir.join(&k.label).join("summary.json"))?;
        summaries.push(serde_json::from_str(&text).map_err(|e| parse_err("summary", e))?);
    }
    Ok((manifest, summaries))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KComparison {
    pub label: String,
    /// `E_a - E_b` for the subspace ground energies.
    pub energy_delta: f64,
    pub a_minus_fci: Option<f64>,
    pub b_minus_fci: Option<f64>,
    pub valence_deltas: Vec<f64>,
    pub conduction_deltas: Vec<f64>,
    pub max_band_delta: f64,
    /// Jensen–Shannon divergence between the two excitation histograms.
    pub histogram_js: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareReport {
    pub k_points: Vec<KComparison>,
    pub warnings: Vec<String>,
}

fn deltas(a: &[f64], b: &[f64], label: &str, kind: &str, warnings: &mut Vec<String>) -> Vec<f64> {
    if a.len() != b.len() {
        warnings.push(format!(
            "{label}: {kind} band counts differ ({} vs {})",
            a.len(),
            b.len()
        ));
    }
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Per-k energy and band differences between two runs.
pub fn compare_summaries(a: &[KSummary], b: &[KSummary]) -> CompareReport {
    let by_label = |s: &[KSummary]| -> BTreeMap<String, KSummary> {
        s.iter().map(|k| (k.k_point.label.clone(), k.clone())).collect()
    };
    let (ma, mb) = (by_label(a), by_label(b));
    let mut warnings = Vec::new();
    for label in ma.keys().filter(|l| !mb.contains_key(*l)) {
        warnings.push(format!("k-point {label} only in the first run"));
    }
    for label in mb.keys().filter(|l| !ma.contains_key(*l)) {
        warnings.push(format!("k-point {label} only in the second run"));
    }
    let mut k_points: Vec<KComparison> = ma
        .iter()
        .filter_map(|(label, ka)| mb.get(label).map(|kb| (label, ka, kb)))
        .map(|(label, ka, kb)| {
            let valence_deltas = deltas(&ka.valence, &kb.valence, label, "valence", &mut warnings);
            let conduction_deltas =
                deltas(&ka.conduction, &kb.conduction, label, "conduction", &mut warnings);
            let max_band_delta = valence_deltas
                .iter()
                .chain(&conduction_deltas)
                .fold(0.0f64, |m, d| m.max(d.abs()));
            let histogram_js = if ka.histogram.len() == kb.histogram.len() {
                crate::diagnostics::js_divergence(&ka.histogram, &kb.histogram)
            } else {
                f64::NAN
            };
            KComparison {
                label: label.clone(),
                energy_delta: ka.ground_energy - kb.ground_energy,
                a_minus_fci: ka.fci_energy.map(|f| ka.ground_energy - f),
                b_minus_fci: kb.fci_energy.map(|f| kb.ground_energy - f),
                valence_deltas,
                conduction_deltas,
                max_band_delta,
                histogram_js,
            }
        })
        .collect();
    k_points.sort_by(|x, y| {
        let d = |l: &str| ma[l].k_point.path_distance;
        d(&x.label).total_cmp(&d(&y.label)).then(x.label.cmp(&y.label))
    });
    CompareReport { k_points, warnings }
}

pub fn compare_runs(a: impl AsRef<Path>, b: impl AsRef<Path>) -> Result<CompareReport> {
    let (_, sa) = load_run(a)?;
    let (_, sb) = load_run(b)?;
    Ok(compare_summaries(&sa, &sb))
}

impl CompareReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable comparison")
    }
}

/// Convenience for callers that only need the exact ground state of one
/// Hamiltonian with the run's ordering and budget.
pub fn exact_ground(ham: &FermionHamiltonian, ordering: &QubitOrdering) -> Result<SubspaceWavefunction> {
    let layout = QubitLayout::new(ham, ordering)?;
    let op = jordan_wigner(ham, &layout).grouped();
    fci_ground_in(&op, &layout, layout.hf_sector(), DEFAULT_FCI_BUDGET)
}
