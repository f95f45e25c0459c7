use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use qsebands::diagnostics::{
    bucketed_divergence, histogram, raw_divergence, uniform_histogram, weighted_histogram,
    ExcitationClassifier,
};
use qsebands::hamiltonian::{check_momentum_conservation, load_hamiltonian, FermionHamiltonian, KPoint};
use qsebands::pipeline::{compare_runs, run_pipeline, RunConfig};
use qsebands::qse::{assemble_band_structure, qse_bands, BandStructure, KBands, DEFAULT_OVERLAP_THRESHOLD};
use qsebands::qsci::{
    fci_ground_in, post_select, qsci, select_ideal, select_subspace, SubspaceWavefunction,
    DEFAULT_FCI_BUDGET,
};
use qsebands::qubit::{jordan_wigner, QubitHamiltonian, QubitLayout, QubitOrdering};
use qsebands::statevector::{sample, AnsatzSpec, SampleDistribution};
use qsebands::vqe::{optimize, InitialParams, OptimizationTrace, VqeConfig, VqeProblem};

#[derive(Parser)]
#[command(name = "qsebands", version, about = "QSCI ground states and QSE quasiparticle bands")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load and check a Hamiltonian file.
    Validate {
        hamiltonian: PathBuf,
        /// Also write the qubit Hamiltonian as text.
        #[arg(long)]
        dump_qubit: Option<PathBuf>,
    },
    /// Optimize the ansatz and write the trace and parameter snapshots.
    Vqe {
        hamiltonian: PathBuf,
        #[command(flatten)]
        ansatz: AnsatzArgs,
        #[arg(long, default_value_t = 400)]
        max_iterations: usize,
        #[arg(long, value_delimiter = ',', default_values_t = [0, 400])]
        snapshots: Vec<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "vqe")]
        out: PathBuf,
    },
    /// Sample the ansatz state at a stored snapshot.
    Sample {
        hamiltonian: PathBuf,
        #[command(flatten)]
        state: StateArgs,
        #[arg(long, default_value_t = 10_000)]
        shots: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.0)]
        depolarize: f64,
        #[arg(long, default_value = "samples.json")]
        out: PathBuf,
    },
    /// Diagonalize in the most frequent (or largest-amplitude) configurations.
    Qsci {
        hamiltonian: PathBuf,
        #[arg(long, default_value_t = 50)]
        r: usize,
        /// Sample file to select from.
        #[arg(long, conflicts_with_all = ["fci", "snapshots"])]
        samples: Option<PathBuf>,
        /// Solve the full sector instead.
        #[arg(long)]
        fci: bool,
        /// Snapshot JSON written by `vqe`; selects the largest amplitudes.
        #[arg(long)]
        snapshots: Option<PathBuf>,
        #[arg(long, default_value_t = 400)]
        iteration: usize,
        #[arg(long, default_value_t = 3)]
        depth: usize,
        #[arg(long)]
        no_post_select: bool,
        #[arg(long, default_value = "wavefunction.json")]
        out: PathBuf,
    },
    /// Valence and conduction energies on a stored wave function.
    Qse {
        hamiltonian: PathBuf,
        #[arg(long)]
        wavefunction: PathBuf,
        #[arg(long, default_value_t = DEFAULT_OVERLAP_THRESHOLD)]
        epsilon: f64,
        #[arg(long, default_value = "kbands.json")]
        out: PathBuf,
    },
    /// Assemble per-k QSE results into band CSV/JSON.
    Band {
        kbands: Vec<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        path: Vec<String>,
        /// Subtract the valence-band maximum in the printed table.
        #[arg(long)]
        relative_to_vbm: bool,
        #[arg(long, default_value = "bands")]
        out: PathBuf,
    },
    /// Excitation-level histogram and divergences of a sample file.
    Diag {
        hamiltonian: PathBuf,
        #[arg(long)]
        samples: PathBuf,
        /// Second sample file to compare against.
        #[arg(long)]
        against: Option<PathBuf>,
        #[arg(long, default_value = "diagnostics.json")]
        out: PathBuf,
    },
    /// Run the whole pipeline from a TOML configuration.
    Run { config: PathBuf },
    /// Compare two finished runs.
    Compare {
        run_a: PathBuf,
        run_b: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Clone)]
struct AnsatzArgs {
    #[arg(long, default_value_t = 3)]
    depth: usize,
    #[arg(long, default_value_t = 0.5)]
    lambda_n: f64,
    #[arg(long, default_value_t = 0.2)]
    lambda_s: f64,
}

#[derive(Args, Clone)]
struct StateArgs {
    /// Snapshot JSON written by `vqe`.
    #[arg(long)]
    snapshots: PathBuf,
    #[arg(long, default_value_t = 400)]
    iteration: usize,
    #[arg(long, default_value_t = 3)]
    depth: usize,
}

struct Loaded {
    ham: FermionHamiltonian,
    layout: QubitLayout,
    qubit: QubitHamiltonian,
}

fn load(path: &Path) -> Result<Loaded> {
    let ham = load_hamiltonian(path)?;
    let layout = QubitLayout::new(&ham, &QubitOrdering::default())?;
    let qubit = jordan_wigner(&ham, &layout);
    Ok(Loaded { ham, layout, qubit })
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn snapshot_state(l: &Loaded, args: &StateArgs) -> Result<qsebands::statevector::StateVector> {
    let snapshots = OptimizationTrace::parse_snapshots(&read(&args.snapshots)?)?;
    let Some(params) = snapshots.get(&args.iteration) else {
        bail!("no snapshot for iteration {} in {}", args.iteration, args.snapshots.display());
    };
    let mut cfg = VqeConfig::standard(
        AnsatzSpec::ladder(l.layout.n_qubits(), args.depth),
        l.ham.n_electrons(),
        0,
    );
    cfg.max_iterations = args.iteration;
    cfg.snapshot_iterations.clear();
    let problem = VqeProblem::new(&l.qubit, l.layout.qubit_spins(), l.layout.hf_determinant(), &cfg)?;
    Ok(problem.state(params)?)
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::Validate {
            hamiltonian,
            dump_qubit,
        } => {
            let l = load(&hamiltonian)?;
            let report = check_momentum_conservation(&l.ham, &[l.ham.k_point().clone()]);
            println!("k-point          {}", l.ham.k_point().label);
            println!("spin orbitals    {}", l.ham.n_spin_orbitals());
            println!("electrons        {}", l.ham.n_electrons());
            println!("one-body terms   {}", l.ham.one_body().len());
            println!("two-body terms   {}", l.ham.two_body().len());
            println!("HF energy        {:.12}", l.ham.hf_reference_energy()?);
            println!("HF bitstring     {}", l.layout.hf_determinant().to_bitstring(l.layout.n_qubits()));
            println!("Pauli terms      {}", l.qubit.terms().len());
            println!(
                "momentum         {}",
                if report.is_clean() {
                    "conserved".to_string()
                } else {
                    format!("{} violating tuples", report.violations.len())
                }
            );
            if let Some(path) = dump_qubit {
                write(&path, l.qubit.to_text())?;
            }
        }
        Command::Vqe {
            hamiltonian,
            ansatz,
            max_iterations,
            snapshots,
            seed,
            out,
        } => {
            let l = load(&hamiltonian)?;
            let cfg = VqeConfig {
                ansatz: AnsatzSpec::ladder(l.layout.n_qubits(), ansatz.depth),
                lambda_n: ansatz.lambda_n,
                n_target: l.ham.n_electrons(),
                lambda_s: ansatz.lambda_s,
                max_iterations,
                snapshot_iterations: snapshots,
                initial_params: InitialParams::Seeded {
                    seed,
                    spread: qsebands::vqe::DEFAULT_INIT_SPREAD,
                },
                gradient_tolerance: 1e-8,
            };
            let problem = VqeProblem::new(&l.qubit, l.layout.qubit_spins(), l.layout.hf_determinant(), &cfg)?;
            let trace = optimize(&problem, &cfg)?;
            write(&out.join("vqe_trace.csv"), trace.to_csv())?;
            write(&out.join("vqe_snapshots.json"), trace.snapshots_json())?;
            println!(
                "{} iterations, final cost {:.10}, bare energy {:.10}, {:?}",
                trace.iterations(),
                trace.costs.last().copied().unwrap_or(f64::NAN),
                trace.energies.last().copied().unwrap_or(f64::NAN),
                trace.termination
            );
        }
        Command::Sample {
            hamiltonian,
            state,
            shots,
            seed,
            depolarize,
            out,
        } => {
            let l = load(&hamiltonian)?;
            let psi = snapshot_state(&l, &state)?;
            let dist = sample(&psi, shots, seed, depolarize)?;
            write(&out, dist.to_json())?;
            println!("{} distinct outcomes over {} shots", dist.counts.len(), dist.total_shots);
        }
        Command::Qsci {
            hamiltonian,
            r,
            samples,
            fci,
            snapshots,
            iteration,
            depth,
            no_post_select,
            out,
        } => {
            let l = load(&hamiltonian)?;
            let op = l.qubit.grouped();
            let filter = l.layout.sector_filter(l.layout.hf_sector());
            let wf: SubspaceWavefunction = if fci {
                fci_ground_in(&op, &l.layout, l.layout.hf_sector(), DEFAULT_FCI_BUDGET)?
            } else if let Some(path) = samples {
                let dist = SampleDistribution::from_json(&read(&path)?)?;
                let kept = if no_post_select { dist } else { post_select(&dist, filter) };
                qsci(select_subspace(&kept, r, !no_post_select)?, &op)?
            } else if let Some(snapshots) = snapshots {
                let state = StateArgs {
                    snapshots,
                    iteration,
                    depth,
                };
                let psi = snapshot_state(&l, &state)?;
                qsci(select_ideal(&psi, r, (!no_post_select).then_some(filter))?, &op)?
            } else {
                bail!("give one of --samples, --snapshots or --fci");
            };
            write(&out, wf.to_json(l.layout.n_qubits()))?;
            println!(
                "E = {:.12} over {} determinants{}",
                wf.energy,
                wf.selection.len(),
                if wf.degenerate { " (degenerate)" } else { "" }
            );
        }
        Command::Qse {
            hamiltonian,
            wavefunction,
            epsilon,
            out,
        } => {
            let l = load(&hamiltonian)?;
            let (wf, width) = SubspaceWavefunction::from_json(&read(&wavefunction)?)?;
            if width != l.layout.n_qubits() {
                bail!("wave function is {width} qubits wide, Hamiltonian has {}", l.layout.n_qubits());
            }
            let bands = qse_bands(&wf, &l.qubit.grouped(), &l.layout, l.ham.k_point(), epsilon)?;
            write(&out, serde_json::to_string_pretty(&bands)?)?;
            println!("valence    {:?}", bands.valence);
            println!("conduction {:?}", bands.conduction);
        }
        Command::Band {
            kbands,
            path,
            relative_to_vbm,
            out,
        } => {
            let mut per_k = Vec::new();
            for p in &kbands {
                let k: KBands = serde_json::from_str(&read(p)?)
                    .with_context(|| format!("parsing {}", p.display()))?;
                per_k.push(k);
            }
            let bands = assemble_band_structure(per_k, &path)?;
            write(&out.join("bands.csv"), bands.to_csv())?;
            write(&out.join("bands.json"), bands.to_json())?;
            print_bands(&bands, relative_to_vbm);
            for w in &bands.warnings {
                eprintln!("warning: {w}");
            }
        }
        Command::Diag {
            hamiltonian,
            samples,
            against,
            out,
        } => {
            let l = load(&hamiltonian)?;
            let classifier = ExcitationClassifier::new(&l.layout);
            let dist = SampleDistribution::from_json(&read(&samples)?)?;
            let hist = histogram(&dist, &classifier);
            let uniform = uniform_histogram(l.layout.n_qubits(), &classifier);
            let mut report = serde_json::json!({
                "histogram": serde_json::from_str::<serde_json::Value>(&hist.to_json())?,
                "vs_uniform": bucketed_divergence(&hist, &uniform),
            });
            if let Some(other) = against {
                let other = SampleDistribution::from_json(&read(&other)?)?;
                let other_hist = weighted_histogram(
                    other.counts.iter().map(|(&d, &c)| (d, c as f64)),
                    &classifier,
                );
                report["bucketed"] = serde_json::to_value(bucketed_divergence(&hist, &other_hist))?;
                report["raw"] = serde_json::to_value(raw_divergence(&dist.frequencies(), &other.frequencies()))?;
            }
            write(&out, serde_json::to_string_pretty(&report)?)?;
            println!("{}", hist.to_json());
        }
        Command::Run { config } => {
            let text = read(&config)?;
            let base = config.parent().unwrap_or(Path::new("."));
            let cfg = match RunConfig::from_toml(&text, base).and_then(|c| c.validate().map(|_| c)) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return Ok(ExitCode::from(1));
                }
            };
            let report = run_pipeline(&cfg, &text)?;
            for k in &report.manifest.k_points {
                match &k.error {
                    None => println!("{:<8} ok", k.label),
                    Some(e) => println!("{:<8} FAILED: {e}", k.label),
                }
            }
            if let Some(bands) = &report.bands {
                print_bands(bands, false);
            }
            return Ok(if report.all_ok() { ExitCode::SUCCESS } else { ExitCode::from(2) });
        }
        Command::Compare { run_a, run_b, out } => {
            let report = compare_runs(&run_a, &run_b)?;
            for k in &report.k_points {
                println!(
                    "{:<8} dE = {:+.3e}  max band delta = {:.3e}",
                    k.label, k.energy_delta, k.max_band_delta
                );
            }
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            if let Some(path) = out {
                write(&path, report.to_json())?;
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn print_bands(bands: &BandStructure, relative_to_vbm: bool) {
    let shift = if relative_to_vbm {
        bands
            .k_points
            .iter()
            .flat_map(|k| k.valence.iter().copied())
            .fold(f64::NEG_INFINITY, f64::max)
    } else {
        0.0
    };
    let shift = if shift.is_finite() { shift } else { 0.0 };
    for KBands {
        k_point: KPoint { label, .. },
        valence,
        conduction,
        ..
    } in &bands.k_points
    {
        let fmt = |v: &[f64]| v.iter().map(|e| format!("{:.6}", e - shift)).collect::<Vec<_>>().join(" ");
        println!("{label:<8} valence [{}]  conduction [{}]", fmt(valence), fmt(conduction));
    }
    if let Some(gap) = bands.gap {
        println!("gap {gap:.6} Ha");
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
