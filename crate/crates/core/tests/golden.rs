//! Frozen FCI and FCI-based QSE results for the bundled silicon k-points.

mod common;

use common::*;
use qsebands::qse::qse_bands;
use qsebands::qsci::fci_ground;
use qsebands::qubit::{jordan_wigner, QubitLayout, QubitOrdering};
use std::collections::BTreeMap;

const TOLERANCE: f64 = 1e-8;

fn golden_bands() -> BTreeMap<(String, String), Vec<f64>> {
    let text = std::fs::read_to_string(fixture("golden/si_fci_qse_bands.csv")).unwrap();
    let mut out: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let list = out.entry((f[0].to_string(), f[2].to_string())).or_default();
        assert_eq!(list.len(), f[3].parse::<usize>().unwrap());
        list.push(f[4].parse().unwrap());
    }
    out
}

#[test]
fn silicon_fci_and_bands_match_frozen_values() {
    let energies: BTreeMap<String, f64> =
        serde_json::from_str(&std::fs::read_to_string(fixture("golden/si_fci_energies.json")).unwrap()).unwrap();
    let bands = golden_bands();
    for (file, label) in [("si_l.json", "L"), ("si_gamma.json", "Gamma"), ("si_x.json", "X")] {
        let ham = load(file);
        assert_eq!(ham.k_point().label, label);
        let layout = QubitLayout::new(&ham, &QubitOrdering::default()).unwrap();
        let op = jordan_wigner(&ham, &layout).grouped();
        let fci = fci_ground(&ham, None).unwrap();
        assert!(!fci.degenerate);
        assert!((fci.energy - energies[label]).abs() < TOLERANCE, "{label}: {}", fci.energy);
        let k = qse_bands(&fci, &op, &layout, ham.k_point(), 1e-8).unwrap();
        for (kind, values) in [("valence", &k.valence), ("conduction", &k.conduction)] {
            let frozen = &bands[&(label.to_string(), kind.to_string())];
            assert_eq!(values.len(), frozen.len());
            for (a, b) in values.iter().zip(frozen) {
                assert!((a - b).abs() < TOLERANCE, "{label} {kind}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn silicon_correlation_lowers_the_energy() {
    let energies: BTreeMap<String, f64> =
        serde_json::from_str(&std::fs::read_to_string(fixture("golden/si_fci_energies.json")).unwrap()).unwrap();
    for (file, label) in [("si_l.json", "L"), ("si_gamma.json", "Gamma"), ("si_x.json", "X")] {
        let hf = load(file).hf_reference_energy().unwrap();
        assert!(energies[label] < hf - 0.01, "{label}");
    }
}
