//! Excitation-level classification of sampled configurations and
//! Kullback–Leibler / Jensen–Shannon divergences (base-2 logarithms).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::qubit::{Determinant, QubitLayout};
use crate::statevector::{SampleDistribution, StateVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ExcitationClass {
    /// Number of electrons moved out of HF-occupied slots.
    Level(usize),
    WrongNe,
    WrongSz,
}

/// Sorts determinants into excitation levels relative to an HF determinant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExcitationClassifier {
    pub hf: Determinant,
    pub alpha_mask: u64,
    pub virtual_mask: u64,
}

impl ExcitationClassifier {
    pub fn new(layout: &QubitLayout) -> Self {
        let hf = layout.hf_determinant();
        Self {
            hf,
            alpha_mask: layout.alpha_mask(),
            virtual_mask: layout.full_mask() & !hf.0,
        }
    }

    pub fn n_electrons(&self) -> usize {
        self.hf.count() as usize
    }

    /// A wrong particle number takes precedence over a wrong spin.
    pub fn classify(&self, det: Determinant) -> ExcitationClass {
        let two_sz = |d: Determinant| 2 * (d.0 & self.alpha_mask).count_ones() as i32 - d.count() as i32;
        if det.count() != self.hf.count() {
            ExcitationClass::WrongNe
        } else if two_sz(det) != two_sz(self.hf) {
            ExcitationClass::WrongSz
        } else {
            ExcitationClass::Level((det.0 & self.virtual_mask).count_ones() as usize)
        }
    }
}

/// Shorthand for a one-off classification.
pub fn excitation_level(det: Determinant, layout: &QubitLayout) -> ExcitationClass {
    ExcitationClassifier::new(layout).classify(det)
}

/// Weights per excitation level plus the two wrong-sector buckets. Counts
/// are stored as reals so that exact reference distributions share the type.
#[derive(Debug, Clone, PartialEq)]
pub struct ExcitationHistogram {
    pub level_counts: Vec<f64>,
    pub wrong_ne: f64,
    pub wrong_sz: f64,
    pub total: f64,
}

#[derive(Serialize, Deserialize)]
struct HistogramFile {
    buckets: BTreeMap<String, f64>,
    total: f64,
}

impl ExcitationHistogram {
    fn empty(n_electrons: usize) -> Self {
        Self {
            level_counts: vec![0.0; n_electrons + 1],
            wrong_ne: 0.0,
            wrong_sz: 0.0,
            total: 0.0,
        }
    }

    fn add(&mut self, class: ExcitationClass, weight: f64) {
        match class {
            ExcitationClass::Level(l) => self.level_counts[l] += weight,
            ExcitationClass::WrongNe => self.wrong_ne += weight,
            ExcitationClass::WrongSz => self.wrong_sz += weight,
        }
        self.total += weight;
    }

    /// Bucket weights in the fixed order `0..=N_e`, wrong `N_e`, wrong `S_z`.
    pub fn buckets(&self) -> Vec<f64> {
        let mut v = self.level_counts.clone();
        v.push(self.wrong_ne);
        v.push(self.wrong_sz);
        v
    }

    pub fn frequencies(&self) -> Vec<f64> {
        let t = if self.total > 0.0 { self.total } else { 1.0 };
        self.buckets().into_iter().map(|w| w / t).collect()
    }

    /// `{buckets: {"0": f, ..., "wrong_Ne": f, "wrong_Sz": f}, total}` with
    /// normalized frequencies.
    pub fn to_json(&self) -> String {
        let f = self.frequencies();
        let n = self.level_counts.len();
        let mut buckets: BTreeMap<String, f64> =
            (0..n).map(|l| (l.to_string(), f[l])).collect();
        buckets.insert("wrong_Ne".into(), f[n]);
        buckets.insert("wrong_Sz".into(), f[n + 1]);
        serde_json::to_string_pretty(&HistogramFile {
            buckets,
            total: self.total,
        })
        .expect("serializable histogram")
    }
}

pub fn histogram(dist: &SampleDistribution, classifier: &ExcitationClassifier) -> ExcitationHistogram {
    weighted_histogram(
        dist.counts.iter().map(|(&d, &c)| (d, c as f64)),
        classifier,
    )
}

pub fn weighted_histogram(
    weights: impl IntoIterator<Item = (Determinant, f64)>,
    classifier: &ExcitationClassifier,
) -> ExcitationHistogram {
    let mut h = ExcitationHistogram::empty(classifier.n_electrons());
    for (d, w) in weights {
        h.add(classifier.classify(d), w);
    }
    h
}

/// Exact bucketing of the uniform distribution over `2^n_qubits` outcomes.
pub fn uniform_histogram(n_qubits: usize, classifier: &ExcitationClassifier) -> ExcitationHistogram {
    let weight = 1.0 / (1u64 << n_qubits) as f64;
    weighted_histogram((0..1u64 << n_qubits).map(|b| (Determinant(b), weight)), classifier)
}

/// Exact bucketing of `|ψ|²`.
pub fn state_histogram(state: &StateVector, classifier: &ExcitationClassifier) -> ExcitationHistogram {
    weighted_histogram(
        state
            .amplitudes()
            .iter()
            .enumerate()
            .map(|(b, z)| (Determinant(b as u64), z.norm_sqr())),
        classifier,
    )
}

/// `Σ P log2(P/Q)`; infinite when `Q` vanishes where `P` does not.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len(), "distributions must share a support");
    p.iter()
        .zip(q)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &qi)| {
            if qi > 0.0 {
                pi * (pi / qi).log2()
            } else {
                f64::INFINITY
            }
        })
        .sum()
}

/// Jensen–Shannon divergence against the mixture `M = (P + Q) / 2`.
pub fn js_divergence(p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len(), "distributions must share a support");
    // Each half is accumulated term by term in a symmetric form so that
    // swapping the arguments gives a bitwise identical result.
    let mut total = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        let m = 0.5 * (pi + qi);
        let term = |x: f64| if x > 0.0 { x * (x / m).log2() } else { 0.0 };
        let (a, b) = (term(pi), term(qi));
        total += 0.5 * (a + b);
    }
    total.clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DivergenceReport {
    /// Infinite divergences are written as the string `"inf"`.
    #[serde(with = "extended_real")]
    pub d_kl_pq: f64,
    #[serde(with = "extended_real")]
    pub d_kl_qp: f64,
    pub d_js: f64,
}

mod extended_real {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if *v == f64::INFINITY {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Number(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Number(v) => Ok(v),
            Repr::Text(t) if t == "inf" => Ok(f64::INFINITY),
            Repr::Text(t) => Err(serde::de::Error::custom(format!("unexpected divergence `{t}`"))),
        }
    }
}

pub fn divergence_report(p: &[f64], q: &[f64]) -> DivergenceReport {
    DivergenceReport {
        d_kl_pq: kl_divergence(p, q),
        d_kl_qp: kl_divergence(q, p),
        d_js: js_divergence(p, q),
    }
}

/// Aligns two distributions keyed by determinant onto their joint support.
pub fn align(
    p: &BTreeMap<Determinant, f64>,
    q: &BTreeMap<Determinant, f64>,
) -> (Vec<f64>, Vec<f64>) {
    let mut keys: Vec<Determinant> = p.keys().chain(q.keys()).copied().collect();
    keys.sort_unstable();
    keys.dedup();
    let get = |m: &BTreeMap<Determinant, f64>, k| m.get(k).copied().unwrap_or(0.0);
    (
        keys.iter().map(|k| get(p, k)).collect(),
        keys.iter().map(|k| get(q, k)).collect(),
    )
}

/// Divergences over raw bitstring distributions.
pub fn raw_divergence(
    p: &BTreeMap<Determinant, f64>,
    q: &BTreeMap<Determinant, f64>,
) -> DivergenceReport {
    let (a, b) = align(p, q);
    divergence_report(&a, &b)
}

/// Divergences over excitation-level buckets.
pub fn bucketed_divergence(p: &ExcitationHistogram, q: &ExcitationHistogram) -> DivergenceReport {
    divergence_report(&p.frequencies(), &q.frequencies())
}
