//! Tomographic settings, the forward probability model, the abstract noise
//! channel and synthetic coincidence-count generation.
//!
//! Inputs and analyzers use the polarization alphabet `{H, V, D, R}` on each
//! qubit with `H = |0>`, `V = |1>`, `D = (|0> + |1>)/sqrt2` and
//! `R = (|0> - i|1>)/sqrt2`. The 256 settings are the Cartesian product of the
//! 16 two-qubit input labels with the 16 analyzer labels, row-major (input
//! outer, analyzer inner).

use std::collections::HashMap;
use std::f64::consts::FRAC_1_SQRT_2;
use std::sync::OnceLock;

use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;

use crate::error::{invalid, QptError, Result};
use crate::process::{compose_after, pauli_i, pauli_z, ProcessMatrix};
use crate::qcore::{c, kron, CMatrix, CVector, PureState, Rng};

pub const N_SETTINGS: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Polarization {
    H,
    V,
    D,
    R,
}

impl Polarization {
    pub const ALL: [Polarization; 4] = [
        Polarization::H,
        Polarization::V,
        Polarization::D,
        Polarization::R,
    ];

    pub fn from_char(ch: char) -> Option<Self> {
        match ch {
            'H' => Some(Self::H),
            'V' => Some(Self::V),
            'D' => Some(Self::D),
            'R' => Some(Self::R),
            _ => None,
        }
    }

    pub fn as_char(self) -> char {
        match self {
            Self::H => 'H',
            Self::V => 'V',
            Self::D => 'D',
            Self::R => 'R',
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn amplitudes(self) -> [num_complex::Complex64; 2] {
        let s = FRAC_1_SQRT_2;
        match self {
            Self::H => [c(1.0, 0.0), c(0.0, 0.0)],
            Self::V => [c(0.0, 0.0), c(1.0, 0.0)],
            Self::D => [c(s, 0.0), c(s, 0.0)],
            Self::R => [c(s, 0.0), c(0.0, -s)],
        }
    }

    pub fn state(self) -> PureState {
        let [a, b] = self.amplitudes();
        PureState::new(CVector::from_vec(vec![a, b]))
            .expect("polarization states are normalized")
            .with_label(self.as_char().to_string())
    }
}

/// Decodes a two-qubit label such as `"DH"`.
pub fn parse_label(label: &str) -> Result<[Polarization; 2]> {
    let chars: Vec<char> = label.chars().collect();
    match chars.as_slice() {
        [a, b] => match (Polarization::from_char(*a), Polarization::from_char(*b)) {
            (Some(p), Some(q)) => Ok([p, q]),
            _ => invalid(format!("label '{label}' uses letters outside {{H,V,D,R}}")),
        },
        _ => invalid(format!("label '{label}' must have exactly two letters")),
    }
}

pub fn label_state(label: &str) -> Result<PureState> {
    let [a, b] = parse_label(label)?;
    Ok(a.state().tensor(&b.state()))
}

/// Index of a two-qubit label in `{H,V,D,R}^2` order (`HH` = 0, `HV` = 1, ...).
pub fn label_index(label: &str) -> Result<usize> {
    let [a, b] = parse_label(label)?;
    Ok(4 * a.index() + b.index())
}

pub fn label_for_index(index: usize) -> String {
    let a = Polarization::ALL[index / 4].as_char();
    let b = Polarization::ALL[index % 4].as_char();
    format!("{a}{b}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct Setting {
    pub input_label: String,
    pub analyzer_label: String,
    pub input_state: PureState,
    pub analyzer_state: PureState,
}

impl Setting {
    pub fn new(input_label: &str, analyzer_label: &str) -> Result<Self> {
        Ok(Self {
            input_label: input_label.to_string(),
            analyzer_label: analyzer_label.to_string(),
            input_state: label_state(input_label)?,
            analyzer_state: label_state(analyzer_label)?,
        })
    }

    /// Position in [`standard_settings`].
    pub fn index(&self) -> usize {
        setting_index(&self.input_label, &self.analyzer_label)
            .expect("labels validated on construction")
    }
}

pub fn setting_index(input: &str, analyzer: &str) -> Result<usize> {
    Ok(16 * label_index(input)? + label_index(analyzer)?)
}

/// The 256 input/analyzer pairs, input-major.
pub fn standard_settings() -> Vec<Setting> {
    static SETTINGS: OnceLock<Vec<Setting>> = OnceLock::new();
    SETTINGS
        .get_or_init(|| {
            (0..16)
                .flat_map(|a| (0..16).map(move |b| (a, b)))
                .map(|(a, b)| {
                    Setting::new(&label_for_index(a), &label_for_index(b)).expect("standard labels")
                })
                .collect()
        })
        .clone()
}

/// Vector `v` with `p = v^dagger chi v` for a setting, i.e. `v_m = conj(<psi_b|A_m|phi_a>)`.
pub fn setting_vector(process_basis: &crate::process::OperatorBasis, setting: &Setting) -> CVector {
    let phi = setting.input_state.amplitudes();
    let psi = setting.analyzer_state.amplitudes();
    CVector::from_iterator(
        process_basis.len(),
        process_basis
            .elements()
            .iter()
            .map(|a| psi.dotc(&(a * phi)).conj()),
    )
}

/// `<psi_b| E(|phi_a><phi_a|) |psi_b>` for a physical process, clamped to `[0, 1]`.
pub fn predict_probability(chi: &ProcessMatrix, setting: &Setting) -> Result<f64> {
    chi.require_physical()?;
    Ok(predict_probability_unconstrained(chi, setting)?.clamp(0.0, 1.0))
}

/// Forward model without the physicality check or clamping.
pub fn predict_probability_unconstrained(chi: &ProcessMatrix, setting: &Setting) -> Result<f64> {
    if chi.dim() != setting.input_state.dim() {
        return invalid("setting dimension does not match the process");
    }
    let v = setting_vector(chi.basis(), setting);
    let p = v.dotc(&(chi.chi() * &v));
    if p.im.abs() > 1e-10 * p.re.abs().max(1.0) {
        return Err(QptError::Internal(format!("complex probability {p}")));
    }
    Ok(p.re)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CountNoise {
    #[default]
    None,
    Poisson,
}

impl CountNoise {
    pub fn as_str(&self) -> &'static str {
        match self {
            CountNoise::None => "none",
            CountNoise::Poisson => "poisson",
        }
    }
}

impl std::str::FromStr for CountNoise {
    type Err = QptError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Self::None),
            "poisson" => Ok(Self::Poisson),
            other => invalid(format!(
                "unknown count noise '{other}' (expected none|poisson)"
            )),
        }
    }
}

/// Abstract imperfection model: output dephasing followed by a depolarizing mixture.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NoiseSpec {
    pub depolarizing: f64,
    pub dephasing: f64,
    pub count_noise: CountNoise,
}

impl NoiseSpec {
    pub fn new(depolarizing: f64, dephasing: f64, count_noise: CountNoise) -> Result<Self> {
        let spec = Self {
            depolarizing,
            dephasing,
            count_noise,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn noiseless() -> Self {
        Self::default()
    }

    pub fn poisson() -> Self {
        Self {
            count_noise: CountNoise::Poisson,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("depolarizing", self.depolarizing),
            ("dephasing", self.dephasing),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return invalid(format!("{name} strength {v} outside [0, 1]"));
            }
        }
        Ok(())
    }
}

/// Phase damping of strength `q` on each output qubit, as the Kraus set
/// `sqrt(w) P` for `P` in `{II, IZ, ZI, ZZ}`. Coherences shrink by `1 - q` per qubit.
fn dephasing_kraus(q: f64) -> Vec<CMatrix> {
    let single = [(1.0 - q / 2.0, pauli_i()), (q / 2.0, pauli_z())];
    let mut out = Vec::with_capacity(4);
    for (w1, p1) in &single {
        for (w2, p2) in &single {
            let w = w1 * w2;
            if w > 0.0 {
                out.push(kron(p1, p2).scale(w.sqrt()));
            }
        }
    }
    out
}

/// `(1 - p) * (dephasing_q o chi) + p * I/16`.
pub fn apply_noise(chi: &ProcessMatrix, noise: &NoiseSpec) -> Result<ProcessMatrix> {
    noise.validate()?;
    chi.require_physical()?;
    if chi.dim() != 4 {
        return invalid("the noise model is defined for two-qubit processes");
    }
    let depolarizing = ProcessMatrix::fully_depolarizing_2q();
    if chi.basis().name() != depolarizing.basis().name() {
        return invalid("the noise model expects a Pauli-basis process");
    }
    let dephased = if noise.dephasing > 0.0 {
        compose_after(chi, &dephasing_kraus(noise.dephasing))?
    } else {
        chi.clone()
    };
    let p = noise.depolarizing;
    let mixed = dephased.chi().scale(1.0 - p) + depolarizing.chi().scale(p);
    // convex mixture of physical maps; keeps the caller's flag for overrides
    Ok(ProcessMatrix::trusted(mixed, chi.basis().clone(), chi.constraint()))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountRecord {
    pub input: String,
    pub analyzer: String,
    pub counts: u64,
}

/// Coincidence counts for all 256 settings plus the pairs-per-setting constant `C`.
#[derive(Debug, Clone, PartialEq)]
pub struct CountSet {
    records: Vec<CountRecord>,
    total_pairs: f64,
    pub seed: Option<u64>,
    pub noise: Option<NoiseSpec>,
    /// counts in standard-setting order
    ordered: Vec<u64>,
}

impl CountSet {
    /// Validates labels, uniqueness and completeness (all 256 pairs).
    pub fn new(records: Vec<CountRecord>, total_pairs: f64) -> Result<Self> {
        if !(total_pairs.is_finite() && total_pairs > 0.0) {
            return invalid(format!("total_pairs must be positive, got {total_pairs}"));
        }
        let mut ordered: Vec<Option<u64>> = vec![None; N_SETTINGS];
        for r in &records {
            let idx = setting_index(&r.input, &r.analyzer)?;
            if ordered[idx].replace(r.counts).is_some() {
                return invalid(format!("duplicate record ({}, {})", r.input, r.analyzer));
            }
        }
        let missing: Vec<(String, String)> = ordered
            .iter()
            .enumerate()
            .filter(|(_, c)| c.is_none())
            .map(|(i, _)| (label_for_index(i / 16), label_for_index(i % 16)))
            .collect();
        if !missing.is_empty() {
            return Err(QptError::MissingSettings(missing));
        }
        Ok(Self {
            records,
            total_pairs,
            seed: None,
            noise: None,
            ordered: ordered.into_iter().map(|c| c.unwrap_or(0)).collect(),
        })
    }

    pub fn records(&self) -> &[CountRecord] {
        &self.records
    }

    pub fn total_pairs(&self) -> f64 {
        self.total_pairs
    }

    /// Counts indexed like [`standard_settings`].
    pub fn ordered_counts(&self) -> &[u64] {
        &self.ordered
    }

    pub fn counts(&self, input: &str, analyzer: &str) -> Result<u64> {
        Ok(self.ordered[setting_index(input, analyzer)?])
    }

    /// Measured frequencies `c_ab / C` in standard-setting order.
    pub fn frequencies(&self) -> Vec<f64> {
        self.ordered
            .iter()
            .map(|&c| c as f64 / self.total_pairs)
            .collect()
    }
}

/// Draws counts for every standard setting: `round(C p)` or `Poisson(C p)`
/// with `p` from the noisy process. Setting `i` uses substream `i` of `rng`.
pub fn simulate_counts(
    chi: &ProcessMatrix,
    total_pairs: f64,
    noise: &NoiseSpec,
    rng: &Rng,
) -> Result<CountSet> {
    if !(total_pairs.is_finite() && total_pairs > 0.0) {
        return invalid(format!("total_pairs must be positive, got {total_pairs}"));
    }
    let noisy = apply_noise(chi, noise)?;
    let settings = standard_settings();
    let records = settings
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let mean = total_pairs * predict_probability(&noisy, s)?;
            let counts = match noise.count_noise {
                CountNoise::None => mean.round() as u64,
                CountNoise::Poisson if mean > 0.0 => {
                    let dist = Poisson::new(mean).map_err(|e| QptError::Internal(e.to_string()))?;
                    dist.sample(&mut rng.fork(i as u64)) as u64
                }
                CountNoise::Poisson => 0,
            };
            Ok(CountRecord {
                input: s.input_label.clone(),
                analyzer: s.analyzer_label.clone(),
                counts,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut set = CountSet::new(records, total_pairs)?;
    set.seed = Some(rng.seed());
    set.noise = Some(*noise);
    Ok(set)
}

/// Map from `(input, analyzer)` to record index, for callers holding partial data.
pub fn record_lookup(records: &[CountRecord]) -> HashMap<(String, String), u64> {
    records
        .iter()
        .map(|r| ((r.input.clone(), r.analyzer.clone()), r.counts))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::process_fidelity;
    use crate::process::{random_channel_2q, Constraint};
    use crate::qcore::max_abs;

    #[test]
    fn settings_layout() {
        let s = standard_settings();
        assert_eq!(s.len(), 256);
        assert_eq!(s[0].input_label, "HH");
        assert_eq!(s[0].analyzer_label, "HH");
        assert_eq!(s[1].analyzer_label, "HV");
        assert_eq!(s[16].input_label, "HV");
        assert_eq!(s[255].input_label, "RR");
        for (i, setting) in s.iter().enumerate() {
            assert_eq!(setting.index(), i);
            assert!((setting.input_state.amplitudes().norm() - 1.0).abs() < 1e-12);
            // product state: the 2x2 amplitude reshaping has rank one
            let a = setting.input_state.amplitudes();
            assert!((a[0] * a[3] - a[1] * a[2]).norm() < 1e-12);
        }
    }

    #[test]
    fn label_errors() {
        assert!(parse_label("HX").is_err());
        assert!(parse_label("H").is_err());
        assert!(parse_label("HHH").is_err());
        assert_eq!(label_index("RR").unwrap(), 15);
    }

    #[test]
    fn polarization_r_convention() {
        let r = Polarization::R.state();
        assert!((r.amplitudes()[1] - c(0.0, -FRAC_1_SQRT_2)).norm() < 1e-15);
    }

    #[test]
    fn cnot_probabilities() {
        let chi = ProcessMatrix::cnot();
        let p = |i: &str, a: &str| predict_probability(&chi, &Setting::new(i, a).unwrap()).unwrap();
        assert!((p("HH", "HH") - 1.0).abs() < 1e-12);
        assert!((p("DH", "HH") - 0.5).abs() < 1e-12);
        assert!(p("HH", "HV").abs() < 1e-12);
        assert!((p("VH", "VV") - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unconstrained_probability_needs_opt_in() {
        let chi = ProcessMatrix::unconstrained(
            ProcessMatrix::cnot().chi().clone(),
            crate::process::pauli_2q(),
        )
        .unwrap();
        let s = Setting::new("HH", "HH").unwrap();
        assert!(predict_probability(&chi, &s).is_err());
        assert!((predict_probability_unconstrained(&chi, &s).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn complete_analyzer_basis_sums_to_one() {
        let mut rng = Rng::seed_from(2);
        let chi = random_channel_2q(5, &mut rng).unwrap();
        for input in 0..16 {
            let label = label_for_index(input);
            let total: f64 = ["HH", "HV", "VH", "VV"]
                .iter()
                .map(|a| predict_probability(&chi, &Setting::new(&label, a).unwrap()).unwrap())
                .sum();
            assert!((total - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn noise_examples() {
        let cnot = ProcessMatrix::cnot();
        let same = apply_noise(&cnot, &NoiseSpec::noiseless()).unwrap();
        assert!(max_abs(&(same.chi() - cnot.chi())) < 1e-15);

        let full =
            apply_noise(&cnot, &NoiseSpec::new(1.0, 0.0, CountNoise::None).unwrap()).unwrap();
        assert!(max_abs(&(full.chi() - CMatrix::identity(16, 16).scale(1.0 / 16.0))) < 1e-15);

        let tenth =
            apply_noise(&cnot, &NoiseSpec::new(0.1, 0.0, CountNoise::None).unwrap()).unwrap();
        assert!((process_fidelity(&cnot, &tenth).unwrap() - 0.90625).abs() < 1e-12);

        assert!(NoiseSpec::new(1.5, 0.0, CountNoise::None).is_err());
        assert!(NoiseSpec::new(0.0, -0.1, CountNoise::None).is_err());
    }

    #[test]
    fn dephasing_shrinks_coherences() {
        // |++> through identity then full dephasing on both qubits: diagonal output
        let ident = ProcessMatrix::identity_2q();
        let noisy =
            apply_noise(&ident, &NoiseSpec::new(0.0, 0.4, CountNoise::None).unwrap()).unwrap();
        assert_eq!(noisy.constraint(), Constraint::Physical);
        let plus = label_state("DD").unwrap().to_density();
        let out = crate::process::apply_process(&noisy, &plus).unwrap();
        // single-qubit coherence 1/2 * (1 - q); two-qubit corner 1/4 * (1-q)^2
        assert!((out.matrix()[(0, 1)].re - 0.25 * 0.6).abs() < 1e-12);
        assert!((out.matrix()[(0, 3)].re - 0.25 * 0.36).abs() < 1e-12);
        assert!((out.matrix()[(0, 0)].re - 0.25).abs() < 1e-12);
        assert!(noisy.tp_defect() < 1e-12);
    }

    #[test]
    fn fidelity_linear_in_depolarizing() {
        let cnot = ProcessMatrix::cnot();
        let f = |p: f64| {
            let noisy =
                apply_noise(&cnot, &NoiseSpec::new(p, 0.2, CountNoise::None).unwrap()).unwrap();
            process_fidelity(&cnot, &noisy).unwrap()
        };
        let (f0, f5, f1) = (f(0.0), f(0.5), f(1.0));
        assert!((f5 - 0.5 * (f0 + f1)).abs() < 1e-12);
        assert!((f1 - 1.0 / 16.0).abs() < 1e-12);
    }

    #[test]
    fn noiseless_counts() {
        let counts = simulate_counts(
            &ProcessMatrix::cnot(),
            1000.0,
            &NoiseSpec::noiseless(),
            &Rng::seed_from(0),
        )
        .unwrap();
        assert_eq!(counts.counts("HH", "HH").unwrap(), 1000);
        assert_eq!(counts.counts("DH", "HH").unwrap(), 500);
        assert_eq!(counts.counts("HH", "HV").unwrap(), 0);
        assert_eq!(counts.records().len(), 256);
    }

    #[test]
    fn poisson_counts_mean() {
        let n = 50;
        let total: u64 = (0..n)
            .map(|seed| {
                simulate_counts(
                    &ProcessMatrix::cnot(),
                    1000.0,
                    &NoiseSpec::poisson(),
                    &Rng::seed_from(seed),
                )
                .unwrap()
                .counts("DH", "HH")
                .unwrap()
            })
            .sum();
        let mean = total as f64 / n as f64;
        assert!(
            (mean - 500.0).abs() < 3.0 * (500.0f64 / n as f64).sqrt(),
            "mean {mean}"
        );
    }

    #[test]
    fn simulation_is_deterministic() {
        let chi = ProcessMatrix::cnot();
        let a = simulate_counts(&chi, 2000.0, &NoiseSpec::poisson(), &Rng::seed_from(7)).unwrap();
        let b = simulate_counts(&chi, 2000.0, &NoiseSpec::poisson(), &Rng::seed_from(7)).unwrap();
        assert_eq!(a, b);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let c1 = pool.install(|| {
            simulate_counts(&chi, 2000.0, &NoiseSpec::poisson(), &Rng::seed_from(7)).unwrap()
        });
        assert_eq!(a, c1);
    }

    #[test]
    fn countset_validation() {
        let mut records: Vec<CountRecord> = standard_settings()
            .iter()
            .map(|s| CountRecord {
                input: s.input_label.clone(),
                analyzer: s.analyzer_label.clone(),
                counts: 1,
            })
            .collect();
        assert!(CountSet::new(records.clone(), 0.0).is_err());
        let last = records.pop().unwrap();
        match CountSet::new(records.clone(), 10.0) {
            Err(QptError::MissingSettings(m)) => {
                assert_eq!(m, vec![("RR".to_string(), "RR".to_string())])
            }
            other => panic!("unexpected {other:?}"),
        }
        records.push(records[0].clone());
        assert!(CountSet::new(records.clone(), 10.0).is_err());
        records.pop();
        records.push(last);
        assert!(CountSet::new(records, 10.0).is_ok());
    }
}
