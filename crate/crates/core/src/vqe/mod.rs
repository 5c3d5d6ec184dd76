//! Variational quantum eigensolver on top of the offload runtime.
//!
//! Each energy evaluation offloads one job per non-identity Pauli term
//! (basis-rotated ansatz), reduces the histograms to parity expectations on
//! the host and hands the sum to a Nelder-Mead loop.

mod ansatz;
mod hamiltonian;
pub mod nelder_mead;

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ansatz::{basis_change, build_ansatz, AnsatzSpec};
pub use hamiltonian::{Hamiltonian, HamiltonianError, Pauli, PauliTerm};
use nelder_mead::{Coefficients, NelderMead};

use crate::circuit::{CircuitError, Histogram};
use crate::runtime::{DeviceKind, DeviceRegistry, Job, RuntimeError};
use crate::sim::{exact_probabilities, Seed, SimError, Simulator};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VqeError {
    #[error("ansatz takes {expected} parameters, got {got}")]
    ParameterCount { expected: usize, got: usize },
    #[error("term acts on {term} qubits but the circuit has {circuit}")]
    QubitMismatch { circuit: usize, term: usize },
    #[error("exact mode (shots = 0) needs a local simulator; `{0}` is remote")]
    ExactModeOnRemote(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error(transparent)]
    Simulation(#[from] SimError),
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
    #[error("optimization aborted after {} iterations: {source}", partial.outcome.iterations)]
    Aborted {
        source: Box<VqeError>,
        partial: Box<VqeReport>,
    },
}

/// Derives the seed of the job measuring term `index`. It depends only on the
/// base seed and the term, so every evaluation sees the same sampling noise
/// and the objective stays a deterministic function of θ.
pub fn term_seed(seed: Seed, index: usize) -> Seed {
    // splitmix64 finalizer
    let mut z = seed.wrapping_add((index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Σ_k (-1)^popcount(k & mask) p_k.
fn parity_expectation(probabilities: impl Iterator<Item = f64>, mask: usize) -> f64 {
    probabilities
        .enumerate()
        .map(|(k, p)| if (k & mask).count_ones().is_multiple_of(2) { p } else { -p })
        .sum()
}

fn histogram_expectation(histogram: &Histogram, mask: usize) -> f64 {
    let shots = histogram.shots() as f64;
    parity_expectation(histogram.counts().iter().map(|&c| c as f64 / shots), mask)
}

/// ⟨ψ(θ)|H|ψ(θ)⟩ estimated on `device`. `shots == 0` selects exact mode,
/// which reads probabilities straight from the statevector and is only
/// available on local simulators.
pub fn estimate_expectation(
    hamiltonian: &Hamiltonian,
    spec: &AnsatzSpec,
    theta: &[f64],
    shots: u64,
    registry: &DeviceRegistry,
    device: &str,
    seed: Seed,
) -> Result<f64, VqeError> {
    if hamiltonian.num_qubits() != spec.num_qubits {
        return Err(VqeError::QubitMismatch {
            circuit: spec.num_qubits,
            term: hamiltonian.num_qubits(),
        });
    }
    let config = registry
        .device(device)
        .ok_or_else(|| RuntimeError::UnknownDevice(device.to_string()))?;
    let body = spec.body(theta)?;

    let mut energy = 0.0;
    if shots == 0 {
        if config.kind != DeviceKind::LocalSimulator {
            return Err(VqeError::ExactModeOnRemote(device.to_string()));
        }
        let simulator = Simulator::new(config.capacity);
        for term in hamiltonian.terms() {
            energy += term.coefficient()
                * if term.is_identity() {
                    1.0
                } else {
                    let state = simulator.run(&basis_change(&body, term)?)?;
                    parity_expectation(exact_probabilities(&state).into_iter(), term.support_mask())
                };
        }
        return Ok(energy);
    }

    let mut pending = Vec::new();
    for (index, term) in hamiltonian.terms().iter().enumerate() {
        if term.is_identity() {
            energy += term.coefficient();
            continue;
        }
        let job = Job::new(basis_change(&body, term)?, shots, term_seed(seed, index))?;
        pending.push((term, registry.submit_async(device, job)?));
    }
    for (term, handle) in pending {
        let result = handle.wait()?;
        energy += term.coefficient() * histogram_expectation(&result.histogram, term.support_mask());
    }
    Ok(energy)
}

#[derive(Debug, Clone, PartialEq)]
pub struct VqeConfig {
    pub ansatz: AnsatzSpec,
    pub initial_theta: Vec<f64>,
    /// Offset of the initial simplex vertices from `initial_theta`.
    pub initial_step: f64,
    pub max_iterations: usize,
    pub tolerance: f64,
    /// 0 selects exact mode.
    pub shots: u64,
    pub device: String,
    pub seed: Seed,
}

impl VqeConfig {
    pub const DEFAULT_STEP: f64 = 0.5;

    /// θ₀ = 0, step 0.5, 200 iterations, tolerance 1e-8, exact mode.
    pub fn new(ansatz: AnsatzSpec, device: impl Into<String>) -> Self {
        Self {
            ansatz,
            initial_theta: vec![0.0; ansatz.num_parameters()],
            initial_step: Self::DEFAULT_STEP,
            max_iterations: 200,
            tolerance: 1e-8,
            shots: 0,
            device: device.into(),
            seed: 0,
        }
    }

    fn validate(&self) -> Result<(), VqeError> {
        if self.ansatz.num_qubits == 0 || self.ansatz.layers == 0 {
            return Err(VqeError::Config("ansatz needs at least one qubit and one layer".into()));
        }
        if self.initial_theta.len() != self.ansatz.num_parameters() {
            return Err(VqeError::ParameterCount {
                expected: self.ansatz.num_parameters(),
                got: self.initial_theta.len(),
            });
        }
        if self.initial_theta.iter().any(|t| !t.is_finite()) {
            return Err(VqeError::Config("initial θ must be finite".into()));
        }
        if !self.initial_step.is_finite() || self.initial_step == 0.0 {
            return Err(VqeError::Config("initial step must be finite and non-zero".into()));
        }
        if !(self.tolerance >= 0.0 && self.tolerance.is_finite()) {
            return Err(VqeError::Config("tolerance must be finite and non-negative".into()));
        }
        Ok(())
    }
}

/// Everything about a run that is fixed by its inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VqeOutcome {
    pub best_energy: f64,
    pub best_theta: Vec<f64>,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    /// Best energy in the simplex after each iteration.
    pub energy_trace: Vec<f64>,
    pub ansatz: AnsatzSpec,
    pub shots: u64,
    pub device: String,
    pub seed: Seed,
    pub optimizer: Coefficients,
}

/// Measured timings of a run, in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VqeTiming {
    pub total_wall_time_s: f64,
    /// Wall time of each iteration's energy evaluations.
    pub iteration_round_trip_s: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VqeReport {
    #[serde(flatten)]
    pub outcome: VqeOutcome,
    #[serde(flatten)]
    pub timing: VqeTiming,
}

impl VqeReport {
    pub fn total_wall_time(&self) -> Duration {
        Duration::from_secs_f64(self.timing.total_wall_time_s)
    }
}

/// Minimizes the energy over θ. Iterations run strictly one after another;
/// within an evaluation the term jobs are queued together.
pub fn optimize(
    hamiltonian: &Hamiltonian,
    registry: &DeviceRegistry,
    config: &VqeConfig,
) -> Result<VqeReport, VqeError> {
    config.validate()?;
    let spec = config.ansatz;
    let solver = NelderMead {
        coefficients: Coefficients::default(),
        initial_step: config.initial_step,
        max_iterations: config.max_iterations,
        tolerance: config.tolerance,
    };

    let started = Instant::now();
    let mut best = (f64::INFINITY, config.initial_theta.clone());
    let mut evaluations = 0;
    let mut trace = Vec::new();
    let mut round_trips = Vec::new();
    let mut iteration_start = Instant::now();

    let result = solver.minimize(
        &config.initial_theta,
        |theta| {
            evaluations += 1;
            let energy = estimate_expectation(
                hamiltonian,
                &spec,
                theta,
                config.shots,
                registry,
                &config.device,
                config.seed,
            )?;
            if energy < best.0 {
                best = (energy, theta.to_vec());
            }
            Ok(energy)
        },
        |_, best_value| {
            let now = Instant::now();
            if trace.is_empty() {
                // The first iteration also pays for the initial simplex.
                iteration_start = started;
            }
            round_trips.push((now - iteration_start).as_secs_f64());
            trace.push(best_value);
            iteration_start = now;
        },
    );

    let build = |iterations: usize, converged: bool| VqeReport {
        outcome: VqeOutcome {
            best_energy: best.0,
            best_theta: best.1.clone(),
            iterations,
            evaluations,
            converged,
            energy_trace: trace.clone(),
            ansatz: spec,
            shots: config.shots,
            device: config.device.clone(),
            seed: config.seed,
            optimizer: solver.coefficients,
        },
        timing: VqeTiming {
            total_wall_time_s: started.elapsed().as_secs_f64(),
            iteration_round_trip_s: round_trips.clone(),
        },
    };

    match result {
        Ok(minimum) => {
            let mut report = build(minimum.iterations, minimum.converged);
            report.outcome.best_energy = minimum.value;
            report.outcome.best_theta = minimum.point;
            Ok(report)
        }
        Err(source) => Err(VqeError::Aborted {
            partial: Box::new(build(trace.len(), false)),
            source: Box::new(source),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::runtime::DeviceConfig;
    use nalgebra::DMatrix;
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    type C = Complex64;

    fn registry() -> DeviceRegistry {
        let mut r = DeviceRegistry::new();
        r.register_device(DeviceConfig::local("sim", 24)).unwrap();
        r
    }

    fn pauli_matrix(p: Pauli) -> DMatrix<C> {
        let (o, i) = (C::new(0.0, 0.0), C::new(0.0, 1.0));
        let l = C::new(1.0, 0.0);
        match p {
            Pauli::I => DMatrix::from_row_slice(2, 2, &[l, o, o, l]),
            Pauli::X => DMatrix::from_row_slice(2, 2, &[o, l, l, o]),
            Pauli::Y => DMatrix::from_row_slice(2, 2, &[o, -i, i, o]),
            Pauli::Z => DMatrix::from_row_slice(2, 2, &[l, o, o, -l]),
        }
    }

    /// Kronecker product in string order; the leftmost factor is the most
    /// significant qubit.
    fn dense(h: &Hamiltonian) -> DMatrix<C> {
        let dim = 1 << h.num_qubits();
        let mut total = DMatrix::<C>::zeros(dim, dim);
        for term in h.terms() {
            let mut m = DMatrix::<C>::identity(1, 1);
            for q in (0..h.num_qubits()).rev() {
                m = m.kronecker(&pauli_matrix(term.on_qubit(q)));
            }
            total += m * C::new(term.coefficient(), 0.0);
        }
        total
    }

    fn dense_expectation(h: &Hamiltonian, spec: &AnsatzSpec, theta: &[f64]) -> f64 {
        let state = Simulator::default().run(&spec.body(theta).unwrap()).unwrap();
        let psi = nalgebra::DVector::from_column_slice(state.amplitudes());
        (psi.adjoint() * dense(h) * &psi)[(0, 0)].re
    }

    fn ground_energy(h: &Hamiltonian) -> f64 {
        let m = dense(h);
        let eig = nalgebra::SymmetricEigen::new(m);
        eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
    }

    fn h2() -> Hamiltonian {
        Hamiltonian::parse("-1.0 ZZ\n0.5 XI\n0.5 IX\n").unwrap()
    }

    #[test]
    fn oracle_ground_energy() {
        assert!((ground_energy(&h2()) + 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn z_on_ground_state() {
        let h = Hamiltonian::parse("1.0 Z").unwrap();
        let e = estimate_expectation(&h, &AnsatzSpec::new(1, 1), &[0.0], 0, &registry(), "sim", 0).unwrap();
        assert_eq!(e, 1.0);
    }

    #[test]
    fn identity_terms_skip_the_device() {
        let r = registry();
        let h = Hamiltonian::parse("0.5 II").unwrap();
        let e = estimate_expectation(&h, &AnsatzSpec::new(2, 1), &[0.4, 1.1], 1000, &r, "sim", 3).unwrap();
        assert_eq!(e, 0.5);
        assert_eq!(r.jobs_submitted(), 0);

        let h = Hamiltonian::parse("0.5 II\n1.0 ZI").unwrap();
        estimate_expectation(&h, &AnsatzSpec::new(2, 1), &[0.4, 1.1], 1000, &r, "sim", 3).unwrap();
        assert_eq!(r.jobs_submitted(), 1);
    }

    #[test]
    fn exact_mode_matches_dense_oracle() {
        let r = registry();
        let h = Hamiltonian::parse("1.0 ZZ\n0.5 XX").unwrap();
        let spec = AnsatzSpec::new(2, 2);
        let theta = [0.3, -1.2, 2.1, 0.7];
        let e = estimate_expectation(&h, &spec, &theta, 0, &r, "sim", 0).unwrap();
        assert!((e - dense_expectation(&h, &spec, &theta)).abs() < 1e-10);

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let letters = ['I', 'X', 'Y', 'Z'];
        for _ in 0..50 {
            let n = rng.gen_range(1..=3);
            let lines: Vec<String> = (0..rng.gen_range(1..=4))
                .map(|_| {
                    let ops: String = (0..n).map(|_| letters[rng.gen_range(0..4)]).collect();
                    format!("{} {ops}", rng.gen_range(-2.0..2.0))
                })
                .collect();
            let h = Hamiltonian::parse(&lines.join("\n")).unwrap();
            let spec = AnsatzSpec::new(n, rng.gen_range(1..=3));
            let theta: Vec<f64> = (0..spec.num_parameters()).map(|_| rng.gen_range(-3.2..3.2)).collect();
            let e = estimate_expectation(&h, &spec, &theta, 0, &r, "sim", 0).unwrap();
            let oracle = dense_expectation(&h, &spec, &theta);
            assert!((e - oracle).abs() < 1e-10, "{h:?} {theta:?}: {e} vs {oracle}");
        }
    }

    #[test]
    fn y_estimate_against_statevector() {
        let r = registry();
        let h = Hamiltonian::parse("1.0 YZ").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for seed in 0..3 {
            // RY-only states have ⟨Y⟩ = 0, so add an RX to get a nonzero value.
            let theta = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
            let mut c = AnsatzSpec::new(2, 1).body(&theta).unwrap();
            c.apply(crate::circuit::Gate::rx(1, rng.gen_range(-3.0..3.0)).unwrap()).unwrap();
            let exact = {
                let state = Simulator::default().run(&basis_change(&c, &h.terms()[0]).unwrap()).unwrap();
                parity_expectation(exact_probabilities(&state).into_iter(), 0b11)
            };
            let psi = nalgebra::DVector::from_column_slice(Simulator::default().run(&c).unwrap().amplitudes());
            let oracle = (psi.adjoint() * dense(&h) * &psi)[(0, 0)].re;
            assert!((exact - oracle).abs() < 1e-10);

            let job = Job::new(basis_change(&c, &h.terms()[0]).unwrap(), 100_000, seed).unwrap();
            let histogram = r.submit_sync("sim", job).unwrap().histogram;
            let sampled = histogram_expectation(&histogram, 0b11);
            assert!((sampled - oracle).abs() < 1e-2, "{sampled} vs {oracle}");
        }
    }

    #[test]
    fn sampled_estimate_converges() {
        let r = registry();
        let h = h2();
        let spec = AnsatzSpec::new(2, 2);
        let theta = [0.4, -0.9, 1.3, 0.2];
        let exact = estimate_expectation(&h, &spec, &theta, 0, &r, "sim", 0).unwrap();
        let shots = 100_000u64;
        let mae: f64 = (0..20)
            .map(|seed| (estimate_expectation(&h, &spec, &theta, shots, &r, "sim", seed).unwrap() - exact).abs())
            .sum::<f64>()
            / 20.0;
        assert!(mae < 3.0 / (shots as f64).sqrt() * h.coefficient_norm(), "{mae}");
    }

    #[test]
    fn errors() {
        let mut r = registry();
        r.register_device(DeviceConfig::remote("qpu", "127.0.0.1:1", 24)).unwrap();
        let h = h2();
        let spec = AnsatzSpec::new(2, 1);
        assert_eq!(
            estimate_expectation(&h, &spec, &[0.0, 0.0], 0, &r, "qpu", 0),
            Err(VqeError::ExactModeOnRemote("qpu".into()))
        );
        assert!(matches!(
            estimate_expectation(&h, &spec, &[0.0], 0, &r, "sim", 0),
            Err(VqeError::ParameterCount { .. })
        ));
        assert!(matches!(
            estimate_expectation(&h, &AnsatzSpec::new(3, 1), &[0.0; 3], 0, &r, "sim", 0),
            Err(VqeError::QubitMismatch { .. })
        ));
        assert!(matches!(
            estimate_expectation(&h, &spec, &[0.0, 0.0], 0, &r, "nope", 0),
            Err(VqeError::Runtime(RuntimeError::UnknownDevice(_)))
        ));
    }

    #[test]
    fn optimize_z() {
        let h = Hamiltonian::parse("1.0 Z").unwrap();
        let mut config = VqeConfig::new(AnsatzSpec::new(1, 1), "sim");
        config.initial_theta = vec![0.3];
        config.tolerance = 1e-12;
        let report = optimize(&h, &registry(), &config).unwrap();
        assert!((report.outcome.best_energy + 1.0).abs() < 1e-6, "{report:?}");
        assert!(report.outcome.converged);
    }

    #[test]
    fn optimize_two_qubit_exact_and_sampled() {
        let h = h2();
        let ground = ground_energy(&h);
        let r = registry();
        let mut config = VqeConfig::new(AnsatzSpec::new(2, 2), "sim");
        config.tolerance = 1e-10;
        config.max_iterations = 1000;
        let exact = optimize(&h, &r, &config).unwrap();
        assert!((exact.outcome.best_energy - ground).abs() < 1e-4, "{:?}", exact.outcome);
        assert!(exact.outcome.best_energy >= ground - 1e-9);
        let trace = &exact.outcome.energy_trace;
        assert_eq!(trace.len(), exact.outcome.iterations);
        assert!(trace.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(exact.timing.iteration_round_trip_s.len(), exact.outcome.iterations);

        config.shots = 4096;
        config.seed = 2024;
        config.max_iterations = 300;
        config.tolerance = 1e-6;
        let sampled = optimize(&h, &r, &config).unwrap();
        assert!((sampled.outcome.best_energy - ground).abs() < 0.05, "{:?}", sampled.outcome);
    }

    #[test]
    fn deterministic_outcome() {
        let h = h2();
        let mut config = VqeConfig::new(AnsatzSpec::new(2, 1), "sim");
        config.shots = 512;
        config.seed = 9;
        config.max_iterations = 25;
        let a = optimize(&h, &registry(), &config).unwrap();
        let b = optimize(&h, &registry(), &config).unwrap();
        assert_eq!(a.outcome, b.outcome);
        let json = serde_json::to_string(&a).unwrap();
        let back: VqeReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, a);
    }

    #[test]
    fn device_failure_keeps_partial_trace() {
        let mut r = DeviceRegistry::new();
        let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        let endpoint = listener.local_addr().unwrap().to_string();
        drop(listener);
        r.register_device(DeviceConfig::remote("qpu", endpoint, 24)).unwrap();
        let mut config = VqeConfig::new(AnsatzSpec::new(2, 1), "qpu");
        config.shots = 100;
        match optimize(&h2(), &r, &config) {
            Err(VqeError::Aborted { source, partial }) => {
                assert!(matches!(*source, VqeError::Runtime(RuntimeError::JobFailed { .. })));
                assert_eq!(partial.outcome.iterations, 0);
                assert!(partial.outcome.energy_trace.is_empty());
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn invalid_config() {
        let mut config = VqeConfig::new(AnsatzSpec::new(2, 1), "sim");
        config.initial_theta = vec![0.0];
        assert!(matches!(optimize(&h2(), &registry(), &config), Err(VqeError::ParameterCount { .. })));
        config.initial_theta = vec![0.0, 0.0];
        config.tolerance = f64::NAN;
        assert!(matches!(optimize(&h2(), &registry(), &config), Err(VqeError::Config(_))));
    }

    #[test]
    fn term_seeds_differ() {
        let seeds: std::collections::HashSet<_> = (0..100).map(|i| term_seed(42, i)).collect();
        assert_eq!(seeds.len(), 100);
        assert_ne!(term_seed(1, 0), term_seed(2, 0));
    }
}
