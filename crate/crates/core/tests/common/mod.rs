#![allow(dead_code)]

use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reebflow::hamiltonian::{HamiltonianModel, ScalarField};
use reebflow::system::{default_model, System, DEFAULT_AMPLITUDE};
use reebflow::torus::FastProcessSpec;

pub fn dumbbell() -> &'static System {
    static SYS: OnceLock<System> = OnceLock::new();
    SYS.get_or_init(|| {
        let (m, f) = default_model(DEFAULT_AMPLITUDE);
        System::with_defaults(m, f).expect("default dumbbell system")
    })
}

pub fn flat_harmonic() -> &'static System {
    static SYS: OnceLock<System> = OnceLock::new();
    SYS.get_or_init(|| {
        let model = HamiltonianModel::axis_aligned(ScalarField::Harmonic, DEFAULT_AMPLITUDE);
        System::with_defaults(model, FastProcessSpec::constant_drift(0.0, 2f64.sqrt())).expect("harmonic system")
    })
}

/// Dart-throwing estimate of the area of `{x ∈ box : keep(x)}` and its standard error.
pub fn dart_area(lo: [f64; 2], hi: [f64; 2], n: usize, seed: u64, keep: impl Fn([f64; 2]) -> bool) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let box_area = (hi[0] - lo[0]) * (hi[1] - lo[1]);
    let hits = (0..n)
        .filter(|_| keep([rng.random_range(lo[0]..hi[0]), rng.random_range(lo[1]..hi[1])]))
        .count();
    let p = hits as f64 / n as f64;
    (p * box_area, box_area * (p * (1.0 - p) / n as f64).sqrt())
}

/// `I_n(1)` by its power series.
pub fn bessel_i(n: u32, x: f64) -> f64 {
    let mut term = (x / 2.0).powi(n as i32) / (1..=n).map(f64::from).product::<f64>();
    let mut sum = term;
    for k in 1..60 {
        term *= (x / 2.0).powi(2) / (k as f64 * (k + n) as f64);
        sum += term;
    }
    sum
}
