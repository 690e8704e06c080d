//! Small building blocks shared by every model: parameter initialisation,
//! affine layers and the train/eval switch.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::tensor::{DenseMatrix, Tape, Var};

/// Random stream used throughout; seeded explicitly everywhere.
pub type SeededRng = ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Train,
    Eval,
}

impl Mode {
    pub fn is_train(self) -> bool {
        self == Mode::Train
    }
}

/// Glorot/Xavier uniform initialisation over `fan_in x fan_out`.
pub fn glorot<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> DenseMatrix {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    DenseMatrix::from_fn(fan_in, fan_out, |_, _| rng.random_range(-limit..limit))
}

/// `x W + b`.
pub fn affine(tape: &mut Tape, x: Var, w: Var, b: Var) -> Result<Var> {
    let h = tape.matmul(x, w)?;
    tape.add_row(h, b)
}

/// Mixes a base seed with a stream index (splitmix64 finaliser) so runs,
/// teachers and repeats draw from unrelated streams.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Fraction of `idx` whose prediction matches the label.
pub fn accuracy(predictions: &[usize], labels: &[usize], idx: &[usize]) -> Option<f64> {
    if idx.is_empty() {
        return None;
    }
    let hits = idx.iter().filter(|&&v| predictions[v] == labels[v]).count();
    Some(hits as f64 / idx.len() as f64)
}
