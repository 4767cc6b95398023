//! Seeded random streams.
//!
//! Every random quantity is drawn from a ChaCha8 generator keyed by the
//! user seed and addressed by a fixed 64-bit stream id. ChaCha is a counter
//! based cipher, so streams never overlap and adding a new consumer does not
//! shift the draws of existing ones. Stream ids:
//!
//! | id          | consumer                                   |
//! |-------------|--------------------------------------------|
//! | 1           | recurrent matrix `W` (mask and values)     |
//! | 2           | input matrix `W_in`                        |
//! | 3           | feedback matrix `W_fb`                     |
//! | 4           | generated eigenvalues (DPG)                |
//! | 16 + k      | generated eigenvectors, attempt `k`        |
//! | 1024 + k    | benchmark signals, index `k`               |

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    Recurrent,
    Input,
    Feedback,
    Eigenvalues,
    Eigenvectors { attempt: u64 },
    Signal(u64),
}

impl Stream {
    pub fn id(self) -> u64 {
        match self {
            Stream::Recurrent => 1,
            Stream::Input => 2,
            Stream::Feedback => 3,
            Stream::Eigenvalues => 4,
            Stream::Eigenvectors { attempt } => 16 + attempt,
            Stream::Signal(k) => 1024 + k,
        }
    }
}

pub fn stream(seed: u64, which: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which.id());
    rng
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<u64> = {
            let mut r = stream(7, Stream::Input);
            (0..4).map(|_| r.random()).collect()
        };
        let b: Vec<u64> = {
            let mut r = stream(7, Stream::Input);
            (0..4).map(|_| r.random()).collect()
        };
        assert_eq!(a, b);
        let mut other = stream(7, Stream::Feedback);
        assert_ne!(a[0], other.random::<u64>());
    }
}
