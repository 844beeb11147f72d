//! User-irrepressible protocol sequences for the collision channel without
//! feedback.
//!
//! * [`seqcore`]: characteristic sets, sequence sets, residue arithmetic.
//! * [`construct`]: CRTm and CRT families via the Chinese remainder map.
//! * [`correlate`]: Hamming cross-correlation and difference sets.
//! * [`verify`]: exhaustive and pairwise UI verification with witnesses.
//! * [`bounds`]: period lower bounds and the CRTm period ratio.
//! * [`simulate`]: seeded delay simulation against random access.
//! * [`cli`]: the `uiseq` command-line front end.

pub mod bounds;
pub mod cli;
pub mod construct;
pub mod correlate;
pub mod error;
pub mod seqcore;
pub mod simulate;
pub mod verify;

pub use error::{Error, Result};
pub use seqcore::{CharacteristicSet, CrtPair, SequenceSet};
