//! Commit-reveal protocol for externally governed randomness.
//!
//! An envelope binds a 32-byte entropy value before scoring starts; the
//! entropy bytes stay unreadable until the envelope is revealed and the
//! commitment re-verified. Deterministic per-stage streams are derived from
//! the revealed value by label.

use sha2::{Digest, Sha256};
use thiserror::Error;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvelopeState {
    Committed,
    Revealed,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EntropyError {
    #[error("entropy is unreadable while the envelope is committed")]
    NotRevealed,
    #[error("commitment mismatch: envelope was tampered with")]
    CommitmentMismatch,
    #[error("envelope already revealed")]
    DoubleReveal,
}

/// Committed-then-revealed randomness for one run.
///
/// The entropy field is private on purpose: no consumer can obtain the bytes
/// from a COMMITTED envelope, only the commitment digest.
#[derive(Debug, Clone)]
pub struct EntropyEnvelope {
    entropy: [u8; 32],
    nonce: [u8; 16],
    commitment: [u8; 32],
    state: EnvelopeState,
}

fn sha256_parts(parts: &[&[u8]]) -> [u8; 32] {
    let mut hasher = Sha256::new();
    for part in parts {
        hasher.update(part);
    }
    hasher.finalize().into()
}

impl EntropyEnvelope {
    /// Derives a committed envelope from `(seed, run_id)`. The derivation is
    /// deterministic so completed runs can be replayed byte for byte.
    pub fn commit(seed: u64, run_id: &str) -> EntropyEnvelope {
        let entropy = sha256_parts(&[b"entropy", &seed.to_le_bytes(), run_id.as_bytes()]);
        let nonce_full = sha256_parts(&[b"nonce", &seed.to_le_bytes(), run_id.as_bytes()]);
        let mut nonce = [0u8; 16];
        nonce.copy_from_slice(&nonce_full[..16]);
        let commitment = sha256_parts(&[&entropy, &nonce]);
        EntropyEnvelope { entropy, nonce, commitment, state: EnvelopeState::Committed }
    }

    pub fn state(&self) -> EnvelopeState {
        self.state
    }

    pub fn commitment_hex(&self) -> String {
        hex::encode(self.commitment)
    }

    pub fn nonce_hex(&self) -> String {
        hex::encode(self.nonce)
    }

    /// Reveals the envelope, returning the entropy iff the commitment checks
    /// out against H(entropy || nonce).
    pub fn reveal(&mut self) -> Result<VerifiedEntropy, EntropyError> {
        if self.state == EnvelopeState::Revealed {
            return Err(EntropyError::DoubleReveal);
        }
        if sha256_parts(&[&self.entropy, &self.nonce]) != self.commitment {
            return Err(EntropyError::CommitmentMismatch);
        }
        self.state = EnvelopeState::Revealed;
        Ok(VerifiedEntropy { entropy: self.entropy })
    }

    /// Governance-internal stream derivation for components that run before
    /// the reveal (candidate expansion). The scorer never receives the
    /// envelope, so this stays inside the crate.
    pub(crate) fn committed_stream(&self, label: &str) -> RandomStream {
        RandomStream::from_entropy(&self.entropy, label)
    }

    /// Leaks the raw bytes without a reveal. Exists solely so the harness can
    /// model the entropy-exposure ablation; not part of the normal protocol.
    pub(crate) fn leak_for_exposure_ablation(&self) -> [u8; 32] {
        self.entropy
    }

    #[cfg(test)]
    pub(crate) fn corrupt_commitment(&mut self) {
        self.commitment[0] ^= 0x01;
    }
}

/// Entropy whose commitment has been verified at reveal time.
#[derive(Debug, Clone, Copy)]
pub struct VerifiedEntropy {
    entropy: [u8; 32],
}

impl VerifiedEntropy {
    pub fn hex(&self) -> String {
        hex::encode(self.entropy)
    }

    pub fn stream(&self, label: &str) -> RandomStream {
        RandomStream::from_entropy(&self.entropy, label)
    }
}

/// Recomputes a commitment from revealed hex fields, for audit verification.
pub fn recompute_commitment_hex(entropy_hex: &str, nonce_hex: &str) -> Option<String> {
    let entropy = hex::decode(entropy_hex).ok()?;
    let nonce = hex::decode(nonce_hex).ok()?;
    if entropy.len() != 32 || nonce.len() != 16 {
        return None;
    }
    Some(hex::encode(sha256_parts(&[&entropy, &nonce])))
}

/// Deterministic labelled random stream: identical (entropy, label) pairs
/// yield identical sequences, distinct labels yield independent ones.
pub struct RandomStream {
    label: String,
    rng: ChaCha8Rng,
}

impl RandomStream {
    fn from_entropy(entropy: &[u8; 32], label: &str) -> RandomStream {
        let seed = sha256_parts(&[entropy, label.as_bytes()]);
        RandomStream { label: label.to_string(), rng: ChaCha8Rng::from_seed(seed) }
    }

    /// Stream for an already-leaked entropy value (exposure ablations and
    /// attacker-side simulation).
    pub fn from_raw_entropy(entropy: &[u8; 32], label: &str) -> RandomStream {
        RandomStream::from_entropy(entropy, label)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Uniform draw in [0, 1).
    pub fn next_f64(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform index in [0, n).
    pub fn next_index(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        let draw = self.next_f64();
        ((draw * n as f64) as usize).min(n - 1)
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.next_index(i + 1);
            items.swap(i, j);
        }
    }
}
