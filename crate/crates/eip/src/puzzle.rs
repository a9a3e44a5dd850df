//! Receiver-generated puzzles.
//!
//! On first contact the receiver answers with a [`Challenge`]: a secret
//! integer `n` of `64 + 2^l` bits with its `k_bm` low bits blanked out, plus
//! the SHA3-256 commitment `h = hash(n || id_src || id_dst)`. The sender
//! brute-forces the blanked bits until a candidate matches `h` and returns
//! the full secret.
//!
//! The secret itself is a PRF output over `(id_src, id_dst, epoch)` under a
//! key only the receiver knows, so the receiver can verify a returned
//! solution by re-deriving `n` instead of remembering every outstanding
//! challenge. Epochs advance on a fixed rotation period; verification
//! accepts a small window of recent epochs so solutions issued just before a
//! rotation still land.

use std::collections::HashMap;

use crate::crypto::{self, Digest256, Reader, SuiteId};
use crate::identity::Identifier;
use crate::{Error, Result};

/// Largest supported hardness level; the secret is `64 + 2^l` bits and must
/// fit in 128.
pub const MAX_LEVEL: u8 = 6;

/// Width in bits of the puzzle secret for level `l`.
pub fn secret_bits(l: u8) -> Result<u16> {
    if l > MAX_LEVEL {
        return Err(Error::PuzzleParam(format!("level {l} exceeds {MAX_LEVEL}")));
    }
    Ok(64 + (1u16 << l))
}

fn low_mask(bits: u8) -> u128 {
    if bits >= 128 {
        u128::MAX
    } else {
        (1u128 << bits) - 1
    }
}

/// An unsolved puzzle as transmitted to the sender.
///
/// Wire form: `l (1) || k_bm (1) || n' (ceil((64 + 2^l) / 8) bytes, big-endian)
/// || h (32)`.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct Challenge {
    /// Hardness level choosing the secret width.
    pub l: u8,
    /// Count of low secret bits the sender must recover.
    pub k_bm: u8,
    /// The secret with its `k_bm` low bits zeroed.
    pub n_prime: u128,
    /// Commitment to the full secret and both identifiers.
    pub h: Digest256,
}

impl Challenge {
    pub fn secret_bits(&self) -> u16 {
        64 + (1u16 << self.l.min(MAX_LEVEL))
    }

    pub fn secret_bytes(&self) -> usize {
        (usize::from(self.secret_bits()) + 7) / 8
    }

    pub fn encoded_len(&self) -> usize {
        2 + self.secret_bytes() + crypto::DIGEST_LEN
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        self.encode_into(&mut out);
        out
    }

    pub(crate) fn encode_into(&self, out: &mut Vec<u8>) {
        out.push(self.l);
        out.push(self.k_bm);
        let nbytes = self.secret_bytes();
        out.extend_from_slice(&self.n_prime.to_be_bytes()[16 - nbytes..]);
        out.extend_from_slice(self.h.as_bytes());
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, "challenge");
        let ch = Self::decode_from(&mut r)?;
        r.finish()?;
        Ok(ch)
    }

    pub(crate) fn decode_from(r: &mut Reader) -> Result<Self> {
        let l = r.u8()?;
        let bits = secret_bits(l).map_err(|_| {
            Error::malformed("challenge", format!("hardness level {l} out of range"))
        })?;
        let k_bm = r.u8()?;
        if k_bm == 0 || u16::from(k_bm) > bits {
            return Err(Error::malformed(
                "challenge",
                format!("k_bm {k_bm} outside 1..={bits}"),
            ));
        }
        let nbytes = (usize::from(bits) + 7) / 8;
        let mut be = [0u8; 16];
        be[16 - nbytes..].copy_from_slice(r.take(nbytes)?);
        let n_prime = u128::from_be_bytes(be);
        if n_prime & low_mask(k_bm) != 0 {
            return Err(Error::malformed("challenge", "masked bits not zero"));
        }
        let h = Digest256::from_bytes(r.take(crypto::DIGEST_LEN)?.try_into().unwrap());
        Ok(Challenge { l, k_bm, n_prime, h })
    }
}

/// A recovered secret. Encoded with the same byte width as the challenge's
/// masked secret.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct Solution {
    pub c: u128,
}

/// Result of a brute-force solve.
#[derive(Clone, Copy, Debug)]
pub struct SolveOutcome {
    pub solution: Solution,
    /// Candidates hashed before the commitment matched.
    pub trials: u64,
}

/// Verdict on a returned solution plus the PRF work it cost the receiver.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SolutionCheck {
    pub accepted: bool,
    pub mac_computations: u32,
}

fn commitment(c: u128, nbytes: usize, id_src: Identifier, id_dst: Identifier) -> Digest256 {
    let mut data = Vec::with_capacity(nbytes + 32);
    data.extend_from_slice(&c.to_be_bytes()[16 - nbytes..]);
    data.extend_from_slice(&id_src.to_bytes());
    data.extend_from_slice(&id_dst.to_bytes());
    crypto::hash(&data)
}

/// How the receiver checks solutions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VerifyMode {
    /// Re-derive the secret from the PRF; no per-challenge state.
    Stateless,
    /// Remember issued secrets and look them up, trading memory for PRF calls.
    Stored,
}

/// Receiver-side puzzle state: the PRF key, the epoch clock, and (in stored
/// mode) the secrets issued during the acceptance window.
///
/// One issuer serves one hardness level at a time; secrets for the same
/// identifier pair and epoch are suffixes of each other across levels.
#[derive(Clone, Debug)]
pub struct Issuer {
    suite: SuiteId,
    prf_key: [u8; 32],
    rotation_secs: u64,
    epoch_window: u64,
    mode: VerifyMode,
    stored: HashMap<(Identifier, Identifier, u64), u128>,
}

impl Issuer {
    /// `epoch_window` counts accepted epochs including the current one, so 2
    /// tolerates one rotation between issue and solution.
    pub fn new(
        suite: SuiteId,
        prf_key: [u8; 32],
        rotation_secs: u64,
        epoch_window: u64,
        mode: VerifyMode,
    ) -> Result<Self> {
        if rotation_secs == 0 {
            return Err(Error::Config("rotation period must be positive".into()));
        }
        if epoch_window == 0 {
            return Err(Error::Config("epoch window must be positive".into()));
        }
        Ok(Issuer { suite, prf_key, rotation_secs, epoch_window, mode, stored: HashMap::new() })
    }

    pub fn epoch(&self, now: u64) -> u64 {
        now / self.rotation_secs
    }

    fn secret(&self, id_src: Identifier, id_dst: Identifier, epoch: u64, bits: u16) -> u128 {
        let mut input = [0u8; 40];
        input[..16].copy_from_slice(&id_src.to_bytes());
        input[16..32].copy_from_slice(&id_dst.to_bytes());
        input[32..].copy_from_slice(&epoch.to_be_bytes());
        let tag = crypto::mac(self.suite, &self.prf_key, &input)
            .expect("PRF key is never empty");
        crypto::lsb_truncate(&tag, bits).expect("secret width is in range").as_u128()
    }

    /// Issue the current-epoch challenge for this identifier pair. Repeated
    /// calls within one epoch return the identical challenge.
    pub fn issue(
        &mut self,
        id_src: Identifier,
        id_dst: Identifier,
        l: u8,
        k_bm: u8,
        now: u64,
    ) -> Result<Challenge> {
        let bits = secret_bits(l)?;
        if k_bm == 0 || u16::from(k_bm) > bits {
            return Err(Error::PuzzleParam(format!("k_bm {k_bm} outside 1..={bits}")));
        }
        let epoch = self.epoch(now);
        let n = self.secret(id_src, id_dst, epoch, bits);
        if self.mode == VerifyMode::Stored {
            let oldest = epoch.saturating_sub(self.epoch_window - 1);
            self.stored.retain(|&(_, _, e), _| e >= oldest);
            self.stored.insert((id_src, id_dst, epoch), n);
        }
        let nbytes = (usize::from(bits) + 7) / 8;
        Ok(Challenge {
            l,
            k_bm,
            n_prime: n & !low_mask(k_bm),
            h: commitment(n, nbytes, id_src, id_dst),
        })
    }

    /// Check a returned secret against the acceptance window, newest epoch
    /// first. `mac_computations` reports the PRF invocations spent; stored
    /// mode spends none.
    pub fn verify(
        &self,
        solution: Solution,
        l: u8,
        id_src: Identifier,
        id_dst: Identifier,
        h: &Digest256,
        now: u64,
    ) -> Result<SolutionCheck> {
        let bits = secret_bits(l)?;
        let nbytes = (usize::from(bits) + 7) / 8;
        let current = self.epoch(now);
        let oldest = current.saturating_sub(self.epoch_window - 1);
        let mut macs = 0u32;
        for epoch in (oldest..=current).rev() {
            let n = match self.mode {
                VerifyMode::Stateless => {
                    macs += 1;
                    self.secret(id_src, id_dst, epoch, bits)
                }
                VerifyMode::Stored => match self.stored.get(&(id_src, id_dst, epoch)) {
                    Some(&n) => n,
                    None => continue,
                },
            };
            if n == solution.c {
                let accepted = commitment(n, nbytes, id_src, id_dst) == *h;
                return Ok(SolutionCheck { accepted, mac_computations: macs });
            }
        }
        Ok(SolutionCheck { accepted: false, mac_computations: macs })
    }
}

/// Brute-force a challenge: try the masked bits in ascending order, hashing
/// each candidate against the commitment.
pub fn solve(
    challenge: &Challenge,
    id_src: Identifier,
    id_dst: Identifier,
) -> Result<SolveOutcome> {
    let bits = secret_bits(challenge.l)?;
    if challenge.k_bm == 0 || u16::from(challenge.k_bm) > bits {
        return Err(Error::PuzzleParam(format!(
            "k_bm {} outside 1..={bits}",
            challenge.k_bm
        )));
    }
    let mask = low_mask(challenge.k_bm);
    let nbytes = challenge.secret_bytes();
    let mut trials = 0u64;
    let mut m = 0u128;
    loop {
        let candidate = challenge.n_prime | m;
        trials += 1;
        if commitment(candidate, nbytes, id_src, id_dst) == challenge.h {
            return Ok(SolveOutcome { solution: Solution { c: candidate }, trials });
        }
        if m == mask {
            return Err(Error::PuzzleExhausted);
        }
        m += 1;
    }
}

/// Mean candidates an attacker spends to hit one specific target: half the
/// masked space.
pub fn expected_trials(k_bm: u8) -> f64 {
    2f64.powi(i32::from(k_bm) - 1)
}

/// Square-root bound when any one of many concurrently open puzzles will do.
pub fn birthday_bound_trials(k_bm: u8) -> f64 {
    2f64.powf(f64::from(k_bm) / 2.0)
}
