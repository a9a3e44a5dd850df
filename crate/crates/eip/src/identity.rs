//! Self-certified ephemeral identifiers.
//!
//! A sender generates a key pair, self-signs a [`Certificate`] naming its
//! locator, the destination, a validity window, and the public key, then
//! derives its 128-bit [`Identifier`]: a 7-bit prefix marking the address as
//! certified, followed by the low 121 bits of a keyed MAC over the whole
//! certificate. The MAC key is the SHA3-256 digest of the sender's public
//! key, so anyone holding the certificate can recompute the binding but
//! nobody can claim a chosen identifier without exhibiting a matching key.
//!
//! Receivers run four checks in a fixed order (destination ownership,
//! temporal validity, identifier binding, signature) and report the first
//! failure, then remember verified senders in a [`Whitelist`] for the
//! certificate lifetime plus twice the assumed clock error.

use std::collections::HashMap;
use std::fmt;
use std::net::{IpAddr, Ipv4Addr, Ipv6Addr};
use std::str::FromStr;

use crate::crypto::{self, KeyPair, Reader, SuiteId};
use crate::{Error, Result};

/// Bits of an identifier occupied by the MAC tag.
pub const TAG_BITS: u16 = 121;

/// Certificate encoding version.
pub const CERT_VERSION: u8 = 0x01;

/// 7-bit prefix that marks an address as a certified identifier.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Prefix(u8);

impl Prefix {
    pub const DEFAULT: Prefix = Prefix(0b0000001);

    pub fn new(bits: u8) -> Result<Self> {
        if bits >= 0x80 {
            return Err(Error::Config(format!("prefix {bits:#x} wider than 7 bits")));
        }
        Ok(Prefix(bits))
    }

    pub fn bits(self) -> u8 {
        self.0
    }
}

impl Default for Prefix {
    fn default() -> Self {
        Prefix::DEFAULT
    }
}

/// A 128-bit ephemeral identifier: 7-bit prefix, 121-bit MAC tag.
///
/// Identifiers live in the IPv6 address space and display in IPv6 notation.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Identifier(u128);

impl Identifier {
    pub fn from_parts(prefix: Prefix, tag: u128) -> Self {
        let tag = tag & ((1u128 << TAG_BITS) - 1);
        Identifier((u128::from(prefix.bits()) << TAG_BITS) | tag)
    }

    pub const fn from_u128(value: u128) -> Self {
        Identifier(value)
    }

    pub const fn as_u128(self) -> u128 {
        self.0
    }

    pub const fn to_bytes(self) -> [u8; 16] {
        self.0.to_be_bytes()
    }

    pub const fn from_bytes(bytes: [u8; 16]) -> Self {
        Identifier(u128::from_be_bytes(bytes))
    }

    /// The top 7 bits.
    pub const fn prefix_bits(self) -> u8 {
        (self.0 >> TAG_BITS) as u8
    }

    /// The low 121 bits.
    pub const fn tag(self) -> u128 {
        self.0 & ((1u128 << TAG_BITS) - 1)
    }

    pub fn has_prefix(self, prefix: Prefix) -> bool {
        self.prefix_bits() == prefix.bits()
    }

    pub const fn to_ipv6(self) -> Ipv6Addr {
        Ipv6Addr::from_bits(self.0)
    }
}

impl fmt::Display for Identifier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.to_ipv6().fmt(f)
    }
}

impl fmt::Debug for Identifier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Identifier({})", self.to_ipv6())
    }
}

impl FromStr for Identifier {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let addr: Ipv6Addr = s
            .parse()
            .map_err(|e| Error::Config(format!("bad identifier {s:?}: {e}")))?;
        Ok(Identifier(addr.to_bits()))
    }
}

/// A routable address of the underlying network. Encoded with a one-byte
/// family marker (0x04 or 0x06) followed by the raw address bytes.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Locator(pub IpAddr);

impl Locator {
    pub const fn v4(a: u8, b: u8, c: u8, d: u8) -> Self {
        Locator(IpAddr::V4(Ipv4Addr::new(a, b, c, d)))
    }

    pub fn encoded_len(&self) -> usize {
        match self.0 {
            IpAddr::V4(_) => 5,
            IpAddr::V6(_) => 17,
        }
    }

    pub fn encode_into(&self, out: &mut Vec<u8>) {
        match self.0 {
            IpAddr::V4(a) => {
                out.push(0x04);
                out.extend_from_slice(&a.octets());
            }
            IpAddr::V6(a) => {
                out.push(0x06);
                out.extend_from_slice(&a.octets());
            }
        }
    }

    pub(crate) fn decode_from(r: &mut Reader) -> Result<Self> {
        match r.u8()? {
            0x04 => {
                let octets: [u8; 4] = r.take(4)?.try_into().unwrap();
                Ok(Locator(IpAddr::V4(octets.into())))
            }
            0x06 => {
                let octets: [u8; 16] = r.take(16)?.try_into().unwrap();
                Ok(Locator(IpAddr::V6(octets.into())))
            }
            other => Err(Error::malformed("locator", format!("family byte {other:#04x}"))),
        }
    }
}

impl fmt::Display for Locator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl fmt::Debug for Locator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Locator({})", self.0)
    }
}

impl From<IpAddr> for Locator {
    fn from(addr: IpAddr) -> Self {
        Locator(addr)
    }
}

impl FromStr for Locator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let addr: IpAddr = s
            .parse()
            .map_err(|e| Error::Config(format!("bad locator {s:?}: {e}")))?;
        Ok(Locator(addr))
    }
}

/// A self-signed certificate binding a key to a destination and a window.
///
/// Canonical encoding, all integers big-endian:
/// `version 0x01 || suite || loc_src || loc_dst || id_dst (16) ||
/// duration (4) || time (8) || key len (2) || key || sig len (2) || sig`.
/// The signature covers everything before it.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Certificate {
    pub suite: SuiteId,
    pub loc_src: Locator,
    pub loc_dst: Locator,
    pub id_dst: Identifier,
    pub duration_secs: u32,
    pub time: u64,
    pub public_key: Vec<u8>,
    pub signature: Vec<u8>,
}

impl Certificate {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = self.signed_portion();
        out.extend_from_slice(&(self.signature.len() as u16).to_be_bytes());
        out.extend_from_slice(&self.signature);
        out
    }

    /// The bytes the signature is computed over: the full encoding minus the
    /// trailing signature field.
    pub fn signed_portion(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64 + self.public_key.len());
        out.push(CERT_VERSION);
        out.push(self.suite.code());
        self.loc_src.encode_into(&mut out);
        self.loc_dst.encode_into(&mut out);
        out.extend_from_slice(&self.id_dst.to_bytes());
        out.extend_from_slice(&self.duration_secs.to_be_bytes());
        out.extend_from_slice(&self.time.to_be_bytes());
        out.extend_from_slice(&(self.public_key.len() as u16).to_be_bytes());
        out.extend_from_slice(&self.public_key);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, "certificate");
        let cert = Self::decode_from(&mut r)?;
        r.finish()?;
        Ok(cert)
    }

    /// Decode one certificate from the cursor, leaving any following bytes
    /// for the caller. The encoding is self-delimiting.
    pub(crate) fn decode_from(r: &mut Reader) -> Result<Self> {
        let version = r.u8()?;
        if version != CERT_VERSION {
            return Err(Error::malformed("certificate", format!("version {version:#04x}")));
        }
        let suite = SuiteId::from_code(r.u8()?)?;
        let loc_src = Locator::decode_from(r)?;
        let loc_dst = Locator::decode_from(r)?;
        let id_dst = Identifier::from_bytes(r.take(16)?.try_into().unwrap());
        let duration_secs = r.u32()?;
        if duration_secs == 0 {
            return Err(Error::ZeroDuration);
        }
        let time = r.u64()?;
        let public_key = r.vec16()?;
        let signature = r.vec16()?;
        Ok(Certificate {
            suite,
            loc_src,
            loc_dst,
            id_dst,
            duration_secs,
            time,
            public_key,
            signature,
        })
    }
}

/// Inputs for [`generate_certificate`].
#[derive(Clone, Debug)]
pub struct CertParams {
    pub suite: SuiteId,
    pub loc_src: Locator,
    pub loc_dst: Locator,
    pub id_dst: Identifier,
    pub duration_secs: u32,
    pub time: u64,
}

/// Build and sign a certificate, returning it together with the identifier
/// it binds the key to.
pub fn generate_certificate(
    params: &CertParams,
    keypair: &KeyPair,
    prefix: Prefix,
) -> Result<(Certificate, Identifier)> {
    if params.duration_secs == 0 {
        return Err(Error::ZeroDuration);
    }
    let mut cert = Certificate {
        suite: params.suite,
        loc_src: params.loc_src,
        loc_dst: params.loc_dst,
        id_dst: params.id_dst,
        duration_secs: params.duration_secs,
        time: params.time,
        public_key: keypair.public_key_bytes().to_vec(),
        signature: Vec::new(),
    };
    cert.signature = keypair.sign(&cert.signed_portion())?;
    let id = derive_identifier(&cert, prefix);
    Ok((cert, id))
}

/// Recompute the identifier a certificate binds: prefix plus the low 121
/// bits of the suite MAC over the full certificate encoding, keyed by the
/// SHA3-256 digest of the sender's public key.
pub fn derive_identifier(cert: &Certificate, prefix: Prefix) -> Identifier {
    let key = crypto::hash(&cert.public_key);
    let tag = crypto::mac(cert.suite, key.as_bytes(), &cert.encode())
        .expect("digest-sized MAC key is never empty");
    let low = crypto::lsb_truncate(&tag, TAG_BITS).expect("121 is in range");
    Identifier::from_parts(prefix, low.as_u128())
}

/// Receiver-side acceptance policy.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VerifyPolicy {
    /// Assumed bound on clock skew between sender and receiver, in seconds.
    pub clock_error_secs: u64,
    /// Longest certificate lifetime the receiver accepts.
    pub max_duration_secs: u32,
}

impl Default for VerifyPolicy {
    fn default() -> Self {
        VerifyPolicy { clock_error_secs: 5, max_duration_secs: 3600 }
    }
}

/// Why a certificate was rejected. Ordered by the check that fires first.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RejectReason {
    /// The certificate names a destination identifier the receiver does not own.
    UnknownDestination,
    /// Requested lifetime exceeds the receiver's policy.
    DurationExceeded,
    /// Issued in the future or already expired, beyond the clock-error slack.
    TemporallyInvalid,
    /// The claimed source identifier does not match the certificate.
    IdentifierMismatch,
    /// The self-signature does not verify under the embedded key.
    InvalidSignature,
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RejectReason::UnknownDestination => "unknown destination",
            RejectReason::DurationExceeded => "duration exceeds policy",
            RejectReason::TemporallyInvalid => "outside validity window",
            RejectReason::IdentifierMismatch => "identifier does not match certificate",
            RejectReason::InvalidSignature => "invalid signature",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Accept,
    Reject(RejectReason),
}

impl Verdict {
    pub fn is_accept(self) -> bool {
        matches!(self, Verdict::Accept)
    }
}

/// Run the four receiver checks in order and report the first failure.
///
/// 1. The certificate must name one of the receiver's own identifiers.
/// 2. It must be temporally valid: lifetime within policy, not issued more
///    than `clock_error` in the future, not past `time + duration` plus
///    twice the clock error.
/// 3. The claimed source identifier must equal the derived one.
/// 4. The self-signature must verify.
pub fn verify(
    cert: &Certificate,
    claimed_src: Identifier,
    own_ids: &[Identifier],
    now: u64,
    policy: &VerifyPolicy,
    prefix: Prefix,
) -> Verdict {
    if !own_ids.contains(&cert.id_dst) {
        return Verdict::Reject(RejectReason::UnknownDestination);
    }

    let eps = policy.clock_error_secs;
    if cert.duration_secs > policy.max_duration_secs {
        return Verdict::Reject(RejectReason::DurationExceeded);
    }
    if cert.time > now.saturating_add(eps) {
        return Verdict::Reject(RejectReason::TemporallyInvalid);
    }
    let expiry = cert
        .time
        .saturating_add(u64::from(cert.duration_secs))
        .saturating_add(2 * eps);
    if now > expiry {
        return Verdict::Reject(RejectReason::TemporallyInvalid);
    }

    if derive_identifier(cert, prefix) != claimed_src {
        return Verdict::Reject(RejectReason::IdentifierMismatch);
    }

    if !crypto::verify(&cert.public_key, &cert.signed_portion(), &cert.signature) {
        return Verdict::Reject(RejectReason::InvalidSignature);
    }

    Verdict::Accept
}

/// Verified senders, each trusted until its certificate expiry plus twice
/// the clock error.
#[derive(Clone, Debug, Default)]
pub struct Whitelist {
    entries: HashMap<Identifier, u64>,
    clock_error_secs: u64,
}

impl Whitelist {
    pub fn new(clock_error_secs: u64) -> Self {
        Whitelist { entries: HashMap::new(), clock_error_secs }
    }

    pub fn insert(&mut self, id: Identifier, cert: &Certificate) {
        let expiry = cert
            .time
            .saturating_add(u64::from(cert.duration_secs))
            .saturating_add(2 * self.clock_error_secs);
        let slot = self.entries.entry(id).or_insert(0);
        *slot = (*slot).max(expiry);
    }

    pub fn check(&self, id: Identifier, now: u64) -> bool {
        self.entries.get(&id).is_some_and(|&expiry| now <= expiry)
    }

    pub fn purge_expired(&mut self, now: u64) {
        self.entries.retain(|_, &mut expiry| now <= expiry);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}
