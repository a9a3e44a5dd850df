//! Cryptographic primitives: SHA3-256 hashing, pluggable keyed MACs,
//! RSA signatures, and least-significant-bit truncation.
//!
//! Two MAC suites are supported. The default computes HMAC (RFC 2104) over
//! SHA3-256. The alternative derives the tag from AES-GMAC-256 for
//! environments with AES hardware offload. Signatures are 1024-bit RSA
//! PKCS#1 v1.5 over a SHA3-256 digest of the message.
//!
//! All digests and tags are 256 bits. Identifier tags and puzzle secrets are
//! cut out of them by [`lsb_truncate`], which keeps the low `n` bits of the
//! digest interpreted as a big-endian integer.

use std::fmt;
use std::str::FromStr;

use hmac::{Hmac, Mac};
use rand::{CryptoRng, RngCore};
use rsa::traits::{PrivateKeyParts, PublicKeyParts};
use rsa::{BigUint, Pkcs1v15Sign, RsaPrivateKey, RsaPublicKey};
use sha3::{Digest, Sha3_256};

use crate::{Error, Result};

/// Byte length of every digest and MAC tag.
pub const DIGEST_LEN: usize = 32;

/// Modulus size used when generating signing keys.
pub const DEFAULT_RSA_BITS: usize = 1024;

/// Keyed-MAC suite selector, serialized as one byte on the wire.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub enum SuiteId {
    /// HMAC over SHA3-256.
    #[default]
    HmacSha3_256,
    /// Tag built from AES-GMAC-256 invocations.
    AesGmac256,
}

impl SuiteId {
    pub const fn code(self) -> u8 {
        match self {
            SuiteId::HmacSha3_256 => 0x01,
            SuiteId::AesGmac256 => 0x02,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0x01 => Ok(SuiteId::HmacSha3_256),
            0x02 => Ok(SuiteId::AesGmac256),
            other => Err(Error::UnknownSuite(other)),
        }
    }
}

impl fmt::Display for SuiteId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SuiteId::HmacSha3_256 => "hmac-sha3",
            SuiteId::AesGmac256 => "aes-gmac",
        })
    }
}

impl FromStr for SuiteId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hmac-sha3" => Ok(SuiteId::HmacSha3_256),
            "aes-gmac" => Ok(SuiteId::AesGmac256),
            other => Err(Error::Config(format!(
                "unknown suite {other:?}, expected hmac-sha3 or aes-gmac"
            ))),
        }
    }
}

/// A 256-bit digest or MAC tag.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Digest256([u8; DIGEST_LEN]);

impl Digest256 {
    pub const fn from_bytes(bytes: [u8; DIGEST_LEN]) -> Self {
        Digest256(bytes)
    }

    pub const fn as_bytes(&self) -> &[u8; DIGEST_LEN] {
        &self.0
    }
}

impl fmt::Debug for Digest256 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest256(")?;
        for b in self.0 {
            write!(f, "{b:02x}")?;
        }
        write!(f, ")")
    }
}

/// SHA3-256 of `data`.
pub fn hash(data: &[u8]) -> Digest256 {
    Digest256(Sha3_256::digest(data).into())
}

/// Keyed MAC of `data` under the selected suite. The key must be non-empty;
/// both suites accept keys of any positive length.
pub fn mac(suite: SuiteId, key: &[u8], data: &[u8]) -> Result<Digest256> {
    if key.is_empty() {
        return Err(Error::EmptyMacKey);
    }
    match suite {
        SuiteId::HmacSha3_256 => {
            let mut m = <Hmac<Sha3_256> as Mac>::new_from_slice(key)
                .expect("HMAC accepts any non-empty key length");
            m.update(data);
            Ok(Digest256(m.finalize().into_bytes().into()))
        }
        SuiteId::AesGmac256 => Ok(gmac_digest(key, data)),
    }
}

/// 256-bit tag from AES-GMAC-256: two GMAC invocations (GCM with empty
/// plaintext, the message as associated data) under domain-separated nonces
/// derived from the data length and suite code. The primary invocation fills
/// the low half of the tag so LSB truncation consumes it first.
fn gmac_digest(key: &[u8], data: &[u8]) -> Digest256 {
    use aes_gcm::aead::{Aead, KeyInit, Payload};
    use aes_gcm::{Aes256Gcm, Nonce};

    let key32: [u8; 32] = if key.len() == 32 {
        key.try_into().unwrap()
    } else {
        *hash(key).as_bytes()
    };
    let cipher = Aes256Gcm::new(&key32.into());

    let len_be = (data.len() as u64).to_be_bytes();
    let mut nonce_input = Vec::with_capacity(10);
    nonce_input.extend_from_slice(&len_be);
    nonce_input.push(SuiteId::AesGmac256.code());

    let tag = |cipher: &Aes256Gcm, nonce_seed: &[u8]| -> [u8; 16] {
        let nonce_bytes = hash(nonce_seed);
        let nonce = Nonce::from_slice(&nonce_bytes.as_bytes()[..12]);
        let out = cipher
            .encrypt(nonce, Payload { msg: &[], aad: data })
            .expect("GMAC over in-memory data cannot fail");
        out.try_into().expect("empty-plaintext GCM output is the 16-byte tag")
    };

    let mut bytes = [0u8; DIGEST_LEN];
    bytes[16..32].copy_from_slice(&tag(&cipher, &nonce_input));
    nonce_input.push(0x01);
    bytes[0..16].copy_from_slice(&tag(&cipher, &nonce_input));
    Digest256(bytes)
}

/// The low `nbits` of a 256-bit digest. Stored as 32 big-endian bytes with
/// every discarded high bit forced to zero.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct BitStr256 {
    bytes: [u8; DIGEST_LEN],
    nbits: u16,
}

impl BitStr256 {
    pub fn nbits(&self) -> u16 {
        self.nbits
    }

    pub fn bytes_be(&self) -> &[u8; DIGEST_LEN] {
        &self.bytes
    }

    /// Value of the low 128 bits. Lossless whenever `nbits <= 128`.
    pub fn as_u128(&self) -> u128 {
        u128::from_be_bytes(self.bytes[16..32].try_into().unwrap())
    }

    /// Further truncation to `nbits <= self.nbits()`.
    pub fn low_bits(&self, nbits: u16) -> Result<BitStr256> {
        if nbits == 0 || nbits > self.nbits {
            return Err(Error::BitCount(nbits));
        }
        lsb_truncate(&Digest256(self.bytes), nbits)
    }
}

impl fmt::Debug for BitStr256 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitStr256[{}](", self.nbits)?;
        for b in self.bytes {
            write!(f, "{b:02x}")?;
        }
        write!(f, ")")
    }
}

/// Keep the low `nbits` (1..=256) of `digest` as a big-endian integer, zeroing
/// everything above.
pub fn lsb_truncate(digest: &Digest256, nbits: u16) -> Result<BitStr256> {
    if nbits == 0 || nbits > 256 {
        return Err(Error::BitCount(nbits));
    }
    let mut bytes = *digest.as_bytes();
    let kept_bytes = (usize::from(nbits) + 7) / 8;
    let boundary = DIGEST_LEN - kept_bytes;
    for b in &mut bytes[..boundary] {
        *b = 0;
    }
    let rem = nbits % 8;
    if rem != 0 {
        bytes[boundary] &= (1u8 << rem) - 1;
    }
    Ok(BitStr256 { bytes, nbits })
}

/// Signature scheme selector, serialized as one byte in key files.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SignatureScheme {
    RsaPkcs1V15,
}

impl SignatureScheme {
    pub const fn code(self) -> u8 {
        0x01
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0x01 => Ok(SignatureScheme::RsaPkcs1V15),
            other => Err(Error::UnknownSignatureScheme(other)),
        }
    }
}

/// An RSA signing key plus its canonical public encoding.
///
/// The public encoding is `2-byte modulus length || modulus || 2-byte exponent
/// length || exponent`, big-endian with no leading zero bytes, so identical
/// keys always encode identically.
#[derive(Clone)]
pub struct KeyPair {
    private: RsaPrivateKey,
    public_encoded: Vec<u8>,
}

impl KeyPair {
    /// Generate a fresh RSA key. A seeded RNG makes generation reproducible.
    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R, bits: usize) -> Result<Self> {
        let private = RsaPrivateKey::new(rng, bits).map_err(Error::KeyGen)?;
        let public_encoded = encode_public(&private.to_public_key());
        Ok(KeyPair { private, public_encoded })
    }

    pub fn public_key_bytes(&self) -> &[u8] {
        &self.public_encoded
    }

    /// Sign SHA3-256(`data`) with PKCS#1 v1.5 padding.
    pub fn sign(&self, data: &[u8]) -> Result<Vec<u8>> {
        let digest = hash(data);
        self.private
            .sign(Pkcs1v15Sign::new::<Sha3_256>(), digest.as_bytes())
            .map_err(Error::Sign)
    }

    /// Serialize the private key: scheme byte followed by length-prefixed
    /// n, e, d, p, q components.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = vec![SignatureScheme::RsaPkcs1V15.code()];
        let primes = self.private.primes();
        let components: [&BigUint; 5] = [
            self.private.n(),
            self.private.e(),
            self.private.d(),
            &primes[0],
            &primes[1],
        ];
        for c in components {
            push_biguint(&mut out, c);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, "private key");
        SignatureScheme::from_code(r.u8()?)?;
        let n = r.biguint()?;
        let e = r.biguint()?;
        let d = r.biguint()?;
        let p = r.biguint()?;
        let q = r.biguint()?;
        r.finish()?;
        let private = RsaPrivateKey::from_components(n, e, d, vec![p, q])
            .map_err(|e| Error::malformed("private key", e.to_string()))?;
        let public_encoded = encode_public(&private.to_public_key());
        Ok(KeyPair { private, public_encoded })
    }
}

impl fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "KeyPair(rsa-{})", self.private.n().bits())
    }
}

/// Check a PKCS#1 v1.5 signature over SHA3-256(`data`) against a canonical
/// public key encoding. Any decode or verification failure returns false.
pub fn verify(public_key: &[u8], data: &[u8], signature: &[u8]) -> bool {
    let Ok(key) = decode_public(public_key) else {
        return false;
    };
    let digest = hash(data);
    key.verify(Pkcs1v15Sign::new::<Sha3_256>(), digest.as_bytes(), signature)
        .is_ok()
}

fn encode_public(key: &RsaPublicKey) -> Vec<u8> {
    let mut out = Vec::new();
    push_biguint(&mut out, key.n());
    push_biguint(&mut out, key.e());
    out
}

fn decode_public(bytes: &[u8]) -> Result<RsaPublicKey> {
    let mut r = Reader::new(bytes, "public key");
    let n = r.biguint()?;
    let e = r.biguint()?;
    r.finish()?;
    RsaPublicKey::new(n, e).map_err(|e| Error::malformed("public key", e.to_string()))
}

fn push_biguint(out: &mut Vec<u8>, value: &BigUint) {
    let bytes = value.to_bytes_be();
    assert!(bytes.len() <= u16::MAX as usize);
    out.extend_from_slice(&(bytes.len() as u16).to_be_bytes());
    out.extend_from_slice(&bytes);
}

/// Cursor over length-prefixed fields shared by the key codecs.
pub(crate) struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(bytes: &'a [u8], what: &'static str) -> Self {
        Reader { bytes, pos: 0, what }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::malformed(
                self.what,
                format!("truncated at byte {} (need {} more)", self.pos, n),
            ));
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    pub(crate) fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub(crate) fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_be_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn vec16(&mut self) -> Result<Vec<u8>> {
        let len = self.u16()? as usize;
        Ok(self.take(len)?.to_vec())
    }

    fn biguint(&mut self) -> Result<BigUint> {
        Ok(BigUint::from_bytes_be(&self.vec16()?))
    }

    pub(crate) fn position(&self) -> usize {
        self.pos
    }

    pub(crate) fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    pub(crate) fn finish(self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::malformed(
                self.what,
                format!("{} trailing bytes", self.bytes.len() - self.pos),
            ));
        }
        Ok(())
    }
}
