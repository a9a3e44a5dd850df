//! Packet encoding.
//!
//! Every packet carries an encapsulation header (outer locators for routing,
//! inner identifiers for the endpoints), an optional security header, and a
//! payload. Legacy traffic is a packet with no security header.
//!
//! Layout, all integers big-endian:
//! `outer_src || outer_dst || inner_src (16) || inner_dst (16) ||
//! sec present (1) || [version (1) || msg type (1) || suite (1) ||
//! body len (2) || body] || payload len (2) || payload || padding`.
//! Locators encode as a family byte plus address bytes. CHALLENGE packets
//! are zero-padded up to the configured nominal size so response packets are
//! never larger than the requests that elicit them; decoding tolerates only
//! all-zero trailing bytes.

use std::fmt;
use std::str::FromStr;

use crate::crypto::{Reader, SuiteId};
use crate::identity::{Certificate, Identifier, Locator};
use crate::puzzle::{Challenge, Solution};
use crate::{Error, Result};

pub const WIRE_VERSION: u8 = 0x01;

/// Nominal sizes, in bits, of the three packet classes the bandwidth model
/// reasons about: a bare request, a request carrying a certificate, and a
/// challenge. The simulator charges these same sizes so its traffic volumes
/// stay comparable with the closed-form predictions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SizeConstants {
    pub d_req_bits: u64,
    pub d_req_cert_bits: u64,
    pub d_puz_bits: u64,
}

impl SizeConstants {
    pub fn preset(preset: Preset) -> Self {
        match preset {
            Preset::PaperText => SizeConstants {
                d_req_bits: 800,
                d_req_cert_bits: 3600,
                d_puz_bits: 2176,
            },
            Preset::Table2Replication => SizeConstants {
                d_req_bits: 800,
                d_req_cert_bits: 3600,
                d_puz_bits: 1276,
            },
        }
    }

    pub fn d_puz_bytes(&self) -> usize {
        ((self.d_puz_bits + 7) / 8) as usize
    }
}

impl Default for SizeConstants {
    fn default() -> Self {
        SizeConstants::preset(Preset::PaperText)
    }
}

/// Bundled size-constant sets. They differ only in the challenge size used
/// by the bandwidth model: `paper-text` counts 2176 bits per challenge,
/// `table2-replication` 1276.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    PaperText,
    Table2Replication,
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::PaperText => "paper-text",
            Preset::Table2Replication => "table2-replication",
        })
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper-text" => Ok(Preset::PaperText),
            "table2-replication" => Ok(Preset::Table2Replication),
            other => Err(Error::Config(format!(
                "unknown preset {other:?}, expected paper-text or table2-replication"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MsgType {
    DataWithCert = 0x01,
    DataWhitelisted = 0x02,
    Challenge = 0x03,
    SolutionRetry = 0x04,
}

impl MsgType {
    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0x01 => Ok(MsgType::DataWithCert),
            0x02 => Ok(MsgType::DataWhitelisted),
            0x03 => Ok(MsgType::Challenge),
            0x04 => Ok(MsgType::SolutionRetry),
            other => Err(Error::malformed("packet", format!("msg type {other:#04x}"))),
        }
    }
}

/// Outer locators route the packet; inner identifiers name the endpoints.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EncapHeader {
    pub outer_src: Locator,
    pub outer_dst: Locator,
    pub inner_src: Identifier,
    pub inner_dst: Identifier,
}

impl EncapHeader {
    pub fn encoded_len(&self) -> usize {
        self.outer_src.encoded_len() + self.outer_dst.encoded_len() + 32
    }
}

/// Contents of the security header, tagged by message type on the wire.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SecurityBody {
    /// First contact: the sender's certificate rides along.
    DataWithCert(Certificate),
    /// Sender claims an already-whitelisted identifier; no certificate.
    DataWhitelisted,
    /// Receiver's puzzle.
    Challenge(Challenge),
    /// Solved puzzle echoed with its solution and the certificate again.
    SolutionRetry {
        challenge: Challenge,
        solution: Solution,
        cert: Certificate,
    },
}

impl SecurityBody {
    pub fn msg_type(&self) -> MsgType {
        match self {
            SecurityBody::DataWithCert(_) => MsgType::DataWithCert,
            SecurityBody::DataWhitelisted => MsgType::DataWhitelisted,
            SecurityBody::Challenge(_) => MsgType::Challenge,
            SecurityBody::SolutionRetry { .. } => MsgType::SolutionRetry,
        }
    }

    fn encode(&self) -> Vec<u8> {
        match self {
            SecurityBody::DataWithCert(cert) => cert.encode(),
            SecurityBody::DataWhitelisted => Vec::new(),
            SecurityBody::Challenge(ch) => ch.encode(),
            SecurityBody::SolutionRetry { challenge, solution, cert } => {
                let mut out = challenge.encode();
                let nbytes = challenge.secret_bytes();
                out.extend_from_slice(&solution.c.to_be_bytes()[16 - nbytes..]);
                out.extend_from_slice(&cert.encode());
                out
            }
        }
    }

    fn decode(msg_type: MsgType, body: &[u8]) -> Result<Self> {
        let mut r = Reader::new(body, "security body");
        let parsed = match msg_type {
            MsgType::DataWithCert => SecurityBody::DataWithCert(Certificate::decode_from(&mut r)?),
            MsgType::DataWhitelisted => SecurityBody::DataWhitelisted,
            MsgType::Challenge => SecurityBody::Challenge(Challenge::decode_from(&mut r)?),
            MsgType::SolutionRetry => {
                let challenge = Challenge::decode_from(&mut r)?;
                let nbytes = challenge.secret_bytes();
                let mut be = [0u8; 16];
                be[16 - nbytes..].copy_from_slice(r.take(nbytes)?);
                let solution = Solution { c: u128::from_be_bytes(be) };
                let cert = Certificate::decode_from(&mut r)?;
                SecurityBody::SolutionRetry { challenge, solution, cert }
            }
        };
        r.finish()?;
        Ok(parsed)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SecurityHeader {
    pub suite: SuiteId,
    pub body: SecurityBody,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Packet {
    pub encap: EncapHeader,
    /// Absent on legacy traffic.
    pub sec: Option<SecurityHeader>,
    pub payload: Vec<u8>,
}

impl Packet {
    pub fn msg_type(&self) -> Option<MsgType> {
        self.sec.as_ref().map(|s| s.body.msg_type())
    }
}

/// Packet encoder/decoder. `challenge_pad_to` grows encoded CHALLENGE
/// packets to a fixed nominal size (never truncates).
#[derive(Clone, Copy, Debug)]
pub struct Codec {
    pub challenge_pad_to: Option<usize>,
}

impl Codec {
    pub fn new(challenge_pad_to: Option<usize>) -> Self {
        Codec { challenge_pad_to }
    }

    /// Pad challenges to the nominal challenge size of `sizes`.
    pub fn for_sizes(sizes: &SizeConstants) -> Self {
        Codec { challenge_pad_to: Some(sizes.d_puz_bytes()) }
    }

    pub fn encode(&self, packet: &Packet) -> Vec<u8> {
        let mut out = Vec::with_capacity(64 + packet.payload.len());
        packet.encap.outer_src.encode_into(&mut out);
        packet.encap.outer_dst.encode_into(&mut out);
        out.extend_from_slice(&packet.encap.inner_src.to_bytes());
        out.extend_from_slice(&packet.encap.inner_dst.to_bytes());
        match &packet.sec {
            None => out.push(0x00),
            Some(sec) => {
                out.push(0x01);
                out.push(WIRE_VERSION);
                out.push(sec.body.msg_type() as u8);
                out.push(sec.suite.code());
                let body = sec.body.encode();
                assert!(body.len() <= u16::MAX as usize);
                out.extend_from_slice(&(body.len() as u16).to_be_bytes());
                out.extend_from_slice(&body);
            }
        }
        assert!(packet.payload.len() <= u16::MAX as usize);
        out.extend_from_slice(&(packet.payload.len() as u16).to_be_bytes());
        out.extend_from_slice(&packet.payload);
        if packet.msg_type() == Some(MsgType::Challenge) {
            if let Some(target) = self.challenge_pad_to {
                if out.len() < target {
                    out.resize(target, 0);
                }
            }
        }
        out
    }

    pub fn decode(&self, bytes: &[u8]) -> Result<Packet> {
        let mut r = Reader::new(bytes, "packet");
        let outer_src = Locator::decode_from(&mut r)?;
        let outer_dst = Locator::decode_from(&mut r)?;
        let inner_src = Identifier::from_bytes(r.take(16)?.try_into().unwrap());
        let inner_dst = Identifier::from_bytes(r.take(16)?.try_into().unwrap());
        let sec = match r.u8()? {
            0x00 => None,
            0x01 => {
                let version = r.u8()?;
                if version != WIRE_VERSION {
                    return Err(Error::malformed("packet", format!("version {version:#04x}")));
                }
                let msg_type = MsgType::from_code(r.u8()?)?;
                let suite = SuiteId::from_code(r.u8()?)?;
                let body_len = r.u16()? as usize;
                let body = SecurityBody::decode(msg_type, r.take(body_len)?)?;
                Some(SecurityHeader { suite, body })
            }
            other => {
                return Err(Error::malformed(
                    "packet",
                    format!("security presence byte {other:#04x}"),
                ))
            }
        };
        let payload = r.vec16()?;
        while r.remaining() > 0 {
            if r.u8()? != 0 {
                return Err(Error::malformed(
                    "packet",
                    format!("nonzero padding at byte {}", r.position() - 1),
                ));
            }
        }
        Ok(Packet {
            encap: EncapHeader { outer_src, outer_dst, inner_src, inner_dst },
            sec,
            payload,
        })
    }
}

impl Default for Codec {
    fn default() -> Self {
        Codec::for_sizes(&SizeConstants::default())
    }
}
