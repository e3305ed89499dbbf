//! Hashing and signature primitives used by the ledger and consensus layers.
//!
//! Two interchangeable signature schemes sit behind [`SigScheme`]:
//!
//! * [`SigScheme::Ed25519`] — real Ed25519 via `ed25519-dalek`. Keys are
//!   derived deterministically from the entity's RNG stream so runs stay
//!   reproducible.
//! * [`SigScheme::FastMac`] — a hash-based stand-in producing a 64-byte tag
//!   `H(pk ∥ msg) ∥ H(H(pk ∥ msg))`. It keeps the same sign/verify shape and
//!   rejects corrupted messages, but is *not* unforgeable (anyone holding the
//!   public key can recompute the tag). It exists purely to take elliptic
//!   curve math out of large performance runs; the simulation's adversary
//!   never exploits the difference.
//!
//! Both schemes use 32-byte public keys and 64-byte signatures, so wire and
//! ledger formats are identical regardless of which one a scenario selects.

use ed25519_dalek::{Signature, Signer, SigningKey, VerifyingKey};
pub use sha2::{Digest, Sha256};

use crate::rng::RngStream;

pub const PUBKEY_LEN: usize = 32;
pub const SIG_LEN: usize = 64;

/// SHA-256 of a byte string.
pub fn sha256(bytes: &[u8]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(bytes);
    h.finalize().into()
}

/// SHA-256 over the concatenation of `parts`, without materializing it.
pub fn sha256_parts(parts: &[&[u8]]) -> [u8; 32] {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    h.finalize().into()
}

/// Renders a digest as lowercase hex.
pub fn hex(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

/// Which signature primitive a scenario runs with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SigScheme {
    #[default]
    Ed25519,
    FastMac,
}

impl SigScheme {
    /// Verifies `sig` over `msg` under `public`. Malformed keys or
    /// signatures verify as false rather than erroring: a corrupted
    /// credential is simply an invalid one.
    pub fn verify(self, public: &[u8; PUBKEY_LEN], msg: &[u8], sig: &[u8; SIG_LEN]) -> bool {
        match self {
            SigScheme::Ed25519 => {
                let Ok(vk) = VerifyingKey::from_bytes(public) else {
                    return false;
                };
                let signature = Signature::from_bytes(sig);
                vk.verify_strict(msg, &signature).is_ok()
            }
            SigScheme::FastMac => fastmac_tag(public, msg) == *sig,
        }
    }
}

fn fastmac_tag(public: &[u8; PUBKEY_LEN], msg: &[u8]) -> [u8; SIG_LEN] {
    let h1 = sha256_parts(&[public, msg]);
    let h2 = sha256(&h1);
    let mut tag = [0u8; SIG_LEN];
    tag[..32].copy_from_slice(&h1);
    tag[32..].copy_from_slice(&h2);
    tag
}

/// A signing identity under one [`SigScheme`].
#[derive(Debug, Clone)]
pub struct Keypair {
    scheme: SigScheme,
    public: [u8; PUBKEY_LEN],
    // Present only for Ed25519; FastMac tags derive from the public key.
    signer: Option<SigningKey>,
}

impl Keypair {
    /// Derives a keypair from the entity's RNG stream. The same stream state
    /// always yields the same keys, which is what makes signed runs
    /// reproducible across hosts.
    pub fn from_rng(scheme: SigScheme, rng: &mut RngStream) -> Self {
        let mut secret = [0u8; 32];
        rng.fill_bytes(&mut secret);
        match scheme {
            SigScheme::Ed25519 => {
                let sk = SigningKey::from_bytes(&secret);
                let public = sk.verifying_key().to_bytes();
                Keypair {
                    scheme,
                    public,
                    signer: Some(sk),
                }
            }
            SigScheme::FastMac => {
                // Domain-separated so a FastMac public key can never collide
                // with an Ed25519 point even for identical stream states.
                let public = sha256_parts(&[b"fastmac-public-v1", &secret]);
                Keypair {
                    scheme,
                    public,
                    signer: None,
                }
            }
        }
    }

    pub fn scheme(&self) -> SigScheme {
        self.scheme
    }

    pub fn public(&self) -> [u8; PUBKEY_LEN] {
        self.public
    }

    pub fn sign(&self, msg: &[u8]) -> [u8; SIG_LEN] {
        match self.scheme {
            SigScheme::Ed25519 => self
                .signer
                .as_ref()
                .expect("ed25519 keypair always carries its signing key")
                .sign(msg)
                .to_bytes(),
            SigScheme::FastMac => fastmac_tag(&self.public, msg),
        }
    }
}
