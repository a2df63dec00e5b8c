//! Hashes, addresses and Ed25519 accounts.

use std::fmt;
use std::str::FromStr;

use ed25519_dalek::{Signer, SigningKey, Verifier, VerifyingKey};
use serde::{de, Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// SHA-256 of `data`.
pub fn sha256(data: &[u8]) -> Hash32 {
    Hash32(Sha256::digest(data).into())
}

fn encode_hex(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(2 + bytes.len() * 2);
    s.push_str("0x");
    s.push_str(&hex::encode(bytes));
    s
}

fn decode_hex(s: &str) -> std::result::Result<Vec<u8>, String> {
    let body = s
        .strip_prefix("0x")
        .ok_or_else(|| format!("missing 0x prefix in {s:?}"))?;
    if body.bytes().any(|b| b.is_ascii_uppercase()) {
        return Err(format!("hex must be lowercase: {s:?}"));
    }
    hex::decode(body).map_err(|e| e.to_string())
}

macro_rules! fixed_bytes {
    ($(#[$meta:meta])* $name:ident, $len:expr) => {
        $(#[$meta])*
        #[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
        pub struct $name(pub [u8; $len]);

        impl $name {
            pub const LEN: usize = $len;
            pub const ZERO: $name = $name([0u8; $len]);

            pub fn as_bytes(&self) -> &[u8; $len] {
                &self.0
            }

            pub fn is_zero(&self) -> bool {
                self.0 == [0u8; $len]
            }

            pub fn to_hex(&self) -> String {
                encode_hex(&self.0)
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.to_hex())
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}({})", stringify!($name), self.to_hex())
            }
        }

        impl FromStr for $name {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                let raw = decode_hex(s).map_err(Error::InvalidArgument)?;
                let arr: [u8; $len] = raw.try_into().map_err(|v: Vec<u8>| {
                    Error::InvalidArgument(format!(
                        "expected {} bytes, got {}",
                        $len,
                        v.len()
                    ))
                })?;
                Ok($name(arr))
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
                s.serialize_str(&self.to_hex())
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                s.parse().map_err(de::Error::custom)
            }
        }
    };
}

fixed_bytes!(
    /// 20-byte account or contract identifier.
    Address,
    20
);
fixed_bytes!(
    /// 32-byte SHA-256 digest.
    Hash32,
    32
);

impl Hash32 {
    /// First four bytes as eight hex characters, used in console output.
    pub fn short(&self) -> String {
        hex::encode(&self.0[..4])
    }
}

impl Address {
    /// Last 20 bytes of SHA-256 over `public_key`.
    pub fn from_public_key(public_key: &[u8]) -> Address {
        let digest = sha256(public_key);
        let mut out = [0u8; 20];
        out.copy_from_slice(&digest.0[12..]);
        Address(out)
    }
}

/// Variable-length byte string, hex encoded on the wire.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Bytes(pub Vec<u8>);

impl fmt::Debug for Bytes {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Bytes({})", encode_hex(&self.0))
    }
}

impl Serialize for Bytes {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&encode_hex(&self.0))
    }
}

impl<'de> Deserialize<'de> for Bytes {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        decode_hex(&s).map(Bytes).map_err(de::Error::custom)
    }
}

/// An Ed25519 keypair plus its derived address.
///
/// The private half is deliberately not `Serialize`; only the owner holds it.
#[derive(Clone)]
pub struct Account {
    signing: SigningKey,
    public_key: Bytes,
    address: Address,
}

impl fmt::Debug for Account {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Account")
            .field("address", &self.address)
            .finish_non_exhaustive()
    }
}

impl Account {
    /// Derives a keypair deterministically from `seed`.
    pub fn from_seed(seed: &[u8]) -> Result<Account> {
        if seed.is_empty() {
            return Err(Error::InvalidArgument("account seed must be non-empty".into()));
        }
        let secret = sha256(seed);
        let signing = SigningKey::from_bytes(&secret.0);
        let public_key = Bytes(signing.verifying_key().to_bytes().to_vec());
        let address = Address::from_public_key(&public_key.0);
        Ok(Account {
            signing,
            public_key,
            address,
        })
    }

    pub fn address(&self) -> Address {
        self.address
    }

    pub fn public_key(&self) -> &Bytes {
        &self.public_key
    }

    pub fn private_key(&self) -> [u8; 32] {
        self.signing.to_bytes()
    }

    /// Signs a 32-byte digest.
    pub fn sign(&self, digest: &Hash32) -> Bytes {
        Bytes(self.signing.sign(&digest.0).to_bytes().to_vec())
    }
}

/// `create_account`: deterministic account from a textual seed.
pub fn create_account(seed: &str) -> Result<Account> {
    Account::from_seed(seed.as_bytes())
}

/// Checks `signature` over `digest` under `public_key`, and that the key derives `expected`.
pub fn verify_signature(
    expected: &Address,
    public_key: &Bytes,
    digest: &Hash32,
    signature: &Bytes,
) -> bool {
    if Address::from_public_key(&public_key.0) != *expected {
        return false;
    }
    let Ok(key_bytes) = <[u8; 32]>::try_from(public_key.0.as_slice()) else {
        return false;
    };
    let Ok(key) = VerifyingKey::from_bytes(&key_bytes) else {
        return false;
    };
    let Ok(sig_bytes) = <[u8; 64]>::try_from(signature.0.as_slice()) else {
        return false;
    };
    let sig = ed25519_dalek::Signature::from_bytes(&sig_bytes);
    key.verify(&digest.0, &sig).is_ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_address() {
        let a = create_account("courier-00").unwrap();
        let b = create_account("courier-00").unwrap();
        assert_eq!(a.address(), b.address());
        assert_eq!(a.public_key(), b.public_key());
    }

    #[test]
    fn distinct_seeds_distinct_addresses() {
        let a = create_account("courier-00").unwrap();
        let b = create_account("courier-01").unwrap();
        assert_ne!(a.address(), b.address());
    }

    /// Public key and address computed independently with Python's
    /// `hashlib` and `cryptography` Ed25519 from SHA-256("courier-00").
    #[test]
    fn address_matches_external_sha256() {
        let a = create_account("courier-00").unwrap();
        assert_eq!(
            hex::encode(&a.public_key().0),
            "885608af6f3ed6cfa8a6cb306620fa403826c87b06aa3b59d0b357a2da02049a"
        );
        assert_eq!(
            a.address().to_hex(),
            "0x73de2b8d791318dfc35f125dc0d2239f1825e479"
        );
        assert_eq!(Address::from_public_key(&a.public_key().0), a.address());
    }

    #[test]
    fn empty_seed_rejected() {
        assert!(matches!(create_account(""), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn hex_round_trip_and_case() {
        let a = create_account("x").unwrap().address();
        let s = a.to_hex();
        assert!(s.starts_with("0x") && s.len() == 42);
        assert_eq!(s.parse::<Address>().unwrap(), a);
        assert!(s.to_uppercase().replace("0X", "0x").parse::<Address>().is_err());
        assert!("1234".parse::<Address>().is_err());
    }

    #[test]
    fn signature_checks_key_binding() {
        let a = create_account("a").unwrap();
        let b = create_account("b").unwrap();
        let d = sha256(b"payload");
        let sig = a.sign(&d);
        assert!(verify_signature(&a.address(), a.public_key(), &d, &sig));
        assert!(!verify_signature(&b.address(), a.public_key(), &d, &sig));
        assert!(!verify_signature(&a.address(), a.public_key(), &sha256(b"other"), &sig));
        let mut bad = sig.clone();
        bad.0[3] ^= 1;
        assert!(!verify_signature(&a.address(), a.public_key(), &d, &bad));
        assert!(!verify_signature(&a.address(), a.public_key(), &d, &Bytes(vec![1, 2])));
    }
}
