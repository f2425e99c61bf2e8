//! Seed lineage and content hashing.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Seed for the job `name` under `master`. Independent of scheduling: every
/// job's stream depends only on its own name.
pub fn derive_seed(master: u64, name: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update(name.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("sha256 has 32 bytes"))
}

pub fn rng_for(master: u64, name: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, name))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    to_hex(&Sha256::digest(bytes))
}

/// Hash of a multiset of items: insensitive to their order.
pub fn unordered_hash<I, B>(items: I) -> String
where
    I: IntoIterator<Item = B>,
    B: AsRef<[u8]>,
{
    let mut digests: Vec<_> = items
        .into_iter()
        .map(|item| Sha256::digest(item.as_ref()))
        .collect();
    digests.sort_unstable();
    let mut hasher = Sha256::new();
    for d in &digests {
        hasher.update(d);
    }
    to_hex(&hasher.finalize())
}

fn to_hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_seeds_depend_on_name_and_master() {
        assert_eq!(derive_seed(42, "fnn"), derive_seed(42, "fnn"));
        assert_ne!(derive_seed(42, "fnn"), derive_seed(42, "lstm"));
        assert_ne!(derive_seed(42, "fnn"), derive_seed(43, "fnn"));
    }

    #[test]
    fn unordered_hash_ignores_order() {
        assert_eq!(unordered_hash(["a", "b", "c"]), unordered_hash(["c", "a", "b"]));
        assert_ne!(unordered_hash(["a", "b"]), unordered_hash(["a", "b", "b"]));
        assert_eq!(sha256_hex(b"").len(), 64);
    }
}
