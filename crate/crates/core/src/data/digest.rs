use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::Dataset;

/// SHA-256 fingerprint of one client's partition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionDigest {
    pub client_id: u32,
    #[serde(with = "hex_digest")]
    pub digest: [u8; 32],
    pub row_count: u64,
}

impl PartitionDigest {
    pub fn hex(&self) -> String {
        hex::encode(self.digest)
    }
}

/// Canonical byte layout: `row_count` and `col_count` as u64 LE, then the
/// features row-major, then the labels, every value as f64 LE.
pub fn canonical_bytes(partition: &Dataset) -> Vec<u8> {
    let x = &partition.features;
    let mut out = Vec::with_capacity(16 + 8 * (x.as_slice().len() + partition.len()));
    out.extend_from_slice(&(x.rows() as u64).to_le_bytes());
    out.extend_from_slice(&(x.cols() as u64).to_le_bytes());
    for v in x.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for &l in &partition.labels {
        out.extend_from_slice(&(l as f64).to_le_bytes());
    }
    out
}

pub fn hash_partition(client_id: u32, partition: &Dataset) -> PartitionDigest {
    PartitionDigest {
        client_id,
        digest: Sha256::digest(canonical_bytes(partition)).into(),
        row_count: partition.len() as u64,
    }
}

pub fn verify_partition(partition: &Dataset, digest: &PartitionDigest) -> bool {
    hash_partition(digest.client_id, partition) == *digest
}

mod hex_digest {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &[u8; 32], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(d))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[u8; 32], D::Error> {
        let s = String::deserialize(d)?;
        let bytes = hex::decode(&s).map_err(D::Error::custom)?;
        bytes
            .try_into()
            .map_err(|_| D::Error::custom("digest must be 32 bytes"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Matrix;

    fn part() -> Dataset {
        let x = Matrix::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        Dataset::new(x, vec![0, 1], 2).unwrap()
    }

    #[test]
    fn layout() {
        let b = canonical_bytes(&part());
        assert_eq!(b.len(), 16 + 8 * 6);
        assert_eq!(&b[..8], &2u64.to_le_bytes());
        assert_eq!(&b[16..24], &1.0f64.to_le_bytes());
        assert_eq!(&b[56..64], &1.0f64.to_le_bytes());
    }

    #[test]
    fn identical_partitions_match() {
        assert_eq!(hash_partition(3, &part()), hash_partition(3, &part()));
        assert!(verify_partition(&part(), &hash_partition(0, &part())));
    }

    #[test]
    fn low_bit_flip_fails() {
        let d = hash_partition(0, &part());
        let mut p = part();
        let v = p.features.get(1, 0);
        p.features.set(1, 0, f64::from_bits(v.to_bits() ^ 1)).unwrap();
        assert!(!verify_partition(&p, &d));
    }

    #[test]
    fn empty_partition_digest_is_stable() {
        // sha256 of 16 zero bytes
        let d = hash_partition(0, &Dataset::empty(0, 1));
        assert_eq!(
            d.hex(),
            "374708fff7719dd5979ec875d56cd2286f6d3cf7ec317a3b25632aab28ec37bb"
        );
        assert_eq!(d.row_count, 0);
    }

    #[test]
    fn json_round_trip() {
        let d = hash_partition(7, &part());
        let s = serde_json::to_string(&d).unwrap();
        assert!(s.contains(&d.hex()));
        assert_eq!(serde_json::from_str::<PartitionDigest>(&s).unwrap(), d);
    }
}
