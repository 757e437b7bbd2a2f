//! 64-bit hashing and the chained hash table shared by joins and group-by.

use serde::Serialize;

use crate::error::{Error, Result};

/// Sentinel entry link: end of chain / empty bucket.
pub const NO_ENTRY: u32 = u32::MAX;

/// Multiplicative 64-bit mix with a caller-supplied seed.
///
/// Construction: add the seed into the key, then two rounds of
/// xor-shift-by-32 followed by multiplication with an odd 64-bit constant,
/// and a final xor-shift. The high bits end up well mixed, so bucket
/// selection takes the top `log2(buckets)` bits.
#[inline(always)]
pub fn hash64(key: i64, seed: u64) -> u64 {
    const M: u64 = 0xd6e8_feb8_6659_fd93;
    let mut h = (key as u64).wrapping_add(seed);
    h ^= h >> 32;
    h = h.wrapping_mul(M);
    h ^= h >> 32;
    h = h.wrapping_mul(M);
    h ^= h >> 32;
    h
}

#[inline(always)]
fn bucket_of(hash: u64, bucket_count: usize) -> usize {
    // bucket_count is a power of two; use the high bits.
    let bits = bucket_count.trailing_zeros();
    if bits == 0 {
        0
    } else {
        (hash >> (64 - bits)) as usize
    }
}

/// Smallest power of two giving load factor <= 0.5 for `entries` keys.
fn bucket_count_for(entries: usize) -> usize {
    (entries * 2).next_power_of_two().max(1)
}

#[derive(Debug, Clone, Copy)]
struct Entry {
    key: i64,
    payload: i64,
    next: u32,
}

/// Build-side chained hash table. Immutable once built; probes are
/// read-only and freely concurrent.
#[derive(Debug)]
pub struct ChainedHashTable {
    bucket_heads: Vec<u32>,
    entries: Vec<Entry>,
    hash_seed: u64,
}

impl ChainedHashTable {
    /// Builds from parallel key/payload slices. Duplicate keys are kept;
    /// probing yields them in insertion order.
    pub fn build(keys: &[i64], payloads: &[i64], hash_seed: u64) -> Result<Self> {
        if keys.len() != payloads.len() {
            return Err(Error::LengthMismatch {
                context: "hash table keys vs payloads",
                left: keys.len(),
                right: payloads.len(),
            });
        }
        let bucket_count = bucket_count_for(keys.len());
        let mut bucket_heads = vec![NO_ENTRY; bucket_count];
        let mut entries: Vec<Entry> = keys
            .iter()
            .zip(payloads)
            .map(|(&key, &payload)| Entry {
                key,
                payload,
                next: NO_ENTRY,
            })
            .collect();
        // Head-insert in reverse row order so each chain reads back in
        // insertion order.
        for i in (0..entries.len()).rev() {
            let b = bucket_of(hash64(entries[i].key, hash_seed), bucket_count);
            entries[i].next = bucket_heads[b];
            bucket_heads[b] = i as u32;
        }
        Ok(ChainedHashTable {
            bucket_heads,
            entries,
            hash_seed,
        })
    }

    pub fn entry_count(&self) -> usize {
        self.entries.len()
    }

    pub fn bucket_count(&self) -> usize {
        self.bucket_heads.len()
    }

    pub fn hash_seed(&self) -> u64 {
        self.hash_seed
    }

    /// Head entry index for a precomputed hash (vectorized probe support).
    #[inline(always)]
    pub fn head_for_hash(&self, hash: u64) -> u32 {
        self.bucket_heads[bucket_of(hash, self.bucket_heads.len())]
    }

    #[inline(always)]
    pub fn entry(&self, index: u32) -> (i64, i64, u32) {
        let e = &self.entries[index as usize];
        (e.key, e.payload, e.next)
    }

    /// Iterates payloads of all entries matching `key`, insertion order.
    #[inline]
    pub fn probe(&self, key: i64) -> ProbeIter<'_> {
        let cursor = if self.entries.is_empty() {
            NO_ENTRY
        } else {
            self.head_for_hash(hash64(key, self.hash_seed))
        };
        ProbeIter {
            table: self,
            key,
            cursor,
        }
    }

    /// Iterates `(key, payload)` over all entries (group-by result drain).
    pub fn iter_entries(&self) -> impl Iterator<Item = (i64, i64)> + '_ {
        self.entries.iter().map(|e| (e.key, e.payload))
    }

    /// Chain-length statistics, with chain length defined as bucket
    /// occupancy (an empty bucket counts as length 0).
    pub fn chain_stats(&self) -> ChainStats {
        let mut occupancy = vec![0u64; self.bucket_heads.len()];
        for (i, &head) in self.bucket_heads.iter().enumerate() {
            let mut cursor = head;
            while cursor != NO_ENTRY {
                occupancy[i] += 1;
                cursor = self.entries[cursor as usize].next;
            }
        }
        ChainStats::from_occupancies(&occupancy)
    }
}

pub struct ProbeIter<'a> {
    table: &'a ChainedHashTable,
    key: i64,
    cursor: u32,
}

impl Iterator for ProbeIter<'_> {
    type Item = i64;

    #[inline]
    fn next(&mut self) -> Option<i64> {
        while self.cursor != NO_ENTRY {
            let e = &self.table.entries[self.cursor as usize];
            self.cursor = e.next;
            if e.key == self.key {
                return Some(e.payload);
            }
        }
        None
    }
}

/// Read-only probe access shared by both engines, over either a flat table
/// or a partitioned parallel build.
pub trait ProbeTable: Sync {
    fn hash_seed(&self) -> u64;
    fn probe(&self, key: i64) -> ProbeIter<'_>;
    /// `(partition, head entry)` for a precomputed hash; `NO_ENTRY` head
    /// means an empty bucket.
    fn head_for(&self, hash: u64) -> (u32, u32);
    fn entry_in(&self, partition: u32, index: u32) -> (i64, i64, u32);
}

impl ProbeTable for ChainedHashTable {
    fn hash_seed(&self) -> u64 {
        self.hash_seed
    }

    #[inline]
    fn probe(&self, key: i64) -> ProbeIter<'_> {
        ChainedHashTable::probe(self, key)
    }

    #[inline(always)]
    fn head_for(&self, hash: u64) -> (u32, u32) {
        if self.entries.is_empty() {
            (0, NO_ENTRY)
        } else {
            (0, self.head_for_hash(hash))
        }
    }

    #[inline(always)]
    fn entry_in(&self, _partition: u32, index: u32) -> (i64, i64, u32) {
        self.entry(index)
    }
}

impl ProbeTable for PartitionedHashTable {
    fn hash_seed(&self) -> u64 {
        self.hash_seed
    }

    #[inline]
    fn probe(&self, key: i64) -> ProbeIter<'_> {
        PartitionedHashTable::probe(self, key)
    }

    #[inline(always)]
    fn head_for(&self, hash: u64) -> (u32, u32) {
        let part = Self::partition_of_hash(hash, self.partition_bits) as u32;
        let table = &self.partitions[part as usize];
        if table.entries.is_empty() {
            (part, NO_ENTRY)
        } else {
            (part, table.head_for_hash(hash))
        }
    }

    #[inline(always)]
    fn entry_in(&self, partition: u32, index: u32) -> (i64, i64, u32) {
        self.partitions[partition as usize].entry(index)
    }
}

/// Histogram of bucket occupancies plus its moments.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainStats {
    pub mean: f64,
    pub stddev: f64,
    pub max: usize,
    /// `histogram[l]` = number of buckets holding exactly `l` entries.
    pub histogram: Vec<u64>,
}

impl ChainStats {
    fn from_occupancies(occupancy: &[u64]) -> ChainStats {
        if occupancy.is_empty() {
            return ChainStats {
                mean: 0.0,
                stddev: 0.0,
                max: 0,
                histogram: vec![],
            };
        }
        let max = occupancy.iter().copied().max().unwrap_or(0) as usize;
        let mut histogram = vec![0u64; max + 1];
        let mut sum = 0u64;
        for &c in occupancy {
            histogram[c as usize] += 1;
            sum += c;
        }
        let n = occupancy.len() as f64;
        let mean = sum as f64 / n;
        let var = occupancy
            .iter()
            .map(|&c| {
                let d = c as f64 - mean;
                d * d
            })
            .sum::<f64>()
            / n;
        ChainStats {
            mean,
            stddev: var.sqrt(),
            max,
            histogram,
        }
    }

    pub fn bucket_count(&self) -> u64 {
        self.histogram.iter().sum()
    }
}

/// Incremental builder used by group-by: upserts grow the table, doubling
/// buckets whenever load would exceed 0.5, so the finished table satisfies
/// the same load invariant as a pre-sized join build.
pub struct HashTableBuilder {
    bucket_heads: Vec<u32>,
    entries: Vec<Entry>,
    hash_seed: u64,
}

impl HashTableBuilder {
    pub fn new(hash_seed: u64) -> Self {
        HashTableBuilder {
            bucket_heads: vec![NO_ENTRY; 1],
            entries: Vec::new(),
            hash_seed,
        }
    }

    pub fn entry_count(&self) -> usize {
        self.entries.len()
    }

    /// Adds `delta` to the payload of `key`, inserting the key if new.
    #[inline]
    pub fn upsert_add(&mut self, key: i64, delta: i64) {
        let hash = hash64(key, self.hash_seed);
        let b = bucket_of(hash, self.bucket_heads.len());
        let mut cursor = self.bucket_heads[b];
        while cursor != NO_ENTRY {
            let e = &mut self.entries[cursor as usize];
            if e.key == key {
                e.payload += delta;
                return;
            }
            cursor = e.next;
        }
        if (self.entries.len() + 1) * 2 > self.bucket_heads.len() {
            self.grow();
        }
        let b = bucket_of(hash, self.bucket_heads.len());
        self.entries.push(Entry {
            key,
            payload: delta,
            next: self.bucket_heads[b],
        });
        self.bucket_heads[b] = (self.entries.len() - 1) as u32;
    }

    fn grow(&mut self) {
        let new_count = (self.bucket_heads.len() * 2).max(bucket_count_for(self.entries.len() + 1));
        self.bucket_heads = vec![NO_ENTRY; new_count];
        for (i, e) in self.entries.iter_mut().enumerate() {
            e.next = NO_ENTRY;
            let b = bucket_of(hash64(e.key, self.hash_seed), new_count);
            e.next = self.bucket_heads[b];
            self.bucket_heads[b] = i as u32;
        }
    }

    pub fn finish(self) -> ChainedHashTable {
        ChainedHashTable {
            bucket_heads: self.bucket_heads,
            entries: self.entries,
            hash_seed: self.hash_seed,
        }
    }
}

/// Hash table split into per-worker partitions by high hash bits, for the
/// parallel driver's partitioned-build contract: each worker owns one
/// partition, a barrier separates build from probe.
pub struct PartitionedHashTable {
    partitions: Vec<ChainedHashTable>,
    partition_bits: u32,
    hash_seed: u64,
}

impl PartitionedHashTable {
    /// Number of partitions used for `workers` (next power of two).
    pub fn partition_count_for(workers: usize) -> usize {
        workers.next_power_of_two().max(1)
    }

    /// Routes a key hash to its partition (topmost `partition_bits`).
    #[inline(always)]
    pub fn partition_of_hash(hash: u64, partition_bits: u32) -> usize {
        if partition_bits == 0 {
            0
        } else {
            (hash >> (64 - partition_bits)) as usize
        }
    }

    /// Assembles the table from per-partition key/payload staging built by
    /// the caller's workers. `staged[p]` holds the rows routed to partition
    /// `p`, in the order the scan produced them.
    pub fn from_staged(staged: Vec<(Vec<i64>, Vec<i64>)>, hash_seed: u64) -> Result<Self> {
        let parts = staged.len();
        assert!(parts.is_power_of_two(), "partition count must be pow2");
        let partitions = staged
            .into_iter()
            .map(|(keys, payloads)| ChainedHashTable::build(&keys, &payloads, hash_seed))
            .collect::<Result<Vec<_>>>()?;
        Self::from_tables(partitions, hash_seed)
    }

    /// Assembles from already-built partition tables (parallel sub-builds).
    /// Partition `p` must hold exactly the keys whose hash routes to `p`.
    pub fn from_tables(partitions: Vec<ChainedHashTable>, hash_seed: u64) -> Result<Self> {
        if !partitions.len().is_power_of_two() {
            return Err(Error::spec("partition count must be a power of two"));
        }
        let partition_bits = partitions.len().trailing_zeros();
        Ok(PartitionedHashTable {
            partitions,
            partition_bits,
            hash_seed,
        })
    }

    pub fn partition_bits(&self) -> u32 {
        self.partition_bits
    }

    pub fn hash_seed(&self) -> u64 {
        self.hash_seed
    }

    pub fn entry_count(&self) -> usize {
        self.partitions.iter().map(|p| p.entry_count()).sum()
    }

    #[inline]
    pub fn probe(&self, key: i64) -> ProbeIter<'_> {
        let hash = hash64(key, self.hash_seed);
        let part = Self::partition_of_hash(hash, self.partition_bits);
        self.partitions[part].probe(key)
    }
}
