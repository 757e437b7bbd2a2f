//! Lane-parallel variants of the vectorized engine's hot primitives:
//! aggregation, branch-free filtering and hash computation.
//!
//! Every kernel is bit-equivalent to its scalar counterpart (integer
//! lanes, wrapping adds, no reassociation hazards). On x86-64 with AVX2
//! the kernels use explicit intrinsics; elsewhere they fall back to the
//! scalar loop. Tails shorter than the lane width run a scalar epilogue.

use crate::columnar::hash64;

/// True when the lane-parallel paths are available on this CPU.
pub fn lanes_available() -> bool {
    #[cfg(target_arch = "x86_64")]
    {
        static AVX2: std::sync::OnceLock<bool> = std::sync::OnceLock::new();
        *AVX2.get_or_init(|| std::arch::is_x86_feature_detected!("avx2"))
    }
    #[cfg(not(target_arch = "x86_64"))]
    {
        false
    }
}

// ---------------------------------------------------------------------------
// Sums
// ---------------------------------------------------------------------------

pub fn scalar_sum(values: &[i64]) -> i64 {
    let mut sum = 0i64;
    for &v in values {
        sum = sum.wrapping_add(v);
    }
    sum
}

pub fn scalar_sum_gather(values: &[i64], selection: &[u32]) -> i64 {
    let mut sum = 0i64;
    for &i in selection {
        sum = sum.wrapping_add(values[i as usize]);
    }
    sum
}

/// Lane-parallel sum; equals `scalar_sum` bit for bit.
pub fn lanes_sum(values: &[i64], selection: Option<&[u32]>) -> i64 {
    match selection {
        None => lanes_sum_dense(values),
        Some(sel) => lanes_sum_gather(values, sel),
    }
}

fn lanes_sum_dense(values: &[i64]) -> i64 {
    #[cfg(target_arch = "x86_64")]
    if lanes_available() {
        return unsafe { avx2::sum_dense(values) };
    }
    scalar_sum(values)
}

fn lanes_sum_gather(values: &[i64], selection: &[u32]) -> i64 {
    #[cfg(target_arch = "x86_64")]
    if lanes_available() {
        return unsafe { avx2::sum_gather(values, selection) };
    }
    scalar_sum_gather(values, selection)
}

/// Scalar pairwise add into a materialized output vector.
pub fn scalar_add(a: &[i64], b: &[i64], out: &mut Vec<i64>) {
    out.clear();
    out.extend(a.iter().zip(b).map(|(&x, &y)| x.wrapping_add(y)));
}

/// Lane-parallel pairwise add; equals `scalar_add` exactly.
pub fn lanes_add(a: &[i64], b: &[i64], out: &mut Vec<i64>) {
    #[cfg(target_arch = "x86_64")]
    if lanes_available() {
        unsafe { avx2::add_dense(a, b, out) };
        return;
    }
    scalar_add(a, b, out);
}

// ---------------------------------------------------------------------------
// Filters
// ---------------------------------------------------------------------------

/// Scalar branch-free `value < threshold` filter over i32 values: writes
/// the candidate index unconditionally and advances the cursor by the
/// predicate value.
pub fn scalar_filter_lt_i32(
    values: &[i32],
    threshold: i32,
    in_sel: Option<&[u32]>,
    out: &mut Vec<u32>,
) {
    out.clear();
    match in_sel {
        None => {
            out.resize(values.len(), 0);
            let mut k = 0usize;
            for (i, &v) in values.iter().enumerate() {
                out[k] = i as u32;
                k += (v < threshold) as usize;
            }
            out.truncate(k);
        }
        Some(sel) => {
            out.resize(sel.len(), 0);
            let mut k = 0usize;
            for &i in sel {
                out[k] = i;
                k += (values[i as usize] < threshold) as usize;
            }
            out.truncate(k);
        }
    }
}

/// Lane-parallel `value < threshold` filter; output equals the scalar
/// filter exactly (ascending, branch-free compaction).
pub fn lanes_filter_lt_i32(
    values: &[i32],
    threshold: i32,
    in_sel: Option<&[u32]>,
    out: &mut Vec<u32>,
) {
    #[cfg(target_arch = "x86_64")]
    if lanes_available() {
        unsafe { avx2::filter_lt_i32(values, threshold, in_sel, out) };
        return;
    }
    scalar_filter_lt_i32(values, threshold, in_sel, out);
}

// ---------------------------------------------------------------------------
// Hashing
// ---------------------------------------------------------------------------

pub fn scalar_probe_hash(keys: &[i64], seed: u64, out: &mut Vec<u64>) {
    out.clear();
    out.extend(keys.iter().map(|&k| hash64(k, seed)));
}

/// Lane-parallel hash of probe keys; elementwise equal to `hash64`.
pub fn lanes_probe_hash(keys: &[i64], seed: u64, out: &mut Vec<u64>) {
    #[cfg(target_arch = "x86_64")]
    if lanes_available() {
        unsafe { avx2::probe_hash(keys, seed, out) };
        return;
    }
    scalar_probe_hash(keys, seed, out);
}

#[cfg(target_arch = "x86_64")]
mod avx2 {
    use super::*;
    use std::arch::x86_64::*;

    #[target_feature(enable = "avx2")]
    pub(super) unsafe fn sum_dense(values: &[i64]) -> i64 {
        let mut acc = _mm256_setzero_si256();
        let chunks = values.chunks_exact(4);
        let tail = chunks.remainder();
        for chunk in chunks {
            let v = _mm256_loadu_si256(chunk.as_ptr() as *const __m256i);
            acc = _mm256_add_epi64(acc, v);
        }
        let mut lanes = [0i64; 4];
        _mm256_storeu_si256(lanes.as_mut_ptr() as *mut __m256i, acc);
        let mut sum = lanes[0]
            .wrapping_add(lanes[1])
            .wrapping_add(lanes[2])
            .wrapping_add(lanes[3]);
        for &v in tail {
            sum = sum.wrapping_add(v);
        }
        sum
    }

    #[target_feature(enable = "avx2")]
    pub(super) unsafe fn sum_gather(values: &[i64], selection: &[u32]) -> i64 {
        let mut acc = _mm256_setzero_si256();
        let chunks = selection.chunks_exact(4);
        let tail = chunks.remainder();
        for chunk in chunks {
            let idx = _mm_loadu_si128(chunk.as_ptr() as *const __m128i);
            let v = _mm256_i32gather_epi64::<8>(values.as_ptr(), idx);
            acc = _mm256_add_epi64(acc, v);
        }
        let mut lanes = [0i64; 4];
        _mm256_storeu_si256(lanes.as_mut_ptr() as *mut __m256i, acc);
        let mut sum = lanes[0]
            .wrapping_add(lanes[1])
            .wrapping_add(lanes[2])
            .wrapping_add(lanes[3]);
        for &i in tail {
            sum = sum.wrapping_add(values[i as usize]);
        }
        sum
    }

    #[target_feature(enable = "avx2")]
    pub(super) unsafe fn add_dense(a: &[i64], b: &[i64], out: &mut Vec<i64>) {
        let n = a.len().min(b.len());
        out.clear();
        out.resize(n, 0);
        let mut i = 0;
        while i + 4 <= n {
            let va = _mm256_loadu_si256(a.as_ptr().add(i) as *const __m256i);
            let vb = _mm256_loadu_si256(b.as_ptr().add(i) as *const __m256i);
            _mm256_storeu_si256(
                out.as_mut_ptr().add(i) as *mut __m256i,
                _mm256_add_epi64(va, vb),
            );
            i += 4;
        }
        while i < n {
            out[i] = a[i].wrapping_add(b[i]);
            i += 1;
        }
    }

    #[target_feature(enable = "avx2")]
    pub(super) unsafe fn filter_lt_i32(
        values: &[i32],
        threshold: i32,
        in_sel: Option<&[u32]>,
        out: &mut Vec<u32>,
    ) {
        out.clear();
        let t = _mm256_set1_epi32(threshold);
        let mut k = 0usize;
        match in_sel {
            None => {
                out.resize(values.len(), 0);
                let chunks = values.chunks_exact(8);
                let tail_start = values.len() - chunks.remainder().len();
                for (c, chunk) in chunks.enumerate() {
                    let v = _mm256_loadu_si256(chunk.as_ptr() as *const __m256i);
                    // v < t  <=>  t > v
                    let m = _mm256_movemask_ps(_mm256_castsi256_ps(_mm256_cmpgt_epi32(t, v)));
                    let base = (c * 8) as u32;
                    for lane in 0..8u32 {
                        out[k] = base + lane;
                        k += ((m >> lane) & 1) as usize;
                    }
                }
                for i in tail_start..values.len() {
                    out[k] = i as u32;
                    k += (values[i] < threshold) as usize;
                }
            }
            Some(sel) => {
                out.resize(sel.len(), 0);
                let chunks = sel.chunks_exact(8);
                let tail_start = sel.len() - chunks.remainder().len();
                for (c, chunk) in chunks.enumerate() {
                    let idx = _mm256_loadu_si256(chunk.as_ptr() as *const __m256i);
                    let v = _mm256_i32gather_epi32::<4>(values.as_ptr(), idx);
                    let m = _mm256_movemask_ps(_mm256_castsi256_ps(_mm256_cmpgt_epi32(t, v)));
                    for lane in 0..8usize {
                        out[k] = sel[c * 8 + lane];
                        k += ((m >> lane) & 1) as usize;
                    }
                }
                for &i in &sel[tail_start..] {
                    out[k] = i;
                    k += (values[i as usize] < threshold) as usize;
                }
            }
        }
        out.truncate(k);
    }

    /// 64x64 -> low-64 multiply synthesized from 32-bit multiplies.
    #[inline(always)]
    unsafe fn mullo_epi64(a: __m256i, b: __m256i) -> __m256i {
        let lo = _mm256_mul_epu32(a, b);
        let ahi_blo = _mm256_mul_epu32(_mm256_srli_epi64::<32>(a), b);
        let alo_bhi = _mm256_mul_epu32(a, _mm256_srli_epi64::<32>(b));
        let hi = _mm256_add_epi64(ahi_blo, alo_bhi);
        _mm256_add_epi64(lo, _mm256_slli_epi64::<32>(hi))
    }

    #[target_feature(enable = "avx2")]
    pub(super) unsafe fn probe_hash(keys: &[i64], seed: u64, out: &mut Vec<u64>) {
        const M: u64 = 0xd6e8_feb8_6659_fd93;
        out.clear();
        out.resize(keys.len(), 0);
        let seed_v = _mm256_set1_epi64x(seed as i64);
        let m_v = _mm256_set1_epi64x(M as i64);
        let chunks = keys.chunks_exact(4);
        let tail_start = keys.len() - chunks.remainder().len();
        for (c, chunk) in chunks.enumerate() {
            let k = _mm256_loadu_si256(chunk.as_ptr() as *const __m256i);
            let mut h = _mm256_add_epi64(k, seed_v);
            h = _mm256_xor_si256(h, _mm256_srli_epi64::<32>(h));
            h = mullo_epi64(h, m_v);
            h = _mm256_xor_si256(h, _mm256_srli_epi64::<32>(h));
            h = mullo_epi64(h, m_v);
            h = _mm256_xor_si256(h, _mm256_srli_epi64::<32>(h));
            _mm256_storeu_si256(out.as_mut_ptr().add(c * 4) as *mut __m256i, h);
        }
        for i in tail_start..keys.len() {
            out[i] = hash64(keys[i], seed);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_inputs() {
        assert_eq!(lanes_sum(&[], None), 0);
        let mut out = Vec::new();
        lanes_filter_lt_i32(&[], 5, None, &mut out);
        assert!(out.is_empty());
        let mut hashes = Vec::new();
        lanes_probe_hash(&[], 1, &mut hashes);
        assert!(hashes.is_empty());
    }

    #[test]
    fn sum_with_odd_index_selection() {
        let values: Vec<i64> = (0..1001).collect();
        let sel: Vec<u32> = (0..1001).filter(|i| i % 2 == 1).collect();
        assert_eq!(
            lanes_sum(&values, Some(&sel)),
            scalar_sum_gather(&values, &sel)
        );
    }

    #[test]
    fn large_random_sum_equals_scalar() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let values: Vec<i64> = (0..1_000_000).map(|_| rng.gen()).collect();
        assert_eq!(lanes_sum(&values, None), scalar_sum(&values));
    }

    #[test]
    fn filter_threshold_edges() {
        let values: Vec<i32> = (0..100).collect();
        let mut out = Vec::new();
        lanes_filter_lt_i32(&values, 0, None, &mut out);
        assert!(out.is_empty());
        lanes_filter_lt_i32(&values, 100, None, &mut out);
        assert_eq!(out.len(), 100);
        let sel: Vec<u32> = vec![3, 50, 99];
        lanes_filter_lt_i32(&values, 100, Some(&sel), &mut out);
        assert_eq!(out, sel);
    }

    #[test]
    fn hash_kernel_matches_scalar_on_fixed_keys() {
        let keys = [0i64, -1, i64::MAX];
        let mut out = Vec::new();
        lanes_probe_hash(&keys, 42, &mut out);
        let expected: Vec<u64> = keys.iter().map(|&k| hash64(k, 42)).collect();
        assert_eq!(out, expected);
    }

    #[test]
    fn hash_kernel_matches_scalar_on_100k_keys() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let keys: Vec<i64> = (0..100_000).map(|_| rng.gen()).collect();
        let mut got = Vec::new();
        lanes_probe_hash(&keys, 99, &mut got);
        let mut want = Vec::new();
        scalar_probe_hash(&keys, 99, &mut want);
        assert_eq!(got, want);
    }

    proptest! {
        /// Bit-equivalence on random arrays including tails not divisible
        /// by the lane width.
        #[test]
        fn prop_sum_bit_equivalent(values in prop::collection::vec(any::<i64>(), 0..600)) {
            prop_assert_eq!(lanes_sum(&values, None), scalar_sum(&values));
        }

        #[test]
        fn prop_sum_gather_bit_equivalent(
            values in prop::collection::vec(any::<i64>(), 1..600),
            mask in prop::collection::vec(any::<bool>(), 1..600),
        ) {
            let sel: Vec<u32> = mask
                .iter()
                .enumerate()
                .take(values.len())
                .filter(|(_, &m)| m)
                .map(|(i, _)| i as u32)
                .collect();
            prop_assert_eq!(
                lanes_sum(&values, Some(&sel)),
                scalar_sum_gather(&values, &sel)
            );
        }

        #[test]
        fn prop_add_bit_equivalent(
            a in prop::collection::vec(any::<i64>(), 0..600),
            b in prop::collection::vec(any::<i64>(), 0..600),
        ) {
            let n = a.len().min(b.len());
            let mut lanes = Vec::new();
            let mut scalar = Vec::new();
            lanes_add(&a[..n], &b[..n], &mut lanes);
            scalar_add(&a[..n], &b[..n], &mut scalar);
            prop_assert_eq!(lanes, scalar);
        }

        #[test]
        fn prop_filter_bit_equivalent(
            values in prop::collection::vec(any::<i32>(), 0..600),
            threshold in any::<i32>(),
        ) {
            let mut lanes = Vec::new();
            let mut scalar = Vec::new();
            lanes_filter_lt_i32(&values, threshold, None, &mut lanes);
            scalar_filter_lt_i32(&values, threshold, None, &mut scalar);
            prop_assert_eq!(&lanes, &scalar);

            // Chained: feed the first output back in as a selection.
            let mut lanes2 = Vec::new();
            let mut scalar2 = Vec::new();
            lanes_filter_lt_i32(&values, threshold / 2, Some(&scalar), &mut lanes2);
            scalar_filter_lt_i32(&values, threshold / 2, Some(&scalar), &mut scalar2);
            prop_assert_eq!(lanes2, scalar2);
        }

        #[test]
        fn prop_hash_bit_equivalent(
            keys in prop::collection::vec(any::<i64>(), 0..600),
            seed in any::<u64>(),
        ) {
            let mut lanes = Vec::new();
            let mut scalar = Vec::new();
            lanes_probe_hash(&keys, seed, &mut lanes);
            scalar_probe_hash(&keys, seed, &mut scalar);
            prop_assert_eq!(lanes, scalar);
        }
    }
}
