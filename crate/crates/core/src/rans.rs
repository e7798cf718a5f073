//! Static rANS over integer symbol streams.
//!
//! 32-bit state kept in `[L, 256·L)` with `L = 2^23`, byte-wise
//! renormalization. Symbols are encoded back to front and the finished buffer
//! is reversed, so the decoder reads forward and ends in the initial state.

use crate::error::{Error, Result};
use crate::quant::histogram;

pub const DEFAULT_PRECISION: u32 = 12;
/// Scaled counts are stored as u16, so 2^precision must fit.
pub const MAX_PRECISION: u32 = 15;

const STATE_LOW: u32 = 1 << 23;

/// Symbol statistics normalized to a power-of-two total.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FrequencyTable {
    /// Sorted distinct symbols.
    pub alphabet: Vec<i64>,
    /// Observed counts. Tables restored from an archive carry their scaled
    /// counts here.
    pub counts: Vec<u64>,
    pub total: u64,
    /// Normalized counts, each ≥ 1, summing to 2^precision.
    pub scaled: Vec<u32>,
    pub precision: u32,
    cumulative: Vec<u32>,
}

impl FrequencyTable {
    /// Rebuild a table from stored scaled frequencies.
    pub fn from_scaled(alphabet: Vec<i64>, scaled: Vec<u32>, precision: u32) -> Result<Self> {
        check_precision(precision)?;
        if alphabet.len() != scaled.len() {
            return Err(Error::CorruptArchive(
                "alphabet and frequency lengths differ".into(),
            ));
        }
        if alphabet.windows(2).any(|p| p[0] >= p[1]) {
            return Err(Error::CorruptArchive(
                "alphabet is not strictly increasing".into(),
            ));
        }
        if scaled.contains(&0) || scaled.iter().map(|&s| s as u64).sum::<u64>() != 1 << precision {
            return Err(Error::CorruptArchive(format!(
                "scaled frequencies do not sum to 2^{precision}"
            )));
        }
        let counts: Vec<u64> = scaled.iter().map(|&s| s as u64).collect();
        let total = counts.iter().sum();
        Ok(Self::assemble(alphabet, counts, total, scaled, precision))
    }

    fn assemble(
        alphabet: Vec<i64>,
        counts: Vec<u64>,
        total: u64,
        scaled: Vec<u32>,
        precision: u32,
    ) -> Self {
        let mut cumulative = Vec::with_capacity(scaled.len() + 1);
        let mut acc = 0u32;
        cumulative.push(0);
        for &f in &scaled {
            acc += f;
            cumulative.push(acc);
        }
        FrequencyTable {
            alphabet,
            counts,
            total,
            scaled,
            precision,
            cumulative,
        }
    }

    pub fn len(&self) -> usize {
        self.alphabet.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alphabet.is_empty()
    }

    fn index_of(&self, symbol: i64) -> Result<usize> {
        self.alphabet
            .binary_search(&symbol)
            .map_err(|_| Error::SymbolNotInTable(symbol))
    }

    /// Cross entropy of the observed counts under the scaled model, in
    /// bits/symbol. This is what an ideal coder would spend.
    pub fn model_entropy(&self) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        let scale = (1u64 << self.precision) as f64;
        self.counts
            .iter()
            .zip(&self.scaled)
            .map(|(&c, &f)| c as f64 / self.total as f64 * (scale / f as f64).log2())
            .sum()
    }

    /// Bytes this table occupies when serialized: u16 alphabet size, zig-zag
    /// varint deltas, u16 precision, u16 per scaled count.
    pub fn serialized_len(&self) -> usize {
        let mut buf = Vec::new();
        self.write_to(&mut buf);
        buf.len()
    }

    /// |T_ℓ| in bits.
    pub fn size_bits(&self) -> u64 {
        8 * self.serialized_len() as u64
    }

    pub(crate) fn write_to(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&(self.alphabet.len() as u16).to_le_bytes());
        let mut prev = 0i64;
        for &s in &self.alphabet {
            write_varint(out, zigzag(s.wrapping_sub(prev)));
            prev = s;
        }
        out.extend_from_slice(&(self.precision as u16).to_le_bytes());
        for &f in &self.scaled {
            out.extend_from_slice(&(f as u16).to_le_bytes());
        }
    }
}

pub(crate) fn zigzag(v: i64) -> u64 {
    ((v << 1) ^ (v >> 63)) as u64
}

pub(crate) fn unzigzag(v: u64) -> i64 {
    ((v >> 1) as i64) ^ -((v & 1) as i64)
}

pub(crate) fn write_varint(out: &mut Vec<u8>, mut v: u64) {
    while v >= 0x80 {
        out.push((v as u8) | 0x80);
        v >>= 7;
    }
    out.push(v as u8);
}

fn check_precision(precision: u32) -> Result<()> {
    if precision == 0 || precision > MAX_PRECISION {
        return Err(Error::InvalidPrecision(precision));
    }
    Ok(())
}

/// Smallest precision ≥ the default that leaves room for every symbol.
pub fn precision_for(alphabet_size: usize) -> u32 {
    let needed = usize::BITS - alphabet_size.saturating_sub(1).leading_zeros();
    DEFAULT_PRECISION.max(needed + 1).min(MAX_PRECISION)
}

/// Largest-remainder normalization of counts to 2^precision, with every
/// present symbol keeping at least one slot.
fn normalize(counts: &[u64], precision: u32) -> Vec<u32> {
    let target = 1u64 << precision;
    let total: u64 = counts.iter().sum();
    let ideal: Vec<f64> = counts
        .iter()
        .map(|&c| c as f64 * target as f64 / total as f64)
        .collect();
    let mut scaled: Vec<u64> = ideal.iter().map(|&x| (x.floor() as u64).max(1)).collect();
    let mut sum: u64 = scaled.iter().sum();

    if sum < target {
        let mut order: Vec<usize> = (0..counts.len()).collect();
        // largest remainder first, ties by index
        order.sort_by(|&a, &b| {
            let ra = ideal[a] - scaled[a] as f64;
            let rb = ideal[b] - scaled[b] as f64;
            rb.total_cmp(&ra).then(a.cmp(&b))
        });
        let mut i = 0;
        while sum < target {
            scaled[order[i % order.len()]] += 1;
            sum += 1;
            i += 1;
        }
    }
    while sum > target {
        // take a slot where it costs the fewest bits
        let victim = (0..counts.len())
            .filter(|&i| scaled[i] > 1)
            .min_by(|&a, &b| {
                let cost =
                    |i: usize| counts[i] as f64 * (scaled[i] as f64 / (scaled[i] - 1) as f64).ln();
                cost(a).total_cmp(&cost(b)).then(a.cmp(&b))
            })
            .expect("alphabet no larger than 2^precision");
        scaled[victim] -= 1;
        sum -= 1;
    }
    scaled.into_iter().map(|s| s as u32).collect()
}

/// Frequency table for a symbol stream.
pub fn build_table(symbols: &[i64], precision: u32) -> Result<FrequencyTable> {
    check_precision(precision)?;
    if symbols.is_empty() {
        return Err(Error::EmptyInput);
    }
    let hist = histogram(symbols);
    if hist.len() > 1 << precision {
        return Err(Error::AlphabetTooLarge {
            size: hist.len(),
            precision,
        });
    }
    let (alphabet, counts): (Vec<i64>, Vec<u64>) = hist.into_iter().unzip();
    let scaled = normalize(&counts, precision);
    Ok(FrequencyTable::assemble(
        alphabet,
        counts,
        symbols.len() as u64,
        scaled,
        precision,
    ))
}

pub fn encode(symbols: &[i64], table: &FrequencyTable) -> Result<Vec<u8>> {
    let p = table.precision;
    let mut out = Vec::with_capacity(symbols.len() / 2 + 4);
    let mut x = STATE_LOW;
    for &s in symbols.iter().rev() {
        let i = table.index_of(s)?;
        let (start, freq) = (table.cumulative[i], table.scaled[i]);
        let x_max = ((STATE_LOW >> p) << 8) * freq;
        while x >= x_max {
            out.push(x as u8);
            x >>= 8;
        }
        x = ((x / freq) << p) + (x % freq) + start;
    }
    out.extend_from_slice(&x.to_le_bytes());
    out.reverse();
    Ok(out)
}

pub fn decode(stream: &[u8], table: &FrequencyTable, n: usize) -> Result<Vec<i64>> {
    let p = table.precision;
    let mask = (1u32 << p) - 1;
    if stream.len() < 4 {
        return Err(Error::CorruptStream("stream shorter than the state flush"));
    }
    let mut x = u32::from_be_bytes([stream[0], stream[1], stream[2], stream[3]]);
    let mut pos = 4;

    let mut slot_to_symbol = vec![0u32; 1 << p];
    for (i, w) in table.cumulative.windows(2).enumerate() {
        slot_to_symbol[w[0] as usize..w[1] as usize].fill(i as u32);
    }

    let mut symbols = Vec::with_capacity(n);
    for _ in 0..n {
        if x < STATE_LOW {
            return Err(Error::CorruptStream("coder state out of range"));
        }
        let slot = x & mask;
        let i = slot_to_symbol[slot as usize] as usize;
        symbols.push(table.alphabet[i]);
        x = table.scaled[i] * (x >> p) + slot - table.cumulative[i];
        while x < STATE_LOW {
            let byte = *stream
                .get(pos)
                .ok_or(Error::CorruptStream("stream truncated"))?;
            x = (x << 8) | byte as u32;
            pos += 1;
        }
    }
    if x != STATE_LOW || pos != stream.len() {
        return Err(Error::CorruptStream(
            "final state does not match the initial state",
        ));
    }
    Ok(symbols)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quant::empirical_entropy;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_symbol_table() {
        let t = build_table(&[5, 5, 5], 12).unwrap();
        assert_eq!(t.alphabet, vec![5]);
        assert_eq!(t.scaled, vec![4096]);
    }

    #[test]
    fn symmetric_counts() {
        let t = build_table(&[0, 1], 12).unwrap();
        assert_eq!(t.scaled, vec![2048, 2048]);
    }

    #[test]
    fn largest_remainder_by_hand() {
        let t = build_table(&[7, 9, 9, 9], 2).unwrap();
        assert_eq!(t.scaled, vec![1, 3]);
        // 1:1:1 into 8 slots -> 2.67 each, remainders tie, lowest index wins
        let t = build_table(&[0, 1, 2], 3).unwrap();
        assert_eq!(t.scaled, vec![3, 3, 2]);
    }

    #[test]
    fn rare_symbols_keep_a_slot() {
        let mut s = vec![0i64; 100_000];
        s.extend([1, 2, 3]);
        let t = build_table(&s, 8).unwrap();
        assert_eq!(t.scaled.iter().sum::<u32>(), 256);
        assert!(t.scaled.iter().all(|&f| f >= 1));
        assert_eq!(&t.scaled[1..], &[1, 1, 1]);
    }

    #[test]
    fn alphabet_too_large() {
        let s: Vec<i64> = (0..5).collect();
        assert!(matches!(
            build_table(&s, 2),
            Err(Error::AlphabetTooLarge { .. })
        ));
    }

    #[test]
    fn empty_stream_is_just_the_flush() {
        let t = build_table(&[1, 2], 12).unwrap();
        let bytes = encode(&[], &t).unwrap();
        assert_eq!(bytes.len(), 4);
        assert_eq!(decode(&bytes, &t, 0).unwrap(), Vec::<i64>::new());
    }

    #[test]
    fn symbol_not_in_table() {
        let t = build_table(&[1, 2], 12).unwrap();
        assert!(matches!(
            encode(&[1, 3], &t),
            Err(Error::SymbolNotInTable(3))
        ));
    }

    #[test]
    fn sixteen_symbol_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s: Vec<i64> = (0..100_000).map(|_| rng.random_range(-8..8)).collect();
        let t = build_table(&s, 12).unwrap();
        let bytes = encode(&s, &t).unwrap();
        assert_eq!(decode(&bytes, &t, s.len()).unwrap(), s);
    }

    #[test]
    fn uniform_four_symbols_cost_two_bits() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s: Vec<i64> = (0..100_000).map(|_| rng.random_range(0..4)).collect();
        let t = build_table(&s, 12).unwrap();
        let bps = 8.0 * encode(&s, &t).unwrap().len() as f64 / s.len() as f64;
        let h = empirical_entropy(&s).unwrap();
        assert!((bps - 2.0).abs() <= 0.02, "{bps}");
        assert!(bps - h <= 0.1);
    }

    #[test]
    fn truncation_is_detected() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s: Vec<i64> = (0..5000).map(|_| rng.random_range(0..10)).collect();
        let t = build_table(&s, 12).unwrap();
        let bytes = encode(&s, &t).unwrap();
        assert!(matches!(
            decode(&bytes[..bytes.len() - 3], &t, s.len()),
            Err(Error::CorruptStream(_))
        ));
        assert!(decode(&bytes, &t, s.len() + 1).is_err());
    }

    #[test]
    fn precision_selection() {
        assert_eq!(precision_for(1), 12);
        assert_eq!(precision_for(2048), 12);
        assert_eq!(precision_for(3000), 13);
        assert_eq!(precision_for(20_000), 15);
    }

    #[test]
    fn zigzag_roundtrip() {
        for v in [0i64, -1, 1, i64::MIN, i64::MAX, 12345, -98765] {
            assert_eq!(unzigzag(zigzag(v)), v);
        }
    }

    proptest! {
        #[test]
        fn roundtrip_is_lossless(
            s in prop::collection::vec(-40i64..40, 0..2000),
            precision in 7u32..=15,
        ) {
            prop_assume!(!s.is_empty());
            let t = build_table(&s, precision).unwrap();
            prop_assert_eq!(t.scaled.iter().sum::<u32>(), 1 << precision);
            let bytes = encode(&s, &t).unwrap();
            prop_assert_eq!(decode(&bytes, &t, s.len()).unwrap(), s);
        }

        #[test]
        fn restored_table_decodes(s in prop::collection::vec(any::<i64>(), 1..300)) {
            let t = build_table(&s, 12).unwrap();
            let restored = FrequencyTable::from_scaled(t.alphabet.clone(), t.scaled.clone(), 12).unwrap();
            let bytes = encode(&s, &t).unwrap();
            prop_assert_eq!(decode(&bytes, &restored, s.len()).unwrap(), s);
        }
    }
}
