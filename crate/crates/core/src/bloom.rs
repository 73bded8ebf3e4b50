//! Bloom map: an approximate key-to-value store for word clusters.
//!
//! The table has `ceil(1.23 n) + 32` cells of `H + E` bits split into three
//! equal segments. Every key hashes to one cell per segment and the XOR of its
//! three cells holds the key's value (`H` bits) plus `E` check bits derived
//! from the key. Cells are assigned by peeling the 3-uniform hypergraph; when
//! peeling fails the build retries with the next salt.
//!
//! Inserted keys always return their value. An absent key returns not-found
//! unless its check bits happen to match, which occurs with probability
//! `2^-E`; with `E = 0` every query returns some value.

use std::collections::HashMap;
use std::io::{BufRead, Read, Write};

use crate::error::{Error, Result};
use crate::hashing::{fnv1a64_with, mix64};

const MAGIC: &[u8; 4] = b"BMAP";
const VERSION: u8 = 1;
/// Hash functions (cells) per key.
pub const HASH_COUNT: u8 = 3;
const SLACK_CELLS: u64 = 32;

/// Bits needed by the sizing rule: `ceil(1.23 * (E + H) * entries)`.
pub fn size_in_bits(entries: u64, value_entropy_bits: f64, error_bits: u32) -> u64 {
    let hundredths = 123.0 * (f64::from(error_bits) + value_entropy_bits) * entries as f64;
    let nearest = hundredths.round();
    if (hundredths - nearest).abs() <= 1e-6 * nearest.max(1.0) {
        let h = nearest as u64;
        h.div_ceil(100)
    } else {
        (hundredths / 100.0).ceil() as u64
    }
}

/// Bits needed to store one of `num_values` values.
pub fn value_bits_for(num_values: u32) -> u8 {
    (32 - num_values.saturating_sub(1).leading_zeros()).max(1) as u8
}

#[derive(Clone, Debug)]
pub struct BloomMapBuilder {
    pub error_bits: u8,
    pub num_values: u32,
    pub max_retries: u32,
    pub seed: u64,
}

impl Default for BloomMapBuilder {
    fn default() -> Self {
        BloomMapBuilder { error_bits: 0, num_values: 256, max_retries: 64, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BloomMap {
    salt: u64,
    entry_count: u64,
    value_bits: u8,
    error_bits: u8,
    num_values: u32,
    segment_len: u64,
    cells: Vec<u8>,
}

struct Probe {
    cells: [u64; 3],
    check: u32,
}

fn key_hash(salt: u64, key: &[u8]) -> u64 {
    mix64(fnv1a64_with(mix64(salt), key))
}

fn probe(salt: u64, segment_len: u64, key: &[u8]) -> Probe {
    let h = key_hash(salt, key);
    let mut cells = [0u64; 3];
    for (k, c) in cells.iter_mut().enumerate() {
        let x = mix64(h ^ (k as u64 + 1));
        *c = k as u64 * segment_len + ((u128::from(x) * u128::from(segment_len)) >> 64) as u64;
    }
    Probe { cells, check: mix64(h ^ 4) as u32 }
}

fn mask(bits: u8) -> u32 {
    if bits >= 32 {
        u32::MAX
    } else {
        (1u32 << bits) - 1
    }
}

impl BloomMapBuilder {
    pub fn with_error_bits(error_bits: u8) -> Self {
        BloomMapBuilder { error_bits, ..Default::default() }
    }

    pub fn build(&self, pairs: &[(String, u32)]) -> Result<BloomMap> {
        let value_bits = value_bits_for(self.num_values);
        if u32::from(value_bits) + u32::from(self.error_bits) > 32 {
            return Err(Error::config("value bits plus error bits must not exceed 32"));
        }
        let mut seen: HashMap<&str, u32> = HashMap::with_capacity(pairs.len());
        let mut entries: Vec<(&[u8], u32)> = Vec::with_capacity(pairs.len());
        for (key, value) in pairs {
            if *value >= self.num_values {
                return Err(Error::data(format!("value {value} for `{key}` outside [0, {})", self.num_values)));
            }
            match seen.insert(key.as_str(), *value) {
                Some(prev) if prev != *value => {
                    return Err(Error::data(format!("`{key}` mapped to both {prev} and {value}")))
                }
                Some(_) => {}
                None => entries.push((key.as_bytes(), *value)),
            }
        }
        let n = entries.len() as u64;
        let base_cells = (123 * n).div_ceil(100) + SLACK_CELLS;
        let cell_bits = value_bits + self.error_bits;
        for attempt in 0..self.max_retries.max(1) {
            let growth = 1.05f64.powi((attempt / 16) as i32);
            let segment_len = ((base_cells as f64 * growth).ceil() as u64).div_ceil(3);
            let salt = self.seed.wrapping_add(u64::from(attempt));
            if let Some(cells) = assign(&entries, salt, segment_len, value_bits, self.error_bits) {
                return Ok(BloomMap {
                    salt,
                    entry_count: n,
                    value_bits,
                    error_bits: self.error_bits,
                    num_values: self.num_values,
                    segment_len,
                    cells: pack(&cells, cell_bits),
                });
            }
        }
        Err(Error::internal(format!("bloom map construction failed after {} attempts", self.max_retries)))
    }
}

/// Peel the hypergraph and assign cell contents; `None` if peeling stalls.
fn assign(entries: &[(&[u8], u32)], salt: u64, segment_len: u64, value_bits: u8, error_bits: u8) -> Option<Vec<u32>> {
    let total = (3 * segment_len) as usize;
    let probes: Vec<Probe> = entries.iter().map(|(k, _)| probe(salt, segment_len, k)).collect();
    let mut count = vec![0u32; total];
    let mut xor_key = vec![0usize; total];
    for (i, p) in probes.iter().enumerate() {
        for &c in &p.cells {
            count[c as usize] += 1;
            xor_key[c as usize] ^= i;
        }
    }
    let mut queue: Vec<usize> = (0..total).filter(|&c| count[c] == 1).collect();
    let mut order: Vec<(usize, usize)> = Vec::with_capacity(entries.len());
    while let Some(c) = queue.pop() {
        if count[c] != 1 {
            continue;
        }
        let key = xor_key[c];
        order.push((key, c));
        for &other in &probes[key].cells {
            let o = other as usize;
            count[o] -= 1;
            xor_key[o] ^= key;
            if count[o] == 1 {
                queue.push(o);
            }
        }
    }
    if order.len() != entries.len() {
        return None;
    }
    let mut cells = vec![0u32; total];
    let check_mask = mask(error_bits);
    for &(key, cell) in order.iter().rev() {
        let p = &probes[key];
        let stored = ((p.check & check_mask) << value_bits) | entries[key].1;
        let others = p.cells.iter().filter(|&&c| c as usize != cell).fold(0u32, |acc, &c| acc ^ cells[c as usize]);
        cells[cell] = stored ^ others;
    }
    Some(cells)
}

fn pack(cells: &[u32], bits: u8) -> Vec<u8> {
    let bits = usize::from(bits);
    let mut out = vec![0u8; (cells.len() * bits).div_ceil(8)];
    for (i, &v) in cells.iter().enumerate() {
        let start = i * bits;
        for b in 0..bits {
            if (v >> b) & 1 == 1 {
                let pos = start + b;
                out[pos / 8] |= 1 << (pos % 8);
            }
        }
    }
    out
}

impl BloomMap {
    pub fn build(pairs: &[(String, u32)], error_bits: u8) -> Result<Self> {
        BloomMapBuilder::with_error_bits(error_bits).build(pairs)
    }

    fn cell(&self, index: u64) -> u32 {
        let bits = u64::from(self.value_bits + self.error_bits);
        let start = index * bits;
        let mut v = 0u32;
        for b in 0..bits {
            let pos = start + b;
            if (self.cells[(pos / 8) as usize] >> (pos % 8)) & 1 == 1 {
                v |= 1 << b;
            }
        }
        v
    }

    pub fn lookup(&self, key: &str) -> Option<u32> {
        if self.entry_count == 0 {
            return None;
        }
        let p = probe(self.salt, self.segment_len, key.as_bytes());
        let x = p.cells.iter().fold(0u32, |acc, &c| acc ^ self.cell(c));
        let check = x >> self.value_bits;
        if check != p.check & mask(self.error_bits) {
            return None;
        }
        let value = x & mask(self.value_bits);
        (value < self.num_values).then_some(value)
    }

    pub fn entry_count(&self) -> u64 {
        self.entry_count
    }

    pub fn hash_count(&self) -> u8 {
        HASH_COUNT
    }

    pub fn value_bits(&self) -> u8 {
        self.value_bits
    }

    pub fn error_bits(&self) -> u8 {
        self.error_bits
    }

    pub fn num_values(&self) -> u32 {
        self.num_values
    }

    /// Bits in the cell table.
    pub fn capacity_bits(&self) -> u64 {
        3 * self.segment_len * u64::from(self.value_bits + self.error_bits)
    }

    pub fn serialized_len(&self) -> usize {
        44 + self.cells.len()
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&[VERSION, self.value_bits, self.error_bits, HASH_COUNT])?;
        w.write_all(&self.num_values.to_le_bytes())?;
        w.write_all(&self.entry_count.to_le_bytes())?;
        w.write_all(&self.salt.to_le_bytes())?;
        w.write_all(&self.segment_len.to_le_bytes())?;
        w.write_all(&(self.cells.len() as u64).to_le_bytes())?;
        w.write_all(&self.cells)?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.serialized_len());
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let bad = |m: &str| Error::Format(format!("bloom map: {m}"));
        let mut head = [0u8; 8];
        r.read_exact(&mut head)?;
        if &head[..4] != MAGIC {
            return Err(bad("bad magic"));
        }
        if head[4] != VERSION {
            return Err(bad("unsupported version"));
        }
        let (value_bits, error_bits) = (head[5], head[6]);
        if head[7] != HASH_COUNT || value_bits == 0 || u32::from(value_bits) + u32::from(error_bits) > 32 {
            return Err(bad("bad parameters"));
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        let num_values = u32::from_le_bytes(b4);
        let mut u64s = [0u64; 4];
        for v in &mut u64s {
            let mut b8 = [0u8; 8];
            r.read_exact(&mut b8)?;
            *v = u64::from_le_bytes(b8);
        }
        let [entry_count, salt, segment_len, len] = u64s;
        let expected = (3 * segment_len * u64::from(value_bits + error_bits)).div_ceil(8);
        if len != expected {
            return Err(bad("cell table length mismatch"));
        }
        let mut cells = vec![0u8; len as usize];
        r.read_exact(&mut cells)?;
        Ok(BloomMap { salt, entry_count, value_bits, error_bits, num_values, segment_len, cells })
    }
}

/// Read `word<TAB>cluster-id` lines. Identical duplicates are tolerated,
/// conflicting ones are a data error.
pub fn read_cluster_tsv(reader: impl BufRead, num_values: u32) -> Result<Vec<(String, u32)>> {
    let mut pairs = Vec::new();
    let mut seen: HashMap<String, u32> = HashMap::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let (word, id) =
            line.split_once('\t').ok_or_else(|| Error::data_at(lineno, "expected `word<TAB>cluster-id`"))?;
        let id: u32 = id.trim().parse().map_err(|_| Error::data_at(lineno, format!("bad cluster id `{id}`")))?;
        if id >= num_values {
            return Err(Error::data_at(lineno, format!("cluster id {id} outside [0, {num_values})")));
        }
        match seen.get(word) {
            Some(&prev) if prev != id => {
                return Err(Error::data_at(lineno, format!("`{word}` already mapped to cluster {prev}")))
            }
            Some(_) => {}
            None => {
                seen.insert(word.to_string(), id);
                pairs.push((word.to_string(), id));
            }
        }
    }
    Ok(pairs)
}
