//! Systematic MDS erasure codes over GF(256) and the symbolic fragment
//! model used at simulation scale.

pub mod gf256;

use std::collections::BTreeSet;

use bitvec::prelude::*;

use crate::error::{Error, Result};
use crate::storage::{Bits, BitsRef};

/// Largest `n` the bit-exact code supports.
pub const FIELD_LIMIT: usize = 255;

/// An `(n, k, r)` code with fragments of `fragment_size` bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CodeParams {
    pub n: usize,
    pub k: usize,
    pub fragment_size: u64,
}

impl CodeParams {
    pub fn new(n: usize, k: usize, fragment_size: u64) -> Result<Self> {
        if k == 0 || k > n {
            return Err(Error::Code(format!("need 1 ≤ k ≤ n, got k={k}, n={n}")));
        }
        Ok(CodeParams { n, k, fragment_size })
    }

    pub fn r(&self) -> usize {
        self.n - self.k
    }

    pub fn object_size(&self) -> u64 {
        self.k as u64 * self.fragment_size
    }
}

/// Placement of one object's fragments: fragment index to node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObjectLayout {
    pub object: u64,
    pub placement: Vec<usize>,
}

impl ObjectLayout {
    pub fn new(object: u64, placement: Vec<usize>) -> Result<Self> {
        let distinct: BTreeSet<_> = placement.iter().collect();
        if distinct.len() != placement.len() {
            return Err(Error::Code(format!("object {object} places two fragments on one node")));
        }
        Ok(ObjectLayout { object, placement })
    }
}

/// Identity of a symbolic fragment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FragmentId {
    pub object: u64,
    pub index: usize,
}

/// Symbolic encoding: the fragment identities of an object.
pub fn encode_symbolic(object: u64, cp: &CodeParams) -> Vec<FragmentId> {
    (0..cp.n).map(|index| FragmentId { object, index }).collect()
}

/// An object can be rebuilt iff at least `k` of its fragments are present.
pub fn recoverable(presence: &[bool], cp: &CodeParams) -> bool {
    presence.iter().filter(|&&p| p).count() >= cp.k
}

/// Systematic generator `[I; P]` where every square submatrix of `P` is
/// nonsingular. `P` is normalised so its first row and first column are all
/// ones, which makes `(3,2)` parity a plain XOR and `k = 1` a copy code.
#[derive(Debug, Clone)]
pub struct MdsCode {
    cp: CodeParams,
    parity: Vec<Vec<u8>>,
}

impl MdsCode {
    pub fn new(cp: CodeParams) -> Result<Self> {
        if cp.n > FIELD_LIMIT {
            return Err(Error::Code(format!("n = {} exceeds the field limit {FIELD_LIMIT}", cp.n)));
        }
        if cp.fragment_size % 8 != 0 {
            return Err(Error::Code("bit-exact fragments must be whole bytes".into()));
        }
        let (n, k) = (cp.n, cp.k);
        let vander: Vec<Vec<u8>> = (0..n)
            .map(|i| (0..k).map(|j| gf256::pow(i as u8, j)).collect())
            .collect();
        let top_inv = gf256::invert(&vander[..k]).expect("Vandermonde block is invertible");
        let mut parity: Vec<Vec<u8>> = vander[k..]
            .iter()
            .map(|row| {
                (0..k)
                    .map(|j| (0..k).fold(0u8, |acc, l| acc ^ gf256::mul(row[l], top_inv[l][j])))
                    .collect()
            })
            .collect();
        if let Some(first) = parity.first().cloned() {
            for row in parity.iter_mut() {
                for (x, f) in row.iter_mut().zip(&first) {
                    *x = gf256::div(*x, *f);
                }
            }
            for row in parity.iter_mut() {
                let s = gf256::inv(row[0]);
                row.iter_mut().for_each(|x| *x = gf256::mul(*x, s));
            }
        }
        Ok(MdsCode { cp, parity })
    }

    pub fn params(&self) -> &CodeParams {
        &self.cp
    }

    fn generator_row(&self, i: usize) -> Vec<u8> {
        if i < self.cp.k {
            (0..self.cp.k).map(|j| u8::from(i == j)).collect()
        } else {
            self.parity[i - self.cp.k].clone()
        }
    }

    fn frag_bytes(&self) -> usize {
        (self.cp.fragment_size / 8) as usize
    }

    /// Split an object of `k·fragment_size` bits into `n` fragments.
    pub fn encode(&self, object: &BitsRef) -> Result<Vec<Bits>> {
        if object.len() as u64 != self.cp.object_size() {
            return Err(Error::Code(format!(
                "object has {} bits, expected {}",
                object.len(),
                self.cp.object_size()
            )));
        }
        let fb = self.frag_bytes();
        let data: Vec<Vec<u8>> = (0..self.cp.k).map(|j| to_bytes(&object[j * fb * 8..(j + 1) * fb * 8])).collect();
        let mut out: Vec<Bits> = data.iter().map(|d| Bits::from_vec(d.clone())).collect();
        for row in &self.parity {
            let mut acc = vec![0u8; fb];
            for (d, &c) in data.iter().zip(row) {
                gf256::mul_add_slice(&mut acc, d, c);
            }
            out.push(Bits::from_vec(acc));
        }
        Ok(out)
    }

    /// Rebuild the object from exactly `k` fragments with distinct indices.
    pub fn decode(&self, fragments: &[(usize, &BitsRef)]) -> Result<Bits> {
        let k = self.cp.k;
        if fragments.len() != k {
            return Err(Error::Code(format!("decode needs {k} fragments, got {}", fragments.len())));
        }
        let idx: BTreeSet<usize> = fragments.iter().map(|f| f.0).collect();
        if idx.len() != k {
            return Err(Error::Code("repeated fragment index".into()));
        }
        if let Some(&bad) = idx.iter().find(|&&i| i >= self.cp.n) {
            return Err(Error::Code(format!("fragment index {bad} out of range")));
        }
        if fragments.iter().any(|f| f.1.len() as u64 != self.cp.fragment_size) {
            return Err(Error::Code("fragment size mismatch".into()));
        }
        let sub: Vec<Vec<u8>> = fragments.iter().map(|f| self.generator_row(f.0)).collect();
        let inv = gf256::invert(&sub).ok_or_else(|| Error::Code("singular decoding matrix".into()))?;
        let bytes: Vec<Vec<u8>> = fragments.iter().map(|f| to_bytes(f.1)).collect();
        let fb = self.frag_bytes();
        let mut object = Bits::with_capacity(k * fb * 8);
        for row in &inv {
            let mut acc = vec![0u8; fb];
            for (b, &c) in bytes.iter().zip(row) {
                gf256::mul_add_slice(&mut acc, b, c);
            }
            object.extend_from_bitslice(Bits::from_vec(acc).as_bitslice());
        }
        Ok(object)
    }

    /// Regenerate fragment `target` from any `k` fragments.
    pub fn regenerate(&self, fragments: &[(usize, &BitsRef)], target: usize) -> Result<Bits> {
        let object = self.decode(fragments)?;
        let mut all = self.encode(&object)?;
        if target >= all.len() {
            return Err(Error::Code(format!("fragment index {target} out of range")));
        }
        Ok(all.swap_remove(target))
    }
}

fn to_bytes(bits: &BitsRef) -> Vec<u8> {
    bits.chunks(8).map(|c| c.load_le::<u8>()).collect()
}
