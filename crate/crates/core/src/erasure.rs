//! (n, k) MDS codes over GF(2^8) and over the reals, plus a repetition code.
//!
//! GF(2^8) codes are systematic Reed-Solomon: a Vandermonde matrix on the
//! points `0, 1, ..., n-1` right-multiplied by the inverse of its top `k×k`
//! block. Real codes are `[I; P]` with Gaussian parity rows `P`, since real
//! Vandermonde matrices become ill-conditioned quickly.

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::gf256;
use crate::numeric::{binomial, stream_rng};
use crate::placement::enumerate_subsets;

/// Decodes whose k×k system has a 1-norm condition number above this carry a warning.
pub const CONDITION_WARN: f64 = 1e10;

const REAL_RETRIES: u64 = 8;
const EXHAUSTIVE_SUBMATRIX_LIMIT: u64 = 5000;
const SAMPLED_SUBMATRICES: usize = 512;
const GF_EXHAUSTIVE_MAX_N: usize = 12;

#[derive(Debug, Error, PartialEq)]
pub enum ErasureError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("unsupported size: {0}")]
    UnsupportedSize(String),
    #[error("could not sample a well-conditioned generator after {0} attempts")]
    ConstructionFailed(u64),
    #[error("not enough symbols: have {have}, need {need} (deficit {})", need - have)]
    NotEnoughSymbols { have: usize, need: usize },
    #[error("generator algebra is {expected:?}, payloads are {got:?}")]
    FieldMismatch { expected: Field, got: Field },
    #[error("selected {k}x{k} submatrix is singular")]
    Singular { k: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Field {
    Gf256,
    Real,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Generator {
    Gf256(Vec<Vec<u8>>),
    Real(Vec<Vec<f64>>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct MdsCode {
    pub n: usize,
    pub k: usize,
    pub generator: Generator,
    pub systematic: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RealDecoded {
    pub blocks: Vec<Vec<f64>>,
    /// Coded indices that were used.
    pub used: Vec<usize>,
    pub condition: f64,
    pub warning: Option<String>,
}

impl MdsCode {
    pub fn new(n: usize, k: usize, field: Field, seed: u64) -> Result<Self, ErasureError> {
        if k == 0 || k > n {
            return Err(ErasureError::InvalidArgument(format!("need 1 <= k <= n, got n={n}, k={k}")));
        }
        match field {
            Field::Gf256 => Self::reed_solomon(n, k),
            Field::Real => Self::random_real(n, k, seed),
        }
    }

    pub fn identity(k: usize, field: Field) -> Self {
        let generator = match field {
            Field::Gf256 => Generator::Gf256(identity_rows(k, 0u8, 1u8)),
            Field::Real => Generator::Real(identity_rows(k, 0.0, 1.0)),
        };
        Self { n: k, k, generator, systematic: true }
    }

    /// `(k+1, k)` real code whose extra row sums every source block.
    /// For k = 2 this is the rows `[1,0], [0,1], [1,1]`.
    pub fn single_parity(k: usize) -> Self {
        let mut rows = identity_rows(k, 0.0, 1.0);
        rows.push(vec![1.0; k]);
        Self { n: k + 1, k, generator: Generator::Real(rows), systematic: true }
    }

    pub fn from_real_rows(rows: Vec<Vec<f64>>) -> Result<Self, ErasureError> {
        let k = rows.first().map_or(0, Vec::len);
        if k == 0 || rows.len() < k || rows.iter().any(|r| r.len() != k) {
            return Err(ErasureError::InvalidArgument("generator must be n×k with n >= k >= 1".into()));
        }
        let systematic = rows[..k]
            .iter()
            .enumerate()
            .all(|(i, r)| r.iter().enumerate().all(|(j, &v)| v == if i == j { 1.0 } else { 0.0 }));
        Ok(Self { n: rows.len(), k, generator: Generator::Real(rows), systematic })
    }

    fn reed_solomon(n: usize, k: usize) -> Result<Self, ErasureError> {
        if n > 255 {
            return Err(ErasureError::UnsupportedSize(format!("GF(256) codes need n <= 255, got {n}")));
        }
        let vandermonde: Vec<Vec<u8>> =
            (0..n).map(|i| (0..k).map(|j| gf256::pow(i as u8, j)).collect()).collect();
        let top_inv = gf256::invert(&vandermonde[..k]).ok_or(ErasureError::Singular { k })?;
        let mut rows = gf256::mat_mul(&vandermonde, &top_inv);
        normalize_parity(&mut rows, k);
        let code = Self { n, k, generator: Generator::Gf256(rows), systematic: true };
        if n <= GF_EXHAUSTIVE_MAX_N && !code.all_submatrices_invertible() {
            return Err(ErasureError::Singular { k });
        }
        Ok(code)
    }

    fn random_real(n: usize, k: usize, seed: u64) -> Result<Self, ErasureError> {
        for attempt in 0..REAL_RETRIES {
            let mut rng = stream_rng(seed, 0x4D44_5352, attempt);
            let mut rows = identity_rows(k, 0.0, 1.0);
            for _ in k..n {
                rows.push((0..k).map(|_| rng.sample::<f64, _>(StandardNormal)).collect());
            }
            let code = Self { n, k, generator: Generator::Real(rows), systematic: true };
            if code.sampled_submatrices_ok(seed ^ attempt) {
                return Ok(code);
            }
        }
        Err(ErasureError::ConstructionFailed(REAL_RETRIES))
    }

    pub fn field(&self) -> Field {
        match self.generator {
            Generator::Gf256(_) => Field::Gf256,
            Generator::Real(_) => Field::Real,
        }
    }

    /// Exhaustive check of every k×k row selection.
    pub fn all_submatrices_invertible(&self) -> bool {
        let Ok(subsets) = enumerate_subsets(self.n, self.k) else {
            return false;
        };
        subsets.iter().all(|s| {
            let rows: Vec<usize> = s.iter().map(|i| i - 1).collect();
            self.submatrix_ok(&rows)
        })
    }

    fn sampled_submatrices_ok(&self, seed: u64) -> bool {
        if binomial(self.n, self.k) <= EXHAUSTIVE_SUBMATRIX_LIMIT {
            return self.all_submatrices_invertible();
        }
        let mut rng = stream_rng(seed, 0x5355_424D, 0);
        (0..SAMPLED_SUBMATRICES).all(|_| {
            let mut rows = sample(&mut rng, self.n, self.k).into_vec();
            rows.sort_unstable();
            self.submatrix_ok(&rows)
        })
    }

    fn submatrix_ok(&self, rows: &[usize]) -> bool {
        match &self.generator {
            Generator::Gf256(g) => {
                let sub: Vec<Vec<u8>> = rows.iter().map(|&i| g[i].clone()).collect();
                gf256::invert(&sub).is_some()
            }
            Generator::Real(g) => {
                let sub: Vec<Vec<f64>> = rows.iter().map(|&i| g[i].clone()).collect();
                Lu::factor(&sub).is_some_and(|lu| lu.condition(&sub) < CONDITION_WARN)
            }
        }
    }

    fn gf_rows(&self) -> Result<&Vec<Vec<u8>>, ErasureError> {
        match &self.generator {
            Generator::Gf256(g) => Ok(g),
            Generator::Real(_) => Err(ErasureError::FieldMismatch { expected: Field::Real, got: Field::Gf256 }),
        }
    }

    fn real_rows(&self) -> Result<&Vec<Vec<f64>>, ErasureError> {
        match &self.generator {
            Generator::Real(g) => Ok(g),
            Generator::Gf256(_) => Err(ErasureError::FieldMismatch { expected: Field::Gf256, got: Field::Real }),
        }
    }

    pub fn encode_bytes(&self, blocks: &[Vec<u8>]) -> Result<Vec<Vec<u8>>, ErasureError> {
        let g = self.gf_rows()?;
        let len = check_blocks(blocks, self.k)?;
        Ok(g.iter()
            .map(|row| {
                let mut acc = vec![0u8; len];
                for (&c, b) in row.iter().zip(blocks) {
                    gf256::mul_add_into(&mut acc, c, b);
                }
                acc
            })
            .collect())
    }

    pub fn encode_real(&self, blocks: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, ErasureError> {
        let g = self.real_rows()?;
        let len = check_blocks(blocks, self.k)?;
        Ok(g.iter()
            .map(|row| {
                let mut acc = vec![0.0; len];
                for (&c, b) in row.iter().zip(blocks) {
                    if c != 0.0 {
                        for (a, x) in acc.iter_mut().zip(b) {
                            *a += c * x;
                        }
                    }
                }
                acc
            })
            .collect())
    }

    /// Lowest `k` available coded indices.
    fn select<T>(&self, available: &BTreeMap<usize, T>) -> Result<Vec<usize>, ErasureError> {
        if let Some(&bad) = available.keys().find(|&&i| i >= self.n) {
            return Err(ErasureError::InvalidArgument(format!("coded index {bad} >= n = {}", self.n)));
        }
        if available.len() < self.k {
            return Err(ErasureError::NotEnoughSymbols { have: available.len(), need: self.k });
        }
        Ok(available.keys().copied().take(self.k).collect())
    }

    pub fn decode_bytes(&self, available: &BTreeMap<usize, Vec<u8>>) -> Result<Vec<Vec<u8>>, ErasureError> {
        let g = self.gf_rows()?;
        let used = self.select(available)?;
        let sub: Vec<Vec<u8>> = used.iter().map(|&i| g[i].clone()).collect();
        let inv = gf256::invert(&sub).ok_or(ErasureError::Singular { k: self.k })?;
        let symbols: Vec<Vec<u8>> = used.iter().map(|i| available[i].clone()).collect();
        check_blocks(&symbols, self.k)?;
        Ok(gf256::mat_mul(&inv, &symbols))
    }

    pub fn decode_real(&self, available: &BTreeMap<usize, Vec<f64>>) -> Result<RealDecoded, ErasureError> {
        let g = self.real_rows()?;
        let used = self.select(available)?;
        let sub: Vec<Vec<f64>> = used.iter().map(|&i| g[i].clone()).collect();
        let symbols: Vec<Vec<f64>> = used.iter().map(|i| available[i].clone()).collect();
        let len = check_blocks(&symbols, self.k)?;
        let lu = Lu::factor(&sub).ok_or(ErasureError::Singular { k: self.k })?;
        let condition = lu.condition(&sub);
        let mut blocks = vec![vec![0.0; len]; self.k];
        let mut rhs = vec![0.0; self.k];
        for col in 0..len {
            for (r, s) in rhs.iter_mut().zip(&symbols) {
                *r = s[col];
            }
            let x = lu.solve(&rhs);
            for (b, v) in blocks.iter_mut().zip(x) {
                b[col] = v;
            }
        }
        let warning = (condition > CONDITION_WARN)
            .then(|| format!("decode submatrix condition number {condition:.3e} exceeds {CONDITION_WARN:.0e}"));
        Ok(RealDecoded { blocks, used, condition, warning })
    }

    /// Real generators as CSV, GF(256) generators as a grid of hex bytes.
    pub fn export(&self) -> String {
        let mut out = String::new();
        match &self.generator {
            Generator::Real(g) => {
                let header: Vec<String> = (0..self.k).map(|j| format!("g{j}")).collect();
                out.push_str(&format!("row,{}\n", header.join(",")));
                for (i, row) in g.iter().enumerate() {
                    let cells: Vec<String> = row.iter().map(|v| crate::numeric::fmt_sig(*v)).collect();
                    out.push_str(&format!("{i},{}\n", cells.join(",")));
                }
            }
            Generator::Gf256(g) => {
                for row in g {
                    let cells: Vec<String> = row.iter().map(|b| format!("{b:02x}")).collect();
                    out.push_str(&cells.join(" "));
                    out.push('\n');
                }
            }
        }
        out
    }
}

/// Scales the parity block `rows[k..]` so its first row and first column are
/// all ones. Row and column scalings of the parity block of a systematic code
/// preserve the MDS property; with this, any `(k+1, k)` code is plain XOR parity.
fn normalize_parity(rows: &mut [Vec<u8>], k: usize) {
    let Some(first) = rows.get(k).cloned() else {
        return;
    };
    for row in rows[k..].iter_mut() {
        for (v, &f) in row.iter_mut().zip(&first) {
            *v = gf256::div(*v, f);
        }
    }
    for row in rows[k..].iter_mut() {
        let lead = row[0];
        for v in row.iter_mut() {
            *v = gf256::div(*v, lead);
        }
    }
}

fn identity_rows<T: Copy>(k: usize, zero: T, one: T) -> Vec<Vec<T>> {
    (0..k).map(|i| (0..k).map(|j| if i == j { one } else { zero }).collect()).collect()
}

fn check_blocks<T>(blocks: &[Vec<T>], k: usize) -> Result<usize, ErasureError> {
    if blocks.len() != k {
        return Err(ErasureError::InvalidArgument(format!("expected {k} blocks, got {}", blocks.len())));
    }
    let len = blocks[0].len();
    if blocks.iter().any(|b| b.len() != len) {
        return Err(ErasureError::InvalidArgument("blocks have different lengths".into()));
    }
    Ok(len)
}

/// LU factorisation with partial pivoting of a small dense matrix.
struct Lu {
    lu: Vec<Vec<f64>>,
    perm: Vec<usize>,
}

impl Lu {
    fn factor(a: &[Vec<f64>]) -> Option<Self> {
        let n = a.len();
        let mut lu = a.to_vec();
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = a.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        for col in 0..n {
            let pivot = (col..n).max_by(|&x, &y| lu[x][col].abs().total_cmp(&lu[y][col].abs()))?;
            if lu[pivot][col].abs() <= scale * 1e-14 {
                return None;
            }
            lu.swap(col, pivot);
            perm.swap(col, pivot);
            for row in col + 1..n {
                let f = lu[row][col] / lu[col][col];
                lu[row][col] = f;
                for j in col + 1..n {
                    lu[row][j] -= f * lu[col][j];
                }
            }
        }
        Some(Self { lu, perm })
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.lu.len();
        let mut y: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            for j in 0..i {
                y[i] -= self.lu[i][j] * y[j];
            }
        }
        for i in (0..n).rev() {
            for j in i + 1..n {
                y[i] -= self.lu[i][j] * y[j];
            }
            y[i] /= self.lu[i][i];
        }
        y
    }

    /// Exact 1-norm condition number via the explicit inverse.
    fn condition(&self, a: &[Vec<f64>]) -> f64 {
        let n = a.len();
        let norm1 = |cols: &dyn Fn(usize, usize) -> f64| {
            (0..n).map(|j| (0..n).map(|i| cols(i, j).abs()).sum::<f64>()).fold(0.0, f64::max)
        };
        let mut inv = vec![vec![0.0; n]; n];
        let mut e = vec![0.0; n];
        for j in 0..n {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[j] = 1.0;
            for (i, v) in self.solve(&e).into_iter().enumerate() {
                inv[i][j] = v;
            }
        }
        norm1(&|i, j| a[i][j]) * norm1(&|i, j| inv[i][j])
    }
}

/// `(n, k)` repetition code: coded symbol `i` is a copy of source `i mod k`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RepetitionCode {
    pub n: usize,
    pub k: usize,
}

impl RepetitionCode {
    pub fn new(n: usize, k: usize) -> Result<Self, ErasureError> {
        if k == 0 || k > n || n % k != 0 {
            return Err(ErasureError::InvalidArgument(format!("repetition code needs k | n, got n={n}, k={k}")));
        }
        Ok(Self { n, k })
    }

    pub fn replication(&self) -> usize {
        self.n / self.k
    }

    pub fn source_of(&self, coded: usize) -> usize {
        coded % self.k
    }

    pub fn copies_of(&self, source: usize) -> Vec<usize> {
        (source..self.n).step_by(self.k).collect()
    }

    pub fn encode<T: Clone>(&self, blocks: &[T]) -> Vec<T> {
        (0..self.n).map(|i| blocks[self.source_of(i)].clone()).collect()
    }

    pub fn recoverable(&self, survivors: &[usize]) -> bool {
        (0..self.k).all(|s| survivors.iter().any(|&c| c < self.n && self.source_of(c) == s))
    }

    pub fn decode<T: Clone>(&self, available: &BTreeMap<usize, T>) -> Result<Vec<T>, ErasureError> {
        (0..self.k)
            .map(|s| {
                self.copies_of(s)
                    .into_iter()
                    .find_map(|c| available.get(&c).cloned())
                    .ok_or(ErasureError::NotEnoughSymbols { have: 0, need: 1 })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bytes_blocks(k: usize, len: usize, seed: u8) -> Vec<Vec<u8>> {
        (0..k).map(|i| (0..len).map(|j| (i * 31 + j * 7) as u8 ^ seed).collect()).collect()
    }

    #[test]
    fn single_parity_preset_rows() {
        let code = MdsCode::single_parity(2);
        assert_eq!(code.generator, Generator::Real(vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]));
        let a1 = vec![1.0, 2.0, 3.0];
        let a2 = vec![10.0, 20.0, 30.0];
        let coded = code.encode_real(&[a1.clone(), a2.clone()]).unwrap();
        assert_eq!(coded[2], vec![11.0, 22.0, 33.0]);
        let avail = BTreeMap::from([(0, coded[0].clone()), (2, coded[2].clone())]);
        let out = code.decode_real(&avail).unwrap();
        assert_eq!(out.blocks, vec![a1, a2]);
        assert!(out.warning.is_none());
    }

    #[test]
    fn identity_when_n_equals_k() {
        for field in [Field::Gf256, Field::Real] {
            let code = MdsCode::new(4, 4, field, 1).unwrap();
            assert_eq!(code, MdsCode::identity(4, field));
        }
    }

    #[test]
    fn gf_five_three_all_submatrices() {
        let code = MdsCode::new(5, 3, Field::Gf256, 0).unwrap();
        assert!(code.systematic);
        assert!(code.all_submatrices_invertible());
    }

    #[test]
    fn gf_parity_of_two_is_xor() {
        let code = MdsCode::new(3, 2, Field::Gf256, 0).unwrap();
        let Generator::Gf256(g) = &code.generator else { unreachable!() };
        assert_eq!(g[2], vec![1, 1]);
        let blocks = bytes_blocks(2, 16, 0x5A);
        let coded = code.encode_bytes(&blocks).unwrap();
        let xor: Vec<u8> = blocks[0].iter().zip(&blocks[1]).map(|(a, b)| a ^ b).collect();
        assert_eq!(coded[2], xor);
    }

    #[test]
    fn gf_six_three_every_subset() {
        let code = MdsCode::new(6, 3, Field::Gf256, 0).unwrap();
        let blocks = bytes_blocks(3, 32, 0x11);
        let coded = code.encode_bytes(&blocks).unwrap();
        let subsets = enumerate_subsets(6, 3).unwrap();
        assert_eq!(subsets.len(), 20);
        for s in subsets {
            let avail: BTreeMap<usize, Vec<u8>> = s.iter().map(|i| (i - 1, coded[i - 1].clone())).collect();
            assert_eq!(code.decode_bytes(&avail).unwrap(), blocks, "subset {s}");
        }
    }

    #[test]
    fn zero_blocks_encode_to_zero() {
        let code = MdsCode::new(7, 4, Field::Gf256, 0).unwrap();
        assert!(code.encode_bytes(&vec![vec![0u8; 5]; 4]).unwrap().iter().flatten().all(|&b| b == 0));
        let real = MdsCode::new(7, 4, Field::Real, 3).unwrap();
        assert!(real.encode_real(&vec![vec![0.0; 5]; 4]).unwrap().iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn errors() {
        assert!(matches!(MdsCode::new(256, 10, Field::Gf256, 0), Err(ErasureError::UnsupportedSize(_))));
        assert!(matches!(MdsCode::new(3, 4, Field::Real, 0), Err(ErasureError::InvalidArgument(_))));
        let code = MdsCode::new(5, 3, Field::Gf256, 0).unwrap();
        assert!(matches!(
            code.encode_bytes(&[vec![1, 2], vec![3], vec![4, 5]]),
            Err(ErasureError::InvalidArgument(_))
        ));
        let avail = BTreeMap::from([(0, vec![1u8]), (4, vec![2u8])]);
        assert_eq!(
            code.decode_bytes(&avail).unwrap_err(),
            ErasureError::NotEnoughSymbols { have: 2, need: 3 }
        );
        assert!(matches!(code.encode_real(&[vec![1.0]]), Err(ErasureError::FieldMismatch { .. })));
    }

    #[test]
    fn ill_conditioned_decode_warns() {
        let bad = MdsCode::from_real_rows(vec![vec![1.0, 1.0], vec![1.0, 1.0 + 1e-12]]).unwrap();
        let coded = bad.encode_real(&[vec![1.0], vec![2.0]]).unwrap();
        let avail = BTreeMap::from([(0, coded[0].clone()), (1, coded[1].clone())]);
        let out = bad.decode_real(&avail).unwrap();
        assert!(out.condition > CONDITION_WARN);
        assert!(out.warning.is_some());
    }

    #[test]
    fn export_formats() {
        let csv = MdsCode::single_parity(2).export();
        assert_eq!(csv, "row,g0,g1\n0,1,0\n1,0,1\n2,1,1\n");
        let hex = MdsCode::new(3, 2, Field::Gf256, 0).unwrap().export();
        assert_eq!(hex.lines().count(), 3);
        assert_eq!(hex.lines().next().unwrap(), "01 00");
    }

    #[test]
    fn repetition_recovery_exhaustive() {
        let code = RepetitionCode::new(6, 3).unwrap();
        for mask in 0u32..(1 << 6) {
            let survivors: Vec<usize> = (0..6).filter(|i| mask & (1 << i) != 0).collect();
            let expected = (0..3).all(|s| code.copies_of(s).iter().any(|c| survivors.contains(c)));
            assert_eq!(code.recoverable(&survivors), expected);
            let blocks = vec!['a', 'b', 'c'];
            let coded = code.encode(&blocks);
            let avail: BTreeMap<usize, char> = survivors.iter().map(|&i| (i, coded[i])).collect();
            assert_eq!(code.decode(&avail).is_ok(), expected);
            if expected {
                assert_eq!(code.decode(&avail).unwrap(), blocks);
            }
        }
        assert!(RepetitionCode::new(6, 4).is_err());
    }
}
