//! Fixed-magnetization sector of the spin-1/2 XY model and its sparse
//! Hamiltonian.
//!
//! Spin convention: S^z = +-1/2 here; the Pauli normalization sigma = 2S is
//! applied only at the observable layer.  Basis words are n-bit occupation
//! strings (bit i set = spin up at site i), sorted numerically, which is the
//! lexicographic order on bit patterns.

use num_complex::Complex64;
use rayon::prelude::*;
use std::io::{Read, Write};
use thiserror::Error;

use crate::lattice::{DisorderRealization, LatticeSpec};

/// Hard cap on the spin count for exact sector enumeration.  C(26, 13) is
/// ~10.4M words (~83 MB); anything larger is out of desk scale.
pub const MAX_SPINS: u32 = 26;

#[derive(Debug, Error)]
pub enum HilbertError {
    #[error("sector ({n} choose {n_up}) has dim {dim}, beyond the n <= {MAX_SPINS} cap")]
    SectorTooLarge { n: u32, n_up: u32, dim: u128 },
    #[error("n_up {n_up} exceeds n {n}")]
    BadSector { n: u32, n_up: u32 },
    #[error("word {word:#x} has popcount {got}, sector requires {want}")]
    WrongPopcount { word: u64, got: u32, want: u32 },
    #[error("dimension mismatch: lattice has {lattice_n} sites, basis has {basis_n}")]
    DimensionMismatch { lattice_n: usize, basis_n: usize },
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad binary dump: {0}")]
    BadDump(String),
}

/// binomial coefficient as u128 (exact for n <= 64)
pub fn binomial(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// Enumerated fixed-n_up sector: complete, sorted, duplicate-free.
#[derive(Debug, Clone)]
pub struct Basis {
    pub n: u32,
    pub n_up: u32,
    states: Vec<u64>,
    /// pascal[p][j] = C(p, j) for rank computation
    choose: Vec<Vec<u64>>,
}

impl Basis {
    pub fn enumerate(n: u32, n_up: u32) -> Result<Basis, HilbertError> {
        if n_up > n {
            return Err(HilbertError::BadSector { n, n_up });
        }
        let dim_wide = binomial(n as u64, n_up as u64);
        if n > MAX_SPINS {
            return Err(HilbertError::SectorTooLarge {
                n,
                n_up,
                dim: dim_wide,
            });
        }
        let dim = dim_wide as usize;
        let mut states = Vec::with_capacity(dim);
        if n_up == 0 {
            states.push(0);
        } else {
            // Gosper's hack walks words of fixed popcount in ascending order
            let mut v: u64 = (1u64 << n_up) - 1;
            let limit: u64 = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
            loop {
                states.push(v);
                if states.len() == dim {
                    break;
                }
                let c = v & v.wrapping_neg();
                let r = v + c;
                v = (((r ^ v) >> 2) / c) | r;
                if v > limit {
                    break;
                }
            }
        }
        debug_assert_eq!(states.len(), dim);
        let mut choose = vec![vec![0u64; n_up as usize + 2]; n as usize + 1];
        for p in 0..=n as usize {
            choose[p][0] = 1;
            for j in 1..=(n_up as usize + 1).min(p) {
                choose[p][j] = binomial(p as u64, j as u64) as u64;
            }
        }
        Ok(Basis {
            n,
            n_up,
            states,
            choose,
        })
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[u64] {
        &self.states
    }

    pub fn word(&self, idx: usize) -> u64 {
        self.states[idx]
    }

    /// Combinatorial rank: position of `word` in the sorted sector, O(n_up).
    pub fn rank(&self, word: u64) -> Result<usize, HilbertError> {
        let pc = word.count_ones();
        if pc != self.n_up {
            return Err(HilbertError::WrongPopcount {
                word,
                got: pc,
                want: self.n_up,
            });
        }
        let mut r = 0usize;
        let mut rem = word;
        let mut j = 1usize;
        while rem != 0 {
            let p = rem.trailing_zeros() as usize;
            r += self.choose[p][j] as usize;
            rem &= rem - 1;
            j += 1;
        }
        Ok(r)
    }

    /// Checkerboard product state of the lattice (all bonds anti-aligned),
    /// if it lies in this sector.
    pub fn checkerboard_word(&self, lattice: &LatticeSpec) -> Option<u64> {
        let mut word = 0u64;
        for (i, &(r, c)) in lattice.sites.iter().enumerate() {
            if (r + c) % 2 == 0 {
                word |= 1u64 << i;
            }
        }
        if word.count_ones() == self.n_up {
            Some(word)
        } else if (!word & ((1u64 << lattice.n()) - 1)).count_ones() == self.n_up {
            Some(!word & ((1u64 << lattice.n()) - 1))
        } else {
            None
        }
    }
}

/// Sector Hamiltonian in CSR layout.  Symmetric real; diagonal entries are
/// sum_i h_i s_i with s_i = +-1/2; off-diagonals are exactly -J on
/// single-hop-connected pairs and nowhere else.  Entry order within a row is
/// ascending column index, deterministically.
#[derive(Debug, Clone)]
pub struct SparseHamiltonian {
    pub dim: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<u32>,
    pub values: Vec<f64>,
    pub n: u32,
    pub n_up: u32,
    pub coupling: f64,
    pub lattice_id: String,
    pub disorder_seed: u64,
}

/// Assemble the sector Hamiltonian.  `j` is the hopping J (1.0 in the
/// standard units; 0.0 gives the frozen diagonal model).
pub fn build_hamiltonian(
    lattice: &LatticeSpec,
    disorder: &DisorderRealization,
    basis: &Basis,
    j: f64,
) -> Result<SparseHamiltonian, HilbertError> {
    if lattice.n() != basis.n as usize {
        return Err(HilbertError::DimensionMismatch {
            lattice_n: lattice.n(),
            basis_n: basis.n as usize,
        });
    }
    if disorder.h.len() != lattice.n() {
        return Err(HilbertError::DimensionMismatch {
            lattice_n: lattice.n(),
            basis_n: disorder.h.len(),
        });
    }
    let dim = basis.dim();
    let n = basis.n;
    let h = &disorder.h;
    let bonds = &lattice.bonds;
    let rows: Vec<Vec<(u32, f64)>> = (0..dim)
        .into_par_iter()
        .map(|r| {
            let word = basis.word(r);
            let mut diag = 0.0;
            for i in 0..n as usize {
                let s = if word >> i & 1 == 1 { 0.5 } else { -0.5 };
                diag += h[i] * s;
            }
            let mut entries: Vec<(u32, f64)> = Vec::with_capacity(bonds.len() / 2 + 1);
            entries.push((r as u32, diag));
            if j != 0.0 {
                for &(a, b) in bonds {
                    let ba = word >> a & 1;
                    let bb = word >> b & 1;
                    if ba != bb {
                        let partner = word ^ ((1u64 << a) | (1u64 << b));
                        let c = basis.rank(partner).expect("partner stays in sector");
                        entries.push((c as u32, -j));
                    }
                }
            }
            entries.sort_unstable_by_key(|e| e.0);
            entries
        })
        .collect();
    let nnz: usize = rows.iter().map(|r| r.len()).sum();
    let mut row_ptr = Vec::with_capacity(dim + 1);
    let mut col_idx = Vec::with_capacity(nnz);
    let mut values = Vec::with_capacity(nnz);
    row_ptr.push(0);
    for row in rows {
        for (c, v) in row {
            col_idx.push(c);
            values.push(v);
        }
        row_ptr.push(col_idx.len());
    }
    Ok(SparseHamiltonian {
        dim,
        row_ptr,
        col_idx,
        values,
        n,
        n_up: basis.n_up,
        coupling: j,
        lattice_id: format!(
            "{}x{}/n{}b{}",
            lattice.rows,
            lattice.cols,
            lattice.n(),
            lattice.bond_count()
        ),
        disorder_seed: disorder.seed,
    })
}

impl SparseHamiltonian {
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// y = H x
    pub fn apply(&self, x: &[Complex64], y: &mut [Complex64]) {
        debug_assert_eq!(x.len(), self.dim);
        debug_assert_eq!(y.len(), self.dim);
        for r in 0..self.dim {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += x[self.col_idx[k] as usize] * self.values[k];
            }
            y[r] = acc;
        }
    }

    /// <x|H|x> (real for Hermitian H)
    pub fn expectation(&self, x: &[Complex64]) -> f64 {
        let mut acc = 0.0;
        for r in 0..self.dim {
            let mut row = Complex64::new(0.0, 0.0);
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                row += x[self.col_idx[k] as usize] * self.values[k];
            }
            acc += (x[r].conj() * row).re;
        }
        acc
    }

    /// Crude upper bound on the spectral radius (Gershgorin).
    pub fn gershgorin_bound(&self) -> f64 {
        let mut best: f64 = 0.0;
        for r in 0..self.dim {
            let mut center = 0.0;
            let mut radius = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                if self.col_idx[k] as usize == r {
                    center = self.values[k];
                } else {
                    radius += self.values[k].abs();
                }
            }
            best = best.max(center.abs() + radius);
        }
        best.max(f64::MIN_POSITIVE)
    }

    pub fn trace(&self) -> f64 {
        let mut t = 0.0;
        for r in 0..self.dim {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                if self.col_idx[k] as usize == r {
                    t += self.values[k];
                }
            }
        }
        t
    }

    /// Binary cache dump.  Layout (little-endian): magic "QGH1", u32 n,
    /// u32 n_up, u64 dim, u64 nnz, f64 coupling, u64 disorder_seed,
    /// row_ptr as u64 x (dim+1), col_idx as u32 x nnz, values as f64 x nnz.
    pub fn write_binary(&self, mut out: impl Write) -> Result<(), HilbertError> {
        out.write_all(b"QGH1")?;
        out.write_all(&self.n.to_le_bytes())?;
        out.write_all(&self.n_up.to_le_bytes())?;
        out.write_all(&(self.dim as u64).to_le_bytes())?;
        out.write_all(&(self.nnz() as u64).to_le_bytes())?;
        out.write_all(&self.coupling.to_le_bytes())?;
        out.write_all(&self.disorder_seed.to_le_bytes())?;
        for &p in &self.row_ptr {
            out.write_all(&(p as u64).to_le_bytes())?;
        }
        for &c in &self.col_idx {
            out.write_all(&c.to_le_bytes())?;
        }
        for &v in &self.values {
            out.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary(mut inp: impl Read) -> Result<SparseHamiltonian, HilbertError> {
        let mut magic = [0u8; 4];
        inp.read_exact(&mut magic)?;
        if &magic != b"QGH1" {
            return Err(HilbertError::BadDump("wrong magic".into()));
        }
        let mut b4 = [0u8; 4];
        let mut b8 = [0u8; 8];
        inp.read_exact(&mut b4)?;
        let n = u32::from_le_bytes(b4);
        inp.read_exact(&mut b4)?;
        let n_up = u32::from_le_bytes(b4);
        inp.read_exact(&mut b8)?;
        let dim = u64::from_le_bytes(b8) as usize;
        inp.read_exact(&mut b8)?;
        let nnz = u64::from_le_bytes(b8) as usize;
        inp.read_exact(&mut b8)?;
        let coupling = f64::from_le_bytes(b8);
        inp.read_exact(&mut b8)?;
        let disorder_seed = u64::from_le_bytes(b8);
        let mut row_ptr = Vec::with_capacity(dim + 1);
        for _ in 0..=dim {
            inp.read_exact(&mut b8)?;
            row_ptr.push(u64::from_le_bytes(b8) as usize);
        }
        let mut col_idx = Vec::with_capacity(nnz);
        for _ in 0..nnz {
            inp.read_exact(&mut b4)?;
            col_idx.push(u32::from_le_bytes(b4));
        }
        let mut values = Vec::with_capacity(nnz);
        for _ in 0..nnz {
            inp.read_exact(&mut b8)?;
            values.push(f64::from_le_bytes(b8));
        }
        if row_ptr.last().copied() != Some(nnz) {
            return Err(HilbertError::BadDump("row_ptr/nnz mismatch".into()));
        }
        Ok(SparseHamiltonian {
            dim,
            row_ptr,
            col_idx,
            values,
            n,
            n_up,
            coupling,
            lattice_id: String::new(),
            disorder_seed,
        })
    }
}
