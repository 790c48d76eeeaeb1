//! 2D lattice geometry, box-disorder realizations, and graph-Laplacian
//! eigenmodes.
//!
//! Units: J = 1 throughout, times in 1/J, disorder widths quoted as w = W/J.
//! Boundaries are open (finite device patch); the discrete -nabla^2 is the
//! combinatorial graph Laplacian L = D - A.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt::Write as _;
use thiserror::Error;

use crate::rngkey;

#[derive(Debug, Error)]
pub enum LatticeError {
    #[error("lattice has {0} unmasked sites; need at least 2")]
    EmptyLattice(usize),
    #[error("masked lattice is disconnected")]
    Disconnected,
    #[error("mask refers to out-of-range site ({0}, {1})")]
    MaskOutOfRange(usize, usize),
    #[error("field count {got} does not match site count {want}")]
    FieldCountMismatch { got: usize, want: usize },
    #[error("malformed lattice record: {0}")]
    Parse(String),
}

/// Site set and nearest-neighbor bond list of a rectangular patch with an
/// optional exclusion mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeSpec {
    pub rows: usize,
    pub cols: usize,
    /// ordered (row, col) coordinates of unmasked sites
    pub sites: Vec<(usize, usize)>,
    /// unordered nearest-neighbor pairs as (lo, hi) site indices
    pub bonds: Vec<(usize, usize)>,
}

impl LatticeSpec {
    pub fn n(&self) -> usize {
        self.sites.len()
    }

    pub fn bond_count(&self) -> usize {
        self.bonds.len()
    }
}

/// Per-site random fields h_i in units of J, |h_i| <= w/2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisorderRealization {
    pub h: Vec<f64>,
    pub w: f64,
    pub seed: u64,
}

/// Full spectrum of the graph Laplacian: ascending eigenvalues with
/// orthonormal real modes; lambda_0 = 0 with the constant vector.
#[derive(Debug, Clone)]
pub struct EigenmodeSet {
    pub eigenvalues: Vec<f64>,
    /// modes[k] is the eigenvector for eigenvalues[k], length n
    pub modes: Vec<Vec<f64>>,
}

/// Build a rows x cols open-boundary rectangle, excluding masked (row, col)
/// sites.  Bonds are exactly the Manhattan-distance-1 pairs of unmasked
/// sites.
pub fn build_lattice(
    rows: usize,
    cols: usize,
    mask: Option<&[(usize, usize)]>,
) -> Result<LatticeSpec, LatticeError> {
    let mut masked = BTreeSet::new();
    if let Some(m) = mask {
        for &(r, c) in m {
            if r >= rows || c >= cols {
                return Err(LatticeError::MaskOutOfRange(r, c));
            }
            masked.insert((r, c));
        }
    }
    let mut sites = Vec::new();
    let mut index = vec![usize::MAX; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            if !masked.contains(&(r, c)) {
                index[r * cols + c] = sites.len();
                sites.push((r, c));
            }
        }
    }
    if sites.len() < 2 {
        return Err(LatticeError::EmptyLattice(sites.len()));
    }
    let mut bonds = Vec::new();
    for (i, &(r, c)) in sites.iter().enumerate() {
        // right and down neighbors only: each unordered pair appears once
        if c + 1 < cols && index[r * cols + c + 1] != usize::MAX {
            bonds.push((i, index[r * cols + c + 1]));
        }
        if r + 1 < rows && index[(r + 1) * cols + c] != usize::MAX {
            bonds.push((i, index[(r + 1) * cols + c]));
        }
    }
    let spec = LatticeSpec {
        rows,
        cols,
        sites,
        bonds,
    };
    if !is_connected(&spec) {
        return Err(LatticeError::Disconnected);
    }
    Ok(spec)
}

fn is_connected(l: &LatticeSpec) -> bool {
    let n = l.n();
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in &l.bonds {
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut seen = vec![false; n];
    let mut stack = vec![0usize];
    seen[0] = true;
    let mut count = 1;
    while let Some(v) = stack.pop() {
        for &u in &adj[v] {
            if !seen[u] {
                seen[u] = true;
                count += 1;
                stack.push(u);
            }
        }
    }
    count == n
}

/// Sample i.i.d. fields h_i ~ U(-w/2, w/2).  Pure function of
/// (lattice, w, seed): identical inputs give bit-identical output.
pub fn sample_disorder(lattice: &LatticeSpec, w: f64, seed: u64) -> DisorderRealization {
    assert!(w >= 0.0, "disorder width must be nonnegative");
    let mut rng = rngkey::rng_for(&[seed, lattice.n() as u64]);
    let h = (0..lattice.n())
        .map(|_| (rng.gen::<f64>() - 0.5) * w)
        .collect();
    DisorderRealization { h, w, seed }
}

/// Dense graph Laplacian L = D - A (open boundaries).
pub fn laplacian_matrix(lattice: &LatticeSpec) -> DMatrix<f64> {
    let n = lattice.n();
    let mut l = DMatrix::zeros(n, n);
    for &(a, b) in &lattice.bonds {
        l[(a, a)] += 1.0;
        l[(b, b)] += 1.0;
        l[(a, b)] -= 1.0;
        l[(b, a)] -= 1.0;
    }
    l
}

/// Full Laplacian spectrum, eigenvalues ascending, modes orthonormal.
/// The k = 0 mode is fixed to the positive constant vector.
pub fn laplacian_eigenmodes(lattice: &LatticeSpec) -> EigenmodeSet {
    let l = laplacian_matrix(lattice);
    let n = lattice.n();
    let eig = l.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
    let mut eigenvalues = Vec::with_capacity(n);
    let mut modes = Vec::with_capacity(n);
    for &k in &order {
        eigenvalues.push(eig.eigenvalues[k].max(0.0));
        let col = eig.eigenvectors.column(k);
        let mut v: Vec<f64> = col.iter().copied().collect();
        // deterministic sign: largest-|.| component positive
        let imax = (0..n)
            .max_by(|&a, &b| v[a].abs().partial_cmp(&v[b].abs()).unwrap())
            .unwrap();
        if v[imax] < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        modes.push(v);
    }
    // exact constant zero mode
    let c = 1.0 / (n as f64).sqrt();
    modes[0] = vec![c; n];
    eigenvalues[0] = 0.0;
    EigenmodeSet { eigenvalues, modes }
}

/// Plain-text record of a lattice and one disorder realization, replayable.
pub fn to_record(lattice: &LatticeSpec, disorder: &DisorderRealization) -> String {
    let mut s = String::new();
    writeln!(s, "# qglass lattice record v1").unwrap();
    writeln!(s, "rows {} cols {}", lattice.rows, lattice.cols).unwrap();
    writeln!(s, "w {:.17e}", disorder.w).unwrap();
    writeln!(s, "seed {}", disorder.seed).unwrap();
    writeln!(s, "sites {}", lattice.n()).unwrap();
    for &(r, c) in &lattice.sites {
        writeln!(s, "s {r} {c}").unwrap();
    }
    writeln!(s, "bonds {}", lattice.bonds.len()).unwrap();
    for &(a, b) in &lattice.bonds {
        writeln!(s, "b {a} {b}").unwrap();
    }
    writeln!(s, "fields {}", disorder.h.len()).unwrap();
    for &h in &disorder.h {
        writeln!(s, "h {h:.17e}").unwrap();
    }
    s
}

/// Parse a record produced by [`to_record`].
pub fn from_record(text: &str) -> Result<(LatticeSpec, DisorderRealization), LatticeError> {
    let mut rows = 0;
    let mut cols = 0;
    let mut w = 0.0;
    let mut seed = 0u64;
    let mut sites = Vec::new();
    let mut bonds = Vec::new();
    let mut h = Vec::new();
    let bad = |m: &str| LatticeError::Parse(m.to_string());
    for line in text.lines() {
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            [] | ["#", ..] => {}
            ["rows", r, "cols", c] => {
                rows = r.parse().map_err(|_| bad("rows"))?;
                cols = c.parse().map_err(|_| bad("cols"))?;
            }
            ["w", v] => w = v.parse().map_err(|_| bad("w"))?,
            ["seed", v] => seed = v.parse().map_err(|_| bad("seed"))?,
            ["sites", _] | ["bonds", _] | ["fields", _] => {}
            ["s", r, c] => sites.push((
                r.parse().map_err(|_| bad("site"))?,
                c.parse().map_err(|_| bad("site"))?,
            )),
            ["b", a, b] => bonds.push((
                a.parse().map_err(|_| bad("bond"))?,
                b.parse().map_err(|_| bad("bond"))?,
            )),
            ["h", v] => h.push(v.parse().map_err(|_| bad("field"))?),
            _ => return Err(bad(line)),
        }
    }
    if h.len() != sites.len() {
        return Err(LatticeError::FieldCountMismatch {
            got: h.len(),
            want: sites.len(),
        });
    }
    Ok((
        LatticeSpec {
            rows,
            cols,
            sites,
            bonds,
        },
        DisorderRealization { h, w, seed },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smallest_lattices() {
        let l = build_lattice(1, 2, None).unwrap();
        assert_eq!(l.n(), 2);
        assert_eq!(l.bond_count(), 1);
        let l = build_lattice(2, 2, None).unwrap();
        assert_eq!(l.n(), 4);
        assert_eq!(l.bond_count(), 4);
        let l = build_lattice(5, 5, None).unwrap();
        assert_eq!(l.n(), 25);
        assert_eq!(l.bond_count(), 40);
    }

    #[test]
    fn bonds_are_exactly_nn_pairs_of_unmasked_sites() {
        let l = build_lattice(3, 4, Some(&[(1, 1)])).unwrap();
        assert_eq!(l.n(), 11);
        for &(a, b) in &l.bonds {
            assert_ne!(a, b);
            let (ra, ca) = l.sites[a];
            let (rb, cb) = l.sites[b];
            let d = ra.abs_diff(rb) + ca.abs_diff(cb);
            assert_eq!(d, 1);
        }
        let set: BTreeSet<_> = l.bonds.iter().copied().collect();
        assert_eq!(set.len(), l.bonds.len(), "duplicate bond");
    }

    #[test]
    fn disconnected_and_empty_are_errors() {
        // mask the middle column of a 1x3 path
        assert!(matches!(
            build_lattice(1, 3, Some(&[(0, 1)])),
            Err(LatticeError::Disconnected)
        ));
        assert!(matches!(
            build_lattice(1, 2, Some(&[(0, 0)])),
            Err(LatticeError::EmptyLattice(1))
        ));
        assert!(matches!(
            build_lattice(2, 2, Some(&[(5, 0)])),
            Err(LatticeError::MaskOutOfRange(5, 0))
        ));
    }

    #[test]
    fn disorder_support_reproducibility_and_zero_width() {
        let l = build_lattice(4, 4, None).unwrap();
        let d0 = sample_disorder(&l, 0.0, 1);
        assert!(d0.h.iter().all(|&h| h == 0.0));
        let d1 = sample_disorder(&l, 7.5, 42);
        let d2 = sample_disorder(&l, 7.5, 42);
        assert_eq!(d1.h, d2.h);
        assert!(d1.h.iter().all(|&h| h.abs() <= 7.5 / 2.0));
        assert_ne!(sample_disorder(&l, 7.5, 43).h, d1.h);
    }

    #[test]
    fn disorder_mean_statistical_oracle() {
        // w = 10, pooled over many realizations: sample mean within
        // 4 sigma / sqrt(N) of zero, sigma = w/sqrt(12)
        let l = build_lattice(5, 5, None).unwrap();
        let w = 10.0;
        let mut pool = Vec::new();
        for seed in 0..4000u64 {
            pool.extend(sample_disorder(&l, w, seed).h);
        }
        let n = pool.len() as f64;
        let mean = pool.iter().sum::<f64>() / n;
        let bound = 4.0 * (w / 12f64.sqrt()) / n.sqrt();
        assert!(
            mean.abs() <= bound,
            "pooled mean {mean} exceeds 4-sigma bound {bound}"
        );
    }

    #[test]
    fn path_graph_spectra() {
        let l = build_lattice(1, 3, None).unwrap();
        let e = laplacian_eigenmodes(&l);
        let want = [0.0, 1.0, 3.0];
        for (a, b) in e.eigenvalues.iter().zip(want) {
            assert!((a - b).abs() < 1e-10);
        }
        let l = build_lattice(1, 2, None).unwrap();
        let e = laplacian_eigenmodes(&l);
        assert!((e.eigenvalues[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn grid_5x5_lambda1_matches_cartesian_product_value() {
        // path P5 spectrum: 2 - 2cos(k pi / 5); grid eigenvalues are sums
        let l = build_lattice(5, 5, None).unwrap();
        let e = laplacian_eigenmodes(&l);
        let want = 2.0 - 2.0 * (std::f64::consts::PI / 5.0).cos();
        assert!(
            (e.eigenvalues[1] - want).abs() < 1e-10,
            "lambda_1 = {} vs {}",
            e.eigenvalues[1],
            want
        );
        // degenerate pair (row/col modes)
        assert!((e.eigenvalues[2] - want).abs() < 1e-10);
    }

    #[test]
    fn laplacian_row_sums_psd_and_reconstruction() {
        let l = build_lattice(3, 4, Some(&[(0, 3)])).unwrap();
        let m = laplacian_matrix(&l);
        let n = l.n();
        for r in 0..n {
            let s: f64 = (0..n).map(|c| m[(r, c)]).sum();
            assert_eq!(s, 0.0, "row sum must be exactly zero");
        }
        let e = laplacian_eigenmodes(&l);
        assert!(e.eigenvalues.iter().all(|&x| x >= 0.0));
        // orthonormality to 1e-10
        for a in 0..n {
            for b in a..n {
                let dot: f64 = e.modes[a].iter().zip(&e.modes[b]).map(|(x, y)| x * y).sum();
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-10);
            }
        }
        // sum_k lambda_k v_k v_k^T == L
        let mut rec = DMatrix::zeros(n, n);
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    rec[(i, j)] += e.eigenvalues[k] * e.modes[k][i] * e.modes[k][j];
                }
            }
        }
        let err = (&rec - &m).abs().max();
        assert!(err <= 1e-8, "reconstruction error {err}");
    }

    #[test]
    fn record_round_trip() {
        let l = build_lattice(3, 3, Some(&[(2, 2)])).unwrap();
        let d = sample_disorder(&l, 4.0, 99);
        let text = to_record(&l, &d);
        let (l2, d2) = from_record(&text).unwrap();
        assert_eq!(l, l2);
        assert_eq!(d, d2);
    }
}
