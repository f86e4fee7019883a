// SPDX-License-Identifier: Apache-2.0
//! Chain geometry, product-basis encoding and single-site spin matrices.
//!
//! A product state (m_1, ..., m_N) is packed into a `u64` as base-d digits with
//! digit value m + j and site 1 in the least-significant position. Local
//! matrices use the textbook ordering instead: row 0 is m = +j. The two are
//! related by `level_index(d, digit) = d - 1 - digit`.

use std::f64::consts::TAU;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ScarError};
use crate::operator::{BasisTag, CodeSet, SparseOperator};

pub type C64 = Complex64;

pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);
pub(crate) const ONE: C64 = C64::new(1.0, 0.0);

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(rename = "twoJ")]
    two_j: u32,
    #[serde(rename = "N")]
    n: usize,
    a: f64,
    #[serde(default)]
    theta: f64,
}

/// Model parameters of a periodic spin-j chain.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawConfig")]
pub struct SpinChainConfig {
    #[serde(rename = "twoJ")]
    two_j: u32,
    #[serde(rename = "N")]
    n: usize,
    a: f64,
    theta: f64,
}

impl TryFrom<RawConfig> for SpinChainConfig {
    type Error = ScarError;
    fn try_from(raw: RawConfig) -> Result<Self> {
        SpinChainConfig::new(raw.two_j, raw.n, raw.a, raw.theta)
    }
}

impl SpinChainConfig {
    /// `theta` is reduced into [0, 2π).
    pub fn new(two_j: u32, n: usize, a: f64, theta: f64) -> Result<Self> {
        if two_j == 0 {
            return Err(ScarError::InvalidConfig("twoJ must be positive".into()));
        }
        if n < 2 {
            return Err(ScarError::InvalidConfig(format!("N = {n}, need at least 2 sites")));
        }
        if !(0.0..=1.0).contains(&a) {
            return Err(ScarError::InvalidConfig(format!("a = {a} outside [0, 1]")));
        }
        if !theta.is_finite() {
            return Err(ScarError::InvalidConfig("theta must be finite".into()));
        }
        Geometry::new(two_j as u64 + 1, n)?;
        let mut theta = theta.rem_euclid(TAU);
        if theta >= TAU {
            theta = 0.0;
        }
        Ok(Self { two_j, n, a, theta })
    }

    pub fn two_j(&self) -> u32 {
        self.two_j
    }

    pub fn j(&self) -> f64 {
        self.two_j as f64 / 2.0
    }

    pub fn sites(&self) -> usize {
        self.n
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn local_dim(&self) -> u64 {
        self.two_j as u64 + 1
    }

    pub fn with_a(&self, a: f64) -> Result<Self> {
        Self::new(self.two_j, self.n, a, self.theta)
    }

    pub fn with_theta(&self, theta: f64) -> Result<Self> {
        Self::new(self.two_j, self.n, self.a, theta)
    }

    pub fn geometry(&self) -> Geometry {
        Geometry::new(self.local_dim(), self.n).expect("validated at construction")
    }

    /// Number of states in a complete ladder of the collective spin, 2Nj + 1.
    pub fn tower_size(&self) -> usize {
        self.n * self.two_j as usize + 1
    }
}

/// Local dimension and site count, with cached digit weights.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Geometry {
    d: u64,
    n: usize,
    pow: Vec<u64>,
}

impl Geometry {
    pub fn new(d: u64, n: usize) -> Result<Self> {
        if d < 2 {
            return Err(ScarError::InvalidConfig(format!("local dimension {d} < 2")));
        }
        if n < 2 {
            return Err(ScarError::InvalidConfig(format!("N = {n}, need at least 2 sites")));
        }
        let bits = 64 - (d - 1).leading_zeros() as usize;
        if n * bits > 63 {
            return Err(ScarError::InvalidConfig(format!(
                "N·ceil(log2 d) = {} exceeds 63 bits",
                n * bits
            )));
        }
        let mut pow = Vec::with_capacity(n + 1);
        let mut p = 1u64;
        for _ in 0..=n {
            pow.push(p);
            p = p.saturating_mul(d);
        }
        Ok(Self { d, n, pow })
    }

    pub fn local_dim(&self) -> u64 {
        self.d
    }

    pub fn sites(&self) -> usize {
        self.n
    }

    /// d^N.
    pub fn dim(&self) -> u64 {
        self.pow[self.n]
    }

    pub fn full_tag(&self) -> BasisTag {
        BasisTag::Full { local_dim: self.d, sites: self.n }
    }

    /// Digit of 0-based site `s`.
    #[inline]
    pub fn digit(&self, code: u64, s: usize) -> u64 {
        (code / self.pow[s]) % self.d
    }

    #[inline]
    pub fn with_digit(&self, code: u64, s: usize, digit: u64) -> u64 {
        let old = self.digit(code, s);
        code - old * self.pow[s] + digit * self.pow[s]
    }

    pub fn encode(&self, digits: &[u64]) -> Result<u64> {
        if digits.len() != self.n {
            return Err(ScarError::DimensionMismatch { expected: self.n, got: digits.len() });
        }
        let mut code = 0u64;
        for (s, &dg) in digits.iter().enumerate() {
            if dg >= self.d {
                return Err(ScarError::InvalidConfig(format!("digit {dg} at site {} ≥ d", s + 1)));
            }
            code += dg * self.pow[s];
        }
        Ok(code)
    }

    pub fn decode(&self, code: u64) -> Vec<u64> {
        (0..self.n).map(|s| self.digit(code, s)).collect()
    }

    /// Cyclic shift by one site: the content of site l moves to site l+1.
    #[inline]
    pub fn translate(&self, code: u64) -> u64 {
        let top = self.pow[self.n - 1];
        (code % top) * self.d + code / top
    }

    /// Smallest code on the translation orbit, the number of shifts `s` with
    /// `code = T^s rep`, and the orbit period.
    pub fn orbit(&self, code: u64) -> (u64, usize, usize) {
        let mut rep = code;
        let mut steps_to_rep = 0;
        let mut c = code;
        let mut period = self.n;
        for t in 1..=self.n {
            c = self.translate(c);
            if c == code {
                period = t;
                break;
            }
            if c < rep {
                rep = c;
                steps_to_rep = t;
            }
        }
        let shift = (period - steps_to_rep % period) % period;
        (rep, shift, period)
    }
}

/// A product basis state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BasisState {
    pub code: u64,
}

impl BasisState {
    pub fn from_digits(geom: &Geometry, digits: &[u64]) -> Result<Self> {
        Ok(Self { code: geom.encode(digits)? })
    }

    /// Build from 2m values, one per site.
    pub fn from_two_m(geom: &Geometry, two_m: &[i64]) -> Result<Self> {
        let two_j = geom.local_dim() as i64 - 1;
        let digits = two_m
            .iter()
            .map(|&tm| {
                let twice = tm + two_j;
                if twice < 0 || twice % 2 != 0 || twice > 2 * two_j {
                    Err(ScarError::InvalidConfig(format!("2m = {tm} invalid for 2j = {two_j}")))
                } else {
                    Ok((twice / 2) as u64)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_digits(geom, &digits)
    }

    pub fn digits(&self, geom: &Geometry) -> Vec<u64> {
        geom.decode(self.code)
    }
}

/// Row index in the textbook (m = +j first) ordering for a digit.
#[inline]
pub fn level_index(d: u64, digit: u64) -> usize {
    (d - 1 - digit) as usize
}

/// Spin-j matrices in the ordering m = j, j-1, ..., -j.
#[derive(Clone, Debug)]
pub struct LocalSpin {
    pub two_j: u32,
    pub sx: DMatrix<C64>,
    pub sy: DMatrix<C64>,
    pub sz: DMatrix<C64>,
    pub splus: DMatrix<C64>,
    pub sminus: DMatrix<C64>,
    projectors: Vec<DMatrix<C64>>,
}

impl LocalSpin {
    pub fn dim(&self) -> usize {
        self.two_j as usize + 1
    }

    /// Projector onto |m⟩, addressed by 2m.
    pub fn projector(&self, two_m: i64) -> Option<&DMatrix<C64>> {
        let two_j = self.two_j as i64;
        if two_m.abs() > two_j || (two_j - two_m) % 2 != 0 {
            return None;
        }
        self.projectors.get(((two_j - two_m) / 2) as usize)
    }
}

pub fn local_spin_matrices(two_j: u32) -> Result<LocalSpin> {
    if two_j == 0 {
        return Err(ScarError::InvalidConfig("twoJ must be positive".into()));
    }
    let d = two_j as usize + 1;
    let j = two_j as f64 / 2.0;
    let mut splus = DMatrix::<C64>::zeros(d, d);
    let mut sz = DMatrix::<C64>::zeros(d, d);
    for i in 0..d {
        let m = j - i as f64;
        sz[(i, i)] = C64::new(m, 0.0);
        if i > 0 {
            splus[(i - 1, i)] = C64::new((j * (j + 1.0) - m * (m + 1.0)).sqrt(), 0.0);
        }
    }
    let sminus = splus.adjoint();
    let sx = (&splus + &sminus).map(|z| z * 0.5);
    let sy = (&splus - &sminus).map(|z| z * C64::new(0.0, -0.5));
    let projectors = (0..d)
        .map(|i| {
            let mut p = DMatrix::<C64>::zeros(d, d);
            p[(i, i)] = ONE;
            p
        })
        .collect();
    Ok(LocalSpin { two_j, sx, sy, sz, splus, sminus, projectors })
}

fn check_site(site: usize, geom: &Geometry) -> Result<usize> {
    if site == 0 || site > geom.sites() {
        return Err(ScarError::SiteOutOfRange { site, sites: geom.sites() });
    }
    Ok(site - 1)
}

fn check_local(op: &DMatrix<C64>, geom: &Geometry) -> Result<()> {
    let d = geom.local_dim() as usize;
    if op.nrows() != d || op.ncols() != d {
        return Err(ScarError::DimensionMismatch { expected: d, got: op.nrows() });
    }
    Ok(())
}

/// Nonzero entries of column `col` of a local matrix, as (row, value).
fn column_entries(op: &DMatrix<C64>, col: usize) -> Vec<(usize, C64)> {
    (0..op.nrows()).filter(|&r| op[(r, col)] != ZERO).map(|r| (r, op[(r, col)])).collect()
}

/// `op` on one site (1-based), identity elsewhere, on the full d^N basis.
pub fn embed_one_site(op: &DMatrix<C64>, site: usize, geom: &Geometry) -> Result<SparseOperator> {
    check_local(op, geom)?;
    let s = check_site(site, geom)?;
    let d = geom.local_dim();
    let cols: Vec<Vec<(usize, C64)>> = (0..d as usize).map(|c| column_entries(op, c)).collect();
    SparseOperator::from_rule(geom.full_tag(), CodeSet::Range(geom.dim()), |code, out| {
        let idx = level_index(d, geom.digit(code, s));
        for &(r, v) in &cols[idx] {
            out.push((geom.with_digit(code, s, d - 1 - r as u64), v));
        }
    })
}

/// `op_a` on site l and `op_b` on site l+1 (cyclic), identity elsewhere.
pub fn embed_two_site(
    op_a: &DMatrix<C64>,
    op_b: &DMatrix<C64>,
    site: usize,
    geom: &Geometry,
) -> Result<SparseOperator> {
    check_local(op_a, geom)?;
    check_local(op_b, geom)?;
    let s = check_site(site, geom)?;
    let t = (s + 1) % geom.sites();
    let d = geom.local_dim();
    let cols_a: Vec<_> = (0..d as usize).map(|c| column_entries(op_a, c)).collect();
    let cols_b: Vec<_> = (0..d as usize).map(|c| column_entries(op_b, c)).collect();
    SparseOperator::from_rule(geom.full_tag(), CodeSet::Range(geom.dim()), |code, out| {
        let ia = level_index(d, geom.digit(code, s));
        let ib = level_index(d, geom.digit(code, t));
        for &(ra, va) in &cols_a[ia] {
            let c1 = geom.with_digit(code, s, d - 1 - ra as u64);
            for &(rb, vb) in &cols_b[ib] {
                out.push((geom.with_digit(c1, t, d - 1 - rb as u64), va * vb));
            }
        }
    })
}

/// Σ_l op_l on an arbitrary product basis; targets outside `codes` are dropped.
pub fn collective_on(
    op: &DMatrix<C64>,
    geom: &Geometry,
    tag: BasisTag,
    codes: CodeSet<'_>,
) -> Result<SparseOperator> {
    check_local(op, geom)?;
    let d = geom.local_dim();
    let cols: Vec<Vec<(usize, C64)>> = (0..d as usize).map(|c| column_entries(op, c)).collect();
    SparseOperator::from_rule(tag, codes, |code, out| {
        for s in 0..geom.sites() {
            let idx = level_index(d, geom.digit(code, s));
            for &(r, v) in &cols[idx] {
                out.push((geom.with_digit(code, s, d - 1 - r as u64), v));
            }
        }
    })
}

/// Σ_l op_l on the full basis.
pub fn collective(op: &DMatrix<C64>, geom: &Geometry) -> Result<SparseOperator> {
    collective_on(op, geom, geom.full_tag(), CodeSet::Range(geom.dim()))
}
