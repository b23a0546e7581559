//! Measurement operators and signal generators.
//!
//! Operators are stored as dense per-block matrices in real representation;
//! complex blocks use the 2x2 embedding from [`crate::linalg::realify`]. A
//! [`OperatorDescriptor`] records how an operator was built (kind, sizes, seed,
//! index sets) and is what gets serialized; raw matrices never are.
//!
//! 2D operators act on `T0 x T1` arrays stored with `t0` fastest (index
//! `t0 + T0 * t1`). Axis 0 is the exhaustively sampled axis, axis 1 the
//! partially sampled one. Anisotropic outputs are ordered `k0 * m + i`, where
//! `i` indexes the selected set `K1`.

use std::collections::BTreeSet;
use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::coeffsets::{CoefficientSet, SignalVector};
use crate::error::{invalid, PtlabError, Result};
use crate::linalg::{self, complexify, realify, C64};
use crate::rng::SeedStream;

/// Problem sizes `(ℓ, m, M, B)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ProblemSizes {
    /// Free entries per block.
    pub ell: usize,
    /// Rows per block.
    pub m: usize,
    /// Columns per block.
    #[serde(rename = "M")]
    pub big_m: usize,
    /// Number of blocks.
    #[serde(rename = "B")]
    pub blocks: usize,
}

impl ProblemSizes {
    pub fn new(ell: usize, m: usize, big_m: usize, blocks: usize) -> Result<Self> {
        if big_m == 0 || m == 0 || m > big_m {
            return Err(invalid(format!("need 1 <= m <= M, got m={m}, M={big_m}")));
        }
        if ell > big_m {
            return Err(invalid(format!("need ell <= M, got ell={ell}, M={big_m}")));
        }
        if blocks == 0 {
            return Err(invalid("need B >= 1"));
        }
        Ok(Self {
            ell,
            m,
            big_m,
            blocks,
        })
    }

    pub fn k(&self) -> usize {
        self.blocks * self.ell
    }

    pub fn n(&self) -> usize {
        self.blocks * self.m
    }

    pub fn total_cols(&self) -> usize {
        self.blocks * self.big_m
    }

    pub fn delta(&self) -> f64 {
        self.m as f64 / self.big_m as f64
    }

    pub fn epsilon(&self) -> f64 {
        self.ell as f64 / self.big_m as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Field {
    Real,
    Complex,
}

impl Field {
    pub fn for_set(set: CoefficientSet) -> Field {
        if set.is_complex() {
            Field::Complex
        } else {
            Field::Real
        }
    }

    fn dim(self) -> usize {
        match self {
            Field::Real => 1,
            Field::Complex => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    Dense,
    BlockDiagRepeated,
    BlockDiagDistinct,
    Aniso2d,
    Iso2d,
}

/// How the blocks were produced.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum BlockSource {
    /// Uniform spherical ensemble drawn from `(seed, "use-block", b)`.
    Use { seed: u64 },
    /// Complex partial DFT rows `K`.
    PartialDft { indices: Vec<usize> },
    /// Real orthonormal Fourier rows `K`.
    RealFourier { indices: Vec<usize> },
    /// Anisotropic 2D Fourier sampling of rows `K1`.
    Aniso { t0: usize, t1: usize, indices: Vec<usize> },
    /// Isotropic 2D Fourier sampling of `n` points drawn from `seed`.
    Iso { grid: usize, n: usize, seed: u64 },
    /// Caller-supplied matrices; not replayable.
    Explicit,
}

/// Serializable recipe for an operator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OperatorDescriptor {
    pub kind: OperatorKind,
    pub field: Field,
    /// Complex operator restricted to real inputs.
    #[serde(default)]
    pub real_inputs: bool,
    pub block_rows: usize,
    pub block_cols: usize,
    pub num_blocks: usize,
    #[serde(flatten)]
    pub source: BlockSource,
}

/// An `n x N` linear map with block structure.
#[derive(Debug, Clone)]
pub struct MeasurementOperator {
    desc: OperatorDescriptor,
    blocks: Vec<DMatrix<f64>>,
}

impl MeasurementOperator {
    pub fn descriptor(&self) -> &OperatorDescriptor {
        &self.desc
    }

    pub fn kind(&self) -> OperatorKind {
        self.desc.kind
    }

    pub fn field(&self) -> Field {
        self.desc.field
    }

    /// Real dimension of one input coefficient.
    pub fn input_dim(&self) -> usize {
        if self.desc.real_inputs {
            1
        } else {
            self.desc.field.dim()
        }
    }

    pub fn num_blocks(&self) -> usize {
        self.desc.num_blocks
    }

    pub fn is_block_diagonal(&self) -> bool {
        matches!(
            self.desc.kind,
            OperatorKind::BlockDiagRepeated | OperatorKind::BlockDiagDistinct
        )
    }

    /// Number of rows `n` in field units.
    pub fn rows(&self) -> usize {
        self.desc.block_rows * self.desc.num_blocks
    }

    /// Number of columns `N` in coefficients.
    pub fn cols(&self) -> usize {
        self.desc.block_cols * self.desc.num_blocks
    }

    /// Real-representation block `b`.
    pub fn block(&self, b: usize) -> &DMatrix<f64> {
        match self.desc.kind {
            OperatorKind::BlockDiagRepeated => &self.blocks[0],
            _ => &self.blocks[b],
        }
    }

    pub fn stored_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn block_real_rows(&self) -> usize {
        self.blocks[0].nrows()
    }

    pub fn block_real_cols(&self) -> usize {
        self.blocks[0].ncols()
    }

    pub fn real_rows(&self) -> usize {
        self.block_real_rows() * self.desc.num_blocks
    }

    pub fn real_cols(&self) -> usize {
        self.block_real_cols() * self.desc.num_blocks
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.real_cols() {
            return Err(PtlabError::ShapeMismatch(format!(
                "apply: input has {} reals, operator expects {}",
                x.len(),
                self.real_cols()
            )));
        }
        let (br, bc) = (self.block_real_rows(), self.block_real_cols());
        let mut out = vec![0.0; self.real_rows()];
        for b in 0..self.desc.num_blocks {
            linalg::matvec(
                self.block(b),
                &x[b * bc..(b + 1) * bc],
                &mut out[b * br..(b + 1) * br],
            );
        }
        Ok(out)
    }

    pub fn adjoint(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.real_rows() {
            return Err(PtlabError::ShapeMismatch(format!(
                "adjoint: input has {} reals, operator expects {}",
                y.len(),
                self.real_rows()
            )));
        }
        let (br, bc) = (self.block_real_rows(), self.block_real_cols());
        let mut out = vec![0.0; self.real_cols()];
        for b in 0..self.desc.num_blocks {
            linalg::matvec_t(
                self.block(b),
                &y[b * br..(b + 1) * br],
                &mut out[b * bc..(b + 1) * bc],
            );
        }
        Ok(out)
    }

    /// Dense real-representation matrix of the whole operator.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let (br, bc) = (self.block_real_rows(), self.block_real_cols());
        let mut d = DMatrix::zeros(self.real_rows(), self.real_cols());
        for b in 0..self.desc.num_blocks {
            d.view_mut((b * br, b * bc), (br, bc)).copy_from(self.block(b));
        }
        d
    }

    /// Dense complex matrix; only for complex operators on complex inputs.
    pub fn to_complex_dense(&self) -> Result<DMatrix<C64>> {
        if self.desc.field != Field::Complex || self.desc.real_inputs {
            return Err(invalid("operator is not a complex operator on complex inputs"));
        }
        Ok(complexify(&self.to_dense()))
    }

    /// Restricts a complex operator to real-valued inputs, so real coefficient
    /// sets can be posed against complex measurements.
    pub fn restrict_to_real_inputs(&self) -> Result<MeasurementOperator> {
        if self.desc.field != Field::Complex || self.desc.real_inputs {
            return Err(invalid("only complex operators can be restricted to real inputs"));
        }
        let blocks = self
            .blocks
            .iter()
            .map(|blk| {
                DMatrix::from_fn(blk.nrows(), blk.ncols() / 2, |i, j| blk[(i, 2 * j)])
            })
            .collect();
        let mut desc = self.desc.clone();
        desc.real_inputs = true;
        Ok(MeasurementOperator { desc, blocks })
    }

    /// Rebuilds an operator from its descriptor.
    pub fn from_descriptor(desc: &OperatorDescriptor) -> Result<MeasurementOperator> {
        let op = match (&desc.source, desc.kind) {
            (BlockSource::Aniso { t0, t1, indices }, OperatorKind::Aniso2d) => {
                aniso_sampler_2d_rect(*t0, *t1, indices)?
            }
            (BlockSource::Iso { grid, n, seed }, OperatorKind::Iso2d) => {
                iso_sampler_2d(*grid, *n, *seed)?
            }
            (BlockSource::Use { seed }, kind) => {
                let repeated = kind == OperatorKind::BlockDiagRepeated;
                let count = if repeated { 1 } else { desc.num_blocks };
                let ss = SeedStream::new(*seed);
                let blocks = (0..count)
                    .map(|b| {
                        sample_use(
                            desc.block_rows,
                            desc.block_cols,
                            desc.field,
                            &mut ss.rng("use-block", b as u64),
                        )
                    })
                    .collect::<Result<Vec<_>>>()?;
                let mut op = make_block_diagonal(blocks, desc.num_blocks, repeated, desc.field)?;
                op.desc.source = desc.source.clone();
                op
            }
            (BlockSource::PartialDft { indices }, OperatorKind::BlockDiagRepeated) => {
                let blk = realify(&partial_dft_block(desc.block_cols, indices)?);
                let mut op = make_block_diagonal(vec![blk], desc.num_blocks, true, Field::Complex)?;
                op.desc.source = desc.source.clone();
                op
            }
            (BlockSource::RealFourier { indices }, OperatorKind::BlockDiagRepeated) => {
                let blk = partial_real_fourier_block(desc.block_cols, indices)?;
                let mut op = make_block_diagonal(vec![blk], desc.num_blocks, true, Field::Real)?;
                op.desc.source = desc.source.clone();
                op
            }
            _ => {
                return Err(invalid(format!(
                    "descriptor {:?} cannot be replayed",
                    desc.kind
                )))
            }
        };
        if desc.real_inputs {
            op.restrict_to_real_inputs()
        } else {
            Ok(op)
        }
    }
}

/// `m x M` block from the uniform spherical ensemble, in real representation.
/// Each column is a Gaussian draw normalised to unit length.
pub fn sample_use<R: Rng + ?Sized>(
    m: usize,
    big_m: usize,
    field: Field,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    if m == 0 || big_m == 0 {
        return Err(invalid(format!("USE block needs m, M >= 1, got {m}x{big_m}")));
    }
    match field {
        Field::Real => {
            let mut a = DMatrix::from_fn(m, big_m, |_, _| StandardNormal.sample(rng));
            for mut col in a.column_iter_mut() {
                let nrm = col.norm();
                col /= nrm;
            }
            Ok(a)
        }
        Field::Complex => {
            let mut c = DMatrix::from_fn(m, big_m, |_, _| {
                C64::new(StandardNormal.sample(rng), StandardNormal.sample(rng))
            });
            for mut col in c.column_iter_mut() {
                let nrm = col.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                col.iter_mut().for_each(|z| *z /= nrm);
            }
            Ok(realify(&c))
        }
    }
}

/// Block-diagonal operator from real-representation blocks.
pub fn make_block_diagonal(
    blocks: Vec<DMatrix<f64>>,
    num_blocks: usize,
    repeated: bool,
    field: Field,
) -> Result<MeasurementOperator> {
    if num_blocks == 0 {
        return Err(invalid("need B >= 1"));
    }
    if repeated && blocks.len() != 1 {
        return Err(PtlabError::ShapeMismatch(format!(
            "repeated ensemble takes exactly one block, got {}",
            blocks.len()
        )));
    }
    if !repeated && blocks.len() != num_blocks {
        return Err(PtlabError::ShapeMismatch(format!(
            "distinct ensemble needs {num_blocks} blocks, got {}",
            blocks.len()
        )));
    }
    let shape = blocks[0].shape();
    if blocks.iter().any(|b| b.shape() != shape) {
        return Err(PtlabError::ShapeMismatch("blocks differ in shape".into()));
    }
    let d = field.dim();
    if !shape.0.is_multiple_of(d) || !shape.1.is_multiple_of(d) {
        return Err(PtlabError::ShapeMismatch(
            "complex blocks must have even real dimensions".into(),
        ));
    }
    Ok(MeasurementOperator {
        desc: OperatorDescriptor {
            kind: if repeated {
                OperatorKind::BlockDiagRepeated
            } else {
                OperatorKind::BlockDiagDistinct
            },
            field,
            real_inputs: false,
            block_rows: shape.0 / d,
            block_cols: shape.1 / d,
            num_blocks,
            source: BlockSource::Explicit,
        },
        blocks,
    })
}

/// A single dense block viewed as an operator.
pub fn dense_operator(a: DMatrix<f64>, field: Field) -> Result<MeasurementOperator> {
    let mut op = make_block_diagonal(vec![a], 1, true, field)?;
    op.desc.kind = OperatorKind::Dense;
    Ok(op)
}

fn check_indices(len: usize, k: &[usize], what: &str) -> Result<()> {
    if k.is_empty() {
        return Err(PtlabError::InvalidIndices(format!("{what}: empty index set")));
    }
    let mut seen = BTreeSet::new();
    for &i in k {
        if i >= len {
            return Err(PtlabError::InvalidIndices(format!(
                "{what}: index {i} out of range 0..{len}"
            )));
        }
        if !seen.insert(i) {
            return Err(PtlabError::InvalidIndices(format!("{what}: duplicate index {i}")));
        }
    }
    Ok(())
}

fn unit_root(k: usize, t: usize, len: usize) -> C64 {
    let phase = 2.0 * PI * ((k * t) % len) as f64 / len as f64;
    C64::new(phase.cos(), phase.sin())
}

/// Rows `K` of the unitary DFT: entry `(i, t) = exp(2πi·K[i]·t/M) / √M`.
pub fn partial_dft_block(big_m: usize, k: &[usize]) -> Result<DMatrix<C64>> {
    check_indices(big_m, k, "partial DFT")?;
    let s = 1.0 / (big_m as f64).sqrt();
    Ok(DMatrix::from_fn(k.len(), big_m, |i, t| unit_root(k[i], t, big_m) * s))
}

/// Rows `K` of the real orthonormal Fourier basis of length `M`.
///
/// Row 0 is the constant; rows `2j-1` and `2j` are `√(2/M)·cos(2πjt/M)` and
/// `√(2/M)·sin(2πjt/M)`; for even `M` the last row is the alternating
/// Nyquist row. Selecting rows gives a real partial Fourier block.
pub fn partial_real_fourier_block(big_m: usize, k: &[usize]) -> Result<DMatrix<f64>> {
    check_indices(big_m, k, "real Fourier")?;
    let n = big_m as f64;
    Ok(DMatrix::from_fn(k.len(), big_m, |i, t| {
        let r = k[i];
        if r == 0 {
            1.0 / n.sqrt()
        } else if big_m.is_multiple_of(2) && r == big_m - 1 {
            if t % 2 == 0 {
                1.0 / n.sqrt()
            } else {
                -1.0 / n.sqrt()
            }
        } else {
            let j = r.div_ceil(2);
            let phase = 2.0 * PI * ((j * t) % big_m) as f64 / n;
            let amp = (2.0 / n).sqrt();
            if r % 2 == 1 {
                amp * phase.cos()
            } else {
                amp * phase.sin()
            }
        }
    }))
}

/// Anisotropic sampler on an `M x M` grid: all `k0`, rows `k1 ∈ K1`.
pub fn aniso_sampler_2d(big_m: usize, k1: &[usize]) -> Result<MeasurementOperator> {
    aniso_sampler_2d_rect(big_m, big_m, k1)
}

/// Anisotropic sampler on a `T0 x T1` grid, exhaustive along axis 0.
pub fn aniso_sampler_2d_rect(t0: usize, t1: usize, k1: &[usize]) -> Result<MeasurementOperator> {
    check_indices(t1, k1, "anisotropic rows")?;
    let m = k1.len();
    let s = 1.0 / ((t0 * t1) as f64).sqrt();
    let c = DMatrix::from_fn(t0 * m, t0 * t1, |row, col| {
        let (k0, i) = (row / m, row % m);
        let (a, b) = (col % t0, col / t0);
        unit_root(k0, a, t0) * unit_root(k1[i], b, t1) * s
    });
    Ok(MeasurementOperator {
        desc: OperatorDescriptor {
            kind: OperatorKind::Aniso2d,
            field: Field::Complex,
            real_inputs: false,
            block_rows: t0 * m,
            block_cols: t0 * t1,
            num_blocks: 1,
            source: BlockSource::Aniso {
                t0,
                t1,
                indices: k1.to_vec(),
            },
        },
        blocks: vec![realify(&c)],
    })
}

/// Isotropic sampler: the 2D DFT at `n` distinct uniformly drawn `(k0, k1)`.
pub fn iso_sampler_2d(big_m: usize, n: usize, seed: u64) -> Result<MeasurementOperator> {
    let total = big_m * big_m;
    if n == 0 || n > total {
        return Err(invalid(format!("isotropic sampler needs 1 <= n <= M^2 = {total}, got {n}")));
    }
    let picks = iso_sample_indices(big_m, n, seed);
    let s = 1.0 / big_m as f64;
    let c = DMatrix::from_fn(n, total, |row, col| {
        let (k0, k1) = picks[row];
        unit_root(k0, col % big_m, big_m) * unit_root(k1, col / big_m, big_m) * s
    });
    Ok(MeasurementOperator {
        desc: OperatorDescriptor {
            kind: OperatorKind::Iso2d,
            field: Field::Complex,
            real_inputs: false,
            block_rows: n,
            block_cols: total,
            num_blocks: 1,
            source: BlockSource::Iso {
                grid: big_m,
                n,
                seed,
            },
        },
        blocks: vec![realify(&c)],
    })
}

/// The `(k0, k1)` pairs selected by [`iso_sampler_2d`].
pub fn iso_sample_indices(big_m: usize, n: usize, seed: u64) -> Vec<(usize, usize)> {
    let mut rng = SeedStream::new(seed).rng("iso-sampler", 0);
    let mut flat = sample(&mut rng, big_m * big_m, n).into_vec();
    flat.sort_unstable();
    flat.into_iter().map(|f| (f % big_m, f / big_m)).collect()
}

/// Re-indexes a grid vector (`t0 + T0·t1`) into block order (`t0·T1 + t1`),
/// so that block `t0` holds the line `x(t0, ·)`. `dim` is the real dimension
/// per coefficient.
pub fn grid_to_blocks(x: &[f64], t0: usize, t1: usize, dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for a in 0..t0 {
        for b in 0..t1 {
            let src = (a + t0 * b) * dim;
            let dst = (a * t1 + b) * dim;
            out[dst..dst + dim].copy_from_slice(&x[src..src + dim]);
        }
    }
    out
}

/// Inverse of [`grid_to_blocks`].
pub fn blocks_to_grid(x: &[f64], t0: usize, t1: usize, dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for a in 0..t0 {
        for b in 0..t1 {
            let src = (a * t1 + b) * dim;
            let dst = (a + t0 * b) * dim;
            out[dst..dst + dim].copy_from_slice(&x[src..src + dim]);
        }
    }
    out
}

/// Random signal with regular sparsity: `ℓ` free entries in each block.
///
/// Block `b` uses stream `(seed, "signal-block", b)`. Free values are
/// Uniform(0,1) for `[0,1]`, |N(0,1)| for the half-line, N(0,1) for reals and
/// standard complex Gaussian for complex. Boundary entries are Bernoulli(½)
/// over {0, 1} for `[0,1]` and exactly zero otherwise.
pub fn sample_signal(
    sizes: &ProblemSizes,
    set: CoefficientSet,
    seed: &SeedStream,
) -> Result<SignalVector> {
    if sizes.ell > sizes.big_m {
        return Err(invalid(format!("ell = {} exceeds M = {}", sizes.ell, sizes.big_m)));
    }
    let dim = set.ambient_dim();
    let mut entries = vec![0.0; sizes.total_cols() * dim];
    for b in 0..sizes.blocks {
        let mut rng = seed.rng("signal-block", b as u64);
        let base = b * sizes.big_m * dim;
        let support = sample(&mut rng, sizes.big_m, sizes.ell);
        let mut free = vec![false; sizes.big_m];
        for i in support.iter() {
            free[i] = true;
        }
        for (i, &is_free) in free.iter().enumerate() {
            let slot = &mut entries[base + i * dim..base + (i + 1) * dim];
            match (set, is_free) {
                (CoefficientSet::Box01, true) => {
                    // open interval so the entry is never on the boundary
                    let mut u: f64 = rng.random();
                    while u == 0.0 {
                        u = rng.random();
                    }
                    slot[0] = u;
                }
                (CoefficientSet::Box01, false) => {
                    slot[0] = if rng.random::<bool>() { 1.0 } else { 0.0 };
                }
                (CoefficientSet::NonNeg, true) => {
                    slot[0] = nonzero_normal(&mut rng).abs();
                }
                (CoefficientSet::Real, true) => {
                    slot[0] = nonzero_normal(&mut rng);
                }
                (CoefficientSet::Complex, true) => {
                    let s = std::f64::consts::FRAC_1_SQRT_2;
                    slot[0] = nonzero_normal(&mut rng) * s;
                    slot[1] = nonzero_normal(&mut rng) * s;
                }
                (_, false) => {}
            }
        }
    }
    SignalVector::new(entries, set, sizes.big_m, sizes.blocks)
}

fn nonzero_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let z: f64 = StandardNormal.sample(rng);
        if z != 0.0 {
            return z;
        }
    }
}
