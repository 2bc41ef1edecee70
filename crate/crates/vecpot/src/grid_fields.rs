//! Sampled-field data model on uniform Cartesian grids.
//!
//! Fields are node-centered, stored flat in row-major order with the last
//! axis fastest. Multi-component fields (vector, antisymmetric-matrix) are
//! component-major: the full scalar block of component 0, then component 1,
//! and so on. This fixes a bit-exact file layout for [`write_field`] /
//! [`read_field`].
//!
//! Antisymmetric-matrix fields store only the strictly-upper components
//! (pairs `(i, j)` with `i < j` in lexicographic order), so membership in the
//! skew-symmetric class holds by construction.

use crate::error::{Result, VecpotError};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use std::path::Path;

/// Uniform Cartesian grid: per-axis sample counts, spacings, and origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dim: usize,
    pub shape: Vec<usize>,
    pub spacing: Vec<f64>,
    pub origin: Vec<f64>,
}

impl GridSpec {
    /// Volume grid in dimension `N >= 2`.
    pub fn new(shape: Vec<usize>, spacing: Vec<f64>, origin: Vec<f64>) -> Result<Self> {
        let g = Self::new_param(shape, spacing, origin)?;
        if g.dim < 2 {
            return Err(VecpotError::InvalidGrid(format!(
                "volume grids need dim >= 2, got {}",
                g.dim
            )));
        }
        Ok(g)
    }

    /// Grid of any dimension `>= 1`. Boundary-chart parameter grids are
    /// `(N-1)`-dimensional, so `N = 2` charts live on 1-d grids.
    pub fn new_param(shape: Vec<usize>, spacing: Vec<f64>, origin: Vec<f64>) -> Result<Self> {
        let dim = shape.len();
        if dim < 1 {
            return Err(VecpotError::InvalidGrid("empty shape".into()));
        }
        if spacing.len() != dim || origin.len() != dim {
            return Err(VecpotError::InvalidGrid(format!(
                "shape/spacing/origin length mismatch: {} / {} / {}",
                dim,
                spacing.len(),
                origin.len()
            )));
        }
        if let Some(&n) = shape.iter().find(|&&n| n < 3) {
            return Err(VecpotError::InvalidGrid(format!(
                "every axis needs at least 3 samples, got {n}"
            )));
        }
        if let Some(&h) = spacing.iter().find(|&&h| !(h > 0.0) || !h.is_finite()) {
            return Err(VecpotError::InvalidGrid(format!("non-positive spacing {h}")));
        }
        if let Some(&o) = origin.iter().find(|&&o| !o.is_finite()) {
            return Err(VecpotError::InvalidGrid(format!("non-finite origin {o}")));
        }
        Ok(GridSpec {
            dim,
            shape,
            spacing,
            origin,
        })
    }

    /// Cube grid `[0, side]^dim` with `n` nodes per axis.
    pub fn cube(dim: usize, n: usize, side: f64) -> Result<Self> {
        let h = side / (n as f64 - 1.0);
        Self::new(vec![n; dim], vec![h; dim], vec![0.0; dim])
    }

    /// Total number of nodes.
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Row-major strides, last axis fastest.
    pub fn strides(&self) -> Vec<usize> {
        let mut s = vec![1usize; self.dim];
        for d in (0..self.dim.saturating_sub(1)).rev() {
            s[d] = s[d + 1] * self.shape[d + 1];
        }
        s
    }

    pub fn ravel(&self, idx: &[usize]) -> usize {
        let strides = self.strides();
        idx.iter().zip(&strides).map(|(i, s)| i * s).sum()
    }

    pub fn unravel(&self, flat: usize) -> Vec<usize> {
        let strides = self.strides();
        (0..self.dim)
            .map(|d| (flat / strides[d]) % self.shape[d])
            .collect()
    }

    /// Physical position of a node.
    pub fn position(&self, idx: &[usize]) -> Vec<f64> {
        (0..self.dim)
            .map(|d| self.origin[d] + idx[d] as f64 * self.spacing[d])
            .collect()
    }

    /// Volume of one grid cell, `prod(h_k)`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    /// Per-axis physical extent `(n_k - 1) h_k`.
    pub fn extent(&self) -> Vec<f64> {
        self.shape
            .iter()
            .zip(&self.spacing)
            .map(|(&n, &h)| (n as f64 - 1.0) * h)
            .collect()
    }

    pub fn same_layout(&self, other: &GridSpec) -> bool {
        self == other
    }

    /// Offset (in cells) of `sub`'s origin inside `self`, requiring equal
    /// spacing and node alignment.
    pub fn embed_offset(&self, sub: &GridSpec) -> Result<Vec<usize>> {
        if sub.dim != self.dim {
            return Err(VecpotError::EmbeddingError(format!(
                "dimension mismatch {} vs {}",
                sub.dim, self.dim
            )));
        }
        let mut offset = Vec::with_capacity(self.dim);
        for d in 0..self.dim {
            let h = self.spacing[d];
            if ((sub.spacing[d] - h) / h).abs() > 1e-12 {
                return Err(VecpotError::EmbeddingError(format!(
                    "spacing mismatch on axis {d}"
                )));
            }
            let raw = (sub.origin[d] - self.origin[d]) / h;
            let k = raw.round();
            if (raw - k).abs() > 1e-9 || k < 0.0 {
                return Err(VecpotError::EmbeddingError(format!(
                    "origin not on the ambient lattice (axis {d}, offset {raw})"
                )));
            }
            let k = k as usize;
            if k + sub.shape[d] > self.shape[d] {
                return Err(VecpotError::EmbeddingError(format!(
                    "subgrid exceeds ambient extent on axis {d}"
                )));
            }
            offset.push(k);
        }
        Ok(offset)
    }
}

/// Scalar samples on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: GridSpec,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(VecpotError::InvalidGrid(format!(
                "value count {} does not match grid point count {}",
                values.len(),
                grid.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(VecpotError::NonFiniteSample {
                index: grid.unravel(pos),
                value: values[pos],
            });
        }
        Ok(ScalarField { grid, values })
    }

    pub fn zeros(grid: GridSpec) -> Self {
        let n = grid.len();
        ScalarField {
            grid,
            values: vec![0.0; n],
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn scale(&self, c: f64) -> Self {
        ScalarField {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| c * v).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if !self.grid.same_layout(&other.grid) {
            return Err(VecpotError::GridMismatch("scalar add".into()));
        }
        Ok(ScalarField {
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        Ok(self.add(&other.scale(-1.0))?)
    }
}

/// Pointwise sampling of a function of position.
///
/// Rejects non-finite samples with the offending multi-index.
pub fn sample<F: Fn(&[f64]) -> f64>(grid: &GridSpec, f: F) -> Result<ScalarField> {
    let mut values = vec![0.0; grid.len()];
    let mut idx = vec![0usize; grid.dim];
    let mut pos = vec![0.0; grid.dim];
    for (flat, out) in values.iter_mut().enumerate() {
        let strides = flat_to_idx(grid, flat, &mut idx);
        let _ = strides;
        for d in 0..grid.dim {
            pos[d] = grid.origin[d] + idx[d] as f64 * grid.spacing[d];
        }
        let v = f(&pos);
        if !v.is_finite() {
            return Err(VecpotError::NonFiniteSample {
                index: idx.clone(),
                value: v,
            });
        }
        *out = v;
    }
    Ok(ScalarField {
        grid: grid.clone(),
        values,
    })
}

fn flat_to_idx(grid: &GridSpec, flat: usize, idx: &mut [usize]) {
    let mut rem = flat;
    for d in (0..grid.dim).rev() {
        idx[d] = rem % grid.shape[d];
        rem /= grid.shape[d];
    }
}

/// Vector field: `N` scalar components sharing one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    components: Vec<ScalarField>,
}

impl VectorField {
    pub fn new(components: Vec<ScalarField>) -> Result<Self> {
        if components.is_empty() {
            return Err(VecpotError::InvalidGrid("vector field needs components".into()));
        }
        let grid = components[0].grid().clone();
        if components.len() != grid.dim {
            return Err(VecpotError::InvalidGrid(format!(
                "vector field needs exactly {} components, got {}",
                grid.dim,
                components.len()
            )));
        }
        for c in &components {
            if !c.grid().same_layout(&grid) {
                return Err(VecpotError::GridMismatch(
                    "vector components on different grids".into(),
                ));
            }
        }
        Ok(VectorField { components })
    }

    pub fn zeros(grid: GridSpec) -> Self {
        let components = (0..grid.dim)
            .map(|_| ScalarField::zeros(grid.clone()))
            .collect();
        VectorField { components }
    }

    pub fn sample<F: Fn(&[f64], usize) -> f64>(grid: &GridSpec, f: F) -> Result<Self> {
        let components = (0..grid.dim)
            .map(|k| sample(grid, |x| f(x, k)))
            .collect::<Result<Vec<_>>>()?;
        VectorField::new(components)
    }

    pub fn grid(&self) -> &GridSpec {
        self.components[0].grid()
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn comp(&self, k: usize) -> &ScalarField {
        &self.components[k]
    }

    pub fn components(&self) -> &[ScalarField] {
        &self.components
    }

    pub fn into_components(self) -> Vec<ScalarField> {
        self.components
    }

    pub fn max_abs(&self) -> f64 {
        self.components.iter().fold(0.0, |m, c| m.max(c.max_abs()))
    }

    pub fn scale(&self, c: f64) -> Self {
        VectorField {
            components: self.components.iter().map(|f| f.scale(c)).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        let components = self
            .components
            .iter()
            .zip(&other.components)
            .map(|(a, b)| a.add(b))
            .collect::<Result<Vec<_>>>()?;
        Ok(VectorField { components })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        Ok(self.add(&other.scale(-1.0))?)
    }
}

/// Number of strictly-upper pairs for dimension `n`.
pub fn upper_pair_count(n: usize) -> usize {
    n * (n - 1) / 2
}

/// Index of the pair `(i, j)`, `i < j`, in lexicographic pair order.
pub fn pair_index(i: usize, j: usize, n: usize) -> usize {
    debug_assert!(i < j && j < n);
    i * n - i * (i + 1) / 2 + (j - i - 1)
}

/// All pairs `(i, j)` with `i < j < n` in storage order.
pub fn pair_list(n: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(upper_pair_count(n));
    for i in 0..n {
        for j in (i + 1)..n {
            out.push((i, j));
        }
    }
    out
}

/// Antisymmetric-matrix-valued field, stored as the strictly-upper
/// components `A_ij`, `i < j`. The reconstruction `A_ji = -A_ij`, `A_ii = 0`
/// is skew-symmetric by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct AntisymField {
    dim: usize,
    upper: Vec<ScalarField>,
}

impl AntisymField {
    pub fn new(dim: usize, upper: Vec<ScalarField>) -> Result<Self> {
        if upper.len() != upper_pair_count(dim) {
            return Err(VecpotError::InvalidGrid(format!(
                "antisym field in dimension {} needs {} components, got {}",
                dim,
                upper_pair_count(dim),
                upper.len()
            )));
        }
        let grid = upper[0].grid().clone();
        if grid.dim != dim {
            return Err(VecpotError::GridMismatch(
                "antisym dimension does not match grid dimension".into(),
            ));
        }
        for c in &upper {
            if !c.grid().same_layout(&grid) {
                return Err(VecpotError::GridMismatch(
                    "antisym components on different grids".into(),
                ));
            }
        }
        Ok(AntisymField { dim, upper })
    }

    pub fn zeros(grid: GridSpec) -> Self {
        let dim = grid.dim;
        let upper = (0..upper_pair_count(dim))
            .map(|_| ScalarField::zeros(grid.clone()))
            .collect();
        AntisymField { dim, upper }
    }

    pub fn sample<F: Fn(&[f64], usize, usize) -> f64>(grid: &GridSpec, f: F) -> Result<Self> {
        let upper = pair_list(grid.dim)
            .into_iter()
            .map(|(i, j)| sample(grid, |x| f(x, i, j)))
            .collect::<Result<Vec<_>>>()?;
        AntisymField::new(grid.dim, upper)
    }

    pub fn grid(&self) -> &GridSpec {
        self.upper[0].grid()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Strictly-upper component for the pair `(i, j)`, `i < j`.
    pub fn upper(&self, i: usize, j: usize) -> &ScalarField {
        &self.upper[pair_index(i, j, self.dim)]
    }

    pub fn upper_components(&self) -> &[ScalarField] {
        &self.upper
    }

    pub fn into_upper(self) -> Vec<ScalarField> {
        self.upper
    }

    /// Signed entry `A_ij` at a flat node index (skew reconstruction).
    pub fn entry(&self, i: usize, j: usize, flat: usize) -> f64 {
        use std::cmp::Ordering;
        match i.cmp(&j) {
            Ordering::Less => self.upper[pair_index(i, j, self.dim)].values()[flat],
            Ordering::Greater => -self.upper[pair_index(j, i, self.dim)].values()[flat],
            Ordering::Equal => 0.0,
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.upper.iter().fold(0.0, |m, c| m.max(c.max_abs()))
    }

    pub fn scale(&self, c: f64) -> Self {
        AntisymField {
            dim: self.dim,
            upper: self.upper.iter().map(|f| f.scale(c)).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        let upper = self
            .upper
            .iter()
            .zip(&other.upper)
            .map(|(a, b)| a.sub(b))
            .collect::<Result<Vec<_>>>()?;
        AntisymField::new(self.dim, upper)
    }
}

/// Common access for the three field kinds. `PAIR_FACTOR` is the weight on
/// the squared component sum in the pointwise magnitude: 1 for scalars and
/// vectors, 4 for antisymmetric fields (`|A|^2 = 2 sum_ij A_ij^2 =
/// 4 sum_{i<j} A_ij^2`, matching the factor-2 tensor inner product).
pub trait GridField {
    const PAIR_FACTOR: f64;
    const KIND: &'static str;
    fn grid(&self) -> &GridSpec;
    fn comps(&self) -> &[ScalarField];
    fn from_comps(grid: &GridSpec, comps: Vec<ScalarField>) -> Result<Self>
    where
        Self: Sized;
}

impl GridField for ScalarField {
    const PAIR_FACTOR: f64 = 1.0;
    const KIND: &'static str = "scalar";
    fn grid(&self) -> &GridSpec {
        self.grid()
    }
    fn comps(&self) -> &[ScalarField] {
        std::slice::from_ref(self)
    }
    fn from_comps(_grid: &GridSpec, mut comps: Vec<ScalarField>) -> Result<Self> {
        if comps.len() != 1 {
            return Err(VecpotError::InvalidGrid("scalar needs one component".into()));
        }
        Ok(comps.remove(0))
    }
}

impl GridField for VectorField {
    const PAIR_FACTOR: f64 = 1.0;
    const KIND: &'static str = "vector";
    fn grid(&self) -> &GridSpec {
        self.grid()
    }
    fn comps(&self) -> &[ScalarField] {
        self.components()
    }
    fn from_comps(_grid: &GridSpec, comps: Vec<ScalarField>) -> Result<Self> {
        VectorField::new(comps)
    }
}

impl GridField for AntisymField {
    const PAIR_FACTOR: f64 = 4.0;
    const KIND: &'static str = "antisym";
    fn grid(&self) -> &GridSpec {
        self.grid()
    }
    fn comps(&self) -> &[ScalarField] {
        self.upper_components()
    }
    fn from_comps(grid: &GridSpec, comps: Vec<ScalarField>) -> Result<Self> {
        AntisymField::new(grid.dim, comps)
    }
}

/// A field of any kind, as read back from a field file.
#[derive(Debug, Clone)]
pub enum AnyField {
    Scalar(ScalarField),
    Vector(VectorField),
    Antisym(AntisymField),
}

impl AnyField {
    pub fn grid(&self) -> &GridSpec {
        match self {
            AnyField::Scalar(f) => f.grid(),
            AnyField::Vector(f) => f.grid(),
            AnyField::Antisym(f) => f.grid(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            AnyField::Scalar(_) => "scalar",
            AnyField::Vector(_) => "vector",
            AnyField::Antisym(_) => "antisym",
        }
    }
}

/// Norm order selector: `L^p` integrability exponent and derivative order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormSpec {
    pub p: f64,
    pub m: usize,
}

impl NormSpec {
    pub fn new(p: f64, m: usize) -> Result<Self> {
        if !(p > 1.0) || !p.is_finite() {
            return Err(VecpotError::InvalidNormSpec(format!(
                "p must lie in (1, inf), got {p}"
            )));
        }
        Ok(NormSpec { p, m })
    }

    pub fn l2() -> Self {
        NormSpec { p: 2.0, m: 0 }
    }
}

/// All derivative multi-indices with `|alpha| == order`.
pub(crate) fn multi_indices(dim: usize, order: usize) -> Vec<Vec<usize>> {
    fn rec(dim: usize, order: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == dim - 1 {
            prefix.push(order);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for k in 0..=order {
            prefix.push(k);
            rec(dim, order - k, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(dim, order, &mut Vec::new(), &mut out);
    out
}

/// Discrete Sobolev norm: full-cell-weight Riemann sum of
/// `sum_{|alpha| <= m} |D^alpha f|^p`, derivatives by central differences
/// with second-order one-sided edge stencils.
pub fn discrete_norm<F: GridField>(field: &F, spec: &NormSpec) -> f64 {
    sobolev_sum(field, spec, false).powf(1.0 / spec.p)
}

/// Seminorm variant: only the terms with `|alpha| == m`.
pub fn discrete_seminorm<F: GridField>(field: &F, spec: &NormSpec) -> f64 {
    sobolev_sum(field, spec, true).powf(1.0 / spec.p)
}

fn sobolev_sum<F: GridField>(field: &F, spec: &NormSpec, top_only: bool) -> f64 {
    use crate::diff_ops::{axis_diff, StencilMode};
    let grid = field.grid();
    let vol = grid.cell_volume();
    let half_p = spec.p / 2.0;
    let start = if top_only { spec.m } else { 0 };
    let mut total = 0.0;
    for order in start..=spec.m {
        for alpha in multi_indices(grid.dim, order) {
            // D^alpha of every component, then pointwise magnitude.
            let derived: Vec<Vec<f64>> = field
                .comps()
                .iter()
                .map(|c| {
                    let mut v = c.values().to_vec();
                    for (axis, &times) in alpha.iter().enumerate() {
                        for _ in 0..times {
                            v = axis_diff(&v, grid, axis, StencilMode::OneSidedEdges);
                        }
                    }
                    v
                })
                .collect();
            let mut acc = 0.0;
            for node in 0..grid.len() {
                let mag2: f64 = derived.iter().map(|c| c[node] * c[node]).sum::<f64>()
                    * F::PAIR_FACTOR;
                acc += mag2.powf(half_p);
            }
            total += acc * vol;
        }
    }
    total
}

/// Extension of a field by a symmetric collar of zero cells on every side.
pub fn zero_collar<F: GridField>(field: &F, cells: usize) -> Result<F> {
    let grid = field.grid();
    let ext = GridSpec::new_param(
        grid.shape.iter().map(|&n| n + 2 * cells).collect(),
        grid.spacing.clone(),
        (0..grid.dim)
            .map(|d| grid.origin[d] - cells as f64 * grid.spacing[d])
            .collect(),
    )?;
    let comps = field
        .comps()
        .iter()
        .map(|c| {
            let mut vals = vec![0.0; ext.len()];
            for flat in 0..grid.len() {
                let idx = grid.unravel(flat);
                let eidx: Vec<usize> = idx.iter().map(|&i| i + cells).collect();
                vals[ext.ravel(&eidx)] = c.values()[flat];
            }
            ScalarField::new(ext.clone(), vals)
        })
        .collect::<Result<Vec<_>>>()?;
    F::from_comps(&ext, comps)
}

/// Restriction of a field to an aligned subgrid.
pub fn restrict<F: GridField>(field: &F, sub: &GridSpec) -> Result<F> {
    let grid = field.grid();
    let offset = grid.embed_offset(sub)?;
    let comps = field
        .comps()
        .iter()
        .map(|c| {
            let mut vals = vec![0.0; sub.len()];
            let mut idx = vec![0usize; sub.dim];
            for (flat, out) in vals.iter_mut().enumerate() {
                flat_to_idx(sub, flat, &mut idx);
                let amb: Vec<usize> = idx.iter().zip(&offset).map(|(i, o)| i + o).collect();
                *out = c.values()[grid.ravel(&amb)];
            }
            ScalarField::new(sub.clone(), vals)
        })
        .collect::<Result<Vec<_>>>()?;
    F::from_comps(sub, comps)
}

// ---------------------------------------------------------------------------
// Field file format: one UTF-8 JSON header line, newline, then the raw
// little-endian binary64 payload in storage order.
// ---------------------------------------------------------------------------

const MAGIC: &str = "NDFIELD1";
const ENCODING: &str = "f64le";

#[derive(Debug, Serialize, Deserialize)]
struct FieldHeader {
    magic: String,
    dim: usize,
    shape: Vec<usize>,
    spacing: Vec<f64>,
    origin: Vec<f64>,
    kind: String,
    encoding: String,
}

fn component_count(kind: &str, dim: usize) -> Result<usize> {
    match kind {
        "scalar" => Ok(1),
        "vector" => Ok(dim),
        "antisym" => Ok(upper_pair_count(dim)),
        other => Err(VecpotError::UnsupportedKind(other.to_string())),
    }
}

/// Writes a field to `path`; the round trip through [`read_field`] is
/// bitwise exact.
pub fn write_field<F: GridField>(field: &F, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    write_field_to(field, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn write_field_to<F: GridField, W: Write>(field: &F, w: &mut W) -> Result<()> {
    let grid = field.grid();
    let header = FieldHeader {
        magic: MAGIC.to_string(),
        dim: grid.dim,
        shape: grid.shape.clone(),
        spacing: grid.spacing.clone(),
        origin: grid.origin.clone(),
        kind: F::KIND.to_string(),
        encoding: ENCODING.to_string(),
    };
    let line = serde_json::to_string(&header)?;
    w.write_all(line.as_bytes())?;
    w.write_all(b"\n")?;
    for comp in field.comps() {
        for v in comp.values() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn write_any_field(field: &AnyField, path: &Path) -> Result<()> {
    match field {
        AnyField::Scalar(f) => write_field(f, path),
        AnyField::Vector(f) => write_field(f, path),
        AnyField::Antisym(f) => write_field(f, path),
    }
}

/// Reads a field file, distinguishing malformed headers, payload length
/// mismatches, and unsupported kinds.
pub fn read_field(path: &Path) -> Result<AnyField> {
    let file = std::fs::File::open(path)?;
    let mut r = std::io::BufReader::new(file);
    read_field_from(&mut r)
}

pub fn read_field_from<R: BufRead>(r: &mut R) -> Result<AnyField> {
    let mut line = Vec::new();
    r.read_until(b'\n', &mut line)?;
    if line.last() != Some(&b'\n') {
        return Err(VecpotError::MalformedHeader(
            "missing newline after header".into(),
        ));
    }
    line.pop();
    let header: FieldHeader = serde_json::from_slice(&line)
        .map_err(|e| VecpotError::MalformedHeader(e.to_string()))?;
    if header.magic != MAGIC {
        return Err(VecpotError::MalformedHeader(format!(
            "bad magic {:?}",
            header.magic
        )));
    }
    if header.encoding != ENCODING {
        return Err(VecpotError::MalformedHeader(format!(
            "unsupported encoding {:?}",
            header.encoding
        )));
    }
    let ncomp = component_count(&header.kind, header.dim)?;
    let grid = GridSpec::new_param(header.shape, header.spacing, header.origin)
        .map_err(|e| VecpotError::MalformedHeader(e.to_string()))?;
    if grid.dim != header.dim {
        return Err(VecpotError::MalformedHeader(format!(
            "dim field {} does not match shape length {}",
            header.dim, grid.dim
        )));
    }
    let points = grid.len();
    let expected = ncomp * points * 8;
    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    if payload.len() != expected {
        return Err(VecpotError::PayloadMismatch(format!(
            "expected {} bytes ({} components x {} points), got {}",
            expected,
            ncomp,
            points,
            payload.len()
        )));
    }
    let mut comps = Vec::with_capacity(ncomp);
    for c in 0..ncomp {
        let mut vals = Vec::with_capacity(points);
        for i in 0..points {
            let off = (c * points + i) * 8;
            let bytes: [u8; 8] = payload[off..off + 8].try_into().unwrap();
            vals.push(f64::from_le_bytes(bytes));
        }
        comps.push(ScalarField::new(grid.clone(), vals)?);
    }
    match header.kind.as_str() {
        "scalar" => Ok(AnyField::Scalar(comps.remove(0))),
        "vector" => Ok(AnyField::Vector(VectorField::new(comps)?)),
        "antisym" => Ok(AnyField::Antisym(AntisymField::new(grid.dim, comps)?)),
        other => Err(VecpotError::UnsupportedKind(other.to_string())),
    }
}
