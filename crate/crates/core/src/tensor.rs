//! Dense tensors with named axes.
//!
//! Every axis is tagged with the variable it ranges over, so operands built in
//! different axis orders are aligned by variable rather than by position. The
//! four operators used by the inference engine live here: the term product
//! (elementwise), the outer product, the inner product over shared axes, and
//! its max-combining variant which also records argmax witnesses.

use std::fmt;

use thiserror::Error;

/// Opaque identifier of the variable an axis ranges over.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId(pub usize);

impl fmt::Display for VarId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Axis {
    pub var: VarId,
    pub size: usize,
}

impl Axis {
    pub fn new(var: VarId, size: usize) -> Result<Self, TensorError> {
        if size == 0 {
            return Err(TensorError::EmptyAxis(var));
        }
        Ok(Axis { var, size })
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("axis {0} has size 0")]
    EmptyAxis(VarId),
    #[error("axis {0} appears more than once")]
    DuplicateAxis(VarId),
    #[error("data length {actual} does not match axis sizes (expected {expected})")]
    DataLength { expected: usize, actual: usize },
    #[error("element {index} is {value}; elements must be finite and nonnegative")]
    InvalidElement { index: usize, value: f64 },
    #[error("operands do not range over the same axes")]
    AxisMismatch,
    #[error("axis {0} appears in both operands of an outer product")]
    SharedAxis(VarId),
    #[error("axis {var} has size {left} in one operand and {right} in the other")]
    SizeMismatch {
        var: VarId,
        left: usize,
        right: usize,
    },
    #[error("tensor has no axis {0}")]
    MissingAxis(VarId),
    #[error("index {index} out of range for axis {var} of size {size}")]
    IndexOutOfRange {
        var: VarId,
        index: usize,
        size: usize,
    },
    #[error("tensor has zero total mass")]
    ZeroMass,
}

/// How an inner product folds the products over its contracted indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CombineOp {
    Sum,
    Max,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Normalization {
    SumToOne,
    MaxToOne,
}

/// Row-major dense tensor (leftmost axis varies slowest).
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    axes: Vec<Axis>,
    data: Vec<f64>,
}

fn element_count(axes: &[Axis]) -> usize {
    axes.iter().map(|a| a.size).product()
}

fn strides_of(axes: &[Axis]) -> Vec<usize> {
    let mut strides = vec![1; axes.len()];
    for k in (0..axes.len().saturating_sub(1)).rev() {
        strides[k] = strides[k + 1] * axes[k + 1].size;
    }
    strides
}

/// Advances a row-major odometer; returns false once it wraps around.
fn advance(index: &mut [usize], sizes: &[usize]) -> bool {
    for k in (0..index.len()).rev() {
        index[k] += 1;
        if index[k] < sizes[k] {
            return true;
        }
        index[k] = 0;
    }
    false
}

impl Tensor {
    pub fn new(axes: Vec<Axis>, data: Vec<f64>) -> Result<Self, TensorError> {
        let t = Self::with_shape(axes, data)?;
        if let Some((index, &value)) = t
            .data
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < 0.0)
        {
            return Err(TensorError::InvalidElement { index, value });
        }
        Ok(t)
    }

    /// Checks shape only. Element values are left unchecked so that model
    /// validation can report bad entries instead of failing on load.
    pub(crate) fn with_shape(axes: Vec<Axis>, data: Vec<f64>) -> Result<Self, TensorError> {
        for (k, a) in axes.iter().enumerate() {
            if a.size == 0 {
                return Err(TensorError::EmptyAxis(a.var));
            }
            if axes[..k].iter().any(|b| b.var == a.var) {
                return Err(TensorError::DuplicateAxis(a.var));
            }
        }
        let expected = element_count(&axes);
        if data.len() != expected {
            return Err(TensorError::DataLength {
                expected,
                actual: data.len(),
            });
        }
        Ok(Tensor { axes, data })
    }

    pub fn scalar(value: f64) -> Self {
        Tensor {
            axes: Vec::new(),
            data: vec![value],
        }
    }

    pub fn vector(axis: Axis, data: Vec<f64>) -> Result<Self, TensorError> {
        Self::new(vec![axis], data)
    }

    pub fn filled(axes: Vec<Axis>, value: f64) -> Result<Self, TensorError> {
        let n = element_count(&axes);
        Self::new(axes, vec![value; n])
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn order(&self) -> usize {
        self.axes.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn vars(&self) -> impl Iterator<Item = VarId> + '_ {
        self.axes.iter().map(|a| a.var)
    }

    pub fn axis(&self, var: VarId) -> Option<Axis> {
        self.axes.iter().copied().find(|a| a.var == var)
    }

    pub fn position(&self, var: VarId) -> Option<usize> {
        self.axes.iter().position(|a| a.var == var)
    }

    pub fn strides(&self) -> Vec<usize> {
        strides_of(&self.axes)
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.size).collect()
    }

    pub fn flat_index(&self, index: &[usize]) -> Result<usize, TensorError> {
        if index.len() != self.axes.len() {
            return Err(TensorError::AxisMismatch);
        }
        let mut flat = 0;
        for (a, &i) in self.axes.iter().zip(index) {
            if i >= a.size {
                return Err(TensorError::IndexOutOfRange {
                    var: a.var,
                    index: i,
                    size: a.size,
                });
            }
            flat = flat * a.size + i;
        }
        Ok(flat)
    }

    pub fn unravel(&self, mut flat: usize) -> Vec<usize> {
        let mut index = vec![0; self.axes.len()];
        for (k, a) in self.axes.iter().enumerate().rev() {
            index[k] = flat % a.size;
            flat /= a.size;
        }
        index
    }

    pub fn get(&self, index: &[usize]) -> Result<f64, TensorError> {
        Ok(self.data[self.flat_index(index)?])
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Returns a copy whose axes follow `order`, which must name exactly
    /// this tensor's variables.
    pub fn aligned_to(&self, order: &[VarId]) -> Result<Tensor, TensorError> {
        if order.len() != self.axes.len() {
            return Err(TensorError::AxisMismatch);
        }
        if order.iter().zip(&self.axes).all(|(v, a)| *v == a.var) {
            return Ok(self.clone());
        }
        let src_strides = self.strides();
        let mut axes = Vec::with_capacity(order.len());
        let mut perm_strides = Vec::with_capacity(order.len());
        for (k, v) in order.iter().enumerate() {
            if order[..k].contains(v) {
                return Err(TensorError::DuplicateAxis(*v));
            }
            let p = self.position(*v).ok_or(TensorError::AxisMismatch)?;
            axes.push(self.axes[p]);
            perm_strides.push(src_strides[p]);
        }
        let sizes: Vec<usize> = axes.iter().map(|a| a.size).collect();
        let mut data = Vec::with_capacity(self.data.len());
        let mut index = vec![0; sizes.len()];
        loop {
            let src: usize = index.iter().zip(&perm_strides).map(|(i, s)| i * s).sum();
            data.push(self.data[src]);
            if !advance(&mut index, &sizes) {
                break;
            }
        }
        Ok(Tensor { axes, data })
    }

    /// Fixes `var` at `index` and drops that axis.
    pub fn slice(&self, var: VarId, index: usize) -> Result<Tensor, TensorError> {
        let p = self.position(var).ok_or(TensorError::MissingAxis(var))?;
        let size = self.axes[p].size;
        if index >= size {
            return Err(TensorError::IndexOutOfRange { var, index, size });
        }
        let stride = self.strides()[p];
        let outer = self.data.len() / (stride * size);
        let mut data = Vec::with_capacity(outer * stride);
        for o in 0..outer {
            let base = o * stride * size + index * stride;
            data.extend_from_slice(&self.data[base..base + stride]);
        }
        let mut axes = self.axes.clone();
        axes.remove(p);
        Ok(Tensor { axes, data })
    }

    pub(crate) fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            axes: self.axes.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// All-ones vector over `axis`.
pub fn unit_vector(axis: Axis) -> Tensor {
    Tensor {
        axes: vec![axis],
        data: vec![1.0; axis.size],
    }
}

/// Elementwise product of two tensors over the same variables. `b` is
/// aligned to `a`'s axis order first.
pub fn term_product(a: &Tensor, b: &Tensor) -> Result<Tensor, TensorError> {
    if a.order() != b.order() {
        return Err(TensorError::AxisMismatch);
    }
    for ax in a.axes() {
        let other = b.axis(ax.var).ok_or(TensorError::AxisMismatch)?;
        if other.size != ax.size {
            return Err(TensorError::SizeMismatch {
                var: ax.var,
                left: ax.size,
                right: other.size,
            });
        }
    }
    let order: Vec<VarId> = a.vars().collect();
    let b = b.aligned_to(&order)?;
    Ok(Tensor {
        axes: a.axes.clone(),
        data: a.data.iter().zip(&b.data).map(|(x, y)| x * y).collect(),
    })
}

/// Outer product; the result carries `a`'s axes followed by `b`'s.
pub fn outer_product(a: &Tensor, b: &Tensor) -> Result<Tensor, TensorError> {
    if let Some(v) = a.vars().find(|v| b.position(*v).is_some()) {
        return Err(TensorError::SharedAxis(v));
    }
    let mut axes = a.axes.clone();
    axes.extend_from_slice(&b.axes);
    let mut data = Vec::with_capacity(a.len() * b.len());
    for x in &a.data {
        data.extend(b.data.iter().map(|y| x * y));
    }
    Ok(Tensor { axes, data })
}

/// For every element of a max contraction, the contracted-axis index that
/// attained it.
#[derive(Clone, Debug, PartialEq)]
pub struct WitnessTable {
    contracted: Vec<Axis>,
    /// Row-major joint index over `contracted`, one per result element.
    entries: Vec<usize>,
}

impl WitnessTable {
    pub fn contracted(&self) -> &[Axis] {
        &self.contracted
    }

    pub fn joint_index(&self, result_flat: usize) -> usize {
        self.entries[result_flat]
    }

    /// Witness for one result element as a multi-index over `contracted()`.
    pub fn witness(&self, result_flat: usize) -> Vec<usize> {
        let mut joint = self.entries[result_flat];
        let mut index = vec![0; self.contracted.len()];
        for (k, a) in self.contracted.iter().enumerate().rev() {
            index[k] = joint % a.size;
            joint /= a.size;
        }
        index
    }

    /// Witness for one result element as (variable, state) pairs.
    pub fn assignment(&self, result_flat: usize) -> Vec<(VarId, usize)> {
        self.contracted
            .iter()
            .map(|a| a.var)
            .zip(self.witness(result_flat))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Contraction {
    pub tensor: Tensor,
    /// Present only for [`CombineOp::Max`].
    pub witnesses: Option<WitnessTable>,
}

/// Contracts the axes shared by `a` and `b`, combining products with `op`.
///
/// The result carries `a`'s free axes followed by `b`'s free axes. Shared
/// axes are enumerated in `a`'s order; under `Max`, ties go to the lowest
/// row-major joint index over those axes. With no shared axes this is the
/// outer product.
pub fn inner_product(a: &Tensor, b: &Tensor, op: CombineOp) -> Result<Contraction, TensorError> {
    let a_strides = a.strides();
    let b_strides = b.strides();

    let mut contracted = Vec::new();
    let mut c_strides = Vec::new();
    let mut a_free = Vec::new();
    let mut a_free_strides = Vec::new();
    for (k, ax) in a.axes().iter().enumerate() {
        match b.position(ax.var) {
            Some(p) => {
                let other = b.axes()[p];
                if other.size != ax.size {
                    return Err(TensorError::SizeMismatch {
                        var: ax.var,
                        left: ax.size,
                        right: other.size,
                    });
                }
                contracted.push(*ax);
                c_strides.push((a_strides[k], b_strides[p]));
            }
            None => {
                a_free.push(*ax);
                a_free_strides.push(a_strides[k]);
            }
        }
    }
    let mut b_free = Vec::new();
    let mut b_free_strides = Vec::new();
    for (k, ax) in b.axes().iter().enumerate() {
        if a.position(ax.var).is_none() {
            b_free.push(*ax);
            b_free_strides.push(b_strides[k]);
        }
    }

    // Offsets of every contracted joint index, in row-major order.
    let c_sizes: Vec<usize> = contracted.iter().map(|a| a.size).collect();
    let mut offsets = Vec::with_capacity(element_count(&contracted));
    let mut ci = vec![0; c_sizes.len()];
    loop {
        let (oa, ob) = ci
            .iter()
            .zip(&c_strides)
            .fold((0, 0), |(x, y), (i, (sa, sb))| (x + i * sa, y + i * sb));
        offsets.push((oa, ob));
        if !advance(&mut ci, &c_sizes) {
            break;
        }
    }

    let mut out_axes = a_free;
    out_axes.extend_from_slice(&b_free);
    // Each output axis advances exactly one operand.
    let out_strides: Vec<(usize, usize)> = a_free_strides
        .iter()
        .map(|&s| (s, 0))
        .chain(b_free_strides.iter().map(|&s| (0, s)))
        .collect();
    let out_sizes: Vec<usize> = out_axes.iter().map(|a| a.size).collect();
    let n_out = element_count(&out_axes);

    let mut data = Vec::with_capacity(n_out);
    let mut entries = Vec::with_capacity(if op == CombineOp::Max { n_out } else { 0 });
    let mut oi = vec![0; out_sizes.len()];
    loop {
        let (base_a, base_b) = oi
            .iter()
            .zip(&out_strides)
            .fold((0, 0), |(x, y), (i, (sa, sb))| (x + i * sa, y + i * sb));
        match op {
            CombineOp::Sum => {
                let total: f64 = offsets
                    .iter()
                    .map(|(oa, ob)| a.data[base_a + oa] * b.data[base_b + ob])
                    .sum();
                data.push(total);
            }
            CombineOp::Max => {
                let mut best = f64::NEG_INFINITY;
                let mut arg = 0;
                for (j, (oa, ob)) in offsets.iter().enumerate() {
                    let v = a.data[base_a + oa] * b.data[base_b + ob];
                    if v > best {
                        best = v;
                        arg = j;
                    }
                }
                data.push(best);
                entries.push(arg);
            }
        }
        if !advance(&mut oi, &out_sizes) {
            break;
        }
    }

    let witnesses = match op {
        CombineOp::Sum => None,
        CombineOp::Max => Some(WitnessTable {
            contracted,
            entries,
        }),
    };
    Ok(Contraction {
        tensor: Tensor {
            axes: out_axes,
            data,
        },
        witnesses,
    })
}

/// Rescales so the elements sum to one or the largest element is one.
pub fn normalize(a: &Tensor, mode: Normalization) -> Result<Tensor, TensorError> {
    let z = match mode {
        Normalization::SumToOne => a.sum(),
        Normalization::MaxToOne => a.max(),
    };
    if z <= 0.0 || !z.is_finite() {
        return Err(TensorError::ZeroMass);
    }
    Ok(a.map(|v| v / z))
}

/// Lowest row-major multi-index attaining the maximum, with that maximum.
pub fn argmax(a: &Tensor) -> (Vec<usize>, f64) {
    let mut best = 0;
    for (k, v) in a.data.iter().enumerate() {
        if *v > a.data[best] {
            best = k;
        }
    }
    (a.unravel(best), a.data[best])
}
