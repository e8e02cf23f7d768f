//! Named parameter groups and sparse gradients over them.
//!
//! A [`ParamSet`] is a list of dense row-major matrices, one per named group
//! (`user_emb`, `dense_0_W`, ...). Groups are addressed by a [`GroupId`]
//! resolved once when a model is built; the names live in a shared [`Layout`]
//! so cloning a parameter set for a snapshot copies only the values.
//!
//! A [`SparseGrad`] stores gradient slices keyed by `(group, row)` or
//! `(group, WHOLE)`. Embedding gradients touch single rows; dense layers are
//! stored whole. Iteration order is the key order, which keeps every reduction
//! over a gradient deterministic.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GroupId(pub usize);

/// Which part of a group a gradient slice covers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Row {
    Index(usize),
    Whole,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamKey {
    pub group: GroupId,
    pub row: Row,
}

impl ParamKey {
    pub fn row(group: GroupId, row: usize) -> Self {
        Self {
            group,
            row: Row::Index(row),
        }
    }

    pub fn whole(group: GroupId) -> Self {
        Self {
            group,
            row: Row::Whole,
        }
    }
}

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }
}

/// Group names and shapes, shared by every parameter set of one model.
#[derive(Debug, PartialEq, Eq)]
pub struct Layout {
    names: Vec<String>,
    shapes: Vec<(usize, usize)>,
}

impl Layout {
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, id: GroupId) -> &str {
        &self.names[id.0]
    }

    pub fn shape(&self, id: GroupId) -> (usize, usize) {
        self.shapes[id.0]
    }

    pub fn find(&self, name: &str) -> Option<GroupId> {
        self.names.iter().position(|n| n == name).map(GroupId)
    }

    pub fn groups(&self) -> impl Iterator<Item = (GroupId, &str, (usize, usize))> + '_ {
        self.names
            .iter()
            .zip(&self.shapes)
            .enumerate()
            .map(|(i, (n, s))| (GroupId(i), n.as_str(), *s))
    }
}

/// Collects group declarations before a [`ParamSet`] is allocated.
#[derive(Debug, Default)]
pub struct LayoutBuilder {
    names: Vec<String>,
    shapes: Vec<(usize, usize)>,
}

impl LayoutBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Declares a group. Panics on a duplicate name, which is a model-construction bug.
    pub fn group(&mut self, name: impl Into<String>, rows: usize, cols: usize) -> GroupId {
        let name = name.into();
        assert!(
            !self.names.contains(&name),
            "duplicate parameter group {name}"
        );
        self.names.push(name);
        self.shapes.push((rows, cols));
        GroupId(self.names.len() - 1)
    }

    pub fn build(self) -> Arc<Layout> {
        Arc::new(Layout {
            names: self.names,
            shapes: self.shapes,
        })
    }
}

#[derive(Clone, PartialEq)]
pub struct ParamSet {
    layout: Arc<Layout>,
    values: Vec<Matrix>,
}

impl fmt::Debug for ParamSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut m = f.debug_map();
        for (id, name, _) in self.layout.groups() {
            m.entry(&name, &self.values[id.0].as_slice());
        }
        m.finish()
    }
}

impl ParamSet {
    pub fn zeros(layout: Arc<Layout>) -> Self {
        let values = layout
            .shapes
            .iter()
            .map(|&(r, c)| Matrix::zeros(r, c))
            .collect();
        Self { layout, values }
    }

    pub fn layout(&self) -> &Arc<Layout> {
        &self.layout
    }

    pub fn group(&self, name: &str) -> Option<GroupId> {
        self.layout.find(name)
    }

    pub fn name(&self, id: GroupId) -> &str {
        self.layout.name(id)
    }

    #[inline]
    pub fn get(&self, id: GroupId) -> &Matrix {
        &self.values[id.0]
    }

    #[inline]
    pub fn get_mut(&mut self, id: GroupId) -> &mut Matrix {
        &mut self.values[id.0]
    }

    /// Looks a group up by name. Panics if the group does not exist.
    pub fn by_name(&self, name: &str) -> &Matrix {
        let id = self
            .group(name)
            .unwrap_or_else(|| panic!("no parameter group named {name}"));
        self.get(id)
    }

    pub fn by_name_mut(&mut self, name: &str) -> &mut Matrix {
        let id = self
            .group(name)
            .unwrap_or_else(|| panic!("no parameter group named {name}"));
        self.get_mut(id)
    }

    pub fn num_params(&self) -> usize {
        self.values.iter().map(|m| m.data.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.values
            .iter()
            .all(|m| m.data.iter().all(|v| v.is_finite()))
    }

    pub fn same_layout(&self, other: &ParamSet) -> bool {
        Arc::ptr_eq(&self.layout, &other.layout) || self.layout == other.layout
    }

    pub fn slice(&self, key: &ParamKey) -> Result<&[f64]> {
        let m = self.matrix_for(key)?;
        Ok(match key.row {
            Row::Whole => m.as_slice(),
            Row::Index(r) => m.row(r),
        })
    }

    fn matrix_for(&self, key: &ParamKey) -> Result<&Matrix> {
        let m = self
            .values
            .get(key.group.0)
            .ok_or_else(|| Error::ShapeMismatch(format!("no group {}", key.group.0)))?;
        if let Row::Index(r) = key.row {
            if r >= m.rows {
                return Err(Error::ShapeMismatch(format!(
                    "row {r} of {} ({} rows)",
                    self.name(key.group),
                    m.rows
                )));
            }
        }
        Ok(m)
    }

    /// `self += scale * grad` on the gradient's support. Entries outside the
    /// support are not touched.
    pub fn add_scaled(&mut self, grad: &SparseGrad, scale: f64) -> Result<()> {
        for (key, g) in grad.iter() {
            self.check_slice(key, g.len())?;
        }
        for (key, g) in grad.iter() {
            let dst = self.slice_mut_unchecked(key);
            for (d, &v) in dst.iter_mut().zip(g) {
                *d += scale * v;
            }
        }
        Ok(())
    }

    pub(crate) fn check_slice(&self, key: &ParamKey, len: usize) -> Result<()> {
        let m = self.matrix_for(key)?;
        let want = match key.row {
            Row::Whole => m.data.len(),
            Row::Index(_) => m.cols,
        };
        if want != len {
            return Err(Error::ShapeMismatch(format!(
                "gradient slice for {} has {len} values, expected {want}",
                self.name(key.group)
            )));
        }
        Ok(())
    }

    pub(crate) fn slice_mut_unchecked(&mut self, key: &ParamKey) -> &mut [f64] {
        let m = &mut self.values[key.group.0];
        match key.row {
            Row::Whole => m.as_mut_slice(),
            Row::Index(r) => m.row_mut(r),
        }
    }

    /// Largest absolute elementwise difference. Both sets must share a layout.
    pub fn max_abs_diff(&self, other: &ParamSet) -> f64 {
        assert!(self.same_layout(other));
        self.values
            .iter()
            .zip(&other.values)
            .flat_map(|(a, b)| a.data.iter().zip(&b.data).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }

    /// Elementwise `self - other` as a whole-group gradient.
    pub fn diff(&self, other: &ParamSet) -> SparseGrad {
        assert!(self.same_layout(other));
        let mut out = SparseGrad::new();
        for (i, (a, b)) in self.values.iter().zip(&other.values).enumerate() {
            let d: Vec<f64> = a.data.iter().zip(&b.data).map(|(x, y)| x - y).collect();
            out.insert(ParamKey::whole(GroupId(i)), d);
        }
        out
    }
}

/// Gradient with an explicit support.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SparseGrad {
    entries: BTreeMap<ParamKey, Vec<f64>>,
}

impl SparseGrad {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn insert(&mut self, key: ParamKey, values: Vec<f64>) {
        self.entries.insert(key, values);
    }

    pub fn get(&self, key: &ParamKey) -> Option<&[f64]> {
        self.entries.get(key).map(Vec::as_slice)
    }

    pub fn contains(&self, key: &ParamKey) -> bool {
        self.entries.contains_key(key)
    }

    pub fn support(&self) -> impl Iterator<Item = &ParamKey> {
        self.entries.keys()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ParamKey, &[f64])> {
        self.entries.iter().map(|(k, v)| (k, v.as_slice()))
    }

    /// Mutable slot for `key`, zero-filled with `len` values when absent.
    #[inline]
    pub fn slot(&mut self, key: ParamKey, len: usize) -> &mut [f64] {
        let v = self.entries.entry(key).or_insert_with(|| vec![0.0; len]);
        debug_assert_eq!(v.len(), len);
        v
    }

    /// `self += scale * values` at `key`.
    pub fn add_slice(&mut self, key: ParamKey, values: &[f64], scale: f64) {
        let dst = self.slot(key, values.len());
        for (d, &v) in dst.iter_mut().zip(values) {
            *d += scale * v;
        }
    }

    /// `self += scale * other`; supports are unioned.
    pub fn add_scaled(&mut self, other: &SparseGrad, scale: f64) {
        for (k, v) in &other.entries {
            self.add_slice(*k, v, scale);
        }
    }

    pub fn scale(&mut self, c: f64) {
        for v in self.entries.values_mut() {
            for x in v.iter_mut() {
                *x *= c;
            }
        }
    }

    pub fn scaled(mut self, c: f64) -> Self {
        self.scale(c);
        self
    }

    /// Dot product over the intersection of both supports.
    pub fn dot(&self, other: &SparseGrad) -> f64 {
        let (small, large) = if self.len() <= other.len() {
            (self, other)
        } else {
            (other, self)
        };
        let mut acc = 0.0;
        for (k, a) in &small.entries {
            if let Some(b) = large.entries.get(k) {
                debug_assert_eq!(a.len(), b.len());
                acc += dot(a, b);
            }
        }
        acc
    }

    /// Dot product with a parameter-shaped dense vector, touching only the support.
    pub fn dot_dense(&self, dense: &ParamSet) -> Result<f64> {
        let mut acc = 0.0;
        for (k, g) in &self.entries {
            dense.check_slice(k, g.len())?;
            acc += dot(g, dense.slice(k)?);
        }
        Ok(acc)
    }

    pub fn norm_sq(&self) -> f64 {
        self.entries.values().map(|v| dot(v, v)).sum()
    }

    /// Drops every entry whose key fails `keep`.
    pub fn retain(&mut self, mut keep: impl FnMut(&ParamKey) -> bool) {
        self.entries.retain(|k, _| keep(k));
    }

    pub fn is_finite(&self) -> bool {
        self.entries
            .values()
            .all(|v| v.iter().all(|x| x.is_finite()))
    }

    /// Support rendered as `(group name, row)` pairs.
    pub fn named_support(&self, layout: &Layout) -> Vec<(String, Row)> {
        self.entries
            .keys()
            .map(|k| (layout.name(k.group).to_owned(), k.row))
            .collect()
    }

    /// Largest absolute difference over the union of supports, treating
    /// missing entries as zero.
    pub fn max_abs_diff(&self, other: &SparseGrad) -> f64 {
        let mut d = self.clone();
        d.add_scaled(other, -1.0);
        d.entries
            .values()
            .flat_map(|v| v.iter().map(|x| x.abs()))
            .fold(0.0, f64::max)
    }

    /// Scatters the entries into a zero-initialized parameter set.
    pub fn to_dense(&self, layout: &Arc<Layout>) -> Result<ParamSet> {
        let mut p = ParamSet::zeros(layout.clone());
        p.add_scaled(self, 1.0)?;
        Ok(p)
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.entries
            .values()
            .flat_map(|v| v.iter().map(|x| x.abs()))
            .fold(0.0, f64::max)
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layout() -> (Arc<Layout>, GroupId, GroupId) {
        let mut b = LayoutBuilder::new();
        let emb = b.group("emb", 3, 2);
        let w = b.group("w", 1, 2);
        (b.build(), emb, w)
    }

    #[test]
    fn add_unions_and_sums() {
        let (_, emb, w) = layout();
        let mut a = SparseGrad::new();
        a.insert(ParamKey::row(emb, 0), vec![1.0, 2.0]);
        a.insert(ParamKey::whole(w), vec![1.0, 1.0]);
        let mut b = SparseGrad::new();
        b.insert(ParamKey::row(emb, 2), vec![5.0, 5.0]);
        b.insert(ParamKey::whole(w), vec![2.0, -1.0]);
        a.add_scaled(&b, 1.0);
        assert_eq!(a.len(), 3);
        assert_eq!(a.get(&ParamKey::whole(w)).unwrap(), &[3.0, 0.0]);
        assert_eq!(a.get(&ParamKey::row(emb, 2)).unwrap(), &[5.0, 5.0]);
    }

    #[test]
    fn dot_touches_only_shared_support() {
        let (layout, emb, w) = layout();
        let mut a = SparseGrad::new();
        a.insert(ParamKey::row(emb, 1), vec![1.0, 2.0]);
        a.insert(ParamKey::whole(w), vec![3.0, 0.0]);
        let mut b = SparseGrad::new();
        b.insert(ParamKey::row(emb, 1), vec![2.0, 2.0]);
        b.insert(ParamKey::row(emb, 0), vec![100.0, 100.0]);
        assert_eq!(a.dot(&b), 6.0);

        let mut dense = ParamSet::zeros(layout);
        dense.get_mut(emb).row_mut(1).copy_from_slice(&[1.0, 1.0]);
        dense.get_mut(w).as_mut_slice().copy_from_slice(&[2.0, 7.0]);
        assert_eq!(a.dot_dense(&dense).unwrap(), 3.0 + 6.0);
    }

    #[test]
    fn add_scaled_leaves_untouched_entries_bitwise() {
        let (layout, emb, _) = layout();
        let mut p = ParamSet::zeros(layout);
        p.get_mut(emb).row_mut(2).copy_from_slice(&[0.1, 0.2]);
        let before = p.clone();
        let mut g = SparseGrad::new();
        g.insert(ParamKey::row(emb, 0), vec![1.0, 1.0]);
        p.add_scaled(&g, -0.5).unwrap();
        assert_eq!(p.get(emb).row(0), &[-0.5, -0.5]);
        assert_eq!(p.get(emb).row(2), before.get(emb).row(2));
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let (layout, emb, _) = layout();
        let mut p = ParamSet::zeros(layout);
        let mut g = SparseGrad::new();
        g.insert(ParamKey::row(emb, 0), vec![1.0, 1.0, 1.0]);
        assert!(matches!(
            p.add_scaled(&g, 1.0),
            Err(Error::ShapeMismatch(_))
        ));
        let mut g = SparseGrad::new();
        g.insert(ParamKey::row(emb, 9), vec![1.0, 1.0]);
        assert!(p.add_scaled(&g, 1.0).is_err());
    }
}
