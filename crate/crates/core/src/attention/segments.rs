use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::band::BandMatrix;
use crate::error::{dim_err, Error, Result};
use crate::matrix::DenseMatrix;
use crate::memtrack::TrackedVec;
use crate::scalar::Scalar;

/// How out-of-range band slots enter the softmax.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Padding {
    /// Excluded from the softmax (logit −∞). Windowed attention then equals
    /// dense attention under the corresponding additive mask.
    #[default]
    Exclude,
    /// Zero-padded keys and values: each out-of-range slot contributes a
    /// logit of 0 to the normaliser and nothing to the output.
    ZeroLogit,
}

impl std::str::FromStr for Padding {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exclude" => Ok(Padding::Exclude),
            "zero-logit" => Ok(Padding::ZeroLogit),
            other => Err(Error::Unknown { what: "padding", value: other.to_string() }),
        }
    }
}

/// One block of attention scores against a single target group.
#[derive(Debug, Clone)]
pub enum Segment<T> {
    /// Full scores against every target row. An optional row-major mask
    /// (`true` = allowed) excludes individual entries.
    Dense { scores: DenseMatrix<T>, mask: Option<Arc<TrackedVec<bool>>> },
    /// Windowed scores.
    Band(BandMatrix<T>),
}

impl<T: Scalar> Segment<T> {
    pub fn rows(&self) -> usize {
        match self {
            Segment::Dense { scores, .. } => scores.rows(),
            Segment::Band(b) => b.rows(),
        }
    }

    /// Scalar slots allocated for this segment.
    pub fn slots(&self) -> usize {
        match self {
            Segment::Dense { scores, .. } => scores.rows() * scores.cols(),
            Segment::Band(b) => b.slots(),
        }
    }

    fn allowed_in_row(&self, i: usize) -> Allowed<'_> {
        match self {
            Segment::Dense { mask: None, .. } => Allowed::All,
            Segment::Dense { scores, mask: Some(m) } => {
                let c = scores.cols();
                Allowed::Mask(&m[i * c..(i + 1) * c])
            }
            Segment::Band(b) => Allowed::Range(b.valid_range(i)),
        }
    }

    pub(crate) fn row(&self, i: usize) -> &[T] {
        match self {
            Segment::Dense { scores, .. } => scores.row(i),
            Segment::Band(b) => b.row(i),
        }
    }

    /// Row `i` for writing, together with which of its entries are allowed.
    fn row_mut_allowed(&mut self, i: usize) -> (&mut [T], Allowed<'_>) {
        match self {
            Segment::Dense { scores, mask } => {
                let c = scores.cols();
                let allowed = match mask {
                    None => Allowed::All,
                    Some(m) => Allowed::Mask(&m[i * c..(i + 1) * c]),
                };
                (scores.row_mut(i), allowed)
            }
            Segment::Band(b) => {
                let r = b.valid_range(i);
                (b.row_mut(i), Allowed::Range(r))
            }
        }
    }

    /// Out-of-range band slots in row `i` (zero for dense segments).
    fn padded_slots(&self, i: usize) -> usize {
        match self {
            Segment::Dense { .. } => 0,
            Segment::Band(b) => b.width() - b.valid_range(i).len(),
        }
    }
}

#[derive(Debug, Clone)]
enum Allowed<'a> {
    All,
    Range(std::ops::Range<usize>),
    Mask(&'a [bool]),
}

impl Allowed<'_> {
    #[inline]
    fn contains(&self, j: usize) -> bool {
        match self {
            Allowed::All => true,
            Allowed::Range(r) => r.contains(&j),
            Allowed::Mask(m) => m[j],
        }
    }
}

/// Scores `[A₁, …, A_j]` of one source group against a tuple of targets,
/// all with the same row count.
#[derive(Debug, Clone)]
pub struct SegmentScores<T> {
    rows: usize,
    segments: Vec<Segment<T>>,
}

impl<T: Scalar> SegmentScores<T> {
    pub fn new(segments: Vec<Segment<T>>) -> Result<Self> {
        let rows = segments.first().map(Segment::rows).ok_or_else(|| dim_err("SegmentScores", "no segments"))?;
        if let Some(bad) = segments.iter().find(|s| s.rows() != rows) {
            return Err(dim_err("SegmentScores", format!("segment with {} rows, expected {rows}", bad.rows())));
        }
        Ok(Self { rows, segments })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn segments(&self) -> &[Segment<T>] {
        &self.segments
    }

    pub fn into_segments(self) -> Vec<Segment<T>> {
        self.segments
    }

    /// Total scalar slots across segments.
    pub fn slots(&self) -> usize {
        self.segments.iter().map(Segment::slots).sum()
    }

    /// Sum of row `i` over allowed entries of every segment.
    pub fn row_sum(&self, i: usize) -> T {
        let mut total = T::zero();
        self.for_each_allowed(i, |_, _, x| total += x);
        total
    }

    /// Visits every allowed entry of row `i` as `(segment, column, value)`.
    pub fn for_each_allowed(&self, i: usize, mut f: impl FnMut(usize, usize, T)) {
        for (s, seg) in self.segments.iter().enumerate() {
            let allowed = seg.allowed_in_row(i);
            for (j, &x) in seg.row(i).iter().enumerate() {
                if allowed.contains(j) {
                    f(s, j, x);
                }
            }
        }
    }
}

/// Softmax over the concatenation of all segments, row by row, after
/// dividing by `scale`. Disallowed entries end at exactly 0.
///
/// The per-row maximum over allowed entries is subtracted before
/// exponentiation. Under [`Padding::ZeroLogit`], out-of-range band slots
/// count as logits of 0 in the normaliser; their probability mass is not
/// stored because it only ever multiplies zero-padded values.
pub fn segment_softmax<T: Scalar>(
    mut scores: SegmentScores<T>,
    scale: T,
    padding: Padding,
) -> Result<SegmentScores<T>> {
    if scale.partial_cmp(&T::zero()) != Some(std::cmp::Ordering::Greater) {
        return Err(dim_err("segment_softmax", format!("scale must be positive, got {scale}")));
    }
    let inv = T::one() / scale;
    for i in 0..scores.rows {
        let mut max = T::neg_infinity();
        let mut allowed = 0usize;
        let mut padded = 0usize;
        for seg in &scores.segments {
            let ok = seg.allowed_in_row(i);
            for (j, &x) in seg.row(i).iter().enumerate() {
                if ok.contains(j) {
                    max = max.max(x * inv);
                    allowed += 1;
                }
            }
            if padding == Padding::ZeroLogit {
                padded += seg.padded_slots(i);
            }
        }
        if allowed == 0 {
            return Err(Error::EmptyRow { row: i });
        }
        if padded > 0 {
            max = max.max(T::zero());
        }
        let mut total = T::zero();
        for seg in scores.segments.iter_mut() {
            let (row, ok) = seg.row_mut_allowed(i);
            for (j, x) in row.iter_mut().enumerate() {
                if ok.contains(j) {
                    *x = (*x * inv - max).exp();
                    total += *x;
                } else {
                    *x = T::zero();
                }
            }
        }
        if padded > 0 {
            total += T::from_usize(padded).expect("count fits") * (-max).exp();
        }
        let norm = T::one() / total;
        for seg in scores.segments.iter_mut() {
            seg.row_mut_allowed(i).0.iter_mut().for_each(|x| *x *= norm);
        }
    }
    Ok(scores)
}

/// Backward of [`segment_softmax`]: given probabilities `P` and `∂L/∂P`
/// (same layout), returns `∂L/∂A` for the unscaled scores.
pub(crate) fn segment_softmax_backward<T: Scalar>(
    probs: &SegmentScores<T>,
    grad_probs: &mut SegmentScores<T>,
    scale: T,
) {
    let inv = T::one() / scale;
    for i in 0..probs.rows {
        let mut inner = T::zero();
        for (p, g) in probs.segments.iter().zip(&grad_probs.segments) {
            let ok = p.allowed_in_row(i);
            for (j, (&pj, &gj)) in p.row(i).iter().zip(g.row(i)).enumerate() {
                if ok.contains(j) {
                    inner += pj * gj;
                }
            }
        }
        for (p, g) in probs.segments.iter().zip(grad_probs.segments.iter_mut()) {
            let ok = p.allowed_in_row(i);
            let (grow, _) = g.row_mut_allowed(i);
            for (j, (gj, &pj)) in grow.iter_mut().zip(p.row(i)).enumerate() {
                *gj = if ok.contains(j) { pj * (*gj - inner) * inv } else { T::zero() };
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense(rows: usize, cols: usize, f: impl FnMut(usize, usize) -> f64) -> Segment<f64> {
        Segment::Dense { scores: DenseMatrix::from_fn(rows, cols, f), mask: None }
    }

    #[test]
    fn equal_scores_give_uniform_rows() {
        let s = SegmentScores::new(vec![dense(3, 4, |_, _| 0.7)]).unwrap();
        let p = segment_softmax(s, 2.0, Padding::Exclude).unwrap();
        for i in 0..3 {
            for j in 0..4 {
                assert!((p.segments()[0].row(i)[j] - 0.25).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn two_segments_share_one_normaliser() {
        let s = SegmentScores::new(vec![dense(2, 2, |_, _| 0.0), dense(2, 3, |_, _| 0.0)]).unwrap();
        let p = segment_softmax(s, 1.0, Padding::Exclude).unwrap();
        for seg in p.segments() {
            for i in 0..2 {
                assert!(seg.row(i).iter().all(|&x| (x - 0.2).abs() < 1e-15));
            }
        }
    }

    #[test]
    fn masked_entries_get_zero() {
        let mask =
            Arc::new(TrackedVec::from_vec(vec![true, false, true, true], crate::memtrack::MemCategory::Activation));
        let seg = Segment::Dense { scores: DenseMatrix::from_fn(2, 2, |_, _| 5.0), mask: Some(mask) };
        let p = segment_softmax(SegmentScores::new(vec![seg]).unwrap(), 1.0, Padding::Exclude).unwrap();
        assert_eq!(p.segments()[0].row(0), &[1.0, 0.0]);
        assert_eq!(p.segments()[0].row(1), &[0.5, 0.5]);
    }

    #[test]
    fn row_without_targets_rejected() {
        let mask = Arc::new(TrackedVec::from_vec(vec![false, false], crate::memtrack::MemCategory::Activation));
        let seg = Segment::Dense { scores: DenseMatrix::<f64>::zeros(1, 2), mask: Some(mask) };
        let err = segment_softmax(SegmentScores::new(vec![seg]).unwrap(), 1.0, Padding::Exclude).unwrap_err();
        assert!(matches!(err, Error::EmptyRow { row: 0 }));
    }

    #[test]
    fn zero_logit_padding_dilutes_edge_rows() {
        // row 0 of a w=1 band over 3 targets has one padded slot
        let band = BandMatrix::from_fn(3, 3, 1, |_, _| 0.0f64).unwrap();
        let p =
            segment_softmax(SegmentScores::new(vec![Segment::Band(band.clone())]).unwrap(), 1.0, Padding::ZeroLogit)
                .unwrap();
        let row0 = p.segments()[0].row(0);
        assert_eq!(row0[0], 0.0);
        assert!((row0[1] - 1.0 / 3.0).abs() < 1e-15);
        let ex =
            segment_softmax(SegmentScores::new(vec![Segment::Band(band)]).unwrap(), 1.0, Padding::Exclude).unwrap();
        assert!((ex.segments()[0].row(0)[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn large_logits_are_stable() {
        let s = SegmentScores::new(vec![dense(1, 3, |_, j| 1e4 + j as f64)]).unwrap();
        let p = segment_softmax(s, 1.0, Padding::Exclude).unwrap();
        assert!(p.row_sum(0).is_finite());
        assert!((p.row_sum(0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn non_positive_scale_rejected() {
        let s = SegmentScores::new(vec![dense(1, 1, |_, _| 0.0)]).unwrap();
        assert!(segment_softmax(s, 0.0, Padding::Exclude).is_err());
    }
}
