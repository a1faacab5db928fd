//! Euclidean embedding distance and the margin-based triplet loss.
//!
//! The loss is `max(0, d(a,p) − d(a,n) + m)`: the anchor's positive must end
//! up at least `m` distance units closer than its negative. Distances are
//! true (unsquared) L2 so the margin is stated in distance units.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::DenseVector;

/// Below this, a distance is treated as zero and its unit direction as the
/// zero vector, so degenerate triplets cannot produce NaN gradients.
pub const DEGENERATE_DISTANCE: f64 = 1e-12;

/// The margin `m >= 0` of the hinge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Margin(f64);

impl Margin {
    pub fn new(m: f64) -> Result<Self> {
        if !m.is_finite() || m < 0.0 {
            return Err(Error::InvalidConfig {
                key: "margin",
                reason: format!("must be finite and >= 0, got {m}"),
            });
        }
        Ok(Self(m))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Embeddings of one (anchor, positive, negative) triplet; all three share
/// the same dimension.
#[derive(Debug, Clone)]
pub struct TripletEmbeddings {
    pub anchor: DenseVector,
    pub positive: DenseVector,
    pub negative: DenseVector,
}

impl TripletEmbeddings {
    pub fn new(anchor: DenseVector, positive: DenseVector, negative: DenseVector) -> Result<Self> {
        if positive.dim() != anchor.dim() {
            return Err(Error::DimMismatch {
                context: "triplet positive vs anchor",
                left: positive.dim(),
                right: anchor.dim(),
            });
        }
        if negative.dim() != anchor.dim() {
            return Err(Error::DimMismatch {
                context: "triplet negative vs anchor",
                left: negative.dim(),
                right: anchor.dim(),
            });
        }
        Ok(Self {
            anchor,
            positive,
            negative,
        })
    }

    pub fn dim(&self) -> usize {
        self.anchor.dim()
    }
}

/// `||h_u − h_v||_2`.
pub fn euclidean_distance(h_u: &DenseVector, h_v: &DenseVector) -> Result<f64> {
    if h_u.dim() != h_v.dim() {
        return Err(Error::DimMismatch {
            context: "euclidean distance operands",
            left: h_u.dim(),
            right: h_v.dim(),
        });
    }
    Ok(distance_slices(h_u.as_slice(), h_v.as_slice()))
}

#[inline]
pub(crate) fn distance_slices(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        let diff = x - y;
        acc += diff * diff;
    }
    acc.sqrt()
}

/// `max(0, d(a,p) − d(a,n) + m)`.
pub fn triplet_loss(t: &TripletEmbeddings, m: Margin) -> f64 {
    let d_pos = distance_slices(t.anchor.as_slice(), t.positive.as_slice());
    let d_neg = distance_slices(t.anchor.as_slice(), t.negative.as_slice());
    (d_pos - d_neg + m.value()).max(0.0)
}

/// Exact gradients of [`triplet_loss`] w.r.t. the three embeddings.
///
/// On the flat region of the hinge (argument <= 0, including exactly 0) all
/// gradients are zero. On the active region:
///   grad_p = (p − a)/d(a,p)
///   grad_n = (a − n)/d(a,n)
///   grad_a = −(grad_p + grad_n)
/// A descent step then shrinks d(a,p) and grows d(a,n). Unit directions of
/// degenerate distances follow the zero convention.
pub fn triplet_loss_grads(
    t: &TripletEmbeddings,
    m: Margin,
) -> (DenseVector, DenseVector, DenseVector) {
    let dim = t.dim();
    let d_pos = distance_slices(t.anchor.as_slice(), t.positive.as_slice());
    let d_neg = distance_slices(t.anchor.as_slice(), t.negative.as_slice());
    let active = d_pos - d_neg + m.value() > 0.0;

    let mut grad_a = DenseVector::zeros(dim);
    let mut grad_p = DenseVector::zeros(dim);
    let mut grad_n = DenseVector::zeros(dim);
    if !active {
        return (grad_a, grad_p, grad_n);
    }

    if d_pos >= DEGENERATE_DISTANCE {
        for i in 0..dim {
            grad_p[i] = (t.positive[i] - t.anchor[i]) / d_pos;
        }
    }
    if d_neg >= DEGENERATE_DISTANCE {
        for i in 0..dim {
            grad_n[i] = (t.anchor[i] - t.negative[i]) / d_neg;
        }
    }
    for i in 0..dim {
        grad_a[i] = -(grad_p[i] + grad_n[i]);
    }
    (grad_a, grad_p, grad_n)
}
