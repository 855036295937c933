use serde::{Deserialize, Serialize};

use crate::data::{AccuracyMetric, Label, PredictionLog};
use crate::error::{Error, Result};

/// Decomposable accuracy predicate over (model, labeled subset).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AccuracyConstraint {
    AlwaysTrue,
    /// Σ q(m(x), y) ≥ α · Σ q(p_ref(x), y) over the subset.
    MinRelative {
        alpha: f64,
        metric: AccuracyMetric,
        reference: String,
    },
}

impl AccuracyConstraint {
    pub fn min_relative(
        alpha: f64,
        metric: AccuracyMetric,
        reference: impl Into<String>,
    ) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::Config(format!(
                "alpha must be in (0, 1], got {alpha}"
            )));
        }
        Ok(AccuracyConstraint::MinRelative {
            alpha,
            metric,
            reference: reference.into(),
        })
    }

    pub fn reference(&self) -> Option<&str> {
        match self {
            AccuracyConstraint::AlwaysTrue => None,
            AccuracyConstraint::MinRelative { reference, .. } => Some(reference),
        }
    }

    /// Per-example contributions (model metric, reference metric); an
    /// abstention contributes zero on the model side.
    pub(crate) fn bind<'a>(&'a self, log: &'a PredictionLog) -> Result<BoundConstraint<'a>> {
        Ok(match self {
            AccuracyConstraint::AlwaysTrue => BoundConstraint::AlwaysTrue,
            AccuracyConstraint::MinRelative {
                alpha,
                metric,
                reference,
            } => BoundConstraint::MinRelative {
                alpha: *alpha,
                metric: *metric,
                reference: log.model_index(reference)?,
                log,
            },
        })
    }

    /// Evaluates the constraint for a model with the given per-example
    /// decisions (indexed like the log) on `subset`.
    pub fn check(
        &self,
        decisions: &[Option<Label>],
        subset: &[usize],
        log: &PredictionLog,
    ) -> Result<bool> {
        let bound = self.bind(log)?;
        let (q_model, q_ref) = subset.iter().fold((0.0, 0.0), |(a, b), &e| {
            let (da, db) = bound.contribution(decisions[e], e);
            (a + da, b + db)
        });
        Ok(bound.holds(q_model, q_ref))
    }
}

pub(crate) enum BoundConstraint<'a> {
    AlwaysTrue,
    MinRelative {
        alpha: f64,
        metric: AccuracyMetric,
        reference: usize,
        log: &'a PredictionLog,
    },
}

impl BoundConstraint<'_> {
    pub(crate) fn contribution(&self, decision: Option<Label>, e: usize) -> (f64, f64) {
        match self {
            BoundConstraint::AlwaysTrue => (0.0, 0.0),
            BoundConstraint::MinRelative {
                metric,
                reference,
                log,
                ..
            } => {
                let label = log.label(e);
                let q = decision.map_or(0.0, |p| metric.value(p, label));
                (q, metric.value(log.output(*reference, e).prediction, label))
            }
        }
    }

    pub(crate) fn holds(&self, q_model: f64, q_ref: f64) -> bool {
        match self {
            BoundConstraint::AlwaysTrue => true,
            BoundConstraint::MinRelative { alpha, .. } => exact_ge_product(q_model, *alpha, q_ref),
        }
    }
}

/// `lhs >= a * b` evaluated exactly on the binary values of the operands.
///
/// A rounded product could make the constraint non-decomposable at
/// boundaries, so the comparison is done on integer mantissas.
pub fn exact_ge_product(lhs: f64, a: f64, b: f64) -> bool {
    if !(lhs.is_finite() && a.is_finite() && b.is_finite()) {
        return lhs >= a * b;
    }
    let (lm, le) = decompose(lhs);
    let (am, ae) = decompose(a);
    let (bm, be) = decompose(b);
    let rm = am * bm;
    let re = ae + be;
    compare_dyadic(lm, le, rm, re) != std::cmp::Ordering::Less
}

/// value = mantissa * 2^exponent, mantissa fits in 54 bits.
fn decompose(x: f64) -> (i128, i32) {
    if x == 0.0 {
        return (0, 0);
    }
    let bits = x.to_bits();
    let sign = if bits >> 63 == 1 { -1 } else { 1 };
    let exp_bits = ((bits >> 52) & 0x7ff) as i32;
    let frac = (bits & ((1u64 << 52) - 1)) as i128;
    let (mant, exp) = if exp_bits == 0 {
        (frac, -1074)
    } else {
        (frac | (1i128 << 52), exp_bits - 1075)
    };
    (sign * mant, exp)
}

fn compare_dyadic(am: i128, ae: i32, bm: i128, be: i32) -> std::cmp::Ordering {
    use std::cmp::Ordering;
    let sa = am.signum();
    let sb = bm.signum();
    if sa != sb || sa == 0 {
        return sa.cmp(&sb);
    }
    let bits = |m: i128| 128 - m.unsigned_abs().leading_zeros() as i32;
    // compare magnitudes by top bit position first
    let top_a = bits(am) + ae;
    let top_b = bits(bm) + be;
    let mag = if top_a != top_b {
        top_a.cmp(&top_b)
    } else {
        let e = ae.min(be);
        // both shifts are bounded by the mantissa widths since top bits agree
        let a = am.unsigned_abs() << (ae - e) as u32;
        let b = bm.unsigned_abs() << (be - e) as u32;
        a.cmp(&b)
    };
    if sa > 0 {
        mag
    } else {
        match mag {
            Ordering::Less => Ordering::Greater,
            Ordering::Greater => Ordering::Less,
            Ordering::Equal => Ordering::Equal,
        }
    }
}
