//! Exhaustive support enumeration, an independent check on the NNLS path.
//!
//! A point of a finitely generated cone is a nonnegative combination of some
//! linearly independent subset of the generators, so enumerating every such
//! subset and solving the square-or-tall system on it decides membership
//! without any active-set logic.

use nalgebra::{DMatrix, DVector};

use super::{vectorize, ConeFamily};
use crate::{Error, Result};

pub const MAX_REPRESENTATIVES: usize = 12;

/// Extremality of `class_id` decided by trying every support of size at most
/// `max_support` (default `d²`) among the other representatives.
pub fn brute_force_extremality(
    class_id: usize,
    family: &ConeFamily,
    max_support: Option<usize>,
    tol: f64,
) -> Result<bool> {
    let reps = family.class_count();
    if reps > MAX_REPRESENTATIVES {
        return Err(Error::FamilyTooLarge(reps));
    }
    if class_id >= reps {
        return Err(Error::InvalidParameter(format!("no ray class {class_id}")));
    }
    let target = family.representative(class_id);
    let dim2 = target.dim().pow(2);
    let max_support = max_support.unwrap_or(dim2).min(dim2);
    let others: Vec<DVector<f64>> = (0..reps)
        .filter(|&c| c != class_id)
        .map(|c| vectorize(family.representative(c)))
        .collect();
    let b = vectorize(target);
    let bn = b.norm();

    let m = others.len();
    for mask in 1u32..(1u32 << m) {
        let size = mask.count_ones() as usize;
        if size > max_support {
            continue;
        }
        let cols: Vec<DVector<f64>> = (0..m)
            .filter(|i| mask & (1 << i) != 0)
            .map(|i| others[i].clone())
            .collect();
        let a = DMatrix::from_columns(&cols);
        if let Some(x) = solve_full_rank(&a, &b) {
            let residual = (&a * &x - &b).norm();
            if residual <= tol * bn && x.iter().all(|&v| v >= -tol) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Least squares via Householder QR; `None` when the columns are dependent.
fn solve_full_rank(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    if a.ncols() > a.nrows() {
        return None;
    }
    let qr = a.clone().qr();
    let r = qr.r();
    let max_diag = (0..r.ncols()).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    if (0..r.ncols()).any(|i| r[(i, i)].abs() <= 1e-10 * max_diag.max(f64::MIN_POSITIVE)) {
        return None;
    }
    let qtb = qr.q().transpose() * b;
    r.solve_upper_triangular(&qtb)
}
