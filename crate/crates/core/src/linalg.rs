//! Small dense kernels used by the dynamics and oracle modules.

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

pub(crate) const DET_GUARD: f64 = 1e-14;

/// Maximum absolute row sum.
pub fn inf_norm(m: ArrayView2<'_, f64>) -> f64 {
    m.rows()
        .into_iter()
        .map(|row| row.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Matrix exponential by scaling and squaring a truncated Taylor series.
///
/// The argument is scaled by `2^-s` until its infinity norm is at most 0.5,
/// the series is summed until a term's norm drops below 1e-16 (relative to the
/// running sum), and the result is squared `s` times.
pub fn expm(m: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::Shape(format!(
            "expm of a {}x{} matrix",
            n,
            m.ncols()
        )));
    }
    let norm = inf_norm(m);
    if !norm.is_finite() {
        return Err(Error::Numeric("non-finite matrix passed to expm".into()));
    }
    let mut squarings = 0u32;
    let mut scale = 1.0;
    while norm * scale > 0.5 {
        scale *= 0.5;
        squarings += 1;
    }
    let scaled = m.mapv(|v| v * scale);

    let mut sum = Array2::<f64>::eye(n);
    let mut term = Array2::<f64>::eye(n);
    for k in 1..=60u32 {
        term = term.dot(&scaled).mapv(|v| v / f64::from(k));
        sum += &term;
        if inf_norm(term.view()) < 1e-16 * inf_norm(sum.view()).max(1.0) {
            break;
        }
    }
    for _ in 0..squarings {
        sum = sum.dot(&sum);
    }
    if sum.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("matrix exponential overflowed".into()));
    }
    Ok(sum)
}

/// Solve `a · x = b` for `x`.
///
/// 1×1 systems take a direct division with a determinant guard; larger systems
/// use Gaussian elimination with partial pivoting.
pub fn solve(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n {
        return Err(Error::Shape(format!(
            "solve with a {}x{} lhs and {}x{} rhs",
            n,
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    if n == 1 {
        let det = a[[0, 0]];
        if det.abs() <= DET_GUARD {
            return Err(Error::Singular(format!("|det| = {:e}", det.abs())));
        }
        return Ok(b.mapv(|v| v / det));
    }

    let mut lu = a.to_owned();
    let mut x = b.to_owned();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| lu[[i, col]].abs().total_cmp(&lu[[j, col]].abs()))
            .unwrap_or(col);
        if lu[[pivot, col]].abs() <= DET_GUARD {
            return Err(Error::Singular(format!("zero pivot in column {col}")));
        }
        if pivot != col {
            for k in 0..n {
                lu.swap([col, k], [pivot, k]);
            }
            for k in 0..x.ncols() {
                x.swap([col, k], [pivot, k]);
            }
        }
        for row in col + 1..n {
            let factor = lu[[row, col]] / lu[[col, col]];
            if factor == 0.0 {
                continue;
            }
            for k in col..n {
                lu[[row, k]] -= factor * lu[[col, k]];
            }
            for k in 0..x.ncols() {
                x[[row, k]] -= factor * x[[col, k]];
            }
        }
    }
    for row in (0..n).rev() {
        for k in 0..x.ncols() {
            let mut acc = x[[row, k]];
            for j in row + 1..n {
                acc -= lu[[row, j]] * x[[j, k]];
            }
            x[[row, k]] = acc / lu[[row, row]];
        }
    }
    Ok(x)
}

pub fn symmetrize(m: &mut Array2<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in i + 1..n {
            let avg = 0.5 * (m[[i, j]] + m[[j, i]]);
            m[[i, j]] = avg;
            m[[j, i]] = avg;
        }
    }
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
pub fn symmetric_eigenvalues(m: ArrayView2<'_, f64>) -> Vec<f64> {
    let n = m.nrows();
    let mut a = m.to_owned();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[[i, j]] * a[[i, j]])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[[p, q]].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * a[[p, q]]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[[k, p]];
                    let akq = a[[k, q]];
                    a[[k, p]] = c * akp - s * akq;
                    a[[k, q]] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[[p, k]];
                    let aqk = a[[q, k]];
                    a[[p, k]] = c * apk - s * aqk;
                    a[[q, k]] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[[i, i]]).collect()
}
