//! Equality elimination: `A x = b` ⇔ `x = x0 + Z y`.

use nalgebra::{DMatrix, DVector};

pub(super) struct Reduction {
    n: usize,
    x0: DVector<f64>,
    /// Null-space basis; `None` when there are no equalities (`Z = I`).
    z: Option<DMatrix<f64>>,
    basic: Vec<usize>,
    /// Row combination of the original equalities producing the reduced
    /// rows, one row per basic variable (`E A[:, basic] = I`).
    e: DMatrix<f64>,
}

/// Gauss-Jordan reduction of `[A | I | b]`, one row at a time, pivoting on
/// the largest remaining entry of the row. Returns `None` when the system is
/// inconsistent.
pub(super) fn eliminate(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<Reduction> {
    let (m, n) = a.shape();
    if m == 0 {
        return Some(Reduction {
            n,
            x0: DVector::zeros(n),
            z: None,
            basic: Vec::new(),
            e: DMatrix::zeros(0, 0),
        });
    }
    let width = n + m + 1;
    let mut rows: Vec<Vec<f64>> = (0..m)
        .map(|i| {
            let mut r = vec![0.0; width];
            for j in 0..n {
                r[j] = a[(i, j)];
            }
            r[n + i] = 1.0;
            r[n + m] = b[i];
            r
        })
        .collect();
    let scale: Vec<f64> = (0..m).map(|i| a.row(i).amax().max(1.0)).collect();
    let b_scale = b.amax().max(1.0);

    let mut is_basic = vec![false; n];
    let mut pivots: Vec<(usize, usize)> = Vec::new();
    for i in 0..m {
        let mut col = usize::MAX;
        let mut best = 0.0;
        for j in 0..n {
            if !is_basic[j] && rows[i][j].abs() > best {
                best = rows[i][j].abs();
                col = j;
            }
        }
        if col == usize::MAX || best <= 1e-11 * scale[i] {
            if rows[i][n + m].abs() > 1e-9 * b_scale {
                return None;
            }
            continue;
        }
        let inv = 1.0 / rows[i][col];
        for v in rows[i].iter_mut() {
            *v *= inv;
        }
        rows[i][col] = 1.0;
        let nz: Vec<usize> = (0..width).filter(|&j| rows[i][j] != 0.0).collect();
        let pivot_row = std::mem::take(&mut rows[i]);
        for (k, r) in rows.iter_mut().enumerate() {
            if k == i || r.is_empty() {
                continue;
            }
            let factor = r[col];
            if factor != 0.0 {
                for &j in &nz {
                    r[j] -= factor * pivot_row[j];
                }
                r[col] = 0.0;
            }
        }
        rows[i] = pivot_row;
        is_basic[col] = true;
        pivots.push((i, col));
    }

    let free: Vec<usize> = (0..n).filter(|&j| !is_basic[j]).collect();
    let mut x0 = DVector::zeros(n);
    let mut z = DMatrix::zeros(n, free.len());
    let mut e = DMatrix::zeros(pivots.len(), m);
    let mut basic = Vec::with_capacity(pivots.len());
    for (k, &(i, col)) in pivots.iter().enumerate() {
        let r = &rows[i];
        x0[col] = r[n + m];
        for (fj, &j) in free.iter().enumerate() {
            z[(col, fj)] = -r[j];
        }
        for l in 0..m {
            e[(k, l)] = r[n + l];
        }
        basic.push(col);
    }
    for (fj, &j) in free.iter().enumerate() {
        z[(j, fj)] = 1.0;
    }
    Some(Reduction { n, x0, z: Some(z), basic, e })
}

impl Reduction {
    /// Cost and inequalities in the reduced variable `y`.
    pub(super) fn reduce(
        &self,
        h: &DMatrix<f64>,
        f: &DVector<f64>,
        g: &DMatrix<f64>,
        hv: &DVector<f64>,
    ) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>, DVector<f64>) {
        match &self.z {
            None => (h.clone(), f.clone(), g.clone(), hv.clone()),
            Some(z) => {
                let hz = h * z;
                let mut p = z.tr_mul(&hz);
                p = (&p + p.transpose()) * 0.5;
                let q = z.tr_mul(&(h * &self.x0 + f));
                let gr = g * z;
                let hr = hv - g * &self.x0;
                (p, q, gr, hr)
            }
        }
    }

    pub(super) fn expand(&self, y: &DVector<f64>) -> DVector<f64> {
        match &self.z {
            None => y.clone(),
            Some(z) => &self.x0 + z * y,
        }
    }

    /// Multipliers `ν` cancelling the basic components of the gradient
    /// `g = Hx + f + Gᵀz`, so that `g + Aᵀν` vanishes on the basic variables.
    pub(super) fn equality_duals(&self, grad: &DVector<f64>) -> DVector<f64> {
        let m = self.e.ncols();
        if self.basic.is_empty() {
            return DVector::zeros(m);
        }
        debug_assert_eq!(grad.len(), self.n);
        let r_b = DVector::from_iterator(self.basic.len(), self.basic.iter().map(|&j| grad[j]));
        -self.e.tr_mul(&r_b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn null_space_is_exact() {
        let a = DMatrix::from_row_slice(2, 4, &[1.0, 2.0, 0.0, -1.0, 0.0, 1.0, 3.0, 1.0]);
        let b = DVector::from_vec(vec![1.0, -2.0]);
        let r = eliminate(&a, &b).unwrap();
        let z = r.z.as_ref().unwrap();
        assert_eq!(z.ncols(), 2);
        assert!((&a * z).amax() < 1e-14);
        assert!((&a * &r.x0 - &b).amax() < 1e-14);
        let x = r.expand(&DVector::from_vec(vec![0.3, -1.7]));
        assert!((&a * x - &b).amax() < 1e-13);
    }

    #[test]
    fn equality_duals_cancel_basic_gradient() {
        let a = DMatrix::from_row_slice(2, 3, &[2.0, 1.0, 0.0, 0.5, 0.0, 4.0]);
        let r = eliminate(&a, &DVector::zeros(2)).unwrap();
        let grad = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let nu = r.equality_duals(&grad);
        let full = &grad + a.tr_mul(&nu);
        for &j in &r.basic {
            assert!(full[j].abs() < 1e-14);
        }
    }
}
