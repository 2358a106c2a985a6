//! Row-major dense helpers on flat slices.

/// out = W x, W is rows x cols.
pub fn matvec(w: &[f64], rows: usize, cols: usize, x: &[f64], out: &mut [f64]) {
    debug_assert_eq!(w.len(), rows * cols);
    for r in 0..rows {
        let row = &w[r * cols..(r + 1) * cols];
        let mut acc = 0.0;
        for c in 0..cols {
            acc += row[c] * x[c];
        }
        out[r] = acc;
    }
}

/// out += scale * W^T y.
pub fn matvec_t_acc(w: &[f64], rows: usize, cols: usize, y: &[f64], scale: f64, out: &mut [f64]) {
    debug_assert_eq!(w.len(), rows * cols);
    for r in 0..rows {
        let s = scale * y[r];
        if s == 0.0 {
            continue;
        }
        let row = &w[r * cols..(r + 1) * cols];
        for c in 0..cols {
            out[c] += s * row[c];
        }
    }
}

/// G += scale * y x^T, G is len(y) x len(x).
pub fn outer_acc(g: &mut [f64], y: &[f64], x: &[f64], scale: f64) {
    let cols = x.len();
    debug_assert_eq!(g.len(), y.len() * cols);
    for (r, &yr) in y.iter().enumerate() {
        let s = scale * yr;
        if s == 0.0 {
            continue;
        }
        let row = &mut g[r * cols..(r + 1) * cols];
        for c in 0..cols {
            row[c] += s * x[c];
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_sq(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum()
}

pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn sigmoid(x: f64) -> f64 {
    0.5 + 0.5 * (0.5 * x).tanh()
}

/// Numerically stable log(cosh(z)).
pub fn logcosh(z: f64) -> f64 {
    let a = z.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}
