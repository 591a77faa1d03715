//! Dense kernels over row-major `f64` buffers.
//!
//! Reductions use four interleaved accumulators in a fixed order so results
//! are bit-reproducible while still vectorizing.

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = c * 4;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut tail = 0.0;
    for i in chunks * 4..a.len() {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `out += scale * x`
#[inline]
pub fn axpy(out: &mut [f64], scale: f64, x: &[f64]) {
    debug_assert_eq!(out.len(), x.len());
    for (o, v) in out.iter_mut().zip(x) {
        *o += scale * v;
    }
}

/// `out[i] += row_i(w) . x` for a `rows x cols` matrix.
#[inline]
pub fn matvec_acc(out: &mut [f64], w: &[f64], cols: usize, x: &[f64]) {
    debug_assert_eq!(x.len(), cols);
    for (o, row) in out.iter_mut().zip(w.chunks_exact(cols)) {
        *o += dot(row, x);
    }
}

/// `out += w^T v` for a `rows x cols` matrix.
#[inline]
pub fn matvec_t_acc(out: &mut [f64], w: &[f64], cols: usize, v: &[f64]) {
    debug_assert_eq!(out.len(), cols);
    for (vi, row) in v.iter().zip(w.chunks_exact(cols)) {
        if *vi != 0.0 {
            axpy(out, *vi, row);
        }
    }
}

/// `g += a b^T` for a `a.len() x b.len()` matrix.
#[inline]
pub fn outer_acc(g: &mut [f64], a: &[f64], b: &[f64]) {
    let cols = b.len();
    for (ai, row) in a.iter().zip(g.chunks_exact_mut(cols)) {
        if *ai != 0.0 {
            axpy(row, *ai, b);
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy of a logit against a 0/1 label.
#[inline]
pub fn bce_with_logit(logit: f64, label: f64) -> f64 {
    logit.max(0.0) - logit * label + (-logit.abs()).exp().ln_1p()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernels_match_naive() {
        let w: Vec<f64> = (0..15).map(|i| i as f64 * 0.5 - 3.0).collect();
        let x = [1.0, -2.0, 0.5, 3.0, 0.25];
        let mut y = vec![0.0; 3];
        matvec_acc(&mut y, &w, 5, &x);
        for r in 0..3 {
            let naive: f64 = (0..5).map(|c| w[r * 5 + c] * x[c]).sum();
            assert!((y[r] - naive).abs() < 1e-12);
        }
        let v = [1.0, 2.0, -1.0];
        let mut t = vec![0.0; 5];
        matvec_t_acc(&mut t, &w, 5, &v);
        for c in 0..5 {
            let naive: f64 = (0..3).map(|r| w[r * 5 + c] * v[r]).sum();
            assert!((t[c] - naive).abs() < 1e-12);
        }
        let mut g = vec![0.0; 15];
        outer_acc(&mut g, &v, &x);
        assert_eq!(g[5 + 3], 2.0 * 3.0);
    }

    #[test]
    fn sigmoid_and_bce() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(800.0) <= 1.0 && sigmoid(-800.0) >= 0.0);
        assert!((bce_with_logit(0.0, 1.0) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((bce_with_logit(0.0, 0.0) - std::f64::consts::LN_2).abs() < 1e-15);
        let l = 1.7;
        let p = sigmoid(l);
        assert!((bce_with_logit(l, 1.0) + p.ln()).abs() < 1e-12);
        assert!((bce_with_logit(l, 0.0) + (1.0 - p).ln()).abs() < 1e-12);
        assert!(bce_with_logit(1000.0, 0.0).is_finite());
    }
}
