//! 'Same'-padded cross-correlation over `[n, t, f, c]` buffers.
//!
//! Every mixing layer (FC, 1D and 2D convolution, all algebras) lowers to
//! this kernel with a realized `[taps, c_in, c_out]` matrix. Taps are
//! centered: tap `a` of a `kt`-tap time kernel reads frame
//! `t + (a - kt/2) * dilation`. Inputs are unfolded into `[positions,
//! taps·c_in]` rows and multiplied as matrices. With `skip_zero_block` the
//! primal-output half is computed from the primal-input half only.

use super::tensor::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct Dims {
    pub n: usize,
    pub t: usize,
    pub f: usize,
    pub cin: usize,
    pub cout: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Geometry {
    pub kt: usize,
    pub kf: usize,
    pub dilation: usize,
}

impl Geometry {
    pub const POINTWISE: Geometry = Geometry {
        kt: 1,
        kf: 1,
        dilation: 1,
    };

    pub fn taps(&self) -> usize {
        self.kt * self.kf
    }

    fn time_offset(&self, a: usize) -> isize {
        (a as isize - (self.kt / 2) as isize) * self.dilation as isize
    }

    fn freq_offset(&self, b: usize) -> isize {
        b as isize - (self.kf / 2) as isize
    }
}

#[inline]
fn shifted(base: usize, off: isize, len: usize) -> Option<usize> {
    let v = base as isize + off;
    (v >= 0 && (v as usize) < len).then_some(v as usize)
}

/// Strided view `buf[off + i·rs + j·cs]`.
#[derive(Clone, Copy)]
struct Mat {
    off: usize,
    rs: usize,
    cs: usize,
}

const fn mat(off: usize, rs: usize, cs: usize) -> Mat {
    Mat { off, rs, cs }
}

fn reach(v: Mat, rows: usize, cols: usize) -> usize {
    v.off + (rows - 1) * v.rs + (cols - 1) * v.cs + 1
}

/// `C += A·B` with bounds checked against the backing slices.
#[allow(clippy::too_many_arguments)]
fn gemm<T: Real>(
    m: usize,
    k: usize,
    n: usize,
    a: &[T],
    av: Mat,
    b: &[T],
    bv: Mat,
    c: &mut [T],
    cv: Mat,
) {
    if m == 0 || k == 0 || n == 0 {
        return;
    }
    assert!(reach(av, m, k) <= a.len() && reach(bv, k, n) <= b.len() && reach(cv, m, n) <= c.len());
    let st = |v: Mat| (v.rs as isize, v.cs as isize);
    // SAFETY: the assertion bounds every addressed element; `c` is a unique
    // borrow so it cannot alias `a` or `b`.
    unsafe {
        T::gemm_acc(
            m,
            k,
            n,
            a.as_ptr().add(av.off),
            st(av),
            b.as_ptr().add(bv.off),
            st(bv),
            c.as_mut_ptr().add(cv.off),
            st(cv),
        );
    }
}

/// Column of `(tap, 0)` and of `(tap, cin/2)` in the unfolded layout. The
/// split layout puts every primal input half first, then every dual half.
fn halves(d: &Dims, taps: usize, tap: usize, split: bool) -> (usize, usize) {
    if split {
        let hi = d.cin / 2;
        (tap * hi, taps * hi + tap * (d.cin - hi))
    } else {
        (tap * d.cin, tap * d.cin + d.cin / 2)
    }
}

/// Unfold one example `[t, f, cin]` into `[t·f, taps·cin]` (zero padded).
fn im2col<T: Real>(x: &[T], d: &Dims, g: &Geometry, split: bool, col: &mut [T]) {
    let k = g.taps() * d.cin;
    col.fill(T::zero());
    for t in 0..d.t {
        for f in 0..d.f {
            let row = (t * d.f + f) * k;
            for a in 0..g.kt {
                let Some(ti) = shifted(t, g.time_offset(a), d.t) else {
                    continue;
                };
                for b in 0..g.kf {
                    let Some(fi) = shifted(f, g.freq_offset(b), d.f) else {
                        continue;
                    };
                    let src = (ti * d.f + fi) * d.cin;
                    let (p0, d0) = halves(d, g.taps(), a * g.kf + b, split);
                    let hi = d.cin / 2;
                    col[row + p0..row + p0 + hi].copy_from_slice(&x[src..src + hi]);
                    col[row + d0..row + d0 + d.cin - hi].copy_from_slice(&x[src + hi..src + d.cin]);
                }
            }
        }
    }
}

/// Adjoint of [`im2col`], accumulating into `dx`.
fn col2im<T: Real>(dcol: &[T], d: &Dims, g: &Geometry, split: bool, dx: &mut [T]) {
    let k = g.taps() * d.cin;
    for t in 0..d.t {
        for f in 0..d.f {
            let row = (t * d.f + f) * k;
            for a in 0..g.kt {
                let Some(ti) = shifted(t, g.time_offset(a), d.t) else {
                    continue;
                };
                for b in 0..g.kf {
                    let Some(fi) = shifted(f, g.freq_offset(b), d.f) else {
                        continue;
                    };
                    let dst = (ti * d.f + fi) * d.cin;
                    let (p0, d0) = halves(d, g.taps(), a * g.kf + b, split);
                    let hi = d.cin / 2;
                    let src = dcol[row + p0..row + p0 + hi]
                        .iter()
                        .chain(&dcol[row + d0..row + d0 + d.cin - hi]);
                    for (o, &v) in dx[dst..dst + d.cin].iter_mut().zip(src) {
                        *o += v;
                    }
                }
            }
        }
    }
}

/// Reorders realized weight rows `[taps][cin]` into the split layout.
fn to_split_rows<T: Real>(w: &[T], d: &Dims, taps: usize) -> Vec<T> {
    let cout = d.cout;
    let hi = d.cin / 2;
    let mut out = vec![T::zero(); w.len()];
    for tap in 0..taps {
        for ci in 0..d.cin {
            let (p0, d0) = halves(d, taps, tap, true);
            let row = if ci < hi { p0 + ci } else { d0 + ci - hi };
            let src = (tap * d.cin + ci) * cout;
            out[row * cout..(row + 1) * cout].copy_from_slice(&w[src..src + cout]);
        }
    }
    out
}

/// Adds split-layout weight rows back into the realized layout.
fn add_from_split_rows<T: Real>(ws: &[T], d: &Dims, taps: usize, w: &mut [T]) {
    let cout = d.cout;
    let hi = d.cin / 2;
    for tap in 0..taps {
        for ci in 0..d.cin {
            let (p0, d0) = halves(d, taps, tap, true);
            let row = if ci < hi { p0 + ci } else { d0 + ci - hi };
            let dst = (tap * d.cin + ci) * cout;
            for (o, &v) in w[dst..dst + cout]
                .iter_mut()
                .zip(&ws[row * cout..(row + 1) * cout])
            {
                *o += v;
            }
        }
    }
}

/// `y += a·w` for `m` unfolded rows; returns the multiplication count. In
/// split mode `a` and `w` use the split layout.
fn mix_forward<T: Real>(
    m: usize,
    d: &Dims,
    taps: usize,
    a: &[T],
    w: &[T],
    y: &mut [T],
    skip: bool,
) -> u64 {
    let cout = d.cout;
    let k = taps * d.cin;
    if !skip {
        gemm(
            m,
            k,
            cout,
            a,
            mat(0, k, 1),
            w,
            mat(0, cout, 1),
            y,
            mat(0, cout, 1),
        );
        return (m * k * cout) as u64;
    }
    let (kp, ho) = (taps * (d.cin / 2), cout / 2);
    gemm(
        m,
        kp,
        ho,
        a,
        mat(0, k, 1),
        w,
        mat(0, cout, 1),
        y,
        mat(0, cout, 1),
    );
    gemm(
        m,
        k,
        cout - ho,
        a,
        mat(0, k, 1),
        w,
        mat(ho, cout, 1),
        y,
        mat(ho, cout, 1),
    );
    (m * kp * ho + m * k * (cout - ho)) as u64
}

#[allow(clippy::too_many_arguments)]
fn mix_backward<T: Real>(
    m: usize,
    d: &Dims,
    taps: usize,
    a: &[T],
    dy: &[T],
    w: &[T],
    dw: &mut [T],
    da: &mut [T],
    skip: bool,
) {
    let cout = d.cout;
    let k = taps * d.cin;
    if !skip {
        gemm(
            k,
            m,
            cout,
            a,
            mat(0, 1, k),
            dy,
            mat(0, cout, 1),
            dw,
            mat(0, cout, 1),
        );
        gemm(
            m,
            cout,
            k,
            dy,
            mat(0, cout, 1),
            w,
            mat(0, 1, cout),
            da,
            mat(0, k, 1),
        );
        return;
    }
    let (kp, ho) = (taps * (d.cin / 2), cout / 2);
    gemm(
        kp,
        m,
        ho,
        a,
        mat(0, 1, k),
        dy,
        mat(0, cout, 1),
        dw,
        mat(0, cout, 1),
    );
    gemm(
        k,
        m,
        cout - ho,
        a,
        mat(0, 1, k),
        dy,
        mat(ho, cout, 1),
        dw,
        mat(ho, cout, 1),
    );
    gemm(
        m,
        ho,
        kp,
        dy,
        mat(0, cout, 1),
        w,
        mat(0, 1, cout),
        da,
        mat(0, k, 1),
    );
    gemm(
        m,
        cout - ho,
        k,
        dy,
        mat(ho, cout, 1),
        w,
        mat(ho, 1, cout),
        da,
        mat(0, k, 1),
    );
}

/// Returns the output buffer and the number of scalar multiplications
/// performed in the mixing products.
pub(crate) fn forward<T: Real>(
    x: &[T],
    d: &Dims,
    g: &Geometry,
    w: &[T],
    bias: Option<&[T]>,
    skip_zero_block: bool,
) -> (Vec<T>, u64) {
    let (cin, cout) = (d.cin, d.cout);
    let taps = g.taps();
    let p = d.t * d.f;
    let mut y = vec![T::zero(); d.n * p * cout];
    if let Some(b) = bias {
        for row in y.chunks_exact_mut(cout) {
            row.copy_from_slice(b);
        }
    }
    if taps == 1 {
        let mults = mix_forward(d.n * p, d, 1, x, w, &mut y, skip_zero_block);
        return (y, mults);
    }
    let ws = skip_zero_block.then(|| to_split_rows(w, d, taps));
    let w = ws.as_deref().unwrap_or(w);
    let mut col = vec![T::zero(); p * taps * cin];
    let mut mults = 0;
    for s in 0..d.n {
        im2col(
            &x[s * p * cin..(s + 1) * p * cin],
            d,
            g,
            skip_zero_block,
            &mut col,
        );
        let ys = &mut y[s * p * cout..(s + 1) * p * cout];
        mults += mix_forward(p, d, taps, &col, w, ys, skip_zero_block);
    }
    (y, mults)
}

/// Accumulates `dL/dW` (realized layout) into `dw` and returns `dL/dx`.
pub(crate) fn backward<T: Real>(
    x: &[T],
    dy: &[T],
    d: &Dims,
    g: &Geometry,
    w: &[T],
    skip_zero_block: bool,
    dw: &mut [T],
) -> Vec<T> {
    let (cin, cout) = (d.cin, d.cout);
    let taps = g.taps();
    let p = d.t * d.f;
    let mut dx = vec![T::zero(); x.len()];
    if taps == 1 {
        mix_backward(d.n * p, d, 1, x, dy, w, dw, &mut dx, skip_zero_block);
        return dx;
    }
    let skip = skip_zero_block;
    let ws = skip.then(|| to_split_rows(w, d, taps));
    let w = ws.as_deref().unwrap_or(w);
    let mut dws = skip.then(|| vec![T::zero(); dw.len()]);
    let mut col = vec![T::zero(); p * taps * cin];
    let mut dcol = vec![T::zero(); p * taps * cin];
    for s in 0..d.n {
        im2col(&x[s * p * cin..(s + 1) * p * cin], d, g, skip, &mut col);
        dcol.fill(T::zero());
        let dys = &dy[s * p * cout..(s + 1) * p * cout];
        let dwt = dws.as_deref_mut().unwrap_or(&mut *dw);
        mix_backward(p, d, taps, &col, dys, w, dwt, &mut dcol, skip);
        col2im(&dcol, d, g, skip, &mut dx[s * p * cin..(s + 1) * p * cin]);
    }
    if let Some(dws) = dws {
        add_from_split_rows(&dws, d, taps, dw);
    }
    dx
}
