//! Dense kernels shared by the forward and backward passes.

/// Logical view of a row-major matrix, optionally transposed.
#[derive(Clone, Copy)]
pub(crate) struct MatRef<'a> {
    pub data: &'a [f64],
    pub rows: usize,
    pub cols: usize,
    pub trans: bool,
}

impl<'a> MatRef<'a> {
    pub fn new(data: &'a [f64], rows: usize, cols: usize) -> Self {
        MatRef { data, rows, cols, trans: false }
    }

    /// View of the transpose of a row-major `rows x cols` buffer.
    pub fn t(data: &'a [f64], rows: usize, cols: usize) -> Self {
        MatRef { data, rows: cols, cols: rows, trans: true }
    }

    fn strides(&self) -> (isize, isize) {
        if self.trans {
            (1, self.rows as isize)
        } else {
            (self.cols as isize, 1)
        }
    }
}

/// `c = a * b + beta * c` for a row-major `c`.
pub(crate) fn gemm(a: MatRef<'_>, b: MatRef<'_>, beta: f64, c: &mut [f64]) {
    assert_eq!(a.cols, b.rows);
    assert_eq!(a.data.len(), a.rows * a.cols);
    assert_eq!(b.data.len(), b.rows * b.cols);
    assert_eq!(c.len(), a.rows * b.cols);
    let (rsa, csa) = a.strides();
    let (rsb, csb) = b.strides();
    // SAFETY: the asserts above pin every buffer to the extent implied by
    // its dimensions and strides, and `c` does not alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            a.rows,
            a.cols,
            b.cols,
            1.0,
            a.data.as_ptr(),
            rsa,
            csa,
            b.data.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            b.cols as isize,
            1,
        );
    }
}

/// Geometry of a batched same-padding 2-D cross-correlation.
#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeom {
    pub batch: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub h: usize,
    pub w: usize,
    pub kh: usize,
    pub kw: usize,
}

impl ConvGeom {
    fn pad(&self) -> (isize, isize) {
        ((self.kh / 2) as isize, (self.kw / 2) as isize)
    }

    /// Output column range `[lo, hi)` for which input column `x + dx - pad` is valid.
    fn span(dx: usize, pad: isize, len: usize) -> (usize, usize) {
        let off = dx as isize - pad;
        let lo = (-off).max(0) as usize;
        let hi = ((len as isize - off).min(len as isize)).max(0) as usize;
        (lo, hi.max(lo))
    }
}

pub(crate) fn conv2d_forward(g: ConvGeom, x: &[f64], k: &[f64], out: &mut [f64]) {
    let (ph, pw) = g.pad();
    let plane = g.h * g.w;
    for b in 0..g.batch {
        for co in 0..g.c_out {
            let o = &mut out[(b * g.c_out + co) * plane..][..plane];
            for ci in 0..g.c_in {
                let xin = &x[(b * g.c_in + ci) * plane..][..plane];
                for dy in 0..g.kh {
                    let (ylo, yhi) = ConvGeom::span(dy, ph, g.h);
                    for dx in 0..g.kw {
                        let wgt = k[((co * g.c_in + ci) * g.kh + dy) * g.kw + dx];
                        if wgt == 0.0 {
                            continue;
                        }
                        let (xlo, xhi) = ConvGeom::span(dx, pw, g.w);
                        let oy = dy as isize - ph;
                        let ox = dx as isize - pw;
                        for y in ylo..yhi {
                            let src_row = (y as isize + oy) as usize * g.w;
                            let orow = &mut o[y * g.w..][..g.w];
                            for xx in xlo..xhi {
                                orow[xx] += wgt * xin[src_row + (xx as isize + ox) as usize];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Accumulates input and kernel gradients given the output gradient.
pub(crate) fn conv2d_backward(
    g: ConvGeom,
    x: &[f64],
    k: &[f64],
    grad_out: &[f64],
    grad_x: Option<&mut [f64]>,
    grad_k: Option<&mut [f64]>,
) {
    let (ph, pw) = g.pad();
    let plane = g.h * g.w;
    let mut gx = grad_x;
    let mut gk = grad_k;
    for b in 0..g.batch {
        for co in 0..g.c_out {
            let go = &grad_out[(b * g.c_out + co) * plane..][..plane];
            for ci in 0..g.c_in {
                let xoff = (b * g.c_in + ci) * plane;
                for dy in 0..g.kh {
                    let (ylo, yhi) = ConvGeom::span(dy, ph, g.h);
                    let oy = dy as isize - ph;
                    for dx in 0..g.kw {
                        let (xlo, xhi) = ConvGeom::span(dx, pw, g.w);
                        let ox = dx as isize - pw;
                        let kidx = ((co * g.c_in + ci) * g.kh + dy) * g.kw + dx;
                        let wgt = k[kidx];
                        let mut acc = 0.0;
                        for y in ylo..yhi {
                            let src_row = xoff + (y as isize + oy) as usize * g.w;
                            let grow = &go[y * g.w..][..g.w];
                            if let Some(gx) = gx.as_deref_mut() {
                                for xx in xlo..xhi {
                                    gx[src_row + (xx as isize + ox) as usize] += wgt * grow[xx];
                                }
                            }
                            for xx in xlo..xhi {
                                acc += grow[xx] * x[src_row + (xx as isize + ox) as usize];
                            }
                        }
                        if let Some(gk) = gk.as_deref_mut() {
                            gk[kidx] += acc;
                        }
                    }
                }
            }
        }
    }
}
