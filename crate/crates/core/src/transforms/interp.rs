use crate::grid::GridField;

/// Tensor-product 4-point Lagrange interpolation with its gradient.
/// Stencils are shifted inward near the faces, so the interpolant is cubic
/// everywhere inside the grid box.
pub struct CubicInterpolator<'a> {
    field: &'a GridField,
    strides: Vec<usize>,
}

/// Weights and derivative weights of the 4-point Lagrange basis on nodes
/// 0, 1, 2, 3 at local coordinate `t`.
fn lagrange4(t: f64) -> ([f64; 4], [f64; 4]) {
    let mut w = [0.0; 4];
    let mut dw = [0.0; 4];
    for i in 0..4 {
        let mut p = 1.0;
        let mut denom = 1.0;
        for j in 0..4 {
            if j != i {
                p *= t - j as f64;
                denom *= i as f64 - j as f64;
            }
        }
        w[i] = p / denom;
        let mut d = 0.0;
        for k in 0..4 {
            if k == i {
                continue;
            }
            let mut q = 1.0;
            for j in 0..4 {
                if j != i && j != k {
                    q *= t - j as f64;
                }
            }
            d += q;
        }
        dw[i] = d / denom;
    }
    (w, dw)
}

impl<'a> CubicInterpolator<'a> {
    pub fn new(field: &'a GridField) -> Self {
        Self {
            field,
            strides: field.strides(),
        }
    }

    /// Whether `x` lies in the grid box (with a tiny tolerance).
    pub fn contains(&self, x: &[f64]) -> bool {
        let f = self.field;
        (0..f.n_dims()).all(|d| {
            let t = (x[d] - f.origin()[d]) / f.spacing();
            t >= -1e-9 && t <= (f.shape()[d] - 1) as f64 + 1e-9
        })
    }

    /// Value and gradient at `x`, or `None` outside the grid box.
    pub fn eval(&self, x: &[f64]) -> Option<(f64, Vec<f64>)> {
        if !self.contains(x) {
            return None;
        }
        let f = self.field;
        let n = f.n_dims();
        let h = f.spacing();
        let mut base = 0;
        let mut ws = Vec::with_capacity(n);
        for d in 0..n {
            let t = ((x[d] - f.origin()[d]) / h).clamp(0.0, (f.shape()[d] - 1) as f64);
            let start = (t.floor() as isize - 1).clamp(0, f.shape()[d] as isize - 4) as usize;
            ws.push(lagrange4(t - start as f64));
            base += start * self.strides[d];
        }
        let vals = f.values();
        let mut value = 0.0;
        let mut grad = vec![0.0; n];
        let total = 4usize.pow(n as u32);
        for idx in 0..total {
            let mut rest = idx;
            let mut k = base;
            let mut digits = [0usize; 3];
            for d in (0..n).rev() {
                digits[d] = rest % 4;
                rest /= 4;
                k += digits[d] * self.strides[d];
            }
            let v = vals[k];
            let mut w = 1.0;
            for d in 0..n {
                w *= ws[d].0[digits[d]];
            }
            value += w * v;
            for (g, gv) in grad.iter_mut().enumerate() {
                let mut wd = 1.0;
                for d in 0..n {
                    wd *= if d == g { ws[d].1[digits[d]] } else { ws[d].0[digits[d]] };
                }
                *gv += wd * v / h;
            }
        }
        Some((value, grad))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproduces_cubics_and_their_gradients() {
        let f = |x: &[f64]| x[0].powi(3) - 2.0 * x[0] * x[1] * x[1] + x[2] * x[2] * x[2] * 0.5 + 1.0;
        let g = GridField::cube(3, 7, 1.0, f).unwrap();
        let interp = CubicInterpolator::new(&g);
        for x in [[0.13, -0.71, 0.4], [-0.99, 0.99, 0.0], [0.5, 0.25, -0.8]] {
            let (v, gr) = interp.eval(&x).unwrap();
            assert!((v - f(&x)).abs() < 1e-12);
            let want = [3.0 * x[0] * x[0] - 2.0 * x[1] * x[1], -4.0 * x[0] * x[1], 1.5 * x[2] * x[2]];
            for d in 0..3 {
                assert!((gr[d] - want[d]).abs() < 1e-11);
            }
        }
        assert!(interp.eval(&[1.5, 0.0, 0.0]).is_none());
    }
}
