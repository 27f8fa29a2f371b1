//! Dense complex matrices and complex numbers over a [`Real`] scalar.

use num_complex::Complex64;
use std::ops::{Add, Mul, Sub};

use super::tape::Real;
use crate::error::{CoreError, Result};

/// Row-major dense complex matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        CMatrix {
            rows,
            cols,
            data: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(CoreError::Shape(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(CMatrix { rows, cols, data })
    }

    pub fn column(data: Vec<Complex64>) -> Self {
        let rows = data.len();
        CMatrix {
            rows,
            cols: 1,
            data,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: Complex64) {
        self.data[r * self.cols + c] = v;
    }

    /// Conjugate transpose.
    pub fn hermitian(&self) -> CMatrix {
        let mut out = CMatrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.set(c, r, self.get(r, c).conj());
            }
        }
        out
    }

    pub fn transpose(&self) -> CMatrix {
        let mut out = CMatrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.set(c, r, self.get(r, c));
            }
        }
        out
    }

    pub fn matmul(&self, rhs: &CMatrix) -> Result<CMatrix> {
        if self.cols != rhs.rows {
            return Err(CoreError::Shape(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = CMatrix::zeros(self.rows, rhs.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(r, k);
                for c in 0..rhs.cols {
                    out.data[r * rhs.cols + c] += a * rhs.get(k, c);
                }
            }
        }
        Ok(out)
    }

    pub fn scale(&mut self, s: f64) {
        for z in &mut self.data {
            *z *= s;
        }
    }

    /// `‖A‖_F² = Tr(A Aᴴ)`.
    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn frobenius(&self) -> f64 {
        self.frobenius_sq().sqrt()
    }
}

/// `|hᴴ p|²` for two columns of equal length.
pub fn hermitian_quadratic(h: &CMatrix, p: &CMatrix) -> Result<f64> {
    if h.cols != 1 || p.cols != 1 || h.rows != p.rows {
        return Err(CoreError::Shape(format!(
            "hermitian_quadratic needs equal-length columns, got {}x{} and {}x{}",
            h.rows, h.cols, p.rows, p.cols
        )));
    }
    let hs: Vec<Cx<f64>> = h.data.iter().map(|&z| Cx::from(z)).collect();
    let ps: Vec<Cx<f64>> = p.data.iter().map(|&z| Cx::from(z)).collect();
    Ok(inner_product(&hs, &ps).norm_sqr())
}

/// Complex number whose parts are [`Real`] scalars.
#[derive(Clone, Copy, Debug)]
pub struct Cx<S> {
    pub re: S,
    pub im: S,
}

impl<S: Real> Cx<S> {
    pub fn new(re: S, im: S) -> Self {
        Cx { re, im }
    }

    pub fn conj(self) -> Self {
        Cx {
            re: self.re,
            im: -self.im,
        }
    }

    pub fn norm_sqr(self) -> S {
        self.re * self.re + self.im * self.im
    }

    pub fn scale(self, s: S) -> Self {
        Cx {
            re: self.re * s,
            im: self.im * s,
        }
    }

    /// Product with a constant complex number.
    pub fn mul_const(self, z: Complex64) -> Self {
        Cx {
            re: self.re * z.re - self.im * z.im,
            im: self.re * z.im + self.im * z.re,
        }
    }

    /// `conj(self) * rhs`.
    pub fn conj_mul(self, rhs: Self) -> Self {
        Cx {
            re: self.re * rhs.re + self.im * rhs.im,
            im: self.re * rhs.im - self.im * rhs.re,
        }
    }

    pub fn value(self) -> Complex64 {
        Complex64::new(self.re.value(), self.im.value())
    }
}

impl From<Complex64> for Cx<f64> {
    fn from(z: Complex64) -> Self {
        Cx { re: z.re, im: z.im }
    }
}

impl<S: Real> Add for Cx<S> {
    type Output = Cx<S>;
    fn add(self, rhs: Self) -> Self {
        Cx {
            re: self.re + rhs.re,
            im: self.im + rhs.im,
        }
    }
}

impl<S: Real> Sub for Cx<S> {
    type Output = Cx<S>;
    fn sub(self, rhs: Self) -> Self {
        Cx {
            re: self.re - rhs.re,
            im: self.im - rhs.im,
        }
    }
}

impl<S: Real> Mul for Cx<S> {
    type Output = Cx<S>;
    fn mul(self, rhs: Self) -> Self {
        Cx {
            re: self.re * rhs.re - self.im * rhs.im,
            im: self.re * rhs.im + self.im * rhs.re,
        }
    }
}

/// `hᴴ p = Σ_i conj(h_i) p_i`. Slices must be non-empty and equally long.
pub fn inner_product<S: Real>(h: &[Cx<S>], p: &[Cx<S>]) -> Cx<S> {
    debug_assert_eq!(h.len(), p.len());
    let mut acc = h[0].conj_mul(p[0]);
    for (a, b) in h.iter().zip(p).skip(1) {
        acc = acc + a.conj_mul(*b);
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::tape::Tape;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn quadratic_identity_cases() {
        let h = CMatrix::column(vec![c(1.0, 0.0), c(0.0, 0.0)]);
        assert_eq!(hermitian_quadratic(&h, &h).unwrap(), 1.0);
        let j = CMatrix::column(vec![c(0.0, 1.0), c(0.0, 0.0)]);
        assert_eq!(hermitian_quadratic(&j, &j).unwrap(), 1.0);
    }

    #[test]
    fn quadratic_shape_error() {
        let a = CMatrix::column(vec![c(1.0, 0.0)]);
        let b = CMatrix::column(vec![c(1.0, 0.0), c(1.0, 0.0)]);
        assert!(matches!(
            hermitian_quadratic(&a, &b),
            Err(CoreError::Shape(_))
        ));
    }

    #[test]
    fn quadratic_matches_scalar_expansion() {
        // Written out with real arithmetic only.
        let h = [(0.3, -1.2), (0.7, 0.1), (-0.4, 0.9), (1.5, 0.2)];
        let p = [(-0.8, 0.5), (0.2, 0.2), (1.1, -0.6), (0.0, 0.4)];
        let (mut sr, mut si) = (0.0, 0.0);
        for ((hr, hi), (pr, pi)) in h.iter().zip(&p) {
            // (hr - j hi)(pr + j pi)
            sr += hr * pr + hi * pi;
            si += hr * pi - hi * pr;
        }
        let expected = sr * sr + si * si;
        let hm = CMatrix::column(h.iter().map(|&(a, b)| c(a, b)).collect());
        let pm = CMatrix::column(p.iter().map(|&(a, b)| c(a, b)).collect());
        let got = hermitian_quadratic(&hm, &pm).unwrap();
        assert!((got - expected).abs() < 1e-14);
    }

    #[test]
    fn quadratic_gradient_matches_finite_differences() {
        let hv = [0.3, -1.2, 0.7, 0.1];
        let pv = [-0.8, 0.5, 0.2, 0.2];
        let eval = |x: &[f64]| {
            let h: Vec<Cx<f64>> = (0..2).map(|i| Cx::new(x[2 * i], x[2 * i + 1])).collect();
            let p: Vec<Cx<f64>> = (0..2)
                .map(|i| Cx::new(x[4 + 2 * i], x[5 + 2 * i]))
                .collect();
            inner_product(&h, &p).norm_sqr()
        };
        let x0: Vec<f64> = hv.iter().chain(&pv).copied().collect();
        let tape = Tape::new();
        let leaves = tape.vars(&x0);
        let h: Vec<_> = (0..2)
            .map(|i| Cx::new(leaves[2 * i], leaves[2 * i + 1]))
            .collect();
        let p: Vec<_> = (0..2)
            .map(|i| Cx::new(leaves[4 + 2 * i], leaves[5 + 2 * i]))
            .collect();
        let root = inner_product(&h, &p).norm_sqr();
        let g = tape.backward(root, &leaves);
        for i in 0..x0.len() {
            let mut xp = x0.clone();
            let mut xm = x0.clone();
            xp[i] += 1e-6;
            xm[i] -= 1e-6;
            let fd = (eval(&xp) - eval(&xm)) / 2e-6;
            assert!((fd - g[i]).abs() <= 1e-6 * (1.0 + fd.abs()), "{i}: {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn hermitian_is_involution() {
        let m = CMatrix::from_vec(2, 3, (0..6).map(|i| c(i as f64, -(i as f64) * 0.5)).collect())
            .unwrap();
        assert_eq!(m.hermitian().hermitian(), m);
        assert_eq!(CMatrix::zeros(3, 2).frobenius(), 0.0);
    }

    fn arb_vec(n: usize) -> impl Strategy<Value = Vec<(f64, f64)>> {
        prop::collection::vec((-3.0..3.0f64, -3.0..3.0f64), n)
    }

    proptest! {
        #[test]
        fn quadratic_symmetric_and_phase_invariant(
            h in arb_vec(4), p in arb_vec(4), phase in -3.2..3.2f64
        ) {
            let hm = CMatrix::column(h.iter().map(|&(a, b)| c(a, b)).collect());
            let pm = CMatrix::column(p.iter().map(|&(a, b)| c(a, b)).collect());
            let q = hermitian_quadratic(&hm, &pm).unwrap();
            let qs = hermitian_quadratic(&pm, &hm).unwrap();
            prop_assert!((q - qs).abs() <= 1e-12 * (1.0 + q));
            let rot = Complex64::from_polar(1.0, phase);
            let pr = CMatrix::column(pm.as_slice().iter().map(|z| z * rot).collect());
            let qr = hermitian_quadratic(&hm, &pr).unwrap();
            prop_assert!((q - qr).abs() <= 1e-10 * (1.0 + q));
        }

        #[test]
        fn frobenius_nonnegative(v in arb_vec(6)) {
            let m = CMatrix::from_vec(2, 3, v.iter().map(|&(a, b)| c(a, b)).collect()).unwrap();
            let f = m.frobenius();
            prop_assert!(f >= 0.0);
            prop_assert_eq!(f == 0.0, v.iter().all(|&(a, b)| a == 0.0 && b == 0.0));
        }
    }
}
