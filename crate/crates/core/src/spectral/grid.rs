use std::fmt;
use std::sync::Arc;

use num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::scalar::Real;

struct Plan<T: Real> {
    forward: Arc<dyn Fft<T>>,
    inverse: Arc<dyn Fft<T>>,
}

/// Periodic grid `[0, L)^d` with `n` nodes per axis, `d` in {1, 2}.
///
/// Node `(i0, i1)` is stored at `i0 * n + i1` (row-major, axis 0 slowest).
/// Spectral index `j` on an axis carries the integer mode `j` for `j <= n/2`
/// and `j - n` otherwise, so the lattice is `{-n/2+1, ..., n/2}`; the
/// unmatched `+n/2` entry is the Nyquist mode.
#[derive(Clone)]
pub struct TorusGrid<T: Real> {
    dim: usize,
    n: usize,
    length: T,
    plan: Arc<Plan<T>>,
}

impl<T: Real> fmt::Debug for TorusGrid<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TorusGrid")
            .field("dim", &self.dim)
            .field("n", &self.n)
            .field("length", &self.length)
            .finish()
    }
}

impl<T: Real> PartialEq for TorusGrid<T> {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.n == other.n && self.length == other.length
    }
}

impl<T: Real> TorusGrid<T> {
    pub fn new(dim: usize, n: usize, length: T) -> Result<Self> {
        if !(1..=2).contains(&dim) {
            return Err(Error::InvalidGrid(format!("dimension {dim} not in {{1, 2}}")));
        }
        if n < 8 || n % 2 != 0 {
            return Err(Error::InvalidGrid(format!("n = {n} must be even and at least 8")));
        }
        if !(length.is_finite() && length > T::zero()) {
            return Err(Error::InvalidGrid(format!("period {length} must be positive")));
        }
        let mut planner = FftPlanner::new();
        let plan = Plan {
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        };
        Ok(Self { dim, n, length, plan: Arc::new(plan) })
    }

    /// Grid with period `2π` on every axis.
    pub fn periodic(dim: usize, n: usize) -> Result<Self> {
        Self::new(dim, n, T::TAU())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn length(&self) -> T {
        self.length
    }

    /// Number of nodes, `n^d`.
    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> T {
        self.length / T::from_usize_lossy(self.n)
    }

    /// Quadrature weight of one node.
    pub fn cell_volume(&self) -> T {
        self.spacing().powi(self.dim as i32)
    }

    /// Total volume `L^d`.
    pub fn volume(&self) -> T {
        self.length.powi(self.dim as i32)
    }

    /// Step between neighbouring lattice frequencies, `2π / L`.
    pub fn frequency_step(&self) -> T {
        T::TAU() / self.length
    }

    /// Per-axis indices of flat index `idx` (axis 1 is 0 when `d = 1`).
    pub fn split(&self, idx: usize) -> [usize; 2] {
        if self.dim == 1 {
            [idx, 0]
        } else {
            [idx / self.n, idx % self.n]
        }
    }

    pub fn coordinate(&self, i: usize) -> T {
        T::from_usize_lossy(i) * self.spacing()
    }

    /// Physical coordinates of node `idx`.
    pub fn node(&self, idx: usize) -> [T; 2] {
        let [i0, i1] = self.split(idx);
        [self.coordinate(i0), if self.dim == 2 { self.coordinate(i1) } else { T::zero() }]
    }

    /// Signed integer mode of axis index `j`.
    pub fn mode(&self, j: usize) -> i64 {
        if j <= self.n / 2 {
            j as i64
        } else {
            j as i64 - self.n as i64
        }
    }

    pub fn is_nyquist_index(&self, j: usize) -> bool {
        j == self.n / 2
    }

    /// True when any axis of spectral index `idx` is the Nyquist mode.
    pub fn touches_nyquist(&self, idx: usize) -> bool {
        let [j0, j1] = self.split(idx);
        self.is_nyquist_index(j0) || (self.dim == 2 && self.is_nyquist_index(j1))
    }

    /// Wavevector `ξ` of spectral index `idx` (unused components are 0).
    pub fn xi(&self, idx: usize) -> [T; 2] {
        let [j0, j1] = self.split(idx);
        let step = self.frequency_step();
        let k0 = T::from_i64(self.mode(j0)).unwrap() * step;
        let k1 = if self.dim == 2 { T::from_i64(self.mode(j1)).unwrap() * step } else { T::zero() };
        [k0, k1]
    }

    /// Wavevector used by derivative multipliers: Nyquist components zeroed.
    pub fn derivative_xi(&self, idx: usize) -> [T; 2] {
        let [j0, j1] = self.split(idx);
        let mut xi = self.xi(idx);
        if self.is_nyquist_index(j0) {
            xi[0] = T::zero();
        }
        if self.dim == 2 && self.is_nyquist_index(j1) {
            xi[1] = T::zero();
        }
        xi
    }

    /// Largest retained integer mode under the 2/3 rule.
    pub fn dealias_cutoff(&self) -> usize {
        self.n / 3
    }

    /// Whether spectral index `idx` survives the 2/3 rule.
    pub fn dealias_keeps(&self, idx: usize) -> bool {
        let cut = self.dealias_cutoff() as i64;
        let [j0, j1] = self.split(idx);
        self.mode(j0).abs() <= cut && (self.dim == 1 || self.mode(j1).abs() <= cut)
    }

    /// Flat spectral index of the integer mode vector `m` (modes reduced mod n).
    pub fn index_of_mode(&self, m: [i64; 2]) -> usize {
        let n = self.n as i64;
        let j0 = m[0].rem_euclid(n) as usize;
        if self.dim == 1 {
            j0
        } else {
            j0 * self.n + m[1].rem_euclid(n) as usize
        }
    }

    /// Unnormalized forward DFT in place, `F_k = Σ f_x e^{-i k x}`.
    pub fn fft_forward(&self, buf: &mut [Complex<T>]) {
        self.transform(buf, &self.plan.forward);
    }

    /// Unnormalized inverse DFT in place, `f_x = Σ F_k e^{i k x}`.
    pub fn fft_inverse(&self, buf: &mut [Complex<T>]) {
        self.transform(buf, &self.plan.inverse);
    }

    fn transform(&self, buf: &mut [Complex<T>], fft: &Arc<dyn Fft<T>>) {
        assert_eq!(buf.len(), self.len(), "buffer length does not match grid");
        if self.dim == 1 {
            fft.process(buf);
            return;
        }
        let n = self.n;
        // rows (axis 1), then columns (axis 0) via transpose
        fft.process(buf);
        let mut tmp = vec![Complex::new(T::zero(), T::zero()); buf.len()];
        transpose(buf, &mut tmp, n);
        fft.process(&mut tmp);
        transpose(&tmp, buf, n);
    }
}

fn transpose<T: Copy>(src: &[T], dst: &mut [T], n: usize) {
    for i in 0..n {
        for j in 0..n {
            dst[j * n + i] = src[i * n + j];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_sizes() {
        assert!(TorusGrid::<f64>::periodic(1, 6).is_err());
        assert!(TorusGrid::<f64>::periodic(1, 9).is_err());
        assert!(TorusGrid::<f64>::periodic(3, 16).is_err());
        assert!(TorusGrid::<f64>::new(1, 16, -1.0).is_err());
        // non powers of two are allowed as long as n is even
        assert!(TorusGrid::<f64>::periodic(2, 48).is_ok());
    }

    #[test]
    fn lattice_layout() {
        let g = TorusGrid::<f64>::periodic(1, 8).unwrap();
        let modes: Vec<i64> = (0..8).map(|j| g.mode(j)).collect();
        assert_eq!(modes, vec![0, 1, 2, 3, 4, -3, -2, -1]);
        assert!(g.touches_nyquist(4));
        assert_eq!(g.derivative_xi(4)[0], 0.0);
        assert_eq!(g.xi(5)[0], -3.0);
        assert_eq!(g.index_of_mode([-1, 0]), 7);
    }

    #[test]
    fn two_dimensional_fft_matches_direct_sum() {
        let g = TorusGrid::<f64>::periodic(2, 8).unwrap();
        let vals: Vec<Complex<f64>> =
            (0..64).map(|i| Complex::new((i as f64 * 0.37).sin(), (i as f64).cos() * 0.1)).collect();
        let mut buf = vals.clone();
        g.fft_forward(&mut buf);
        for k in [0usize, 3, 17, 63] {
            let [k0, k1] = g.split(k);
            let mut acc = Complex::new(0.0, 0.0);
            for (x, v) in vals.iter().enumerate() {
                let [x0, x1] = g.split(x);
                let ph = -std::f64::consts::TAU * ((k0 * x0 + k1 * x1) as f64) / 8.0;
                acc += v * Complex::new(ph.cos(), ph.sin());
            }
            assert!((acc - buf[k]).norm() < 1e-12);
        }
        g.fft_inverse(&mut buf);
        for (a, b) in buf.iter().zip(&vals) {
            assert!((a / 64.0 - b).norm() < 1e-14);
        }
    }
}
