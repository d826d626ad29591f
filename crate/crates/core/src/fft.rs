//! One-dimensional FFT for arbitrary lengths and the row-column 2D transform.
//!
//! Power-of-two lengths use an iterative radix-2 transform; every other length
//! goes through Bluestein's chirp-z reformulation on a padded power-of-two
//! convolution. Both directions are unnormalized.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::ops::{Add, AddAssign, Mul, Sub};

use crate::math;

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub(crate) struct Complex {
    pub re: f64,
    pub im: f64,
}

impl Complex {
    pub const ZERO: Complex = Complex { re: 0.0, im: 0.0 };

    #[inline]
    pub fn new(re: f64, im: f64) -> Self {
        Self { re, im }
    }

    #[inline]
    pub fn conj(self) -> Self {
        Self::new(self.re, -self.im)
    }

    #[inline]
    pub fn scale(self, s: f64) -> Self {
        Self::new(self.re * s, self.im * s)
    }

    /// `exp(i * theta)`
    #[inline]
    pub fn cis(theta: f64) -> Self {
        let (s, c) = math::sin_cos(theta);
        Self::new(c, s)
    }
}

impl Add for Complex {
    type Output = Complex;
    #[inline]
    fn add(self, o: Complex) -> Complex {
        Complex::new(self.re + o.re, self.im + o.im)
    }
}

impl AddAssign for Complex {
    #[inline]
    fn add_assign(&mut self, o: Complex) {
        self.re += o.re;
        self.im += o.im;
    }
}

impl Sub for Complex {
    type Output = Complex;
    #[inline]
    fn sub(self, o: Complex) -> Complex {
        Complex::new(self.re - o.re, self.im - o.im)
    }
}

impl Mul for Complex {
    type Output = Complex;
    #[inline]
    fn mul(self, o: Complex) -> Complex {
        Complex::new(
            self.re * o.re - self.im * o.im,
            self.re * o.im + self.im * o.re,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Direction {
    Forward,
    Inverse,
}

struct Radix2 {
    n: usize,
    /// `exp(-2 pi i k / n)` for `k < n / 2`.
    twiddles: Vec<Complex>,
}

impl Radix2 {
    fn new(n: usize) -> Self {
        debug_assert!(n.is_power_of_two());
        let twiddles = (0..n / 2)
            .map(|k| Complex::cis(-2.0 * PI * k as f64 / n as f64))
            .collect();
        Self { n, twiddles }
    }

    fn forward(&self, buf: &mut [Complex]) {
        let n = self.n;
        if n <= 1 {
            return;
        }
        let bits = n.trailing_zeros();
        for i in 0..n {
            let j = i.reverse_bits() >> (usize::BITS - bits);
            if j > i {
                buf.swap(i, j);
            }
        }
        let mut len = 2;
        while len <= n {
            let half = len / 2;
            let stride = n / len;
            for start in (0..n).step_by(len) {
                for k in 0..half {
                    let w = self.twiddles[k * stride];
                    let a = buf[start + k];
                    let b = buf[start + k + half] * w;
                    buf[start + k] = a + b;
                    buf[start + k + half] = a - b;
                }
            }
            len <<= 1;
        }
    }
}

struct Bluestein {
    n: usize,
    m: usize,
    /// `exp(-i pi k^2 / n)`
    chirp: Vec<Complex>,
    /// Forward transform of the conjugate chirp, padded to `m`.
    kernel_hat: Vec<Complex>,
    inner: Radix2,
}

impl Bluestein {
    fn new(n: usize) -> Self {
        let m = (2 * n - 1).next_power_of_two();
        let two_n = 2 * n as u64;
        let chirp: Vec<Complex> = (0..n as u64)
            .map(|k| {
                // k^2 mod 2n keeps the angle small and exact.
                let q = (k * k) % two_n;
                Complex::cis(-PI * q as f64 / n as f64)
            })
            .collect();
        let mut kernel = vec![Complex::ZERO; m];
        kernel[0] = chirp[0].conj();
        for k in 1..n {
            kernel[k] = chirp[k].conj();
            kernel[m - k] = chirp[k].conj();
        }
        let inner = Radix2::new(m);
        inner.forward(&mut kernel);
        Self {
            n,
            m,
            chirp,
            kernel_hat: kernel,
            inner,
        }
    }

    fn forward(&self, buf: &mut [Complex]) {
        let mut work = vec![Complex::ZERO; self.m];
        for k in 0..self.n {
            work[k] = buf[k] * self.chirp[k];
        }
        self.inner.forward(&mut work);
        for (w, k) in work.iter_mut().zip(&self.kernel_hat) {
            *w = *w * *k;
        }
        // Inverse via conjugation, then 1/m.
        for w in work.iter_mut() {
            *w = w.conj();
        }
        self.inner.forward(&mut work);
        let inv_m = 1.0 / self.m as f64;
        for k in 0..self.n {
            buf[k] = work[k].conj().scale(inv_m) * self.chirp[k];
        }
    }
}

enum Plan {
    Radix2(Radix2),
    Bluestein(Bluestein),
}

/// A reusable 1D transform of fixed length.
pub(crate) struct Fft1d {
    plan: Plan,
}

impl Fft1d {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "transform length must be positive");
        let plan = if n.is_power_of_two() {
            Plan::Radix2(Radix2::new(n))
        } else {
            Plan::Bluestein(Bluestein::new(n))
        };
        Self { plan }
    }

    /// Unnormalized transform in place. `Inverse` uses `exp(+i ...)`.
    pub fn process(&self, buf: &mut [Complex], dir: Direction) {
        if dir == Direction::Inverse {
            for v in buf.iter_mut() {
                *v = v.conj();
            }
        }
        match &self.plan {
            Plan::Radix2(p) => p.forward(buf),
            Plan::Bluestein(p) => p.forward(buf),
        }
        if dir == Direction::Inverse {
            for v in buf.iter_mut() {
                *v = v.conj();
            }
        }
    }
}

/// Unnormalized row-column 2D transform of a row-major `height x width` buffer.
pub(crate) fn fft2(height: usize, width: usize, buf: &mut [Complex], dir: Direction) {
    debug_assert_eq!(buf.len(), height * width);
    if width > 1 {
        let rows = Fft1d::new(width);
        for row in buf.chunks_exact_mut(width) {
            rows.process(row, dir);
        }
    }
    if height > 1 {
        let cols = Fft1d::new(height);
        let mut column = vec![Complex::ZERO; height];
        for c in 0..width {
            for r in 0..height {
                column[r] = buf[r * width + c];
            }
            cols.process(&mut column, dir);
            for r in 0..height {
                buf[r * width + c] = column[r];
            }
        }
    }
}
