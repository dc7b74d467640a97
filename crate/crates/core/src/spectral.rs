//! Fourier collocation operators on the periodic square.
//!
//! Coefficients are Fourier amplitudes: `f(x, y) = Σ c(k, l) e^{i(kx + ly)}`,
//! so a constant field `c` has `c(0, 0) = c` and `cos x` has `c(±1, 0) = ½`.
//! First derivatives drop the unmatched `−N/2` mode so derivatives of real
//! data stay real. The Laplacian uses the full symbol `−(k² + l²)`; the
//! composite `div ∘ grad` therefore differs from it only on Nyquist modes.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::field::{Grid, ScalarField, VectorField};
use crate::krylov::{self, KrylovStats};
use crate::par::Execution;

/// Relative tolerance on ⟨f, 1⟩ / ‖f‖ accepted by the zero-mean solvers.
pub const MEAN_TOLERANCE: f64 = 1e-10;

/// Below this grid size row FFTs always run sequentially.
const PARALLEL_MIN_N: usize = 128;

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralCoeffs {
    grid: Grid,
    data: Vec<Complex64>,
}

impl SpectralCoeffs {
    pub fn zeros(grid: Grid) -> Self {
        SpectralCoeffs {
            grid,
            data: vec![Complex64::new(0.0, 0.0); grid.len()],
        }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    /// Raw storage in FFT order, `data[a * N + b]` ↔ `(wavenumber(a), wavenumber(b))`.
    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    fn index(&self, k: i64) -> usize {
        let n = self.grid.n() as i64;
        assert!(
            (-n / 2..n / 2).contains(&k),
            "wavenumber {k} outside [-N/2, N/2)"
        );
        k.rem_euclid(n) as usize
    }

    /// Coefficient of mode `(k, l)` with `k, l ∈ [−N/2, N/2)`.
    pub fn get(&self, k: i64, l: i64) -> Complex64 {
        self.data[self.index(k) * self.grid.n() + self.index(l)]
    }

    pub fn set(&mut self, k: i64, l: i64, value: Complex64) {
        let idx = self.index(k) * self.grid.n() + self.index(l);
        self.data[idx] = value;
    }
}

/// Transform plans and wavenumber tables for one grid.
///
/// Immutable after construction and safe to share across threads.
#[derive(Clone)]
pub struct Spectral {
    grid: Grid,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    exec: Execution,
    /// Full wavenumbers, used by the Laplacian.
    k_full: Vec<f64>,
    /// Wavenumbers with the −N/2 entry zeroed, used by first derivatives.
    k_deriv: Vec<f64>,
    padded: Option<Arc<Spectral>>,
}

impl std::fmt::Debug for Spectral {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Spectral")
            .field("n", &self.grid.n())
            .field("exec", &self.exec)
            .field("dealias", &self.padded.is_some())
            .finish()
    }
}

impl Spectral {
    pub fn new(grid: Grid) -> Self {
        Self::with_options(grid, Execution::default(), false)
    }

    /// `dealias` enables 3/2-rule padding for [`Spectral::product`].
    pub fn with_options(grid: Grid, exec: Execution, dealias: bool) -> Self {
        let n = grid.n();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let k_full: Vec<f64> = (0..n).map(|a| grid.wavenumber(a) as f64).collect();
        let k_deriv = k_full
            .iter()
            .enumerate()
            .map(|(a, &k)| if a == n / 2 { 0.0 } else { k })
            .collect();
        let padded = dealias.then(|| {
            let m = (3 * n / 2 + 1) & !1;
            Arc::new(Spectral::with_options(
                Grid::new(m).expect("padded grid is even and >= 6"),
                exec,
                false,
            ))
        });
        Spectral {
            grid,
            forward,
            inverse,
            exec,
            k_full,
            k_deriv,
            padded,
        }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn execution(&self) -> Execution {
        self.exec
    }

    pub fn dealias(&self) -> bool {
        self.padded.is_some()
    }

    fn check(&self, f: &ScalarField) {
        assert_eq!(f.grid(), self.grid, "field grid does not match operator grid");
    }

    fn fft_rows(&self, buf: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.grid.n();
        let exec = if n >= PARALLEL_MIN_N {
            self.exec
        } else {
            Execution::Sequential
        };
        let rows = (n / exec.threads().max(1)).max(1);
        exec.for_each_chunk_mut(buf, rows * n, |blk| plan.process(blk));
    }

    fn transpose(&self, buf: &mut [Complex64]) {
        let n = self.grid.n();
        for i in 0..n {
            for j in i + 1..n {
                buf.swap(i * n + j, j * n + i);
            }
        }
    }

    fn fft2(&self, buf: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        self.fft_rows(buf, plan);
        self.transpose(buf);
        self.fft_rows(buf, plan);
        self.transpose(buf);
    }

    pub fn transform(&self, f: &ScalarField) -> Result<SpectralCoeffs> {
        self.grid.check(&f.grid())?;
        Ok(self.forward_unchecked(f))
    }

    fn forward_unchecked(&self, f: &ScalarField) -> SpectralCoeffs {
        let scale = 1.0 / self.grid.len() as f64;
        let mut data: Vec<Complex64> = f
            .values()
            .iter()
            .map(|&v| Complex64::new(v, 0.0))
            .collect();
        self.fft2(&mut data, &self.forward);
        data.iter_mut().for_each(|c| *c *= scale);
        SpectralCoeffs {
            grid: self.grid,
            data,
        }
    }

    pub fn inverse_transform(&self, c: &SpectralCoeffs) -> Result<ScalarField> {
        self.grid.check(&c.grid)?;
        Ok(self.inverse_owned(c.data.clone()))
    }

    fn inverse_owned(&self, mut data: Vec<Complex64>) -> ScalarField {
        self.fft2(&mut data, &self.inverse);
        ScalarField::from_values_unchecked(self.grid, data.iter().map(|c| c.re).collect())
    }

    /// Multiplies mode `(a, b)` (storage indices) by `symbol(a, b)` and transforms back.
    fn apply_symbol(&self, f: &ScalarField, symbol: impl Fn(usize, usize) -> Complex64) -> ScalarField {
        self.check(f);
        let n = self.grid.n();
        let mut c = self.forward_unchecked(f);
        for (idx, v) in c.data.iter_mut().enumerate() {
            *v *= symbol(idx / n, idx % n);
        }
        self.inverse_owned(c.data)
    }

    pub fn ddx(&self, f: &ScalarField) -> ScalarField {
        self.apply_symbol(f, |a, _| Complex64::new(0.0, self.k_deriv[a]))
    }

    pub fn ddy(&self, f: &ScalarField) -> ScalarField {
        self.apply_symbol(f, |_, b| Complex64::new(0.0, self.k_deriv[b]))
    }

    pub fn grad(&self, f: &ScalarField) -> VectorField {
        self.check(f);
        let n = self.grid.n();
        let c = self.forward_unchecked(f);
        let mut cx = c.data.clone();
        let mut cy = c.data;
        for idx in 0..cx.len() {
            cx[idx] *= Complex64::new(0.0, self.k_deriv[idx / n]);
            cy[idx] *= Complex64::new(0.0, self.k_deriv[idx % n]);
        }
        VectorField {
            x: self.inverse_owned(cx),
            y: self.inverse_owned(cy),
        }
    }

    pub fn div(&self, v: &VectorField) -> ScalarField {
        self.check(&v.x);
        self.check(&v.y);
        let n = self.grid.n();
        let cx = self.forward_unchecked(&v.x);
        let cy = self.forward_unchecked(&v.y);
        let data = cx
            .data
            .iter()
            .zip(&cy.data)
            .enumerate()
            .map(|(idx, (a, b))| {
                Complex64::new(0.0, self.k_deriv[idx / n]) * a
                    + Complex64::new(0.0, self.k_deriv[idx % n]) * b
            })
            .collect();
        self.inverse_owned(data)
    }

    pub fn laplacian(&self, f: &ScalarField) -> ScalarField {
        self.apply_symbol(f, |a, b| {
            Complex64::new(-(self.k_full[a].powi(2) + self.k_full[b].powi(2)), 0.0)
        })
    }

    /// Discrete inner product Σ w u v with w = (2π/N)².
    pub fn inner_product(&self, u: &ScalarField, v: &ScalarField) -> f64 {
        self.check(u);
        self.check(v);
        self.grid.weight() * krylov::dot(u.values(), v.values())
    }

    pub fn norm(&self, u: &ScalarField) -> f64 {
        self.inner_product(u, u).sqrt()
    }

    pub fn vector_inner_product(&self, u: &VectorField, v: &VectorField) -> f64 {
        self.inner_product(&u.x, &v.x) + self.inner_product(&u.y, &v.y)
    }

    pub fn vector_norm(&self, u: &VectorField) -> f64 {
        self.vector_inner_product(u, u).sqrt()
    }

    /// Product of two fields: pointwise on the grid, or 3/2-padded when dealiasing is on.
    pub fn product(&self, a: &ScalarField, b: &ScalarField) -> ScalarField {
        match &self.padded {
            None => a * b,
            Some(pad) => {
                let ap = self.pad(a, pad);
                let bp = self.pad(b, pad);
                self.truncate(&(&ap * &bp), pad)
            }
        }
    }

    fn pad(&self, f: &ScalarField, pad: &Spectral) -> ScalarField {
        let n = self.grid.n() as i64;
        let c = self.forward_unchecked(f);
        let mut big = SpectralCoeffs::zeros(pad.grid);
        for k in -n / 2 + 1..n / 2 {
            for l in -n / 2 + 1..n / 2 {
                big.set(k, l, c.get(k, l));
            }
        }
        pad.inverse_owned(big.data)
    }

    fn truncate(&self, f: &ScalarField, pad: &Spectral) -> ScalarField {
        let n = self.grid.n() as i64;
        let big = pad.forward_unchecked(f);
        let mut c = SpectralCoeffs::zeros(self.grid);
        for k in -n / 2 + 1..n / 2 {
            for l in -n / 2 + 1..n / 2 {
                c.set(k, l, big.get(k, l));
            }
        }
        self.inverse_owned(c.data)
    }

    fn check_zero_mean(&self, f: &ScalarField) -> Result<()> {
        let mean = f.integral();
        let tol = MEAN_TOLERANCE * self.norm(f);
        if mean.abs() > tol {
            return Err(Error::NonZeroMean { mean, tol });
        }
        Ok(())
    }

    /// Components ⟨f, χ⟩ of `f` along the three Nyquist checkerboards
    /// (−1)^i, (−1)^j, (−1)^{i+j}, which `grad` annihilates.
    pub fn nyquist_components(&self, f: &ScalarField) -> [f64; 3] {
        self.check(f);
        let n = self.grid.n();
        let mut s = [0.0; 3];
        for (idx, v) in f.values().iter().enumerate() {
            let si = if (idx / n) % 2 == 0 { 1.0 } else { -1.0 };
            let sj = if (idx % n) % 2 == 0 { 1.0 } else { -1.0 };
            s[0] += si * v;
            s[1] += sj * v;
            s[2] += si * sj * v;
        }
        s.map(|c| c * self.grid.weight())
    }

    /// Solves −Δg = f with ⟨g, 1⟩ = 0.
    pub fn inv_laplacian_zero_mean(&self, f: &ScalarField) -> Result<ScalarField> {
        self.check(f);
        self.check_zero_mean(f)?;
        Ok(self.inv_laplacian_pinned(f))
    }

    /// −Δ⁻¹ with the (0, 0) mode set to zero, without checking the mean of `f`.
    pub(crate) fn inv_laplacian_pinned(&self, f: &ScalarField) -> ScalarField {
        self.apply_symbol(f, |a, b| {
            let k2 = self.k_full[a].powi(2) + self.k_full[b].powi(2);
            if k2 == 0.0 {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(1.0 / k2, 0.0)
            }
        })
    }

    /// Inverse of −div∘grad on its range: modes annihilated by `grad` map to zero.
    pub fn inv_neg_div_grad(&self, f: &ScalarField) -> ScalarField {
        self.apply_symbol(f, |a, b| {
            let k2 = self.k_deriv[a].powi(2) + self.k_deriv[b].powi(2);
            if k2 == 0.0 {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(1.0 / k2, 0.0)
            }
        })
    }

    /// Solves `(α − β Δ) g = f` spectrally (full-symbol Laplacian). Requires α > 0.
    pub fn solve_helmholtz(&self, alpha: f64, beta: f64, f: &ScalarField) -> ScalarField {
        self.apply_symbol(f, |a, b| {
            let k2 = self.k_full[a].powi(2) + self.k_full[b].powi(2);
            Complex64::new(1.0 / (alpha + beta * k2), 0.0)
        })
    }

    /// `L_M f = −div(M grad f)`, the field whose inner product with any `v`
    /// equals ⟨M ∇f, ∇v⟩.
    pub fn apply_lm(&self, mobility: &ScalarField, f: &ScalarField) -> Result<ScalarField> {
        check_mobility(mobility)?;
        self.check(f);
        Ok(self.apply_lm_unchecked(mobility, f))
    }

    pub(crate) fn apply_lm_unchecked(&self, mobility: &ScalarField, f: &ScalarField) -> ScalarField {
        let g = self.grad(f);
        -&self.div(&g.mul_scalar(mobility))
    }

    /// Scaled coefficients of `a + i b`; real-preserving symbols act on both at once.
    fn forward_pair(&self, a: &ScalarField, b: &ScalarField) -> Vec<Complex64> {
        let scale = 1.0 / self.grid.len() as f64;
        let mut data: Vec<Complex64> = a
            .values()
            .iter()
            .zip(b.values())
            .map(|(&x, &y)| Complex64::new(x, y))
            .collect();
        self.fft2(&mut data, &self.forward);
        data.iter_mut().for_each(|c| *c *= scale);
        data
    }

    fn inverse_pair(&self, mut data: Vec<Complex64>) -> (ScalarField, ScalarField) {
        self.fft2(&mut data, &self.inverse);
        let re = data.iter().map(|c| c.re).collect();
        let im = data.iter().map(|c| c.im).collect();
        (
            ScalarField::from_values_unchecked(self.grid, re),
            ScalarField::from_values_unchecked(self.grid, im),
        )
    }

    /// `(L_{M_a} f_a, L_{M_b} f_b)` with half the transforms of two separate calls.
    pub(crate) fn apply_lm_pair(
        &self,
        m_a: &ScalarField,
        f_a: &ScalarField,
        m_b: &ScalarField,
        f_b: &ScalarField,
    ) -> (ScalarField, ScalarField) {
        let n = self.grid.n();
        let c = self.forward_pair(f_a, f_b);
        let mut cx = c.clone();
        let mut cy = c;
        for idx in 0..cx.len() {
            cx[idx] *= Complex64::new(0.0, self.k_deriv[idx / n]);
            cy[idx] *= Complex64::new(0.0, self.k_deriv[idx % n]);
        }
        let (gax, gbx) = self.inverse_pair(cx);
        let (gay, gby) = self.inverse_pair(cy);
        let fx = self.forward_pair(&(&gax * m_a), &(&gbx * m_b));
        let fy = self.forward_pair(&(&gay * m_a), &(&gby * m_b));
        let data = fx
            .iter()
            .zip(&fy)
            .enumerate()
            .map(|(idx, (a, b))| {
                -(Complex64::new(0.0, self.k_deriv[idx / n]) * a + Complex64::new(0.0, self.k_deriv[idx % n]) * b)
            })
            .collect();
        self.inverse_pair(data)
    }

    /// `((α − β_a Δ)⁻¹ a, (α − β_b Δ)⁻¹ b)` through one packed transform pair.
    pub(crate) fn solve_helmholtz_pair(
        &self,
        alpha: f64,
        beta_a: f64,
        beta_b: f64,
        a: &ScalarField,
        b: &ScalarField,
    ) -> (ScalarField, ScalarField) {
        let n = self.grid.n();
        let z = self.forward_pair(a, b);
        let neg = |i: usize| (n - i) % n;
        let data = (0..z.len())
            .map(|idx| {
                let (i, j) = (idx / n, idx % n);
                let zc = z[neg(i) * n + neg(j)].conj();
                let ca = 0.5 * (z[idx] + zc);
                let cb = Complex64::new(0.0, -0.5) * (z[idx] - zc);
                let k2 = self.k_full[i].powi(2) + self.k_full[j].powi(2);
                ca / (alpha + beta_a * k2) + Complex64::i() * cb / (alpha + beta_b * k2)
            })
            .collect();
        self.inverse_pair(data)
    }

    /// Inverts `L_M` on zero-mean fields; see [`Spectral::solve_lm_with`].
    pub fn solve_lm(&self, mobility: &ScalarField, f: &ScalarField, tol: f64) -> Result<ScalarField> {
        self.solve_lm_with(mobility, f, tol, 50 * self.grid.n())
            .map(|(g, _)| g)
    }

    /// Conjugate gradients on `L_M g = f`, preconditioned by the spectral
    /// inverse of −div∘grad. Returns `g` orthogonal to the null space of `L_M`
    /// (constants and the Nyquist checkerboards).
    pub fn solve_lm_with(
        &self,
        mobility: &ScalarField,
        f: &ScalarField,
        tol: f64,
        max_iter: usize,
    ) -> Result<(ScalarField, KrylovStats)> {
        check_mobility(mobility)?;
        self.check(f);
        self.check_zero_mean(f)?;
        let fnorm = self.norm(f);
        for c in self.nyquist_components(f) {
            if c.abs() > MEAN_TOLERANCE * fnorm {
                return Err(Error::NullSpaceComponent { component: c });
            }
        }
        let grid = self.grid;
        let mut x = vec![0.0; grid.len()];
        let stats = krylov::pcg(
            |v, out| {
                let vf = ScalarField::from_values_unchecked(grid, v.to_vec());
                out.copy_from_slice(self.apply_lm_unchecked(mobility, &vf).values());
            },
            |r, out| {
                let rf = ScalarField::from_values_unchecked(grid, r.to_vec());
                out.copy_from_slice(self.inv_neg_div_grad(&rf).values());
            },
            f.values(),
            &mut x,
            tol,
            max_iter,
        )?;
        let mut g = ScalarField::from_values_unchecked(grid, x);
        g.remove_mean();
        Ok((g, stats))
    }
}

pub(crate) fn check_mobility(m: &ScalarField) -> Result<()> {
    let min = m.min();
    if !(min > 0.0) {
        return Err(Error::NonPositiveMobility { min });
    }
    Ok(())
}
