//! Deterministic numerical kernels: symmetric eigendecomposition, spectral
//! matrix exponentials, Gauss-Legendre quadrature and seeded random streams.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::error::{MixdynError, Result};

/// Relative entrywise asymmetry accepted by [`sym_eig`].
pub const SYMMETRY_TOLERANCE: f64 = 1e-12;

/// Number of quadrature nodes used when callers do not choose one.
pub const DEFAULT_QUADRATURE_NODES: usize = 64;

/// Largest exponent accepted by [`spectral_exp`] before it reports overflow.
pub const MAX_EXPONENT: f64 = 700.0;

/// Eigenpairs of a symmetric matrix, eigenvalues in descending order.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDecomposition {
    pub eigenvalues: DVector<f64>,
    /// Column `k` is the unit eigenvector for `eigenvalues[k]`.
    pub eigenvectors: DMatrix<f64>,
}

impl SpectralDecomposition {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues[self.dim() - 1]
    }

    /// `V diag(g(mu)) V^T`.
    pub fn map_eigenvalues(&self, g: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let v = &self.eigenvectors;
        let mut scaled = v.clone();
        for (k, mut col) in scaled.column_iter_mut().enumerate() {
            col *= g(self.eigenvalues[k]);
        }
        let mut out = scaled * v.transpose();
        symmetrize(&mut out);
        out
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        self.map_eigenvalues(|mu| mu)
    }

    /// Coordinates of `x` in the eigenbasis, `V^T x`.
    pub fn project(&self, x: &DVector<f64>) -> DVector<f64> {
        self.eigenvectors.tr_mul(x)
    }
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

/// Eigendecomposition of a symmetric matrix.
pub fn sym_eig(a: &DMatrix<f64>) -> Result<SpectralDecomposition> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(MixdynError::DimensionMismatch {
            expected: n,
            found: a.ncols(),
        });
    }
    if n == 0 {
        return Err(MixdynError::InvalidParameter("empty matrix".into()));
    }
    let scale = a.amax().max(f64::MIN_POSITIVE);
    let mut asym = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            asym = asym.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    let rel = asym / scale;
    if rel > SYMMETRY_TOLERANCE {
        return Err(MixdynError::NonSymmetric { asymmetry: rel });
    }
    let eig = SymmetricEigen::try_new(a.clone(), f64::EPSILON, 10_000)
        .ok_or(MixdynError::NoConvergence)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let eigenvalues = DVector::from_iterator(n, order.iter().map(|&k| eig.eigenvalues[k]));
    let mut eigenvectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        eigenvectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(SpectralDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

/// `exp(s A)` for the decomposed matrix `A`.
pub fn spectral_exp(decomp: &SpectralDecomposition, s: f64) -> Result<DMatrix<f64>> {
    let exponent = decomp
        .eigenvalues
        .iter()
        .map(|&mu| s * mu)
        .fold(f64::NEG_INFINITY, f64::max);
    if exponent > MAX_EXPONENT {
        return Err(MixdynError::Overflow { exponent });
    }
    Ok(decomp.map_eigenvalues(|mu| (s * mu).exp()))
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(order: usize) -> Result<Self> {
        if order < 2 {
            return Err(MixdynError::InvalidParameter(format!(
                "quadrature needs at least 2 nodes, got {order}"
            )));
        }
        let n = order;
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let half = n.div_ceil(2);
        for i in 0..half {
            // Tricomi initial guess, refined by Newton on P_n.
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = x;
            weights[i] = w;
            nodes[n - 1 - i] = -x;
            weights[n - 1 - i] = w;
        }
        Ok(Self { nodes, weights })
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64, a: f64, b: f64) -> Result<f64> {
        if !(a < b) {
            return Err(MixdynError::InvalidInterval { a, b });
        }
        let mid = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        let sum: f64 = self
            .nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(mid + half * x))
            .sum();
        Ok(half * sum)
    }

    /// Composite rule over `panels` equal sub-intervals.
    pub fn integrate_composite(
        &self,
        f: impl Fn(f64) -> f64,
        a: f64,
        b: f64,
        panels: usize,
    ) -> Result<f64> {
        if !(a < b) {
            return Err(MixdynError::InvalidInterval { a, b });
        }
        let panels = panels.max(1);
        let width = (b - a) / panels as f64;
        let mut total = 0.0;
        for p in 0..panels {
            let lo = a + p as f64 * width;
            let hi = if p + 1 == panels { b } else { lo + width };
            total += self.integrate(&f, lo, hi)?;
        }
        Ok(total)
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// `∫_a^b f` with an `nodes`-point Gauss-Legendre rule.
pub fn gauss_legendre(f: impl Fn(f64) -> f64, a: f64, b: f64, nodes: usize) -> Result<f64> {
    if !(a < b) {
        return Err(MixdynError::InvalidInterval { a, b });
    }
    GaussLegendre::new(nodes)?.integrate(f, a, b)
}

/// Seeded, portable random stream (ChaCha20 with the `rand_core`
/// `seed_from_u64` key expansion). Single owner; never shared across tasks.
#[derive(Debug, Clone)]
pub struct RandomStream {
    seed: u64,
    rng: ChaCha20Rng,
}

impl RandomStream {
    pub const ALGORITHM: &'static str = "chacha20";

    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            rng: ChaCha20Rng::seed_from_u64(seed),
        }
    }

    /// Independent stream `stream` under the same key. Used to give each
    /// consumer of one experiment seed its own reproducible sequence.
    pub fn substream(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { seed, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.random()
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random()
    }

    /// Uniform index in `0..n`.
    pub fn index(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    pub fn normal(&mut self, mean: f64, std: f64) -> f64 {
        mean + std * self.standard_normal()
    }

    pub fn normal_matrix(&mut self, rows: usize, cols: usize, std: f64) -> DMatrix<f64> {
        // Row-major fill so the draw order is independent of storage layout.
        let mut m = DMatrix::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = std * self.standard_normal();
            }
        }
        m
    }

    pub fn normal_vector(&mut self, len: usize, std: f64) -> DVector<f64> {
        DVector::from_iterator(len, (0..len).map(|_| std * self.standard_normal()))
    }

    /// Natural log of a Gamma(shape, 1) draw. Small shapes use
    /// `Gamma(a) = Gamma(a + 1) * U^(1/a)` in log space so that the draw
    /// never underflows to zero.
    fn ln_gamma_draw(&mut self, shape: f64) -> f64 {
        if shape >= 1.0 {
            let g = Gamma::new(shape, 1.0).expect("shape is positive and finite");
            g.sample(&mut self.rng).ln()
        } else {
            let g = Gamma::new(shape + 1.0, 1.0).expect("shape is positive and finite");
            let boosted: f64 = g.sample(&mut self.rng);
            let u: f64 = 1.0 - self.uniform();
            boosted.ln() + u.ln() / shape
        }
    }

    pub fn gamma(&mut self, shape: f64) -> f64 {
        self.ln_gamma_draw(shape).exp()
    }

    /// Beta(a, b) as `G_a / (G_a + G_b)` from two independent Gamma draws.
    pub fn beta(&mut self, a: f64, b: f64) -> f64 {
        let la = self.ln_gamma_draw(a);
        let lb = self.ln_gamma_draw(b);
        // G_a / (G_a + G_b) = 1 / (1 + exp(ln G_b - ln G_a))
        1.0 / (1.0 + (lb - la).exp())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn random_symmetric(n: usize, rng: &mut RandomStream) -> DMatrix<f64> {
        let a = rng.normal_matrix(n, n, 1.0);
        (&a + a.transpose()) * 0.5
    }

    #[test]
    fn identity_eigenvalues() {
        let d = sym_eig(&DMatrix::identity(3, 3)).unwrap();
        for mu in d.eigenvalues.iter() {
            assert_abs_diff_eq!(*mu, 1.0, epsilon = 1e-14);
        }
        let vtv = d.eigenvectors.tr_mul(&d.eigenvectors);
        assert!((vtv - DMatrix::identity(3, 3)).amax() < 1e-12);
    }

    #[test]
    fn diagonal_eigenvalues_sorted_descending() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 1.0, 2.0]));
        let d = sym_eig(&a).unwrap();
        assert_eq!(d.eigenvalues.as_slice(), &[3.0, 2.0, 1.0]);
    }

    #[test]
    fn random_symmetric_reconstructs() {
        let mut rng = RandomStream::new(7);
        let a = random_symmetric(10, &mut rng);
        let d = sym_eig(&a).unwrap();
        let err = (d.reconstruct() - &a).norm() / a.norm();
        assert!(err <= 1e-10, "reconstruction error {err}");
        let vtv = d.eigenvectors.tr_mul(&d.eigenvectors);
        assert!((vtv - DMatrix::identity(10, 10)).amax() <= 1e-10);
        for k in 0..9 {
            assert!(d.eigenvalues[k] >= d.eigenvalues[k + 1]);
        }
    }

    #[test]
    fn asymmetric_input_rejected() {
        let mut a = DMatrix::identity(2, 2);
        a[(0, 1)] = 1e-6;
        assert!(matches!(sym_eig(&a), Err(MixdynError::NonSymmetric { .. })));
        assert!(matches!(
            sym_eig(&DMatrix::zeros(2, 3)),
            Err(MixdynError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn spectral_exp_cases() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0]));
        let d = sym_eig(&a).unwrap();
        let e0 = spectral_exp(&d, 0.0).unwrap();
        assert!((e0 - DMatrix::<f64>::identity(2, 2)).amax() < 1e-15);
        let e1 = spectral_exp(&d, 1.0).unwrap();
        assert_abs_diff_eq!(e1[(0, 0)], 1f64.exp(), epsilon = 1e-12);
        assert_abs_diff_eq!(e1[(1, 1)], 2f64.exp(), epsilon = 1e-12);
        assert_abs_diff_eq!(e1[(0, 1)], 0.0, epsilon = 1e-15);
        assert!(matches!(
            spectral_exp(&d, 400.0),
            Err(MixdynError::Overflow { .. })
        ));
    }

    #[test]
    fn spectral_exp_group_law() {
        let mut rng = RandomStream::new(11);
        let a = random_symmetric(6, &mut rng) * 0.3;
        let d = sym_eig(&a).unwrap();
        let (s, t) = (0.7, -1.3);
        let lhs = spectral_exp(&d, s).unwrap() * spectral_exp(&d, t).unwrap();
        let rhs = spectral_exp(&d, s + t).unwrap();
        assert!((lhs - rhs).amax() <= 1e-9);
    }

    #[test]
    fn psd_contraction_for_negative_time() {
        let mut rng = RandomStream::new(3);
        let b = rng.normal_matrix(5, 8, 1.0);
        let a = &b * b.transpose() / 8.0;
        let d = sym_eig(&a).unwrap();
        let mut prev = vec![1.0; 5];
        for s in [0.0, -0.5, -1.0, -4.0] {
            let e = sym_eig(&spectral_exp(&d, s).unwrap()).unwrap();
            let mut vals: Vec<f64> = e.eigenvalues.iter().copied().collect();
            vals.reverse();
            let mut mus: Vec<f64> = d.eigenvalues.iter().map(|m| (s * m).exp()).collect();
            mus.reverse();
            for (k, v) in vals.iter().enumerate() {
                assert!(*v > 0.0 && *v <= 1.0 + 1e-12);
                assert!(mus[k] <= prev[k] + 1e-12);
            }
            prev = mus;
        }
    }

    #[test]
    fn quadrature_examples() {
        assert_abs_diff_eq!(
            gauss_legendre(|x| x, 0.0, 1.0, 8).unwrap(),
            0.5,
            epsilon = 1e-14
        );
        assert_abs_diff_eq!(
            gauss_legendre(|x| x.powi(3), 0.0, 1.0, 2).unwrap(),
            0.25,
            epsilon = 1e-14
        );
        // The x ln x endpoint singularity limits a plain rule to ~3e-8.
        let v = gauss_legendre(|x| -2.0 * x * x.ln(), 0.0, 1.0, 64).unwrap();
        assert!((v - 0.5).abs() <= 1e-7, "{v}");
        let smoothed = gauss_legendre(|u| -8.0 * u.powi(3) * u.ln(), 0.0, 1.0, 64).unwrap();
        assert!((smoothed - 0.5).abs() <= 1e-12, "{smoothed}");
        assert!(matches!(
            gauss_legendre(|x| x, 1.0, 1.0, 8),
            Err(MixdynError::InvalidInterval { .. })
        ));
        assert!(gauss_legendre(|x| x, 0.0, 1.0, 1).is_err());
    }

    #[test]
    fn quadrature_polynomial_exactness() {
        for nodes in [2usize, 3, 5, 16, 64] {
            let deg = 2 * nodes - 1;
            // ∫_{-1}^{2} x^deg dx
            let exact =
                (2f64.powi(deg as i32 + 1) - (-1f64).powi(deg as i32 + 1)) / (deg as f64 + 1.0);
            let got = gauss_legendre(|x| x.powi(deg as i32), -1.0, 2.0, nodes).unwrap();
            assert!(
                ((got - exact) / exact.abs().max(1.0)).abs() <= 1e-12,
                "n={nodes}"
            );
        }
    }

    #[test]
    fn equal_seeds_equal_streams() {
        let mut a = RandomStream::new(42);
        let mut b = RandomStream::new(42);
        for _ in 0..10_000 {
            assert_eq!(a.uniform().to_bits(), b.uniform().to_bits());
        }
        let mut c = RandomStream::substream(42, 3);
        let mut d = RandomStream::substream(42, 3);
        let mut e = RandomStream::substream(42, 4);
        let x = c.next_u64();
        assert_eq!(x, d.next_u64());
        assert_ne!(x, e.next_u64());
    }

    #[test]
    fn beta_small_shape_stays_finite() {
        let mut rng = RandomStream::new(5);
        for _ in 0..10_000 {
            let l = rng.beta(0.01, 0.01);
            assert!((0.0..=1.0).contains(&l));
        }
    }
}
