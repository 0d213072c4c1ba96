//! Dominant eigenpair of small dense Hermitian positive semidefinite matrices.
//!
//! Power iteration from the normalized all-ones vector handles the common
//! case. When it stalls or ends with a residual above the acceptance gate,
//! a cyclic Jacobi sweep on the real symmetric embedding
//! `[[Re H, -Im H], [Im H, Re H]]` gives the answer instead.

use num_complex::Complex64;

/// Row-major dense Hermitian matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix {
    dim: usize,
    data: Vec<Complex64>,
}

impl HermitianMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![Complex64::new(0.0, 0.0); dim * dim],
        }
    }

    /// Builds from row-major entries; the caller guarantees Hermitian symmetry.
    pub fn from_rows(dim: usize, data: Vec<Complex64>) -> Self {
        assert_eq!(data.len(), dim * dim, "expected {dim}x{dim} entries");
        Self { dim, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.data[i * self.dim + j]
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.data
    }

    /// `self += weight * v v^H`.
    pub fn add_outer(&mut self, weight: f64, v: &[Complex64]) {
        debug_assert_eq!(v.len(), self.dim);
        for i in 0..self.dim {
            let vi = v[i] * weight;
            let row = &mut self.data[i * self.dim..(i + 1) * self.dim];
            for (entry, vj) in row.iter_mut().zip(v) {
                *entry += vi * vj.conj();
            }
        }
    }

    pub fn mul_vec(&self, x: &[Complex64]) -> Vec<Complex64> {
        self.data
            .chunks_exact(self.dim)
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `x^H H x`, real for Hermitian `H`.
    pub fn quadratic_form(&self, x: &[Complex64]) -> f64 {
        self.mul_vec(x)
            .iter()
            .zip(x)
            .map(|(hx, xi)| xi.conj() * hx)
            .sum::<Complex64>()
            .re
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|z| *z == Complex64::new(0.0, 0.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenOptions {
    /// Relative change of the eigenvalue estimate that stops power iteration.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Fall back to Jacobi when power iteration fails its checks.
    pub fallback: bool,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_iterations: 10_000,
            fallback: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EigenMethod {
    /// The zero matrix; any unit vector is an eigenvector.
    Trivial,
    PowerIteration,
    Jacobi,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DominantEigen {
    pub value: f64,
    /// Unit eigenvector, first non-negligible entry real and positive.
    pub vector: Vec<Complex64>,
    pub method: EigenMethod,
    pub iterations: usize,
}

/// Residual accepted from power iteration, relative to the Frobenius norm.
const POWER_RESIDUAL_GATE: f64 = 1e-9;

fn norm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// `||H v - lambda v||`.
pub fn residual(h: &HermitianMatrix, vector: &[Complex64], value: f64) -> f64 {
    h.mul_vec(vector)
        .iter()
        .zip(vector)
        .map(|(hv, v)| (hv - v * value).norm_sqr())
        .sum::<f64>()
        .sqrt()
}

/// Rotates `v` so that its first entry above `1e-12 max|v_i|` is real positive.
pub fn normalize_phase(v: &mut [Complex64]) {
    let largest = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if largest == 0.0 {
        return;
    }
    if let Some(i) = v.iter().position(|z| z.norm() > 1e-12 * largest) {
        let lead = v[i];
        let rotation = lead.conj() / lead.norm();
        for z in v.iter_mut() {
            *z *= rotation;
        }
        v[i] = Complex64::new(lead.norm(), 0.0);
    }
}

/// Dominant eigenpair of a Hermitian PSD matrix.
///
/// The zero matrix yields `(0, e_1)`.
pub fn max_eigvec(h: &HermitianMatrix, options: &EigenOptions) -> DominantEigen {
    let dim = h.dim();
    let fro = h.frobenius_norm();
    if fro == 0.0 {
        let mut vector = vec![Complex64::new(0.0, 0.0); dim];
        if dim > 0 {
            vector[0] = Complex64::new(1.0, 0.0);
        }
        return DominantEigen {
            value: 0.0,
            vector,
            method: EigenMethod::Trivial,
            iterations: 0,
        };
    }

    let power = power_iteration(h, options);
    let max_diagonal = (0..dim).map(|i| h.get(i, i).re).fold(f64::NEG_INFINITY, f64::max);
    let acceptable = power.converged
        && residual(h, &power.vector, power.value) <= POWER_RESIDUAL_GATE * fro
        // a Rayleigh quotient below some e_i^H H e_i cannot be the maximum
        && power.value >= max_diagonal - POWER_RESIDUAL_GATE * fro;

    if acceptable || !options.fallback {
        let mut vector = power.vector;
        normalize_phase(&mut vector);
        return DominantEigen {
            value: power.value,
            vector,
            method: EigenMethod::PowerIteration,
            iterations: power.iterations,
        };
    }

    let (values, vectors) = jacobi_eigen(h);
    let top = values
        .iter()
        .enumerate()
        .fold(0, |best, (i, v)| if *v > values[best] { i } else { best });
    let mut vector = vectors[top].clone();
    normalize_phase(&mut vector);
    DominantEigen {
        value: values[top],
        vector,
        method: EigenMethod::Jacobi,
        iterations: power.iterations,
    }
}

struct PowerResult {
    value: f64,
    vector: Vec<Complex64>,
    iterations: usize,
    converged: bool,
}

fn power_iteration(h: &HermitianMatrix, options: &EigenOptions) -> PowerResult {
    let dim = h.dim();
    let start = Complex64::new(1.0 / (dim as f64).sqrt(), 0.0);
    let mut u = vec![start; dim];
    let mut hu = h.mul_vec(&u);
    let mut value = h_rayleigh(&u, &hu);
    let gate = POWER_RESIDUAL_GATE * h.frobenius_norm();
    let mut iterations = 0;
    let mut converged = false;
    while iterations < options.max_iterations {
        iterations += 1;
        let scale = norm(&hu);
        if scale == 0.0 {
            // the start vector lies in the null space
            break;
        }
        u = hu.iter().map(|z| z / scale).collect();
        hu = h.mul_vec(&u);
        let next = h_rayleigh(&u, &hu);
        let change = (next - value).abs();
        value = next;
        // the eigenvalue settles quadratically faster than the vector, so the
        // residual must also be small before stopping
        if change <= options.tolerance * value.abs() && residual_of(&u, &hu, value) <= gate {
            converged = true;
            break;
        }
    }
    PowerResult {
        value,
        vector: u,
        iterations,
        converged,
    }
}

fn residual_of(u: &[Complex64], hu: &[Complex64], value: f64) -> f64 {
    u.iter()
        .zip(hu)
        .map(|(a, b)| (b - a * value).norm_sqr())
        .sum::<f64>()
        .sqrt()
}

fn h_rayleigh(u: &[Complex64], hu: &[Complex64]) -> f64 {
    u.iter().zip(hu).map(|(a, b)| a.conj() * b).sum::<Complex64>().re
}

/// Full eigendecomposition by cyclic Jacobi rotations.
///
/// Returns eigenvalues and matching unit eigenvectors (one per eigenvalue of
/// `h`, picked from the doubled spectrum of the real embedding).
pub fn jacobi_eigen(h: &HermitianMatrix) -> (Vec<f64>, Vec<Vec<Complex64>>) {
    let m = h.dim();
    let n = 2 * m;
    // real embedding, row-major
    let mut a = vec![0.0; n * n];
    for i in 0..m {
        for j in 0..m {
            let z = h.get(i, j);
            a[i * n + j] = z.re;
            a[(i + m) * n + (j + m)] = z.re;
            a[i * n + (j + m)] = -z.im;
            a[(i + m) * n + j] = z.im;
        }
    }
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let total: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i * n + j] * a[i * n + j])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * total {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j * n + j].total_cmp(&a[i * n + i]));
    // eigenvalues come in pairs; keep every other one of the sorted list
    let mut values = Vec::with_capacity(m);
    let mut vectors = Vec::with_capacity(m);
    for &col in order.iter().step_by(2) {
        let mut u: Vec<Complex64> = (0..m)
            .map(|i| Complex64::new(v[i * n + col], v[(i + m) * n + col]))
            .collect();
        let scale = norm(&u);
        u.iter_mut().for_each(|z| *z /= scale);
        values.push(a[col * n + col]);
        vectors.push(u);
    }
    (values, vectors)
}
