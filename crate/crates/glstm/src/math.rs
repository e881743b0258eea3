//! Dense row-major linear algebra, elementwise activations, a seeded
//! portable PRNG, and weight initializers. Everything else in the crate
//! builds on this module.

use rand_core::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Dense matrix of 64-bit floats, row-major storage.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Build from explicit row-major data. Panics if the length does not
    /// match `rows * cols`.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(
            data.len(),
            rows * cols,
            "matrix data length {} does not match {}x{}",
            data.len(),
            rows,
            cols
        );
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Standard matrix product. Panics on inner-dimension mismatch.
    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(
            self.cols, other.rows,
            "matmul shape mismatch: {}x{} * {}x{}",
            self.rows, self.cols, other.rows, other.cols
        );
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let a_row = self.row(i);
            let out_row = out.row_mut(i);
            for (k, &a) in a_row.iter().enumerate() {
                let b_row = other.row(k);
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        out
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.set(j, i, self.get(i, j));
            }
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// `v . M` for a row vector `v` of length `rows`; result has length `cols`.
pub fn vec_mat(v: &[f64], m: &Matrix) -> Vec<f64> {
    assert_eq!(v.len(), m.rows(), "vec_mat length mismatch");
    let mut out = vec![0.0; m.cols()];
    for (i, &vi) in v.iter().enumerate() {
        for (o, &w) in out.iter_mut().zip(m.row(i)) {
            *o += vi * w;
        }
    }
    out
}

/// `M . v` for a column vector `v` of length `cols`; result has length `rows`.
pub fn mat_vec(m: &Matrix, v: &[f64]) -> Vec<f64> {
    assert_eq!(v.len(), m.cols(), "mat_vec length mismatch");
    (0..m.rows()).map(|i| dot4(m.row(i), v)).collect()
}

/// `acc += M . v`, writing into an existing buffer.
///
/// The row dot products use four fixed-order partial sums so the adds
/// pipeline instead of forming one long dependency chain; the summation
/// order is static, so results stay bitwise reproducible.
pub fn mat_vec_add(m: &Matrix, v: &[f64], acc: &mut [f64]) {
    assert_eq!(v.len(), m.cols(), "mat_vec_add length mismatch");
    assert_eq!(acc.len(), m.rows(), "mat_vec_add output mismatch");
    for (i, a) in acc.iter_mut().enumerate() {
        *a += dot4(m.row(i), v);
    }
}

#[inline]
fn dot4(row: &[f64], v: &[f64]) -> f64 {
    let mut sums = [0.0f64; 4];
    let chunks = row.len() / 4;
    for c in 0..chunks {
        let base = 4 * c;
        sums[0] += row[base] * v[base];
        sums[1] += row[base + 1] * v[base + 1];
        sums[2] += row[base + 2] * v[base + 2];
        sums[3] += row[base + 3] * v[base + 3];
    }
    let mut tail = 0.0;
    for idx in 4 * chunks..row.len() {
        tail += row[idx] * v[idx];
    }
    (sums[0] + sums[2]) + (sums[1] + sums[3]) + tail
}

/// `acc[i][j] += u[i] * v[j]`.
pub fn add_outer(acc: &mut Matrix, u: &[f64], v: &[f64]) {
    assert_eq!(u.len(), acc.rows(), "add_outer row mismatch");
    assert_eq!(v.len(), acc.cols(), "add_outer col mismatch");
    for (i, &ui) in u.iter().enumerate() {
        for (a, &vj) in acc.row_mut(i).iter_mut().zip(v) {
            *a += ui * vj;
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn sigmoid_vec(xs: &[f64]) -> Vec<f64> {
    xs.iter().map(|&x| sigmoid(x)).collect()
}

pub fn tanh_vec(xs: &[f64]) -> Vec<f64> {
    xs.iter().map(|&x| x.tanh()).collect()
}

/// Seeded PRNG with a platform-independent stream.
///
/// The generator is ChaCha8 keyed by the 64-bit seed (zero-extended) with a
/// selectable 64-bit stream id, so independent substreams can be derived
/// from one experiment seed. Uniform doubles take the top 53 bits of one
/// `next_u64` call; normals come from the Box-Muller transform on two
/// uniform draws. None of this depends on platform word size or libm
/// differences beyond IEEE-754 `f64` arithmetic.
#[derive(Clone, Debug)]
pub struct SeededRng {
    inner: ChaCha8Rng,
    spare_normal: Option<f64>,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    /// Independent substream for the same seed (data vs. init vs. shuffle).
    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        SeededRng {
            inner,
            spare_normal: None,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in [0, 1) with 53-bit resolution.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in [lo, hi). Panics if lo > hi; lo == hi returns lo.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        assert!(lo <= hi, "uniform: lo {lo} > hi {hi}");
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform integer in [0, n), unbiased via rejection. Panics if n == 0.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below: n must be positive");
        let n64 = n as u64;
        // Accept only below the largest multiple of n to avoid modulo bias.
        let limit = u64::MAX - u64::MAX % n64;
        loop {
            let v = self.next_u64();
            if v < limit {
                return (v % n64) as usize;
            }
        }
    }

    /// Standard normal via Box-Muller; the second value of each pair is
    /// cached.
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        // u1 in (0, 1] so the log is finite.
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare_normal = Some(r * theta.sin());
        r * theta.cos()
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.below(i + 1);
            xs.swap(i, j);
        }
    }
}

/// Matrix with orthonormal columns (rows >= cols) or orthonormal rows
/// (rows < cols), obtained by Householder QR of a Gaussian random matrix.
/// The sign convention fixes the triangular factor's diagonal positive, so
/// the output is fully determined by the rng stream.
pub fn orthogonal_init(rows: usize, cols: usize, rng: &mut SeededRng) -> Matrix {
    assert!(rows >= 1 && cols >= 1, "orthogonal_init: empty shape");
    if rows < cols {
        return orthogonal_init(cols, rows, rng).transpose();
    }
    let mut a = Matrix::zeros(rows, cols);
    for v in a.data_mut() {
        *v = rng.normal();
    }
    let (q, r_diag) = householder_thin_q(&a);
    let mut q = q;
    for j in 0..cols {
        if r_diag[j] < 0.0 {
            for i in 0..rows {
                let v = q.get(i, j);
                q.set(i, j, -v);
            }
        }
    }
    q
}

/// Thin Q of the Householder QR of `a` (rows >= cols), plus the diagonal of
/// R for sign fixing.
fn householder_thin_q(a: &Matrix) -> (Matrix, Vec<f64>) {
    let m = a.rows();
    let n = a.cols();
    let mut r = a.clone();
    // Householder vectors; v[k] has length m - k.
    let mut reflectors: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n);
    for k in 0..n {
        let norm = (k..m).map(|i| r.get(i, k).powi(2)).sum::<f64>().sqrt();
        let alpha = if r.get(k, k) >= 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = (k..m).map(|i| r.get(i, k)).collect();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 > 0.0 {
            for j in k..n {
                let dot: f64 = v.iter().enumerate().map(|(i, &vi)| vi * r.get(k + i, j)).sum();
                let s = 2.0 * dot / vnorm2;
                for (i, &vi) in v.iter().enumerate() {
                    let cur = r.get(k + i, j);
                    r.set(k + i, j, cur - s * vi);
                }
            }
        }
        reflectors.push((v, vnorm2));
    }
    // Q = H_0 .. H_{n-1} applied to the first n columns of the identity.
    let mut q = Matrix::zeros(m, n);
    for j in 0..n {
        q.set(j, j, 1.0);
    }
    for k in (0..n).rev() {
        let (v, vnorm2) = &reflectors[k];
        if *vnorm2 > 0.0 {
            for j in 0..n {
                let dot: f64 = v.iter().enumerate().map(|(i, &vi)| vi * q.get(k + i, j)).sum();
                let s = 2.0 * dot / vnorm2;
                for (i, &vi) in v.iter().enumerate() {
                    let cur = q.get(k + i, j);
                    q.set(k + i, j, cur - s * vi);
                }
            }
        }
    }
    let r_diag = (0..n).map(|j| r.get(j, j)).collect();
    (q, r_diag)
}

/// Entries uniform in [-b, b] with b = sqrt(6 / (rows + cols)).
pub fn xavier_init(rows: usize, cols: usize, rng: &mut SeededRng) -> Matrix {
    assert!(rows >= 1 && cols >= 1, "xavier_init: empty shape");
    let b = (6.0 / (rows + cols) as f64).sqrt();
    let mut m = Matrix::zeros(rows, cols);
    for v in m.data_mut() {
        *v = rng.uniform(-b, b);
    }
    m
}
