//! PCA + ICA whitening of embeddings.
//!
//! Fitting centers the corpus, keeps the leading principal axes up to an
//! explained-variance threshold, rescales them to unit (population) variance
//! and optionally rotates the result with a FastICA unmixing matrix. The same
//! fitted transform is applied to corpus and query vectors alike.

use std::fs;
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::io::EmbeddingMatrix;

pub const TRANSFORM_MAGIC: &[u8; 4] = b"CWWT";
pub const TRANSFORM_VERSION: u32 = 1;

pub const DEFAULT_THRESHOLD: f64 = 0.96;
/// Singular values below this fraction of the largest are always dropped.
pub const SINGULAR_FLOOR: f64 = 1e-8;
pub const ICA_MAX_ITER: usize = 200;
pub const ICA_TOL: f64 = 1e-4;

// Slack on the cumulative-ratio comparison so that threshold 1.0 is reachable
// despite rounding in the eigenvalue sum.
const CUMULATIVE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WhiteningConfig {
    pub threshold: f64,
    pub use_ica: bool,
    pub seed: u64,
}

impl Default for WhiteningConfig {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_THRESHOLD,
            use_ica: true,
            seed: 0,
        }
    }
}

/// Diagnostics from fitting; not persisted in the binary sidecar.
#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub explained_variance_ratio: f64,
    pub ica_converged: bool,
    /// Largest iteration count used by any ICA component.
    pub ica_iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WhiteningTransform {
    input_dim: usize,
    output_dim: usize,
    use_ica: bool,
    mean: Vec<f64>,
    /// `output_dim x input_dim`, row-major, orthonormal rows.
    pca_components: Vec<f64>,
    pca_scales: Vec<f64>,
    /// `output_dim x output_dim`, row-major.
    ica_unmixing: Vec<f64>,
    /// `ica_unmixing * diag(pca_scales) * pca_components`, row-major.
    combined: Vec<f64>,
    report: Option<FitReport>,
}

impl WhiteningTransform {
    /// Assembles a transform from its parts, checking shapes.
    pub fn from_parts(
        mean: Vec<f64>,
        pca_components: Vec<f64>,
        pca_scales: Vec<f64>,
        ica_unmixing: Vec<f64>,
        use_ica: bool,
    ) -> Result<Self> {
        let input_dim = mean.len();
        let output_dim = pca_scales.len();
        if input_dim == 0 || output_dim == 0 || output_dim > input_dim {
            return Err(Error::Validation(format!(
                "invalid whitening dims {input_dim} -> {output_dim}"
            )));
        }
        if pca_components.len() != output_dim * input_dim {
            return Err(Error::Consistency(format!(
                "pca_components has {} values, expected {}",
                pca_components.len(),
                output_dim * input_dim
            )));
        }
        if ica_unmixing.len() != output_dim * output_dim {
            return Err(Error::Consistency(format!(
                "ica_unmixing has {} values, expected {}",
                ica_unmixing.len(),
                output_dim * output_dim
            )));
        }
        let mut combined = vec![0.0; output_dim * input_dim];
        for r in 0..output_dim {
            let out = &mut combined[r * input_dim..(r + 1) * input_dim];
            for k in 0..output_dim {
                let w = ica_unmixing[r * output_dim + k] * pca_scales[k];
                let comp = &pca_components[k * input_dim..(k + 1) * input_dim];
                for (o, c) in out.iter_mut().zip(comp) {
                    *o += w * c;
                }
            }
        }
        Ok(Self {
            input_dim,
            output_dim,
            use_ica,
            mean,
            pca_components,
            pca_scales,
            ica_unmixing,
            combined,
            report: None,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn use_ica(&self) -> bool {
        self.use_ica
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn pca_components(&self) -> &[f64] {
        &self.pca_components
    }

    pub fn pca_scales(&self) -> &[f64] {
        &self.pca_scales
    }

    pub fn ica_unmixing(&self) -> &[f64] {
        &self.ica_unmixing
    }

    /// Present on freshly fitted transforms, absent on ones loaded from disk.
    pub fn report(&self) -> Option<&FitReport> {
        self.report.as_ref()
    }

    /// Whitens one vector.
    pub fn apply_row(&self, row: &[f32], out: &mut [f64]) {
        debug_assert_eq!(row.len(), self.input_dim);
        let centered: Vec<f64> = row
            .iter()
            .zip(&self.mean)
            .map(|(&x, m)| x as f64 - m)
            .collect();
        for (r, o) in out.iter_mut().enumerate() {
            let coef = &self.combined[r * self.input_dim..(r + 1) * self.input_dim];
            *o = coef.iter().zip(&centered).map(|(a, b)| a * b).sum();
        }
    }
}

pub fn apply_whitening(t: &WhiteningTransform, x: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
    if x.dim() != t.input_dim {
        return Err(Error::Shape {
            expected: t.input_dim,
            got: x.dim(),
        });
    }
    let mut data = Vec::with_capacity(x.count() * t.output_dim);
    let mut buf = vec![0.0; t.output_dim];
    for row in x.rows() {
        t.apply_row(row, &mut buf);
        data.extend(buf.iter().map(|&v| v as f32));
    }
    EmbeddingMatrix::new(t.output_dim, data, x.ids().to_vec())
}

pub fn fit_whitening(corpus: &EmbeddingMatrix, config: &WhiteningConfig) -> Result<WhiteningTransform> {
    let n = corpus.count();
    let d = corpus.dim();
    if n < 2 {
        return Err(Error::Fit(format!("need at least 2 rows to fit, got {n}")));
    }
    if !(config.threshold > 0.0 && config.threshold <= 1.0) {
        return Err(Error::Fit(format!(
            "explained-variance threshold {} is outside (0, 1]",
            config.threshold
        )));
    }

    let mut mean = vec![0.0f64; d];
    for row in corpus.rows() {
        for (m, &v) in mean.iter_mut().zip(row) {
            *m += v as f64;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }

    let centered = DMatrix::from_fn(n, d, |i, j| corpus.row(i)[j] as f64 - mean[j]);
    let gram = centered.tr_mul(&centered);
    let eig = SymmetricEigen::new(gram);

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let singular: Vec<f64> = eigenvalues.iter().map(|l| l.sqrt()).collect();
    let s_max = singular[0];
    if s_max <= 0.0 || !s_max.is_finite() {
        return Err(Error::Fit("corpus has zero variance; no dimension survives".into()));
    }
    let kept = singular
        .iter()
        .take_while(|&&s| s >= SINGULAR_FLOOR * s_max)
        .count();

    let total: f64 = eigenvalues.iter().sum();
    let mut cumulative = 0.0;
    let mut output_dim = kept;
    for (i, &l) in eigenvalues.iter().take(kept).enumerate() {
        cumulative += l;
        if cumulative / total >= config.threshold - CUMULATIVE_SLACK {
            output_dim = i + 1;
            break;
        }
    }
    let explained: f64 = eigenvalues[..output_dim].iter().sum::<f64>() / total;

    let mut components = Vec::with_capacity(output_dim * d);
    let mut scales = Vec::with_capacity(output_dim);
    for (k, &col) in order.iter().take(output_dim).enumerate() {
        let v = eig.eigenvectors.column(col);
        let mut pivot = 0;
        for j in 1..d {
            if v[j].abs() > v[pivot].abs() {
                pivot = j;
            }
        }
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        components.extend(v.iter().map(|c| c * sign));
        scales.push((n as f64).sqrt() / singular[k]);
    }

    let (unmixing, converged, iterations) = if config.use_ica {
        let mut z = vec![0.0f64; n * output_dim];
        for i in 0..n {
            let row = centered.row(i);
            for k in 0..output_dim {
                let comp = &components[k * d..(k + 1) * d];
                let dot: f64 = comp.iter().zip(row.iter()).map(|(a, b)| a * b).sum();
                z[i * output_dim + k] = dot * scales[k];
            }
        }
        let ica = fast_ica(&z, n, output_dim, config.seed);
        if !ica.converged {
            log::warn!(
                "ICA did not converge within {ICA_MAX_ITER} iterations; keeping the last iterate"
            );
        }
        (ica.unmixing, ica.converged, ica.iterations)
    } else {
        let mut eye = vec![0.0; output_dim * output_dim];
        for k in 0..output_dim {
            eye[k * output_dim + k] = 1.0;
        }
        (eye, true, 0)
    };

    let mut t = WhiteningTransform::from_parts(mean, components, scales, unmixing, config.use_ica)?;
    t.report = Some(FitReport {
        explained_variance_ratio: explained,
        ica_converged: converged,
        ica_iterations: iterations,
    });
    Ok(t)
}

struct IcaFit {
    unmixing: Vec<f64>,
    converged: bool,
    iterations: usize,
}

/// Deflationary FastICA with the logcosh contrast on already-white data `z`
/// (`n x dim`, row-major). Rows of the result are renormalized so that each
/// output component has unit population variance on `z`.
fn fast_ica(z: &[f64], n: usize, dim: usize, seed: u64) -> IcaFit {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut unmixing: Vec<f64> = Vec::with_capacity(dim * dim);
    let mut converged = true;
    let mut max_iter = 0;
    let mut proj = vec![0.0; n];
    let mut g = vec![0.0; n];

    for p in 0..dim {
        let mut w: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        decorrelate(&mut w, &unmixing, dim);
        normalize(&mut w);

        let mut done = false;
        let mut iter = 0;
        while iter < ICA_MAX_ITER {
            iter += 1;
            let mut mean_gp = 0.0;
            for i in 0..n {
                let row = &z[i * dim..(i + 1) * dim];
                proj[i] = row.iter().zip(&w).map(|(a, b)| a * b).sum();
                g[i] = proj[i].tanh();
                mean_gp += 1.0 - g[i] * g[i];
            }
            mean_gp /= n as f64;
            let mut next = vec![0.0; dim];
            for i in 0..n {
                let row = &z[i * dim..(i + 1) * dim];
                for (nx, &v) in next.iter_mut().zip(row) {
                    *nx += v * g[i];
                }
            }
            for (nx, wv) in next.iter_mut().zip(&w) {
                *nx = *nx / n as f64 - mean_gp * wv;
            }
            decorrelate(&mut next, &unmixing, dim);
            if !normalize(&mut next) {
                // Degenerate update; keep the previous direction.
                break;
            }
            let lim = (next.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>().abs() - 1.0).abs();
            w = next;
            if lim < ICA_TOL {
                done = true;
                break;
            }
        }
        converged &= done;
        max_iter = max_iter.max(iter);
        debug_assert_eq!(unmixing.len(), p * dim);
        unmixing.extend_from_slice(&w);
    }

    for r in 0..dim {
        let w = &unmixing[r * dim..(r + 1) * dim];
        let (mut s, mut s2) = (0.0, 0.0);
        for i in 0..n {
            let v: f64 = z[i * dim..(i + 1) * dim].iter().zip(w).map(|(a, b)| a * b).sum();
            s += v;
            s2 += v * v;
        }
        let var = s2 / n as f64 - (s / n as f64).powi(2);
        if var > 0.0 {
            let inv = 1.0 / var.sqrt();
            for v in &mut unmixing[r * dim..(r + 1) * dim] {
                *v *= inv;
            }
        }
    }

    IcaFit {
        unmixing,
        converged,
        iterations: max_iter,
    }
}

fn decorrelate(w: &mut [f64], basis: &[f64], dim: usize) {
    for b in basis.chunks_exact(dim) {
        let proj: f64 = w.iter().zip(b).map(|(x, y)| x * y).sum();
        for (x, y) in w.iter_mut().zip(b) {
            *x -= proj * y;
        }
    }
}

fn normalize(w: &mut [f64]) -> bool {
    let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return false;
    }
    for x in w.iter_mut() {
        *x /= norm;
    }
    true
}

pub fn encode_transform(t: &WhiteningTransform) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(TRANSFORM_MAGIC);
    buf.write_u32::<LittleEndian>(TRANSFORM_VERSION).unwrap();
    buf.write_u32::<LittleEndian>(t.input_dim as u32).unwrap();
    buf.write_u32::<LittleEndian>(t.output_dim as u32).unwrap();
    buf.write_u8(t.use_ica as u8).unwrap();
    for v in t
        .mean
        .iter()
        .chain(&t.pca_components)
        .chain(&t.pca_scales)
        .chain(&t.ica_unmixing)
    {
        buf.write_f64::<LittleEndian>(*v).unwrap();
    }
    buf
}

pub fn decode_transform(bytes: &[u8]) -> Result<WhiteningTransform> {
    let mut r = bytes;
    let truncated = |_| Error::Format("truncated whitening transform".into());
    let mut magic = [0u8; 4];
    std::io::Read::read_exact(&mut r, &mut magic).map_err(truncated)?;
    if &magic != TRANSFORM_MAGIC {
        return Err(Error::Format(format!("bad transform magic {magic:?}")));
    }
    let version = r.read_u32::<LittleEndian>().map_err(truncated)?;
    if version != TRANSFORM_VERSION {
        return Err(Error::Format(format!("unsupported transform version {version}")));
    }
    let input_dim = r.read_u32::<LittleEndian>().map_err(truncated)? as usize;
    let output_dim = r.read_u32::<LittleEndian>().map_err(truncated)? as usize;
    let use_ica = r.read_u8().map_err(truncated)? != 0;
    let expected = input_dim + output_dim * input_dim + output_dim + output_dim * output_dim;
    if r.len() != expected * 8 {
        return Err(Error::Consistency(format!(
            "transform payload is {} bytes, expected {}",
            r.len(),
            expected * 8
        )));
    }
    let mut take = |len: usize| -> Vec<f64> {
        (0..len).map(|_| r.read_f64::<LittleEndian>().unwrap()).collect()
    };
    let mean = take(input_dim);
    let components = take(output_dim * input_dim);
    let scales = take(output_dim);
    let unmixing = take(output_dim * output_dim);
    WhiteningTransform::from_parts(mean, components, scales, unmixing, use_ica)
}

pub fn write_transform(t: &WhiteningTransform, path: &Path) -> Result<()> {
    fs::write(path, encode_transform(t)).map_err(|e| Error::io(path, e))
}

pub fn read_transform(path: &Path) -> Result<WhiteningTransform> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_transform(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("r{i}")).collect()
    }

    fn normal_matrix(n: usize, d: usize, seed: u64) -> EmbeddingMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..n * d)
            .map(|_| StandardNormal.sample(&mut rng))
            .map(|v: f64| v as f32)
            .collect();
        EmbeddingMatrix::new(d, data, ids(n)).unwrap()
    }

    /// Population covariance computed directly from the rows.
    fn covariance(m: &EmbeddingMatrix) -> Vec<Vec<f64>> {
        let d = m.dim();
        let n = m.count() as f64;
        let mut mean = vec![0.0; d];
        for row in m.rows() {
            for j in 0..d {
                mean[j] += row[j] as f64 / n;
            }
        }
        let mut cov = vec![vec![0.0; d]; d];
        for row in m.rows() {
            for a in 0..d {
                for b in 0..d {
                    cov[a][b] += (row[a] as f64 - mean[a]) * (row[b] as f64 - mean[b]) / n;
                }
            }
        }
        cov
    }

    fn frobenius_from_identity(cov: &[Vec<f64>]) -> f64 {
        let mut s = 0.0;
        for (a, row) in cov.iter().enumerate() {
            for (b, v) in row.iter().enumerate() {
                let target = if a == b { 1.0 } else { 0.0 };
                s += (v - target).powi(2);
            }
        }
        s.sqrt()
    }

    #[test]
    fn standard_normal_output_is_near_identity_covariance() {
        let m = normal_matrix(10_000, 8, 1);
        for use_ica in [false, true] {
            let cfg = WhiteningConfig { threshold: 1.0, use_ica, seed: 3 };
            let t = fit_whitening(&m, &cfg).unwrap();
            assert_eq!(t.output_dim(), 8);
            let out = apply_whitening(&t, &m).unwrap();
            let err = frobenius_from_identity(&covariance(&out));
            assert!(err < 0.1, "use_ica={use_ica}: frobenius error {err}");
        }
    }

    #[test]
    fn collinear_points_reduce_to_one_dimension() {
        let rows: Vec<Vec<f32>> = (0..50).map(|i| vec![i as f32 * 0.1, i as f32 * 0.1]).collect();
        let m = EmbeddingMatrix::from_rows(2, &rows, ids(50)).unwrap();
        let t = fit_whitening(&m, &WhiteningConfig { threshold: 0.96, use_ica: false, seed: 0 }).unwrap();
        assert_eq!(t.output_dim(), 1);
        // Principal axis is (1,1)/sqrt(2), sign made positive.
        let c = t.pca_components();
        assert!((c[0] - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-9);
        assert!((c[1] - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-9);
    }

    #[test]
    fn whitened_input_keeps_unit_variance() {
        let m = normal_matrix(2_000, 5, 7);
        let cfg = WhiteningConfig { threshold: 1.0, use_ica: false, seed: 0 };
        let once = apply_whitening(&fit_whitening(&m, &cfg).unwrap(), &m).unwrap();
        let twice = apply_whitening(&fit_whitening(&once, &cfg).unwrap(), &once).unwrap();
        let cov = covariance(&twice);
        for (k, row) in cov.iter().enumerate() {
            assert!((row[k] - 1.0).abs() < 1e-6, "dim {k}: variance {}", row[k]);
        }
    }

    #[test]
    fn components_orthonormal_and_output_centered() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let rows: Vec<Vec<f32>> = (0..500)
            .map(|_| {
                let a: f32 = rng.random_range(-1.0..1.0);
                let b: f32 = rng.random_range(-1.0..1.0);
                vec![a + 3.0, 2.0 * a + b, b - a, 0.5 * b + 1.0]
            })
            .collect();
        let m = EmbeddingMatrix::from_rows(4, &rows, ids(500)).unwrap();
        let t = fit_whitening(&m, &WhiteningConfig { threshold: 1.0, use_ica: true, seed: 5 }).unwrap();
        // Data lies on a 2-D affine subspace.
        assert_eq!(t.output_dim(), 2);
        let d = t.input_dim();
        let c = t.pca_components();
        for a in 0..t.output_dim() {
            for b in 0..t.output_dim() {
                let dot: f64 = (0..d).map(|j| c[a * d + j] * c[b * d + j]).sum();
                let target = if a == b { 1.0 } else { 0.0 };
                assert!((dot - target).abs() < 1e-5);
            }
        }
        let out = apply_whitening(&t, &m).unwrap();
        for k in 0..out.dim() {
            let mean: f64 = out.rows().map(|r| r[k] as f64).sum::<f64>() / out.count() as f64;
            assert!(mean.abs() < 1e-5, "dim {k} mean {mean}");
        }
    }

    #[test]
    fn mean_row_maps_to_zero() {
        let m = normal_matrix(300, 6, 2);
        let t = fit_whitening(&m, &WhiteningConfig { threshold: 0.96, use_ica: false, seed: 0 }).unwrap();
        let row: Vec<f32> = t.mean().iter().map(|&v| v as f32).collect();
        let mut out = vec![1.0; t.output_dim()];
        t.apply_row(&row, &mut out);
        assert!(out.iter().all(|v| v.abs() < 1e-5), "{out:?}");
    }

    #[test]
    fn empty_input_gives_empty_output() {
        let m = normal_matrix(100, 6, 2);
        let t = fit_whitening(&m, &WhiteningConfig::default()).unwrap();
        let out = apply_whitening(&t, &EmbeddingMatrix::empty(6).unwrap()).unwrap();
        assert_eq!(out.count(), 0);
        assert_eq!(out.dim(), t.output_dim());
    }

    #[test]
    fn dimension_mismatch_is_shape_error() {
        let m = normal_matrix(100, 6, 2);
        let t = fit_whitening(&m, &WhiteningConfig::default()).unwrap();
        let err = apply_whitening(&t, &normal_matrix(3, 5, 0)).unwrap_err();
        assert!(matches!(err, Error::Shape { expected: 6, got: 5 }));
    }

    #[test]
    fn constant_corpus_cannot_be_fit() {
        let m = EmbeddingMatrix::new(2, vec![1.0; 20], ids(10)).unwrap();
        assert!(matches!(
            fit_whitening(&m, &WhiteningConfig::default()),
            Err(Error::Fit(_))
        ));
        let one = EmbeddingMatrix::new(2, vec![1.0, 2.0], ids(1)).unwrap();
        assert!(matches!(
            fit_whitening(&one, &WhiteningConfig::default()),
            Err(Error::Fit(_))
        ));
    }

    #[test]
    fn truncation_is_monotone_in_threshold() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let d = 10;
        let rows: Vec<Vec<f32>> = (0..400)
            .map(|_| {
                (0..d)
                    .map(|j| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        (z * (j as f64 + 1.0).powf(-1.5)) as f32
                    })
                    .collect()
            })
            .collect();
        let m = EmbeddingMatrix::from_rows(d, &rows, ids(400)).unwrap();
        let mut prev = 0;
        for step in 1..=20 {
            let threshold = step as f64 / 20.0;
            let t = fit_whitening(&m, &WhiteningConfig { threshold, use_ica: false, seed: 0 }).unwrap();
            assert!(t.output_dim() >= prev);
            let ratio = t.report().unwrap().explained_variance_ratio;
            assert!(ratio >= threshold - 1e-9);
            prev = t.output_dim();
        }
        assert_eq!(prev, d);
    }

    #[test]
    fn fit_is_deterministic_for_a_seed() {
        let m = normal_matrix(500, 4, 4);
        let cfg = WhiteningConfig { threshold: 1.0, use_ica: true, seed: 42 };
        let a = fit_whitening(&m, &cfg).unwrap();
        let b = fit_whitening(&m, &cfg).unwrap();
        assert_eq!(encode_transform(&a), encode_transform(&b));
    }

    #[test]
    fn sidecar_round_trip() {
        let m = normal_matrix(200, 5, 8);
        let t = fit_whitening(&m, &WhiteningConfig { threshold: 0.9, use_ica: true, seed: 1 }).unwrap();
        let bytes = encode_transform(&t);
        assert_eq!(&bytes[..4], b"CWWT");
        let header = 4 + 4 + 4 + 4 + 1;
        let (d, k) = (t.input_dim(), t.output_dim());
        assert_eq!(bytes.len(), header + 8 * (d + k * d + k + k * k));
        let back = decode_transform(&bytes).unwrap();
        assert_eq!(back.mean(), t.mean());
        assert_eq!(back.ica_unmixing(), t.ica_unmixing());
        assert_eq!(apply_whitening(&back, &m).unwrap(), apply_whitening(&t, &m).unwrap());
        assert!(decode_transform(&bytes[..bytes.len() - 1]).is_err());
    }
}
