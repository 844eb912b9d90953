//! Summary, spectral and information-theoretic statistics of metric matrices
//! and partitions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::PseudoMetricMatrix;
use crate::quotient::{intra_diameters, Partition};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SummaryStats {
    pub array_mean: f64,
    pub array_std: f64,
}

/// Mean and population standard deviation of the strict upper triangle.
pub fn summary_stats(d: &PseudoMetricMatrix) -> Result<SummaryStats> {
    if d.n() < 2 {
        return Err(Error::InvalidArgument(
            "summary statistics need at least two states".into(),
        ));
    }
    let entries: Vec<f64> = d.upper_entries().collect();
    let (mean, var) = mean_and_variance(&entries);
    Ok(SummaryStats {
        array_mean: mean,
        array_std: var.sqrt(),
    })
}

fn mean_and_variance(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var)
}

/// Off-diagonal Frobenius mass at which Jacobi sweeps stop.
pub const JACOBI_TOLERANCE: f64 = 1e-10;
const JACOBI_MAX_SWEEPS: usize = 100;

/// Eigenpairs of a symmetric matrix, sorted by descending magnitude.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenDecomposition {
    pub n: usize,
    pub values: Vec<f64>,
    /// Row-major `n × n`; column `k` is the eigenvector of `values[k]`.
    pub vectors: Vec<f64>,
    pub sweeps: usize,
}

impl EigenDecomposition {
    pub fn vector(&self, k: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.vectors[i * self.n + k]).collect()
    }

    /// `V Λ Vᵀ`.
    pub fn reconstruct(&self) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] = (0..n)
                    .map(|k| self.vectors[i * n + k] * self.values[k] * self.vectors[j * n + k])
                    .sum();
            }
        }
        out
    }

    /// `‖A − V Λ Vᵀ‖_F / ‖A‖_F`, or the absolute error when `A = 0`.
    pub fn relative_reconstruction_error(&self, a: &[f64]) -> f64 {
        let r = self.reconstruct();
        let err = frobenius(&a.iter().zip(&r).map(|(x, y)| x - y).collect::<Vec<_>>());
        let norm = frobenius(a);
        if norm > 0.0 {
            err / norm
        } else {
            err
        }
    }
}

fn frobenius(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn off_diagonal_mass(a: &[f64], n: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[i * n + j] * a[i * n + j];
            }
        }
    }
    s.sqrt()
}

/// Cyclic Jacobi eigensolver for a row-major symmetric `n × n` matrix.
pub fn symmetric_eigs(a: &[f64], n: usize) -> Result<EigenDecomposition> {
    if a.len() != n * n {
        return Err(Error::Dimension(format!("expected {} entries, got {}", n * n, a.len())));
    }
    for i in 0..n {
        for j in i + 1..n {
            let gap = (a[i * n + j] - a[j * n + i]).abs();
            if gap > 1e-12 || gap.is_nan() {
                return Err(Error::Asymmetric { i, j, gap });
            }
        }
    }
    let mut m = a.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    // Rounding keeps the off-diagonal mass near ε·‖A‖, which can sit above
    // the absolute target for large entries.
    let target = JACOBI_TOLERANCE.max(4.0 * f64::EPSILON * frobenius(a));
    let mut sweeps = 0;
    while off_diagonal_mass(&m, n) > target && sweeps < JACOBI_MAX_SWEEPS {
        sweeps += 1;
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[k * n + p];
                    let mkq = m[k * n + q];
                    m[k * n + p] = c * mkp - s * mkq;
                    m[k * n + q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p * n + k];
                    let mqk = m[q * n + k];
                    m[p * n + k] = c * mpk - s * mqk;
                    m[q * n + k] = s * mpk + c * mqk;
                }
                m[p * n + q] = 0.0;
                m[q * n + p] = 0.0;
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
    let diag: Vec<f64> = (0..n).map(|i| m[i * n + i]).collect();
    order.sort_by(|&i, &j| {
        diag[j]
            .abs()
            .total_cmp(&diag[i].abs())
            .then(diag[j].total_cmp(&diag[i]))
    });
    let values = order.iter().map(|&i| diag[i]).collect();
    let mut vectors = vec![0.0; n * n];
    for (k, &src) in order.iter().enumerate() {
        for i in 0..n {
            vectors[i * n + k] = v[i * n + src];
        }
    }
    Ok(EigenDecomposition {
        n,
        values,
        vectors,
        sweeps,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SpectralMode {
    /// The distance matrix itself.
    #[default]
    Raw,
    /// The classical MDS Gram matrix `−½·J (d∘d) J`.
    DoubleCentered,
}

/// Eigenvalues below this fraction of the largest magnitude count as zero.
pub const ZERO_EIGEN_THRESHOLD: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralReport {
    pub mode: SpectralMode,
    pub frobenius: f64,
    pub spectral_radius: f64,
    /// `None` when every eigenvalue is zero.
    pub condition_number: Option<f64>,
    /// Shannon entropy (nats) of the normalized absolute spectrum; `None`
    /// when every eigenvalue is zero.
    pub eigen_entropy: Option<f64>,
    pub eigenvalues: Vec<f64>,
    pub reconstruction_error: f64,
}

pub fn double_centered(d: &PseudoMetricMatrix) -> Vec<f64> {
    let n = d.n();
    let sq: Vec<f64> = d.as_slice().iter().map(|x| x * x).collect();
    let row_mean: Vec<f64> = (0..n).map(|i| sq[i * n..(i + 1) * n].iter().sum::<f64>() / n as f64).collect();
    let grand = row_mean.iter().sum::<f64>() / n as f64;
    let mut b = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            // Symmetric by construction, as row and column means coincide.
            b[i * n + j] = -0.5 * (sq[i * n + j] - row_mean[i] - row_mean[j] + grand);
        }
    }
    b
}

pub fn spectral_report(d: &PseudoMetricMatrix, mode: SpectralMode) -> Result<SpectralReport> {
    let a = match mode {
        SpectralMode::Raw => d.as_slice().to_vec(),
        SpectralMode::DoubleCentered => double_centered(d),
    };
    let eig = symmetric_eigs(&a, d.n())?;
    let spectral_radius = eig.values.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let (condition_number, eigen_entropy) = if spectral_radius > 0.0 {
        let cutoff = ZERO_EIGEN_THRESHOLD * spectral_radius;
        let smallest = eig
            .values
            .iter()
            .map(|x| x.abs())
            .filter(|&x| x > cutoff)
            .fold(f64::INFINITY, f64::min);
        let total: f64 = eig.values.iter().map(|x| x.abs()).sum();
        let entropy = -eig
            .values
            .iter()
            .map(|x| x.abs() / total)
            .filter(|&p| p > 0.0)
            .map(|p| p * p.ln())
            .sum::<f64>();
        (Some(spectral_radius / smallest), Some(entropy.max(0.0)))
    } else {
        (None, None)
    };
    Ok(SpectralReport {
        mode,
        frobenius: frobenius(&a),
        spectral_radius,
        condition_number,
        eigen_entropy,
        reconstruction_error: eig.relative_reconstruction_error(&a),
        eigenvalues: eig.values,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PartitionInfo {
    pub class_count: usize,
    pub compression_ratio: f64,
    pub intra_class_diameters: Vec<f64>,
    /// Mean over classes of the population variance of within-class pairwise
    /// distances; singletons contribute zero.
    pub intra_class_variance: f64,
    /// Entropy (nats) of the class-size distribution.
    pub class_size_entropy: f64,
}

pub fn partition_info(d: &PseudoMetricMatrix, partition: &Partition) -> Result<PartitionInfo> {
    let n = d.n();
    if partition.n_states() != n {
        return Err(Error::Dimension(format!(
            "partition covers {} states, metric has {n}",
            partition.n_states()
        )));
    }
    let variances: Vec<f64> = partition
        .classes()
        .iter()
        .map(|members| {
            let mut xs = Vec::new();
            for (i, &s) in members.iter().enumerate() {
                for &t in &members[i + 1..] {
                    xs.push(d.get(s, t));
                }
            }
            mean_and_variance(&xs).1
        })
        .collect();
    let k = partition.n_classes();
    let entropy = -partition
        .classes()
        .iter()
        .map(|c| c.len() as f64 / n as f64)
        .map(|p| p * p.ln())
        .sum::<f64>();
    Ok(PartitionInfo {
        class_count: k,
        compression_ratio: partition.compression_ratio(),
        intra_class_diameters: intra_diameters(d, partition),
        intra_class_variance: if k == 0 { 0.0 } else { variances.iter().sum::<f64>() / k as f64 },
        class_size_entropy: entropy.max(0.0),
    })
}
