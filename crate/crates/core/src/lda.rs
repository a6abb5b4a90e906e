//! Two-class linear discriminant analysis with innovated feature selection.

use alloc::format;
use alloc::vec::Vec;

use crate::covariance::{ddpca_from_cov, poet_from_cov, precision_from_estimate};
use crate::decompose::SolverConfig;
use crate::error::{Error, Result, Warning};
use crate::linalg::inverse_sym;
use crate::math::sqrt;
use crate::matrix::{dot, Matrix, SymmetricMatrix};
use crate::simgen::RngStream;

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    /// `n × p`.
    pub features: Matrix,
    /// Each label is 1 or 2.
    pub labels: Vec<u8>,
}

impl LabeledDataset {
    pub fn new(features: Matrix, labels: Vec<u8>) -> Result<LabeledDataset> {
        if features.rows() != labels.len() {
            return Err(Error::Dimension {
                expected: format!("{} labels", features.rows()),
                found: format!("{}", labels.len()),
            });
        }
        if let Some(bad) = labels.iter().find(|&&l| l != 1 && l != 2) {
            return Err(Error::Input(format!("labels must be 1 or 2, found {bad}")));
        }
        features.ensure_finite()?;
        let d = LabeledDataset { features, labels };
        let (n1, n2) = d.class_counts();
        if n1 < 2 || n2 < 2 {
            return Err(Error::Argument(format!("each class needs at least 2 samples, got {n1} and {n2}")));
        }
        Ok(d)
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn p(&self) -> usize {
        self.features.cols()
    }

    pub fn class_counts(&self) -> (usize, usize) {
        let n1 = self.labels.iter().filter(|&&l| l == 1).count();
        (n1, self.labels.len() - n1)
    }

    pub fn subset(&self, rows: &[usize]) -> LabeledDataset {
        LabeledDataset {
            features: Matrix::from_fn(rows.len(), self.p(), |i, j| self.features[(rows[i], j)]),
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
        }
    }

    pub fn select_features(&self, cols: &[usize]) -> LabeledDataset {
        LabeledDataset {
            features: Matrix::from_fn(self.n(), cols.len(), |i, j| self.features[(i, cols[j])]),
            labels: self.labels.clone(),
        }
    }
}

/// Scaling of the two-sample score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScoreScale {
    /// `(X̄₁ − X̄₂)/(n·s_j)`.
    #[default]
    SampleSize,
    /// `(X̄₁ − X̄₂)/(s_j √(1/n₁ + 1/n₂))`.
    Pooled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassStats {
    pub mean1: Vec<f64>,
    pub mean2: Vec<f64>,
    /// Pooled standard deviation, divisor `n₁ + n₂ − 2`.
    pub sd: Vec<f64>,
    pub n1: usize,
    pub n2: usize,
}

pub fn class_stats(data: &LabeledDataset) -> ClassStats {
    let p = data.p();
    let (n1, n2) = data.class_counts();
    let mut mean1 = alloc::vec![0.0; p];
    let mut mean2 = alloc::vec![0.0; p];
    for (i, &l) in data.labels.iter().enumerate() {
        let m = if l == 1 { &mut mean1 } else { &mut mean2 };
        for (mj, x) in m.iter_mut().zip(data.features.row(i)) {
            *mj += x;
        }
    }
    mean1.iter_mut().for_each(|m| *m /= n1 as f64);
    mean2.iter_mut().for_each(|m| *m /= n2 as f64);
    let mut ss = alloc::vec![0.0; p];
    for (i, &l) in data.labels.iter().enumerate() {
        let m = if l == 1 { &mean1 } else { &mean2 };
        for ((s, x), mj) in ss.iter_mut().zip(data.features.row(i)).zip(m) {
            *s += (x - mj) * (x - mj);
        }
    }
    let sd = ss.iter().map(|s| sqrt(s / (n1 + n2 - 2) as f64)).collect();
    ClassStats { mean1, mean2, sd, n1, n2 }
}

/// Pooled within-class covariance with divisor `n`.
pub fn pooled_cov(data: &LabeledDataset) -> SymmetricMatrix {
    let st = class_stats(data);
    let n = data.n();
    let centered = Matrix::from_fn(n, data.p(), |i, j| {
        let m = if data.labels[i] == 1 { st.mean1[j] } else { st.mean2[j] };
        data.features[(i, j)] - m
    });
    centered.gram_cols().scaled(1.0 / n as f64)
}

pub fn t_scores(stats: &ClassStats, scale: ScoreScale) -> Vec<f64> {
    let n = (stats.n1 + stats.n2) as f64;
    let f = match scale {
        ScoreScale::SampleSize => n,
        ScoreScale::Pooled => sqrt(1.0 / stats.n1 as f64 + 1.0 / stats.n2 as f64),
    };
    (0..stats.sd.len())
        .map(|j| if stats.sd[j] > 0.0 { (stats.mean1[j] - stats.mean2[j]) / (f * stats.sd[j]) } else { 0.0 })
        .collect()
}

/// Indices of the `p0` features with the largest absolute scores, in
/// decreasing order of score.
pub fn top_features(data: &LabeledDataset, p0: usize) -> Vec<usize> {
    let z = t_scores(&class_stats(data), ScoreScale::Pooled);
    let mut idx: Vec<usize> = (0..z.len()).collect();
    idx.sort_by(|&a, &b| z[b].abs().total_cmp(&z[a].abs()).then(a.cmp(&b)));
    idx.truncate(p0.min(z.len()));
    idx
}

#[derive(Debug, Clone, PartialEq)]
pub struct LdaState {
    pub z: Vec<f64>,
    pub z_tilde: Vec<f64>,
    pub w: Vec<f64>,
    pub stats: ClassStats,
    pub dropped: Vec<usize>,
    pub warnings: Vec<Warning>,
}

fn check_omega(omega: &SymmetricMatrix, p: usize) -> Result<()> {
    if omega.dim() != p {
        return Err(Error::Dimension { expected: format!("{p} × {p} precision"), found: format!("{}", omega.dim()) });
    }
    Ok(())
}

/// Scores, innovated scores `Z̃ = Ω̂Z`, and the sign selector at threshold `t`.
pub fn lda_train(train: &LabeledDataset, omega: &SymmetricMatrix, t: f64, scale: ScoreScale) -> Result<LdaState> {
    check_omega(omega, train.p())?;
    let stats = class_stats(train);
    let mut warnings = Vec::new();
    let dropped: Vec<usize> = (0..train.p()).filter(|&j| !(stats.sd[j] > 0.0)).collect();
    for &j in &dropped {
        log::warn!("feature {j} has zero pooled standard deviation and is dropped");
        warnings.push(Warning::FeatureDropped { index: j });
    }
    let z = t_scores(&stats, scale);
    let mut z_tilde = omega.mul_vec(&z);
    for &j in &dropped {
        z_tilde[j] = 0.0;
    }
    let w = select(&z_tilde, t);
    Ok(LdaState { z, z_tilde, w, stats, dropped, warnings })
}

fn select(z_tilde: &[f64], t: f64) -> Vec<f64> {
    z_tilde
        .iter()
        .map(|&v| if v != 0.0 && v.abs() >= t { v.signum() } else { 0.0 })
        .collect()
}

/// Threshold keeping the `k` largest `|Z̃|`.
pub fn threshold_for_count(z_tilde: &[f64], k: usize) -> f64 {
    let mut a: Vec<f64> = z_tilde.iter().map(|v| v.abs()).collect();
    a.sort_by(|x, y| y.total_cmp(x));
    if k == 0 {
        return f64::INFINITY;
    }
    a[(k - 1).min(a.len() - 1)]
}

/// Class 1 when `wᵀΩ̂X̃* > 0`, class 2 otherwise.
pub fn lda_classify(state: &LdaState, omega: &SymmetricMatrix, x: &[f64]) -> Result<u8> {
    Ok(if lda_score(state, omega, x)? > 0.0 { 1 } else { 2 })
}

pub fn lda_score(state: &LdaState, omega: &SymmetricMatrix, x: &[f64]) -> Result<f64> {
    let p = state.w.len();
    check_omega(omega, p)?;
    if x.len() != p {
        return Err(Error::Dimension { expected: format!("{p} features"), found: format!("{}", x.len()) });
    }
    let st = &state.stats;
    let xs: Vec<f64> = (0..p)
        .map(|j| if st.sd[j] > 0.0 { (x[j] - 0.5 * (st.mean1[j] + st.mean2[j])) / st.sd[j] } else { 0.0 })
        .collect();
    Ok(dot(&state.w, &omega.mul_vec(&xs)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OmegaMethod {
    Ddpca,
    Poet { threshold: f64 },
    /// `[diag(S)]⁻¹`.
    Diagonal,
    Identity,
}

impl OmegaMethod {
    pub fn label(&self) -> alloc::string::String {
        match self {
            OmegaMethod::Ddpca => "ddpca".into(),
            OmegaMethod::Poet { threshold } => format!("poet({threshold})"),
            OmegaMethod::Diagonal => "diag".into(),
            OmegaMethod::Identity => "identity".into(),
        }
    }

    /// Precision estimate from the pooled within-class covariance of `train`.
    pub fn estimate(&self, train: &LabeledDataset, k: usize, config: &SolverConfig) -> Result<SymmetricMatrix> {
        let p = train.p();
        match self {
            OmegaMethod::Identity => Ok(SymmetricMatrix::identity(p)),
            OmegaMethod::Diagonal => {
                let d = pooled_cov(train).diag();
                if let Some(j) = d.iter().position(|&v| !(v > 0.0)) {
                    return Err(Error::Numerical(format!("zero variance at feature {j}")));
                }
                Ok(SymmetricMatrix::from_diag(&d.iter().map(|v| 1.0 / v).collect::<Vec<_>>()))
            }
            OmegaMethod::Ddpca => Ok(precision_from_estimate(&ddpca_from_cov(&pooled_cov(train), k, config)?)?.0),
            OmegaMethod::Poet { threshold } => inverse_sym(&poet_from_cov(&pooled_cov(train), k, *threshold)?.sigma),
        }
    }
}

/// Stratified fold index per sample: each class is shuffled separately and
/// dealt round-robin, so class fractions agree across folds up to rounding.
pub fn stratified_folds(labels: &[u8], folds: usize, stream: &mut RngStream) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(Error::Argument(format!("need at least 2 folds, got {folds}")));
    }
    let mut assignment = alloc::vec![0usize; labels.len()];
    let mut offset = 0;
    for class in [1u8, 2] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if idx.len() < folds {
            return Err(Error::Argument(format!(
                "class {class} has {} samples, fewer than {folds} folds",
                idx.len()
            )));
        }
        stream.shuffle(&mut idx);
        for (r, i) in idx.into_iter().enumerate() {
            assignment[i] = (r + offset) % folds;
        }
        offset += 1;
    }
    Ok(assignment)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorCurve {
    pub labels: Vec<alloc::string::String>,
    /// `errors[m][k − 1]` is the number of misclassified test samples over all
    /// folds for method `m` keeping `k` features.
    pub errors: Vec<Vec<usize>>,
    pub n: usize,
}

/// Cross-validated misclassification counts for `k = 1..=p` features.
pub fn error_curve(
    data: &LabeledDataset,
    methods: &[OmegaMethod],
    rank: usize,
    folds: usize,
    scale: ScoreScale,
    config: &SolverConfig,
    stream: &mut RngStream,
) -> Result<ErrorCurve> {
    if data.n() < 10 {
        return Err(Error::Argument(format!("need at least 10 samples, got {}", data.n())));
    }
    let p = data.p();
    let assignment = stratified_folds(&data.labels, folds, stream)?;
    let mut errors = alloc::vec![alloc::vec![0usize; p]; methods.len()];
    for fold in 0..folds {
        let train_idx: Vec<usize> = (0..data.n()).filter(|&i| assignment[i] != fold).collect();
        let test_idx: Vec<usize> = (0..data.n()).filter(|&i| assignment[i] == fold).collect();
        let train = data.subset(&train_idx);
        for (m, method) in methods.iter().enumerate() {
            let omega = method.estimate(&train, rank, config)?;
            let mut state = lda_train(&train, &omega, 0.0, scale)?;
            let mut order: Vec<usize> = (0..p).collect();
            order.sort_by(|&a, &b| state.z_tilde[b].abs().total_cmp(&state.z_tilde[a].abs()).then(a.cmp(&b)));
            // Keep exactly the k leading features in this order.
            let full_w = state.w.clone();
            for k in 1..=p {
                let mut w = alloc::vec![0.0; p];
                for &j in &order[..k] {
                    w[j] = full_w[j];
                }
                state.w = w;
                for &i in &test_idx {
                    let label = lda_classify(&state, &omega, data.features.row(i))?;
                    if label != data.labels[i] {
                        errors[m][k - 1] += 1;
                    }
                }
            }
        }
    }
    Ok(ErrorCurve { labels: methods.iter().map(|m| m.label()).collect(), errors, n: data.n() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> LabeledDataset {
        let x = Matrix::from_rows(&[
            [2.0, 0.0, 1.0],
            [4.0, 1.0, 1.0],
            [0.0, 0.0, 3.0],
            [-2.0, 1.0, 3.0],
        ])
        .unwrap();
        LabeledDataset::new(x, alloc::vec![1, 1, 2, 2]).unwrap()
    }

    #[test]
    fn hand_scores() {
        let d = toy();
        let st = class_stats(&d);
        assert_eq!(st.mean1, alloc::vec![3.0, 0.5, 1.0]);
        assert_eq!(st.mean2, alloc::vec![-1.0, 0.5, 3.0]);
        // within-class sums of squares (4, 1, 0) over n - 2 = 2
        assert_eq!(st.sd, alloc::vec![sqrt(2.0), sqrt(0.5), 0.0]);
        let omega = SymmetricMatrix::identity(3);
        let s = lda_train(&d, &omega, 0.0, ScoreScale::SampleSize).unwrap();
        assert!((s.z[0] - 1.0 / sqrt(2.0)).abs() < 1e-15);
        assert_eq!(&s.z[1..], &[0.0, 0.0]);
        assert_eq!(s.w, alloc::vec![1.0, 0.0, 0.0]);
        assert_eq!(s.dropped, alloc::vec![2]);
        assert_eq!(lda_classify(&s, &omega, &[3.0, 0.5, 1.0]).unwrap(), 1);
        assert_eq!(lda_classify(&s, &omega, &[1.0, 0.5, 2.0]).unwrap(), 2);
    }

    #[test]
    fn folds_partition_and_stratify() {
        let labels: Vec<u8> = (0..23).map(|i| if i % 3 == 0 { 1 } else { 2 }).collect();
        let a = stratified_folds(&labels, 5, &mut RngStream::new(4, 0)).unwrap();
        for f in 0..5 {
            let c1 = (0..23).filter(|&i| a[i] == f && labels[i] == 1).count();
            assert!((1..=2).contains(&c1));
        }
    }
}
