//! Distribution-level analysis: Gaussian Fréchet distance, PCA, silhouette,
//! Spearman correlation, Kruskal–Wallis with epsilon-squared effect sizes,
//! and Benjamini–Hochberg q-values.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// q threshold used when flagging a significant cell.
pub const SIGNIFICANCE_Q: f64 = 0.05;
/// Lower bounds of the small / medium / large epsilon-squared bands.
pub const EFFECT_BANDS: [f64; 3] = [0.01, 0.08, 0.26];

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSummary {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub sample_count: usize,
}

impl GaussianSummary {
    /// Builds a summary from known parameters.
    pub fn new(mean: Vec<f64>, covariance: DMatrix<f64>, sample_count: usize) -> Result<Self> {
        let d = mean.len();
        if covariance.nrows() != d || covariance.ncols() != d {
            return Err(Error::DimMismatch {
                expected: d,
                actual: covariance.nrows(),
                context: Some("covariance".into()),
            });
        }
        Ok(Self {
            mean: DVector::from_vec(mean),
            covariance,
            sample_count,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

fn check_rows(samples: &[Vec<f64>], min: usize) -> Result<usize> {
    if samples.len() < min {
        return Err(Error::InsufficientData(format!(
            "need at least {min} samples, got {}",
            samples.len()
        )));
    }
    let d = samples[0].len();
    if let Some(r) = samples.iter().find(|r| r.len() != d) {
        return Err(Error::DimMismatch {
            expected: d,
            actual: r.len(),
            context: Some("sample".into()),
        });
    }
    Ok(d)
}

fn mean_and_covariance(samples: &[Vec<f64>], d: usize) -> (DVector<f64>, DMatrix<f64>) {
    let n = samples.len() as f64;
    let mut mean = DVector::zeros(d);
    for r in samples {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    mean /= n;
    let centered = DMatrix::from_fn(samples.len(), d, |i, j| samples[i][j] - mean[j]);
    let mut cov = centered.transpose() * &centered / (n - 1.0);
    cov = (&cov + cov.transpose()) * 0.5;
    (mean, cov)
}

pub fn gaussian_summary(samples: &[Vec<f64>]) -> Result<GaussianSummary> {
    let d = check_rows(samples, 2)?;
    let (mean, covariance) = mean_and_covariance(samples, d);
    Ok(GaussianSummary {
        mean,
        covariance,
        sample_count: samples.len(),
    })
}

fn eigen(m: DMatrix<f64>) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite matrix entry".into()));
    }
    let e = SymmetricEigen::new(m);
    if e.eigenvalues.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(
            "eigendecomposition did not converge".into(),
        ));
    }
    Ok(e)
}

fn psd_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let e = eigen(m.clone())?;
    let roots = e.eigenvalues.map(|l| l.max(0.0).sqrt());
    Ok(&e.eigenvectors * DMatrix::from_diagonal(&roots) * e.eigenvectors.transpose())
}

fn regularized(s: &GaussianSummary) -> DMatrix<f64> {
    let d = s.dim();
    let mut c = s.covariance.clone();
    if s.sample_count < d {
        let lambda = 1e-6 * c.trace() / d as f64;
        for i in 0..d {
            c[(i, i)] += lambda;
        }
    }
    c
}

/// `|mu_a - mu_b|^2 + Tr(Sa + Sb - 2 (Sa Sb)^(1/2))`, with the square-root
/// trace taken from the eigenvalues of `Sa^(1/2) Sb Sa^(1/2)`.
pub fn frechet_distance(a: &GaussianSummary, b: &GaussianSummary) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimMismatch {
            expected: a.dim(),
            actual: b.dim(),
            context: Some("Fréchet distance".into()),
        });
    }
    let (ca, cb) = (regularized(a), regularized(b));
    let sa = psd_sqrt(&ca)?;
    let m = &sa * &cb * &sa;
    let m = (&m + m.transpose()) * 0.5;
    let e = eigen(m)?;
    let tr_sqrt: f64 = e.eigenvalues.iter().map(|&l| l.max(0.0).sqrt()).sum();
    let diff = (&a.mean - &b.mean).norm_squared();
    Ok((diff + ca.trace() + cb.trace() - 2.0 * tr_sqrt).max(0.0))
}

#[derive(Debug, Clone)]
pub struct Pca {
    pub mean: Vec<f64>,
    /// k unit-length components, one per row.
    pub components: Vec<Vec<f64>>,
    pub explained_variance: Vec<f64>,
    pub explained_variance_ratio: Vec<f64>,
    pub projected: Vec<Vec<f64>>,
}

/// Projects centered samples onto the top-`k` covariance eigenvectors. Each
/// component's largest-magnitude entry is made positive.
pub fn pca_fit_transform(samples: &[Vec<f64>], k: usize) -> Result<Pca> {
    let d = check_rows(samples, 2)?;
    if k > d || k == 0 {
        return Err(Error::Dim {
            requested: k,
            available: d,
        });
    }
    let (mean, cov) = mean_and_covariance(samples, d);
    let e = eigen(cov)?;
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| {
        e.eigenvalues[j]
            .total_cmp(&e.eigenvalues[i])
            .then(i.cmp(&j))
    });
    let total: f64 = e.eigenvalues.iter().map(|l| l.max(0.0)).sum();
    let mut components = Vec::with_capacity(k);
    let mut explained_variance = Vec::with_capacity(k);
    for &i in order.iter().take(k) {
        let mut v: Vec<f64> = e.eigenvectors.column(i).iter().copied().collect();
        let pivot = v.iter().enumerate().fold(
            0,
            |best, (j, x)| if x.abs() > v[best].abs() { j } else { best },
        );
        if v[pivot] < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        components.push(v);
        explained_variance.push(e.eigenvalues[i].max(0.0));
    }
    let explained_variance_ratio = explained_variance
        .iter()
        .map(|l| if total > 0.0 { l / total } else { 0.0 })
        .collect();
    let mean: Vec<f64> = mean.iter().copied().collect();
    let projected = samples
        .iter()
        .map(|r| {
            components
                .iter()
                .map(|c| {
                    c.iter()
                        .zip(r)
                        .zip(&mean)
                        .map(|((c, x), m)| c * (x - m))
                        .sum()
                })
                .collect()
        })
        .collect();
    Ok(Pca {
        mean,
        components,
        explained_variance,
        explained_variance_ratio,
        projected,
    })
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Mean silhouette over all points (Euclidean). Points in singleton
/// clusters contribute 0.
pub fn silhouette_score(samples: &[Vec<f64>], labels: &[u8]) -> Result<f64> {
    if samples.len() != labels.len() {
        return Err(Error::Length(samples.len(), labels.len()));
    }
    check_rows(samples, 1)?;
    let mut clusters: Vec<u8> = labels.to_vec();
    clusters.sort_unstable();
    clusters.dedup();
    if clusters.len() < 2 {
        return Err(Error::SingleCluster);
    }
    let sizes: Vec<usize> = clusters
        .iter()
        .map(|c| labels.iter().filter(|&&l| l == *c).count())
        .collect();
    let slot = |l: u8| clusters.binary_search(&l).unwrap();
    let scores: Vec<f64> = (0..samples.len())
        .into_par_iter()
        .map(|i| {
            let own = slot(labels[i]);
            if sizes[own] == 1 {
                return 0.0;
            }
            let mut sums = vec![0.0; clusters.len()];
            for (j, r) in samples.iter().enumerate() {
                if j != i {
                    sums[slot(labels[j])] += euclidean(&samples[i], r);
                }
            }
            let a = sums[own] / (sizes[own] - 1) as f64;
            let b = (0..clusters.len())
                .filter(|&c| c != own)
                .map(|c| sums[c] / sizes[c] as f64)
                .fold(f64::INFINITY, f64::min);
            let m = a.max(b);
            if m > 0.0 {
                (b - a) / m
            } else {
                0.0
            }
        })
        .collect();
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

/// 1-based ranks with ties sharing their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::ConstantInput);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

pub fn spearman_rho(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Length(x.len(), y.len()));
    }
    if x.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "Spearman correlation needs at least 3 pairs, got {}",
            x.len()
        )));
    }
    pearson(&average_ranks(x), &average_ranks(y))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KruskalWallis {
    pub h: f64,
    pub p_value: f64,
    pub n: usize,
    pub groups: usize,
}

/// Tie-corrected Kruskal–Wallis H with a chi-squared(k-1) p-value.
pub fn kruskal_wallis(groups: &[Vec<f64>]) -> Result<KruskalWallis> {
    if groups.len() < 2 {
        return Err(Error::GroupCount {
            min: 2,
            got: groups.len(),
        });
    }
    if groups.iter().any(Vec::is_empty) {
        return Err(Error::InsufficientData("empty Kruskal–Wallis group".into()));
    }
    let all: Vec<f64> = groups.iter().flatten().copied().collect();
    let n = all.len();
    if n < 3 {
        return Err(Error::InsufficientData(format!(
            "Kruskal–Wallis needs at least 3 observations, got {n}"
        )));
    }
    if all.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidFeature("non-finite observation".into()));
    }
    let ranks = average_ranks(&all);
    let nf = n as f64;
    let mut offset = 0;
    let mut sum = 0.0;
    for g in groups {
        let r: f64 = ranks[offset..offset + g.len()].iter().sum();
        sum += r * r / g.len() as f64;
        offset += g.len();
    }
    let h_raw = 12.0 / (nf * (nf + 1.0)) * sum - 3.0 * (nf + 1.0);
    let mut sorted = all.clone();
    sorted.sort_by(f64::total_cmp);
    let mut ties = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        ties += t * t * t - t;
        i = j + 1;
    }
    let correction = 1.0 - ties / (nf * nf * nf - nf);
    let h = if correction > 0.0 {
        (h_raw / correction).max(0.0)
    } else {
        0.0
    };
    let dof = (groups.len() - 1) as f64;
    Ok(KruskalWallis {
        h,
        p_value: chi2_sf(h, dof),
        n,
        groups: groups.len(),
    })
}

/// Rank epsilon-squared, `H / (n - 1)` clamped to [0, 1].
pub fn epsilon_squared(h: f64, n: usize) -> f64 {
    if n < 2 {
        return 0.0;
    }
    (h / (n as f64 - 1.0)).clamp(0.0, 1.0)
}

pub fn effect_band(eps2: f64) -> &'static str {
    match eps2 {
        e if e >= EFFECT_BANDS[2] => "large",
        e if e >= EFFECT_BANDS[1] => "medium",
        e if e >= EFFECT_BANDS[0] => "small",
        _ => "negligible",
    }
}

/// Benjamini–Hochberg step-up q-values, returned in input order.
pub fn bh_fdr(p_values: &[f64]) -> Result<Vec<f64>> {
    if let Some((index, &value)) = p_values
        .iter()
        .enumerate()
        .find(|(_, p)| !(0.0..=1.0).contains(*p))
    {
        return Err(Error::Range { index, value });
    }
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p_values[a].total_cmp(&p_values[b]).then(a.cmp(&b)));
    let mut q = vec![0.0; m];
    let mut running = 1.0f64;
    for (rank, &i) in order.iter().enumerate().rev() {
        // max(p) guards against rounding below p when m == rank + 1.
        let scaled = (p_values[i] * m as f64 / (rank + 1) as f64).max(p_values[i]);
        running = running.min(scaled);
        q[i] = running.min(1.0);
    }
    Ok(q)
}

/// One Kruskal–Wallis cell of the significance table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceRecord {
    pub dataset: String,
    pub generator: String,
    pub metric: String,
    pub factor: String,
    pub h: f64,
    pub epsilon_squared: f64,
    pub p_value: f64,
    pub q_value: f64,
    pub significant: bool,
}

// Lanczos approximation, g = 7, n = 9.
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let t = x + 7.5;
    let mut a = LANCZOS[0];
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

const GAMMA_EPS: f64 = 1e-16;
const GAMMA_MAX_ITER: usize = 10_000;

fn gamma_p_series(a: f64, x: f64) -> f64 {
    let mut term = 1.0 / a;
    let mut sum = term;
    let mut ap = a;
    for _ in 0..GAMMA_MAX_ITER {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * GAMMA_EPS {
            break;
        }
    }
    (sum.ln() - x + a * x.ln() - ln_gamma(a)).exp()
}

// Modified Lentz evaluation of the continued fraction for Q(a, x).
fn gamma_q_fraction(a: f64, x: f64) -> f64 {
    let tiny = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / tiny;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..GAMMA_MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < tiny {
            d = tiny;
        }
        c = b + an / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < GAMMA_EPS {
            break;
        }
    }
    (-x + a * x.ln() - ln_gamma(a)).exp() * h
}

/// Regularized upper incomplete gamma Q(a, x).
pub fn gamma_q(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < a + 1.0 {
        1.0 - gamma_p_series(a, x)
    } else {
        gamma_q_fraction(a, x)
    }
}

/// Survival function of the chi-squared distribution.
pub fn chi2_sf(x: f64, dof: f64) -> f64 {
    gamma_q(dof / 2.0, x / 2.0).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_rows(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect()
    }

    #[test]
    fn two_point_summary() {
        let s = gaussian_summary(&[vec![0.0, 0.0], vec![2.0, 2.0]]).unwrap();
        assert_eq!(s.mean.as_slice(), &[1.0, 1.0]);
        assert_eq!(
            s.covariance,
            DMatrix::from_row_slice(2, 2, &[2.0, 2.0, 2.0, 2.0])
        );
        assert!(matches!(
            gaussian_summary(&[vec![1.0]]),
            Err(Error::InsufficientData(_))
        ));
        let z = gaussian_summary(&vec![vec![3.0, 1.0]; 5]).unwrap();
        assert!(z.covariance.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn summary_matches_two_pass_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rows = random_rows(&mut rng, 40, 5);
        let s = gaussian_summary(&rows).unwrap();
        let n = rows.len() as f64;
        for i in 0..5 {
            let mi = rows.iter().map(|r| r[i]).sum::<f64>() / n;
            assert!((s.mean[i] - mi).abs() < 1e-12);
            for j in 0..5 {
                let mj = rows.iter().map(|r| r[j]).sum::<f64>() / n;
                let c = rows.iter().map(|r| (r[i] - mi) * (r[j] - mj)).sum::<f64>() / (n - 1.0);
                assert!((s.covariance[(i, j)] - c).abs() < 1e-10);
            }
        }
    }

    fn gauss(mean: Vec<f64>, diag: &[f64]) -> GaussianSummary {
        let d = diag.len();
        GaussianSummary::new(
            mean,
            DMatrix::from_diagonal(&DVector::from_row_slice(diag)),
            d + 10,
        )
        .unwrap()
    }

    #[test]
    fn frechet_closed_forms() {
        let a = gauss(vec![0.0], &[1.0]);
        let b = gauss(vec![3.0], &[4.0]);
        assert!((frechet_distance(&a, &b).unwrap() - 10.0).abs() < 1e-10);
        assert!(frechet_distance(&a, &a).unwrap().abs() < 1e-8);
        let a = gauss(vec![0.0, 0.0], &[1.0, 1.0]);
        let b = gauss(vec![1.0, 1.0], &[4.0, 4.0]);
        assert!((frechet_distance(&a, &b).unwrap() - 4.0).abs() < 1e-10);
        let c = gauss(vec![0.0], &[1.0]);
        assert!(matches!(
            frechet_distance(&a, &c),
            Err(Error::DimMismatch { .. })
        ));
    }

    #[test]
    fn frechet_symmetric_on_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let a = gaussian_summary(&random_rows(&mut rng, 30, 6)).unwrap();
            let b = gaussian_summary(&random_rows(&mut rng, 30, 6)).unwrap();
            let ab = frechet_distance(&a, &b).unwrap();
            let ba = frechet_distance(&b, &a).unwrap();
            assert!((ab - ba).abs() < 1e-8, "{ab} vs {ba}");
            assert!(frechet_distance(&a, &a).unwrap().abs() < 1e-8);
        }
    }

    #[test]
    fn frechet_handles_rank_deficient_covariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = gaussian_summary(&random_rows(&mut rng, 5, 20)).unwrap();
        let b = gaussian_summary(&random_rows(&mut rng, 5, 20)).unwrap();
        let d = frechet_distance(&a, &b).unwrap();
        assert!(d.is_finite() && d > 0.0);
    }

    #[test]
    fn pca_rank_one_line() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, 2.0 * i as f64]).collect();
        let p = pca_fit_transform(&rows, 1).unwrap();
        assert!((p.explained_variance_ratio[0] - 1.0).abs() < 1e-12);
        let c = &p.components[0];
        assert!(
            (c[0] - 1.0 / 5f64.sqrt()).abs() < 1e-12 && (c[1] - 2.0 / 5f64.sqrt()).abs() < 1e-12
        );
        assert!(matches!(
            pca_fit_transform(&rows, 3),
            Err(Error::Dim {
                requested: 3,
                available: 2
            })
        ));
    }

    #[test]
    fn pca_full_rank_reconstructs_centered_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let rows = random_rows(&mut rng, 30, 4);
        let p = pca_fit_transform(&rows, 4).unwrap();
        for (r, z) in rows.iter().zip(&p.projected) {
            for (j, rj) in r.iter().enumerate() {
                let back: f64 = (0..4).map(|k| z[k] * p.components[k][j]).sum();
                assert!((back - (rj - p.mean[j])).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn silhouette_hand_cases() {
        let rows = vec![vec![0.0], vec![0.0], vec![10.0], vec![10.0]];
        assert!((silhouette_score(&rows, &[0, 0, 1, 1]).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(
            silhouette_score(&rows, &[1, 1, 1, 1]),
            Err(Error::SingleCluster)
        ));
        // Singleton cluster scores 0 for its member.
        let rows = vec![vec![0.0], vec![1.0], vec![10.0]];
        let s = silhouette_score(&rows, &[0, 0, 1]).unwrap();
        let expect = ((10.0 - 1.0) / 10.0 + (9.0 - 1.0) / 9.0 + 0.0) / 3.0;
        assert!((s - expect).abs() < 1e-12);
    }

    #[test]
    fn silhouette_same_distribution_is_near_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rows = random_rows(&mut rng, 200, 3);
        let labels: Vec<u8> = (0..200).map(|i| (i % 2) as u8).collect();
        assert!(silhouette_score(&rows, &labels).unwrap().abs() < 0.1);
    }

    #[test]
    fn spearman_cases() {
        assert_eq!(
            spearman_rho(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap(),
            0.8
        );
        let x: Vec<f64> = (1..=6).map(f64::from).collect();
        let sq: Vec<f64> = x.iter().map(|v| v * v).collect();
        let rev: Vec<f64> = x.iter().rev().copied().collect();
        assert!((spearman_rho(&x, &sq).unwrap() - 1.0).abs() < 1e-15);
        assert!((spearman_rho(&x, &rev).unwrap() + 1.0).abs() < 1e-15);
        assert!(matches!(
            spearman_rho(&x, &[2.0; 6]),
            Err(Error::ConstantInput)
        ));
    }

    #[test]
    fn kruskal_wallis_hand_case() {
        let r = kruskal_wallis(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]).unwrap();
        assert!((r.h - 27.0 / 7.0).abs() < 1e-9);
        assert!((epsilon_squared(r.h, 6) - 0.7714).abs() < 1e-4);
        let same = kruskal_wallis(&[vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0]]).unwrap();
        assert!(same.h.abs() < 1e-12);
        assert!((same.p_value - 1.0).abs() < 1e-12);
        assert!(matches!(
            kruskal_wallis(&[vec![1.0, 2.0]]),
            Err(Error::GroupCount { .. })
        ));
    }

    #[test]
    fn kruskal_wallis_all_tied() {
        let r = kruskal_wallis(&[vec![0.9, 0.9], vec![0.9, 0.9, 0.9]]).unwrap();
        assert_eq!(r.h, 0.0);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn kruskal_wallis_matches_rank_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..50 {
            let k = rng.random_range(2..5);
            let groups: Vec<Vec<f64>> = (0..k)
                .map(|_| {
                    (0..rng.random_range(1..8))
                        .map(|_| f64::from(rng.random_range(0..6u8)))
                        .collect()
                })
                .collect();
            let all: Vec<f64> = groups.iter().flatten().copied().collect();
            if all.len() < 3 {
                continue;
            }
            // Ranks by counting: rank = #less + (#equal + 1) / 2.
            let rank = |v: f64| {
                let less = all.iter().filter(|&&w| w < v).count() as f64;
                let eq = all.iter().filter(|&&w| w == v).count() as f64;
                less + (eq + 1.0) / 2.0
            };
            let n = all.len() as f64;
            let rbar = (n + 1.0) / 2.0;
            let num: f64 = groups
                .iter()
                .map(|g| {
                    let m = g.iter().map(|&v| rank(v)).sum::<f64>() / g.len() as f64;
                    g.len() as f64 * (m - rbar).powi(2)
                })
                .sum();
            let den: f64 = all.iter().map(|&v| (rank(v) - rbar).powi(2)).sum();
            let oracle = if den > 0.0 {
                (n - 1.0) * num / den
            } else {
                0.0
            };
            let h = kruskal_wallis(&groups).unwrap().h;
            assert!((h - oracle).abs() < 1e-10, "{h} vs {oracle}");
        }
    }

    #[test]
    fn epsilon_squared_bounds() {
        assert_eq!(epsilon_squared(0.0, 10), 0.0);
        assert_eq!(epsilon_squared(9.0, 10), 1.0);
        assert_eq!(epsilon_squared(20.0, 10), 1.0);
    }

    #[test]
    fn bh_cases() {
        assert_eq!(
            bh_fdr(&[0.005, 0.01, 0.03, 0.04]).unwrap(),
            vec![0.02, 0.02, 0.04, 0.04]
        );
        assert_eq!(bh_fdr(&[1.0; 5]).unwrap(), vec![1.0; 5]);
        assert_eq!(bh_fdr(&[0.3]).unwrap(), vec![0.3]);
        assert!(matches!(
            bh_fdr(&[0.1, 1.2]),
            Err(Error::Range { index: 1, .. })
        ));
        assert!(matches!(
            bh_fdr(&[f64::NAN]),
            Err(Error::Range { index: 0, .. })
        ));
    }

    #[test]
    fn chi2_against_statrs() {
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        for dof in [1.0, 2.0, 3.0, 5.0, 10.0, 30.0] {
            let dist = ChiSquared::new(dof).unwrap();
            for x in [0.01, 0.5, 1.0, 2.5, 3.857, 7.0, 15.0, 40.0, 80.0] {
                let ours = chi2_sf(x, dof);
                let theirs = dist.sf(x);
                let rel = (ours - theirs).abs() / theirs.max(1e-300);
                assert!(rel < 1e-9, "dof {dof} x {x}: {ours} vs {theirs}");
            }
        }
    }

    #[test]
    fn ln_gamma_against_statrs() {
        for x in [0.1, 0.5, 1.0, 1.5, 2.0, 3.7, 10.0, 50.5, 170.0] {
            let r = statrs::function::gamma::ln_gamma(x);
            assert!((ln_gamma(x) - r).abs() < 1e-12 * r.abs().max(1.0), "{x}");
        }
    }

    proptest! {
        #[test]
        fn bh_monotone_and_dominating(ps in prop::collection::vec(0.0f64..=1.0, 1..40)) {
            let q = bh_fdr(&ps).unwrap();
            let mut idx: Vec<usize> = (0..ps.len()).collect();
            idx.sort_by(|&a, &b| ps[a].total_cmp(&ps[b]));
            for w in idx.windows(2) {
                prop_assert!(q[w[0]] <= q[w[1]]);
            }
            for (p, q) in ps.iter().zip(&q) {
                prop_assert!(q >= p && *q <= 1.0);
            }
        }

        #[test]
        fn kw_invariant_under_monotone_maps(
            a in prop::collection::vec(-5.0f64..5.0, 2..8),
            b in prop::collection::vec(-5.0f64..5.0, 2..8),
        ) {
            let base = kruskal_wallis(&[a.clone(), b.clone()]).unwrap();
            let f = |v: &Vec<f64>| v.iter().map(|x| x.exp() * 3.0 + 1.0).collect::<Vec<_>>();
            let mapped = kruskal_wallis(&[f(&a), f(&b)]).unwrap();
            prop_assert!((base.h - mapped.h).abs() < 1e-9);
        }

        #[test]
        fn spearman_self_is_one(x in prop::collection::vec(-100.0f64..100.0, 3..30)) {
            prop_assume!(x.iter().any(|v| *v != x[0]));
            prop_assert!((spearman_rho(&x, &x).unwrap() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn epsilon_squared_monotone(h1 in 0.0f64..50.0, h2 in 0.0f64..50.0, n in 2usize..100) {
            let (lo, hi) = if h1 <= h2 { (h1, h2) } else { (h2, h1) };
            prop_assert!(epsilon_squared(lo, n) <= epsilon_squared(hi, n));
        }
    }
}
