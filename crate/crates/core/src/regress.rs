//! Ordinary least squares with adjusted R², coefficient t-tests and
//! ablation-based relative importance.

use std::fmt::Write as _;

use rayon::prelude::*;
use statrs::function::gamma::ln_gamma;

use crate::embedding::VectorTable;
use crate::kinship::{self, ComponentialAnnotation, TRAITS};
use crate::semspace;

/// Significance threshold used for the report flags.
pub const ALPHA: f64 = 0.05;

/// Relative size under which a triangular pivot is treated as zero.
const RANK_TOL: f64 = 1e-9;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum RegressError {
    #[error("need n > p + 1 observations (n = {n}, p = {p})")]
    TooFewObservations { n: usize, p: usize },
    #[error("design matrix is rank deficient: `{dependent}` is collinear with {others:?}")]
    RankDeficient { dependent: String, others: Vec<String> },
    #[error("invalid dataset: {0}")]
    Invalid(String),
    #[error("ablation importance undefined: full-model adjusted R² is {0}")]
    NonPositiveFit(f64),
    #[error(transparent)]
    Kinship(#[from] kinship::KinshipError),
    #[error(transparent)]
    Semspace(#[from] semspace::SemspaceError),
}

pub type Result<T> = std::result::Result<T, RegressError>;

/// Observations: one row of predictors and one response each.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    predictors: Vec<String>,
    rows: Vec<Vec<f64>>,
    response: Vec<f64>,
}

impl Dataset {
    pub fn new(predictors: Vec<String>, rows: Vec<Vec<f64>>, response: Vec<f64>) -> Result<Self> {
        if rows.len() != response.len() {
            return Err(RegressError::Invalid(format!(
                "{} rows but {} responses",
                rows.len(),
                response.len()
            )));
        }
        if let Some(r) = rows.iter().find(|r| r.len() != predictors.len()) {
            return Err(RegressError::Invalid(format!(
                "row has {} values for {} predictors",
                r.len(),
                predictors.len()
            )));
        }
        if rows.iter().flatten().chain(&response).any(|v| !v.is_finite()) {
            return Err(RegressError::Invalid("missing or non-finite value".into()));
        }
        let (n, p) = (rows.len(), predictors.len());
        if n <= p + 1 {
            return Err(RegressError::TooFewObservations { n, p });
        }
        Ok(Self {
            predictors,
            rows,
            response,
        })
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn p(&self) -> usize {
        self.predictors.len()
    }

    pub fn predictors(&self) -> &[String] {
        &self.predictors
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn response(&self) -> &[f64] {
        &self.response
    }

    /// Same data with predictor `j` dropped.
    pub fn without(&self, j: usize) -> Self {
        let mut predictors = self.predictors.clone();
        predictors.remove(j);
        let rows = self
            .rows
            .iter()
            .map(|r| {
                let mut r = r.clone();
                r.remove(j);
                r
            })
            .collect();
        Self {
            predictors,
            rows,
            response: self.response.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionFit {
    /// `intercept` followed by the predictor names.
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub t_stats: Vec<f64>,
    pub p_values: Vec<f64>,
    pub r2: f64,
    pub adj_r2: f64,
    pub residuals: Vec<f64>,
    pub n: usize,
    pub p: usize,
    /// Overall F statistic and its p-value (NaN when there are no slopes).
    pub f_stat: f64,
    pub f_pvalue: f64,
    /// Residual variance is zero; p-values are 0 for nonzero coefficients.
    pub exact_fit: bool,
}

impl RegressionFit {
    pub fn df(&self) -> usize {
        self.n - self.p - 1
    }

    pub fn slopes(&self) -> &[f64] {
        &self.coefficients[1..]
    }
}

/// `1 − (1 − r2)(n − 1)/(n − p − 1)`; the intercept-only model (`p = 0`) is 0.
pub fn adjusted_r2(r2: f64, n: usize, p: usize) -> Result<f64> {
    if n <= p + 1 {
        return Err(RegressError::TooFewObservations { n, p });
    }
    if p == 0 {
        return Ok(0.0);
    }
    Ok(1.0 - (1.0 - r2) * (n as f64 - 1.0) / ((n - p - 1) as f64))
}

/// Householder QR of the column-major matrix `cols` (n × m), applied to `y`.
/// Returns the m × m upper triangle and the first m entries of Qᵀy.
fn householder(mut cols: Vec<Vec<f64>>, mut y: Vec<f64>) -> (Vec<Vec<f64>>, Vec<f64>, Vec<f64>) {
    let n = y.len();
    let m = cols.len();
    let col_norms: Vec<f64> = cols
        .iter()
        .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    let mut r = vec![vec![0.0; m]; m];
    for k in 0..m {
        let norm = cols[k][k..].iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            let alpha = if cols[k][k] > 0.0 { -norm } else { norm };
            let mut v: Vec<f64> = cols[k][k..].to_vec();
            v[0] -= alpha;
            let vv: f64 = v.iter().map(|x| x * x).sum();
            if vv > 0.0 {
                let reflect = |target: &mut [f64]| {
                    let s = 2.0 * v.iter().zip(target.iter()).map(|(a, b)| a * b).sum::<f64>() / vv;
                    for (t, a) in target.iter_mut().zip(&v) {
                        *t -= s * a;
                    }
                };
                for col in cols.iter_mut().skip(k) {
                    reflect(&mut col[k..]);
                }
                reflect(&mut y[k..]);
            }
        }
        for (j, col) in cols.iter().enumerate().skip(k) {
            r[k][j] = col[k];
        }
    }
    debug_assert!(m <= n);
    y.truncate(m);
    (r, y, col_norms)
}

fn back_substitute(r: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let m = b.len();
    let mut x = vec![0.0; m];
    for i in (0..m).rev() {
        let s: f64 = (i + 1..m).map(|j| r[i][j] * x[j]).sum();
        x[i] = (b[i] - s) / r[i][i];
    }
    x
}

/// Fits `y = b0 + Σ bj xj` by Householder QR.
pub fn ols_fit(data: &Dataset) -> Result<RegressionFit> {
    let (n, p) = (data.n(), data.p());
    if n <= p + 1 {
        return Err(RegressError::TooFewObservations { n, p });
    }
    let m = p + 1;
    let names: Vec<String> = std::iter::once("intercept".to_owned())
        .chain(data.predictors.iter().cloned())
        .collect();
    let mut cols = vec![vec![1.0; n]];
    for j in 0..p {
        cols.push(data.rows.iter().map(|r| r[j]).collect());
    }
    let (r, qty, col_norms) = householder(cols, data.response.clone());

    for k in 0..m {
        if r[k][k].abs() <= RANK_TOL * col_norms[k] || col_norms[k] == 0.0 {
            let others = if k == 0 {
                Vec::new()
            } else {
                let rk: Vec<Vec<f64>> = r[..k].iter().map(|row| row[..k].to_vec()).collect();
                let rhs: Vec<f64> = (0..k).map(|i| r[i][k]).collect();
                back_substitute(&rk, &rhs)
                    .iter()
                    .enumerate()
                    .filter(|(_, z)| z.abs() > 1e-8)
                    .map(|(i, _)| names[i].clone())
                    .collect()
            };
            return Err(RegressError::RankDeficient {
                dependent: names[k].clone(),
                others,
            });
        }
    }

    let coefficients = back_substitute(&r, &qty);
    let residuals: Vec<f64> = data
        .rows
        .iter()
        .zip(&data.response)
        .map(|(row, y)| {
            let fitted = coefficients[0]
                + row.iter().zip(&coefficients[1..]).map(|(x, b)| x * b).sum::<f64>();
            y - fitted
        })
        .collect();
    let ssr: f64 = residuals.iter().map(|e| e * e).sum();
    let mean = data.response.iter().sum::<f64>() / n as f64;
    let sst: f64 = data.response.iter().map(|y| (y - mean).powi(2)).sum();
    let r2 = if sst > 0.0 { (1.0 - ssr / sst).clamp(0.0, 1.0) } else { 0.0 };
    let adj_r2 = adjusted_r2(r2, n, p)?;

    // diag((RᵀR)⁻¹) through the inverse of R
    let mut rinv = vec![vec![0.0; m]; m];
    for c in 0..m {
        let e: Vec<f64> = (0..m).map(|i| if i == c { 1.0 } else { 0.0 }).collect();
        let col = back_substitute(&r, &e);
        for i in 0..m {
            rinv[i][c] = col[i];
        }
    }
    let df = (n - p - 1) as f64;
    let sigma2 = ssr / df;
    let scale: f64 = data.response.iter().map(|y| y * y).sum::<f64>().max(f64::MIN_POSITIVE);
    let exact_fit = ssr <= 1e-24 * scale;
    let std_errors: Vec<f64> = (0..m)
        .map(|i| (sigma2 * rinv[i].iter().map(|v| v * v).sum::<f64>()).sqrt())
        .collect();
    let t_stats: Vec<f64> = coefficients
        .iter()
        .zip(&std_errors)
        .map(|(b, se)| if *se > 0.0 { b / se } else { 0.0 })
        .collect();
    let (f_stat, f_pvalue) = if p == 0 || exact_fit {
        (f64::NAN, f64::NAN)
    } else {
        let f = (r2 / p as f64) / ((1.0 - r2) / df);
        (f, f_survival(f, p as f64, df))
    };
    let mut fit = RegressionFit {
        names,
        coefficients,
        std_errors,
        t_stats,
        p_values: Vec::new(),
        r2,
        adj_r2,
        residuals,
        n,
        p,
        f_stat,
        f_pvalue,
        exact_fit,
    };
    fit.p_values = coefficient_pvalues(&fit);
    Ok(fit)
}

/// Two-sided Student-t p-values of the coefficients.
///
/// For an exact fit the residual variance is zero, so coefficients that are
/// numerically nonzero get p = 0 and the others p = 1; `exact_fit` flags it.
pub fn coefficient_pvalues(fit: &RegressionFit) -> Vec<f64> {
    let df = fit.df() as f64;
    if fit.exact_fit {
        let scale = fit.coefficients.iter().fold(1.0f64, |m, b| m.max(b.abs()));
        return fit
            .coefficients
            .iter()
            .map(|b| if b.abs() > 1e-10 * scale { 0.0 } else { 1.0 })
            .collect();
    }
    fit.t_stats.iter().map(|&t| student_t_two_sided(t, df)).collect()
}

/// `P(|T| > |t|)` for Student's t with `df` degrees of freedom.
pub fn student_t_two_sided(t: f64, df: f64) -> f64 {
    if t.is_nan() {
        return f64::NAN;
    }
    if t.is_infinite() {
        return 0.0;
    }
    reg_inc_beta(df / 2.0, 0.5, df / (df + t * t))
}

/// Upper tail of the F distribution.
pub fn f_survival(f: f64, d1: f64, d2: f64) -> f64 {
    if f <= 0.0 {
        return 1.0;
    }
    reg_inc_beta(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * f))
}

/// Regularized incomplete beta `I_x(a, b)` by Lentz's continued fraction.
pub fn reg_inc_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    if x < (a + 1.0) / (a + b + 2.0) {
        ln_front.exp() * beta_cf(a, b, x) / a
    } else {
        1.0 - ln_front.exp() * beta_cf(b, a, 1.0 - x) / b
    }
}

fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..100_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        for aa in [
            m * (b - m) * x / ((qam + m2) * (a + m2)),
            -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2)),
        ] {
            d = 1.0 + aa * d;
            if d.abs() < TINY {
                d = TINY;
            }
            c = 1.0 + aa / c;
            if c.abs() < TINY {
                c = TINY;
            }
            d = 1.0 / d;
            h *= d * c;
        }
        if (d * c - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationReport {
    pub full_adj_r2: f64,
    /// Predictor name, adjusted R² without it, and relative change
    /// `(adj_without − adj_full) / adj_full` (negative means a loss).
    pub importances: Vec<(String, f64, f64)>,
}

impl AblationReport {
    pub fn importance(&self, predictor: &str) -> Option<f64> {
        self.importances
            .iter()
            .find(|(n, _, _)| n == predictor)
            .map(|(_, _, i)| *i)
    }

    /// Predictor with the largest relative loss.
    pub fn dominant(&self) -> Option<&str> {
        self.importances
            .iter()
            .max_by(|a, b| a.2.abs().total_cmp(&b.2.abs()))
            .map(|(n, _, _)| n.as_str())
    }
}

/// Refits without each predictor in turn and reports the relative change of
/// adjusted R².
pub fn ablation_importance(data: &Dataset) -> Result<AblationReport> {
    let full = ols_fit(data)?;
    ablation_from_fit(data, &full)
}

fn ablation_from_fit(data: &Dataset, full: &RegressionFit) -> Result<AblationReport> {
    if !(full.adj_r2 > 0.0) {
        return Err(RegressError::NonPositiveFit(full.adj_r2));
    }
    let refits = (0..data.p())
        .into_par_iter()
        .map(|j| {
            let reduced = data.without(j);
            let adj = if reduced.p() == 0 {
                0.0
            } else {
                ols_fit(&reduced)?.adj_r2
            };
            Ok((data.predictors[j].clone(), adj, (adj - full.adj_r2) / full.adj_r2))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AblationReport {
        full_adj_r2: full.adj_r2,
        importances: refits,
    })
}

/// One model's regression of pair similarity on trait differences.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionReport {
    pub model_id: String,
    pub dataset: Dataset,
    pub pair_labels: Vec<(String, String)>,
    pub fit: RegressionFit,
    /// `None` when the full model has no explanatory power.
    pub ablation: Option<AblationReport>,
    pub all_slopes_negative: bool,
    pub all_significant: bool,
}

/// Builds the all-pairs dataset (trait differences against cosine
/// similarity) and runs the fit, t-tests and ablation.
pub fn fit_similarity_model(
    lexicon: &[ComponentialAnnotation],
    table: &VectorTable,
    model_id: &str,
) -> Result<RegressionReport> {
    let pairs = kinship::all_pairs(lexicon)?;
    let mut rows = Vec::with_capacity(pairs.len());
    let mut response = Vec::with_capacity(pairs.len());
    let mut pair_labels = Vec::with_capacity(pairs.len());
    for pair in &pairs {
        rows.push(pair.predictors().to_vec());
        response.push(semspace::word_cosine(table, &pair.term_a, &pair.term_b)?);
        pair_labels.push((pair.term_a.clone(), pair.term_b.clone()));
    }
    let dataset = Dataset::new(TRAITS.iter().map(|s| s.to_string()).collect(), rows, response)?;
    let fit = ols_fit(&dataset)?;
    let ablation = match ablation_from_fit(&dataset, &fit) {
        Ok(a) => Some(a),
        Err(RegressError::NonPositiveFit(_)) => None,
        Err(e) => return Err(e),
    };
    let all_slopes_negative = fit.slopes().iter().all(|b| *b < 0.0);
    let all_significant = fit.p_values[1..].iter().all(|p| *p < ALPHA);
    Ok(RegressionReport {
        model_id: model_id.to_owned(),
        dataset,
        pair_labels,
        fit,
        ablation,
        all_slopes_negative,
        all_significant,
    })
}

/// Summary table: model, adjusted R², then one importance column per trait.
pub fn summary_table(reports: &[RegressionReport]) -> String {
    let mut out = String::from("model\tadj_r2");
    for t in TRAITS {
        let _ = write!(out, "\t{t}");
    }
    out.push('\n');
    for r in reports {
        let _ = write!(out, "{}\t{:.3}", r.model_id, r.fit.adj_r2);
        for t in TRAITS {
            match r.ablation.as_ref().and_then(|a| a.importance(t)) {
                Some(v) => {
                    let _ = write!(out, "\t{v:.2}");
                }
                None => out.push_str("\tNA"),
            }
        }
        out.push('\n');
    }
    out
}

/// Per-coefficient table: estimate, standard error, t and p.
pub fn coefficient_table(reports: &[RegressionReport]) -> String {
    let mut out = String::from("model\tterm\testimate\tstd_error\tt\tp\n");
    for r in reports {
        let f = &r.fit;
        for i in 0..f.names.len() {
            let _ = writeln!(
                out,
                "{}\t{}\t{:.6}\t{:.6}\t{:.3}\t{:.3e}",
                r.model_id, f.names[i], f.coefficients[i], f.std_errors[i], f.t_stats[i], f.p_values[i]
            );
        }
    }
    out
}
