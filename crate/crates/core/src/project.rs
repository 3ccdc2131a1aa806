//! Exact t-SNE of a cosine-distance matrix, marker styling and plot export.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use rand::SeedableRng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::embedding::VectorTable;
use crate::kinship::{ComponentialAnnotation, Genre};
use crate::rng::{self, purpose};
use crate::semspace;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ProjectError {
    #[error("invalid distance matrix: {0}")]
    BadMatrix(String),
    #[error("distance row is degenerate (all zero)")]
    DegenerateRow,
    #[error("perplexity {perplexity} must be below n − 1 = {limit}")]
    PerplexityTooLarge { perplexity: f64, limit: usize },
    #[error("invalid t-SNE setting: {0}")]
    BadConfig(String),
    #[error("unknown marker trait `{0}` (expected `genre` or `generation`)")]
    UnknownTrait(String),
    #[error(transparent)]
    Semspace(#[from] semspace::SemspaceError),
}

pub type Result<T> = std::result::Result<T, ProjectError>;

/// Symmetric matrix of `1 − cos` values with a zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    terms: Vec<String>,
    data: Vec<f64>,
}

impl DistanceMatrix {
    pub fn new(terms: Vec<String>, data: Vec<f64>) -> Result<Self> {
        let n = terms.len();
        if data.len() != n * n {
            return Err(ProjectError::BadMatrix(format!("{} values for {n} terms", data.len())));
        }
        for i in 0..n {
            if data[i * n + i] != 0.0 {
                return Err(ProjectError::BadMatrix(format!("nonzero diagonal at {i}")));
            }
            for j in 0..n {
                let v = data[i * n + j];
                if !(0.0..=2.0).contains(&v) {
                    return Err(ProjectError::BadMatrix(format!("entry ({i},{j}) = {v} outside [0, 2]")));
                }
                if (v - data[j * n + i]).abs() > 1e-12 {
                    return Err(ProjectError::BadMatrix(format!("asymmetric at ({i},{j})")));
                }
            }
        }
        Ok(Self { terms, data })
    }

    /// Cosine distances between `terms` in `table`.
    pub fn from_table<S: AsRef<str>>(table: &VectorTable, terms: &[S]) -> Result<Self> {
        let n = terms.len();
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let c = semspace::word_cosine(table, terms[i].as_ref(), terms[j].as_ref())?;
                let d = (1.0 - c).clamp(0.0, 2.0);
                data[i * n + j] = d;
                data[j * n + i] = d;
            }
        }
        Self::new(terms.iter().map(|t| t.as_ref().to_owned()).collect(), data)
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.len() + j]
    }

    /// Distances from `i` to every other point, in index order.
    pub fn row_without_self(&self, i: usize) -> Vec<f64> {
        (0..self.len()).filter(|&j| j != i).map(|j| self.get(i, j)).collect()
    }

    /// Relabels points: new point `k` is old point `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let n = self.len();
        let mut data = vec![0.0; n * n];
        for a in 0..n {
            for b in 0..n {
                data[a * n + b] = self.get(perm[a], perm[b]);
            }
        }
        Self {
            terms: perm.iter().map(|&k| self.terms[k].clone()).collect(),
            data,
        }
    }
}

/// How input distances enter the Gaussian kernel `exp(−β·x)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceMode {
    /// `x = d`: the distance is used as a squared-distance surrogate.
    #[default]
    Direct,
    /// `x = d²`.
    Squared,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub exaggeration: f64,
    pub exaggeration_iters: usize,
    pub momentum: f64,
    pub final_momentum: f64,
    pub momentum_switch: usize,
    pub seed: u64,
    pub distance_mode: DistanceMode,
    /// Perplexity calibration tolerance and iteration cap.
    pub calibration_tol: f64,
    pub calibration_max_iter: usize,
}

impl Default for TsneConfig {
    fn default() -> Self {
        Self {
            perplexity: 5.0,
            iterations: 1000,
            learning_rate: 200.0,
            exaggeration: 12.0,
            exaggeration_iters: 250,
            momentum: 0.5,
            final_momentum: 0.8,
            momentum_switch: 250,
            seed: 42,
            distance_mode: DistanceMode::Direct,
            calibration_tol: 1e-5,
            calibration_max_iter: 50,
        }
    }
}

impl TsneConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        let positive = [
            ("perplexity", self.perplexity),
            ("learning_rate", self.learning_rate),
            ("exaggeration", self.exaggeration),
            ("momentum", self.momentum),
            ("final_momentum", self.final_momentum),
            ("calibration_tol", self.calibration_tol),
            ("iterations", self.iterations as f64),
            ("calibration_max_iter", self.calibration_max_iter as f64),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ProjectError::BadConfig(format!("{name} must be positive")));
            }
        }
        if n < 3 || self.perplexity >= (n - 1) as f64 {
            return Err(ProjectError::PerplexityTooLarge {
                perplexity: self.perplexity,
                limit: n.saturating_sub(1),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    /// Kernel precision β = 1/(2σ²).
    pub beta: f64,
    pub sigma: f64,
    pub probs: Vec<f64>,
    /// 2^H of `probs`.
    pub perplexity: f64,
    pub converged: bool,
}

fn kernel_row(row: &[f64], beta: f64) -> (Vec<f64>, f64) {
    let min = row.iter().copied().fold(f64::INFINITY, f64::min);
    let w: Vec<f64> = row.iter().map(|d| (-beta * (d - min)).exp()).collect();
    let z: f64 = w.iter().sum();
    let probs: Vec<f64> = w.iter().map(|x| x / z).collect();
    let mean_shift: f64 = probs.iter().zip(row).map(|(p, d)| p * (d - min)).sum();
    // entropy in nats: ln Z + β E[d − min]
    let h = z.ln() + beta * mean_shift;
    (probs, h)
}

/// Binary search on the kernel precision so that the conditional
/// distribution over `row` reaches `target_perplexity` within `tol`.
///
/// `row` holds the (kernel-ready) distances to the other points.
pub fn calibrate_sigma(row: &[f64], target_perplexity: f64, tol: f64, max_iter: usize) -> Result<Calibration> {
    if row.len() < 2 || row.iter().any(|d| !d.is_finite() || *d < 0.0) {
        return Err(ProjectError::BadMatrix("row needs ≥ 2 finite non-negative entries".into()));
    }
    if row.iter().all(|&d| d == 0.0) {
        return Err(ProjectError::DegenerateRow);
    }
    if !(target_perplexity > 0.0) || target_perplexity > row.len() as f64 {
        return Err(ProjectError::BadConfig(format!(
            "target perplexity {target_perplexity} outside (0, {}]",
            row.len()
        )));
    }
    let mut beta = 1.0;
    let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
    let (mut probs, mut h) = kernel_row(row, beta);
    let mut converged = false;
    for _ in 0..max_iter {
        let perp = h.exp();
        if (perp - target_perplexity).abs() <= tol {
            converged = true;
            break;
        }
        if perp > target_perplexity {
            lo = beta;
            beta = if hi.is_infinite() { beta * 2.0 } else { (beta + hi) / 2.0 };
        } else {
            hi = beta;
            beta = (beta + lo) / 2.0;
        }
        (probs, h) = kernel_row(row, beta);
    }
    let perplexity = h.exp();
    if !converged && (perplexity - target_perplexity).abs() <= tol {
        converged = true;
    }
    Ok(Calibration {
        beta,
        sigma: (0.5 / beta).sqrt(),
        probs,
        perplexity,
        converged,
    })
}

/// Symmetrized joint probabilities `(p_{j|i} + p_{i|j}) / 2n`, row-major.
pub fn joint_probabilities(d: &DistanceMatrix, cfg: &TsneConfig) -> Result<Vec<f64>> {
    let n = d.len();
    cfg.validate(n)?;
    let mut cond = vec![0.0; n * n];
    for i in 0..n {
        let row: Vec<f64> = d
            .row_without_self(i)
            .into_iter()
            .map(|x| match cfg.distance_mode {
                DistanceMode::Direct => x,
                DistanceMode::Squared => x * x,
            })
            .collect();
        let cal = calibrate_sigma(&row, cfg.perplexity, cfg.calibration_tol, cfg.calibration_max_iter)?;
        if !cal.converged {
            log::warn!("perplexity calibration for point {i} stopped at {:.6}", cal.perplexity);
        }
        let mut k = 0;
        for j in 0..n {
            if j != i {
                cond[i * n + j] = cal.probs[k];
                k += 1;
            }
        }
    }
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            p[i * n + j] = (cond[i * n + j] + cond[j * n + i]) / (2.0 * n as f64);
        }
    }
    Ok(p)
}

fn student_kernel(y: &[[f64; 2]]) -> (Vec<f64>, f64) {
    let n = y.len();
    let mut num = vec![0.0; n * n];
    let mut z = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let dx = y[i][0] - y[j][0];
                let dy = y[i][1] - y[j][1];
                let v = 1.0 / (1.0 + dx * dx + dy * dy);
                num[i * n + j] = v;
                z += v;
            }
        }
    }
    (num, z)
}

/// `KL(P ‖ Q)` for the Student-t affinities `Q` of layout `y`.
pub fn kl_divergence(p: &[f64], y: &[[f64; 2]]) -> f64 {
    let n = y.len();
    let (num, z) = student_kernel(y);
    let mut kl = 0.0;
    for i in 0..n {
        for j in 0..n {
            let pij = p[i * n + j];
            if i != j && pij > 0.0 {
                kl += pij * (pij / (num[i * n + j] / z)).ln();
            }
        }
    }
    kl
}

/// `dC/dy_i = 4 Σ_j (p_ij − q_ij)(y_i − y_j)(1 + ‖y_i − y_j‖²)⁻¹`.
pub fn kl_gradient(p: &[f64], y: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let n = y.len();
    let (num, z) = student_kernel(y);
    let mut grad = vec![[0.0; 2]; n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let w = num[i * n + j];
                let mult = 4.0 * (p[i * n + j] - w / z) * w;
                grad[i][0] += mult * (y[i][0] - y[j][0]);
                grad[i][1] += mult * (y[i][1] - y[j][1]);
            }
        }
    }
    grad
}

#[derive(Debug, Clone, PartialEq)]
pub struct Projection2D {
    pub terms: Vec<String>,
    pub coords: Vec<[f64; 2]>,
    pub kl_initial: f64,
    pub kl_final: f64,
    /// `(iteration, KL)` at iteration 0, every 50 iterations and at the end.
    pub trace: Vec<(usize, f64)>,
}

/// Per-point initialization seeds derived from the config seed and the
/// point index.
pub fn point_seeds(cfg: &TsneConfig, n: usize) -> Vec<u64> {
    (0..n)
        .map(|i| rng::derive_seed(cfg.seed, purpose::TSNE_POINT.wrapping_add(i as u64)))
        .collect()
}

pub fn tsne_fit(d: &DistanceMatrix, cfg: &TsneConfig) -> Result<Projection2D> {
    tsne_fit_with_seeds(d, cfg, &point_seeds(cfg, d.len()))
}

/// Gradient descent with momentum, per-coordinate gains and early
/// exaggeration. Point `i` starts from a N(0, 10⁻⁴²) draw of its own seed.
pub fn tsne_fit_with_seeds(d: &DistanceMatrix, cfg: &TsneConfig, seeds: &[u64]) -> Result<Projection2D> {
    let n = d.len();
    if seeds.len() != n {
        return Err(ProjectError::BadConfig(format!("{} seeds for {n} points", seeds.len())));
    }
    let p = joint_probabilities(d, cfg)?;
    let init = Normal::new(0.0, 1e-4).expect("valid normal");
    let mut y: Vec<[f64; 2]> = seeds
        .iter()
        .map(|&s| {
            let mut r = rng::Rng::seed_from_u64(s);
            [init.sample(&mut r), init.sample(&mut r)]
        })
        .collect();

    let kl_initial = kl_divergence(&p, &y);
    let mut trace = vec![(0, kl_initial)];
    let mut p_cur: Vec<f64> = p.iter().map(|v| v * cfg.exaggeration).collect();
    let mut velocity = vec![[0.0; 2]; n];
    let mut gains = vec![[1.0f64; 2]; n];
    let mut momentum = cfg.momentum;

    for iter in 0..cfg.iterations {
        if iter == cfg.exaggeration_iters {
            p_cur.clone_from(&p);
        }
        if iter == cfg.momentum_switch {
            momentum = cfg.final_momentum;
        }
        let grad = kl_gradient(&p_cur, &y);
        for i in 0..n {
            for k in 0..2 {
                let g = grad[i][k];
                gains[i][k] = if (g > 0.0) != (velocity[i][k] > 0.0) {
                    gains[i][k] + 0.2
                } else {
                    (gains[i][k] * 0.8).max(0.01)
                };
                velocity[i][k] = momentum * velocity[i][k] - cfg.learning_rate * gains[i][k] * g;
                y[i][k] += velocity[i][k];
            }
        }
        for k in 0..2 {
            let mean = y.iter().map(|pt| pt[k]).sum::<f64>() / n as f64;
            for pt in &mut y {
                pt[k] -= mean;
            }
        }
        let done = iter + 1;
        if done % 50 == 0 || done == cfg.iterations {
            trace.push((done, kl_divergence(&p, &y)));
        }
    }
    if y.iter().flatten().any(|v| !v.is_finite()) {
        return Err(ProjectError::BadConfig("optimization diverged".into()));
    }
    let kl_final = trace.last().map_or(kl_initial, |t| t.1);
    Ok(Projection2D {
        terms: d.terms().to_vec(),
        coords: y,
        kl_initial,
        kl_final,
        trace,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MarkerTrait {
    Genre,
    /// Ascendants against descendants.
    Generation,
}

impl FromStr for MarkerTrait {
    type Err = ProjectError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "genre" => Ok(Self::Genre),
            "generation" | "ascendance-vs-descendance" => Ok(Self::Generation),
            other => Err(ProjectError::UnknownTrait(other.to_owned())),
        }
    }
}

impl fmt::Display for MarkerTrait {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Genre => "genre",
            Self::Generation => "generation",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MarkerClass {
    DarkFill,
    LightFill,
    TriangleUp,
    TriangleDown,
    Circle,
}

impl fmt::Display for MarkerClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::DarkFill => "dark",
            Self::LightFill => "light",
            Self::TriangleUp => "triangle-up",
            Self::TriangleDown => "triangle-down",
            Self::Circle => "circle",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarkerTable {
    pub marker_trait: MarkerTrait,
    pub markers: Vec<(String, MarkerClass)>,
    /// Feminine/masculine counterparts: terms that differ only in genre.
    pub links: Vec<(String, String)>,
}

impl MarkerTable {
    pub fn class_of(&self, term: &str) -> Option<MarkerClass> {
        self.markers.iter().find(|(t, _)| t == term).map(|(_, c)| *c)
    }
}

/// Genre: dark fill for feminine, light for masculine. Generation: the sign
/// of ascendance − descendance picks triangle up, down, or a circle.
pub fn style_markers(lexicon: &[ComponentialAnnotation], marker_trait: MarkerTrait) -> MarkerTable {
    let markers = lexicon
        .iter()
        .map(|a| {
            let class = match marker_trait {
                MarkerTrait::Genre => match a.genre {
                    Genre::F => MarkerClass::DarkFill,
                    Genre::M => MarkerClass::LightFill,
                },
                MarkerTrait::Generation => match a.ascendance.cmp(&a.descendance) {
                    std::cmp::Ordering::Greater => MarkerClass::TriangleUp,
                    std::cmp::Ordering::Less => MarkerClass::TriangleDown,
                    std::cmp::Ordering::Equal => MarkerClass::Circle,
                },
            };
            (a.term.clone(), class)
        })
        .collect();
    let mut links = Vec::new();
    for a in lexicon.iter().filter(|a| a.genre == Genre::F) {
        for b in lexicon.iter().filter(|b| b.genre == Genre::M) {
            if a.numeric() == b.numeric() {
                links.push((a.term.clone(), b.term.clone()));
            }
        }
    }
    links.sort();
    MarkerTable {
        marker_trait,
        markers,
        links,
    }
}

pub fn style_markers_by_name(lexicon: &[ComponentialAnnotation], name: &str) -> Result<MarkerTable> {
    Ok(style_markers(lexicon, name.parse()?))
}

/// `term x y marker` records.
pub fn coordinates_tsv(proj: &Projection2D, markers: &MarkerTable) -> String {
    let mut out = String::from("term\tx\ty\tmarker\n");
    for (t, c) in proj.terms.iter().zip(&proj.coords) {
        let class = markers.class_of(t).map_or_else(|| "none".to_owned(), |c| c.to_string());
        let _ = writeln!(out, "{t}\t{:.6}\t{:.6}\t{class}", c[0], c[1]);
    }
    out
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Labelled scatter plot with trait markers and counterpart links.
pub fn render_svg(proj: &Projection2D, markers: &MarkerTable, title: &str) -> String {
    const W: f64 = 800.0;
    const H: f64 = 600.0;
    const MARGIN: f64 = 60.0;
    let xs = proj.coords.iter().map(|c| c[0]);
    let ys = proj.coords.iter().map(|c| c[1]);
    let (xmin, xmax) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let (ymin, ymax) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let sx = (W - 2.0 * MARGIN) / (xmax - xmin).max(1e-12);
    let sy = (H - 2.0 * MARGIN) / (ymax - ymin).max(1e-12);
    let px = |c: &[f64; 2]| (MARGIN + (c[0] - xmin) * sx, H - MARGIN - (c[1] - ymin) * sy);
    let pos = |term: &str| proj.terms.iter().position(|t| t == term).map(|i| px(&proj.coords[i]));

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="24" font-family="sans-serif" font-size="16" text-anchor="middle">{}</text>"#,
        W / 2.0,
        xml_escape(title)
    );
    for (a, b) in &markers.links {
        if let (Some((x1, y1)), Some((x2, y2))) = (pos(a), pos(b)) {
            let _ = writeln!(
                s,
                r##"<line x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}" stroke="#999999" stroke-width="1"/>"##
            );
        }
    }
    for (t, c) in proj.terms.iter().zip(&proj.coords) {
        let (x, y) = px(c);
        let class = markers.class_of(t).unwrap_or(MarkerClass::Circle);
        let shape = match class {
            MarkerClass::DarkFill => format!(r##"<circle cx="{x:.2}" cy="{y:.2}" r="6" fill="#404040"/>"##),
            MarkerClass::LightFill => format!(
                r##"<circle cx="{x:.2}" cy="{y:.2}" r="6" fill="#c0c0c0" stroke="#808080"/>"##
            ),
            MarkerClass::TriangleUp => format!(
                r##"<polygon points="{:.2},{:.2} {:.2},{:.2} {:.2},{:.2}" fill="#404040"/>"##,
                x,
                y - 7.0,
                x - 6.0,
                y + 5.0,
                x + 6.0,
                y + 5.0
            ),
            MarkerClass::TriangleDown => format!(
                r##"<polygon points="{:.2},{:.2} {:.2},{:.2} {:.2},{:.2}" fill="#404040"/>"##,
                x,
                y + 7.0,
                x - 6.0,
                y - 5.0,
                x + 6.0,
                y - 5.0
            ),
            MarkerClass::Circle => format!(
                r##"<circle cx="{x:.2}" cy="{y:.2}" r="5" fill="none" stroke="#404040"/>"##
            ),
        };
        let _ = writeln!(s, "{shape}");
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="12">{}</text>"#,
            x + 8.0,
            y + 4.0,
            xml_escape(t)
        );
    }
    s.push_str("</svg>\n");
    s
}
