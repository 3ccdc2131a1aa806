//! End-to-end acceptance checks, one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the lines always reach the console.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod common;

use std::collections::HashSet;
use std::fs;
use std::sync::Arc;
use std::time::{Duration, Instant};

use num_rational::Rational64;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal};

use kinvec::cli::{self, PipelineConfig};
use kinvec::corpus::Vocabulary;
use kinvec::embedding::{self, concatenate_models, EnsembleMember, Hyperparams, LabeledTable, VectorTable};
use kinvec::kinship::{self, annotate, feature_diff, Genre, KinPath, Lexicon};
use kinvec::project::{self, DistanceMatrix, TsneConfig};
use kinvec::regress::{self, Dataset};
use kinvec::semspace::{self, CountSet};
use kinvec::synth;

type Check = std::result::Result<String, String>;
type Chacha = rand_chacha::ChaCha8Rng;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn within(limit: Duration, started: Instant, what: &str) -> std::result::Result<(), String> {
    let took = started.elapsed();
    if took > limit {
        Err(format!("{what} took {took:.2?} (limit {limit:?})"))
    } else {
        Ok(())
    }
}

fn r(n: i64, d: i64) -> Rational64 {
    Rational64::new(n, d)
}

fn int(n: i64) -> Rational64 {
    Rational64::from_integer(n)
}

// ---------------------------------------------------------------------------
// 1. componential golden rows

fn componential_golden() -> Check {
    let t0 = Instant::now();
    let lex = Lexicon::bundled();
    // (term, genre, ascendance, descendance, germanite, alliance)
    let table1 = [
        ("cousin", Genre::M, int(1), int(1), int(1), int(0)),
        ("grand-mère", Genre::F, int(2), int(0), int(0), int(0)),
        ("belle-soeur", Genre::F, int(0), int(0), int(1), int(1)),
        ("époux", Genre::M, int(0), int(0), int(0), int(1)),
        ("oncle", Genre::M, int(1), int(0), int(1), r(1, 2)),
    ];
    for (term, g, a, d, s, e) in table1 {
        let got = lex.get(term).ok_or(format!("{term} missing from lexicon"))?;
        ensure!(
            (got.genre, got.ascendance, got.descendance, got.germanite, got.alliance) == (g, a, d, s, e),
            "{term}: {got:?}"
        );
    }
    // oncle from its four elementary paths
    let paths: Vec<KinPath> = ["PS", "PS", "PSE", "PSE"]
        .iter()
        .map(|c| KinPath::parse(c, Genre::M).unwrap())
        .collect();
    let oncle = annotate("oncle", &paths).map_err(|e| e.to_string())?;
    ensure!(oncle.alliance == r(1, 2) && oncle.ascendance == int(1), "oncle paths: {oncle:?}");

    let table2 = [
        ("père", "grand-mère", [int(1), int(1), int(0), int(0), int(0)]),
        ("belle-soeur", "époux", [int(1), int(0), int(0), int(1), int(0)]),
        ("filles", "oncle", [int(1), int(1), int(1), int(1), r(1, 2)]),
    ];
    for (a, b, want) in table2 {
        let d = feature_diff(lex.get(a).unwrap(), lex.get(b).unwrap());
        ensure!(d.values() == want, "{a} / {b}: {:?}", d.values());
    }
    let pairs = kinship::all_pairs(&lex.annotations()).map_err(|e| e.to_string())?;
    ensure!(pairs.len() == 300, "{} pairs", pairs.len());
    within(Duration::from_secs(1), t0, "componential checks")?;
    Ok("5 annotation rows, 3 difference rows, 300 pairs".into())
}

// ---------------------------------------------------------------------------
// 2. SGNS gradient

fn sgns_gradient() -> Check {
    let t0 = Instant::now();
    let mut rng = Chacha::seed_from_u64(2024);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let dim = rng.random_range(1..=16);
        let k = rng.random_range(1..=5);
        let mut vecs: Vec<Vec<f64>> = (0..k + 2)
            .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let loss = |v: &[Vec<f64>]| {
            let negs: Vec<&[f64]> = v[2..].iter().map(Vec::as_slice).collect();
            embedding::sgns_loss(&v[0], &v[1], &negs).unwrap()
        };
        // analytic gradient: one unit-rate step moves each vector by −∇
        let mut stepped = vecs.clone();
        {
            let (head, negs) = stepped.split_at_mut(2);
            let (w, c) = head.split_at_mut(1);
            let mut nrefs: Vec<&mut [f64]> = negs.iter_mut().map(Vec::as_mut_slice).collect();
            embedding::sgns_step(&mut w[0], &mut c[0], &mut nrefs, 1.0).map_err(|e| e.to_string())?;
        }
        let h = 1e-6;
        let (mut an, mut fd) = (Vec::new(), Vec::new());
        for v in 0..vecs.len() {
            for i in 0..dim {
                an.push(vecs[v][i] - stepped[v][i]);
                let x = vecs[v][i];
                vecs[v][i] = x + h;
                let up = loss(&vecs);
                vecs[v][i] = x - h;
                let down = loss(&vecs);
                vecs[v][i] = x;
                fd.push((up - down) / (2.0 * h));
            }
        }
        let diff = an.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let scale = an.iter().map(|a| a * a).sum::<f64>().sqrt().max(fd.iter().map(|a| a * a).sum::<f64>().sqrt());
        let rel = if scale > 0.0 { diff / scale } else { diff };
        worst = worst.max(rel);
    }
    ensure!(worst <= 1e-4, "worst relative gradient error {worst:e}");
    let zero = vec![0.0; 8];
    let negs: Vec<&[f64]> = (0..5).map(|_| zero.as_slice()).collect();
    let l0 = embedding::sgns_loss(&zero, &zero, &negs).map_err(|e| e.to_string())?;
    ensure!((l0 - 6.0 * std::f64::consts::LN_2).abs() <= 1e-12, "zero-vector loss {l0}");
    within(Duration::from_secs(10), t0, "gradient checks")?;
    Ok(format!("worst relative error {worst:.2e}; zero loss {l0:.12}"))
}

// ---------------------------------------------------------------------------
// 3. training determinism

fn training_determinism() -> Check {
    let stream = synth::zipf_corpus(5, 100_000, 2000);
    let vocab = Arc::new(Vocabulary::build(&stream, 5).map_err(|e| e.to_string())?);
    let hp = Hyperparams {
        min_count: 5,
        seed: 17,
        ..Hyperparams::default()
    };
    let t0 = Instant::now();
    let a = embedding::train(&stream, &vocab, &hp).map_err(|e| e.to_string())?;
    let single = t0.elapsed();
    let b = embedding::train(&stream, &vocab, &hp).map_err(|e| e.to_string())?;
    let bits = |m: &embedding::EmbeddingModel| -> Vec<u64> {
        m.input.data().iter().chain(&m.output).map(|x| x.to_bits()).collect()
    };
    ensure!(bits(&a) == bits(&b), "repeat run differs");
    ensure!(a.meta.epoch_losses == b.meta.epoch_losses, "loss traces differ");
    let l = &a.meta.epoch_losses;
    ensure!(l.len() == 5 && l[4] < l[0], "epoch losses {l:?}");
    ensure!(single < Duration::from_secs(60), "training took {single:.2?}");
    Ok(format!(
        "{} tokens, V = {}, loss {:.4} → {:.4}, {single:.2?} per run",
        stream.token_count(),
        vocab.len(),
        l[0],
        l[4]
    ))
}

// ---------------------------------------------------------------------------
// 4. cohesion on a two-cluster corpus

fn oracle_hits(table: &VectorTable, probe: &str, k: usize, set: &HashSet<&str>) -> usize {
    let q = table.get(probe).unwrap();
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut scored: Vec<(f64, usize)> = (0..table.len())
        .filter(|&i| table.word(i) != probe)
        .map(|i| {
            let v = table.vector(i);
            let dot: f64 = q.iter().zip(v).map(|(a, b)| a * b).sum();
            (dot / (norm(q) * norm(v)), i)
        })
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    scored[..k].iter().filter(|(_, i)| set.contains(table.word(*i))).count()
}

fn cohesion_end_to_end() -> Check {
    let (stream, probes) = synth::two_cluster_corpus(8, 100_000, 20, 180, 10);
    let vocab = Arc::new(Vocabulary::build(&stream, 5).map_err(|e| e.to_string())?);
    let hp = Hyperparams {
        dim: 50,
        min_count: 5,
        seed: 4,
        ..Hyperparams::default()
    };
    let model = embedding::train(&stream, &vocab, &hp).map_err(|e| e.to_string())?;
    let report = semspace::cohesion_at_k(&model.input, &probes, "A", 10, CountSet::Probes).map_err(|e| e.to_string())?;
    ensure!(report.mean >= 0.8, "mean cohesion@10 = {:.3}", report.mean);
    let set: HashSet<&str> = probes.iter().map(String::as_str).collect();
    for pc in &report.per_probe {
        let hits = oracle_hits(&model.input, &pc.probe, 10, &set);
        ensure!(pc.hits == hits && pc.fraction == hits as f64 / 10.0, "{}: {} vs oracle {hits}", pc.probe, pc.hits);
    }
    Ok(format!("V = {}, mean cohesion@10 = {:.3}, oracle agrees on 20 probes", vocab.len(), report.mean))
}

// ---------------------------------------------------------------------------
// 5. ensemble contract

fn random_table(seed: u64, words: &[String], dim: usize) -> VectorTable {
    let mut rng = Chacha::seed_from_u64(seed);
    let data = (0..words.len() * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    VectorTable::new(words.to_vec(), dim, data).unwrap()
}

fn ensemble_contract() -> Check {
    let (stream, _) = synth::two_cluster_corpus(3, 20_000, 20, 80, 10);
    let vocab = Arc::new(Vocabulary::build(&stream, 5).map_err(|e| e.to_string())?);
    let models = (0..5)
        .map(|s| {
            let hp = Hyperparams {
                dim: 300,
                epochs: 1,
                min_count: 5,
                seed: s,
                ..Hyperparams::default()
            };
            embedding::train(&stream, &vocab, &hp)
        })
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    let refs: Vec<&dyn EnsembleMember> = models.iter().map(|m| m as &dyn EnsembleMember).collect();
    let five = concatenate_models(&refs, true).map_err(|e| e.to_string())?;
    ensure!(five.dim() == 1500, "five members give {} dims", five.dim());

    let words: Vec<String> = (0..40).map(|i| format!("w{i}")).collect();
    let tables: Vec<LabeledTable> = (0..25)
        .map(|i| LabeledTable {
            label: format!("m{i}"),
            table: random_table(100 + i, &words, 300),
        })
        .collect();
    let refs: Vec<&dyn EnsembleMember> = tables.iter().map(|m| m as &dyn EnsembleMember).collect();
    let big = concatenate_models(&refs, true).map_err(|e| e.to_string())?;
    ensure!(big.dim() == 7500, "25 members give {} dims", big.dim());

    let scaled_models: Vec<LabeledTable> = models
        .iter()
        .map(|m| LabeledTable {
            label: "scaled".into(),
            table: m.input.scaled(3.7),
        })
        .collect();
    let refs: Vec<&dyn EnsembleMember> = scaled_models.iter().map(|m| m as &dyn EnsembleMember).collect();
    let scaled = concatenate_models(&refs, true).map_err(|e| e.to_string())?;
    let refs: Vec<&dyn EnsembleMember> = models.iter().map(|m| m as &dyn EnsembleMember).collect();
    let again = concatenate_models(&refs, true).map_err(|e| e.to_string())?;
    for probe in ["a0", "a7", "b3", "b42"] {
        let base = semspace::nearest_neighbors(&five.table, probe, 10).map_err(|e| e.to_string())?;
        let rep = semspace::nearest_neighbors(&again.table, probe, 10).map_err(|e| e.to_string())?;
        let sc = semspace::nearest_neighbors(&scaled.table, probe, 10).map_err(|e| e.to_string())?;
        ensure!(base == rep, "{probe}: neighbors not deterministic");
        ensure!(base.tokens().eq(sc.tokens()), "{probe}: scaling changed the neighbor list");
        for (x, y) in base.entries.iter().zip(&sc.entries) {
            ensure!((x.score - y.score).abs() <= 1e-12, "{probe}: score {} vs {}", x.score, y.score);
        }
    }
    Ok("5×300 → 1500, 25×300 → 7500, neighbors stable under ×3.7 scaling".into())
}

// ---------------------------------------------------------------------------
// 6. OLS against normal equations

/// Solves `a x = b` by Gauss–Jordan elimination with partial pivoting and
/// also returns `a⁻¹`.
fn gauss_jordan(mut a: Vec<Vec<f64>>, b: Vec<f64>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut aug: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut row = std::mem::take(&mut a[i]);
            row.push(b[i]);
            row.extend((0..n).map(|j| f64::from(u8::from(i == j))));
            row
        })
        .collect();
    for col in 0..n {
        let piv = (col..n).max_by(|&x, &y| aug[x][col].abs().total_cmp(&aug[y][col].abs())).unwrap();
        aug.swap(col, piv);
        let d = aug[col][col];
        for v in aug[col].iter_mut() {
            *v /= d;
        }
        for row in 0..n {
            if row != col {
                let f = aug[row][col];
                if f != 0.0 {
                    for j in 0..aug[row].len() {
                        aug[row][j] -= f * aug[col][j];
                    }
                }
            }
        }
    }
    let x = aug.iter().map(|r| r[n]).collect();
    let inv = aug.iter().map(|r| r[n + 1..].to_vec()).collect();
    (x, inv)
}

fn regression_oracle() -> Check {
    let mut rng = Chacha::seed_from_u64(606);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let mut worst = 0.0f64;
    for trial in 0..1000 {
        let p = rng.random_range(1..=5);
        let n = rng.random_range(p + 3..=40);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..p).map(|_| noise.sample(&mut rng)).collect()).collect();
        let beta: Vec<f64> = (0..=p).map(|_| rng.random_range(-2.0..2.0)).collect();
        let y: Vec<f64> = rows
            .iter()
            .map(|x| beta[0] + x.iter().zip(&beta[1..]).map(|(a, b)| a * b).sum::<f64>() + 0.5 * noise.sample(&mut rng))
            .collect();
        let names = (0..p).map(|j| format!("x{j}")).collect();
        let data = Dataset::new(names, rows.clone(), y.clone()).map_err(|e| e.to_string())?;
        let fit = regress::ols_fit(&data).map_err(|e| format!("trial {trial}: {e}"))?;

        let design: Vec<Vec<f64>> = rows.iter().map(|x| std::iter::once(1.0).chain(x.iter().copied()).collect()).collect();
        let q = p + 1;
        let xtx: Vec<Vec<f64>> = (0..q)
            .map(|i| (0..q).map(|j| design.iter().map(|r| r[i] * r[j]).sum()).collect())
            .collect();
        let xty: Vec<f64> = (0..q).map(|i| design.iter().zip(&y).map(|(r, yy)| r[i] * yy).sum()).collect();
        let (b, inv) = gauss_jordan(xtx, xty);
        let resid: Vec<f64> = design
            .iter()
            .zip(&y)
            .map(|(r, yy)| yy - r.iter().zip(&b).map(|(a, c)| a * c).sum::<f64>())
            .collect();
        let ssr: f64 = resid.iter().map(|e| e * e).sum();
        let ybar = y.iter().sum::<f64>() / n as f64;
        let sst: f64 = y.iter().map(|v| (v - ybar).powi(2)).sum();
        let r2 = 1.0 - ssr / sst;
        let adj = 1.0 - (1.0 - r2) * (n - 1) as f64 / (n - p - 1) as f64;
        let s2 = ssr / (n - p - 1) as f64;
        let mut errs = vec![(fit.r2 - r2).abs(), (fit.adj_r2 - adj).abs()];
        for i in 0..q {
            errs.push((fit.coefficients[i] - b[i]).abs() / b[i].abs().max(1.0));
            let se = (s2 * inv[i][i]).sqrt();
            errs.push((fit.std_errors[i] - se).abs() / se.max(1.0));
        }
        let e = errs.into_iter().fold(0.0, f64::max);
        ensure!(e <= 1e-8, "trial {trial} (n={n}, p={p}): deviation {e:e}");
        worst = worst.max(e);
    }
    let adj = regress::adjusted_r2(0.25, 300, 5).map_err(|e| e.to_string())?;
    ensure!((adj - 0.2372449).abs() <= 1e-7, "adjusted R² spot value {adj}");
    let p0 = regress::student_t_two_sided(0.0, 7.0);
    ensure!(p0 == 1.0, "t = 0 gives p = {p0}");
    let p1 = regress::student_t_two_sided(1.0, 1.0);
    ensure!((p1 - 0.5).abs() <= 1e-6, "df = 1, t = 1 gives p = {p1}");
    let p2 = regress::student_t_two_sided(1.96, 1e6);
    ensure!((p2 - 0.05).abs() <= 1e-3, "df = 1e6, t = 1.96 gives p = {p2}");
    Ok(format!("1000 datasets, worst deviation {worst:.1e}; adj R² {adj:.7}; p-values ok"))
}

// ---------------------------------------------------------------------------
// 7. ablation semantics and planted recovery

fn ablation_semantics() -> Check {
    let xs: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 * 0.37 - 1.0]).collect();
    let ys: Vec<f64> = xs.iter().map(|x| 2.5 * x[0] - 0.75).collect();
    let exact = Dataset::new(vec!["x".into()], xs, ys).map_err(|e| e.to_string())?;
    let rep = regress::ablation_importance(&exact).map_err(|e| e.to_string())?;
    let imp = rep.importance("x").unwrap();
    ensure!((imp + 1.0).abs() <= 1e-10, "single exact predictor importance {imp}");

    let lex = Lexicon::bundled().annotations();
    let pairs = kinship::all_pairs(&lex).map_err(|e| e.to_string())?;
    let design: Vec<Vec<f64>> = pairs.iter().map(|p| p.predictors().to_vec()).collect();
    // genre is the planted dominant trait
    let planted = [0.55, -0.12, -0.03, -0.025, -0.03, -0.035];
    let names: Vec<String> = kinship::TRAITS.iter().map(|s| s.to_string()).collect();
    let noise = Normal::new(0.0, 0.05).unwrap();
    let (mut recovered, mut ranked) = (0, 0);
    for trial in 0..100u64 {
        let mut rng = Chacha::seed_from_u64(9000 + trial);
        let y: Vec<f64> = design
            .iter()
            .map(|x| planted[0] + x.iter().zip(&planted[1..]).map(|(a, b)| a * b).sum::<f64>() + noise.sample(&mut rng))
            .collect();
        let data = Dataset::new(names.clone(), design.clone(), y).map_err(|e| e.to_string())?;
        let fit = regress::ols_fit(&data).map_err(|e| e.to_string())?;
        if fit
            .coefficients
            .iter()
            .zip(&fit.std_errors)
            .zip(&planted)
            .all(|((b, se), t)| (b - t).abs() <= 3.0 * se)
        {
            recovered += 1;
        }
        let abl = regress::ablation_importance(&data).map_err(|e| e.to_string())?;
        if abl.dominant() == Some("genre") {
            ranked += 1;
        }
    }
    ensure!(recovered >= 95, "coefficients within 3 SE in only {recovered}/100 trials");
    ensure!(ranked >= 95, "dominant trait ranked first in only {ranked}/100 trials");
    Ok(format!("importance {imp:.12}; recovery {recovered}/100, ranking {ranked}/100"))
}

// ---------------------------------------------------------------------------
// 8. t-SNE

fn random_distances(seed: u64, n: usize) -> DistanceMatrix {
    let mut rng = Chacha::seed_from_u64(seed);
    // cosine distances of random vectors in a low-dimensional space
    let words: Vec<String> = (0..n).map(|i| format!("t{i}")).collect();
    let data = (0..n * 8).map(|_| rng.random_range(-1.0..1.0)).collect();
    let table = VectorTable::new(words.clone(), 8, data).unwrap();
    DistanceMatrix::from_table(&table, &words).unwrap()
}

fn tsne_checks() -> Check {
    let cfg = TsneConfig::default();
    for seed in 0..5 {
        let d = random_distances(seed, 25);
        let p = project::joint_probabilities(&d, &cfg).map_err(|e| e.to_string())?;
        let total: f64 = p.iter().sum();
        ensure!((total - 1.0).abs() <= 1e-10, "P sums to {total}");
    }

    let mut rng = Chacha::seed_from_u64(77);
    let mut worst_perp = 0.0f64;
    for _ in 0..50 {
        let row: Vec<f64> = (0..24).map(|_| rng.random_range(0.05..1.5)).collect();
        let cal = project::calibrate_sigma(&row, 5.0, 1e-5, 50).map_err(|e| e.to_string())?;
        let h2: f64 = -cal.probs.iter().filter(|p| **p > 0.0).map(|p| p * p.log2()).sum::<f64>();
        let sum: f64 = cal.probs.iter().sum();
        ensure!((sum - 1.0).abs() < 1e-12, "conditional probabilities sum to {sum}");
        worst_perp = worst_perp.max((h2.exp2() - 5.0).abs());
    }
    ensure!(worst_perp <= 1e-3, "perplexity off by {worst_perp:e}");

    // gradient against central differences on random 6-point instances
    let mut worst_grad = 0.0f64;
    for _ in 0..20 {
        let n = 6;
        let mut p = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let v = rng.random_range(0.01..1.0);
                p[i * n + j] = v;
                p[j * n + i] = v;
            }
        }
        let s: f64 = p.iter().sum();
        p.iter_mut().for_each(|v| *v /= s);
        let mut y: Vec<[f64; 2]> = (0..n).map(|_| [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)]).collect();
        let an = project::kl_gradient(&p, &y);
        let h = 1e-6;
        let (mut diff, mut norm) = (0.0, 0.0);
        for i in 0..n {
            for k in 0..2 {
                let x = y[i][k];
                y[i][k] = x + h;
                let up = project::kl_divergence(&p, &y);
                y[i][k] = x - h;
                let down = project::kl_divergence(&p, &y);
                y[i][k] = x;
                let fd = (up - down) / (2.0 * h);
                diff += (fd - an[i][k]).powi(2);
                norm += an[i][k].powi(2);
            }
        }
        worst_grad = worst_grad.max(diff.sqrt() / norm.sqrt());
    }
    ensure!(worst_grad <= 1e-4, "t-SNE gradient relative error {worst_grad:e}");

    let mut slowest = Duration::ZERO;
    for seed in 0..5 {
        let d = random_distances(100 + seed, 25);
        let cfg = TsneConfig { seed, ..TsneConfig::default() };
        let t0 = Instant::now();
        let proj = project::tsne_fit(&d, &cfg).map_err(|e| e.to_string())?;
        slowest = slowest.max(t0.elapsed());
        ensure!(proj.kl_final <= proj.kl_initial, "seed {seed}: KL {} → {}", proj.kl_initial, proj.kl_final);
        ensure!(proj.coords.iter().flatten().all(|v| v.is_finite()), "non-finite coordinates");
        let again = project::tsne_fit(&d, &cfg).map_err(|e| e.to_string())?;
        ensure!(again == proj, "seed {seed}: repeat fit differs");
    }
    ensure!(slowest < Duration::from_secs(5), "25-point fit took {slowest:.2?}");
    Ok(format!(
        "P mass exact, perplexity within {worst_perp:.1e}, gradient error {worst_grad:.1e}, slowest fit {slowest:.2?}"
    ))
}

// ---------------------------------------------------------------------------
// 9. report reproduction

fn report_reproduction() -> Check {
    let run = || -> std::result::Result<String, String> {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let cfg_path = common::write_fixture(dir.path(), false);
        let cfg = PipelineConfig::load(&cfg_path).map_err(|e| e.to_string())?;
        cli::cmd_train(&cfg).map_err(|e| e.to_string())?;
        let first = cli::cmd_analyze(&cfg).map_err(|e| e.to_string())?;
        let second = cli::cmd_analyze(&cfg).map_err(|e| e.to_string())?;
        let on_disk = fs::read_to_string(cfg.output_dir.join("analysis").join(cli::REPORT_FILE)).map_err(|e| e.to_string())?;
        if first.report != second.report || on_disk != first.report {
            return Err("repeat analysis differs".into());
        }
        if first.analysis.is_partial() {
            return Err("fixture analysis unexpectedly partial".into());
        }
        Ok(first.report)
    };
    let a = run()?;
    let b = run()?;
    ensure!(a == b, "reports from independent train+analyze runs differ");
    for section in ["Componential annotation", "Pairwise trait differences", "Neighbor cohesion", "Linear models", "Projection"] {
        ensure!(a.contains(section), "report lacks a `{section}` section");
    }
    ensure!(a.contains("N = 300 pairs"), "pair table is not 300 rows");
    let models = a.split("Linear models").nth(1).unwrap_or("");
    for id in ["alpha", "beta", "global"] {
        ensure!(models.lines().any(|l| l.starts_with(id)), "linear-model summary lacks `{id}`");
    }
    ensure!(a.contains("oncle") && a.contains("0.5"), "annotation rows missing");
    Ok(format!("{} report bytes identical across runs", a.len()))
}

fn main() {
    let criteria: [(&str, fn() -> Check); 9] = [
        ("componential golden tables", componential_golden),
        ("SGNS gradient correctness", sgns_gradient),
        ("training determinism and sanity", training_determinism),
        ("cohesion end-to-end", cohesion_end_to_end),
        ("ensemble contract", ensemble_contract),
        ("regression oracle equivalence", regression_oracle),
        ("ablation semantics", ablation_semantics),
        ("t-SNE", tsne_checks),
        ("report reproduction", report_reproduction),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let t0 = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let took = t0.elapsed();
        match outcome {
            Ok(detail) => println!("PASS  criterion {}: {name} ({took:.2?}) — {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL  criterion {}: {name} ({took:.2?}) — {why}", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
