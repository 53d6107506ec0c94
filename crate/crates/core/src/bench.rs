//! Empirical verification of the O(M+N) amortized vs O(M x N) exact scaling:
//! instrumented call counts, median wall-clock timings, and least-squares
//! cost-model fits.

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use std::time::Instant;

use crate::error::{FieldError, Result};
use crate::models::{infer_collection_counted, EvalCounts, SurrogateModel};
use crate::numerics::rng_substream;
use crate::oracle::{collection_field_counted, Domain, Source, SourceCollection};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub m_points: usize,
    pub n_sources: usize,
    pub exact_time: f64,
    pub amortized_time: f64,
    pub exact_ops: u64,
    pub amortized_ops: u64,
}

/// Fitted t = alpha * M * N + gamma.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BilinearFit {
    pub alpha: f64,
    pub gamma: f64,
    pub r_squared: f64,
}

/// Fitted t = a * M + b * N + c.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineFit {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub r_squared: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub points: Vec<ScalingPoint>,
    pub exact_fit: BilinearFit,
    pub amortized_fit: AffineFit,
}

#[derive(Debug, Clone, Copy)]
pub struct SweepOptions {
    pub repeats: usize,
    /// Must be 1: the scaling comparison is single-threaded by contract.
    pub threads: usize,
    pub seed: u64,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            repeats: 5,
            threads: 1,
            seed: 0,
        }
    }
}

fn median_secs(mut times: Vec<f64>) -> f64 {
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    times[times.len() / 2]
}

/// Solve the normal equations for least squares with a small design matrix
/// (columns given per row), returning the coefficients and R^2.
fn least_squares(design: &[Vec<f64>], y: &[f64]) -> (Vec<f64>, f64) {
    let k = design[0].len();
    let mut ata = vec![vec![0.0; k]; k];
    let mut aty = vec![0.0; k];
    for (row, &yi) in design.iter().zip(y) {
        for i in 0..k {
            aty[i] += row[i] * yi;
            for j in 0..k {
                ata[i][j] += row[i] * row[j];
            }
        }
    }
    // Gaussian elimination with partial pivoting
    let mut aug: Vec<Vec<f64>> = ata
        .iter()
        .zip(&aty)
        .map(|(r, &b)| {
            let mut v = r.clone();
            v.push(b);
            v
        })
        .collect();
    for col in 0..k {
        let pivot = (col..k)
            .max_by(|&a, &b| aug[a][col].abs().partial_cmp(&aug[b][col].abs()).unwrap())
            .unwrap();
        aug.swap(col, pivot);
        let p = aug[col][col];
        for row in 0..k {
            if row == col || aug[row][col] == 0.0 {
                continue;
            }
            let f = aug[row][col] / p;
            for j in col..=k {
                aug[row][j] -= f * aug[col][j];
            }
        }
    }
    let coeffs: Vec<f64> = (0..k).map(|i| aug[i][k] / aug[i][i]).collect();

    let mean_y = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - mean_y).powi(2)).sum();
    let ss_res: f64 = design
        .iter()
        .zip(y)
        .map(|(row, &yi)| {
            let pred: f64 = row.iter().zip(&coeffs).map(|(r, c)| r * c).sum();
            (yi - pred).powi(2)
        })
        .sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    (coeffs, r2)
}

pub fn fit_exact(points: &[ScalingPoint]) -> BilinearFit {
    let design: Vec<Vec<f64>> = points
        .iter()
        .map(|p| vec![(p.m_points * p.n_sources) as f64, 1.0])
        .collect();
    let y: Vec<f64> = points.iter().map(|p| p.exact_time).collect();
    let (c, r2) = least_squares(&design, &y);
    BilinearFit {
        alpha: c[0],
        gamma: c[1],
        r_squared: r2,
    }
}

pub fn fit_amortized(points: &[ScalingPoint]) -> AffineFit {
    let design: Vec<Vec<f64>> = points
        .iter()
        .map(|p| vec![p.m_points as f64, p.n_sources as f64, 1.0])
        .collect();
    let y: Vec<f64> = points.iter().map(|p| p.amortized_time).collect();
    let (c, r2) = least_squares(&design, &y);
    AffineFit {
        a: c[0],
        b: c[1],
        c: c[2],
        r_squared: r2,
    }
}

fn random_workload(n_sources: usize, m_points: usize, seed: u64) -> (SourceCollection, Vec<[f64; 2]>) {
    let domain = Domain::standard();
    let mut rng = rng_substream(seed, (n_sources * 31 + m_points) as u64);
    let sources = (0..n_sources)
        .map(|_| {
            let angle = rng.random_range(0.0..std::f64::consts::TAU);
            Source {
                position: [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)],
                moment: [angle.cos(), angle.sin()],
                radius: 1.0,
            }
        })
        .collect();
    let points = (0..m_points)
        .map(|_| [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)])
        .collect();
    (SourceCollection::new(sources, domain).unwrap(), points)
}

/// Time exact superposition vs amortized inference over an (M, N) grid,
/// median of `repeats` after one warm-up pass, with exact op counters.
pub fn run_sweep(
    model: &SurrogateModel,
    sizes: &[(usize, usize)],
    opts: &SweepOptions,
) -> Result<ScalingReport> {
    if opts.threads != 1 {
        return Err(FieldError::Unsupported(
            "the timed region is single-threaded by contract".into(),
        ));
    }
    if opts.repeats < 3 {
        return Err(FieldError::Config("need at least 3 repeats".into()));
    }
    if sizes.len() < 4 {
        return Err(FieldError::Config("need at least 4 sweep sizes".into()));
    }
    let mut points = Vec::with_capacity(sizes.len());
    for &(m, n) in sizes {
        let (col, pts) = random_workload(n, m, opts.seed);

        let mut exact_ops = 0;
        let _ = collection_field_counted(&col, &pts, &mut exact_ops); // warm-up
        exact_ops = 0;
        let mut exact_times = Vec::with_capacity(opts.repeats);
        for rep in 0..opts.repeats {
            let t0 = Instant::now();
            let out = if rep == 0 {
                collection_field_counted(&col, &pts, &mut exact_ops)
            } else {
                let mut scratch = 0;
                collection_field_counted(&col, &pts, &mut scratch)
            };
            exact_times.push(t0.elapsed().as_secs_f64());
            std::hint::black_box(out);
        }

        let mut counts = EvalCounts::default();
        let _ = infer_collection_counted(model, &col, &pts, &mut counts)?; // warm-up
        counts = EvalCounts::default();
        let mut amortized_times = Vec::with_capacity(opts.repeats);
        for rep in 0..opts.repeats {
            let t0 = Instant::now();
            let out = if rep == 0 {
                infer_collection_counted(model, &col, &pts, &mut counts)?
            } else {
                let mut scratch = EvalCounts::default();
                infer_collection_counted(model, &col, &pts, &mut scratch)?
            };
            amortized_times.push(t0.elapsed().as_secs_f64());
            std::hint::black_box(out);
        }

        points.push(ScalingPoint {
            m_points: m,
            n_sources: n,
            exact_time: median_secs(exact_times),
            amortized_time: median_secs(amortized_times),
            exact_ops,
            amortized_ops: counts.embed_calls + counts.field_calls,
        });
    }
    let exact_fit = fit_exact(&points);
    let amortized_fit = fit_amortized(&points);
    Ok(ScalingReport {
        points,
        exact_fit,
        amortized_fit,
    })
}

/// Where the fitted amortized cost overtakes the fitted exact cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "result", rename_all = "snake_case")]
pub enum Crossover {
    NoneInSweepRange {
        exact_fit: BilinearFit,
        amortized_fit: AffineFit,
    },
    Contour {
        exact_fit: BilinearFit,
        amortized_fit: AffineFit,
        /// Sampled (M, N) pairs on the equal-cost contour within the sweep
        /// range.
        points: Vec<(f64, f64)>,
    },
}

pub fn crossover(report: &ScalingReport) -> Result<Crossover> {
    if report.points.is_empty() {
        return Err(FieldError::Config("empty scaling report".into()));
    }
    let ex = report.exact_fit;
    let am = report.amortized_fit;
    let m_lo = report.points.iter().map(|p| p.m_points).min().unwrap() as f64;
    let m_hi = report.points.iter().map(|p| p.m_points).max().unwrap() as f64;
    let n_lo = report.points.iter().map(|p| p.n_sources).min().unwrap() as f64;
    let n_hi = report.points.iter().map(|p| p.n_sources).max().unwrap() as f64;

    // contour: alpha M N + gamma = a M + b N + c  =>  N = (a M + c - gamma) / (alpha M - b)
    let mut contour = Vec::new();
    let steps = 33;
    for i in 0..steps {
        let t = i as f64 / (steps - 1) as f64;
        let m = m_lo * (m_hi / m_lo).powf(t);
        let denom = ex.alpha * m - am.b;
        if denom.abs() < f64::EPSILON {
            continue;
        }
        let n = (am.a * m + am.c - ex.gamma) / denom;
        if n.is_finite() && n >= n_lo && n <= n_hi {
            contour.push((m, n));
        }
    }
    if contour.is_empty() {
        Ok(Crossover::NoneInSweepRange {
            exact_fit: ex,
            amortized_fit: am,
        })
    } else {
        Ok(Crossover::Contour {
            exact_fit: ex,
            amortized_fit: am,
            points: contour,
        })
    }
}

/// One CSV row per sweep point, for plotting.
pub fn report_csv(report: &ScalingReport) -> String {
    let mut out =
        String::from("m_points,n_sources,exact_time,amortized_time,exact_ops,amortized_ops\n");
    for p in &report.points {
        out.push_str(&format!(
            "{},{},{:.9},{:.9},{},{}\n",
            p.m_points, p.n_sources, p.exact_time, p.amortized_time, p.exact_ops, p.amortized_ops
        ));
    }
    out
}
