//! The four amortized surrogates behind one interface: a hypernetwork g maps
//! per-source features to an additive embedding, embeddings sum over the
//! collection, and an inference head f turns the aggregate plus a location
//! into potential and field.
//!
//! Fourier, FC+ILR and Linear heads are linear in the aggregate, which is
//! what makes collection inference superpose; FC-INR is not.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{FieldError, Result};
use crate::numerics::{
    init_mlp, mlp_forward, mlp_input_gradient, Matrix, MlpParams, Rng,
};
use crate::oracle::{FieldSample, Source, Source1D, SourceCollection};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Fourier,
    FcIlr,
    FcInr,
    Linear,
}

impl ModelKind {
    pub fn superposes(&self) -> bool {
        !matches!(self, ModelKind::FcInr)
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fourier" => Ok(ModelKind::Fourier),
            "fcilr" => Ok(ModelKind::FcIlr),
            "fcinr" => Ok(ModelKind::FcInr),
            "linear" => Ok(ModelKind::Linear),
            other => Err(FieldError::Config(format!("unknown model kind '{other}'"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Fourier => "fourier",
            ModelKind::FcIlr => "fcilr",
            ModelKind::FcInr => "fcinr",
            ModelKind::Linear => "linear",
        }
    }
}

/// Wavenumber schedule. Both kinds always include the zero-frequency mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModeSchedule {
    /// omega_n = 2 pi n / lambda_min, n = 0..n_max-1; orthogonal basis.
    Integer { n_max: usize, lambda_min: f64 },
    /// n_max log-spaced values in [omega_lo, omega_hi], lowest replaced by 0.
    LogSpaced {
        n_max: usize,
        omega_lo: f64,
        omega_hi: f64,
    },
}

impl ModeSchedule {
    /// Default: integer modes with lambda_min = 4 x the 6-unit domain width,
    /// so the longest nonzero mode is much longer than the window.
    pub fn default_integer(n_max: usize) -> Self {
        ModeSchedule::Integer {
            n_max,
            lambda_min: 24.0,
        }
    }

    pub fn n_max(&self) -> usize {
        match self {
            ModeSchedule::Integer { n_max, .. } | ModeSchedule::LogSpaced { n_max, .. } => *n_max,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ModeSchedule::Integer { n_max, lambda_min } => {
                if *n_max == 0 || *lambda_min <= 0.0 {
                    return Err(FieldError::Config("integer schedule needs n_max > 0, lambda_min > 0".into()));
                }
            }
            ModeSchedule::LogSpaced {
                n_max,
                omega_lo,
                omega_hi,
            } => {
                if *n_max == 0 || *omega_lo <= 0.0 || *omega_hi <= *omega_lo {
                    return Err(FieldError::Config("log schedule needs n_max > 0, 0 < omega_lo < omega_hi".into()));
                }
            }
        }
        Ok(())
    }

    pub fn omegas(&self) -> Vec<f64> {
        match self {
            ModeSchedule::Integer { n_max, lambda_min } => (0..*n_max)
                .map(|n| 2.0 * PI * n as f64 / lambda_min)
                .collect(),
            ModeSchedule::LogSpaced {
                n_max,
                omega_lo,
                omega_hi,
            } => {
                let n = *n_max;
                let mut out = Vec::with_capacity(n);
                out.push(0.0);
                if n > 1 {
                    let (llo, lhi) = (omega_lo.ln(), omega_hi.ln());
                    for i in 1..n {
                        let t = i as f64 / (n - 1) as f64;
                        out.push((llo + t * (lhi - llo)).exp());
                    }
                }
                out
            }
        }
    }
}

/// 2D separable Fourier basis and its exact spatial derivatives.
///
/// Ordering: blocks (a, b, c, d) = (cc, sc, cs, ss), each row-major in (n, m),
/// so index = block * n_max^2 + n * n_max + m. The gradient matrix has two
/// rows (d/dx, d/dy) of the same width.
pub fn fourier_basis(r: [f64; 2], sched: &ModeSchedule) -> (Vec<f64>, Matrix) {
    let omegas = sched.omegas();
    let n = omegas.len();
    let cx: Vec<f64> = omegas.iter().map(|w| (w * r[0]).cos()).collect();
    let sx: Vec<f64> = omegas.iter().map(|w| (w * r[0]).sin()).collect();
    let cy: Vec<f64> = omegas.iter().map(|w| (w * r[1]).cos()).collect();
    let sy: Vec<f64> = omegas.iter().map(|w| (w * r[1]).sin()).collect();

    let len = 4 * n * n;
    let mut basis = vec![0.0; len];
    let mut grad = Matrix::zeros(2, len);
    for i in 0..n {
        let wi = omegas[i];
        for j in 0..n {
            let wj = omegas[j];
            let idx = i * n + j;
            let nn = n * n;
            // a = cos cos
            basis[idx] = cx[i] * cy[j];
            *grad.at_mut(0, idx) = -wi * sx[i] * cy[j];
            *grad.at_mut(1, idx) = -wj * cx[i] * sy[j];
            // b = sin cos
            basis[nn + idx] = sx[i] * cy[j];
            *grad.at_mut(0, nn + idx) = wi * cx[i] * cy[j];
            *grad.at_mut(1, nn + idx) = -wj * sx[i] * sy[j];
            // c = cos sin
            basis[2 * nn + idx] = cx[i] * sy[j];
            *grad.at_mut(0, 2 * nn + idx) = -wi * sx[i] * sy[j];
            *grad.at_mut(1, 2 * nn + idx) = wj * cx[i] * cy[j];
            // d = sin sin
            basis[3 * nn + idx] = sx[i] * sy[j];
            *grad.at_mut(0, 3 * nn + idx) = wi * cx[i] * sy[j];
            *grad.at_mut(1, 3 * nn + idx) = wj * sx[i] * cy[j];
        }
    }
    (basis, grad)
}

/// Basis values only; the potential-only training loop does not need the
/// gradient rows and they are two thirds of the work.
pub fn fourier_basis_value(r: [f64; 2], sched: &ModeSchedule) -> Vec<f64> {
    let omegas = sched.omegas();
    let n = omegas.len();
    let cx: Vec<f64> = omegas.iter().map(|w| (w * r[0]).cos()).collect();
    let sx: Vec<f64> = omegas.iter().map(|w| (w * r[0]).sin()).collect();
    let cy: Vec<f64> = omegas.iter().map(|w| (w * r[1]).cos()).collect();
    let sy: Vec<f64> = omegas.iter().map(|w| (w * r[1]).sin()).collect();
    let nn = n * n;
    let mut basis = vec![0.0; 4 * nn];
    for i in 0..n {
        for j in 0..n {
            let idx = i * n + j;
            basis[idx] = cx[i] * cy[j];
            basis[nn + idx] = sx[i] * cy[j];
            basis[2 * nn + idx] = cx[i] * sy[j];
            basis[3 * nn + idx] = sx[i] * sy[j];
        }
    }
    basis
}

/// 1D Fourier basis: (cos block, sin block), each of length n_max, plus the
/// derivative row.
pub fn fourier_basis_1d(x: f64, sched: &ModeSchedule) -> (Vec<f64>, Vec<f64>) {
    let omegas = sched.omegas();
    let n = omegas.len();
    let mut basis = vec![0.0; 2 * n];
    let mut grad = vec![0.0; 2 * n];
    for (i, &w) in omegas.iter().enumerate() {
        let (s, c) = (w * x).sin_cos();
        basis[i] = c;
        grad[i] = -w * s;
        basis[n + i] = s;
        grad[n + i] = w * c;
    }
    (basis, grad)
}

/// Normalization applied around the network: source positions divided by the
/// domain half-width and moments by the sampling upper bound on the way in;
/// the head output multiplied by `label_scale` on the way out. Raw potentials
/// are O(1e-2), and without the output scale the optimizer spends its budget
/// shrinking every coefficient instead of shaping the function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureNorm {
    pub pos_scale: f64,
    pub moment_scale: f64,
    #[serde(default = "one")]
    pub label_scale: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for FeatureNorm {
    fn default() -> Self {
        FeatureNorm {
            pos_scale: 3.0,
            moment_scale: 1.0,
            label_scale: 1.0,
        }
    }
}

/// Normalized (x, y, m_x, m_y, radius) hypernetwork input.
pub fn source_features(src: &Source, norm: &FeatureNorm) -> [f64; 5] {
    [
        src.position[0] / norm.pos_scale,
        src.position[1] / norm.pos_scale,
        src.moment[0] / norm.moment_scale,
        src.moment[1] / norm.moment_scale,
        src.radius,
    ]
}

/// Normalized (x, m, radius) for the 1D model.
pub fn source_features_1d(src: &Source1D, norm: &FeatureNorm) -> [f64; 3] {
    [
        src.position / norm.pos_scale,
        src.moment / norm.moment_scale,
        src.radius,
    ]
}

/// Inference head: what the aggregated embedding parameterizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "head", rename_all = "snake_case")]
pub enum Head {
    /// Embedding reshaped to the (a, b, c, d) Fourier coefficient blocks.
    Fourier { schedule: ModeSchedule },
    /// Trainable trunk (hidden layers of f); embedding supplies the final
    /// layer's weights plus bias.
    FcIlr { trunk: MlpParams },
    /// Embedding supplies every weight and bias of f with these dims.
    FcInr { dims: Vec<usize> },
    /// Embedding is (w_x, w_y, b) of a single affine map of r.
    Linear,
}

impl Head {
    pub fn kind(&self) -> ModelKind {
        match self {
            Head::Fourier { .. } => ModelKind::Fourier,
            Head::FcIlr { .. } => ModelKind::FcIlr,
            Head::FcInr { .. } => ModelKind::FcInr,
            Head::Linear => ModelKind::Linear,
        }
    }

    /// Embedding length this head consumes.
    pub fn embedding_len(&self) -> usize {
        match self {
            Head::Fourier { schedule } => 4 * schedule.n_max() * schedule.n_max(),
            Head::FcIlr { trunk } => trunk.output_dim() + 1,
            Head::FcInr { dims } => dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum(),
            Head::Linear => 3,
        }
    }
}

/// A complete surrogate: hypernetwork g plus inference head f.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateModel {
    pub hyper: MlpParams,
    pub head: Head,
    pub norm: FeatureNorm,
}

/// Construction-time sizes for a surrogate model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelConfig {
    pub kind: ModelKind,
    /// Hidden layer widths of the hypernetwork g.
    pub hyper_hidden: Vec<usize>,
    /// Fourier expansion order.
    pub n_max: usize,
    pub schedule: Option<ModeSchedule>,
    /// FC+ILR trunk width (depth fixed at 3 counting the generated layer).
    pub trunk_width: usize,
    /// FC-INR inference net width (depth 3).
    pub inr_width: usize,
    pub norm: FeatureNorm,
}

impl ModelConfig {
    pub fn desk_scale(kind: ModelKind) -> Self {
        ModelConfig {
            kind,
            hyper_hidden: vec![64, 64],
            n_max: 16,
            schedule: None,
            trunk_width: 64,
            inr_width: 16,
            norm: FeatureNorm::default(),
        }
    }
}

impl SurrogateModel {
    pub fn init(cfg: &ModelConfig, rng: &mut Rng) -> Result<Self> {
        let head = match cfg.kind {
            ModelKind::Fourier => {
                let schedule = cfg
                    .schedule
                    .clone()
                    .unwrap_or_else(|| ModeSchedule::default_integer(cfg.n_max));
                schedule.validate()?;
                Head::Fourier { schedule }
            }
            ModelKind::FcIlr => {
                let w = cfg.trunk_width;
                let trunk = init_mlp(&[2, w, w], rng);
                Head::FcIlr { trunk }
            }
            ModelKind::FcInr => {
                let w = cfg.inr_width;
                Head::FcInr {
                    dims: vec![2, w, w, 1],
                }
            }
            ModelKind::Linear => Head::Linear,
        };
        let out = head.embedding_len();
        let hyper = match cfg.kind {
            // both f and g are single linear layers in the Linear baseline
            ModelKind::Linear => init_mlp(&[5, out], rng),
            _ => {
                let mut dims = vec![5];
                dims.extend(&cfg.hyper_hidden);
                dims.push(out);
                init_mlp(&dims, rng)
            }
        };
        Ok(SurrogateModel {
            hyper,
            head,
            norm: cfg.norm,
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.head.kind()
    }

    pub fn embedding_len(&self) -> usize {
        self.head.embedding_len()
    }
}

fn check_agg(head: &Head, agg: &[f64]) -> Result<()> {
    if agg.len() != head.embedding_len() {
        return Err(FieldError::Dimension(format!(
            "embedding length {} does not match head consumption {}",
            agg.len(),
            head.embedding_len()
        )));
    }
    Ok(())
}

/// A head with its aggregate substituted in, ready for repeated evaluation.
/// Outputs carry the model's `label_scale`.
pub struct PreparedHead<'a> {
    pub scale: f64,
    pub form: HeadForm<'a>,
}

pub enum HeadForm<'a> {
    Fourier {
        schedule: &'a ModeSchedule,
        weights: &'a [f64],
    },
    Mlp(MlpParams),
    Linear([f64; 3]),
}

pub fn prepare_head<'a>(head: &'a Head, agg: &'a [f64], scale: f64) -> Result<PreparedHead<'a>> {
    check_agg(head, agg)?;
    let form = match head {
        Head::Fourier { schedule } => HeadForm::Fourier {
            schedule,
            weights: agg,
        },
        Head::FcIlr { trunk } => {
            let w = trunk.output_dim();
            let mut layers = trunk.layers.clone();
            layers.push(crate::numerics::Layer {
                weight: Matrix {
                    rows: 1,
                    cols: w,
                    data: agg[..w].to_vec(),
                },
                bias: vec![agg[w]],
            });
            HeadForm::Mlp(MlpParams { layers })
        }
        Head::FcInr { dims } => HeadForm::Mlp(MlpParams::unflatten(dims, agg)?),
        Head::Linear => HeadForm::Linear([agg[0], agg[1], agg[2]]),
    };
    Ok(PreparedHead { scale, form })
}

impl PreparedHead<'_> {
    pub fn potential(&self, r: [f64; 2]) -> f64 {
        self.scale
            * match &self.form {
                HeadForm::Fourier { schedule, weights } => {
                    let (basis, _) = fourier_basis(r, schedule);
                    basis.iter().zip(*weights).map(|(b, w)| b * w).sum()
                }
                HeadForm::Mlp(net) => mlp_forward(net, &r).unwrap()[0],
                HeadForm::Linear(w) => w[0] * r[0] + w[1] * r[1] + w[2],
            }
    }

    /// H = -grad_r of the surrogate potential, analytic.
    pub fn field(&self, r: [f64; 2]) -> [f64; 2] {
        let [gx, gy] = match &self.form {
            HeadForm::Fourier { schedule, weights } => {
                let (_, grad) = fourier_basis(r, schedule);
                let gx: f64 = grad.row(0).iter().zip(*weights).map(|(g, w)| g * w).sum();
                let gy: f64 = grad.row(1).iter().zip(*weights).map(|(g, w)| g * w).sum();
                [gx, gy]
            }
            HeadForm::Mlp(net) => {
                let j = mlp_input_gradient(net, &r).unwrap();
                [j.at(0, 0), j.at(0, 1)]
            }
            HeadForm::Linear(w) => [w[0], w[1]],
        };
        [-self.scale * gx, -self.scale * gy]
    }
}

/// Surrogate potential at `r` for one aggregated embedding.
pub fn potential(model: &SurrogateModel, agg: &[f64], r: [f64; 2]) -> Result<f64> {
    Ok(prepare_head(&model.head, agg, model.norm.label_scale)?.potential(r))
}

/// Surrogate field at `r`, the analytic negative gradient of [`potential`].
pub fn field(model: &SurrogateModel, agg: &[f64], r: [f64; 2]) -> Result<[f64; 2]> {
    Ok(prepare_head(&model.head, agg, model.norm.label_scale)?.field(r))
}

/// Hypernetwork embedding of one source.
pub fn embed(model: &SurrogateModel, src: &Source) -> Result<Vec<f64>> {
    mlp_forward(&model.hyper, &source_features(src, &model.norm))
}

/// Element-wise sum of embeddings.
pub fn aggregate(embs: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = embs
        .first()
        .ok_or_else(|| FieldError::Dimension("aggregate of empty list".into()))?;
    let mut out = first.clone();
    for e in &embs[1..] {
        if e.len() != out.len() {
            return Err(FieldError::Dimension("embedding lengths differ".into()));
        }
        for (o, v) in out.iter_mut().zip(e) {
            *o += v;
        }
    }
    Ok(out)
}

/// Instrumented evaluation counts for the scaling benchmark.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EvalCounts {
    pub embed_calls: u64,
    pub field_calls: u64,
}

/// O(M+N) collection inference: one embedding per source, one aggregation,
/// then one potential/field evaluation per point.
pub fn infer_collection(
    model: &SurrogateModel,
    col: &SourceCollection,
    points: &[[f64; 2]],
) -> Result<Vec<FieldSample>> {
    let mut counts = EvalCounts::default();
    infer_collection_counted(model, col, points, &mut counts)
}

pub fn infer_collection_counted(
    model: &SurrogateModel,
    col: &SourceCollection,
    points: &[[f64; 2]],
    counts: &mut EvalCounts,
) -> Result<Vec<FieldSample>> {
    let mut embs = Vec::with_capacity(col.sources.len());
    for src in &col.sources {
        embs.push(embed(model, src)?);
        counts.embed_calls += 1;
    }
    let agg = aggregate(&embs)?;
    let prepared = prepare_head(&model.head, &agg, model.norm.label_scale)?;
    let mut out = Vec::with_capacity(points.len());
    for &p in points {
        out.push(FieldSample {
            location: p,
            potential: prepared.potential(p),
            field: prepared.field(p),
        });
        counts.field_calls += 1;
    }
    Ok(out)
}

/// The 1D Fourier surrogate used for the superposition demonstration.
#[derive(Debug, Clone, PartialEq)]
pub struct Surrogate1D {
    pub hyper: MlpParams,
    pub schedule: ModeSchedule,
    pub norm: FeatureNorm,
}

impl Surrogate1D {
    pub fn init(n_max: usize, hyper_hidden: &[usize], norm: FeatureNorm, rng: &mut Rng) -> Self {
        let mut dims = vec![3];
        dims.extend(hyper_hidden);
        dims.push(2 * n_max);
        Surrogate1D {
            hyper: init_mlp(&dims, rng),
            schedule: ModeSchedule::default_integer(n_max),
            norm,
        }
    }

    pub fn embed(&self, src: &Source1D) -> Result<Vec<f64>> {
        mlp_forward(&self.hyper, &source_features_1d(src, &self.norm))
    }

    pub fn potential(&self, agg: &[f64], x: f64) -> Result<f64> {
        if agg.len() != 2 * self.schedule.n_max() {
            return Err(FieldError::Dimension("1D embedding length mismatch".into()));
        }
        let (basis, _) = fourier_basis_1d(x, &self.schedule);
        let raw: f64 = basis.iter().zip(agg).map(|(b, w)| b * w).sum();
        Ok(self.norm.label_scale * raw)
    }

    /// Aggregate all sources once, then evaluate the potential on `xs`.
    pub fn infer(&self, sources: &[Source1D], xs: &[f64]) -> Result<Vec<f64>> {
        let embs: Result<Vec<_>> = sources.iter().map(|s| self.embed(s)).collect();
        let agg = aggregate(&embs?)?;
        xs.iter().map(|&x| self.potential(&agg, x)).collect()
    }
}
