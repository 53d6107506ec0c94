//! Exact dipole potentials and fields by superposition, plus the median
//! relative-error metrics used for all model evaluation.
//!
//! Everything here works in units where mu0 = 1 and lengths are measured in
//! source radii. The 2D case is the 3D dipole formula evaluated in-plane.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{FieldError, Result};

/// One circular (in-plane spherical) dipole source.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Source {
    pub position: [f64; 2],
    pub moment: [f64; 2],
    pub radius: f64,
}

impl Source {
    pub fn new(position: [f64; 2], moment: [f64; 2], radius: f64) -> Result<Self> {
        let src = Source {
            position,
            moment,
            radius,
        };
        src.validate()?;
        Ok(src)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self.position.iter().chain(self.moment.iter()).all(|v| v.is_finite());
        if !finite || !self.radius.is_finite() {
            return Err(FieldError::InvalidSource("non-finite component".into()));
        }
        if self.radius <= 0.0 {
            return Err(FieldError::InvalidSource(format!(
                "radius must be positive, got {}",
                self.radius
            )));
        }
        Ok(())
    }
}

/// One-dimensional analogue of a dipole source.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Source1D {
    pub position: f64,
    pub moment: f64,
    pub radius: f64,
}

impl Source1D {
    pub fn new(position: f64, moment: f64, radius: f64) -> Result<Self> {
        if !position.is_finite() || !moment.is_finite() || !radius.is_finite() {
            return Err(FieldError::InvalidSource("non-finite component".into()));
        }
        if radius <= 0.0 {
            return Err(FieldError::InvalidSource("radius must be positive".into()));
        }
        Ok(Source1D {
            position,
            moment,
            radius,
        })
    }
}

/// Axis-aligned evaluation domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
}

impl Domain {
    pub fn new(lo: [f64; 2], hi: [f64; 2]) -> Result<Self> {
        if lo[0] >= hi[0] || lo[1] >= hi[1] {
            return Err(FieldError::InvalidDomain(format!("empty domain {lo:?}..{hi:?}")));
        }
        Ok(Domain { lo, hi })
    }

    /// The default experimental window, [-3,3] x [-3,3].
    pub fn standard() -> Self {
        Domain {
            lo: [-3.0, -3.0],
            hi: [3.0, 3.0],
        }
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        p[0] >= self.lo[0] && p[0] <= self.hi[0] && p[1] >= self.lo[1] && p[1] <= self.hi[1]
    }

    pub fn width(&self, axis: usize) -> f64 {
        self.hi[axis] - self.lo[axis]
    }
}

/// An ordered collection of sources; the unit of inference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceCollection {
    pub sources: Vec<Source>,
    pub domain: Domain,
}

impl SourceCollection {
    pub fn new(sources: Vec<Source>, domain: Domain) -> Result<Self> {
        if sources.is_empty() {
            return Err(FieldError::InvalidSource("collection must hold at least one source".into()));
        }
        for src in &sources {
            src.validate()?;
            if !domain.contains(src.position) {
                return Err(FieldError::InvalidSource(format!(
                    "source at {:?} lies outside the domain",
                    src.position
                )));
            }
        }
        Ok(SourceCollection { sources, domain })
    }
}

/// An evaluation location with its potential and field values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldSample {
    pub location: [f64; 2],
    pub potential: f64,
    pub field: [f64; 2],
}

/// Median relative errors for potential and field norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorMetrics {
    pub delta_phi: f64,
    pub delta_h: f64,
}

/// Scalar potential of a single dipole at `r`. Inside form (radial factors
/// frozen at the source radius) is used for |r - r_i| < d_i, which removes
/// the singularity; the two forms agree at the boundary.
pub fn dipole_potential(src: &Source, r: [f64; 2]) -> f64 {
    let s = [r[0] - src.position[0], r[1] - src.position[1]];
    let dist = (s[0] * s[0] + s[1] * s[1]).sqrt();
    let m_dot_s = src.moment[0] * s[0] + src.moment[1] * s[1];
    let denom = if dist >= src.radius {
        dist * dist * dist
    } else {
        src.radius * src.radius * src.radius
    };
    m_dot_s / (4.0 * PI * denom)
}

/// Field H = -grad phi of a single dipole at `r`, analytic.
pub fn dipole_field(src: &Source, r: [f64; 2]) -> [f64; 2] {
    let s = [r[0] - src.position[0], r[1] - src.position[1]];
    let dist2 = s[0] * s[0] + s[1] * s[1];
    let dist = dist2.sqrt();
    let m = src.moment;
    if dist >= src.radius {
        // grad phi = (m/|s|^3 - 3 (m.s) s / |s|^5) / 4pi
        let inv3 = 1.0 / (dist2 * dist);
        let inv5 = inv3 / dist2;
        let m_dot_s = m[0] * s[0] + m[1] * s[1];
        [
            -(m[0] * inv3 - 3.0 * m_dot_s * s[0] * inv5) / (4.0 * PI),
            -(m[1] * inv3 - 3.0 * m_dot_s * s[1] * inv5) / (4.0 * PI),
        ]
    } else {
        let inv3 = 1.0 / (src.radius * src.radius * src.radius);
        [-m[0] * inv3 / (4.0 * PI), -m[1] * inv3 / (4.0 * PI)]
    }
}

/// Superposed potential over all sources, ascending source index.
pub fn collection_potential(col: &SourceCollection, points: &[[f64; 2]]) -> Vec<f64> {
    points
        .iter()
        .map(|&p| col.sources.iter().map(|s| dipole_potential(s, p)).sum())
        .collect()
}

/// Superposed field over all sources, ascending source index.
pub fn collection_field(col: &SourceCollection, points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    points
        .iter()
        .map(|&p| {
            let mut h = [0.0, 0.0];
            for s in &col.sources {
                let hs = dipole_field(s, p);
                h[0] += hs[0];
                h[1] += hs[1];
            }
            h
        })
        .collect()
}

/// Superposed field with an explicit count of dipole evaluations performed.
pub fn collection_field_counted(
    col: &SourceCollection,
    points: &[[f64; 2]],
    evals: &mut u64,
) -> Vec<[f64; 2]> {
    *evals += (col.sources.len() as u64) * (points.len() as u64);
    collection_field(col, points)
}

/// Ground-truth samples (potential and field) for a collection.
pub fn collection_samples(col: &SourceCollection, points: &[[f64; 2]]) -> Vec<FieldSample> {
    let phi = collection_potential(col, points);
    let h = collection_field(col, points);
    points
        .iter()
        .zip(phi)
        .zip(h)
        .map(|((&location, potential), field)| FieldSample {
            location,
            potential,
            field,
        })
        .collect()
}

/// 1D analogue of the dipole potential: m (x - x_i) / (4 pi |x - x_i|^3)
/// outside, with the radial factor frozen at the source radius inside.
pub fn dipole_potential_1d(src: &Source1D, x: f64) -> f64 {
    let s = x - src.position;
    let dist = s.abs();
    let denom = if dist >= src.radius {
        dist * dist * dist
    } else {
        src.radius * src.radius * src.radius
    };
    src.moment * s / (4.0 * PI * denom)
}

pub fn collection_potential_1d(sources: &[Source1D], xs: &[f64]) -> Vec<f64> {
    xs.iter()
        .map(|&x| sources.iter().map(|s| dipole_potential_1d(s, x)).sum())
        .collect()
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Median relative errors between predicted and true samples. Samples whose
/// true potential (resp. field norm) is exactly zero are excluded from that
/// median rather than clamped.
pub fn relative_errors(pred: &[FieldSample], truth: &[FieldSample]) -> Result<ErrorMetrics> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(FieldError::MetricInput(format!(
            "sample counts must match and be nonempty ({} vs {})",
            pred.len(),
            truth.len()
        )));
    }
    let mut phi_errs = Vec::with_capacity(pred.len());
    let mut h_errs = Vec::with_capacity(pred.len());
    for (p, t) in pred.iter().zip(truth) {
        if t.potential != 0.0 {
            phi_errs.push((p.potential - t.potential).abs() / t.potential.abs());
        }
        let h_norm = (t.field[0] * t.field[0] + t.field[1] * t.field[1]).sqrt();
        if h_norm != 0.0 {
            let dx = p.field[0] - t.field[0];
            let dy = p.field[1] - t.field[1];
            h_errs.push((dx * dx + dy * dy).sqrt() / h_norm);
        }
    }
    if phi_errs.is_empty() || h_errs.is_empty() {
        return Err(FieldError::MetricInput(
            "all samples excluded (zero denominators)".into(),
        ));
    }
    Ok(ErrorMetrics {
        delta_phi: median(&mut phi_errs),
        delta_h: median(&mut h_errs),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::finite_difference_gradient;
    use proptest::prelude::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn unit_source() -> Source {
        Source::new([0.0, 0.0], [0.0, 1.0], 1.0).unwrap()
    }

    #[test]
    fn potential_on_axis() {
        // phi(0, 2) = m . s / (4 pi |s|^3) = 2 / (4 pi 8) = 1/(16 pi)
        let phi = dipole_potential(&unit_source(), [0.0, 2.0]);
        assert!((phi - 1.0 / (16.0 * PI)).abs() < 1e-15);
    }

    #[test]
    fn potential_perpendicular_and_center() {
        assert_eq!(dipole_potential(&unit_source(), [2.0, 0.0]), 0.0);
        assert_eq!(dipole_potential(&unit_source(), [0.0, 0.0]), 0.0);
    }

    #[test]
    fn potential_continuous_at_boundary() {
        let src = Source::new([0.0, 0.0], [0.3, 0.7], 1.0).unwrap();
        let dir = [0.6, 0.8];
        let eps = 1e-9;
        let inner = dipole_potential(&src, [dir[0] * (1.0 - eps), dir[1] * (1.0 - eps)]);
        let outer = dipole_potential(&src, [dir[0] * (1.0 + eps), dir[1] * (1.0 + eps)]);
        assert!((inner - outer).abs() < 1e-8);
    }

    #[test]
    fn field_on_axis() {
        let h = dipole_field(&unit_source(), [0.0, 2.0]);
        assert!(h[0].abs() < 1e-15);
        assert!((h[1] - 1.0 / (16.0 * PI)).abs() < 1e-15);
    }

    #[test]
    fn field_zero_moment() {
        let src = Source::new([0.3, -0.2], [0.0, 0.0], 1.0).unwrap();
        assert_eq!(dipole_field(&src, [1.0, 1.0]), [0.0, 0.0]);
        assert_eq!(dipole_field(&src, [0.31, -0.2]), [0.0, 0.0]);
    }

    #[test]
    fn field_matches_finite_differences() {
        let mut rng = StdRng::seed_from_u64(7);
        let mut checked = 0;
        while checked < 1000 {
            let src = Source::new(
                [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)],
                [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
                1.0,
            )
            .unwrap();
            let r = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
            let dist = ((r[0] - src.position[0]).powi(2) + (r[1] - src.position[1]).powi(2)).sqrt();
            // stay away from the inside/outside boundary
            if (dist - src.radius).abs() < 0.01 {
                continue;
            }
            let h = dipole_field(&src, r);
            let g = finite_difference_gradient(|x| dipole_potential(&src, [x[0], x[1]]), &r, 1e-5);
            let h_fd = [-g[0], -g[1]];
            let norm = (h[0] * h[0] + h[1] * h[1]).sqrt().max(1e-12);
            let err = ((h[0] - h_fd[0]).powi(2) + (h[1] - h_fd[1]).powi(2)).sqrt() / norm;
            assert!(err < 1e-6, "FD mismatch {err} at {r:?} for {src:?}");
            checked += 1;
        }
    }

    #[test]
    fn collection_linearity() {
        let s = unit_source();
        let col1 = SourceCollection::new(vec![s], Domain::standard()).unwrap();
        let col2 = SourceCollection::new(vec![s, s], Domain::standard()).unwrap();
        let pts = vec![[1.0, 1.5], [-2.0, 0.3], [0.1, 2.7]];
        let p1 = collection_potential(&col1, &pts);
        let p2 = collection_potential(&col2, &pts);
        for (a, b) in p1.iter().zip(&p2) {
            assert!((2.0 * a - b).abs() < 1e-15);
        }
        assert!(collection_potential(&col1, &[]).is_empty());
    }

    #[test]
    fn single_source_collection_field() {
        let s = unit_source();
        let col = SourceCollection::new(vec![s], Domain::standard()).unwrap();
        let pts = vec![[1.2, -0.4]];
        assert_eq!(collection_field(&col, &pts)[0], dipole_field(&s, [1.2, -0.4]));
    }

    #[test]
    fn potential_1d_values() {
        let src = Source1D::new(0.0, 1.0, 1.0).unwrap();
        assert!((dipole_potential_1d(&src, 2.0) - 1.0 / (16.0 * PI)).abs() < 1e-15);
        assert_eq!(dipole_potential_1d(&src, 0.0), 0.0);
        // antisymmetry
        let src = Source1D::new(0.4, -0.8, 1.0).unwrap();
        for a in [0.2, 0.9, 2.5] {
            let plus = dipole_potential_1d(&src, src.position + a);
            let minus = dipole_potential_1d(&src, src.position - a);
            assert!((plus + minus).abs() < 1e-15);
        }
    }

    #[test]
    fn metrics_basic() {
        let truth: Vec<FieldSample> = (1..=5)
            .map(|i| FieldSample {
                location: [i as f64, 0.0],
                potential: i as f64,
                field: [i as f64, -(i as f64)],
            })
            .collect();
        let m = relative_errors(&truth, &truth).unwrap();
        assert_eq!(m.delta_phi, 0.0);
        assert_eq!(m.delta_h, 0.0);

        let pred: Vec<FieldSample> = truth
            .iter()
            .map(|s| FieldSample {
                location: s.location,
                potential: 1.05 * s.potential,
                field: [1.05 * s.field[0], 1.05 * s.field[1]],
            })
            .collect();
        let m = relative_errors(&pred, &truth).unwrap();
        assert!((m.delta_phi - 0.05).abs() < 1e-12);
        assert!((m.delta_h - 0.05).abs() < 1e-12);
    }

    #[test]
    fn metrics_median_of_three() {
        let truth: Vec<FieldSample> = [1.0, 1.0, 1.0]
            .iter()
            .map(|&p| FieldSample {
                location: [0.0, 0.0],
                potential: p,
                field: [1.0, 0.0],
            })
            .collect();
        let pred: Vec<FieldSample> = [1.01, 1.02, 11.0]
            .iter()
            .map(|&p| FieldSample {
                location: [0.0, 0.0],
                potential: p,
                field: [1.0, 0.0],
            })
            .collect();
        let m = relative_errors(&pred, &truth).unwrap();
        assert!((m.delta_phi - 0.02).abs() < 1e-12);
    }

    #[test]
    fn metrics_zero_denominators_excluded() {
        let truth = vec![
            FieldSample {
                location: [0.0, 0.0],
                potential: 0.0,
                field: [0.0, 0.0],
            },
            FieldSample {
                location: [1.0, 0.0],
                potential: 2.0,
                field: [1.0, 0.0],
            },
        ];
        let pred = vec![
            FieldSample {
                location: [0.0, 0.0],
                potential: 5.0,
                field: [3.0, 0.0],
            },
            FieldSample {
                location: [1.0, 0.0],
                potential: 2.2,
                field: [1.1, 0.0],
            },
        ];
        let m = relative_errors(&pred, &truth).unwrap();
        assert!((m.delta_phi - 0.1).abs() < 1e-12);

        let all_zero = vec![truth[0]];
        let pred_zero = vec![pred[0]];
        assert!(relative_errors(&pred_zero, &all_zero).is_err());
    }

    #[test]
    fn invalid_inputs_rejected() {
        assert!(Source::new([0.0, 0.0], [1.0, 0.0], 0.0).is_err());
        assert!(Source::new([f64::NAN, 0.0], [1.0, 0.0], 1.0).is_err());
        assert!(Domain::new([1.0, 0.0], [1.0, 2.0]).is_err());
        let d = Domain::standard();
        let outside = Source::new([5.0, 0.0], [1.0, 0.0], 1.0).unwrap();
        assert!(SourceCollection::new(vec![outside], d).is_err());
        assert!(SourceCollection::new(vec![], d).is_err());
    }

    fn arb_source() -> impl Strategy<Value = Source> {
        (
            -2.5f64..2.5,
            -2.5f64..2.5,
            -1.0f64..1.0,
            -1.0f64..1.0,
        )
            .prop_map(|(x, y, mx, my)| Source::new([x, y], [mx, my], 1.0).unwrap())
    }

    proptest! {
        #[test]
        fn superposition_over_partition(
            srcs in prop::collection::vec(arb_source(), 2..8),
            split in 1usize..7,
            px in -3.0f64..3.0,
            py in -3.0f64..3.0,
        ) {
            let split = split.min(srcs.len() - 1);
            let d = Domain::standard();
            let all = SourceCollection::new(srcs.clone(), d).unwrap();
            let left = SourceCollection::new(srcs[..split].to_vec(), d).unwrap();
            let right = SourceCollection::new(srcs[split..].to_vec(), d).unwrap();
            let pts = [[px, py]];
            let total = collection_potential(&all, &pts)[0];
            let parts = collection_potential(&left, &pts)[0] + collection_potential(&right, &pts)[0];
            let scale = total.abs().max(1e-9);
            prop_assert!((total - parts).abs() / scale < 1e-12);

            let ht = collection_field(&all, &pts)[0];
            let hl = collection_field(&left, &pts)[0];
            let hr = collection_field(&right, &pts)[0];
            let hnorm = (ht[0]*ht[0] + ht[1]*ht[1]).sqrt().max(1e-9);
            prop_assert!(((ht[0] - hl[0] - hr[0]).powi(2) + (ht[1] - hl[1] - hr[1]).powi(2)).sqrt() / hnorm < 1e-12);
        }

        #[test]
        fn translation_equivariance(
            src in arb_source(),
            px in -3.0f64..3.0,
            py in -3.0f64..3.0,
            dx in -5.0f64..5.0,
            dy in -5.0f64..5.0,
        ) {
            let shifted = Source::new(
                [src.position[0] + dx, src.position[1] + dy],
                src.moment,
                src.radius,
            ).unwrap();
            let phi0 = dipole_potential(&src, [px, py]);
            let phi1 = dipole_potential(&shifted, [px + dx, py + dy]);
            prop_assert!((phi0 - phi1).abs() <= 1e-12 * phi0.abs().max(1.0));
            let h0 = dipole_field(&src, [px, py]);
            let h1 = dipole_field(&shifted, [px + dx, py + dy]);
            prop_assert!((h0[0] - h1[0]).abs() <= 1e-12 * h0[0].abs().max(1.0));
            prop_assert!((h0[1] - h1[1]).abs() <= 1e-12 * h0[1].abs().max(1.0));
        }

        #[test]
        fn metric_scale_law(eps in 0.001f64..0.5) {
            let truth: Vec<FieldSample> = (1..=7).map(|i| FieldSample {
                location: [i as f64, 0.0],
                potential: (i as f64) * 0.3 - 1.0,
                field: [i as f64, 0.5],
            }).filter(|s| s.potential != 0.0).collect();
            let pred: Vec<FieldSample> = truth.iter().map(|s| FieldSample {
                location: s.location,
                potential: (1.0 + eps) * s.potential,
                field: [(1.0 + eps) * s.field[0], (1.0 + eps) * s.field[1]],
            }).collect();
            let m = relative_errors(&pred, &truth).unwrap();
            prop_assert!((m.delta_phi - eps).abs() < 1e-12);
        }
    }
}
