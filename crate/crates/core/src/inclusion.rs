//! Set-valued velocity maps with polytope images.
//!
//! A [`VelocityMap`] is a list of region-switched branches; the image at a
//! point is the convex hull of the vertex-field values of every branch whose
//! guard contains the point. Taking the union of active branches at guard
//! overlaps makes the map upper semicontinuous at branch boundaries by
//! construction.

use thiserror::Error;

use crate::expr::{ExprError, Expression};
use crate::geometry::{ConstraintSet, GeomError, QueryCtx};
use crate::sampling::{self, barycentric_grid, combination, dist, norm};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MapError {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error("point {0:?} is not covered by any branch guard")]
    Uncovered(Vec<f64>),
}

#[derive(Debug, Clone)]
pub struct Branch {
    pub guard: ConstraintSet,
    /// Each vertex field is one expression per state coordinate.
    pub vertex_fields: Vec<Vec<Expression>>,
}

#[derive(Debug, Clone)]
pub struct VelocityMap {
    branches: Vec<Branch>,
    dim: usize,
}

/// One admissibility-flagged velocity sample from the image polytope.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocitySample {
    pub weights: Vec<f64>,
    pub velocity: Vec<f64>,
    /// None when the underlying cone query was inconclusive.
    pub admissible: Option<bool>,
    pub residual: f64,
}

/// Sampled continuity estimates for the map.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuityReport {
    /// max over sampled pairs of Hausdorff distance / |x - y|.
    pub lipschitz_estimate: f64,
    /// Largest one-sided gap image(y) -> image(x) that persists as the
    /// sample radius shrinks (upper semicontinuity defect).
    pub usc_defect: f64,
    /// Largest persistent gap image(x) -> image(y) (lower semicontinuity
    /// defect).
    pub lsc_defect: f64,
    pub points: usize,
}

impl VelocityMap {
    pub fn new(branches: Vec<Branch>, dim: usize) -> VelocityMap {
        assert!(!branches.is_empty());
        VelocityMap { branches, dim }
    }

    /// Single unconditional branch.
    pub fn uniform(vertex_fields: Vec<Vec<Expression>>, dim: usize) -> VelocityMap {
        VelocityMap {
            branches: vec![Branch { guard: ConstraintSet::whole_space(dim), vertex_fields }],
            dim,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    /// Vertex velocities of every branch active at `x`; the image is their
    /// convex hull. Duplicate vertices are merged.
    pub fn image(&self, x: &[f64], tau_mem: f64) -> Result<Vec<Vec<f64>>, MapError> {
        let mut vertices: Vec<Vec<f64>> = Vec::new();
        let mut covered = false;
        for branch in &self.branches {
            if !branch.guard.contains(x, tau_mem)? {
                continue;
            }
            covered = true;
            for field in &branch.vertex_fields {
                let mut v = Vec::with_capacity(self.dim);
                for component in field {
                    v.push(component.evaluate(x)?);
                }
                if !vertices.iter().any(|w| dist(w, &v) <= 1e-12) {
                    vertices.push(v);
                }
            }
        }
        if !covered {
            return Err(MapError::Uncovered(x.to_vec()));
        }
        Ok(vertices)
    }

    /// Largest image vertex norm over a point set; the simulator's step and
    /// containment tolerances scale with it.
    pub fn velocity_bound(&self, points: &[Vec<f64>], tau_mem: f64) -> f64 {
        let mut bound = 0.0f64;
        for x in points {
            if let Ok(vertices) = self.image(x, tau_mem) {
                for v in &vertices {
                    bound = bound.max(norm(v));
                }
            }
        }
        bound
    }

    /// Enumerates a barycentric grid over the image simplex (resolution `q`,
    /// vertices always included) and flags each sample by contingent-cone
    /// membership in `C` at `x`.
    pub fn admissible_velocities(
        &self,
        c: &ConstraintSet,
        x: &[f64],
        q: usize,
        ctx: &QueryCtx,
    ) -> Result<Vec<VelocitySample>, MapError> {
        let vertices = self.image(x, ctx.tols.tau_mem)?;
        let k = vertices.len();
        // interior points absorb every direction; skip the cone machinery
        let interior = c.is_whole_space() || c.interior_margin(x) > 1e-6;
        let mut samples = Vec::new();
        let mut weight_sets: Vec<Vec<f64>> = Vec::new();
        for i in 0..k {
            let mut w = vec![0.0; k];
            w[i] = 1.0;
            weight_sets.push(w);
        }
        if k > 1 {
            for w in barycentric_grid(k, q) {
                if !weight_sets.iter().any(|u| dist(u, &w) <= 1e-12) {
                    weight_sets.push(w);
                }
            }
        }
        for weights in weight_sets {
            let velocity = combination(&vertices, &weights);
            let (admissible, residual) = if interior || norm(&velocity) == 0.0 {
                (Some(true), 0.0)
            } else {
                match c.in_contingent_cone(x, &velocity, ctx) {
                    Ok(r) => (Some(r.member), r.residual),
                    Err(_) => (None, f64::NAN),
                }
            };
            samples.push(VelocitySample { weights, velocity, admissible, residual });
        }
        Ok(samples)
    }

    /// One-sided Hausdorff continuity sweep around each point: compares the
    /// image at `x` with images at sampled offsets of radius `rho` and
    /// `rho / 10`, reporting a Lipschitz ratio estimate and usc/lsc defects
    /// that persist at the smaller radius.
    pub fn continuity_diagnostic(
        &self,
        points: &[Vec<f64>],
        rho: f64,
        tau_mem: f64,
        seed: u64,
    ) -> ContinuityReport {
        let mut lipschitz = 0.0f64;
        let mut usc_defect = 0.0f64;
        let mut lsc_defect = 0.0f64;
        for x in points {
            let image_x = match self.image(x, tau_mem) {
                Ok(v) => v,
                Err(_) => continue,
            };
            let dirs = sampling::unit_directions(
                self.dim,
                8,
                sampling::derive_seed(seed, 0xf10c, sampling::point_hash(x)),
            );
            let mut usc_at = |radius: f64| -> f64 {
                let mut worst = 0.0f64;
                for u in &dirs {
                    let y = sampling::add_scaled(x, radius, u);
                    if let Ok(image_y) = self.image(&y, tau_mem) {
                        let gap = directed_hausdorff(&image_y, &image_x);
                        lipschitz = lipschitz.max(gap / radius);
                        worst = worst.max(gap);
                    }
                }
                worst
            };
            let coarse = usc_at(rho);
            let fine = usc_at(rho / 10.0);
            usc_defect = usc_defect.max(coarse.min(fine));

            let mut lsc_at = |radius: f64| -> f64 {
                let mut worst = 0.0f64;
                for u in &dirs {
                    let y = sampling::add_scaled(x, radius, u);
                    if let Ok(image_y) = self.image(&y, tau_mem) {
                        let gap = directed_hausdorff(&image_x, &image_y);
                        lipschitz = lipschitz.max(gap / radius);
                        worst = worst.max(gap);
                    }
                }
                worst
            };
            let coarse = lsc_at(rho);
            let fine = lsc_at(rho / 10.0);
            lsc_defect = lsc_defect.max(coarse.min(fine));
        }
        ContinuityReport { lipschitz_estimate: lipschitz, usc_defect, lsc_defect, points: points.len() }
    }
}

/// Directed Hausdorff distance between vertex-represented hulls: the largest
/// distance from a vertex of `a` to the hull of `b` (convexity puts the
/// maximizer at a vertex).
pub fn directed_hausdorff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter().map(|v| sampling::dist_to_hull(v, b)).fold(0.0, f64::max)
}

/// The augmented map `(F, 0)` on `R^{n+1}`: state velocities unchanged, the
/// added epigraph coordinate is constant along flows.
pub fn augment(map: &VelocityMap) -> VelocityMap {
    let dim = map.dim() + 1;
    let branches = map
        .branches()
        .iter()
        .map(|b| Branch {
            guard: b.guard.product_with_reals(),
            vertex_fields: b
                .vertex_fields
                .iter()
                .map(|field| {
                    let mut lifted: Vec<Expression> = field.iter().map(|e| e.lift(dim)).collect();
                    lifted.push(Expression::constant(0.0, dim));
                    lifted
                })
                .collect(),
        })
        .collect();
    VelocityMap::new(branches, dim)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;
    use crate::tol::Tolerances;

    fn tols() -> Tolerances {
        Tolerances::default()
    }

    fn field(components: &[&str], dim: usize) -> Vec<Expression> {
        components.iter().map(|s| parse(s, dim).unwrap()).collect()
    }

    /// Hull of a rightward unit field and a state-dependent rotor.
    fn drift_map() -> VelocityMap {
        VelocityMap::uniform(
            vec![field(&["1", "0"], 2), field(&["-cos(x1^2)", "sin(x1^2)"], 2)],
            2,
        )
    }

    /// Region-switched map: [1, [-1,1]x1] right of the axis, [1, 0] left.
    fn switched_map() -> VelocityMap {
        VelocityMap::new(
            vec![
                Branch {
                    guard: ConstraintSet::leq(parse("-x1", 2).unwrap()),
                    vertex_fields: vec![field(&["1", "x1"], 2), field(&["1", "-x1"], 2)],
                },
                Branch {
                    guard: ConstraintSet::leq(parse("x1", 2).unwrap()),
                    vertex_fields: vec![field(&["1", "0"], 2)],
                },
            ],
            2,
        )
    }

    fn ballistic_map() -> VelocityMap {
        VelocityMap::uniform(vec![field(&["x2", "-9.81"], 2)], 2)
    }

    #[test]
    fn image_per_spec_examples() {
        let t = tols();
        let img = drift_map().image(&[0.0, 0.0], t.tau_mem).unwrap();
        assert_eq!(img.len(), 2);
        assert!(img.contains(&vec![1.0, 0.0]));
        assert!(img.contains(&vec![-1.0, 0.0]));

        let img = switched_map().image(&[0.5, 0.0], t.tau_mem).unwrap();
        assert!(img.contains(&vec![1.0, 0.5]));
        assert!(img.contains(&vec![1.0, -0.5]));

        let img = ballistic_map().image(&[0.0, 1.0], t.tau_mem).unwrap();
        assert_eq!(img, vec![vec![1.0, -9.81]]);
    }

    #[test]
    fn admissible_velocities_per_spec_examples() {
        let t = tols();
        let bounds = [(-2.0, 2.0), (-2.0, 2.0)];
        let ctx = QueryCtx { bounds: &bounds, tols: &t, seed: 42 };
        let line = ConstraintSet::eq(parse("x2", 2).unwrap());
        // at the origin the whole segment lies along the line
        let samples = drift_map().admissible_velocities(&line, &[0.0, 0.0], 10, &ctx).unwrap();
        assert!(samples.iter().all(|s| s.admissible == Some(true)));
        assert_eq!(samples.len(), 11); // 2 vertices + 9 interior grid weights

        // ballistic corner: the only velocity exits the halfspace
        let halfspace = ConstraintSet::leq(parse("-x1", 2).unwrap());
        let samples = ballistic_map().admissible_velocities(&halfspace, &[0.0, -1.0], 10, &ctx).unwrap();
        assert!(samples.iter().all(|s| s.admissible == Some(false)));

        // switched map on the line branch right of the cusp: only the
        // horizontal mid-sample survives
        let cusp = ConstraintSet::union(vec![
            ConstraintSet::leq(parse("x1^2 - abs(x2)", 2).unwrap()),
            ConstraintSet::leq(parse("x1", 2).unwrap()),
            ConstraintSet::eq(parse("x2", 2).unwrap()),
        ]);
        let samples = switched_map().admissible_velocities(&cusp, &[0.5, 0.0], 10, &ctx).unwrap();
        let admitted: Vec<&VelocitySample> =
            samples.iter().filter(|s| s.admissible == Some(true)).collect();
        assert!(!admitted.is_empty());
        for s in &admitted {
            assert!(s.velocity[1].abs() <= 1e-6, "velocity {:?} should not be admissible", s.velocity);
        }
        // and the vertices (1, +-0.5) are rejected with visible residuals
        for s in &samples {
            if (s.velocity[1].abs() - 0.5).abs() < 1e-9 {
                assert_eq!(s.admissible, Some(false));
                assert!(s.residual > t.eps_tan * 10.0, "residual {}", s.residual);
            }
        }
    }

    #[test]
    fn whole_space_admits_every_sample() {
        let t = tols();
        let bounds = [(-2.0, 2.0), (-2.0, 2.0)];
        let ctx = QueryCtx { bounds: &bounds, tols: &t, seed: 42 };
        let all = ConstraintSet::whole_space(2);
        let samples = drift_map().admissible_velocities(&all, &[0.3, -0.7], 10, &ctx).unwrap();
        assert!(samples.iter().all(|s| s.admissible == Some(true)));
    }

    #[test]
    fn barycentric_samples_stay_in_the_hull() {
        let t = tols();
        let bounds = [(-2.0, 2.0), (-2.0, 2.0)];
        let ctx = QueryCtx { bounds: &bounds, tols: &t, seed: 42 };
        let all = ConstraintSet::whole_space(2);
        let map = drift_map();
        for x in [[0.0, 0.0], [0.7, 0.2], [-1.1, 0.5]] {
            let vertices = map.image(&x, t.tau_mem).unwrap();
            for s in map.admissible_velocities(&all, &x, 10, &ctx).unwrap() {
                assert!(sampling::dist_to_hull(&s.velocity, &vertices) <= 1e-12);
            }
        }
    }

    #[test]
    fn continuity_diagnostic_per_spec_examples() {
        let t = tols();
        let grid = sampling::box_lattice(&[(-1.0, 1.0), (-1.0, 1.0)], 10);
        // smooth hull map: finite Lipschitz estimate, no defects
        let report = drift_map().continuity_diagnostic(&grid, 1e-3, t.tau_mem, 42);
        assert!(report.lipschitz_estimate.is_finite());
        assert!(report.lipschitz_estimate < 10.0, "{report:?}");
        assert!(report.usc_defect <= 1e-3);
        assert!(report.lsc_defect <= 1e-3);

        // constant map: estimate exactly zero
        let constant = VelocityMap::uniform(vec![field(&["1", "2"], 2)], 2);
        let report = constant.continuity_diagnostic(&grid, 1e-3, t.tau_mem, 42);
        assert_eq!(report.lipschitz_estimate, 0.0);

        // the switched map's branches agree at the switching line, so the
        // diagnostic sees a continuous map across x1 = 0
        let report = switched_map().continuity_diagnostic(&grid, 1e-3, t.tau_mem, 42);
        assert!(report.usc_defect <= 1e-3, "{report:?}");
        assert!(report.lsc_defect <= 1e-3, "{report:?}");
    }

    #[test]
    fn discontinuous_map_is_flagged() {
        // genuinely jumping image: {(1,0)} left, {(1,1)} right of x1=0
        let jumpy = VelocityMap::new(
            vec![
                Branch {
                    guard: ConstraintSet::leq(parse("x1", 2).unwrap()),
                    vertex_fields: vec![field(&["1", "0"], 2)],
                },
                Branch {
                    guard: ConstraintSet::leq(parse("-x1", 2).unwrap()),
                    vertex_fields: vec![field(&["1", "1"], 2)],
                },
            ],
            2,
        );
        let grid = vec![vec![0.0, 0.0]];
        let report = jumpy.continuity_diagnostic(&grid, 1e-3, 1e-9, 42);
        // at the boundary the image is the union (usc holds by construction)
        // but nearby images lose a vertex: lsc defect ~ 1
        assert!(report.lsc_defect > 0.5, "{report:?}");
        assert!(report.usc_defect <= 1e-9, "{report:?}");
    }

    #[test]
    fn augmented_map_freezes_the_level_coordinate() {
        let t = tols();
        let aug = augment(&ballistic_map());
        assert_eq!(aug.dim(), 3);
        let img = aug.image(&[0.0, 1.0, 5.0], t.tau_mem).unwrap();
        assert_eq!(img, vec![vec![1.0, -9.81, 0.0]]);
    }
}
