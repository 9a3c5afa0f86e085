//! Piecewise-polynomial trajectories: constraint assembly, minimum-snap
//! solving, nullspace bases, and evaluation.
//!
//! The stacked coefficient vector is axis-major:
//! `[x: seg0 c0..cd, seg1 c0..cd, ... | y: ... | z: ...]`, and the
//! constraint matrix is block-diagonal over the three axes. Moving the
//! coefficients along the nullspace of the constraint matrix changes the
//! trajectory shape while keeping every keypoint and continuity constraint
//! satisfied.

mod families;
mod file;
mod sampled;

pub use families::{
    random_keypoints, sample_eval_trajectory, sample_trajectory, times_from_speed,
    times_from_speeds, TrajectoryConfig, TrajectoryFamily, SEGMENT_DURATION_CAP,
};
pub use file::{read_trajectory, trajectory_from_string, trajectory_to_string, write_trajectory};
pub use sampled::{Lissajous, SampledTrajectory, TrajWindow, Trajectory, ZigZag};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::math::Vec3;

/// Waypoints `p_i` with strictly increasing passage times `t_i` (t₀ = 0).
#[derive(Clone, Debug, PartialEq)]
pub struct Keypoints {
    pub positions: Vec<Vec3>,
    pub times: Vec<f64>,
}

impl Keypoints {
    pub fn new(positions: Vec<Vec3>, times: Vec<f64>) -> Result<Self> {
        let kp = Keypoints { positions, times };
        kp.validate()?;
        Ok(kp)
    }

    pub fn validate(&self) -> Result<()> {
        if self.positions.len() != self.times.len() {
            return Err(Error::Trajectory(format!(
                "{} positions but {} times",
                self.positions.len(),
                self.times.len()
            )));
        }
        if self.positions.len() < 2 {
            return Err(Error::Trajectory("need at least 2 keypoints".into()));
        }
        if self.times[0] != 0.0 {
            return Err(Error::Trajectory(format!("t0 must be 0, got {}", self.times[0])));
        }
        for w in self.times.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::Trajectory(format!(
                    "times must be strictly increasing, got {} then {}",
                    w[0], w[1]
                )));
            }
        }
        if !self.positions.iter().all(|p| p.is_finite()) {
            return Err(Error::Trajectory("non-finite keypoint".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn segments(&self) -> usize {
        self.positions.len() - 1
    }

    pub fn duration(&self) -> f64 {
        *self.times.last().unwrap()
    }
}

/// k!/(k−r)! — the coefficient of the r-th derivative of t^k.
fn deriv_coeff(k: usize, r: usize) -> f64 {
    if k < r {
        return 0.0;
    }
    let mut c = 1.0;
    for j in 0..r {
        c *= (k - j) as f64;
    }
    c
}

/// Row of `d^r/dt^r [1, t, …, t^d]` evaluated at `tau`.
fn monomial_deriv_row(tau: f64, degree: usize, r: usize) -> Vec<f64> {
    let mut row = vec![0.0; degree + 1];
    for (k, v) in row.iter_mut().enumerate() {
        if k >= r {
            *v = deriv_coeff(k, r) * tau.powi((k - r) as i32);
        }
    }
    row
}

/// Assemble the stacked constraint system `A vec(σ) = b`.
///
/// Per axis the rows are: segment endpoint positions (each segment starts at
/// p_i and ends at p_{i+1}), rest boundary conditions (zero velocity and
/// acceleration at the trajectory start and end), and C³ continuity
/// (velocity, acceleration, jerk) at every interior knot.
pub fn build_constraints(keypoints: &Keypoints, degree: usize) -> Result<(DMatrix<f64>, DVector<f64>)> {
    keypoints.validate()?;
    if degree < 7 {
        return Err(Error::Trajectory(format!(
            "degree must be >= 7 for C3 continuity with spare freedom, got {degree}"
        )));
    }
    let n_seg = keypoints.segments();
    let n_coef = degree + 1;
    let axis_cols = n_seg * n_coef;
    let axis_rows = 2 * n_seg + 3 * (n_seg - 1) + 4;
    let mut a = DMatrix::zeros(3 * axis_rows, 3 * axis_cols);
    let mut b = DVector::zeros(3 * axis_rows);

    for axis in 0..3 {
        let row0 = axis * axis_rows;
        let col0 = axis * axis_cols;
        let mut row = row0;

        let coord = |p: &Vec3| match axis {
            0 => p.x,
            1 => p.y,
            _ => p.z,
        };

        // endpoint positions
        for seg in 0..n_seg {
            let tau = keypoints.times[seg + 1] - keypoints.times[seg];
            a[(row, col0 + seg * n_coef)] = 1.0;
            b[row] = coord(&keypoints.positions[seg]);
            row += 1;
            let end = monomial_deriv_row(tau, degree, 0);
            for (k, v) in end.iter().enumerate() {
                a[(row, col0 + seg * n_coef + k)] = *v;
            }
            b[row] = coord(&keypoints.positions[seg + 1]);
            row += 1;
        }

        // rest boundary: zero velocity and acceleration at start and end
        for r in 1..=2 {
            let start = monomial_deriv_row(0.0, degree, r);
            for (k, v) in start.iter().enumerate() {
                a[(row, col0 + k)] = *v;
            }
            row += 1;
        }
        let last = n_seg - 1;
        let tau_last = keypoints.times[n_seg] - keypoints.times[last];
        for r in 1..=2 {
            let end = monomial_deriv_row(tau_last, degree, r);
            for (k, v) in end.iter().enumerate() {
                a[(row, col0 + last * n_coef + k)] = *v;
            }
            row += 1;
        }

        // C3 continuity at interior knots
        for knot in 1..n_seg {
            let tau = keypoints.times[knot] - keypoints.times[knot - 1];
            for r in 1..=3 {
                let left = monomial_deriv_row(tau, degree, r);
                for (k, v) in left.iter().enumerate() {
                    a[(row, col0 + (knot - 1) * n_coef + k)] = *v;
                }
                a[(row, col0 + knot * n_coef + r)] = -deriv_coeff(r, r);
                row += 1;
            }
        }
        debug_assert_eq!(row - row0, axis_rows);
    }
    Ok((a, b))
}

/// Snap-cost Hessian for one axis: block diagonal over segments with
/// `Q[j][k] = c(j,4) c(k,4) T^{j+k-7} / (j+k-7)` for `j,k >= 4`.
fn snap_hessian_axis(keypoints: &Keypoints, degree: usize) -> DMatrix<f64> {
    let n_seg = keypoints.segments();
    let n_coef = degree + 1;
    let mut q = DMatrix::zeros(n_seg * n_coef, n_seg * n_coef);
    for seg in 0..n_seg {
        let tau = keypoints.times[seg + 1] - keypoints.times[seg];
        for j in 4..=degree {
            for k in 4..=degree {
                let p = (j + k - 7) as i32;
                let val = deriv_coeff(j, 4) * deriv_coeff(k, 4) * tau.powi(p) / p as f64;
                q[(seg * n_coef + j, seg * n_coef + k)] = val;
            }
        }
    }
    q
}

/// Find row indices that are linearly dependent on earlier rows, by a
/// modified Gram-Schmidt sweep. Only used to build a useful error message.
fn dependent_rows(a: &DMatrix<f64>) -> Vec<usize> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut dependent = Vec::new();
    for i in 0..a.nrows() {
        let mut v: DVector<f64> = a.row(i).transpose();
        let scale = v.norm();
        for u in &basis {
            let c = v.dot(u);
            v -= u * c;
        }
        if v.norm() <= 1e-10 * scale.max(1.0) {
            dependent.push(i);
        } else {
            let n = v.norm();
            basis.push(v / n);
        }
    }
    dependent
}

/// Minimum-snap coefficients: minimize the integrated squared fourth
/// derivative subject to `A vec(σ) = b`, via the KKT system, solved per axis
/// (the three axis blocks are identical, only `b` differs).
pub fn solve_minsnap(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    keypoints: &Keypoints,
    degree: usize,
) -> Result<DVector<f64>> {
    let n_seg = keypoints.segments();
    let n_coef = degree + 1;
    let axis_cols = n_seg * n_coef;
    let axis_rows = a.nrows() / 3;
    if a.nrows() != 3 * axis_rows || a.ncols() != 3 * axis_cols || b.len() != a.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "constraint system {}x{} does not match {} segments of degree {}",
            a.nrows(),
            a.ncols(),
            n_seg,
            degree
        )));
    }

    let a_axis = a.view((0, 0), (axis_rows, axis_cols)).clone_owned();
    let q = snap_hessian_axis(keypoints, degree);

    let kkt_dim = axis_cols + axis_rows;
    let mut kkt = DMatrix::zeros(kkt_dim, kkt_dim);
    for i in 0..axis_cols {
        for j in 0..axis_cols {
            kkt[(i, j)] = 2.0 * q[(i, j)];
        }
    }
    for i in 0..axis_rows {
        for j in 0..axis_cols {
            kkt[(axis_cols + i, j)] = a_axis[(i, j)];
            kkt[(j, axis_cols + i)] = a_axis[(i, j)];
        }
    }
    let lu = kkt.lu();

    let mut sigma = DVector::zeros(3 * axis_cols);
    for axis in 0..3 {
        let mut rhs = DVector::zeros(kkt_dim);
        for i in 0..axis_rows {
            rhs[axis_cols + i] = b[axis * axis_rows + i];
        }
        let sol = lu.solve(&rhs).ok_or_else(|| Error::RankDeficient {
            rows: dependent_rows(&a_axis),
        })?;
        // a singular KKT system can also slip through LU with garbage; check residual
        let sig = sol.rows(0, axis_cols).clone_owned();
        let b_axis = b.rows(axis * axis_rows, axis_rows).clone_owned();
        let resid = (&a_axis * &sig - &b_axis).amax();
        if !resid.is_finite() || resid > 1e-6 * (1.0 + b_axis.amax()) {
            return Err(Error::RankDeficient {
                rows: dependent_rows(&a_axis),
            });
        }
        sigma.rows_mut(axis * axis_cols, axis_cols).copy_from(&sig);
    }
    Ok(sigma)
}

/// Orthonormal basis for the nullspace of `A`, computed from its SVD.
///
/// Numerical rank uses the threshold `1e-10 σ_max`. The complement of the
/// row space is extracted through a second SVD of the projector
/// `I − V_r V_rᵀ`, whose singular vectors at σ ≈ 1 span the nullspace.
pub fn nullspace_basis(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.ncols();
    let svd = a.clone().svd(false, true);
    let v_t = svd.v_t.expect("svd requested v_t");
    let sigma_max = svd.singular_values.amax();
    let tol = 1e-10 * sigma_max.max(f64::MIN_POSITIVE);

    let mut projector = DMatrix::identity(n, n);
    let mut rank = 0;
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s > tol {
            rank += 1;
            let row = v_t.row(i);
            for p in 0..n {
                for q in 0..n {
                    projector[(p, q)] -= row[p] * row[q];
                }
            }
        }
    }
    let null_dim = n - rank;
    if null_dim == 0 {
        return DMatrix::zeros(n, 0);
    }

    let svd2 = projector.svd(true, false);
    let u = svd2.u.expect("svd requested u");
    let mut basis = DMatrix::zeros(n, null_dim);
    let mut col = 0;
    for (i, &s) in svd2.singular_values.iter().enumerate() {
        if s > 0.5 {
            basis.column_mut(col).copy_from(&u.column(i));
            col += 1;
        }
    }
    debug_assert_eq!(col, null_dim);
    basis
}

/// A spline trajectory: base minimum-snap coefficients plus a displacement
/// in the constraint nullspace. Immutable; [`SplineTrajectory::with_phi`]
/// produces a new value.
#[derive(Clone, Debug)]
pub struct SplineTrajectory {
    keypoints: Keypoints,
    degree: usize,
    /// Base (minimum-snap) stacked coefficients.
    sigma: DVector<f64>,
    constraint_matrix: DMatrix<f64>,
    constraint_rhs: DVector<f64>,
    /// Orthonormal nullspace basis of the constraint matrix.
    nullspace: DMatrix<f64>,
    /// Nullspace coordinates of the current displacement.
    phi: DVector<f64>,
    /// Cached effective coefficients σ + V φ.
    coeffs: DVector<f64>,
}

impl SplineTrajectory {
    /// Build the minimum-snap trajectory through `keypoints`.
    pub fn minsnap(keypoints: Keypoints, degree: usize) -> Result<Self> {
        let (a, b) = build_constraints(&keypoints, degree)?;
        let sigma = solve_minsnap(&a, &b, &keypoints, degree)?;
        let nullspace = nullspace_basis(&a);
        let phi = DVector::zeros(nullspace.ncols());
        let coeffs = sigma.clone();
        Ok(SplineTrajectory {
            keypoints,
            degree,
            sigma,
            constraint_matrix: a,
            constraint_rhs: b,
            nullspace,
            phi,
            coeffs,
        })
    }

    /// Same constraints and base solution, different nullspace coordinates.
    pub fn with_phi(&self, phi: DVector<f64>) -> Result<Self> {
        if phi.len() != self.nullspace.ncols() {
            return Err(Error::ShapeMismatch(format!(
                "phi has {} entries, nullspace has {} columns",
                phi.len(),
                self.nullspace.ncols()
            )));
        }
        let coeffs = &self.sigma + &self.nullspace * &phi;
        Ok(SplineTrajectory {
            phi,
            coeffs,
            ..self.clone()
        })
    }

    pub fn keypoints(&self) -> &Keypoints {
        &self.keypoints
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn duration(&self) -> f64 {
        self.keypoints.duration()
    }

    pub fn nullspace(&self) -> &DMatrix<f64> {
        &self.nullspace
    }

    pub fn nullspace_dim(&self) -> usize {
        self.nullspace.ncols()
    }

    pub fn phi(&self) -> &DVector<f64> {
        &self.phi
    }

    pub fn constraint_matrix(&self) -> &DMatrix<f64> {
        &self.constraint_matrix
    }

    pub fn constraint_rhs(&self) -> &DVector<f64> {
        &self.constraint_rhs
    }

    /// Base minimum-snap coefficients (before the nullspace displacement).
    pub fn base_coefficients(&self) -> &DVector<f64> {
        &self.sigma
    }

    /// Effective stacked coefficients σ + V φ.
    pub fn coefficients(&self) -> &DVector<f64> {
        &self.coeffs
    }

    /// Max constraint violation `|A (σ + V φ) − b|_∞`.
    pub fn constraint_residual(&self) -> f64 {
        (&self.constraint_matrix * &self.coeffs - &self.constraint_rhs).amax()
    }

    /// Integrated squared snap of the current coefficients.
    pub fn snap_cost(&self) -> f64 {
        let q = snap_hessian_axis(&self.keypoints, self.degree);
        let axis_cols = self.keypoints.segments() * (self.degree + 1);
        let mut cost = 0.0;
        for axis in 0..3 {
            let sig = self.coeffs.rows(axis * axis_cols, axis_cols);
            cost += (&q * sig).dot(&sig.clone_owned());
        }
        cost
    }

    fn segment_index(&self, t: f64) -> usize {
        let times = &self.keypoints.times;
        // picks the segment with t_i <= t < t_{i+1}; the final instant maps
        // to the last segment
        match times.binary_search_by(|probe| probe.partial_cmp(&t).unwrap()) {
            Ok(i) => i.min(self.keypoints.segments() - 1),
            Err(i) => i.saturating_sub(1).min(self.keypoints.segments() - 1),
        }
    }

    /// Evaluate the position encoded by an arbitrary stacked coefficient
    /// vector (same layout as [`SplineTrajectory::coefficients`]) at `t`,
    /// clamped to the time range. Used to assemble lookahead Jacobians with
    /// respect to the nullspace coordinates: sampling is linear in the
    /// coefficients, so a nullspace basis column evaluated here is exactly
    /// that column's contribution to the sampled position.
    pub fn position_with_coeffs(&self, coeffs: &DVector<f64>, t: f64) -> Vec3 {
        let t = t.clamp(0.0, self.duration());
        let seg = self.segment_index(t);
        let tau = t - self.keypoints.times[seg];
        let n_coef = self.degree + 1;
        let axis_cols = self.keypoints.segments() * n_coef;
        let mut out = [0.0; 3];
        for (axis, o) in out.iter_mut().enumerate() {
            let base = axis * axis_cols + seg * n_coef;
            let mut p = 0.0;
            for k in (0..n_coef).rev() {
                p = p * tau + coeffs[base + k];
            }
            *o = p;
        }
        Vec3::from_array(out)
    }

    /// Position and first three derivatives at `t`. Outside `[0, duration]`
    /// the position clamps to the endpoints with zero derivatives.
    pub fn sample(&self, t: f64) -> (Vec3, Vec3, Vec3, Vec3) {
        if t < 0.0 {
            return (self.keypoints.positions[0], Vec3::zero(), Vec3::zero(), Vec3::zero());
        }
        if t > self.duration() {
            return (
                *self.keypoints.positions.last().unwrap(),
                Vec3::zero(),
                Vec3::zero(),
                Vec3::zero(),
            );
        }
        let seg = self.segment_index(t);
        let tau = t - self.keypoints.times[seg];
        let n_coef = self.degree + 1;
        let axis_cols = self.keypoints.segments() * n_coef;
        let mut out = [[0.0; 3]; 4];
        for axis in 0..3 {
            let base = axis * axis_cols + seg * n_coef;
            // simultaneous Horner; p1..p3 accumulate derivatives / r!
            let (mut p, mut p1, mut p2, mut p3) = (0.0, 0.0, 0.0, 0.0);
            for k in (0..n_coef).rev() {
                p3 = p3 * tau + p2;
                p2 = p2 * tau + p1;
                p1 = p1 * tau + p;
                p = p * tau + self.coeffs[base + k];
            }
            out[0][axis] = p;
            out[1][axis] = p1;
            out[2][axis] = 2.0 * p2;
            out[3][axis] = 6.0 * p3;
        }
        (
            Vec3::from_array(out[0]),
            Vec3::from_array(out[1]),
            Vec3::from_array(out[2]),
            Vec3::from_array(out[3]),
        )
    }
}

/// Random constraint-satisfying trajectory: minimum snap plus a Gaussian
/// displacement `φ ~ N(0, scale²)` in the nullspace.
pub fn random_polynomial(
    keypoints: Keypoints,
    scale: f64,
    rng: &mut impl Rng,
) -> Result<SplineTrajectory> {
    let base = SplineTrajectory::minsnap(keypoints, 7)?;
    let dim = base.nullspace_dim();
    let mut phi = DVector::zeros(dim);
    for v in phi.iter_mut() {
        let z: f64 = StandardNormal.sample(rng);
        *v = scale * z;
    }
    base.with_phi(phi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn line_keypoints() -> Keypoints {
        Keypoints::new(
            vec![Vec3::zero(), Vec3::new(1.0, 0.0, 0.0)],
            vec![0.0, 2.0],
        )
        .unwrap()
    }

    fn five_keypoints() -> Keypoints {
        Keypoints::new(
            vec![
                Vec3::new(0.0, 0.0, 0.0),
                Vec3::new(1.0, 0.5, -0.2),
                Vec3::new(1.5, -0.5, 0.4),
                Vec3::new(0.3, -1.0, 0.1),
                Vec3::new(-0.5, 0.2, -0.3),
            ],
            vec![0.0, 1.1, 2.3, 3.2, 4.5],
        )
        .unwrap()
    }

    #[test]
    fn two_keypoint_system_has_expected_shape() {
        let kp = line_keypoints();
        let (a, _) = build_constraints(&kp, 7).unwrap();
        // per axis: 2 positions + 4 rest boundary rows, 8 unknowns
        assert_eq!(a.nrows(), 18);
        assert_eq!(a.ncols(), 24);
        let v = nullspace_basis(&a);
        assert_eq!(v.ncols(), 6); // 2 per axis
    }

    #[test]
    fn duplicate_times_rejected() {
        let kp = Keypoints::new(
            vec![Vec3::zero(), Vec3::new(1.0, 0.0, 0.0)],
            vec![0.0, 0.0],
        );
        assert!(kp.is_err());
    }

    #[test]
    fn minsnap_passes_keypoints() {
        let kp = five_keypoints();
        let traj = SplineTrajectory::minsnap(kp.clone(), 7).unwrap();
        for (p, t) in kp.positions.iter().zip(&kp.times) {
            let (pos, _, _, _) = traj.sample(*t);
            assert!((pos - *p).norm() < 1e-9, "at t={t}");
        }
    }

    #[test]
    fn constraint_rows_satisfied_at_solution() {
        let traj = SplineTrajectory::minsnap(five_keypoints(), 7).unwrap();
        assert!(traj.constraint_residual() < 1e-10);
    }

    #[test]
    fn rest_boundaries() {
        let traj = SplineTrajectory::minsnap(five_keypoints(), 7).unwrap();
        let (_, v0, a0, _) = traj.sample(0.0);
        let (_, v1, a1, _) = traj.sample(traj.duration());
        assert!(v0.norm() < 1e-9 && a0.norm() < 1e-9);
        assert!(v1.norm() < 1e-9 && a1.norm() < 1e-9);
    }

    #[test]
    fn constant_keypoints_give_zero_snap() {
        let p = Vec3::new(0.5, -0.25, 1.0);
        let kp = Keypoints::new(vec![p, p, p], vec![0.0, 1.0, 2.0]).unwrap();
        let traj = SplineTrajectory::minsnap(kp, 7).unwrap();
        assert!(traj.snap_cost() < 1e-18);
        let (pos, vel, _, _) = traj.sample(1.3);
        assert!((pos - p).norm() < 1e-10);
        assert!(vel.norm() < 1e-10);
    }

    #[test]
    fn nullspace_of_identity_is_empty() {
        let a = DMatrix::<f64>::identity(5, 5);
        let v = nullspace_basis(&a);
        assert_eq!(v.ncols(), 0);
    }

    #[test]
    fn nullspace_of_single_row() {
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let v = nullspace_basis(&a);
        assert_eq!(v.ncols(), 1);
        let expect = 1.0 / 2.0_f64.sqrt();
        assert!((v[(0, 0)].abs() - expect).abs() < 1e-12);
        assert!((v[(0, 0)] + v[(1, 0)]).abs() < 1e-12);
    }

    #[test]
    fn nullspace_is_orthonormal_and_annihilated() {
        let kp = five_keypoints();
        let (a, _) = build_constraints(&kp, 7).unwrap();
        let v = nullspace_basis(&a);
        assert!(v.ncols() > 0);
        let av = &a * &v;
        assert!(av.amax() <= 1e-10, "A·V max {}", av.amax());
        let vtv = v.transpose() * &v;
        let eye = DMatrix::identity(v.ncols(), v.ncols());
        assert!((vtv - eye).amax() <= 1e-10);
    }

    #[test]
    fn collinear_keypoints_line_is_feasible() {
        // constant-velocity straight line satisfies A σ = b exactly when the
        // line coefficients are substituted
        let kp = Keypoints::new(
            vec![
                Vec3::new(0.0, 0.0, 0.0),
                Vec3::new(1.0, 1.0, 1.0),
                Vec3::new(2.0, 2.0, 2.0),
            ],
            vec![0.0, 1.0, 2.0],
        )
        .unwrap();
        let (a, b) = build_constraints(&kp, 7).unwrap();
        // hand-built straight line: per segment, per axis: c0 = start coord,
        // c1 = 1 (unit velocity)
        let n_coef = 8;
        let axis_cols = 2 * n_coef;
        let mut sigma = DVector::zeros(3 * axis_cols);
        for axis in 0..3 {
            for seg in 0..2 {
                sigma[axis * axis_cols + seg * n_coef] = seg as f64;
                sigma[axis * axis_cols + seg * n_coef + 1] = 1.0;
            }
        }
        // the line violates only the rest-boundary rows (it has velocity 1
        // at the ends); position + continuity rows must hold exactly
        let resid = &a * &sigma - &b;
        let axis_rows = a.nrows() / 3;
        for axis in 0..3 {
            for seg_row in 0..4 {
                assert!(resid[axis * axis_rows + seg_row].abs() < 1e-12);
            }
            // continuity rows sit after position + boundary-start/end rows
            for r in (2 * 2 + 4)..axis_rows {
                assert!(resid[axis * axis_rows + r].abs() < 1e-12);
            }
        }
    }

    #[test]
    fn phi_zero_is_minsnap() {
        let base = SplineTrajectory::minsnap(five_keypoints(), 7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let same = random_polynomial(five_keypoints(), 0.0, &mut rng).unwrap();
        for t in [0.0, 0.7, 2.2, 4.4] {
            let (p0, _, _, _) = base.sample(t);
            let (p1, _, _, _) = same.sample(t);
            assert!((p0 - p1).norm() < 1e-12);
        }
    }

    #[test]
    fn random_polynomial_satisfies_constraints_and_varies_by_seed() {
        let kp = five_keypoints();
        let mut rng1 = ChaCha8Rng::seed_from_u64(1);
        let mut rng2 = ChaCha8Rng::seed_from_u64(2);
        let t1 = random_polynomial(kp.clone(), 1.0, &mut rng1).unwrap();
        let t2 = random_polynomial(kp.clone(), 1.0, &mut rng2).unwrap();
        for (p, t) in kp.positions.iter().zip(&kp.times) {
            let (pos, _, _, _) = t1.sample(*t);
            assert!((pos - *p).norm() < 1e-8);
        }
        let mut max_diff: f64 = 0.0;
        for i in 0..100 {
            let t = kp.duration() * i as f64 / 99.0;
            let (p1, _, _, _) = t1.sample(t);
            let (p2, _, _, _) = t2.sample(t);
            max_diff = max_diff.max((p1 - p2).norm());
        }
        assert!(max_diff > 0.0);
    }

    #[test]
    fn minsnap_is_locally_optimal_in_nullspace() {
        let traj = SplineTrajectory::minsnap(five_keypoints(), 7).unwrap();
        let base_cost = traj.snap_cost();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..100 {
            let mut phi = DVector::zeros(traj.nullspace_dim());
            for v in phi.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *v = 0.3 * z;
            }
            let perturbed = traj.with_phi(phi).unwrap();
            assert!(perturbed.snap_cost() >= base_cost - 1e-9 * base_cost.max(1.0));
        }
    }

    #[test]
    fn sample_derivatives_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let traj = random_polynomial(five_keypoints(), 0.5, &mut rng).unwrap();
        let h = 1e-5;
        for &t in &[0.4, 1.5, 2.8, 3.9] {
            let (_, vel, acc, jerk) = traj.sample(t);
            let (pp, vp, ap, _) = traj.sample(t + h);
            let (pm, vm, am, _) = traj.sample(t - h);
            let vel_fd = (pp - pm).scale(1.0 / (2.0 * h));
            let acc_fd = (vp - vm).scale(1.0 / (2.0 * h));
            let jerk_fd = (ap - am).scale(1.0 / (2.0 * h));
            assert!((vel - vel_fd).norm() < 1e-5, "vel at t={t}");
            assert!((acc - acc_fd).norm() < 1e-4, "acc at t={t}");
            assert!((jerk - jerk_fd).norm() < 1e-3, "jerk at t={t}");
        }
    }

    #[test]
    fn knot_continuity_c3() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let traj = random_polynomial(five_keypoints(), 1.0, &mut rng).unwrap();
        let eps = 1e-9;
        for &t in &traj.keypoints().times.clone()[1..4] {
            let (pm, vm, am, jm) = traj.sample(t - eps);
            let (pp, vp, ap, jp) = traj.sample(t + eps);
            assert!((pm - pp).norm() < 1e-6);
            assert!((vm - vp).norm() < 1e-6);
            assert!((am - ap).norm() < 1e-5);
            assert!((jm - jp).norm() < 1e-4);
        }
    }

    #[test]
    fn sample_outside_range_clamps() {
        let traj = SplineTrajectory::minsnap(line_keypoints(), 7).unwrap();
        let (p, v, a, j) = traj.sample(-1.0);
        assert_eq!(p, traj.keypoints().positions[0]);
        assert!(v.norm() == 0.0 && a.norm() == 0.0 && j.norm() == 0.0);
        let (p, v, _, _) = traj.sample(100.0);
        assert_eq!(p, *traj.keypoints().positions.last().unwrap());
        assert!(v.norm() == 0.0);
    }

    #[test]
    fn sample_is_linear_in_phi() {
        let traj = SplineTrajectory::minsnap(five_keypoints(), 7).unwrap();
        let dim = traj.nullspace_dim();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut phi1 = DVector::zeros(dim);
        let mut phi2 = DVector::zeros(dim);
        for i in 0..dim {
            let z1: f64 = StandardNormal.sample(&mut rng);
            let z2: f64 = StandardNormal.sample(&mut rng);
            phi1[i] = 0.5 * z1;
            phi2[i] = 0.5 * z2;
        }
        let t0 = traj.clone();
        let ta = traj.with_phi(phi1.clone()).unwrap();
        let tb = traj.with_phi(phi2.clone()).unwrap();
        let tab = traj.with_phi(phi1 + phi2).unwrap();
        for i in 0..20 {
            let t = traj.duration() * i as f64 / 19.0;
            let (p0, _, _, _) = t0.sample(t);
            let (pa, _, _, _) = ta.sample(t);
            let (pb, _, _, _) = tb.sample(t);
            let (pab, _, _, _) = tab.sample(t);
            let lhs = pab - p0;
            let rhs = (pa - p0) + (pb - p0);
            assert!((lhs - rhs).norm() < 1e-10);
        }
    }
}
