use num_complex::Complex64;

use super::TangentVector;
use crate::cmps::{Cmps, FiniteCmps, UniformCmps};
use crate::error::{QgpeError, Result};
use crate::numerics::dense::{norm, trace_prod, CMat};
use crate::transfer::{apply_transfer_left, midpoints, DensityMatrices};

fn gauge_violation(rs: &[CMat], tv: &TangentVector) -> f64 {
    rs.iter()
        .zip(tv.v.iter().zip(&tv.w))
        .map(|(r, (v, w))| norm(&(v + r.adjoint() * w)))
        .fold(0.0, f64::max)
}

fn check_gauge(rs: &[CMat], tv: &TangentVector) -> Result<()> {
    if tv.v.len() != rs.len() || tv.w.len() != rs.len() {
        return Err(QgpeError::DimensionMismatch("tangent vector length".into()));
    }
    let violation = gauge_violation(rs, tv);
    if !(violation <= 1e-8) {
        return Err(QgpeError::GaugeFixingViolated { violation });
    }
    Ok(())
}

/// Overlap per unit length of two gauge-fixed tangent vectors of a uniform state,
/// `tr(rho_L W2 rho_R W1^dag) / tr(rho_L rho_R)`.
pub fn tangent_metric_uniform(
    state: &UniformCmps,
    dens: &DensityMatrices,
    tv1: &TangentVector,
    tv2: &TangentVector,
) -> Result<Complex64> {
    let rs = [state.r.clone()];
    check_gauge(&rs, tv1)?;
    check_gauge(&rs, tv2)?;
    let (l, r) = (&dens.rho_l[0], &dens.rho_r[0]);
    let val = trace_prod(&(l * &tv2.w[0] * r), &tv1.w[0].adjoint());
    Ok(val / dens.norm[0])
}

/// Overlap of two tangent vectors of a finite state, normalized by the
/// squared norm of the state.
///
/// Evaluated exactly (up to the RK4 grid error) as the mixed derivative of the
/// overlap between two displaced states, propagated as four coupled
/// density-matrix equations.
pub fn tangent_metric_finite(state: &FiniteCmps, tv1: &TangentVector, tv2: &TangentVector) -> Result<Complex64> {
    check_gauge(&state.rs, tv1)?;
    check_gauge(&state.rs, tv2)?;
    let n = state.len();
    let dx = state.dx();
    let qm = midpoints(&state.qs);
    let rm = midpoints(&state.rs);
    let v1m = midpoints(&tv1.v);
    let w1m = midpoints(&tv1.w);
    let v2m = midpoints(&tv2.v);
    let w2m = midpoints(&tv2.w);

    type Quad = [CMat; 4];
    let deriv = |q: &CMat, r: &CMat, va: &CMat, wa: &CMat, vb: &CMat, wb: &CMat, s: &Quad| -> Quad {
        let t = |x: &CMat| apply_transfer_left(q, r, x);
        let vad = va.adjoint();
        let wad = wa.adjoint();
        let rd = r.adjoint();
        let d00 = t(&s[0]);
        let d01 = t(&s[1]) + &s[0] * vb + &rd * &s[0] * wb;
        let d10 = t(&s[2]) + &vad * &s[0] + &wad * &s[0] * r;
        let d11 = t(&s[3])
            + &s[2] * vb
            + &rd * &s[2] * wb
            + &vad * &s[1]
            + &wad * &s[1] * r
            + &wad * &s[0] * wb;
        [d00, d01, d10, d11]
    };
    let axpy = |s: &Quad, a: f64, k: &Quad| -> Quad {
        [&s[0] + k[0].scale(a), &s[1] + k[1].scale(a), &s[2] + k[2].scale(a), &s[3] + k[3].scale(a)]
    };

    let v1 = &state.v1;
    let mut s: Quad = [
        v1 * v1.adjoint(),
        v1 * tv2.w1.adjoint(),
        &tv1.w1 * v1.adjoint(),
        &tv1.w1 * tv2.w1.adjoint(),
    ];
    for i in 0..n - 1 {
        let k1 = deriv(&state.qs[i], &state.rs[i], &tv1.v[i], &tv1.w[i], &tv2.v[i], &tv2.w[i], &s);
        let k2 = deriv(&qm[i], &rm[i], &v1m[i], &w1m[i], &v2m[i], &w2m[i], &axpy(&s, 0.5 * dx, &k1));
        let k3 = deriv(&qm[i], &rm[i], &v1m[i], &w1m[i], &v2m[i], &w2m[i], &axpy(&s, 0.5 * dx, &k2));
        let k4 = deriv(
            &state.qs[i + 1],
            &state.rs[i + 1],
            &tv1.v[i + 1],
            &tv1.w[i + 1],
            &tv2.v[i + 1],
            &tv2.w[i + 1],
            &axpy(&s, dx, &k3),
        );
        for j in 0..4 {
            s[j] += (&k1[j] + k2[j].scale(2.0) + k3[j].scale(2.0) + &k4[j]).scale(dx / 6.0);
        }
    }
    let v2 = &state.v2;
    let ev = |a: &nalgebra::DVector<Complex64>, m: &CMat, b: &nalgebra::DVector<Complex64>| (a.adjoint() * m * b)[(0, 0)];
    let nrm = ev(v2, &s[0], v2);
    let val = ev(v2, &s[3], v2) + ev(v2, &s[2], &tv2.w2) + ev(&tv1.w2, &s[1], v2) + ev(&tv1.w2, &s[0], &tv2.w2);
    Ok(val / nrm)
}

/// Tangent-space overlap `<Phi[tv1]|Phi[tv2]>` for either kind of state.
pub fn tangent_metric(
    state: &Cmps,
    dens: &DensityMatrices,
    tv1: &TangentVector,
    tv2: &TangentVector,
) -> Result<Complex64> {
    match state {
        Cmps::Uniform(u) => tangent_metric_uniform(u, dens, tv1, tv2),
        Cmps::Finite(f) => tangent_metric_finite(f, tv1, tv2),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cmps::{random_uniform_state, unit_vector, BoundaryCondition};
    use crate::numerics::dense::c;
    use crate::transfer::fixed_point_density;

    #[test]
    fn zero_vector_has_zero_overlap() {
        let s = random_uniform_state(3, 1).unwrap();
        let dens = fixed_point_density(&s).unwrap();
        let w = CMat::from_fn(3, 3, |i, j| c(i as f64, j as f64));
        let a = TangentVector::gauge_fixed(&s.r, w);
        let z = TangentVector::gauge_fixed(&s.r, CMat::zeros(3, 3));
        assert_eq!(tangent_metric_uniform(&s, &dens, &a, &z).unwrap(), c(0.0, 0.0));
        let self_overlap = tangent_metric_uniform(&s, &dens, &a, &a).unwrap();
        assert!(self_overlap.re > 0.0 && self_overlap.im.abs() < 1e-12 * self_overlap.re);
    }

    #[test]
    fn gauge_violation_is_reported() {
        let s = random_uniform_state(2, 1).unwrap();
        let dens = fixed_point_density(&s).unwrap();
        let mut a = TangentVector::gauge_fixed(&s.r, CMat::identity(2, 2));
        a.v[0] += CMat::identity(2, 2);
        let err = tangent_metric_uniform(&s, &dens, &a, &a).unwrap_err();
        assert!(matches!(err, QgpeError::GaugeFixingViolated { .. }));
    }

    #[test]
    fn finite_metric_of_long_uniform_box_matches_bulk_density() {
        // boundary effects are O(1) while the bulk grows with the length
        let s = random_uniform_state(2, 8).unwrap();
        let dens = fixed_point_density(&s).unwrap();
        let w = CMat::from_fn(2, 2, |i, j| c(0.3 * i as f64 - 0.2, 0.1 * j as f64 + 0.05));
        let tv = TangentVector::gauge_fixed(&s.r, w.clone());
        let per_length = tangent_metric_uniform(&s, &dens, &tv, &tv).unwrap().re;
        let mut vals = Vec::new();
        for len in [40.0, 80.0] {
            let n = (len * 20.0) as usize + 1;
            let f = FiniteCmps::from_uniform(&s, 0.0, len, n, unit_vector(2, 0), unit_vector(2, 0), BoundaryCondition::Neumann)
                .unwrap();
            let d = 2;
            let ftv = TangentVector::gauge_fixed_finite(&f.rs, vec![w.clone(); n], nalgebra::DVector::zeros(d), nalgebra::DVector::zeros(d));
            vals.push(tangent_metric_finite(&f, &ftv, &ftv).unwrap().re);
        }
        let slope = (vals[1] - vals[0]) / 40.0;
        assert!((slope - per_length).abs() < 1e-6 * per_length.abs().max(1.0), "{slope} vs {per_length}");
    }
}
