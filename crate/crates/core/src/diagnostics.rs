//! Energy functionals and spectral stability diagnostics.
//!
//! The discrete energies mirror the continuous ones:
//!
//!   U(w) = ½·D·∫ [ν(Δw)² + (1−ν)(w_xx² + 2·w_xy² + w_yy²)],
//!   K(v) = ½·∫ v²,
//!
//! both integrated over the closed rectangle by 2D composite trapezoidal
//! quadrature (half weights on boundary lines) with second derivatives from
//! the same ghost-filled central differences the operator module uses. For
//! ν ∈ (0, 1/2) the integrand of U is a positively weighted sum of squares,
//! so U ≥ 0 pointwise.
//!
//! Stability is judged by the spectral abscissa α(A) = max Re λ(A) of the
//! assembled system: α < 0 decays, α > 0 flutters. The onset of instability
//! along a flow parameter is located by bisection on α's sign.

use nalgebra::{Complex, DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::ghost::{fill_all, BoundaryLoads};
use crate::integrator::Trajectory;
use crate::mesh::{ExtendedField, GridSpec};
use crate::operator::{assemble, ForcingSpec, OperatorError, PlateParams, SemiDiscreteSystem};

#[derive(Debug, Error)]
pub enum DiagnosticsError {
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error("invalid bracket [{lo}, {hi}]: need lo < hi and finite endpoints")]
    BadBracket { lo: f64, hi: f64 },
    #[error(
        "bracket [{lo}, {hi}] does not straddle an instability: α(lo) = {alpha_lo:.6e}, α(hi) = {alpha_hi:.6e}"
    )]
    NoSignChange { lo: f64, hi: f64, alpha_lo: f64, alpha_hi: f64 },
}

/// Energies at one trajectory sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergySample {
    pub t: f64,
    pub u: f64,
    pub k: f64,
    pub e: f64,
}

/// Potential energy of a ghost-filled displacement field.
pub fn potential_energy(
    field: &ExtendedField,
    grid: &GridSpec,
    params: &PlateParams,
) -> Result<f64, DiagnosticsError> {
    if !field.ghosts_valid() {
        return Err(OperatorError::GhostsNotFilled.into());
    }
    let (nx, ny) = (grid.nx as isize, grid.ny as isize);
    let (dx, dy) = (grid.dx(), grid.dy());
    let (dx2, dy2) = (dx * dx, dy * dy);
    let cxy = 1.0 / (4.0 * dx * dy);
    let nu = params.nu;
    let mut sum = 0.0;
    for j in 0..ny {
        let wy = if j == 0 || j == ny - 1 { 0.5 } else { 1.0 };
        for i in 0..nx {
            let wx = if i == 0 || i == nx - 1 { 0.5 } else { 1.0 };
            let o = field.get(i, j);
            let wxx = (field.get(i - 1, j) - 2.0 * o + field.get(i + 1, j)) / dx2;
            let wyy = (field.get(i, j - 1) - 2.0 * o + field.get(i, j + 1)) / dy2;
            let wxy = (field.get(i + 1, j + 1) - field.get(i - 1, j + 1)
                - field.get(i + 1, j - 1)
                + field.get(i - 1, j - 1))
                * cxy;
            let lap = wxx + wyy;
            let integrand =
                nu * lap * lap + (1.0 - nu) * (wxx * wxx + 2.0 * wxy * wxy + wyy * wyy);
            sum += wx * wy * integrand;
        }
    }
    Ok(0.5 * params.d * sum * dx * dy)
}

/// Kinetic energy of a velocity sample given on the unknown nodes (the
/// clamped column contributes zeros).
pub fn kinetic_energy(v: &[f64], grid: &GridSpec) -> f64 {
    assert_eq!(v.len(), grid.n_unknowns(), "velocity length mismatch");
    let (nx, ny) = (grid.nx as isize, grid.ny as isize);
    let (dx, dy) = (grid.dx(), grid.dy());
    let mut sum = 0.0;
    for (k, (i, j)) in grid.unknowns().enumerate() {
        let wx = if i == nx - 1 { 0.5 } else { 1.0 };
        let wy = if j == 0 || j == ny - 1 { 0.5 } else { 1.0 };
        sum += wx * wy * v[k] * v[k];
    }
    0.5 * sum * dx * dy
}

/// Energies along a trajectory, with the w-ghosts filled using the loads
/// active during the run.
pub fn energy_series(
    traj: &Trajectory,
    grid: &GridSpec,
    params: &PlateParams,
    loads: &BoundaryLoads,
) -> Result<Vec<EnergySample>, DiagnosticsError> {
    let n = grid.n_unknowns();
    let mut out = Vec::with_capacity(traj.times.len());
    for (t, y) in traj.times.iter().zip(&traj.states) {
        let mut wf = ExtendedField::from_unknowns(grid, &y[..n]);
        fill_all(&mut wf, grid, loads, params.nu).map_err(OperatorError::from)?;
        let u = potential_energy(&wf, grid, params)?;
        let k = kinetic_energy(&y[n..], grid);
        out.push(EnergySample { t: *t, u, k, e: u + k });
    }
    Ok(out)
}

/// Spectral abscissa with the eigenvalue that attains it. `estimated` marks
/// results from the iterative fallback (large systems or a non-converged
/// dense solve) rather than a full dense eigensolve.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SpectrumSummary {
    pub abscissa: f64,
    pub dominant_re: f64,
    pub dominant_im: f64,
    pub estimated: bool,
}

/// Dense eigensolve cutoff: above this dimension the Arnoldi estimate is
/// used instead.
const DENSE_EIG_LIMIT: usize = 4000;

fn max_real_part(eigs: &[Complex<f64>]) -> (f64, f64, f64) {
    let mut best = (f64::NEG_INFINITY, 0.0);
    for e in eigs {
        if e.re > best.0 {
            best = (e.re, e.im);
        }
    }
    (best.0, best.0, best.1)
}

/// Ritz estimate of the rightmost eigenvalue from a fixed-size Arnoldi
/// decomposition with a deterministic start vector.
fn arnoldi_estimate(system: &SemiDiscreteSystem) -> SpectrumSummary {
    let dim = system.dim();
    let m = 120.min(dim);
    let mut q: Vec<DVector<f64>> = Vec::with_capacity(m + 1);
    let mut v0 = DVector::from_fn(dim, |k, _| 1.0 + 0.01 * ((k + 1) as f64 * 0.7).sin());
    v0 /= v0.norm();
    q.push(v0);
    let mut h = DMatrix::<f64>::zeros(m + 1, m);
    let mut built = 0;
    for j in 0..m {
        let mut w = DVector::from_vec(system.apply_a(q[j].as_slice()));
        // Modified Gram-Schmidt, twice, for orthogonality at stiff scales.
        for _ in 0..2 {
            for (i, qi) in q.iter().enumerate() {
                let c = qi.dot(&w);
                h[(i, j)] += c;
                w -= qi * c;
            }
        }
        let nrm = w.norm();
        h[(j + 1, j)] = nrm;
        built = j + 1;
        if nrm < 1e-12 {
            break;
        }
        q.push(w / nrm);
    }
    let hm = h.view((0, 0), (built, built)).into_owned();
    let eigs = hm.complex_eigenvalues();
    let (abscissa, re, im) = max_real_part(eigs.as_slice());
    SpectrumSummary { abscissa, dominant_re: re, dominant_im: im, estimated: true }
}

/// Spectral abscissa of the assembled system: dense Schur eigensolve up to
/// dimension 4000, Arnoldi Ritz estimate beyond (or if the dense solve does
/// not converge).
pub fn spectrum_summary(system: &SemiDiscreteSystem) -> SpectrumSummary {
    let dim = system.dim();
    if dim <= DENSE_EIG_LIMIT {
        let a = system.a_dense();
        if let Some(schur) = nalgebra::linalg::Schur::try_new(a, f64::EPSILON, 100_000) {
            let eigs = schur.complex_eigenvalues();
            let (abscissa, re, im) = max_real_part(eigs.as_slice());
            if abscissa.is_finite() {
                return SpectrumSummary {
                    abscissa,
                    dominant_re: re,
                    dominant_im: im,
                    estimated: false,
                };
            }
        }
    }
    arnoldi_estimate(system)
}

pub fn spectral_abscissa(system: &SemiDiscreteSystem) -> f64 {
    spectrum_summary(system).abscissa
}

/// Flow parameter selected for a bifurcation search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FlowAxis {
    A1,
    A2,
}

impl FlowAxis {
    pub fn name(self) -> &'static str {
        match self {
            FlowAxis::A1 => "a1",
            FlowAxis::A2 => "a2",
        }
    }

    /// The parameter set with this axis replaced by `value`.
    pub fn apply_to(self, params: &PlateParams, value: f64) -> PlateParams {
        let mut p = *params;
        match self {
            FlowAxis::A1 => p.a1 = value,
            FlowAxis::A2 => p.a2 = value,
        }
        p
    }
}

impl std::fmt::Display for FlowAxis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct BisectionIterate {
    pub value: f64,
    pub abscissa: f64,
}

/// Result of a critical-flow search.
#[derive(Debug, Clone, Serialize)]
pub struct CriticalResult {
    pub axis: FlowAxis,
    /// Final bracket after bisection.
    pub lo: f64,
    pub hi: f64,
    /// Reported critical value (final bracket midpoint).
    pub value: f64,
    pub iterates: Vec<BisectionIterate>,
    /// Set when the abscissa moved against the bracket direction on some
    /// iteration; the sign-based bisection remains valid.
    pub non_monotone: bool,
}

/// Stability diagnosis at a point in parameter space, optionally with the
/// bifurcation search that produced it.
#[derive(Debug, Clone, Serialize)]
pub struct StabilityReport {
    pub grid: GridSpec,
    pub params: PlateParams,
    pub spectrum: SpectrumSummary,
    pub critical: Option<CriticalResult>,
}

/// Width ratio at which bisection stops: final width ≤ 10⁻³ × initial width.
const BISECTION_WIDTH_RATIO: f64 = 1e-3;

/// Bisect the flow parameter over `bracket` until the sign-change interval
/// narrows to 10⁻³ of its initial width. Requires α(lo) < 0 < α(hi).
pub fn find_critical_flow(
    params: &PlateParams,
    grid: &GridSpec,
    axis: FlowAxis,
    bracket: (f64, f64),
) -> Result<StabilityReport, DiagnosticsError> {
    let (lo0, hi0) = bracket;
    if !(lo0 < hi0) || !lo0.is_finite() || !hi0.is_finite() {
        return Err(DiagnosticsError::BadBracket { lo: lo0, hi: hi0 });
    }
    let eval = |value: f64| -> Result<SpectrumSummary, DiagnosticsError> {
        let p = axis.apply_to(params, value);
        let sys = assemble(&p, grid, &BoundaryLoads::zero(), &ForcingSpec::Zero)?;
        Ok(spectrum_summary(&sys))
    };

    let mut iterates = Vec::new();
    let s_lo = eval(lo0)?;
    iterates.push(BisectionIterate { value: lo0, abscissa: s_lo.abscissa });
    let s_hi = eval(hi0)?;
    iterates.push(BisectionIterate { value: hi0, abscissa: s_hi.abscissa });
    if !(s_lo.abscissa < 0.0 && s_hi.abscissa > 0.0) {
        return Err(DiagnosticsError::NoSignChange {
            lo: lo0,
            hi: hi0,
            alpha_lo: s_lo.abscissa,
            alpha_hi: s_hi.abscissa,
        });
    }

    let mut lo = lo0;
    let mut hi = hi0;
    let mut alpha_lo = s_lo.abscissa;
    let mut alpha_hi = s_hi.abscissa;
    let mut non_monotone = false;
    let mut estimated = s_lo.estimated || s_hi.estimated;
    while hi - lo > BISECTION_WIDTH_RATIO * (hi0 - lo0) {
        let mid = 0.5 * (lo + hi);
        let s_mid = eval(mid)?;
        estimated |= s_mid.estimated;
        iterates.push(BisectionIterate { value: mid, abscissa: s_mid.abscissa });
        if s_mid.abscissa > 0.0 {
            if s_mid.abscissa > alpha_hi {
                // Abscissa grew while the parameter decreased from hi.
                non_monotone = true;
            }
            hi = mid;
            alpha_hi = s_mid.abscissa;
        } else {
            if s_mid.abscissa < alpha_lo {
                non_monotone = true;
            }
            lo = mid;
            alpha_lo = s_mid.abscissa;
        }
    }

    let value = 0.5 * (lo + hi);
    let s_final = eval(value)?;
    estimated |= s_final.estimated;
    let spectrum = SpectrumSummary { estimated, ..s_final };
    Ok(StabilityReport {
        grid: *grid,
        params: axis.apply_to(params, value),
        spectrum,
        critical: Some(CriticalResult { axis, lo, hi, value, iterates, non_monotone }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn exact_field(grid: &GridSpec, f: impl Fn(f64, f64) -> f64) -> ExtendedField {
        let mut field = ExtendedField::new(grid);
        field.fill_with_exact(grid, f);
        field
    }

    #[test]
    fn potential_energy_of_zero_field_is_zero() {
        let g = GridSpec::unit_square(6, 6);
        let p = PlateParams::new(1.0, 0.3, 0.0, 0.0, 0.0, 0.0).unwrap();
        let mut f = ExtendedField::new(&g);
        fill_all(&mut f, &g, &BoundaryLoads::zero(), p.nu).unwrap();
        assert_eq!(potential_energy(&f, &g, &p).unwrap(), 0.0);
    }

    #[test]
    fn potential_energy_matches_constant_integrands() {
        // w = x²: w_xx = 2, others 0 → integrand ν·4 + (1−ν)·4 = 4; U = ½·D·4.
        let g = GridSpec::unit_square(7, 9);
        let p = PlateParams::new(2.0, 0.3, 0.0, 0.0, 0.0, 0.0).unwrap();
        let f = exact_field(&g, |x, _| x * x);
        assert_relative_eq!(potential_energy(&f, &g, &p).unwrap(), 4.0, max_relative = 1e-12);

        // w = xy: only the twist term survives → U = D·(1−ν).
        let p2 = PlateParams::new(2.0, 0.37, 0.0, 0.0, 0.0, 0.0).unwrap();
        let f2 = exact_field(&g, |x, y| x * y);
        assert_relative_eq!(
            potential_energy(&f2, &g, &p2).unwrap(),
            2.0 * (1.0 - 0.37),
            max_relative = 1e-12
        );
    }

    #[test]
    fn potential_energy_requires_filled_ghosts() {
        let g = GridSpec::unit_square(5, 5);
        let p = PlateParams::new(1.0, 0.3, 0.0, 0.0, 0.0, 0.0).unwrap();
        let f = ExtendedField::new(&g);
        assert!(potential_energy(&f, &g, &p).is_err());
    }

    #[test]
    fn kinetic_energy_quadrature_values() {
        let g = GridSpec::unit_square(6, 6);
        let n = g.n_unknowns();
        // v ≡ 1 on the unknown nodes: the clamped column holds zero, so the
        // x-direction quadrature loses that column's half-weight panel,
        // giving ½·(Lx − dx/2)·Ly.
        let v = vec![1.0; n];
        let dx = g.dx();
        let expected = 0.5 * (1.0 - 0.5 * dx);
        assert_relative_eq!(kinetic_energy(&v, &g), expected, max_relative = 1e-13);

        // v = x: trapezoid integrates x² with error exactly dx²/6 on [0,1].
        let mut vx = vec![0.0; n];
        for (k, (i, _)) in g.unknowns().enumerate() {
            vx[k] = g.x(i);
        }
        let expected = 0.5 * (1.0 / 3.0 + dx * dx / 6.0);
        assert_relative_eq!(kinetic_energy(&vx, &g), expected, max_relative = 1e-12);
    }

    #[test]
    fn energies_scale_quadratically() {
        let g = GridSpec::unit_square(7, 6);
        let p = PlateParams::new(1.4, 0.29, 0.0, 0.0, 0.0, 0.0).unwrap();
        let n = g.n_unknowns();
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let w: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let scaled: Vec<f64> = w.iter().map(|v| 3.0 * v).collect();

        let mut f1 = ExtendedField::from_unknowns(&g, &w);
        fill_all(&mut f1, &g, &BoundaryLoads::zero(), p.nu).unwrap();
        let mut f2 = ExtendedField::from_unknowns(&g, &scaled);
        fill_all(&mut f2, &g, &BoundaryLoads::zero(), p.nu).unwrap();
        let u1 = potential_energy(&f1, &g, &p).unwrap();
        let u2 = potential_energy(&f2, &g, &p).unwrap();
        assert_relative_eq!(u2, 9.0 * u1, max_relative = 1e-12);
        assert!(u1 >= 0.0);

        let k1 = kinetic_energy(&w, &g);
        let k2 = kinetic_energy(&scaled, &g);
        assert_relative_eq!(k2, 9.0 * k1, max_relative = 1e-13);
    }

    #[test]
    fn friction_shifts_the_abscissa_to_minus_half_k0() {
        // With k1 = 0 the blocks give λ = (−k0 ± √(k0² − 4μ))/2 for each
        // eigenvalue μ of S; when 4μ > k0² every real part is exactly −k0/2.
        let g = GridSpec::unit_square(5, 5);
        let p = PlateParams::new(1.0, 0.3, 0.1, 0.0, 0.0, 0.0).unwrap();
        let sys = assemble(&p, &g, &BoundaryLoads::zero(), &ForcingSpec::Zero).unwrap();
        let s = spectrum_summary(&sys);
        assert!(!s.estimated);
        assert_relative_eq!(s.abscissa, -0.05, epsilon = 1e-9);
    }

    #[test]
    fn undamped_abscissa_is_negligible_against_the_norm() {
        let g = GridSpec::unit_square(5, 5);
        let p = PlateParams::new(1.0, 0.3, 0.0, 0.0, 0.0, 0.0).unwrap();
        let sys = assemble(&p, &g, &BoundaryLoads::zero(), &ForcingSpec::Zero).unwrap();
        let s = spectrum_summary(&sys);
        assert!(s.abscissa.abs() <= 1e-6 * sys.a_inf_norm(), "abscissa {}", s.abscissa);
    }

    #[test]
    fn bracket_validation() {
        let g = GridSpec::unit_square(5, 5);
        let p = PlateParams::new(1.0, 0.3, 0.1, 0.0, 0.0, 0.0).unwrap();
        assert!(matches!(
            find_critical_flow(&p, &g, FlowAxis::A1, (1.0, 1.0)),
            Err(DiagnosticsError::BadBracket { .. })
        ));
        // Both endpoints stable: friction keeps α = −0.05 at tiny flow.
        let err = find_critical_flow(&p, &g, FlowAxis::A1, (0.0, 0.5)).unwrap_err();
        assert!(matches!(err, DiagnosticsError::NoSignChange { .. }), "got {err:?}");
    }

    #[test]
    fn arnoldi_estimate_tracks_the_damped_shift() {
        let g = GridSpec::unit_square(5, 5);
        let p = PlateParams::new(1.0, 0.3, 0.1, 0.0, 0.0, 0.0).unwrap();
        let sys = assemble(&p, &g, &BoundaryLoads::zero(), &ForcingSpec::Zero).unwrap();
        let est = arnoldi_estimate(&sys);
        assert!(est.estimated);
        // Ritz values of a modest Krylov space land inside the spectrum's
        // real-part range; for this system every real part is −0.05.
        assert!((est.abscissa + 0.05).abs() < 0.05, "estimate {}", est.abscissa);
    }
}
