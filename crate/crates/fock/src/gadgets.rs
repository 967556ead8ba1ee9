//! Subharmonic comparison functions built around a base point zeta:
//! the fractional cone phi_eps(w) = (|w - zeta| / rho(zeta))^eps, its
//! disk-average smoothing psi, the curvature average Phi_eps, and the
//! remainder varrho = phi_tilde - psi. These drive the weighted
//! estimates; the suite certifies their defining identities and bound
//! constants numerically.
//!
//! Both psi and Phi_eps are averages over D(w, rho(zeta)) of functions
//! radial about zeta, so they collapse to 1-D overlap-arc integrals in
//! t = |w - zeta|. That route is accurate enough that the mean-value
//! inequality psi >= phi_eps holds pointwise in floating point.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{FockError, Result};
use crate::grid::{GridField, Meaning};
use crate::quad;
use crate::weights::{regularize_weight, Density, WeightSpec};

/// Average over the disk D(w, rho) of |u - zeta|^p, with t = |w - zeta|
/// and p > -2, via the circle-overlap reduction: circles of radius r
/// around zeta meet D(w, rho) in an arc of angle theta(r).
fn radial_disk_average(t: f64, rho: f64, p: f64, gl_n: usize) -> f64 {
    debug_assert!(p > -2.0);
    let full = if t < rho {
        2.0 * std::f64::consts::PI * (rho - t).powf(p + 2.0) / (p + 2.0)
    } else {
        0.0
    };
    let lo = (rho - t).abs();
    let hi = rho + t;
    let arc = if hi - lo < 1e-15 * rho {
        0.0
    } else {
        // Substitute u = r^{p+2} so the r^{p+1} factor is absorbed; the
        // remaining theta(r(u)) is bounded with sqrt endpoints.
        let q = p + 2.0;
        let (us, ws) = quad::gauss_legendre_on(gl_n, lo.powf(q), hi.powf(q));
        us.iter()
            .zip(ws.iter())
            .map(|(&u, &w)| {
                let r = u.powf(1.0 / q);
                let c = ((r * r + t * t - rho * rho) / (2.0 * r * t)).clamp(-1.0, 1.0);
                w * 2.0 * c.acos() / q
            })
            .sum()
    };
    (full + arc) / (std::f64::consts::PI * rho * rho)
}

/// Radial profiles of the comparison functions in t = |w - zeta|.
pub struct GadgetProfiles {
    pub epsilon: f64,
    pub rho_zeta: f64,
}

impl GadgetProfiles {
    /// phi_eps(t) = (t / rho)^eps.
    pub fn phi_eps(&self, t: f64) -> f64 {
        (t / self.rho_zeta).powf(self.epsilon)
    }

    /// psi(t): disk average of phi_eps.
    pub fn psi(&self, t: f64) -> f64 {
        radial_disk_average(t, self.rho_zeta, self.epsilon, 400) / self.rho_zeta.powf(self.epsilon)
    }

    /// Phi_eps(t): disk average of |d phi_eps / dw|^2
    /// = eps^2 |u - zeta|^{2 eps - 2} / (4 rho^{2 eps}).
    pub fn phi_cap(&self, t: f64) -> f64 {
        let e = self.epsilon;
        e * e / (4.0 * self.rho_zeta.powf(2.0 * e))
            * radial_disk_average(t, self.rho_zeta, 2.0 * e - 2.0, 400)
    }

    /// Laplacian of psi at the center: the disk average of the cone's
    /// Laplacian, 2 eps / rho^2.
    fn psi_laplacian_center(&self) -> f64 {
        2.0 * self.epsilon / (self.rho_zeta * self.rho_zeta)
    }
}

/// Certified data for one (zeta, epsilon) instance of the comparison
/// functions, with the fields sampled on the working grid.
pub struct GadgetReport {
    pub epsilon: f64,
    pub zeta: Complex64,
    pub rho_zeta: f64,
    pub phi_eps: GridField,
    pub psi: GridField,
    pub phi_cap: GridField,
    /// varrho = phi_tilde - psi.
    pub varrho: GridField,
    /// sup over the grid of |d psi / dw|^2 rho(w)^2.
    pub c1: f64,
    /// sup over the grid of (Laplacian psi) rho(w)^2.
    pub c2: f64,
    /// sup of |psi - phi_eps| outside D(zeta, rho(zeta)).
    pub psi_minus_phi_sup: f64,
    /// (min, max) of psi - phi_eps on the double disk D(zeta, 2 rho).
    pub psi_minus_phi_on_d2: (f64, f64),
    /// Phi_eps(zeta) rho^2(zeta); the curvature identity pins it to eps/4.
    pub phi_cap_at_zeta_scaled: f64,
}

/// Build the comparison functions around `zeta` at exponent `epsilon`
/// and certify their defining bounds on a (2L)^2 grid with n nodes per
/// side.
pub fn proof_gadget_suite(
    spec: &WeightSpec,
    box_halfwidth: f64,
    n: usize,
    zeta: Complex64,
    epsilon: f64,
) -> Result<GadgetReport> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(FockError::InvalidArgument(format!(
            "epsilon must lie in (0, 1), got {epsilon}"
        )));
    }
    let mu = Density::from_spec(spec, box_halfwidth, n);
    let rho_zeta = mu.rho(zeta)?;
    let margin = zeta.re.abs().max(zeta.im.abs()) + 2.0 * rho_zeta;
    if margin >= box_halfwidth {
        return Err(FockError::InvalidArgument(format!(
            "zeta must sit well inside the box: need |zeta| + 2 rho < L, got {margin} vs {box_halfwidth}"
        )));
    }
    let rho_field = mu.rho_field()?;
    let prof = GadgetProfiles { epsilon, rho_zeta };

    let phi_eps = GridField::from_fn(box_halfwidth, n, Meaning::Gadget, |w| {
        prof.phi_eps((w - zeta).norm())
    });
    // psi and Phi_eps only depend on t; tabulate the profiles once and
    // interpolate across the grid.
    let t_max = (2.0f64.sqrt() * box_halfwidth + zeta.norm()) * 1.01 + rho_zeta;
    let table_n = 4000;
    let psi_tab: Vec<f64> = (0..=table_n)
        .into_par_iter()
        .map(|k| prof.psi(t_max * k as f64 / table_n as f64))
        .collect();
    let cap_tab: Vec<f64> = (0..=table_n)
        .into_par_iter()
        .map(|k| prof.phi_cap(t_max * k as f64 / table_n as f64))
        .collect();
    let lookup = |tab: &[f64], t: f64| {
        let x = (t / t_max * table_n as f64).clamp(0.0, table_n as f64);
        let k = (x as usize).min(table_n - 1);
        let frac = x - k as f64;
        tab[k] * (1.0 - frac) + tab[k + 1] * frac
    };
    let psi = GridField::from_fn(box_halfwidth, n, Meaning::Gadget, |w| {
        lookup(&psi_tab, (w - zeta).norm())
    });
    let phi_cap = GridField::from_fn(box_halfwidth, n, Meaning::Gadget, |w| {
        lookup(&cap_tab, (w - zeta).norm())
    });

    let reg = regularize_weight(spec, box_halfwidth, n, &rho_field)?;
    let mut varrho = GridField::constant(box_halfwidth, n, Meaning::Gadget, 0.0);
    for k in 0..n * n {
        varrho.values[k] = reg.field.values[k] - psi.values[k];
    }

    // Bound constants over the grid, through the tabulated radial
    // profile: |d psi / dw|^2 = psi'(t)^2 / 4, and for a radial function
    // the Laplacian is psi'' + psi'/t.
    let dt = t_max / table_n as f64;
    let deriv = |k: usize| (psi_tab[k + 1] - psi_tab[k - 1]) / (2.0 * dt);
    let lap_at = |k: usize| {
        if k == 0 {
            return prof.psi_laplacian_center();
        }
        let p2 = (psi_tab[k + 1] - 2.0 * psi_tab[k] + psi_tab[k - 1]) / (dt * dt);
        p2 + deriv(k) / (k as f64 * dt)
    };
    let (c1, c2) = (0..n * n)
        .into_par_iter()
        .map(|k| {
            let (i, j) = (k % n, k / n);
            let w = rho_field.node(i, j);
            let rw = rho_field.at(i, j);
            if !rw.is_finite() || rw <= 0.0 {
                return (0.0, 0.0);
            }
            let t = (w - zeta).norm();
            let idx = ((t / dt).round() as usize).clamp(1, table_n - 1);
            let dp = deriv(idx);
            (dp * dp / 4.0 * rw * rw, lap_at(idx) * rw * rw)
        })
        .reduce(|| (0.0, 0.0), |a, b| (a.0.max(b.0), a.1.max(b.1)));

    // Mean-value gap psi - phi_eps directly from the profiles.
    let mut sup_off = 0.0f64;
    let mut d2_min = f64::INFINITY;
    let mut d2_max = f64::NEG_INFINITY;
    for k in 0..=2000 {
        let t = t_max * k as f64 / 2000.0;
        let gap = prof.psi(t) - prof.phi_eps(t);
        if gap < -1e-10 {
            return Err(FockError::InvalidArgument(format!(
                "mean-value inequality violated at t={t}: gap {gap}"
            )));
        }
        if t >= rho_zeta {
            sup_off = sup_off.max(gap.abs());
        }
        if t <= 2.0 * rho_zeta {
            d2_min = d2_min.min(gap);
            d2_max = d2_max.max(gap);
        }
    }

    let phi_cap_at_zeta_scaled = prof.phi_cap(0.0) * rho_zeta * rho_zeta;

    Ok(GadgetReport {
        epsilon,
        zeta,
        rho_zeta,
        phi_eps,
        psi,
        phi_cap,
        varrho,
        c1,
        c2,
        psi_minus_phi_sup: sup_off,
        psi_minus_phi_on_d2: (d2_min, d2_max),
        phi_cap_at_zeta_scaled,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn center_values_from_closed_forms() {
        // Disk average of (r/rho)^eps at the center is 2/(2+eps); the
        // curvature average is eps/(4 rho^2).
        for &eps in &[0.25, 0.5, 0.8] {
            let prof = GadgetProfiles { epsilon: eps, rho_zeta: 0.3 };
            assert_relative_eq!(prof.psi(0.0), 2.0 / (2.0 + eps), max_relative = 1e-12);
            assert_relative_eq!(
                prof.phi_cap(0.0),
                eps / (4.0 * 0.3 * 0.3),
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn profile_matches_2d_quadrature() {
        // Cross-check the overlap-arc reduction against a direct 2-D
        // polar disk integral at an off-center point.
        let prof = GadgetProfiles { epsilon: 0.4, rho_zeta: 0.5 };
        let zeta = Complex64::new(0.0, 0.0);
        let w = Complex64::new(0.7, 0.2);
        let t = w.norm();
        let direct = quad::disk_integral(w, 0.5, 96, 128, |u| (u - zeta).norm().powf(0.4))
            / (std::f64::consts::PI * 0.25)
            / 0.5f64.powf(0.4);
        assert_relative_eq!(prof.psi(t), direct, max_relative = 1e-6);
    }

    #[test]
    fn curvature_identity_both_families() {
        let gauss = WeightSpec::gaussian();
        for &eps in &[0.25, 0.5] {
            let rep = proof_gadget_suite(&gauss, 3.0, 129, Complex64::new(0.0, 0.0), eps).unwrap();
            assert_relative_eq!(rep.phi_cap_at_zeta_scaled, eps / 4.0, max_relative = 0.02);
        }
        let quartic = WeightSpec::radial_power(4.0, 1.0).unwrap();
        let rep =
            proof_gadget_suite(&quartic, 3.0, 129, Complex64::new(1.0, 0.0), 0.5).unwrap();
        assert_relative_eq!(rep.phi_cap_at_zeta_scaled, 0.125, max_relative = 0.02);
    }

    #[test]
    fn mean_value_gap_band() {
        let rep = proof_gadget_suite(
            &WeightSpec::gaussian(),
            3.0,
            129,
            Complex64::new(0.3, -0.2),
            0.5,
        )
        .unwrap();
        let (lo, hi) = rep.psi_minus_phi_on_d2;
        assert!(lo >= 0.0, "min gap {lo}");
        assert!(hi <= 3.0f64.powf(0.5), "max gap {hi}");
        // Pointwise domination holds on the sampled grid too.
        for k in 0..rep.psi.values.len() {
            assert!(rep.psi.values[k] >= rep.phi_eps.values[k] - 1e-6);
        }
        assert!(rep.psi_minus_phi_sup > 0.0 && rep.psi_minus_phi_sup < 1.0);
    }

    #[test]
    fn bound_constants_shrink_with_epsilon() {
        let big =
            proof_gadget_suite(&WeightSpec::gaussian(), 3.0, 97, Complex64::new(0.0, 0.0), 0.5)
                .unwrap();
        let small =
            proof_gadget_suite(&WeightSpec::gaussian(), 3.0, 97, Complex64::new(0.0, 0.0), 0.05)
                .unwrap();
        assert!(big.c1 > small.c1, "c1 {} vs {}", big.c1, small.c1);
        assert!(big.c2 > small.c2, "c2 {} vs {}", big.c2, small.c2);
        assert!(small.c2 > 0.0);
    }

    #[test]
    fn remainder_curvature_tracks_regularized_weight() {
        // For small epsilon the smoothing carries little curvature
        // (Delta psi rho^2 <= ~2 eps), so Delta varrho rho^2 stays
        // positive and comparable to Delta phi_tilde rho^2 ~ 1/pi.
        let rep = proof_gadget_suite(
            &WeightSpec::gaussian(),
            3.0,
            193,
            Complex64::new(0.0, 0.0),
            0.05,
        )
        .unwrap();
        let n = rep.varrho.n;
        let lap = rep.varrho.stencil_laplacian(Meaning::Density);
        let mu = Density::from_spec(&WeightSpec::gaussian(), 3.0, 193);
        let rho = mu.rho_field().unwrap();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for j in 0..n {
            for i in 0..n {
                let w = rep.varrho.node(i, j);
                if w.norm() > 1.2 {
                    continue;
                }
                let v = lap.at(i, j) * rho.at(i, j).powi(2);
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        assert!(lo > 0.01, "min curvature {lo}");
        assert!(hi < 10.0, "max curvature {hi}");
    }

    #[test]
    fn epsilon_domain_enforced() {
        for &eps in &[0.0, 1.0, -0.3, 1.7] {
            let err = proof_gadget_suite(
                &WeightSpec::gaussian(),
                3.0,
                65,
                Complex64::new(0.0, 0.0),
                eps,
            );
            assert!(err.is_err(), "epsilon {eps} accepted");
        }
    }
}
