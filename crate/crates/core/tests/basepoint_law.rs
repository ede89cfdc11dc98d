use std::f64::consts::PI;

use goupillaud_core::ig_analytics::{basepoint_cdf, basepoint_density, hit_under_mass, IgQuery};
use goupillaud_core::QuadratureSpec;

#[test]
fn density_at_level_8_shape_and_mass() {
    let spec = QuadratureSpec::default();
    let q = IgQuery::with_default_grid(8.0, 1.0);
    let start = std::time::Instant::now();
    let c = basepoint_density(&q, &spec).unwrap();
    eprintln!(
        "density on {} points in {:?}, mass {}",
        c.z.len(),
        start.elapsed(),
        c.mass
    );
    assert!(c.all_converged());
    assert!(c.f.iter().all(|&f| f >= 0.0));
    assert!((c.mass - 1.0).abs() < 0.02, "mass {}", c.mass);
    for (z, f) in c.z.iter().zip(&c.f) {
        if *z > 8.0 {
            assert!(*f <= 1e-10);
        }
    }
    // concentration at 0: the density near 0 dominates the rest of [0, 8]
    let near = c.integrate_between(0.0, 0.01) / 0.01;
    let elsewhere = (1..80).map(|i| c.interpolate(0.1 * i as f64)).fold(0.0, f64::max);
    assert!(near > 5.0 * elsewhere, "{near} vs {elsewhere}");
}

#[test]
fn cdf_monotone_and_flat_beyond_level() {
    let spec = QuadratureSpec::default();
    let q = IgQuery::with_default_grid(8.0, 1.0);
    let cdf = basepoint_cdf(&q, &spec).unwrap();
    assert!(cdf.windows(2).all(|w| w[0].1 <= w[1].1));
    let at8 = cdf.iter().rev().find(|p| p.0 <= 8.05).unwrap().1;
    let last = cdf.last().unwrap().1;
    assert!((last - at8).abs() < 1e-9);
    let c = basepoint_density(&q, &spec).unwrap();
    assert!((last - c.mass.min(1.0)).abs() < 1e-12);
}

#[test]
fn positive_side_has_closed_form() {
    // independent oracle for 0 < z < x: exp(-t^2 / (2 (x - z))) / (pi sqrt(z (x - z)))
    let spec = QuadratureSpec::default();
    for &(x, t) in &[(8.0, 1.0), (1.0, 0.5), (3.0, 2.0)] {
        let zs: Vec<f64> = (1..20).map(|i| x * i as f64 / 20.0).collect();
        let c = basepoint_density(&IgQuery::new(x, t, zs.clone()), &spec).unwrap();
        for (z, f) in zs.iter().zip(&c.f) {
            let want = (-t * t / (2.0 * (x - z))).exp() / (PI * (z * (x - z)).sqrt());
            assert!(
                (f - want).abs() < 1e-7 * want + 1e-14,
                "x={x} t={t} z={z}: {f} vs {want}"
            );
        }
    }
}

#[test]
fn joint_hit_under_is_normalized() {
    let spec = QuadratureSpec::default();
    for x in [0.5, 1.0, 8.0] {
        let m = hit_under_mass(x, &spec).unwrap();
        assert!((m.value - 1.0).abs() < 1e-3, "x={x}: {m}");
    }
}
