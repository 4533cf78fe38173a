//! The telegraph oracle against the eigenvalues of the damped V
//! amplitude equations, its limiting cases, and the frozen golden file.

use std::path::PathBuf;

use nalgebra::Matrix3;
use num_complex::Complex64;

use shelving::oracle::{golden_file_name, read_golden, telegraph_oracle, write_golden, OracleError};
use shelving::{ConfigurationKind, LevelScheme};

fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

/// Decay rates of `|c|^2` for the three eigenmodes, slowest first.
fn density_rates(s: &LevelScheme) -> [f64; 3] {
    let i = Complex64::new(0.0, 1.0);
    let (ws, ww) = (0.5 * s.omega_strong, 0.5 * s.omega_weak);
    let zero = Complex64::new(0.0, 0.0);
    let a = Matrix3::new(
        zero,
        -i * ws,
        -i * ww,
        -i * ws,
        Complex64::new(-0.5 * s.gamma_strong, 0.0),
        zero,
        -i * ww,
        zero,
        Complex64::new(-0.5 * s.gamma_weak, 0.0),
    );
    let ev = a.schur().eigenvalues().expect("3x3 complex Schur converges");
    let mut rates = [-2.0 * ev[0].re, -2.0 * ev[1].re, -2.0 * ev[2].re];
    rates.sort_by(f64::total_cmp);
    rates
}

#[test]
fn desk_scale_matches_eigenmodes() {
    let s = LevelScheme::desk_scale();
    let p = telegraph_oracle(&s).unwrap();
    let [slow, fast, _] = density_rates(&s);
    assert!((p.lambda2 / slow - 1.0).abs() < 1e-6, "{} vs {slow}", p.lambda2);
    assert!((p.fast_rate() / fast - 1.0).abs() < 1e-4, "{} vs {fast}", p.fast_rate());
    assert!(p.fast_rate() > p.lambda2 && p.lambda2 > 0.0);
    assert!((0.0..=1.0).contains(&p.weight));
}

#[test]
fn desk_scale_matches_frozen_golden() {
    let s = LevelScheme::desk_scale();
    let path = golden_dir().join(golden_file_name(&s));
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        write_golden(&golden_dir(), &s, &telegraph_oracle(&s).unwrap()).unwrap();
    }
    let frozen = read_golden(&path).unwrap();
    assert!((frozen.beta1 - 0.19990511338).abs() < 1e-10);
    assert!((frozen.lambda2 - 0.0050468330958).abs() < 1e-12);
    let live = telegraph_oracle(&s).unwrap();
    assert!((live.beta1 / frozen.beta1 - 1.0).abs() < 1e-9);
    assert!((live.lambda2 / frozen.lambda2 - 1.0).abs() < 1e-9);
    assert!((live.weight - frozen.weight).abs() < 1e-9);
}

#[test]
fn doubling_weak_decay_roughly_doubles_slow_rate() {
    let s = LevelScheme::desk_scale();
    let mut doubled = s.clone();
    doubled.gamma_weak *= 2.0;
    let ratio = telegraph_oracle(&doubled).unwrap().lambda2 / telegraph_oracle(&s).unwrap().lambda2;
    assert!((1.8..=2.2).contains(&ratio), "{ratio}");
}

#[test]
fn vanishing_weak_decay_gives_vanishing_slow_rate() {
    let mut s = LevelScheme::desk_scale();
    s.gamma_weak = 1e-7;
    s.omega_weak = 1e-4;
    let p = telegraph_oracle(&s).unwrap();
    assert!(p.lambda2 > 0.0 && p.lambda2 < 1e-6, "{}", p.lambda2);
    let [slow, _, _] = density_rates(&s);
    assert!((p.lambda2 / slow - 1.0).abs() < 1e-3);
}

#[test]
fn only_the_v_geometry_is_supported() {
    for config in [
        ConfigurationKind::Lambda,
        ConfigurationKind::CascadeE1aboveE0,
        ConfigurationKind::CascadeE1belowE0,
    ] {
        let s = LevelScheme::desk_scale().with_config(config);
        assert!(matches!(telegraph_oracle(&s), Err(OracleError::NotV(_))));
    }
}
