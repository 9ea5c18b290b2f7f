mod common;

use cofl_core::channel::{sample_channel, CoherenceProfile, DeviceClass, GridDims};
use cofl_core::downlink::{
    decode_dynamic, equalize, estimate_equivalent_channel, estimate_from_pilots, optimal_power_split, rate_dynamic,
    PilotMatrix,
};
use cofl_core::rng::SimRng;
use cofl_core::uplink::{choose_beta, estimate_update, ota_aggregate, precode, BetaInput, Precoder, Transmission};
use cofl_core::C64;
use common::*;

#[test]
fn closed_form_split_matches_golden_section() {
    power_split_optimality().assert();
}

#[test]
fn golden_section_oracle_on_hand_cases() {
    // ρ = 1, M = 1, L = 2, σ² = 1: ρ_d = 3/2, ρ_p = 1/2.
    let (p, d) = golden_section_split(1.0, 1, 2, 1.0);
    assert!(rel_err(d, 1.5) < 1e-12 && rel_err(p, 0.5) < 1e-12);
    // ρ = 1, M = 2, L = 6, σ² = 1: ρ_d = 7/12, ρ_p = 2/3.
    let (p, d) = golden_section_split(1.0, 2, 6, 1.0);
    assert!(rel_err(d, 7.0 / 12.0) < 1e-12 && rel_err(p, 2.0 / 3.0) < 1e-12);
}

#[test]
fn mmse_error_energy_follows_the_variance_laws() {
    mmse_variance_laws().assert();
}

#[test]
fn equivalent_channel_estimate_is_orthogonal_to_its_error() {
    for (k, &(m, rho_p, noise)) in [(1, 1.0, 1.0), (2, 4.0, 2.0), (4, 0.5, 3.0)].iter().enumerate() {
        let (_, _, corr) = equivalent_channel_mc(m, rho_p, noise, 100_000, 40 + k as u64);
        assert!(corr < 0.02, "M = {m}: correlation {corr}");
    }
}

#[test]
fn small_point_mmse_example() {
    // M = 2, ρ_p = 4, σ² = 2 gives σ_e² = 0.4.
    let (emp, law, _) = equivalent_channel_mc(2, 4.0, 2.0, 100_000, 7);
    assert!((law - 0.8).abs() < 1e-15);
    assert!(rel_err(emp, law) < 0.02);
}

#[test]
fn noiseless_links_are_exact() {
    noiseless_exactness().assert();
}

#[test]
fn uplink_noise_matches_its_covariance() {
    uplink_noise_covariance().assert();
}

#[test]
fn channel_entries_are_unit_complex_gaussian() {
    let p = CoherenceProfile::new(0, 1, 1, DeviceClass::Dynamic).unwrap();
    let real = sample_channel(&p, GridDims::new(500, 200, 1).unwrap(), 1.0, 17).unwrap();
    let n = real.num_blocks();
    assert_eq!(n, 100_000);
    let (mut m2, mut m4, mut re2, mut mean) = (0.0, 0.0, 0.0, C64::new(0.0, 0.0));
    for b in 0..n {
        let h = real.block(b)[0];
        mean += h;
        m2 += h.norm_sqr();
        m4 += h.norm_sqr().powi(2);
        re2 += h.re * h.re;
    }
    let nf = n as f64;
    assert!((m2 / nf - 1.0).abs() < 0.02);
    // E|h|⁴ = 2 for CN(0, 1).
    assert!((m4 / nf - 2.0).abs() / 2.0 < 0.02);
    assert!((re2 / nf - 0.5).abs() / 0.5 < 0.02);
    assert!(mean.norm() / nf < 0.01);
}

#[test]
fn dynamic_rate_grows_with_power_at_the_optimal_split() {
    for &(m, lts) in &[(1usize, 4usize), (2, 8), (4, 16)] {
        let mut last = -1.0;
        for k in 0..12 {
            let rho = 10f64.powf(0.25 * k as f64);
            let Ok(s) = optimal_power_split(rho, m, lts, 1.0) else { continue };
            let r = rate_dynamic(s.rho_p, s.rho_d, m, lts, 1.0, 2000, 5).unwrap().mean;
            assert!(r >= last, "rate fell from {last} to {r} at rho {rho}");
            last = r;
        }
        assert!(last > 0.0);
    }
}

/// Data-phase symbol MSE of a dynamic device on one strip of length `L`
/// (`λ = 1/L`) under both superposition styles, at equal strip energy.
fn strip_mse(lts: usize, rho: f64, noise: f64, draws: usize, seed: u64) -> (f64, f64) {
    let xp = PilotMatrix::dft(1);
    let split = optimal_power_split(rho, 1, lts, noise).unwrap();
    let rho_da = split.rho_d.min(rho * (1.0 - 1.0 / lts as f64));
    let rho_pa = (rho - rho_da) * lts as f64;
    let mut rng = SimRng::new(seed);
    let (mut sup, mut add, mut count) = (0.0, 0.0, 0.0);
    for _ in 0..draws {
        let h = rng.complex_normal(1.0);
        let s: Vec<f64> = (0..lts).map(|_| rng.normal()).collect();

        let e = C64::new(rng.normal(), 1.0) * std::f64::consts::FRAC_1_SQRT_2;
        let y0 = h.conj() * e * split.rho_p.sqrt() + rng.complex_normal(noise);
        let yd: Vec<C64> =
            s[1..].iter().map(|&x| h.conj() * e * x * split.rho_d.sqrt() + rng.complex_normal(noise)).collect();
        let est = estimate_equivalent_channel(&[y0], &xp, split.rho_p, noise).unwrap();
        let dec = decode_dynamic(&yd, &est.f_bar, split.rho_d, est.error_variance, noise);
        sup += dec.symbols.iter().zip(&s[1..]).map(|(z, &x)| (z - C64::new(x, 0.0)).norm_sqr()).sum::<f64>();

        let y0 = h.conj() * (rho_pa.sqrt() + rho_da.sqrt() * s[0]) + rng.complex_normal(noise);
        let (g, err) = estimate_from_pilots(&[y0], rho_pa, rho_da + noise).unwrap();
        for &x in &s[1..] {
            let y = h.conj() * x * rho_da.sqrt() + rng.complex_normal(noise);
            let (z, _) = equalize(y, g, rho_da.sqrt(), err, noise);
            add += (z - C64::new(x, 0.0)).norm_sqr();
        }
        count += (lts - 1) as f64;
    }
    (sup / count, add / count)
}

#[test]
fn additive_superposition_is_no_better_for_dynamics() {
    for (k, &lts) in [5usize, 4, 3, 2].iter().enumerate() {
        let (sup, add) = strip_mse(lts, 100.0, 1.0, 1000, 70 + k as u64);
        assert!(add >= sup, "L = {lts}: additive {add} < superposed {sup}");
    }
}

#[test]
fn single_device_beta_solves_the_budget() {
    let input = BetaInput { g_hat: C64::new(1.0, 0.0), weight: 0.5, mean_energy: 1.0, budget: 0.0, mu: 1.0 };
    let rho_u = 10.0;
    let beta = choose_beta(&[BetaInput { budget: rho_u * 0.25, ..input }], rho_u);
    assert!((beta - 1.0).abs() < 1e-12);
    // A stronger channel needs less inversion, so β scales with |g|.
    let strong = choose_beta(&[BetaInput { g_hat: C64::new(0.0, 2.0), budget: rho_u * 0.25, ..input }], rho_u);
    assert!((strong - 2.0).abs() < 1e-12);
    let doubled = choose_beta(&[BetaInput { budget: 2.0 * rho_u * 0.25, ..input }], rho_u);
    assert!((doubled / beta - 2f64.sqrt()).abs() < 1e-12);
}

#[test]
fn chi_weighted_estimator_example() {
    // d = 1, a = (0.5, 0.5), Δθ = (2, −1), χ = (1, 0.5): output 0.75.
    let (rho_u, beta, mu) = (4.0, 1.0, 1.0);
    let g = [C64::new(1.5, 0.0), C64::new(0.0, 0.5)];
    let inc = [2.0, -1.0];
    let tx: Vec<Transmission> = g
        .iter()
        .zip(inc)
        .map(|(&g, x)| {
            let pre = Precoder::new(g, beta, mu).unwrap();
            Transmission { gain: g, symbols: precode(&[x], &[true], 0.5, &pre, rho_u).unwrap() }
        })
        .collect();
    let est = estimate_update(&ota_aggregate(&tx, 1, 0.0, 0).unwrap(), rho_u, beta).unwrap();
    assert!((est[0].re - 0.75).abs() < 1e-12 && est[0].im.abs() < 1e-12);
}

#[test]
fn chi_bias_survives_noise_averaging() {
    // E[Δ̂θ_i] = Σ_k χ_k a_k Δθ_{k,i}: noisy estimates average to the biased target.
    let (rho_u, beta, mu, noise) = (10.0, 0.8, 0.5, 1.0);
    let g = [C64::from_polar(1.2, 0.3), C64::from_polar(0.2, -1.0), C64::from_polar(0.45, 2.0)];
    let a = [0.2, 0.5, 0.3];
    let inc = [[1.0, -2.0, 0.5], [0.5, 1.5, -1.0], [-1.0, 0.25, 2.0]];
    let chi: Vec<f64> = g.iter().map(|z| z.norm() / z.norm().max(mu)).collect();
    let target: Vec<f64> = (0..3).map(|i| (0..3).map(|k| chi[k] * a[k] * inc[k][i]).sum()).collect();
    let trials = 20_000;
    let mut sum = [0.0; 3];
    for t in 0..trials {
        let tx: Vec<Transmission> = (0..3)
            .map(|k| {
                let pre = Precoder::new(g[k], beta, mu).unwrap();
                Transmission { gain: g[k], symbols: precode(&inc[k], &[true; 3], a[k], &pre, rho_u).unwrap() }
            })
            .collect();
        let est = estimate_update(&ota_aggregate(&tx, 3, noise, t).unwrap(), rho_u, beta).unwrap();
        for i in 0..3 {
            sum[i] += est[i].re;
        }
    }
    // Per-trial std of the real part is sqrt(σ²/(2ρ_u β²)) ≈ 0.28; 5 standard errors.
    let tol = 5.0 * (noise / (2.0 * rho_u * beta * beta)).sqrt() / (trials as f64).sqrt();
    for i in 0..3 {
        assert!((sum[i] / trials as f64 - target[i]).abs() < tol, "coordinate {i}");
    }
    assert!(chi[1] < 1.0 && chi[2] < 1.0 && chi[0] == 1.0);
}
