use adapted_ot::lattice::lattice_barrier;
use adapted_ot::model::{CoefficientSpec as C, TimeGrid};
use adapted_ot::noise::sample_brownian;
use adapted_ot::sde::{euler_maruyama, monotone_em};
use rayon::prelude::*;

const FINE: usize = 512;
const REPS: u64 = 10_000;

/// `E[sup_t |X^h − X^{h/2}|²]` for the monotone scheme, both runs driven by
/// the same fine noise.
fn self_difference(b: &C, sigma: &C, n: usize) -> f64 {
    let fine_grid = TimeGrid::new(FINE).unwrap();
    let (g1, g2) = (TimeGrid::new(n).unwrap(), TimeGrid::new(2 * n).unwrap());
    let (a1, a2) = (lattice_barrier(n, 4.0).unwrap(), lattice_barrier(2 * n, 4.0).unwrap());
    let total: f64 = (0..REPS)
        .into_par_iter()
        .map(|i| {
            let dw = sample_brownian(fine_grid, 1, 17, i);
            let x = monotone_em(b, sigma, 0.0, g1, FINE / n, a1, &dw).unwrap();
            let y = monotone_em(b, sigma, 0.0, g2, FINE / (2 * n), a2, &dw).unwrap();
            let sup = x.values.iter().zip(&y.values).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
            sup * sup
        })
        .sum();
    total / REPS as f64
}

#[test]
fn additive_noise_self_difference_quarters() {
    // with constant diffusion the scheme coincides with Milstein, so the
    // squared self-difference falls by about 1/4 per halving
    let (b, s) = (C::ou(1.0), C::constant(1.0));
    let r = self_difference(&b, &s, 32) / self_difference(&b, &s, 16);
    assert!((0.2..=0.35).contains(&r), "ratio {r}");
}

#[test]
fn multiplicative_noise_self_difference_halves() {
    let (b, s) = (C::ou(1.0), C::affine(0.5, 0.5));
    let r = self_difference(&b, &s, 32) / self_difference(&b, &s, 16);
    assert!((0.3..=0.8).contains(&r), "ratio {r}");
}

#[test]
fn truncated_scheme_matches_plain_scheme() {
    let (b, s) = (C::affine(0.2, -1.0), C::affine(1.0, 0.3));
    for n in [10, 20, 50] {
        let grid = TimeGrid::new(n).unwrap();
        let barrier = lattice_barrier(n, 4.0).unwrap();
        let substeps = 16;
        let same = (0..REPS)
            .into_par_iter()
            .filter(|&i| {
                let dw = sample_brownian(grid, substeps, 23, i);
                let plain = euler_maruyama(&b, &s, 0.0, grid, substeps, &dw).unwrap();
                let cut = monotone_em(&b, &s, 0.0, grid, substeps, barrier, &dw).unwrap();
                plain.values == cut.values
            })
            .count();
        assert!(same as f64 >= 0.9999 * REPS as f64, "h = 1/{n}: {same} of {REPS} paths agree");
    }
}
