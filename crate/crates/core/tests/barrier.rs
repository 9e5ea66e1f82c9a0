mod common;

use nalgebra::{DMatrix, DVector};
use quadsafe::barrier::{build_chain, compensation_phi, relative_degree, BarrierChain, PhiMode, ReachSampler};
use quadsafe::harness::bundled;
use quadsafe::mpc::augmented_continuous_dyn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const T: f64 = 0.1;

fn scenario_chains(p: f64) -> (Vec<BarrierChain>, DMatrix<f64>, DMatrix<f64>) {
    let cfg = bundled("circle_two_cylinders").unwrap();
    let (a, b) = augmented_continuous_dyn(&cfg.quad.drag);
    let chains = cfg.barrier_forms().iter().map(|h0| build_chain(h0, &[p; 4], &a, &b).unwrap()).collect();
    (chains, a, b)
}

fn random_state(rng: &mut impl Rng) -> DVector<f64> {
    let scale = [3.0, 3.0, 3.0, 2.0, 2.0, 2.0, 5.0, 5.0, 5.0, 20.0, 20.0, 20.0];
    DVector::from_fn(12, |i, _| rng.gen_range(-scale[i]..scale[i]))
}

fn input_grid(lo: f64, hi: f64, n: usize) -> Vec<DVector<f64>> {
    let vals: Vec<f64> = (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect();
    let mut out = Vec::new();
    for &x in &vals {
        for &y in &vals {
            for &z in &vals {
                out.push(DVector::from_vec(vec![x, y, z]));
            }
        }
    }
    out
}

#[test]
fn scenario_barriers_have_relative_degree_four() {
    let cfg = bundled("circle_two_cylinders").unwrap();
    let (a, b) = augmented_continuous_dyn(&cfg.quad.drag);
    for h0 in cfg.barrier_forms() {
        assert_eq!(relative_degree(&h0, &a, &b).unwrap(), 4);
        let chain = build_chain(&h0, &[5.0; 4], &a, &b).unwrap();
        for h in &chain.h[..3] {
            assert!(h.lie_g(&b).is_zero(1e-12));
        }
        assert!(!chain.lg_row.is_zero(1e-6));
    }
}

#[test]
fn wrong_gain_count_is_rejected() {
    let cfg = bundled("circle_two_cylinders").unwrap();
    let (a, b) = augmented_continuous_dyn(&cfg.quad.drag);
    assert!(build_chain(&cfg.barrier_forms()[0], &[5.0; 3], &a, &b).is_err());
}

#[test]
fn initial_chain_values_by_hand() {
    // p = (2, −0.25), c = (0, 2), v = (0.4, 0.82):
    // h₀ = 4 + 5.0625 − 1 = 8.0625, h₁ = 2 (p − c)·v + 5 h₀ = −2.09 + 40.3125
    let cfg = bundled("circle_two_cylinders").unwrap();
    let (chains, _, _) = scenario_chains(5.0);
    let z0 = DVector::from_column_slice(cfg.initial_aug_state().to_vector().as_slice());
    let h = chains[0].values(&z0);
    assert!((h[0] - 8.0625).abs() < 1e-12);
    assert!((h[1] - 38.2225).abs() < 1e-12);
}

#[test]
fn chain_matches_flow_derivatives() {
    let (chains, a, b) = scenario_chains(5.0);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let eps = 1e-4;
    let (fwd, _) = common::zoh_oracle(&a, &b, eps);
    let (bwd, _) = common::zoh_oracle(&a, &b, -eps);
    for _ in 0..50 {
        let z = random_state(&mut rng);
        let (zp, zm) = (&fwd * &z, &bwd * &z);
        for c in &chains {
            for i in 0..3 {
                let lf = (c.h[i].value(&zp) - c.h[i].value(&zm)) / (2.0 * eps);
                let (next, cur) = (c.h[i + 1].value(&z), c.gains[i] * c.h[i].value(&z));
                let expect = next - cur;
                assert!((lf - expect).abs() <= 1e-7 * (1.0 + next.abs() + cur.abs()), "{lf} vs {expect}");
            }
        }
    }
}

#[test]
fn big_h_is_the_derivative_of_the_last_chain_element() {
    let (chains, a, b) = scenario_chains(5.0);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let eps = 1e-4;
    let (fp, gp) = common::zoh_oracle(&a, &b, eps);
    let (fm, gm) = common::zoh_oracle(&a, &b, -eps);
    for _ in 0..50 {
        let z = random_state(&mut rng);
        let u = DVector::from_fn(3, |_, _| rng.gen_range(-40.0..40.0));
        let (zp, zm) = (&fp * &z + &gp * &u, &fm * &z + &gm * &u);
        for c in &chains {
            let d = (c.h[3].value(&zp) - c.h[3].value(&zm)) / (2.0 * eps);
            let expect = c.big_h(&z, &u);
            let last = c.gains[3] * c.h[3].value(&z);
            assert!((d + last - expect).abs() <= 1e-7 * (1.0 + expect.abs() + last.abs()));
        }
    }
}

#[test]
fn reach_box_contains_sampled_trajectories() {
    let (_, a, b) = scenario_chains(5.0);
    let sampler = ReachSampler::new(&a, &b, T, 11);
    let u_box = quadsafe::mpc::MpcConfig::default().input_box();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10 {
        let x = random_state(&mut rng);
        let bx = sampler.reach_box(&x, &u_box);
        for _ in 0..1000 {
            let t = rng.gen_range(0.0..T);
            let u = DVector::from_fn(3, |_, _| rng.gen_range(-40.0..40.0));
            let (phi, gamma) = common::zoh_oracle(&a, &b, t);
            assert!(bx.contains(&(&phi * &x + &gamma * &u), 1e-9));
        }
    }
}

#[test]
fn phi_is_a_lower_bound_on_the_dense_grid() {
    let (chains, a, b) = scenario_chains(5.0);
    let sampler = ReachSampler::new(&a, &b, T, 11);
    let u_box = quadsafe::mpc::MpcConfig::default().input_box();
    let grid: Vec<_> = (0..=40).map(|k| common::zoh_oracle(&a, &b, T * k as f64 / 40.0)).collect();
    let inputs = input_grid(-40.0, 40.0, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..25 {
        let x = random_state(&mut rng);
        for c in &chains {
            for mode in [PhiMode::Hull, PhiMode::Segmented] {
                let phi = compensation_phi(c, &x, &sampler, &u_box, mode);
                assert!(phi <= 0.0);
                for (f, g) in &grid {
                    for u in &inputs {
                        let z = f * &x + g * u;
                        assert!(c.big_h(&z, u) - c.big_h(&x, u) >= phi - 1e-9 * phi.abs());
                    }
                }
            }
        }
    }
}
