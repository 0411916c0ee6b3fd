use super::*;
use crate::free_theory::FreeTheory;
use crate::lattice_model::{BlochHamiltonian, TwoBodyPotential};
use crate::quadrature;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn chain(mu: f64, lambda: f64) -> LatticeModel {
    LatticeModel { hamiltonian: BlochHamiltonian::laplacian(1.0), potential: TwoBodyPotential::nearest_neighbour(), mu, lambda }
}

fn two_band_model(lambda: f64) -> LatticeModel {
    let on = CMat::from_row_slice(2, 2, &[c(0.3, 0.0), c(0.2, -0.1), c(0.2, 0.1), c(-0.4, 0.0)]);
    let hop = CMat::from_row_slice(2, 2, &[c(-1.0, 0.0), c(0.1, 0.05), c(0.0, 0.3), c(-0.6, 0.0)]);
    LatticeModel { hamiltonian: BlochHamiltonian::new(vec![on, hop]).unwrap(), potential: TwoBodyPotential::new(vec![0.4, 1.0]).unwrap(), mu: 0.1, lambda }
}

fn random_local(ens: &ManyBodyEnsemble, rng: &mut ChaCha8Rng) -> BlockOp {
    // random Hermitian quadratic form supported on the first two modes plus a density-density term
    let n = ens.modes();
    let mut k = CMat::zeros(n, n);
    for i in 0..2 {
        for j in 0..2 {
            k[(i, j)] = c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }
    }
    let k = linalg::hermitian_part(&k);
    let q = ens.fock.quadratic(&k);
    let nn = &ens.density(0) * &ens.density(1);
    &q + &nn.scale(c(rng.gen_range(-1.0..1.0), 0.0))
}

#[test]
fn free_spectrum_is_subset_sums() {
    let ens = build_ensemble(&chain(0.7, 0.0), 4, 1.0).unwrap();
    let eps: Vec<f64> = (0..4).map(|n| 2.0 * (1.0 - (2.0 * PI * n as f64 / 4.0).cos()) - 0.7).collect();
    let mut sums: Vec<f64> = (0..16u32).map(|s| (0..4).filter(|i| s & (1 << i) != 0).map(|i| eps[i]).sum()).collect();
    let mut all: Vec<f64> = (0..=4).flat_map(|n| ens.energies(n).to_vec()).collect();
    sums.sort_by(f64::total_cmp);
    all.sort_by(f64::total_cmp);
    for (a, b) in sums.iter().zip(&all) {
        assert!((a - b).abs() < 1e-12);
    }
    assert!(ens.decomposition_residual() < 1e-10);
}

#[test]
fn number_conservation_and_weights() {
    let ens = build_ensemble(&chain(1.0, 0.8), 4, 2.0).unwrap();
    let h = ens.fock.embed(&ens.hamiltonian);
    let n = ens.fock.embed(&ens.fock.number());
    assert_eq!(linalg::max_abs(&(&h * &n - &n * &h)), 0.0);
    let total: f64 = ens.weights().iter().flatten().sum();
    assert!((total - 1.0).abs() < 1e-14);
}

#[test]
fn zero_potential_gives_free_hamiltonian() {
    let mut m = chain(1.0, 0.9);
    m.potential = TwoBodyPotential::zero();
    let a = build_ensemble(&m, 4, 1.0).unwrap();
    let b = build_ensemble(&chain(1.0, 0.0), 4, 1.0).unwrap();
    assert!((&a.hamiltonian - &b.hamiltonian).max_abs() < 1e-15);
}

#[test]
fn dimension_budget() {
    assert!(matches!(build_ensemble(&chain(1.0, 0.0), 15, 1.0), Err(EdError::DimensionTooLarge { .. })));
}

#[test]
fn cumulant_low_orders() {
    let ens = build_ensemble(&chain(1.3, 0.3), 4, 2.0).unwrap();
    let a = ens.density(0);
    let b = ens.current(1, 2);
    let one = ens.euclidean_cumulant(&[Timed { op: &a, t: 0.7 }]).unwrap();
    assert!((one - ens.expectation(&a)).norm() < 1e-13);
    let two = ens.euclidean_cumulant(&[Timed { op: &a, t: 0.7 }, Timed { op: &b, t: 0.2 }]).unwrap();
    let mom = ens.moment(&[Timed { op: &a, t: 0.7 }, Timed { op: &b, t: 0.2 }]).unwrap();
    assert!((two - (mom - ens.expectation(&a) * ens.expectation(&b))).norm() < 1e-13);
    let shifted = ens.euclidean_cumulant(&[Timed { op: &a, t: 0.7 + 2.0 }, Timed { op: &b, t: 0.2 }]).unwrap();
    assert!((two - shifted).norm() < 1e-12);
    assert!(matches!(ens.moment(&[Timed { op: &a, t: 0.5 }, Timed { op: &b, t: 0.5 }]), Err(EdError::CoincidentTimes(..))));
}

#[test]
fn moments_rebuilt_from_cumulants() {
    let ens = build_ensemble(&chain(0.9, 0.4), 4, 1.5).unwrap();
    let ops = [ens.density(0), ens.current(1, 1), ens.density(3)];
    let times = [1.1, 0.3, 0.8];
    let timed: Vec<Timed> = ops.iter().zip(times).map(|(o, t)| Timed { op: o, t }).collect();
    let direct = ens.moment(&timed).unwrap();
    let mut rebuilt = C64::new(0.0, 0.0);
    for part in set_partitions(3) {
        let mut prod = C64::new(1.0, 0.0);
        for b in part {
            let sub: Vec<Timed> = (0..3).filter(|i| b & (1 << i) != 0).map(|i| timed[i]).collect();
            prod *= ens.euclidean_cumulant(&sub).unwrap();
        }
        rebuilt += prod;
    }
    assert!((direct - rebuilt).norm() < 1e-10);
}

#[test]
fn set_partition_counts() {
    let bell = [1, 1, 2, 5, 15, 52];
    for (n, &b) in bell.iter().enumerate().skip(1) {
        assert_eq!(set_partitions(n).len(), b);
    }
}

#[test]
fn kms_free_and_interacting() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for (lambda, tol) in [(0.0, 1e-10), (0.3, 1e-9)] {
        let ens = build_ensemble(&chain(1.1, lambda), 4, 2.0).unwrap();
        for _ in 0..3 {
            let a = random_local(&ens, &mut rng);
            let b = random_local(&ens, &mut rng);
            let t = rng.gen_range(0.0..2.0);
            let s = rng.gen_range(0.0..2.0);
            let r = ens.kms_check(&a, &b, t, s);
            assert!(r.residual < tol, "{r:?}");
        }
        let id = ens.fock.identity();
        assert!(ens.kms_check(&id, &id, 0.4, 1.2).residual < 1e-14);
    }
}

#[test]
fn integrated_cumulant_matches_quadrature() {
    let ens = build_ensemble(&two_band_model(0.3), 2, 1.5).unwrap();
    let x = ens.current(1, 0);
    let o = ens.density(1);
    let omega = 2.0 * PI / 1.5;
    let closed = ens.integrated_cumulant(&[AtFrequency { op: &x, omega }], &o).unwrap();
    let f = |t: f64| ens.euclidean_cumulant(&[Timed { op: &x, t }, Timed { op: &o, t: 0.0 }]).unwrap() * C64::from_polar(1.0, -omega * t);
    let q = quadrature::integrate(f, 1e-12, 1.5 - 1e-12, 1e-12, 2000).unwrap().value;
    assert!((closed - q).norm() < 1e-9, "{closed} vs {q}");
}

#[test]
fn double_integrated_cumulant_matches_quadrature() {
    let ens = build_ensemble(&chain(0.8, 0.4), 3, 1.0).unwrap();
    let x = ens.current_momentum(0, 2.0 * PI / 3.0);
    let y = ens.current_momentum(0, -2.0 * PI / 3.0);
    let o = ens.current(1, 0);
    let (wx, wy) = (2.0 * PI, -2.0 * PI);
    let closed = ens.integrated_cumulant(&[AtFrequency { op: &x, omega: wx }, AtFrequency { op: &y, omega: wy }], &o).unwrap();
    // tensor Gauss–Legendre on each ordered triangle
    let nodes = 40;
    let (gx, gw) = gauss_legendre(nodes);
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..nodes {
        for j in 0..nodes {
            let tx = 0.5 * (gx[i] + 1.0);
            let ty = 0.5 * (gx[j] + 1.0);
            if (tx - ty).abs() < 1e-12 {
                continue;
            }
            let v = ens
                .euclidean_cumulant(&[Timed { op: &x, t: tx }, Timed { op: &y, t: ty }, Timed { op: &o, t: 0.0 }])
                .unwrap();
            acc += v * C64::from_polar(0.25 * gw[i] * gw[j], -wx * tx - wy * ty);
        }
    }
    // the integrand has a kink on tx = ty, so plain tensor quadrature is only a few digits accurate
    assert!((closed - acc).norm() < 2e-3 * closed.norm().max(1e-3), "{closed} vs {acc}");
}

fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                let (mut q0, mut q1) = (1.0, z);
                for k in 2..=n {
                    let q2 = ((2 * k - 1) as f64 * z * q1 - (k - 1) as f64 * q0) / k as f64;
                    q0 = q1;
                    q1 = q2;
                }
                let dq = n as f64 * (z * q1 - q0) / (z * z - 1.0);
                x[i] = z;
                w[i] = 2.0 / ((1.0 - z * z) * dq * dq);
                break;
            }
        }
    }
    (x, w)
}

#[test]
fn wick_rotation_first_order() {
    for lambda in [0.0, 0.25] {
        let ens = build_ensemble(&chain(2.0, lambda), 4, 4.0).unwrap();
        let o = ens.density(0);
        let p = ens.density(1);
        for eta in [PI / 2.0, PI] {
            for t in [0.0, -0.7] {
                let r = ens.wick_rotation_check(1, &o, &p, eta, t).unwrap();
                assert!(r.residual < 1e-9, "{r:?}");
            }
        }
    }
}

#[test]
fn wick_rotation_second_order() {
    let ens = build_ensemble(&chain(1.7, 0.2), 3, 4.0).unwrap();
    let o = ens.current(1, 0);
    let p = ens.density(1);
    let r = ens.wick_rotation_check(2, &o, &p, PI / 2.0, -0.3).unwrap();
    assert!(r.residual < 1e-7, "{r:?}");
    assert!(r.lhs[0].abs() + r.lhs[1].abs() > 1e-6);
}

#[test]
fn wick_rotation_rejects_non_matsubara_rate() {
    let ens = build_ensemble(&chain(2.0, 0.0), 3, 4.0).unwrap();
    let o = ens.density(0);
    assert!(matches!(ens.wick_rotation_check(1, &o, &o, 1.0, 0.0), Err(EdError::EtaNotMatsubara(_))));
}

#[test]
fn continuity_holds() {
    for lambda in [0.0, 0.5] {
        let ens = build_ensemble(&chain(1.0, lambda), 5, 1.0).unwrap();
        for x in 0..5 {
            assert!(ens.continuity_check(x).residual < 1e-12);
        }
        let mut total = ens.hamiltonian.commutator(&ens.density(0));
        for x in 1..5 {
            total = &total + &ens.hamiltonian.commutator(&ens.density(x));
        }
        assert!(total.max_abs() < 1e-12);
    }
    let ens = build_ensemble(&two_band_model(0.3), 3, 1.0).unwrap();
    for x in 0..3 {
        assert!(ens.continuity_check(x).residual < 1e-12);
    }
}

#[test]
fn ward_identity_at_zero_momentum() {
    for lambda in [0.0, 0.3] {
        let ens = build_ensemble(&chain(1.5, lambda), 4, 2.0).unwrap();
        for nu in 0..2 {
            let r = ens.ward_p0_check(2.0 * PI / 2.0, nu).unwrap();
            assert!(r.residual < 1e-9, "{r:?}");
        }
    }
}

#[test]
fn agrees_with_free_theory() {
    let beta = 2.0;
    let l = 6;
    let ens = build_ensemble(&chain(1.2, 0.0), l, beta).unwrap();
    let ft = FreeTheory::new(BlochHamiltonian::laplacian(1.0), 1.2, beta, l).unwrap();
    let w = 2.0 * PI / beta;
    let q = 2.0 * PI / l as f64;
    for nu in 0..2 {
        for &(n, j) in &[(0, 1), (1, 1), (-1, 2), (2, 3)] {
            let p0 = w * n as f64;
            let p1 = q * j as f64;
            let a = ens.density_current_two_point(p0, p1, nu).unwrap();
            let b = ft.density_current_bubble(p0, p1, nu).unwrap();
            assert!((a - b).norm() < 1e-7, "2pt nu={nu} ({n},{j}): {a} vs {b}");
        }
        let p1 = (w, q);
        let p2 = (w, 2.0 * q);
        let a = ens.three_point(p1, p2, nu).unwrap();
        let b = ft.loop_sum_exact(&[p1, p2], nu).unwrap().value;
        assert!((a - b).norm() < 1e-7, "3pt nu={nu}: {a} vs {b}");
    }
}

#[test]
fn agrees_with_free_theory_two_bands() {
    let m = LatticeModel { lambda: 0.0, ..two_band_model(0.0) };
    let ens = build_ensemble(&m, 3, 1.5).unwrap();
    let ft = FreeTheory::new(m.hamiltonian.clone(), m.mu, 1.5, 3).unwrap();
    let w = 2.0 * PI / 1.5;
    let q = 2.0 * PI / 3.0;
    for nu in 0..2 {
        let a = ens.density_current_two_point(w, q, nu).unwrap();
        let b = ft.density_current_bubble(w, q, nu).unwrap();
        assert!((a - b).norm() < 1e-7, "{a} vs {b}");
        let a = ens.three_point((w, q), (-2.0 * w, q), nu).unwrap();
        let b = ft.loop_sum_exact(&[(w, q), (-2.0 * w, q)], nu).unwrap().value;
        assert!((a - b).norm() < 1e-7, "{a} vs {b}");
    }
}

#[test]
fn chemical_potential_gauge() {
    let shift = 0.37;
    let base = chain(1.1, 0.3);
    let mut moved = base.clone();
    let mut blocks = vec![moved.hamiltonian.block(0), moved.hamiltonian.block(1)];
    blocks[0][(0, 0)] += shift;
    moved.hamiltonian = BlochHamiltonian::new(blocks).unwrap();
    moved.mu += shift;
    let a = build_ensemble(&base, 4, 1.5).unwrap();
    let b = build_ensemble(&moved, 4, 1.5).unwrap();
    let (oa, pa) = (a.current(1, 0), a.density(2));
    let (ob, pb) = (b.current(1, 0), b.density(2));
    let ca = a.euclidean_cumulant(&[Timed { op: &oa, t: 0.9 }, Timed { op: &pa, t: 0.1 }]).unwrap();
    let cb = b.euclidean_cumulant(&[Timed { op: &ob, t: 0.9 }, Timed { op: &pb, t: 0.1 }]).unwrap();
    assert!((ca - cb).norm() < 1e-12);
}

#[test]
fn dynamics_zero_drive() {
    let ens = build_ensemble(&chain(1.0, 0.2), 4, 2.0).unwrap();
    let prof = vec![0.1, 0.3, 0.2, 0.0];
    let r = full_response_small(&ens, 0.5, 0.0, &prof, 0, &DynamicsOptions::default()).unwrap();
    assert!(r.iter().all(|&v| v == 0.0));
}

#[test]
fn dynamics_approaches_first_order_duhamel_term() {
    let ens = build_ensemble(&chain(1.4, 0.3), 4, 2.0).unwrap();
    let prof = vec![0.2, 0.5, -0.1, 0.3];
    let eta = 0.5;
    let mut devs = Vec::new();
    for theta in [0.02, 0.01] {
        let full = full_response_small(&ens, eta, theta, &prof, 1, &DynamicsOptions::default()).unwrap();
        let v: Vec<f64> = prof.iter().map(|m| theta * m).collect();
        let p = ens.site_potential(&v);
        let mut worst = 0.0f64;
        for (x, f) in full.iter().enumerate() {
            let lin = (-I * ens.duhamel_first(&ens.current(1, x), &p, eta)).re / theta;
            worst = worst.max((f - lin).abs());
        }
        devs.push(worst);
    }
    // remainder is second order in θ, so it halves with θ
    let ratio = devs[0] / devs[1];
    assert!(ratio > 1.7 && ratio < 2.3, "{devs:?}");
}

#[test]
fn total_charge_response_vanishes() {
    let ens = build_ensemble(&chain(1.0, 0.3), 4, 2.0).unwrap();
    let prof = vec![0.2, 0.5, -0.1, 0.3];
    let r = full_response_small(&ens, 0.7, 0.1, &prof, 0, &DynamicsOptions::default()).unwrap();
    assert!(r.iter().sum::<f64>().abs() < 1e-9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn kms_holds_for_random_times(t in 0.0f64..3.0, s in 0.0f64..3.0, seed in 0u64..1000) {
        let ens = build_ensemble(&chain(0.6, 0.3), 4, 3.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_local(&ens, &mut rng);
        let b = random_local(&ens, &mut rng);
        prop_assert!(ens.kms_check(&a, &b, t, s).residual < 1e-9);
    }

    #[test]
    fn cumulant_periodic_in_each_time(t1 in 0.05f64..1.9, t2 in 0.05f64..1.9, t3 in 0.05f64..1.9) {
        prop_assume!((t1 - t2).abs() > 1e-3 && (t2 - t3).abs() > 1e-3 && (t1 - t3).abs() > 1e-3);
        let ens = build_ensemble(&chain(0.9, 0.2), 3, 2.0).unwrap();
        let (a, b, cc) = (ens.density(0), ens.current(1, 1), ens.density(2));
        let base = ens.euclidean_cumulant(&[Timed { op: &a, t: t1 }, Timed { op: &b, t: t2 }, Timed { op: &cc, t: t3 }]).unwrap();
        let moved = ens.euclidean_cumulant(&[Timed { op: &a, t: t1 + 2.0 }, Timed { op: &b, t: t2 - 2.0 }, Timed { op: &cc, t: t3 }]).unwrap();
        prop_assert!((base - moved).norm() < 1e-11);
    }
}
