use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sparse_ce::band::{
    band_pv, band_pv_backward, band_pv_with, band_qk, band_qk_backward, band_qk_with, band_to_dense, dense_band_oracle,
    BandMatrix,
};
use sparse_ce::{DenseMatrix, KernelPath};

fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DenseMatrix<f64> {
    DenseMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

/// Dense product of a band (expanded with zeros) with V, by plain loops.
fn expanded_pv(p: &BandMatrix<f64>, v: &DenseMatrix<f64>) -> DenseMatrix<f64> {
    let dense = band_to_dense(p, v.rows(), 0.0);
    DenseMatrix::from_fn(dense.rows(), v.cols(), |i, l| (0..v.rows()).map(|t| dense.get(i, t) * v.get(t, l)).sum())
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

#[test]
fn qk_matches_oracle_on_random_8x4() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let q = random(8, 4, &mut rng);
    let k = random(8, 4, &mut rng);
    let band = band_qk(q.view(), k.view(), 2).unwrap();
    let oracle = dense_band_oracle(q.view(), k.view(), 2).unwrap();
    for i in 0..8 {
        for j in 0..5 {
            match band.target(i, j) {
                Some(t) => assert_eq!(Some(band.get(i, j)), oracle.get(i, t).value()),
                None => assert_eq!(band.get(i, j), 0.0),
            }
        }
    }
}

#[test]
fn pv_matches_expanded_product() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let p = BandMatrix::from_fn(10, 10, 3, |_, _| rng.random_range(0.0..1.0)).unwrap();
    let v = random(10, 5, &mut rng);
    let expect = expanded_pv(&p, &v);
    for path in [KernelPath::Naive, KernelPath::Tiled] {
        assert!(band_pv_with(&p, v.view(), path).unwrap().max_abs_diff(&expect) < 1e-14);
    }
}

#[test]
fn qk_backward_matches_central_differences() {
    // L = Σ a_ij², so ∂L/∂A = 2A
    let (s, h, w) = (6, 3, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let q = random(s, h, &mut rng);
    let k = random(s, h, &mut rng);
    let loss = |q: &DenseMatrix<f64>, k: &DenseMatrix<f64>| -> f64 {
        band_qk(q.view(), k.view(), w).unwrap().as_slice().iter().map(|a| a * a).sum()
    };
    let mut grad_a = band_qk(q.view(), k.view(), w).unwrap();
    grad_a.map_valid(|a| 2.0 * a);
    let (gq, gk) = band_qk_backward(&grad_a, q.view(), k.view()).unwrap();
    let eps = 1e-5;
    for which in 0..2 {
        for i in 0..s {
            for l in 0..h {
                let (mut plus_q, mut plus_k) = (q.clone(), k.clone());
                let (mut minus_q, mut minus_k) = (q.clone(), k.clone());
                let (pp, mm) = if which == 0 { (&mut plus_q, &mut minus_q) } else { (&mut plus_k, &mut minus_k) };
                pp.set(i, l, pp.get(i, l) + eps);
                mm.set(i, l, mm.get(i, l) - eps);
                let fd = (loss(&plus_q, &plus_k) - loss(&minus_q, &minus_k)) / (2.0 * eps);
                let analytic = if which == 0 { gq.get(i, l) } else { gk.get(i, l) };
                assert!(rel_err(fd, analytic) < 1e-6, "which={which} i={i} l={l}: {fd} vs {analytic}");
            }
        }
    }
}

#[test]
fn pv_backward_matches_central_differences() {
    // L = Σ o², so ∂L/∂O = 2O
    let (s, h, w) = (7, 4, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let p = BandMatrix::from_fn(s, s, w, |_, _| rng.random_range(-1.0..1.0)).unwrap();
    let v = random(s, h, &mut rng);
    let loss = |p: &BandMatrix<f64>, v: &DenseMatrix<f64>| -> f64 {
        band_pv(p, v.view()).unwrap().as_slice().iter().map(|o| o * o).sum()
    };
    let mut grad_o = band_pv(&p, v.view()).unwrap();
    grad_o.scale(2.0);
    let (gp, gv) = band_pv_backward(grad_o.view(), &p, v.view()).unwrap();
    let eps = 1e-5;
    for i in 0..s {
        for j in 0..p.width() {
            if !p.is_valid(i, j) {
                assert_eq!(gp.get(i, j), 0.0);
                continue;
            }
            let (mut plus, mut minus) = (p.clone(), p.clone());
            plus.set(i, j, p.get(i, j) + eps);
            minus.set(i, j, p.get(i, j) - eps);
            let fd = (loss(&plus, &v) - loss(&minus, &v)) / (2.0 * eps);
            assert!(rel_err(fd, gp.get(i, j)) < 1e-6, "P[{i},{j}]: {fd} vs {}", gp.get(i, j));
        }
    }
    for t in 0..s {
        for l in 0..h {
            let (mut plus, mut minus) = (v.clone(), v.clone());
            plus.set(t, l, v.get(t, l) + eps);
            minus.set(t, l, v.get(t, l) - eps);
            let fd = (loss(&p, &plus) - loss(&p, &minus)) / (2.0 * eps);
            assert!(rel_err(fd, gv.get(t, l)) < 1e-6, "V[{t},{l}]: {fd} vs {}", gv.get(t, l));
        }
    }
}

#[test]
fn adjoint_identity_holds_for_directional_derivative() {
    // ⟨G, (A(Q+εD) − A(Q−εD)) / 2ε⟩ = ⟨∂Q, D⟩
    let (s, t, h, w) = (9, 6, 4, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let q = random(s, h, &mut rng);
    let k = random(t, h, &mut rng);
    let d = random(s, h, &mut rng);
    let g = BandMatrix::from_fn(s, t, w, |_, _| rng.random_range(-1.0..1.0)).unwrap();
    let (gq, _) = band_qk_backward(&g, q.view(), k.view()).unwrap();
    let eps = 1e-5;
    let shifted = |sign: f64| {
        let m = DenseMatrix::from_fn(s, h, |i, l| q.get(i, l) + sign * eps * d.get(i, l));
        band_qk(m.view(), k.view(), w).unwrap()
    };
    let (plus, minus) = (shifted(1.0), shifted(-1.0));
    let lhs: f64 = (0..g.as_slice().len())
        .map(|idx| g.as_slice()[idx] * (plus.as_slice()[idx] - minus.as_slice()[idx]) / (2.0 * eps))
        .sum();
    let rhs: f64 = gq.as_slice().iter().zip(d.as_slice()).map(|(a, b)| a * b).sum();
    assert!(rel_err(lhs, rhs) < 1e-8, "{lhs} vs {rhs}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn band_products_match_dense_oracle(
        s in 1usize..=16, t in 1usize..=16, w in 0usize..=8, h in 1usize..=8, seed in any::<u64>()
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = random(s, h, &mut rng);
        let k = random(t, h, &mut rng);
        let v = random(t, h, &mut rng);
        let oracle = dense_band_oracle(q.view(), k.view(), w).unwrap();
        for path in [KernelPath::Naive, KernelPath::Tiled] {
            let band = band_qk_with(q.view(), k.view(), w, path).unwrap();
            let dense = band_to_dense(&band, t, 0.0);
            let expect = oracle.fill_masked(0.0);
            for i in 0..s {
                for c in 0..t {
                    prop_assert!(rel_err(dense.get(i, c), expect.get(i, c)) <= 1e-12 || dense.get(i, c) == expect.get(i, c));
                }
            }
            let out = band_pv_with(&band, v.view(), path).unwrap();
            let reference = expanded_pv(&band, &v);
            for i in 0..s {
                for l in 0..h {
                    let (a, b) = (out.get(i, l), reference.get(i, l));
                    prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn window_monotonicity(s in 1usize..=12, w1 in 0usize..=4, extra in 0usize..=4, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = random(s, 3, &mut rng);
        let k = random(s, 3, &mut rng);
        let wide = band_qk(q.view(), k.view(), w1 + extra).unwrap();
        let narrow = band_qk(q.view(), k.view(), w1).unwrap();
        prop_assert_eq!(wide.restrict(w1).unwrap(), narrow);
    }

    #[test]
    fn storage_is_exactly_rows_by_width(s in 0usize..=64, t in 0usize..=64, w in 0usize..=16) {
        let band = BandMatrix::<f32>::zeros(s, t, w).unwrap();
        prop_assert_eq!(band.slots(), s * (2 * w + 1));
        prop_assert_eq!(band.as_slice().len(), band.validity().len());
    }
}
