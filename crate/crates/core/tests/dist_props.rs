use coordgen::dist::{
    ck_entropy_bound, entropy, iid_extend, mutual_info, singleletter_tv_decomposition,
    tv_distance, JointPmf, Variable, CK_MAX_EPS,
};
use proptest::prelude::*;

fn weights(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, len).prop_filter("positive mass", |w| w.iter().sum::<f64>() > 1e-3)
}

fn three_binary(w: Vec<f64>) -> JointPmf {
    let vars = vec![Variable::binary("A"), Variable::binary("B"), Variable::binary("C")];
    JointPmf::from_weights(vars, w).unwrap()
}

proptest! {
    #[test]
    fn chain_rule(w in weights(8)) {
        let p = three_binary(w);
        let hab = entropy(&p, &["A", "B"], &[]).unwrap();
        let ha = entropy(&p, &["A"], &[]).unwrap();
        let hb_a = entropy(&p, &["B"], &["A"]).unwrap();
        prop_assert!((hab - ha - hb_a).abs() < 1e-10);
    }

    #[test]
    fn mutual_info_symmetric_nonnegative(w in weights(8)) {
        let p = three_binary(w);
        let ab = mutual_info(&p, &["A"], &["B"], &["C"]).unwrap();
        let ba = mutual_info(&p, &["B"], &["A"], &["C"]).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert!((ab - ba).abs() < 1e-10);
    }

    #[test]
    fn markov_by_construction(a in 0.01f64..0.99, b in 0.01f64..0.99, c in 0.01f64..0.99, d in 0.01f64..0.99, e in 0.01f64..0.99) {
        let pu_x = [a, b];
        let py_u = [c, d];
        let vars = vec![Variable::binary("X"), Variable::binary("U"), Variable::binary("Y")];
        let p = JointPmf::from_fn(vars, |s| {
            let px = if s[0] == 1 { e } else { 1.0 - e };
            let pu = if s[1] == 1 { pu_x[s[0]] } else { 1.0 - pu_x[s[0]] };
            let py = if s[2] == 1 { py_u[s[1]] } else { 1.0 - py_u[s[1]] };
            px * pu * py
        }).unwrap();
        prop_assert!(mutual_info(&p, &["X"], &["Y"], &["U"]).unwrap() < 1e-10);
    }

    #[test]
    fn tv_triangle(x in weights(6), y in weights(6), z in weights(6)) {
        let vars = vec![Variable::with_size("S", 6)];
        let p = JointPmf::from_weights(vars.clone(), x).unwrap();
        let q = JointPmf::from_weights(vars.clone(), y).unwrap();
        let r = JointPmf::from_weights(vars, z).unwrap();
        let pq = tv_distance(&p, &q).unwrap();
        prop_assert!(tv_distance(&p, &r).unwrap() <= pq + tv_distance(&q, &r).unwrap() + 1e-12);
        prop_assert!((pq - tv_distance(&q, &p).unwrap()).abs() < 1e-15);
        prop_assert!((0.0..=2.0 + 1e-12).contains(&pq));
    }

    #[test]
    fn extension_entropy_scales(w in weights(4), n in 1usize..5) {
        let p = JointPmf::from_weights(vec![Variable::binary("A"), Variable::binary("B")], w).unwrap();
        let h = entropy(&p, &["A", "B"], &[]).unwrap();
        let e = iid_extend(&p, n).unwrap();
        let names = e.names();
        prop_assert!((entropy(&e, &names, &[]).unwrap() - n as f64 * h).abs() < 1e-9);
    }

    #[test]
    fn ck_property(w in weights(4), shift in prop::collection::vec(-1.0f64..1.0, 4), scale in 0.0f64..0.25) {
        let vars = vec![Variable::with_size("S", 4)];
        let p = JointPmf::from_weights(vars.clone(), w).unwrap();
        // Move mass along a zero-sum direction, staying inside the simplex.
        let mean: f64 = shift.iter().sum::<f64>() / 4.0;
        let dir: Vec<f64> = shift.iter().map(|s| s - mean).collect();
        let mut t = 1.0f64;
        for (pi, di) in p.probs().iter().zip(&dir) {
            if *di < 0.0 {
                t = t.min(pi / -di);
            }
        }
        let probs: Vec<f64> = p.probs().iter().zip(&dir).map(|(pi, di)| (pi + t * scale * di).max(0.0)).collect();
        let q = JointPmf::from_weights(vars, probs).unwrap();
        let eps = tv_distance(&p, &q).unwrap();
        prop_assume!(eps <= CK_MAX_EPS);
        let dh = (entropy(&p, &["S"], &[]).unwrap() - entropy(&q, &["S"], &[]).unwrap()).abs();
        prop_assert!(dh <= ck_entropy_bound(eps, 4).unwrap() + 1e-12);
    }
}

fn letter() -> JointPmf {
    let vars = ["X1", "X2", "Y1", "Y2"].map(Variable::binary).to_vec();
    JointPmf::from_fn(vars, |a| {
        let pxx = if a[0] == a[1] { 0.35 } else { 0.15 };
        let py1 = if a[2] == a[0] { 0.9 } else { 0.1 };
        let py2 = if a[3] == a[1] { 0.6 } else { 0.4 };
        pxx * py1 * py2
    })
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    // Y given X is perturbed; the X marginal stays the i.i.d. source.
    #[test]
    fn decomposition_bounded_by_block_tv(n in 2usize..4, noise in prop::collection::vec(0.0f64..1.0, 4usize.pow(3) * 4)) {
        let q = letter();
        let qn = iid_extend(&q, n).unwrap();
        let probs = qn.probs();
        let mut out = probs.to_vec();
        // Within each x-sequence block of the position-major layout, reweight the y entries.
        let xs: Vec<usize> = (0..qn.vars().len()).filter(|i| qn.vars()[*i].name.starts_with('X')).collect();
        let map = {
            let sizes = qn.sizes();
            let mut m = Vec::with_capacity(qn.len());
            let mut odo = coordgen::dist::Odometer::new(&sizes);
            while let Some(a) = odo.current() {
                let key = xs.iter().fold(0usize, |k, &i| k * 2 + a[i]);
                let ykey = (0..a.len()).filter(|i| !xs.contains(i)).fold(0usize, |k, i| k * 2 + a[i]);
                m.push((key, ykey));
                odo.advance();
            }
            m
        };
        let xcount = 1usize << xs.len();
        let mut block_mass = vec![0.0; xcount];
        let mut new_mass = vec![0.0; xcount];
        for (k, &(x, y)) in map.iter().enumerate() {
            block_mass[x] += probs[k];
            out[k] = probs[k] * (0.5 + noise[(x * 7 + y) % noise.len()]);
            new_mass[x] += out[k];
        }
        for (k, &(x, _)) in map.iter().enumerate() {
            out[k] *= block_mass[x] / new_mass[x];
        }
        let p_hat = JointPmf::from_weights(qn.vars().to_vec(), out).unwrap();
        let d = singleletter_tv_decomposition(&p_hat, &q).unwrap();
        prop_assert!(d.average <= tv_distance(&p_hat, &qn).unwrap() + 1e-9);
    }
}
