use ndarray::Array2;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::hgraph::spanning_edges;
use crate::sim::{ContainerId, PmId, VmId};

fn random_graph(rng: &mut ChaCha8Rng) -> HierGraph {
    let p = rng.random_range(1..4);
    let v = rng.random_range(1..6);
    let c = rng.random_range(1..12);
    let vm_host: Vec<usize> = (0..v).map(|_| rng.random_range(0..p)).collect();
    let con_host: Vec<usize> = (0..c).map(|_| rng.random_range(0..v)).collect();
    let mut con_edges = Vec::new();
    for a in 0..c {
        for b in a + 1..c {
            if rng.random_bool(0.3) {
                con_edges.push((a, b));
            }
        }
    }
    let vm_edges = spanning_edges(&con_edges, &con_host);
    let pm_edges = spanning_edges(&vm_edges, &vm_host);
    let mut feats = |n, f| Array2::from_shape_fn((n, f), |_| rng.random::<f64>());
    HierGraph {
        pm_ids: (0..p as u32).map(PmId).collect(),
        vm_ids: (0..v as u32).map(VmId).collect(),
        con_ids: (0..c as u32).map(ContainerId).collect(),
        h_pm: feats(p, PM_FEATURES),
        h_vm: feats(v, VM_FEATURES),
        h_con: feats(c, CON_FEATURES),
        vm_host,
        con_host,
        pm_edges,
        vm_edges,
        con_edges,
    }
}

fn model(ablation: LayerAblation, seed: u64) -> Model {
    let cfg = ModelConfig {
        ablation,
        ..ModelConfig::default()
    };
    Model::new(&init_params(&cfg, seed)).unwrap()
}

/// Straight transcription of the attention and update rules with plain
/// loops.
fn gat_oracle(w: &[Vec<f64>], a: &[f64], h: &[Vec<f64>], nb: &[Vec<usize>]) -> Vec<Vec<f64>> {
    let fo = w.len();
    let wh: Vec<Vec<f64>> = h
        .iter()
        .map(|x| {
            w.iter()
                .map(|row| row.iter().zip(x).map(|(p, q)| p * q).sum())
                .collect()
        })
        .collect();
    let mut out = Vec::new();
    for i in 0..h.len() {
        let mut e = Vec::new();
        for &j in &nb[i] {
            let mut s = 0.0;
            for k in 0..fo {
                s += a[k] * wh[i][k] + a[fo + k] * wh[j][k];
            }
            e.push(if s > 0.0 { s } else { 0.2 * s });
        }
        let z: f64 = e.iter().map(|x| x.exp()).sum();
        let mut row = vec![0.0; fo];
        for (t, &j) in nb[i].iter().enumerate() {
            let alpha = e[t].exp() / z;
            for k in 0..fo {
                row[k] += alpha * wh[j][k];
            }
        }
        out.push(row.into_iter().map(|x| 1.0 / (1.0 + (-x).exp())).collect());
    }
    out
}

#[test]
fn gat_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let g = random_graph(&mut rng);
        let (fi, fo) = (CON_FEATURES, 5);
        let layer = GatLayer {
            w: Array2::from_shape_fn((fo, fi), |_| rng.random_range(-1.0..1.0)),
            a: Array1::from_shape_fn(2 * fo, |_| rng.random_range(-1.0..1.0)),
        };
        let nb = g.con_neighbors();
        let got = gat_layer_forward(&layer, g.h_con.view(), &nb).unwrap();
        let w: Vec<Vec<f64>> = layer.w.rows().into_iter().map(|r| r.to_vec()).collect();
        let h: Vec<Vec<f64>> = g.h_con.rows().into_iter().map(|r| r.to_vec()).collect();
        let want = gat_oracle(&w, &layer.a.to_vec(), &h, &nb);
        for (r, row) in want.iter().enumerate() {
            for (k, x) in row.iter().enumerate() {
                assert!((got[[r, k]] - x).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn attention_rows_sum_to_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let m = model(LayerAblation::None, 2);
    for _ in 0..50 {
        let g = random_graph(&mut rng);
        let nb = g.con_neighbors();
        let layer = &m.chgnn.gat_c[1];
        let h = Array2::from_shape_fn((g.con_ids.len(), 64), |_| rng.random::<f64>());
        for i in 0..nb.len() {
            let a = attention_coefficients(layer, h.view(), &nb, i).unwrap();
            assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}

#[test]
fn parameter_count_and_layout() {
    let p = init_params(&ModelConfig::default(), 1);
    assert_eq!(p.len(), 42_946);
    let names: Vec<&str> = p.layout().iter().map(|l| l.name.as_str()).collect();
    assert_eq!(&names[..3], &["gat_p.w", "gat_p.a", "gat_v.w"]);
    assert_eq!(p.layout()[2].shape, vec![64, 69]);

    let pv = layout(&ModelConfig {
        ablation: LayerAblation::PmVm,
        ..ModelConfig::default()
    });
    assert_eq!(pv[0].name, "gat_c1.w");
    assert_eq!(pv[0].shape, vec![64, 6]);
    let pm = layout(&ModelConfig {
        ablation: LayerAblation::Pm,
        ..ModelConfig::default()
    });
    assert_eq!(pm[0].shape, vec![64, 5]);
}

#[test]
fn flatten_round_trip() {
    for ab in [LayerAblation::None, LayerAblation::Pm, LayerAblation::PmVm] {
        let cfg = ModelConfig {
            ablation: ab,
            ..ModelConfig::default()
        };
        let p = init_params(&cfg, 9);
        assert_eq!(Model::new(&p).unwrap().to_values(), p.values());
    }
}

#[test]
fn params_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.bin");
    let p = init_params(&ModelConfig::default(), 77);
    p.save(&path).unwrap();
    assert_eq!(ParamSet::load(&path).unwrap(), p);

    let mut bytes = std::fs::read(&path).unwrap();
    bytes.truncate(bytes.len() - 3);
    assert!(matches!(ParamSet::read_from(&bytes[..]), Err(Error::Params(_))));
    assert!(ParamSet::read_from(&b"{\"format\":\"x\"}\n"[..]).is_err());
}

#[test]
fn rejects_non_finite_params() {
    let p = init_params(&ModelConfig::default(), 1);
    let mut v = p.values().to_vec();
    v[10] = f64::NAN;
    assert!(Model::new(&p.with_values(v).unwrap()).is_err());
}

#[test]
fn embeddings_shape_and_range() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for ab in [LayerAblation::None, LayerAblation::Pm, LayerAblation::PmVm] {
        let m = model(ab, 4);
        for _ in 0..10 {
            let g = random_graph(&mut rng);
            let all = m.chgnn.forward_all(&g).unwrap();
            assert_eq!(all.con.dim(), (g.con_ids.len(), 64));
            assert_eq!(all.pm.is_some(), ab == LayerAblation::None);
            assert_eq!(all.vm.is_some(), ab != LayerAblation::PmVm);
            assert!(all.con.iter().all(|x| x.abs() < 1.0));
        }
    }
}

#[test]
fn embeddings_are_equivariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let m = model(LayerAblation::None, 8);
    for _ in 0..20 {
        let g = random_graph(&mut rng);
        let mut perms: Vec<Vec<usize>> = [g.pm_ids.len(), g.vm_ids.len(), g.con_ids.len()]
            .iter()
            .map(|&n| (0..n).collect())
            .collect();
        for p in &mut perms {
            p.shuffle(&mut rng);
        }
        let h = g.relabel(&perms[0], &perms[1], &perms[2]).unwrap();
        let e = m.embed(&g).unwrap();
        let f = m.embed(&h).unwrap();
        for (new, &old) in perms[2].iter().enumerate() {
            for k in 0..64 {
                assert!((f[[new, k]] - e[[old, k]]).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn pm_change_stays_in_its_cone() {
    // Two PMs, one VM each, one container each, no interactions.
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut g = random_graph(&mut rng);
    g.pm_ids = vec![PmId(0), PmId(1)];
    g.vm_ids = vec![VmId(0), VmId(1)];
    g.con_ids = vec![ContainerId(0), ContainerId(1)];
    g.vm_host = vec![0, 1];
    g.con_host = vec![0, 1];
    g.pm_edges.clear();
    g.vm_edges.clear();
    g.con_edges.clear();
    g.h_pm = Array2::from_elem((2, PM_FEATURES), 0.5);
    g.h_vm = Array2::from_elem((2, VM_FEATURES), 0.5);
    g.h_con = Array2::from_elem((2, CON_FEATURES), 0.5);
    let m = model(LayerAblation::None, 3);
    let before = m.embed(&g).unwrap();
    g.h_pm[[0, 0]] = 0.9;
    let after = m.embed(&g).unwrap();
    assert_ne!(before.row(0), after.row(0));
    assert_eq!(before.row(1), after.row(1));
}

#[test]
fn act_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let m = model(LayerAblation::None, 6);
    let g = random_graph(&mut rng);
    let a = m.act(&g).unwrap();
    assert_eq!(a, m.act(&g).unwrap());
    assert!(a.ind < g.con_ids.len());
    assert!((-4..=4).contains(&a.scale));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn argmax_survives_monotone_maps(
        p in prop::collection::vec(-10.0f64..10.0, 1..20),
        q in prop::collection::vec(-10.0f64..10.0, 9),
        c in 0.01f64..100.0,
        k in -5.0f64..5.0,
    ) {
        let maps: [&dyn Fn(f64) -> f64; 3] = [&|x| c * x, &|x| x + k, &|x| x.powi(3)];
        let cand = scale_candidates(4);
        for f in maps {
            let fp: Vec<f64> = p.iter().map(|&x| f(x)).collect();
            let fq: Vec<f64> = q.iter().map(|&x| f(x)).collect();
            prop_assert_eq!(select_container(&p).unwrap(), select_container(&fp).unwrap());
            prop_assert_eq!(select_scale(&q, &cand).unwrap(), select_scale(&fq, &cand).unwrap());
        }
    }

    #[test]
    fn actions_stay_in_domain(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_graph(&mut rng);
        let a = model(LayerAblation::None, seed).act(&g).unwrap();
        prop_assert!(a.ind < g.con_ids.len());
        prop_assert!((-4..=4).contains(&a.scale));
    }
}
