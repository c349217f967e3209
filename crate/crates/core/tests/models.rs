use std::collections::{HashMap, HashSet};

use proptest::prelude::*;
use recsmith::data::InteractionLog;
use recsmith::models::*;
use recsmith::rng::SplitMix64;

fn interactions(rows: &[(u32, u32, f64)], n_queries: usize, n_items: usize) -> Interactions {
    let log: InteractionLog<u32> = rows.iter().map(|&(q, i, r)| (q, i, 0i64, r)).collect();
    Interactions::new(log, n_queries, n_items).unwrap()
}

fn random_rows(rng: &mut SplitMix64, users: u32, items: u32, density: f64) -> Vec<(u32, u32, f64)> {
    let mut rows = Vec::new();
    for u in 0..users {
        for i in 0..items {
            if rng.next_f64() < density {
                rows.push((u, i, 1.0));
            }
        }
    }
    rows
}

fn dense(rows: &[(u32, u32, f64)], users: usize, items: usize) -> Vec<Vec<f64>> {
    let mut a = vec![vec![0.0; items]; users];
    for &(u, i, r) in rows {
        if r > 0.0 {
            a[u as usize][i as usize] = 1.0;
        }
    }
    a
}

fn all_models() -> Vec<Model> {
    ModelConfig::NAMES.iter().map(|n| ModelConfig::from_name(n).unwrap().build()).collect()
}

#[test]
fn poprec_counts_distinct_users() {
    let d = interactions(&[(0, 0, 1.0), (0, 0, 1.0), (1, 0, 1.0), (2, 1, 1.0), (3, 2, 1.0)], 4, 3);
    let mut m = PopRec::default();
    m.fit(&d).unwrap();
    assert_eq!(m.item_scores().unwrap(), &[0.5, 0.25, 0.25]);
    let mut raw = PopRec::new(PopRecParams { use_interaction_count: true });
    raw.fit(&d).unwrap();
    assert!(raw.item_scores().unwrap()[0] > m.item_scores().unwrap()[0]);
}

#[test]
fn poprec_order_matches_sort_oracle() {
    let mut rng = SplitMix64::new(3);
    let rows = random_rows(&mut rng, 40, 25, 0.2);
    let d = interactions(&rows, 40, 25);
    let mut m = PopRec::default();
    m.fit(&d).unwrap();
    let mut users: Vec<HashSet<u32>> = vec![HashSet::new(); 25];
    for &(u, i, _) in &rows {
        users[i as usize].insert(u);
    }
    let mut oracle: Vec<u32> = (0..25).collect();
    oracle.sort_by(|a, b| users[*b as usize].len().cmp(&users[*a as usize].len()).then(a.cmp(b)));
    let got: Vec<u32> = m.predict(&[99], 25, false).unwrap().lists()[0].item_ids().copied().collect();
    assert_eq!(got, oracle);
}

#[test]
fn query_poprec_normalises_per_query() {
    let d = interactions(&[(0, 0, 1.0), (0, 0, 1.0), (0, 1, 1.0), (1, 2, 1.0)], 2, 3);
    let mut m = QueryPopRec::default();
    m.fit(&d).unwrap();
    let recs = m.predict(&[0, 1], 5, false).unwrap();
    let q0: Vec<(u32, f64)> = recs.lists()[0].items.iter().map(|s| (s.item, s.score)).collect();
    assert_eq!(q0, vec![(0, 2.0 / 3.0), (1, 1.0 / 3.0)]);
    assert_eq!(recs.lists()[1].items[0].score, 1.0);
    assert!(m.predict(&[0, 1], 5, true).unwrap().lists().iter().all(|l| l.items.is_empty()));
}

#[test]
fn wilson_rejects_non_binary_ratings() {
    let d = interactions(&[(0, 0, 1.0), (1, 0, 4.0)], 2, 1);
    let err = Wilson::default().fit(&d).unwrap_err();
    assert_eq!(err.code(), "NonBinaryRatings");
}

#[test]
fn score_function_properties() {
    for n in 1..40u64 {
        for p in 0..=n {
            let phat = p as f64 / n as f64;
            assert!(wilson_lower_bound(p, n, 1.96) <= phat + 1e-15);
            assert!((wilson_lower_bound(p, n, 1e-9) - phat).abs() < 1e-6);
            // monotone in trials at fixed p̂
            let (p2, n2) = (2 * p, 2 * n);
            assert!(ucb_score(p2, n2, 200.0, 2.0) <= ucb_score(p, n, 200.0, 2.0) + 1e-12);
            assert!(klucb_score(p2, n2, 200.0) <= klucb_score(p, n, 200.0) + 1e-6);
            assert!(ucb_score(p, n, 200.0, 4.0) > ucb_score(p, n, 200.0, 2.0));
        }
    }
}

#[test]
fn klucb_bisection_certificate() {
    let mut rng = SplitMix64::new(11);
    for _ in 0..500 {
        let n = 1 + rng.below(50);
        let p = rng.below(n + 1);
        let t = (n as f64) + rng.next_f64() * 1000.0;
        let q = klucb_score(p, n, t);
        let phat = p as f64 / n as f64;
        let budget = t.ln();
        if p == n {
            assert_eq!(q, 1.0);
            continue;
        }
        assert!(n as f64 * bernoulli_kl(phat, q) <= budget + 1e-9, "n={n} p={p} t={t}");
        if q + 2e-6 < 1.0 {
            assert!(n as f64 * bernoulli_kl(phat, q + 2e-6) > budget, "n={n} p={p} t={t} q={q}");
        }
    }
}

#[test]
fn thompson_is_seeded() {
    let mut a = SplitMix64::new(4);
    let mut b = SplitMix64::new(4);
    for _ in 0..100 {
        assert_eq!(thompson_sample(3, 7, &mut a).to_bits(), thompson_sample(3, 7, &mut b).to_bits());
    }
    let mut rng = SplitMix64::new(5);
    for _ in 0..100 {
        assert!(thompson_sample(1000, 0, &mut rng) > 0.9);
    }
    let d = interactions(&[(0, 0, 1.0), (1, 1, 0.0), (2, 2, 1.0)], 3, 4);
    let mut m = ThompsonSampling::new(ThompsonParams { seed: 9 });
    m.fit(&d).unwrap();
    assert_eq!(m.predict(&[0, 1, 2], 4, false).unwrap(), m.predict(&[0, 1, 2], 4, false).unwrap());
}

fn cosine_oracle(a: &[Vec<f64>], shrink: f64) -> Vec<Vec<f64>> {
    let items = a[0].len();
    let col = |i: usize| a.iter().map(|r| r[i]).collect::<Vec<f64>>();
    let mut s = vec![vec![0.0; items]; items];
    for i in 0..items {
        for j in 0..items {
            if i == j {
                continue;
            }
            let (ci, cj) = (col(i), col(j));
            let dot: f64 = ci.iter().zip(&cj).map(|(x, y)| x * y).sum();
            let ni = ci.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nj = cj.iter().map(|x| x * x).sum::<f64>().sqrt();
            if dot != 0.0 {
                s[i][j] = dot / (ni * nj + shrink);
            }
        }
    }
    s
}

#[test]
fn knn_matches_dense_cosine_oracle() {
    let mut rng = SplitMix64::new(7);
    for round in 0..5 {
        let rows = random_rows(&mut rng, 25, 30, 0.15);
        let d = interactions(&rows, 25, 30);
        let shrink = round as f64 * 0.5;
        let oracle = cosine_oracle(&dense(&rows, 25, 30), shrink);
        let matrix = SparseInteractionMatrix::from_interactions(&d, ValueMode::Binary);
        let sims = cosine_similarity_rows(&matrix, shrink);
        for i in 0..30 {
            let got: HashMap<u32, f64> = sims[i].iter().copied().collect();
            for j in 0..30 {
                let want = oracle[i][j];
                let have = got.get(&(j as u32)).copied().unwrap_or(0.0);
                assert!((want - have).abs() < 1e-12, "sim({i},{j}) {have} vs {want}");
                let back: f64 = sims[j].iter().find(|(x, _)| *x == i as u32).map_or(0.0, |p| p.1);
                assert!((have - back).abs() < 1e-12, "asymmetric");
            }
        }
        // truncated lists are the top of the oracle row
        let m_neighbors = 4;
        let mut model = ItemKnn::new(ItemKnnParams { num_neighbors: m_neighbors, shrink, use_ratings: false });
        model.fit(&d).unwrap();
        for i in 0..30u32 {
            let mut row: Vec<(u32, f64)> = (0..30u32)
                .filter(|&j| oracle[i as usize][j as usize] != 0.0)
                .map(|j| (j, oracle[i as usize][j as usize]))
                .collect();
            row.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            row.truncate(m_neighbors);
            let got = model.neighbors(i).unwrap();
            assert_eq!(got.len(), row.len());
            for (g, w) in got.iter().zip(&row) {
                assert!((g.1 - w.1).abs() < 1e-12);
            }
        }
        // scores are the brute-force sum over history
        let recs = model.predict(&(0..25).collect::<Vec<_>>(), 30, false).unwrap();
        let a = dense(&rows, 25, 30);
        for list in recs.lists() {
            let q = list.query as usize;
            for s in &list.items {
                let want: f64 = (0..30u32)
                    .filter(|&j| a[q][j as usize] > 0.0)
                    .filter_map(|j| model.neighbors(j).unwrap().iter().find(|(x, _)| *x == s.item).map(|p| p.1))
                    .sum();
                assert!((s.score - want).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn shrink_never_increases_similarity() {
    let mut rng = SplitMix64::new(8);
    let rows = random_rows(&mut rng, 20, 12, 0.3);
    let d = interactions(&rows, 20, 12);
    let m = SparseInteractionMatrix::from_interactions(&d, ValueMode::Binary);
    let mut prev = cosine_similarity_rows(&m, 0.0);
    for shrink in [0.1, 1.0, 5.0, 50.0] {
        let next = cosine_similarity_rows(&m, shrink);
        for (p, n) in prev.iter().zip(&next) {
            for ((pi, pv), (ni, nv)) in p.iter().zip(n) {
                assert_eq!(pi, ni);
                assert!(nv <= pv);
            }
        }
        prev = next;
    }
}

#[test]
fn slim_one_variable_closed_form() {
    // two identical columns of three ones, l1=0, l2=1 → w = 3/4
    let d = interactions(&[(0, 0, 1.0), (1, 0, 1.0), (2, 0, 1.0), (0, 1, 1.0), (1, 1, 1.0), (2, 1, 1.0)], 3, 2);
    let mut m = Slim::new(SlimParams { l1: 0.0, l2: 1.0, max_iters: 100, tol: 1e-12, ..Default::default() });
    m.fit(&d).unwrap();
    assert!((m.weight(0, 1).unwrap() - 0.75).abs() < 1e-12);
    assert!((m.weight(1, 0).unwrap() - 0.75).abs() < 1e-12);
    assert_eq!(m.weight(0, 0), Some(0.0));
}

#[test]
fn slim_small_kkt() {
    let mut rng = SplitMix64::new(12);
    let rows = random_rows(&mut rng, 8, 6, 0.5);
    let d = interactions(&rows, 8, 6);
    let params = SlimParams { l1: 0.1, l2: 0.5, max_iters: 10_000, tol: 1e-14, ..Default::default() };
    let a = dense(&rows, 8, 6);
    let gram = Gram::from_matrix(&SparseInteractionMatrix::from_interactions(&d, ValueMode::Binary));
    for t in 0..6 {
        let (w, _) = SlimColumnSolver::new(&gram, params).solve(t, |_, _| {});
        let m = SparseInteractionMatrix::from_interactions(&d, ValueMode::Binary);
        let base = slim_objective(&m, t, &w, params.l1, params.l2);
        // no feasible single-coordinate perturbation lowers the objective
        for j in (0..6).filter(|&j| j != t) {
            for step in [1e-4, -1e-4] {
                let mut v = w.clone();
                v[j] = (v[j] + step).max(0.0);
                assert!(slim_objective(&m, t, &v, params.l1, params.l2) >= base - 1e-12);
            }
        }
        let resid: Vec<f64> = a.iter().map(|r| r[t] - (0..6).map(|j| r[j] * w[j]).sum::<f64>()).collect();
        for j in (0..6).filter(|&j| j != t) {
            let g = -(0..8).map(|u| a[u][j] * resid[u]).sum::<f64>() + params.l2 * w[j] + params.l1;
            if w[j] > 0.0 {
                assert!(g.abs() < 1e-6);
            } else {
                assert!(g > -1e-6);
            }
        }
    }
}

#[test]
fn als_single_cell_dominates() {
    let d = interactions(&[(1, 2, 1.0)], 3, 4);
    let mut m = Als::new(AlsParams { rank: 1, iterations: 5, ..Default::default() });
    m.fit(&d).unwrap();
    let f = m.factors().unwrap();
    let target = f.score(1, 2);
    for u in 0..3 {
        for i in 0..4 {
            if (u, i) != (1, 2) {
                assert!(target > f.score(u, i));
            }
        }
    }
}

fn als_objective_oracle(a: &[Vec<f64>], f: &FactorModel, alpha: f64, lambda: f64) -> f64 {
    let mut loss = 0.0;
    for (u, row) in a.iter().enumerate() {
        for (i, &v) in row.iter().enumerate() {
            let p = if v > 0.0 { 1.0 } else { 0.0 };
            let c = 1.0 + alpha * v;
            let e = p - f.score(u, i);
            loss += c * e * e;
        }
    }
    let reg: f64 = f.user_factors.iter().chain(&f.item_factors).map(|x| x * x).sum();
    loss + lambda * reg
}

#[test]
fn als_objective_and_scores_match_dense_oracle() {
    let mut rng = SplitMix64::new(13);
    let rows = random_rows(&mut rng, 20, 15, 0.25);
    let d = interactions(&rows, 20, 15);
    let params = AlsParams { rank: 3, alpha: 3.0, lambda: 0.2, iterations: 6, seed: 1, use_ratings: false };
    let mut m = Als::new(params);
    m.fit(&d).unwrap();
    let f = m.factors().unwrap();
    let a = dense(&rows, 20, 15);
    let want = als_objective_oracle(&a, f, 3.0, 0.2);
    let matrix = SparseInteractionMatrix::from_interactions(&d, ValueMode::Binary);
    let got = als_objective(&matrix, f, 3.0, 0.2);
    assert!((want - got).abs() < 1e-9 * want.max(1.0), "{got} vs {want}");
    assert!((m.objective_trace().last().unwrap() - got).abs() < 1e-9 * got.max(1.0));
    // observed positives score higher than the average cell
    let mean_all: f64 =
        (0..20).flat_map(|u| (0..15).map(move |i| (u, i))).map(|(u, i)| f.score(u, i)).sum::<f64>() / 300.0;
    let mean_pos: f64 = rows.iter().map(|&(u, i, _)| f.score(u as usize, i as usize)).sum::<f64>() / rows.len() as f64;
    assert!(mean_pos > mean_all);
    // predictions are the dense product
    let recs = m.predict(&[0, 5], 15, false).unwrap();
    for list in recs.lists() {
        assert_eq!(list.items.len(), 15);
        for s in &list.items {
            let dot: f64 = (0..3).map(|r| f.user(list.query as usize)[r] * f.item(s.item as usize)[r]).sum();
            assert!((s.score - dot).abs() < 1e-12);
        }
    }
    let seen = a[0].iter().filter(|&&v| v > 0.0).count();
    assert_eq!(m.predict(&[0], 100, true).unwrap().lists()[0].items.len(), 15 - seen);
}

#[test]
fn association_rules_match_pair_counting() {
    let mut rng = SplitMix64::new(14);
    let rows = random_rows(&mut rng, 50, 12, 0.2);
    let d = interactions(&rows, 50, 12);
    let mut m = AssociationRules::new(AssociationRulesParams { min_pair_count: 2, metric: RuleMetric::Confidence });
    m.fit(&d).unwrap();
    let a = dense(&rows, 50, 12);
    let n_i = |i: usize| (0..50).filter(|&u| a[u][i] > 0.0).count() as f64;
    let n_ij = |i: usize, j: usize| (0..50).filter(|&u| a[u][i] > 0.0 && a[u][j] > 0.0).count();
    for i in 0..12 {
        let got: HashMap<u32, Rule> = m.rules(i as u32).unwrap().iter().map(|r| (r.consequent, *r)).collect();
        for j in (0..12).filter(|&j| j != i) {
            let c = n_ij(i, j);
            match got.get(&(j as u32)) {
                Some(r) => {
                    assert!(c >= 2);
                    assert_eq!(r.pair_count, c as u64);
                    assert!((r.confidence - c as f64 / n_i(i)).abs() < 1e-12);
                    assert!((r.lift - (c as f64 / n_i(i)) / (n_i(j) / 50.0)).abs() < 1e-12);
                }
                None => assert!(c < 2),
            }
        }
    }
    // predictions: max over history
    for metric in [RuleMetric::Confidence, RuleMetric::Lift] {
        let recs = m.predict_with_metric(&(0..50).collect::<Vec<_>>(), 12, metric, false).unwrap();
        for list in recs.lists() {
            let q = list.query as usize;
            for s in &list.items {
                let want = (0..12)
                    .filter(|&j| a[q][j] > 0.0)
                    .filter_map(|j| m.rules(j as u32).unwrap().iter().find(|r| r.consequent == s.item))
                    .map(|r| r.weight(metric))
                    .fold(f64::NEG_INFINITY, f64::max);
                assert_eq!(s.score, want);
            }
        }
    }
}

#[test]
fn predict_before_fit_fails_for_every_model() {
    for m in all_models() {
        assert_eq!(m.predict(&[0], 3, true).unwrap_err().code(), "UnfittedModel", "{}", m.name());
    }
}

#[test]
fn fit_on_empty_data_fails() {
    let empty = Interactions::new(InteractionLog::new(), 0, 0).unwrap();
    for mut m in all_models() {
        assert_eq!(m.fit(&empty).unwrap_err().code(), "EmptyDataset", "{}", m.name());
    }
}

fn check_lists(recs: &recsmith::data::RecommendationList<u32>, seen: &HashSet<(u32, u32)>, filter: bool, k: usize) {
    recs.check_invariants().unwrap();
    for list in recs.lists() {
        assert!(list.items.len() <= k);
        for w in list.items.windows(2) {
            assert!(w[0].score > w[1].score || (w[0].score == w[1].score && w[0].item < w[1].item));
        }
        if filter {
            assert!(list.items.iter().all(|s| !seen.contains(&(list.query, s.item))));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn predictions_respect_contract(
        rows in prop::collection::vec((0u32..12, 0u32..15, prop::sample::select(vec![0.0, 1.0])), 1..80),
        k in 1usize..8,
    ) {
        let d = interactions(&rows, 12, 15);
        let seen: HashSet<(u32, u32)> = rows.iter().map(|&(q, i, _)| (q, i)).collect();
        let queries: Vec<u32> = (0..14).collect();
        for mut m in all_models() {
            if m.fit(&d).is_err() {
                continue;
            }
            for filter in [true, false] {
                let recs = m.predict(&queries, k, filter).unwrap();
                prop_assert_eq!(recs.lists().len(), queries.len());
                check_lists(&recs, &seen, filter, k);
            }
        }
    }

    #[test]
    fn predictions_do_not_depend_on_thread_count(
        rows in prop::collection::vec((0u32..10, 0u32..10, Just(1.0)), 1..60),
    ) {
        let d = interactions(&rows, 10, 10);
        let queries: Vec<u32> = (0..10).collect();
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        for proto in all_models() {
            let run = |pool: &rayon::ThreadPool| {
                pool.install(|| {
                    let mut m = proto.clone();
                    m.fit(&d).unwrap();
                    m.predict(&queries, 5, true).unwrap()
                })
            };
            let (a, b) = (run(&one), run(&four));
            prop_assert_eq!(a, b);
        }
    }
}

#[test]
fn model_files_round_trip() {
    let mut rng = SplitMix64::new(15);
    let rows = random_rows(&mut rng, 15, 10, 0.3);
    let d = interactions(&rows, 15, 10);
    let dir = tempfile::tempdir().unwrap();
    for mut m in all_models() {
        m.fit(&d).unwrap();
        let path = dir.path().join(format!("{}.bin", m.name()));
        save_model(&path, &m, None).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..5], MODEL_MAGIC);
        let (back, _) = load_model(&path).unwrap();
        let q: Vec<u32> = (0..16).collect();
        assert_eq!(back.predict(&q, 4, true).unwrap(), m.predict(&q, 4, true).unwrap());
    }
    assert_eq!(load_model(dir.path().join("missing.bin")).unwrap_err().code(), "IoError");
}
