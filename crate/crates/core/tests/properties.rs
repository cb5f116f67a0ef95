//! Randomized invariants over the numeric kernels.

use proptest::prelude::*;

use grlda::corpus::{preprocess, Corpus, Document, Vocabulary};
use grlda::eval::kl_divergence;
use grlda::graph::{WordGraph, WordGraphBuilder};
use grlda::lda::e_step_doc;
use grlda::math::{digamma, trigamma};
use grlda::wr::{loss_r, smooth_beta_step};

fn prob_vec(len: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(0.01f64..1.0, len).prop_map(|v| {
        let s: f64 = v.iter().sum();
        v.into_iter().map(|x| x / s).collect()
    })
}

fn beta_matrix(k: usize, v: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    proptest::collection::vec(prob_vec(v), k)
}

fn graph(v: usize) -> impl Strategy<Value = WordGraph> {
    proptest::collection::btree_set((0..v, 0..v), 0..2 * v).prop_map(move |set| {
        let mut b = WordGraphBuilder::new(v);
        for (i, j) in set {
            if i != j {
                b.add_edge(i, j, 1.0).unwrap();
            }
        }
        b.build()
    })
}

proptest! {
    #[test]
    fn graph_loss_is_nonnegative_and_scales_linearly(
        beta in beta_matrix(3, 8),
        g in graph(8),
        scale in 0.1f64..10.0,
    ) {
        let base = loss_r(&beta, &g).unwrap();
        prop_assert!(base >= 0.0);

        let mut b = WordGraphBuilder::new(8);
        for &(i, j, w) in g.edges() {
            b.add_edge(i, j, w * scale).unwrap();
        }
        let scaled = loss_r(&beta, &b.build()).unwrap();
        prop_assert!((scaled - scale * base).abs() <= 1e-12 * (1.0 + base));
    }

    #[test]
    fn identical_rows_have_zero_loss_on_uniform_topics(g in graph(8)) {
        // Every word equal within each topic row: no edge can contribute.
        let beta = vec![vec![1.0 / 8.0; 8]; 3];
        prop_assert_eq!(loss_r(&beta, &g).unwrap(), 0.0);
    }

    #[test]
    fn smoothing_preserves_distributions(
        beta in beta_matrix(3, 8),
        g in graph(8),
        rho in 0.0f64..=1.0,
    ) {
        let out = smooth_beta_step(&beta, &g, rho);
        for row in &out {
            let sum: f64 = row.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
            prop_assert!(row.iter().all(|&x| x >= 0.0));
        }
    }

    #[test]
    fn divergence_is_nonnegative_and_zero_on_self(p in prob_vec(6), q in prob_vec(6)) {
        let d = kl_divergence(&p, &q, 1e-12).unwrap();
        prop_assert!(d >= 0.0);
        prop_assert!(kl_divergence(&p, &p, 1e-12).unwrap().abs() < 1e-12);
    }

    #[test]
    fn digamma_and_trigamma_satisfy_recurrences(x in 0.01f64..100.0) {
        let dig = digamma(x + 1.0).unwrap() - digamma(x).unwrap();
        prop_assert!((dig - 1.0 / x).abs() <= 1e-9 * (1.0 + 1.0 / x));
        let tri = trigamma(x).unwrap() - trigamma(x + 1.0).unwrap();
        prop_assert!((tri - 1.0 / (x * x)).abs() <= 1e-9 * (1.0 + 1.0 / (x * x)));
    }

    #[test]
    fn posterior_parameter_balances_assignments(
        alpha in proptest::collection::vec(0.1f64..2.0, 3),
        beta in beta_matrix(3, 10),
        words in proptest::collection::btree_map(0usize..10, 1u32..5, 1..6),
    ) {
        let doc = Document {
            words: words.into_iter().collect(),
            label: None,
            pair: None,
        };
        let (gamma, phi) = e_step_doc(&doc, &alpha, &beta, 1e-8, 200).unwrap();
        // gamma_k = alpha_k + sum over words of count * phi_wk, by
        // construction of the update; check it holds at the fixed point.
        for k in 0..3 {
            let assigned: f64 = doc
                .words
                .iter()
                .zip(&phi)
                .map(|(&(_, c), row)| c as f64 * row[k])
                .sum();
            prop_assert!((gamma[k] - alpha[k] - assigned).abs() < 1e-9);
        }
    }

    #[test]
    fn preprocessing_is_idempotent(
        raw in proptest::collection::vec(
            proptest::collection::btree_map(0usize..12, 1u32..4, 1..5),
            3..10,
        ),
        min_count in 0u64..4,
    ) {
        let vocab = Vocabulary::from_tokens((0..12).map(|i| format!("t{i}"))).unwrap();
        let corpus = Corpus {
            vocab,
            docs: raw
                .into_iter()
                .map(|words| Document {
                    words: words.into_iter().collect(),
                    label: None,
                    pair: None,
                })
                .collect(),
        };
        let empty = std::collections::HashSet::new();
        if let Ok((once, _)) = preprocess(&corpus, &empty, min_count, 0.8) {
            let (twice, report) = preprocess(&once, &empty, min_count, 0.8).unwrap();
            prop_assert!(report.dropped_docs.is_empty());
            prop_assert_eq!(report.removed_tokens, 0);
            prop_assert_eq!(once.docs, twice.docs);
            prop_assert_eq!(once.vocab.tokens(), twice.vocab.tokens());
        }
    }
}
