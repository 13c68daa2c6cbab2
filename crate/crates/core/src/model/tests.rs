use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::data::{Encoded, EncodedValue};
use crate::hopfield::PatternMemory;
use crate::tensor::finite_diff_check_many;

fn schema() -> TableSchema {
    TableSchema::parse("a,continuous,false\nb,categorical,3,false\ny,categorical,2,true\n").unwrap()
}

fn cat(k: usize) -> EncodedValue {
    EncodedValue {
        value: Encoded::Category(k),
        missing: false,
    }
}

fn num(x: f64) -> EncodedValue {
    EncodedValue {
        value: Encoded::Continuous(x),
        missing: false,
    }
}

fn rows(n: usize, seed: u64) -> Vec<EncodedRow> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            vec![
                num(rng.random_range(-1.5..1.5)),
                cat(rng.random_range(0..3)),
                cat(rng.random_range(0..2)),
            ]
        })
        .collect()
}

fn config(e: usize, blocks: usize, heads: usize) -> ModelConfig {
    ModelConfig {
        embedding_dim: e,
        blocks,
        heads,
        beta_scale: 1.0,
        dropout: Dropout::NONE,
        detach_memory: false,
        self_column: SelfColumn::MaskPattern,
    }
}

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::uniform(shape, -1.0, 1.0, rng)
}

fn softmax(v: &[f64], beta: f64) -> Vec<f64> {
    let m = v.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let ex: Vec<f64> = v.iter().map(|x| (beta * (x - m)).exp()).collect();
    let s: f64 = ex.iter().sum();
    ex.iter().map(|x| x / s).collect()
}

fn mat_vec(w: &Tensor, v: &[f64]) -> Vec<f64> {
    (0..w.shape()[0])
        .map(|i| w.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
        .collect()
}

/// Direct loop evaluation of `W_S W_X X softmax(β Xᵀ W_Xᵀ W_ξ ξ)`.
fn hs_oracle(head: &SampleHead<Tensor>, beta: f64, xi: &[f64], memory: &Tensor) -> Vec<f64> {
    let q = mat_vec(&head.w_xi, xi);
    let keys: Vec<Vec<f64>> = (0..memory.rows())
        .map(|i| mat_vec(&head.w_x, memory.row(i)))
        .collect();
    let scores: Vec<f64> = keys
        .iter()
        .map(|k| k.iter().zip(&q).map(|(a, b)| a * b).sum())
        .collect();
    let p = softmax(&scores, beta);
    let mut z = vec![0.0; q.len()];
    for (k, w) in keys.iter().zip(&p) {
        for (zi, ki) in z.iter_mut().zip(k) {
            *zi += w * ki;
        }
    }
    mat_vec(&head.w_s, &z)
}

fn assert_close(a: &[f64], b: &[f64], tol: f64) {
    assert_eq!(a.len(), b.len());
    for (i, (x, y)) in a.iter().zip(b).enumerate() {
        assert!((x - y).abs() <= tol, "entry {i}: {x} vs {y}");
    }
}

fn zero_combiners(model: &mut HopularModel) {
    for b in &mut model.params_mut().blocks {
        b.sample_combine = Tensor::zeros(b.sample_combine.shape());
        b.feature_combine = Tensor::zeros(b.feature_combine.shape());
    }
}

#[test]
fn head_dim_must_divide() {
    let s = schema();
    assert!(HopularModel::new(s.clone(), config(4, 1, 5), 0).is_err());
    let m = HopularModel::new(s, config(4, 1, 3), 0).unwrap();
    assert_eq!(m.head_dim(), 4);
    assert!((m.beta_eff() - 0.5).abs() < 1e-15);
}

#[test]
fn zero_embeddings_give_zero_state() {
    let mut m = HopularModel::new(schema(), config(3, 1, 1), 0).unwrap();
    for t in m.params_mut().iter_mut() {
        *t = Tensor::zeros(t.shape());
    }
    let x = m
        .embed_sample(&MaskedSample::inference(&schema(), rows(1, 0)[0].clone()))
        .unwrap();
    assert!(x.data().iter().all(|&v| v == 0.0));
}

#[test]
fn embedding_matches_hand_assembly() {
    let s = TableSchema::parse("b,categorical,2,false\na,continuous,true\n").unwrap();
    let m = HopularModel::new(s.clone(), config(3, 0, 1), 4).unwrap();
    let sample = MaskedSample {
        values: vec![cat(1), num(0.7)],
        masked: vec![false, false],
    };
    let x = m.embed_sample(&sample).unwrap();
    let e = &m.params().embedding;
    let ValueMap::Categorical { table } = &e.values[0] else {
        panic!()
    };
    let ValueMap::Continuous { scale, bias, .. } = &e.values[1] else {
        panic!()
    };
    let mut want = Vec::new();
    for c in 0..3 {
        want.push(table.at(1, c) + e.position.at(0, c) + e.types.at(TYPE_CATEGORICAL, c));
    }
    for c in 0..3 {
        want.push(
            0.7 * scale.at(0, c) + bias.at(0, c) + e.position.at(1, c) + e.types.at(TYPE_TARGET, c),
        );
    }
    assert_close(x.data(), &want, 1e-15);
}

#[test]
fn masked_target_ignores_label() {
    let s = schema();
    let m = HopularModel::new(s.clone(), config(4, 1, 2), 1).unwrap();
    let mut r = rows(1, 3)[0].clone();
    r[2] = cat(0);
    let a = m
        .embed_sample(&MaskedSample::inference(&s, r.clone()))
        .unwrap();
    r[2] = cat(1);
    let b = m.embed_sample(&MaskedSample::inference(&s, r)).unwrap();
    assert_eq!(a.data()[8..], b.data()[8..]);
    let e = &m.params().embedding;
    let ValueMap::Categorical { table } = &e.values[2] else {
        panic!()
    };
    for c in 0..4 {
        let want = table.at(3, c) + e.position.at(2, c) + e.types.at(TYPE_TARGET, c);
        assert!((a.data()[8 + c] - want).abs() < 1e-15);
    }
}

#[test]
fn masked_continuous_uses_mask_token() {
    let s = schema();
    let m = HopularModel::new(s, config(2, 0, 1), 2).unwrap();
    let mut sample = MaskedSample::inference(m.schema(), vec![num(5.0), cat(0), cat(0)]);
    sample.masked[0] = true;
    let x = m.embed_sample(&sample).unwrap();
    let e = &m.params().embedding;
    let ValueMap::Continuous { mask, .. } = &e.values[0] else {
        panic!()
    };
    for c in 0..2 {
        assert!(
            (x.data()[c] - (mask.at(0, c) + e.position.at(0, c) + e.types.at(TYPE_CONTINUOUS, c)))
                .abs()
                < 1e-15
        );
    }
}

#[test]
fn bad_category_is_an_encoding_error() {
    let m = HopularModel::new(schema(), config(2, 0, 1), 2).unwrap();
    let sample = MaskedSample::inference(m.schema(), vec![num(0.0), cat(9), cat(0)]);
    assert!(matches!(
        m.embed_sample(&sample),
        Err(ModelError::Encoding(_))
    ));
}

#[test]
fn identity_head_reduces_to_hopfield_update() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let de = 6;
    let head = SampleHead {
        w_xi: Tensor::identity(de),
        w_x: Tensor::identity(de),
        w_s: Tensor::identity(de),
    };
    let patterns: Vec<Vec<f64>> = (0..5)
        .map(|_| (0..de).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let memory = Tensor::from_rows(&patterns).unwrap();
    let hop = PatternMemory::from_patterns(&patterns, 2.5).unwrap();
    let xi = random(&[de], &mut rng);
    let got = hs_head_forward(&head, 2.5, &xi, &memory).unwrap();
    let want = hop.update(&xi).unwrap();
    assert_close(got.data(), want.data(), 1e-12);
}

#[test]
fn singleton_memory_ignores_query() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let head = SampleHead {
        w_xi: random(&[3, 6], &mut rng),
        w_x: random(&[3, 6], &mut rng),
        w_s: random(&[6, 3], &mut rng),
    };
    let memory = random(&[1, 6], &mut rng);
    let want = mat_vec(&head.w_s, &mat_vec(&head.w_x, memory.row(0)));
    for _ in 0..3 {
        let got = hs_head_forward(&head, 1.0, &random(&[6], &mut rng), &memory).unwrap();
        assert_close(got.data(), &want, 1e-12);
    }
}

#[test]
fn sample_head_matches_loop_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let head = SampleHead {
        w_xi: random(&[4, 8], &mut rng),
        w_x: random(&[4, 8], &mut rng),
        w_s: random(&[8, 4], &mut rng),
    };
    let memory = random(&[7, 8], &mut rng);
    let xi = random(&[8], &mut rng);
    let got = hs_head_forward(&head, 0.8, &xi, &memory).unwrap();
    assert_close(
        got.data(),
        &hs_oracle(&head, 0.8, xi.data(), &memory),
        1e-12,
    );
}

#[test]
fn empty_memory_is_rejected() {
    let head = SampleHead {
        w_xi: Tensor::identity(2),
        w_x: Tensor::identity(2),
        w_s: Tensor::identity(2),
    };
    let err = hs_head_forward(&head, 1.0, &Tensor::zeros(&[2]), &Tensor::zeros(&[0, 2]));
    assert!(err.is_err());
}

#[test]
fn sample_module_combination() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let heads: Vec<SampleHead<Tensor>> = (0..2)
        .map(|_| SampleHead {
            w_xi: random(&[3, 6], &mut rng),
            w_x: random(&[3, 6], &mut rng),
            w_s: random(&[6, 3], &mut rng),
        })
        .collect();
    let memory = random(&[5, 6], &mut rng);
    let xi = random(&[6], &mut rng);

    let single =
        hs_module_forward(&heads[..1], Some(&Tensor::identity(6)), 1.3, &xi, &memory).unwrap();
    assert_close(
        single.data(),
        &hs_oracle(&heads[0], 1.3, xi.data(), &memory),
        1e-12,
    );

    let zero =
        hs_module_forward(&heads, Some(&Tensor::zeros(&[6, 12])), 1.3, &xi, &memory).unwrap();
    assert!(zero.data().iter().all(|&v| v == 0.0));

    let g = random(&[6, 12], &mut rng);
    let got = hs_module_forward(&heads, Some(&g), 1.3, &xi, &memory).unwrap();
    let o1 = hs_oracle(&heads[0], 1.3, xi.data(), &memory);
    let o2 = hs_oracle(&heads[1], 1.3, xi.data(), &memory);
    let want: Vec<f64> = (0..6)
        .map(|r| {
            (0..6)
                .map(|c| g.at(r, c) * o1[c] + g.at(r, 6 + c) * o2[c])
                .sum()
        })
        .collect();
    assert_close(got.data(), &want, 1e-12);
}

/// Per-attribute loop: row `j` of the result attends over all rows of `y`.
fn hf_oracle(head: &FeatureHead<Tensor>, beta: f64, xi: &Tensor, y: &Tensor) -> Vec<Vec<f64>> {
    let keys: Vec<Vec<f64>> = (0..y.rows())
        .map(|i| mat_vec(&head.w_y, y.row(i)))
        .collect();
    (0..xi.rows())
        .map(|j| {
            let q = mat_vec(&head.w_xi, xi.row(j));
            let scores: Vec<f64> = keys
                .iter()
                .map(|k| k.iter().zip(&q).map(|(a, b)| a * b).sum())
                .collect();
            let p = softmax(&scores, beta);
            let mut z = vec![0.0; q.len()];
            for (k, w) in keys.iter().zip(&p) {
                for (zi, ki) in z.iter_mut().zip(k) {
                    *zi += w * ki;
                }
            }
            mat_vec(&head.w_f, &z)
        })
        .collect()
}

#[test]
fn identity_feature_head_reduces_to_hopfield_update() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (d, e) = (4, 3);
    let head = FeatureHead {
        w_xi: Tensor::identity(e),
        w_y: Tensor::identity(e),
        w_f: Tensor::identity(e),
    };
    let y = random(&[d, e], &mut rng);
    let xi = random(&[d, e], &mut rng);
    let got = hf_module_forward(
        std::slice::from_ref(&head),
        Some(&Tensor::identity(e)),
        1.7,
        &xi,
        &y,
    )
    .unwrap();
    let ys: Vec<Vec<f64>> = (0..d).map(|i| y.row(i).to_vec()).collect();
    let hop = PatternMemory::from_patterns(&ys, 1.7).unwrap();
    for j in 0..d {
        let want = hop.update(&Tensor::vector(xi.row(j).to_vec())).unwrap();
        assert_close(got.row(j), want.data(), 1e-12);
    }
}

#[test]
fn feature_head_matches_column_loop_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let (d, e, h) = (3, 2, 3);
    let heads: Vec<FeatureHead<Tensor>> = (0..2)
        .map(|_| FeatureHead {
            w_xi: random(&[h, e], &mut rng),
            w_y: random(&[h, e], &mut rng),
            w_f: random(&[e, h], &mut rng),
        })
        .collect();
    let y = random(&[d, e], &mut rng);
    let xi = random(&[d, e], &mut rng);
    let g = random(&[e, 2 * e], &mut rng);
    let got = hf_module_forward(&heads, Some(&g), 0.9, &xi, &y).unwrap();
    let o1 = hf_oracle(&heads[0], 0.9, &xi, &y);
    let o2 = hf_oracle(&heads[1], 0.9, &xi, &y);
    for j in 0..d {
        let want: Vec<f64> = (0..e)
            .map(|r| {
                (0..e)
                    .map(|c| g.at(r, c) * o1[j][c] + g.at(r, e + c) * o2[j][c])
                    .sum()
            })
            .collect();
        assert_close(got.row(j), &want, 1e-12);
    }

    // A single stored attribute: every output row is W_F W_Y y₁.
    let y1 = random(&[1, e], &mut rng);
    let xi1 = random(&[1, e], &mut rng);
    let out = hf_module_forward(&heads[..1], None, 0.9, &xi1, &y1).unwrap();
    assert_close(
        out.row(0),
        &mat_vec(&heads[0].w_f, &mat_vec(&heads[0].w_y, y1.row(0))),
        1e-12,
    );
}

#[test]
fn zero_combiners_make_the_model_residual_only() {
    let s = schema();
    let mut m = HopularModel::new(s.clone(), config(4, 2, 3), 11).unwrap();
    zero_combiners(&mut m);
    let train = rows(6, 1);
    let q: Vec<MaskedSample> = rows(3, 2)
        .into_iter()
        .map(|r| MaskedSample::inference(&s, r))
        .collect();
    let got = m.predict(&q, &train).unwrap();
    let want = m.summarize_embedding(&q).unwrap();
    assert_eq!(got, want);
}

#[test]
fn zero_blocks_summarize_the_embedding() {
    let s = schema();
    let m = HopularModel::new(s.clone(), config(4, 0, 2), 12).unwrap();
    let q: Vec<MaskedSample> = rows(3, 2)
        .into_iter()
        .map(|r| MaskedSample::inference(&s, r))
        .collect();
    assert_eq!(
        m.predict(&q, &rows(4, 1)).unwrap(),
        m.summarize_embedding(&q).unwrap()
    );
}

#[test]
fn full_hidden_dropout_makes_blocks_identity() {
    let s = schema();
    let mut cfg = config(4, 2, 2);
    cfg.dropout.hidden = 1.0;
    let m = HopularModel::new(s.clone(), cfg, 13).unwrap();
    let train = rows(5, 1);
    let q: Vec<MaskedSample> = train
        .iter()
        .map(|r| MaskedSample::inference(&s, r.clone()))
        .collect();
    let mut tape = Tape::new();
    let p = m.bind(&mut tape, false);
    let mem = m.memory_on_tape(&mut tape, &p, &train).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let outs = m
        .forward_on_tape(
            &mut tape,
            &p,
            &q,
            mem,
            Some(&[0, 1, 2, 3, 4]),
            Some(&mut rng),
        )
        .unwrap();
    let got: Vec<Tensor> = outs.iter().map(|&o| tape.value(o).clone()).collect();
    assert_eq!(got, m.summarize_embedding(&q).unwrap());
}

#[test]
fn block_equals_manual_composition() {
    let s = schema();
    let m = HopularModel::new(s.clone(), config(4, 1, 2), 14).unwrap();
    let train = rows(6, 1);
    let q = MaskedSample::inference(&s, rows(1, 9)[0].clone());
    let memory = m.build_memory(&train, MemoryMode::Eval).unwrap();
    let y = m.embed_sample(&q).unwrap();
    let b = &m.params().blocks[0];
    let beta = m.beta_eff();
    let hs =
        hs_module_forward(&b.sample_heads, Some(&b.sample_combine), beta, &y, &memory).unwrap();
    let xi = y.add(&hs).unwrap();
    let hf = hf_module_forward(
        &b.feature_heads,
        Some(&b.feature_combine),
        beta,
        &xi.reshape(&[3, 4]).unwrap(),
        &y.reshape(&[3, 4]).unwrap(),
    )
    .unwrap();
    let xi = xi.add(&hf.reshape(&[12]).unwrap()).unwrap();

    let mut tape = Tape::new();
    let p = m.bind(&mut tape, false);
    let x = tape.constant(xi.reshape(&[1, 12]).unwrap());
    let want = layers::summarize(&mut tape, &p.summary, m.dims(), x, 0.0, None).unwrap();
    let got = m
        .forward_with_memory(std::slice::from_ref(&q), &memory)
        .unwrap();
    for (g, w) in got.iter().zip(want) {
        assert_eq!(g, tape.value(w));
    }
}

#[test]
fn forward_shapes_and_determinism() {
    let s = schema();
    let m1 = HopularModel::new(s.clone(), config(4, 2, 4), 15).unwrap();
    let m2 = HopularModel::new(s.clone(), config(4, 2, 4), 15).unwrap();
    assert_eq!(m1, m2);
    let train = rows(8, 1);
    let q: Vec<MaskedSample> = rows(5, 2)
        .into_iter()
        .map(|r| MaskedSample::inference(&s, r))
        .collect();
    let out = m1.predict(&q, &train).unwrap();
    assert_eq!(out.len(), 3);
    assert_eq!(out[0].shape(), &[5, 1]);
    assert_eq!(out[1].shape(), &[5, 3]);
    assert_eq!(out[2].shape(), &[5, 2]);
    assert_eq!(out, m2.predict(&q, &train).unwrap());
}

/// Batched training-mode self rows must equal per-sample forward passes with
/// an explicitly built train-mode memory.
#[test]
fn batched_self_rows_match_per_sample_memory() {
    let s = schema();
    let m = HopularModel::new(s.clone(), config(4, 2, 2), 16).unwrap();
    let train = rows(7, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let idx = [4usize, 0, 6];
    let queries: Vec<MaskedSample> = idx
        .iter()
        .map(|&i| {
            let mut q = MaskedSample::inference(&s, train[i].clone());
            q.masked[0] = rng.random_bool(0.5);
            q.masked[1] = true;
            q
        })
        .collect();
    let mut tape = Tape::new();
    let p = m.bind(&mut tape, false);
    let mem = m.memory_on_tape(&mut tape, &p, &train).unwrap();
    let outs = m
        .forward_on_tape(&mut tape, &p, &queries, mem, Some(&idx), None)
        .unwrap();
    for (b, (&i, q)) in idx.iter().zip(&queries).enumerate() {
        let memory = m
            .build_memory(&train, MemoryMode::Train { index: i, query: q })
            .unwrap();
        let single = m
            .forward_with_memory(std::slice::from_ref(q), &memory)
            .unwrap();
        for (o, s1) in outs.iter().zip(&single) {
            assert_close(tape.value(*o).row(b), s1.row(0), 1e-12);
        }
    }
}

#[test]
fn dropped_self_row_equals_memory_without_it() {
    let s = schema();
    let mut cfg = config(4, 1, 2);
    cfg.self_column = SelfColumn::Drop;
    let m = HopularModel::new(s.clone(), cfg, 17).unwrap();
    let train = rows(5, 1);
    let q = MaskedSample::inference(&s, train[2].clone());
    let mut tape = Tape::new();
    let p = m.bind(&mut tape, false);
    let mem = m.memory_on_tape(&mut tape, &p, &train).unwrap();
    let outs = m
        .forward_on_tape(
            &mut tape,
            &p,
            std::slice::from_ref(&q),
            mem,
            Some(&[2]),
            None,
        )
        .unwrap();
    let mut rest = train.clone();
    rest.remove(2);
    let want = m.predict(std::slice::from_ref(&q), &rest).unwrap();
    for (o, w) in outs.iter().zip(&want) {
        assert_close(tape.value(*o).data(), w.data(), 1e-12);
    }
}

#[test]
fn memory_modes() {
    let s = schema();
    let m = HopularModel::new(s.clone(), config(4, 1, 2), 18).unwrap();
    let train = rows(4, 1);
    let eval = m.build_memory(&train, MemoryMode::Eval).unwrap();
    assert_eq!(eval.shape(), &[4, 12]);
    let full = MaskedSample {
        values: train[1].clone(),
        masked: vec![true; 3],
    };
    let x = m
        .build_memory(
            &train,
            MemoryMode::Train {
                index: 1,
                query: &full,
            },
        )
        .unwrap();
    assert_eq!(x.row(1), m.embed_sample(&full).unwrap().data());
    assert_eq!(x.row(0), eval.row(0));
    assert!(m
        .build_memory(
            &train,
            MemoryMode::Train {
                index: 4,
                query: &full
            }
        )
        .is_err());

    // Changing an embedding parameter changes exactly the affected entries.
    let mut m2 = m.clone();
    m2.params_mut().embedding.position.data_mut()[0] += 0.5;
    let again = m2.build_memory(&train, MemoryMode::Eval).unwrap();
    for i in 0..4 {
        for c in 0..12 {
            let delta = again.at(i, c) - eval.at(i, c);
            let want = if c == 0 { 0.5 } else { 0.0 };
            assert!((delta - want).abs() < 1e-12);
        }
    }
}

fn bind_ids(template: &Params<Tensor>, ids: &[NodeId]) -> Params<NodeId> {
    let mut it = ids.iter();
    template.map(|_, _| *it.next().expect("one id per tensor"))
}

#[test]
fn full_model_gradient_check() {
    let s = schema();
    let mut cfg = config(4, 1, 2);
    cfg.beta_scale = 2.0;
    let m = HopularModel::new(s.clone(), cfg, 19).unwrap();
    let train = rows(4, 1);
    let queries: Vec<MaskedSample> = train
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut q = MaskedSample::inference(&s, r.clone());
            q.masked[i % 2] = true;
            q
        })
        .collect();
    let tensors: Vec<Tensor> = m.params().iter().into_iter().cloned().collect();
    let report = finite_diff_check_many(
        |tape, ids| {
            let p = bind_ids(m.params(), ids);
            let mem = m.memory_on_tape(tape, &p, &train)?;
            let outs = m.forward_on_tape(tape, &p, &queries, mem, Some(&[0, 1, 2, 3]), None)?;
            let mut total = None;
            for o in outs {
                let sq = tape.square(o)?;
                let s = tape.sum(sq);
                total = Some(match total {
                    None => s,
                    Some(t) => tape.add(t, s)?,
                });
            }
            Ok::<_, ModelError>(total.unwrap())
        },
        &tensors,
        1e-5,
    )
    .unwrap();
    assert!(report.max_rel_error < 1e-4, "{report:?}");
}

fn entropy(p: &[f64]) -> f64 {
    -p.iter()
        .filter(|&&v| v > 0.0)
        .map(|v| v * v.ln())
        .sum::<f64>()
}

#[test]
fn attention_entropy_falls_with_beta_scale() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let head = SampleHead {
        w_xi: random(&[4, 8], &mut rng),
        w_x: random(&[4, 8], &mut rng),
        w_s: random(&[8, 4], &mut rng),
    };
    let memory = random(&[9, 8], &mut rng);
    let xi = random(&[8], &mut rng);
    let q = mat_vec(&head.w_xi, xi.data());
    let scores: Vec<f64> = (0..9)
        .map(|i| {
            mat_vec(&head.w_x, memory.row(i))
                .iter()
                .zip(&q)
                .map(|(a, b)| a * b)
                .sum()
        })
        .collect();
    let mut last = f64::INFINITY;
    for scale in [1.0, 3.0, 10.0, 30.0, 100.0, 300.0, 1000.0] {
        let p =
            crate::tensor::softmax_scaled(&Tensor::vector(scores.clone()), scale / 2.0).unwrap();
        let h = entropy(p.data());
        assert!(h <= last + 1e-12);
        last = h;
    }
}

#[test]
fn checkpoint_round_trip() {
    let m = HopularModel::new(schema(), config(4, 1, 2), 21).unwrap();
    let ck = Checkpoint::new(&m);
    let back = Checkpoint::from_json(&ck.to_json().unwrap()).unwrap();
    assert_eq!(back.model().unwrap(), m);
    let mut bad = ck.clone();
    bad.params.summary[0].bias = Tensor::zeros(&[5]);
    assert!(bad.model().is_err());
    let mut wrong = ck;
    wrong.version = 99;
    assert!(Checkpoint::from_json(&wrong.to_json().unwrap()).is_err());
}
