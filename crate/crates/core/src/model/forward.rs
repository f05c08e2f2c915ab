use super::{layer_prefix, ModelInput, ModelState};
use crate::error::{Error, Result};
use crate::ggram::MatchingMatrix;
use crate::nn::{transformer_layer, LayerVars, Tape, Tensor, Var};
use crate::tokenizer::TokenId;

/// Forward pass recorded on a tape, for training.
#[derive(Debug, Clone)]
pub struct TapeForward {
    /// G-gram encoder output per layer; empty when there are no matches.
    pub mu: Vec<Var>,
    /// `[layer][head]` attention tables of the G-gram encoder.
    pub ggram_attention: Vec<Vec<Var>>,
    /// Token encoder output per layer, before fusion.
    pub nu: Vec<Var>,
    /// Token encoder output per layer, after fusion (the next layer's input).
    pub nu_star: Vec<Var>,
    pub final_reps: Var,
}

/// Materialized per-layer representations of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub mu: Vec<Tensor>,
    pub ggram_attention: Vec<Vec<Tensor>>,
    pub nu: Vec<Tensor>,
    pub nu_star: Vec<Tensor>,
    pub final_reps: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GGramEncoding {
    pub mu: Vec<Tensor>,
    pub attention: Vec<Vec<Tensor>>,
}

fn check_finite(tape: &Tape, v: Var, encoder: &'static str, layer: usize) -> Result<()> {
    if tape.value(v).is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite { encoder, layer })
    }
}

fn ggram_encoder_on_tape(
    state: &ModelState,
    tape: &mut Tape,
    ggram_ids: &[u32],
) -> Result<(Vec<Var>, Vec<Vec<Var>>)> {
    let cfg = &state.config;
    if ggram_ids.len() > cfg.max_matches {
        return Err(Error::Validation(format!(
            "{} G-grams exceed max_matches {}",
            ggram_ids.len(),
            cfg.max_matches
        )));
    }
    if let Some(&id) = ggram_ids.iter().find(|&&id| id as usize >= cfg.ggram_vocab_size) {
        return Err(Error::UnknownId { kind: "ggram", id });
    }
    if ggram_ids.is_empty() {
        return Ok((Vec::new(), Vec::new()));
    }
    let table = tape.param(&state.params, "gg.embed")?;
    let ids: Vec<usize> = ggram_ids.iter().map(|&i| i as usize).collect();
    // No positional term: the encoder sees the matches as a set.
    let mut x = tape.gather(table, &ids)?;
    let mut mu = Vec::with_capacity(cfg.ggram_layers);
    let mut attention = Vec::with_capacity(cfg.ggram_layers);
    for l in 0..cfg.ggram_layers {
        let lv = LayerVars::bind(tape, &state.params, &layer_prefix("gg", l), cfg.heads)?;
        let out = transformer_layer(tape, &lv, x, None)?;
        check_finite(tape, out.output, "ggram", l + 1)?;
        x = out.output;
        mu.push(out.output);
        attention.push(out.attention);
    }
    Ok((mu, attention))
}

fn token_encoder_on_tape(
    state: &ModelState,
    tape: &mut Tape,
    token_ids: &[TokenId],
    matrix: &MatchingMatrix,
    mu: &[Var],
    key_mask: Option<&[bool]>,
) -> Result<(Vec<Var>, Vec<Var>)> {
    let cfg = &state.config;
    let n = token_ids.len();
    if n == 0 || n > cfg.max_len {
        return Err(Error::Shape(format!("{n} tokens for max_len {}", cfg.max_len)));
    }
    if let Some(&id) = token_ids.iter().find(|&&id| id as usize >= cfg.token_vocab_size) {
        return Err(Error::UnknownId { kind: "token", id });
    }
    let (rows, t) = matrix.dims();
    if rows != n {
        return Err(Error::Shape(format!("matching matrix has {rows} rows for {n} tokens")));
    }
    let fuse = t > 0;
    if fuse {
        if mu.len() != cfg.ggram_layers {
            return Err(Error::Shape(format!(
                "{} G-gram layers given, {} expected",
                mu.len(),
                cfg.ggram_layers
            )));
        }
        for &m in mu {
            let s = tape.value(m).shape();
            if s != [t, cfg.hidden] {
                return Err(Error::Shape(format!(
                    "G-gram representations {s:?} for {t} matches"
                )));
            }
        }
    }
    let columns = if fuse { matrix.columns() } else { Vec::new() };

    let embed = tape.param(&state.params, "tok.embed")?;
    let pos = tape.param(&state.params, "tok.pos")?;
    let ids: Vec<usize> = token_ids.iter().map(|&i| i as usize).collect();
    let positions: Vec<usize> = (0..n).collect();
    let e = tape.gather(embed, &ids)?;
    let p = tape.gather(pos, &positions)?;
    let e = tape.add(e, p)?;
    let g = tape.param(&state.params, "tok.ln.g")?;
    let b = tape.param(&state.params, "tok.ln.b")?;
    let mut x = tape.layer_norm(e, g, b)?;

    let mut nu = Vec::with_capacity(cfg.token_layers);
    let mut nu_star = Vec::with_capacity(cfg.token_layers);
    for l in 0..cfg.token_layers {
        let lv = LayerVars::bind(tape, &state.params, &layer_prefix("tok", l), cfg.heads)?;
        let out = transformer_layer(tape, &lv, x, key_mask)?.output;
        check_finite(tape, out, "token", l + 1)?;
        nu.push(out);
        x = if fuse && l < cfg.ggram_layers {
            tape.fuse_spans(out, mu[l], &columns)?
        } else {
            out
        };
        nu_star.push(x);
    }
    Ok((nu, nu_star))
}

/// Full dual-encoder forward pass on `tape`.
pub fn forward_on_tape(
    state: &ModelState,
    tape: &mut Tape,
    input: &ModelInput,
    key_mask: Option<&[bool]>,
) -> Result<TapeForward> {
    if input.matrix.dims().1 != input.ggram_ids.len() {
        return Err(Error::Shape(format!(
            "matching matrix has {} columns for {} G-grams",
            input.matrix.dims().1,
            input.ggram_ids.len()
        )));
    }
    let (mu, ggram_attention) = ggram_encoder_on_tape(state, tape, &input.ggram_ids)?;
    let (nu, nu_star) =
        token_encoder_on_tape(state, tape, &input.token_ids, &input.matrix, &mu, key_mask)?;
    let final_reps = *nu_star.last().expect("at least one token layer");
    Ok(TapeForward {
        mu,
        ggram_attention,
        nu,
        nu_star,
        final_reps,
    })
}

fn materialize(tape: &Tape, f: &TapeForward) -> ForwardTrace {
    let vals = |vs: &[Var]| vs.iter().map(|&v| tape.value(v).clone()).collect::<Vec<_>>();
    ForwardTrace {
        mu: vals(&f.mu),
        ggram_attention: f.ggram_attention.iter().map(|heads| vals(heads)).collect(),
        nu: vals(&f.nu),
        nu_star: vals(&f.nu_star),
        final_reps: tape.value(f.final_reps).clone(),
    }
}

/// Full forward pass without gradient tracking needs.
pub fn forward(state: &ModelState, input: &ModelInput) -> Result<ForwardTrace> {
    let mut tape = Tape::new();
    let f = forward_on_tape(state, &mut tape, input, None)?;
    Ok(materialize(&tape, &f))
}

/// G-gram encoder alone: per-layer outputs and attention tables.
pub fn ggram_encoder_forward(state: &ModelState, ggram_ids: &[u32]) -> Result<GGramEncoding> {
    let mut tape = Tape::new();
    let (mu, attention) = ggram_encoder_on_tape(state, &mut tape, ggram_ids)?;
    Ok(GGramEncoding {
        mu: mu.iter().map(|&v| tape.value(v).clone()).collect(),
        attention: attention
            .iter()
            .map(|heads| heads.iter().map(|&v| tape.value(v).clone()).collect())
            .collect(),
    })
}

/// Token encoder with G-gram representations `mu` supplied from outside.
pub fn e4bu_forward(
    state: &ModelState,
    token_ids: &[TokenId],
    matrix: &MatchingMatrix,
    mu: &[Tensor],
    pad_mask: Option<&[bool]>,
) -> Result<ForwardTrace> {
    let mut tape = Tape::new();
    let mu_vars: Vec<Var> = mu.iter().map(|t| tape.constant(t.clone())).collect();
    let (nu, nu_star) =
        token_encoder_on_tape(state, &mut tape, token_ids, matrix, &mu_vars, pad_mask)?;
    let final_reps = *nu_star.last().expect("at least one token layer");
    let f = TapeForward {
        mu: mu_vars,
        ggram_attention: Vec::new(),
        nu,
        nu_star,
        final_reps,
    };
    Ok(materialize(&tape, &f))
}

/// The token encoder with no G-gram input at all.
pub fn plain_encoder_forward(state: &ModelState, token_ids: &[TokenId]) -> Result<ForwardTrace> {
    e4bu_forward(state, token_ids, &MatchingMatrix::empty(token_ids.len()), &[], None)
}

pub fn mlm_logits_var(state: &ModelState, tape: &mut Tape, reps: Var) -> Result<Var> {
    let w = tape.param(&state.params, "mlm.w")?;
    let b = tape.param(&state.params, "mlm.b")?;
    let y = tape.matmul(reps, w)?;
    tape.add_row(y, b)
}

/// Token-vocabulary logits at every position (`N x V`).
pub fn mlm_logits(state: &ModelState, reps: &Tensor) -> Result<Tensor> {
    let mut tape = Tape::new();
    let r = tape.constant(reps.clone());
    let y = mlm_logits_var(state, &mut tape, r)?;
    Ok(tape.value(y).clone())
}

/// Class logits (`1 x K`) from the CLS (first) row.
pub fn class_logits_var(state: &ModelState, tape: &mut Tape, reps: Var) -> Result<Var> {
    if state.num_classes().is_none() {
        return Err(Error::Validation("model has no classification head".into()));
    }
    let cls = tape.select_rows(reps, &[0])?;
    let w = tape.param(&state.params, "cls.w")?;
    let b = tape.param(&state.params, "cls.b")?;
    let y = tape.matmul(cls, w)?;
    tape.add_row(y, b)
}

pub fn classify(state: &ModelState, trace: &ForwardTrace) -> Result<Vec<f32>> {
    let mut tape = Tape::new();
    let r = tape.constant(trace.final_reps.clone());
    let y = class_logits_var(state, &mut tape, r)?;
    Ok(tape.value(y).data().to_vec())
}

/// Mean attention each G-gram receives, per G-gram encoder layer, averaged
/// over heads and query positions. Empty when there were no matches.
pub fn ggram_attention_summary(trace: &ForwardTrace) -> Vec<Vec<f32>> {
    trace
        .ggram_attention
        .iter()
        .map(|heads| {
            let t = heads.first().map(|a| a.cols()).unwrap_or(0);
            let mut acc = vec![0.0f64; t];
            for a in heads {
                for q in 0..a.rows() {
                    for (slot, &w) in acc.iter_mut().zip(a.row(q)) {
                        *slot += w as f64;
                    }
                }
            }
            let denom = (heads.len() * t) as f64;
            acc.into_iter().map(|v| (v / denom) as f32).collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ggram::{GGramMatchSet, Match};
    use crate::model::ModelConfig;

    fn state() -> ModelState {
        ModelState::init(
            ModelConfig {
                hidden: 8,
                token_layers: 3,
                ggram_layers: 2,
                heads: 2,
                token_vocab_size: 12,
                ggram_vocab_size: 6,
                max_len: 16,
                max_matches: 8,
            },
            3,
        )
        .unwrap()
    }

    fn input(matches: Vec<Match>) -> ModelInput {
        ModelInput::new(
            vec![2, 5, 6, 7, 8, 9, 3],
            &GGramMatchSet {
                matches,
                source_len: 7,
            },
        )
    }

    #[test]
    fn no_matches_is_plain_encoder() {
        let s = state();
        let t = forward(&s, &input(vec![])).unwrap();
        assert!(t.mu.is_empty());
        let p = plain_encoder_forward(&s, &[2, 5, 6, 7, 8, 9, 3]).unwrap();
        assert_eq!(t.final_reps, p.final_reps);
    }

    #[test]
    fn single_match_attention_is_one() {
        let s = state();
        let t = forward(&s, &input(vec![Match { ggram: 1, start: 2, end: 4 }])).unwrap();
        for layer in &t.ggram_attention {
            for head in layer {
                assert_eq!(head.data(), &[1.0]);
            }
        }
        assert_eq!(ggram_attention_summary(&t), vec![vec![1.0]; 2]);
    }

    #[test]
    fn no_fusion_above_ggram_layers() {
        let s = state();
        let t = forward(&s, &input(vec![Match { ggram: 1, start: 2, end: 4 }])).unwrap();
        assert_ne!(t.nu[0], t.nu_star[0]);
        assert_eq!(t.nu[2], t.nu_star[2]);
    }

    #[test]
    fn bad_ids_and_dims() {
        let s = state();
        let err = forward(&s, &input(vec![Match { ggram: 6, start: 2, end: 4 }])).unwrap_err();
        assert!(matches!(err, Error::UnknownId { kind: "ggram", id: 6 }));
        let err = e4bu_forward(&s, &[2, 5, 3], &MatchingMatrix::empty(4), &[], None).unwrap_err();
        assert!(matches!(err, Error::Shape(_)));
    }

    #[test]
    fn heads_shapes() {
        let mut s = state();
        let t = forward(&s, &input(vec![])).unwrap();
        assert_eq!(mlm_logits(&s, &t.final_reps).unwrap().shape(), &[7, 12]);
        assert!(classify(&s, &t).is_err());
        s.init_classifier(3, 0).unwrap();
        assert_eq!(classify(&s, &t).unwrap().len(), 3);
        for v in s.params.get_mut("cls.w").unwrap().data_mut() {
            *v = 0.0;
        }
        assert_eq!(classify(&s, &t).unwrap(), vec![0.0; 3]);
        for v in s.params.get_mut("mlm.w").unwrap().data_mut() {
            *v = 0.0;
        }
        let z = mlm_logits(&s, &Tensor::zeros(&[4, 8])).unwrap();
        assert!(z.data().iter().all(|&v| v == 0.0));
    }
}
