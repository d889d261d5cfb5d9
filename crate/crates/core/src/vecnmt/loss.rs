use log::warn;

use super::constraints::ConstraintSet;
use super::model::{GateMode, VecNmt};
use crate::corpus::{special, AnnotatedPair};
use crate::error::{Error, Result};
use crate::nnet::{cosine, Dropout, Gradients, Matrix, Tape, Var};

/// Floor applied to mixture probabilities before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

/// Window log-softmax loss over cosines between each constraint token's
/// embedding and the decoder states around its reference position.
///
/// `targets` holds `(token id, row)` pairs; rows index `hidden`. The window
/// `[row-c, row+c]` is clamped to the available rows.
pub fn integrity_loss(hidden: &Matrix, embedding: &Matrix, targets: &[(usize, usize)], c: usize) -> Result<f64> {
    let mut total = 0.0;
    for &(y, i) in targets {
        check_target(y, i, hidden.rows(), embedding.rows())?;
        let (lo, hi) = window(i, c, hidden.rows());
        let sims = (lo..=hi)
            .map(|j| cosine(embedding.row(y), hidden.row(j)))
            .collect::<Result<Vec<f64>>>()?;
        let m = sims.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + sims.iter().map(|s| (s - m).exp()).sum::<f64>().ln();
        total += lse - sims[i - lo];
    }
    Ok(total)
}

fn window(i: usize, c: usize, rows: usize) -> (usize, usize) {
    (i.saturating_sub(c), (i + c).min(rows - 1))
}

fn check_target(y: usize, i: usize, rows: usize, vocab: usize) -> Result<()> {
    if y >= vocab {
        return Err(Error::OutOfVocab { id: y, vocab });
    }
    if i >= rows {
        return Err(Error::Position { pos: i, max: rows });
    }
    Ok(())
}

/// Tape form of [`integrity_loss`]; `None` when there are no targets.
pub(crate) fn integrity_on(t: &mut Tape, hidden: Var, embedding: Var, targets: &[(usize, usize)], c: usize) -> Result<Option<Var>> {
    if targets.is_empty() {
        return Ok(None);
    }
    let (rows, _) = t.shape(hidden);
    let vocab = t.shape(embedding).0;
    let mut mask = Matrix::filled(targets.len(), rows, f64::NEG_INFINITY);
    let mut picks = Vec::with_capacity(targets.len());
    for (k, &(y, i)) in targets.iter().enumerate() {
        check_target(y, i, rows, vocab)?;
        let (lo, hi) = window(i, c, rows);
        for j in lo..=hi {
            mask.set(k, j, 0.0);
        }
        picks.push((k, i));
    }
    let ids: Vec<usize> = targets.iter().map(|&(y, _)| y).collect();
    let w = t.gather(embedding, &ids);
    let wn = t.normalize_rows(w)?;
    let hn = t.normalize_rows(hidden)?;
    let cos = t.matmul_bt(wn, hn);
    let mask = t.constant(mask);
    let masked = t.add(cos, mask);
    let lp = t.log_softmax_rows(masked);
    let picked = t.pick(lp, &picks);
    let s = t.sum(picked);
    Ok(Some(t.scale(s, -1.0)))
}

/// A teacher-forced training instance in id space.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NmtExample {
    pub src_ids: Vec<usize>,
    pub src_pos: Vec<usize>,
    /// `[BOS] y_1 … y_T`.
    pub prefix: Vec<usize>,
    /// `y_1 … y_T [EOS]`.
    pub targets: Vec<usize>,
    /// Distinct constraint token ids that receive plug mass.
    pub plug_ids: Vec<usize>,
    /// `(token id, decoder row)` for every constraint token.
    pub integrity: Vec<(usize, usize)>,
}

/// Per-batch loss values (sums over target tokens).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossReport {
    pub orig: f64,
    pub integrity: f64,
    pub total: f64,
    pub n_tokens: usize,
}

impl VecNmt {
    /// Builds a training example from a pair with a known target. Constraint
    /// tokens missing from the reference are skipped with a warning.
    pub fn prepare(&self, pair: &AnnotatedPair, cs: &ConstraintSet) -> Result<NmtExample> {
        let tgt = pair
            .tgt
            .as_ref()
            .ok_or_else(|| Error::Input("training pair has no target".into()))?;
        let (src_ids, src_pos) = self.encoder_input(&pair.src, cs);
        let y = self.vocab.encode(tgt);
        let mut prefix = vec![special::BOS_ID];
        prefix.extend(&y);
        let mut targets = y;
        targets.push(special::EOS_ID);
        let plug_ids: Vec<usize> = cs.token_set(&self.vocab).into_iter().collect();
        let mut integrity = Vec::new();
        for p in cs.pairs() {
            match p.ref_pos {
                Some(start) => {
                    for (k, id) in self.vocab.encode(&p.tgt).into_iter().enumerate() {
                        integrity.push((id, start + k));
                    }
                }
                None => warn!("constraint {:?} absent from reference; skipped in the integrity loss", p.tgt),
            }
        }
        Ok(NmtExample {
            src_ids,
            src_pos,
            prefix,
            targets,
            plug_ids,
            integrity,
        })
    }

    /// Builds `L_orig + λ·L_int` for one example on the tape and returns
    /// `(orig, integrity, total)` nodes.
    pub(crate) fn loss_on(
        &self,
        t: &mut Tape,
        ex: &NmtExample,
        lambda: f64,
        c: usize,
        gate: GateMode,
        drop: Option<&Dropout>,
    ) -> Result<(Var, Option<Var>, Var)> {
        let s2s = self.seq2seq();
        let memory = s2s.encode_on(t, &ex.src_ids, &ex.src_pos, drop)?;
        let hidden = s2s.decoder.forward(t, &ex.prefix, memory, drop)?;
        let logits = s2s.logits(t, hidden);
        let pm_all = t.softmax_rows(logits);
        let gold: Vec<(usize, usize)> = ex.targets.iter().copied().enumerate().collect();
        let pm = t.pick(pm_all, &gold);

        let rows = ex.targets.len();
        let g = match gate {
            GateMode::Learned => self.gate_on(t, hidden),
            GateMode::Fixed(v) => t.constant(Matrix::filled(rows, 1, v)),
        };
        // Plug mass of the gold token: cosine against the gold token's
        // embedding where it is a constraint token, zero elsewhere.
        let plug_rows: Vec<usize> = (0..rows).filter(|&i| ex.plug_ids.contains(&ex.targets[i])).collect();
        let pp = if plug_rows.is_empty() {
            t.constant(Matrix::zeros(rows, 1))
        } else {
            let emb = t.param(s2s.embed_id());
            let w = t.gather(emb, &ex.targets);
            let wn = t.normalize_rows(w)?;
            let hn = t.normalize_rows(hidden)?;
            let prod = t.mul(wn, hn);
            let cos = t.sum_rows(prod);
            let cos = t.relu(cos);
            let mut keep = Matrix::zeros(rows, 1);
            for &i in &plug_rows {
                keep.set(i, 0, 1.0);
            }
            let keep = t.constant(keep);
            t.mul(cos, keep)
        };
        // (1-g)·pm + g·pp = pm + g·(pp - pm)
        let diff = t.sub(pp, pm);
        let gd = t.mul(g, diff);
        let mix = t.add(pm, gd);
        let logp = t.log_floor(mix, PROB_FLOOR);
        let s = t.sum(logp);
        let orig = t.scale(s, -1.0);

        let int = if lambda != 0.0 {
            let emb = t.param(s2s.embed_id());
            integrity_on(t, hidden, emb, &ex.integrity, c)?
        } else {
            None
        };
        let total = match int {
            Some(l) => {
                let scaled = t.scale(l, lambda);
                t.add(orig, scaled)
            }
            None => orig,
        };
        Ok((orig, int, total))
    }

    /// Summed loss over `batch` with its gradient. No dropout.
    pub fn nmt_train_step(
        &self,
        batch: &[NmtExample],
        lambda: f64,
        c: usize,
        gate: GateMode,
    ) -> Result<(LossReport, Gradients)> {
        self.batch_step(batch, lambda, c, gate, None)
    }

    pub(crate) fn batch_step(
        &self,
        batch: &[NmtExample],
        lambda: f64,
        c: usize,
        gate: GateMode,
        drop: Option<(u64, u64)>,
    ) -> Result<(LossReport, Gradients)> {
        let mut t = Tape::new(&self.params);
        let mut report = LossReport::default();
        let mut totals = Vec::with_capacity(batch.len());
        for (k, ex) in batch.iter().enumerate() {
            let d = drop.filter(|_| self.cfg.dropout > 0.0).map(|(seed, step)| Dropout {
                rate: self.cfg.dropout,
                seed,
                step,
                example: k as u64,
            });
            let (orig, int, total) = self.loss_on(&mut t, ex, lambda, c, gate, d.as_ref())?;
            report.orig += t.scalar(orig);
            report.integrity += int.map_or(0.0, |v| t.scalar(v));
            report.n_tokens += ex.targets.len();
            totals.push(total);
        }
        let all = t.concat_rows(&totals);
        let loss = t.sum(all);
        report.total = t.scalar(loss);
        if !report.total.is_finite() {
            return Err(Error::NonFinite(format!("training loss {}", report.total)));
        }
        let grads = t.backward(loss)?;
        Ok((report, grads))
    }

    /// Summed `L_orig + λ·L_int` without gradients.
    pub fn loss(&self, batch: &[NmtExample], lambda: f64, c: usize, gate: GateMode) -> Result<LossReport> {
        let mut t = Tape::new(&self.params);
        let mut report = LossReport::default();
        for ex in batch {
            let (orig, int, total) = self.loss_on(&mut t, ex, lambda, c, gate, None)?;
            report.orig += t.scalar(orig);
            report.integrity += int.map_or(0.0, |v| t.scalar(v));
            report.total += t.scalar(total);
            report.n_tokens += ex.targets.len();
        }
        Ok(report)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{tokenize, ConstraintInstance, Vocabulary};
    use crate::nnet::{ModelConfig, ParamStore};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Hidden states whose cosine with `e_0 = (1, 0)` equals `cs[j]`.
    fn states(cs: &[f64]) -> Matrix {
        Matrix::from_vec(cs.len(), 2, cs.iter().flat_map(|&c| [c, (1.0 - c * c).sqrt()]).collect())
    }

    fn emb() -> Matrix {
        Matrix::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0])
    }

    #[test]
    fn equal_window_cosines_give_log_window_size() {
        let h = states(&[0.3; 20]);
        let l = integrity_loss(&h, &emb(), &[(0, 10)], 5).unwrap();
        assert!((l - 11f64.ln()).abs() < 1e-12);
        assert_eq!(integrity_loss(&h, &emb(), &[(0, 10)], 0).unwrap(), 0.0);
    }

    #[test]
    fn window_is_clamped_at_the_start() {
        let cs = [0.9, 0.1, -0.2, 0.4, 0.5, 0.0, 0.7, 0.8, 0.3];
        let h = states(&cs);
        let got = integrity_loss(&h, &emb(), &[(0, 0)], 5).unwrap();
        let denom: f64 = cs[..6].iter().map(|c| c.exp()).sum();
        assert!((got - (denom.ln() - cs[0])).abs() < 1e-12);
    }

    #[test]
    fn raising_the_positive_cosine_lowers_the_loss() {
        let mut cs = vec![0.2, -0.1, 0.4, 0.0, 0.3];
        let before = integrity_loss(&states(&cs), &emb(), &[(0, 2)], 2).unwrap();
        cs[2] = 0.6;
        let after = integrity_loss(&states(&cs), &emb(), &[(0, 2)], 2).unwrap();
        assert!(after < before);
    }

    #[test]
    fn tape_matches_numeric() {
        let h = states(&[0.9, 0.1, -0.2, 0.4, 0.5, 0.0, 0.7]);
        let targets = [(0, 0), (1, 3), (0, 6)];
        let want = integrity_loss(&h, &emb(), &targets, 2).unwrap();
        let store = ParamStore::new();
        let mut t = Tape::new(&store);
        let hv = t.constant(h);
        let ev = t.constant(emb());
        let got = integrity_on(&mut t, hv, ev, &targets, 2).unwrap().unwrap();
        assert!((t.scalar(got) - want).abs() < 1e-12);
    }

    fn pair_and_model() -> (AnnotatedPair, VecNmt) {
        let pair = AnnotatedPair {
            src: tokenize("s1 L1 s2"),
            tgt: Some(tokenize("t1 c1 c2 t2")),
            constraints: vec![ConstraintInstance {
                span: 1..2,
                lexicon: tokenize("L1"),
                candidates: vec![tokenize("c1 c2"), tokenize("c3")],
                gold: Some(0),
            }],
        };
        let vocab = Vocabulary::build(&tokenize("s1 L1 s2 t1 c1 c2 c3 t2"));
        let cfg = ModelConfig {
            d_model: 8,
            n_heads: 2,
            ffn_dim: 16,
            n_enc_layers: 1,
            n_dec_layers: 1,
            ..ModelConfig::default()
        };
        let m = VecNmt::new(cfg, vocab, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        (pair, m)
    }

    #[test]
    fn prepared_example_layout() {
        let (pair, m) = pair_and_model();
        let cs = ConstraintSet::from_gold(&pair).unwrap();
        let ex = m.prepare(&pair, &cs).unwrap();
        assert_eq!(ex.prefix.len(), 5);
        assert_eq!(ex.targets.len(), 5);
        assert_eq!(ex.prefix[1..], ex.targets[..4]);
        let c1 = m.vocab.id("c1").unwrap();
        let c2 = m.vocab.id("c2").unwrap();
        assert_eq!(ex.integrity, vec![(c1, 1), (c2, 2)]);
        assert_eq!(ex.targets[1], c1);
    }

    #[test]
    fn lambda_zero_is_the_mixture_nll() {
        let (pair, m) = pair_and_model();
        let ex = m.prepare(&pair, &ConstraintSet::from_gold(&pair).unwrap()).unwrap();
        let r0 = m.loss(std::slice::from_ref(&ex), 0.0, 5, GateMode::Learned).unwrap();
        assert_eq!(r0.total, r0.orig);
        assert_eq!(r0.integrity, 0.0);
        let r1 = m.loss(std::slice::from_ref(&ex), 1.0, 5, GateMode::Learned).unwrap();
        assert_eq!(r1.orig, r0.orig);
        assert!(r1.integrity > 0.0);
        assert!((r1.total - r1.orig - r1.integrity).abs() < 1e-12);
    }

    #[test]
    fn fixed_zero_gate_is_plain_nll() {
        let (pair, m) = pair_and_model();
        let cs = ConstraintSet::from_gold(&pair).unwrap();
        let ex = m.prepare(&pair, &cs).unwrap();
        let r = m.loss(std::slice::from_ref(&ex), 0.0, 5, GateMode::Fixed(0.0)).unwrap();
        let memory = m.encode(&pair.src, &cs).unwrap();
        let mut nll = 0.0;
        for (i, &y) in ex.targets.iter().enumerate() {
            let out = m.step(&ex.prefix[..=i], &memory).unwrap();
            nll -= out.probs()[y].ln();
        }
        assert!((r.orig - nll).abs() < 1e-9, "{} vs {nll}", r.orig);
    }
}
