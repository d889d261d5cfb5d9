use crate::error::Result;
use crate::nnet::{cosine, Tape, Var};

/// One instance of the contrastive objective.
#[derive(Clone, Debug)]
pub struct ContrastiveItem {
    pub e_s: Vec<f64>,
    pub positive: Vec<f64>,
    pub negatives: Vec<Vec<f64>>,
}

/// Summed InfoNCE over cosine similarities. The positive sits in the
/// denominator alongside the negatives.
pub fn contrastive_loss(batch: &[ContrastiveItem]) -> Result<f64> {
    let mut total = 0.0;
    for item in batch {
        let pos = cosine(&item.e_s, &item.positive)?;
        let mut sims = vec![pos];
        for n in &item.negatives {
            sims.push(cosine(&item.e_s, n)?);
        }
        let m = sims.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + sims.iter().map(|s| (s - m).exp()).sum::<f64>().ln();
        total += lse - pos;
    }
    Ok(total)
}

/// Tape form. `contexts` is `n×d`, `cands` is `u×d`, and `rows[i]` lists
/// the candidate rows for instance `i` with the positive first. Returns
/// the summed loss.
pub(crate) fn contrastive_on(t: &mut Tape, contexts: Var, cands: Var, rows: &[Vec<usize>]) -> Result<Var> {
    let cn = t.normalize_rows(contexts)?;
    let mn = t.normalize_rows(cands)?;
    let mut picks = Vec::with_capacity(rows.len());
    for (i, r) in rows.iter().enumerate() {
        let ctx = t.gather(cn, &[i]);
        let cs = t.gather(mn, r);
        let sims = t.matmul_bt(ctx, cs);
        let lp = t.log_softmax_rows(sims);
        picks.push(t.pick(lp, &[(0, 0)]));
    }
    let all = t.concat_rows(&picks);
    let s = t.sum(all);
    Ok(t.scale(s, -1.0))
}
