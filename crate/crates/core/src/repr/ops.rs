//! The individual layers of the representation as tape functions.

use crate::autodiff::{AutodiffError, Tape, Var};

/// `softmax_rows((X·P_q)(X·P_k)ᵀ / √d_a)` where `d_a` is the projection width.
pub fn dynamic_adjacency(tape: &mut Tape<'_>, x: Var, pq: Var, pk: Var) -> Result<Var, AutodiffError> {
    let q = tape.matmul(x, pq)?;
    let k = tape.matmul(x, pk)?;
    let d_a = tape.shape(pq).1;
    let s = tape.matmul_nt(q, k)?;
    let s = tape.scale(s, 1.0 / (d_a as f64).sqrt());
    Ok(tape.softmax_rows(s))
}

/// One graph layer, `relu(A·X·W)`.
pub fn graph_conv(tape: &mut Tape<'_>, a: Var, x: Var, w: Var) -> Result<Var, AutodiffError> {
    let xw = tape.matmul(x, w)?;
    let axw = tape.matmul(a, xw)?;
    Ok(tape.relu(axw))
}

/// `relu((Z_h ⊕ Z_d)·W_f + b_f)`.
pub fn fuse(tape: &mut Tape<'_>, z_h: Var, z_d: Var, w: Var, b: Var) -> Result<Var, AutodiffError> {
    let cat = tape.concat_cols(z_h, z_d)?;
    let lin = tape.matmul(cat, w)?;
    let lin = tape.add(lin, b)?;
    Ok(tape.relu(lin))
}

/// Reduces `Z_t` to a `C × C` row-stochastic map, `softmax_rows(Z_t·W_a)`.
pub fn attention_map(tape: &mut Tape<'_>, z_t: Var, wa: Var) -> Result<Var, AutodiffError> {
    let s = tape.matmul(z_t, wa)?;
    Ok(tape.softmax_rows(s))
}

/// `relu(Â·F)`.
pub fn apply_map(tape: &mut Tape<'_>, a_hat: Var, f: Var) -> Result<Var, AutodiffError> {
    let af = tape.matmul(a_hat, f)?;
    Ok(tape.relu(af))
}

/// Scaled dot-product attention of the tokens `G` over the rows of `F_t`.
/// Returns `(softmax_rows(G·F_tᵀ/√d), attention·F_t)`.
pub fn transformer_fuse(tape: &mut Tape<'_>, g: Var, f_t: Var) -> Result<(Var, Var), AutodiffError> {
    let d = tape.shape(g).1;
    let scores = tape.matmul_nt(g, f_t)?;
    let scores = tape.scale(scores, 1.0 / (d as f64).sqrt());
    let attention = tape.softmax_rows(scores);
    let fused = tape.matmul(attention, f_t)?;
    Ok((attention, fused))
}
