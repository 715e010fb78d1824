use rand::Rng;

/// Systematic resampling: one uniform offset `u ~ U[0, 1/n)` and the comb
/// `u + k/n`, `k = 0..n`. Returns the selected source index for each output
/// slot, in nondecreasing order.
///
/// Every index `i` is copied either `floor(n w_i)` or `ceil(n w_i)` times.
/// Zero-weight particles are never selected. `weights` need not be normalized
/// but must have a positive sum.
pub fn systematic_resample<R: Rng + ?Sized>(weights: &[f64], n: usize, rng: &mut R) -> Vec<usize> {
    let u: f64 = rng.random::<f64>();
    systematic_resample_with_offset(weights, n, u)
}

/// Deterministic core of [`systematic_resample`]; `u` is the offset as a
/// fraction of one comb spacing, in `[0, 1)`.
pub fn systematic_resample_with_offset(weights: &[f64], n: usize, u: f64) -> Vec<usize> {
    let mut cumsum = Vec::with_capacity(weights.len());
    let mut acc = 0.0;
    for &w in weights {
        acc += w;
        cumsum.push(acc);
    }
    let total = acc;
    assert!(total > 0.0, "resampling needs a positive total weight");
    // guards the comb's tail against cumsum rounding below `total`
    let last = weights.iter().rposition(|&w| w > 0.0).unwrap_or(0);
    let step = total / n as f64;
    let mut out = Vec::with_capacity(n);
    let mut i = 0;
    for k in 0..n {
        let target = (u + k as f64) * step;
        while i < last && (cumsum[i] <= target || weights[i] == 0.0) {
            i += 1;
        }
        out.push(i);
    }
    out
}
