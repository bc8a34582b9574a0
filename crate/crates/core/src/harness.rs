//! Verification oracles.
//!
//! Everything here is written independently of the modules it checks: no
//! numeric kernels are shared with [`crate::engine`] or
//! [`crate::classifiers`]. The test suites compare implementation output
//! against these routines.

use crate::{Error, Result};

/// Outcome of one oracle comparison.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleReport {
    pub op: String,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub seed: u64,
}

impl OracleReport {
    pub fn new(op: impl Into<String>, max_rel_error: f64, tolerance: f64, seed: u64) -> Self {
        OracleReport {
            op: op.into(),
            max_rel_error,
            tolerance,
            passed: max_rel_error <= tolerance,
            seed,
        }
    }

    /// Folds several per-seed reports for one op into the worst case.
    pub fn worst(reports: &[OracleReport]) -> Option<OracleReport> {
        reports
            .iter()
            .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
            .cloned()
    }
}

impl std::fmt::Display for OracleReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} {}: max rel err {:.3e} (tol {:.0e}, seed {})",
            if self.passed { "PASS" } else { "FAIL" },
            self.op,
            self.max_rel_error,
            self.tolerance,
            self.seed
        )
    }
}

/// Central-difference gradient `(f(x+εeᵢ) − f(x−εeᵢ)) / 2ε` for every element.
pub fn finite_diff(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], eps: f64) -> Result<Vec<f64>> {
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::InvalidArgument(format!("finite-difference step {eps} must be positive")));
    }
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + eps;
        let plus = f(&probe);
        probe[i] = orig - eps;
        let minus = f(&probe);
        probe[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFinite { op: "finite_diff" });
        }
        grad.push((plus - minus) / (2.0 * eps));
    }
    Ok(grad)
}

pub const ABSOLUTE_FLOOR: f64 = 1e-8;

/// Norm-wise relative error `‖a − b‖₂ / max(‖a‖₂, ‖b‖₂)`. When both norms
/// are below [`ABSOLUTE_FLOOR`] the absolute difference is returned instead,
/// so structurally zero gradients compare against finite-difference noise.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "relative_error: length mismatch");
    let norm = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x * x).sum::<f64>().sqrt();
    let diff = norm(&mut a.iter().zip(b).map(|(x, y)| x - y));
    let scale = norm(&mut a.iter().copied()).max(norm(&mut b.iter().copied()));
    if scale < ABSOLUTE_FLOOR {
        diff
    } else {
        diff / scale
    }
}

/// IoU between the top-`fraction` pixels of `heatmap` and a boolean mask.
///
/// The heatmap is binarized at the value of its `ceil(fraction·n)`-th largest
/// pixel; ties at that value are all included.
pub fn blob_iou(heatmap: &[f32], mask: &[bool], fraction: f64) -> Result<f64> {
    if heatmap.len() != mask.len() {
        return Err(Error::Shape(format!(
            "heatmap has {} pixels, mask {}",
            heatmap.len(),
            mask.len()
        )));
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidArgument(format!("fraction {fraction} outside (0, 1)")));
    }
    if heatmap.is_empty() {
        return Ok(0.0);
    }
    let mut sorted = heatmap.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let k = ((fraction * heatmap.len() as f64).ceil() as usize).clamp(1, heatmap.len());
    let threshold = sorted[k - 1];
    let (mut inter, mut union) = (0usize, 0usize);
    for (&h, &m) in heatmap.iter().zip(mask) {
        let hot = h >= threshold;
        inter += (hot && m) as usize;
        union += (hot || m) as usize;
    }
    Ok(if union == 0 { 0.0 } else { inter as f64 / union as f64 })
}

/// Per-column mean and population standard deviation (std 0 replaced by 1),
/// computed in two plain passes.
fn column_stats(rows: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let d = rows[0].len();
    let n = rows.len() as f64;
    let mut mean = vec![0.0; d];
    for r in rows {
        for j in 0..d {
            mean[j] += r[j];
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut std = vec![0.0; d];
    for r in rows {
        for j in 0..d {
            std[j] += (r[j] - mean[j]).powi(2);
        }
    }
    for s in &mut std {
        *s = (*s / n).sqrt();
        if *s == 0.0 {
            *s = 1.0;
        }
    }
    (mean, std)
}

fn standardize_rows(rows: &[Vec<f64>], mean: &[f64], std: &[f64]) -> Vec<Vec<f64>> {
    rows.iter()
        .map(|r| r.iter().zip(mean).zip(std).map(|((x, m), s)| (x - m) / s).collect())
        .collect()
}

/// KNN by sorting every training distance: standardized Euclidean distance,
/// stable sort (ties keep lower training index), majority of the first `k`.
pub fn knn_brute_force(train: &[Vec<f64>], labels: &[u8], queries: &[Vec<f64>], k: usize) -> Vec<u8> {
    let (mean, std) = column_stats(train);
    let train = standardize_rows(train, &mean, &std);
    let queries = standardize_rows(queries, &mean, &std);
    queries
        .iter()
        .map(|q| {
            let mut dist: Vec<(f64, usize)> = train
                .iter()
                .enumerate()
                .map(|(i, t)| (t.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt(), i))
                .collect();
            dist.sort_by(|a, b| a.0.total_cmp(&b.0));
            let ones = dist[..k].iter().filter(|(_, i)| labels[*i] == 1).count();
            (2 * ones > k) as u8
        })
        .collect()
}

/// Naive Bayes log posterior ratio `ln P(1|x) − ln P(0|x)` from an explicit
/// product of Gaussian densities (no log-space accumulation).
pub fn naive_bayes_log_ratio_direct(train: &[Vec<f64>], labels: &[u8], query: &[f64], var_floor: f64) -> f64 {
    let (mean, std) = column_stats(train);
    let train = standardize_rows(train, &mean, &std);
    let q: Vec<f64> = query.iter().zip(&mean).zip(&std).map(|((x, m), s)| (x - m) / s).collect();
    let posterior = |class: u8| {
        let members: Vec<&Vec<f64>> = train.iter().zip(labels).filter(|(_, &l)| l == class).map(|(r, _)| r).collect();
        let prior = members.len() as f64 / train.len() as f64;
        let mut p = prior;
        for j in 0..q.len() {
            let mu = members.iter().map(|r| r[j]).sum::<f64>() / members.len() as f64;
            let var = (members.iter().map(|r| (r[j] - mu).powi(2)).sum::<f64>() / members.len() as f64).max(var_floor);
            p *= (-(q[j] - mu).powi(2) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt();
        }
        p
    };
    posterior(1).ln() - posterior(0).ln()
}

/// Weighted Gini impurity of every midpoint threshold on one feature;
/// returns `(threshold, impurity)` minimizing impurity, lowest threshold on ties.
pub fn gini_split_scan(values: &[f64], labels: &[u8]) -> Option<(f64, f64)> {
    let mut distinct: Vec<f64> = values.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let gini = |idx: &[usize]| {
        if idx.is_empty() {
            return 0.0;
        }
        let p1 = idx.iter().filter(|&&i| labels[i] == 1).count() as f64 / idx.len() as f64;
        1.0 - p1 * p1 - (1.0 - p1) * (1.0 - p1)
    };
    let n = values.len() as f64;
    let mut best: Option<(f64, f64)> = None;
    for w in distinct.windows(2) {
        let t = (w[0] + w[1]) / 2.0;
        let left: Vec<usize> = (0..values.len()).filter(|&i| values[i] <= t).collect();
        let right: Vec<usize> = (0..values.len()).filter(|&i| values[i] > t).collect();
        let imp = left.len() as f64 / n * gini(&left) + right.len() as f64 / n * gini(&right);
        if best.is_none_or(|(_, b)| imp < b - 1e-12) {
            best = Some((t, imp));
        }
    }
    best
}

/// Confusion counts `(tp, tn, fp, fn)` tallied with a match on label pairs.
pub fn count_confusion(predictions: &[u8], labels: &[u8]) -> (u64, u64, u64, u64) {
    let mut counts = [0u64; 4];
    for (p, l) in predictions.iter().zip(labels) {
        let slot = match (p, l) {
            (1, 1) => 0,
            (0, 0) => 1,
            (1, 0) => 2,
            _ => 3,
        };
        counts[slot] += 1;
    }
    (counts[0], counts[1], counts[2], counts[3])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finite_diff_of_sum_is_ones() {
        let x = [0.3, -1.2, 4.0, 2.5];
        let g = finite_diff(|v| v.iter().sum(), &x, 1e-5).unwrap();
        assert!(g.iter().all(|&v| (v - 1.0).abs() < 1e-10));
    }

    #[test]
    fn finite_diff_of_half_square_norm_is_x() {
        let x = [0.3, -1.2, 4.0, 2.5];
        let g = finite_diff(|v| 0.5 * v.iter().map(|a| a * a).sum::<f64>(), &x, 1e-5).unwrap();
        for (a, b) in g.iter().zip(&x) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn finite_diff_rejects_non_finite() {
        let err = finite_diff(|v| 1.0 / (v[0] - 1e-5), &[0.0], 1e-5);
        assert!(err.is_err());
        assert!(finite_diff(|v| v[0], &[0.0], 0.0).is_err());
    }

    #[test]
    fn iou_of_mask_with_itself() {
        let mask: Vec<bool> = (0..100).map(|i| i < 20).collect();
        let heat: Vec<f32> = mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect();
        assert_eq!(blob_iou(&heat, &mask, 0.2).unwrap(), 1.0);
    }

    #[test]
    fn iou_of_disjoint_regions() {
        let mask: Vec<bool> = (0..100).map(|i| i < 20).collect();
        let heat: Vec<f32> = (0..100).map(|i| if i >= 80 { 1.0 } else { 0.0 }).collect();
        assert_eq!(blob_iou(&heat, &mask, 0.2).unwrap(), 0.0);
    }

    #[test]
    fn report_passes_iff_within_tolerance() {
        assert!(OracleReport::new("x", 1e-5, 1e-4, 0).passed);
        assert!(!OracleReport::new("x", 2e-4, 1e-4, 0).passed);
    }
}

/// Gradient checking of engine graphs against [`finite_diff`].
pub mod gradcheck {
    use super::{finite_diff, relative_error};
    use crate::engine::{Graph, Tensor, Var};
    use crate::Result;
    use rand::Rng as _;

    /// Reduces `var` to a scalar through a fixed pseudo-random projection so
    /// every output element contributes a distinct weight.
    pub fn project(g: &mut Graph<f64>, var: Var, seed: u64) -> Result<Var> {
        let shape = g.value(var).shape().to_vec();
        let mut rng = crate::rng::seeded(seed);
        let weights: Vec<f64> = (0..g.value(var).len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let w = g.constant(Tensor::new(shape, weights)?);
        let prod = g.mul(var, w)?;
        g.sum(prod)
    }

    /// Relative error between backward-pass gradients and central finite
    /// differences for each input tensor, in input order.
    ///
    /// `build` must be deterministic: it is re-run for every perturbation.
    pub fn check_gradients(
        inputs: &[Tensor<f64>],
        build: impl Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
        eps: f64,
    ) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
        let loss = build(&mut g, &vars)?;
        let grads = g.backward(loss)?;
        let mut errors = Vec::with_capacity(inputs.len());
        for (i, input) in inputs.iter().enumerate() {
            let analytic = grads.get_or_zeros(vars[i], input.shape()).into_data();
            let numeric = finite_diff(
                |x| {
                    let mut g = Graph::new();
                    let vars: Vec<Var> = inputs
                        .iter()
                        .enumerate()
                        .map(|(j, t)| {
                            if j == i {
                                g.param(Tensor::new(t.shape().to_vec(), x.to_vec()).expect("same shape"))
                            } else {
                                g.param(t.clone())
                            }
                        })
                        .collect();
                    match build(&mut g, &vars) {
                        Ok(out) => g.value(out).item(),
                        Err(_) => f64::NAN,
                    }
                },
                input.data(),
                eps,
            )?;
            errors.push(relative_error(&analytic, &numeric));
        }
        Ok(errors)
    }
}
