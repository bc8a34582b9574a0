use std::f64::consts::PI;

pub const VAR_FLOOR: f64 = 1e-9;

/// Gaussian naive Bayes with per-class, per-feature means and population
/// variances.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianNb {
    /// Indexed by class.
    pub log_prior: [f64; 2],
    pub mean: [Vec<f64>; 2],
    pub var: [Vec<f64>; 2],
}

impl GaussianNb {
    pub fn fit(rows: &[f64], dim: usize, labels: &[u8]) -> Self {
        let n = labels.len() as f64;
        let fit_class = |class: u8| {
            let members: Vec<&[f64]> = rows
                .chunks_exact(dim)
                .zip(labels)
                .filter(|(_, &l)| l == class)
                .map(|(r, _)| r)
                .collect();
            let m = members.len() as f64;
            if members.len() == 1 {
                log::warn!("class {class} has a single sample; variances floored at {VAR_FLOOR}");
            }
            let mean: Vec<f64> = (0..dim).map(|j| members.iter().map(|r| r[j]).sum::<f64>() / m).collect();
            let var = (0..dim)
                .map(|j| (members.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / m).max(VAR_FLOOR))
                .collect();
            ((m / n).ln(), mean, var)
        };
        let (p0, m0, v0) = fit_class(0);
        let (p1, m1, v1) = fit_class(1);
        GaussianNb {
            log_prior: [p0, p1],
            mean: [m0, m1],
            var: [v0, v1],
        }
    }

    fn log_joint(&self, class: usize, row: &[f64]) -> f64 {
        let mut acc = self.log_prior[class];
        for ((x, m), v) in row.iter().zip(&self.mean[class]).zip(&self.var[class]) {
            acc -= 0.5 * ((2.0 * PI * v).ln() + (x - m) * (x - m) / v);
        }
        acc
    }

    /// `ln R = ln P(1|x) − ln P(0|x)`.
    pub fn log_ratio(&self, row: &[f64]) -> f64 {
        self.log_joint(1, row) - self.log_joint(0, row)
    }

    /// Class 1 when `R > 1`; the boundary `R = 1` goes to class 0.
    pub fn predict_row(&self, row: &[f64]) -> u8 {
        u8::from(self.log_ratio(row) > 0.0)
    }
}
