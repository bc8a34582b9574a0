//! Classical classifiers over extracted feature vectors.
//!
//! Every classifier standardizes features with statistics from its training
//! matrix and applies the same transform at prediction time.

mod bayes;
mod forest;
mod knn;
mod linear;
mod mlp;
mod standardize;

use std::fmt::Write as _;

pub use bayes::{GaussianNb, VAR_FLOOR};
pub use forest::{DecisionTree, ForestConfig, RandomForest};
pub use knn::Knn;
pub use linear::{fit_logistic, fit_svm, logistic_objective, svm_objective, LinearModel, LogisticConfig, SvmConfig};
pub use mlp::{Mlp, MlpConfig};
pub use standardize::Standardizer;

use crate::features::FeatureMatrix;
use crate::metrics::{evaluate, MetricReport, REPORT_CSV_HEADER};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ClassifierKind {
    Knn,
    Logistic,
    Svm,
    NaiveBayes,
    RandomForest,
    /// Multilayer perceptron (listed as "Perception" in the results table).
    Mlp,
}

impl ClassifierKind {
    pub const ALL: [ClassifierKind; 6] = [
        ClassifierKind::Knn,
        ClassifierKind::Logistic,
        ClassifierKind::Svm,
        ClassifierKind::NaiveBayes,
        ClassifierKind::RandomForest,
        ClassifierKind::Mlp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ClassifierKind::Knn => "KNN",
            ClassifierKind::Logistic => "Logistic",
            ClassifierKind::Svm => "SVM",
            ClassifierKind::NaiveBayes => "Naive Bayes",
            ClassifierKind::RandomForest => "Random Forest",
            ClassifierKind::Mlp => "MLP",
        }
    }
}

impl std::fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Hyperparameters for all six classifiers.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierConfig {
    pub knn_k: usize,
    pub logistic: LogisticConfig,
    pub svm: SvmConfig,
    pub forest: ForestConfig,
    pub mlp: MlpConfig,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            knn_k: 5,
            logistic: LogisticConfig::default(),
            svm: SvmConfig::default(),
            forest: ForestConfig::default(),
            mlp: MlpConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Model {
    Knn(Knn),
    Logistic(LinearModel),
    Svm(LinearModel),
    NaiveBayes(GaussianNb),
    RandomForest(RandomForest),
    Mlp(Mlp),
}

#[derive(Clone, Debug, PartialEq)]
pub struct FittedClassifier {
    pub kind: ClassifierKind,
    pub standardizer: Standardizer,
    pub model: Model,
}

pub fn fit(kind: ClassifierKind, train: &FeatureMatrix, config: &ClassifierConfig) -> Result<FittedClassifier> {
    if train.rows() < 2 || !train.has_both_classes() {
        return Err(Error::InvalidArgument(format!("{kind}: training data needs both classes")));
    }
    let standardizer = Standardizer::fit(train);
    let rows = standardizer.transform(train);
    let (d, y) = (train.dim(), train.labels.as_slice());
    let model = match kind {
        ClassifierKind::Knn => Model::Knn(Knn::fit(rows, d, y.to_vec(), config.knn_k)?),
        ClassifierKind::Logistic => Model::Logistic(fit_logistic(&rows, d, y, &config.logistic)?),
        ClassifierKind::Svm => Model::Svm(fit_svm(&rows, d, y, &config.svm)?),
        ClassifierKind::NaiveBayes => Model::NaiveBayes(GaussianNb::fit(&rows, d, y)),
        ClassifierKind::RandomForest => Model::RandomForest(RandomForest::fit(&rows, d, y, &config.forest)?),
        ClassifierKind::Mlp => Model::Mlp(Mlp::fit(&rows, d, y, &config.mlp)?),
    };
    Ok(FittedClassifier {
        kind,
        standardizer,
        model,
    })
}

impl FittedClassifier {
    pub fn predict(&self, x: &FeatureMatrix) -> Result<Vec<u8>> {
        let d = self.standardizer.dim();
        if x.dim() != d {
            return Err(Error::Shape(format!("{}: expected {d} features, got {}", self.kind, x.dim())));
        }
        let rows = self.standardizer.transform(x);
        let per_row = |f: &dyn Fn(&[f64]) -> u8| rows.chunks_exact(d).map(f).collect();
        Ok(match &self.model {
            Model::Knn(m) => per_row(&|r| m.predict_row(r)),
            Model::Logistic(m) | Model::Svm(m) => per_row(&|r| m.predict_row(r)),
            Model::NaiveBayes(m) => per_row(&|r| m.predict_row(r)),
            Model::RandomForest(m) => per_row(&|r| m.predict_row(r)),
            Model::Mlp(m) => m.predict(&rows, d)?,
        })
    }

    /// Naive Bayes log posterior ratio for each row; `None` for other kinds.
    pub fn log_ratios(&self, x: &FeatureMatrix) -> Option<Vec<f64>> {
        let Model::NaiveBayes(nb) = &self.model else {
            return None;
        };
        let rows = self.standardizer.transform(x);
        Some(rows.chunks_exact(x.dim()).map(|r| nb.log_ratio(r)).collect())
    }
}

/// One classifier's outcome in a grid; failures keep their message.
#[derive(Clone, Debug, PartialEq)]
pub struct GridCell {
    pub kind: ClassifierKind,
    pub result: std::result::Result<MetricReport, String>,
}

/// Fits all six classifiers on `train` and evaluates each on `eval`.
/// A classifier that fails is recorded as an error cell.
pub fn fit_all(train: &FeatureMatrix, eval: &FeatureMatrix, config: &ClassifierConfig) -> Result<Vec<GridCell>> {
    if train.dim() != eval.dim() {
        return Err(Error::Shape(format!(
            "train has {} features, eval has {}",
            train.dim(),
            eval.dim()
        )));
    }
    Ok(ClassifierKind::ALL
        .iter()
        .map(|&kind| {
            let result = fit(kind, train, config)
                .and_then(|m| m.predict(eval))
                .and_then(|p| evaluate(&p, &eval.labels))
                .map_err(|e| {
                    log::warn!("{kind} failed: {e}");
                    e.to_string()
                });
            GridCell { kind, result }
        })
        .collect())
}

/// Report CSV for grids keyed by feature-source name; failed cells print
/// `err` in every metric column.
pub fn grid_csv(grids: &[(String, Vec<GridCell>)]) -> String {
    let mut out = format!("{REPORT_CSV_HEADER}\n");
    for (model, cells) in grids {
        for cell in cells {
            match &cell.result {
                Ok(r) => out.push_str(&r.csv_row(model, cell.kind.name())),
                Err(_) => out.push_str(&format!("{model},{},err,err,err,err,err", cell.kind.name())),
            }
            out.push('\n');
        }
    }
    out
}

/// Accuracy table with one row per feature source and one column per
/// classifier, as percentages with two decimals.
pub fn grid_table(grids: &[(String, Vec<GridCell>)]) -> String {
    let first = grids.iter().map(|(n, _)| n.len()).max().unwrap_or(0).max("Features".len());
    let widths: Vec<usize> = ClassifierKind::ALL.iter().map(|k| k.name().len().max(6)).collect();
    let mut out = format!("{:<first$}", "Features");
    for (kind, w) in ClassifierKind::ALL.iter().zip(&widths) {
        let _ = write!(out, "  {:>w$}", kind.name());
    }
    out.push('\n');
    for (name, cells) in grids {
        let _ = write!(out, "{name:<first$}");
        for (kind, w) in ClassifierKind::ALL.iter().zip(&widths) {
            let cell = match cells.iter().find(|c| c.kind == *kind).map(|c| &c.result) {
                Some(Ok(r)) => r.accuracy.value().map_or("undef".to_string(), |a| format!("{:.2}", a * 100.0)),
                _ => "err".to_string(),
            };
            let _ = write!(out, "  {cell:>w$}");
        }
        out.push('\n');
    }
    out
}
