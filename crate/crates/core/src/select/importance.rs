use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::SelectError;
use crate::boosting::GbdtModel;
use crate::forest::ForestModel;
use crate::ingest::escape_cell;
use crate::preprocess::Dataset;
use crate::tree::{DecisionTree, Node};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImportanceMode {
    /// Summed split gain.
    Gain,
    /// Summed hessian mass (boosting) or sample count (forest) at splits.
    Cover,
    /// Number of splits.
    Weight,
}

impl ImportanceMode {
    pub const ALL: [ImportanceMode; 3] =
        [ImportanceMode::Gain, ImportanceMode::Cover, ImportanceMode::Weight];

    pub fn as_str(self) -> &'static str {
        match self {
            ImportanceMode::Gain => "gain",
            ImportanceMode::Cover => "cover",
            ImportanceMode::Weight => "weight",
        }
    }
}

impl fmt::Display for ImportanceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ImportanceMode {
    type Err = SelectError;
    fn from_str(s: &str) -> Result<Self, SelectError> {
        ImportanceMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| SelectError::UnknownMode(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    /// Identity of the model that produced the scores.
    pub model: String,
    /// Mode used by selection and ranking.
    pub mode: ImportanceMode,
    pub feature_names: Vec<String>,
    pub gain: Vec<f64>,
    pub cover: Vec<f64>,
    pub weight: Vec<u64>,
}

impl ImportanceReport {
    pub fn scores(&self, mode: ImportanceMode) -> Vec<f64> {
        match mode {
            ImportanceMode::Gain => self.gain.clone(),
            ImportanceMode::Cover => self.cover.clone(),
            ImportanceMode::Weight => self.weight.iter().map(|&w| w as f64).collect(),
        }
    }

    /// True when the model never split.
    pub fn is_empty(&self) -> bool {
        self.weight.iter().all(|&w| w == 0)
    }

    /// (name, score) in descending score order; equal scores keep column order.
    pub fn ranked(&self) -> Vec<(&str, f64)> {
        let mut out: Vec<(&str, f64)> = self
            .feature_names
            .iter()
            .map(String::as_str)
            .zip(self.scores(self.mode))
            .collect();
        out.sort_by(|a, b| b.1.total_cmp(&a.1));
        out
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<(), SelectError> {
        writeln!(out, "feature,gain,cover,weight")?;
        for (j, name) in self.feature_names.iter().enumerate() {
            writeln!(
                out,
                "{},{},{},{}",
                escape_cell(name),
                self.gain[j],
                self.cover[j],
                self.weight[j]
            )?;
        }
        Ok(())
    }

    /// One `model,feature,mode,score` row per feature and mode.
    pub fn write_long<W: Write>(&self, mut out: W) -> Result<(), SelectError> {
        writeln!(out, "model,feature,mode,score")?;
        for mode in ImportanceMode::ALL {
            for (name, s) in self.feature_names.iter().zip(self.scores(mode)) {
                writeln!(out, "{},{},{mode},{s}", escape_cell(&self.model), escape_cell(name))?;
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&serde_json::to_value(self).expect("plain data"))
            .expect("plain data")
    }
}

/// Accumulates split statistics over any set of trees.
pub fn tree_importance(
    trees: &[DecisionTree],
    feature_names: &[String],
    model: &str,
    mode: ImportanceMode,
) -> Result<ImportanceReport, SelectError> {
    let p = feature_names.len();
    let mut report = ImportanceReport {
        model: model.to_string(),
        mode,
        feature_names: feature_names.to_vec(),
        gain: vec![0.0; p],
        cover: vec![0.0; p],
        weight: vec![0; p],
    };
    for tree in trees {
        for node in tree.nodes() {
            if let Node::Split { feature, gain, cover, .. } = node {
                let f = *feature as usize;
                if f >= p {
                    return Err(SelectError::LengthMismatch { left: f + 1, right: p });
                }
                // gains are floored above zero at training; max keeps the
                // nonnegativity invariant for hand-built trees too
                report.gain[f] += gain.max(0.0);
                report.cover[f] += cover.max(0.0);
                report.weight[f] += 1;
            }
        }
    }
    Ok(report)
}

pub fn model_importance(
    model: &GbdtModel,
    feature_names: &[String],
    model_id: &str,
    mode: ImportanceMode,
) -> Result<ImportanceReport, SelectError> {
    if model.trees().is_empty() {
        return Err(SelectError::UntrainedModel);
    }
    check_width(model.n_features(), feature_names)?;
    tree_importance(model.trees(), feature_names, model_id, mode)
}

pub fn forest_importance(
    model: &ForestModel,
    feature_names: &[String],
    model_id: &str,
    mode: ImportanceMode,
) -> Result<ImportanceReport, SelectError> {
    if model.trees().is_empty() {
        return Err(SelectError::UntrainedModel);
    }
    check_width(model.n_features(), feature_names)?;
    tree_importance(model.trees(), feature_names, model_id, mode)
}

fn check_width(n: usize, names: &[String]) -> Result<(), SelectError> {
    if n != names.len() {
        return Err(SelectError::LengthMismatch {
            left: n,
            right: names.len(),
        });
    }
    Ok(())
}

/// Features kept by a nonzero-importance filter, in original column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub indices: Vec<usize>,
    pub names: Vec<String>,
}

impl Selection {
    pub fn project(&self, data: &Dataset) -> Result<Dataset, SelectError> {
        Ok(data.project_names(&self.names)?)
    }
}

pub fn select_nonzero(report: &ImportanceReport) -> Result<Selection, SelectError> {
    let indices: Vec<usize> = report
        .scores(report.mode)
        .iter()
        .enumerate()
        .filter(|(_, &s)| s > 0.0)
        .map(|(j, _)| j)
        .collect();
    if indices.is_empty() {
        return Err(SelectError::AllZero(report.mode));
    }
    Ok(Selection {
        names: indices.iter().map(|&j| report.feature_names[j].clone()).collect(),
        indices,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boosting::{train_lgbm, train_xgb, GbdtParams};
    use crate::preprocess::FeatureKind;
    use crate::tree::LeafValue;

    fn names(p: usize) -> Vec<String> {
        (0..p).map(|j| format!("f{j}")).collect()
    }

    fn leaf(w: f64) -> Node {
        Node::Leaf {
            value: LeafValue::Weight(w),
            cover: 1.0,
            samples: 1,
        }
    }

    fn one_split(feature: u32) -> DecisionTree {
        DecisionTree::from_nodes(vec![
            Node::Split {
                feature,
                threshold: 0.5,
                left: 1,
                right: 2,
                gain: 2.5,
                cover: 8.0,
                samples: 8,
            },
            leaf(-1.0),
            leaf(1.0),
        ])
        .unwrap()
    }

    #[test]
    fn single_split_on_feature_three() {
        let r = tree_importance(&[one_split(3)], &names(5), "m", ImportanceMode::Weight).unwrap();
        assert_eq!(r.weight, vec![0, 0, 0, 1, 0]);
        assert_eq!(r.gain, vec![0.0, 0.0, 0.0, 2.5, 0.0]);
        assert_eq!(r.cover, vec![0.0, 0.0, 0.0, 8.0, 0.0]);
        let s = select_nonzero(&r).unwrap();
        assert_eq!(s.indices, vec![3]);
        assert_eq!(s.names, vec!["f3"]);
    }

    #[test]
    fn stumps_give_an_empty_report() {
        let stump = DecisionTree::from_nodes(vec![leaf(0.3)]).unwrap();
        let r = tree_importance(&[stump.clone(), stump], &names(3), "m", ImportanceMode::Gain)
            .unwrap();
        assert!(r.is_empty());
        assert!(matches!(select_nonzero(&r), Err(SelectError::AllZero(ImportanceMode::Gain))));
    }

    #[test]
    fn selection_keeps_column_order() {
        let mut r = tree_importance(&[], &names(3), "m", ImportanceMode::Gain).unwrap();
        r.gain = vec![5.0, 0.0, 1.0];
        let s = select_nonzero(&r).unwrap();
        assert_eq!(s.names, vec!["f0", "f2"]);
        assert_eq!(r.ranked()[0], ("f0", 5.0));
    }

    #[test]
    fn zero_tree_model_is_untrained() {
        let m = GbdtModel::from_parts(GbdtParams::xgb(), vec![], 0.0, 2, None).unwrap();
        assert!(matches!(
            model_importance(&m, &names(2), "m", ImportanceMode::Weight),
            Err(SelectError::UntrainedModel)
        ));
    }

    fn synth_data(n: usize) -> Dataset {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let cols: Vec<Vec<f64>> =
            (0..4).map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let labels = (0..n).map(|i| (cols[0][i] + 0.5 * cols[2][i] > 0.0) as u32).collect();
        Dataset::new(names(4), vec![FeatureKind::Numeric; 4], cols, labels).unwrap()
    }

    /// Split count by explicit recursion from the root, independent of the
    /// flat node scan.
    fn count_splits(tree: &DecisionTree, node: usize, counts: &mut [u64]) {
        if let Node::Split { feature, left, right, .. } = &tree.nodes()[node] {
            counts[*feature as usize] += 1;
            count_splits(tree, *left as usize, counts);
            count_splits(tree, *right as usize, counts);
        }
    }

    #[test]
    fn weight_equals_recursive_split_count() {
        let data = synth_data(600);
        let mut params = GbdtParams::xgb();
        params.n_estimators = 15;
        let m = train_xgb(&data, &params, 3).unwrap();
        let r = model_importance(&m, data.feature_names(), "xgb", ImportanceMode::Weight).unwrap();
        let mut oracle = vec![0u64; 4];
        for t in m.trees() {
            count_splits(t, 0, &mut oracle);
        }
        assert_eq!(r.weight, oracle);
        assert!(r.gain.iter().chain(&r.cover).all(|&s| s >= 0.0));
        // the two informative columns dominate
        let top: Vec<&str> = r.ranked().iter().take(2).map(|p| p.0).collect();
        assert!(top.contains(&"f0"));
    }

    #[test]
    fn lgbm_cover_is_hessian_mass() {
        let data = synth_data(400);
        let mut params = GbdtParams::lgbm();
        params.n_estimators = 5;
        let m = train_lgbm(&data, &params, 1).unwrap();
        let r = model_importance(&m, data.feature_names(), "lgbm", ImportanceMode::Cover).unwrap();
        // one row's hessian is at most 1/4
        let max_cover = r.weight.iter().map(|&w| w as f64).sum::<f64>() * 400.0 * 0.25;
        assert!(r.cover.iter().sum::<f64>() <= max_cover);
    }

    #[test]
    fn exports_round_trip() {
        let r = tree_importance(&[one_split(1)], &names(2), "id,1", ImportanceMode::Weight)
            .unwrap();
        let mut csv = Vec::new();
        r.write_csv(&mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap(), "feature,gain,cover,weight\nf0,0,0,0\nf1,2.5,8,1\n");
        let mut long = Vec::new();
        r.write_long(&mut long).unwrap();
        let long = String::from_utf8(long).unwrap();
        assert_eq!(long.lines().count(), 7);
        assert!(long.contains("\"id,1\",f1,weight,1"));
        let back: ImportanceReport = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(back, r);
        assert_eq!("cover".parse::<ImportanceMode>().unwrap(), ImportanceMode::Cover);
        assert!("split".parse::<ImportanceMode>().is_err());
    }
}
