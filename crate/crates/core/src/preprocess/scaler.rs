use serde::{Deserialize, Serialize};

use super::{Dataset, FeatureKind};

const STD_FLOOR: f64 = 1e-12;

/// Per-column z-score parameters; `None` for bit columns, which pass through.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub columns: Vec<Option<ColumnScale>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnScale {
    pub mean: f64,
    pub std: f64,
}

impl ColumnScale {
    #[inline]
    pub fn apply(&self, x: f64) -> f64 {
        (x - self.mean) / self.std
    }

    #[inline]
    pub fn invert(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }
}

fn fit_column(values: &[f64]) -> ColumnScale {
    let n = values.len();
    if n == 0 {
        return ColumnScale { mean: 0.0, std: 1.0 };
    }
    let first = values[0];
    if values.iter().all(|&v| v == first) {
        // exact mean so the column maps to exactly zero
        return ColumnScale {
            mean: first,
            std: STD_FLOOR,
        };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    ColumnScale {
        mean,
        std: var.sqrt().max(STD_FLOOR),
    }
}

/// Fits population mean/std on the numeric columns of the training set.
pub fn fit_scaler(train: &Dataset) -> ScalerParams {
    ScalerParams {
        columns: train
            .feature_kinds()
            .iter()
            .enumerate()
            .map(|(j, kind)| match kind {
                FeatureKind::Numeric => Some(fit_column(train.column(j))),
                FeatureKind::Bit => None,
            })
            .collect(),
    }
}

pub fn apply_scaler(params: &ScalerParams, data: &Dataset) -> Dataset {
    let mut out = data.clone();
    for (col, scale) in out.columns_mut().iter_mut().zip(&params.columns) {
        if let Some(s) = scale {
            col.iter_mut().for_each(|v| *v = s.apply(*v));
        }
    }
    out
}

impl ScalerParams {
    pub fn apply_row(&self, row: &mut [f64]) {
        for (v, scale) in row.iter_mut().zip(&self.columns) {
            if let Some(s) = scale {
                *v = s.apply(*v);
            }
        }
    }

    pub fn invert_row(&self, row: &mut [f64]) {
        for (v, scale) in row.iter_mut().zip(&self.columns) {
            if let Some(s) = scale {
                *v = s.invert(*v);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ds(cols: Vec<Vec<f64>>, kinds: Vec<FeatureKind>) -> Dataset {
        let n = cols[0].len();
        let names = (0..cols.len()).map(|j| format!("f{j}")).collect();
        Dataset::new(names, kinds, cols, vec![0; n]).unwrap()
    }

    #[test]
    fn zero_ten_becomes_minus_one_one() {
        let d = ds(vec![vec![0.0, 10.0]], vec![FeatureKind::Numeric]);
        let p = fit_scaler(&d);
        assert_eq!(p.columns[0], Some(ColumnScale { mean: 5.0, std: 5.0 }));
        assert_eq!(apply_scaler(&p, &d).column(0), &[-1.0, 1.0]);
    }

    #[test]
    fn constant_column_maps_to_zero() {
        let d = ds(vec![vec![0.1, 0.1, 0.1]], vec![FeatureKind::Numeric]);
        let out = apply_scaler(&fit_scaler(&d), &d);
        assert!(out.column(0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn bit_columns_untouched() {
        let d = ds(
            vec![vec![1.0, 2.0, 9.0], vec![0.0, 1.0, 1.0]],
            vec![FeatureKind::Numeric, FeatureKind::Bit],
        );
        let p = fit_scaler(&d);
        assert!(p.columns[1].is_none());
        assert_eq!(apply_scaler(&p, &d).column(1), d.column(1));
    }

    #[test]
    fn train_params_leave_test_mean_nonzero() {
        let train = ds(vec![vec![0.0, 2.0, 4.0]], vec![FeatureKind::Numeric]);
        let test = ds(vec![vec![10.0, 12.0]], vec![FeatureKind::Numeric]);
        let out = apply_scaler(&fit_scaler(&train), &test);
        let mean: f64 = out.column(0).iter().sum::<f64>() / 2.0;
        assert!(mean.abs() > 1.0);
    }

    proptest! {
        #[test]
        fn standardized_moments_and_inversion(
            values in prop::collection::vec(-1e6f64..1e6, 2..200)
        ) {
            let d = ds(vec![values.clone()], vec![FeatureKind::Numeric]);
            let p = fit_scaler(&d);
            let out = apply_scaler(&p, &d);
            let z = out.column(0);
            let n = z.len() as f64;
            let s = p.columns[0].unwrap();
            if s.std > 1e-6 {
                let mean = z.iter().sum::<f64>() / n;
                let var = z.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                prop_assert!(mean.abs() < 1e-9);
                prop_assert!((var - 1.0).abs() < 1e-9);
            }
            for (orig, zi) in values.iter().zip(z) {
                let back = s.invert(*zi);
                prop_assert!((back - orig).abs() <= 1e-9 * orig.abs().max(1.0));
            }
        }
    }
}
