use std::collections::{BTreeMap, BTreeSet};

use ndarray::Array2;
use thiserror::Error;

use crate::model::Group;
use crate::{FeatureVector, N_FEATURES};

#[derive(Debug, Error, PartialEq)]
pub enum DatasetError {
    #[error("row {row}: day_index {day} outside 1..={d_max}")]
    DayOutOfRange { row: usize, day: u32, d_max: u32 },
    #[error("row {row}: non-finite feature")]
    NonFinite { row: usize },
    #[error("device {device} appears in categories {first} and {second}")]
    InconsistentCategory { device: u32, first: u32, second: u32 },
}

/// Labeled feature rows spanning days `1..=d_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    rows: Vec<FeatureVector>,
    d_max: u32,
    categories: BTreeMap<u32, u32>,
}

impl LabeledDataset {
    /// `d_max` defaults to the largest day present.
    pub fn new(rows: Vec<FeatureVector>) -> Result<Self, DatasetError> {
        let d_max = rows.iter().map(|r| r.day_index).max().unwrap_or(0);
        Self::with_days(rows, d_max)
    }

    pub fn with_days(rows: Vec<FeatureVector>, d_max: u32) -> Result<Self, DatasetError> {
        let mut categories = BTreeMap::new();
        for (i, r) in rows.iter().enumerate() {
            if r.day_index < 1 || r.day_index > d_max {
                return Err(DatasetError::DayOutOfRange { row: i, day: r.day_index, d_max });
            }
            if !r.is_finite() {
                return Err(DatasetError::NonFinite { row: i });
            }
            let first = *categories.entry(r.device_id).or_insert(r.category_id);
            if first != r.category_id {
                return Err(DatasetError::InconsistentCategory { device: r.device_id, first, second: r.category_id });
            }
        }
        Ok(LabeledDataset { rows, d_max, categories })
    }

    pub fn rows(&self) -> &[FeatureVector] {
        &self.rows
    }

    pub fn into_rows(self) -> Vec<FeatureVector> {
        self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn d_max(&self) -> u32 {
        self.d_max
    }

    /// Device id to category id.
    pub fn device_categories(&self) -> &BTreeMap<u32, u32> {
        &self.categories
    }

    pub fn devices(&self) -> Vec<u32> {
        self.categories.keys().copied().collect()
    }

    pub fn categories(&self) -> Vec<u32> {
        self.categories.values().copied().collect::<BTreeSet<_>>().into_iter().collect()
    }

    /// Size of the label space for `group`: one past the largest id.
    pub fn n_classes(&self, group: Group) -> usize {
        let ids = if group.by_category() { self.categories() } else { self.devices() };
        ids.last().map_or(0, |&m| m as usize + 1)
    }

    /// Rows whose day lies in `days`.
    pub fn days(&self, days: std::ops::RangeInclusive<u32>) -> Vec<&FeatureVector> {
        self.rows.iter().filter(|r| days.contains(&r.day_index)).collect()
    }
}

/// Stacks rows into a feature matrix.
pub fn feature_matrix<'a>(rows: impl IntoIterator<Item = &'a FeatureVector>) -> Array2<f64> {
    let flat: Vec<f64> = rows.into_iter().flat_map(|r| r.features).collect();
    let n = flat.len() / N_FEATURES;
    Array2::from_shape_vec((n, N_FEATURES), flat).expect("rows are fixed width")
}

pub fn labels<'a>(rows: impl IntoIterator<Item = &'a FeatureVector>, group: Group) -> Vec<usize> {
    rows.into_iter().map(|r| group.label(r)).collect()
}
