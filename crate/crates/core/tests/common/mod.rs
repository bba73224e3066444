#![allow(dead_code)]

use std::sync::OnceLock;

use pemr::dataset::{generate_dataset, rectify_dataset, Dataset, GenParams};

/// Small generated dataset (8 houses), before rectification.
pub fn raw() -> &'static Dataset {
    static DS: OnceLock<Dataset> = OnceLock::new();
    DS.get_or_init(|| {
        generate_dataset(&GenParams {
            houses: 8,
            samples_per_house: 10,
            test_fraction: 0.25,
            seed: 42,
            ..GenParams::default()
        })
        .unwrap()
        .0
    })
}

pub fn rectified() -> &'static Dataset {
    static DS: OnceLock<Dataset> = OnceLock::new();
    DS.get_or_init(|| rectify_dataset(raw()).unwrap().0)
}
