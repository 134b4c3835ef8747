//! Shared fixtures for the criterion benchmarks.

use kgrr_core::kg::{queries_both_directions, Dataset, Query};
use kgrr_core::synth::{generate, SynthConfig};

/// The default 60-entity synthetic graph.
pub fn synthetic() -> Dataset {
    generate(&SynthConfig::default())
        .and_then(|s| s.to_dataset())
        .expect("default synthetic config is valid")
}

/// Test queries in both directions.
pub fn test_queries(data: &Dataset) -> Vec<Query> {
    queries_both_directions(&data.test, data.graph.num_original_relations())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_are_non_empty() {
        let d = synthetic();
        assert_eq!(d.graph.num_entities(), 60);
        assert_eq!(test_queries(&d).len(), 2 * d.test.len());
    }
}
