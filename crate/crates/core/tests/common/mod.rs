#![allow(dead_code)]

use std::path::{Path, PathBuf};

use retarget::profiler::Dataset;
use retarget::spec::{parse_spec, ChartSpec, DataLocation};

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

/// Corpus specs in name order, with the dataset each one was written for.
pub fn corpus() -> Vec<(String, ChartSpec, Dataset)> {
    let dir = fixtures().join("corpus");
    let mut paths: Vec<PathBuf> = std::fs::read_dir(&dir)
        .unwrap()
        .flatten()
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let spec = parse_spec(&std::fs::read_to_string(&p).unwrap()).unwrap();
            let url = match &spec.data.as_ref().unwrap().location {
                DataLocation::Url(u) => u.clone(),
                DataLocation::Inline(_) => panic!("corpus specs reference files"),
            };
            let data = Dataset::load(&dir.join(url)).unwrap();
            let name = p.file_stem().unwrap().to_string_lossy().into_owned();
            (name, spec, data)
        })
        .collect()
}

pub fn corpus_spec(name: &str) -> ChartSpec {
    let path = fixtures().join("corpus").join(format!("{name}.json"));
    parse_spec(&std::fs::read_to_string(path).unwrap()).unwrap()
}

pub fn target(name: &str) -> Dataset {
    Dataset::load(&fixtures().join("datasets").join(name)).unwrap()
}

pub fn targets() -> Vec<Dataset> {
    ["movies.json", "organisms.csv", "stocks.csv", "unemployment.csv"]
        .into_iter()
        .map(target)
        .collect()
}

/// Reads a CSV column as strings, independently of the crate's ingestion.
pub fn csv_column(path: &Path, name: &str) -> Vec<String> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let idx = r.headers().unwrap().iter().position(|h| h == name).unwrap();
    r.records().map(|rec| rec.unwrap()[idx].to_string()).collect()
}
