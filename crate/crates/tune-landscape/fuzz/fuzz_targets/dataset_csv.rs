#![no_main]

use std::sync::Arc;

use libfuzzer_sys::fuzz_target;
use tune_landscape::dataset::{self, DuplicatePolicy, FileFormat};
use tune_landscape::space::{Parameter, ParameterSpace};

fuzz_target!(|data: &[u8]| {
    let space = Arc::new(
        ParameterSpace::new(
            "fuzz",
            vec![
                Parameter {
                    name: "a".into(),
                    values: vec![0, 1, 2, 3],
                },
                Parameter {
                    name: "b".into(),
                    values: vec![1, 2, 4, 8],
                },
            ],
            &[],
        )
        .unwrap(),
    );
    if let Ok(ds) = dataset::ingest(
        data,
        FileFormat::Csv,
        space.clone(),
        "dev",
        DuplicatePolicy::KeepFirst,
    ) {
        // Anything that ingests must re-export and re-ingest cleanly.
        let mut buf = Vec::new();
        ds.export(&mut buf, FileFormat::Csv).unwrap();
        let again = dataset::ingest(
            buf.as_slice(),
            FileFormat::Csv,
            space,
            "dev",
            DuplicatePolicy::KeepFirst,
        )
        .expect("exported dataset must ingest");
        assert_eq!(again.len(), ds.len());
    }
});
