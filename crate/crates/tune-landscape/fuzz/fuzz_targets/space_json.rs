#![no_main]

use libfuzzer_sys::fuzz_target;
use tune_landscape::space::ParameterSpace;

fuzz_target!(|data: &[u8]| {
    let Ok(json) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(space) = ParameterSpace::from_json(json) {
        // A space that loads must be internally consistent.
        let n = space.cardinality();
        assert!(n >= 1);
        let config = space.decode(n - 1).expect("last index decodes");
        assert_eq!(space.encode(&config).expect("decode output encodes"), n - 1);
        let def = space.to_file_def();
        let json2 = serde_json::to_string(&def).unwrap();
        let space2 = ParameterSpace::from_json(&json2).expect("definition round trip");
        assert_eq!(space2.cardinality(), n);
    }
});
