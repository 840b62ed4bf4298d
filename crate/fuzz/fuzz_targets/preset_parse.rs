#![no_main]

use libfuzzer_sys::fuzz_target;

// The preset key=value parser must never panic on arbitrary text.
fuzz_target!(|text: &str| {
    if let Ok((kind, params)) = lsflab::io::parse_preset(text) {
        // Anything the parser accepts must survive spec construction
        // without panicking; validation errors are fine.
        let joined: Vec<(&str, f64)> =
            params.iter().map(|(k, v)| (k.as_str(), *v)).collect();
        if let Ok(k) = lsflab::shapes::ShapeKind::parse(&kind) {
            let spec = lsflab::shapes::ShapeSpec::new(k, &joined);
            let _ = spec.validate();
        }
    }
});
