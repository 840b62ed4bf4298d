#![no_main]

use libfuzzer_sys::fuzz_target;

// The binary field reader must reject arbitrary input with an error,
// never panic or allocate unboundedly.
fuzz_target!(|data: &[u8]| {
    if let Ok(field) = lsflab::io::read_lsf1_bytes(data) {
        // Accepted input must round-trip byte-for-byte.
        let mut out = Vec::new();
        lsflab::io::write_lsf1(&field, &mut out).unwrap();
        let again = lsflab::io::read_lsf1_bytes(&out).unwrap();
        assert_eq!(field.grid.dims, again.grid.dims);
        assert_eq!(field.values.len(), again.values.len());
    }
});
