#![no_main]

use fiberpca::tensor_io::{read_csv_long, write_csv_long};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(parsed) = read_csv_long(data, None) else { return };
    assert_eq!(parsed.tensor.shape(), parsed.observed.shape());
    let mut out = Vec::new();
    write_csv_long(&mut out, &parsed.tensor, Some(&parsed.observed)).unwrap();
    let again = read_csv_long(out.as_slice(), Some(parsed.tensor.shape())).unwrap();
    assert_eq!(again.tensor, parsed.tensor);
    assert_eq!(again.observed, parsed.observed);
});
