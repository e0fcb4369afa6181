#![no_main]

use libfuzzer_sys::fuzz_target;
use sdecert::sdp::{read_sdpa, read_sdpa_document, write_sdpa};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let _ = read_sdpa_document(text);
    let Ok(p) = read_sdpa(text) else { return };
    let back = read_sdpa(&write_sdpa(&p)).expect("written SDPA parses");
    assert_eq!(back, p);
});
