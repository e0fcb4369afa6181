#![no_main]

use libfuzzer_sys::fuzz_target;
use sdecert_cli::problem::parse_problem;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(pf) = parse_problem(text) else { return };
    let rendered = pf.render();
    let again = parse_problem(&rendered).expect("rendered problem parses");
    assert_eq!(again.render(), rendered);
    // Building may fail on bad input but must not panic.
    let _ = pf.system();
    let _ = pf.density();
    let _ = pf.controlled();
});
