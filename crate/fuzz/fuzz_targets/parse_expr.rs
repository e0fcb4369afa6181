#![no_main]

use libfuzzer_sys::fuzz_target;
use sdecert_cli::expr::parse_expr;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let vars = vec!["x".to_string(), "y".to_string(), "z".to_string()];
    let Ok(e) = parse_expr(text, &vars) else { return };
    let rendered = e.render(&vars);
    let again = parse_expr(&rendered, &vars).expect("rendered expression parses");
    assert_eq!(again.render(&vars), rendered);
    let _ = e.to_poly(vars.len());
});
