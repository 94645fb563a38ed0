#![no_main]
use dec_core::rk_export::ButcherTableau;
use libfuzzer_sys::fuzz_target;

// Anything accepted must survive a write/read cycle unchanged.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(tab) = ButcherTableau::from_json(text) {
        assert!(tab.a.is_strictly_lower());
        let again = ButcherTableau::from_json(&tab.to_json()).expect("own output must parse");
        assert_eq!(again.a, tab.a);
        assert_eq!(again.b, tab.b);
        assert_eq!(again.c, tab.c);
    }
});
