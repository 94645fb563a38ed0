#![no_main]
use dec_core::cg1d::Basis;
use dec_core::dec_ode::parse_variant_name;
use dec_core::NodeFamily;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let _ = parse_variant_name(text);
    let _ = text.parse::<NodeFamily>();
    if let Ok(b) = text.parse::<Basis>() {
        assert_eq!(b.to_string().parse::<Basis>().unwrap(), b);
    }
});
