#![no_main]
use dec_core::stability::GridSpec;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(spec) = text.parse::<GridSpec>() {
        assert!(spec.nx >= 2 && spec.ny >= 2);
        assert!(spec.re.0 < spec.re.1 && spec.im.0 < spec.im.1);
    }
});
