#![no_main]
use dec_core::bench::ConvergenceReport;
use libfuzzer_sys::fuzz_target;

// Writing a parsed report and reading it back is a fixed point.
fuzz_target!(|data: &[u8]| {
    if let Ok(report) = ConvergenceReport::read_csv(data) {
        let text = report.to_csv_string();
        let again = ConvergenceReport::from_csv_str(&text).expect("own output must parse");
        assert_eq!(again.to_csv_string(), text);
    }
});
