#![no_main]
use libfuzzer_sys::fuzz_target;

// Scenario configs come from user-edited files; parsing plus validation must
// reject anything malformed with an error, never a panic.
fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = ducb_seek::config::ScenarioConfig::from_json_str(text);
    }
});
