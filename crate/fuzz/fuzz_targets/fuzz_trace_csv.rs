#![no_main]
use libfuzzer_sys::fuzz_target;

// The plot subcommand re-reads trace and aggregate CSV files written by
// earlier runs (possibly hand-edited); both readers must fail cleanly on
// arbitrary input.
fuzz_target!(|data: &[u8]| {
    let _ = ducb_seek::output::parse_trial_csv(data);
    let _ = ducb_seek::output::parse_aggregate_csv(data);
});
