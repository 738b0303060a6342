#![no_main]

use libfuzzer_sys::fuzz_target;
use nie::scenarios::Preset;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    // Parsing must never panic; a successful parse must survive a
    // print/reparse round trip.
    if let Ok(preset) = Preset::from_text(text) {
        let printed = preset.to_text();
        let reparsed = Preset::from_text(&printed)
            .expect("printed preset must reparse");
        assert_eq!(printed, reparsed.to_text());
    }
});
