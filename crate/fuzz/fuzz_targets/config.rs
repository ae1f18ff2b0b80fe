#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    // A leading `#set key=value` comment doubles as a `--set` override.
    let overrides: Vec<String> = text.lines().take(1).filter(|l| l.starts_with("#set ")).map(|l| l[5..].to_string()).collect();
    if let Ok(cfg) = fluctlab::cli::parse_config_str(text, &overrides) {
        // Accepted configs must build every runtime object without panicking.
        let _ = cfg.scenario();
        let _ = cfg.functional();
        let _ = cfg.levels();
        let text = toml::to_string(&cfg).expect("resolved config serializes");
        assert_eq!(fluctlab::cli::parse_config_str(&text, &[]).ok().as_ref(), Some(&cfg));
    }
});
