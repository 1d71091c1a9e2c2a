#![no_main]

use libfuzzer_sys::fuzz_target;
use licfg_cli::config::parse_config_str;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(cfg) = parse_config_str(text) {
            let again = parse_config_str(&cfg.render()).expect("rendered config must parse");
            assert_eq!(again, cfg);
        }
    }
});
