#![no_main]

use dynwave::config::RunConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(cfg) = RunConfig::from_toml(text) {
        // Anything accepted must survive a write/read cycle, except seeds
        // that TOML cannot represent.
        if let Ok(again) = cfg.to_toml() {
            let back = RunConfig::from_toml(&again).expect("serialized config reparses");
            assert_eq!(back.mesh, cfg.mesh);
            assert_eq!(back.initial.u0, cfg.initial.u0);
        }
    }
});
