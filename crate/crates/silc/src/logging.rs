//! JSON-lines logging to standard error.

use std::io::Write;

use log::LevelFilter;

/// Installs the logger once; later calls are ignored. `RUST_LOG` overrides
/// `level` when set.
pub fn init(level: LevelFilter) {
    let mut b = env_logger::Builder::new();
    b.filter_level(level).parse_default_env().target(env_logger::Target::Stderr);
    b.format(|buf, record| {
        let line = serde_json::json!({
            "ts": chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
            "level": record.level().as_str(),
            "target": record.target(),
            "msg": record.args().to_string(),
        });
        writeln!(buf, "{line}")
    });
    let _ = b.try_init();
}
