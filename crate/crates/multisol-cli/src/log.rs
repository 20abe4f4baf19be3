//! Verbosity gate driven by the MULTISOL_LOG environment variable:
//! off | error (default) | info | debug.

use std::sync::OnceLock;

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub enum Level {
    Off = 0,
    Error = 1,
    Info = 2,
    Debug = 3,
}

pub fn level() -> Level {
    static LEVEL: OnceLock<Level> = OnceLock::new();
    *LEVEL.get_or_init(|| match std::env::var("MULTISOL_LOG").as_deref() {
        Ok("off") => Level::Off,
        Ok("info") => Level::Info,
        Ok("debug") => Level::Debug,
        _ => Level::Error,
    })
}

pub fn log_info(msg: &str) {
    if level() >= Level::Info {
        eprintln!("[multisol] {msg}");
    }
}

pub fn log_debug(msg: &str) {
    if level() >= Level::Debug {
        eprintln!("[multisol:debug] {msg}");
    }
}
