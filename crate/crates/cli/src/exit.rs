//! Process exit codes.

use lampo::ErrorKind;

pub const OK: i32 = 0;
pub const FAILURE: i32 = 1;
pub const CONFIG: i32 = 2;
pub const TRANSPORT: i32 = 3;
pub const VALIDATION: i32 = 4;

/// Exit code for an error chain: the first library error decides; manifest
/// parse and file errors count as configuration errors.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<lampo::Error>() {
            return match e.kind() {
                ErrorKind::Config | ErrorKind::Io => CONFIG,
                ErrorKind::Transport => TRANSPORT,
                ErrorKind::Validation => VALIDATION,
            };
        }
        if cause.is::<toml::de::Error>() || cause.is::<std::io::Error>() {
            return CONFIG;
        }
    }
    FAILURE
}
