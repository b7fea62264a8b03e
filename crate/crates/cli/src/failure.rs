use std::fmt::Display;
use std::path::Path;

pub const INTERNAL: u8 = 1;
pub const INPUT: u8 = 2;
pub const INCONSISTENT: u8 = 3;
pub const NO_EXAMPLES: u8 = 4;
pub const MISALIGNED: u8 = 5;
pub const ENDPOINT: u8 = 6;

/// Error carrying the process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn new(code: u8, message: impl Display) -> Self {
        Failure {
            code,
            message: message.to_string(),
        }
    }

    pub fn input(e: impl Display) -> Self {
        Failure::new(INPUT, e)
    }

    pub fn internal(e: impl Display) -> Self {
        Failure::new(INTERNAL, e)
    }

    /// Input error that names the file involved.
    pub fn at(path: &Path) -> impl Fn(&dyn Display) -> Failure + '_ {
        move |e| Failure::input(format!("{}: {e}", path.display()))
    }
}

pub fn read_text(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::at(path)(&e))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Failure::internal(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, text).map_err(|e| Failure::internal(format!("{}: {e}", path.display())))
}

/// Pretty JSON on stdout.
pub fn print_json(v: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("JSON values serialize"));
}
