#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn figure2() -> PathBuf {
    fixtures().join("figure2")
}

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_roundtable"))
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

pub fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

/// Copies the Figure 2 fixture directory so a test can edit it.
pub fn figure2_copy() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    for entry in std::fs::read_dir(figure2()).unwrap() {
        let entry = entry.unwrap();
        std::fs::copy(entry.path(), dir.path().join(entry.file_name())).unwrap();
    }
    dir
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}
