#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use facepipe::cli::synth_data;

pub fn synth(dir: &Path, frames: usize, size: usize) -> PathBuf {
    let out = dir.join("src");
    synth_data(&out, frames, size, None, 0).unwrap();
    out
}

pub fn facepipe(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_facepipe"))
        .args(args)
        .env("FACEPIPE_THREADS", "2")
        .output()
        .unwrap()
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}
