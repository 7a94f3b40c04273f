use std::process::Command;

fn main() {
    let rev = Command::new("git")
        .args(["rev-parse", "--short", "HEAD"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok());
    if let Some(rev) = rev {
        println!("cargo:rustc-env=LOE_BENCH_GIT_REV={}", rev.trim());
    }
    println!("cargo:rerun-if-changed=../../.git/HEAD");
}
