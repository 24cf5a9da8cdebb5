use std::process::Command;

fn main() {
    // Embed the commit the binary was built from, when available.
    let describe = Command::new("git")
        .args(["describe", "--always", "--dirty"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "unknown".to_string());
    println!("cargo:rustc-env=IMSNN_BUILD_GIT={describe}");
    println!("cargo:rerun-if-changed=../../.git/HEAD");
}
