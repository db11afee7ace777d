//! Builds a small C program against the generated header and the static
//! library.

use std::path::PathBuf;
use std::process::Command;

const PROGRAM: &str = r#"
#include <stdio.h>
#include <string.h>
#include "canwire.h"

int main(void) {
    CwTestbed *tb = NULL;
    if (cw_testbed_new(NULL, &tb) != CW_STATUS_OK) return 10;
    if (cw_testbed_advance(tb, 250000) != CW_STATUS_OK) return 11;
    if (cw_testbed_now(tb) != 250000) return 12;
    char *reply = NULL;
    CwStatus s = cw_testbed_command(tb, "{\"seq\":1,\"verb\":\"set_abs_disabled\",\"value\":true}", &reply);
    if (s != CW_STATUS_OK || strstr(reply, "\"ok\":true") == NULL) return 13;
    cw_string_free(reply);
    s = cw_testbed_command(tb, "{\"seq\":2,\"verb\":\"nope\"}", &reply);
    if (s != CW_STATUS_COMMAND_REJECTED || strstr(reply, "unknown_verb") == NULL) return 14;
    cw_string_free(reply);
    cw_testbed_free(tb);
    puts("ok");
    return 0;
}
"#;

#[test]
fn c_program_links_and_runs() {
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    // target/<profile>/deps/<test binary>
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().unwrap().parent().unwrap();
    let lib = profile_dir.join("libcanwire_ffi.a");
    assert!(lib.exists(), "static library missing at {}", lib.display());

    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("smoke.c");
    let bin = dir.path().join("smoke");
    std::fs::write(&src, PROGRAM).unwrap();
    let status = Command::new("cc")
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .expect("a C compiler on PATH");
    assert!(status.success());
    let out = Command::new(&bin).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "ok");
}
