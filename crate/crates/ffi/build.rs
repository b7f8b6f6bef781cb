use std::env;
use std::path::PathBuf;

fn main() {
    let crate_dir = PathBuf::from(env::var("CARGO_MANIFEST_DIR").unwrap());
    println!("cargo:rerun-if-changed=src/lib.rs");

    let config = cbindgen::Config {
        language: cbindgen::Language::C,
        include_guard: Some("TWINHEAT_H".into()),
        cpp_compat: true,
        documentation: true,
        usize_is_size_t: true,
        enumeration: cbindgen::EnumConfig {
            prefix_with_name: true,
            rename_variants: cbindgen::RenameRule::ScreamingSnakeCase,
            ..Default::default()
        },
        ..Default::default()
    };
    match cbindgen::Builder::new()
        .with_crate(&crate_dir)
        .with_config(config)
        .generate()
    {
        Ok(bindings) => {
            bindings.write_to_file(crate_dir.join("include").join("twinheat.h"));
        }
        // A broken header should not block `cargo check` while editing.
        Err(e) => println!("cargo:warning=cbindgen: {e}"),
    }
}
