fn main() {
    let crate_dir = std::env::var("CARGO_MANIFEST_DIR").expect("CARGO_MANIFEST_DIR");
    let crate_path = std::path::Path::new(&crate_dir);
    let config = cbindgen::Config::from_file(crate_path.join("cbindgen.toml"))
        .expect("cbindgen.toml is readable");

    println!("cargo:rerun-if-changed=src/lib.rs");
    println!("cargo:rerun-if-changed=cbindgen.toml");

    cbindgen::Builder::new()
        .with_config(config)
        .with_crate(&crate_dir)
        .generate()
        .expect("Unable to generate bindings")
        .write_to_file(crate_path.join("include").join("treeem.h"));
}
