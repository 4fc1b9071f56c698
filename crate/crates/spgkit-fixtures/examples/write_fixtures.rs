//! Writes the worked-example traces and (optionally) the full 650-sample
//! corpus to disk.
//!
//! Usage:
//!   cargo run -p spgkit-fixtures --example write_fixtures -- <dir> [--corpus]

use std::path::PathBuf;

fn main() -> std::io::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "fixtures".to_string()));
    let with_corpus = args.any(|a| a == "--corpus");

    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join("tinba.jsonl"), spgkit_fixtures::tinba_trace())?;
    std::fs::write(dir.join("natas.jsonl"), spgkit_fixtures::natas_trace())?;
    println!("wrote {}", dir.join("tinba.jsonl").display());
    println!("wrote {}", dir.join("natas.jsonl").display());

    if with_corpus {
        let corpus_dir = dir.join("corpus");
        let corpus = spgkit_fixtures::generate_corpus(&corpus_dir)?;
        println!(
            "wrote {} samples under {} (manifest: {})",
            corpus.samples,
            corpus_dir.display(),
            corpus.manifest_path.display()
        );
    }
    Ok(())
}
