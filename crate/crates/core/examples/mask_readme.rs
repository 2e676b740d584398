//! Cleans and masks a README, then prints its sentences and the masked spans.
//!
//! Usage: `cargo run --example mask_readme [README.md]`

use rsimplify::mask::preprocess_document;

const SAMPLE: &str = r#"# Demo [![build](https://ci.example.org/badge.svg)](https://ci.example.org)

Demo is a small tool. Install it with `pip install demo` and edit ~/.demo/config.toml to taste.

```sh
demo --serve --port 8080
```

| flag | meaning |
|------|---------|
| -v   | verbose |

See https://docs.example.org/demo for details, or read docs/usage.md.
"#;

fn main() -> anyhow::Result<()> {
    let raw = match std::env::args().nth(1) {
        Some(path) => std::fs::read_to_string(path)?,
        None => SAMPLE.to_string(),
    };
    let (doc, sentences) = preprocess_document(&raw);
    for s in &sentences {
        println!("[{:2}] {}", s.doc_position, s.text);
    }
    println!();
    for span in &doc.spans {
        println!("{:<14} {:?}", span.token.surface(), span.original);
    }
    Ok(())
}
