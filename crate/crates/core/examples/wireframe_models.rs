//! Lists the built-in wireframe models and writes them as model files.
//!
//! ```text
//! cargo run --example wireframe_models -- [out_dir]
//! ```

use std::path::PathBuf;

use autocalib::io::write_atomic;
use autocalib::pipeline::builtin_models;

fn main() -> anyhow::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from);
    for (id, m) in builtin_models() {
        let (front, rear) = m.anchors();
        println!(
            "{id:>6}: {:.2} m long, {} vertices, {} edges, {} boxes, anchors x = {:+.2} / {:+.2}",
            m.length_m,
            m.vertices.len(),
            m.edges.len(),
            m.boxes().len(),
            front[0],
            rear[0]
        );
        if let Some(dir) = &out {
            let path = dir.join(format!("{id}.json"));
            write_atomic(&path, format!("{}\n", m.to_json()).as_bytes())?;
            println!("        wrote {}", path.display());
        }
    }
    Ok(())
}
