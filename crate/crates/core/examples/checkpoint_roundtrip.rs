//! Saves seeded weights as a checkpoint and reloads them.

use attn_steer::model::{generate, load_or_init_model, tokenize, GenerationParams, ModelConfig, ModelSource};

fn main() -> attn_steer::Result<()> {
    let cfg = ModelConfig::new(2, 2, 16, 256, 128)?;
    let model = load_or_init_model(cfg.clone(), &ModelSource::Seeded(11))?;
    let dir = tempfile::tempdir()?;
    let manifest = dir.path().join("toy.manifest");
    model.weights().save_checkpoint(&manifest)?;
    for entry in std::fs::read_dir(dir.path())? {
        let entry = entry?;
        println!("{} ({} bytes)", entry.file_name().to_string_lossy(), entry.metadata()?.len());
    }

    let loaded = load_or_init_model(cfg, &ModelSource::Checkpoint(manifest))?;
    let prompt = tokenize("hello");
    let p = GenerationParams::greedy(8);
    let (a, b) = (generate(&model, &prompt, &p, None)?, generate(&loaded, &prompt, &p, None)?);
    println!("seeded {:?}, reloaded {:?}, identical: {}", a.text, b.text, a == b);
    Ok(())
}
