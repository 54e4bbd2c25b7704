//! Deterministic paraphrase selection.

use forge::prompts::{PromptPool, Slots};
use forge::schema::TaskKind;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let pool = PromptPool::builtin();
    println!("pool {}", pool.version());
    for seed in [1, 2] {
        let picks = pool.sample_variants(TaskKind::DetObb, 3, seed, "demo/train/0001/det_obb/0")?;
        for t in picks {
            println!(
                "seed {seed}  #{:<2} {}",
                t.template_id,
                t.instantiate(&Slots::class("ship"))?
            );
        }
    }
    Ok(())
}
