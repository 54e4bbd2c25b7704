//! Corpus BLEU, METEOR, ROUGE-L and CIDEr over a toy caption set.

use forge::metrics::{bleu, cider, meteor, rouge_l_multi, tokenize, BleuOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let pairs = [
        (
            "many planes are parked near the terminal",
            "several planes are parked next to the terminal",
        ),
        ("a river crosses green farmland", "a river runs through green farmland"),
        ("ships are docked at the harbor", "ships docked in a busy harbor"),
    ];
    let cands: Vec<_> = pairs.iter().map(|(c, _)| tokenize(c)).collect();
    let refs: Vec<_> = pairs.iter().map(|(_, r)| vec![tokenize(r)]).collect();

    let b = bleu(&cands, &refs, BleuOptions::default())?;
    println!(
        "BLEU-4   {:.4}  (precisions {:?}, bp {:.3})",
        b.score, b.precisions, b.brevity_penalty
    );
    let smoothed = bleu(
        &cands,
        &refs,
        BleuOptions {
            smoothing: true,
            ..BleuOptions::default()
        },
    )?;
    println!("BLEU-4s  {:.4}", smoothed.score);
    let mut m = 0.0;
    let mut r = 0.0;
    for (c, rs) in cands.iter().zip(&refs) {
        m += meteor(c, rs)?;
        r += rouge_l_multi(c, rs)?;
    }
    println!("METEOR   {:.4}", m / cands.len() as f64);
    println!("ROUGE-L  {:.4}", r / cands.len() as f64);
    println!("CIDEr    {:.4}", cider(&cands, &refs, 4)?);
    Ok(())
}
