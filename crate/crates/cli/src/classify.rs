use std::fmt::Write;
use std::path::Path;

use vestbed_vision::{classify_hand, read_pnm_file, CnnSpec, CnnWeights, PreprocessConfig};

use crate::CliError;

/// Classify one PGM/PPM image. Prints `class=<k> probs=[...]`, preceded by
/// the layer shape trace when `verbose`.
pub fn cmd_classify(image: &Path, weights: &Path, verbose: bool) -> Result<String, CliError> {
    let weights = CnnWeights::load(CnnSpec::hand_gesture(), weights)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", weights.display())))?;
    let img = read_pnm_file(image).map_err(|e| CliError::Runtime(format!("{}: {e}", image.display())))?;
    let c = classify_hand(&img, &weights, &PreprocessConfig::default()).map_err(CliError::runtime)?;
    let mut out = String::new();
    if verbose {
        for row in &c.trace {
            writeln!(out, "{row}").expect("string write");
        }
    }
    let probs: Vec<String> = c.probs.iter().map(|p| format!("{p:.6}")).collect();
    writeln!(out, "class={} probs=[{}]", c.class, probs.join(", ")).expect("string write");
    Ok(out)
}

/// Write seeded random weights, for trying the pipeline without a trained
/// model.
pub fn cmd_gen_weights(seed: u64, out: &Path) -> Result<(), CliError> {
    CnnWeights::seeded(CnnSpec::hand_gesture(), seed)
        .and_then(|w| w.save(out))
        .map_err(|e| CliError::Runtime(format!("{}: {e}", out.display())))
}
