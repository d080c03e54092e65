//! Full pipeline on a small synthetic population, written to a temp dir.

use earcanal::cli::{self, PipelineConfig, Subcommand, SyntheticPopulation};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let config = PipelineConfig {
        synthetic: Some(SyntheticPopulation {
            count: 3,
            seed: 4,
            ..SyntheticPopulation::default()
        }),
        output_dir: dir.path().to_path_buf(),
        ..PipelineConfig::default()
    };
    let manifest = cli::run(Subcommand::Full, &config)?;
    for (name, entry) in &manifest.outputs {
        println!("{name:40} {:>9} bytes  {}", entry.bytes, &entry.sha256[..12]);
    }
    Ok(())
}
