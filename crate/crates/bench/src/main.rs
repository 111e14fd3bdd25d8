use clap::Parser;

fn main() -> anyhow::Result<()> {
    let cli = beamgraph_bench::cli::Cli::parse();
    beamgraph_bench::cli::run(cli)?;
    Ok(())
}
