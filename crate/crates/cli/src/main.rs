use clap::Parser;

fn main() -> anyhow::Result<()> {
    kdsr_cli::run(kdsr_cli::Cli::parse())
}
