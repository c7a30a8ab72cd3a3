//! Run one acceptance configuration in process and print the report.
use genmoment::cli::run_file;

fn main() -> genmoment::Result<()> {
    let path: String = std::env::args().nth(1).unwrap_or_else(|| "configs/acceptance/13-quotient.json".into());
    let out = run_file(path.as_ref())?;
    print!("{}", out.report_text());
    println!("pass: {}", out.pass);
    Ok(())
}
