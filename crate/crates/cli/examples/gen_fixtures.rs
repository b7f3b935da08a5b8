//! Regenerates the seeded CSV fixtures under `crates/cli/fixtures`.
//!
//! ```text
//! cargo run -p dp-cli --example gen_fixtures
//! ```

use std::fmt::Write as _;
use std::path::Path;

use dp_core::sampling::RngStream;

pub const AGES_SEED: u64 = 20_240_501;
pub const CENSUS_SEED: u64 = 20_240_502;
pub const ROWS: usize = 10_000;

const GENDERS: [&str; 2] = ["F", "M"];
const REGIONS: [&str; 4] = ["N", "S", "E", "W"];

fn below(rng: &mut RngStream, n: u64) -> u64 {
    (rng.uniform() * n as f64) as u64
}

pub fn ages_csv() -> String {
    let mut rng = RngStream::new(AGES_SEED, 0);
    let mut out = String::from("age\n");
    for _ in 0..ROWS {
        writeln!(out, "{}", below(&mut rng, 101)).unwrap();
    }
    out
}

pub fn census_csv() -> String {
    let mut rng = RngStream::new(CENSUS_SEED, 0);
    let mut out = String::from("age,gender,region\n");
    for _ in 0..ROWS {
        let age = below(&mut rng, 101);
        let gender = GENDERS[below(&mut rng, 2) as usize];
        let region = REGIONS[below(&mut rng, 4) as usize];
        writeln!(out, "{age},{gender},{region}").unwrap();
    }
    out
}

/// Every fixture file with its contents.
pub fn fixtures() -> Vec<(&'static str, String)> {
    vec![
        ("ages.csv", ages_csv()),
        ("ages.schema", "age integer 0 100\n".into()),
        ("mean_age.query", "# average age of the population\nkind: mean\ncolumn: age\n".into()),
        ("census.csv", census_csv()),
        (
            "census.schema",
            "age integer 0 100\ngender categorical F,M\nregion categorical N,S,E,W\n".into(),
        ),
        (
            "census_histogram.query",
            "# age band x gender x region\nkind: histogram\nbins: age:0,18,65,100; gender; region\n".into(),
        ),
        ("adults.query", "kind: count\nwhere: age >= 18\n".into()),
    ]
}

#[allow(dead_code)]
fn main() -> std::io::Result<()> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    std::fs::create_dir_all(&dir)?;
    for (name, body) in fixtures() {
        std::fs::write(dir.join(name), body)?;
        println!("wrote {}", dir.join(name).display());
    }
    Ok(())
}
