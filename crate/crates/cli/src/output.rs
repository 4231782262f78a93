use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use ce_survey::population::{load_population, Population, Schema};

use crate::{Global, PopArgs};

/// The explicit `--seed`, or a fresh one from system entropy announced on stderr.
pub fn resolve_seed(global: &Global) -> u64 {
    global.seed.unwrap_or_else(|| {
        let seed: u64 = rand::random();
        eprintln!("seed: {seed}");
        seed
    })
}

pub fn schema(pop: &PopArgs) -> Schema {
    Schema::new(pop.col_y.clone(), pop.col_size.clone()).with_aux(pop.col_aux.iter().cloned())
}

pub fn load(pop: &PopArgs) -> Result<Population> {
    load_population(&pop.pop, &schema(pop)).with_context(|| format!("reading {}", pop.pop.display()))
}

/// Runs `write` against `path`, or stdout when `path` is `None`.
pub fn with_sink<F>(path: Option<&Path>, write: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> Result<()>,
{
    match path {
        Some(p) => {
            let file = File::create(p).with_context(|| format!("creating {}", p.display()))?;
            let mut w = BufWriter::new(file);
            write(&mut w)?;
            w.flush()?;
        }
        None => {
            let stdout = io::stdout();
            let mut w = stdout.lock();
            write(&mut w)?;
            w.flush()?;
        }
    }
    Ok(())
}

pub fn write_json<T: serde::Serialize>(path: Option<&Path>, value: &T) -> Result<()> {
    with_sink(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        writeln!(w)?;
        Ok(())
    })
}
