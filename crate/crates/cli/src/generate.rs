use anyhow::Result;
use serde::Serialize;

use crate::config::{DatasetConfig, STREAM_DATA};
use crate::output::{write_json, write_with};
use crate::{usage, Ctx};

#[derive(Serialize)]
struct Sidecar<'a> {
    schema_version: u32,
    seed: u64,
    stream: u64,
    n: usize,
    distinct_labels: usize,
    dataset: &'a DatasetConfig,
}

pub fn execute(ctx: &Ctx) -> Result<bool> {
    let spec = &ctx.config.dataset;
    if let DatasetConfig::File { .. } = spec {
        return usage(Err(anyhow::anyhow!("generate needs a synthetic dataset kind")));
    }
    let data = match spec.load(ctx.seed) {
        Ok(d) => d,
        Err(e) => return usage(Err(e)),
    };
    let csv = write_with(&ctx.out, "data.csv", |w| data.write_csv(w))?;
    let sidecar = Sidecar {
        schema_version: 1,
        seed: ctx.seed,
        stream: STREAM_DATA,
        n: data.len(),
        distinct_labels: data.truth().num_clusters(),
        dataset: spec,
    };
    write_json(&ctx.out, "data.json", &sidecar)?;
    println!("wrote {} observations to {}", data.len(), csv.display());
    Ok(true)
}
