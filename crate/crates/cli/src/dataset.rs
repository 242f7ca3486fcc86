use std::path::{Path, PathBuf};

use labgatr_core::mesh::{load_mesh, MeshSample};
use labgatr_core::model::make_toy_dataset;

use crate::config::DatasetSpec;
use crate::manifest::{blob_hash, InputRecord};
use crate::CliError;

pub struct Dataset {
    pub samples: Vec<MeshSample>,
    pub names: Vec<String>,
    pub inputs: Vec<InputRecord>,
}

impl Dataset {
    pub fn load(spec: &DatasetSpec) -> Result<Self, CliError> {
        match spec {
            DatasetSpec::Directory { path } => load_dir(path),
            DatasetSpec::Toy { kind, count, seed } => {
                let samples = make_toy_dataset(*kind, *count, *seed);
                let description = serde_json::to_vec(spec).expect("dataset spec serialises");
                Ok(Dataset {
                    names: (0..samples.len()).map(|i| format!("toy_{i:04}")).collect(),
                    samples,
                    inputs: vec![InputRecord { name: "procedural dataset".into(), sha256: blob_hash(&description) }],
                })
            }
        }
    }

    /// `(train, val)` with the last `val_count` samples held out.
    pub fn split(&self, val_count: usize) -> Result<(std::ops::Range<usize>, std::ops::Range<usize>), CliError> {
        let n = self.samples.len();
        if val_count >= n {
            return Err(CliError::Config(format!("val_count {val_count} leaves no training samples out of {n}")));
        }
        Ok((0..n - val_count, n - val_count..n))
    }
}

fn mesh_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| CliError::io(dir, e))? {
        let path = entry.map_err(|e| CliError::io(dir, e))?.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if matches!(ext.as_deref(), Some("off" | "vtk")) {
            files.push(path);
        }
    }
    files.sort();
    if files.is_empty() {
        return Err(CliError::Config(format!("no .off or .vtk files in {}", dir.display())));
    }
    Ok(files)
}

fn load_dir(dir: &Path) -> Result<Dataset, CliError> {
    let files = mesh_files(dir)?;
    let mut samples = Vec::with_capacity(files.len());
    let mut names = Vec::with_capacity(files.len());
    let mut inputs = Vec::with_capacity(files.len());
    for f in &files {
        let bytes = std::fs::read(f).map_err(|e| CliError::io(f, e))?;
        samples.push(load_mesh(f).map_err(|e| CliError::Mesh(f.display().to_string(), e))?);
        let name = f.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        inputs.push(InputRecord { name: name.clone(), sha256: blob_hash(&bytes) });
        names.push(name);
    }
    Ok(Dataset { samples, names, inputs })
}
