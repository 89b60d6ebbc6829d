use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};

use tipflow::config::Config;
use tipflow::io::{RunManifest, Table};
use tipflow::verify::Verdict;

/// Output directory of one run, collecting the manifest as files are written.
pub struct OutDir {
    pub root: PathBuf,
    pub manifest: RunManifest,
    start: Instant,
}

impl OutDir {
    pub fn create(root: &Path, subcommand: &str, cfg: &Config) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        Ok(OutDir { root: root.to_path_buf(), manifest: RunManifest::new(subcommand, cfg), start: Instant::now() })
    }

    fn path(&mut self, rel: &str) -> Result<PathBuf> {
        let p = self.root.join(rel);
        if let Some(dir) = p.parent() {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        self.manifest.outputs.push(rel.to_string());
        Ok(p)
    }

    pub fn table(&mut self, rel: &str, t: &Table) -> Result<()> {
        let p = self.path(rel)?;
        t.write(&p).with_context(|| format!("writing {}", p.display()))
    }

    pub fn text(&mut self, rel: &str, s: &str) -> Result<()> {
        let p = self.path(rel)?;
        fs::write(&p, s).with_context(|| format!("writing {}", p.display()))
    }

    pub fn value(&mut self, key: &str, v: f64) {
        self.manifest.values.insert(key.to_string(), v);
    }

    pub fn verdict(&mut self, v: Verdict) {
        println!("{v}");
        self.manifest.add_verdict(v);
    }

    /// Writes `manifest.toml` and returns the pass flag.
    pub fn finish(mut self) -> Result<bool> {
        self.manifest.wall_seconds = self.start.elapsed().as_secs_f64();
        let p = self.root.join("manifest.toml");
        self.manifest.write(&p).with_context(|| format!("writing {}", p.display()))?;
        println!("wrote {} ({} outputs)", p.display(), self.manifest.outputs.len());
        Ok(self.manifest.pass)
    }
}
